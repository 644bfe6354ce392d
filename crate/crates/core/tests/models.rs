mod common;

use common::{random_sample, rng, zero_params};
use flowcast::autodiff::Tape;
use flowcast::data::WindowSample;
use flowcast::models::{
    build_network, load_checkpoint, persistence_forecast, save_checkpoint, train, ArchSpec, Architecture, Network,
    Seq2SeqForecaster, TrainConfig,
};
use flowcast::par::Exec;
use flowcast::{Error, HORIZON, PAST_FEATURES};

const LEARNED: [Architecture; 4] = [
    Architecture::Seq2Seq,
    Architecture::Gru,
    Architecture::Lstm,
    Architecture::Transformer,
];

fn small_spec(arch: Architecture, seed: u64) -> ArchSpec {
    ArchSpec {
        hidden: 8,
        d_model: 16,
        heads: 4,
        ffn: 32,
        ..ArchSpec::new(arch, seed)
    }
}

fn samples(seed: u64, n: usize) -> Vec<WindowSample> {
    let mut r = rng(seed);
    (0..n).map(|i| random_sample(&mut r, "s1", i as i64)).collect()
}

#[test]
fn tags_and_labels_follow_the_canonical_order() {
    let tags: Vec<_> = Architecture::ALL.iter().map(|a| a.tag()).collect();
    assert_eq!(tags, ["persistence", "seq2seq", "gru", "lstm", "transformer"]);
    let labels: Vec<_> = Architecture::ALL.iter().map(|a| a.label()).collect();
    assert_eq!(labels, ["Persistence", "Seq2Seq", "GRU", "LSTM", "Transformer"]);
    assert_eq!(Architecture::parse("GRU").unwrap(), Architecture::Gru);
    assert!(matches!(Architecture::parse("tcn"), Err(Error::Config(_))));
}

#[test]
fn persistence_has_no_trainable_network() {
    let spec = ArchSpec::new(Architecture::Persistence, 1);
    assert!(matches!(build_network(&spec), Err(Error::NoTraining(_))));
}

#[test]
fn persistence_repeats_the_last_physical_discharge() {
    let s = &samples(2, 1)[0];
    let f = persistence_forecast(s);
    assert_eq!(f.len(), HORIZON);
    assert!(f.iter().all(|&v| v == s.last_discharge));
}

#[test]
fn every_learned_model_emits_batch_by_horizon() {
    let data = samples(3, 3);
    let batch: Vec<&WindowSample> = data.iter().collect();
    for arch in LEARNED {
        let net = build_network(&ArchSpec::new(arch, 7)).unwrap();
        let mut tape = Tape::new();
        let out = net.forward(&mut tape, &batch).unwrap();
        assert_eq!(tape.value(out).shape(), &[3, HORIZON], "{arch}");
        assert!(tape.value(out).data().iter().all(|v| v.is_finite()));
    }
}

#[test]
fn malformed_samples_are_shape_errors() {
    let mut data = samples(4, 1);
    data[0].past.truncate(PAST_FEATURES * 71);
    let batch: Vec<&WindowSample> = data.iter().collect();
    for arch in LEARNED {
        let net = build_network(&small_spec(arch, 1)).unwrap();
        let mut tape = Tape::new();
        assert!(matches!(net.forward(&mut tape, &batch), Err(Error::Shape { .. })), "{arch}");
    }
}

#[test]
fn recurrent_and_seq2seq_models_with_zero_parameters_output_zero() {
    let data = samples(5, 2);
    let batch: Vec<&WindowSample> = data.iter().collect();
    for arch in [Architecture::Seq2Seq, Architecture::Gru, Architecture::Lstm] {
        let mut net = build_network(&ArchSpec::new(arch, 9)).unwrap();
        zero_params(net.params_mut());
        let preds = net.predict_norm(&batch).unwrap();
        assert!(preds.iter().flatten().all(|&v| v == 0.0), "{arch}");
    }
}

#[test]
fn per_sample_outputs_do_not_depend_on_batch_composition() {
    let data = samples(6, 4);
    let all: Vec<&WindowSample> = data.iter().collect();
    for arch in LEARNED {
        let net = build_network(&small_spec(arch, 11)).unwrap();
        let together = net.predict_norm(&all).unwrap();
        for (i, s) in data.iter().enumerate() {
            let alone = net.predict_norm(&[s]).unwrap();
            for (a, b) in alone[0].iter().zip(&together[i]) {
                assert!((a - b).abs() <= 1e-12, "{arch}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn identical_inputs_in_a_transformer_batch_give_identical_rows() {
    let data = samples(7, 1);
    let net = build_network(&ArchSpec::new(Architecture::Transformer, 3)).unwrap();
    let preds = net.predict_norm(&[&data[0], &data[0]]).unwrap();
    assert_eq!(preds[0], preds[1]);
}

#[test]
fn seq2seq_context_carries_the_past_into_the_forecast() {
    let spec = small_spec(Architecture::Seq2Seq, 13);
    let net = Seq2SeqForecaster::new(spec).unwrap();
    let base = samples(8, 1).remove(0);
    let mut past_moved = base.clone();
    past_moved.past[70 * PAST_FEATURES + 2] += 0.5;
    let mut future_moved = base.clone();
    future_moved.future[3] += 0.5;

    let context = |s: &WindowSample| {
        let mut tape = Tape::new();
        let c = net.context(&mut tape, net.params(), &[s]).unwrap();
        tape.value(c).data().to_vec()
    };
    assert_ne!(context(&base), context(&past_moved));
    assert_eq!(context(&base), context(&future_moved));

    let out = |s: &WindowSample| net.predict_norm(&[s]).unwrap().remove(0);
    let delta: f64 = out(&base).iter().zip(out(&past_moved)).map(|(a, b)| (a - b).abs()).sum();
    assert!(delta > 0.0);
}

#[test]
fn checkpoint_file_reproduces_outputs_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let data = samples(9, 2);
    let batch: Vec<&WindowSample> = data.iter().collect();
    for arch in LEARNED {
        let net = build_network(&small_spec(arch, 17)).unwrap();
        let path = dir.path().join(format!("{arch}.ckpt"));
        save_checkpoint(&path, net.spec(), net.params()).unwrap();
        let back = load_checkpoint(&path).unwrap().into_network().unwrap();
        assert_eq!(back.spec(), net.spec());
        assert_eq!(back.predict_norm(&batch).unwrap(), net.predict_norm(&batch).unwrap());
    }
}

fn quick_cfg() -> TrainConfig {
    TrainConfig {
        lr: 1e-3,
        batch_size: 4,
        max_epochs: 3,
        chunk_size: 2,
        shuffle_seed: 5,
        ..TrainConfig::default()
    }
}

#[test]
fn training_rejects_empty_sets_and_bad_settings() {
    let data = samples(10, 4);
    let mut net = build_network(&small_spec(Architecture::Gru, 1)).unwrap();
    let cfg = quick_cfg();
    assert!(matches!(train(&mut *net, &[], &data, &cfg, Exec::Sequential), Err(Error::Contract(_))));
    assert!(matches!(train(&mut *net, &data, &[], &cfg, Exec::Sequential), Err(Error::Contract(_))));
    let zero_batch = TrainConfig { batch_size: 0, ..cfg };
    assert!(train(&mut *net, &data, &data, &zero_batch, Exec::Sequential).is_err());
}

#[test]
fn non_finite_loss_is_a_divergence_on_the_first_epoch() {
    let data = samples(11, 4);
    let mut net = build_network(&small_spec(Architecture::Lstm, 1)).unwrap();
    let id = net.params().ids().last().unwrap();
    net.params_mut().value_mut(id).data_mut()[0] = f64::NAN;
    let err = train(&mut *net, &data, &data, &quick_cfg(), Exec::Sequential).unwrap_err();
    assert!(matches!(err, Error::Divergence { epoch: 1, .. }), "{err:?}");
}

#[test]
fn frozen_validation_stops_twenty_epochs_after_the_best() {
    let data = samples(12, 4);
    let mut net = build_network(&small_spec(Architecture::Gru, 2)).unwrap();
    let cfg = TrainConfig {
        lr: 1e-300,
        min_lr: 0.0,
        max_epochs: 100,
        ..quick_cfg()
    };
    let out = train(&mut *net, &data, &data, &cfg, Exec::Sequential).unwrap();
    assert!(out.stopped_early);
    assert_eq!(out.best_epoch, 1);
    assert_eq!(out.log.len(), 21);
    let first = out.log[0].val_mae;
    assert!(out.log.iter().all(|e| e.val_mae == first));
    let lrs: Vec<f64> = out.log.iter().map(|e| e.lr).collect();
    assert_eq!(lrs[10], 1e-300);
    assert_eq!(lrs[11], 0.5e-300);
    assert_eq!(lrs[20], 0.5e-300);
}

#[test]
fn training_keeps_the_best_validation_parameters() {
    let data = samples(13, 8);
    let (tr, va) = data.split_at(6);
    let mut net = build_network(&small_spec(Architecture::Seq2Seq, 3)).unwrap();
    let cfg = TrainConfig {
        max_epochs: 6,
        ..quick_cfg()
    };
    let out = train(&mut *net, tr, va, &cfg, Exec::Sequential).unwrap();
    let best = out.log.iter().map(|e| e.val_mae).fold(f64::INFINITY, f64::min);
    assert_eq!(out.best_val_mae, best);
    let now = flowcast::models::evaluate_mae(&*net, va, 4, Exec::Sequential).unwrap();
    assert!((now - best).abs() < 1e-12);
}

#[test]
fn training_is_bit_identical_across_runs_and_execution_modes() {
    let data = samples(14, 10);
    let (tr, va) = data.split_at(7);
    for arch in LEARNED {
        let run = |exec| {
            let mut net = build_network(&small_spec(arch, 21)).unwrap();
            let out = train(&mut *net, tr, va, &quick_cfg(), exec).unwrap();
            (out.log, net.params().clone())
        };
        let (log_a, pa) = run(Exec::Sequential);
        let (log_b, pb) = run(Exec::Sequential);
        let (log_c, pc) = run(Exec::Parallel);
        assert_eq!(log_a, log_b, "{arch}");
        assert_eq!(log_a, log_c, "{arch}");
        for id in pa.ids() {
            assert_eq!(pa.value(id), pb.value(id));
            assert_eq!(pa.value(id), pc.value(id));
        }
    }
}
