mod common;

use common::oracle::anchors as brute_force_anchors;
use common::{random_sample, rng, t0};
use flowcast::data::{
    admissible_anchors, assemble_windows, fill_short_gaps, fit_norm_stats, generate_synthetic_catchments,
    linear_reservoir, load_station_csv, make_split, unify_input, write_metadata, write_series, ExtensionPolicy,
    StationMeta, StationSeries, TimeRange, DISCHARGE_COL,
};
use flowcast::{Error, FUTURE_FEATURES, HORIZON, PAST_FEATURES, PAST_HOURS, SEQ_LEN};
use proptest::prelude::*;

fn meta(id: &str, area: f64) -> StationMeta {
    StationMeta {
        station_id: id.into(),
        area_km2: area,
        concentration_time_h: 12.0,
        slope: 0.01,
        loam: 0.33,
        silt: 0.21,
        sandy_clay_loam: 0.1,
        silty_clay_loam: 0.2,
    }
}

/// A complete series with varied values on every channel.
fn series(id: &str, hours: usize) -> StationSeries {
    let ch = |f: fn(usize) -> f64| (0..hours).map(|i| Some(f(i))).collect();
    StationSeries::new(
        id,
        t0(),
        ch(|i| (i % 7) as f64),
        ch(|i| 0.1 + (i % 5) as f64 * 0.05),
        ch(|i| 3.0 + (i % 11) as f64),
    )
    .unwrap()
}

fn stats_for(s: &StationSeries, m: &StationMeta) -> flowcast::data::NormStats {
    let span = s.span();
    let split = flowcast::data::SplitSpec {
        train: span,
        val: span,
        test: span,
    };
    fit_norm_stats(std::slice::from_ref(s), std::slice::from_ref(m), &split).unwrap()
}

#[test]
fn csv_files_written_by_the_toolkit_load_back() {
    let dir = tempfile::tempdir().unwrap();
    let m = meta("st1", 40.0);
    let mut s = series("st1", 5);
    s.discharge[1] = None;
    write_metadata(&dir.path().join("meta.csv"), std::slice::from_ref(&m)).unwrap();
    write_series(&dir.path().join("st1.csv"), &s).unwrap();
    let (m2, s2) = load_station_csv(&dir.path().join("meta.csv"), &dir.path().join("st1.csv")).unwrap();
    assert_eq!(m2, m);
    assert_eq!(s2, s);
    assert_eq!((m2.loam, m2.silt), (0.33, 0.21));
}

#[test]
fn series_with_a_skipped_hour_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_metadata(&dir.path().join("meta.csv"), &[meta("st1", 40.0)]).unwrap();
    let body = "timestamp_utc,precip_mm,et_mm,discharge_cms\n\
                2013-10-01T00:00:00Z,0,0.1,3\n\
                2013-10-01T02:00:00Z,0,0.1,3\n";
    std::fs::write(dir.path().join("st1.csv"), body).unwrap();
    let err = load_station_csv(&dir.path().join("meta.csv"), &dir.path().join("st1.csv")).unwrap_err();
    assert!(matches!(err, Error::TimeGrid { .. }), "{err:?}");
}

#[test]
fn gap_filling_examples() {
    let s = StationSeries::new(
        "g",
        t0(),
        vec![None, Some(2.0), Some(3.0), Some(1.0)],
        vec![Some(0.1); 4],
        vec![Some(5.0), None, Some(7.0), Some(8.0)],
    )
    .unwrap();
    let f = fill_short_gaps(&s, 1);
    assert_eq!(f.discharge, vec![Some(5.0), Some(5.0), Some(7.0), Some(8.0)]);
    assert_eq!(f.precip[0], None);

    let s = StationSeries::new(
        "g",
        t0(),
        vec![Some(0.0); 4],
        vec![Some(0.1); 4],
        vec![Some(5.0), None, None, Some(7.0)],
    )
    .unwrap();
    assert_eq!(fill_short_gaps(&s, 1), s);
    assert_eq!(fill_short_gaps(&s, 3).discharge[2], Some(5.0));
}

#[test]
fn seven_water_years_test_on_the_last() {
    let span = TimeRange::new(
        "2011-10-01T00:00:00Z".parse().unwrap(),
        "2018-10-01T00:00:00Z".parse().unwrap(),
    );
    let split = make_split(span, 9).unwrap();
    assert_eq!(split.test.start, "2017-10-01T00:00:00Z".parse::<chrono::DateTime<chrono::Utc>>().unwrap());
    assert_eq!(split.test.end, span.end);
    let pre = (split.test.start - span.start).num_hours();
    assert_eq!(split.val.hours(), pre * 15 / 100);
    assert_eq!(split.train.start, span.start);
    assert_eq!(split.train.end, split.val.start);
    assert_eq!(split.val.end, split.test.start);

    let short = TimeRange::new(span.start, "2012-04-01T00:00:00Z".parse().unwrap());
    assert!(matches!(make_split(short, 9), Err(Error::Split(_))));
}

#[test]
fn window_counts_for_minimal_series() {
    let m = meta("w", 10.0);
    for (hours, expect) in [(SEQ_LEN, 1), (SEQ_LEN + 1, 2), (SEQ_LEN - 1, 0)] {
        let s = series("w", hours);
        let stats = stats_for(&s, &m);
        let w = assemble_windows(&s, &m, &stats, s.span(), 1).unwrap();
        assert_eq!(w.len(), expect, "{hours} hours");
    }
}

#[test]
fn a_missing_hour_removes_exactly_the_windows_that_touch_it() {
    let m = meta("w", 10.0);
    let mut s = series("w", 600);
    let gap = 300;
    s.discharge[gap] = None;
    let stats = stats_for(&s, &m);
    let w = assemble_windows(&s, &m, &stats, s.span(), 1).unwrap();
    let anchors: Vec<usize> = w.iter().map(|x| (x.anchor_time - t0()).num_hours() as usize).collect();
    assert_eq!(anchors, brute_force_anchors(&s.presence(), 0, 600, 1));
    assert!(!anchors.contains(&(gap - 60)));
    assert!(!anchors.contains(&(gap - 120)));
    assert!(anchors.contains(&(gap - 121)));
    assert!(!anchors.contains(&(gap + 71)));
    assert!(anchors.contains(&(gap + 72)));
}

#[test]
fn windows_carry_normalized_features_and_physical_targets() {
    let m = meta("w", 10.0);
    let s = series("w", 400);
    let stats = stats_for(&s, &m);
    let z = *stats.station("w").unwrap();
    for w in assemble_windows(&s, &m, &stats, s.span(), 17).unwrap() {
        assert!(w.is_well_formed());
        assert_eq!(w.past.len(), PAST_HOURS * PAST_FEATURES);
        assert_eq!(w.future.len(), HORIZON * FUTURE_FEATURES);
        assert_eq!(w.target.len(), HORIZON);
        let t = (w.anchor_time - t0()).num_hours() as usize;
        assert_eq!(w.last_discharge, s.discharge[t].unwrap());
        assert_eq!(w.past_row(PAST_HOURS - 1)[DISCHARGE_COL], z.apply(w.last_discharge));
        for (h, (&q, &qn)) in w.target.iter().zip(&w.target_norm).enumerate() {
            assert_eq!(q, s.discharge[t + 1 + h].unwrap());
            assert!((z.invert(qn) - q).abs() <= 1e-12 * q.abs());
        }
        // a single station makes every static constant, so all map to 0
        assert!(w.past_row(0)[3..].iter().all(|&v| v == 0.0));
    }
}

#[test]
fn unified_input_examples() {
    let mut r = rng(1);
    let mut s = random_sample(&mut r, "u", 0);
    s.past[(PAST_HOURS - 1) * PAST_FEATURES + DISCHARGE_COL] = 0.37;
    let p = unify_input(&s, ExtensionPolicy::Persistence);
    let z = unify_input(&s, ExtensionPolicy::ZeroPad);
    assert_eq!(p.matrix.len(), SEQ_LEN * PAST_FEATURES);
    assert_eq!(&p.matrix[..s.past.len()], &s.past[..]);
    assert_eq!(&z.matrix[..s.past.len()], &s.past[..]);
    for h in 0..HORIZON {
        let (pr, zr) = (p.row(PAST_HOURS + h), z.row(PAST_HOURS + h));
        assert_eq!(pr[DISCHARGE_COL], 0.37);
        assert_eq!(zr[DISCHARGE_COL], 0.0);
        let f = s.future_row(h);
        for row in [pr, zr] {
            assert_eq!(&row[..DISCHARGE_COL], &f[..DISCHARGE_COL]);
            assert_eq!(&row[DISCHARGE_COL + 1..], &f[DISCHARGE_COL..]);
        }
    }
}

#[test]
fn dry_reservoir_recedes_exponentially() {
    let (k, s0) = (1.0 / 24.0, 500.0);
    let q = linear_reservoir(&[0.0; 200], k, 3.0, s0);
    for (t, v) in q.iter().enumerate() {
        let closed = k * s0 * (1.0 - k).powi(t as i32);
        assert!((v - closed).abs() <= 1e-12 * closed, "t={t}");
    }
}

#[test]
fn synthetic_catchments_are_reproducible_and_plausible() {
    let (ma, sa) = generate_synthetic_catchments(3, 2000, 42).unwrap();
    let (mb, sb) = generate_synthetic_catchments(3, 2000, 42).unwrap();
    assert_eq!((&ma, &sa), (&mb, &sb));
    let (mc, _) = generate_synthetic_catchments(3, 2000, 43).unwrap();
    assert_ne!(ma, mc);
    for (m, s) in ma.iter().zip(&sa) {
        assert!((2.0..=315.0).contains(&m.concentration_time_h));
        assert_eq!(s.len(), 2000);
        assert!(s.presence().iter().all(|&p| p));
        assert!(s.discharge.iter().flatten().all(|&q| q >= 0.0 && q.is_finite()));
    }
    assert!(matches!(generate_synthetic_catchments(0, 2000, 1), Err(Error::Parameter(_))));
    assert!(matches!(generate_synthetic_catchments(2, 399, 1), Err(Error::Parameter(_))));
}

#[test]
fn per_station_discharge_statistics_stay_separate() {
    let mut a = series("a", 300);
    let mut b = series("b", 300);
    for (i, q) in a.discharge.iter_mut().enumerate() {
        *q = Some(2.0 + (i % 3) as f64);
    }
    for (i, q) in b.discharge.iter_mut().enumerate() {
        *q = Some(12962.0 + (i % 3) as f64);
    }
    let span = a.span();
    let split = flowcast::data::SplitSpec {
        train: span,
        val: span,
        test: span,
    };
    let stats = fit_norm_stats(&[a, b], &[meta("a", 6.0), meta("b", 36453.0)], &split).unwrap();
    assert!((stats.station("a").unwrap().mean - 3.0).abs() < 1e-9);
    assert!((stats.station("b").unwrap().mean - 12963.0).abs() < 1e-9);
    assert_eq!(stats.scale_static(0, 6.0), 0.0);
    assert_eq!(stats.scale_static(0, 36453.0), 1.0);
}

proptest! {
    #[test]
    fn admissible_anchors_match_a_direct_scan(
        mask in prop::collection::vec(prop::bool::weighted(0.995), 200..700),
        lo in 0usize..150,
        cut in 0usize..150,
        stride in 1usize..30,
    ) {
        let hi = mask.len().saturating_sub(cut);
        prop_assert_eq!(
            admissible_anchors(&mask, lo, hi, stride),
            brute_force_anchors(&mask, lo, hi, stride)
        );
    }

    #[test]
    fn discharge_normalization_round_trips(values in prop::collection::vec(0.01f64..20000.0, 2..50)) {
        let z = flowcast::data::ZScore::fit(&values, "q");
        prop_assume!(z.is_ok());
        let z = z.unwrap();
        for &v in &values {
            prop_assert!((z.invert(z.apply(v)) - v).abs() <= 1e-12 * v.abs().max(1.0));
        }
    }

    #[test]
    fn reservoir_outflow_is_non_negative(
        rain in prop::collection::vec(0.0f64..30.0, 1..300),
        k in 0.001f64..0.999,
        a in 0.001f64..100.0,
        s0 in 0.0f64..1e4,
    ) {
        prop_assert!(linear_reservoir(&rain, k, a, s0).iter().all(|&q| q >= 0.0));
    }
}
