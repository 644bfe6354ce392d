//! Brute-force metric formulas written independently of the library: sums
//! are expanded term by term and correlations use raw moments.

use flowcast::metrics::ForecastArchive;
use flowcast::models::Architecture;
use flowcast::{HORIZON, PAST_HOURS};

fn mean(x: &[f64]) -> f64 {
    let mut s = 0.0;
    for v in x {
        s += v;
    }
    s / x.len() as f64
}

pub fn nse(o: &[f64], p: &[f64]) -> f64 {
    let m = mean(o);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..o.len() {
        num += (o[i] - p[i]).powi(2);
        den += (o[i] - m).powi(2);
    }
    1.0 - num / den
}

fn std(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
}

pub fn r(o: &[f64], p: &[f64]) -> f64 {
    let n = o.len() as f64;
    let (mo, mp) = (mean(o), mean(p));
    let mut cov = 0.0;
    for i in 0..o.len() {
        cov += (o[i] - mo) * (p[i] - mp);
    }
    cov / n / (std(o) * std(p))
}

pub fn kge(o: &[f64], p: &[f64]) -> f64 {
    let rr = r(o, p);
    let alpha = std(p) / std(o);
    let beta = mean(p) / mean(o);
    1.0 - ((rr - 1.0).powi(2) + (alpha - 1.0).powi(2) + (beta - 1.0).powi(2)).sqrt()
}

pub fn nrmse(o: &[f64], p: &[f64]) -> f64 {
    let mut ss = 0.0;
    for i in 0..o.len() {
        ss += (o[i] - p[i]).powi(2);
    }
    (ss / o.len() as f64).sqrt() / mean(o)
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

/// Observed and predicted values at `lead` (1-based) pooled over every
/// station and anchor of the archive.
pub fn pooled(archive: &ForecastArchive, model: Architecture, lead: usize, only: Option<&str>) -> (Vec<f64>, Vec<f64>) {
    let (mut o, mut p) = (Vec::new(), Vec::new());
    for s in archive.stations() {
        if only.is_some_and(|id| id != s.station_id) {
            continue;
        }
        for a in 0..s.anchors.len() {
            o.push(s.observed[a * HORIZON + lead - 1]);
            p.push(s.predicted[&model][a * HORIZON + lead - 1]);
        }
    }
    (o, p)
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

/// Direct scan: anchor `t` is admissible when every hour it touches is
/// present and its horizon ends inside `[lo, hi)`.
pub fn anchors(presence: &[bool], lo: usize, hi: usize, stride: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut t = lo.max(PAST_HOURS - 1);
    while t < hi {
        let fits = t + HORIZON < hi.min(presence.len());
        if fits && (t + 1 - PAST_HOURS..=t + HORIZON).all(|i| presence[i]) {
            out.push(t);
        }
        t += stride;
    }
    out
}
