use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check(op: &'static str, obs: &[f64], pred: &[f64], min_len: usize) -> Result<()> {
    if obs.len() != pred.len() || obs.len() < min_len {
        return Err(Error::shape(
            op,
            format!(
                "observed {} vs predicted {} values (need equal lengths >= {min_len})",
                obs.len(),
                pred.len()
            ),
        ));
    }
    Ok(())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sum of squared deviations from the mean.
fn centered_ss(xs: &[f64], m: f64) -> f64 {
    xs.iter().map(|x| (x - m) * (x - m)).sum()
}

/// Nash-Sutcliffe efficiency: `1 - Σ(y-ŷ)² / Σ(y-ȳ)²`.
pub fn nse(obs: &[f64], pred: &[f64]) -> Result<f64> {
    check("nse", obs, pred, 2)?;
    let denom = centered_ss(obs, mean(obs));
    if denom == 0.0 {
        return Err(Error::UndefinedMetric("nse: observations are constant"));
    }
    let num: f64 = obs.iter().zip(pred).map(|(y, p)| (y - p) * (y - p)).sum();
    Ok(1.0 - num / denom)
}

/// Pearson correlation coefficient.
pub fn pearson_r(obs: &[f64], pred: &[f64]) -> Result<f64> {
    check("pearson_r", obs, pred, 2)?;
    let (mo, mp) = (mean(obs), mean(pred));
    let (so, sp) = (centered_ss(obs, mo), centered_ss(pred, mp));
    if so == 0.0 || sp == 0.0 {
        return Err(Error::UndefinedMetric("pearson_r: constant input"));
    }
    let cov: f64 = obs.iter().zip(pred).map(|(y, p)| (y - mo) * (p - mp)).sum();
    Ok((cov / (so * sp).sqrt()).clamp(-1.0, 1.0))
}

/// Kling-Gupta efficiency and its three components.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kge {
    pub kge: f64,
    pub r: f64,
    /// Ratio of predicted to observed standard deviation.
    pub alpha: f64,
    /// Ratio of predicted to observed mean.
    pub beta: f64,
}

pub fn kge(obs: &[f64], pred: &[f64]) -> Result<Kge> {
    check("kge", obs, pred, 2)?;
    let (mo, mp) = (mean(obs), mean(pred));
    if mo == 0.0 {
        return Err(Error::UndefinedMetric("kge: observed mean is zero"));
    }
    let so = centered_ss(obs, mo);
    if so == 0.0 {
        return Err(Error::UndefinedMetric("kge: observations are constant"));
    }
    let r = pearson_r(obs, pred)?;
    let alpha = (centered_ss(pred, mp) / so).sqrt();
    let beta = mp / mo;
    let kge = 1.0 - ((r - 1.0).powi(2) + (alpha - 1.0).powi(2) + (beta - 1.0).powi(2)).sqrt();
    Ok(Kge { kge, r, alpha, beta })
}

/// Root-mean-square error divided by the observed mean.
pub fn nrmse(obs: &[f64], pred: &[f64]) -> Result<f64> {
    check("nrmse", obs, pred, 1)?;
    let mo = mean(obs);
    if mo == 0.0 {
        return Err(Error::UndefinedMetric("nrmse: observed mean is zero"));
    }
    let mse = obs.iter().zip(pred).map(|(y, p)| (y - p) * (y - p)).sum::<f64>() / obs.len() as f64;
    Ok(mse.sqrt() / mo)
}

/// Median of the values; an even count averages the two central values.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nse_examples() {
        let obs = [1.0, 2.0, 3.0];
        assert_eq!(nse(&obs, &obs).unwrap(), 1.0);
        assert_eq!(nse(&obs, &[2.0, 2.0, 2.0]).unwrap(), 0.0);
        assert_eq!(nse(&obs, &[1.0, 2.0, 4.0]).unwrap(), 0.5);
        assert!(matches!(nse(&[4.0, 4.0], &[1.0, 2.0]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn kge_examples() {
        let obs = [1.0, 2.0, 4.0, 7.0];
        let k = kge(&obs, &obs).unwrap();
        assert_eq!((k.kge, k.r, k.alpha, k.beta), (1.0, 1.0, 1.0, 1.0));
        let twice: Vec<f64> = obs.iter().map(|x| 2.0 * x).collect();
        let k = kge(&obs, &twice).unwrap();
        assert!((k.r - 1.0).abs() < 1e-15);
        assert!((k.alpha - 2.0).abs() < 1e-15);
        assert!((k.beta - 2.0).abs() < 1e-15);
        assert!((k.kge - (1.0 - 2f64.sqrt())).abs() < 1e-12);
        let shifted: Vec<f64> = obs.iter().map(|x| x + 3.0).collect();
        let k = kge(&obs, &shifted).unwrap();
        assert!((k.alpha - 1.0).abs() < 1e-15);
        assert!((k.beta - (1.0 + 3.0 / 3.5)).abs() < 1e-15);
    }

    #[test]
    fn pearson_examples() {
        assert_eq!(pearson_r(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(pearson_r(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert!(matches!(pearson_r(&[1.0, 2.0], &[5.0, 5.0]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn nrmse_examples() {
        assert_eq!(nrmse(&[2.0; 4], &[2.0; 4]).unwrap(), 0.0);
        assert_eq!(nrmse(&[2.0; 4], &[3.0; 4]).unwrap(), 0.5);
        assert!(matches!(nrmse(&[0.0, 0.0], &[1.0, 1.0]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[0.9, 0.2, 0.5]), Some(0.5));
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn mismatched_lengths_are_shape_errors() {
        assert!(matches!(nse(&[1.0, 2.0], &[1.0]), Err(Error::Shape { .. })));
    }
}
