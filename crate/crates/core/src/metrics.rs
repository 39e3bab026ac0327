//! Agreement metrics between estimated and reference respiratory rates.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

fn check_pairs(est: &[f64], reference: &[f64], min_len: usize) -> Result<()> {
    if est.len() != reference.len() {
        return Err(invalid(format!(
            "estimate and reference lengths differ ({} vs {})",
            est.len(),
            reference.len()
        )));
    }
    if est.len() < min_len {
        return Err(invalid(format!("need at least {min_len} paired values, got {}", est.len())));
    }
    Ok(())
}

/// Mean absolute error.
pub fn mae(est: &[f64], reference: &[f64]) -> Result<f64> {
    check_pairs(est, reference, 1)?;
    let total: f64 = est.iter().zip(reference).map(|(e, r)| (e - r).abs()).sum();
    Ok(total / est.len() as f64)
}

/// Root mean squared error.
pub fn rmse(est: &[f64], reference: &[f64]) -> Result<f64> {
    check_pairs(est, reference, 1)?;
    let total: f64 = est.iter().zip(reference).map(|(e, r)| (e - r) * (e - r)).sum();
    Ok((total / est.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlandAltman {
    /// Mean of `est - ref`; positive means overestimation.
    pub mean_bias: f64,
    pub loa_low: f64,
    pub loa_high: f64,
}

/// Bias and 95% limits of agreement (sample standard deviation).
pub fn bland_altman(est: &[f64], reference: &[f64]) -> Result<BlandAltman> {
    check_pairs(est, reference, 2)?;
    let n = est.len() as f64;
    let diffs: Vec<f64> = est.iter().zip(reference).map(|(e, r)| e - r).collect();
    let bias = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - bias) * (d - bias)).sum::<f64>() / (n - 1.0);
    let half = 1.96 * var.sqrt();
    Ok(BlandAltman { mean_bias: bias, loa_low: bias - half, loa_high: bias + half })
}

/// Quantile of already sorted data by linear interpolation between order
/// statistics (position `q * (n - 1)`).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            let frac = pos - lo as f64;
            sorted[lo] + (sorted[hi] - sorted[lo]) * frac
        }
    }
}

pub fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

pub fn abs_error_quartiles(est: &[f64], reference: &[f64]) -> Result<Quartiles> {
    check_pairs(est, reference, 1)?;
    let errs: Vec<f64> = est.iter().zip(reference).map(|(e, r)| (e - r).abs()).collect();
    let s = sorted(&errs);
    Ok(Quartiles {
        q1: quantile_sorted(&s, 0.25),
        median: quantile_sorted(&s, 0.5),
        q3: quantile_sorted(&s, 0.75),
    })
}

/// Per-subject MAE, used for the across-subject dispersion in reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectScore {
    pub subject: String,
    pub n: usize,
    pub mae: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub n: usize,
    pub mae: f64,
    pub rmse: f64,
    pub mean_bias: f64,
    pub loa_low: f64,
    pub loa_high: f64,
    pub abs_err_q1: f64,
    pub abs_err_median: f64,
    pub abs_err_q3: f64,
    /// Standard deviation of per-subject MAE (sample), when at least two
    /// subjects are present.
    pub subject_mae_sd: Option<f64>,
    /// Standard deviation of per-subject RMSE (sample).
    pub subject_rmse_sd: Option<f64>,
    pub param_count: Option<u64>,
    pub per_subject: Vec<SubjectScore>,
}

impl EvalReport {
    /// Builds the report from paired estimates; `subjects` assigns each pair
    /// to a subject for the dispersion figures.
    pub fn compute(method: &str, est: &[f64], reference: &[f64], subjects: &[String]) -> Result<Self> {
        check_pairs(est, reference, 2)?;
        if subjects.len() != est.len() {
            return Err(invalid("subject list does not match estimate count"));
        }
        let ba = bland_altman(est, reference)?;
        let q = abs_error_quartiles(est, reference)?;

        let mut names: Vec<&String> = subjects.iter().collect();
        names.sort();
        names.dedup();
        let mut per_subject = Vec::with_capacity(names.len());
        for name in names {
            let (e, r): (Vec<f64>, Vec<f64>) = subjects
                .iter()
                .zip(est.iter().zip(reference))
                .filter(|(s, _)| *s == name)
                .map(|(_, (e, r))| (*e, *r))
                .unzip();
            per_subject.push(SubjectScore { subject: name.clone(), n: e.len(), mae: mae(&e, &r)?, rmse: rmse(&e, &r)? });
        }
        let sample_sd = |xs: Vec<f64>| -> Option<f64> {
            if xs.len() < 2 {
                return None;
            }
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            Some((xs.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt())
        };
        Ok(Self {
            method: method.to_string(),
            n: est.len(),
            mae: mae(est, reference)?,
            rmse: rmse(est, reference)?,
            mean_bias: ba.mean_bias,
            loa_low: ba.loa_low,
            loa_high: ba.loa_high,
            abs_err_q1: q.q1,
            abs_err_median: q.median,
            abs_err_q3: q.q3,
            subject_mae_sd: sample_sd(per_subject.iter().map(|s| s.mae).collect()),
            subject_rmse_sd: sample_sd(per_subject.iter().map(|s| s.rmse).collect()),
            param_count: None,
            per_subject,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(mae(&[10.0, 12.0], &[11.0, 14.0]).unwrap(), 1.5);
        assert!((rmse(&[10.0, 12.0], &[11.0, 14.0]).unwrap() - 2.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(mae(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 0.0);
        let ba = bland_altman(&[10.0, 12.0], &[11.0, 11.0]).unwrap();
        assert_eq!(ba.mean_bias, 0.0);
        assert!((ba.loa_high - 1.96 * 2f64.sqrt()).abs() < 1e-12);
        assert!((ba.loa_low + 1.96 * 2f64.sqrt()).abs() < 1e-12);
        let ba = bland_altman(&[12.0, 15.0, 9.0], &[10.0, 13.0, 7.0]).unwrap();
        assert!((ba.mean_bias - 2.0).abs() < 1e-12);
        assert!((ba.loa_high - ba.loa_low).abs() < 1e-12);
    }

    #[test]
    fn constant_offset() {
        let r = [10.0, 14.0, 20.0];
        let e: Vec<f64> = r.iter().map(|v| v + 2.0).collect();
        assert!((rmse(&e, &r).unwrap() - 2.0).abs() < 1e-12);
        assert!((mae(&e, &r).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn quartile_examples() {
        let q = abs_error_quartiles(&[1.0, 2.0, 3.0, 4.0, 5.0], &[0.0; 5]).unwrap();
        assert_eq!((q.q1, q.median, q.q3), (2.0, 3.0, 4.0));
        let q = abs_error_quartiles(&[7.5], &[0.0]).unwrap();
        assert_eq!((q.q1, q.median, q.q3), (7.5, 7.5, 7.5));
    }

    #[test]
    fn errors() {
        assert!(mae(&[], &[]).is_err());
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(bland_altman(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn report_subject_dispersion() {
        let est = [10.0, 12.0, 20.0, 21.0];
        let reference = [11.0, 12.0, 18.0, 18.0];
        let subjects: Vec<String> = ["a", "a", "b", "b"].iter().map(|s| s.to_string()).collect();
        let r = EvalReport::compute("cnn", &est, &reference, &subjects).unwrap();
        assert_eq!(r.per_subject.len(), 2);
        assert_eq!(r.per_subject[0].mae, 0.5);
        assert_eq!(r.per_subject[1].mae, 2.5);
        assert!((r.subject_mae_sd.unwrap() - 2f64.sqrt()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn rmse_dominates_mae(pairs in prop::collection::vec((-50f64..50.0, -50f64..50.0), 1..100)) {
            let (e, r): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            prop_assert!(rmse(&e, &r).unwrap() + 1e-12 >= mae(&e, &r).unwrap());
        }

        #[test]
        fn bias_shift(pairs in prop::collection::vec((0f64..40.0, 0f64..40.0), 2..60), c in -5f64..5.0) {
            let (e, r): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let shifted: Vec<f64> = e.iter().map(|v| v + c).collect();
            let a = bland_altman(&e, &r).unwrap();
            let b = bland_altman(&shifted, &r).unwrap();
            prop_assert!((b.mean_bias - a.mean_bias - c).abs() < 1e-9);
            prop_assert!(((b.loa_high - b.loa_low) - (a.loa_high - a.loa_low)).abs() < 1e-9);
        }

        #[test]
        fn permutation_invariant(pairs in prop::collection::vec((0f64..40.0, 0f64..40.0), 2..60)) {
            let (e, r): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
            let (er, rr): (Vec<f64>, Vec<f64>) = pairs.iter().rev().copied().unzip();
            prop_assert!((mae(&e, &r).unwrap() - mae(&er, &rr).unwrap()).abs() < 1e-12);
            prop_assert!((rmse(&e, &r).unwrap() - rmse(&er, &rr).unwrap()).abs() < 1e-12);
            let (a, b) = (bland_altman(&e, &r).unwrap(), bland_altman(&er, &rr).unwrap());
            prop_assert!((a.mean_bias - b.mean_bias).abs() < 1e-12);
            prop_assert!((a.loa_high - b.loa_high).abs() < 1e-9);
            prop_assert_eq!(abs_error_quartiles(&e, &r).unwrap(), abs_error_quartiles(&er, &rr).unwrap());
        }
    }
}
