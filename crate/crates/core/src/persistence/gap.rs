//! Linear model relating total persistence to the generalization gap:
//! `gap ~ -alpha * persistence + beta`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fitted (or default) gap model. `alpha` is the negated slope, so positive
/// `alpha` means higher persistence predicts a smaller gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapModel {
    pub alpha: f64,
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_squared: Option<f64>,
}

impl GapModel {
    /// Literature default constants (no fit attached).
    pub fn defaults() -> Self {
        Self { alpha: 0.034, beta: 0.12, r_squared: None }
    }
}

/// Ordinary least squares of `gaps` on `pers_values`.
pub fn fit_gap_model(pers_values: &[f64], gaps: &[f64]) -> Result<GapModel> {
    if pers_values.len() != gaps.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} persistence values vs {} gaps",
            pers_values.len(),
            gaps.len()
        )));
    }
    if pers_values.len() < 2 {
        return Err(Error::InvalidInput("need at least 2 points to fit".into()));
    }
    let n = pers_values.len() as f64;
    let x_mean = pers_values.iter().sum::<f64>() / n;
    let y_mean = gaps.iter().sum::<f64>() / n;
    let sxx: f64 = pers_values.iter().map(|x| (x - x_mean) * (x - x_mean)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("zero variance in persistence values".into()));
    }
    let sxy: f64 = pers_values
        .iter()
        .zip(gaps)
        .map(|(x, y)| (x - x_mean) * (y - y_mean))
        .sum();
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let ss_res: f64 = pers_values
        .iter()
        .zip(gaps)
        .map(|(x, y)| {
            let fitted = slope * x + intercept;
            (y - fitted) * (y - fitted)
        })
        .sum();
    let ss_tot: f64 = gaps.iter().map(|y| (y - y_mean) * (y - y_mean)).sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(GapModel { alpha: -slope, beta: intercept, r_squared: Some(r_squared) })
}

/// `-alpha * pers + beta`.
pub fn predict_gap(model: &GapModel, pers: f64) -> f64 {
    -model.alpha * pers + model.beta
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_linear_data_recovered() {
        let pers: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let gaps: Vec<f64> = pers.iter().map(|p| -0.1 * p + 5.0).collect();
        let m = fit_gap_model(&pers, &gaps).unwrap();
        assert!((m.alpha - 0.1).abs() < 1e-12);
        assert!((m.beta - 5.0).abs() < 1e-12);
        assert!((m.r_squared.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_points_always_fit_perfectly() {
        let m = fit_gap_model(&[1.0, 3.0], &[0.5, 0.1]).unwrap();
        assert!((m.r_squared.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_variance_rejected() {
        assert!(fit_gap_model(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn prediction_examples() {
        let defaults = GapModel::defaults();
        assert!((predict_gap(&defaults, 0.0) - 0.12).abs() < 1e-15);
        // defaults go negative for large persistence; kept for fidelity,
        // warned about downstream
        assert!((predict_gap(&defaults, 50.0) - (-1.58)).abs() < 1e-12);

        let flat = GapModel { alpha: 0.0, beta: 0.7, r_squared: None };
        assert_eq!(predict_gap(&flat, 123.0), 0.7);
    }

    #[test]
    fn planted_model_recovered_on_noiseless_data() {
        let pers: Vec<f64> = vec![3.0, 7.5, 12.0, 20.0, 31.0];
        let alpha = 0.042;
        let beta = 1.25;
        let gaps: Vec<f64> = pers.iter().map(|p| -alpha * p + beta).collect();
        let m = fit_gap_model(&pers, &gaps).unwrap();
        assert!((m.alpha - alpha).abs() < 1e-12);
        assert!((m.beta - beta).abs() < 1e-12);
    }
}
