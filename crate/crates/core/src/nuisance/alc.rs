//! Estimate of the approximate local correctness (ALC) score.
//!
//! With residual `e = R - q_hat`, fits `m1 ~ E[e | x, x_lag, a]` on a rich map
//! and `m0 ~ E[e | x_lag, a]` on the lag context alone, both out of fold, and
//! estimates `E[(m1 - m0)^2]`.
//!
//! Squaring one fitted difference adds its estimation variance, a floor of
//! order `p / n` that swamps small differences between reward models. By
//! default the difference is fitted on two disjoint halves of each training
//! fold and the two predictions are multiplied, so that noise averages out.

use serde::{Deserialize, Serialize};

use super::features::{support_mask, FeatureSpec};
use super::folds::FoldAssignment;
use super::ridge::{fit_ridge_subset, RidgeModel};
use crate::data::LaggedDataset;
use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlcConfig {
    /// Map for `m1`; `m0` always uses the linear lag context.
    pub rich_features: FeatureSpec,
    pub reg: f64,
    pub min_support: f64,
    /// Product of two half-sample fits instead of the squared full fit.
    pub split_product: bool,
}

impl Default for AlcConfig {
    fn default() -> Self {
        Self {
            rich_features: FeatureSpec {
                current_linear: true,
                current_knots: vec![0.5],
                current_squares: true,
                lag_linear: true,
                cross_products: true,
            },
            reg: 1.0,
            min_support: 0.2,
            split_product: true,
        }
    }
}

/// `q_logged[i]` must be the out-of-fold reward prediction at the logged action.
pub fn estimate_alc(
    data: &LaggedDataset,
    lag: usize,
    folds: &FoldAssignment,
    q_logged: &[f64],
    cfg: &AlcConfig,
) -> Result<f64> {
    data.check_lag(lag)?;
    if q_logged.len() != data.len() {
        return invalid("q_logged must have one entry per sample");
    }
    let resid: Vec<f64> = data.samples().iter().zip(q_logged).map(|(s, q)| s.reward - q).collect();
    let rich = cfg.rich_features.matrix(data, Some(lag))?;
    let rich_bin = cfg.rich_features.binary_mask(data.dim());
    let lag_x = FeatureSpec::lag_only().matrix(data, Some(lag))?;
    let mut total = 0.0;
    for j in 0..folds.num_folds() {
        let test = folds.test_indices(j);
        for a in 0..data.num_actions() {
            let rows: Vec<usize> =
                (0..data.len()).filter(|&i| folds.fold_of(i) != j && data.samples()[i].action == a).collect();
            let targets: Vec<usize> = test.iter().copied().filter(|&i| data.samples()[i].action == a).collect();
            if targets.is_empty() || rows.is_empty() {
                continue;
            }
            let keep = support_mask(&rich, &rich_bin, &rows, cfg.min_support);
            let fit = |rows: &[usize]| -> Result<(RidgeModel, RidgeModel)> {
                Ok((
                    fit_ridge_subset(&rich, rows, &resid, cfg.reg, Some(&keep))?,
                    fit_ridge_subset(&lag_x, rows, &resid, cfg.reg, None)?,
                ))
            };
            let diff = |m: &(RidgeModel, RidgeModel), i: usize| m.0.predict(rich.row(i)) - m.1.predict(lag_x.row(i));
            if cfg.split_product && rows.len() >= 4 {
                let half_a: Vec<usize> = rows.iter().copied().step_by(2).collect();
                let half_b: Vec<usize> = rows.iter().copied().skip(1).step_by(2).collect();
                let (ma, mb) = (fit(&half_a)?, fit(&half_b)?);
                for &i in &targets {
                    total += diff(&ma, i) * diff(&mb, i);
                }
            } else {
                let m = fit(&rows)?;
                for &i in &targets {
                    total += diff(&m, i).powi(2);
                }
            }
        }
    }
    Ok((total / data.len() as f64).max(0.0))
}
