//! Per-action reward regressions, plain or moment-targeted (MTRI).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::features::{support_mask, FeatureSpec};
use super::folds::FoldAssignment;
use super::ridge::{fit_multi_ridge, fit_ridge_subset, RidgeModel};
use crate::data::LaggedDataset;
use crate::error::{DolceError, Result};
use crate::linalg::{inverse_spd, solve_spd_vec};
use crate::table::{ActionTable, RowMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub features: FeatureSpec,
    pub reg: f64,
    /// Minimum minority frequency for indicator columns; rarer ones are dropped.
    pub min_support: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self { features: FeatureSpec::dolce_default(), reg: 0.3, min_support: 0.2 }
    }
}

/// Critic functions `phi_j(x, x_lag)`, interacted with the action by fitting
/// per action. Each critic is centered by a ridge regression on the lag context.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CriticDictionary {
    pub linear: bool,
    pub squares: bool,
    pub lag_products: bool,
    /// Penalty of the centering regressions.
    pub center_reg: f64,
}

impl Default for CriticDictionary {
    fn default() -> Self {
        Self { linear: true, squares: true, lag_products: true, center_reg: 1e-2 }
    }
}

impl CriticDictionary {
    fn spec(&self) -> FeatureSpec {
        FeatureSpec {
            current_linear: self.linear,
            current_knots: vec![],
            current_squares: self.squares,
            lag_linear: false,
            cross_products: self.lag_products,
        }
    }

    pub fn num_critics(&self, d: usize) -> usize {
        self.spec().dim(d)
    }
}

/// Cross-fitted reward model for one lag (or for the current context only).
#[derive(Clone, Debug)]
pub struct RewardModel {
    pub features: FeatureSpec,
    pub lag: Option<usize>,
    pub num_actions: usize,
    /// `[fold][action]`
    pub models: Vec<Vec<RidgeModel>>,
    /// `(fold, action)` pairs that used the global action-mean fallback.
    pub fallback: Vec<(usize, usize)>,
    /// Out-of-fold predictions for every sample and action.
    pub oof: ActionTable,
    /// MTRI moment norms `||m(beta)||` at the solution, `[fold][action]`.
    pub moment_norms: Option<Vec<Vec<f64>>>,
    pub warnings: Vec<String>,
}

impl RewardModel {
    /// Prediction of the fold-`j` model for every action.
    pub fn predict(&self, fold: usize, x: &[f64], lag: Option<&[f64]>) -> Vec<f64> {
        let mut f = Vec::new();
        self.features.build_into(x, lag, &mut f);
        self.models[fold].iter().map(|m| m.predict(&f)).collect()
    }

    /// Out-of-fold prediction at each logged action.
    pub fn oof_logged(&self, data: &LaggedDataset) -> Vec<f64> {
        data.samples().iter().enumerate().map(|(i, s)| self.oof.get(i, s.action)).collect()
    }
}

fn action_means(data: &LaggedDataset) -> Vec<f64> {
    let a = data.num_actions();
    let mut sum = vec![0.0; a];
    let mut cnt = vec![0usize; a];
    for s in data.samples() {
        sum[s.action] += s.reward;
        cnt[s.action] += 1;
    }
    let overall = data.samples().iter().map(|s| s.reward).sum::<f64>() / data.len() as f64;
    sum.iter().zip(&cnt).map(|(s, c)| if *c > 0 { s / *c as f64 } else { overall }).collect()
}

struct Prepared {
    x: RowMatrix,
    binary: Vec<bool>,
    rewards: Vec<f64>,
    means: Vec<f64>,
}

fn prepare(data: &LaggedDataset, lag: Option<usize>, cfg: &RewardConfig) -> Result<Prepared> {
    if !(cfg.reg > 0.0) {
        return Err(DolceError::InvalidConfig("reward ridge penalty must be positive".into()));
    }
    Ok(Prepared {
        x: cfg.features.matrix(data, lag)?,
        binary: cfg.features.binary_mask(data.dim()),
        rewards: data.rewards(),
        means: action_means(data),
    })
}

fn finish(
    data: &LaggedDataset,
    lag: Option<usize>,
    cfg: &RewardConfig,
    x: &RowMatrix,
    folds: &FoldAssignment,
    models: Vec<Vec<RidgeModel>>,
    fallback: Vec<(usize, usize)>,
    moment_norms: Option<Vec<Vec<f64>>>,
    warnings: Vec<String>,
) -> RewardModel {
    let a = data.num_actions();
    let oof = ActionTable::from_fn(data.len(), a, |i, b| models[folds.fold_of(i)][b].predict(x.row(i)));
    RewardModel { features: cfg.features.clone(), lag, num_actions: a, models, fallback, oof, moment_norms, warnings }
}

fn rows_by_action(data: &LaggedDataset, folds: &FoldAssignment, j: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); data.num_actions()];
    for (i, s) in data.samples().iter().enumerate() {
        if folds.fold_of(i) != j {
            out[s.action].push(i);
        }
    }
    out
}

/// Per-action ridge of `R` on the feature map, one model per training fold.
pub fn fit_reward_model_plain(
    data: &LaggedDataset,
    lag: Option<usize>,
    folds: &FoldAssignment,
    cfg: &RewardConfig,
) -> Result<RewardModel> {
    let prep = prepare(data, lag, cfg)?;
    let p = prep.x.cols();
    let mut models = Vec::with_capacity(folds.num_folds());
    let mut fallback = Vec::new();
    for j in 0..folds.num_folds() {
        let by_action = rows_by_action(data, folds, j);
        let mut fold_models = Vec::with_capacity(data.num_actions());
        for (a, rows) in by_action.iter().enumerate() {
            if rows.is_empty() {
                fallback.push((j, a));
                fold_models.push(RidgeModel::constant(p, prep.means[a], cfg.reg));
                continue;
            }
            let keep = support_mask(&prep.x, &prep.binary, rows, cfg.min_support);
            fold_models.push(fit_ridge_subset(&prep.x, rows, &prep.rewards, cfg.reg, Some(&keep))?);
        }
        models.push(fold_models);
    }
    Ok(finish(data, lag, cfg, &prep.x, folds, models, fallback, None, Vec::new()))
}

/// Moment-targeted fit: per action and training fold, minimizes
/// `||R - Psi b||^2 + reg ||b_{-0}||^2 + penalty n_a m(b)' (G + eps I)^{-1} m(b)`
/// with `m(b) = Phi~' (R - Psi b) / n_a` and `G = Phi~' Phi~ / n_a` built from
/// centered critics `Phi~`. The objective is quadratic, so one linear solve suffices.
///
/// Critics are centered with a two-way split inside each training set: the
/// centering regression for one half is fitted on the other half.
pub fn fit_reward_model_mtri(
    data: &LaggedDataset,
    lag: usize,
    folds: &FoldAssignment,
    cfg: &RewardConfig,
    critics: &CriticDictionary,
    penalty: f64,
    gram_eps: f64,
) -> Result<RewardModel> {
    if !(penalty >= 0.0) || !(gram_eps > 0.0) {
        return Err(DolceError::InvalidConfig("MTRI penalty must be >= 0 and Gram ridge > 0".into()));
    }
    let prep = prepare(data, Some(lag), cfg)?;
    let crit_spec = critics.spec();
    let phi = crit_spec.matrix(data, Some(lag))?;
    let lag_x = FeatureSpec::lag_only().matrix(data, Some(lag))?;
    let p = prep.x.cols();
    let jn = phi.cols();
    let mut models = Vec::with_capacity(folds.num_folds());
    let mut fallback = Vec::new();
    let mut norms = Vec::with_capacity(folds.num_folds());
    let mut warnings = Vec::new();
    for j in 0..folds.num_folds() {
        let by_action = rows_by_action(data, folds, j);
        let mut fold_models = Vec::with_capacity(data.num_actions());
        let mut fold_norms = Vec::with_capacity(data.num_actions());
        for (a, rows) in by_action.iter().enumerate() {
            if rows.is_empty() {
                fallback.push((j, a));
                fold_models.push(RidgeModel::constant(p, prep.means[a], cfg.reg));
                fold_norms.push(0.0);
                continue;
            }
            let keep = support_mask(&prep.x, &prep.binary, rows, cfg.min_support);
            if rows.len() < 4 || penalty == 0.0 || jn == 0 {
                fold_models.push(fit_ridge_subset(&prep.x, rows, &prep.rewards, cfg.reg, Some(&keep))?);
                fold_norms.push(f64::NAN);
                continue;
            }
            let cols: Vec<usize> = (0..p).filter(|&c| keep[c]).collect();
            let q = cols.len() + 1;
            let na = rows.len();
            let nf = na as f64;

            // Centered critics via the inner split.
            let halves: [Vec<usize>; 2] = [
                rows.iter().copied().step_by(2).collect(),
                rows.iter().copied().skip(1).step_by(2).collect(),
            ];
            let mut phi_c = DMatrix::<f64>::zeros(na, jn);
            let pos: std::collections::HashMap<usize, usize> = rows.iter().enumerate().map(|(r, &i)| (i, r)).collect();
            for h in 0..2 {
                let center = fit_multi_ridge(&lag_x, &halves[1 - h], &phi, critics.center_reg)?;
                let mut pred = vec![0.0; jn];
                for &i in &halves[h] {
                    center.predict_into(lag_x.row(i), &mut pred);
                    let r = pos[&i];
                    for c in 0..jn {
                        phi_c[(r, c)] = phi.get(i, c) - pred[c];
                    }
                }
            }
            let psi = DMatrix::from_fn(na, q, |r, c| if c == 0 { 1.0 } else { prep.x.get(rows[r], cols[c - 1]) });
            let y = DVector::from_iterator(na, rows.iter().map(|&i| prep.rewards[i]));

            let phit = phi_c.transpose();
            let gram = &phit * &phi_c / nf;
            let cm = &phit * &psi / nf;
            let cv = &phit * &y / nf;
            let mut eps = gram_eps;
            let minv = loop {
                let mut g = gram.clone();
                for d in 0..jn {
                    g[(d, d)] += eps;
                }
                match inverse_spd(&g) {
                    Ok(m) if m.iter().all(|v| v.is_finite()) => break m,
                    _ if eps < 1.0 => {
                        eps *= 10.0;
                        warnings.push(format!("fold {j} action {a}: Gram ridge raised to {eps:e}"));
                    }
                    _ => return Err(DolceError::Numeric("critic Gram matrix is singular".into())),
                }
            };
            let mut lhs = psi.transpose() * &psi;
            for d in 1..q {
                lhs[(d, d)] += cfg.reg;
            }
            let cmt_m = cm.transpose() * &minv;
            lhs += &cmt_m * &cm * (penalty * nf);
            let rhs = psi.transpose() * &y + &cmt_m * &cv * (penalty * nf);
            let beta = solve_spd_vec(&lhs, &rhs)?;
            let m = &cv - &cm * &beta;
            fold_norms.push(m.norm());
            let mut weights = vec![0.0; p];
            for (t, &c) in cols.iter().enumerate() {
                weights[c] = beta[t + 1];
            }
            fold_models.push(RidgeModel { weights, intercept: beta[0], reg: cfg.reg });
        }
        models.push(fold_models);
        norms.push(fold_norms);
    }
    Ok(finish(data, Some(lag), cfg, &prep.x, folds, models, fallback, Some(norms), warnings))
}
