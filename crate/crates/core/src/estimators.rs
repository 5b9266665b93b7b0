//! Value estimators, influence-function intervals and effective sample size.
//!
//! Each estimator is written as a mean of per-sample contributions `psi_i`.
//! The `_from_parts` functions take already evaluated nuisances; the wrappers
//! below them fit or look those up.

use serde::{Deserialize, Serialize};

use crate::data::LaggedDataset;
use crate::error::{invalid, DolceError, Result};
use crate::nuisance::features::FeatureSpec;
use crate::nuisance::folds::{kfold_split, FoldAssignment};
use crate::nuisance::logit::fit_logit;
use crate::nuisance::reward::{fit_reward_model_plain, RewardModel};
use crate::nuisance::set::{fit_nuisances_with, policy_table, NuisanceConfig, NuisanceSet};
use crate::policy::Policy;
use crate::stats::{mean, normal_quantile};
use crate::table::ActionTable;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimator: String,
    pub value: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ess: Option<f64>,
    pub per_lag_values: Vec<f64>,
    pub lag_weights_alpha: Vec<f64>,
    /// Per-sample contributions whose mean is `value`.
    #[serde(skip)]
    pub psi: Vec<f64>,
}

impl EstimateReport {
    /// Report for `value` with intervals from the contributions `psi`.
    pub fn from_psi(estimator: &str, value: f64, psi: Vec<f64>, level: f64, ess: Option<f64>) -> Result<Self> {
        let phi: Vec<f64> = psi.iter().map(|p| p - value).collect();
        let (se, ci_low, ci_high) = influence_ci(&phi, value, level)?;
        Ok(Self {
            estimator: estimator.to_string(),
            value,
            se,
            ci_low,
            ci_high,
            ess,
            per_lag_values: Vec::new(),
            lag_weights_alpha: Vec::new(),
            psi,
        })
    }

    pub fn covers(&self, truth: f64) -> bool {
        self.ci_low <= truth && truth <= self.ci_high
    }

    /// CSV header for reports with `k` lag weights.
    pub fn csv_header(k: usize) -> Vec<String> {
        let mut h: Vec<String> = ["estimator", "value", "se", "ci_low", "ci_high", "ess"].iter().map(|s| s.to_string()).collect();
        h.extend((1..=k).map(|j| format!("alpha_{j}")));
        h
    }

    /// One CSV record, padded to `k` lag weights with empty fields.
    pub fn csv_record(&self, k: usize) -> Vec<String> {
        let mut r = vec![
            self.estimator.clone(),
            self.value.to_string(),
            self.se.to_string(),
            self.ci_low.to_string(),
            self.ci_high.to_string(),
            self.ess.map(|e| e.to_string()).unwrap_or_default(),
        ];
        for j in 0..k {
            r.push(self.lag_weights_alpha.get(j).map(|a| a.to_string()).unwrap_or_default());
        }
        r
    }
}

/// Wald interval from centered contributions `phi`: `se = sqrt(sum phi^2) / n`.
pub fn influence_ci(phi: &[f64], estimate: f64, level: f64) -> Result<(f64, f64, f64)> {
    if phi.len() < 2 {
        return invalid("influence interval needs at least two samples");
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(DolceError::InvalidConfig(format!("confidence level must lie in (0, 1), got {level}")));
    }
    let n = phi.len() as f64;
    let se = phi.iter().map(|p| p * p).sum::<f64>().sqrt() / n;
    let z = normal_quantile(0.5 + level / 2.0);
    Ok((se, estimate - z * se, estimate + z * se))
}

/// `(sum w)^2 / sum w^2`.
pub fn ess(weights: &[f64]) -> Result<f64> {
    if let Some(i) = weights.iter().position(|w| !(*w >= 0.0) || !w.is_finite()) {
        return invalid(format!("weight {i} is negative or not finite"));
    }
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if s2 == 0.0 {
        return invalid("effective sample size is undefined when every weight is zero");
    }
    Ok(s * s / s2)
}

/// `alpha_k` proportional to `exp(-alc_k / tau)`.
pub fn softmin_weights(alc: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return Err(DolceError::InvalidConfig(format!("softmin temperature must be positive, got {tau}")));
    }
    if alc.is_empty() {
        return invalid("softmin needs at least one value");
    }
    if alc.iter().any(|a| !a.is_finite()) {
        return invalid("softmin inputs must be finite");
    }
    let m = alc.iter().cloned().fold(f64::INFINITY, f64::min);
    let e: Vec<f64> = alc.iter().map(|a| (-(a - m) / tau).exp()).collect();
    let z: f64 = e.iter().sum();
    Ok(e.into_iter().map(|v| v / z).collect())
}

fn check_shapes(pi: &ActionTable, actions: &[usize], rewards: &[f64]) -> Result<()> {
    if pi.rows() != actions.len() || rewards.len() != actions.len() {
        return invalid("policy table, actions and rewards differ in length");
    }
    if let Some(i) = actions.iter().position(|a| *a >= pi.cols()) {
        return invalid(format!("action at row {i} is out of range"));
    }
    Ok(())
}

fn check_propensities(prop: &[f64]) -> Result<()> {
    match prop.iter().position(|p| !(*p > 0.0) || !p.is_finite()) {
        Some(index) => Err(DolceError::InvalidPropensity { index, value: prop[index] }),
        None => Ok(()),
    }
}

/// `pi(A_i | X_i)` from a full table.
pub fn logged_probs(pi: &ActionTable, actions: &[usize]) -> Vec<f64> {
    actions.iter().enumerate().map(|(i, &a)| pi.get(i, a)).collect()
}

/// `mean_i sum_a pi(a|X_i) q(X_i, a)`.
pub fn dm_from_parts(pi: &ActionTable, q_hat: &ActionTable, level: f64) -> Result<EstimateReport> {
    if pi.rows() != q_hat.rows() || pi.cols() != q_hat.cols() {
        return invalid("policy and reward tables differ in shape");
    }
    let psi: Vec<f64> = (0..pi.rows())
        .map(|i| pi.row(i).iter().zip(q_hat.row(i)).map(|(p, q)| p * q).sum())
        .collect();
    EstimateReport::from_psi("DM", mean(&psi), psi, level, None)
}

/// `mean_i w_i R_i` with `w_i = pi(A_i|X_i) / prop_i`.
pub fn ips_from_parts(pi_logged: &[f64], prop: &[f64], rewards: &[f64], level: f64) -> Result<EstimateReport> {
    if pi_logged.len() != prop.len() || prop.len() != rewards.len() {
        return invalid("inputs differ in length");
    }
    check_propensities(prop)?;
    let w: Vec<f64> = pi_logged.iter().zip(prop).map(|(p, q)| p / q).collect();
    let psi: Vec<f64> = w.iter().zip(rewards).map(|(w, r)| w * r).collect();
    EstimateReport::from_psi("IPS", mean(&psi), psi, level, Some(ess(&w)?))
}

/// `w_i (R_i - q(X_i, A_i)) + sum_a pi(a|X_i) q(X_i, a)` for given weights.
fn weighted_residual_psi(pi: &ActionTable, actions: &[usize], rewards: &[f64], w: &[f64], q_hat: &ActionTable) -> Vec<f64> {
    (0..actions.len())
        .map(|i| {
            let a = actions[i];
            let model: f64 = pi.row(i).iter().zip(q_hat.row(i)).map(|(p, q)| p * q).sum();
            w[i] * (rewards[i] - q_hat.get(i, a)) + model
        })
        .collect()
}

pub fn dr_from_parts(
    pi: &ActionTable,
    actions: &[usize],
    rewards: &[f64],
    prop: &[f64],
    q_hat: &ActionTable,
    level: f64,
) -> Result<EstimateReport> {
    check_shapes(pi, actions, rewards)?;
    if prop.len() != actions.len() {
        return invalid("propensities differ in length");
    }
    check_propensities(prop)?;
    let w: Vec<f64> = (0..actions.len()).map(|i| pi.get(i, actions[i]) / prop[i]).collect();
    let psi = weighted_residual_psi(pi, actions, rewards, &w, q_hat);
    EstimateReport::from_psi("DR", mean(&psi), psi, level, Some(ess(&w)?))
}

/// Lag-k estimator with lag weights `w` at the logged actions and the lag-k
/// reward model `q_hat`.
pub fn dolce_lag_from_parts(
    pi: &ActionTable,
    actions: &[usize],
    rewards: &[f64],
    w: &[f64],
    q_hat: &ActionTable,
    level: f64,
) -> Result<EstimateReport> {
    check_shapes(pi, actions, rewards)?;
    if w.len() != actions.len() || q_hat.rows() != actions.len() {
        return invalid("weights or reward table differ in length");
    }
    if let Some(i) = w.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
        return invalid(format!("lag weight at row {i} is negative or not finite"));
    }
    let psi = weighted_residual_psi(pi, actions, rewards, w, q_hat);
    let ess = ess(w).ok();
    let mut r = EstimateReport::from_psi("DOLCE", mean(&psi), psi, level, ess)?;
    r.per_lag_values = vec![r.value];
    r.lag_weights_alpha = vec![1.0];
    Ok(r)
}

/// Convex combination of per-lag reports with fixed `alpha`. Contributions
/// combine with the same weights; the interval treats `alpha` as constant.
pub fn aggregate_lags(per_lag: &[EstimateReport], lag_weights: &[&[f64]], alpha: &[f64], level: f64) -> Result<EstimateReport> {
    if per_lag.is_empty() || per_lag.len() != alpha.len() || lag_weights.len() != alpha.len() {
        return invalid("need one report, weight vector and alpha per lag");
    }
    let n = per_lag[0].psi.len();
    if per_lag.iter().any(|r| r.psi.len() != n) || lag_weights.iter().any(|w| w.len() != n) {
        return invalid("per-lag contributions differ in length");
    }
    let value: f64 = per_lag.iter().zip(alpha).map(|(r, a)| a * r.value).sum();
    let psi: Vec<f64> = (0..n).map(|i| per_lag.iter().zip(alpha).map(|(r, a)| a * r.psi[i]).sum()).collect();
    let w: Vec<f64> = (0..n).map(|i| lag_weights.iter().zip(alpha).map(|(w, a)| a * w[i]).sum()).collect();
    let mut r = EstimateReport::from_psi("DOLCE", value, psi, level, ess(&w).ok())?;
    r.per_lag_values = per_lag.iter().map(|r| r.value).collect();
    r.lag_weights_alpha = alpha.to_vec();
    Ok(r)
}

/// Where IPS and DR take `pi0(A_i | X_i)` from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropensitySource {
    /// Logged values when the dataset has them, otherwise fitted.
    #[default]
    Auto,
    Logged,
    /// Cross-fitted multinomial logit on the current context.
    Fitted,
}

/// Propensities of the logged actions according to `source`.
pub fn baseline_propensities(
    data: &LaggedDataset,
    source: PropensitySource,
    folds: &FoldAssignment,
    reg: f64,
    p_min: f64,
) -> Result<Vec<f64>> {
    let logged = data.propensities();
    let prop = match (source, logged) {
        (PropensitySource::Logged, None) => return invalid("dataset has no propensity column"),
        (PropensitySource::Logged | PropensitySource::Auto, Some(p)) => p,
        (PropensitySource::Fitted | PropensitySource::Auto, _) => {
            let z = FeatureSpec::baseline_default().matrix(data, None)?;
            let actions = data.actions();
            let mut out = vec![0.0; data.len()];
            for j in 0..folds.num_folds() {
                let m = fit_logit(&z, &folds.train_indices(j), &actions, data.num_actions(), reg, p_min)?;
                for i in folds.test_indices(j) {
                    out[i] = m.predict(z.row(i))[actions[i]];
                }
            }
            out
        }
    };
    check_propensities(&prop)?;
    Ok(prop)
}

pub fn dm_estimate(data: &LaggedDataset, policy: &Policy, reward: &RewardModel, level: f64) -> Result<EstimateReport> {
    dm_from_parts(&policy_table(data, policy)?, &reward.oof, level)
}

pub fn ips_estimate(data: &LaggedDataset, policy: &Policy, prop: &[f64], level: f64) -> Result<EstimateReport> {
    let pi = policy_table(data, policy)?;
    ips_from_parts(&logged_probs(&pi, &data.actions()), prop, &data.rewards(), level)
}

pub fn dr_estimate(
    data: &LaggedDataset,
    policy: &Policy,
    reward: &RewardModel,
    prop: &[f64],
    level: f64,
) -> Result<EstimateReport> {
    let pi = policy_table(data, policy)?;
    dr_from_parts(&pi, &data.actions(), &data.rewards(), prop, &reward.oof, level)
}

pub fn dolce_lag_estimate(data: &LaggedDataset, ns: &NuisanceSet, k: usize, level: f64) -> Result<EstimateReport> {
    data.check_lag(k)?;
    let l = ns.lag(k)?;
    dolce_lag_from_parts(&ns.pi, &data.actions(), &data.rewards(), &l.weights, &l.reward.oof, level)
}

/// Softmin aggregate over every fitted lag.
pub fn dolce_estimate(data: &LaggedDataset, ns: &NuisanceSet, tau: f64, level: f64) -> Result<EstimateReport> {
    let per_lag = ns
        .lags
        .iter()
        .map(|l| dolce_lag_estimate(data, ns, l.lag, level))
        .collect::<Result<Vec<_>>>()?;
    let alpha = softmin_weights(&ns.alcs(), tau)?;
    let w: Vec<&[f64]> = ns.lags.iter().map(|l| l.weights.as_slice()).collect();
    aggregate_lags(&per_lag, &w, &alpha, level)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EstimatorKind {
    #[serde(rename = "DM")]
    Dm,
    #[serde(rename = "IPS")]
    Ips,
    #[serde(rename = "DR")]
    Dr,
    #[serde(rename = "DOLCE")]
    Dolce,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [Self::Dm, Self::Ips, Self::Dr, Self::Dolce];

    pub fn name(self) -> &'static str {
        match self {
            Self::Dm => "DM",
            Self::Ips => "IPS",
            Self::Dr => "DR",
            Self::Dolce => "DOLCE",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "DM" => Ok(Self::Dm),
            "IPS" => Ok(Self::Ips),
            "DR" => Ok(Self::Dr),
            "DOLCE" => Ok(Self::Dolce),
            _ => Err(DolceError::InvalidConfig(format!("unknown estimator `{s}` (expected DM, IPS, DR or DOLCE)"))),
        }
    }
}

/// Everything fitted for one evaluation run.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub reports: Vec<EstimateReport>,
    /// Present when DOLCE was requested.
    pub nuisances: Option<NuisanceSet>,
}

/// Fits what `kinds` need on shared folds drawn from `seed` and returns the
/// reports in the order of `kinds`.
pub fn evaluate(
    data: &LaggedDataset,
    policy: &Policy,
    kinds: &[EstimatorKind],
    cfg: &NuisanceConfig,
    source: PropensitySource,
    seed: u64,
) -> Result<Evaluation> {
    cfg.validate()?;
    let folds = kfold_split(data.len(), cfg.k_cf, seed)?;
    let pi = policy_table(data, policy)?;
    let actions = data.actions();
    let rewards = data.rewards();
    let needs_q = kinds.iter().any(|k| matches!(k, EstimatorKind::Dm | EstimatorKind::Dr));
    let needs_prop = kinds.iter().any(|k| matches!(k, EstimatorKind::Ips | EstimatorKind::Dr));
    let baseline = if needs_q { Some(fit_reward_model_plain(data, None, &folds, &cfg.baseline_reward)?) } else { None };
    let prop = if needs_prop { Some(baseline_propensities(data, source, &folds, cfg.reg, cfg.p_min)?) } else { None };
    let nuisances =
        if kinds.contains(&EstimatorKind::Dolce) { Some(fit_nuisances_with(data, &pi, &folds, cfg)?) } else { None };
    let mut reports = Vec::with_capacity(kinds.len());
    for k in kinds {
        let r = match k {
            EstimatorKind::Dm => dm_from_parts(&pi, &baseline.as_ref().expect("fitted").oof, cfg.level)?,
            EstimatorKind::Ips => {
                ips_from_parts(&logged_probs(&pi, &actions), prop.as_ref().expect("fitted"), &rewards, cfg.level)?
            }
            EstimatorKind::Dr => dr_from_parts(
                &pi,
                &actions,
                &rewards,
                prop.as_ref().expect("fitted"),
                &baseline.as_ref().expect("fitted").oof,
                cfg.level,
            )?,
            EstimatorKind::Dolce => dolce_estimate(data, nuisances.as_ref().expect("fitted"), cfg.tau, cfg.level)?,
        };
        reports.push(r);
    }
    Ok(Evaluation { reports, nuisances })
}
