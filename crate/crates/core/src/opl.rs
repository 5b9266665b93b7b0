//! Policy-gradient estimators and gradient-ascent training of linear-softmax
//! policies from logged data.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::LaggedDataset;
use crate::error::{invalid, DolceError, Result};
use crate::estimators::{baseline_propensities, softmin_weights, PropensitySource};
use crate::nuisance::features::FeatureSpec;
use crate::nuisance::folds::{kfold_split, FoldAssignment};
use crate::nuisance::logit::floor_simplex;
use crate::nuisance::reward::fit_reward_model_plain;
use crate::nuisance::ridge::{CrossFitRidge, MultiRidge};
use crate::nuisance::set::{fit_lag_propensity, fit_lag_reward, NuisanceConfig};
use crate::nuisance::alc::estimate_alc;
use crate::policy::{score_into, LinearSoftmax, Policy};
use crate::rng::rng_from_seed;
use crate::synth::{oracle_best_value, TestSet};
use crate::table::{ActionTable, RowMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GradientEstimator {
    #[serde(rename = "IPS")]
    Ips,
    #[serde(rename = "DR")]
    Dr,
    #[serde(rename = "DOLCE")]
    Dolce,
}

impl GradientEstimator {
    pub const ALL: [GradientEstimator; 3] = [Self::Ips, Self::Dr, Self::Dolce];

    pub fn name(self) -> &'static str {
        match self {
            Self::Ips => "IPS",
            Self::Dr => "DR",
            Self::Dolce => "DOLCE",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "IPS" => Ok(Self::Ips),
            "DR" => Ok(Self::Dr),
            "DOLCE" => Ok(Self::Dolce),
            _ => Err(DolceError::InvalidConfig(format!("unknown gradient estimator `{s}` (expected IPS, DR or DOLCE)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub step_size: f64,
    /// Uniform mixing weight of the synthetic logging policy.
    pub exploration_floor: f64,
    pub init_seed: u64,
    /// Standard deviation of the Gaussian initial parameters.
    pub init_scale: f64,
    pub estimator: GradientEstimator,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            step_size: 0.05,
            exploration_floor: 0.05,
            init_seed: 0,
            init_scale: 0.1,
            estimator: GradientEstimator::Dolce,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(DolceError::InvalidConfig("steps must be at least 1".into()));
        }
        if !(self.step_size >= 0.0) || !self.step_size.is_finite() {
            return Err(DolceError::InvalidConfig("step_size must be finite and non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.exploration_floor) {
            return Err(DolceError::InvalidConfig("exploration_floor must lie in [0, 1)".into()));
        }
        if !(self.init_scale >= 0.0) {
            return Err(DolceError::InvalidConfig("init_scale must be non-negative".into()));
        }
        Ok(())
    }
}

/// Initial policy with i.i.d. `N(0, scale^2)` parameters drawn from `seed`.
pub fn init_theta(num_actions: usize, dim: usize, seed: u64, scale: f64) -> LinearSoftmax {
    let mut rng = rng_from_seed(seed);
    let theta = (0..num_actions * (dim + 1)).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
    LinearSoftmax::new(num_actions, dim, theta).expect("shape is consistent")
}

fn check_policy(data: &LaggedDataset, policy: &LinearSoftmax) -> Result<()> {
    if policy.num_actions() != data.num_actions() || policy.dim() != data.dim() {
        return invalid(format!(
            "policy shape {}x{} does not match data with {} actions and dimension {}",
            policy.num_actions(),
            policy.dim(),
            data.num_actions(),
            data.dim()
        ));
    }
    Ok(())
}

fn check_props(prop: &[f64], n: usize) -> Result<()> {
    if prop.len() != n {
        return invalid("propensities differ in length from the data");
    }
    match prop.iter().position(|p| !(*p > 0.0) || !p.is_finite()) {
        Some(index) => Err(DolceError::InvalidPropensity { index, value: prop[index] }),
        None => Ok(()),
    }
}

/// Column means of a contribution matrix.
pub fn column_means(c: &RowMatrix) -> Vec<f64> {
    let mut out = vec![0.0; c.cols()];
    for i in 0..c.rows() {
        for (o, v) in out.iter_mut().zip(c.row(i)) {
            *o += v;
        }
    }
    let n = c.rows() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    out
}

/// Per-sample IPS gradient contributions `w_i R_i s(A_i|X_i)`.
pub fn grad_ips_contributions(data: &LaggedDataset, policy: &LinearSoftmax, prop: &[f64]) -> Result<RowMatrix> {
    check_policy(data, policy)?;
    check_props(prop, data.len())?;
    let np = policy.num_params();
    let mut out = RowMatrix::zeros(data.len(), np);
    let mut probs = vec![0.0; policy.num_actions()];
    let mut s = vec![0.0; np];
    for (i, smp) in data.samples().iter().enumerate() {
        policy.probs_into(&smp.x, &mut probs);
        score_into(&probs, &smp.x, smp.action, &mut s);
        let wr = probs[smp.action] / prop[i] * smp.reward;
        for (o, sj) in out.row_mut(i).iter_mut().zip(&s) {
            *o = wr * sj;
        }
    }
    Ok(out)
}

pub fn grad_ips(data: &LaggedDataset, policy: &LinearSoftmax, prop: &[f64]) -> Result<Vec<f64>> {
    Ok(column_means(&grad_ips_contributions(data, policy, prop)?))
}

/// Adds `sum_a pi(a|x) q(a) s(a|x)` to `out`.
fn add_model_term(probs: &[f64], x: &[f64], q: &[f64], s: &mut [f64], out: &mut [f64]) {
    for (a, (&pa, &qa)) in probs.iter().zip(q).enumerate() {
        let c = pa * qa;
        score_into(probs, x, a, s);
        for (o, sj) in out.iter_mut().zip(s.iter()) {
            *o += c * sj;
        }
    }
}

/// Per-sample DR gradient contributions
/// `w_i (R_i - q(X_i, A_i)) s(A_i|X_i) + sum_a pi(a|X_i) q(X_i, a) s(a|X_i)`.
pub fn grad_dr_contributions(
    data: &LaggedDataset,
    policy: &LinearSoftmax,
    q_hat: &ActionTable,
    prop: &[f64],
) -> Result<RowMatrix> {
    check_policy(data, policy)?;
    check_props(prop, data.len())?;
    if q_hat.rows() != data.len() || q_hat.cols() != data.num_actions() {
        return invalid("reward table does not match the data");
    }
    let np = policy.num_params();
    let mut out = RowMatrix::zeros(data.len(), np);
    let mut probs = vec![0.0; policy.num_actions()];
    let mut s = vec![0.0; np];
    for (i, smp) in data.samples().iter().enumerate() {
        policy.probs_into(&smp.x, &mut probs);
        score_into(&probs, &smp.x, smp.action, &mut s);
        let wr = probs[smp.action] / prop[i] * (smp.reward - q_hat.get(i, smp.action));
        let row = out.row_mut(i);
        for (o, sj) in row.iter_mut().zip(&s) {
            *o = wr * sj;
        }
        add_model_term(&probs, &smp.x, q_hat.row(i), &mut s, row);
    }
    Ok(out)
}

pub fn grad_dr(data: &LaggedDataset, policy: &LinearSoftmax, q_hat: &ActionTable, prop: &[f64]) -> Result<Vec<f64>> {
    Ok(column_means(&grad_dr_contributions(data, policy, q_hat, prop)?))
}

/// Regressions on the lag context of `pi(a|X)` and of `pi(a|X) s(a|X)`.
#[derive(Clone, Debug)]
pub struct LagScoreModels {
    pub lag: usize,
    pub num_actions: usize,
    pub num_params: usize,
    pub p_min: f64,
    /// Per fold; targets are `A` marginal columns then `A * num_params`
    /// score-moment columns, action-major.
    pub models: Vec<MultiRidge>,
    /// Out-of-fold `bar_pi_theta(a | x_lag)`, floored.
    pub bar_pi: ActionTable,
    /// Out-of-fold `bar_s(A_i | x_lag_i)` at the logged action.
    pub bar_score_logged: RowMatrix,
}

impl LagScoreModels {
    /// `(bar_pi, bar_s(a|x_lag) for every a)` from the fold-`j` models.
    pub fn predict(&self, j: usize, x_lag: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let raw = self.models[j].predict(x_lag);
        let mut bar_pi = raw[..self.num_actions].to_vec();
        floor_simplex(&mut bar_pi, self.p_min);
        let np = self.num_params;
        let bar_s = (0..self.num_actions)
            .map(|a| {
                let off = self.num_actions + a * np;
                raw[off..off + np].iter().map(|m| m / bar_pi[a]).collect()
            })
            .collect();
        (bar_pi, bar_s)
    }
}

/// Regression targets `[pi(.|X_i), pi(a|X_i) s(a|X_i) for each a]`.
fn score_targets(data: &LaggedDataset, policy: &LinearSoftmax) -> RowMatrix {
    let na = policy.num_actions();
    let np = policy.num_params();
    let mut y = RowMatrix::zeros(data.len(), na + na * np);
    let mut probs = vec![0.0; na];
    let mut s = vec![0.0; np];
    for (i, smp) in data.samples().iter().enumerate() {
        policy.probs_into(&smp.x, &mut probs);
        let row = y.row_mut(i);
        row[..na].copy_from_slice(&probs);
        for a in 0..na {
            score_into(&probs, &smp.x, a, &mut s);
            let blk = &mut row[na + a * np..na + (a + 1) * np];
            for (o, sj) in blk.iter_mut().zip(&s) {
                *o = probs[a] * sj;
            }
        }
    }
    y
}

/// Fits the lag score models against a cached lag-feature design.
pub fn fit_lag_score_marginal_cached(
    data: &LaggedDataset,
    policy: &LinearSoftmax,
    lag: usize,
    cf: &CrossFitRidge,
    p_min: f64,
) -> Result<LagScoreModels> {
    check_policy(data, policy)?;
    let na = policy.num_actions();
    let np = policy.num_params();
    let y = score_targets(data, policy);
    let models = cf.fit(&y);
    let folds = cf.folds();
    let z = cf.design();
    let mut bar_pi = ActionTable::zeros(data.len(), na);
    let mut bar_score_logged = RowMatrix::zeros(data.len(), np);
    for (i, smp) in data.samples().iter().enumerate() {
        let m = &models[folds.fold_of(i)];
        let zi = z.row(i);
        let bp = bar_pi.row_mut(i);
        for (a, o) in bp.iter_mut().enumerate() {
            let col = m.coef.column(a);
            *o = col[0] + zi.iter().enumerate().map(|(j, v)| col[j + 1] * v).sum::<f64>();
        }
        floor_simplex(bp, p_min);
        let denom = bp[smp.action];
        let off = na + smp.action * np;
        for (t, o) in bar_score_logged.row_mut(i).iter_mut().enumerate() {
            let col = m.coef.column(off + t);
            *o = (col[0] + zi.iter().enumerate().map(|(j, v)| col[j + 1] * v).sum::<f64>()) / denom;
        }
    }
    Ok(LagScoreModels { lag, num_actions: na, num_params: np, p_min, models, bar_pi, bar_score_logged })
}

pub fn fit_lag_score_marginal(
    data: &LaggedDataset,
    policy: &LinearSoftmax,
    lag: usize,
    folds: &FoldAssignment,
    reg: f64,
    p_min: f64,
) -> Result<LagScoreModels> {
    let z = FeatureSpec::lag_only().matrix(data, Some(lag))?;
    let cf = CrossFitRidge::new(z, folds.clone(), reg)?;
    fit_lag_score_marginal_cached(data, policy, lag, &cf, p_min)
}

/// Per-sample lag-k gradient contributions
/// `w_i (R_i - q_k) bar_s(A_i | X_i^(k)) + sum_a pi(a|X_i) q_k(a) s(a|X_i)`,
/// with `w_i` and `bar_s` evaluated at the logged action.
pub fn grad_dolce_from_parts(
    data: &LaggedDataset,
    policy: &LinearSoftmax,
    weights: &[f64],
    bar_score_logged: &RowMatrix,
    q_hat: &ActionTable,
) -> Result<RowMatrix> {
    check_policy(data, policy)?;
    let np = policy.num_params();
    if weights.len() != data.len() || bar_score_logged.rows() != data.len() || bar_score_logged.cols() != np {
        return invalid("lag weights or lag scores do not match the data");
    }
    if q_hat.rows() != data.len() || q_hat.cols() != data.num_actions() {
        return invalid("reward table does not match the data");
    }
    let mut out = RowMatrix::zeros(data.len(), np);
    let mut probs = vec![0.0; policy.num_actions()];
    let mut s = vec![0.0; np];
    for (i, smp) in data.samples().iter().enumerate() {
        policy.probs_into(&smp.x, &mut probs);
        let wr = weights[i] * (smp.reward - q_hat.get(i, smp.action));
        let row = out.row_mut(i);
        for (o, sj) in row.iter_mut().zip(bar_score_logged.row(i)) {
            *o = wr * sj;
        }
        add_model_term(&probs, &smp.x, q_hat.row(i), &mut s, row);
    }
    Ok(out)
}

/// Clipped lag weights from the current target marginal and the logging marginal.
pub fn lag_weights(actions: &[usize], bar_pi_theta: &ActionTable, bar_pi0: &ActionTable, clip: f64) -> Vec<f64> {
    crate::nuisance::set::weights_from_tables(actions, bar_pi_theta, bar_pi0, clip)
}

/// Lag-specific pieces that do not depend on the policy parameters.
#[derive(Clone, Debug)]
pub struct FixedLagNuisance {
    pub lag: usize,
    pub bar_pi0: ActionTable,
    pub q_hat: ActionTable,
    pub alc: f64,
    pub design: CrossFitRidge,
}

/// Nuisances fitted once per dataset and shared by every estimator.
#[derive(Clone, Debug)]
pub struct OplNuisances {
    pub folds: FoldAssignment,
    pub prop: Vec<f64>,
    pub baseline_q: ActionTable,
    pub lags: Vec<FixedLagNuisance>,
    /// Softmin lag weights from the fixed reward models.
    pub alpha: Vec<f64>,
    pub clip: f64,
    pub p_min: f64,
}

impl OplNuisances {
    pub fn fit(
        data: &LaggedDataset,
        cfg: &NuisanceConfig,
        source: PropensitySource,
        estimators: &[GradientEstimator],
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        let folds = kfold_split(data.len(), cfg.k_cf, seed)?;
        let needs_prop = estimators.iter().any(|e| matches!(e, GradientEstimator::Ips | GradientEstimator::Dr));
        let prop = if needs_prop { baseline_propensities(data, source, &folds, cfg.reg, cfg.p_min)? } else { Vec::new() };
        let baseline_q = if estimators.contains(&GradientEstimator::Dr) {
            fit_reward_model_plain(data, None, &folds, &cfg.baseline_reward)?.oof
        } else {
            ActionTable::zeros(0, 0)
        };
        let mut lags = Vec::new();
        if estimators.contains(&GradientEstimator::Dolce) {
            if data.num_lags() == 0 {
                return invalid("the lag-based gradient needs at least one lag block in the data");
            }
            for k in 0..data.num_lags() {
                let (_, bar_pi0) = fit_lag_propensity(data, k, &folds, cfg.reg, cfg.p_min)?;
                let reward = fit_lag_reward(data, k, &folds, cfg)?;
                let alc = estimate_alc(data, k, &folds, &reward.oof_logged(data), &cfg.alc)?;
                let z = FeatureSpec::lag_only().matrix(data, Some(k))?;
                let design = CrossFitRidge::new(z, folds.clone(), cfg.reg)?;
                lags.push(FixedLagNuisance { lag: k, bar_pi0, q_hat: reward.oof, alc, design });
            }
        }
        let alpha = if lags.is_empty() {
            Vec::new()
        } else {
            softmin_weights(&lags.iter().map(|l| l.alc).collect::<Vec<_>>(), cfg.tau)?
        };
        Ok(Self { folds, prop, baseline_q, lags, alpha, clip: cfg.clip, p_min: cfg.p_min })
    }

    /// Gradient estimate at `policy`, refitting the policy-dependent lag regressions.
    pub fn gradient(&self, data: &LaggedDataset, policy: &LinearSoftmax, estimator: GradientEstimator) -> Result<Vec<f64>> {
        match estimator {
            GradientEstimator::Ips => grad_ips(data, policy, &self.prop),
            GradientEstimator::Dr => grad_dr(data, policy, &self.baseline_q, &self.prop),
            GradientEstimator::Dolce => {
                if self.lags.is_empty() {
                    return invalid("lag nuisances were not fitted");
                }
                let actions = data.actions();
                let mut g = vec![0.0; policy.num_params()];
                for (l, &alpha) in self.lags.iter().zip(&self.alpha) {
                    let sm = fit_lag_score_marginal_cached(data, policy, l.lag, &l.design, self.p_min)?;
                    let w = lag_weights(&actions, &sm.bar_pi, &l.bar_pi0, self.clip);
                    let gk = column_means(&grad_dolce_from_parts(data, policy, &w, &sm.bar_score_logged, &l.q_hat)?);
                    for (o, v) in g.iter_mut().zip(&gk) {
                        *o += alpha * v;
                    }
                }
                Ok(g)
            }
        }
    }
}

/// Lag-k gradient with freshly fitted score models.
pub fn grad_dolce(data: &LaggedDataset, policy: &LinearSoftmax, nuis: &OplNuisances, k: usize) -> Result<Vec<f64>> {
    let l = nuis
        .lags
        .iter()
        .find(|l| l.lag == k)
        .ok_or_else(|| DolceError::InvalidInput(format!("no nuisances fitted for lag {k}")))?;
    let sm = fit_lag_score_marginal_cached(data, policy, k, &l.design, nuis.p_min)?;
    let w = lag_weights(&data.actions(), &sm.bar_pi, &l.bar_pi0, nuis.clip);
    Ok(column_means(&grad_dolce_from_parts(data, policy, &w, &sm.bar_score_logged, &l.q_hat)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub step: usize,
    pub grad_norm: f64,
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    pub policy: LinearSoftmax,
    /// `theta_0, ..., theta_steps`.
    pub thetas: Vec<Vec<f64>>,
    pub trajectory: Vec<TrajectoryStep>,
    /// `g(theta_0)`, used for the one-step improvement.
    pub first_gradient: Vec<f64>,
}

/// Runs `steps` ascent updates `theta += step_size * g(theta)` from `theta0`.
pub fn train_with(
    data: &LaggedDataset,
    nuis: &OplNuisances,
    cfg: &TrainConfig,
    theta0: &LinearSoftmax,
) -> Result<TrainResult> {
    cfg.validate()?;
    let mut policy = theta0.clone();
    let mut thetas = vec![policy.theta().to_vec()];
    let mut trajectory = Vec::with_capacity(cfg.steps);
    let mut first_gradient = Vec::new();
    for step in 0..cfg.steps {
        let g = nuis.gradient(data, &policy, cfg.estimator)?;
        if let Some(j) = g.iter().position(|v| !v.is_finite()) {
            return Err(DolceError::Numeric(format!(
                "{} gradient coordinate {j} is not finite at step {step}",
                cfg.estimator.name()
            )));
        }
        let grad_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        trajectory.push(TrajectoryStep { step, grad_norm });
        if step == 0 {
            first_gradient = g.clone();
        }
        let next: Vec<f64> = policy.theta().iter().zip(&g).map(|(t, v)| t + cfg.step_size * v).collect();
        policy = policy.with_theta(next)?;
        thetas.push(policy.theta().to_vec());
    }
    Ok(TrainResult { policy, thetas, trajectory, first_gradient })
}

/// Fits the nuisances with folds from `seed` and trains from the
/// initialization drawn from `cfg.init_seed`.
pub fn train_policy(
    data: &LaggedDataset,
    cfg: &TrainConfig,
    ncfg: &NuisanceConfig,
    source: PropensitySource,
    seed: u64,
) -> Result<TrainResult> {
    let nuis = OplNuisances::fit(data, ncfg, source, &[cfg.estimator], seed)?;
    let theta0 = init_theta(data.num_actions(), data.dim(), cfg.init_seed, cfg.init_scale);
    train_with(data, &nuis, cfg, &theta0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OplMetrics {
    /// Missing when the oracle value equals the logging value.
    pub ni: Option<f64>,
    pub osi: f64,
    pub regret: f64,
}

/// Normalized improvement, one-step improvement and regret on a test set
/// with known mean rewards. `logging_value` is the exact value of the
/// logging policy on the same contexts.
pub fn opl_metrics(
    test: &TestSet,
    learned: &LinearSoftmax,
    logging_value: f64,
    theta0: &LinearSoftmax,
    first_gradient: &[f64],
    step_size: f64,
) -> Result<OplMetrics> {
    let v_star = oracle_best_value(test);
    let v_hat = test.value(&Policy::LinearSoftmax(learned.clone()))?;
    let stepped: Vec<f64> = theta0.theta().iter().zip(first_gradient).map(|(t, g)| t + step_size * g).collect();
    let v1 = test.value(&Policy::LinearSoftmax(theta0.with_theta(stepped)?))?;
    let v0 = test.value(&Policy::LinearSoftmax(theta0.clone()))?;
    let gap = v_star - logging_value;
    let ni = if gap.abs() > 1e-12 { Some((v_hat - logging_value) / gap) } else { None };
    Ok(OplMetrics { ni, osi: v1 - v0, regret: v_star - v_hat })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LaggedSample;

    fn toy(n: usize, seed: u64) -> LaggedDataset {
        let mut rng = rng_from_seed(seed);
        let samples = (0..n)
            .map(|_| {
                let x0: f64 = rng.random();
                let x1: f64 = rng.random();
                let a = rng.random_range(0..2);
                LaggedSample {
                    x: vec![x0, x1],
                    x_lags: vec![vec![x0 + 0.1 * x1, x1]],
                    action: a,
                    reward: x0 * a as f64 + 0.1 * rng.random::<f64>(),
                    propensity: Some(0.5),
                }
            })
            .collect();
        LaggedDataset::new(samples, 2, vec!["1".into()]).unwrap()
    }

    #[test]
    fn zero_reward_gives_zero_gradient() {
        let data = toy(50, 1);
        let zeroed = LaggedDataset::new(
            data.samples().iter().map(|s| LaggedSample { reward: 0.0, ..s.clone() }).collect(),
            2,
            vec!["1".into()],
        )
        .unwrap();
        let g = grad_ips(&zeroed, &init_theta(2, 2, 3, 0.1), &[0.5; 50]).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn uniform_two_action_ips_matches_composition() {
        let data = toy(40, 2);
        let pol = LinearSoftmax::zeros(2, 2);
        let g = grad_ips(&data, &pol, &[0.5; 40]).unwrap();
        let mut expect = vec![0.0; pol.num_params()];
        for s in data.samples() {
            let sc = Policy::LinearSoftmax(pol.clone()).score(&s.x, s.action).unwrap();
            for (e, v) in expect.iter_mut().zip(sc) {
                *e += s.reward * v / 40.0;
            }
        }
        for (a, b) in g.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn dr_reductions() {
        let data = toy(60, 3);
        let pol = init_theta(2, 2, 9, 0.5);
        let prop = vec![0.5; 60];
        let ips = grad_ips(&data, &pol, &prop).unwrap();
        assert_eq!(grad_dr(&data, &pol, &ActionTable::zeros(60, 2), &prop).unwrap(), ips);
        // A constant model drops out of the second term.
        let c = 0.4;
        let dr = grad_dr(&data, &pol, &ActionTable::filled(60, 2, c), &prop).unwrap();
        let shifted = LaggedDataset::new(
            data.samples().iter().map(|s| LaggedSample { reward: s.reward - c, ..s.clone() }).collect(),
            2,
            vec!["1".into()],
        )
        .unwrap();
        let ips_res = grad_ips(&shifted, &pol, &prop).unwrap();
        for (a, b) in dr.iter().zip(&ips_res) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn dolce_gradient_reductions() {
        let data = toy(30, 4);
        let pol = init_theta(2, 2, 1, 0.3);
        let np = pol.num_params();
        let q = ActionTable::from_fn(30, 2, |i, a| 0.1 * (i as f64) - a as f64);
        let bar_s = RowMatrix::from_fn(30, np, |i, j| (i * np + j) as f64 * 1e-2);
        let model_only = column_means(&grad_dolce_from_parts(&data, &pol, &[0.0; 30], &bar_s, &q).unwrap());
        let dr_model = grad_dr(&data, &pol, &q, &[f64::INFINITY; 30]);
        assert!(dr_model.is_err());
        let mut expect = vec![0.0; np];
        let mut s = vec![0.0; np];
        for (i, smp) in data.samples().iter().enumerate() {
            let p = pol.probs(&smp.x).unwrap();
            let mut row = vec![0.0; np];
            add_model_term(&p, &smp.x, q.row(i), &mut s, &mut row);
            for (e, v) in expect.iter_mut().zip(row) {
                *e += v / 30.0;
            }
        }
        for (a, b) in model_only.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-14);
        }
        let pure = column_means(&grad_dolce_from_parts(&data, &pol, &[1.0; 30], &bar_s, &ActionTable::zeros(30, 2)).unwrap());
        for (j, v) in pure.iter().enumerate() {
            let e: f64 = data.samples().iter().enumerate().map(|(i, s)| s.reward * bar_s.get(i, j)).sum::<f64>() / 30.0;
            assert!((v - e).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_policy_score_marginal_is_constant() {
        let data = toy(400, 5);
        let pol = LinearSoftmax::zeros(2, 2);
        let folds = kfold_split(400, 2, 0).unwrap();
        let sm = fit_lag_score_marginal(&data, &pol, 0, &folds, 1e-2, 1e-3).unwrap();
        let p = pol.num_params() / 2;
        for j in 0..2 {
            let (bar_pi, bar_s) = sm.predict(j, &[0.3, 0.6]);
            for a in 0..2 {
                assert!((bar_pi[a] - 0.5).abs() < 1e-3);
                for b in 0..2 {
                    // Intercept block (b, last) of pi(a) s(a): (1/A)(1{a=b} - 1/A).
                    let target = 0.5 * (if a == b { 1.0 } else { 0.0 } - 0.5);
                    assert!((bar_s[a][b * p + p - 1] * bar_pi[a] - target).abs() < 1e-3);
                }
            }
        }
    }

    #[test]
    fn deterministic_lag_recovers_current_score() {
        let mut rng = rng_from_seed(7);
        let samples: Vec<LaggedSample> = (0..4000)
            .map(|_| {
                let x: f64 = rng.random();
                LaggedSample { x: vec![x], x_lags: vec![vec![x]], action: rng.random_range(0..2), reward: 0.0, propensity: None }
            })
            .collect();
        let data = LaggedDataset::new(samples, 2, vec!["1".into()]).unwrap();
        let pol = LinearSoftmax::new(2, 1, vec![0.3, 0.0, -0.2, 0.1]).unwrap();
        let folds = kfold_split(4000, 2, 1).unwrap();
        let sm = fit_lag_score_marginal(&data, &pol, 0, &folds, 1e-6, 1e-3).unwrap();
        for x in [0.2, 0.5, 0.8] {
            let (_, bar_s) = sm.predict(0, &[x]);
            for a in 0..2 {
                let s = pol.score(&[x], a).unwrap();
                for (u, v) in bar_s[a].iter().zip(&s) {
                    assert!((u - v).abs() < 0.01, "{u} vs {v}");
                }
            }
        }
    }

    #[test]
    fn steps_and_step_size() {
        let data = toy(200, 6);
        let ncfg = NuisanceConfig { k_cf: 2, ..Default::default() };
        let nuis = OplNuisances::fit(&data, &ncfg, PropensitySource::Logged, &GradientEstimator::ALL, 0).unwrap();
        let theta0 = init_theta(2, 2, 11, 0.1);
        for est in GradientEstimator::ALL {
            let one = TrainConfig { steps: 1, step_size: 0.3, estimator: est, ..Default::default() };
            let r = train_with(&data, &nuis, &one, &theta0).unwrap();
            let g = nuis.gradient(&data, &theta0, est).unwrap();
            let expect: Vec<f64> = theta0.theta().iter().zip(&g).map(|(t, v)| t + 0.3 * v).collect();
            assert_eq!(r.policy.theta(), expect.as_slice());
            assert_eq!(r.thetas.len(), 2);
            let frozen = TrainConfig { steps: 5, step_size: 0.0, estimator: est, ..Default::default() };
            let r = train_with(&data, &nuis, &frozen, &theta0).unwrap();
            assert_eq!(r.policy.theta(), theta0.theta());
        }
        let bad = TrainConfig { steps: 0, ..Default::default() };
        assert!(train_with(&data, &nuis, &bad, &theta0).is_err());
    }
}
