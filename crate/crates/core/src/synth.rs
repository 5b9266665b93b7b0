//! Synthetic benchmark with injected current-context support violations.
//!
//! Lag context `X1 ~ N(0, I)`, current context `X = rho X1 + 3 N(0, I)` with
//! coordinate 0 replaced by an independent `3 N(0, 1)` draw. Rewards mix a
//! current-context effect `g(X, a)`, a lag effect `h(X1, a)` and an interaction
//! `u(X, X1, a)`. The logging policy forces action 0 whenever `X_0` lies in the
//! top `r` fraction of the sample.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::{LaggedDataset, LaggedSample};
use crate::error::{invalid, Result};
use crate::policy::{eps_greedy_probs, ActionScorer, Policy};
use crate::rng::{mix_seed, rng_from_seed, DolceRng};
use crate::table::ActionTable;

/// Threshold used by the piecewise-constant reward rules.
pub const THRESHOLD: f64 = 0.5;
/// Baseline contrast of action 0 per thresholded feature.
pub const BASE_CONTRAST: f64 = 0.2;
/// Count-effect shifts applied when at least two count features exceed the threshold.
pub const COUNT_SHIFT_ACTION0: f64 = -0.3;
pub const COUNT_SHIFT_OTHERS: f64 = 0.15;
/// Half-width of the uniform coefficient law.
pub const COEF_HALF_WIDTH: f64 = 0.5;

const MC_STREAM: u64 = 0x7472_7565_7661_6c75;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n: usize,
    pub d: usize,
    pub num_actions: usize,
    pub violation_ratio: f64,
    pub mix_lambda: f64,
    pub interaction_eta: f64,
    pub logging_beta: f64,
    pub rho: f64,
    pub target_epsilon: f64,
    /// Weight of the uniform component mixed into the logging softmax.
    pub exploration_floor: f64,
    pub env_seed: u64,
    pub data_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            d: 10,
            num_actions: 5,
            violation_ratio: 0.5,
            mix_lambda: 0.5,
            interaction_eta: 0.0,
            logging_beta: 0.3,
            rho: 1.0,
            target_epsilon: 0.1,
            exploration_floor: 0.0,
            env_seed: 1,
            data_seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return invalid("n must be positive");
        }
        if self.d < 4 {
            return invalid("d must be at least 4");
        }
        if self.num_actions == 0 {
            return invalid("num_actions must be positive");
        }
        if !(0.0..1.0).contains(&self.violation_ratio) {
            return invalid("violation_ratio must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.mix_lambda) {
            return invalid("mix_lambda must lie in [0, 1]");
        }
        if !(self.interaction_eta >= 0.0) || !(self.rho >= 0.0) || !self.logging_beta.is_finite() {
            return invalid("interaction_eta and rho must be nonnegative, logging_beta finite");
        }
        if !(0.0..=1.0).contains(&self.target_epsilon) {
            return invalid("target_epsilon must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.exploration_floor) {
            return invalid("exploration_floor must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Environment coefficients, fixed by `env_seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthEnv {
    pub d: usize,
    pub num_actions: usize,
    /// `A x (d-1)`; row 0 is unused because action 0 has the fixed contrast.
    pub g_coef: Vec<Vec<f64>>,
    pub h_coef: Vec<Vec<f64>>,
    /// `A x 3` interaction coefficients.
    pub u_coef: Vec<Vec<f64>>,
    /// Contrast of action 0 per thresholded feature.
    pub base_contrast: f64,
    /// Count-effect shifts for action 0 and for every other action.
    pub count_shift: (f64, f64),
}

pub fn make_env(config: &SynthConfig) -> Result<SynthEnv> {
    config.validate()?;
    let mut rng = rng_from_seed(config.env_seed);
    let unif = Uniform::new(-COEF_HALF_WIDTH, COEF_HALF_WIDTH).expect("valid range");
    let (a, d) = (config.num_actions, config.d);
    let mut draw = |cols: usize| -> Vec<Vec<f64>> {
        (0..a).map(|_| (0..cols).map(|_| unif.sample(&mut rng)).collect()).collect()
    };
    let g_coef = draw(d - 1);
    let h_coef = draw(d - 1);
    let u_coef = draw(3);
    Ok(SynthEnv {
        d,
        num_actions: a,
        g_coef,
        h_coef,
        u_coef,
        base_contrast: BASE_CONTRAST,
        count_shift: (COUNT_SHIFT_ACTION0, COUNT_SHIFT_OTHERS),
    })
}

impl SynthEnv {
    /// Piecewise-constant rule over coordinates `1..d` plus the count effect over `2..d`.
    fn threshold_rule(&self, z: &[f64], coef: &[Vec<f64>], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for j in 1..self.d {
            let above = z[j] > THRESHOLD;
            out[0] += if above { -self.base_contrast } else { self.base_contrast };
            for a in 1..self.num_actions {
                let c = coef[a][j - 1];
                out[a] += if above { c } else { -c };
            }
        }
        let count = z[2..self.d].iter().filter(|v| **v > THRESHOLD).count();
        if count >= 2 {
            out[0] += self.count_shift.0;
            for o in out[1..].iter_mut() {
                *o += self.count_shift.1;
            }
        }
    }

    /// Current-context effect `g(x, .)`.
    pub fn g(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_actions];
        self.threshold_rule(x, &self.g_coef, &mut out);
        out
    }

    /// Lag effect `h(x_lag, .)`.
    pub fn h(&self, x_lag: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_actions];
        self.threshold_rule(x_lag, &self.h_coef, &mut out);
        out
    }

    /// Interaction `u(x, x_lag, .)`.
    pub fn u(&self, x: &[f64], x_lag: &[f64]) -> Vec<f64> {
        let t = [x[1] * x_lag[1], x[2] * x_lag[2], (x[3] + x_lag[3]).sin()];
        self.u_coef.iter().map(|c| c[0] * t[0] + c[1] * t[1] + c[2] * t[2]).collect()
    }

    /// `q(x, x_lag, .)` for every action.
    pub fn q_all(&self, x: &[f64], x_lag: &[f64], lambda: f64, eta: f64) -> Vec<f64> {
        let g = self.g(x);
        let h = self.h(x_lag);
        let mut q: Vec<f64> = g.iter().zip(&h).map(|(g, h)| lambda * g + (1.0 - lambda) * h).collect();
        if eta != 0.0 {
            for (qa, ua) in q.iter_mut().zip(self.u(x, x_lag)) {
                *qa += eta * ua;
            }
        }
        q
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}

impl ActionScorer for SynthEnv {
    fn num_actions(&self) -> usize {
        self.num_actions
    }
    fn dim(&self) -> usize {
        self.d
    }
    fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.g(x)
    }
}

pub fn mean_reward(env: &SynthEnv, x: &[f64], x_lag: &[f64], a: usize, lambda: f64, eta: f64) -> f64 {
    env.q_all(x, x_lag, lambda, eta)[a]
}

/// Epsilon-greedy target policy on `g(x, .)`.
pub fn target_policy(env: &SynthEnv, epsilon: f64) -> Result<Policy> {
    Policy::eps_greedy(Arc::new(env.clone()), epsilon)
}

/// Threshold such that exactly `round(r n)` values strictly exceed it.
///
/// Returns `+inf` when that count is zero.
pub fn violation_threshold(x0: &[f64], r: f64) -> f64 {
    let m = (r * x0.len() as f64).round() as usize;
    if m == 0 {
        return f64::INFINITY;
    }
    let mut v = x0.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v[m.min(v.len() - 1)]
}

/// Logging probabilities: one-hot on action 0 in the violation region, otherwise
/// `softmax(beta g(x, .))` mixed with the uniform policy at weight `floor`.
pub fn logging_policy_probs(env: &SynthEnv, x: &[f64], beta: f64, c_r: f64, floor: f64) -> Vec<f64> {
    let a = env.num_actions;
    let mut p = vec![0.0; a];
    if x[0] > c_r {
        p[0] = 1.0;
        return p;
    }
    let g = env.g(x);
    let m = g.iter().map(|v| beta * v).fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (pa, ga) in p.iter_mut().zip(&g) {
        *pa = (beta * ga - m).exp();
        z += *pa;
    }
    for pa in p.iter_mut() {
        *pa = (1.0 - floor) * *pa / z + floor / a as f64;
    }
    p
}

/// Draws `n` (current, lag) context pairs.
pub fn sample_contexts(rng: &mut DolceRng, n: usize, d: usize, rho: f64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut x_lag = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    for _ in 0..n {
        let l: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let mut c: Vec<f64> = l.iter().map(|v| rho * v + 3.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        c[0] = 3.0 * rng.sample::<f64, _>(StandardNormal);
        x_lag.push(l);
        x.push(c);
    }
    (x, x_lag)
}

/// One generated dataset together with its ground-truth tables.
#[derive(Clone, Debug)]
pub struct SynthData {
    pub dataset: LaggedDataset,
    /// Mean rewards `q(X_i, X1_i, a)`.
    pub q: ActionTable,
    /// Logging probabilities `pi_0(a | X_i)`.
    pub logging: ActionTable,
    /// Violation threshold `c_r`.
    pub threshold: f64,
}

/// Draws a dataset using `config.data_seed`.
pub fn generate(config: &SynthConfig, env: &SynthEnv) -> Result<SynthData> {
    config.validate()?;
    let mut rng = rng_from_seed(config.data_seed);
    let (n, a) = (config.n, config.num_actions);
    let (x, x_lag) = sample_contexts(&mut rng, n, config.d, config.rho);
    let x0: Vec<f64> = x.iter().map(|v| v[0]).collect();
    let c_r = violation_threshold(&x0, config.violation_ratio);
    let mut q = ActionTable::zeros(n, a);
    let mut logging = ActionTable::zeros(n, a);
    let mut samples = Vec::with_capacity(n);
    for (i, (xi, li)) in x.into_iter().zip(x_lag).enumerate() {
        let p = logging_policy_probs(env, &xi, config.logging_beta, c_r, config.exploration_floor);
        let u: f64 = rng.random();
        let mut action = a - 1;
        let mut cum = 0.0;
        for (b, pb) in p.iter().enumerate() {
            cum += pb;
            if u < cum {
                action = b;
                break;
            }
        }
        while p[action] == 0.0 {
            action -= 1;
        }
        let qi = env.q_all(&xi, &li, config.mix_lambda, config.interaction_eta);
        let reward = qi[action] + rng.sample::<f64, _>(StandardNormal);
        q.row_mut(i).copy_from_slice(&qi);
        logging.row_mut(i).copy_from_slice(&p);
        samples.push(LaggedSample { x: xi, x_lags: vec![li], action, reward, propensity: Some(p[action]) });
    }
    let dataset = LaggedDataset::new(samples, a, vec!["1".into()])?;
    Ok(SynthData { dataset, q, logging, threshold: c_r })
}

/// Monte Carlo value of `policy` and its standard error.
///
/// Contexts are drawn from a stream derived from `env_seed`, so the result does
/// not depend on `violation_ratio` or `data_seed`.
pub fn true_value_mc_with_se(config: &SynthConfig, env: &SynthEnv, policy: &Policy, m: usize) -> Result<(f64, f64)> {
    if m == 0 {
        return invalid("m_samples must be at least 1");
    }
    let mut rng = rng_from_seed(mix_seed(config.env_seed, MC_STREAM));
    let (mut s, mut s2) = (0.0, 0.0);
    let chunk = 4096;
    let mut done = 0;
    while done < m {
        let k = chunk.min(m - done);
        let (x, xl) = sample_contexts(&mut rng, k, config.d, config.rho);
        for (xi, li) in x.iter().zip(&xl) {
            let p = policy.probs(xi)?;
            let q = env.q_all(xi, li, config.mix_lambda, config.interaction_eta);
            let v: f64 = p.iter().zip(&q).map(|(p, q)| p * q).sum();
            s += v;
            s2 += v * v;
        }
        done += k;
    }
    let mean = s / m as f64;
    let var = (s2 / m as f64 - mean * mean).max(0.0);
    Ok((mean, (var / m as f64).sqrt()))
}

pub fn true_value_mc(config: &SynthConfig, env: &SynthEnv, policy: &Policy, m: usize) -> Result<f64> {
    true_value_mc_with_se(config, env, policy, m).map(|(v, _)| v)
}

/// Held-out contexts with their full mean-reward table.
#[derive(Clone, Debug)]
pub struct TestSet {
    pub x: Vec<Vec<f64>>,
    pub x_lag: Vec<Vec<f64>>,
    pub q: ActionTable,
}

impl TestSet {
    pub fn new(config: &SynthConfig, env: &SynthEnv, m: usize, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let (x, x_lag) = sample_contexts(&mut rng, m, config.d, config.rho);
        let q = ActionTable::from_rows(
            &x.iter()
                .zip(&x_lag)
                .map(|(a, b)| env.q_all(a, b, config.mix_lambda, config.interaction_eta))
                .collect::<Vec<_>>(),
        );
        Self { x, x_lag, q }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Exact-q value of `policy` on the test contexts.
    pub fn value(&self, policy: &Policy) -> Result<f64> {
        let mut s = 0.0;
        for (i, xi) in self.x.iter().enumerate() {
            let p = policy.probs(xi)?;
            s += p.iter().zip(self.q.row(i)).map(|(p, q)| p * q).sum::<f64>();
        }
        Ok(s / self.len() as f64)
    }

    /// Value of the synthetic logging policy at violation threshold `c_r`.
    pub fn logging_value(&self, env: &SynthEnv, config: &SynthConfig, c_r: f64) -> f64 {
        let mut s = 0.0;
        for (i, xi) in self.x.iter().enumerate() {
            let p = logging_policy_probs(env, xi, config.logging_beta, c_r, config.exploration_floor);
            s += p.iter().zip(self.q.row(i)).map(|(p, q)| p * q).sum::<f64>();
        }
        s / self.len() as f64
    }
}

/// Mean over the test set of `max_a q`.
pub fn oracle_best_value(test: &TestSet) -> f64 {
    (0..test.len())
        .map(|i| test.q.row(i).iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / test.len() as f64
}

/// Epsilon-greedy probabilities on `g`, exposed for callers that avoid the trait object.
pub fn target_probs(env: &SynthEnv, x: &[f64], epsilon: f64) -> Vec<f64> {
    eps_greedy_probs(&env.g(x), epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SynthConfig {
        SynthConfig::default()
    }

    #[test]
    fn env_is_deterministic_and_bounded() {
        let e1 = make_env(&cfg()).unwrap();
        assert_eq!(e1, make_env(&cfg()).unwrap());
        let e2 = make_env(&SynthConfig { env_seed: 2, ..cfg() }).unwrap();
        assert_ne!(e1.g_coef, e2.g_coef);
        for c in e1.g_coef.iter().chain(&e1.h_coef).chain(&e1.u_coef).flatten() {
            assert!((-0.5..0.5).contains(c));
        }
        assert_eq!(e1.g_coef.len(), 5);
        assert_eq!(e1.g_coef[0].len(), 9);
        assert_eq!(e1.u_coef[0].len(), 3);
    }

    #[test]
    fn mixture_endpoints() {
        let env = make_env(&cfg()).unwrap();
        let x: Vec<f64> = (0..10).map(|j| (j as f64 * 0.37).sin() * 2.0).collect();
        let l: Vec<f64> = (0..10).map(|j| (j as f64 * 1.3).cos()).collect();
        for a in 0..5 {
            assert_eq!(mean_reward(&env, &x, &l, a, 1.0, 0.0), env.g(&x)[a]);
            assert_eq!(mean_reward(&env, &x, &l, a, 0.0, 0.0), env.h(&l)[a]);
        }
    }

    #[test]
    fn mixed_reward_matches_straight_line_evaluation() {
        let env = make_env(&cfg()).unwrap();
        let x = [0.0, 0.6, 0.7, 0.1, 0.9, -1.0, 2.0, 0.4, 0.55, -0.2];
        let l = [1.0, -0.3, 0.8, 0.2, 0.0, 0.6, 0.6, -0.9, 0.1, 3.0];
        let a = 3;
        let rule = |z: &[f64], c: &[Vec<f64>]| -> f64 {
            let mut v = 0.0;
            for j in 1..10 {
                v += if z[j] > 0.5 { c[a][j - 1] } else { -c[a][j - 1] };
            }
            let cnt = (2..10).filter(|&j| z[j] > 0.5).count();
            if cnt >= 2 {
                v += 0.15;
            }
            v
        };
        let g = rule(&x, &env.g_coef);
        let h = rule(&l, &env.h_coef);
        let c = &env.u_coef[a];
        let u = c[0] * x[1] * l[1] + c[1] * x[2] * l[2] + c[2] * (x[3] + l[3]).sin();
        let expected = 0.5 * g + 0.5 * h + 0.3 * u;
        assert!((mean_reward(&env, &x, &l, a, 0.5, 0.3) - expected).abs() < 1e-14);
        let above = [false, true, true, false, true, false, true, false, true, false];
        let g0: f64 = (1..10).map(|j| if above[j] { -0.2 } else { 0.2 }).sum::<f64>() - 0.3;
        assert!((env.g(&x)[0] - g0).abs() < 1e-14);
    }

    #[test]
    fn logging_policy_cases() {
        let env = make_env(&cfg()).unwrap();
        let x = [0.0, 0.6, 0.7, 0.1, 0.9, -1.0, 2.0, 0.4, 0.55, -0.2];
        assert_eq!(logging_policy_probs(&env, &x, 0.0, 1.0, 0.0), vec![0.2; 5]);
        let mut xv = x;
        xv[0] = 2.0;
        assert_eq!(logging_policy_probs(&env, &xv, 0.3, 1.0, 0.0), vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(violation_threshold(&[1.0, 2.0, 3.0], 0.0), f64::INFINITY);
        let p = logging_policy_probs(&env, &x, 0.3, f64::INFINITY, 0.05);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|v| *v >= 0.01));
    }

    #[test]
    fn generate_defaults() {
        let env = make_env(&cfg()).unwrap();
        let sd = generate(&cfg(), &env).unwrap();
        let ds = &sd.dataset;
        assert_eq!((ds.len(), ds.num_lags(), ds.dim()), (1000, 1, 10));
        let forced: Vec<_> = ds.samples().iter().filter(|s| s.x[0] > sd.threshold).collect();
        assert_eq!(forced.len(), 500);
        assert!(forced.iter().all(|s| s.action == 0 && s.propensity == Some(1.0)));
        let mut zero = cfg();
        zero.violation_ratio = 0.0;
        let sd0 = generate(&zero, &env).unwrap();
        assert!(sd0.threshold.is_infinite());
    }

    #[test]
    fn reward_noise_has_unit_variance() {
        let c = SynthConfig { n: 10_000, ..cfg() };
        let env = make_env(&c).unwrap();
        let sd = generate(&c, &env).unwrap();
        let resid: Vec<f64> =
            sd.dataset.samples().iter().enumerate().map(|(i, s)| s.reward - sd.q.get(i, s.action)).collect();
        let v = crate::stats::variance(&resid);
        assert!((v - 1.0).abs() < 0.1, "{v}");
    }

    #[test]
    fn residual_invariance_without_interaction() {
        let c = cfg();
        let env = make_env(&c).unwrap();
        let mut rng = rng_from_seed(3);
        let (x, l) = sample_contexts(&mut rng, 50, 10, 1.0);
        for i in 0..50 {
            let q = env.q_all(&x[i], &l[i], 0.5, 0.0);
            let q2 = env.q_all(&x[(i + 1) % 50], &l[i], 0.5, 0.0);
            let g = env.g(&x[i]);
            let g2 = env.g(&x[(i + 1) % 50]);
            for a in 0..5 {
                let r1 = q[a] - 0.5 * g[a];
                let r2 = q2[a] - 0.5 * g2[a];
                assert!((r1 - r2).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn true_value_ignores_violation_ratio() {
        let env = make_env(&cfg()).unwrap();
        let pol = target_policy(&env, 0.1).unwrap();
        let a = true_value_mc(&SynthConfig { violation_ratio: 0.1, ..cfg() }, &env, &pol, 20_000).unwrap();
        let b = true_value_mc(&SynthConfig { violation_ratio: 0.9, data_seed: 9, ..cfg() }, &env, &pol, 20_000).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_env_has_constant_value() {
        let c = SynthConfig { num_actions: 3, ..cfg() };
        let env = SynthEnv {
            d: 10,
            num_actions: 3,
            g_coef: vec![vec![0.0; 9]; 3],
            h_coef: vec![vec![0.0; 9]; 3],
            u_coef: vec![vec![0.0; 3]; 3],
            base_contrast: 0.0,
            count_shift: (0.0, 0.0),
        };
        // All scores tie, so epsilon-greedy with epsilon 0 is a point mass on action 0.
        let pol = target_policy(&env, 0.0).unwrap();
        assert_eq!(true_value_mc(&c, &env, &pol, 1000).unwrap(), 0.0);
    }

    #[test]
    fn single_action_oracle_equals_policy_value() {
        let c = SynthConfig { num_actions: 1, ..cfg() };
        let env = make_env(&c).unwrap();
        let pol = Policy::Uniform { num_actions: 1 };
        let test = TestSet::new(&c, &env, 2000, 4);
        assert!((test.value(&pol).unwrap() - oracle_best_value(&test)).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_converges() {
        let c = cfg();
        let env = make_env(&c).unwrap();
        let pol = target_policy(&env, 0.1).unwrap();
        let (v6, s6) = true_value_mc_with_se(&c, &env, &pol, 1_000_000).unwrap();
        let (v5, s5) = true_value_mc_with_se(&SynthConfig { env_seed: 77, ..c.clone() }, &env, &pol, 100_000).unwrap();
        assert!((v6 - v5).abs() < 3.0 * (s6 * s6 + s5 * s5).sqrt(), "{v6} {v5}");
    }

    #[test]
    fn oracle_dominates_policies() {
        let c = cfg();
        let env = make_env(&c).unwrap();
        let test = TestSet::new(&c, &env, 3000, 8);
        let vstar = oracle_best_value(&test);
        let manual: f64 = (0..test.len())
            .map(|i| {
                let mut m = f64::NEG_INFINITY;
                for a in 0..5 {
                    if test.q.get(i, a) > m {
                        m = test.q.get(i, a);
                    }
                }
                m
            })
            .sum::<f64>()
            / 3000.0;
        assert!((vstar - manual).abs() < 1e-12);
        for pol in [Policy::Uniform { num_actions: 5 }, target_policy(&env, 0.1).unwrap()] {
            assert!(test.value(&pol).unwrap() <= vstar);
        }
    }
}
