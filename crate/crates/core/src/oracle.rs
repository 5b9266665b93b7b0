//! Exact expectations over small finite environments.
//!
//! A [`DiscreteEnv`] enumerates lag contexts `x0`, current contexts `x` and
//! actions. Every quantity here is a finite sum, so the identities relating
//! estimator expectations to the target value can be checked to rounding error.
//!
//! Tables are indexed `[x][x0][a]` for rewards and `[x][a]` for policies.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{LaggedDataset, LaggedSample};
use crate::error::{invalid, Result};
use crate::policy::{score_into, LinearSoftmax, Policy};
use crate::rng::DolceRng;

/// Policy over current contexts, `[x][a]`.
pub type PolicyTable = Vec<Vec<f64>>;
/// Table over `(x, x0, a)`.
pub type XTable = Vec<Vec<Vec<f64>>>;
/// Table over `(x0, a)`.
pub type LagTable = Vec<Vec<f64>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteEnv {
    pub p0: Vec<f64>,
    /// `[x0][x]`
    pub p_x_given_x0: Vec<Vec<f64>>,
    /// `[x][a]`
    pub pi0: PolicyTable,
    pub q: XTable,
    pub sigma2: XTable,
}

fn is_simplex(v: &[f64]) -> bool {
    v.iter().all(|p| *p >= 0.0 && p.is_finite()) && (v.iter().sum::<f64>() - 1.0).abs() < 1e-9
}

impl DiscreteEnv {
    pub fn validate(&self) -> Result<()> {
        let (n0, nx, a) = (self.n_lag(), self.n_cur(), self.num_actions());
        if n0 == 0 || nx == 0 || a == 0 {
            return invalid("environment tables must be nonempty");
        }
        if !is_simplex(&self.p0) {
            return invalid("p0 is not a probability vector");
        }
        if self.p_x_given_x0.len() != n0 || self.p_x_given_x0.iter().any(|r| r.len() != nx || !is_simplex(r)) {
            return invalid("p_x_given_x0 rows must be probability vectors over current contexts");
        }
        if self.pi0.iter().any(|r| r.len() != a || !is_simplex(r)) {
            return invalid("pi0 rows must be probability vectors over actions");
        }
        for t in [&self.q, &self.sigma2] {
            if t.len() != nx || t.iter().any(|r| r.len() != n0 || r.iter().any(|c| c.len() != a)) {
                return invalid("reward tables must have shape [x][x0][a]");
            }
        }
        if self.sigma2.iter().flatten().flatten().any(|s| *s < 0.0) {
            return invalid("reward variances must be nonnegative");
        }
        Ok(())
    }

    pub fn n_lag(&self) -> usize {
        self.p0.len()
    }

    pub fn n_cur(&self) -> usize {
        self.pi0.len()
    }

    pub fn num_actions(&self) -> usize {
        self.pi0.first().map_or(0, Vec::len)
    }

    /// Feature dimension shared by current and lag contexts.
    pub fn feature_dim(&self) -> usize {
        self.n_cur() + self.n_lag()
    }

    /// One-hot feature of current context `x` (first `n_cur` coordinates).
    pub fn x_feature(&self, x: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.feature_dim()];
        v[x] = 1.0;
        v
    }

    /// One-hot feature of lag context `x0` (last `n_lag` coordinates).
    pub fn lag_feature(&self, x0: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.feature_dim()];
        v[self.n_cur() + x0] = 1.0;
        v
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let env: Self = serde_json::from_str(text).map_err(|e| crate::DolceError::InvalidInput(e.to_string()))?;
        env.validate()?;
        Ok(env)
    }

    /// `p(x) = sum_x0 p0(x0) p(x|x0)`.
    pub fn p_x(&self) -> Vec<f64> {
        let mut px = vec![0.0; self.n_cur()];
        for (x0, row) in self.p_x_given_x0.iter().enumerate() {
            for (x, p) in row.iter().enumerate() {
                px[x] += self.p0[x0] * p;
            }
        }
        px
    }

    /// Evaluates `policy` on each current context's feature vector.
    pub fn policy_table(&self, policy: &Policy) -> Result<PolicyTable> {
        (0..self.n_cur()).map(|x| policy.probs(&self.x_feature(x))).collect()
    }

    /// Draws `n` logged samples: `x0 ~ p0`, `x ~ p(.|x0)`, `a ~ pi0(.|x)`,
    /// `R = q + sqrt(sigma2) N(0,1)`. Returns the dataset and `(x, x0)` indices.
    pub fn sample(&self, n: usize, rng: &mut DolceRng) -> Result<(LaggedDataset, Vec<(usize, usize)>)> {
        let draw = |p: &[f64], rng: &mut DolceRng| -> usize {
            let u: f64 = rng.random();
            let mut c = 0.0;
            for (i, pi) in p.iter().enumerate() {
                c += pi;
                if u < c {
                    return i;
                }
            }
            p.iter().rposition(|v| *v > 0.0).unwrap_or(p.len() - 1)
        };
        let mut samples = Vec::with_capacity(n);
        let mut idx = Vec::with_capacity(n);
        for _ in 0..n {
            let x0 = draw(&self.p0, rng);
            let x = draw(&self.p_x_given_x0[x0], rng);
            let a = draw(&self.pi0[x], rng);
            let eps: f64 = rng.sample(StandardNormal);
            let r = self.q[x][x0][a] + self.sigma2[x][x0][a].sqrt() * eps;
            samples.push(LaggedSample {
                x: self.x_feature(x),
                x_lags: vec![self.lag_feature(x0)],
                action: a,
                reward: r,
                propensity: Some(self.pi0[x][a]),
            });
            idx.push((x, x0));
        }
        Ok((LaggedDataset::new(samples, self.num_actions(), vec!["1".into()])?, idx))
    }

    /// Sum over `(x0, x)` of `p0 p(x|x0) f(x0, x)`.
    fn expect<F: FnMut(usize, usize) -> f64>(&self, mut f: F) -> f64 {
        let mut s = 0.0;
        for (x0, row) in self.p_x_given_x0.iter().enumerate() {
            for (x, p) in row.iter().enumerate() {
                let w = self.p0[x0] * p;
                if w != 0.0 {
                    s += w * f(x0, x);
                }
            }
        }
        s
    }
}

/// `V(pi) = sum p0 p pi q`.
pub fn exact_value(env: &DiscreteEnv, pi: &PolicyTable) -> f64 {
    env.expect(|x0, x| pi[x].iter().zip(&env.q[x][x0]).map(|(p, q)| p * q).sum())
}

/// Lag-marginalized target and logging policies, `[x0][a]`.
pub fn exact_lag_marginals(env: &DiscreteEnv, pi: &PolicyTable) -> (LagTable, LagTable) {
    let a = env.num_actions();
    let mut bt = vec![vec![0.0; a]; env.n_lag()];
    let mut b0 = vec![vec![0.0; a]; env.n_lag()];
    for (x0, row) in env.p_x_given_x0.iter().enumerate() {
        for (x, p) in row.iter().enumerate() {
            for b in 0..a {
                bt[x0][b] += p * pi[x][b];
                b0[x0][b] += p * env.pi0[x][b];
            }
        }
    }
    (bt, b0)
}

/// Oracle lag weights `min(bar_pi / bar_pi0, clip)`, zero where `bar_pi0 = 0`.
pub fn oracle_lag_weights(env: &DiscreteEnv, pi: &PolicyTable, clip: f64) -> LagTable {
    let (bt, b0) = exact_lag_marginals(env, pi);
    bt.iter()
        .zip(&b0)
        .map(|(t, z)| t.iter().zip(z).map(|(t, z)| if *z > 0.0 { (t / z).min(clip) } else { 0.0 }).collect())
        .collect()
}

/// Bias of IPS with true propensities: `-E[sum_{a in U(X)} pi q]`.
pub fn exact_bias_ips(env: &DiscreteEnv, pi: &PolicyTable) -> f64 {
    -env.expect(|x0, x| {
        (0..env.num_actions())
            .filter(|&a| pi[x][a] > 0.0 && env.pi0[x][a] == 0.0)
            .map(|a| pi[x][a] * env.q[x][x0][a])
            .sum()
    })
}

/// Expectation of the IPS estimator by enumeration over logged actions.
pub fn exact_ips_expectation(env: &DiscreteEnv, pi: &PolicyTable) -> f64 {
    env.expect(|x0, x| {
        (0..env.num_actions())
            .filter(|&a| env.pi0[x][a] > 0.0)
            .map(|a| env.pi0[x][a] * (pi[x][a] / env.pi0[x][a]) * env.q[x][x0][a])
            .sum()
    })
}

/// `q(x, a) = sum_x0 p(x0|x) q(x, x0, a)`, with `p(x0|x)` from Bayes' rule.
pub fn marginal_q(env: &DiscreteEnv) -> Vec<Vec<f64>> {
    let px = env.p_x();
    let a = env.num_actions();
    (0..env.n_cur())
        .map(|x| {
            let mut out = vec![0.0; a];
            if px[x] > 0.0 {
                for x0 in 0..env.n_lag() {
                    let post = env.p0[x0] * env.p_x_given_x0[x0][x] / px[x];
                    for (o, q) in out.iter_mut().zip(&env.q[x][x0]) {
                        *o += post * q;
                    }
                }
            }
            out
        })
        .collect()
}

/// `sum_x p(x) sum_a pi(a|x) q(x, a)` using [`marginal_q`].
pub fn value_via_marginal_q(env: &DiscreteEnv, pi: &PolicyTable) -> f64 {
    let qm = marginal_q(env);
    env.p_x().iter().enumerate().map(|(x, p)| p * pi[x].iter().zip(&qm[x]).map(|(a, b)| a * b).sum::<f64>()).sum()
}

/// Bias of DR with true propensities: `E[sum_{a in U(X)} pi (q_hat - q)]`.
pub fn exact_bias_dr(env: &DiscreteEnv, pi: &PolicyTable, q_hat: &[Vec<f64>]) -> f64 {
    let qm = marginal_q(env);
    let px = env.p_x();
    (0..env.n_cur())
        .map(|x| {
            px[x]
                * (0..env.num_actions())
                    .filter(|&a| pi[x][a] > 0.0 && env.pi0[x][a] == 0.0)
                    .map(|a| pi[x][a] * (q_hat[x][a] - qm[x][a]))
                    .sum::<f64>()
        })
        .sum()
}

/// Expectation of the DR estimator by enumeration.
pub fn exact_dr_expectation(env: &DiscreteEnv, pi: &PolicyTable, q_hat: &[Vec<f64>]) -> f64 {
    env.expect(|x0, x| {
        let mut s: f64 = pi[x].iter().zip(&q_hat[x]).map(|(p, q)| p * q).sum();
        for a in 0..env.num_actions() {
            let p0 = env.pi0[x][a];
            if p0 > 0.0 {
                s += p0 * (pi[x][a] / p0) * (env.q[x][x0][a] - q_hat[x][a]);
            }
        }
        s
    })
}

/// `E[w(R - q_tilde) + sum_a pi q_tilde]` with oracle lag weights clipped at `clip`.
pub fn exact_dolce_expectation(env: &DiscreteEnv, pi: &PolicyTable, q_tilde: &XTable, clip: f64) -> f64 {
    let w = oracle_lag_weights(env, pi, clip);
    env.expect(|x0, x| {
        let mut s: f64 = pi[x].iter().zip(&q_tilde[x][x0]).map(|(p, q)| p * q).sum();
        for a in 0..env.num_actions() {
            s += env.pi0[x][a] * w[x0][a] * (env.q[x][x0][a] - q_tilde[x][x0][a]);
        }
        s
    })
}

/// Bias expression `E[sum_a (pi0 w - pi) (q - q_tilde)]`.
pub fn dolce_bias_formula(env: &DiscreteEnv, pi: &PolicyTable, q_tilde: &XTable, clip: f64) -> f64 {
    let w = oracle_lag_weights(env, pi, clip);
    env.expect(|x0, x| {
        (0..env.num_actions())
            .map(|a| (env.pi0[x][a] * w[x0][a] - pi[x][a]) * (env.q[x][x0][a] - q_tilde[x][x0][a]))
            .sum()
    })
}

/// `Var(psi) / n` via `E[w^2 sigma^2] + Var(w Delta + sum_a pi q_tilde)`.
pub fn exact_dolce_variance(env: &DiscreteEnv, pi: &PolicyTable, q_tilde: &XTable, clip: f64, n: usize) -> f64 {
    let w = oracle_lag_weights(env, pi, clip);
    let mut noise = 0.0;
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    for (x0, row) in env.p_x_given_x0.iter().enumerate() {
        for (x, p) in row.iter().enumerate() {
            let s: f64 = pi[x].iter().zip(&q_tilde[x][x0]).map(|(p, q)| p * q).sum();
            for a in 0..env.num_actions() {
                let pr = env.p0[x0] * p * env.pi0[x][a];
                if pr == 0.0 {
                    continue;
                }
                let wa = w[x0][a];
                noise += pr * wa * wa * env.sigma2[x][x0][a];
                let m = wa * (env.q[x][x0][a] - q_tilde[x][x0][a]) + s;
                m1 += pr * m;
                m2 += pr * m * m;
            }
        }
    }
    (noise + (m2 - m1 * m1)) / n as f64
}

/// `Var(psi) / n` via `E[psi^2] - E[psi]^2`, expanding `E[(R - q_tilde)^2]`.
pub fn exact_dolce_variance_direct(env: &DiscreteEnv, pi: &PolicyTable, q_tilde: &XTable, clip: f64, n: usize) -> f64 {
    let w = oracle_lag_weights(env, pi, clip);
    let mut e1 = 0.0;
    let mut e2 = 0.0;
    for x0 in 0..env.n_lag() {
        for x in 0..env.n_cur() {
            for a in 0..env.num_actions() {
                let pr = env.p0[x0] * env.p_x_given_x0[x0][x] * env.pi0[x][a];
                if pr == 0.0 {
                    continue;
                }
                let s: f64 = (0..env.num_actions()).map(|b| pi[x][b] * q_tilde[x][x0][b]).sum();
                let wa = w[x0][a];
                let delta = env.q[x][x0][a] - q_tilde[x][x0][a];
                let sq_resid = env.sigma2[x][x0][a] + delta * delta;
                e1 += pr * (wa * delta + s);
                e2 += pr * (wa * wa * sq_resid + 2.0 * wa * delta * s + s * s);
            }
        }
    }
    (e2 - e1 * e1) / n as f64
}

/// `q - delta(x0, a)`.
pub fn shift_by_lag(env: &DiscreteEnv, delta: &LagTable) -> XTable {
    env.q
        .iter()
        .map(|rx| rx.iter().enumerate().map(|(x0, r)| r.iter().zip(&delta[x0]).map(|(q, d)| q - d).collect()).collect())
        .collect()
}

/// Moments `E[(q - q_tilde) f]` over the centered indicator basis
/// `f = 1{X0 = x0', A = a'} (1{X = x'} - P(x' | x0', a'))`.
///
/// Pairs `(x0', a')` with zero logging mass are skipped.
pub fn centered_basis_moments(env: &DiscreteEnv, q_tilde: &XTable) -> Vec<f64> {
    let a_n = env.num_actions();
    let mut out = Vec::new();
    for x0p in 0..env.n_lag() {
        for ap in 0..a_n {
            let bar0: f64 = (0..env.n_cur()).map(|x| env.p_x_given_x0[x0p][x] * env.pi0[x][ap]).sum();
            if bar0 <= 0.0 {
                continue;
            }
            let cond: Vec<f64> =
                (0..env.n_cur()).map(|x| env.p_x_given_x0[x0p][x] * env.pi0[x][ap] / bar0).collect();
            for xp in 0..env.n_cur() {
                let mut m = 0.0;
                for x in 0..env.n_cur() {
                    let pr = env.p0[x0p] * env.p_x_given_x0[x0p][x] * env.pi0[x][ap];
                    let f = if x == xp { 1.0 } else { 0.0 } - cond[xp];
                    m += pr * (env.q[x][x0p][ap] - q_tilde[x][x0p][ap]) * f;
                }
                out.push(m);
            }
        }
    }
    out
}

/// `grad V = E[sum_a pi q s(a|X)]` for a softmax policy on current-context features.
pub fn exact_gradient(env: &DiscreteEnv, policy: &LinearSoftmax) -> Result<Vec<f64>> {
    let mut g = vec![0.0; policy.num_params()];
    let mut s = vec![0.0; policy.num_params()];
    for x in 0..env.n_cur() {
        let f = env.x_feature(x);
        let pi = policy.probs(&f)?;
        for x0 in 0..env.n_lag() {
            let pr = env.p0[x0] * env.p_x_given_x0[x0][x];
            if pr == 0.0 {
                continue;
            }
            for (a, pa) in pi.iter().enumerate() {
                score_into(&pi, &f, a, &mut s);
                let c = pr * pa * env.q[x][x0][a];
                for (gk, sk) in g.iter_mut().zip(&s) {
                    *gk += c * sk;
                }
            }
        }
    }
    Ok(g)
}

/// Oracle lag-marginal score `bar s(a|x0) = E[pi s | x0] / bar_pi(a|x0)`, `[x0][a][k]`.
pub fn exact_lag_scores(env: &DiscreteEnv, policy: &LinearSoftmax) -> Result<Vec<Vec<Vec<f64>>>> {
    let pi = env.policy_table(&Policy::LinearSoftmax(policy.clone()))?;
    let (bt, _) = exact_lag_marginals(env, &pi);
    let k = policy.num_params();
    let mut s = vec![0.0; k];
    let mut out = vec![vec![vec![0.0; k]; env.num_actions()]; env.n_lag()];
    for x0 in 0..env.n_lag() {
        for x in 0..env.n_cur() {
            let p = env.p_x_given_x0[x0][x];
            if p == 0.0 {
                continue;
            }
            let f = env.x_feature(x);
            for a in 0..env.num_actions() {
                score_into(&pi[x], &f, a, &mut s);
                for (o, sk) in out[x0][a].iter_mut().zip(&s) {
                    *o += p * pi[x][a] * sk;
                }
            }
        }
        for a in 0..env.num_actions() {
            if bt[x0][a] > 0.0 {
                out[x0][a].iter_mut().for_each(|v| *v /= bt[x0][a]);
            }
        }
    }
    Ok(out)
}

/// Expectation of the lag-k DOLCE gradient with oracle nuisances and `q_tilde`.
pub fn expected_oracle_dolce_gradient(env: &DiscreteEnv, policy: &LinearSoftmax, q_tilde: &XTable) -> Result<Vec<f64>> {
    let pi = env.policy_table(&Policy::LinearSoftmax(policy.clone()))?;
    let w = oracle_lag_weights(env, &pi, f64::INFINITY);
    let bar_s = exact_lag_scores(env, policy)?;
    let k = policy.num_params();
    let mut g = vec![0.0; k];
    let mut s = vec![0.0; k];
    for x0 in 0..env.n_lag() {
        for x in 0..env.n_cur() {
            let pr = env.p0[x0] * env.p_x_given_x0[x0][x];
            if pr == 0.0 {
                continue;
            }
            let f = env.x_feature(x);
            for a in 0..env.num_actions() {
                let c = pr * env.pi0[x][a] * w[x0][a] * (env.q[x][x0][a] - q_tilde[x][x0][a]);
                for (gk, sk) in g.iter_mut().zip(&bar_s[x0][a]) {
                    *gk += c * sk;
                }
                score_into(&pi[x], &f, a, &mut s);
                let c2 = pr * pi[x][a] * q_tilde[x][x0][a];
                for (gk, sk) in g.iter_mut().zip(&s) {
                    *gk += c2 * sk;
                }
            }
        }
    }
    Ok(g)
}

/// Shape and sparsity of a random environment.
#[derive(Clone, Debug)]
pub struct RandomEnvSpec {
    pub n_lag: usize,
    pub n_cur: usize,
    pub num_actions: usize,
    /// Probability that a logging entry is set to zero.
    pub zero_prob: f64,
}

impl Default for RandomEnvSpec {
    fn default() -> Self {
        Self { n_lag: 3, n_cur: 4, num_actions: 3, zero_prob: 0.3 }
    }
}

fn random_simplex(rng: &mut DolceRng, k: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

/// Random environment with dense `p(x|x0)` and every action supported by the
/// logging policy at some current context, so lag overlap holds while
/// current-context overlap fails wherever zeros were injected.
pub fn random_env(rng: &mut DolceRng, spec: &RandomEnvSpec) -> DiscreteEnv {
    let (n0, nx, na) = (spec.n_lag, spec.n_cur, spec.num_actions);
    let p0 = random_simplex(rng, n0);
    let p_x_given_x0 = (0..n0).map(|_| random_simplex(rng, nx)).collect();
    let mut pi0: Vec<Vec<f64>> = (0..nx)
        .map(|_| {
            let mut p = random_simplex(rng, na);
            let keep = rng.random_range(0..na);
            for (a, v) in p.iter_mut().enumerate() {
                if a != keep && rng.random::<f64>() < spec.zero_prob {
                    *v = 0.0;
                }
            }
            let s: f64 = p.iter().sum();
            p.into_iter().map(|v| v / s).collect()
        })
        .collect();
    for a in 0..na {
        if pi0.iter().all(|r| r[a] == 0.0) {
            let x = rng.random_range(0..nx);
            pi0[x][a] = 0.5;
            let s: f64 = pi0[x].iter().sum();
            pi0[x].iter_mut().for_each(|v| *v /= s);
        }
    }
    let table = |rng: &mut DolceRng, f: &dyn Fn(f64) -> f64| -> XTable {
        (0..nx)
            .map(|_| (0..n0).map(|_| (0..na).map(|_| f(rng.sample::<f64, _>(StandardNormal))).collect()).collect())
            .collect()
    };
    let q = table(rng, &|z| z);
    let sigma2 = table(rng, &|z| 0.25 + z * z);
    DiscreteEnv { p0, p_x_given_x0, pi0, q, sigma2 }
}

pub fn random_policy_table(rng: &mut DolceRng, n_cur: usize, num_actions: usize) -> PolicyTable {
    (0..n_cur).map(|_| random_simplex(rng, num_actions)).collect()
}

pub fn random_lag_table(rng: &mut DolceRng, n_lag: usize, num_actions: usize) -> LagTable {
    (0..n_lag).map(|_| (0..num_actions).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()).collect()
}

pub fn random_x_table(rng: &mut DolceRng, env: &DiscreteEnv) -> XTable {
    (0..env.n_cur())
        .map(|_| {
            (0..env.n_lag())
                .map(|_| (0..env.num_actions()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
                .collect()
        })
        .collect()
}

/// Whether `bar_pi0(a|x0) > 0` wherever `bar_pi(a|x0) > 0`.
pub fn has_lag_overlap(env: &DiscreteEnv, pi: &PolicyTable) -> bool {
    let (bt, b0) = exact_lag_marginals(env, pi);
    bt.iter().flatten().zip(b0.iter().flatten()).all(|(t, z)| *t == 0.0 || *z > 0.0)
}

/// Regression fixture: an environment plus the target policy and shift table to check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleFixture {
    pub name: String,
    pub env: DiscreteEnv,
    /// `[x][a]` target policy.
    pub target: PolicyTable,
    /// `[x0][a]` residual shift used for the unbiasedness check.
    pub delta: LagTable,
    /// When true, the unbiasedness check is expected to fail.
    #[serde(default)]
    pub expect_fail: bool,
}

/// Outcome of one identity check.
#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub expect_fail: bool,
}

impl CheckResult {
    fn new(name: &str, residual: f64, tolerance: f64) -> Self {
        Self { name: name.into(), residual, tolerance, expect_fail: false }
    }

    /// Within tolerance, or outside it when failure is expected.
    pub fn passed(&self) -> bool {
        (self.residual < self.tolerance) != self.expect_fail
    }
}

/// Runs every identity on one environment, target table and lag shift.
///
/// `rng` supplies the auxiliary tables (x-dependent errors, DR model, softmax
/// parameters) used by the checks that need them.
pub fn identity_suite(
    env: &DiscreteEnv,
    pi: &PolicyTable,
    delta: &LagTable,
    expect_fail: bool,
    rng: &mut DolceRng,
) -> Result<Vec<CheckResult>> {
    env.validate()?;
    let v = exact_value(env, pi);
    let mut out = Vec::new();

    let shifted = shift_by_lag(env, delta);
    let mut c = CheckResult::new("theorem1_unbiased", (exact_dolce_expectation(env, pi, &shifted, f64::INFINITY) - v).abs(), 1e-10);
    c.expect_fail = expect_fail;
    out.push(c);

    let zeta = random_x_table(rng, env);
    let broken: XTable = shifted
        .iter()
        .zip(&zeta)
        .map(|(a, b)| a.iter().zip(b).map(|(r, z)| r.iter().zip(z).map(|(q, z)| q + 0.3 * z).collect()).collect())
        .collect();
    let mut worst = 0.0f64;
    for clip in [f64::INFINITY, 2.0] {
        let e = exact_dolce_expectation(env, pi, &broken, clip);
        worst = worst.max((e - v - dolce_bias_formula(env, pi, &broken, clip)).abs());
    }
    out.push(CheckResult::new("prop1_bias_formula", worst, 1e-10));

    let dual = (exact_dolce_variance(env, pi, &broken, f64::INFINITY, 1)
        - exact_dolce_variance_direct(env, pi, &broken, f64::INFINITY, 1))
    .abs();
    out.push(CheckResult::new("prop2_variance_dual_path", dual, 1e-10));

    out.push(CheckResult::new(
        "lemmaB1_ips_bias",
        (exact_ips_expectation(env, pi) - v - exact_bias_ips(env, pi)).abs(),
        1e-12,
    ));
    let q_hat: Vec<Vec<f64>> =
        (0..env.n_cur()).map(|_| (0..env.num_actions()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()).collect();
    out.push(CheckResult::new(
        "lemmaB1_dr_bias",
        (exact_dr_expectation(env, pi, &q_hat) - v - exact_bias_dr(env, pi, &q_hat)).abs(),
        1e-12,
    ));

    out.push(CheckResult::new("lemmaB2_value", (value_via_marginal_q(env, pi) - v).abs(), 1e-14));

    let moments = centered_basis_moments(env, &shifted);
    out.push(CheckResult::new("prop3_orthogonality", moments.iter().fold(0.0f64, |m, v| m.max(v.abs())), 1e-12));

    let (bt, b0) = exact_lag_marginals(env, pi);
    let row_err = bt.iter().chain(&b0).map(|r| (r.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max);
    out.push(CheckResult::new("lag_marginal_rows", row_err, 1e-14));

    let d = env.feature_dim();
    let theta: Vec<f64> = (0..env.num_actions() * (d + 1)).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let pol = LinearSoftmax::new(env.num_actions(), d, theta)?;
    let g = exact_gradient(env, &pol)?;
    let fd = finite_difference_gradient(env, &pol, 1e-6)?;
    let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-3);
    let rel = g.iter().zip(&fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale;
    out.push(CheckResult::new("gradient_finite_difference", rel, 1e-6));

    let pt = env.policy_table(&Policy::LinearSoftmax(pol.clone()))?;
    if has_lag_overlap(env, &pt) {
        let shifted_g = expected_oracle_dolce_gradient(env, &pol, &shifted)?;
        let err = g.iter().zip(&shifted_g).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        out.push(CheckResult::new("oracle_dolce_gradient", err, 1e-10));
    }
    Ok(out)
}

/// Central finite differences of [`exact_value`] in `theta`.
pub fn finite_difference_gradient(env: &DiscreteEnv, policy: &LinearSoftmax, h: f64) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(policy.num_params());
    for k in 0..policy.num_params() {
        let mut tp = policy.theta().to_vec();
        tp[k] += h;
        let mut tm = policy.theta().to_vec();
        tm[k] -= h;
        let vp = exact_value(env, &env.policy_table(&Policy::LinearSoftmax(policy.with_theta(tp)?))?);
        let vm = exact_value(env, &env.policy_table(&Policy::LinearSoftmax(policy.with_theta(tm)?))?);
        out.push((vp - vm) / (2.0 * h));
    }
    Ok(out)
}
