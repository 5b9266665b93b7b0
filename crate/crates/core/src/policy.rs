//! Target and learned policies.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, DolceError, Result};

/// Anything that assigns a real score to every action given a context.
pub trait ActionScorer: Send + Sync {
    fn num_actions(&self) -> usize;
    /// Context dimension expected by [`ActionScorer::scores`].
    fn dim(&self) -> usize;
    fn scores(&self, x: &[f64]) -> Vec<f64>;
}

/// Linear scores `W [x; 1]`, `W` stored row-major as `A x (d+1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearScorer {
    pub weights: Vec<Vec<f64>>,
}

impl ActionScorer for LinearScorer {
    fn num_actions(&self) -> usize {
        self.weights.len()
    }
    fn dim(&self) -> usize {
        self.weights.first().map_or(0, |w| w.len().saturating_sub(1))
    }
    fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|w| w[..x.len()].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[x.len()])
            .collect()
    }
}

/// Softmax policy with affine logits `theta [x; 1]`.
///
/// `theta` is row-major with shape `A x (d+1)`; the intercept is the last column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSoftmax {
    num_actions: usize,
    dim: usize,
    theta: Vec<f64>,
}

impl LinearSoftmax {
    pub fn new(num_actions: usize, dim: usize, theta: Vec<f64>) -> Result<Self> {
        if num_actions == 0 {
            return invalid("softmax policy needs at least one action");
        }
        if theta.len() != num_actions * (dim + 1) {
            return invalid(format!("theta has {} entries, expected {}", theta.len(), num_actions * (dim + 1)));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return invalid("theta contains non-finite entries");
        }
        Ok(Self { num_actions, dim, theta })
    }

    pub fn zeros(num_actions: usize, dim: usize) -> Self {
        Self { num_actions, dim, theta: vec![0.0; num_actions * (dim + 1)] }
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of parameters, `A (d+1)`.
    pub fn num_params(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Same shape, new parameters.
    pub fn with_theta(&self, theta: Vec<f64>) -> Result<Self> {
        Self::new(self.num_actions, self.dim, theta)
    }

    /// Writes `pi(.|x)` into `out` without allocating or checking dimensions.
    pub fn probs_into(&self, x: &[f64], out: &mut [f64]) {
        let p = self.dim + 1;
        let mut max = f64::NEG_INFINITY;
        for (a, o) in out.iter_mut().enumerate() {
            let row = &self.theta[a * p..(a + 1) * p];
            let logit = row[..self.dim].iter().zip(x).map(|(t, v)| t * v).sum::<f64>() + row[self.dim];
            *o = logit;
            max = max.max(logit);
        }
        let mut z = 0.0;
        for o in out.iter_mut() {
            *o = (*o - max).exp();
            z += *o;
        }
        for o in out.iter_mut() {
            *o /= z;
        }
    }

    pub fn probs(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut out = vec![0.0; self.num_actions];
        self.probs_into(x, &mut out);
        Ok(out)
    }

    /// Gradient of `log pi(a|x)` with respect to `theta`.
    pub fn score(&self, x: &[f64], a: usize) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        if a >= self.num_actions {
            return invalid(format!("action {a} out of range"));
        }
        let probs = self.probs(x)?;
        let mut out = vec![0.0; self.num_params()];
        score_into(&probs, x, a, &mut out);
        Ok(out)
    }

    /// `log pi(a|x)`, computed stably.
    pub fn log_prob(&self, x: &[f64], a: usize) -> Result<f64> {
        self.check_dim(x)?;
        let p = self.dim + 1;
        let logits: Vec<f64> = (0..self.num_actions)
            .map(|b| {
                let row = &self.theta[b * p..(b + 1) * p];
                row[..self.dim].iter().zip(x).map(|(t, v)| t * v).sum::<f64>() + row[self.dim]
            })
            .collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
        Ok(logits[a] - lse)
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return invalid(format!("context has length {}, policy expects {}", x.len(), self.dim));
        }
        Ok(())
    }
}

/// Writes the softmax score of action `a` into `out` given `probs = pi(.|x)`.
#[inline]
pub fn score_into(probs: &[f64], x: &[f64], a: usize, out: &mut [f64]) {
    let p = x.len() + 1;
    for (b, &pb) in probs.iter().enumerate() {
        let coef = if a == b { 1.0 - pb } else { -pb };
        let blk = &mut out[b * p..(b + 1) * p];
        for (o, v) in blk[..p - 1].iter_mut().zip(x) {
            *o = coef * v;
        }
        blk[p - 1] = coef;
    }
}

/// Probability table over a finite set of contexts, matched exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularPolicy {
    pub contexts: Vec<Vec<f64>>,
    pub probs: Vec<Vec<f64>>,
}

impl TabularPolicy {
    pub fn new(contexts: Vec<Vec<f64>>, probs: Vec<Vec<f64>>) -> Result<Self> {
        if contexts.is_empty() || contexts.len() != probs.len() {
            return invalid("tabular policy needs one probability row per context");
        }
        let a = probs[0].len();
        let d = contexts[0].len();
        for (c, p) in contexts.iter().zip(&probs) {
            if c.len() != d || p.len() != a {
                return invalid("tabular policy rows have inconsistent lengths");
            }
            let s: f64 = p.iter().sum();
            if p.iter().any(|v| *v < 0.0) || (s - 1.0).abs() > 1e-9 {
                return invalid("tabular policy row is not a probability vector");
            }
        }
        let probs = probs
            .into_iter()
            .map(|p| {
                let s: f64 = p.iter().sum();
                p.into_iter().map(|v| v / s).collect()
            })
            .collect();
        Ok(Self { contexts, probs })
    }
}

/// Evaluable policy.
#[derive(Clone)]
pub enum Policy {
    Uniform { num_actions: usize },
    /// Puts `1 - epsilon + epsilon/A` on the best-scored action (lowest index on
    /// ties) and `epsilon/A` on each other action.
    EpsGreedy { scorer: Arc<dyn ActionScorer>, epsilon: f64 },
    LinearSoftmax(LinearSoftmax),
    Tabular(TabularPolicy),
}

impl fmt::Debug for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::Uniform { num_actions } => write!(f, "Uniform({num_actions})"),
            Policy::EpsGreedy { scorer, epsilon } => {
                write!(f, "EpsGreedy(A={}, d={}, eps={epsilon})", scorer.num_actions(), scorer.dim())
            }
            Policy::LinearSoftmax(p) => write!(f, "LinearSoftmax({p:?})"),
            Policy::Tabular(t) => write!(f, "Tabular({} contexts)", t.contexts.len()),
        }
    }
}

impl Policy {
    pub fn eps_greedy(scorer: Arc<dyn ActionScorer>, epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return invalid(format!("epsilon {epsilon} outside [0, 1]"));
        }
        Ok(Policy::EpsGreedy { scorer, epsilon })
    }

    pub fn num_actions(&self) -> usize {
        match self {
            Policy::Uniform { num_actions } => *num_actions,
            Policy::EpsGreedy { scorer, .. } => scorer.num_actions(),
            Policy::LinearSoftmax(p) => p.num_actions(),
            Policy::Tabular(t) => t.probs[0].len(),
        }
    }

    /// Context dimension, when the policy constrains it.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Policy::Uniform { .. } => None,
            Policy::EpsGreedy { scorer, .. } => Some(scorer.dim()),
            Policy::LinearSoftmax(p) => Some(p.dim()),
            Policy::Tabular(t) => Some(t.contexts[0].len()),
        }
    }

    /// `pi(.|x)`.
    pub fn probs(&self, x: &[f64]) -> Result<Vec<f64>> {
        if let Some(d) = self.dim() {
            if x.len() != d {
                return invalid(format!("context has length {}, policy expects {d}", x.len()));
            }
        }
        match self {
            Policy::Uniform { num_actions } => Ok(vec![1.0 / *num_actions as f64; *num_actions]),
            Policy::EpsGreedy { scorer, epsilon } => Ok(eps_greedy_probs(&scorer.scores(x), *epsilon)),
            Policy::LinearSoftmax(p) => p.probs(x),
            Policy::Tabular(t) => t
                .contexts
                .iter()
                .position(|c| c.as_slice() == x)
                .map(|i| t.probs[i].clone())
                .ok_or_else(|| DolceError::InvalidInput("context not in tabular policy".into())),
        }
    }

    /// Score of a differentiable policy.
    pub fn score(&self, x: &[f64], a: usize) -> Result<Vec<f64>> {
        match self {
            Policy::LinearSoftmax(p) => p.score(x, a),
            other => Err(DolceError::UnsupportedPolicy(format!("{other:?} is not differentiable"))),
        }
    }

    pub fn as_softmax(&self) -> Result<&LinearSoftmax> {
        match self {
            Policy::LinearSoftmax(p) => Ok(p),
            other => Err(DolceError::UnsupportedPolicy(format!("{other:?} is not a linear softmax policy"))),
        }
    }
}

/// Free-function form of [`Policy::probs`].
pub fn policy_prob(policy: &Policy, x: &[f64]) -> Result<Vec<f64>> {
    policy.probs(x)
}

/// Free-function form of [`Policy::score`].
pub fn policy_score(policy: &Policy, x: &[f64], a: usize) -> Result<Vec<f64>> {
    policy.score(x, a)
}

pub fn eps_greedy_probs(scores: &[f64], epsilon: f64) -> Vec<f64> {
    let a = scores.len();
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    let mut out = vec![epsilon / a as f64; a];
    out[best] += 1.0 - epsilon;
    out
}

/// Serializable description of a policy, used by policy spec files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PolicySpec {
    Uniform { num_actions: usize },
    /// Softmax with `theta` given as `A` rows of length `d+1` (intercept last).
    LinearSoftmax { theta: Vec<Vec<f64>> },
    /// Epsilon-greedy on linear scores, weights as `A` rows of length `d+1`.
    EpsGreedyLinear { weights: Vec<Vec<f64>>, epsilon: f64 },
    Tabular { contexts: Vec<Vec<f64>>, probs: Vec<Vec<f64>> },
}

impl PolicySpec {
    pub fn build(&self) -> Result<Policy> {
        match self {
            PolicySpec::Uniform { num_actions } => {
                if *num_actions == 0 {
                    return invalid("uniform policy needs at least one action");
                }
                Ok(Policy::Uniform { num_actions: *num_actions })
            }
            PolicySpec::LinearSoftmax { theta } => {
                let a = theta.len();
                let p = theta.first().map_or(0, Vec::len);
                if p == 0 || theta.iter().any(|r| r.len() != p) {
                    return invalid("theta rows must share a positive length d+1");
                }
                Ok(Policy::LinearSoftmax(LinearSoftmax::new(a, p - 1, theta.concat())?))
            }
            PolicySpec::EpsGreedyLinear { weights, epsilon } => {
                let p = weights.first().map_or(0, Vec::len);
                if p == 0 || weights.iter().any(|r| r.len() != p) {
                    return invalid("weight rows must share a positive length d+1");
                }
                Policy::eps_greedy(Arc::new(LinearScorer { weights: weights.clone() }), *epsilon)
            }
            PolicySpec::Tabular { contexts, probs } => {
                Ok(Policy::Tabular(TabularPolicy::new(contexts.clone(), probs.clone())?))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_policy() {
        let p = Policy::Uniform { num_actions: 5 }.probs(&[1.0, 2.0]).unwrap();
        assert_eq!(p, vec![0.2; 5]);
    }

    #[test]
    fn zero_theta_is_uniform() {
        let p = Policy::LinearSoftmax(LinearSoftmax::zeros(4, 3)).probs(&[1.0, -2.0, 0.5]).unwrap();
        for v in p {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn eps_greedy_example() {
        let scorer = LinearScorer {
            weights: vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 0.0], vec![0.0, 0.0]],
        };
        let pol = Policy::eps_greedy(Arc::new(scorer), 0.1).unwrap();
        let p = pol.probs(&[2.0]).unwrap();
        assert!((p[2] - 0.92).abs() < 1e-12);
        for a in [0, 1, 3, 4] {
            assert!((p[a] - 0.02).abs() < 1e-12);
        }
    }

    #[test]
    fn eps_greedy_ties_go_to_lowest_index() {
        let p = eps_greedy_probs(&[1.0, 3.0, 3.0], 0.0);
        assert_eq!(p, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn intercept_only_score() {
        let pol = Policy::LinearSoftmax(LinearSoftmax::zeros(2, 0));
        assert_eq!(pol.score(&[], 0).unwrap(), vec![0.5, -0.5]);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let pol = Policy::LinearSoftmax(LinearSoftmax::zeros(2, 3));
        assert!(matches!(pol.probs(&[1.0]), Err(DolceError::InvalidInput(_))));
        assert!(matches!(
            Policy::Uniform { num_actions: 2 }.score(&[1.0], 0),
            Err(DolceError::UnsupportedPolicy(_))
        ));
    }

    #[test]
    fn tabular_lookup() {
        let t = TabularPolicy::new(vec![vec![0.0], vec![1.0]], vec![vec![0.3, 0.7], vec![1.0, 0.0]]).unwrap();
        let pol = Policy::Tabular(t);
        assert_eq!(pol.probs(&[1.0]).unwrap(), vec![1.0, 0.0]);
        assert!(pol.probs(&[0.5]).is_err());
    }

    #[test]
    fn spec_builds_each_variant() {
        let json = r#"{"type":"linear_softmax","theta":[[1.0,0.0],[0.0,1.0]]}"#;
        let spec: PolicySpec = serde_json::from_str(json).unwrap();
        let pol = spec.build().unwrap();
        assert_eq!(pol.dim(), Some(1));
        let json = r#"{"type":"eps_greedy_linear","weights":[[1.0,0.0],[0.0,1.0]],"epsilon":0.2}"#;
        let p = serde_json::from_str::<PolicySpec>(json).unwrap().build().unwrap().probs(&[3.0]).unwrap();
        assert!((p[0] - 0.9).abs() < 1e-12);
    }

    fn softmax_strategy() -> impl Strategy<Value = (LinearSoftmax, Vec<f64>)> {
        (1usize..6, 0usize..5).prop_flat_map(|(a, d)| {
            (
                prop::collection::vec(-5.0..5.0f64, a * (d + 1)),
                prop::collection::vec(-5.0..5.0f64, d),
            )
                .prop_map(move |(t, x)| (LinearSoftmax::new(a, d, t).unwrap(), x))
        })
    }

    proptest! {
        #[test]
        fn softmax_is_a_simplex((pol, x) in softmax_strategy()) {
            let p = pol.probs(&x).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|v| *v > 0.0));
            prop_assert_eq!(p, pol.probs(&x).unwrap());
        }

        #[test]
        fn score_has_zero_mean((pol, x) in softmax_strategy()) {
            let p = pol.probs(&x).unwrap();
            let mut acc = vec![0.0; pol.num_params()];
            for (a, pa) in p.iter().enumerate() {
                for (o, s) in acc.iter_mut().zip(pol.score(&x, a).unwrap()) {
                    *o += pa * s;
                }
            }
            prop_assert!(acc.iter().all(|v| v.abs() < 1e-10));
        }

        #[test]
        fn eps_greedy_is_a_simplex(scores in prop::collection::vec(-3.0..3.0f64, 1..8), eps in 0.0..=1.0f64) {
            let p = eps_greedy_probs(&scores, eps);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|v| *v >= 0.0));
        }

        #[test]
        fn score_matches_finite_differences((pol, x) in softmax_strategy(), a_raw in 0usize..6) {
            let a = a_raw % pol.num_actions();
            let s = pol.score(&x, a).unwrap();
            let h = 1e-6;
            for k in 0..pol.num_params() {
                let mut tp = pol.theta().to_vec();
                tp[k] += h;
                let mut tm = pol.theta().to_vec();
                tm[k] -= h;
                let fd = (pol.with_theta(tp).unwrap().log_prob(&x, a).unwrap()
                    - pol.with_theta(tm).unwrap().log_prob(&x, a).unwrap()) / (2.0 * h);
                prop_assert!((fd - s[k]).abs() <= 1e-4 * s[k].abs().max(1.0));
            }
        }
    }
}
