//! Monte Carlo checks of the estimators and gradients against exact
//! expectations on finite environments.

use dolce::estimators::{dm_from_parts, dolce_lag_from_parts, dr_from_parts, ips_from_parts, logged_probs};
use dolce::opl::{column_means, grad_dolce_from_parts, grad_dr_contributions, grad_ips_contributions};
use dolce::oracle::{
    exact_bias_ips, exact_gradient, exact_lag_scores, exact_value, has_lag_overlap, oracle_lag_weights,
    random_env, random_lag_table, random_policy_table, random_x_table, shift_by_lag, DiscreteEnv, PolicyTable,
    RandomEnvSpec, XTable,
};
use dolce::rng::rng_from_seed;
use dolce::stats::{mean, variance};
use dolce::table::{ActionTable, RowMatrix};
use dolce::{LaggedDataset, LinearSoftmax, Policy};
use rand::Rng;
use rand_distr::StandardNormal;

type Idx = Vec<(usize, usize)>;

fn pi_rows(pi: &PolicyTable, idx: &Idx) -> ActionTable {
    ActionTable::from_fn(idx.len(), pi[0].len(), |i, a| pi[idx[i].0][a])
}

fn x_rows(t: &XTable, idx: &Idx) -> ActionTable {
    ActionTable::from_fn(idx.len(), t[0][0].len(), |i, a| t[idx[i].0][idx[i].1][a])
}

fn mc_summary(xs: &[f64]) -> (f64, f64) {
    (mean(xs), (variance(xs) / xs.len() as f64).sqrt())
}

/// Column means and standard errors of a contribution matrix.
fn column_se(c: &RowMatrix) -> (Vec<f64>, Vec<f64>) {
    let m = column_means(c);
    let n = c.rows() as f64;
    let mut v = vec![0.0; c.cols()];
    for i in 0..c.rows() {
        for (j, x) in c.row(i).iter().enumerate() {
            v[j] += (x - m[j]).powi(2);
        }
    }
    (m, v.iter().map(|s| (s / n / n).sqrt()).collect())
}

/// An environment with current-context support violation, lag overlap and a
/// large IPS bias for the returned target table.
fn violating_env() -> (DiscreteEnv, PolicyTable) {
    for seed in 0..500 {
        let mut rng = rng_from_seed(seed);
        let env = random_env(&mut rng, &RandomEnvSpec { zero_prob: 0.5, ..Default::default() });
        let pi = random_policy_table(&mut rng, env.n_cur(), env.num_actions());
        if has_lag_overlap(&env, &pi) && exact_bias_ips(&env, &pi).abs() > 0.3 {
            return (env, pi);
        }
    }
    panic!("no violating environment found");
}

fn full_support_env(seed: u64) -> DiscreteEnv {
    let mut rng = rng_from_seed(seed);
    random_env(&mut rng, &RandomEnvSpec { zero_prob: 0.0, ..Default::default() })
}

fn softmax_for(env: &DiscreteEnv, seed: u64) -> LinearSoftmax {
    let mut rng = rng_from_seed(seed);
    let dim = env.feature_dim();
    let theta = (0..env.num_actions() * (dim + 1)).map(|_| 0.7 * rng.sample::<f64, _>(StandardNormal)).collect();
    LinearSoftmax::new(env.num_actions(), dim, theta).unwrap()
}

fn sample(env: &DiscreteEnv, n: usize, seed: u64) -> (LaggedDataset, Idx) {
    env.sample(n, &mut rng_from_seed(seed)).unwrap()
}

#[test]
fn ips_mean_matches_exact_bias() {
    let (env, pi) = violating_env();
    let (data, idx) = sample(&env, 100_000, 1);
    let r = ips_from_parts(
        &logged_probs(&pi_rows(&pi, &idx), &data.actions()),
        &data.propensities().unwrap(),
        &data.rewards(),
        0.95,
    )
    .unwrap();
    let target = exact_value(&env, &pi) + exact_bias_ips(&env, &pi);
    assert!((r.value - target).abs() < 3.0 * r.se, "{} vs {} (se {})", r.value, target, r.se);
}

#[test]
fn dm_with_true_model_is_unbiased() {
    let (env, pi) = violating_env();
    let (_, idx) = sample(&env, 10_000, 2);
    let r = dm_from_parts(&pi_rows(&pi, &idx), &x_rows(&env.q, &idx), 0.95).unwrap();
    let v = exact_value(&env, &pi);
    assert!((r.value - v).abs() < 3.0 * r.se, "{} vs {v}", r.value);
}

#[test]
fn dr_on_policy_with_true_model() {
    let env = full_support_env(3);
    let (data, idx) = sample(&env, 100_000, 3);
    let pi = env.pi0.clone();
    let r = dr_from_parts(
        &pi_rows(&pi, &idx),
        &data.actions(),
        &data.rewards(),
        &data.propensities().unwrap(),
        &x_rows(&env.q, &idx),
        0.95,
    )
    .unwrap();
    let v = exact_value(&env, &pi);
    assert!((r.value - v).abs() < 3.0 * r.se);
}

#[test]
fn dr_is_doubly_robust_with_true_propensities() {
    let env = full_support_env(4);
    let mut rng = rng_from_seed(40);
    let pi = random_policy_table(&mut rng, env.n_cur(), env.num_actions());
    let wrong = random_x_table(&mut rng, &env);
    let (data, idx) = sample(&env, 100_000, 4);
    let r = dr_from_parts(
        &pi_rows(&pi, &idx),
        &data.actions(),
        &data.rewards(),
        &data.propensities().unwrap(),
        &x_rows(&wrong, &idx),
        0.95,
    )
    .unwrap();
    let v = exact_value(&env, &pi);
    assert!((r.value - v).abs() < 3.0 * r.se, "{} vs {v}", r.value);
}

#[test]
fn oracle_lag_estimator_is_unbiased_where_ips_fails() {
    let (env, pi) = violating_env();
    let v = exact_value(&env, &pi);
    let delta = random_lag_table(&mut rng_from_seed(55), env.n_lag(), env.num_actions());
    let q_tilde = shift_by_lag(&env, &delta);
    let w_tab = oracle_lag_weights(&env, &pi, f64::INFINITY);
    let mut dolce = Vec::new();
    let mut ips = Vec::new();
    for rep in 0..200 {
        let (data, idx) = sample(&env, 5000, 1000 + rep);
        let actions = data.actions();
        let pit = pi_rows(&pi, &idx);
        let w: Vec<f64> = idx.iter().zip(&actions).map(|(&(_, x0), &a)| w_tab[x0][a]).collect();
        dolce.push(
            dolce_lag_from_parts(&pit, &actions, &data.rewards(), &w, &x_rows(&q_tilde, &idx), 0.95).unwrap().value,
        );
        ips.push(
            ips_from_parts(&logged_probs(&pit, &actions), &data.propensities().unwrap(), &data.rewards(), 0.95)
                .unwrap()
                .value,
        );
    }
    let (md, sd) = mc_summary(&dolce);
    let (mi, si) = mc_summary(&ips);
    assert!((md - v).abs() < 3.0 * sd, "lag estimator {md} vs {v} (se {sd})");
    assert!((mi - v).abs() > 10.0 * si, "IPS {mi} vs {v} (se {si})");
}

#[test]
fn ips_gradient_is_unbiased_under_full_support() {
    let env = full_support_env(6);
    let pol = softmax_for(&env, 60);
    let (data, _) = sample(&env, 100_000, 6);
    let c = grad_ips_contributions(&data, &pol, &data.propensities().unwrap()).unwrap();
    let (m, se) = column_se(&c);
    let g = exact_gradient(&env, &pol).unwrap();
    for j in 0..g.len() {
        assert!((m[j] - g[j]).abs() <= 3.0 * se[j] + 1e-12, "coord {j}: {} vs {} (se {})", m[j], g[j], se[j]);
    }
}

#[test]
fn dr_gradient_with_true_model_is_unbiased() {
    let (env, _) = violating_env();
    let pol = softmax_for(&env, 61);
    let (data, idx) = sample(&env, 100_000, 7);
    let c = grad_dr_contributions(&data, &pol, &x_rows(&env.q, &idx), &data.propensities().unwrap()).unwrap();
    let (m, se) = column_se(&c);
    let g = exact_gradient(&env, &pol).unwrap();
    for j in 0..g.len() {
        assert!((m[j] - g[j]).abs() <= 3.0 * se[j] + 1e-12, "coord {j}");
    }
}

#[test]
fn oracle_lag_gradient_is_unbiased_where_ips_fails() {
    let (env, _) = violating_env();
    let pol = softmax_for(&env, 62);
    let pi = env.policy_table(&Policy::LinearSoftmax(pol.clone())).unwrap();
    assert!(has_lag_overlap(&env, &pi));
    let delta = random_lag_table(&mut rng_from_seed(56), env.n_lag(), env.num_actions());
    let q_tilde = shift_by_lag(&env, &delta);
    let w_tab = oracle_lag_weights(&env, &pi, f64::INFINITY);
    let bar_s = exact_lag_scores(&env, &pol).unwrap();
    let (data, idx) = sample(&env, 100_000, 8);
    let actions = data.actions();
    let w: Vec<f64> = idx.iter().zip(&actions).map(|(&(_, x0), &a)| w_tab[x0][a]).collect();
    let bs = RowMatrix::from_fn(data.len(), pol.num_params(), |i, j| bar_s[idx[i].1][actions[i]][j]);
    let c = grad_dolce_from_parts(&data, &pol, &w, &bs, &x_rows(&q_tilde, &idx)).unwrap();
    let (m, se) = column_se(&c);
    let g = exact_gradient(&env, &pol).unwrap();
    for j in 0..g.len() {
        assert!((m[j] - g[j]).abs() <= 3.0 * se[j] + 1e-12, "coord {j}: {} vs {} (se {})", m[j], g[j], se[j]);
    }
    let ci = grad_ips_contributions(&data, &pol, &data.propensities().unwrap()).unwrap();
    let (mi, sei) = column_se(&ci);
    let worst = (0..g.len()).map(|j| (mi[j] - g[j]).abs() / sei[j]).fold(0.0, f64::max);
    assert!(worst > 10.0, "IPS gradient is off by only {worst} SE");
}
