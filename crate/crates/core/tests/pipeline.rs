//! End-to-end runs of the fitted estimators on synthetic and finite data.

use dolce::data::LaggedSample;
use dolce::estimators::{evaluate, EstimatorKind, PropensitySource};
use dolce::nuisance::{kfold_split, FeatureSpec, NuisanceConfig};
use dolce::opl::fit_lag_score_marginal;
use dolce::oracle::{exact_lag_marginals, exact_lag_scores, DiscreteEnv};
use dolce::rng::rng_from_seed;
use dolce::synth::{generate, make_env, SynthConfig};
use dolce::{LaggedDataset, LinearSoftmax, Policy};
use rand::Rng;
use rand_distr::StandardNormal;

fn small_env(seed: u64, lag_only_reward: bool) -> DiscreteEnv {
    let mut rng = rng_from_seed(seed);
    let simplex = |k: usize, rng: &mut dolce::rng::DolceRng| -> Vec<f64> {
        let v: Vec<f64> = (0..k).map(|_| 0.2 + rng.random::<f64>()).collect();
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    };
    let (n0, nx, na) = (3, 4, 3);
    let p0 = simplex(n0, &mut rng);
    // Strong dependence of x on x0 so a lag carries information.
    let p_x_given_x0: Vec<Vec<f64>> = (0..n0)
        .map(|x0| {
            let mut p = simplex(nx, &mut rng);
            p[x0] += 2.0;
            let s: f64 = p.iter().sum();
            p.into_iter().map(|v| v / s).collect()
        })
        .collect();
    let pi0 = (0..nx).map(|_| simplex(na, &mut rng)).collect();
    let g: Vec<Vec<f64>> = (0..n0).map(|_| (0..na).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()).collect();
    let f: Vec<Vec<f64>> = (0..nx).map(|_| (0..na).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()).collect();
    let q = (0..nx)
        .map(|x| (0..n0).map(|x0| (0..na).map(|a| g[x0][a] + if lag_only_reward { 0.0 } else { f[x][a] }).collect()).collect())
        .collect();
    let sigma2 = vec![vec![vec![0.25; na]; n0]; nx];
    DiscreteEnv { p0, p_x_given_x0, pi0, q, sigma2 }
}

#[test]
fn synthetic_csv_round_trip_reproduces_estimates() {
    let cfg = SynthConfig { n: 400, ..Default::default() };
    let env = make_env(&cfg).unwrap();
    let data = generate(&cfg, &env).unwrap().dataset;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    data.save_csv(&path).unwrap();
    let back = LaggedDataset::read_csv(std::fs::File::open(&path).unwrap(), Some(cfg.num_actions)).unwrap();
    assert_eq!(back.samples(), data.samples());
    let policy = dolce::synth::target_policy(&env, cfg.target_epsilon).unwrap();
    let ncfg = NuisanceConfig { k_cf: 4, ..Default::default() };
    let a = evaluate(&data, &policy, &EstimatorKind::ALL, &ncfg, PropensitySource::Auto, 9).unwrap();
    let b = evaluate(&back, &policy, &EstimatorKind::ALL, &ncfg, PropensitySource::Auto, 9).unwrap();
    for (x, y) in a.reports.iter().zip(&b.reports) {
        assert_eq!(x.value.to_bits(), y.value.to_bits());
        assert_eq!(x.se.to_bits(), y.se.to_bits());
    }
}

#[test]
fn uniform_target_without_violation_agrees_across_estimators() {
    let cfg = SynthConfig { violation_ratio: 0.0, ..Default::default() };
    let env = make_env(&cfg).unwrap();
    let data = generate(&cfg, &env).unwrap().dataset;
    let policy = Policy::Uniform { num_actions: cfg.num_actions };
    let ev = evaluate(&data, &policy, &EstimatorKind::ALL, &NuisanceConfig::default(), PropensitySource::Auto, 3).unwrap();
    for x in &ev.reports {
        for y in &ev.reports {
            let tol = 3.0 * (x.se * x.se + y.se * y.se).sqrt();
            assert!((x.value - y.value).abs() <= tol, "{} {} vs {} {}", x.estimator, x.value, y.estimator, y.value);
        }
    }
}

#[test]
fn baselines_run_without_lags_but_lag_estimator_is_refused() {
    let cfg = SynthConfig { n: 300, ..Default::default() };
    let env = make_env(&cfg).unwrap();
    let data = generate(&cfg, &env).unwrap().dataset;
    let stripped = LaggedDataset::new(
        data.samples().iter().map(|s| LaggedSample { x_lags: vec![], ..s.clone() }).collect(),
        cfg.num_actions,
        vec![],
    )
    .unwrap();
    let policy = Policy::Uniform { num_actions: cfg.num_actions };
    let ncfg = NuisanceConfig { k_cf: 3, ..Default::default() };
    let base = [EstimatorKind::Dm, EstimatorKind::Ips, EstimatorKind::Dr];
    let ev = evaluate(&stripped, &policy, &base, &ncfg, PropensitySource::Auto, 0).unwrap();
    assert_eq!(ev.reports.len(), 3);
    let err = evaluate(&stripped, &policy, &EstimatorKind::ALL, &ncfg, PropensitySource::Auto, 0).unwrap_err();
    assert!(err.to_string().contains("lag"), "{err}");
}

#[test]
fn fitted_lag_scores_match_enumeration() {
    let env = small_env(12, false);
    let (data, _) = env.sample(100_000, &mut rng_from_seed(12)).unwrap();
    let mut rng = rng_from_seed(13);
    let theta = (0..3 * (env.feature_dim() + 1)).map(|_| 0.8 * rng.sample::<f64, _>(StandardNormal)).collect();
    let pol = LinearSoftmax::new(3, env.feature_dim(), theta).unwrap();
    let folds = kfold_split(data.len(), 2, 0).unwrap();
    let sm = fit_lag_score_marginal(&data, &pol, 0, &folds, 1e-6, 1e-3).unwrap();
    let exact = exact_lag_scores(&env, &pol).unwrap();
    let (bt, _) = exact_lag_marginals(&env, &env.policy_table(&Policy::LinearSoftmax(pol.clone())).unwrap());
    for x0 in 0..env.n_lag() {
        let (bar_pi, bar_s) = sm.predict(0, &env.lag_feature(x0));
        for a in 0..3 {
            assert!((bar_pi[a] - bt[x0][a]).abs() < 0.02);
            for (u, v) in bar_s[a].iter().zip(&exact[x0][a]) {
                assert!((u - v).abs() < 0.05, "x0 {x0} a {a}: {u} vs {v}");
            }
        }
    }
}

#[test]
fn softmin_aggregate_follows_the_invariant_lag() {
    let env = small_env(21, true);
    let mut rng = rng_from_seed(22);
    let (data, _) = env.sample(20_000, &mut rng).unwrap();
    // Second lag: an independent one-hot block carrying no information.
    let n_lag = env.n_lag();
    let samples = data
        .samples()
        .iter()
        .map(|s| {
            let u = rng.random_range(0..n_lag);
            LaggedSample { x_lags: vec![s.x_lags[0].clone(), env.lag_feature(u)], ..s.clone() }
        })
        .collect();
    let two = LaggedDataset::new(samples, 3, vec!["1".into(), "2".into()]).unwrap();
    let mut ncfg = NuisanceConfig { tau: 1e-4, ..Default::default() };
    ncfg.reward.features = FeatureSpec::lag_only();
    ncfg.reward.min_support = 0.0;
    ncfg.alc.min_support = 0.0;
    let pi = env.policy_table(&Policy::Uniform { num_actions: 3 }).unwrap();
    assert!(pi.iter().all(|r| r.iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-15)));
    let ev = evaluate(&two, &Policy::Uniform { num_actions: 3 }, &[EstimatorKind::Dolce], &ncfg, PropensitySource::Auto, 5)
        .unwrap();
    let ns = ev.nuisances.unwrap();
    let alc = ns.alcs();
    assert!(alc[0] < alc[1], "{alc:?}");
    let agg = &ev.reports[0];
    let good = dolce::estimators::dolce_lag_estimate(&two, &ns, 0, 0.95).unwrap();
    assert!((agg.value - good.value).abs() <= 2.0 * good.se);
    assert!(agg.lag_weights_alpha[0] > 0.99);
}
