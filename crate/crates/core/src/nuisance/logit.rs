//! Regularized multinomial logistic regression fitted by damped Newton steps.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, DolceError, Result};
use crate::linalg::solve_spd_vec;
use crate::table::RowMatrix;

/// Penalty on intercepts; removes the softmax shift invariance.
const INTERCEPT_JITTER: f64 = 1e-8;
const MAX_ITER: usize = 100;
const GRAD_TOL: f64 = 1e-9;

/// `P(A = a | z)` as `softmax(theta [1; z])`, `theta` row-major `A x (p+1)`
/// with the intercept in column 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultinomialLogitModel {
    pub theta: Vec<f64>,
    pub num_actions: usize,
    pub dim: usize,
    pub reg: f64,
    pub p_min: f64,
    pub fitted: bool,
}

impl MultinomialLogitModel {
    /// Unfloored softmax probabilities.
    pub fn raw_probs(&self, z: &[f64], out: &mut [f64]) {
        let p = self.dim + 1;
        let mut m = f64::NEG_INFINITY;
        for (a, o) in out.iter_mut().enumerate() {
            let row = &self.theta[a * p..(a + 1) * p];
            *o = row[0] + row[1..].iter().zip(z).map(|(t, v)| t * v).sum::<f64>();
            m = m.max(*o);
        }
        let mut s = 0.0;
        for o in out.iter_mut() {
            *o = (*o - m).exp();
            s += *o;
        }
        out.iter_mut().for_each(|o| *o /= s);
    }

    /// Probabilities floored at `p_min` and renormalized.
    pub fn predict(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_actions];
        self.raw_probs(z, &mut out);
        floor_simplex(&mut out, self.p_min);
        out
    }
}

/// Projects `v` onto the simplex with every entry at least `p_min`: entries
/// below the floor are raised to it and the rest are rescaled to fill the
/// remaining mass.
pub fn floor_simplex(v: &mut [f64], p_min: f64) {
    let a = v.len();
    debug_assert!(p_min * a as f64 <= 1.0);
    v.iter_mut().for_each(|x| *x = x.max(0.0));
    let mut fixed = vec![false; a];
    loop {
        let n_fixed = fixed.iter().filter(|f| **f).count();
        let free_mass: f64 = v.iter().zip(&fixed).filter(|(_, f)| !**f).map(|(x, _)| *x).sum();
        let target = 1.0 - n_fixed as f64 * p_min;
        if free_mass <= 0.0 {
            let free = a - n_fixed;
            for (x, f) in v.iter_mut().zip(&fixed) {
                *x = if *f { p_min } else { target / free as f64 };
            }
            return;
        }
        let scale = target / free_mass;
        let mut changed = false;
        for (x, f) in v.iter().zip(fixed.iter_mut()) {
            if !*f && x * scale < p_min {
                *f = true;
                changed = true;
            }
        }
        if !changed {
            for (x, f) in v.iter_mut().zip(&fixed) {
                *x = if *f { p_min } else { *x * scale };
            }
            return;
        }
    }
}

/// Fits the model on `rows` of `z` with labels `actions[i]`.
///
/// Minimizes mean negative log-likelihood plus `reg/2` times the squared norm
/// of the non-intercept coefficients.
pub fn fit_logit(
    z: &RowMatrix,
    rows: &[usize],
    actions: &[usize],
    num_actions: usize,
    reg: f64,
    p_min: f64,
) -> Result<MultinomialLogitModel> {
    if !(reg > 0.0) {
        return Err(DolceError::InvalidConfig(format!("logit penalty must be positive, got {reg}")));
    }
    if rows.is_empty() {
        return invalid("logit fit needs at least one row");
    }
    if p_min * num_actions as f64 > 1.0 {
        return Err(DolceError::InvalidConfig("p_min times the number of actions exceeds 1".into()));
    }
    let d = z.cols();
    let p = d + 1;
    let k = num_actions * p;
    let n = rows.len() as f64;
    let mut model = MultinomialLogitModel {
        theta: vec![0.0; k],
        num_actions,
        dim: d,
        reg,
        p_min,
        fitted: false,
    };
    if num_actions == 1 {
        model.fitted = true;
        return Ok(model);
    }
    let penalty = |j: usize| if j % p == 0 { INTERCEPT_JITTER } else { reg };

    let template = model.clone();
    let objective = |theta: &[f64]| -> f64 {
        let m = MultinomialLogitModel { theta: theta.to_vec(), ..template.clone() };
        let mut probs = vec![0.0; num_actions];
        let mut nll = 0.0;
        for &i in rows {
            m.raw_probs(z.row(i), &mut probs);
            nll -= probs[actions[i]].max(1e-300).ln();
        }
        nll / n + 0.5 * theta.iter().enumerate().map(|(j, t)| penalty(j) * t * t).sum::<f64>()
    };

    let mut probs = vec![0.0; num_actions];
    let mut xt = vec![0.0; p];
    let mut f_cur = objective(&model.theta);
    let mut grad_norm = f64::INFINITY;
    for _ in 0..MAX_ITER {
        let mut grad = DVector::<f64>::zeros(k);
        // Per action pair (a, b), accumulate sum_i c_iab x_i x_i^T.
        let mut hess = DMatrix::<f64>::zeros(k, k);
        for &i in rows {
            model.raw_probs(z.row(i), &mut probs);
            xt[0] = 1.0;
            xt[1..].copy_from_slice(z.row(i));
            for a in 0..num_actions {
                let r = probs[a] - if actions[i] == a { 1.0 } else { 0.0 };
                for (j, xv) in xt.iter().enumerate() {
                    grad[a * p + j] += r * xv;
                }
                for b in a..num_actions {
                    let c = if a == b { probs[a] * (1.0 - probs[a]) } else { -probs[a] * probs[b] };
                    for j in 0..p {
                        let cj = c * xt[j];
                        if cj == 0.0 {
                            continue;
                        }
                        for l in 0..p {
                            hess[(a * p + j, b * p + l)] += cj * xt[l];
                        }
                    }
                }
            }
        }
        for r in 0..k {
            for c in r..k {
                let v = hess[(r, c)] / n;
                hess[(r, c)] = v;
                hess[(c, r)] = v;
            }
        }
        for j in 0..k {
            grad[j] = grad[j] / n + penalty(j) * model.theta[j];
            hess[(j, j)] += penalty(j);
        }
        grad_norm = grad.amax();
        if grad_norm < GRAD_TOL {
            model.fitted = true;
            return Ok(model);
        }
        let step = solve_spd_vec(&hess, &grad)?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<f64> = model.theta.iter().zip(step.iter()).map(|(th, s)| th - t * s).collect();
            let f_new = objective(&cand);
            if f_new <= f_cur - 1e-4 * t * grad.dot(&step) {
                model.theta = cand;
                f_cur = f_new;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // No decrease is achievable at working precision.
            if grad_norm < 1e-6 {
                model.fitted = true;
                return Ok(model);
            }
            break;
        }
    }
    if grad_norm < 1e-6 {
        model.fitted = true;
        return Ok(model);
    }
    Err(DolceError::Convergence { iterations: MAX_ITER, grad_norm })
}
