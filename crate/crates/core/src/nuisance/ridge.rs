//! Ridge regression with an unpenalized intercept.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::folds::FoldAssignment;
use crate::error::{invalid, DolceError, Result};
use crate::linalg::{inverse_spd, solve_spd, solve_spd_vec};
use crate::table::RowMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub reg: f64,
}

impl RidgeModel {
    #[inline]
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    /// Model with zero weights and the given intercept.
    pub fn constant(p: usize, value: f64, reg: f64) -> Self {
        Self { weights: vec![0.0; p], intercept: value, reg }
    }
}

fn check_reg(reg: f64) -> Result<()> {
    if !(reg > 0.0) || !reg.is_finite() {
        return Err(DolceError::InvalidConfig(format!("ridge penalty must be positive, got {reg}")));
    }
    Ok(())
}

/// Minimizes `||y - X w - b||^2 + reg ||w||^2` over all rows.
pub fn fit_ridge(x: &RowMatrix, y: &[f64], reg: f64) -> Result<RidgeModel> {
    let rows: Vec<usize> = (0..x.rows()).collect();
    fit_ridge_subset(x, &rows, y, reg, None)
}

/// Ridge fit on `rows` of `x` (targets `y[i]` for row `i`).
///
/// Columns with `keep[j] == false` are excluded and get weight zero.
pub fn fit_ridge_subset(x: &RowMatrix, rows: &[usize], y: &[f64], reg: f64, keep: Option<&[bool]>) -> Result<RidgeModel> {
    check_reg(reg)?;
    if rows.is_empty() {
        return invalid("ridge fit needs at least one row");
    }
    let p = x.cols();
    let cols: Vec<usize> = match keep {
        Some(k) => (0..p).filter(|&j| k[j]).collect(),
        None => (0..p).collect(),
    };
    let q = cols.len() + 1;
    let mut g = DMatrix::<f64>::zeros(q, q);
    let mut c = DVector::<f64>::zeros(q);
    let mut xt = vec![0.0; q];
    for &i in rows {
        let r = x.row(i);
        xt[0] = 1.0;
        for (t, &j) in cols.iter().enumerate() {
            xt[t + 1] = r[j];
        }
        for a in 0..q {
            let va = xt[a];
            if va == 0.0 {
                continue;
            }
            c[a] += va * y[i];
            for b in a..q {
                g[(a, b)] += va * xt[b];
            }
        }
    }
    for a in 1..q {
        g[(a, a)] += reg;
        for b in 0..a {
            g[(a, b)] = g[(b, a)];
        }
    }
    let sol = solve_spd_vec(&g, &c)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(DolceError::Numeric("ridge solution is not finite".into()));
    }
    let mut weights = vec![0.0; p];
    for (t, &j) in cols.iter().enumerate() {
        weights[j] = sol[t + 1];
    }
    Ok(RidgeModel { weights, intercept: sol[0], reg })
}

/// Several ridge regressions sharing one design; coefficients are `(p+1) x t`
/// with the intercept in row 0.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiRidge {
    pub coef: DMatrix<f64>,
    pub reg: f64,
}

impl MultiRidge {
    pub fn num_targets(&self) -> usize {
        self.coef.ncols()
    }

    pub fn predict_into(&self, x: &[f64], out: &mut [f64]) {
        for (t, o) in out.iter_mut().enumerate() {
            let col = self.coef.column(t);
            *o = col[0] + x.iter().enumerate().map(|(j, v)| col[j + 1] * v).sum::<f64>();
        }
    }

    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_targets()];
        self.predict_into(x, &mut out);
        out
    }
}

/// Ridge regressions of a fixed design, cross-fitted over folds.
///
/// The per-fold training Gram inverses are computed once, so refitting for new
/// targets costs one pass over the data plus small matrix products.
#[derive(Clone, Debug)]
pub struct CrossFitRidge {
    x: RowMatrix,
    folds: FoldAssignment,
    inv: Vec<DMatrix<f64>>,
    reg: f64,
}

impl CrossFitRidge {
    pub fn new(x: RowMatrix, folds: FoldAssignment, reg: f64) -> Result<Self> {
        check_reg(reg)?;
        if x.rows() != folds.len() {
            return invalid("design rows and fold assignment differ in length");
        }
        let p = x.cols() + 1;
        let k = folds.num_folds();
        let mut per_fold = vec![DMatrix::<f64>::zeros(p, p); k];
        let mut xt = vec![0.0; p];
        for i in 0..x.rows() {
            xt[0] = 1.0;
            xt[1..].copy_from_slice(x.row(i));
            let g = &mut per_fold[folds.fold_of(i)];
            for a in 0..p {
                if xt[a] == 0.0 {
                    continue;
                }
                for b in a..p {
                    g[(a, b)] += xt[a] * xt[b];
                }
            }
        }
        let total = per_fold.iter().fold(DMatrix::<f64>::zeros(p, p), |acc, g| acc + g);
        let mut inv = Vec::with_capacity(k);
        for g in &per_fold {
            let mut t = &total - g;
            for a in 0..p {
                if a > 0 {
                    t[(a, a)] += reg;
                }
                for b in 0..a {
                    t[(a, b)] = t[(b, a)];
                }
            }
            inv.push(inverse_spd(&t)?);
        }
        Ok(Self { x, folds, inv, reg })
    }

    pub fn folds(&self) -> &FoldAssignment {
        &self.folds
    }

    pub fn design(&self) -> &RowMatrix {
        &self.x
    }

    /// Per-fold models for the columns of `y` (`n x t`).
    pub fn fit(&self, y: &RowMatrix) -> Vec<MultiRidge> {
        let p = self.x.cols() + 1;
        let t = y.cols();
        let k = self.folds.num_folds();
        let mut cross = vec![vec![0.0; p * t]; k];
        for i in 0..self.x.rows() {
            let c = &mut cross[self.folds.fold_of(i)];
            let yi = y.row(i);
            for (o, v) in c[..t].iter_mut().zip(yi) {
                *o += v;
            }
            for (j, &xv) in self.x.row(i).iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                let blk = &mut c[(j + 1) * t..(j + 2) * t];
                for (o, v) in blk.iter_mut().zip(yi) {
                    *o += xv * v;
                }
            }
        }
        let mut total = vec![0.0; p * t];
        for c in &cross {
            for (o, v) in total.iter_mut().zip(c) {
                *o += v;
            }
        }
        (0..k)
            .map(|j| {
                let train = DMatrix::from_fn(p, t, |r, c| total[r * t + c] - cross[j][r * t + c]);
                MultiRidge { coef: &self.inv[j] * train, reg: self.reg }
            })
            .collect()
    }

    /// Out-of-fold predictions for every row.
    pub fn fit_predict(&self, y: &RowMatrix) -> RowMatrix {
        let models = self.fit(y);
        let mut out = RowMatrix::zeros(self.x.rows(), y.cols());
        for i in 0..self.x.rows() {
            models[self.folds.fold_of(i)].predict_into(self.x.row(i), out.row_mut(i));
        }
        out
    }
}

/// Direct multi-target ridge on `rows`, used where no fold cache exists.
pub fn fit_multi_ridge(x: &RowMatrix, rows: &[usize], y: &RowMatrix, reg: f64) -> Result<MultiRidge> {
    check_reg(reg)?;
    if rows.is_empty() {
        return invalid("ridge fit needs at least one row");
    }
    let p = x.cols() + 1;
    let t = y.cols();
    let mut g = DMatrix::<f64>::zeros(p, p);
    let mut c = DMatrix::<f64>::zeros(p, t);
    let mut xt = vec![0.0; p];
    for &i in rows {
        xt[0] = 1.0;
        xt[1..].copy_from_slice(x.row(i));
        for a in 0..p {
            if xt[a] == 0.0 {
                continue;
            }
            for b in a..p {
                g[(a, b)] += xt[a] * xt[b];
            }
            for (k, v) in y.row(i).iter().enumerate() {
                c[(a, k)] += xt[a] * v;
            }
        }
    }
    for a in 0..p {
        if a > 0 {
            g[(a, a)] += reg;
        }
        for b in 0..a {
            g[(a, b)] = g[(b, a)];
        }
    }
    Ok(MultiRidge { coef: solve_spd(&g, &c)?, reg })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nuisance::folds::kfold_split;

    #[test]
    fn exact_linear_fit() {
        let x = RowMatrix::from_fn(20, 1, |i, _| i as f64 * 0.3 - 2.0);
        let y: Vec<f64> = (0..20).map(|i| 2.0 * x.get(i, 0) + 1.0).collect();
        let m = fit_ridge(&x, &y, 1e-8).unwrap();
        assert!((m.weights[0] - 2.0).abs() < 1e-6);
        assert!((m.intercept - 1.0).abs() < 1e-6);
    }

    #[test]
    fn heavy_penalty_gives_mean() {
        let x = RowMatrix::from_fn(10, 2, |i, j| (i * (j + 1)) as f64);
        let y: Vec<f64> = (0..10).map(|i| (i as f64).sin()).collect();
        let m = fit_ridge(&x, &y, 1e9).unwrap();
        assert!(m.weights.iter().all(|w| w.abs() < 1e-6));
        assert!((m.intercept - crate::stats::mean(&y)).abs() < 1e-5);
    }

    #[test]
    fn three_by_two_hand_solution() {
        // Rows (1,0), (0,1), (1,1); y = (1, 2, 4); reg = 1.
        // Normal equations with intercept b, weights w1, w2:
        // [3 2 2; 2 3 1; 2 1 3] [b w1 w2]' = [7 5 6]'.
        let x = RowMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
        let m = fit_ridge(&x, &[1.0, 2.0, 4.0], 1.0).unwrap();
        // Cramer's rule: det = 8, b = 12/8, w1 = 3/8, w2 = 7/8.
        assert!((m.intercept - 1.5).abs() < 1e-12);
        assert!((m.weights[0] - 0.375).abs() < 1e-12);
        assert!((m.weights[1] - 0.875).abs() < 1e-12);
    }

    #[test]
    fn masked_columns_get_zero_weight() {
        let x = RowMatrix::from_fn(15, 3, |i, j| ((i + 2 * j) as f64).cos());
        let y: Vec<f64> = (0..15).map(|i| i as f64).collect();
        let rows: Vec<usize> = (0..15).collect();
        let m = fit_ridge_subset(&x, &rows, &y, 0.5, Some(&[true, false, true])).unwrap();
        assert_eq!(m.weights[1], 0.0);
        let x2 = RowMatrix::from_fn(15, 2, |i, j| x.get(i, if j == 0 { 0 } else { 2 }));
        let m2 = fit_ridge(&x2, &y, 0.5).unwrap();
        assert!((m.weights[2] - m2.weights[1]).abs() < 1e-12);
        assert!(fit_ridge(&x, &y, 0.0).is_err());
    }

    #[test]
    fn cached_cross_fit_matches_direct_fits() {
        let n = 60;
        let x = RowMatrix::from_fn(n, 3, |i, j| ((i * 7 + j * 3) as f64 * 0.37).sin());
        let y = RowMatrix::from_fn(n, 2, |i, j| ((i + j) as f64 * 0.11).cos() + x.get(i, 0));
        let folds = kfold_split(n, 4, 1).unwrap();
        let cf = CrossFitRidge::new(x.clone(), folds.clone(), 0.3).unwrap();
        let models = cf.fit(&y);
        for j in 0..4 {
            let direct = fit_multi_ridge(&x, &folds.train_indices(j), &y, 0.3).unwrap();
            assert!((&direct.coef - &models[j].coef).abs().max() < 1e-10);
            let col: Vec<f64> = (0..n).map(|i| y.get(i, 1)).collect();
            let single = fit_ridge_subset(&x, &folds.train_indices(j), &col, 0.3, None).unwrap();
            assert!((single.intercept - models[j].coef[(0, 1)]).abs() < 1e-10);
        }
    }
}
