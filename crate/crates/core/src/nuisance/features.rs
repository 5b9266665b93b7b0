//! Feature maps over `(x, x_lag)` for the regression nuisances.

use serde::{Deserialize, Serialize};

use crate::data::LaggedDataset;
use crate::error::{invalid, Result};
use crate::table::RowMatrix;

/// Blocks are emitted in field order: current linear, current threshold
/// indicators (one block per knot), current squares, lag linear, and
/// current-times-lag products.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSpec {
    pub current_linear: bool,
    pub current_knots: Vec<f64>,
    pub current_squares: bool,
    pub lag_linear: bool,
    pub cross_products: bool,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self::dolce_default()
    }
}

impl FeatureSpec {
    /// Lag-k reward model default: threshold indicators on `x` plus linear `x_lag`.
    pub fn dolce_default() -> Self {
        Self {
            current_linear: false,
            current_knots: vec![0.5],
            current_squares: false,
            lag_linear: true,
            cross_products: false,
        }
    }

    /// Current-context reward model used by DM and DR: linear `x` plus indicators.
    pub fn baseline_default() -> Self {
        Self {
            current_linear: true,
            current_knots: vec![0.5],
            current_squares: false,
            lag_linear: false,
            cross_products: false,
        }
    }

    /// Plain concatenation `[x, x_lag]`.
    pub fn linear() -> Self {
        Self {
            current_linear: true,
            current_knots: vec![],
            current_squares: false,
            lag_linear: true,
            cross_products: false,
        }
    }

    pub fn lag_only() -> Self {
        Self {
            current_linear: false,
            current_knots: vec![],
            current_squares: false,
            lag_linear: true,
            cross_products: false,
        }
    }

    /// Every block of either spec.
    pub fn union(&self, other: &Self) -> Self {
        let mut knots = self.current_knots.clone();
        for k in &other.current_knots {
            if !knots.contains(k) {
                knots.push(*k);
            }
        }
        Self {
            current_linear: self.current_linear || other.current_linear,
            current_knots: knots,
            current_squares: self.current_squares || other.current_squares,
            lag_linear: self.lag_linear || other.lag_linear,
            cross_products: self.cross_products || other.cross_products,
        }
    }

    pub fn uses_lag(&self) -> bool {
        self.lag_linear || self.cross_products
    }

    pub fn dim(&self, d: usize) -> usize {
        d * (usize::from(self.current_linear)
            + self.current_knots.len()
            + usize::from(self.current_squares)
            + usize::from(self.lag_linear)
            + usize::from(self.cross_products))
    }

    /// Which columns are 0/1 indicators.
    pub fn binary_mask(&self, d: usize) -> Vec<bool> {
        let mut m = Vec::with_capacity(self.dim(d));
        if self.current_linear {
            m.extend(std::iter::repeat_n(false, d));
        }
        m.extend(std::iter::repeat_n(true, d * self.current_knots.len()));
        let rest = usize::from(self.current_squares) + usize::from(self.lag_linear) + usize::from(self.cross_products);
        m.extend(std::iter::repeat_n(false, d * rest));
        m
    }

    pub fn build_into(&self, x: &[f64], lag: Option<&[f64]>, out: &mut Vec<f64>) {
        out.clear();
        if self.current_linear {
            out.extend_from_slice(x);
        }
        for &k in &self.current_knots {
            out.extend(x.iter().map(|v| if *v > k { 1.0 } else { 0.0 }));
        }
        if self.current_squares {
            out.extend(x.iter().map(|v| v * v));
        }
        if self.lag_linear {
            out.extend_from_slice(lag.expect("lag features requested"));
        }
        if self.cross_products {
            out.extend(x.iter().zip(lag.expect("lag features requested")).map(|(a, b)| a * b));
        }
    }

    /// Feature matrix for every sample, using lag `lag` when needed.
    pub fn matrix(&self, data: &LaggedDataset, lag: Option<usize>) -> Result<RowMatrix> {
        if self.uses_lag() {
            match lag {
                Some(k) => data.check_lag(k)?,
                None => return invalid("feature map needs a lag context"),
            }
        }
        let d = data.dim();
        let p = self.dim(d);
        let mut m = RowMatrix::zeros(data.len(), p);
        let mut buf = Vec::with_capacity(p);
        for (i, s) in data.samples().iter().enumerate() {
            let l = lag.filter(|_| self.uses_lag()).map(|k| s.x_lags[k].as_slice());
            self.build_into(&s.x, l, &mut buf);
            m.row_mut(i).copy_from_slice(&buf);
        }
        Ok(m)
    }
}

/// Columns kept when fitting on `rows`: binary columns whose minority-class
/// frequency is below `min_support` are dropped.
pub fn support_mask(x: &RowMatrix, binary: &[bool], rows: &[usize], min_support: f64) -> Vec<bool> {
    let mut keep = vec![true; x.cols()];
    if min_support <= 0.0 || rows.is_empty() {
        return keep;
    }
    for (j, k) in keep.iter_mut().enumerate() {
        if binary[j] {
            let ones = rows.iter().filter(|&&i| x.get(i, j) != 0.0).count() as f64 / rows.len() as f64;
            if ones.min(1.0 - ones) < min_support {
                *k = false;
            }
        }
    }
    keep
}
