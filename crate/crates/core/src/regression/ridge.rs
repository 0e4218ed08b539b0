//! Closed-form ridge regression with an unregularised offset.
//!
//! A weak regressor `(A, e)` minimises
//!
//! ```text
//! J(A, e) = sum_n ||A f_n + e - y_n||^2 + lambda ||A||_F^2
//! ```
//!
//! When there are more samples than unknowns the augmented normal equations
//! `([X 1]^T [X 1] + diag(lambda, .., lambda, 0)) W = [X 1]^T Y` are solved
//! directly. Otherwise the equivalent centred dual system
//! `(Xc Xc^T + lambda I) alpha = Yc` is solved and `A^T = Xc^T alpha`,
//! `e = mean(y) - A mean(f)`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// One ridge stage mapping a feature vector to an update.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakRegressor {
    /// Projection matrix, `output_dim x feature_dim`.
    pub a: DMatrix<f64>,
    /// Offset, `output_dim`.
    pub e: DVector<f64>,
}

impl WeakRegressor {
    pub fn new(a: DMatrix<f64>, e: DVector<f64>) -> Result<Self> {
        if a.nrows() != e.len() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                got: e.len(),
            });
        }
        if a.iter().chain(e.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("weak regressor has non-finite entries".into()));
        }
        Ok(WeakRegressor { a, e })
    }

    /// All-zero regressor; applying it leaves the estimate unchanged.
    pub fn zeros(output_dim: usize, feature_dim: usize) -> Self {
        WeakRegressor {
            a: DMatrix::zeros(output_dim, feature_dim),
            e: DVector::zeros(output_dim),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.a.nrows()
    }

    /// `J(A, e)` on the given data.
    pub fn objective(&self, features: &[Vec<f64>], targets: &[Vec<f64>], lambda: f64) -> f64 {
        let mut total = 0.0;
        for (f, y) in features.iter().zip(targets) {
            let pred = &self.a * DVector::from_column_slice(f) + &self.e;
            total += pred
                .iter()
                .zip(y)
                .map(|(p, t)| (p - t) * (p - t))
                .sum::<f64>();
        }
        total + lambda * self.a.norm_squared()
    }
}

/// `A f + e`.
pub fn predict_update(w: &WeakRegressor, features: &[f64]) -> Result<Vec<f64>> {
    if features.len() != w.feature_dim() {
        return Err(Error::DimensionMismatch {
            expected: w.feature_dim(),
            got: features.len(),
        });
    }
    let f = DVector::from_column_slice(features);
    let mut out = w.e.clone();
    out.gemv(1.0, &w.a, &f, 1.0);
    Ok(out.as_slice().to_vec())
}

fn check_inputs(features: &[Vec<f64>], targets: &[Vec<f64>], lambda: f64) -> Result<(usize, usize, usize)> {
    let n = features.len();
    if n == 0 {
        return Err(Error::InvalidInput("ridge regression needs at least one sample".into()));
    }
    if targets.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: targets.len(),
        });
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidInput(format!("lambda must be >= 0, got {lambda}")));
    }
    let d = features[0].len();
    let t = targets[0].len();
    if t == 0 {
        return Err(Error::InvalidInput("targets must be non-empty".into()));
    }
    for f in features {
        if f.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: f.len() });
        }
    }
    for y in targets {
        if y.len() != t {
            return Err(Error::DimensionMismatch { expected: t, got: y.len() });
        }
    }
    if features.iter().flatten().chain(targets.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite feature or target value".into()));
    }
    Ok((n, d, t))
}

/// Trains one weak regressor in closed form.
///
/// With `lambda == 0` a rank-deficient design is an error.
pub fn train_weak(features: &[Vec<f64>], targets: &[Vec<f64>], lambda: f64) -> Result<WeakRegressor> {
    let (n, d, _) = check_inputs(features, targets, lambda)?;
    if d + 1 <= n {
        solve_primal(features, targets, lambda)
    } else if lambda > 0.0 {
        solve_dual(features, targets, lambda)
    } else {
        Err(Error::RankDeficient {
            rank: n,
            unknowns: d + 1,
        })
    }
}

fn stack_rows(rows: &[Vec<f64>], extra_one: bool) -> DMatrix<f64> {
    let cols = rows[0].len() + usize::from(extra_one);
    DMatrix::from_fn(rows.len(), cols, |i, j| rows[i].get(j).copied().unwrap_or(1.0))
}

/// `X^T X` for tall `X`: partial products over fixed row blocks are
/// computed in parallel and summed in block order.
fn gram_tall(x: &DMatrix<f64>) -> DMatrix<f64> {
    const BLOCK: usize = 256;
    let n = x.nrows();
    let partials: Vec<DMatrix<f64>> = (0..n)
        .step_by(BLOCK)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|start| {
            let rows = x.rows(start, BLOCK.min(n - start));
            rows.tr_mul(&rows)
        })
        .collect();
    partials
        .into_iter()
        .reduce(|acc, p| acc + p)
        .unwrap_or_else(|| DMatrix::zeros(x.ncols(), x.ncols()))
}

/// `X X^T` for wide `X`, with fixed-size row blocks evaluated in parallel so
/// the result does not depend on the thread count.
fn gram_wide(x: &DMatrix<f64>) -> DMatrix<f64> {
    const BLOCK: usize = 64;
    let n = x.nrows();
    let xt = x.transpose();
    let blocks: Vec<(usize, DMatrix<f64>)> = (0..n)
        .step_by(BLOCK)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|start| {
            let rows = BLOCK.min(n - start);
            (start, x.rows(start, rows) * &xt)
        })
        .collect();
    let mut g = DMatrix::zeros(n, n);
    for (start, block) in blocks {
        g.rows_mut(start, block.nrows()).copy_from(&block);
    }
    g
}

/// Solves the symmetric system `m x = b` by partially pivoted LU with one
/// step of iterative refinement.
fn solve_symmetric(m: DMatrix<f64>, b: &DMatrix<f64>, unknowns: usize) -> Result<DMatrix<f64>> {
    let lu = m.clone().lu();
    let solved = lu.solve(b).and_then(|mut sol| {
        let r = b - &m * &sol;
        sol += lu.solve(&r)?;
        Some(sol)
    });
    match solved {
        Some(sol) if sol.iter().all(|v| v.is_finite()) => Ok(sol),
        _ => Err(Error::RankDeficient {
            rank: m.rank(1e-12 * m.amax().max(1.0)),
            unknowns,
        }),
    }
}

/// Tall case. The offset is unregularised, so it is eliminated from the
/// augmented normal equations first: `A` solves the centred system and
/// `e = mean(y) - A mean(f)`.
fn solve_primal(features: &[Vec<f64>], targets: &[Vec<f64>], lambda: f64) -> Result<WeakRegressor> {
    let d = features[0].len();
    let (x, x_mean) = centred(features);
    let (y, y_mean) = centred(targets);
    if lambda == 0.0 {
        let sv = x.clone().singular_values();
        let smax = sv.max();
        let tol = smax * (x.nrows().max(x.ncols()) as f64) * f64::EPSILON;
        let rank = sv.iter().filter(|&&s| s > tol).count();
        if rank < d {
            return Err(Error::RankDeficient {
                rank: rank + 1,
                unknowns: d + 1,
            });
        }
    }
    let mut m = gram_tall(&x);
    for i in 0..d {
        m[(i, i)] += lambda;
    }
    let b = x.tr_mul(&y);
    let a = solve_symmetric(m, &b, d + 1)?.transpose();
    let e = y_mean.transpose() - &a * x_mean.transpose();
    WeakRegressor::new(a, e)
}

fn centred(rows: &[Vec<f64>]) -> (DMatrix<f64>, nalgebra::RowDVector<f64>) {
    let mut m = stack_rows(rows, false);
    let mean = m.row_mean();
    for mut row in m.row_iter_mut() {
        row -= &mean;
    }
    (m, mean)
}

fn solve_dual(features: &[Vec<f64>], targets: &[Vec<f64>], lambda: f64) -> Result<WeakRegressor> {
    let n = features.len();
    let (x, x_mean) = centred(features);
    let (y, y_mean) = centred(targets);
    let mut g = gram_wide(&x);
    for i in 0..n {
        g[(i, i)] += lambda;
    }
    let alpha = solve_symmetric(g, &y, n)?;
    // A = alpha^T X, computed as (X^T alpha)^T.
    let a = x.tr_mul(&alpha).transpose();
    let e = y_mean.transpose() - &a * x_mean.transpose();
    WeakRegressor::new(a, e)
}
