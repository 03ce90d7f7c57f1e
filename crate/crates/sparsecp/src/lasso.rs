//! l1-regularised least-squares path solver producing size-indexed
//! selections.
//!
//! The lasso is used here for selection only; estimation on the selected set
//! is a plain least-squares refit. The path solver is warm-started cyclic
//! coordinate descent over a log-spaced grid, with a bisection refinement
//! pass so the first (largest-lambda) attainment of each model size is
//! located between grid points.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::auht::soft_threshold;
use crate::error::{Error, Result};

const COLUMN_NORM_TOL: f64 = 1e-6;
const CD_TOL: f64 = 1e-9;
const CD_MAX_PASSES: usize = 50_000;

/// Lasso path: knots, shrinkage coefficients and per-size refit residuals.
#[derive(Debug, Clone)]
pub struct LassoPath {
    /// Strictly decreasing lambda values where a new size first appeared.
    pub knots: Vec<f64>,
    /// Shrinkage coefficient vector at each knot.
    pub betas: Vec<DVector<f64>>,
    /// Shrinkage residual sum of squares at each knot.
    pub knot_sse: Vec<f64>,
    /// Active-set size at each knot.
    pub knot_kappa: Vec<usize>,
    /// First (largest-lambda) selection of each size.
    pub selections: BTreeMap<usize, Vec<usize>>,
    /// Least-squares refit residual for each recorded selection.
    pub sse_refit: BTreeMap<usize, f64>,
    /// Final state evaluated on the grid: `(lambda, shrinkage SSE, kappa)`.
    /// At the grid end the fit is nearly unshrunk; under truncation it is
    /// the state that overran `kappa_max`.
    pub terminal: Option<(f64, f64, usize)>,
    /// Path stopped because `kappa_max` was exceeded before its end.
    pub truncated: bool,
    /// Some sizes were filled by coefficient-rank truncation after a
    /// simultaneous entry.
    pub tie_filled: bool,
}

fn check_standardised(x: &DMatrix<f64>) -> Result<()> {
    for j in 0..x.ncols() {
        let norm = x.column(j).norm();
        if (norm - 1.0).abs() > COLUMN_NORM_TOL {
            return Err(Error::NotStandardised { column: j, norm });
        }
    }
    Ok(())
}

/// Cyclic coordinate descent for
/// `min ||y - X b||^2 / (2n) + lambda ||b||_1` with unit-norm columns.
/// `beta` and `residual` are warm-start state, updated in place.
fn coordinate_descent(
    x: &DMatrix<f64>,
    lambda: f64,
    beta: &mut DVector<f64>,
    residual: &mut DVector<f64>,
) {
    let n = x.nrows() as f64;
    let thresh = lambda * n;
    for _ in 0..CD_MAX_PASSES {
        let mut max_delta: f64 = 0.0;
        for j in 0..x.ncols() {
            let xj = x.column(j);
            let rho = xj.dot(residual) + beta[j];
            let new = soft_threshold(rho, thresh);
            let delta = new - beta[j];
            if delta != 0.0 {
                residual.axpy(-delta, &xj, 1.0);
                beta[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        if max_delta < CD_TOL {
            break;
        }
    }
}

fn active_set(beta: &DVector<f64>) -> Vec<usize> {
    (0..beta.len()).filter(|&j| beta[j] != 0.0).collect()
}

/// Solves the lasso along a 100-point log-spaced lambda grid from
/// `lambda_max` down to `1e-3 lambda_max`, recording for each size kappa the
/// selection at the largest lambda attaining it. Columns of `x` must have
/// unit l2 norm.
pub fn lasso_path(x: &DMatrix<f64>, y: &DVector<f64>, kappa_max: usize) -> Result<LassoPath> {
    check_standardised(x)?;
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: y.len() });
    }
    let p = x.ncols();
    let kappa_max = kappa_max.min(n.saturating_sub(1)).min(p);

    let mut path = LassoPath {
        knots: Vec::new(),
        betas: Vec::new(),
        knot_sse: Vec::new(),
        knot_kappa: Vec::new(),
        selections: BTreeMap::new(),
        sse_refit: BTreeMap::new(),
        terminal: None,
        truncated: false,
        tie_filled: false,
    };
    let y_energy = y.norm_squared();
    path.selections.insert(0, vec![]);
    path.sse_refit.insert(0, y_energy);

    let lambda_max = (x.transpose() * y).abs().max() / n as f64;
    if lambda_max <= 0.0 || y_energy == 0.0 {
        return Ok(path);
    }

    let grid: Vec<f64> = (0..100)
        .map(|i| lambda_max * 1e-3f64.powf(i as f64 / 99.0))
        .collect();

    let mut beta = DVector::zeros(p);
    let mut residual = y.clone();
    let mut prev_lambda = lambda_max;
    let mut prev_kappa = 0usize;

    let mut record = |path: &mut LassoPath,
                      lambda: f64,
                      beta: &DVector<f64>,
                      residual: &DVector<f64>| {
        let act = active_set(beta);
        let kappa = act.len();
        if kappa <= kappa_max && !path.selections.contains_key(&kappa) {
            path.knots.push(lambda);
            path.betas.push(beta.clone());
            path.knot_sse.push(residual.norm_squared());
            path.knot_kappa.push(kappa);
            path.selections.insert(kappa, act);
        }
    };

    for &lambda in &grid {
        coordinate_descent(x, lambda, &mut beta, &mut residual);
        let kappa = active_set(&beta).len();
        if kappa > prev_kappa + 1 {
            // Bisect on lambda to catch the intermediate sizes.
            bisect_sizes(
                x,
                y,
                prev_lambda,
                lambda,
                prev_kappa,
                kappa.min(kappa_max + 1),
                &mut path,
                &mut record,
            );
        }
        record(&mut path, lambda, &beta, &residual);
        prev_lambda = lambda;
        prev_kappa = kappa;
        if kappa > kappa_max {
            path.truncated = true;
            break;
        }
    }
    path.terminal = Some((prev_lambda, residual.norm_squared(), prev_kappa));

    // Any still-missing sizes come from simultaneous entries: inherit the
    // next larger selection truncated by coefficient magnitude.
    let recorded: Vec<usize> = path.selections.keys().copied().collect();
    if let Some(&largest) = recorded.last() {
        for kappa in 1..largest {
            if !path.selections.contains_key(&kappa) {
                let (&bigger, _) = path
                    .selections
                    .range(kappa + 1..)
                    .next()
                    .expect("a larger recorded size exists");
                let knot_idx = path.knot_kappa.iter().position(|&k| k == bigger).unwrap();
                let beta_big = &path.betas[knot_idx];
                let mut ranked: Vec<usize> = path.selections[&bigger].clone();
                ranked.sort_by(|&a, &b| {
                    beta_big[b].abs().partial_cmp(&beta_big[a].abs()).unwrap()
                });
                let mut sel: Vec<usize> = ranked[..kappa].to_vec();
                sel.sort_unstable();
                path.selections.insert(kappa, sel);
                path.tie_filled = true;
            }
        }
    }

    for (&kappa, sel) in path.selections.clone().iter() {
        if kappa > 0 {
            let (_, sse) = ols_refit(x, y, sel)?;
            path.sse_refit.insert(kappa, sse);
        }
    }
    Ok(path)
}

/// Recursively bisects `[lambda_hi, lambda_lo]` while recorded sizes between
/// `kappa_hi` and `kappa_lo` are missing. Works on a private warm-start
/// state so the caller's sweep is unaffected.
#[allow(clippy::too_many_arguments)]
fn bisect_sizes(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda_hi: f64,
    lambda_lo: f64,
    kappa_hi: usize,
    kappa_lo: usize,
    path: &mut LassoPath,
    record: &mut impl FnMut(&mut LassoPath, f64, &DVector<f64>, &DVector<f64>),
) {
    if kappa_lo <= kappa_hi + 1 || (lambda_hi - lambda_lo) <= 1e-10 * lambda_hi {
        return;
    }
    let mid = (lambda_hi * lambda_lo).sqrt();
    let mut beta = DVector::zeros(x.ncols());
    let mut residual = y.clone();
    coordinate_descent(x, mid, &mut beta, &mut residual);
    let kappa_mid = active_set(&beta).len();
    record(path, mid, &beta, &residual);
    bisect_sizes(x, y, lambda_hi, mid, kappa_hi, kappa_mid, path, record);
    bisect_sizes(x, y, mid, lambda_lo, kappa_mid, kappa_lo, path, record);
}

/// Least-squares refit on the index set `s`: coefficients on `s`, zero
/// elsewhere, and the residual sum of squares.
pub fn ols_refit(x: &DMatrix<f64>, y: &DVector<f64>, s: &[usize]) -> Result<(DVector<f64>, f64)> {
    let p = x.ncols();
    if s.is_empty() {
        return Ok((DVector::zeros(p), y.norm_squared()));
    }
    if s.len() > x.nrows() {
        return Err(Error::RankDeficient);
    }
    let xs = x.select_columns(s.iter());
    let gram = xs.transpose() * &xs;
    let rhs = xs.transpose() * y;
    let chol = gram.cholesky().ok_or(Error::RankDeficient)?;
    let coef = chol.solve(&rhs);
    let residual = y - &xs * &coef;
    let mut beta = DVector::zeros(p);
    for (k, &j) in s.iter().enumerate() {
        beta[j] = coef[k];
    }
    Ok((beta, residual.norm_squared()))
}

/// How to turn the minimum-GCV shrinkage fit into a variance estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaMode {
    /// `SSE / (n - kappa*)`: the conventional residual-degrees-of-freedom
    /// estimator. Default.
    ResidualDf,
    /// `SSE / kappa*`, as printed in the source derivation. Kept selectable
    /// because the two disagree; see the crate docs.
    PaperLiteral,
}

/// Variance estimate from the shrinkage fit minimising GCV along the path
/// (with `nu = kappa`, the active-set size).
pub fn pilot_sigma2(path: &LassoPath, n: usize, mode: SigmaMode) -> Result<f64> {
    if path.knots.is_empty() && path.sse_refit.len() <= 1 {
        // Path never left the empty model; fall back to the raw energy.
        let sse = *path
            .sse_refit
            .get(&0)
            .ok_or_else(|| Error::InvalidArgument("path has no knots".into()))?;
        return match mode {
            SigmaMode::ResidualDf => Ok(sse / n as f64),
            SigmaMode::PaperLiteral => Err(Error::InvalidArgument(
                "paper-literal variance undefined for an empty selection".into(),
            )),
        };
    }
    let nf = n as f64;
    let mut best: Option<(f64, f64, usize)> = None; // (gcv, sse, kappa)
    // The empty model at lambda_max is a valid candidate.
    let mut consider = |sse: f64, kappa: usize| {
        if kappa >= n {
            return;
        }
        let denom = 1.0 - kappa as f64 / nf;
        let gcv = sse / nf / (denom * denom);
        if best.is_none_or(|(g, _, _)| gcv < g) {
            best = Some((gcv, sse, kappa));
        }
    };
    consider(path.sse_refit[&0], 0);
    for i in 0..path.knots.len() {
        consider(path.knot_sse[i], path.knot_kappa[i]);
    }
    // The knots sit at entry events, where the newest coefficient is still
    // fully shrunk; without the terminal (smallest-lambda) state GCV never
    // sees a nearly-unbiased fit and overestimates the variance on strong
    // signals.
    if let Some((_, sse, kappa)) = path.terminal {
        consider(sse, kappa);
    }
    let (_, sse, kappa) = best.ok_or(Error::DegenerateGcv { nu: nf, n })?;
    match mode {
        SigmaMode::ResidualDf => {
            if kappa == n {
                return Err(Error::DegenerateGcv { nu: kappa as f64, n });
            }
            Ok(sse / (nf - kappa as f64))
        }
        SigmaMode::PaperLiteral => {
            if kappa == 0 {
                return Err(Error::InvalidArgument(
                    "paper-literal variance undefined for an empty selection".into(),
                ));
            }
            Ok(sse / kappa as f64)
        }
    }
}
