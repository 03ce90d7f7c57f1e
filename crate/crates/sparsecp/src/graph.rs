//! Sparse precision-matrix selection and estimation.
//!
//! Selection is nodewise: each variable is lasso-regressed on the others and
//! its neighbourhood size is finetuned by the mirror-corrected Cp, with the
//! degrees-of-freedom table shared across nodes. The directed selections are
//! symmetrised by the AND rule. Estimation on the selected pattern is
//! constrained maximum likelihood, `max log det K - Tr(K Sigma)` subject to
//! off-pattern zeros, by projected gradient ascent with an exact line
//! search.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::criteria::{DofTable, Selection, Selector};
use crate::error::{Error, Result};
use crate::lasso::{lasso_path, pilot_sigma2, SigmaMode};

/// Symmetric edge set over `m` variables, stored as ordered pairs `i < j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeSelection {
    pub m: usize,
    pub edges: BTreeSet<(usize, usize)>,
}

impl EdgeSelection {
    pub fn new(m: usize) -> Self {
        EdgeSelection { m, edges: BTreeSet::new() }
    }

    pub fn full(m: usize) -> Self {
        let mut sel = EdgeSelection::new(m);
        for i in 0..m {
            for j in i + 1..m {
                sel.insert(i, j);
            }
        }
        sel
    }

    pub fn insert(&mut self, i: usize, j: usize) {
        assert!(i != j, "no self loops");
        self.edges.insert((i.min(j), i.max(j)));
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn neighbors(&self, c: usize) -> Vec<usize> {
        (0..self.m)
            .filter(|&j| j != c && self.contains(c, j))
            .collect()
    }

    /// AND-rule symmetrisation of directed neighbourhoods: keep `(i, j)`
    /// only when each node selected the other.
    pub fn and_rule(directed: &[Vec<usize>]) -> Self {
        let m = directed.len();
        let mut sel = EdgeSelection::new(m);
        for (i, nbrs) in directed.iter().enumerate() {
            for &j in nbrs {
                if j > i && directed[j].contains(&i) {
                    sel.insert(i, j);
                }
            }
        }
        sel
    }
}

/// Sample covariance `(1/n) X' X` (mean known to be zero).
#[derive(Debug, Clone)]
pub struct SampleCov {
    pub sigma_hat: DMatrix<f64>,
    pub n: usize,
}

impl SampleCov {
    pub fn from_data(x: &DMatrix<f64>) -> Self {
        let n = x.nrows();
        SampleCov {
            sigma_hat: x.transpose() * x / n as f64,
            n,
        }
    }
}

/// Lasso-based selector over a fixed design: noise vectors are regressed on
/// the design and the captured energy is `||z||^2 - SSE_refit(S_kappa)`.
pub struct LassoSelector {
    pub design: DMatrix<f64>,
}

impl Selector for LassoSelector {
    fn dim(&self) -> usize {
        self.design.nrows()
    }

    fn select(&self, z: &[f64], kappa_max: usize) -> Result<Vec<Selection>> {
        let y = DVector::from_column_slice(z);
        let energy = y.norm_squared();
        let path = lasso_path(&self.design, &y, kappa_max)?;
        Ok(path
            .sse_refit
            .iter()
            .map(|(&kappa, &sse)| Selection {
                indices: path.selections[&kappa].clone(),
                energy: (energy - sse).max(0.0),
            })
            .collect())
    }
}

/// Which degrees-of-freedom enter the per-node criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    /// Monte-Carlo generalised degrees of freedom (mirror corrected).
    Refined,
    /// Fixed-model penalty `nu = kappa`.
    Naive,
}

#[derive(Debug, Clone)]
pub struct NodewiseConfig {
    /// Largest neighbourhood size swept per node.
    pub kappa_max: usize,
    /// Number of nodes whose designs feed the shared dof table (R).
    pub mirror_nodes: usize,
    /// Noise replicates per sampled node (B).
    pub mirror_reps: usize,
    pub seed: u64,
    pub criterion: Criterion,
    pub sigma_mode: SigmaMode,
    /// Optional oracle degree bound applied to every neighbourhood.
    pub max_degree: Option<usize>,
}

impl Default for NodewiseConfig {
    fn default() -> Self {
        NodewiseConfig {
            kappa_max: 30,
            mirror_nodes: 5,
            mirror_reps: 20,
            seed: 0,
            criterion: Criterion::Refined,
            sigma_mode: SigmaMode::ResidualDf,
            max_degree: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NodewiseResult {
    pub selection: EdgeSelection,
    /// Pre-symmetrisation neighbourhoods, per node.
    pub directed: Vec<Vec<usize>>,
    /// Selected neighbourhood size per node.
    pub kappa: Vec<usize>,
    /// Pilot residual-variance estimate per node.
    pub sigma2: Vec<f64>,
    /// The shared degrees-of-freedom table (unit noise scale).
    pub dof: DofTable,
}

/// Scales columns to unit variance around the assumed zero mean. Errors on
/// constant columns.
pub fn standardise_columns(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    let mut out = x.clone();
    for j in 0..x.ncols() {
        let ms = x.column(j).norm_squared() / n as f64;
        if ms <= 0.0 {
            return Err(Error::ConstantColumn { column: j });
        }
        let scale = ms.sqrt();
        for i in 0..n {
            out[(i, j)] /= scale;
        }
    }
    Ok(out)
}

/// Design for node `c`: all other columns, rescaled to unit l2 norm.
/// Returns the design and the global index of each design column.
fn node_design(x: &DMatrix<f64>, c: usize) -> (DMatrix<f64>, Vec<usize>) {
    let cols: Vec<usize> = (0..x.ncols()).filter(|&j| j != c).collect();
    let mut design = x.select_columns(cols.iter());
    for mut col in design.column_iter_mut() {
        let norm = col.norm();
        col /= norm;
    }
    (design, cols)
}

/// Shared dof table: energies pooled over `R` randomly chosen node designs
/// with `B` pure-noise responses each. Standardised columns make the null
/// energy curve approximately exchangeable across nodes.
fn shared_dof_table(x: &DMatrix<f64>, cfg: &NodewiseConfig) -> Result<DofTable> {
    let m = x.ncols();
    let n = x.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let r = cfg.mirror_nodes.min(m).max(1);
    let mut nodes = BTreeSet::new();
    while nodes.len() < r {
        nodes.insert(rng.gen_range(0..m));
    }
    let jobs: Vec<(usize, usize)> = nodes
        .iter()
        .flat_map(|&c| (0..cfg.mirror_reps).map(move |b| (c, b)))
        .collect();

    let kappa_max = cfg.kappa_max;
    let per_job: Vec<Result<Vec<Selection>>> = jobs
        .par_iter()
        .map(|&(c, b)| {
            let (design, _) = node_design(x, c);
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e3779b97f4a7c15);
            rng.set_stream((c as u64) << 32 | b as u64);
            let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let sel = LassoSelector { design };
            sel.select(&z, kappa_max)
        })
        .collect();

    let mut sum = vec![0.0; kappa_max + 1];
    let mut sumsq = vec![0.0; kappa_max + 1];
    let mut count = vec![0usize; kappa_max + 1];
    for (idx, res) in per_job.into_iter().enumerate() {
        let rows = res.map_err(|e| Error::SelectorFailure {
            replicate: idx,
            source: Box::new(e),
        })?;
        for sel in rows {
            let kappa = sel.indices.len();
            if kappa <= kappa_max {
                sum[kappa] += sel.energy;
                sumsq[kappa] += sel.energy * sel.energy;
                count[kappa] += 1;
            }
        }
    }
    let mut nu = vec![0.0; kappa_max + 1];
    let mut se = vec![0.0; kappa_max + 1];
    for kappa in 1..=kappa_max {
        let b = count[kappa];
        if b == 0 {
            nu[kappa] = f64::NAN;
            se[kappa] = f64::NAN;
            continue;
        }
        let bf = b as f64;
        nu[kappa] = sum[kappa] / bf;
        se[kappa] = if b > 1 {
            (((sumsq[kappa] - bf * nu[kappa] * nu[kappa]) / (bf - 1.0)).max(0.0) / bf).sqrt()
        } else {
            0.0
        };
    }
    let replicates = jobs.len();
    count[0] = replicates;
    let table = DofTable {
        mirror: vec![0.0; kappa_max + 1],
        nu,
        se,
        count,
        sigma2: 1.0,
        n,
        replicates,
        seed: cfg.seed,
    };
    Ok(table.rescaled(1.0, n))
}

/// Nodewise selection of the precision-matrix support: per-node lasso path,
/// pilot variance, mirror-corrected (or naive) Cp minimisation, then
/// AND-rule symmetrisation.
pub fn nodewise_select(x: &DMatrix<f64>, cfg: &NodewiseConfig) -> Result<NodewiseResult> {
    let n = x.nrows();
    let m = x.ncols();
    if n < 3 {
        return Err(Error::TooFewObservations { n, min: 3 });
    }
    let x = standardise_columns(x)?;
    let dof = shared_dof_table(&x, cfg)?;
    let nf = n as f64;
    let kappa_cap = cfg.max_degree.map_or(cfg.kappa_max, |d| d.min(cfg.kappa_max));

    let per_node: Vec<Result<(Vec<usize>, usize, f64)>> = (0..m)
        .into_par_iter()
        .map(|c| {
            let (design, cols) = node_design(&x, c);
            let y: DVector<f64> = x.column(c).into();
            let path = lasso_path(&design, &y, kappa_cap)?;
            let sigma2 = pilot_sigma2(&path, n, cfg.sigma_mode)?;
            let mut best: Option<(f64, usize)> = None;
            for (&kappa, &sse) in &path.sse_refit {
                let nu = match cfg.criterion {
                    Criterion::Refined => {
                        if kappa >= dof.nu.len() || !dof.nu[kappa].is_finite() {
                            continue;
                        }
                        dof.nu[kappa]
                    }
                    Criterion::Naive => kappa as f64,
                };
                let lambda = sse / nf + 2.0 * nu * sigma2 / nf - sigma2;
                if best.is_none_or(|(v, _)| lambda < v) {
                    best = Some((lambda, kappa));
                }
            }
            let (_, kappa_star) = best.ok_or(Error::EmptyOverlap)?;
            let neighbors: Vec<usize> = path.selections[&kappa_star]
                .iter()
                .map(|&j| cols[j])
                .collect();
            Ok((neighbors, kappa_star, sigma2))
        })
        .collect();

    let mut directed = Vec::with_capacity(m);
    let mut kappa = Vec::with_capacity(m);
    let mut sigma2 = Vec::with_capacity(m);
    for res in per_node {
        let (nbrs, k, s2) = res?;
        directed.push(nbrs);
        kappa.push(k);
        sigma2.push(s2);
    }
    let selection = EdgeSelection::and_rule(&directed);
    Ok(NodewiseResult { selection, directed, kappa, sigma2, dof })
}

/// Per-row precision estimate from OLS refits on the selected
/// neighbourhoods: `K_cc = 1 / sigma_c^2`, `K_cj = -beta_j K_cc`. Generally
/// asymmetric; used as the starting point of [`constrained_ml`].
pub fn nodewise_coefficients(x: &DMatrix<f64>, selection: &EdgeSelection) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    let m = x.ncols();
    let x = standardise_columns(x)?;
    let mut k = DMatrix::zeros(m, m);
    for c in 0..m {
        let nbrs = selection.neighbors(c);
        let y: DVector<f64> = x.column(c).into();
        let (beta, sse) = match ols_refit_columns(&x, &y, &nbrs) {
            Ok(v) => v,
            Err(Error::RankDeficient) => {
                eprintln!("warning: rank-deficient neighbour block at node {c}; using pseudo-inverse");
                pseudo_refit(&x, &y, &nbrs)
            }
            Err(e) => return Err(e),
        };
        let df = (n - nbrs.len()).max(1) as f64;
        let var = (sse / df).max(1e-12);
        let kcc = 1.0 / var;
        k[(c, c)] = kcc;
        for (idx, &j) in nbrs.iter().enumerate() {
            k[(c, j)] = -beta[idx] * kcc;
        }
    }
    Ok(k)
}

/// OLS of `y` on arbitrary (not unit-norm) columns of `x`.
fn ols_refit_columns(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    cols: &[usize],
) -> Result<(Vec<f64>, f64)> {
    if cols.is_empty() {
        return Ok((vec![], y.norm_squared()));
    }
    let xs = x.select_columns(cols.iter());
    let gram = xs.transpose() * &xs;
    let rhs = xs.transpose() * y;
    let chol = gram.cholesky().ok_or(Error::RankDeficient)?;
    let coef = chol.solve(&rhs);
    let sse = (y - &xs * &coef).norm_squared();
    Ok((coef.iter().copied().collect(), sse))
}

fn pseudo_refit(x: &DMatrix<f64>, y: &DVector<f64>, cols: &[usize]) -> (Vec<f64>, f64) {
    let xs = x.select_columns(cols.iter());
    let svd = xs.clone().svd(true, true);
    let coef = svd.solve(y, 1e-10).expect("svd solve");
    let sse = (y - &xs * &coef).norm_squared();
    (coef.iter().copied().collect(), sse)
}

/// Sparse symmetric positive-definite precision estimate.
#[derive(Debug, Clone)]
pub struct PrecisionEstimate {
    pub k: DMatrix<f64>,
    pub pattern: EdgeSelection,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `log det K - Tr(K Sigma)`, the profiled Gaussian log-likelihood.
pub fn gaussian_loglik(k: &DMatrix<f64>, sigma_hat: &DMatrix<f64>) -> Result<f64> {
    let chol = k
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("precision matrix is not positive definite".into()))?;
    let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let trace: f64 = k.iter().zip(sigma_hat.iter()).map(|(a, b)| a * b).sum();
    Ok(logdet - trace)
}

fn project_pattern(g: &mut DMatrix<f64>, pattern: &EdgeSelection) {
    let m = pattern.m;
    for i in 0..m {
        for j in 0..m {
            if i != j && !pattern.contains(i, j) {
                g[(i, j)] = 0.0;
            }
        }
    }
}

/// Exact line search along the projected gradient direction: finds the
/// unique root of
/// `g'(omega) = sum_i gamma_i / (1 + omega gamma_i) - Tr(Sigma dir')`
/// on the positive-definiteness interval, where `gamma` are the (real)
/// eigenvalues of `K^{-1} dir`.
pub fn line_search(k: &DMatrix<f64>, dir: &DMatrix<f64>, sigma_hat: &DMatrix<f64>) -> Result<f64> {
    if dir.iter().all(|&v| v == 0.0) {
        return Err(Error::InvalidArgument("zero search direction".into()));
    }
    let chol = k
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("line search from a non-SPD point".into()))?;
    let l = chol.l();
    // A = L^-1 dir L^-T is symmetric and similar to K^-1 dir.
    let b = l
        .solve_lower_triangular(dir)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let a = l
        .solve_lower_triangular(&b.transpose())
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let sym = (&a + a.transpose()) * 0.5;
    let gamma = sym.symmetric_eigenvalues();
    let target: f64 = sigma_hat.iter().zip(dir.iter()).map(|(s, d)| s * d).sum();

    let gprime = |omega: f64| -> f64 {
        gamma.iter().map(|&g| g / (1.0 + omega * g)).sum::<f64>() - target
    };
    let g0 = gprime(0.0);
    if g0 <= 0.0 {
        return Err(Error::NotAscentDirection { gprime0: g0 });
    }

    // Feasibility: 1 + omega gamma_i > 0 for all i.
    let omega_max = gamma
        .iter()
        .filter(|&&g| g < 0.0)
        .map(|&g| -1.0 / g)
        .fold(f64::INFINITY, f64::min);

    let mut hi = if omega_max.is_finite() {
        omega_max * (1.0 - 1e-9)
    } else {
        let mut h = 1.0;
        while gprime(h) > 0.0 {
            h *= 2.0;
            if h > 1e12 {
                return Err(Error::Numerical("line search does not bracket a root".into()));
            }
        }
        h
    };
    if gprime(hi) > 0.0 {
        // Root pushed against the feasibility boundary; hi is the best
        // feasible step.
        return Ok(hi);
    }
    // The exit test must be relative to g'(0): near stationarity g' is tiny
    // over the whole interval and an absolute threshold accepts arbitrary
    // points.
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = gprime(mid);
        if v.abs() <= 1e-10 * g0 || (hi - lo) <= 1e-15 * hi {
            return Ok(mid);
        }
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Maximises `log det K - Tr(K Sigma)` subject to off-pattern zeros by
/// projected-gradient ascent with the exact line search. The iteration
/// keeps every iterate SPD and the log-likelihood nondecreasing; it stops
/// when every on-pattern gradient entry is below `tol`.
pub fn constrained_ml(
    sigma_hat: &SampleCov,
    selection: &EdgeSelection,
    init: Option<&DMatrix<f64>>,
    tol: f64,
    max_iter: usize,
) -> Result<PrecisionEstimate> {
    let m = selection.m;
    let sigma = &sigma_hat.sigma_hat;
    if sigma.nrows() != m {
        return Err(Error::LengthMismatch { expected: m, got: sigma.nrows() });
    }
    let mut k = match init {
        Some(k0) => {
            for i in 0..m {
                for j in 0..m {
                    if i != j && !selection.contains(i, j) && k0[(i, j)] != 0.0 {
                        return Err(Error::InfeasibleInit);
                    }
                }
            }
            if k0.clone().cholesky().is_none() {
                return Err(Error::InfeasibleInit);
            }
            k0.clone()
        }
        None => DMatrix::from_diagonal(&DVector::from_iterator(
            m,
            (0..m).map(|i| 1.0 / sigma[(i, i)].max(1e-12)),
        )),
    };

    let mut loglik = gaussian_loglik(&k, sigma)?;
    let mut converged = false;
    let mut iterations = 0;
    for iter in 0..max_iter {
        iterations = iter;
        let chol = k
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical("iterate lost positive definiteness".into()))?;
        let kinv = chol.inverse();
        let mut grad = &kinv - sigma;
        project_pattern(&mut grad, selection);
        let gap = grad.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
        if gap <= tol {
            converged = true;
            break;
        }
        let omega = line_search(&k, &grad, sigma)?;
        k += grad * omega;
        let new_loglik = gaussian_loglik(&k, sigma)?;
        debug_assert!(
            new_loglik >= loglik - 1e-12 * (1.0 + loglik.abs()),
            "log-likelihood decreased: {loglik} -> {new_loglik} (omega = {omega})"
        );
        loglik = new_loglik;
    }
    Ok(PrecisionEstimate {
        k,
        pattern: selection.clone(),
        loglik,
        iterations,
        converged,
    })
}

/// Repairs a symmetrised nodewise start into a PD feasible one by a
/// diagonal shift when needed.
pub fn feasible_init(k_nw: &DMatrix<f64>, selection: &EdgeSelection) -> DMatrix<f64> {
    let mut k = (k_nw + k_nw.transpose()) * 0.5;
    project_pattern(&mut k, selection);
    let sym = (&k + k.transpose()) * 0.5;
    let min_eig = sym
        .symmetric_eigenvalues()
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b));
    if min_eig <= 0.0 {
        let shift = -min_eig + 1e-3;
        for i in 0..k.nrows() {
            k[(i, i)] += shift;
        }
    }
    k
}
