//! Seeded generators for the two benchmark experiments (blocks counts and
//! geometric graphs) and ground-truth evaluation helpers.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::criteria::Selector;
use crate::error::{Error, Result};
use crate::graph::EdgeSelection;

/// Jump locations of the blocks test function, on [0, 1].
pub const BLOCKS_POSITIONS: [f64; 11] = [
    0.10, 0.13, 0.15, 0.23, 0.25, 0.40, 0.44, 0.65, 0.76, 0.78, 0.81,
];

/// Jump heights at [`BLOCKS_POSITIONS`].
pub const BLOCKS_HEIGHTS: [f64; 11] = [
    4.0, -5.0, 3.0, -4.0, 5.0, -4.2, 2.1, 4.3, -3.1, 2.1, -4.2,
];

/// Piecewise-constant blocks intensity, shifted to stay strictly positive.
#[derive(Debug, Clone)]
pub struct BlocksSpec {
    pub n: usize,
    pub offset: f64,
}

impl Default for BlocksSpec {
    fn default() -> Self {
        BlocksSpec { n: 4000, offset: 3.5 }
    }
}

impl BlocksSpec {
    /// Intensity sampled on the grid `t_i = (i - 1/2) / n`.
    pub fn intensity(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let t = (i as f64 + 0.5) / self.n as f64;
                let mut v = self.offset;
                for (pos, h) in BLOCKS_POSITIONS.iter().zip(BLOCKS_HEIGHTS.iter()) {
                    if t >= *pos {
                        v += h;
                    }
                }
                v
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct BlocksSample {
    pub mu: Vec<f64>,
    pub y: Vec<f64>,
    /// Index `i` such that `mu[i] != mu[i+1]`.
    pub changepoints: Vec<usize>,
}

/// Poisson sampling by CDF inversion, so the draw is a deterministic
/// function of one uniform variate (stable across platforms).
pub fn poisson_inverse(lambda: f64, u: f64) -> u64 {
    let mut k = 0u64;
    let mut p = (-lambda).exp();
    let mut cdf = p;
    while u > cdf && k < 10_000 {
        k += 1;
        p *= lambda / k as f64;
        cdf += p;
    }
    k
}

/// Poisson counts with the blocks intensity and the list of true
/// change-point indices.
pub fn blocks_poisson(spec: &BlocksSpec, seed: u64) -> Result<BlocksSample> {
    if spec.n < 100 {
        return Err(Error::SignalTooShort { n: spec.n, min: 100 });
    }
    let mu = spec.intensity();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y: Vec<f64> = mu
        .iter()
        .map(|&m| poisson_inverse(m, rng.gen::<f64>()) as f64)
        .collect();
    let changepoints = (0..spec.n - 1).filter(|&i| mu[i] != mu[i + 1]).collect();
    Ok(BlocksSample { mu, y, changepoints })
}

/// Random geometric graph with inverse-distance edge preference.
#[derive(Debug, Clone)]
pub struct GeoGraphSpec {
    pub m: usize,
    pub n: usize,
    /// Maximum number of nonzero off-diagonals per row.
    pub max_degree: usize,
    /// Off-diagonal precision entry before standardisation.
    pub edge_value: f64,
}

impl Default for GeoGraphSpec {
    fn default() -> Self {
        GeoGraphSpec { m: 100, n: 200, max_degree: 4, edge_value: 0.245 }
    }
}

#[derive(Debug, Clone)]
pub struct GeoGraphSample {
    pub k_true: DMatrix<f64>,
    pub sigma_true: DMatrix<f64>,
    pub x: DMatrix<f64>,
    pub edges: EdgeSelection,
    pub positions: Vec<(f64, f64)>,
}

/// Scatters `m` points in the unit square, wires each to near neighbours
/// with probability inversely proportional to distance (degree-capped),
/// builds the precision matrix with constant off-diagonals, and
/// standardises the implied covariance to unit variances. Returns `n`
/// multivariate-normal rows drawn from the standardised model.
pub fn geo_graph(spec: &GeoGraphSpec, seed: u64) -> Result<GeoGraphSample> {
    if spec.m < 10 {
        return Err(Error::InvalidArgument(format!(
            "geo graph needs m >= 10, got {}",
            spec.m
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 0.. {
        let sample = geo_graph_attempt(spec, &mut rng)?;
        match sample {
            Some(s) => {
                if attempt > 0 {
                    eprintln!("geo_graph: regenerated {attempt} time(s) for positive definiteness");
                }
                return Ok(s);
            }
            None => continue,
        }
    }
    unreachable!()
}

fn geo_graph_attempt(spec: &GeoGraphSpec, rng: &mut ChaCha8Rng) -> Result<Option<GeoGraphSample>> {
    let m = spec.m;
    let positions: Vec<(f64, f64)> = (0..m).map(|_| (rng.gen::<f64>(), rng.gen::<f64>())).collect();
    let mut degree = vec![0usize; m];
    let mut edges = EdgeSelection::new(m);
    const EPS: f64 = 0.05;
    // Visit nodes in order; each samples neighbours without replacement
    // with weight 1/(eps + dist) until its degree cap is met.
    for i in 0..m {
        let mut candidates: Vec<usize> = (0..m)
            .filter(|&j| j != i && !edges.contains(i, j) && degree[j] < spec.max_degree)
            .collect();
        while degree[i] < spec.max_degree && !candidates.is_empty() {
            let weights: Vec<f64> = candidates
                .iter()
                .map(|&j| {
                    let dx = positions[i].0 - positions[j].0;
                    let dy = positions[i].1 - positions[j].1;
                    1.0 / (EPS + (dx * dx + dy * dy).sqrt())
                })
                .collect();
            let total: f64 = weights.iter().sum();
            let mut u = rng.gen::<f64>() * total;
            let mut pick = candidates.len() - 1;
            for (idx, w) in weights.iter().enumerate() {
                if u < *w {
                    pick = idx;
                    break;
                }
                u -= w;
            }
            let j = candidates.swap_remove(pick);
            edges.insert(i, j);
            degree[i] += 1;
            degree[j] += 1;
            candidates.retain(|&c| degree[c] < spec.max_degree);
        }
    }

    let mut k0 = DMatrix::identity(m, m);
    for &(i, j) in &edges.edges {
        k0[(i, j)] = spec.edge_value;
        k0[(j, i)] = spec.edge_value;
    }
    let sigma0 = match k0.clone().cholesky() {
        Some(chol) => chol.inverse(),
        None => return Ok(None),
    };
    // Standardise Sigma to unit diagonal and rescale K accordingly.
    let d: DVector<f64> = DVector::from_iterator(m, (0..m).map(|i| sigma0[(i, i)].sqrt()));
    let mut sigma = sigma0;
    let mut k = k0;
    for i in 0..m {
        for j in 0..m {
            sigma[(i, j)] /= d[i] * d[j];
            k[(i, j)] *= d[i] * d[j];
        }
    }
    let l = match sigma.clone().cholesky() {
        Some(c) => c.l(),
        None => return Ok(None),
    };
    let z: DMatrix<f64> = DMatrix::from_fn(spec.n, m, |_, _| StandardNormal.sample(rng));
    let x = z * l.transpose();
    Ok(Some(GeoGraphSample { k_true: k, sigma_true: sigma, x, edges, positions }))
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ChangepointEval {
    pub n_true: usize,
    pub n_estimated: usize,
    pub matched: Vec<(usize, usize)>,
    pub missed: usize,
    pub false_positives: usize,
}

/// Greedy nearest matching of estimated change points to the truth within
/// `tol` index positions; each true change point is matched at most once.
pub fn evaluate_changepoints(estimated: &[usize], truth: &[usize], tol: usize) -> ChangepointEval {
    let mut pairs: Vec<(usize, usize, usize)> = Vec::new();
    for &t in truth {
        for &e in estimated {
            let dist = t.abs_diff(e);
            if dist <= tol {
                pairs.push((dist, t, e));
            }
        }
    }
    pairs.sort();
    let mut used_t = std::collections::BTreeSet::new();
    let mut used_e = std::collections::BTreeSet::new();
    let mut matched = Vec::new();
    for (_, t, e) in pairs {
        if !used_t.contains(&t) && !used_e.contains(&e) {
            used_t.insert(t);
            used_e.insert(e);
            matched.push((t, e));
        }
    }
    ChangepointEval {
        n_true: truth.len(),
        n_estimated: estimated.len(),
        missed: truth.len() - matched.len(),
        false_positives: estimated.len() - matched.len(),
        matched,
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct EdgeEval {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn evaluate_edges(estimated: &EdgeSelection, truth: &EdgeSelection) -> Result<EdgeEval> {
    if estimated.m != truth.m {
        return Err(Error::LengthMismatch { expected: truth.m, got: estimated.m });
    }
    let tp = estimated.edges.intersection(&truth.edges).count();
    let fp = estimated.len() - tp;
    let fn_ = truth.len() - tp;
    let precision = if !estimated.is_empty() { tp as f64 / estimated.len() as f64 } else { 0.0 };
    let recall = if !truth.is_empty() { tp as f64 / truth.len() as f64 } else { 0.0 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(EdgeEval { tp, fp, fn_, precision, recall, f1 })
}

/// Oracle prediction-error curve: the selector is run on the noise-free
/// coefficient vector `v`, and for each attained size
/// `PE(kappa) = sum_{l not in O_kappa} v_l^2 / n + kappa sigma^2 / n`
/// (diagonal-projection estimator).
pub fn oracle_pe_curve(
    selector: &dyn Selector,
    v: &[f64],
    kappa_max: usize,
    sigma2: f64,
) -> Result<BTreeMap<usize, f64>> {
    let n = selector.dim() as f64;
    let total: f64 = v.iter().map(|x| x * x).sum();
    let mut curve = BTreeMap::new();
    curve.insert(0, total / n);
    for sel in selector.select(v, kappa_max)? {
        let kappa = sel.indices.len();
        let kept: f64 = sel.indices.iter().map(|&i| v[i] * v[i]).sum();
        curve.insert(kappa, (total - kept) / n + kappa as f64 * sigma2 / n);
    }
    Ok(curve)
}

/// True prediction error of the diagonal-projection estimator for one given
/// data-driven selection: kept coordinates contribute their squared error,
/// dropped ones their squared signal.
pub fn true_pe(selection: &[usize], z: &[f64], v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let in_sel: std::collections::BTreeSet<usize> = selection.iter().copied().collect();
    let mut acc = 0.0;
    for (l, (&zl, &vl)) in z.iter().zip(v.iter()).enumerate() {
        if in_sel.contains(&l) {
            acc += (zl - vl) * (zl - vl);
        } else {
            acc += vl * vl;
        }
    }
    acc / n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criteria::Selection;

    #[test]
    fn blocks_intensity_shape() {
        let spec = BlocksSpec::default();
        let mu = spec.intensity();
        let min = mu.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = mu.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!((min - 1.5).abs() < 1e-12);
        assert!((max - 8.7).abs() < 1e-12);
        let jumps = (0..mu.len() - 1).filter(|&i| mu[i] != mu[i + 1]).count();
        assert_eq!(jumps, 11);
    }

    #[test]
    fn blocks_poisson_moments() {
        let spec = BlocksSpec::default();
        let mut mean_y = 0.0;
        let reps = 20;
        for seed in 0..reps {
            let s = blocks_poisson(&spec, seed).unwrap();
            assert_eq!(s.changepoints.len(), 11);
            mean_y += s.y.iter().sum::<f64>() / s.y.len() as f64;
        }
        mean_y /= reps as f64;
        let mean_mu = spec.intensity().iter().sum::<f64>() / spec.n as f64;
        let tol = 3.0 * (mean_mu / (spec.n * reps as usize) as f64).sqrt();
        assert!((mean_y - mean_mu).abs() < tol, "{mean_y} vs {mean_mu}");
    }

    #[test]
    fn blocks_reproducible() {
        let spec = BlocksSpec::default();
        let a = blocks_poisson(&spec, 7).unwrap();
        let b = blocks_poisson(&spec, 7).unwrap();
        assert_eq!(a.y, b.y);
    }

    #[test]
    fn poisson_inversion_basic() {
        // u below exp(-lambda) gives 0; u -> 1 grows
        assert_eq!(poisson_inverse(1.0, 0.1), 0);
        assert!(poisson_inverse(5.0, 0.999) > 5);
    }

    #[test]
    fn geo_graph_invariants() {
        let spec = GeoGraphSpec { m: 30, n: 50, ..Default::default() };
        let g = geo_graph(&spec, 3).unwrap();
        let mut degree = vec![0usize; spec.m];
        for &(i, j) in &g.edges.edges {
            degree[i] += 1;
            degree[j] += 1;
        }
        assert!(degree.iter().all(|&d| d <= spec.max_degree));
        for i in 0..spec.m {
            assert!((g.sigma_true[(i, i)] - 1.0).abs() < 1e-12);
        }
        let prod = &g.k_true * &g.sigma_true;
        let id = DMatrix::identity(spec.m, spec.m);
        assert!((prod - id).abs().max() < 1e-10);
        assert_eq!(g.x.nrows(), spec.n);
        // off-diagonal magnitude constant before rescaling; after, entries on
        // edges are nonzero
        for &(i, j) in &g.edges.edges {
            assert!(g.k_true[(i, j)].abs() > 1e-6);
        }
    }

    #[test]
    fn geo_graph_reproducible() {
        let spec = GeoGraphSpec { m: 20, n: 30, ..Default::default() };
        let a = geo_graph(&spec, 9).unwrap();
        let b = geo_graph(&spec, 9).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.edges, b.edges);
    }

    #[test]
    fn changepoint_matching() {
        let truth = vec![100, 200, 300];
        let exact = evaluate_changepoints(&truth, &truth, 10);
        assert_eq!((exact.matched.len(), exact.false_positives, exact.missed), (3, 0, 0));
        let extra = evaluate_changepoints(&[100, 200, 300, 350], &truth, 10);
        assert_eq!(extra.false_positives, 1);
        let shifted: Vec<usize> = truth.iter().map(|t| t + 11).collect();
        let none = evaluate_changepoints(&shifted, &truth, 10);
        assert_eq!(none.missed, 3);
        // each truth point matched at most once
        let doubled = evaluate_changepoints(&[99, 101], &[100], 10);
        assert_eq!(doubled.matched.len(), 1);
        assert_eq!(doubled.false_positives, 1);
    }

    #[test]
    fn edge_eval() {
        let mut truth = EdgeSelection::new(5);
        truth.insert(0, 1);
        truth.insert(2, 3);
        assert_eq!(evaluate_edges(&truth, &truth).unwrap().f1, 1.0);
        let empty = EdgeSelection::new(5);
        assert_eq!(evaluate_edges(&empty, &truth).unwrap().recall, 0.0);
        let mut disjoint = EdgeSelection::new(5);
        disjoint.insert(0, 4);
        let e = evaluate_edges(&disjoint, &truth).unwrap();
        assert_eq!((e.precision, e.recall), (0.0, 0.0));
        assert!(evaluate_edges(&EdgeSelection::new(4), &truth).is_err());
    }

    struct TopK;
    impl Selector for TopK {
        fn dim(&self) -> usize {
            4
        }
        fn select(&self, z: &[f64], kappa_max: usize) -> crate::Result<Vec<Selection>> {
            let mut idx: Vec<usize> = (0..z.len()).collect();
            idx.sort_by(|&a, &b| z[b].abs().partial_cmp(&z[a].abs()).unwrap());
            Ok((1..=kappa_max.min(z.len()))
                .map(|k| Selection {
                    indices: idx[..k].to_vec(),
                    energy: idx[..k].iter().map(|&i| z[i] * z[i]).sum(),
                })
                .collect())
        }
    }

    #[test]
    fn oracle_curve_decomposition() {
        let v = [3.0, 2.0, 1.0, 0.0];
        let sigma2 = 0.5;
        let curve = oracle_pe_curve(&TopK, &v, 4, sigma2).unwrap();
        let n = 4.0;
        assert_eq!(curve[&0], 14.0 / n);
        assert!((curve[&4] - 4.0 * sigma2 / n).abs() < 1e-12);
        // bias term nonincreasing, variance linear
        let mut prev_bias = f64::INFINITY;
        for (&k, &pe) in &curve {
            let bias = pe - k as f64 * sigma2 / n;
            assert!(bias <= prev_bias + 1e-12);
            prev_bias = bias;
        }
    }

    #[test]
    fn true_pe_cases() {
        let v = [2.0, 0.0];
        let z = [2.5, 1.0];
        // empty selection: pure bias
        assert!((true_pe(&[], &z, &v) - 2.0).abs() < 1e-12);
        // full selection: squared errors
        assert!((true_pe(&[0, 1], &z, &v) - (0.25 + 1.0) / 2.0).abs() < 1e-12);
    }
}
