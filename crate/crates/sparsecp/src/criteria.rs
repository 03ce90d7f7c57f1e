//! Information criteria for selection without shrinkage.
//!
//! Mallows's Cp and GCV assess a fixed model. When the model is itself the
//! outcome of an optimisation over the noisy sample, the effective degrees of
//! freedom exceed the model size. This module estimates those generalised
//! degrees of freedom by Monte-Carlo simulation over any [`Selector`] and
//! turns them into a mirror-corrected criterion curve.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Residual summary of a fitted model of size `kappa`.
#[derive(Debug, Clone, Copy)]
pub struct FitSummary {
    pub n: usize,
    pub kappa: usize,
    /// Sum of squared residuals.
    pub sse: f64,
    /// Noise variance, if known or estimated outside the selection.
    pub sigma2: Option<f64>,
}

impl FitSummary {
    pub fn new(n: usize, kappa: usize, sse: f64, sigma2: Option<f64>) -> Self {
        debug_assert!(sse >= 0.0);
        debug_assert!(kappa <= n);
        debug_assert!(sigma2.is_none_or(|s| s > 0.0));
        FitSummary { n, kappa, sse, sigma2 }
    }
}

/// Non-studentised Mallows's Cp: `SSE/n + 2 nu sigma^2 / n - sigma^2`.
///
/// Unbiased for the prediction error when `nu` is the (generalised) degrees
/// of freedom of the estimator.
pub fn mallows_cp(fit: &FitSummary, nu_kappa: f64) -> Result<f64> {
    let sigma2 = fit.sigma2.ok_or(Error::MissingSigma2)?;
    let n = fit.n as f64;
    Ok(fit.sse / n + 2.0 * nu_kappa / n * sigma2 - sigma2)
}

/// Generalised cross validation: `(SSE/n) / (1 - nu/n)^2`. A sigma-free
/// surrogate for Cp.
pub fn gcv(fit: &FitSummary, nu_kappa: f64) -> Result<f64> {
    let n = fit.n as f64;
    if nu_kappa >= n {
        return Err(Error::DegenerateGcv { nu: nu_kappa, n: fit.n });
    }
    let denom = 1.0 - nu_kappa / n;
    Ok(fit.sse / n / (denom * denom))
}

/// One selected model: the active index set and the noise energy it captures,
/// `||P_S z||^2`.
#[derive(Debug, Clone)]
pub struct Selection {
    pub indices: Vec<usize>,
    pub energy: f64,
}

/// A size-indexed selection procedure.
///
/// Given a noise or pseudo-observation vector of length [`Selector::dim`],
/// returns for each kappa in `0..=kappa_max` the selected index set of that
/// size and the projection energy `||P_{S_kappa} z||^2`. A selector may
/// return fewer rows when its structure cannot attain every size.
pub trait Selector: Sync {
    fn dim(&self) -> usize;
    fn select(&self, z: &[f64], kappa_max: usize) -> Result<Vec<Selection>>;
}

/// Caller-supplied noise generator: `(rng, dimension) -> pseudo-observations`.
pub type NoiseFn = Arc<dyn Fn(&mut ChaCha8Rng, usize) -> Vec<f64> + Send + Sync>;

/// Noise model driving the Monte-Carlo replicates.
#[derive(Clone)]
pub enum NoiseModel {
    /// i.i.d. standard normal pseudo-observations.
    StdNormal,
    /// Caller-supplied generator, e.g. noise correlated through a design.
    Custom(NoiseFn),
}

impl NoiseModel {
    fn draw(&self, rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
        match self {
            NoiseModel::StdNormal => (0..m).map(|_| StandardNormal.sample(rng)).collect(),
            NoiseModel::Custom(f) => f(rng, m),
        }
    }
}

/// Monte-Carlo estimates of the generalised degrees of freedom, indexed by
/// model size.
#[derive(Debug, Clone)]
pub struct DofTable {
    /// `nu[kappa]`: mean of `||P_{S_kappa} z||^2` across replicates.
    pub nu: Vec<f64>,
    /// Standard error of the mean, per kappa.
    pub se: Vec<f64>,
    /// Mirror offset `(nu[kappa] - kappa) * sigma2 / n`.
    pub mirror: Vec<f64>,
    /// Number of replicates that attained each kappa.
    pub count: Vec<usize>,
    pub sigma2: f64,
    pub n: usize,
    pub replicates: usize,
    pub seed: u64,
}

impl DofTable {
    pub fn kappa_max(&self) -> usize {
        self.nu.len() - 1
    }

    /// Rebuilds the mirror column for a different noise scale and sample size.
    pub fn rescaled(&self, sigma2: f64, n: usize) -> DofTable {
        let mut out = self.clone();
        out.sigma2 = sigma2;
        out.n = n;
        for (kappa, m) in out.mirror.iter_mut().enumerate() {
            *m = (out.nu[kappa] - kappa as f64) * sigma2 / n as f64;
        }
        out
    }

    /// Writes the table as CSV with header `kappa,nu,se,mirror`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "kappa,nu,se,mirror")?;
        for kappa in 0..self.nu.len() {
            writeln!(
                w,
                "{},{},{},{}",
                kappa, self.nu[kappa], self.se[kappa], self.mirror[kappa]
            )?;
        }
        Ok(())
    }
}

/// Keep-largest-magnitude selector on `m` coordinates: for each kappa the
/// selected set holds the kappa largest `|z_i|` (selection without
/// shrinkage; the orthogonal-design best subset).
pub struct HardThresholdSelector {
    pub m: usize,
}

impl Selector for HardThresholdSelector {
    fn dim(&self) -> usize {
        self.m
    }

    fn select(&self, z: &[f64], kappa_max: usize) -> Result<Vec<Selection>> {
        let mut order: Vec<usize> = (0..z.len()).collect();
        order.sort_by(|&a, &b| {
            z[b].abs().partial_cmp(&z[a].abs()).unwrap().then(a.cmp(&b))
        });
        let mut out = Vec::new();
        let mut energy = 0.0;
        for kappa in 1..=kappa_max.min(z.len()) {
            let i = order[kappa - 1];
            energy += z[i] * z[i];
            let mut indices = order[..kappa].to_vec();
            indices.sort_unstable();
            out.push(Selection { indices, energy });
        }
        Ok(out)
    }
}

/// Derived seed for one replicate: same key stream, distinct ChaCha stream.
fn replicate_rng(seed: u64, replicate: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64 + 1);
    rng
}

/// Estimates `nu[kappa] = E ||P_{S_kappa} Z||^2` by Monte-Carlo simulation
/// with the zero-vector approximation: replicates are pure noise, the
/// selector runs on each, and energies are averaged per attained kappa.
///
/// Deterministic given `seed`; replicates are evaluated in parallel and
/// reduced in replicate order.
pub fn mc_dof(
    selector: &dyn Selector,
    kappa_max: usize,
    reps: usize,
    seed: u64,
    noise: &NoiseModel,
) -> Result<DofTable> {
    if reps == 0 {
        return Err(Error::InvalidArgument("reps must be >= 1".into()));
    }
    let m = selector.dim();
    let per_rep: Vec<Result<Vec<Selection>>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(seed, r);
            let z = noise.draw(&mut rng, m);
            selector.select(&z, kappa_max)
        })
        .collect();

    let mut sum = vec![0.0; kappa_max + 1];
    let mut sumsq = vec![0.0; kappa_max + 1];
    let mut count = vec![0usize; kappa_max + 1];
    for (r, res) in per_rep.into_iter().enumerate() {
        let rows = res.map_err(|e| Error::SelectorFailure {
            replicate: r,
            source: Box::new(e),
        })?;
        for sel in rows.iter() {
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
        let mean = sum[kappa] / bf;
        nu[kappa] = mean;
        se[kappa] = if b > 1 {
            let var = (sumsq[kappa] - bf * mean * mean) / (bf - 1.0);
            (var.max(0.0) / bf).sqrt()
        } else {
            0.0
        };
    }
    count[0] = reps;

    let mut table = DofTable {
        mirror: vec![0.0; kappa_max + 1],
        nu,
        se,
        count,
        sigma2: 1.0,
        n: m,
        replicates: reps,
        seed,
    };
    table = table.rescaled(1.0, m);
    Ok(table)
}

/// Mirror-corrected criterion curve over a table of per-size residuals:
/// `Lambda(kappa) = SSE[kappa]/n + 2 nu[kappa] sigma^2 / n - sigma^2`.
///
/// Returns the curve and the minimising kappa. Only sizes present in both
/// the residual table and the dof table enter.
pub fn refined_cp_curve(
    sse_by_kappa: &BTreeMap<usize, f64>,
    dof: &DofTable,
    n: usize,
    sigma2: f64,
) -> Result<(BTreeMap<usize, f64>, usize)> {
    let nf = n as f64;
    let mut curve = BTreeMap::new();
    for (&kappa, &sse) in sse_by_kappa {
        if kappa < dof.nu.len() && dof.nu[kappa].is_finite() {
            let lambda = sse / nf + 2.0 * dof.nu[kappa] * sigma2 / nf - sigma2;
            curve.insert(kappa, lambda);
        }
    }
    let (kappa_star, _) = curve
        .iter()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(a.0.cmp(b.0)))
        .map(|(&k, &v)| (k, v))
        .ok_or(Error::EmptyOverlap)?;
    Ok((curve, kappa_star))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fit(n: usize, kappa: usize, sse: f64, sigma2: Option<f64>) -> FitSummary {
        FitSummary::new(n, kappa, sse, sigma2)
    }

    #[test]
    fn mallows_cp_examples() {
        assert_relative_eq!(
            mallows_cp(&fit(4, 0, 4.0, Some(1.0)), 0.0).unwrap(),
            0.0
        );
        assert_relative_eq!(
            mallows_cp(&fit(10, 10, 0.0, Some(1.0)), 10.0).unwrap(),
            1.0
        );
        // 0.9 + 0.1 - 1 = 0
        assert_relative_eq!(
            mallows_cp(&fit(100, 5, 90.0, Some(1.0)), 5.0).unwrap(),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn mallows_cp_requires_sigma2() {
        assert!(matches!(
            mallows_cp(&fit(10, 1, 1.0, None), 1.0),
            Err(Error::MissingSigma2)
        ));
    }

    #[test]
    fn gcv_examples() {
        assert_relative_eq!(gcv(&fit(10, 0, 10.0, None), 0.0).unwrap(), 1.0);
        assert_relative_eq!(gcv(&fit(10, 5, 5.0, None), 5.0).unwrap(), 2.0);
        assert!(matches!(
            gcv(&fit(4, 4, 4.0, None), 4.0),
            Err(Error::DegenerateGcv { .. })
        ));
    }

    /// Selector ignoring the noise: fixed predetermined sets per kappa.
    struct FixedSelector {
        m: usize,
    }

    impl Selector for FixedSelector {
        fn dim(&self) -> usize {
            self.m
        }
        fn select(&self, z: &[f64], kappa_max: usize) -> Result<Vec<Selection>> {
            Ok((0..=kappa_max.min(self.m))
                .map(|kappa| {
                    let indices: Vec<usize> = (0..kappa).collect();
                    let energy = indices.iter().map(|&i| z[i] * z[i]).sum();
                    Selection { indices, energy }
                })
                .collect())
        }
    }

    /// Keep the kappa largest |z_i|; the hallmark of selection-noise
    /// interaction is nu > kappa.
    pub(crate) struct ThresholdSelector {
        pub m: usize,
    }

    impl Selector for ThresholdSelector {
        fn dim(&self) -> usize {
            self.m
        }
        fn select(&self, z: &[f64], kappa_max: usize) -> Result<Vec<Selection>> {
            let mut order: Vec<usize> = (0..self.m).collect();
            order.sort_by(|&a, &b| z[b].abs().partial_cmp(&z[a].abs()).unwrap());
            let mut out = Vec::with_capacity(kappa_max + 1);
            let mut energy = 0.0;
            let mut indices = Vec::new();
            out.push(Selection { indices: vec![], energy: 0.0 });
            for kappa in 1..=kappa_max.min(self.m) {
                let i = order[kappa - 1];
                energy += z[i] * z[i];
                indices.push(i);
                let mut sorted = indices.clone();
                sorted.sort_unstable();
                out.push(Selection { indices: sorted, energy });
            }
            Ok(out)
        }
    }

    #[test]
    fn fixed_selector_dof_is_kappa() {
        let sel = FixedSelector { m: 200 };
        let table = mc_dof(&sel, 50, 200, 7, &NoiseModel::StdNormal).unwrap();
        for kappa in [10usize, 25, 50] {
            let diff = (table.nu[kappa] - kappa as f64).abs();
            assert!(
                diff <= 3.0 * table.se[kappa],
                "kappa={kappa}: nu={} se={}",
                table.nu[kappa],
                table.se[kappa]
            );
        }
    }

    #[test]
    fn threshold_selector_dof_exceeds_kappa() {
        let sel = ThresholdSelector { m: 2000 };
        let table = mc_dof(&sel, 400, 200, 11, &NoiseModel::StdNormal).unwrap();
        for kappa in [50usize, 100, 200, 400] {
            assert!(
                table.nu[kappa] > kappa as f64,
                "kappa={kappa}: nu={}",
                table.nu[kappa]
            );
        }
    }

    #[test]
    fn mc_dof_reproducible() {
        let sel = ThresholdSelector { m: 100 };
        let a = mc_dof(&sel, 20, 30, 42, &NoiseModel::StdNormal).unwrap();
        let b = mc_dof(&sel, 20, 30, 42, &NoiseModel::StdNormal).unwrap();
        assert_eq!(a.nu, b.nu);
        assert_eq!(a.se, b.se);
        assert_eq!(a.mirror, b.mirror);
    }

    #[test]
    fn mirror_consistency() {
        let sel = ThresholdSelector { m: 100 };
        let table = mc_dof(&sel, 20, 30, 42, &NoiseModel::StdNormal).unwrap();
        let rescaled = table.rescaled(2.5, 400);
        for kappa in 0..=20 {
            let expect = (rescaled.nu[kappa] - kappa as f64) * 2.5 / 400.0;
            assert_eq!(rescaled.mirror[kappa], expect);
        }
        assert_eq!(table.nu[0], 0.0);
        assert_eq!(table.mirror[0], 0.0);
    }

    #[test]
    fn refined_curve_penalty_monotone() {
        // Constant SSE: the penalty decides, smallest kappa wins.
        let sel = FixedSelector { m: 50 };
        let dof = mc_dof(&sel, 10, 50, 3, &NoiseModel::StdNormal).unwrap();
        let sse: BTreeMap<usize, f64> = (0..=10).map(|k| (k, 100.0)).collect();
        let (_, kappa_star) = refined_cp_curve(&sse, &dof, 100, 1.0).unwrap();
        assert_eq!(kappa_star, 0);
    }

    #[test]
    fn refined_curve_two_point() {
        let dof = DofTable {
            nu: vec![0.0, 1.5, 3.0],
            se: vec![0.0; 3],
            mirror: vec![0.0, 0.005, 0.01],
            count: vec![1; 3],
            sigma2: 1.0,
            n: 100,
            replicates: 1,
            seed: 0,
        };
        let sse: BTreeMap<usize, f64> = [(1, 50.0), (2, 10.0)].into_iter().collect();
        let (curve, kappa_star) = refined_cp_curve(&sse, &dof, 100, 1.0).unwrap();
        assert_relative_eq!(curve[&1], -0.47, epsilon = 1e-12);
        assert_relative_eq!(curve[&2], -0.84, epsilon = 1e-12);
        assert_eq!(kappa_star, 2);
    }

    #[test]
    fn dof_table_csv() {
        let sel = FixedSelector { m: 10 };
        let table = mc_dof(&sel, 3, 5, 1, &NoiseModel::StdNormal).unwrap();
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("kappa,nu,se,mirror\n0,0,0,0\n"));
        assert_eq!(text.lines().count(), 5);
    }
}
