//! Lasso path, de-shrunk refits, and the pilot variance estimate.
//!
//! Fits a lasso path on a synthetic sparse regression, shows the first
//! attainment of each model size with its least-squares refit, and estimates
//! the noise variance from the GCV-chosen shrinkage fit.
//!
//! Run with: `cargo run --release --example lasso_pilot`

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sparsecp::lasso::{lasso_path, ols_refit, pilot_sigma2, SigmaMode};

fn main() -> sparsecp::Result<()> {
    let (n, m) = (200usize, 50usize);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut x: DMatrix<f64> = DMatrix::from_fn(n, m, |_, _| StandardNormal.sample(&mut rng));
    // Unit-norm columns, as the path solver expects.
    for mut c in x.column_iter_mut() {
        let norm = c.norm();
        c /= norm;
    }
    // True model: 5 active coefficients, noise variance 1.
    let mut beta = DVector::zeros(m);
    for (i, b) in [(3usize, 8.0), (10, -6.0), (17, 5.0), (24, -7.0), (40, 6.0)] {
        beta[i] = b;
    }
    let noise: DVector<f64> = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
    let y = &x * &beta + noise;

    let path = lasso_path(&x, &y, 12)?;
    println!("kappa  refit SSE   selection");
    for (&kappa, sel) in &path.selections {
        if kappa > 8 {
            continue;
        }
        println!("{:5}  {:<9.2}  {:?}", kappa, path.sse_refit[&kappa], sel);
    }

    // The de-shrunk coefficients at the true model size.
    let sel = &path.selections[&5];
    let (coef, sse) = ols_refit(&x, &y, sel)?;
    println!("refit at kappa = 5 (SSE {sse:.2}):");
    for &j in sel {
        println!("  beta[{j:2}] = {:8.3}  (truth {:.1})", coef[j], beta[j]);
    }

    // Pilot noise-variance estimate from the shrinkage fit.
    let s2 = pilot_sigma2(&path, n, SigmaMode::ResidualDf)?;
    println!("pilot sigma^2 = {s2:.3} (truth 1.0)");
    Ok(())
}
