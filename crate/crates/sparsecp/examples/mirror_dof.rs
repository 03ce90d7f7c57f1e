//! Why selection needs more degrees of freedom than kappa.
//!
//! Estimates the generalised degrees of freedom of keep-kappa-largest
//! selection on pure noise by Monte Carlo. Selection without shrinkage
//! chases the noise, so nu(kappa) grows well beyond kappa; the difference is
//! the mirror correction that separates the refined Cp from the naive one.
//!
//! Run with: `cargo run --release --example mirror_dof`

use sparsecp::criteria::{mc_dof, HardThresholdSelector, NoiseModel};

fn main() -> sparsecp::Result<()> {
    let m = 1000;
    let selector = HardThresholdSelector { m };
    let dof = mc_dof(&selector, 100, 400, 1, &NoiseModel::StdNormal)?;

    println!("keep-kappa-largest of {m} standard normal coordinates:");
    println!("kappa   nu(kappa)   se     nu/kappa");
    for kappa in [1usize, 5, 10, 20, 50, 100] {
        println!(
            "{:5}   {:<9.2}   {:<5.2}  {:.2}",
            kappa,
            dof.nu[kappa],
            dof.se[kappa],
            dof.nu[kappa] / kappa as f64
        );
    }
    println!();
    println!(
        "a fixed kappa-dimensional projection would have nu = kappa; the excess\n\
         (nu - kappa) sigma^2 / n is the mirror offset added to the naive Cp"
    );
    Ok(())
}
