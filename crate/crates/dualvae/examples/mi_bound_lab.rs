//! The variational mutual-information bound on an analytic Gaussian family:
//! exact values, the nonnegative bound gap, and the Monte Carlo estimator.
//!
//! For x ~ N(0,1) and q(z|x) = N(a x, s2), the expected posterior-to-prior KL
//! upper-bounds the variational MI; both have closed forms here.
//!
//! cargo run --example mi_bound_lab

use dualvae::model::{GaussianPosterior, PosteriorForm};
use dualvae::objective::mi::{
    analytic_gaussian_lab, estimate_variational_mi, stratified_standard_normal,
};
use dualvae::rng::derive_rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("{:>5} {:>6} | {:>8} {:>8} {:>8} | {:>8} {:>8}",
        "a", "s2", "mi", "ekl", "gap", "mi_est", "ekl_est");
    for a in [0.0, 0.5, 1.0, 2.0] {
        for s2 in [0.25, 1.0, 4.0] {
            let (mi, ekl) = analytic_gaussian_lab(a, s2)?;
            let n = 10_000;
            let mut rng = derive_rng(3, &[a.to_bits(), s2.to_bits()]);
            let xs = stratified_standard_normal(n, &mut rng);
            let mut idx = 0;
            let report = estimate_variational_mi(
                |x: &f64| {
                    GaussianPosterior::new(
                        PosteriorForm::Vector { dim: 1 },
                        vec![a * *x],
                        vec![s2.ln()],
                    )
                    .unwrap()
                },
                move |_| {
                    let x = xs[idx % n];
                    idx += 1;
                    x
                },
                n,
                &mut rng,
            )?;
            println!(
                "{a:>5} {s2:>6} | {mi:>8.4} {ekl:>8.4} {:>8.4} | {:>8.4} {:>8.4}",
                ekl - mi,
                report.mi_estimate,
                report.expected_kl
            );
        }
    }
    println!(
        "\nat (a=1, s2=1): mi = 0.5 ln 2 = {:.6}, expected KL = 0.5",
        0.5 * 2.0f64.ln()
    );
    Ok(())
}
