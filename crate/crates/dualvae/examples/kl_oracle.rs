//! Closed-form diagonal-Gaussian KL against hand values and a Monte Carlo
//! estimate of E_q[log q - log p].
//!
//! cargo run --example kl_oracle

use dualvae::model::{GaussianPosterior, PosteriorForm};
use dualvae::objective::kl_diag_gaussian_to_standard;
use dualvae::rng::derive_rng;
use rand_distr::{Distribution, StandardNormal};

fn vector(mean: Vec<f64>, log_var: Vec<f64>) -> GaussianPosterior<f64> {
    let dim = mean.len();
    GaussianPosterior::new(PosteriorForm::Vector { dim }, mean, log_var).unwrap()
}

fn main() {
    println!("worked values:");
    println!(
        "  KL(N(0,1) || N(0,1))       = {:.9}  (expect 0)",
        kl_diag_gaussian_to_standard(&vector(vec![0.0], vec![0.0]))
    );
    println!(
        "  KL(N([1,0],I) || N(0,I))   = {:.9}  (expect 0.5)",
        kl_diag_gaussian_to_standard(&vector(vec![1.0, 0.0], vec![0.0, 0.0]))
    );
    println!(
        "  KL(N(0,e) || N(0,1))       = {:.9}  (expect 0.5(e-2) = {:.9})",
        kl_diag_gaussian_to_standard(&vector(vec![0.0], vec![1.0])),
        0.5 * (std::f64::consts::E - 2.0)
    );

    println!("\nMonte Carlo cross-check (500k samples per posterior):");
    let mut rng = derive_rng(7, &[0xEC]);
    for case in 0..4 {
        use rand::Rng;
        let d = 3;
        let mean: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let lv: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let post = vector(mean.clone(), lv.clone());
        let closed = kl_diag_gaussian_to_standard(&post);
        let n = 500_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let mut log_q = 0.0;
            let mut log_p = 0.0;
            for j in 0..d {
                let e: f64 = StandardNormal.sample(&mut rng);
                let z = mean[j] + (0.5 * lv[j]).exp() * e;
                log_q += -0.5 * (z - mean[j]).powi(2) / lv[j].exp()
                    - 0.5 * (2.0 * std::f64::consts::PI).ln()
                    - 0.5 * lv[j];
                log_p += -0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln();
            }
            acc += log_q - log_p;
        }
        let mc = acc / n as f64;
        println!(
            "  case {case}: closed {closed:.6}  sampled {mc:.6}  relative gap {:.2e}",
            ((mc - closed) / closed).abs()
        );
    }
}
