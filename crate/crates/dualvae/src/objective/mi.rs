//! Variational mutual-information bound: Monte Carlo estimator plus an
//! analytic Gaussian family for verifying it.
//!
//! For a posterior family q(z|x) and prior p(z) = N(0, I), the variational MI
//! decomposes as
//!
//!   I_v(x, z) = E_x[ KL(q(z|x) || p) ] - KL(q(z) || p),
//!
//! so the expected posterior-to-prior KL upper-bounds I_v and the gap is the
//! marginal-to-prior KL. The estimator computes the first term by the closed
//! form averaged over data draws and the second by scoring z-space samples
//! against the mixture of the per-datum posteriors. Diagnostic only; nothing
//! here feeds the training loss.

use rand_chacha::ChaCha8Rng;


use super::kl_diag_gaussian_to_standard;
use crate::model::GaussianPosterior;
use crate::tensor::{Result, TensorError};

#[derive(Debug, Clone, Copy)]
pub struct MiBoundReport {
    pub mi_estimate: f64,
    pub expected_kl: f64,
    pub marginal_kl_estimate: f64,
    pub sample_count: usize,
}

fn log_standard_normal(z: &[f64]) -> f64 {
    let mut acc = 0.0;
    for &v in z {
        acc += -0.5 * v * v - 0.5 * (2.0 * std::f64::consts::PI).ln();
    }
    acc
}

fn log_pdf(post: &GaussianPosterior<f64>, z: &[f64]) -> f64 {
    let mut acc = 0.0;
    for ((&m, &lv), &v) in post.mean().iter().zip(post.log_variance()).zip(z) {
        let d = v - m;
        acc += -0.5 * d * d / lv.exp() - 0.5 * lv - 0.5 * (2.0 * std::f64::consts::PI).ln();
    }
    acc
}

fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Estimate the MI bound decomposition over `n` data draws.
///
/// `expected_kl` averages the closed-form posterior-to-prior KL over the
/// draws. `marginal_kl_estimate` draws an antithetic pair of z samples from
/// each posterior (mean ± scaled noise) and scores both against the
/// n-component mixture versus the prior. The noise is quantile-stratified
/// across the n posteriors per coordinate and the antithetic pairing cancels
/// the odd score terms, so the estimate concentrates far faster than plain
/// sampling while staying consistent. The report satisfies
/// `mi_estimate = expected_kl - marginal_kl_estimate` exactly.
pub fn estimate_variational_mi<X, P, D>(
    posterior: P,
    mut data: D,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<MiBoundReport>
where
    P: Fn(&X) -> GaussianPosterior<f64>,
    D: FnMut(&mut ChaCha8Rng) -> X,
{
    if n < 2 {
        return Err(TensorError::Config {
            op: "estimate_variational_mi",
            msg: format!("need at least 2 samples, got {n}"),
        });
    }
    let posteriors: Vec<GaussianPosterior<f64>> = (0..n)
        .map(|_| {
            let x = data(rng);
            posterior(&x)
        })
        .collect();

    let expected_kl = posteriors
        .iter()
        .map(kl_diag_gaussian_to_standard)
        .sum::<f64>()
        / n as f64;

    // an antithetic z pair per posterior, each scored against the mixture;
    // noise stratified over the posteriors, per coordinate
    let dim = posteriors[0].mean().len();
    let noise_cols: Vec<Vec<f64>> = (0..dim).map(|_| stratified_standard_normal(n, rng)).collect();
    let mut marginal_acc = 0.0;
    let mut z_plus = vec![0.0; dim];
    let mut z_minus = vec![0.0; dim];
    let mut logs = vec![0.0; n];
    for (i, post) in posteriors.iter().enumerate() {
        for (j, ((zp, zm), (&m, &lv))) in z_plus
            .iter_mut()
            .zip(z_minus.iter_mut())
            .zip(post.mean().iter().zip(post.log_variance()))
            .enumerate()
        {
            let offset = (0.5 * lv).exp() * noise_cols[j][i];
            *zp = m + offset;
            *zm = m - offset;
        }
        let mut pair_acc = 0.0;
        for z in [&z_plus, &z_minus] {
            for (l, other) in logs.iter_mut().zip(&posteriors) {
                *l = log_pdf(other, z);
            }
            let log_mixture = logsumexp(&logs) - (n as f64).ln();
            pair_acc += log_mixture - log_standard_normal(z);
        }
        marginal_acc += 0.5 * pair_acc;
    }
    let marginal_kl_estimate = marginal_acc / n as f64;

    Ok(MiBoundReport {
        mi_estimate: expected_kl - marginal_kl_estimate,
        expected_kl,
        marginal_kl_estimate,
        sample_count: n,
    })
}

/// Closed forms for the 1-D analytic family x ~ N(0,1), q(z|x) = N(a x, s2):
/// returns (mi_exact, expected_kl_exact).
///
/// The marginal is N(0, a^2 + s2), so
/// mi = 0.5 ln(1 + a^2/s2) and expected KL = 0.5 (a^2 + s2 - ln s2 - 1).
pub fn analytic_gaussian_lab(a: f64, sigma2: f64) -> Result<(f64, f64)> {
    if sigma2 <= 0.0 || !sigma2.is_finite() {
        return Err(TensorError::Config {
            op: "analytic_gaussian_lab",
            msg: format!("sigma2 must be positive and finite, got {sigma2}"),
        });
    }
    let mi = 0.5 * (1.0 + a * a / sigma2).ln();
    let expected_kl = 0.5 * (a * a + sigma2 - sigma2.ln() - 1.0);
    Ok((mi, expected_kl))
}

/// Posterior of the analytic family for a given x.
pub fn analytic_family_posterior(a: f64, sigma2: f64, x: f64) -> GaussianPosterior<f64> {
    GaussianPosterior::new(
        crate::model::PosteriorForm::Vector { dim: 1 },
        vec![a * x],
        vec![sigma2.ln()],
    )
    .expect("finite posterior")
}

/// Quantile-stratified standard normal draws: one per stratum midpoint, in
/// shuffled order. Reduces the estimator variance far below plain sampling,
/// which the grid verification relies on.
pub fn stratified_standard_normal(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    use rand::seq::SliceRandom;
    let mut out: Vec<f64> = (0..n)
        .map(|i| inverse_normal_cdf((i as f64 + 0.5) / n as f64))
        .collect();
    out.shuffle(rng);
    out
}

/// Rational approximation of the standard normal inverse CDF (Acklam),
/// relative error below 1.2e-9 — far tighter than the estimator tolerances
/// it supports.
pub fn inverse_normal_cdf(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0);
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let p_low = 0.02425;
    let x = if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    // one Halley refinement against the CDF via erfc-free formulation:
    // phi(x) closed form, Phi(x) from the approximation itself is already
    // tight enough for this artifact's tolerances
    x
}
