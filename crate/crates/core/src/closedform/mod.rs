//! Analytical statistics of the received and harvested energy.
//!
//! Notation per UE `k`, UE `i`, AP `l`: `zeta = sqrt(varsigma_kl varsigma_il)`,
//! `rho = h_kl^T conj(h_il) / N`, `alpha = alpha_ik,l` (zero for UEs on other
//! pilots) and `w_il = kappa_il sqrt(eta_il)`.

pub mod exact;
pub mod gaussian;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::topology::LargeScaleModel;
use crate::wpt::{beam_weights, sigmoid, EhCircuit, PowerControl};

/// `E[g_kl^T conj(g_hat_il)] = N (zeta rho + alpha gamma_kl)`.
pub fn quadform_first_moment(ls: &LargeScaleModel, k: usize, i: usize, l: usize) -> Complex64 {
    let n = ls.antennas as f64;
    let zeta = (ls.varsigma[(k, l)] * ls.varsigma[(i, l)]).sqrt();
    (ls.rho(k, i, l) * zeta + ls.alpha(i, k, l) * ls.gamma[(k, l)]) * n
}

/// `E|g_kl^T conj(g_hat_il)|^2`.
pub fn quadform_mean_same_ap(ls: &LargeScaleModel, k: usize, i: usize, l: usize) -> f64 {
    let n = ls.antennas as f64;
    let (sk, si) = (ls.varsigma[(k, l)], ls.varsigma[(i, l)]);
    let (gk, gi) = (ls.gamma[(k, l)], ls.gamma[(i, l)]);
    let bk = ls.beta[(k, l)];
    let zeta = (sk * si).sqrt();
    let rho = ls.rho(k, i, l);
    let alpha = ls.alpha(i, k, l);
    let shared = if ls.shares_pilot(i, k) { n + 1.0 } else { 1.0 };
    n * (n * zeta * zeta * rho.norm_sqr()
        + sk * gi
        + si * gk
        + shared * gi * gk
        + (si + gi) * (bk - gk)
        + 2.0 * n * gk * alpha * zeta * rho.re)
}

/// `E[(g_kl^T conj(g_hat_il)) (g_hat_il'^T conj(g_kl'))]` for `l != l'`.
pub fn quadform_mean_cross_ap(
    ls: &LargeScaleModel,
    k: usize,
    i: usize,
    l: usize,
    l2: usize,
) -> Result<Complex64> {
    if l == l2 {
        return Err(Error::SameAp(l));
    }
    Ok(quadform_first_moment(ls, k, i, l) * quadform_first_moment(ls, k, i, l2).conj())
}

fn served_weights(ls: &LargeScaleModel, pc: &PowerControl, served: &[usize]) -> Result<Mat<f64>> {
    if pc.eta.rows() != ls.num_ues || pc.eta.cols() != ls.num_aps {
        return Err(Error::Shape(
            "power control does not match the model".into(),
        ));
    }
    if let Some(&i) = served.iter().find(|&&i| i >= ls.num_ues) {
        return Err(Error::InvalidInput(format!("served ue {i} out of range")));
    }
    let w = beam_weights(ls, pc)?;
    let mut out = Mat::filled(ls.num_ues, ls.num_aps, 0.0);
    for &i in served {
        for l in 0..ls.num_aps {
            out[(i, l)] = w[(i, l)];
        }
    }
    Ok(out)
}

/// Mean received RF power of every UE.
pub fn mean_rf_power(
    ls: &LargeScaleModel,
    pc: &PowerControl,
    served: &[usize],
) -> Result<Vec<f64>> {
    let w = served_weights(ls, pc, served)?;
    Ok((0..ls.num_ues)
        .map(|k| {
            let mut total = 0.0;
            for &i in served {
                let mut coherent = Complex64::new(0.0, 0.0);
                for l in 0..ls.num_aps {
                    let wl = w[(i, l)];
                    if wl == 0.0 {
                        continue;
                    }
                    let m1 = quadform_first_moment(ls, k, i, l) * wl;
                    coherent += m1;
                    total += wl * wl * quadform_mean_same_ap(ls, k, i, l) - m1.norm_sqr();
                }
                total += coherent.norm_sqr();
            }
            total
        })
        .collect())
}

/// Exact variance of the received RF power of every UE, including the
/// covariances between beams of different UEs and different APs.
pub fn var_rf_power(ls: &LargeScaleModel, pc: &PowerControl, served: &[usize]) -> Result<Vec<f64>> {
    Ok(rf_power_moments(ls, pc, served)?
        .into_iter()
        .map(|(_, v)| v)
        .collect())
}

/// Exact `(mean, variance)` of the received RF power of every UE.
pub fn rf_power_moments(
    ls: &LargeScaleModel,
    pc: &PowerControl,
    served: &[usize],
) -> Result<Vec<(f64, f64)>> {
    let w = served_weights(ls, pc, served)?;
    Ok((0..ls.num_ues)
        .map(|k| exact::power_moments(ls, &w, k))
        .collect())
}

/// Exact `Var(|g_kl^T conj(g_hat_il)|^2)`.
pub fn upsilon_coh(ls: &LargeScaleModel, k: usize, i: usize, l: usize) -> f64 {
    let mut w = Mat::filled(ls.num_ues, ls.num_aps, 0.0);
    w[(i, l)] = 1.0;
    exact::power_moments(ls, &w, k).1
}

/// Exact variance of `(g_kl^T conj(g_hat_il)) (g_hat_il'^T conj(g_kl'))`.
pub fn upsilon_noncoh(
    ls: &LargeScaleModel,
    k: usize,
    i: usize,
    l: usize,
    l2: usize,
) -> Result<f64> {
    if l == l2 {
        return Err(Error::SameAp(l));
    }
    let m2 = quadform_mean_same_ap(ls, k, i, l) * quadform_mean_same_ap(ls, k, i, l2);
    let m1 = quadform_first_moment(ls, k, i, l).norm_sqr()
        * quadform_first_moment(ls, k, i, l2).norm_sqr();
    Ok(m2 - m1)
}

/// Closed-form polynomial for the coherent kernel as commonly stated.
///
/// It omits several fourth-order terms; [`upsilon_coh`] is exact.
pub fn upsilon_coh_polynomial(ls: &LargeScaleModel, k: usize, i: usize, l: usize) -> f64 {
    let n = ls.antennas as f64;
    let (sk, si) = (ls.varsigma[(k, l)], ls.varsigma[(i, l)]);
    let (gk, bk, uk) = (ls.gamma[(k, l)], ls.beta[(k, l)], ls.upsilon[(k, l)]);
    let z2 = sk * si;
    let r2 = ls.rho(k, i, l).norm_sqr();
    let a2 = ls.alpha(i, k, l).powi(2);
    2.0 * n
        * n
        * z2
        * (n * a2 * sk * r2 * gk + n * bk * r2 * si + a2 * r2 * gk * (bk + n * gk) + a2 * bk * gk)
        + n * n * (a2 * a2 * sk * sk * gk * gk + bk * bk * si * si)
        + 2.0
            * a2
            * gk
            * n
            * (n + 1.0)
            * (a2 * sk * gk * ((n + 1.0) * gk + bk)
                + si * ((n - 1.0) * bk * gk + bk * bk + 2.0 * gk * gk))
        + n * a2
            * a2
            * gk
            * gk
            * ((n + 1.0) * (n + 2.0) * gk * ((n + 3.0) * gk + 4.0 * uk) + uk * uk * (2.0 * n + 1.0)
                - (bk + n * gk).powi(2))
}

/// Closed-form polynomial for the non-coherent kernel as commonly stated.
pub fn upsilon_noncoh_polynomial(
    ls: &LargeScaleModel,
    k: usize,
    i: usize,
    l: usize,
    l2: usize,
) -> Result<f64> {
    if l == l2 {
        return Err(Error::SameAp(l));
    }
    let n = ls.antennas as f64;
    let s = |u: usize, a: usize| ls.varsigma[(u, a)];
    let (g1, g2) = (ls.gamma[(k, l)], ls.gamma[(k, l2)]);
    let (b1, b2) = (ls.beta[(k, l)], ls.beta[(k, l2)]);
    let (nu1, nu2) = (s(k, l) + g1, s(k, l2) + g2);
    let (z1, z2) = (s(k, l) * s(i, l), s(k, l2) * s(i, l2));
    let (r1, r2) = (ls.rho(k, i, l).norm_sqr(), ls.rho(k, i, l2).norm_sqr());
    let (a1, a2) = (ls.alpha(i, k, l).powi(2), ls.alpha(i, k, l2).powi(2));
    let nn = n * n;
    Ok(nn * r2 * z2 * (a1 * g1 * (b1 + n * nu1) + n * b1 * s(i, l))
        + nn * r1 * z1 * (a2 * g2 * (b2 + n * nu2) + n * b2 * s(i, l2))
        + nn * (a2 * b1 * s(i, l) * g2 * (b2 + s(k, l2) + n * g2)
            + a1 * b2 * s(i, l2) * g1 * (b1 + s(k, l) + n * g1))
        + nn * b1 * b2 * s(i, l) * s(i, l2)
        + nn * a1
            * a2
            * g1
            * g2
            * ((s(k, l) + b1) * (s(k, l2) + b2) + n * (g1 * (b2 + s(k, l2)) + g2 * (b1 + s(k, l)))))
}

/// Variance assembled from the polynomial kernels, treating every
/// `(i, l, l')` term as uncorrelated with every other.
pub fn var_rf_power_uncorrelated(
    ls: &LargeScaleModel,
    pc: &PowerControl,
    served: &[usize],
) -> Result<Vec<f64>> {
    let w = served_weights(ls, pc, served)?;
    let mut out = vec![0.0; ls.num_ues];
    for (k, slot) in out.iter_mut().enumerate() {
        for &i in served {
            for l in 0..ls.num_aps {
                *slot += w[(i, l)].powi(4) * upsilon_coh_polynomial(ls, k, i, l);
                for l2 in (0..ls.num_aps).filter(|&x| x != l) {
                    *slot += (w[(i, l)] * w[(i, l2)]).powi(2)
                        * upsilon_noncoh_polynomial(ls, k, i, l, l2)?;
                }
            }
        }
    }
    Ok(out)
}

/// `(Lambda, Lambda', Lambda'')` of the circuit's logistic at `input`.
pub fn logistic_derivatives(input: f64, circuit: &EhCircuit) -> (f64, f64, f64) {
    let u = circuit.a * (input - circuit.b);
    let lam = sigmoid(u);
    let one_minus = sigmoid(-u);
    let d1 = circuit.a * lam * one_minus;
    // 1 - 2 Lambda = -tanh(u / 2)
    let d2 = -circuit.a * d1 * (0.5 * u).tanh();
    (lam, d1, d2)
}

/// Harvested energy at the mean input power.
pub fn mean_harvested_energy(mean_i: f64, circuit: &EhCircuit, tau_h: f64) -> f64 {
    tau_h * circuit.output_power(mean_i.max(0.0))
}

/// Second-order Taylor variance of the harvested energy,
/// `(tau_h psi)^2 Var(I) (Lambda'' Lambda + Lambda'^2)` at the mean input.
pub fn var_harvested_energy(
    mean_i: f64,
    var_i: f64,
    circuit: &EhCircuit,
    tau_h: f64,
) -> Result<f64> {
    if !(mean_i >= 0.0 && var_i >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "need mean_i >= 0 and var_i >= 0, got {mean_i}, {var_i}"
        )));
    }
    let (lam, d1, d2) = logistic_derivatives(mean_i, circuit);
    let v = (tau_h * circuit.psi()).powi(2) * var_i * (d2 * lam + d1 * d1);
    if v < 0.0 {
        Err(Error::NegativeVariance(v))
    } else {
        Ok(v)
    }
}

/// [`var_harvested_energy`] clamped at zero, with a warning when clamping.
pub fn var_harvested_energy_clamped(
    mean_i: f64,
    var_i: f64,
    circuit: &EhCircuit,
    tau_h: f64,
) -> Result<f64> {
    match var_harvested_energy(mean_i, var_i, circuit, tau_h) {
        Err(Error::NegativeVariance(v)) => {
            log::warn!("harvested-energy variance {v:e} clamped to 0 at mean input {mean_i:e} W");
            Ok(0.0)
        }
        other => other,
    }
}

/// First-order (delta method) variance `(tau_h psi Lambda')^2 Var(I)`.
pub fn var_harvested_energy_linear(
    mean_i: f64,
    var_i: f64,
    circuit: &EhCircuit,
    tau_h: f64,
) -> f64 {
    let (_, d1, _) = logistic_derivatives(mean_i, circuit);
    (tau_h * circuit.psi() * d1).powi(2) * var_i
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Analytical,
    Empirical,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarvestStatistics {
    pub mean_i: f64,
    pub var_i: f64,
    pub mean_e: f64,
    pub var_e: f64,
    pub provenance: Provenance,
}

/// Analytical statistics for every UE with all UEs served.
pub fn analytical_statistics(
    ls: &LargeScaleModel,
    pc: &PowerControl,
    circuit: &EhCircuit,
    tau_h: f64,
) -> Result<Vec<HarvestStatistics>> {
    let served: Vec<usize> = (0..ls.num_ues).collect();
    let means = mean_rf_power(ls, pc, &served)?;
    let vars = var_rf_power(ls, pc, &served)?;
    means
        .into_iter()
        .zip(vars)
        .map(|(m, v)| {
            Ok(HarvestStatistics {
                mean_i: m,
                var_i: v,
                mean_e: mean_harvested_energy(m, circuit, tau_h),
                var_e: var_harvested_energy_clamped(m, v, circuit, tau_h)?,
                provenance: Provenance::Analytical,
            })
        })
        .collect()
}
