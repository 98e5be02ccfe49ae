//! MRT energy beamforming and the logistic harvesting circuit.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelState;
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::topology::LargeScaleModel;

/// Logistic energy-harvesting circuit.
///
/// Output power is `psi (Lambda(I) - varphi)` with
/// `Lambda(I) = 1 / (1 + exp(-a (I - b)))`, which is zero at `I = 0` and
/// saturates at `i_max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EhCircuit {
    /// Steepness in 1/W.
    pub a: f64,
    /// Turning point in W.
    pub b: f64,
    /// Saturation output power in W.
    pub i_max: f64,
}

impl Default for EhCircuit {
    fn default() -> Self {
        Self {
            a: 150.0,
            b: 0.014,
            i_max: 0.024,
        }
    }
}

impl EhCircuit {
    pub fn varphi(&self) -> f64 {
        1.0 / (1.0 + (self.a * self.b).exp())
    }

    pub fn psi(&self) -> f64 {
        self.i_max / (1.0 - self.varphi())
    }

    /// `Lambda(I)`, evaluated without overflow for any finite input.
    pub fn logistic(&self, input: f64) -> f64 {
        sigmoid(self.a * (input - self.b))
    }

    /// Harvested DC power for received RF power `input`.
    ///
    /// Uses `psi (Lambda - varphi) = i_max Lambda(I) (1 - exp(-a I))`, which
    /// is exact and avoids cancellation for small inputs.
    pub fn output_power(&self, input: f64) -> f64 {
        self.i_max * self.logistic(input) * -(-self.a * input).exp_m1()
    }

    pub(crate) fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        for (name, x) in [
            ("circuit.a", self.a),
            ("circuit.b", self.b),
            ("circuit.i_max", self.i_max),
        ] {
            if !(x > 0.0 && x.is_finite()) {
                v.push(format!("{name} must be positive and finite, got {x}"));
            }
        }
        v
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Energy harvested over `tau_h` seconds from RF power `input`.
pub fn harvest(input: f64, circuit: &EhCircuit, tau_h: f64) -> Result<f64> {
    if input.is_nan() || input < 0.0 {
        return Err(Error::InvalidInput(format!(
            "received power must be non-negative, got {input}"
        )));
    }
    Ok(tau_h * circuit.output_power(input))
}

/// Power control coefficients `eta`, K x L, in watts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerControl {
    pub eta: Mat<f64>,
}

impl PowerControl {
    /// Largest per-AP sum of `eta`.
    pub fn max_ap_load(&self) -> f64 {
        (0..self.eta.cols())
            .map(|l| (0..self.eta.rows()).map(|k| self.eta[(k, l)]).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn scaled(&self, t: f64) -> Self {
        Self {
            eta: self.eta.map(|e| e * t),
        }
    }
}

/// Every AP splits its budget evenly over the UEs.
pub fn equal_power_control(config: &SystemConfig) -> PowerControl {
    let eta = config.p_d() / config.num_ues as f64;
    PowerControl {
        eta: Mat::filled(config.num_ues, config.num_aps, eta),
    }
}

/// MRT normalization `kappa = 1 / sqrt(N (varsigma + gamma))`.
pub fn kappa(ls: &LargeScaleModel) -> Result<Mat<f64>> {
    let n = ls.antennas as f64;
    let mut out = Mat::filled(ls.num_ues, ls.num_aps, 0.0);
    for k in 0..ls.num_ues {
        for l in 0..ls.num_aps {
            let d = ls.varsigma[(k, l)] + ls.gamma[(k, l)];
            if d.is_nan() || d <= 0.0 {
                return Err(Error::DegenerateChannel { ue: k, ap: l });
            }
            out[(k, l)] = 1.0 / (n * d).sqrt();
        }
    }
    Ok(out)
}

/// Precoders `w_kl = kappa_kl g_hat_kl`, laid out like the channels.
pub fn mrt_precoders(state: &ChannelState, ls: &LargeScaleModel) -> Result<Vec<Complex64>> {
    let kap = kappa(ls)?;
    let n = ls.antennas;
    let mut w = state.g_hat.clone();
    for k in 0..ls.num_ues {
        for l in 0..ls.num_aps {
            let start = (k * ls.num_aps + l) * n;
            for x in &mut w[start..start + n] {
                *x *= kap[(k, l)];
            }
        }
    }
    Ok(w)
}

/// Per-pair amplitude `kappa_il sqrt(eta_il)`.
pub fn beam_weights(ls: &LargeScaleModel, pc: &PowerControl) -> Result<Mat<f64>> {
    let kap = kappa(ls)?;
    Ok(Mat::from_fn(ls.num_ues, ls.num_aps, |i, l| {
        kap[(i, l)] * pc.eta[(i, l)].sqrt()
    }))
}

/// Received RF power `I_k = sum_i |sum_l kappa_il sqrt(eta_il) g_kl^T conj(g_hat_il)|^2`.
pub fn received_rf_energy(
    state: &ChannelState,
    ls: &LargeScaleModel,
    pc: &PowerControl,
) -> Result<Vec<f64>> {
    let w = beam_weights(ls, pc)?;
    let mut out = vec![0.0; ls.num_ues];
    received_power_into(state, &w, &mut out);
    Ok(out)
}

pub(crate) fn received_power_into(state: &ChannelState, weights: &Mat<f64>, out: &mut [f64]) {
    let (nk, nl, n) = (state.num_ues, state.num_aps, state.antennas);
    for (k, slot) in out.iter_mut().enumerate().take(nk) {
        let mut total = 0.0;
        for i in 0..nk {
            let mut s = Complex64::new(0.0, 0.0);
            for l in 0..nl {
                let w = weights[(i, l)];
                if w == 0.0 {
                    continue;
                }
                let g = &state.g[(k * nl + l) * n..(k * nl + l + 1) * n];
                let gh = &state.g_hat[(i * nl + l) * n..(i * nl + l + 1) * n];
                let mut dot = Complex64::new(0.0, 0.0);
                for (a, b) in g.iter().zip(gh) {
                    dot += a * b.conj();
                }
                s += dot * w;
            }
            total += s.norm_sqr();
        }
        *slot = total;
    }
}
