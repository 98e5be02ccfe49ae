//! Placement and large-scale propagation.
//!
//! Path loss follows a three-slope model with the Hata-style constant
//!
//! ```text
//! L = 46.3 + 33.9 log10(f) - 13.82 log10(h_AP) - (1.1 log10(f) - 0.7) h_UE + (1.56 log10(f) - 0.8)
//! ```
//!
//! where `f` is in MHz and distances inside the logarithms are in kilometres.
//! [`path_loss_db`] returns the gain in dB (a negative number), so the linear
//! large-scale coefficient is `zeta = 10^((PL + shadowing) / 10)`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::channel::PilotAssignment;
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::mat::Mat;

/// Rician K-factor as a function of the AP-UE distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum RicianModel {
    /// `K = 10^(exponent - slope * d)` with `d` in meters.
    Distance { exponent: f64, slope: f64 },
    /// Same `K` for every pair.
    Constant { k: f64 },
}

impl Default for RicianModel {
    fn default() -> Self {
        RicianModel::Distance {
            exponent: 1.3,
            slope: 0.003,
        }
    }
}

impl RicianModel {
    pub fn k_factor(&self, d: f64) -> f64 {
        match *self {
            RicianModel::Distance { exponent, slope } => 10f64.powf(exponent - slope * d),
            RicianModel::Constant { k } => k,
        }
    }

    pub(crate) fn violations(&self) -> Vec<String> {
        match *self {
            RicianModel::Distance { exponent, slope }
                if !(exponent.is_finite() && slope.is_finite()) =>
            {
                vec!["rician exponent and slope must be finite".into()]
            }
            RicianModel::Constant { k } if !(k >= 0.0 && k.is_finite()) => {
                vec![format!(
                    "constant rician factor must be non-negative, got {k}"
                )]
            }
            _ => Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApLayout {
    Grid,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub ap_layout: ApLayout,
    pub ap_positions: Vec<[f64; 2]>,
    pub ue_positions: Vec<[f64; 2]>,
    /// K x L three-dimensional distances in meters.
    pub distances: Mat<f64>,
}

/// Places the users uniformly in the square, then the APs on a grid when
/// `num_aps` is a perfect square and uniformly otherwise.
///
/// Users are drawn first, so the same stream gives the same user drop for any
/// AP count.
pub fn generate_topology<R: Rng + ?Sized>(config: &SystemConfig, rng: &mut R) -> Topology {
    let side = config.area_side;
    let ue_positions: Vec<[f64; 2]> = (0..config.num_ues)
        .map(|_| [rng.random::<f64>() * side, rng.random::<f64>() * side])
        .collect();
    let root = (config.num_aps as f64).sqrt().round() as usize;
    let (ap_layout, ap_positions) = if root * root == config.num_aps {
        let step = side / root as f64;
        let pos: Vec<[f64; 2]> = (0..root)
            .flat_map(|x| {
                (0..root).map(move |y| [(x as f64 + 0.5) * step, (y as f64 + 0.5) * step])
            })
            .collect();
        (ApLayout::Grid, pos)
    } else {
        let pos = (0..config.num_aps)
            .map(|_| [rng.random::<f64>() * side, rng.random::<f64>() * side])
            .collect();
        (ApLayout::Random, pos)
    };
    let dh = config.ap_height - config.ue_height;
    let distances = Mat::from_fn(config.num_ues, config.num_aps, |k, l| {
        let [ux, uy] = ue_positions[k];
        let [ax, ay] = ap_positions[l];
        ((ux - ax).powi(2) + (uy - ay).powi(2) + dh * dh).sqrt()
    });
    Topology {
        ap_layout,
        ap_positions,
        ue_positions,
        distances,
    }
}

/// The distance-independent constant of the three-slope model, in dB.
pub fn path_loss_constant(config: &SystemConfig) -> f64 {
    let lf = config.carrier_mhz.log10();
    46.3 + 33.9 * lf - 13.82 * config.ap_height.log10() - (1.1 * lf - 0.7) * config.ue_height
        + (1.56 * lf - 0.8)
}

/// Three-slope path gain in dB for a distance in meters.
pub fn path_loss_db(d: f64, config: &SystemConfig) -> Result<f64> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "distance must be positive, got {d}"
        )));
    }
    let l = path_loss_constant(config);
    let km = |m: f64| (m / 1000.0).log10();
    Ok(if d > config.d1 {
        -l - 35.0 * km(d)
    } else if d > config.d0 {
        -l - 15.0 * km(config.d1) - 20.0 * km(d)
    } else {
        -l - 15.0 * km(config.d1) - 20.0 * km(config.d0)
    })
}

/// Uniform linear array response `exp(j pi t sin(phi))`, `t = 0..n`.
pub fn steering_vector(phi: f64, n: usize) -> Vec<Complex64> {
    let s = phi.sin();
    (0..n)
        .map(|t| Complex64::from_polar(1.0, std::f64::consts::PI * t as f64 * s))
        .collect()
}

/// Large-scale statistics of every UE-AP pair.
///
/// All matrices are K x L, indexed `(ue, ap)`. `alpha` is stored flat as
/// `alpha[(i * K + k) * L + l]`; use [`LargeScaleModel::alpha`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LargeScaleRecord")]
pub struct LargeScaleModel {
    pub num_ues: usize,
    pub num_aps: usize,
    pub antennas: usize,
    pub tau_p_pp: f64,
    pub sigma2: f64,
    pub pilots: PilotAssignment,
    pub zeta: Mat<f64>,
    pub k_factor: Mat<f64>,
    pub beta: Mat<f64>,
    pub varsigma: Mat<f64>,
    pub phi: Mat<f64>,
    pub gamma: Mat<f64>,
    pub upsilon: Mat<f64>,
    pub c: Mat<f64>,
    alpha: Vec<f64>,
    #[serde(skip)]
    los: Vec<Complex64>,
}

#[derive(Deserialize)]
struct LargeScaleRecord {
    num_ues: usize,
    num_aps: usize,
    antennas: usize,
    tau_p_pp: f64,
    sigma2: f64,
    pilots: PilotAssignment,
    zeta: Mat<f64>,
    k_factor: Mat<f64>,
    beta: Mat<f64>,
    varsigma: Mat<f64>,
    phi: Mat<f64>,
    gamma: Mat<f64>,
    upsilon: Mat<f64>,
    c: Mat<f64>,
    alpha: Vec<f64>,
}

impl TryFrom<LargeScaleRecord> for LargeScaleModel {
    type Error = Error;

    fn try_from(r: LargeScaleRecord) -> Result<Self> {
        let (k, l) = (r.num_ues, r.num_aps);
        for (name, m) in [
            ("zeta", &r.zeta),
            ("k_factor", &r.k_factor),
            ("beta", &r.beta),
            ("varsigma", &r.varsigma),
            ("phi", &r.phi),
            ("gamma", &r.gamma),
            ("upsilon", &r.upsilon),
            ("c", &r.c),
        ] {
            if m.rows() != k || m.cols() != l {
                return Err(Error::Shape(format!("{name} must be {k}x{l}")));
            }
        }
        if r.alpha.len() != k * k * l || r.pilots.pilot_index.len() != k {
            return Err(Error::Shape(
                "alpha or pilot table does not match the ue count".into(),
            ));
        }
        let mut m = LargeScaleModel {
            num_ues: k,
            num_aps: l,
            antennas: r.antennas,
            tau_p_pp: r.tau_p_pp,
            sigma2: r.sigma2,
            pilots: r.pilots,
            zeta: r.zeta,
            k_factor: r.k_factor,
            beta: r.beta,
            varsigma: r.varsigma,
            phi: r.phi,
            gamma: r.gamma,
            upsilon: r.upsilon,
            c: r.c,
            alpha: r.alpha,
            los: Vec::new(),
        };
        m.los = m.build_los();
        Ok(m)
    }
}

impl LargeScaleModel {
    /// Builds the model from the primary quantities and derives the MMSE
    /// coefficients for the given pilot assignment.
    ///
    /// `tau_p_pp` is the pilot energy `tau_p * P_p`.
    pub fn from_parts(
        zeta: Mat<f64>,
        k_factor: Mat<f64>,
        phi: Mat<f64>,
        antennas: usize,
        pilots: PilotAssignment,
        tau_p_pp: f64,
        sigma2: f64,
    ) -> Result<Self> {
        let (nk, nl) = (zeta.rows(), zeta.cols());
        if k_factor.rows() != nk || k_factor.cols() != nl || phi.rows() != nk || phi.cols() != nl {
            return Err(Error::Shape(
                "zeta, k_factor and phi must share one K x L shape".into(),
            ));
        }
        if pilots.pilot_index.len() != nk {
            return Err(Error::Shape(format!(
                "pilot assignment covers {} ues, model has {nk}",
                pilots.pilot_index.len()
            )));
        }
        if antennas == 0 {
            return Err(Error::InvalidInput("antennas must be at least 1".into()));
        }
        if !(tau_p_pp >= 0.0 && sigma2 >= 0.0) {
            return Err(Error::InvalidInput(
                "pilot energy and noise must be non-negative".into(),
            ));
        }
        if zeta
            .as_slice()
            .iter()
            .chain(k_factor.as_slice())
            .any(|v| !(*v >= 0.0 && v.is_finite()))
        {
            return Err(Error::InvalidInput(
                "zeta and k_factor must be finite and non-negative".into(),
            ));
        }
        let beta = Mat::from_fn(nk, nl, |k, l| zeta[(k, l)] / (k_factor[(k, l)] + 1.0));
        let varsigma = Mat::from_fn(nk, nl, |k, l| beta[(k, l)] * k_factor[(k, l)]);
        let sqrt_e = tau_p_pp.sqrt();
        let mut c = Mat::filled(nk, nl, 0.0);
        let mut gamma = Mat::filled(nk, nl, 0.0);
        for k in 0..nk {
            for l in 0..nl {
                let s = pilot_received_power(
                    &beta,
                    &pilots,
                    pilots.pilot_index[k],
                    l,
                    tau_p_pp,
                    sigma2,
                );
                let b = beta[(k, l)];
                let ckl = if s > 0.0 { sqrt_e * b / s } else { 0.0 };
                c[(k, l)] = ckl;
                gamma[(k, l)] = (sqrt_e * b * ckl).min(b);
            }
        }
        let upsilon = Mat::from_fn(nk, nl, |k, l| (beta[(k, l)] - gamma[(k, l)]).max(0.0));
        let mut alpha = vec![0.0; nk * nk * nl];
        for i in 0..nk {
            for k in 0..nk {
                if pilots.pilot_index[i] != pilots.pilot_index[k] {
                    continue;
                }
                for l in 0..nl {
                    alpha[(i * nk + k) * nl + l] = if i == k {
                        1.0
                    } else if beta[(k, l)] > 0.0 {
                        beta[(i, l)] / beta[(k, l)]
                    } else {
                        0.0
                    };
                }
            }
        }
        let mut m = LargeScaleModel {
            num_ues: nk,
            num_aps: nl,
            antennas,
            tau_p_pp,
            sigma2,
            pilots,
            zeta,
            k_factor,
            beta,
            varsigma,
            phi,
            gamma,
            upsilon,
            c,
            alpha,
            los: Vec::new(),
        };
        m.los = m.build_los();
        Ok(m)
    }

    fn build_los(&self) -> Vec<Complex64> {
        let n = self.antennas;
        let mut out = Vec::with_capacity(self.num_ues * self.num_aps * n);
        for k in 0..self.num_ues {
            for l in 0..self.num_aps {
                let amp = self.varsigma[(k, l)].sqrt();
                out.extend(
                    steering_vector(self.phi[(k, l)], n)
                        .into_iter()
                        .map(|h| h * amp),
                );
            }
        }
        out
    }

    /// Pilot contamination ratio of UE `i` relative to UE `k` at AP `l`.
    pub fn alpha(&self, i: usize, k: usize, l: usize) -> f64 {
        self.alpha[(i * self.num_ues + k) * self.num_aps + l]
    }

    pub fn shares_pilot(&self, i: usize, k: usize) -> bool {
        self.pilots.pilot_index[i] == self.pilots.pilot_index[k]
    }

    /// LoS component `sqrt(varsigma) h` of pair `(k, l)`.
    pub fn los(&self, k: usize, l: usize) -> &[Complex64] {
        let n = self.antennas;
        let start = (k * self.num_aps + l) * n;
        &self.los[start..start + n]
    }

    /// Power of the projected pilot signal on pilot `p` at AP `l`:
    /// `tau_p P_p sum_{j on p} beta_jl + sigma2`.
    pub fn pilot_power(&self, p: usize, l: usize) -> f64 {
        pilot_received_power(&self.beta, &self.pilots, p, l, self.tau_p_pp, self.sigma2)
    }

    /// Normalized LoS correlation `h_kl^T conj(h_il) / N`.
    pub fn rho(&self, k: usize, i: usize, l: usize) -> Complex64 {
        let n = self.antennas as f64;
        let (sk, si) = (self.phi[(k, l)].sin(), self.phi[(i, l)].sin());
        let step = std::f64::consts::PI * (sk - si);
        (0..self.antennas)
            .map(|t| Complex64::from_polar(1.0, step * t as f64))
            .sum::<Complex64>()
            / n
    }
}

fn pilot_received_power(
    beta: &Mat<f64>,
    pilots: &PilotAssignment,
    p: usize,
    l: usize,
    tau_p_pp: f64,
    sigma2: f64,
) -> f64 {
    let total: f64 = pilots
        .sharing_set_of_pilot(p)
        .iter()
        .map(|&j| beta[(j, l)])
        .sum();
    tau_p_pp * total + sigma2
}

/// Draws shadowing, K-factors and LoS angles for a topology and derives the
/// full large-scale model. Shadowing is drawn row-major over (ue, ap).
pub fn large_scale<R: Rng + ?Sized>(
    topology: &Topology,
    config: &SystemConfig,
    pilots: PilotAssignment,
    rng: &mut R,
) -> Result<LargeScaleModel> {
    let (nk, nl) = (topology.distances.rows(), topology.distances.cols());
    let shadow = Normal::new(0.0, config.shadow_std_db)
        .map_err(|e| Error::InvalidInput(format!("shadowing: {e}")))?;
    let mut zeta = Mat::filled(nk, nl, 0.0);
    for k in 0..nk {
        for l in 0..nl {
            let pl = path_loss_db(topology.distances[(k, l)], config)?;
            let psi = shadow.sample(rng);
            zeta[(k, l)] = 10f64.powf((pl + psi) / 10.0);
        }
    }
    let k_factor = topology.distances.map(|&d| config.rician.k_factor(d));
    let phi = Mat::from_fn(nk, nl, |k, l| {
        let [ux, uy] = topology.ue_positions[k];
        let [ax, ay] = topology.ap_positions[l];
        (uy - ay).atan2(ux - ax)
    });
    LargeScaleModel::from_parts(
        zeta,
        k_factor,
        phi,
        config.antennas,
        pilots,
        config.tau_p as f64 * config.pilot_power,
        config.sigma2(),
    )
}
