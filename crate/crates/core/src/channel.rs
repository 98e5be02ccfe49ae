//! Pilot assignment, small-scale fading and MMSE estimation.
//!
//! Channels are stored flat as `[(ue * L + ap) * N + antenna]`.

use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::complex_normal;
use crate::topology::LargeScaleModel;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotPolicy {
    #[default]
    RoundRobin,
    Random,
}

impl FromStr for PilotPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "round_robin" => Ok(PilotPolicy::RoundRobin),
            "random" => Ok(PilotPolicy::Random),
            other => Err(Error::UnknownPolicy(other.to_string())),
        }
    }
}

/// Pilot of every UE (0-based) and the resulting sharing sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PilotRecord", into = "PilotRecord")]
pub struct PilotAssignment {
    pub tau_p: usize,
    pub pilot_index: Vec<usize>,
    /// For each UE, every UE (itself included) on the same pilot.
    pub sharing_sets: Vec<Vec<usize>>,
    members: Vec<Vec<usize>>,
}

#[derive(Clone, Serialize, Deserialize)]
struct PilotRecord {
    tau_p: usize,
    pilot_index: Vec<usize>,
}

impl TryFrom<PilotRecord> for PilotAssignment {
    type Error = Error;

    fn try_from(r: PilotRecord) -> Result<Self> {
        PilotAssignment::new(r.tau_p, r.pilot_index)
    }
}

impl From<PilotAssignment> for PilotRecord {
    fn from(p: PilotAssignment) -> Self {
        PilotRecord {
            tau_p: p.tau_p,
            pilot_index: p.pilot_index,
        }
    }
}

impl PilotAssignment {
    pub fn new(tau_p: usize, pilot_index: Vec<usize>) -> Result<Self> {
        if tau_p == 0 {
            return Err(Error::InvalidInput("tau_p must be at least 1".into()));
        }
        if let Some(p) = pilot_index.iter().find(|&&p| p >= tau_p) {
            return Err(Error::InvalidInput(format!(
                "pilot {p} out of range for tau_p = {tau_p}"
            )));
        }
        let mut members = vec![Vec::new(); tau_p];
        for (k, &p) in pilot_index.iter().enumerate() {
            members[p].push(k);
        }
        let sharing_sets = pilot_index.iter().map(|&p| members[p].clone()).collect();
        Ok(Self {
            tau_p,
            pilot_index,
            sharing_sets,
            members,
        })
    }

    /// UEs transmitting pilot `p`.
    pub fn sharing_set_of_pilot(&self, p: usize) -> &[usize] {
        &self.members[p]
    }
}

pub fn assign_pilots<R: Rng + ?Sized>(
    num_ues: usize,
    tau_p: usize,
    policy: PilotPolicy,
    rng: &mut R,
) -> Result<PilotAssignment> {
    if tau_p == 0 {
        return Err(Error::InvalidInput("tau_p must be at least 1".into()));
    }
    let index = match policy {
        PilotPolicy::RoundRobin => (0..num_ues).map(|k| k % tau_p).collect(),
        PilotPolicy::Random => (0..num_ues).map(|_| rng.random_range(0..tau_p)).collect(),
    };
    PilotAssignment::new(tau_p, index)
}

/// True channels of one coherence interval.
#[derive(Clone, Debug, PartialEq)]
pub struct TrueChannels {
    pub antennas: usize,
    pub num_aps: usize,
    /// Unit-variance NLoS parts.
    pub nlos: Vec<Complex64>,
    pub g: Vec<Complex64>,
}

impl TrueChannels {
    pub fn zeros(ls: &LargeScaleModel) -> Self {
        let len = ls.num_ues * ls.num_aps * ls.antennas;
        Self {
            antennas: ls.antennas,
            num_aps: ls.num_aps,
            nlos: vec![Complex64::new(0.0, 0.0); len],
            g: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    pub fn g(&self, k: usize, l: usize) -> &[Complex64] {
        let start = (k * self.num_aps + l) * self.antennas;
        &self.g[start..start + self.antennas]
    }
}

/// True channels, estimates and the pilot noise that produced them.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChannelState {
    pub num_ues: usize,
    pub num_aps: usize,
    pub antennas: usize,
    pub g: Vec<Complex64>,
    pub g_hat: Vec<Complex64>,
    /// Projected pilot noise per `(pilot, ap)`, laid out `[(p * L + l) * N + t]`.
    pub noise: Vec<Complex64>,
}

impl ChannelState {
    pub fn zeros(ls: &LargeScaleModel) -> Self {
        let n = ls.antennas;
        let zero = Complex64::new(0.0, 0.0);
        Self {
            num_ues: ls.num_ues,
            num_aps: ls.num_aps,
            antennas: n,
            g: vec![zero; ls.num_ues * ls.num_aps * n],
            g_hat: vec![zero; ls.num_ues * ls.num_aps * n],
            noise: vec![zero; ls.pilots.tau_p * ls.num_aps * n],
        }
    }

    fn range(&self, k: usize, l: usize) -> std::ops::Range<usize> {
        let start = (k * self.num_aps + l) * self.antennas;
        start..start + self.antennas
    }

    pub fn g(&self, k: usize, l: usize) -> &[Complex64] {
        &self.g[self.range(k, l)]
    }

    pub fn g_hat(&self, k: usize, l: usize) -> &[Complex64] {
        &self.g_hat[self.range(k, l)]
    }
}

/// Draws `g = sqrt(varsigma) h + sqrt(beta) g~` for every pair.
pub fn draw_channels<R: Rng + ?Sized>(ls: &LargeScaleModel, rng: &mut R) -> TrueChannels {
    let mut out = TrueChannels::zeros(ls);
    draw_channels_into(ls, rng, &mut out);
    out
}

pub fn draw_channels_into<R: Rng + ?Sized>(
    ls: &LargeScaleModel,
    rng: &mut R,
    out: &mut TrueChannels,
) {
    let n = ls.antennas;
    for k in 0..ls.num_ues {
        for l in 0..ls.num_aps {
            let sb = ls.beta[(k, l)].sqrt();
            let start = (k * ls.num_aps + l) * n;
            let los = ls.los(k, l);
            let nlos = &mut out.nlos[start..start + n];
            let g = &mut out.g[start..start + n];
            for ((x, y), a) in nlos.iter_mut().zip(g.iter_mut()).zip(los) {
                let z = complex_normal(rng);
                *x = z;
                *y = a + z * sb;
            }
        }
    }
}

/// MMSE estimates from one pilot phase.
///
/// Each AP sees, on pilot `p`, the projection
/// `sqrt(tau_p P_p) sum_{i on p} sqrt(beta_il) g~_il + n_pl`; every UE on that
/// pilot is estimated from the same projection.
pub fn estimate_channels<R: Rng + ?Sized>(
    truth: &TrueChannels,
    ls: &LargeScaleModel,
    rng: &mut R,
) -> ChannelState {
    let mut out = ChannelState::zeros(ls);
    estimate_channels_into(truth, ls, rng, &mut out);
    out
}

pub fn estimate_channels_into<R: Rng + ?Sized>(
    truth: &TrueChannels,
    ls: &LargeScaleModel,
    rng: &mut R,
    out: &mut ChannelState,
) {
    let n = ls.antennas;
    let nl = ls.num_aps;
    let sigma = ls.sigma2.sqrt();
    for z in out.noise.iter_mut() {
        *z = complex_normal(rng) * sigma;
    }
    out.g.copy_from_slice(&truth.g);
    let sqrt_e = ls.tau_p_pp.sqrt();
    let mut bracket = vec![Complex64::new(0.0, 0.0); n];
    for p in 0..ls.pilots.tau_p {
        let members = ls.pilots.sharing_set_of_pilot(p);
        if members.is_empty() {
            continue;
        }
        for l in 0..nl {
            let noise = &out.noise[(p * nl + l) * n..(p * nl + l + 1) * n];
            bracket.copy_from_slice(noise);
            for &i in members {
                let w = sqrt_e * ls.beta[(i, l)].sqrt();
                let start = (i * nl + l) * n;
                for (b, z) in bracket.iter_mut().zip(&truth.nlos[start..start + n]) {
                    *b += z * w;
                }
            }
            for &k in members {
                let ckl = ls.c[(k, l)];
                let start = (k * nl + l) * n;
                let los = ls.los(k, l);
                for t in 0..n {
                    out.g_hat[start + t] = los[t] + bracket[t] * ckl;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mat::Mat;
    use crate::rng::{substream, Domain};

    #[test]
    fn pilot_policies() {
        let mut rng = substream(0, Domain::Pilots, 0, 0);
        let p = assign_pilots(4, 4, PilotPolicy::RoundRobin, &mut rng).unwrap();
        assert!(p
            .sharing_sets
            .iter()
            .enumerate()
            .all(|(k, s)| s == &vec![k]));
        let p = assign_pilots(20, 5, PilotPolicy::RoundRobin, &mut rng).unwrap();
        assert!(p.sharing_sets.iter().all(|s| s.len() == 4));
        let p = assign_pilots(2, 1, PilotPolicy::RoundRobin, &mut rng).unwrap();
        assert_eq!(p.sharing_sets, vec![vec![0, 1], vec![0, 1]]);
        assert!("bogus".parse::<PilotPolicy>().is_err());
        assert_eq!(
            "random".parse::<PilotPolicy>().unwrap(),
            PilotPolicy::Random
        );
        assert!(assign_pilots(3, 0, PilotPolicy::RoundRobin, &mut rng).is_err());
    }

    #[test]
    fn random_policy_is_seeded() {
        let a = assign_pilots(
            30,
            4,
            PilotPolicy::Random,
            &mut substream(9, Domain::Pilots, 0, 0),
        )
        .unwrap();
        let b = assign_pilots(
            30,
            4,
            PilotPolicy::Random,
            &mut substream(9, Domain::Pilots, 0, 0),
        )
        .unwrap();
        assert_eq!(a, b);
        assert!(a.pilot_index.iter().all(|&p| p < 4));
    }

    fn model(
        zeta: &[f64],
        kf: &[f64],
        k: usize,
        l: usize,
        n: usize,
        tau_p: usize,
        s2: f64,
    ) -> LargeScaleModel {
        let pilots = assign_pilots(
            k,
            tau_p,
            PilotPolicy::RoundRobin,
            &mut substream(0, Domain::Pilots, 0, 0),
        )
        .unwrap();
        LargeScaleModel::from_parts(
            Mat::from_vec(k, l, zeta.to_vec()).unwrap(),
            Mat::from_vec(k, l, kf.to_vec()).unwrap(),
            Mat::from_fn(k, l, |a, b| 0.4 * a as f64 - 0.3 * b as f64),
            n,
            pilots,
            2.0,
            s2,
        )
        .unwrap()
    }

    #[test]
    fn zero_beta_gives_deterministic_los() {
        // infinite K-factor is approximated by beta = 0 via zeta split
        let pilots = PilotAssignment::new(1, vec![0]).unwrap();
        let ls = LargeScaleModel::from_parts(
            Mat::from_vec(1, 1, vec![0.0]).unwrap(),
            Mat::from_vec(1, 1, vec![1.0]).unwrap(),
            Mat::from_vec(1, 1, vec![0.2]).unwrap(),
            3,
            pilots,
            1.0,
            0.5,
        )
        .unwrap();
        let t = draw_channels(&ls, &mut substream(0, Domain::Oracle, 0, 0));
        assert_eq!(t.g(0, 0), ls.los(0, 0));
    }

    #[test]
    fn shared_pilots_give_proportional_estimates() {
        let ls = model(
            &[0.5, 0.8, 1.2, 0.3],
            &[1.0, 2.0, 0.5, 0.0],
            2,
            2,
            3,
            1,
            0.2,
        );
        let mut rng = substream(2, Domain::Oracle, 0, 0);
        let t = draw_channels(&ls, &mut rng);
        let s = estimate_channels(&t, &ls, &mut rng);
        for l in 0..2 {
            let a = ls.alpha(1, 0, l);
            for ((hi, bi), (hk, bk)) in s
                .g_hat(1, l)
                .iter()
                .zip(ls.los(1, l))
                .zip(s.g_hat(0, l).iter().zip(ls.los(0, l)))
            {
                assert!(((hi - bi) - (hk - bk) * a).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn noiseless_single_user_recovers_channel() {
        let ls = model(&[0.7], &[1.5], 1, 1, 4, 1, 1e-18);
        let mut rng = substream(3, Domain::Oracle, 0, 0);
        let t = draw_channels(&ls, &mut rng);
        let s = estimate_channels(&t, &ls, &mut rng);
        for (a, b) in s.g(0, 0).iter().zip(s.g_hat(0, 0)) {
            assert!((a - b).norm() < 1e-8);
        }
    }

    struct Acc {
        n: f64,
        s: f64,
        s2: f64,
    }

    impl Acc {
        fn new() -> Self {
            Acc {
                n: 0.0,
                s: 0.0,
                s2: 0.0,
            }
        }
        fn push(&mut self, x: f64) {
            self.n += 1.0;
            self.s += x;
            self.s2 += x * x;
        }
        fn mean(&self) -> f64 {
            self.s / self.n
        }
        fn se(&self) -> f64 {
            ((self.s2 / self.n - self.mean().powi(2)) / self.n).sqrt()
        }
        fn check(&self, target: f64, what: &str) {
            let d = (self.mean() - target).abs();
            assert!(
                d <= 3.0 * self.se() + 1e-15,
                "{what}: {} vs {target} (se {})",
                self.mean(),
                self.se()
            );
        }
    }

    #[test]
    fn sampling_statistics_match_model() {
        let ls = model(
            &[0.5, 0.8, 1.2, 0.3, 0.9, 0.4],
            &[1.0, 2.0, 0.5, 0.0, 3.0, 0.2],
            3,
            2,
            2,
            2,
            0.3,
        );
        let (k, l, n) = (0, 1, ls.antennas);
        let mut rng = substream(4, Domain::Oracle, 0, 0);
        let mut mean_re = Acc::new();
        let mut elem_var = Acc::new();
        let mut est_var = Acc::new();
        let mut err_var = Acc::new();
        let mut corr = Acc::new();
        let mut norm2 = Acc::new();
        let mut fourth = Acc::new();
        let mut w_norm = Acc::new();
        let kappa = 1.0 / (n as f64 * (ls.varsigma[(k, l)] + ls.gamma[(k, l)])).sqrt();
        let mut t = TrueChannels::zeros(&ls);
        let mut s = ChannelState::zeros(&ls);
        for _ in 0..100_000 {
            draw_channels_into(&ls, &mut rng, &mut t);
            estimate_channels_into(&t, &ls, &mut rng, &mut s);
            let los = ls.los(k, l);
            let g = s.g(k, l);
            let gh = s.g_hat(k, l);
            mean_re.push((g[0] - los[0]).re);
            elem_var.push((g[0] - los[0]).norm_sqr());
            let e0 = gh[0] - los[0];
            est_var.push(e0.norm_sqr());
            let eps = g[0] - gh[0];
            err_var.push(eps.norm_sqr());
            corr.push((e0 * eps.conj()).re);
            let nn: f64 = gh.iter().map(|x| x.norm_sqr()).sum();
            norm2.push(nn);
            let d2: f64 = gh.iter().zip(los).map(|(a, b)| (a - b).norm_sqr()).sum();
            fourth.push(d2 * d2);
            w_norm.push(kappa * kappa * nn);
        }
        let (b, g, sv) = (ls.beta[(k, l)], ls.gamma[(k, l)], ls.varsigma[(k, l)]);
        let nf = n as f64;
        mean_re.check(0.0, "mean of nlos part");
        elem_var.check(b, "element variance");
        est_var.check(g, "estimate variance");
        err_var.check(b - g, "error variance");
        corr.check(0.0, "estimate/error correlation");
        norm2.check(nf * (sv + g), "estimate energy");
        fourth.check(nf * (nf + 1.0) * g * g, "fourth moment");
        w_norm.check(1.0, "precoder norm");
    }
}
