//! Gamma approximation of the harvested energy and the battery-state chain.
//!
//! States are numbered `1..=M` in outputs and stored 0-based internally;
//! state `j` holds energies in `((j - 1) E_f / M, j E_f / M]`, with the empty
//! battery in state 1.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::config::SystemConfig;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaFit {
    pub shape: f64,
    pub scale: f64,
}

/// Moment-matched Gamma law: `shape = mean^2 / var`, `scale = var / mean`.
pub fn gamma_fit(mean: f64, var: f64) -> Result<GammaFit> {
    if !(mean > 0.0 && var > 0.0 && mean.is_finite() && var.is_finite()) {
        return Err(Error::DegenerateFit { mean, var });
    }
    Ok(GammaFit {
        shape: mean * mean / var,
        scale: var / mean,
    })
}

impl GammaFit {
    pub fn mean(&self) -> f64 {
        self.shape * self.scale
    }

    pub fn variance(&self) -> f64 {
        self.shape * self.scale * self.scale
    }
}

const EPS: f64 = 1e-16;
const MAX_ITER: usize = 100_000;

/// `ln Gamma(a) - ((a - 1/2) ln a - a + ln(2 pi) / 2)`.
fn stirling_remainder(a: f64) -> f64 {
    if a >= 10.0 {
        let r = 1.0 / a;
        let r2 = r * r;
        r * (1.0 / 12.0
            - r2 * (1.0 / 360.0
                - r2 * (1.0 / 1260.0
                    - r2 * (1.0 / 1680.0
                        - r2 * (1.0 / 1188.0 - r2 * (691.0 / 360360.0 - r2 / 156.0))))))
    } else {
        ln_gamma(a) - ((a - 0.5) * a.ln() - a + 0.5 * (2.0 * std::f64::consts::PI).ln())
    }
}

/// `x^a e^{-x} / Gamma(a)`, evaluated so large `a` near `x` keeps accuracy.
fn prefactor(a: f64, x: f64) -> f64 {
    let t = (x - a) / a;
    // a ln x - x - (a ln a - a) = -a (t - ln(1 + t))
    let core = if t.abs() < 0.5 {
        -a * (t - t.ln_1p())
    } else {
        a * (x / a).ln() + a - x
    };
    (core + 0.5 * a.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() - stirling_remainder(a)).exp()
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn regularized_lower_gamma(a: f64, x: f64) -> f64 {
    assert!(a > 0.0, "shape must be positive");
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    if x < a + 1.0 {
        // series: sum_n x^n / (a (a+1) ... (a+n))
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut den = a;
        for _ in 0..MAX_ITER {
            den += 1.0;
            term *= x / den;
            sum += term;
            if term < sum * EPS {
                break;
            }
        }
        (prefactor(a, x) * sum / a).min(1.0)
    } else {
        // modified Lentz for the continued fraction of Q(a, x)
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < EPS {
                break;
            }
        }
        (1.0 - prefactor(a, x) * h).max(0.0)
    }
}

/// Gamma CDF of the harvested energy.
pub fn harvest_cdf(energy: f64, fit: &GammaFit) -> f64 {
    regularized_lower_gamma(fit.shape, energy / fit.scale)
}

/// Energy spent per interval on pilots and uplink data, in joules.
pub fn consumption_energy(config: &SystemConfig) -> f64 {
    config.symbol_duration
        * (config.tau_p as f64 * config.pilot_power + config.tau_u as f64 * config.uplink_power)
}

/// `Pr(E <= E_C)`, the probability that an interval drains the battery.
pub fn negative_transition_prob(fit: &GammaFit, consumed: f64) -> f64 {
    if consumed <= 0.0 {
        0.0
    } else {
        harvest_cdf(consumed, fit)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionTriple {
    pub down: f64,
    pub stay: f64,
    pub up: f64,
}

impl TransitionTriple {
    pub fn identity() -> Self {
        Self {
            down: 0.0,
            stay: 1.0,
            up: 0.0,
        }
    }

    pub fn total(&self) -> f64 {
        self.stay + (self.down + self.up)
    }
}

/// Single-step probabilities of moving one state down, staying, or moving
/// one state up. The departure mass is `q = min(1, M |E[dE]| / E_f)`; it
/// splits by the Gamma probability of a negative differential.
pub fn transition_triple(
    fit: &GammaFit,
    consumed: f64,
    mean_delta: f64,
    states: usize,
    capacity: f64,
) -> TransitionTriple {
    let ratio = states as f64 * mean_delta.abs() / capacity;
    if ratio > 0.1 {
        log::warn!("M |E[dE]| / E_f = {ratio:.3} is not small; adjacent-state transitions are a coarse model");
    }
    let q = ratio.min(1.0);
    let f = negative_transition_prob(fit, consumed);
    let down = q * f;
    let up = q * (1.0 - f);
    TransitionTriple {
        down,
        stay: 1.0 - (down + up),
        up,
    }
}

/// Battery chain of one UE.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyChain {
    pub states: usize,
    pub capacity: f64,
    pub consumed: f64,
    pub mean_delta: f64,
    pub triple: TransitionTriple,
}

impl EnergyChain {
    pub fn new(
        fit: &GammaFit,
        consumed: f64,
        mean_delta: f64,
        states: usize,
        capacity: f64,
    ) -> Result<Self> {
        if states < 2 || capacity.is_nan() || capacity <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "chain needs at least 2 states and positive capacity, got {states}, {capacity}"
            )));
        }
        Ok(Self {
            states,
            capacity,
            consumed,
            mean_delta,
            triple: transition_triple(fit, consumed, mean_delta, states, capacity),
        })
    }

    pub fn from_triple(triple: TransitionTriple, states: usize, capacity: f64) -> Self {
        Self {
            states,
            capacity,
            consumed: 0.0,
            mean_delta: 0.0,
            triple,
        }
    }

    /// `(down, stay, up)` out of 0-based state `s`; the boundaries reflect.
    pub fn row(&self, s: usize) -> (f64, f64, f64) {
        let TransitionTriple { down, stay, up } = self.triple;
        let last = self.states - 1;
        match s {
            0 if last == 0 => (0.0, 1.0, 0.0),
            0 => (0.0, stay + down, up),
            s if s == last => (down, stay + up, 0.0),
            _ => (down, stay, up),
        }
    }

    /// Dense transition matrix, for small chains.
    pub fn transition_matrix(&self) -> Vec<Vec<f64>> {
        let m = self.states;
        (0..m)
            .map(|s| {
                let mut row = vec![0.0; m];
                let (d, st, u) = self.row(s);
                row[s] += st;
                if s > 0 {
                    row[s - 1] += d;
                }
                if s + 1 < m {
                    row[s + 1] += u;
                }
                row
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateDistribution {
    pub probs: Vec<f64>,
    pub step: usize,
}

impl StateDistribution {
    pub fn uniform(states: usize) -> Self {
        Self {
            probs: vec![1.0 / states as f64; states],
            step: 0,
        }
    }

    /// All mass on 1-based `state`.
    pub fn point_mass(states: usize, state: usize) -> Result<Self> {
        if state == 0 || state > states {
            return Err(Error::InvalidInput(format!(
                "state {state} outside 1..={states}"
            )));
        }
        let mut probs = vec![0.0; states];
        probs[state - 1] = 1.0;
        Ok(Self { probs, step: 0 })
    }

    /// Probability of 1-based `state`.
    pub fn prob(&self, state: usize) -> f64 {
        self.probs[state - 1]
    }
}

/// Advances `start` by `n` steps of the chain.
pub fn n_step_distribution(
    chain: &EnergyChain,
    start: &StateDistribution,
    n: usize,
) -> Result<StateDistribution> {
    let m = chain.states;
    if start.probs.len() != m {
        return Err(Error::Shape(format!(
            "distribution has {} states, chain {m}",
            start.probs.len()
        )));
    }
    if start.probs.iter().any(|&p| p.is_nan() || p < 0.0)
        || (start.probs.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(Error::InvalidInput(
            "initial distribution is not a probability vector".into(),
        ));
    }
    let rows: Vec<(f64, f64, f64)> = (0..m).map(|s| chain.row(s)).collect();
    let mut cur = start.probs.clone();
    let mut next = vec![0.0; m];
    for _ in 0..n {
        for j in 0..m {
            let mut v = cur[j] * rows[j].1;
            if j > 0 {
                v += cur[j - 1] * rows[j - 1].2;
            }
            if j + 1 < m {
                v += cur[j + 1] * rows[j + 1].0;
            }
            next[j] = v;
        }
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(StateDistribution {
        probs: cur,
        step: start.step + n,
    })
}

/// 1-based state holding energy `e`.
pub fn energy_state(e: f64, capacity: f64, states: usize) -> usize {
    let x = e * states as f64 / capacity;
    let r = x.round();
    let s = if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r
    } else {
        x.ceil()
    };
    (s as usize).clamp(1, states)
}

/// Battery trajectory driven by differentials resampled from `deltas`.
///
/// Returns the 1-based state after each of the `n` steps.
pub fn simulate_energy_trajectory<R: Rng + ?Sized>(
    deltas: &[f64],
    e0: f64,
    capacity: f64,
    states: usize,
    n: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::InvalidInput(
            "trajectory needs at least one step".into(),
        ));
    }
    if deltas.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut e = e0.clamp(0.0, capacity);
    Ok((0..n)
        .map(|_| {
            let d = deltas[rng.random_range(0..deltas.len())];
            e = (e + d).clamp(0.0, capacity);
            energy_state(e, capacity, states)
        })
        .collect())
}

/// Trajectory of the discrete chain from 1-based `start`; returns the state
/// after each step.
pub fn simulate_chain<R: Rng + ?Sized>(
    chain: &EnergyChain,
    start: usize,
    n: usize,
    rng: &mut R,
) -> Vec<usize> {
    let mut s = start - 1;
    (0..n)
        .map(|_| {
            let (d, st, _) = chain.row(s);
            let u: f64 = rng.random();
            if u < d {
                s -= 1;
            } else if u >= d + st {
                s += 1;
            }
            s + 1
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Domain};
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn fit_algebra() {
        let f = gamma_fit(2.0, 1.0).unwrap();
        assert_eq!((f.shape, f.scale), (4.0, 0.5));
        assert!(gamma_fit(0.0, 1.0).is_err());
        assert!(gamma_fit(1.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn fit_roundtrip(mean in 1e-12f64..1e3, cv in 1e-3f64..10.0) {
            let var = (mean * cv).powi(2);
            let f = gamma_fit(mean, var).unwrap();
            prop_assert!((f.mean() - mean).abs() <= 1e-12 * mean);
            prop_assert!((f.variance() - var).abs() <= 1e-12 * var);
        }

        #[test]
        fn triple_is_a_distribution(shape in 0.1f64..1e3, de in -1e-3f64..1e-3, ec in 0.0f64..2.0) {
            let fit = GammaFit { shape, scale: 1.0 / shape };
            let t = transition_triple(&fit, ec, de, 2000, 0.3);
            prop_assert_eq!(t.total(), 1.0);
            for p in [t.down, t.stay, t.up] {
                prop_assert!((0.0..=1.0).contains(&p));
            }
        }

        #[test]
        fn cdf_is_monotone(shape in 0.05f64..500.0, x in 0.0f64..1e3, dx in 0.0f64..10.0) {
            let lo = regularized_lower_gamma(shape, x);
            let hi = regularized_lower_gamma(shape, x + dx);
            prop_assert!(hi >= lo - 1e-15);
            prop_assert!((0.0..=1.0).contains(&lo));
        }
    }

    #[test]
    fn cdf_anchor_points() {
        let fit = GammaFit {
            shape: 1.0,
            scale: 1.0,
        };
        assert_eq!(harvest_cdf(0.0, &fit), 0.0);
        assert_eq!(harvest_cdf(f64::INFINITY, &fit), 1.0);
        assert!((harvest_cdf(1.0, &fit) - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert!((harvest_cdf(1e4, &fit) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn incomplete_gamma_against_reference() {
        let mut rng = substream(17, Domain::Oracle, 0, 0);
        let mut worst: f64 = 0.0;
        for _ in 0..10_000 {
            let a = 10f64.powf(rng.random_range(-1.3..3.0));
            // concentrate points where the CDF varies
            let x =
                (a + a.sqrt() * rng.random_range(-6.0..6.0)).max(0.0) + rng.random_range(0.0..1.0);
            let ours = regularized_lower_gamma(a, x);
            let reference = statrs::function::gamma::gamma_lr(a, x);
            worst = worst.max((ours - reference).abs());
        }
        assert!(worst < 1e-10, "worst absolute error {worst:e}");
    }

    #[test]
    fn incomplete_gamma_integer_shape_closed_form() {
        // P(n, x) = 1 - e^{-x} sum_{j<n} x^j / j!
        for n in 1..12 {
            for &x in &[0.1, 1.0, 3.7, 10.0, 25.0] {
                let mut term = 1.0;
                let mut sum = 0.0;
                for j in 0..n {
                    if j > 0 {
                        term *= x / j as f64;
                    }
                    sum += term;
                }
                let exact = 1.0 - (-x).exp() * sum;
                assert!(
                    (regularized_lower_gamma(n as f64, x) - exact).abs() < 1e-13,
                    "n={n} x={x}"
                );
            }
        }
    }

    #[test]
    fn consumption() {
        let c = SystemConfig {
            pilot_power: 0.01,
            uplink_power: 0.0,
            tau_p: 20,
            symbol_duration: 1e-3,
            ..Default::default()
        };
        assert!((consumption_energy(&c) - 2e-4).abs() < 1e-18);
        let z = SystemConfig {
            pilot_power: 0.0,
            uplink_power: 0.0,
            ..Default::default()
        };
        assert_eq!(consumption_energy(&z), 0.0);
        let d = SystemConfig::default();
        let d2 = SystemConfig {
            pilot_power: 2.0 * d.pilot_power,
            uplink_power: 2.0 * d.uplink_power,
            ..d.clone()
        };
        assert!((consumption_energy(&d2) - 2.0 * consumption_energy(&d)).abs() < 1e-24);
    }

    #[test]
    fn negative_probability_limits() {
        let fit = GammaFit {
            shape: 3.0,
            scale: 2.0,
        };
        assert_eq!(negative_transition_prob(&fit, 0.0), 0.0);
        assert!((negative_transition_prob(&fit, 1e6) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn triple_examples() {
        let fit = GammaFit {
            shape: 3.0,
            scale: 2.0,
        };
        assert_eq!(
            transition_triple(&fit, 1.0, 0.0, 2000, 0.3),
            TransitionTriple::identity()
        );
        // q = 2000 * 6e-7 / 0.3 = 0.004 with no chance of a loss
        let t = transition_triple(&fit, 0.0, 6e-7, 2000, 0.3);
        assert_eq!(t.down, 0.0);
        assert!((t.up - 0.004).abs() < 1e-15 && (t.stay - 0.996).abs() < 1e-15);
        // departure mass saturates
        let t = transition_triple(&fit, 1e9, -1.0, 10, 1.0);
        assert_eq!((t.down, t.stay, t.up), (1.0, 0.0, 0.0));
    }

    fn chain(d: f64, u: f64, m: usize) -> EnergyChain {
        EnergyChain::from_triple(
            TransitionTriple {
                down: d,
                stay: 1.0 - d - u,
                up: u,
            },
            m,
            1.0,
        )
    }

    #[test]
    fn matrix_rows_sum_to_one() {
        let c = chain(0.3, 0.45, 6);
        for row in c.transition_matrix() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn evolution_examples() {
        let c = chain(0.2, 0.1, 5);
        let p0 = StateDistribution::uniform(5);
        assert_eq!(n_step_distribution(&c, &p0, 0).unwrap().probs, p0.probs);
        let id = chain(0.0, 0.0, 5);
        let pm = StateDistribution::point_mass(5, 2).unwrap();
        assert_eq!(n_step_distribution(&id, &pm, 50).unwrap().probs, pm.probs);
        let walk = chain(0.0, 1.0, 5);
        let out =
            n_step_distribution(&walk, &StateDistribution::point_mass(5, 1).unwrap(), 3).unwrap();
        assert_eq!(out.prob(4), 1.0);
        assert_eq!(out.step, 3);
        let long = n_step_distribution(&c, &p0, 10_000).unwrap();
        assert!((long.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(n_step_distribution(&c, &StateDistribution::uniform(4), 1).is_err());
    }

    #[test]
    fn evolution_matches_dense_matrix() {
        let c = chain(0.25, 0.35, 7);
        let m = c.transition_matrix();
        let mut p = vec![0.0; 7];
        p[3] = 0.6;
        p[0] = 0.4;
        let start = StateDistribution {
            probs: p.clone(),
            step: 0,
        };
        for _ in 0..9 {
            p = (0..7)
                .map(|j| (0..7).map(|i| p[i] * m[i][j]).sum())
                .collect();
        }
        let fast = n_step_distribution(&c, &start, 9).unwrap();
        for (a, b) in fast.probs.iter().zip(&p) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn state_mapping() {
        assert_eq!(energy_state(0.0, 0.3, 2000), 1);
        assert_eq!(energy_state(0.3, 0.3, 2000), 2000);
        assert_eq!(energy_state(0.3 / 2000.0 * 3.0, 0.3, 2000), 3);
        assert_eq!(energy_state(0.3 / 2000.0 * 3.5, 0.3, 2000), 4);
    }

    #[test]
    fn trajectory_examples() {
        let mut rng = substream(1, Domain::Trajectory, 0, 0);
        let flat = simulate_energy_trajectory(&[0.0], 0.15, 0.3, 2000, 20, &mut rng).unwrap();
        assert!(flat.iter().all(|&s| s == 1000));
        let step = 0.3 / 10.0;
        let up = simulate_energy_trajectory(&[step], 0.0, 0.3, 10, 14, &mut rng).unwrap();
        assert_eq!(up, vec![1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 10, 10, 10, 10]);
        assert!(simulate_energy_trajectory(&[step], 0.0, 0.3, 10, 0, &mut rng).is_err());
    }

    #[test]
    fn chain_sampler_walks() {
        let mut rng = substream(2, Domain::Trajectory, 0, 0);
        assert_eq!(
            simulate_chain(&chain(0.0, 1.0, 4), 1, 5, &mut rng),
            vec![2, 3, 4, 4, 4]
        );
        assert_eq!(
            simulate_chain(&chain(1.0, 0.0, 4), 3, 4, &mut rng),
            vec![2, 1, 1, 1]
        );
    }
}
