//! Per-interval simulation and sampling oracles.

mod moments;
pub mod validation;

pub use moments::{McEstimate, Moments};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{draw_channels_into, estimate_channels_into, ChannelState, TrueChannels};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::markov::consumption_energy;
use crate::mat::Mat;
use crate::rng::{substream, Domain};
use crate::topology::LargeScaleModel;
use crate::wpt::{beam_weights, harvest, received_power_into, EhCircuit, PowerControl};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub config_hash: String,
    pub seed: u64,
    pub intervals: usize,
    pub topology_index: u32,
}

/// Per-interval samples, stored interval-major: entry `t * K + k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub num_ues: usize,
    pub consumed: f64,
    pub received: Vec<f64>,
    pub harvested: Vec<f64>,
    pub delta: Vec<f64>,
    pub metadata: RunMetadata,
}

impl RunResult {
    pub fn intervals(&self) -> usize {
        self.metadata.intervals
    }

    fn column(v: &[f64], k: usize, nk: usize) -> Vec<f64> {
        v.iter().skip(k).step_by(nk).copied().collect()
    }

    pub fn received_of(&self, k: usize) -> Vec<f64> {
        Self::column(&self.received, k, self.num_ues)
    }

    pub fn harvested_of(&self, k: usize) -> Vec<f64> {
        Self::column(&self.harvested, k, self.num_ues)
    }

    pub fn delta_of(&self, k: usize) -> Vec<f64> {
        Self::column(&self.delta, k, self.num_ues)
    }
}

/// Everything needed to simulate coherence intervals of one scenario.
pub struct Engine<'a> {
    ls: &'a LargeScaleModel,
    weights: Mat<f64>,
    circuit: EhCircuit,
    tau_h: f64,
    consumed: f64,
    seed: u64,
    topology_index: u32,
    config_hash: String,
}

impl<'a> Engine<'a> {
    pub fn new(
        config: &SystemConfig,
        ls: &'a LargeScaleModel,
        pc: &PowerControl,
        topology_index: u32,
    ) -> Result<Self> {
        Ok(Self {
            ls,
            weights: beam_weights(ls, pc)?,
            circuit: config.circuit,
            tau_h: config.tau_h_seconds(),
            consumed: consumption_energy(config),
            seed: config.seed,
            topology_index,
            config_hash: config.hash_hex(),
        })
    }

    /// Received RF power of every UE in interval `t`.
    pub fn interval(
        &self,
        t: usize,
        truth: &mut TrueChannels,
        state: &mut ChannelState,
        out: &mut [f64],
    ) {
        let mut rng = substream(self.seed, Domain::Interval, self.topology_index, t as u64);
        draw_channels_into(self.ls, &mut rng, truth);
        estimate_channels_into(truth, self.ls, &mut rng, state);
        received_power_into(state, &self.weights, out);
    }

    /// Simulates `intervals` coherence intervals on `workers` threads.
    ///
    /// Interval `t` always uses the same random stream, so the result does not
    /// depend on `workers`.
    pub fn run(&self, intervals: usize, workers: usize) -> Result<RunResult> {
        let nk = self.ls.num_ues;
        let mut received = vec![0.0; intervals * nk];
        let mut harvested = vec![0.0; intervals * nk];
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
        pool.install(|| {
            received
                .par_chunks_mut(nk.max(1))
                .zip(harvested.par_chunks_mut(nk.max(1)))
                .enumerate()
                .try_for_each_init(
                    || (TrueChannels::zeros(self.ls), ChannelState::zeros(self.ls)),
                    |(truth, state), (t, (rx, eh))| {
                        self.interval(t, truth, state, rx);
                        for (e, &i) in eh.iter_mut().zip(rx.iter()) {
                            *e = harvest(i, &self.circuit, self.tau_h).map_err(|source| {
                                Error::Interval {
                                    interval: t,
                                    source: Box::new(source),
                                }
                            })?;
                        }
                        Ok::<(), Error>(())
                    },
                )
        })?;
        let delta = harvested.iter().map(|e| e - self.consumed).collect();
        Ok(RunResult {
            num_ues: nk,
            consumed: self.consumed,
            received,
            harvested,
            delta,
            metadata: RunMetadata {
                config_hash: self.config_hash.clone(),
                seed: self.seed,
                intervals,
                topology_index: self.topology_index,
            },
        })
    }
}

/// Right-continuous empirical CDF.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySamples);
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn support(&self) -> &[f64] {
        &self.sorted
    }

    /// Fraction of samples `<= x`.
    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&s| s <= x) as f64 / self.sorted.len() as f64
    }

    /// Kolmogorov-Smirnov distance to a continuous CDF.
    pub fn ks_distance(&self, cdf: impl Fn(f64) -> f64) -> f64 {
        let n = self.sorted.len() as f64;
        self.sorted
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / n).max((i + 1) as f64 / n - f)
            })
            .fold(0.0, f64::max)
    }
}

pub fn empirical_cdf(samples: &[f64]) -> Result<EmpiricalCdf> {
    EmpiricalCdf::new(samples)
}

/// UE whose mean harvested energy is the (lower) median across UEs.
pub fn median_energy_user(result: &RunResult) -> Result<usize> {
    if result.num_ues == 0 || result.intervals() == 0 {
        return Err(Error::EmptySamples);
    }
    let means: Vec<f64> = (0..result.num_ues)
        .map(|k| result.harvested_of(k).iter().sum::<f64>() / result.intervals() as f64)
        .collect();
    Ok(median_index(&means))
}

/// Index of the lower median of `values`; ties go to the smaller index.
pub fn median_index(values: &[f64]) -> usize {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    order[(values.len() - 1) / 2]
}

/// Sample estimate of a complex quadratic form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadformEstimate {
    pub mean: Complex64,
    /// Standard errors of the real and imaginary parts of the mean.
    pub mean_se: (f64, f64),
    /// `E|Y - E Y|^2`.
    pub variance: f64,
    pub variance_se: f64,
    pub count: u64,
}

/// Samples `Y = (g_kl^T conj(g_hat_il)) (g_hat_il'^T conj(g_kl'))`, i.e.
/// `|g_kl^T conj(g_hat_il)|^2` when `l == l2`.
pub fn quadform_oracle<R: rand::Rng + ?Sized>(
    ls: &LargeScaleModel,
    k: usize,
    i: usize,
    l: usize,
    l2: usize,
    draws: usize,
    rng: &mut R,
) -> Result<QuadformEstimate> {
    if draws < 10_000 {
        return Err(Error::InvalidInput(format!(
            "oracle needs at least 10^4 draws, got {draws}"
        )));
    }
    let mut truth = TrueChannels::zeros(ls);
    let mut state = ChannelState::zeros(ls);
    let dot = |s: &ChannelState, a: usize| -> Complex64 {
        s.g(k, a)
            .iter()
            .zip(s.g_hat(i, a))
            .map(|(x, y)| x * y.conj())
            .sum()
    };
    let mut ys = Vec::with_capacity(draws);
    for _ in 0..draws {
        draw_channels_into(ls, rng, &mut truth);
        estimate_channels_into(&truth, ls, rng, &mut state);
        ys.push(dot(&state, l) * dot(&state, l2).conj());
    }
    let re: Moments = ys.iter().map(|y| y.re).collect();
    let im: Moments = ys.iter().map(|y| y.im).collect();
    let mean = Complex64::new(re.mean(), im.mean());
    let spread: Moments = ys.iter().map(|y| (y - mean).norm_sqr()).collect();
    let n = draws as f64;
    Ok(QuadformEstimate {
        mean,
        mean_se: (re.estimate().standard_error, im.estimate().standard_error),
        variance: spread.mean() * n / (n - 1.0),
        variance_se: spread.estimate().standard_error,
        count: draws as u64,
    })
}

/// Draws per independent oracle stream.
pub const ORACLE_CHUNK: usize = 8192;

/// Sampling oracle for the received RF power of every UE.
///
/// Draw `d` belongs to chunk `d / ORACLE_CHUNK`, which has its own stream;
/// chunks are merged in order, so the estimate does not depend on threading.
pub fn rf_power_oracle(
    ls: &LargeScaleModel,
    pc: &PowerControl,
    served: &[usize],
    draws: usize,
    seed: u64,
    stream: u32,
) -> Result<Vec<McEstimate>> {
    let mut weights = Mat::filled(ls.num_ues, ls.num_aps, 0.0);
    let w = beam_weights(ls, pc)?;
    for &i in served {
        for l in 0..ls.num_aps {
            weights[(i, l)] = w[(i, l)];
        }
    }
    let chunks = draws.div_ceil(ORACLE_CHUNK);
    let nk = ls.num_ues;
    let partial: Vec<Vec<Moments>> = (0..chunks)
        .into_par_iter()
        .map_init(
            || {
                (
                    TrueChannels::zeros(ls),
                    ChannelState::zeros(ls),
                    vec![0.0; nk],
                )
            },
            |(truth, state, out), c| {
                let mut rng = substream(seed, Domain::Oracle, stream, c as u64);
                let count = ORACLE_CHUNK.min(draws - c * ORACLE_CHUNK);
                let mut acc = vec![Moments::new(); nk];
                for _ in 0..count {
                    draw_channels_into(ls, &mut rng, truth);
                    estimate_channels_into(truth, ls, &mut rng, state);
                    received_power_into(state, &weights, out);
                    for (a, &x) in acc.iter_mut().zip(out.iter()) {
                        a.push(x);
                    }
                }
                acc
            },
        )
        .collect();
    let mut total = vec![Moments::new(); nk];
    for chunk in &partial {
        for (t, m) in total.iter_mut().zip(chunk) {
            t.merge(m);
        }
    }
    Ok(total.iter().map(Moments::estimate).collect())
}

#[cfg(test)]
mod tests;
