//! One sweep point end to end: scenario, simulation, analytical statistics,
//! Gamma fits and battery chains.

use serde::{Deserialize, Serialize};

use crate::channel::assign_pilots;
use crate::closedform::{analytical_statistics, HarvestStatistics, Provenance};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::markov::{
    consumption_energy, gamma_fit, harvest_cdf, negative_transition_prob, EnergyChain, GammaFit,
};
use crate::montecarlo::{empirical_cdf, median_energy_user, Engine, Moments, RunResult};
use crate::rng::{substream, Domain};
use crate::topology::{generate_topology, large_scale, LargeScaleModel, Topology};
use crate::wpt::{equal_power_control, PowerControl};

/// AP count and antennas per AP of one sweep point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub aps: usize,
    pub antennas: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Sweep {
    /// Explicit `[aps, antennas]` pairs.
    Points { points: Vec<[usize; 2]> },
    /// Keeps `aps * antennas = total_antennas`.
    ConstantAntennas {
        aps: Vec<usize>,
        total_antennas: usize,
    },
}

impl Default for Sweep {
    fn default() -> Self {
        Sweep::Points {
            points: vec![[4, 72], [9, 32], [16, 18], [25, 12], [36, 8]],
        }
    }
}

impl Sweep {
    pub fn points(&self) -> Result<Vec<SweepPoint>> {
        let pts: Vec<SweepPoint> = match self {
            Sweep::Points { points } => points
                .iter()
                .map(|&[aps, antennas]| SweepPoint { aps, antennas })
                .collect(),
            Sweep::ConstantAntennas {
                aps,
                total_antennas,
            } => {
                let bad: Vec<String> = aps
                    .iter()
                    .filter(|&&l| l == 0 || total_antennas % l != 0)
                    .map(|l| {
                        format!("{total_antennas} antennas cannot be split evenly over {l} aps")
                    })
                    .collect();
                if !bad.is_empty() {
                    return Err(Error::InvalidConfig(bad));
                }
                aps.iter()
                    .map(|&l| SweepPoint {
                        aps: l,
                        antennas: total_antennas / l,
                    })
                    .collect()
            }
        };
        if pts.is_empty() {
            return Err(Error::InvalidConfig(vec!["sweep has no points".into()]));
        }
        if let Some(p) = pts.iter().find(|p| p.aps == 0 || p.antennas == 0) {
            return Err(Error::InvalidConfig(vec![format!(
                "sweep point {p:?} needs at least one ap and antenna"
            )]));
        }
        Ok(pts)
    }
}

impl SweepPoint {
    pub fn apply(&self, base: &SystemConfig) -> SystemConfig {
        SystemConfig {
            num_aps: self.aps,
            antennas: self.antennas,
            ..base.clone()
        }
    }
}

/// Placement and large-scale model of one drop, as stored in
/// `topology.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SavedScenario {
    pub topology: Topology,
    pub large_scale: LargeScaleModel,
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: SystemConfig,
    pub topology_index: u32,
    pub topology: Topology,
    pub ls: LargeScaleModel,
    pub pc: PowerControl,
}

impl Scenario {
    /// Draws drop `topology_index`: users and random APs, pilots, then
    /// shadowing, each from its own stream.
    pub fn build(config: &SystemConfig, topology_index: u32) -> Result<Self> {
        config.validate()?;
        let seed = config.seed;
        let topology = generate_topology(
            config,
            &mut substream(seed, Domain::UePlacement, topology_index, 0),
        );
        let pilots = assign_pilots(
            config.num_ues,
            config.tau_p,
            config.pilot_policy,
            &mut substream(seed, Domain::Pilots, topology_index, 0),
        )?;
        let ls = large_scale(
            &topology,
            config,
            pilots,
            &mut substream(seed, Domain::Shadowing, topology_index, 0),
        )?;
        Ok(Self {
            config: config.clone(),
            topology_index,
            topology,
            ls,
            pc: equal_power_control(config),
        })
    }

    pub fn from_saved(
        config: &SystemConfig,
        topology_index: u32,
        saved: SavedScenario,
    ) -> Result<Self> {
        config.validate()?;
        let ls = saved.large_scale;
        if ls.num_aps != config.num_aps
            || ls.num_ues != config.num_ues
            || ls.antennas != config.antennas
        {
            return Err(Error::Shape(format!(
                "saved scenario has L={} K={} N={}, configuration has L={} K={} N={}",
                ls.num_aps,
                ls.num_ues,
                ls.antennas,
                config.num_aps,
                config.num_ues,
                config.antennas
            )));
        }
        Ok(Self {
            config: config.clone(),
            topology_index,
            topology: saved.topology,
            ls,
            pc: equal_power_control(config),
        })
    }

    pub fn saved(&self) -> SavedScenario {
        SavedScenario {
            topology: self.topology.clone(),
            large_scale: self.ls.clone(),
        }
    }
}

/// Everything derived for one sweep point and drop.
#[derive(Clone, Debug)]
pub struct PointResult {
    pub scenario: Scenario,
    pub run: RunResult,
    pub consumed: f64,
    pub analytical: Vec<HarvestStatistics>,
    pub empirical: Vec<HarvestStatistics>,
    /// Gamma fits from the analytical moments.
    pub fits: Vec<GammaFit>,
    pub chains: Vec<EnergyChain>,
    pub median_ue: usize,
    /// `Pr(dE <= 0)` from the fits.
    pub negative_analytical: Vec<f64>,
    /// Fraction of intervals with `dE <= 0`.
    pub negative_empirical: Vec<f64>,
}

impl PointResult {
    /// KS distance between the fitted CDF and the samples of UE `k`.
    pub fn ks_distance(&self, k: usize) -> Result<f64> {
        let cdf = empirical_cdf(&self.run.harvested_of(k))?;
        Ok(cdf.ks_distance(|e| harvest_cdf(e, &self.fits[k])))
    }
}

pub fn simulate(scenario: Scenario, intervals: usize, workers: usize) -> Result<PointResult> {
    let engine = Engine::new(
        &scenario.config,
        &scenario.ls,
        &scenario.pc,
        scenario.topology_index,
    )?;
    let run = engine.run(intervals, workers)?;
    analyze(scenario, run)
}

/// Derives statistics, fits and chains from a finished run.
pub fn analyze(scenario: Scenario, run: RunResult) -> Result<PointResult> {
    let config = &scenario.config;
    let tau_h = config.tau_h_seconds();
    let consumed = consumption_energy(config);
    let analytical = analytical_statistics(&scenario.ls, &scenario.pc, &config.circuit, tau_h)?;
    let nk = run.num_ues;
    let empirical: Vec<HarvestStatistics> = (0..nk)
        .map(|k| {
            let i: Moments = run.received_of(k).into_iter().collect();
            let e: Moments = run.harvested_of(k).into_iter().collect();
            HarvestStatistics {
                mean_i: i.mean(),
                var_i: i.variance(),
                mean_e: e.mean(),
                var_e: e.variance(),
                provenance: Provenance::Empirical,
            }
        })
        .collect();
    let fits = analytical
        .iter()
        .map(|s| gamma_fit(s.mean_e, s.var_e))
        .collect::<Result<Vec<_>>>()?;
    let chains = analytical
        .iter()
        .zip(&fits)
        .map(|(s, f)| {
            EnergyChain::new(
                f,
                consumed,
                s.mean_e - consumed,
                config.energy_states,
                config.battery_capacity,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let median_ue = median_energy_user(&run)?;
    let negative_analytical = fits
        .iter()
        .map(|f| negative_transition_prob(f, consumed))
        .collect();
    let negative_empirical = (0..nk)
        .map(|k| {
            let d = run.delta_of(k);
            d.iter().filter(|&&x| x <= 0.0).count() as f64 / d.len() as f64
        })
        .collect();
    Ok(PointResult {
        scenario,
        run,
        consumed,
        analytical,
        empirical,
        fits,
        chains,
        median_ue,
        negative_analytical,
        negative_empirical,
    })
}
