//! TOML experiment file.

use std::path::Path;

use anyhow::{bail, Context, Result};
use cellfree_eh::experiment::{Sweep, SweepPoint};
use cellfree_eh::{Error, SystemConfig};
use serde::{Deserialize, Serialize};

/// Oracle suite settings for `validate`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationSettings {
    pub instances: usize,
    pub draws: usize,
    /// Also check the individual quadratic-form kernels.
    pub terms: bool,
}

impl Default for ValidationSettings {
    fn default() -> Self {
        Self {
            instances: 50,
            draws: 1_000_000,
            terms: true,
        }
    }
}

/// Everything one invocation needs. Missing keys take their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Experiment {
    /// Coherence intervals per topology.
    pub intervals: usize,
    /// Independent drops per configuration.
    pub topologies: usize,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    /// Horizons written to `markov_evolution.csv`.
    pub markov_steps: Vec<usize>,
    pub system: SystemConfig,
    pub sweep: Sweep,
    pub validation: ValidationSettings,
}

impl Default for Experiment {
    fn default() -> Self {
        Self {
            intervals: 2000,
            topologies: 1,
            workers: 0,
            markov_steps: vec![100, 200, 500],
            system: SystemConfig::default(),
            sweep: Sweep::default(),
            validation: ValidationSettings::default(),
        }
    }
}

impl Experiment {
    pub fn from_toml(text: &str) -> Result<Self> {
        let exp: Experiment = toml::from_str(text)?;
        Ok(exp)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Lists every violated constraint.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.topologies == 0 {
            errs.push("topologies must be at least 1".to_string());
        }
        if self.validation.instances == 0 {
            errs.push("validation.instances must be at least 1".to_string());
        }
        if self.validation.draws < 10_000 {
            errs.push(format!(
                "validation.draws must be at least 10000, got {}",
                self.validation.draws
            ));
        }
        if let Err(Error::InvalidConfig(v)) = self.system.validate() {
            errs.extend(v);
        }
        match self.sweep.points() {
            Ok(_) => {}
            Err(Error::InvalidConfig(v)) => errs.extend(v),
            Err(e) => errs.push(e.to_string()),
        }
        if errs.is_empty() {
            Ok(())
        } else {
            bail!("invalid experiment:\n  {}", errs.join("\n  "))
        }
    }

    pub fn points(&self) -> Result<Vec<SweepPoint>> {
        Ok(self.sweep.points()?)
    }

    pub fn worker_count(&self) -> usize {
        if self.workers > 0 {
            self.workers
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let exp = Experiment::from_toml("").unwrap();
        assert_eq!(exp, Experiment::default());
        assert_eq!(exp.system.num_ues, 20);
        assert_eq!(exp.system.battery_capacity, 0.3);
        assert_eq!(exp.system.energy_states, 2000);
        assert_eq!(exp.system.total_power, 10.0);
        assert_eq!(exp.points().unwrap().len(), 5);
        exp.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Experiment::from_toml("intervalz = 3").is_err());
        assert!(Experiment::from_toml("[system]\nnum_ap = 3").is_err());
        assert!(
            Experiment::from_toml("[sweep]\nkind = \"points\"\npoints = []\nextra = 1").is_err()
        );
    }

    #[test]
    fn partial_sections_keep_defaults() {
        let exp = Experiment::from_toml(
            "intervals = 10\n[system]\nnum_ues = 4\n[system.circuit]\na = 100.0",
        )
        .unwrap();
        assert_eq!(exp.intervals, 10);
        assert_eq!(exp.system.num_ues, 4);
        assert_eq!(exp.system.circuit.a, 100.0);
        assert_eq!(exp.system.circuit.b, 0.014);
        assert_eq!(exp.system.tau_c, 200);
    }

    #[test]
    fn non_divisor_constant_sweep_is_rejected() {
        let exp = Experiment::from_toml(
            "[sweep]\nkind = \"constant_antennas\"\naps = [4, 7]\ntotal_antennas = 288",
        )
        .unwrap();
        let msg = exp.validate().unwrap_err().to_string();
        assert!(msg.contains("over 7 aps"), "{msg}");
    }

    #[test]
    fn every_violation_is_listed() {
        let exp =
            Experiment::from_toml("topologies = 0\n[system]\ntau_h = 150\nnum_ues = 0").unwrap();
        let msg = exp.validate().unwrap_err().to_string();
        assert!(msg.contains("topologies"), "{msg}");
        assert!(msg.contains("exceeds tau_c"), "{msg}");
        assert!(msg.contains("num_ues"), "{msg}");
    }
}
