use serde::{Deserialize, Serialize};

use crate::channel::PilotPolicy;
use crate::error::{Error, Result};
use crate::topology::RicianModel;
use crate::wpt::EhCircuit;

/// Thermal noise density in dBm/Hz.
pub const THERMAL_NOISE_DBM_HZ: f64 = -174.0;

/// Scalar parameters of one experiment.
///
/// Durations are in symbols, powers in watts, lengths in meters, energies in
/// joules. Every field has a default, so a partial TOML/JSON document is
/// completed from [`SystemConfig::default`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub num_aps: usize,
    pub num_ues: usize,
    pub antennas: usize,
    pub tau_c: usize,
    pub tau_p: usize,
    pub tau_h: usize,
    pub tau_d: usize,
    pub tau_u: usize,
    /// Seconds per symbol.
    pub symbol_duration: f64,
    pub pilot_power: f64,
    pub uplink_power: f64,
    /// Network-wide downlink budget, split evenly over the APs.
    pub total_power: f64,
    pub bandwidth_hz: f64,
    pub noise_figure_db: f64,
    /// Overrides the thermal noise derived from bandwidth and noise figure.
    pub noise_power: Option<f64>,
    pub area_side: f64,
    pub ap_height: f64,
    pub ue_height: f64,
    pub carrier_mhz: f64,
    pub shadow_std_db: f64,
    pub d0: f64,
    pub d1: f64,
    pub rician: RicianModel,
    pub pilot_policy: PilotPolicy,
    pub circuit: EhCircuit,
    pub battery_capacity: f64,
    pub energy_states: usize,
    pub seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            num_aps: 4,
            num_ues: 20,
            antennas: 72,
            tau_c: 200,
            tau_p: 20,
            tau_h: 100,
            tau_d: 40,
            tau_u: 40,
            symbol_duration: 1e-3,
            pilot_power: 8.5e-8,
            uplink_power: 8.5e-8,
            total_power: 10.0,
            bandwidth_hz: 20e6,
            noise_figure_db: 9.0,
            noise_power: None,
            area_side: 100.0,
            ap_height: 15.0,
            ue_height: 1.65,
            carrier_mhz: 1900.0,
            shadow_std_db: 8.0,
            d0: 10.0,
            d1: 50.0,
            rician: RicianModel::default(),
            pilot_policy: PilotPolicy::RoundRobin,
            circuit: EhCircuit::default(),
            battery_capacity: 0.3,
            energy_states: 2000,
            seed: 1,
        }
    }
}

impl SystemConfig {
    /// Per-AP downlink power.
    pub fn p_d(&self) -> f64 {
        self.total_power / self.num_aps as f64
    }

    /// Noise power in watts.
    pub fn sigma2(&self) -> f64 {
        self.noise_power.unwrap_or_else(|| {
            let dbm =
                THERMAL_NOISE_DBM_HZ + 10.0 * self.bandwidth_hz.log10() + self.noise_figure_db;
            10f64.powf((dbm - 30.0) / 10.0)
        })
    }

    /// Harvesting phase length in seconds.
    pub fn tau_h_seconds(&self) -> f64 {
        self.tau_h as f64 * self.symbol_duration
    }

    /// Checks every constraint and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let mut positive_count = |name: &str, v: usize| {
            if v == 0 {
                errs.push(format!("{name} must be at least 1"));
            }
        };
        positive_count("num_aps", self.num_aps);
        positive_count("num_ues", self.num_ues);
        positive_count("antennas", self.antennas);
        positive_count("tau_c", self.tau_c);
        positive_count("tau_p", self.tau_p);
        positive_count("tau_h", self.tau_h);
        positive_count("tau_d", self.tau_d);
        positive_count("tau_u", self.tau_u);
        if self.energy_states < 2 {
            errs.push("energy_states must be at least 2".into());
        }
        let phases = self.tau_p + self.tau_h + self.tau_d + self.tau_u;
        if phases > self.tau_c {
            errs.push(format!(
                "tau_p + tau_h + tau_d + tau_u = {phases} exceeds tau_c = {}",
                self.tau_c
            ));
        }
        let mut positive = |name: &str, v: f64| {
            if !(v > 0.0 && v.is_finite()) {
                errs.push(format!("{name} must be positive and finite, got {v}"));
            }
        };
        positive("symbol_duration", self.symbol_duration);
        positive("pilot_power", self.pilot_power);
        positive("uplink_power", self.uplink_power);
        positive("total_power", self.total_power);
        positive("bandwidth_hz", self.bandwidth_hz);
        positive("area_side", self.area_side);
        positive("ap_height", self.ap_height);
        positive("ue_height", self.ue_height);
        positive("carrier_mhz", self.carrier_mhz);
        positive("d0", self.d0);
        positive("d1", self.d1);
        positive("battery_capacity", self.battery_capacity);
        if let Some(s) = self.noise_power {
            positive("noise_power", s);
        }
        if !self.noise_figure_db.is_finite() {
            errs.push("noise_figure_db must be finite".into());
        }
        if !(self.shadow_std_db >= 0.0 && self.shadow_std_db.is_finite()) {
            errs.push(format!(
                "shadow_std_db must be non-negative, got {}",
                self.shadow_std_db
            ));
        }
        if self.d0 >= self.d1 {
            errs.push(format!("d0 = {} must be below d1 = {}", self.d0, self.d1));
        }
        errs.extend(self.rician.violations());
        errs.extend(self.circuit.violations());
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(errs))
        }
    }

    /// Stable SHA-256 digest of the canonical JSON encoding.
    pub fn hash_hex(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        SystemConfig::default().validate().unwrap();
    }

    #[test]
    fn default_noise_is_about_minus_92_dbm() {
        let dbm = 10.0 * (SystemConfig::default().sigma2() * 1e3).log10();
        assert!((dbm + 91.99).abs() < 0.01, "{dbm}");
    }

    #[test]
    fn per_ap_power_times_aps_is_total() {
        for l in [1, 2, 3, 4, 7, 9, 16, 25, 36, 64] {
            let c = SystemConfig {
                num_aps: l,
                ..Default::default()
            };
            assert_eq!(c.p_d() * l as f64, c.total_power, "L = {l}");
        }
    }

    #[test]
    fn phase_budget_is_enforced() {
        let c = SystemConfig {
            tau_h: 101,
            ..Default::default()
        };
        let err = c.validate().unwrap_err().to_string();
        assert!(err.contains("exceeds tau_c"), "{err}");
    }

    #[test]
    fn all_violations_are_listed() {
        let c = SystemConfig {
            antennas: 0,
            pilot_power: -1.0,
            energy_states: 1,
            ..Default::default()
        };
        match c.validate() {
            Err(Error::InvalidConfig(v)) => assert_eq!(v.len(), 3, "{v:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn hash_depends_on_content() {
        let a = SystemConfig::default();
        let b = SystemConfig {
            seed: 2,
            ..Default::default()
        };
        assert_eq!(a.hash_hex(), SystemConfig::default().hash_hex());
        assert_ne!(a.hash_hex(), b.hash_hex());
        assert_eq!(a.hash_hex().len(), 64);
    }
}
