//! Oracle suite: closed forms against brute-force sampling on random small
//! instances.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{quadform_oracle, rf_power_oracle};
use crate::channel::{assign_pilots, PilotPolicy};
use crate::closedform;
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::rng::{substream, Domain};
use crate::topology::LargeScaleModel;
use crate::wpt::PowerControl;

/// A small random scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub ls: LargeScaleModel,
    pub pc: PowerControl,
}

/// Random instance with at most 3 APs, 4 antennas and 4 UEs, a random number
/// of pilots (so pilot sharing varies) and random Rician factors.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R) -> Instance {
    let nl = rng.random_range(1..=3);
    let n = rng.random_range(1..=4);
    let nk = rng.random_range(1..=4);
    let tau_p = rng.random_range(1..=nk);
    let policy = if rng.random_bool(0.5) {
        PilotPolicy::RoundRobin
    } else {
        PilotPolicy::Random
    };
    let pilots = assign_pilots(nk, tau_p, policy, rng).expect("tau_p >= 1");
    let zeta = Mat::from_fn(nk, nl, |_, _| {
        (rng.random_range(0.2f64.ln()..2f64.ln())).exp()
    });
    let k_factor = Mat::from_fn(nk, nl, |_, _| {
        if rng.random_bool(0.2) {
            0.0
        } else {
            rng.random_range(0.0..5.0)
        }
    });
    let phi = Mat::from_fn(nk, nl, |_, _| {
        rng.random_range(-std::f64::consts::FRAC_PI_2..std::f64::consts::FRAC_PI_2)
    });
    let tau_p_pp = rng.random_range(0.5..5.0);
    let sigma2 = rng.random_range(0.1..1.0);
    let ls = LargeScaleModel::from_parts(zeta, k_factor, phi, n, pilots, tau_p_pp, sigma2)
        .expect("valid instance");
    let eta = Mat::from_fn(nk, nl, |_, _| rng.random_range(0.2..1.0));
    Instance {
        ls,
        pc: PowerControl { eta },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    MeanRfPower,
    VarRfPower,
    QuadformSameAp,
    QuadformCrossAp,
    UpsilonCoh,
    UpsilonNoncoh,
}

impl Term {
    pub const ALL: [Term; 6] = [
        Term::MeanRfPower,
        Term::VarRfPower,
        Term::QuadformSameAp,
        Term::QuadformCrossAp,
        Term::UpsilonCoh,
        Term::UpsilonNoncoh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Term::MeanRfPower => "mean_rf_power",
            Term::VarRfPower => "var_rf_power",
            Term::QuadformSameAp => "quadform_same_ap",
            Term::QuadformCrossAp => "quadform_cross_ap",
            Term::UpsilonCoh => "upsilon_coh",
            Term::UpsilonNoncoh => "upsilon_noncoh",
        }
    }

    fn id(self) -> u64 {
        Term::ALL.iter().position(|&t| t == self).unwrap() as u64
    }

    fn is_variance(self) -> bool {
        matches!(
            self,
            Term::VarRfPower | Term::UpsilonCoh | Term::UpsilonNoncoh
        )
    }
}

impl FromStr for Term {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Term::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown term `{s}`")))
    }
}

/// Multiplies one analytical term by `factor`; used to check that the suite
/// catches a wrong formula.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Corruption {
    pub term: Term,
    pub factor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub instance: usize,
    pub term: Term,
    pub detail: String,
    pub analytic: f64,
    pub estimate: f64,
    pub standard_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub rows: Vec<ValidationRow>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ValidationRow> {
        self.rows.iter().filter(|r| !r.pass)
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        writeln!(
            s,
            "{:>4}  {:<18} {:<22} {:>14} {:>14} {:>11} {:>11}  result",
            "inst", "term", "detail", "analytic", "oracle", "std.err", "tolerance"
        )
        .unwrap();
        for r in &self.rows {
            writeln!(
                s,
                "{:>4}  {:<18} {:<22} {:>14.6e} {:>14.6e} {:>11.3e} {:>11.3e}  {}",
                r.instance,
                r.term.name(),
                r.detail,
                r.analytic,
                r.estimate,
                r.standard_error,
                r.tolerance,
                if r.pass { "PASS" } else { "FAIL" }
            )
            .unwrap();
        }
        s
    }
}

#[derive(Clone, Debug)]
pub struct ValidationSuite {
    pub instances: usize,
    pub draws: usize,
    pub seed: u64,
    /// Also check the individual quadratic-form kernels.
    pub include_terms: bool,
    pub corrupt: Option<Corruption>,
}

/// Relative tolerance for variance rows.
pub const VARIANCE_REL_TOL: f64 = 0.05;
/// Standard errors allowed for every row.
pub const SE_MULTIPLIER: f64 = 3.0;

impl ValidationSuite {
    fn factor(&self, term: Term) -> f64 {
        match self.corrupt {
            Some(c) if c.term == term => c.factor,
            _ => 1.0,
        }
    }

    fn row(
        &self,
        instance: usize,
        term: Term,
        detail: String,
        analytic: f64,
        estimate: f64,
        se: f64,
    ) -> ValidationRow {
        let analytic = analytic * self.factor(term);
        let mut tolerance = SE_MULTIPLIER * se;
        if term.is_variance() {
            tolerance = tolerance.max(VARIANCE_REL_TOL * analytic.abs());
        }
        tolerance = tolerance.max(1e-12 * (analytic.abs() + estimate.abs()));
        ValidationRow {
            instance,
            term,
            detail,
            analytic,
            estimate,
            standard_error: se,
            tolerance,
            pass: (analytic - estimate).abs() <= tolerance,
        }
    }

    pub fn instance(&self, j: usize) -> Instance {
        random_instance(&mut substream(self.seed, Domain::Instance, 0, j as u64))
    }

    pub fn run(&self) -> Result<ValidationReport> {
        let mut rows = Vec::new();
        for j in 0..self.instances {
            rows.extend(self.run_instance(j)?);
        }
        Ok(ValidationReport { rows })
    }

    pub fn run_instance(&self, j: usize) -> Result<Vec<ValidationRow>> {
        let Instance { ls, pc } = self.instance(j);
        let served: Vec<usize> = (0..ls.num_ues).collect();
        let moments = closedform::rf_power_moments(&ls, &pc, &served)?;
        let closed_mean = closedform::mean_rf_power(&ls, &pc, &served)?;
        let oracle = rf_power_oracle(&ls, &pc, &served, self.draws, self.seed, j as u32)?;
        let mut rows = Vec::new();
        let shape = format!(
            "L{} N{} K{} P{}",
            ls.num_aps, ls.antennas, ls.num_ues, ls.pilots.tau_p
        );
        for k in 0..ls.num_ues {
            let est = &oracle[k];
            let detail = format!("ue {k} {shape}");
            rows.push(self.row(
                j,
                Term::MeanRfPower,
                detail.clone(),
                closed_mean[k],
                est.mean,
                est.standard_error,
            ));
            rows.push(self.row(
                j,
                Term::VarRfPower,
                detail,
                moments[k].1,
                est.variance,
                est.variance_standard_error,
            ));
        }
        if !self.include_terms {
            return Ok(rows);
        }
        let k = 0;
        let i = ls.pilots.sharing_sets[k]
            .iter()
            .copied()
            .rfind(|&i| i != k)
            .unwrap_or(ls.num_ues - 1);
        let mut rng = substream(self.seed, Domain::Kernel, j as u32, 0);
        let same = quadform_oracle(&ls, k, i, 0, 0, self.draws, &mut rng)?;
        let detail = format!("k{k} i{i} l0");
        rows.push(self.row(
            j,
            Term::QuadformSameAp,
            detail.clone(),
            closedform::quadform_mean_same_ap(&ls, k, i, 0),
            same.mean.re,
            same.mean_se.0,
        ));
        rows.push(self.row(
            j,
            Term::UpsilonCoh,
            detail,
            closedform::upsilon_coh(&ls, k, i, 0),
            same.variance,
            same.variance_se,
        ));
        if ls.num_aps >= 2 {
            let mut rng = substream(
                self.seed,
                Domain::Kernel,
                j as u32,
                1 + Term::QuadformCrossAp.id(),
            );
            let cross = quadform_oracle(&ls, k, i, 0, 1, self.draws, &mut rng)?;
            let value = closedform::quadform_mean_cross_ap(&ls, k, i, 0, 1)?;
            let detail = format!("k{k} i{i} l0 l1");
            rows.push(self.row(
                j,
                Term::QuadformCrossAp,
                format!("{detail} re"),
                value.re,
                cross.mean.re,
                cross.mean_se.0,
            ));
            rows.push(self.row(
                j,
                Term::QuadformCrossAp,
                format!("{detail} im"),
                value.im,
                cross.mean.im,
                cross.mean_se.1,
            ));
            rows.push(self.row(
                j,
                Term::UpsilonNoncoh,
                detail,
                closedform::upsilon_noncoh(&ls, k, i, 0, 1)?,
                cross.variance,
                cross.variance_se,
            ));
        }
        Ok(rows)
    }
}
