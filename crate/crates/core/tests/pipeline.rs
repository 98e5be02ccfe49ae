//! Full-pipeline checks of the analytical statistics at the default
//! configuration against simulated coherence intervals.

use cellfree_eh::experiment::{simulate, PointResult, Scenario};
use cellfree_eh::montecarlo::Moments;
use cellfree_eh::SystemConfig;

const INTERVALS: usize = 2000;

fn default_point() -> PointResult {
    simulate(
        Scenario::build(&SystemConfig::default(), 0).unwrap(),
        INTERVALS,
        1,
    )
    .unwrap()
}

#[test]
fn received_power_moments_match_simulation() {
    let r = default_point();
    for k in 0..r.run.num_ues {
        let m: Moments = r.run.received_of(k).into_iter().collect();
        let est = m.estimate();
        let a = &r.analytical[k];
        assert!(
            (a.mean_i - est.mean).abs() < 4.0 * est.standard_error,
            "UE {k}: mean"
        );
        assert!(
            (a.var_i - est.variance).abs() < 4.0 * est.variance_standard_error,
            "UE {k}: variance"
        );
    }
}

#[test]
fn harvested_energy_mean_matches_simulation() {
    let r = default_point();
    for k in 0..r.run.num_ues {
        let m: Moments = r.run.harvested_of(k).into_iter().collect();
        let est = m.estimate();
        assert!(
            (r.analytical[k].mean_e - est.mean).abs() < 4.0 * est.standard_error,
            "UE {k}"
        );
    }
}

#[test]
#[ignore = "known gap: the second-order variance is about twice the simulated one when the mean input is far below the turning point"]
fn harvested_energy_variance_within_25_percent() {
    let r = default_point();
    for k in 0..r.run.num_ues {
        let (a, e) = (r.analytical[k].var_e, r.empirical[k].var_e);
        assert!(
            (a - e).abs() <= 0.25 * e,
            "UE {k}: analytic {a:e}, simulated {e:e}"
        );
    }
}

#[test]
fn empirical_statistics_are_consistent() {
    let r = default_point();
    let tau_h = r.scenario.config.tau_h_seconds();
    let cap = tau_h * r.scenario.config.circuit.i_max;
    for k in 0..r.run.num_ues {
        let h = r.run.harvested_of(k);
        assert!(h.iter().all(|&e| (0.0..=cap).contains(&e)));
        assert!(r.fits[k].shape > 0.0 && r.fits[k].scale > 0.0);
        let t = r.chains[k].triple;
        assert!((t.down + t.stay + t.up - 1.0).abs() < 1e-15);
    }
    let means: Vec<f64> = r.empirical.iter().map(|s| s.mean_e).collect();
    let below = means.iter().filter(|&&m| m < means[r.median_ue]).count();
    assert_eq!(below, (means.len() - 1) / 2);
}
