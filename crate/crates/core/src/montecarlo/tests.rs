use super::validation::{random_instance, Corruption, Term, ValidationSuite};
use super::*;
use crate::closedform;
use crate::experiment::Scenario;

fn small_config() -> SystemConfig {
    SystemConfig {
        num_aps: 4,
        num_ues: 6,
        antennas: 8,
        seed: 11,
        ..Default::default()
    }
}

#[test]
fn run_is_independent_of_worker_count() {
    let s = Scenario::build(&small_config(), 0).unwrap();
    let engine = Engine::new(&s.config, &s.ls, &s.pc, 0).unwrap();
    let a = engine.run(300, 1).unwrap();
    for w in [2, 4, 8] {
        let b = engine.run(300, w).unwrap();
        assert_eq!(a.received, b.received);
        assert_eq!(a.harvested, b.harvested);
        assert_eq!(a.delta, b.delta);
    }
}

#[test]
fn zero_intervals() {
    let s = Scenario::build(&small_config(), 0).unwrap();
    let r = Engine::new(&s.config, &s.ls, &s.pc, 0)
        .unwrap()
        .run(0, 2)
        .unwrap();
    assert!(r.received.is_empty() && r.harvested_of(0).is_empty());
    assert!(matches!(median_energy_user(&r), Err(Error::EmptySamples)));
}

#[test]
fn run_layout_and_delta() {
    let s = Scenario::build(&small_config(), 1).unwrap();
    let r = Engine::new(&s.config, &s.ls, &s.pc, 1)
        .unwrap()
        .run(50, 3)
        .unwrap();
    assert_eq!(r.received.len(), 50 * 6);
    let h = r.harvested_of(2);
    let d = r.delta_of(2);
    assert_eq!(h.len(), 50);
    for (e, x) in h.iter().zip(&d) {
        assert_eq!(*x, e - r.consumed);
        assert!(*e >= 0.0 && *e <= s.config.tau_h_seconds() * s.config.circuit.i_max);
    }
    assert_eq!(r.metadata.config_hash, s.config.hash_hex());
}

#[test]
fn different_topologies_use_different_streams() {
    let s = Scenario::build(&small_config(), 0).unwrap();
    let a = Engine::new(&s.config, &s.ls, &s.pc, 0)
        .unwrap()
        .run(5, 1)
        .unwrap();
    let b = Engine::new(&s.config, &s.ls, &s.pc, 1)
        .unwrap()
        .run(5, 1)
        .unwrap();
    assert_ne!(a.received, b.received);
}

#[test]
fn empirical_cdf_examples() {
    let f = empirical_cdf(&[3.0, 1.0, 2.0, 2.0]).unwrap();
    assert_eq!(f.support(), &[1.0, 2.0, 2.0, 3.0]);
    assert_eq!(f.eval(0.5), 0.0);
    assert_eq!(f.eval(1.0), 0.25);
    assert_eq!(f.eval(2.0), 0.75);
    assert_eq!(f.eval(10.0), 1.0);
    assert!(matches!(empirical_cdf(&[]), Err(Error::EmptySamples)));
    // uniform samples against the uniform CDF
    let g = empirical_cdf(&[0.5]).unwrap();
    assert_eq!(g.ks_distance(|x| x.clamp(0.0, 1.0)), 0.5);
    let h = empirical_cdf(&[0.25, 0.75]).unwrap();
    assert!((h.ks_distance(|x| x.clamp(0.0, 1.0)) - 0.25).abs() < 1e-15);
}

#[test]
fn median_examples() {
    assert_eq!(median_index(&[5.0, 1.0, 3.0]), 2);
    assert_eq!(median_index(&[4.0, 1.0, 3.0, 2.0]), 3);
    assert_eq!(median_index(&[2.0, 2.0, 2.0]), 1);
    assert_eq!(median_index(&[7.0]), 0);
}

#[test]
fn oracle_mean_matches_closed_form_default_scenario() {
    let s = Scenario::build(&SystemConfig::default(), 0).unwrap();
    let served: Vec<usize> = (0..s.ls.num_ues).collect();
    let closed = closedform::mean_rf_power(&s.ls, &s.pc, &served).unwrap();
    let est = rf_power_oracle(&s.ls, &s.pc, &served, 20_000, 3, 0).unwrap();
    for (c, e) in closed.iter().zip(&est) {
        assert!(
            (c - e.mean).abs() < 4.0 * e.standard_error,
            "{c} vs {} +- {}",
            e.mean,
            e.standard_error
        );
    }
}

#[test]
fn oracle_is_deterministic() {
    let inst = random_instance(&mut substream(1, Domain::Instance, 0, 0));
    let a = rf_power_oracle(&inst.ls, &inst.pc, &[0], 20_000, 9, 2).unwrap();
    let b = rf_power_oracle(&inst.ls, &inst.pc, &[0], 20_000, 9, 2).unwrap();
    assert_eq!(a, b);
    assert_eq!(a[0].count, 20_000);
}

#[test]
fn validation_passes_and_detects_corruption() {
    let suite = ValidationSuite {
        instances: 4,
        draws: 100_000,
        seed: 5,
        include_terms: true,
        corrupt: None,
    };
    let report = suite.run().unwrap();
    assert!(report.all_pass(), "{}", report.table());
    let bad = ValidationSuite {
        corrupt: Some(Corruption {
            term: Term::MeanRfPower,
            factor: 1.1,
        }),
        ..suite
    };
    let report = bad.run().unwrap();
    assert!(!report.all_pass());
    assert!(report.failures().all(|r| r.term == Term::MeanRfPower));
}
