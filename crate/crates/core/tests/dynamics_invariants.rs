//! Conservation, contact and determinism properties of the integrator.

use std::sync::Arc;

use nalgebra::Vector3;
use proptest::prelude::*;
use sixbar_core::dynamics::SimState;
use sixbar_core::harness::{run_trial, ScenarioConfig};
use sixbar_core::params::{RobotParams, WorldConfig};
use sixbar_core::policies::PolicyKind;
use sixbar_core::topology::build_six_bar;
use sixbar_core::Sim;

/// Robot far above the plane with gravity and drag off, so cables and the
/// payload suspension are the only forces.
fn free_flight(spin: [f64; 6]) -> Sim {
    let params = RobotParams { body_drag: 0.0, ..RobotParams::default() };
    let world = WorldConfig { gravity: 0.0, ..WorldConfig::default() };
    let topology = Arc::new(build_six_bar(params.rod_length).unwrap());
    let mut s = SimState::new(topology, params, world).unwrap();
    s.transform(&nalgebra::UnitQuaternion::identity(), &Vector3::new(0.0, 0.0, 500.0));
    for (k, rod) in s.rods.iter_mut().enumerate() {
        let w = spin[k];
        rod.linear_velocity = Vector3::new(w, -0.5 * w, 0.3 * w);
        rod.angular_velocity = Vector3::new(0.2 * w, w, -0.1 * w);
    }
    s.payload.velocity = Vector3::new(1.0, 2.0, -1.5);
    s
}

fn relative_drift(a: Vector3<f64>, b: Vector3<f64>) -> f64 {
    (a - b).norm() / a.norm().max(b.norm())
}

#[test]
fn momentum_conserved_in_free_flight() {
    let mut s = free_flight([3.0, -2.0, 1.5, -4.0, 2.5, -1.0]);
    let p0 = s.linear_momentum();
    let mut stretched = false;
    for _ in 0..1000 {
        s.step_mut().unwrap();
        stretched |= s.cables.iter().any(|c| c.current_tension > 0.0);
        assert!(s.contact_set.is_empty());
    }
    assert!(stretched, "no internal force was exercised");
    let drift = relative_drift(p0, s.linear_momentum());
    assert!(drift <= 1e-6, "linear momentum drifted by {drift:e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn momentum_conserved_for_any_motion(spin in prop::array::uniform6(-5.0f64..5.0)) {
        prop_assume!(spin.iter().any(|w| w.abs() > 0.5));
        let mut s = free_flight(spin);
        let p0 = s.linear_momentum();
        for _ in 0..1000 {
            s.step_mut().unwrap();
        }
        prop_assert!(relative_drift(p0, s.linear_momentum()) <= 1e-6);
    }
}

/// Every step of a minute of climbing keeps contact forces inside the
/// friction cone, normal forces compressive and cables in tension only.
#[test]
fn contact_and_cable_invariants_hold_every_step() {
    for policy in PolicyKind::ALL {
        let config = ScenarioConfig::default().with_policy(policy).with_incline(10.0);
        let mut state = config.initial_state(0).unwrap();
        let schedule = config.schedule().unwrap();
        state.rest_length_rate = Some(config.policy_params.slew_rate() * state.topology.cable_rest_length);
        let mu = config.world.friction_coefficient;
        let mut fractions = vec![1.0; config.gait.len()];
        let t0 = state.time;
        let mut sliding_seen = false;
        while state.time - t0 < 60.0 {
            schedule.targets_into(state.time - t0, &mut fractions);
            state.apply_cable_targets(&fractions).unwrap();
            state.step_mut().unwrap();
            for (node, f) in state.contact_forces.iter().enumerate() {
                assert!(f.normal >= 0.0, "{policy} t={}: node {node} pulled into the plane", state.time);
                assert!(
                    f.tangential.norm() <= mu * f.normal * (1.0 + 1e-9) + 1e-12,
                    "{policy} t={}: node {node} friction {} over cone {}",
                    state.time,
                    f.tangential.norm(),
                    mu * f.normal
                );
                sliding_seen |= f.sliding;
            }
            for (i, c) in state.cables.iter().enumerate() {
                assert!(c.current_tension >= 0.0, "{policy} t={}: cable {i} pushes", state.time);
            }
        }
        // rolling scuffs the feet, so the cone boundary is actually exercised
        assert!(sliding_seen, "{policy}: no contact ever reached the friction limit");
    }
}

#[test]
fn identical_configs_give_bit_identical_trials() {
    let config = ScenarioConfig { duration: 60.0, ..ScenarioConfig::default() }
        .with_policy(PolicyKind::Alternating)
        .with_incline(10.0);
    let a = run_trial(&config).unwrap();
    let b = run_trial(&config).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let bits = |r: &sixbar_core::harness::TrialResult| -> Vec<u64> {
        r.com_trace.iter().flat_map(|s| s.com).map(f64::to_bits).collect()
    };
    assert_eq!(bits(&a), bits(&b));
}

#[test]
fn trials_are_independent_of_thread_scheduling() {
    let config = ScenarioConfig { duration: 30.0, ..ScenarioConfig::default() }.with_incline(6.0);
    let serial = run_trial(&config).unwrap();
    let parallel: Vec<_> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..3).map(|_| scope.spawn(|| run_trial(&config).unwrap())).collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    for r in parallel {
        assert_eq!(r, serial);
    }
}
