//! Stance and failure behaviour of whole trials.

use sixbar_core::harness::{run_trial, ScenarioConfig};
use sixbar_core::policies::{PolicyKind, PolicySchedule};
use sixbar_core::stability::FailureMode;
use sixbar_core::Sim;

/// Runs `config`'s schedule for `horizon` seconds and reports the contact
/// count at each requested time.
fn contacts_at(config: &ScenarioConfig, horizon: f64, times: impl Fn(&PolicySchedule) -> Vec<f64>) -> Vec<(f64, usize)> {
    let mut state: Sim = config.initial_state(0).unwrap();
    let schedule = config.schedule().unwrap();
    state.rest_length_rate = Some(config.policy_params.slew_rate() * state.topology.cable_rest_length);
    let mut probes: Vec<f64> = times(&schedule).into_iter().filter(|t| *t < horizon).collect();
    probes.reverse();
    let mut fractions = vec![1.0; config.gait.len()];
    let mut out = Vec::new();
    let t0 = state.time;
    while let Some(&next) = probes.last() {
        let t = state.time - t0;
        if t >= next {
            out.push((next, state.contact_set.len()));
            probes.pop();
            continue;
        }
        schedule.targets_into(t, &mut fractions);
        state.apply_cable_targets(&fractions).unwrap();
        state.step_mut().unwrap();
    }
    out
}

#[test]
fn two_cable_holds_rest_on_four_contacts() {
    for theta in [0.0, 10.0] {
        let config = ScenarioConfig::default().with_policy(PolicyKind::Alternating).with_incline(theta);
        // end of each hold: phase k still full, phase k + 1 already full
        let holds = contacts_at(&config, 60.0, |s| {
            s.phases.windows(2).map(|w| w[0].t_release_start - 1e-3).filter(|&t| t > 0.0).collect()
        });
        assert!(holds.len() >= 5);
        for (t, n) in holds {
            assert_eq!(n, 4, "theta {theta}: {n} contacts at the hold ending {t:.2}");
        }
    }
}

#[test]
fn neutral_dwell_rests_on_three_contacts() {
    for theta in [0.0, 10.0] {
        let config = ScenarioConfig::default().with_policy(PolicyKind::Single).with_incline(theta);
        let dwells = contacts_at(&config, 60.0, |s| {
            s.phases.windows(2).map(|w| 0.5 * (w[0].t_neutral + w[1].t_contract_start)).collect()
        });
        assert!(dwells.len() >= 5);
        for (t, n) in dwells {
            assert_eq!(n, 3, "theta {theta}: {n} contacts in the dwell around {t:.2}");
        }
    }
}

#[test]
fn beyond_the_slip_bound_every_policy_slips() {
    for policy in PolicyKind::ALL {
        let config = ScenarioConfig::default().with_policy(policy).with_incline(30.0);
        assert_eq!(config.world.friction_coefficient, 0.49);
        let r = run_trial(&config).unwrap();
        assert!(!r.success);
        assert_eq!(r.failure_mode, FailureMode::Slipped, "{policy}");
    }
}

#[test]
fn flat_ground_trials_succeed_for_every_policy() {
    for policy in PolicyKind::ALL {
        let config = ScenarioConfig::default().with_policy(policy);
        let r = run_trial(&config).unwrap();
        assert!(r.success, "{policy}: {:?}", r.failure_mode);
        assert!(r.distance_along_incline >= config.success_distance);
        assert!(r.step_count >= 6, "{policy}: {} steps", r.step_count);
    }
}
