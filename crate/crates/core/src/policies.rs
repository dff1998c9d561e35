//! Open-loop actuation policies.
//!
//! A policy is compiled into a list of [`ActuationPhase`]s, one per cable
//! firing. Each phase ramps its cable linearly from neutral to
//! `1 - contraction`, holds, then ramps back. The three policy kinds differ
//! only in how consecutive phases are spaced:
//!
//! * `Single`: a phase starts after the previous one is back at neutral and
//!   the robot has dwelt there for `dwell_time`.
//! * `Simultaneous`: the next cable starts contracting `overlap` seconds
//!   before the current one starts releasing, so the two ramps cross.
//! * `Alternating`: the next cable contracts fully while the current one is
//!   held; both stay contracted for `overlap` seconds, then the current one
//!   releases and the next holds alone for the rest of `hold_time`.
//!
//! No kind ever has more than two cables away from neutral.

use serde::{Deserialize, Serialize};

use nalgebra::Vector2;

use crate::dynamics::SimState;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::stability::{quasi_static_probe, ProbeOutcome};
use crate::topology::ACTUATOR_COUNT;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Single,
    Simultaneous,
    Alternating,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::Single, PolicyKind::Simultaneous, PolicyKind::Alternating];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Single => "single",
            PolicyKind::Simultaneous => "simultaneous",
            PolicyKind::Alternating => "alternating",
        }
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "single" => Ok(PolicyKind::Single),
            "simultaneous" => Ok(PolicyKind::Simultaneous),
            "alternating" => Ok(PolicyKind::Alternating),
            other => Err(Error::InvalidPolicy(format!("unknown policy kind {other:?}"))),
        }
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Timing parameters (seconds) and contraction depth of a policy.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyParams {
    /// Fraction of neutral length removed at full contraction.
    pub contraction: f64,
    pub ramp_time: f64,
    pub hold_time: f64,
    /// Ramp/hold overlap between consecutive phases; `None` picks the
    /// kind's default (`ramp_time` for simultaneous, `hold_time / 2` for
    /// alternating). Ignored by the single policy.
    pub overlap: Option<f64>,
    /// Neutral dwell between single-cable phases.
    pub dwell_time: f64,
}

impl Default for PolicyParams {
    fn default() -> Self {
        PolicyParams { contraction: 0.75, ramp_time: 2.0, hold_time: 3.0, overlap: None, dwell_time: 2.0 }
    }
}

impl PolicyParams {
    pub fn overlap_for(&self, kind: PolicyKind) -> f64 {
        self.overlap.unwrap_or(match kind {
            PolicyKind::Single => 0.0,
            PolicyKind::Simultaneous => self.ramp_time,
            PolicyKind::Alternating => self.hold_time / 2.0,
        })
    }

    /// Rest-length slew rate (fraction of neutral length per second) implied
    /// by the ramps.
    pub fn slew_rate(&self) -> f64 {
        self.contraction / self.ramp_time
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ActuationPhase {
    pub cable: usize,
    pub t_contract_start: f64,
    pub t_full: f64,
    pub t_release_start: f64,
    pub t_neutral: f64,
    pub contraction: f64,
}

impl ActuationPhase {
    /// Commanded fraction of neutral rest length at time `t`.
    pub fn fraction_at(&self, t: f64) -> f64 {
        let depth = if t <= self.t_contract_start || t >= self.t_neutral {
            0.0
        } else if t < self.t_full {
            (t - self.t_contract_start) / (self.t_full - self.t_contract_start)
        } else if t <= self.t_release_start {
            1.0
        } else {
            (self.t_neutral - t) / (self.t_neutral - self.t_release_start)
        };
        1.0 - self.contraction * depth
    }

    pub fn is_active(&self, t: f64) -> bool {
        t > self.t_contract_start && t < self.t_neutral
    }

    pub fn is_full(&self, t: f64) -> bool {
        t >= self.t_full && t <= self.t_release_start
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PolicySchedule {
    pub kind: PolicyKind,
    pub params: PolicyParams,
    /// Actuated cables in gait order; `targets_at` reports in this order.
    pub sequence: Vec<usize>,
    pub phases: Vec<ActuationPhase>,
    /// Time between the starts of the first phases of consecutive cycles.
    pub cycle_period: f64,
    pub repeat_count: usize,
}

/// Compiles `kind` over the gait `sequence`, repeated `repeats` times.
pub fn compile_policy(
    kind: PolicyKind,
    params: &PolicyParams,
    sequence: &[usize],
    repeats: usize,
) -> Result<PolicySchedule> {
    let PolicyParams { contraction: c, ramp_time: ramp, hold_time: hold, dwell_time: dwell, .. } = *params;
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::InvalidPolicy(format!("contraction {c} not in (0, 1)")));
    }
    if !(ramp > 0.0) || !(hold > 0.0) {
        return Err(Error::InvalidPolicy("ramp and hold times must be positive".into()));
    }
    if !(dwell >= 0.0) {
        return Err(Error::InvalidPolicy("dwell time must be non-negative".into()));
    }
    if sequence.is_empty() {
        return Err(Error::InvalidPolicy("empty gait sequence".into()));
    }
    let overlap = params.overlap_for(kind);
    // (spacing between phase starts, time the cable stays fully contracted)
    let (spacing, full_time) = match kind {
        PolicyKind::Single => (2.0 * ramp + hold + dwell, hold),
        PolicyKind::Simultaneous => {
            if !(overlap > 0.0 && overlap <= ramp) {
                return Err(Error::InvalidPolicy(format!(
                    "simultaneous overlap must lie in (0, ramp_time], got {overlap}"
                )));
            }
            (2.0 * ramp + hold - overlap, hold)
        }
        PolicyKind::Alternating => {
            if !(overlap > 0.0 && overlap < hold) {
                return Err(Error::InvalidPolicy(format!(
                    "alternating overlap must lie in (0, hold_time), got {overlap}"
                )));
            }
            (2.0 * ramp + hold, 2.0 * ramp + hold + overlap)
        }
    };
    let n = sequence.len();
    let phases = (0..repeats * n)
        .map(|k| {
            let start = k as f64 * spacing;
            ActuationPhase {
                cable: sequence[k % n],
                t_contract_start: start,
                t_full: start + ramp,
                t_release_start: start + ramp + full_time,
                t_neutral: start + 2.0 * ramp + full_time,
                contraction: c,
            }
        })
        .collect();
    let schedule = PolicySchedule {
        kind,
        params: params.clone(),
        sequence: sequence.to_vec(),
        phases,
        cycle_period: spacing * n as f64,
        repeat_count: repeats,
    };
    Ok(schedule)
}

impl PolicySchedule {
    /// End of the last phase.
    pub fn duration(&self) -> f64 {
        self.phases.iter().map(|p| p.t_neutral).fold(0.0, f64::max)
    }

    pub fn step_period(&self) -> f64 {
        self.cycle_period / self.sequence.len() as f64
    }

    /// Commanded fractions for every cable of `sequence` at time `t`.
    pub fn targets_at(&self, t: f64) -> Vec<f64> {
        let mut out = vec![1.0; self.sequence.len()];
        self.targets_into(t, &mut out);
        out
    }

    pub fn targets_into(&self, t: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|f| *f = 1.0);
        // phases are ordered by start time; skip those that ended long ago
        let first = self.phases.partition_point(|p| p.t_neutral < t);
        for p in &self.phases[first..] {
            if p.t_contract_start >= t {
                break;
            }
            if let Some(slot) = self.sequence.iter().position(|&c| c == p.cable) {
                out[slot] = out[slot].min(p.fraction_at(t));
            }
        }
    }

    /// Index into `phases` of the phase most recently started at `t`.
    pub fn current_phase(&self, t: f64) -> Option<usize> {
        let n = self.phases.partition_point(|p| p.t_contract_start <= t);
        n.checked_sub(1)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schedule serializes")
    }

    /// Per-cable timeline as CSV: `t` followed by one column per cable.
    pub fn timeline_csv(&self, sample_dt: f64) -> String {
        let mut out = String::from("t");
        for c in &self.sequence {
            out.push_str(&format!(",cable_{c}"));
        }
        out.push('\n');
        let steps = (self.duration() / sample_dt).ceil() as usize;
        for i in 0..=steps {
            let t = i as f64 * sample_dt;
            out.push_str(&format!("{t:.4}"));
            for f in self.targets_at(t) {
                out.push_str(&format!(",{f:.6}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Among `candidates`, the cable whose quasi-static full contraction tips the
/// settled `state` furthest along `direction`. Fails with
/// [`Error::NoStepAvailable`] if none of them tips it forward.
pub fn find_step_cable_among<T: Real>(state: &SimState<T>, direction: &Vector2<T>, candidates: &[usize]) -> Result<usize> {
    let fraction = 1.0 - state.params.max_contraction;
    let mut best: Option<(usize, T)> = None;
    for &cable in candidates {
        let probe = quasi_static_probe(state, cable, fraction, direction)?;
        if probe.outcome != ProbeOutcome::TippedForward {
            continue;
        }
        if best.is_none_or(|(_, a)| probe.advance > a) {
            best = Some((cable, probe.advance));
        }
    }
    best.map(|(c, _)| c).ok_or(Error::NoStepAvailable)
}

/// [`find_step_cable_among`] over the actuated cables.
pub fn find_step_cable<T: Real>(state: &SimState<T>, direction: &Vector2<T>) -> Result<usize> {
    let actuated = state.topology.actuated_cables.clone();
    find_step_cable_among(state, direction, &actuated)
}

/// A gait found by greedy step search.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GaitDerivation {
    /// Cables in firing order.
    pub sequence: Vec<usize>,
    /// Faces the robot rests on before each step, then after the last one.
    pub faces: Vec<usize>,
    /// Heading of the net CoM displacement over the cycle, degrees from `+x`.
    pub drift_deg: f64,
}

/// Greedily builds a six-cable gait from the robot settled on `state`'s face:
/// each step picks, among cables not yet used, the one that tips the robot
/// furthest along `+x`, then releases it and lets the robot settle.
pub fn derive_gait<T: Real>(state: &SimState<T>) -> Result<GaitDerivation> {
    let direction = Vector2::x();
    let mut s = state.clone();
    let mut remaining: Vec<usize> = (0..s.cables.len()).collect();
    let mut sequence = Vec::with_capacity(ACTUATOR_COUNT);
    let mut faces = vec![s.supporting_face().ok_or(Error::DegenerateSupport("not resting on a face".into()))?];
    let start = s.total_com();
    let fraction = 1.0 - s.params.max_contraction;
    for _ in 0..ACTUATOR_COUNT {
        let cable = find_step_cable_among(&s, &direction, &remaining)?;
        remaining.retain(|&c| c != cable);
        sequence.push(cable);
        let tipped = quasi_static_probe(&s, cable, fraction, &direction)?;
        s = quasi_static_probe(&tipped.state, cable, 1.0, &direction)?.state;
        faces.push(s.supporting_face().ok_or(Error::DegenerateSupport("step ended off a face".into()))?);
    }
    let drift = s.total_com() - start;
    Ok(GaitDerivation { sequence, faces, drift_deg: drift.y.to_f64_lossy().atan2(drift.x.to_f64_lossy()).to_degrees() })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SEQ: [usize; 6] = [2, 12, 21, 19, 11, 1];

    fn schedule(kind: PolicyKind) -> PolicySchedule {
        compile_policy(kind, &PolicyParams::default(), &SEQ, 2).unwrap()
    }

    fn sample_times(s: &PolicySchedule) -> impl Iterator<Item = f64> + '_ {
        let n = (s.duration() / 0.01) as usize;
        (0..=n).map(|i| i as f64 * 0.01)
    }

    #[test]
    fn starts_neutral() {
        for kind in PolicyKind::ALL {
            assert!(schedule(kind).targets_at(0.0).iter().all(|&f| f == 1.0));
        }
    }

    #[test]
    fn single_has_one_cable_at_a_time() {
        let s = schedule(PolicyKind::Single);
        for t in sample_times(&s) {
            assert!(s.targets_at(t).iter().filter(|&&f| f < 1.0).count() <= 1, "t = {t}");
        }
        let p = &s.phases[0];
        let f = s.targets_at(p.t_full);
        assert!((f[0] - 0.25).abs() < 1e-12);
        assert!(f[1..].iter().all(|&x| x == 1.0));
    }

    #[test]
    fn alternating_has_two_full_never_three() {
        let s = schedule(PolicyKind::Alternating);
        let mut saw_two = false;
        for t in sample_times(&s) {
            let full = s.phases.iter().filter(|p| p.is_full(t)).count();
            assert!(full <= 2, "t = {t}");
            saw_two |= full == 2;
        }
        assert!(saw_two);
    }

    #[test]
    fn at_most_two_cables_away_from_neutral() {
        for kind in PolicyKind::ALL {
            for ramp in [0.5, 1.0, 3.0] {
                let params = PolicyParams { ramp_time: ramp, ..Default::default() };
                let s = compile_policy(kind, &params, &SEQ, 2).unwrap();
                for t in sample_times(&s) {
                    let active = s.targets_at(t).iter().filter(|&&f| f < 1.0).count();
                    assert!(active <= 2, "{kind} ramp {ramp} t = {t}");
                }
            }
        }
    }

    #[test]
    fn simultaneous_ramps_cross_without_gaps() {
        let s = schedule(PolicyKind::Simultaneous);
        for w in s.phases.windows(2) {
            assert!(w[1].t_contract_start < w[0].t_neutral);
            assert!(w[1].t_full > w[0].t_release_start);
        }
        let end = s.phases.last().unwrap().t_release_start;
        for t in sample_times(&s).filter(|&t| t > 0.0 && t < end) {
            assert!(s.targets_at(t).iter().any(|&f| f < 1.0), "gap at t = {t}");
        }
    }

    #[test]
    fn simultaneous_cycle_is_shorter_than_single() {
        for dwell in [0.0, 0.5] {
            let params = PolicyParams { dwell_time: dwell, ..Default::default() };
            let single = compile_policy(PolicyKind::Single, &params, &SEQ, 1).unwrap();
            let simul = compile_policy(PolicyKind::Simultaneous, &params, &SEQ, 1).unwrap();
            assert!(simul.cycle_period < single.cycle_period);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let bad = |p: PolicyParams, kind| compile_policy(kind, &p, &SEQ, 1).is_err();
        assert!(bad(PolicyParams { overlap: Some(0.0), ..Default::default() }, PolicyKind::Alternating));
        assert!(bad(PolicyParams { overlap: Some(-1.0), ..Default::default() }, PolicyKind::Simultaneous));
        assert!(bad(PolicyParams { contraction: 0.0, ..Default::default() }, PolicyKind::Single));
        assert!(bad(PolicyParams { contraction: 1.0, ..Default::default() }, PolicyKind::Single));
        assert!(bad(PolicyParams { ramp_time: 0.0, ..Default::default() }, PolicyKind::Single));
        assert!(compile_policy(PolicyKind::Single, &PolicyParams::default(), &[], 1).is_err());
    }

    #[test]
    fn targets_are_continuous() {
        for kind in PolicyKind::ALL {
            let s = schedule(kind);
            let dt = 5e-4;
            let max_jump = s.params.slew_rate() * dt * (1.0 + 1e-9);
            let n = (s.duration() / dt) as usize;
            let mut prev = s.targets_at(0.0);
            for i in 1..=n {
                let cur = s.targets_at(i as f64 * dt);
                for (a, b) in prev.iter().zip(&cur) {
                    assert!((a - b).abs() <= max_jump + 1e-12, "{kind} jump at step {i}");
                }
                prev = cur;
            }
        }
    }

    #[test]
    fn periodic_after_first_cycle() {
        for kind in PolicyKind::ALL {
            let s = compile_policy(kind, &PolicyParams::default(), &SEQ, 3).unwrap();
            let p = s.cycle_period;
            for i in 0..200 {
                let t = p + p * i as f64 / 200.0;
                let (a, b) = (s.targets_at(t), s.targets_at(t + p));
                for (x, y) in a.iter().zip(&b) {
                    assert!((x - y).abs() < 1e-9, "{kind} t = {t}");
                }
            }
        }
    }

    #[test]
    fn kind_parses() {
        assert_eq!("Alternating".parse::<PolicyKind>().unwrap(), PolicyKind::Alternating);
        assert!("double".parse::<PolicyKind>().is_err());
    }
}
