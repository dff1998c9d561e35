//! Scenario runner: single trials, incline sweeps, the locomotion metrics and
//! the result files.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use nalgebra::Vector2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{init_resting, SettleOptions, SimState};
use crate::error::{Error, Result};
use crate::params::{RobotParams, WorldConfig};
use crate::policies::{compile_policy, PolicyKind, PolicyParams, PolicySchedule};
use crate::stability::{
    classify_failure, margins_csv, quasi_static_probe, required_contraction, required_contraction_csv, state_margins,
    FaceChange, FailureMode, ProbeOutcome, RequiredContraction, StabilityMargins, TrialTrace, SLIP_LIMIT,
};
use crate::topology::{build_six_bar, TensegrityTopology, DEFAULT_GAIT, DEFAULT_START_FACE, FACE_COUNT};

/// Distance a trial must cover uphill to count as a success (cm).
pub const DEFAULT_SUCCESS_DISTANCE: f64 = 91.4;

/// A face must carry the robot this long (s) before a face change counts.
const FACE_DEBOUNCE: f64 = 0.1;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub robot: RobotParams,
    pub world: WorldConfig,
    pub policy: PolicyKind,
    pub policy_params: PolicyParams,
    pub gait: Vec<usize>,
    pub start_face: usize,
    /// Start heading about the plane normal (degrees).
    pub start_yaw_deg: f64,
    /// Simulated time available to cover `success_distance` (s).
    pub duration: f64,
    pub success_distance: f64,
    pub seed: u64,
    /// Repetitions per incline in a sweep.
    pub trials: usize,
    /// Each trial's start heading is jittered uniformly by up to this (degrees).
    pub yaw_jitter_deg: f64,
    /// Sampling interval of the recorded traces (s).
    pub trace_interval: f64,
    pub output_dir: Option<PathBuf>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            robot: RobotParams::default(),
            world: WorldConfig::default(),
            policy: PolicyKind::Single,
            policy_params: PolicyParams::default(),
            gait: DEFAULT_GAIT.to_vec(),
            start_face: DEFAULT_START_FACE,
            start_yaw_deg: 0.0,
            duration: 240.0,
            success_distance: DEFAULT_SUCCESS_DISTANCE,
            seed: 0,
            trials: 5,
            yaw_jitter_deg: 2.0,
            trace_interval: 0.01,
            output_dir: None,
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ScenarioConfig =
            serde_json::from_str(text).map_err(|e| Error::InvalidParameter(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.robot.validate()?;
        self.world.validate()?;
        if !(self.success_distance > 0.0) {
            return Err(Error::InvalidParameter("success_distance must be positive".into()));
        }
        if !(self.duration > 0.0) {
            return Err(Error::InvalidParameter("duration must be positive".into()));
        }
        if !(self.trace_interval > 0.0) {
            return Err(Error::InvalidParameter("trace_interval must be positive".into()));
        }
        if !(self.yaw_jitter_deg >= 0.0) {
            return Err(Error::InvalidParameter("yaw_jitter_deg must be >= 0".into()));
        }
        if self.start_face >= FACE_COUNT {
            return Err(Error::InvalidParameter(format!("start_face {} out of range", self.start_face)));
        }
        if self.policy_params.contraction > self.robot.max_contraction + 1e-12 {
            return Err(Error::InvalidPolicy(format!(
                "contraction {} exceeds max_contraction {}",
                self.policy_params.contraction, self.robot.max_contraction
            )));
        }
        build_six_bar(self.robot.rod_length)?.with_actuated(self.gait.clone())?;
        compile_policy(self.policy, &self.policy_params, &self.gait, 1)?;
        Ok(())
    }

    pub fn with_policy(mut self, policy: PolicyKind) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_incline(mut self, deg: f64) -> Self {
        self.world.incline_deg = deg;
        self
    }

    pub fn topology(&self) -> Result<TensegrityTopology<f64>> {
        build_six_bar(self.robot.rod_length)?.with_actuated(self.gait.clone())
    }

    pub fn schedule(&self) -> Result<PolicySchedule> {
        let probe = compile_policy(self.policy, &self.policy_params, &self.gait, 1)?;
        let repeats = (self.duration / probe.cycle_period).ceil() as usize + 1;
        compile_policy(self.policy, &self.policy_params, &self.gait, repeats)
    }

    /// Start heading of trial `index` (radians): the configured heading plus
    /// a jitter drawn from the seeded stream of that trial.
    pub fn trial_yaw(&self, index: usize) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        let jitter = if self.yaw_jitter_deg > 0.0 {
            rng.random_range(-self.yaw_jitter_deg..=self.yaw_jitter_deg)
        } else {
            0.0
        };
        (self.start_yaw_deg + jitter).to_radians()
    }

    /// The robot placed on the start face and settled, without actuation.
    pub fn initial_state(&self, index: usize) -> Result<SimState<f64>> {
        let topology = Arc::new(self.topology()?);
        let mut state = SimState::new(topology, self.robot.clone(), self.world.clone())?;
        state.place_on_face(self.start_face, self.trial_yaw(index));
        state.settle(SettleOptions { slip_limit: SLIP_LIMIT * 3.0, ..Default::default() })?;
        Ok(state)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComSample {
    pub t: f64,
    pub com: [f64; 3],
    pub height_pct: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginSample {
    pub t: f64,
    /// `None` while fewer than three non-collinear nodes touch.
    pub margins: Option<StabilityMargins<f64>>,
    pub contacts: usize,
    /// Face the robot is on or rocking over.
    pub face: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub policy: PolicyKind,
    pub incline_deg: f64,
    pub trial: usize,
    /// Uphill CoM displacement at the end of the trial (cm).
    pub distance_along_incline: f64,
    /// Distance over time from the first actuation to the success crossing
    /// (or to the end of the trial).
    pub avg_velocity: f64,
    pub success: bool,
    pub failure_mode: FailureMode,
    /// Set when the simulation itself failed (divergence, settling).
    pub diagnostic: Option<String>,
    /// Number of face changes.
    pub step_count: usize,
    pub elapsed: f64,
    /// CoM height above the plane in the settled neutral stance (cm).
    pub neutral_height: f64,
    /// Peak CoM height (% of neutral) once the gait is under way, i.e. from
    /// the first face change on.
    pub max_com_height_pct: f64,
    pub face_changes: Vec<FaceChange>,
    pub com_trace: Vec<ComSample>,
    pub margin_trace: Vec<MarginSample>,
}

/// Peak of `height / neutral_height` over the trace, in percent.
pub fn com_height_ratio(com_trace: &[ComSample], neutral_height: f64) -> f64 {
    com_trace.iter().map(|s| s.com[2] / neutral_height * 100.0).fold(f64::NAN, f64::max)
}

/// Runs trial 0 of `config`.
pub fn run_trial(config: &ScenarioConfig) -> Result<TrialResult> {
    run_trial_index(config, 0)
}

/// Runs the `index`-th repetition of `config`; repetitions differ only in
/// their seeded start-heading jitter.
pub fn run_trial_index(config: &ScenarioConfig, index: usize) -> Result<TrialResult> {
    config.validate()?;
    let mut result = TrialResult {
        policy: config.policy,
        incline_deg: config.world.incline_deg,
        trial: index,
        distance_along_incline: 0.0,
        avg_velocity: 0.0,
        success: false,
        failure_mode: FailureMode::Stalled,
        diagnostic: None,
        step_count: 0,
        elapsed: 0.0,
        neutral_height: 0.0,
        max_com_height_pct: 0.0,
        face_changes: Vec::new(),
        com_trace: Vec::new(),
        margin_trace: Vec::new(),
    };
    let mut state = match config.initial_state(index) {
        Ok(s) => s,
        Err(Error::Slipped(_)) => {
            result.failure_mode = FailureMode::Slipped;
            return Ok(result);
        }
        Err(e @ (Error::NonConvergence { .. } | Error::Divergence { .. })) => {
            result.diagnostic = Some(format!("initial settle: {e}"));
            return Ok(result);
        }
        Err(e) => return Err(e),
    };
    let schedule = config.schedule()?;
    state.rest_length_rate = Some(config.policy_params.slew_rate() * state.topology.cable_rest_length);

    let origin = state.total_com();
    let neutral_height = origin.z;
    result.neutral_height = neutral_height;
    let t0 = state.time;
    let steps = (config.duration / config.world.timestep).ceil() as usize;
    let mut fractions = vec![1.0; config.gait.len()];
    let mut trace = TrialTrace::default();
    let mut face = state.lowest_face();
    let mut face_x = origin.x;
    let mut candidate: Option<(usize, f64)> = None;
    let mut footing = face_footing(&state, face);
    let mut next_sample = 0.0;

    for i in 0..=steps {
        let t = state.time - t0;
        let com = state.total_com();
        let distance = com.x - origin.x;
        result.distance_along_incline = distance;
        result.elapsed = t;
        if t + 1e-12 >= next_sample || i == steps {
            next_sample += config.trace_interval;
            result.com_trace.push(ComSample { t, com: [com.x, com.y, com.z], height_pct: com.z / neutral_height * 100.0 });
            result.margin_trace.push(MarginSample {
                t,
                margins: state_margins(&state).ok(),
                contacts: state.contact_set.len(),
                face: state.lowest_face(),
            });
        }
        if distance >= config.success_distance {
            trace.success = true;
            break;
        }
        if i == steps {
            break;
        }

        schedule.targets_into(t, &mut fractions);
        state.apply_cable_targets(&fractions)?;
        if let Err(e) = state.step_mut() {
            result.diagnostic = Some(e.to_string());
            break;
        }
        let t = state.time - t0;

        // face tracking
        let lowest = state.lowest_face();
        match (lowest != face).then_some(lowest) {
            Some(f) => match candidate {
                Some((c, since)) if c == f => {
                    if t - since >= FACE_DEBOUNCE {
                        let x = state.total_com().x;
                        trace.face_changes.push(FaceChange { t, from: face, to: f, com_advance: x - face_x });
                        face = f;
                        face_x = x;
                        candidate = None;
                        footing = face_footing(&state, f);
                    }
                }
                _ => candidate = Some((f, t)),
            },
            None => candidate = None,
        }
        if trace.face_changes.last().is_some_and(|c| c.com_advance < 0.0) {
            break;
        }

        if lowest == face && footing_slip(&state, &footing).is_some_and(|s| s > SLIP_LIMIT) {
            trace.slip_time = Some(t);
            break;
        }
    }

    result.success = trace.success;
    result.failure_mode = if result.diagnostic.is_some() && !trace.success {
        FailureMode::Stalled
    } else {
        classify_failure(&trace)
    };
    result.step_count = trace.face_changes.len();
    result.avg_velocity = if result.elapsed > 0.0 { result.distance_along_incline / result.elapsed } else { 0.0 };
    let steady_from = trace.face_changes.first().filter(|c| c.com_advance > 0.0).map_or(0.0, |c| c.t);
    let steady: Vec<ComSample> = result.com_trace.iter().copied().filter(|s| s.t >= steady_from).collect();
    result.max_com_height_pct =
        com_height_ratio(if steady.is_empty() { &result.com_trace } else { &steady }, neutral_height);
    result.face_changes = trace.face_changes;
    Ok(result)
}

/// In-plane positions of a face's nodes when it became the support.
fn face_footing(state: &SimState<f64>, face: usize) -> Vec<(usize, Vector2<f64>)> {
    state.topology.faces[face].iter().map(|&n| (n, state.node_position(n).xy())).collect()
}

/// How far the footing has slid as a whole: the least net in-plane
/// displacement among its nodes. Base deformation and scuffing move some
/// feet but not all of them, so they do not register. `None` unless all
/// three feet are down.
fn footing_slip(state: &SimState<f64>, footing: &[(usize, Vector2<f64>)]) -> Option<f64> {
    if !footing.iter().all(|(n, _)| state.contact_set.contains(n)) {
        return None;
    }
    Some(footing.iter().map(|(n, p0)| (state.node_position(*n).xy() - p0).norm()).fold(f64::INFINITY, f64::min))
}

/// Contacts and margins of one stance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StanceSnapshot {
    pub t: f64,
    pub contacts: Vec<usize>,
    pub margins: Option<StabilityMargins<f64>>,
    pub com_height: f64,
}

impl StanceSnapshot {
    fn of(state: &SimState<f64>, t: f64) -> Self {
        StanceSnapshot {
            t,
            contacts: state.contact_set.clone(),
            margins: state_margins(state).ok(),
            com_height: state.total_com().z,
        }
    }
}

/// The settled neutral stance next to a two-cable hold stance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StanceComparison {
    pub neutral: StanceSnapshot,
    pub two_cable_hold: StanceSnapshot,
}

/// Runs the alternating policy from the settled start and captures the
/// stance at the end of its `hold`-th two-cable hold, i.e. just before cable
/// `hold` starts to release while cable `hold + 1` is fully contracted.
pub fn stance_comparison(config: &ScenarioConfig, hold: usize) -> Result<StanceComparison> {
    let config = config.clone().with_policy(PolicyKind::Alternating);
    config.validate()?;
    let mut state = config.initial_state(0)?;
    let neutral = StanceSnapshot::of(&state, 0.0);
    let schedule = compile_policy(PolicyKind::Alternating, &config.policy_params, &config.gait, hold / config.gait.len() + 2)?;
    state.rest_length_rate = Some(config.policy_params.slew_rate() * state.topology.cable_rest_length);
    let until = schedule.phases[hold].t_release_start;
    let t0 = state.time;
    let mut fractions = vec![1.0; config.gait.len()];
    while state.time - t0 < until {
        schedule.targets_into(state.time - t0, &mut fractions);
        state.apply_cable_targets(&fractions)?;
        state.step_mut()?;
    }
    Ok(StanceComparison { neutral, two_cable_hold: StanceSnapshot::of(&state, state.time - t0) })
}

/// Face and heading the robot rests in before one gait step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaitStance {
    pub step: usize,
    pub cable: usize,
    pub face: usize,
    /// Heading in the sense of [`SimState::place_on_face`] (radians).
    pub yaw: f64,
}

/// Heading that [`SimState::place_on_face`] would need to reproduce the
/// orientation of `state` resting on `face`.
fn resting_yaw(state: &SimState<f64>, face: usize) -> f64 {
    let f = state.topology.faces[face];
    let pos = state.node_positions();
    let centroid = f.iter().fold(nalgebra::Vector3::zeros(), |acc, &n| acc + pos[n]) / 3.0;
    let d = pos[f[0]] - centroid;
    // placement points the first vertex along -x before turning by yaw
    d.y.atan2(d.x) - std::f64::consts::PI
}

/// Walks the gait quasi-statically on flat ground from the start face and
/// records the stance before each step of the second cycle; the first
/// cycle only washes out the hand-placed start heading.
pub fn gait_stances(config: &ScenarioConfig) -> Result<Vec<GaitStance>> {
    let mut flat = config.clone().with_incline(0.0);
    flat.yaw_jitter_deg = 0.0;
    let mut state = flat.initial_state(0)?;
    let fraction = 1.0 - config.robot.max_contraction;
    let uphill = Vector2::x();
    let n = config.gait.len();
    let mut stances = Vec::with_capacity(n);
    for k in 0..2 * n {
        let (step, cable) = (k % n, config.gait[k % n]);
        let face = state
            .supporting_face()
            .ok_or_else(|| Error::DegenerateSupport(format!("not resting on a face before step {step}")))?;
        if k >= n {
            stances.push(GaitStance { step, cable, face, yaw: resting_yaw(&state, face) });
        }
        let tipped = quasi_static_probe(&state, cable, fraction, &uphill)?;
        if tipped.outcome != ProbeOutcome::TippedForward {
            return Err(Error::NoStepAvailable);
        }
        state = quasi_static_probe(&tipped.state, cable, 1.0, &uphill)?.state;
    }
    Ok(stances)
}

/// One point of a required-contraction curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionPoint {
    pub theta_deg: f64,
    pub step: usize,
    pub cable: usize,
    pub required: RequiredContraction,
}

/// Required contraction of every gait step's cable at every incline, each
/// from the step's own stance re-placed and settled on the incline.
pub fn contraction_curves(config: &ScenarioConfig, inclines: &[f64]) -> Result<Vec<ContractionPoint>> {
    config.validate()?;
    let stances = gait_stances(config)?;
    let topology = Arc::new(config.topology()?);
    let jobs: Vec<(f64, GaitStance)> = inclines.iter().flat_map(|&t| stances.iter().map(move |&s| (t, s))).collect();
    jobs.par_iter()
        .map(|&(theta, stance)| {
            let world = config.world.clone().with_incline(theta);
            let state = init_resting(topology.clone(), config.robot.clone(), world, stance.face, stance.yaw)?;
            Ok(ContractionPoint { theta_deg: theta, step: stance.step, cable: stance.cable, required: required_contraction(&state, stance.cable)? })
        })
        .collect()
}

/// CSV rows `theta_deg,cable,required_fraction` for [`contraction_curves`].
pub fn contraction_curves_csv(points: &[ContractionPoint]) -> String {
    let rows: Vec<(f64, usize, RequiredContraction)> = points.iter().map(|p| (p.theta_deg, p.cable, p.required)).collect();
    required_contraction_csv(&rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub incline_deg: f64,
    pub policy: PolicyKind,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Mean over successful trials; `None` if there were none.
    pub avg_velocity: Option<f64>,
    pub failure_modes: Vec<FailureMode>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub policy: PolicyKind,
    pub points: Vec<SweepPoint>,
    /// Largest incline at which every trial succeeded.
    pub max_reliable_incline: Option<f64>,
}

/// Runs `trials` repetitions of `base` at each incline (ascending). Trials
/// run in parallel; results are ordered by incline, then trial index.
pub fn incline_sweep(base: &ScenarioConfig, inclines: &[f64], trials: usize) -> Result<SweepResult> {
    if inclines.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::InvalidParameter("incline list must be sorted ascending".into()));
    }
    base.validate()?;
    let jobs: Vec<(usize, usize)> = (0..inclines.len()).flat_map(|k| (0..trials).map(move |i| (k, i))).collect();
    let results: Vec<Result<TrialResult>> = jobs
        .par_iter()
        .map(|&(k, i)| {
            let mut r = run_trial_index(&base.clone().with_incline(inclines[k]), i)?;
            r.com_trace = Vec::new();
            r.margin_trace = Vec::new();
            Ok(r)
        })
        .collect();
    let mut results = results.into_iter();
    let mut points = Vec::with_capacity(inclines.len());
    for &theta in inclines {
        let batch = results.by_ref().take(trials).collect::<Result<Vec<_>>>()?;
        let successes = batch.iter().filter(|r| r.success).count();
        let speeds: Vec<f64> = batch.iter().filter(|r| r.success).map(|r| r.avg_velocity).collect();
        points.push(SweepPoint {
            incline_deg: theta,
            policy: base.policy,
            trials,
            successes,
            success_rate: if trials > 0 { successes as f64 / trials as f64 } else { 0.0 },
            avg_velocity: (!speeds.is_empty()).then(|| speeds.iter().sum::<f64>() / speeds.len() as f64),
            failure_modes: batch.iter().map(|r| r.failure_mode).collect(),
        });
    }
    let max_reliable_incline =
        points.iter().filter(|p| p.trials > 0 && p.successes == p.trials).map(|p| p.incline_deg).next_back();
    Ok(SweepResult { policy: base.policy, points, max_reliable_incline })
}

/// `start, start + step, …` up to and including `end` (within rounding).
pub fn incline_grid(start: f64, end: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(end >= start) {
        return Err(Error::InvalidParameter("incline grid needs step > 0 and end >= start".into()));
    }
    let n = ((end - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| start + k as f64 * step).collect())
}

pub fn com_trace_csv(result: &TrialResult) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t", "x", "y", "z", "height_pct"]).expect("in-memory write");
    for s in &result.com_trace {
        w.write_record([
            format!("{:.4}", s.t),
            format!("{:.6}", s.com[0]),
            format!("{:.6}", s.com[1]),
            format!("{:.6}", s.com[2]),
            format!("{:.4}", s.height_pct),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

pub fn sweep_csv(sweeps: &[SweepResult]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["theta_deg", "policy", "success_rate", "avg_velocity"]).expect("in-memory write");
    for p in sweeps.iter().flat_map(|s| &s.points) {
        w.write_record([
            format!("{}", p.incline_deg),
            p.policy.to_string(),
            format!("{:.4}", p.success_rate),
            p.avg_velocity.map_or_else(|| "NA".to_string(), |v| format!("{v:.4}")),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

/// Writes `result.json`, `com_trace.csv` and `margins.csv` into `dir`.
pub fn write_trial_outputs(result: &TrialResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let json = serde_json::to_string_pretty(result).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(dir.join("result.json"), json)?;
    fs::write(dir.join("com_trace.csv"), com_trace_csv(result))?;
    let margins: Vec<(f64, Option<StabilityMargins<f64>>)> = result.margin_trace.iter().map(|m| (m.t, m.margins)).collect();
    fs::write(dir.join("margins.csv"), margins_csv(&margins))?;
    Ok(())
}
