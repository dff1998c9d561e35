//! Deterministic teleoperation session.
//!
//! A session owns one simulated robot and is driven by two inputs only: the
//! session wall clock passed to [`Session::advance_to`] and the commands
//! passed to [`Session::handle`]. Sim steps are counted as integers from the
//! wall clock, commands land on step boundaries in the order they are
//! handled, and frames are emitted on a fixed sim-time grid. Feeding the same
//! `(wall, command)` sequence therefore always yields the same frames, which
//! is what makes logged sessions replayable.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sixbar_core::dynamics::init_resting;
use sixbar_core::harness::ScenarioConfig;
use sixbar_core::policies::{compile_policy, PolicyKind, PolicyParams, PolicySchedule};
use sixbar_core::stability::{project_com, stability_margins, support_polygon};
use sixbar_core::topology::{stable_faces, FACE_COUNT};
use sixbar_core::{Sim, Topology};

use crate::protocol::{CableTelemetry, Command, Hello, RejectReason, Rejection, TelemetryFrame, PROTOCOL_VERSION};

/// Longest policy run a single `run_policy` command schedules (s).
const POLICY_HORIZON: f64 = 3600.0;
const MAX_SPEED: f64 = 100.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionOptions {
    /// Telemetry frames per second of simulated time.
    pub frame_rate: f64,
    /// Initial sim-seconds per wall-second.
    pub speed: f64,
}

impl Default for SessionOptions {
    fn default() -> Self {
        SessionOptions { frame_rate: 30.0, speed: 1.0 }
    }
}

struct ActivePolicy {
    kind: PolicyKind,
    schedule: PolicySchedule,
    /// Session sim time at which the schedule's clock reads zero.
    start: f64,
}

pub struct Session {
    config: ScenarioConfig,
    options: SessionOptions,
    topology: Arc<Topology>,
    state: Sim,
    dt: f64,
    /// Steps taken since the session started.
    steps: u64,
    /// Pacing anchor: at wall time `wall_base` the session had taken `step_base` steps.
    wall_base: f64,
    step_base: u64,
    speed: f64,
    /// Latest wall time seen.
    wall: f64,
    paused: Option<PauseClock>,
    policy: Option<ActivePolicy>,
    manual: Vec<f64>,
    origin_x: f64,
    next_frame: u64,
    frame_seq: u64,
    force_frame: bool,
    fractions: Vec<f64>,
}

#[derive(Clone, Copy)]
struct PauseClock {
    since: f64,
    emitted: u64,
}

impl Session {
    pub fn new(config: ScenarioConfig, options: SessionOptions) -> sixbar_core::Result<Self> {
        config.validate()?;
        if !(options.frame_rate > 0.0 && options.frame_rate.is_finite()) {
            return Err(sixbar_core::Error::InvalidParameter("frame_rate must be positive".into()));
        }
        if !(options.speed > 0.0 && options.speed <= MAX_SPEED) {
            return Err(sixbar_core::Error::InvalidParameter(format!("speed must lie in (0, {MAX_SPEED}]")));
        }
        let mut state = config.initial_state(0)?;
        state.rest_length_rate = Some(config.policy_params.slew_rate() * state.topology.cable_rest_length);
        let origin_x = state.total_com().x;
        let n = config.gait.len();
        Ok(Session {
            topology: state.topology.clone(),
            dt: config.world.timestep,
            speed: options.speed,
            config,
            options,
            state,
            steps: 0,
            wall_base: 0.0,
            step_base: 0,
            wall: 0.0,
            paused: None,
            policy: None,
            manual: vec![1.0; n],
            origin_x,
            next_frame: 0,
            frame_seq: 0,
            force_frame: false,
            fractions: vec![1.0; n],
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn options(&self) -> &SessionOptions {
        &self.options
    }

    pub fn state(&self) -> &Sim {
        &self.state
    }

    /// Simulated time since the session started (s).
    pub fn sim_time(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    pub fn wall(&self) -> f64 {
        self.wall
    }

    pub fn is_paused(&self) -> bool {
        self.paused.is_some()
    }

    pub fn active_policy(&self) -> Option<PolicyKind> {
        self.policy.as_ref().map(|p| p.kind)
    }

    pub fn hello(&self) -> Hello {
        Hello {
            protocol: PROTOCOL_VERSION,
            config: self.config.clone(),
            frame_rate: self.options.frame_rate,
            rods: self.topology.rods.clone(),
            cables: self.topology.cables.clone(),
            actuated_cables: self.topology.actuated_cables.clone(),
            faces: stable_faces(&self.topology).to_vec(),
            min_fraction: 1.0 - self.config.robot.max_contraction,
        }
    }

    /// Applies `command` at the current step boundary.
    pub fn handle(&mut self, command: &Command) -> Result<(), Rejection> {
        match *command {
            Command::SetCable { cable, fraction } => self.set_cable(cable, fraction),
            Command::RunPolicy { kind, ref params } => self.run_policy(kind, params.as_ref()),
            Command::StopPolicy => {
                self.stop_policy();
                Ok(())
            }
            Command::SetIncline { degrees } => self
                .state
                .set_incline(degrees)
                .map_err(|e| Rejection::new(RejectReason::InclineOutOfRange, e.to_string())),
            Command::Reset { face } => self.reset(face),
            Command::Pause => {
                if self.paused.is_none() {
                    self.paused = Some(PauseClock { since: self.wall, emitted: 0 });
                }
                Ok(())
            }
            Command::Resume => {
                if self.paused.take().is_some() {
                    self.rebase();
                }
                Ok(())
            }
            Command::SetSpeed { factor } => {
                if !(factor > 0.0 && factor <= MAX_SPEED) {
                    return Err(Rejection::new(
                        RejectReason::SpeedOutOfRange,
                        format!("speed out of range: {factor} not in (0, {MAX_SPEED}]"),
                    ));
                }
                self.rebase();
                self.speed = factor;
                Ok(())
            }
        }
    }

    fn rebase(&mut self) {
        self.wall_base = self.wall;
        self.step_base = self.steps;
    }

    fn set_cable(&mut self, slot: usize, fraction: f64) -> Result<(), Rejection> {
        if self.policy.is_some() {
            return Err(Rejection::new(RejectReason::PolicyActive, "manual cable control is locked while a policy runs"));
        }
        let Some(&cable) = self.topology.actuated_cables.get(slot) else {
            return Err(Rejection::new(
                RejectReason::CableOutOfRange,
                format!("cable {slot} not in [0, {})", self.topology.actuated_cables.len()),
            ));
        };
        self.state
            .set_cable_target(cable, fraction)
            .map_err(|e| Rejection::new(RejectReason::FractionOutOfRange, e.to_string()))?;
        self.manual[slot] = fraction;
        Ok(())
    }

    fn run_policy(&mut self, kind: PolicyKind, params: Option<&PolicyParams>) -> Result<(), Rejection> {
        let params = params.unwrap_or(&self.config.policy_params).clone();
        if params.contraction > self.config.robot.max_contraction + 1e-12 {
            return Err(Rejection::new(
                RejectReason::InvalidPolicy,
                format!("contraction {} exceeds max_contraction {}", params.contraction, self.config.robot.max_contraction),
            ));
        }
        let invalid = |e: sixbar_core::Error| Rejection::new(RejectReason::InvalidPolicy, e.to_string());
        let probe = compile_policy(kind, &params, &self.config.gait, 1).map_err(invalid)?;
        let repeats = (POLICY_HORIZON / probe.cycle_period).ceil() as usize;
        let schedule = compile_policy(kind, &params, &self.config.gait, repeats).map_err(invalid)?;
        self.state.rest_length_rate = Some(params.slew_rate() * self.topology.cable_rest_length);
        self.policy = Some(ActivePolicy { kind, schedule, start: self.sim_time() });
        Ok(())
    }

    /// Ends any running policy; every actuated cable slews back to neutral.
    fn stop_policy(&mut self) {
        self.policy = None;
        self.manual.iter_mut().for_each(|f| *f = 1.0);
        self.state.apply_cable_targets(&self.manual).expect("neutral is always in range");
    }

    fn reset(&mut self, face: usize) -> Result<(), Rejection> {
        if face >= FACE_COUNT {
            return Err(Rejection::new(RejectReason::FaceOutOfRange, format!("face {face} not in [0, {FACE_COUNT})")));
        }
        let yaw = self.config.start_yaw_deg.to_radians();
        let mut state = init_resting(self.topology.clone(), self.config.robot.clone(), self.state.world.clone(), face, yaw)
            .map_err(|e| Rejection::new(RejectReason::ResetFailed, e.to_string()))?;
        state.rest_length_rate = self.state.rest_length_rate;
        self.state = state;
        self.policy = None;
        self.manual.iter_mut().for_each(|f| *f = 1.0);
        self.force_frame = true;
        Ok(())
    }

    /// Step at which the `k`-th regular frame is due.
    fn frame_step(&self, k: u64) -> u64 {
        (k as f64 / (self.options.frame_rate * self.dt)).round() as u64
    }

    /// Wall time the current step corresponds to under the pacing anchor.
    fn step_wall(&self) -> f64 {
        self.wall_base + (self.steps - self.step_base) as f64 * self.dt / self.speed
    }

    /// Advances the session clock to `wall` seconds, stepping the simulation
    /// and appending every frame that falls due. Earlier walls are ignored.
    pub fn advance_to(&mut self, wall: f64, out: &mut Vec<TelemetryFrame>) -> sixbar_core::Result<()> {
        if wall.is_nan() || wall < self.wall {
            return Ok(());
        }
        self.wall = wall;
        if let Some(mut clock) = self.paused {
            if std::mem::take(&mut self.force_frame) {
                out.push(self.frame(clock.since));
            }
            // frames keep coming at the wall rate, repeating the frozen state
            loop {
                let due = clock.since + (clock.emitted + 1) as f64 / self.options.frame_rate;
                if due > wall {
                    break;
                }
                clock.emitted += 1;
                out.push(self.frame(due));
            }
            self.paused = Some(clock);
            return Ok(());
        }
        let target = self.step_base + ((wall - self.wall_base) * self.speed / self.dt + 1e-9).floor() as u64;
        loop {
            self.emit_due(out);
            if self.steps >= target {
                break;
            }
            self.step()?;
        }
        Ok(())
    }

    fn emit_due(&mut self, out: &mut Vec<TelemetryFrame>) {
        let mut due = std::mem::take(&mut self.force_frame);
        while self.steps >= self.frame_step(self.next_frame) {
            self.next_frame += 1;
            due = true;
        }
        if due {
            out.push(self.frame(self.step_wall()));
        }
    }

    fn step(&mut self) -> sixbar_core::Result<()> {
        let t = self.sim_time();
        if let Some(p) = &self.policy {
            let local = t - p.start;
            if local > p.schedule.duration() {
                self.policy = None;
            } else {
                p.schedule.targets_into(local, &mut self.fractions);
                self.state.apply_cable_targets(&self.fractions)?;
            }
        }
        self.state.step_mut()?;
        self.steps += 1;
        Ok(())
    }

    /// Telemetry for the current state, stamped with `wall`.
    pub fn frame(&mut self, wall: f64) -> TelemetryFrame {
        let seq = self.frame_seq;
        self.frame_seq += 1;
        let state = &self.state;
        let pos = state.node_positions();
        let com = state.total_com();
        let proj = project_com(&com, &state.world);
        let contacts: Vec<_> = state.contact_set.iter().map(|&n| pos[n]).collect();
        let polygon = support_polygon(&contacts).ok();
        let actuated = &self.topology.actuated_cables;
        TelemetryFrame {
            seq,
            t: self.sim_time(),
            wall,
            paused: self.paused.is_some(),
            speed: self.speed,
            incline_deg: state.world.incline_deg,
            nodes: pos.iter().map(|p| [p.x, p.y, p.z]).collect(),
            com: [com.x, com.y, com.z],
            projected_com: [proj.x, proj.y],
            support_polygon: polygon
                .as_ref()
                .map(|poly| poly.vertices.iter().map(|v| [v.x, v.y]).collect())
                .unwrap_or_default(),
            margins: polygon.as_ref().map(|poly| stability_margins(&proj, poly)),
            cables: state
                .cables
                .iter()
                .enumerate()
                .map(|(i, c)| CableTelemetry {
                    fraction: state.cable_fraction(i),
                    target: c.target_rest_length / c.neutral_rest_length,
                    tension: c.current_tension,
                    actuated: actuated.contains(&i),
                })
                .collect(),
            contacts: state.contact_set.clone(),
            face: state.supporting_face(),
            distance: com.x - self.origin_x,
            policy: self.active_policy(),
        }
    }
}
