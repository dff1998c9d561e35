//! Rigid rods, tension-only cables and a suspended payload on an inclined plane.
//!
//! Each rod is a rigid body whose two end nodes lie on its body `z` axis.
//! Cables and payload springs act between nodes; end caps touch the plane
//! through a penalty spring-damper with a stick-spring Coulomb friction model.
//! Integration is semi-implicit Euler: forces at the current configuration
//! update velocities (angular momentum for rotation), then the new
//! velocities update poses.

use std::sync::Arc;

use nalgebra::{Matrix3, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{RobotParams, WorldConfig, ACCEL_PER_NEWTON_KG};
use crate::scalar::Real;
use crate::topology::{stable_faces, TensegrityTopology, FACE_COUNT, NODE_COUNT};

/// Rounding allowance when validating commanded fractions.
const FRACTION_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct RodBodyState<T: Real> {
    pub com_position: Vector3<T>,
    pub orientation: UnitQuaternion<T>,
    pub linear_velocity: Vector3<T>,
    pub angular_velocity: Vector3<T>,
    pub mass: T,
    /// Body-frame inertia, kg·cm².
    pub inertia: Matrix3<T>,
}

impl<T: Real> RodBodyState<T> {
    fn world_inertia(&self) -> Matrix3<T> {
        let r = self.orientation.to_rotation_matrix();
        r.matrix() * self.inertia * r.matrix().transpose()
    }

    fn world_inertia_inverse(&self) -> Matrix3<T> {
        let r = self.orientation.to_rotation_matrix();
        let inv = self.inertia.try_inverse().unwrap_or_else(Matrix3::zeros);
        r.matrix() * inv * r.matrix().transpose()
    }

    pub fn angular_momentum(&self) -> Vector3<T> {
        self.world_inertia() * self.angular_velocity
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct CableState<T: Real> {
    pub nodes: [usize; 2],
    pub neutral_rest_length: T,
    pub commanded_rest_length: T,
    /// Rest length the actuator is slewing toward.
    pub target_rest_length: T,
    pub stiffness: T,
    pub damping: T,
    pub current_tension: T,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct SuspensionSpring<T: Real> {
    pub node: usize,
    pub stiffness: T,
    pub rest_length: T,
    pub damping: T,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct PayloadState<T: Real> {
    pub position: Vector3<T>,
    pub velocity: Vector3<T>,
    pub mass: T,
    pub suspension: Vec<SuspensionSpring<T>>,
}

/// Per-node contact force of the last step (N).
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct ContactForce<T: Real> {
    pub normal: T,
    pub tangential: Vector2<T>,
    pub sliding: bool,
}

type NodeVectors<T> = [Vector3<T>; NODE_COUNT];

#[derive(Clone, Debug)]
pub struct SimState<T: Real> {
    pub topology: Arc<TensegrityTopology<T>>,
    pub rods: Vec<RodBodyState<T>>,
    pub cables: Vec<CableState<T>>,
    pub payload: PayloadState<T>,
    pub world: WorldConfig,
    pub params: RobotParams,
    pub time: T,
    pub contact_set: Vec<usize>,
    pub contact_forces: [ContactForce<T>; NODE_COUNT],
    /// Total tangential distance slid by contacts while at the Coulomb limit.
    pub slide_distance: T,
    /// Per-node share of `slide_distance`.
    pub node_slide: [T; NODE_COUNT],
    /// Actuator slew rate limit on rest lengths (cm/s); `None` = instantaneous.
    pub rest_length_rate: Option<T>,
    /// Extra velocity drag (1/s) on top of `params.body_drag`, used for
    /// quasi-static settling.
    pub extra_drag: T,
    anchors: [Option<Vector2<T>>; NODE_COUNT],
    node_rod: [(usize, T); NODE_COUNT],
    gravity: Vector3<T>,
    dt: T,
}

/// Serializable snapshot of the dynamic state.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct StateSnapshot<T: Real> {
    pub time: T,
    pub rods: Vec<RodBodyState<T>>,
    pub cables: Vec<CableState<T>>,
    pub payload: PayloadState<T>,
    pub contact_set: Vec<usize>,
    pub nodes: Vec<Vector3<T>>,
    pub com: Vector3<T>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Energy<T> {
    pub kinetic: T,
    pub gravitational: T,
    pub elastic: T,
}

impl<T: Real> Energy<T> {
    pub fn total(&self) -> T {
        self.kinetic + self.gravitational + self.elastic
    }
}

/// Options for [`SimState::settle`].
#[derive(Clone, Copy, Debug)]
pub struct SettleOptions {
    /// Stop once kinetic energy (J) stays below this.
    pub kinetic_threshold: f64,
    pub min_time: f64,
    pub max_time: f64,
    /// Extra drag (1/s) applied while settling.
    pub drag: f64,
    /// Report a slip once contacts have slid this far (cm).
    pub slip_limit: f64,
}

impl Default for SettleOptions {
    fn default() -> Self {
        SettleOptions { kinetic_threshold: 1e-7, min_time: 0.3, max_time: 20.0, drag: 10.0, slip_limit: 2.0 }
    }
}

fn thin_rod_inertia<T: Real>(mass: f64, length: f64, radius: f64) -> Matrix3<T> {
    let transverse = mass * (3.0 * radius * radius + length * length) / 12.0;
    let axial = mass * radius * radius / 2.0;
    Matrix3::from_diagonal(&Vector3::new(T::lit(transverse), T::lit(transverse), T::lit(axial)))
}

impl<T: Real> SimState<T> {
    /// Robot in its body-frame geometry (payload at the origin), at rest.
    pub fn new(topology: Arc<TensegrityTopology<T>>, params: RobotParams, world: WorldConfig) -> Result<Self> {
        params.validate()?;
        world.validate()?;
        let rod_length = topology.rod_length;
        let half = rod_length / T::lit(2.0);
        let mut node_rod = [(0usize, T::zero()); NODE_COUNT];
        let rods = topology
            .rods
            .iter()
            .enumerate()
            .map(|(r, &[a, b])| {
                node_rod[a] = (r, -half);
                node_rod[b] = (r, half);
                let (pa, pb) = (topology.nodes[a], topology.nodes[b]);
                let axis = (pb - pa) / rod_length;
                let orientation = UnitQuaternion::rotation_between(&Vector3::z(), &axis)
                    .unwrap_or_else(|| UnitQuaternion::from_axis_angle(&Vector3::x_axis(), T::pi()));
                RodBodyState {
                    com_position: (pa + pb) / T::lit(2.0),
                    orientation,
                    linear_velocity: Vector3::zeros(),
                    angular_velocity: Vector3::zeros(),
                    mass: T::lit(params.rod_mass),
                    inertia: thin_rod_inertia(params.rod_mass, rod_length.to_f64_lossy(), params.rod_radius),
                }
            })
            .collect();
        let pre = T::lit(1.0 - params.pretension);
        let cables = topology
            .cables
            .iter()
            .map(|&[a, b]| {
                let rest = (topology.nodes[a] - topology.nodes[b]).norm() * pre;
                CableState {
                    nodes: [a, b],
                    neutral_rest_length: rest,
                    commanded_rest_length: rest,
                    target_rest_length: rest,
                    stiffness: T::lit(params.cable_stiffness),
                    damping: T::lit(params.cable_damping),
                    current_tension: T::zero(),
                }
            })
            .collect();
        let suspension = params
            .suspension_nodes()
            .into_iter()
            .map(|node| SuspensionSpring {
                node,
                stiffness: T::lit(params.payload_spring_stiffness),
                rest_length: topology.nodes[node].norm(),
                damping: T::lit(params.payload_spring_damping),
            })
            .collect();
        let payload = PayloadState {
            position: Vector3::zeros(),
            velocity: Vector3::zeros(),
            mass: T::lit(params.payload_mass),
            suspension,
        };
        let gravity = world.gravity_vector();
        let dt = T::lit(world.timestep);
        let mut state = SimState {
            topology,
            rods,
            cables,
            payload,
            world,
            params,
            time: T::zero(),
            contact_set: Vec::new(),
            contact_forces: [ContactForce::default(); NODE_COUNT],
            slide_distance: T::zero(),
            node_slide: [T::zero(); NODE_COUNT],
            rest_length_rate: None,
            extra_drag: T::zero(),
            anchors: [None; NODE_COUNT],
            node_rod,
            gravity,
            dt,
        };
        state.refresh_contacts();
        Ok(state)
    }

    pub fn set_world(&mut self, world: WorldConfig) -> Result<()> {
        world.validate()?;
        self.gravity = world.gravity_vector();
        self.dt = T::lit(world.timestep);
        self.world = world;
        Ok(())
    }

    pub fn set_incline(&mut self, deg: f64) -> Result<()> {
        let world = self.world.clone().with_incline(deg);
        self.set_world(world)
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn node_position(&self, node: usize) -> Vector3<T> {
        let (r, offset) = self.node_rod[node];
        let rod = &self.rods[r];
        rod.com_position + rod.orientation * Vector3::new(T::zero(), T::zero(), offset)
    }

    pub fn node_positions(&self) -> [Vector3<T>; NODE_COUNT] {
        std::array::from_fn(|i| self.node_position(i))
    }

    /// Position, velocity and lever arm (from the rod centre) of every node.
    fn node_kinematics(&self) -> (NodeVectors<T>, NodeVectors<T>, NodeVectors<T>) {
        let mut pos = [Vector3::zeros(); NODE_COUNT];
        let mut vel = [Vector3::zeros(); NODE_COUNT];
        let mut arm = [Vector3::zeros(); NODE_COUNT];
        for n in 0..NODE_COUNT {
            let (r, offset) = self.node_rod[n];
            let rod = &self.rods[r];
            let lever = rod.orientation * Vector3::new(T::zero(), T::zero(), offset);
            arm[n] = lever;
            pos[n] = rod.com_position + lever;
            vel[n] = rod.linear_velocity + rod.angular_velocity.cross(&lever);
        }
        (pos, vel, arm)
    }

    /// Rigidly moves the whole robot: `p -> rotation * p + translation`.
    pub fn transform(&mut self, rotation: &UnitQuaternion<T>, translation: &Vector3<T>) {
        for rod in &mut self.rods {
            rod.com_position = rotation * rod.com_position + translation;
            rod.orientation = rotation * rod.orientation;
            rod.linear_velocity = rotation * rod.linear_velocity;
            rod.angular_velocity = rotation * rod.angular_velocity;
        }
        self.payload.position = rotation * self.payload.position + translation;
        self.payload.velocity = rotation * self.payload.velocity;
        self.anchors = [None; NODE_COUNT];
        self.refresh_contacts();
    }

    pub fn total_mass(&self) -> T {
        self.rods.iter().fold(self.payload.mass, |m, r| m + r.mass)
    }

    /// Mass-weighted centre of the six rods and the payload.
    pub fn total_com(&self) -> Vector3<T> {
        let weighted = self
            .rods
            .iter()
            .fold(self.payload.position * self.payload.mass, |acc, r| acc + r.com_position * r.mass);
        weighted / self.total_mass()
    }

    pub fn linear_momentum(&self) -> Vector3<T> {
        self.rods
            .iter()
            .fold(self.payload.velocity * self.payload.mass, |acc, r| acc + r.linear_velocity * r.mass)
    }

    /// Angular momentum about the origin, kg·cm²/s.
    pub fn angular_momentum(&self) -> Vector3<T> {
        let p = &self.payload;
        self.rods.iter().fold(p.position.cross(&(p.velocity * p.mass)), |acc, r| {
            acc + r.com_position.cross(&(r.linear_velocity * r.mass)) + r.angular_momentum()
        })
    }

    /// Mechanical energy in joules.
    pub fn energy(&self) -> Energy<T> {
        let to_joule = T::lit(1e-4);
        let ncm_to_joule = T::lit(1e-2);
        let half = T::lit(0.5);
        let mut kinetic = self.payload.velocity.norm_squared() * self.payload.mass * half;
        let mut potential = -self.gravity.dot(&self.payload.position) * self.payload.mass;
        for r in &self.rods {
            kinetic += r.linear_velocity.norm_squared() * r.mass * half;
            kinetic += r.angular_velocity.dot(&(r.world_inertia() * r.angular_velocity)) * half;
            potential -= self.gravity.dot(&r.com_position) * r.mass;
        }
        let pos = self.node_positions();
        let mut elastic = T::zero();
        for c in &self.cables {
            let stretch = (pos[c.nodes[0]] - pos[c.nodes[1]]).norm() - c.commanded_rest_length;
            if stretch > T::zero() {
                elastic += c.stiffness * stretch * stretch * half;
            }
        }
        for s in &self.payload.suspension {
            let stretch = (pos[s.node] - self.payload.position).norm() - s.rest_length;
            elastic += s.stiffness * stretch * stretch * half;
        }
        let radius = T::lit(self.params.end_cap_radius);
        let kn = T::lit(self.world.contact_normal_stiffness);
        let kt = T::lit(self.world.contact_tangential_stiffness);
        for (n, p) in pos.iter().enumerate() {
            let depth = radius - p.z;
            if depth > T::zero() {
                elastic += kn * depth * depth * half;
            }
            if let Some(a) = self.anchors[n] {
                elastic += kt * (p.xy() - a).norm_squared() * half;
            }
        }
        Energy { kinetic: kinetic * to_joule, gravitational: potential * to_joule, elastic: elastic * ncm_to_joule }
    }

    pub fn kinetic_energy(&self) -> T {
        self.energy().kinetic
    }

    /// Sets the rest-length target of every actuated cable, as fractions of
    /// neutral length, in `topology.actuated_cables` order. The whole command
    /// is rejected if any fraction is out of range.
    pub fn apply_cable_targets(&mut self, fractions: &[T]) -> Result<()> {
        let actuated = self.topology.actuated_cables.clone();
        if fractions.len() != actuated.len() {
            return Err(Error::InvalidCommand(format!(
                "expected {} fractions, got {}",
                actuated.len(),
                fractions.len()
            )));
        }
        for &f in fractions {
            self.check_fraction(f)?;
        }
        for (&cable, &f) in actuated.iter().zip(fractions) {
            self.set_target_unchecked(cable, f);
        }
        Ok(())
    }

    /// Sets one cable's target fraction. Any cable may be commanded here; the
    /// policies only ever touch the actuated set.
    pub fn set_cable_target(&mut self, cable: usize, fraction: T) -> Result<()> {
        if cable >= self.cables.len() {
            return Err(Error::InvalidCommand(format!("cable {cable} out of range")));
        }
        self.check_fraction(fraction)?;
        self.set_target_unchecked(cable, fraction);
        Ok(())
    }

    fn check_fraction(&self, f: T) -> Result<()> {
        let lo = T::lit(1.0 - self.params.max_contraction);
        let slack = T::lit(FRACTION_SLACK);
        if !(f >= lo - slack && f <= T::one() + slack) {
            return Err(Error::InvalidCommand(format!(
                "fraction out of range: {f} not in [{lo}, 1]"
            )));
        }
        Ok(())
    }

    fn set_target_unchecked(&mut self, cable: usize, fraction: T) {
        let c = &mut self.cables[cable];
        c.target_rest_length = c.neutral_rest_length * fraction;
        if self.rest_length_rate.is_none() {
            c.commanded_rest_length = c.target_rest_length;
        }
    }

    pub fn cable_fraction(&self, cable: usize) -> T {
        let c = &self.cables[cable];
        c.commanded_rest_length / c.neutral_rest_length
    }

    fn slew_actuators(&mut self) {
        let Some(rate) = self.rest_length_rate else { return };
        let max_step = rate * self.dt;
        for c in &mut self.cables {
            let delta = c.target_rest_length - c.commanded_rest_length;
            if delta.abs() <= max_step {
                c.commanded_rest_length = c.target_rest_length;
            } else {
                c.commanded_rest_length += max_step * delta.signum();
            }
        }
    }

    /// Advances the state by one timestep.
    pub fn step_mut(&mut self) -> Result<()> {
        self.slew_actuators();
        let (pos, vel, arm) = self.node_kinematics();
        let mut node_force = [Vector3::<T>::zeros(); NODE_COUNT];

        for c in &mut self.cables {
            let [a, b] = c.nodes;
            let d = pos[b] - pos[a];
            let len = d.norm();
            let stretch = len - c.commanded_rest_length;
            if stretch <= T::zero() || len <= T::zero() {
                c.current_tension = T::zero();
                continue;
            }
            let dir = d / len;
            let rate = (vel[b] - vel[a]).dot(&dir);
            let tension = (c.stiffness * stretch + c.damping * rate).max(T::zero());
            c.current_tension = tension;
            node_force[a] += dir * tension;
            node_force[b] -= dir * tension;
        }

        let mut payload_force = self.gravity * self.payload.mass / T::lit(ACCEL_PER_NEWTON_KG);
        for s in &self.payload.suspension {
            let d = pos[s.node] - self.payload.position;
            let len = d.norm();
            if len <= T::zero() {
                continue;
            }
            let dir = d / len;
            let rate = (vel[s.node] - self.payload.velocity).dot(&dir);
            let f = dir * (s.stiffness * (len - s.rest_length) + s.damping * rate);
            payload_force += f;
            node_force[s.node] -= f;
        }

        self.contact_forces(&pos, &vel, &mut node_force);

        let dt = self.dt;
        let accel = T::lit(ACCEL_PER_NEWTON_KG);
        let damp = T::one() / (T::one() + (T::lit(self.params.body_drag) + self.extra_drag) * dt);
        let mut force = [Vector3::<T>::zeros(); 6];
        let mut torque = [Vector3::<T>::zeros(); 6];
        for n in 0..NODE_COUNT {
            let r = self.node_rod[n].0;
            force[r] += node_force[n];
            torque[r] += arm[n].cross(&node_force[n]);
        }
        for (r, rod) in self.rods.iter_mut().enumerate() {
            let lin = force[r] * accel / rod.mass + self.gravity;
            rod.linear_velocity = (rod.linear_velocity + lin * dt) * damp;
            let momentum = (rod.world_inertia() * rod.angular_velocity + torque[r] * accel * dt) * damp;
            let omega = rod.world_inertia_inverse() * momentum;
            rod.com_position += rod.linear_velocity * dt;
            rod.orientation = UnitQuaternion::from_scaled_axis(omega * dt) * rod.orientation;
            rod.orientation.renormalize();
            rod.angular_velocity = rod.world_inertia_inverse() * momentum;
        }
        let p = &mut self.payload;
        p.velocity = (p.velocity + payload_force * accel / p.mass * dt) * damp;
        p.position += p.velocity * dt;

        self.time += dt;
        self.check_finite()?;
        self.refresh_contacts();
        Ok(())
    }

    fn contact_forces(
        &mut self,
        pos: &[Vector3<T>; NODE_COUNT],
        vel: &[Vector3<T>; NODE_COUNT],
        node_force: &mut [Vector3<T>; NODE_COUNT],
    ) {
        let radius = T::lit(self.params.end_cap_radius);
        let kn = T::lit(self.world.contact_normal_stiffness);
        let cn = T::lit(self.world.contact_damping);
        let kt = T::lit(self.world.contact_tangential_stiffness);
        let ct = T::lit(self.world.contact_tangential_damping);
        let mu = T::lit(self.world.friction_coefficient);
        for n in 0..NODE_COUNT {
            let depth = radius - pos[n].z;
            if depth <= T::zero() {
                self.anchors[n] = None;
                self.contact_forces[n] = ContactForce::default();
                continue;
            }
            let normal = (kn * depth - cn * vel[n].z).max(T::zero());
            let planar = pos[n].xy();
            let anchor = *self.anchors[n].get_or_insert(planar);
            let spring = (anchor - planar) * kt;
            let mut tangential = spring - vel[n].xy() * ct;
            let limit = mu * normal;
            let magnitude = tangential.norm();
            let mut sliding = false;
            if magnitude > limit {
                sliding = true;
                tangential = if magnitude > T::zero() { tangential * (limit / magnitude) } else { tangential };
                // re-anchor so the stick spring alone sits at the limit
                let new_anchor = if kt > T::zero() {
                    let dir = if spring.norm() > T::zero() { spring / spring.norm() } else { Vector2::zeros() };
                    planar + dir * (limit / kt)
                } else {
                    planar
                };
                let slid = (new_anchor - anchor).norm();
                self.slide_distance += slid;
                self.node_slide[n] += slid;
                self.anchors[n] = Some(new_anchor);
            }
            self.contact_forces[n] = ContactForce { normal, tangential, sliding };
            node_force[n] += Vector3::new(tangential.x, tangential.y, normal);
        }
    }

    fn check_finite(&self) -> Result<()> {
        let time = self.time.to_f64_lossy();
        for (i, r) in self.rods.iter().enumerate() {
            let ok = r.com_position.iter().chain(r.linear_velocity.iter()).chain(r.angular_velocity.iter()).all(|v| v.is_finite())
                && r.orientation.coords.iter().all(|v| v.is_finite());
            if !ok {
                return Err(Error::Divergence { body: format!("rod {i}"), time });
            }
        }
        let p = &self.payload;
        if !p.position.iter().chain(p.velocity.iter()).all(|v| v.is_finite()) {
            return Err(Error::Divergence { body: "payload".into(), time });
        }
        Ok(())
    }

    pub fn refresh_contacts(&mut self) {
        let limit = T::lit(self.params.end_cap_radius + self.world.contact_tolerance);
        self.contact_set = (0..NODE_COUNT).filter(|&n| self.node_position(n).z <= limit).collect();
    }

    /// Stable face whose highest node is lowest: the face the robot stands on
    /// (or is rocking over).
    pub fn lowest_face(&self) -> usize {
        let pos = self.node_positions();
        let faces = stable_faces(&self.topology);
        let mut best = 0;
        let mut best_h = T::max_value().unwrap_or_else(|| T::lit(f64::MAX));
        for (i, f) in faces.iter().enumerate() {
            let h = f.iter().map(|&n| pos[n].z).fold(T::lit(f64::MIN), |a, b| a.max(b));
            if h < best_h {
                best_h = h;
                best = i;
            }
        }
        best
    }

    /// Stable face whose three nodes all touch the plane, if any.
    pub fn supporting_face(&self) -> Option<usize> {
        stable_faces(&self.topology)
            .iter()
            .position(|f| f.iter().all(|n| self.contact_set.contains(n)))
    }

    /// Runs with extra drag until kinetic energy stays below the threshold.
    pub fn settle(&mut self, opts: SettleOptions) -> Result<()> {
        let saved = self.extra_drag;
        self.extra_drag = T::lit(opts.drag);
        let start = self.time.to_f64_lossy();
        let slide0 = self.slide_distance.to_f64_lossy();
        let steps_max = (opts.max_time / self.world.timestep).ceil() as usize;
        let mut calm = 0usize;
        let calm_needed = (0.05 / self.world.timestep).ceil() as usize;
        let mut result = Err(Error::NonConvergence { steps: steps_max, kinetic_energy: f64::NAN });
        for _ in 0..steps_max {
            if let Err(e) = self.step_mut() {
                result = Err(e);
                break;
            }
            let slid = self.slide_distance.to_f64_lossy() - slide0;
            if slid > opts.slip_limit {
                result = Err(Error::Slipped(slid));
                break;
            }
            let ke = self.kinetic_energy().to_f64_lossy();
            calm = if ke < opts.kinetic_threshold { calm + 1 } else { 0 };
            if calm >= calm_needed && self.time.to_f64_lossy() - start >= opts.min_time {
                result = Ok(());
                break;
            }
            if let Err(Error::NonConvergence { kinetic_energy, .. }) = &mut result {
                *kinetic_energy = ke;
            }
        }
        self.extra_drag = saved;
        result
    }

    pub fn snapshot(&self) -> StateSnapshot<T> {
        StateSnapshot {
            time: self.time,
            rods: self.rods.clone(),
            cables: self.cables.clone(),
            payload: self.payload.clone(),
            contact_set: self.contact_set.clone(),
            nodes: self.node_positions().to_vec(),
            com: self.total_com(),
        }
    }
}

/// Functional form of [`SimState::step_mut`].
pub fn step<T: Real>(mut state: SimState<T>) -> Result<SimState<T>> {
    state.step_mut()?;
    Ok(state)
}

/// Rotation putting stable face `face` on the plane with its first vertex
/// pointing downhill (`-x`), so the opposite edge faces uphill, then turning
/// the robot by `yaw` about the plane normal.
pub fn face_down_rotation<T: Real>(topology: &TensegrityTopology<T>, face: usize, yaw: T) -> UnitQuaternion<T> {
    let f = stable_faces(topology)[face];
    let centroid = f.iter().fold(Vector3::zeros(), |acc, &n| acc + topology.nodes[n]) / T::lit(3.0);
    let down = UnitQuaternion::rotation_between(&centroid, &(-Vector3::z()))
        .unwrap_or_else(|| UnitQuaternion::from_axis_angle(&Vector3::x_axis(), T::pi()));
    let back = down * (topology.nodes[f[0]] - centroid);
    let heading = back.y.atan2(back.x);
    let spin = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), T::pi() - heading + yaw);
    spin * down
}

/// Places the robot on `face`, at rest with neutral cables, and lets it settle.
pub fn init_resting<T: Real>(
    topology: Arc<TensegrityTopology<T>>,
    params: RobotParams,
    world: WorldConfig,
    face: usize,
    yaw: T,
) -> Result<SimState<T>> {
    if face >= FACE_COUNT {
        return Err(Error::InvalidParameter(format!("face {face} not in [0, {FACE_COUNT})")));
    }
    let mut state = SimState::new(topology, params, world)?;
    state.place_on_face(face, yaw);
    state.settle(SettleOptions::default())?;
    Ok(state)
}

impl<T: Real> SimState<T> {
    /// Rigidly re-poses the current shape onto `face` touching the plane, with
    /// its base centroid at the origin; velocities and contacts are reset.
    pub fn place_on_face(&mut self, face: usize, yaw: T) {
        let rotation = face_down_rotation(&self.topology, face, yaw);
        let f = stable_faces(&self.topology)[face];
        let mut reposed = SimState::new(self.topology.clone(), self.params.clone(), self.world.clone())
            .expect("params already validated");
        reposed.transform(&rotation, &Vector3::zeros());
        let pos = reposed.node_positions();
        let base = f.iter().fold(Vector3::zeros(), |acc, &n| acc + pos[n]) / T::lit(3.0);
        let lowest = pos.iter().map(|p| p.z).fold(T::lit(f64::MAX), |a, b| a.min(b));
        let lift = Vector3::new(-base.x, -base.y, T::lit(self.params.end_cap_radius) - lowest);
        reposed.transform(&UnitQuaternion::identity(), &lift);
        reposed.time = self.time;
        reposed.rest_length_rate = self.rest_length_rate;
        reposed.cables = self.cables.clone();
        *self = reposed;
        for c in &mut self.cables {
            c.current_tension = T::zero();
        }
        self.refresh_contacts();
    }
}
