//! Physical parameters of the robot and its environment.
//!
//! Lengths are in cm, masses in kg, forces in N, stiffness in N/cm and
//! damping in N·s/cm. The simulation frame is attached to the inclined plane:
//! `+x` points uphill, `+z` is the plane normal and the plane is `z = 0`.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Converts N/kg into cm/s².
pub const ACCEL_PER_NEWTON_KG: f64 = 100.0;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub incline_deg: f64,
    /// m/s²
    pub gravity: f64,
    pub friction_coefficient: f64,
    pub contact_normal_stiffness: f64,
    pub contact_damping: f64,
    /// Stiffness of the tangential stick spring that holds a contact in place
    /// until the Coulomb limit is reached.
    pub contact_tangential_stiffness: f64,
    pub contact_tangential_damping: f64,
    /// Heights below `end_cap_radius + contact_tolerance` count as touching.
    pub contact_tolerance: f64,
    pub timestep: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            incline_deg: 0.0,
            gravity: 9.81,
            friction_coefficient: 0.49,
            contact_normal_stiffness: 500.0,
            contact_damping: 0.2,
            contact_tangential_stiffness: 200.0,
            contact_tangential_damping: 0.1,
            contact_tolerance: 0.05,
            timestep: 5e-4,
        }
    }
}

impl WorldConfig {
    pub fn with_incline(mut self, deg: f64) -> Self {
        self.incline_deg = deg;
        self
    }

    pub fn with_friction(mut self, mu: f64) -> Self {
        self.friction_coefficient = mu;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..90.0).contains(&self.incline_deg) {
            return Err(Error::InvalidParameter(format!("incline {} deg outside [0, 90)", self.incline_deg)));
        }
        if !(self.friction_coefficient >= 0.0) {
            return Err(Error::InvalidParameter("friction coefficient must be >= 0".into()));
        }
        if !(self.timestep > 0.0) {
            return Err(Error::InvalidParameter("timestep must be positive".into()));
        }
        let non_negative = [
            self.gravity,
            self.contact_normal_stiffness,
            self.contact_damping,
            self.contact_tangential_stiffness,
            self.contact_tangential_damping,
            self.contact_tolerance,
        ];
        if non_negative.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidParameter("contact and gravity parameters must be >= 0".into()));
        }
        Ok(())
    }

    /// Gravity acceleration in the plane frame, cm/s².
    pub fn gravity_vector<T: Real>(&self) -> Vector3<T> {
        let theta = self.incline_deg.to_radians();
        let g = self.gravity * ACCEL_PER_NEWTON_KG;
        Vector3::new(T::lit(-g * theta.sin()), T::zero(), T::lit(-g * theta.cos()))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RobotParams {
    pub rod_length: f64,
    pub rod_mass: f64,
    /// Radius used for the rod inertia tensor.
    pub rod_radius: f64,
    pub end_cap_radius: f64,
    pub payload_mass: f64,
    pub cable_stiffness: f64,
    pub cable_damping: f64,
    /// Relative shortening of every neutral rest length below the geometric
    /// length (0 = no pretension).
    pub pretension: f64,
    pub payload_spring_stiffness: f64,
    pub payload_spring_damping: f64,
    /// Nodes the payload hangs from; empty means all twelve.
    pub payload_nodes: Vec<usize>,
    pub max_contraction: f64,
    /// Velocity drag applied to every body (1/s). Lumps the losses of the
    /// motors, string and end caps; it keeps rolls close to quasi-static.
    pub body_drag: f64,
}

impl Default for RobotParams {
    fn default() -> Self {
        RobotParams {
            rod_length: 25.0,
            rod_mass: 0.06,
            rod_radius: 0.5,
            end_cap_radius: 0.5,
            payload_mass: 0.35,
            cable_stiffness: 10.0,
            cable_damping: 0.05,
            pretension: 0.0,
            payload_spring_stiffness: 0.8,
            payload_spring_damping: 0.2,
            payload_nodes: Vec::new(),
            max_contraction: 0.85,
            body_drag: 10.0,
        }
    }
}

impl RobotParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.rod_length, self.rod_mass, self.rod_radius, self.payload_mass];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidParameter("lengths and masses must be positive".into()));
        }
        let non_negative = [
            self.end_cap_radius,
            self.cable_stiffness,
            self.cable_damping,
            self.payload_spring_stiffness,
            self.payload_spring_damping,
            self.body_drag,
        ];
        if non_negative.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidParameter("stiffness and damping must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.pretension) {
            return Err(Error::InvalidParameter("pretension must lie in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.max_contraction) {
            return Err(Error::InvalidParameter("max contraction must lie in [0, 1)".into()));
        }
        let attach = self.suspension_nodes();
        if attach.len() < 3 || attach.iter().any(|&n| n >= 12) {
            return Err(Error::InvalidParameter("payload must hang from at least 3 valid nodes".into()));
        }
        Ok(())
    }

    pub fn suspension_nodes(&self) -> Vec<usize> {
        if self.payload_nodes.is_empty() {
            (0..12).collect()
        } else {
            self.payload_nodes.clone()
        }
    }

    pub fn total_mass(&self) -> f64 {
        6.0 * self.rod_mass + self.payload_mass
    }
}
