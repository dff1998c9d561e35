//! Quasi-static stability analysis: support polygon, projected CoM, edge
//! margins, slip bound, tipping probes and failure classification.

use nalgebra::{Point2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::{SettleOptions, SimState};
use crate::error::{Error, Result};
use crate::geometry::{convex_hull_indices, outward_normal, signed_edge_distance};
use crate::params::WorldConfig;
use crate::scalar::Real;

/// Convex support polygon in the plane frame, counterclockwise.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct SupportPolygon<T: Real> {
    pub vertices: Vec<Point2<T>>,
    pub uphill_direction: Vector2<T>,
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct StabilityMargins<T: Real> {
    /// Signed distance to the uphill edge, positive inside.
    pub uphill_margin: T,
    /// Signed distance to the downhill edge, positive inside.
    pub downhill_margin: T,
}

/// Convex hull of the contact points' plane coordinates. The plane frame has
/// `+x` uphill, so the polygon's uphill direction is `+x`.
pub fn support_polygon<T: Real>(contacts: &[Vector3<T>]) -> Result<SupportPolygon<T>> {
    support_polygon_toward(contacts, Vector2::x())
}

pub fn support_polygon_toward<T: Real>(contacts: &[Vector3<T>], uphill: Vector2<T>) -> Result<SupportPolygon<T>> {
    if contacts.len() < 3 {
        return Err(Error::DegenerateSupport(format!("{} contact points", contacts.len())));
    }
    let planar: Vec<Point2<T>> = contacts.iter().map(|c| Point2::new(c.x, c.y)).collect();
    let hull = convex_hull_indices(&planar);
    if hull.len() < 3 {
        return Err(Error::DegenerateSupport("contacts are collinear".into()));
    }
    Ok(SupportPolygon { vertices: hull.into_iter().map(|i| planar[i]).collect(), uphill_direction: uphill })
}

impl<T: Real> SupportPolygon<T> {
    fn edge(&self, i: usize) -> (&Point2<T>, &Point2<T>) {
        (&self.vertices[i], &self.vertices[(i + 1) % self.vertices.len()])
    }

    /// Edge whose outward normal best matches `direction`; ties go to the
    /// lower start-vertex index.
    pub fn extremal_edge(&self, direction: &Vector2<T>) -> usize {
        let eps = T::default_epsilon() * T::lit(64.0);
        let mut best = 0;
        let mut best_dot = T::lit(f64::MIN);
        for i in 0..self.vertices.len() {
            let (a, b) = self.edge(i);
            let d = outward_normal(a, b).dot(direction);
            if d > best_dot + eps {
                best_dot = d;
                best = i;
            }
        }
        best
    }

    pub fn uphill_edge(&self) -> usize {
        self.extremal_edge(&self.uphill_direction)
    }

    pub fn downhill_edge(&self) -> usize {
        self.extremal_edge(&-self.uphill_direction)
    }

    pub fn distance_to_edge(&self, p: &Point2<T>, edge: usize) -> T {
        let (a, b) = self.edge(edge);
        signed_edge_distance(p, a, b)
    }

    /// Signed distance to the nearest edge; positive inside.
    pub fn interior_distance(&self, p: &Point2<T>) -> T {
        (0..self.vertices.len())
            .map(|i| self.distance_to_edge(p, i))
            .fold(T::lit(f64::MAX), |a, b| a.min(b))
    }

    pub fn contains(&self, p: &Point2<T>) -> bool {
        self.interior_distance(p) > T::zero()
    }
}

/// Projection of the CoM along gravity onto the inclined plane.
pub fn project_com<T: Real>(com: &Vector3<T>, world: &WorldConfig) -> Point2<T> {
    let tan = T::lit(world.incline_deg.to_radians().tan());
    Point2::new(com.x - com.z * tan, com.y)
}

pub fn stability_margins<T: Real>(proj: &Point2<T>, polygon: &SupportPolygon<T>) -> StabilityMargins<T> {
    StabilityMargins {
        uphill_margin: polygon.distance_to_edge(proj, polygon.uphill_edge()),
        downhill_margin: polygon.distance_to_edge(proj, polygon.downhill_edge()),
    }
}

/// Steepest incline (degrees) a body with Coulomb friction `mu` can rest on.
pub fn max_incline_no_slip(mu: f64) -> f64 {
    mu.atan().to_degrees()
}

/// Margins of `state`'s projected CoM over its current contact polygon.
pub fn state_margins<T: Real>(state: &SimState<T>) -> Result<StabilityMargins<T>> {
    let pos = state.node_positions();
    let contacts: Vec<Vector3<T>> = state.contact_set.iter().map(|&n| pos[n]).collect();
    let polygon = support_polygon(&contacts)?;
    Ok(stability_margins(&project_com(&state.total_com(), &state.world), &polygon))
}

/// Result of slowly driving one cable to a target and letting the robot settle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeOutcome {
    /// The starting face still carries the robot.
    Held,
    /// The robot left its face and its CoM moved along the probe direction.
    TippedForward,
    TippedBack,
}

#[derive(Clone, Debug)]
pub struct Probe<T: Real> {
    pub outcome: ProbeOutcome,
    /// Projected CoM displacement along the probe direction (cm).
    pub advance: T,
    pub state: SimState<T>,
}

/// Drag (1/s) used for quasi-static probes: ten times the settling default.
pub const QUASI_STATIC_DRAG: f64 = 100.0;

/// Drives `cable` to `fraction` of its neutral length with heavy damping,
/// then settles, and reports whether the robot left its starting face.
pub fn quasi_static_probe<T: Real>(
    state: &SimState<T>,
    cable: usize,
    fraction: f64,
    direction: &Vector2<T>,
) -> Result<Probe<T>> {
    let mut s = state.clone();
    let start_nodes: Vec<usize> = s.contact_set.clone();
    let face = s.supporting_face();
    let start = project_com(&s.total_com(), &s.world);
    s.set_cable_target(cable, T::lit(fraction))?;
    let neutral = s.cables[cable].neutral_rest_length;
    s.rest_length_rate = Some(neutral * T::lit(0.5));
    s.extra_drag = T::lit(QUASI_STATIC_DRAG);
    while (s.cables[cable].commanded_rest_length - s.cables[cable].target_rest_length).abs() > T::lit(1e-12) {
        s.step_mut()?;
    }
    let opts = SettleOptions { drag: QUASI_STATIC_DRAG, max_time: 30.0, slip_limit: f64::INFINITY, ..Default::default() };
    match s.settle(opts) {
        Ok(()) | Err(Error::NonConvergence { .. }) => {}
        Err(e) => return Err(e),
    }
    s.extra_drag = T::zero();
    let end = project_com(&s.total_com(), &s.world);
    let advance = (end - start).dot(direction);
    let held = match face {
        Some(f) => s.supporting_face() == Some(f),
        None => start_nodes.iter().all(|n| s.contact_set.contains(n)),
    };
    let outcome = if held {
        ProbeOutcome::Held
    } else if advance > T::zero() {
        ProbeOutcome::TippedForward
    } else {
        ProbeOutcome::TippedBack
    };
    Ok(Probe { outcome, advance, state: s })
}

/// Bisection resolution on the contraction fraction.
pub const CONTRACTION_RESOLUTION: f64 = 0.005;

/// Outcome of [`required_contraction`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "contraction")]
pub enum RequiredContraction {
    /// Smallest contraction (fraction of neutral length removed) that tips the
    /// robot over its uphill edge, to within [`CONTRACTION_RESOLUTION`].
    Achievable(f64),
    NotAchievable,
}

impl RequiredContraction {
    pub fn value(self) -> Option<f64> {
        match self {
            RequiredContraction::Achievable(c) => Some(c),
            RequiredContraction::NotAchievable => None,
        }
    }
}

/// Smallest contraction of `cable` that rolls the settled `state` uphill,
/// found by bisection over quasi-static probes. Not achievable if even
/// `max_contraction` holds, or if some probe tips the robot downhill first.
pub fn required_contraction<T: Real>(state: &SimState<T>, cable: usize) -> Result<RequiredContraction> {
    let uphill = Vector2::x();
    let c_max = state.params.max_contraction;
    let probe = |c: f64| quasi_static_probe(state, cable, 1.0 - c, &uphill).map(|p| p.outcome);
    match probe(c_max)? {
        ProbeOutcome::TippedForward => {}
        _ => return Ok(RequiredContraction::NotAchievable),
    }
    let (mut lo, mut hi) = (0.0, c_max);
    while hi - lo > CONTRACTION_RESOLUTION {
        let mid = 0.5 * (lo + hi);
        match probe(mid)? {
            ProbeOutcome::TippedForward => hi = mid,
            ProbeOutcome::Held => lo = mid,
            ProbeOutcome::TippedBack => return Ok(RequiredContraction::NotAchievable),
        }
    }
    Ok(RequiredContraction::Achievable(hi))
}

/// CSV rows `theta_deg,cable,required_fraction` (`NA` when not achievable).
pub fn required_contraction_csv(rows: &[(f64, usize, RequiredContraction)]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["theta_deg", "cable", "required_fraction"]).expect("in-memory write");
    for (theta, cable, r) in rows {
        let value = r.value().map_or_else(|| "NA".to_string(), |c| format!("{c:.4}"));
        w.write_record([format!("{theta}"), cable.to_string(), value]).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

/// CSV rows `t,uphill_margin,downhill_margin` (`NA` when the support is degenerate).
pub fn margins_csv(rows: &[(f64, Option<StabilityMargins<f64>>)]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t", "uphill_margin", "downhill_margin"]).expect("in-memory write");
    for (t, m) in rows {
        let (u, d) = m.map_or(("NA".to_string(), "NA".to_string()), |m| {
            (format!("{:.6}", m.uphill_margin), format!("{:.6}", m.downhill_margin))
        });
        w.write_record([format!("{t:.4}"), u, d]).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

/// How a trial ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureMode {
    None,
    RolledBack,
    Slipped,
    Stalled,
}

/// A change of supporting face during a trial.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceChange {
    pub t: f64,
    pub from: usize,
    pub to: usize,
    /// Uphill CoM displacement since the previous face was established (cm).
    pub com_advance: f64,
}

/// Slip distance (cm of contact-set sliding without a face change) that
/// counts as slipping.
pub const SLIP_LIMIT: f64 = 5.0;

/// The events of a finished trial that decide its failure mode.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialTrace {
    pub success: bool,
    pub face_changes: Vec<FaceChange>,
    /// First time the contact set had slid more than [`SLIP_LIMIT`] since the
    /// last face change.
    pub slip_time: Option<f64>,
}

/// Earliest decisive event wins: a downhill face change is a roll-back,
/// excessive sliding a slip; anything else short of success is a stall.
pub fn classify_failure(trace: &TrialTrace) -> FailureMode {
    if trace.success {
        return FailureMode::None;
    }
    let rollback = trace.face_changes.iter().find(|f| f.com_advance < 0.0).map(|f| f.t);
    match (rollback, trace.slip_time) {
        (Some(r), Some(s)) if s < r => FailureMode::Slipped,
        (Some(_), _) => FailureMode::RolledBack,
        (None, Some(_)) => FailureMode::Slipped,
        (None, None) => FailureMode::Stalled,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64, y: f64) -> Vector3<f64> {
        Vector3::new(x, y, 0.0)
    }

    #[test]
    fn triangle_support() {
        let p = support_polygon(&[v(0.0, 0.0), v(2.0, 0.0), v(0.0, 2.0)]).unwrap();
        assert_eq!(p.vertices.len(), 3);
    }

    #[test]
    fn square_with_center_drops_center() {
        let p = support_polygon(&[v(0.0, 0.0), v(1.0, 0.0), v(1.0, 1.0), v(0.0, 1.0), v(0.5, 0.5)]).unwrap();
        assert_eq!(p.vertices.len(), 4);
        assert!(!p.vertices.contains(&Point2::new(0.5, 0.5)));
    }

    #[test]
    fn degenerate_supports_rejected() {
        assert!(matches!(support_polygon(&[v(0.0, 0.0), v(1.0, 0.0)]), Err(Error::DegenerateSupport(_))));
        assert!(matches!(
            support_polygon(&[v(0.0, 0.0), v(1.0, 0.0), v(3.0, 0.0)]),
            Err(Error::DegenerateSupport(_))
        ));
    }

    #[test]
    fn centroid_margin_is_inradius() {
        let s = 3.0;
        let h = s * 3f64.sqrt() / 2.0;
        // vertex pointing uphill (+x)
        let tri = [v(0.0, -s / 2.0), v(h, 0.0), v(0.0, s / 2.0)];
        let poly = support_polygon(&tri).unwrap();
        let centroid = Point2::new(h / 3.0, 0.0);
        let m = stability_margins(&centroid, &poly);
        let inradius = s / (2.0 * 3f64.sqrt());
        assert!((m.uphill_margin - inradius).abs() < 1e-12);
        assert!((m.downhill_margin - inradius).abs() < 1e-12);
    }

    #[test]
    fn outside_uphill_edge_is_negative() {
        let poly = support_polygon(&[v(0.0, 0.0), v(1.0, 0.0), v(1.0, 1.0), v(0.0, 1.0)]).unwrap();
        let m = stability_margins(&Point2::new(1.5, 0.5), &poly);
        assert!((m.uphill_margin + 0.5).abs() < 1e-12);
        assert!((m.downhill_margin - 1.5).abs() < 1e-12);
        assert!(!poly.contains(&Point2::new(1.5, 0.5)));
    }

    #[test]
    fn tie_break_prefers_lower_index() {
        // diamond: two edges face +x equally
        let poly = support_polygon(&[v(0.0, -1.0), v(1.0, 0.0), v(0.0, 1.0), v(-1.0, 0.0)]).unwrap();
        let square = SupportPolygon { vertices: poly.vertices.clone(), uphill_direction: Vector2::new(1.0, 0.0) };
        let e = square.uphill_edge();
        let n = square.vertices.len();
        let dots: Vec<f64> = (0..n)
            .map(|i| outward_normal(&square.vertices[i], &square.vertices[(i + 1) % n]).x)
            .collect();
        let max = dots.iter().cloned().fold(f64::MIN, f64::max);
        let first = dots.iter().position(|&d| (d - max).abs() < 1e-12).unwrap();
        assert_eq!(e, first);
    }

    #[test]
    fn projection_on_flat_ground_is_identity() {
        let w = WorldConfig::default();
        let p = project_com(&Vector3::new(1.5, -2.0, 9.0), &w);
        assert_eq!(p, Point2::new(1.5, -2.0));
    }

    #[test]
    fn projection_shift_downhill() {
        let w = WorldConfig::default().with_incline(24.0);
        let p = project_com(&Vector3::new(0.0f64, 0.0, 12.0), &w);
        assert!((p.x + 5.342744).abs() < 1e-6);
        assert_eq!(p.y, 0.0);
    }

    #[test]
    fn slip_bound_values() {
        assert_eq!(max_incline_no_slip(0.0), 0.0);
        assert!((max_incline_no_slip(1.0) - 45.0).abs() < 1e-12);
        assert!((max_incline_no_slip(0.49) - 26.10).abs() < 0.01);
    }
}
