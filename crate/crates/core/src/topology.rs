//! Six-bar (expanded octahedron) tensegrity graph.
//!
//! Nodes sit at the twelve cyclic permutations of `(0, ±L/4, ±L/2)` in the
//! body frame. With `a = L/4` every node has integer coordinates in units of
//! `a`, so the member classification below is exact: squared distance 16 is a
//! rod, 6 is a cable and 4 is the (unconnected) gap between parallel rods.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const NODE_COUNT: usize = 12;
pub const ROD_COUNT: usize = 6;
pub const CABLE_COUNT: usize = 24;
pub const FACE_COUNT: usize = 8;
pub const ACTUATOR_COUNT: usize = 6;

/// Default gait: six actuated cables in firing order, producing straight
/// rolling along +x from stable face [`DEFAULT_START_FACE`].
///
/// Frozen output of [`crate::policies::derive_gait`] for the default
/// configuration; `tests/gait_search.rs` re-derives it.
pub const DEFAULT_GAIT: [usize; ACTUATOR_COUNT] = [2, 12, 21, 19, 11, 1];
pub const DEFAULT_START_FACE: usize = 0;

/// Integer node coordinates in units of `rod_length / 4`.
pub type Lattice = [i8; 3];

const ROD_SQ: i32 = 16;
const CABLE_SQ: i32 = 6;

fn lattice_nodes() -> Vec<Lattice> {
    let mut nodes = Vec::with_capacity(NODE_COUNT);
    for s1 in [-1i8, 1] {
        for s2 in [-2i8, 2] {
            let base = [0i8, s1, s2];
            for shift in 0..3 {
                nodes.push([base[(3 - shift) % 3], base[(4 - shift) % 3], base[(5 - shift) % 3]]);
            }
        }
    }
    nodes.sort();
    nodes
}

fn lattice_sq(a: &Lattice, b: &Lattice) -> i32 {
    (0..3).map(|k| (a[k] as i32 - b[k] as i32).pow(2)).sum()
}

/// Immutable node/rod/cable graph of the robot.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct TensegrityTopology<T: Real> {
    pub nodes: Vec<Vector3<T>>,
    pub rods: Vec<[usize; 2]>,
    pub cables: Vec<[usize; 2]>,
    pub actuated_cables: Vec<usize>,
    pub rod_length: T,
    pub cable_rest_length: T,
    /// Stable (all-cable) triangular faces, sorted node triples.
    pub faces: Vec<[usize; 3]>,
    #[serde(skip)]
    lattice: Vec<Lattice>,
}

/// Assignment of motors to cables.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ActuatorMap {
    /// Cable indices in gait order.
    pub sequence: Vec<usize>,
    /// Maximum contraction fraction per entry of `sequence`.
    pub max_contraction: Vec<f64>,
}

impl ActuatorMap {
    pub fn new(sequence: Vec<usize>, max_contraction: f64) -> Result<Self> {
        let n = sequence.len();
        let map = ActuatorMap { sequence, max_contraction: vec![max_contraction; n] };
        map.validate()?;
        Ok(map)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sequence.len() != self.max_contraction.len() {
            return Err(Error::InvalidParameter("actuator map length mismatch".into()));
        }
        for (i, &c) in self.sequence.iter().enumerate() {
            if c >= CABLE_COUNT {
                return Err(Error::InvalidParameter(format!("actuated cable {c} out of range")));
            }
            if self.sequence[..i].contains(&c) {
                return Err(Error::InvalidParameter(format!("actuated cable {c} listed twice")));
            }
        }
        if self.max_contraction.iter().any(|&m| !(0.0..1.0).contains(&m)) {
            return Err(Error::InvalidParameter("max contraction must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn max_for(&self, cable: usize) -> Option<f64> {
        self.sequence.iter().position(|&c| c == cable).map(|i| self.max_contraction[i])
    }
}

/// Builds the regular six-bar with the given rod length (cm).
pub fn build_six_bar<T: Real>(rod_length: T) -> Result<TensegrityTopology<T>> {
    if !(rod_length > T::zero()) || !rod_length.is_finite() {
        return Err(Error::InvalidParameter(format!("rod length must be positive, got {rod_length}")));
    }
    let lattice = lattice_nodes();
    let quarter = rod_length / T::lit(4.0);
    let nodes = lattice
        .iter()
        .map(|p| Vector3::new(T::lit(p[0] as f64), T::lit(p[1] as f64), T::lit(p[2] as f64)) * quarter)
        .collect();
    let mut rods = Vec::with_capacity(ROD_COUNT);
    let mut cables = Vec::with_capacity(CABLE_COUNT);
    for i in 0..NODE_COUNT {
        for j in i + 1..NODE_COUNT {
            match lattice_sq(&lattice[i], &lattice[j]) {
                ROD_SQ => rods.push([i, j]),
                CABLE_SQ => cables.push([i, j]),
                _ => {}
            }
        }
    }
    debug_assert_eq!(rods.len(), ROD_COUNT);
    debug_assert_eq!(cables.len(), CABLE_COUNT);
    Ok(TensegrityTopology {
        nodes,
        rods,
        faces: cable_triangles(&cables),
        cables,
        actuated_cables: DEFAULT_GAIT.to_vec(),
        rod_length,
        cable_rest_length: rod_length * T::lit(6f64.sqrt() / 4.0),
        lattice,
    })
}

/// Node triples whose three pairwise links are all cables, sorted.
fn cable_triangles(cables: &[[usize; 2]]) -> Vec<[usize; 3]> {
    let linked = |a: usize, b: usize| cables.binary_search(&[a.min(b), a.max(b)]).is_ok();
    let mut faces = Vec::new();
    for i in 0..NODE_COUNT {
        for j in i + 1..NODE_COUNT {
            if !linked(i, j) {
                continue;
            }
            for k in j + 1..NODE_COUNT {
                if linked(i, k) && linked(j, k) {
                    faces.push([i, j, k]);
                }
            }
        }
    }
    faces
}

/// The stable faces of `topology`, indexed as everywhere else in the crate.
pub fn stable_faces<T: Real>(topology: &TensegrityTopology<T>) -> &[[usize; 3]] {
    &topology.faces
}

impl<T: Real> TensegrityTopology<T> {
    pub fn with_actuated(mut self, actuated: Vec<usize>) -> Result<Self> {
        ActuatorMap::new(actuated.clone(), 0.0)?;
        self.actuated_cables = actuated;
        Ok(self)
    }

    /// Integer lattice coordinates of a node (units of `rod_length / 4`).
    pub fn lattice(&self, node: usize) -> Lattice {
        if self.lattice.is_empty() {
            lattice_nodes()[node]
        } else {
            self.lattice[node]
        }
    }

    pub fn node_at(&self, p: Lattice) -> Option<usize> {
        (0..NODE_COUNT).find(|&i| self.lattice(i) == p)
    }

    pub fn cable_between(&self, a: usize, b: usize) -> Option<usize> {
        let key = [a.min(b), a.max(b)];
        self.cables.binary_search(&key).ok()
    }

    pub fn rod_of(&self, node: usize) -> usize {
        self.rods.iter().position(|r| r.contains(&node)).expect("every node lies on a rod")
    }

    /// The other end of the rod through `node`.
    pub fn rod_partner(&self, node: usize) -> usize {
        let r = self.rods[self.rod_of(node)];
        if r[0] == node {
            r[1]
        } else {
            r[0]
        }
    }

    pub fn cable_neighbors(&self, node: usize) -> Vec<usize> {
        self.cables
            .iter()
            .filter_map(|c| match *c {
                [a, b] if a == node => Some(b),
                [a, b] if b == node => Some(a),
                _ => None,
            })
            .collect()
    }

    /// Index of the stable face equal to `triple` (any order).
    pub fn face_index(&self, triple: [usize; 3]) -> Option<usize> {
        let mut t = triple;
        t.sort_unstable();
        stable_faces(self).iter().position(|f| *f == t)
    }

    /// Node permutation induced by a signed axis permutation of the body frame:
    /// new coordinate `k` is `signs[k] * old[perm[k]]`. `None` if the map is not
    /// a symmetry of the structure.
    pub fn symmetry_map(&self, perm: [usize; 3], signs: [i8; 3]) -> Option<Vec<usize>> {
        let mut image = Vec::with_capacity(NODE_COUNT);
        for i in 0..NODE_COUNT {
            let p = self.lattice(i);
            let q = [signs[0] * p[perm[0]], signs[1] * p[perm[1]], signs[2] * p[perm[2]]];
            image.push(self.node_at(q)?);
        }
        let preserves = self.rods.iter().all(|r| {
            let s = [image[r[0]].min(image[r[1]]), image[r[0]].max(image[r[1]])];
            self.rods.contains(&s)
        });
        preserves.then_some(image)
    }

    /// Image of a cable under a node permutation.
    pub fn map_cable(&self, cable: usize, node_map: &[usize]) -> Option<usize> {
        let [a, b] = self.cables[cable];
        self.cable_between(node_map[a], node_map[b])
    }

    pub fn to_json(&self) -> String
    where
        T: Serialize,
    {
        serde_json::to_string_pretty(self).expect("topology serializes")
    }
}
