//! Wire messages. Every frame is one JSON object whose `type` field names
//! the message kind; commands carry their operation in an `op` field.
//!
//! ```json
//! {"type":"command","seq":4,"op":"set_cable","cable":2,"fraction":0.7}
//! {"type":"rejected","seq":4,"reason":"fraction_out_of_range","detail":"..."}
//! ```

use serde::{Deserialize, Serialize};
use sixbar_core::harness::ScenarioConfig;
use sixbar_core::policies::{PolicyKind, PolicyParams};
use sixbar_core::Margins;

pub const PROTOCOL_VERSION: u32 = 1;

/// Operator command. Cable indices are actuator slots (gait order), not
/// topology cable indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Command {
    SetCable { cable: usize, fraction: f64 },
    RunPolicy {
        kind: PolicyKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        params: Option<PolicyParams>,
    },
    StopPolicy,
    SetIncline { degrees: f64 },
    Reset { face: usize },
    Pause,
    Resume,
    SetSpeed { factor: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Command {
        seq: u64,
        #[serde(flatten)]
        command: Command,
    },
}

/// Machine-readable rejection codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    FractionOutOfRange,
    CableOutOfRange,
    FaceOutOfRange,
    InclineOutOfRange,
    SpeedOutOfRange,
    /// Manual cable commands are locked while a policy drives the cables.
    PolicyActive,
    InvalidPolicy,
    ResetFailed,
    SimulationFault,
    Malformed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub reason: RejectReason,
    pub detail: String,
}

impl Rejection {
    pub fn new(reason: RejectReason, detail: impl Into<String>) -> Self {
        Rejection { reason, detail: detail.into() }
    }
}

impl std::fmt::Display for Rejection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.detail)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CableTelemetry {
    /// Current commanded rest length over neutral rest length.
    pub fraction: f64,
    pub target: f64,
    /// Newtons; zero when slack.
    pub tension: f64,
    pub actuated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TelemetryFrame {
    pub seq: u64,
    /// Simulation time since the session started (s).
    pub t: f64,
    /// Session wall-clock time this frame belongs to (s).
    pub wall: f64,
    pub paused: bool,
    pub speed: f64,
    pub incline_deg: f64,
    /// Node positions in the plane frame (cm).
    pub nodes: Vec<[f64; 3]>,
    pub com: [f64; 3],
    pub projected_com: [f64; 2],
    /// Counterclockwise hull of the contacts; empty with fewer than three.
    pub support_polygon: Vec<[f64; 2]>,
    pub margins: Option<Margins>,
    pub cables: Vec<CableTelemetry>,
    pub contacts: Vec<usize>,
    pub face: Option<usize>,
    /// CoM displacement along the uphill axis since the session started (cm).
    pub distance: f64,
    pub policy: Option<PolicyKind>,
}

/// Static description of the robot sent once per connection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub protocol: u32,
    pub config: ScenarioConfig,
    pub frame_rate: f64,
    pub rods: Vec<[usize; 2]>,
    pub cables: Vec<[usize; 2]>,
    /// Topology cable index of each actuator slot.
    pub actuated_cables: Vec<usize>,
    pub faces: Vec<[usize; 3]>,
    pub min_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello(Box<Hello>),
    Ack { seq: u64, t: f64 },
    Rejected {
        seq: u64,
        #[serde(flatten)]
        rejection: Rejection,
    },
    Telemetry(Box<TelemetryFrame>),
    /// Protocol-level fault not tied to a command (e.g. unparsable input).
    Error {
        #[serde(flatten)]
        rejection: Rejection,
    },
    /// Last message of a stream.
    End { reason: String },
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}
