//! Teleoperation service for the six-bar tensegrity simulator.
//!
//! A [`Session`] advances one robot in paced sim time and answers operator
//! commands. [`Driver`] wraps a session with a JSON-lines log so that any
//! live session can be replayed frame for frame, and [`server`] exposes
//! sessions over a websocket.

pub mod error;
pub mod log;
pub mod outbox;
pub mod protocol;
pub mod server;
pub mod session;

pub use error::{Result, TeleopError};
pub use log::{replay, telemetry_digest, Driver, LogEntry, SessionLog};
pub use protocol::{ClientMessage, Command, RejectReason, Rejection, ServerMessage, TelemetryFrame};
pub use session::{Session, SessionOptions};
