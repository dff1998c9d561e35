//! Session logs and replay.
//!
//! A log is JSON lines: one `header` entry with the scenario, then one
//! `command` entry per received command stamped with the session wall time
//! it was applied at, then an `end` entry. Wall times are the only clock a
//! session reads, so replaying the entries through a fresh session
//! regenerates the telemetry exactly.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sixbar_core::harness::ScenarioConfig;

use crate::error::{Result, TeleopError};
use crate::protocol::{Command, ServerMessage, TelemetryFrame, PROTOCOL_VERSION};
use crate::session::{Session, SessionOptions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogEntry {
    Header { protocol: u32, config: Box<ScenarioConfig>, options: SessionOptions },
    Command {
        wall: f64,
        seq: u64,
        #[serde(flatten)]
        command: Command,
    },
    End { wall: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SessionLog {
    pub config: ScenarioConfig,
    pub options: SessionOptions,
    /// `(wall, seq, command)` in arrival order.
    pub commands: Vec<(f64, u64, Command)>,
    /// Wall time of the end marker; `None` for a truncated log.
    pub end: Option<f64>,
}

impl SessionLog {
    pub fn parse(text: &str) -> Result<Self> {
        let bad = |line: usize, message: String| TeleopError::Log { line, message };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (config, options) = match lines.next() {
            Some((i, l)) => match serde_json::from_str(l).map_err(|e| bad(i + 1, e.to_string()))? {
                LogEntry::Header { protocol, config, options } => {
                    if protocol != PROTOCOL_VERSION {
                        return Err(bad(i + 1, format!("unsupported protocol {protocol}")));
                    }
                    (*config, options)
                }
                _ => return Err(bad(i + 1, "first entry must be the header".into())),
            },
            None => return Err(bad(0, "empty log".into())),
        };
        let mut log = SessionLog { config, options, commands: Vec::new(), end: None };
        for (i, l) in lines {
            if log.end.is_some() {
                return Err(bad(i + 1, "entry after end marker".into()));
            }
            match serde_json::from_str(l).map_err(|e| bad(i + 1, e.to_string()))? {
                LogEntry::Command { wall, seq, command } => log.commands.push((wall, seq, command)),
                LogEntry::End { wall } => log.end = Some(wall),
                LogEntry::Header { .. } => return Err(bad(i + 1, "duplicate header".into())),
            }
        }
        Ok(log)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// A session plus its log. Both the live server and [`replay`] drive
/// sessions through this type, so the two see identical call sequences.
pub struct Driver<W: Write> {
    session: Session,
    log: Option<W>,
    frames: Vec<TelemetryFrame>,
}

fn write_entry<W: Write>(log: &mut Option<W>, entry: &LogEntry) -> Result<()> {
    if let Some(w) = log {
        serde_json::to_writer(&mut *w, entry).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
        w.flush()?;
    }
    Ok(())
}

impl<W: Write> Driver<W> {
    pub fn new(session: Session, mut log: Option<W>) -> Result<Self> {
        let header = LogEntry::Header {
            protocol: PROTOCOL_VERSION,
            config: Box::new(session.config().clone()),
            options: session.options().clone(),
        };
        write_entry(&mut log, &header)?;
        Ok(Driver { session, log, frames: Vec::new() })
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    /// Advances to `wall`, appending due frames to `out`.
    pub fn advance(&mut self, wall: f64, out: &mut Vec<ServerMessage>) -> Result<()> {
        let result = self.session.advance_to(wall, &mut self.frames);
        out.extend(self.frames.drain(..).map(|f| ServerMessage::Telemetry(Box::new(f))));
        Ok(result?)
    }

    /// Advances to `wall`, then applies and logs `command`; the ack or
    /// rejection follows any frames in `out`.
    pub fn command(&mut self, wall: f64, seq: u64, command: Command, out: &mut Vec<ServerMessage>) -> Result<()> {
        self.advance(wall, out)?;
        let wall = self.session.wall();
        write_entry(&mut self.log, &LogEntry::Command { wall, seq, command: command.clone() })?;
        out.push(match self.session.handle(&command) {
            Ok(()) => ServerMessage::Ack { seq, t: self.session.sim_time() },
            Err(rejection) => ServerMessage::Rejected { seq, rejection },
        });
        Ok(())
    }

    /// Advances to `wall` and writes the end marker. A simulation fault
    /// still closes the log before it is reported.
    pub fn finish(&mut self, wall: f64, out: &mut Vec<ServerMessage>) -> Result<()> {
        let advanced = self.advance(wall, out);
        write_entry(&mut self.log, &LogEntry::End { wall: self.session.wall() })?;
        advanced
    }
}

pub struct Replay {
    pub messages: Vec<ServerMessage>,
    /// Set if the simulation faulted partway through.
    pub fault: Option<TeleopError>,
}

impl Replay {
    pub fn frames(&self) -> impl Iterator<Item = &TelemetryFrame> {
        self.messages.iter().filter_map(|m| match m {
            ServerMessage::Telemetry(f) => Some(&**f),
            _ => None,
        })
    }

    pub fn digest(&self) -> String {
        telemetry_digest(self.frames())
    }
}

/// Re-runs a logged session and collects every message it produced.
pub fn replay(log: &SessionLog) -> Result<Replay> {
    let session = Session::new(log.config.clone(), log.options.clone())?;
    let mut driver = Driver::<std::io::Sink>::new(session, None)?;
    let mut messages = Vec::new();
    let mut run = || -> Result<()> {
        for (wall, seq, command) in &log.commands {
            driver.command(*wall, *seq, command.clone(), &mut messages)?;
        }
        if let Some(end) = log.end {
            driver.finish(end, &mut messages)?;
        }
        Ok(())
    };
    let fault = run().err();
    Ok(Replay { messages, fault })
}

/// SHA-256 over the frames' JSON lines, as lowercase hex.
pub fn telemetry_digest<'a>(frames: impl IntoIterator<Item = &'a TelemetryFrame>) -> String {
    let mut hasher = Sha256::new();
    for f in frames {
        hasher.update(serde_json::to_vec(f).expect("frames serialize"));
        hasher.update(b"\n");
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_round_trip() {
        let session = Session::new(ScenarioConfig::default(), SessionOptions::default()).unwrap();
        let mut buf = Vec::new();
        let mut out = Vec::new();
        let mut driver = Driver::new(session, Some(&mut buf)).unwrap();
        driver.command(0.1, 1, Command::SetCable { cable: 1, fraction: 0.8 }, &mut out).unwrap();
        driver.command(0.2, 2, Command::Pause, &mut out).unwrap();
        driver.finish(0.3, &mut out).unwrap();
        drop(driver);
        let log = SessionLog::parse(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(log.commands.len(), 2);
        assert_eq!(log.commands[0], (0.1, 1, Command::SetCable { cable: 1, fraction: 0.8 }));
        assert_eq!(log.end, Some(0.3));
    }

    #[test]
    fn header_required_first() {
        let err = SessionLog::parse(r#"{"type":"end","wall":1.0}"#).unwrap_err();
        assert!(matches!(err, TeleopError::Log { line: 1, .. }));
    }
}
