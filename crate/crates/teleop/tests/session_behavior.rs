use sixbar_core::harness::ScenarioConfig;
use sixbar_core::policies::PolicyKind;
use sixbar_core::topology::stable_faces;
use sixbar_teleop::{replay, telemetry_digest, Command, Driver, ServerMessage, Session, SessionLog, SessionOptions, TelemetryFrame};

fn session() -> Session {
    Session::new(ScenarioConfig::default(), SessionOptions::default()).unwrap()
}

fn advance(s: &mut Session, wall: f64) -> Vec<TelemetryFrame> {
    let mut out = Vec::new();
    s.advance_to(wall, &mut out).unwrap();
    out
}

#[test]
fn thirty_frames_per_sim_second() {
    let mut s = session();
    advance(&mut s, 0.0);
    let frames = advance(&mut s, 2.0);
    assert!((59..=61).contains(&frames.len()), "{} frames in 2 s", frames.len());
}

#[test]
fn reset_puts_face_on_ground() {
    let mut s = session();
    advance(&mut s, 0.5);
    s.handle(&Command::Reset { face: 2 }).unwrap();
    let next = advance(&mut s, 0.5);
    assert_eq!(next.len(), 1, "reset emits a frame at once");
    let mut contacts = next[0].contacts.clone();
    contacts.sort_unstable();
    let mut face = stable_faces(&s.state().topology)[2].to_vec();
    face.sort_unstable();
    assert_eq!(contacts, face);
    assert_eq!(next[0].face, Some(2));
}

#[test]
fn paused_session_repeats_state() {
    let mut s = session();
    advance(&mut s, 0.3);
    s.handle(&Command::Pause).unwrap();
    let frames = advance(&mut s, 1.3);
    assert!((29..=31).contains(&frames.len()));
    for w in frames.windows(2) {
        assert!(w[1].wall > w[0].wall);
        assert!(w[1].seq > w[0].seq);
        assert_eq!((w[1].t, &w[1].nodes, &w[1].cables), (w[0].t, &w[0].nodes, &w[0].cables));
        assert!(w[1].paused);
    }
    s.handle(&Command::Resume).unwrap();
    let resumed = advance(&mut s, 1.6);
    assert!(resumed.last().unwrap().t > frames[0].t);
}

#[test]
fn stop_policy_returns_cables_to_neutral() {
    let mut s = session();
    s.handle(&Command::RunPolicy { kind: PolicyKind::Simultaneous, params: None }).unwrap();
    let running = advance(&mut s, 2.5);
    let actuated: Vec<usize> = s.state().topology.actuated_cables.clone();
    let min_fraction = |f: &TelemetryFrame| actuated.iter().map(|&c| f.cables[c].fraction).fold(1.0, f64::min);
    assert!(min_fraction(running.last().unwrap()) < 0.9);
    assert_eq!(running.last().unwrap().policy, Some(PolicyKind::Simultaneous));
    s.handle(&Command::StopPolicy).unwrap();
    let stopped = advance(&mut s, 6.0);
    for w in stopped.windows(2) {
        assert!(min_fraction(&w[1]) >= min_fraction(&w[0]) - 1e-12);
    }
    let last = stopped.last().unwrap();
    assert!(last.policy.is_none());
    assert!(actuated.iter().all(|&c| (last.cables[c].fraction - 1.0).abs() < 1e-12));
}

#[test]
fn commands_apply_in_arrival_order() {
    let mut s = session();
    s.handle(&Command::SetCable { cable: 0, fraction: 0.8 }).unwrap();
    s.handle(&Command::SetCable { cable: 0, fraction: 0.9 }).unwrap();
    let frames = advance(&mut s, 0.1);
    let cable = s.state().topology.actuated_cables[0];
    assert!((frames.last().unwrap().cables[cable].target - 0.9).abs() < 1e-12);
}

#[test]
fn replayed_log_reproduces_telemetry() {
    let config = ScenarioConfig::default();
    let mut log = Vec::new();
    let mut live = Vec::new();
    {
        let session = Session::new(config, SessionOptions::default()).unwrap();
        let mut driver = Driver::new(session, Some(&mut log)).unwrap();
        // irregular ticks, as a real event loop produces
        let mut wall = 0.0;
        let script: [(f64, Option<Command>); 9] = [
            (0.37, Some(Command::SetCable { cable: 1, fraction: 0.75 })),
            (0.91, Some(Command::SetCable { cable: 1, fraction: 1.7 })),
            (1.23, Some(Command::SetSpeed { factor: 2.5 })),
            (1.88, Some(Command::RunPolicy { kind: PolicyKind::Alternating, params: None })),
            (2.61, Some(Command::Pause)),
            (3.05, Some(Command::SetCable { cable: 0, fraction: 0.9 })),
            (3.40, Some(Command::Resume)),
            (4.10, Some(Command::StopPolicy)),
            (4.75, None),
        ];
        for (seq, (at, cmd)) in script.into_iter().enumerate() {
            while wall + 0.0137 < at {
                wall += 0.0137;
                driver.advance(wall, &mut live).unwrap();
            }
            if let Some(cmd) = cmd {
                driver.command(at, seq as u64, cmd, &mut live).unwrap();
            }
        }
        driver.finish(4.75, &mut live).unwrap();
    }
    let live_frames: Vec<&TelemetryFrame> = live
        .iter()
        .filter_map(|m| if let ServerMessage::Telemetry(f) = m { Some(&**f) } else { None })
        .collect();
    assert!(live_frames.len() > 100);
    let parsed = SessionLog::parse(std::str::from_utf8(&log).unwrap()).unwrap();
    let replayed = replay(&parsed).unwrap();
    assert!(replayed.fault.is_none());
    assert_eq!(replayed.digest(), telemetry_digest(live_frames.iter().copied()));
    // rejections replay too
    let rejected = |ms: &[ServerMessage]| ms.iter().filter(|m| matches!(m, ServerMessage::Rejected { .. })).count();
    assert_eq!(rejected(&replayed.messages), 2);
    assert_eq!(rejected(&live), 2);
}
