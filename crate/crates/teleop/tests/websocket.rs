use std::time::Duration;

use futures::{SinkExt, StreamExt};
use serde_json::Value;
use sixbar_core::harness::ScenarioConfig;
use sixbar_teleop::server::{router, ServerConfig};
use sixbar_teleop::SessionLog;
use tokio_tungstenite::tungstenite::Message;

async fn next_json<S>(ws: &mut S) -> Value
where
    S: StreamExt<Item = Result<Message, tokio_tungstenite::tungstenite::Error>> + Unpin,
{
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(20), ws.next()).await.unwrap().unwrap().unwrap();
        if let Message::Text(text) = msg {
            return serde_json::from_str(text.as_str()).unwrap();
        }
    }
}

async fn reply_to<S>(ws: &mut S, seq: u64) -> Value
where
    S: StreamExt<Item = Result<Message, tokio_tungstenite::tungstenite::Error>> + Unpin,
{
    loop {
        let v = next_json(ws).await;
        if v["seq"] == seq && v["type"] != "telemetry" {
            return v;
        }
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn websocket_session() {
    let logs = std::env::temp_dir().join(format!("sixbar-ws-{}", std::process::id()));
    let mut config = ServerConfig::new(ScenarioConfig::default());
    config.log_dir = Some(logs.clone());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router(config)).await.unwrap() });

    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/ws")).await.unwrap();
    let hello = next_json(&mut ws).await;
    assert_eq!(hello["type"], "hello");
    assert_eq!(hello["actuated_cables"].as_array().unwrap().len(), 6);

    let frame = loop {
        let v = next_json(&mut ws).await;
        if v["type"] == "telemetry" {
            break v;
        }
    };
    assert_eq!(frame["nodes"].as_array().unwrap().len(), 12);
    assert_eq!(frame["cables"].as_array().unwrap().len(), 24);

    let send = |v: &str| Message::Text(v.to_owned().into());
    ws.send(send(r#"{"type":"command","seq":1,"op":"set_cable","cable":0,"fraction":1.5}"#)).await.unwrap();
    let r = reply_to(&mut ws, 1).await;
    assert_eq!(r["type"], "rejected");
    assert_eq!(r["reason"], "fraction_out_of_range");

    ws.send(send(r#"{"type":"command","seq":2,"op":"set_cable","cable":0,"fraction":0.8}"#)).await.unwrap();
    assert_eq!(reply_to(&mut ws, 2).await["type"], "ack");

    ws.send(send(r#"{"type":"bogus"}"#)).await.unwrap();
    let err = loop {
        let v = next_json(&mut ws).await;
        if v["type"] == "error" {
            break v;
        }
    };
    assert_eq!(err["reason"], "malformed");

    ws.close(None).await.unwrap();
    // the session thread closes its log once it sees the disconnect
    let mut log = None;
    for _ in 0..100 {
        tokio::time::sleep(Duration::from_millis(50)).await;
        if let Some(entry) = std::fs::read_dir(&logs).ok().and_then(|mut d| d.next()) {
            let parsed = SessionLog::load(&entry.unwrap().path());
            if let Some(l) = parsed.ok().filter(|l| l.end.is_some()) {
                log = Some(l);
                break;
            }
        }
    }
    let log = log.expect("session log with end marker");
    assert_eq!(log.commands.len(), 2);
    let _ = std::fs::remove_dir_all(&logs);
}
