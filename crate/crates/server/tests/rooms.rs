use std::collections::BTreeMap;
use std::time::Duration;

use calmrelay_core::record::{read_log, replay};
use calmrelay_server::{Server, ServerConfig};
use futures::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::client::IntoClientRequest;
use tokio_tungstenite::tungstenite::Message as Ws;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

type Client = WebSocketStream<MaybeTlsStream<TcpStream>>;

async fn start(tweak: impl FnOnce(&mut ServerConfig)) -> Server {
    let mut config = ServerConfig {
        listen: "127.0.0.1:0".parse().unwrap(),
        ..ServerConfig::default()
    };
    tweak(&mut config);
    Server::start(config).await.unwrap()
}

async fn connect(server: &Server) -> Client {
    let mut req = server.ws_url().into_client_request().unwrap();
    req.headers_mut()
        .insert("Sec-WebSocket-Protocol", "calmrelay.v1".parse().unwrap());
    let (ws, resp) = connect_async(req).await.unwrap();
    assert_eq!(resp.headers()["sec-websocket-protocol"], "calmrelay.v1");
    ws
}

async fn join(server: &Server, room: &str, role: &str, mode: &str) -> Client {
    let mut ws = connect(server).await;
    send(&mut ws, json!({"type": "hello", "room": room, "role": role, "mode": mode})).await;
    ws
}

async fn send(ws: &mut Client, v: Value) {
    ws.send(Ws::text(v.to_string())).await.unwrap();
}

/// Next text message, or `None` when the server closed the connection.
async fn next_text(ws: &mut Client) -> Option<String> {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(5), ws.next())
            .await
            .expect("timed out waiting for a message");
        match msg {
            Some(Ok(Ws::Text(t))) => return Some(t.to_string()),
            Some(Ok(Ws::Close(_))) | None | Some(Err(_)) => return None,
            Some(Ok(_)) => continue,
        }
    }
}

async fn next_of(ws: &mut Client, kind: &str) -> Value {
    loop {
        let text = next_text(ws).await.unwrap_or_else(|| panic!("closed while waiting for {kind}"));
        let v: Value = serde_json::from_str(&text).unwrap();
        if v["type"] == kind {
            return v;
        }
    }
}

async fn wait_for(mut check: impl AsyncFnMut() -> bool) {
    for _ in 0..200 {
        if check().await {
            return;
        }
        tokio::time::sleep(Duration::from_millis(25)).await;
    }
    panic!("condition never held");
}

#[tokio::test]
async fn mode_mismatch_is_refused() {
    let server = start(|_| {}).await;
    let mut a = join(&server, "talk", "audience", "gaze").await;
    next_of(&mut a, "room_info").await;
    let mut s = join(&server, "talk", "speaker", "nod").await;
    let err = next_of(&mut s, "error").await;
    assert_eq!(err["code"], "ERR_ROOM_MODE_MISMATCH");
    assert_eq!(next_text(&mut s).await, None);
}

#[tokio::test]
async fn handshake_errors() {
    let server = start(|_| {}).await;
    let mut ws = connect(&server).await;
    send(&mut ws, json!({"type": "gaze", "t": 0, "x": 0.5, "y": 0.5})).await;
    assert_eq!(next_of(&mut ws, "error").await["code"], "ERR_PROTOCOL");

    let mut ws = connect(&server).await;
    send(&mut ws, json!({"type": "hello", "room": "r", "mode": "gaze"})).await;
    assert_eq!(next_of(&mut ws, "error").await["code"], "ERR_BAD_HELLO");

    let mut ws = join(&server, &"x".repeat(129), "speaker", "gaze").await;
    assert_eq!(next_of(&mut ws, "error").await["code"], "ERR_BAD_HELLO");
}

#[tokio::test]
async fn room_tracks_joins_and_leaves() {
    let server = start(|_| {}).await;
    let mut speaker = join(&server, "count", "speaker", "gaze").await;
    let mut audiences = Vec::new();
    for _ in 0..20 {
        let mut a = join(&server, "count", "audience", "gaze").await;
        next_of(&mut a, "room_info").await;
        audiences.push(a);
    }
    let mut bye = audiences.pop().unwrap();
    send(&mut bye, json!({"type": "bye"})).await;
    let reg = server.registry.clone();
    wait_for(async || reg.stats("count").await.unwrap().n_audiences == 19).await;
    // the speaker's latest room_info agrees
    loop {
        let info = next_of(&mut speaker, "room_info").await;
        if info["n_audiences"] == 19 {
            assert_eq!(info["mode"], "gaze");
            break;
        }
    }
    // dropping the transport without BYE also leaves
    drop(audiences.pop());
    wait_for(async || reg.stats("count").await.unwrap().n_audiences == 18).await;
}

#[tokio::test]
async fn samples_are_admitted_or_counted_as_dropped() {
    let server = start(|_| {}).await;
    let mut a = join(&server, "ingest", "audience", "gaze").await;
    next_of(&mut a, "room_info").await;
    // a real-time 30 Hz stream
    let mut pace = tokio::time::interval(Duration::from_micros(33_333));
    for k in 0..100 {
        pace.tick().await;
        send(&mut a, json!({"type": "gaze", "t": 1_000_000 + k * 33, "x": 0.5, "y": 0.5})).await;
    }
    send(&mut a, json!({"type": "nod", "t": 9999, "vx": 0.0, "vy": 1.0})).await;
    let reg = server.registry.clone();
    wait_for(async || reg.stats("ingest").await.unwrap().dropped == 1).await;
    let stats = reg.stats("ingest").await.unwrap();
    assert_eq!((stats.admitted, stats.rejected, stats.malformed), (100, 0, 0));
}

#[tokio::test]
async fn speakers_get_identical_consecutive_frames() {
    let server = start(|_| {}).await;
    let mut s1 = join(&server, "same", "speaker", "gaze").await;
    let mut s2 = join(&server, "same", "speaker", "gaze").await;
    let mut a = join(&server, "same", "audience", "gaze").await;
    send(&mut a, json!({"type": "gaze", "t": 0, "x": 0.3, "y": 0.4})).await;

    let collect = async |ws: &mut Client| {
        let mut frames = BTreeMap::new();
        while frames.len() < 20 {
            let text = next_text(ws).await.unwrap();
            let v: Value = serde_json::from_str(&text).unwrap();
            if v["type"] == "frame" {
                assert_eq!(v["mode"], "heatmap");
                frames.insert(v["seq"].as_u64().unwrap(), text);
            }
        }
        frames
    };
    let f1 = collect(&mut s1).await;
    let f2 = collect(&mut s2).await;
    let seqs: Vec<u64> = f1.keys().copied().collect();
    assert!(seqs.windows(2).all(|w| w[1] == w[0] + 1), "gap in {seqs:?}");
    let mut shared = 0;
    for (seq, text) in &f1 {
        if let Some(other) = f2.get(seq) {
            assert_eq!(text, other);
            shared += 1;
        }
    }
    assert!(shared >= 10);
    // gaze audiences never receive frames
    send(&mut a, json!({"type": "bye"})).await;
    while let Some(text) = next_text(&mut a).await {
        assert_ne!(serde_json::from_str::<Value>(&text).unwrap()["type"], "frame");
    }
}

#[tokio::test]
async fn nod_audiences_see_trails() {
    let server = start(|_| {}).await;
    let mut a = join(&server, "nods", "audience", "nod").await;
    send(&mut a, json!({"type": "nod", "t": 0, "vx": 0.0, "vy": 0.5})).await;
    let frame = next_of(&mut a, "frame").await;
    assert_eq!(frame["mode"], "trails");
    assert_eq!(frame["payload"]["slots"].as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn malformed_flood_disconnects() {
    let server = start(|_| {}).await;
    let mut a = join(&server, "flood", "audience", "gaze").await;
    for k in 0..101 {
        a.send(Ws::text(format!("not json {k}"))).await.unwrap();
    }
    let err = next_of(&mut a, "error").await;
    assert_eq!(err["code"], "ERR_MALFORMED_FLOOD");
    assert_eq!(next_text(&mut a).await, None);
    assert_eq!(server.registry.stats("flood").await.unwrap().n_audiences, 0);
}

#[tokio::test]
async fn a_hundred_malformed_messages_are_tolerated() {
    let server = start(|_| {}).await;
    let mut a = join(&server, "tolerant", "audience", "gaze").await;
    next_of(&mut a, "room_info").await;
    for _ in 0..2 {
        for _ in 0..100 {
            a.send(Ws::text("{}")).await.unwrap();
        }
        send(&mut a, json!({"type": "gaze", "t": 0, "x": 0.1, "y": 0.1})).await;
    }
    let reg = server.registry.clone();
    wait_for(async || reg.stats("tolerant").await.unwrap().admitted == 2).await;
    assert_eq!(reg.stats("tolerant").await.unwrap().n_audiences, 1);
}

#[tokio::test]
async fn silent_audience_is_evicted() {
    let server = start(|c| c.room.liveness_s = 0.5).await;
    let mut speaker = join(&server, "quiet", "speaker", "gaze").await;
    // never read, so pings go unanswered
    let mut a = join(&server, "quiet", "audience", "gaze").await;
    assert_eq!(next_of(&mut speaker, "room_info").await["n_audiences"], 0);
    let reg = server.registry.clone();
    wait_for(async || reg.stats("quiet").await.is_some_and(|s| s.evicted == 1)).await;
    assert_eq!(next_of(&mut speaker, "room_info").await["n_audiences"], 1);
    assert_eq!(next_of(&mut speaker, "room_info").await["n_audiences"], 0);
    assert_eq!(next_of(&mut a, "error").await["code"], "ERR_EVICTED");
}

#[tokio::test]
async fn empty_room_is_destroyed_after_grace() {
    let server = start(|c| c.room.empty_grace_s = 0.2).await;
    let mut s = join(&server, "brief", "speaker", "nod").await;
    next_of(&mut s, "room_info").await;
    send(&mut s, json!({"type": "bye"})).await;
    let reg = server.registry.clone();
    wait_for(async || reg.room("brief").is_none()).await;
    // the name is free for another mode now
    let mut g = join(&server, "brief", "speaker", "gaze").await;
    assert_eq!(next_of(&mut g, "room_info").await["mode"], "gaze");
}

#[tokio::test]
async fn recorded_session_replays() {
    let dir = tempfile::tempdir().unwrap();
    let server = start(|c| {
        c.room.record = true;
        c.record_dir = dir.path().to_owned();
    })
    .await;
    let mut s = join(&server, "taped", "speaker", "nod").await;
    let mut a = join(&server, "taped", "audience", "nod").await;
    for k in 0..30 {
        send(&mut a, json!({"type": "nod", "t": k * 33, "vx": 0.1, "vy": (k as f64 * 0.7).sin()})).await;
        tokio::time::sleep(Duration::from_millis(33)).await;
    }
    let mut last = 0;
    while last < 20 {
        last = next_of(&mut s, "frame").await["seq"].as_u64().unwrap();
    }
    send(&mut a, json!({"type": "bye"})).await;
    send(&mut s, json!({"type": "bye"})).await;
    let paths = server.registry.recordings();
    server.shutdown().await;
    // the recorder flushes at least once a second
    tokio::time::sleep(Duration::from_millis(1500)).await;
    let bytes = std::fs::read(&paths[0]).unwrap();
    let log = read_log(&bytes[..]).unwrap();
    assert_eq!(log.header.room, "taped");
    let report = replay(&log).unwrap();
    assert!(report.frames_checked >= 20);
    assert_eq!(report.samples_replayed, 30);
}

#[tokio::test]
async fn serves_static_files() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<h1>calm</h1>").unwrap();
    let server = start(|c| c.static_dir = Some(dir.path().to_owned())).await;
    let mut tcp = TcpStream::connect(server.addr).await.unwrap();
    use tokio::io::{AsyncReadExt, AsyncWriteExt};
    tcp.write_all(b"GET / HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n").await.unwrap();
    let mut body = String::new();
    tcp.read_to_string(&mut body).await.unwrap();
    assert!(body.starts_with("HTTP/1.1 200"));
    assert!(body.ends_with("<h1>calm</h1>"));
}

#[tokio::test]
async fn wait_keeps_serving() {
    let server = start(|_| {}).await;
    let url = server.ws_url();
    let serving = tokio::spawn(server.wait());
    tokio::time::sleep(Duration::from_millis(300)).await;
    assert!(!serving.is_finished());
    let (mut ws, _) = connect_async(url).await.unwrap();
    send(&mut ws, json!({"type": "hello", "room": "w", "role": "speaker", "mode": "gaze"})).await;
    assert_eq!(next_of(&mut ws, "room_info").await["n_audiences"], 0);
    serving.abort();
}
