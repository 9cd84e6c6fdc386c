//! Drives a scenario against a live server over the real wire protocol.

use std::time::{Duration, Instant};

use calmrelay_core::protocol::{message_type, Message, Role, SUBPROTOCOL};
use calmrelay_core::scenario::{SampleStream, ScenarioConfig};
use futures::{SinkExt, StreamExt};
use serde::Deserialize;
use tokio::net::TcpStream;
use tokio::time::sleep_until;
use tokio_tungstenite::tungstenite::client::IntoClientRequest;
use tokio_tungstenite::tungstenite::Message as Ws;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

use crate::report::{evaluate, ReceivedFrame, ScenarioReport, Traffic};

type Socket = WebSocketStream<MaybeTlsStream<TcpStream>>;

const JOIN_TIMEOUT: Duration = Duration::from_secs(5);
/// Speakers keep listening this long after the last sample so final frames land.
const TAIL: Duration = Duration::from_millis(300);
/// Delay between the last join and the first sample.
const LEAD_IN: Duration = Duration::from_millis(200);

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("ERR_CONNECT: {0}")]
    Connect(String),
    #[error("ERR_PROTOCOL: {0}")]
    Protocol(String),
}

/// Runs the scenario and evaluates it.
pub async fn run_scenario(scenario: &ScenarioConfig, url: &str) -> Result<ScenarioReport, SimError> {
    let traffic = collect_traffic(scenario, url).await?;
    Ok(evaluate(scenario, &traffic, &[]))
}

/// Runs the scenario and returns the raw traffic for custom evaluation.
pub async fn collect_traffic(scenario: &ScenarioConfig, url: &str) -> Result<Traffic, SimError> {
    let wall = Instant::now();
    let mut t0 = None;
    let mut speakers = Vec::new();
    for _ in 0..scenario.speakers {
        let (ws, sent) = join(url, scenario, Role::Speaker).await?;
        t0.get_or_insert(sent);
        speakers.push(ws);
    }
    let audiences = futures::future::try_join_all(
        (0..scenario.n_audiences()).map(|_| async { join(url, scenario, Role::Audience).await.map(|j| j.0) }),
    )
    .await?;
    let t0 = t0.unwrap_or_else(Instant::now);
    let start = Instant::now() + LEAD_IN;
    let end = start + Duration::from_secs_f64(scenario.duration_s);
    let stream_start_ms = ms_since(t0, start);

    let speaker_tasks: Vec<_> = speakers
        .into_iter()
        .map(|ws| tokio::spawn(listen(ws, t0, end + TAIL)))
        .collect();
    let audience_tasks: Vec<_> = audiences
        .into_iter()
        .enumerate()
        .map(|(i, ws)| {
            let stream = scenario.stream(i).expect("index below n_audiences");
            tokio::spawn(stream_samples(ws, stream, start, stream_start_ms))
        })
        .collect();

    let mut traffic = Traffic {
        stream_start_ms,
        ..Traffic::default()
    };
    for task in audience_tasks {
        let (sent, errors) = task.await.map_err(|e| SimError::Protocol(e.to_string()))?;
        traffic.samples_sent += sent;
        traffic.protocol_errors.extend(errors);
    }
    for task in speaker_tasks {
        let (frames, errors) = task.await.map_err(|e| SimError::Protocol(e.to_string()))?;
        traffic.speakers.push(frames);
        traffic.protocol_errors.extend(errors);
    }
    traffic.wall_clock_s = wall.elapsed().as_secs_f64();
    Ok(traffic)
}

fn ms_since(t0: Instant, t: Instant) -> f64 {
    t.saturating_duration_since(t0).as_secs_f64() * 1000.0
}

/// Connects and completes the HELLO exchange; returns when ROOM_INFO arrives.
async fn join(url: &str, scenario: &ScenarioConfig, role: Role) -> Result<(Socket, Instant), SimError> {
    let mut req = url
        .into_client_request()
        .map_err(|e| SimError::Connect(format!("{url}: {e}")))?;
    req.headers_mut()
        .insert("Sec-WebSocket-Protocol", SUBPROTOCOL.parse().expect("valid header"));
    let (mut ws, resp) = connect_async(req)
        .await
        .map_err(|e| SimError::Connect(format!("{url}: {e}")))?;
    if resp.headers().get("sec-websocket-protocol").and_then(|v| v.to_str().ok()) != Some(SUBPROTOCOL) {
        return Err(SimError::Protocol(format!("server did not select {SUBPROTOCOL}")));
    }
    let hello = Message::Hello {
        room: scenario.room.clone(),
        role,
        mode: scenario.mode,
    };
    let sent = Instant::now();
    ws.send(Ws::text(hello.to_json()))
        .await
        .map_err(|e| SimError::Connect(e.to_string()))?;
    let deadline = tokio::time::Instant::now() + JOIN_TIMEOUT;
    loop {
        let next = tokio::time::timeout_at(deadline, ws.next())
            .await
            .map_err(|_| SimError::Protocol("no ROOM_INFO after HELLO".into()))?;
        let text = match next {
            Some(Ok(Ws::Text(t))) => t,
            Some(Ok(Ws::Close(_))) | None => return Err(SimError::Protocol("closed during HELLO".into())),
            Some(Err(e)) => return Err(SimError::Connect(e.to_string())),
            Some(Ok(_)) => continue,
        };
        match Message::parse(&text) {
            Ok(Message::RoomInfo { mode, .. }) if mode == scenario.mode => return Ok((ws, sent)),
            Ok(Message::Frame { .. }) => continue,
            Ok(Message::Error { code, detail }) => {
                return Err(SimError::Protocol(format!("{}: {detail}", serde_json::to_string(&code).unwrap_or_default())))
            }
            _ => return Err(SimError::Protocol(format!("unexpected message during HELLO: {text}"))),
        }
    }
}

#[derive(Deserialize)]
struct SeqOnly {
    seq: u64,
}

/// Records every frame until `until`, then says goodbye.
async fn listen(mut ws: Socket, t0: Instant, until: Instant) -> (Vec<ReceivedFrame>, Vec<String>) {
    let mut frames = Vec::new();
    let mut errors = Vec::new();
    let deadline = tokio::time::Instant::from_std(until);
    loop {
        let next = tokio::select! {
            next = ws.next() => next,
            _ = sleep_until(deadline) => break,
        };
        let at = Instant::now();
        match next {
            Some(Ok(Ws::Text(text))) => match message_type(&text).as_deref() {
                Some("frame") => match serde_json::from_str::<SeqOnly>(&text) {
                    Ok(s) => frames.push(ReceivedFrame {
                        at_ms: ms_since(t0, at),
                        seq: s.seq,
                        text: text.to_string(),
                    }),
                    Err(e) => errors.push(format!("bad frame: {e}")),
                },
                Some("room_info") => {}
                _ => errors.push(format!("speaker got unexpected message: {text}")),
            },
            Some(Ok(Ws::Close(_))) | None => {
                errors.push("server closed a speaker connection".into());
                return (frames, errors);
            }
            Some(Err(e)) => {
                errors.push(format!("speaker transport error: {e}"));
                return (frames, errors);
            }
            Some(Ok(_)) => {}
        }
    }
    let _ = ws.send(Ws::text(Message::Bye.to_json())).await;
    let _ = ws.close(None).await;
    (frames, errors)
}

/// Sends one audience's samples on schedule, stamping each with its send time.
async fn stream_samples(ws: Socket, stream: SampleStream, start: Instant, start_ms: f64) -> (u64, Vec<String>) {
    let (mut sink, mut incoming) = ws.split();
    // draining the socket lets pongs go out and surfaces server errors
    let reader = tokio::spawn(async move {
        let mut errors = Vec::new();
        while let Some(msg) = incoming.next().await {
            match msg {
                Ok(Ws::Text(text)) => match message_type(&text).as_deref() {
                    Some("frame" | "room_info") => {}
                    _ => errors.push(format!("audience got unexpected message: {text}")),
                },
                Ok(Ws::Close(_)) => break,
                Ok(_) => {}
                Err(e) => {
                    errors.push(format!("audience transport error: {e}"));
                    break;
                }
            }
        }
        errors
    });
    let mut sent = 0;
    let mut errors = Vec::new();
    let offsets: Vec<i64> = (0..stream.len()).map(|k| stream.offset_ms(k)).collect();
    for (sample, offset) in stream.zip(offsets) {
        sleep_until((start + Duration::from_millis(offset as u64)).into()).await;
        let t = start_ms.round() as i64 + sample.t();
        if let Err(e) = sink.send(Ws::text(Message::from_sample(sample.with_t(t)).to_json())).await {
            errors.push(format!("send failed: {e}"));
            break;
        }
        sent += 1;
    }
    let _ = sink.send(Ws::text(Message::Bye.to_json())).await;
    let _ = sink.close().await;
    // the server closes after BYE; a missing close is not a protocol error
    if let Ok(Ok(mut e)) = tokio::time::timeout(Duration::from_secs(2), reader).await {
        errors.append(&mut e);
    }
    (sent, errors)
}
