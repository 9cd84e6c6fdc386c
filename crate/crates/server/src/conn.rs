//! One WebSocket connection: handshake, reader loop and writer task.

use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::ws::{Message as WsMessage, WebSocket};
use calmrelay_core::model::ClockRebase;
use calmrelay_core::protocol::{message_type, ErrorCode, Message, MAX_ROOM_NAME};
use futures::stream::SplitStream;
use futures::{SinkExt, StreamExt};

use crate::outbox::Outbox;
use crate::room::{MemberRef, Registry, RoomHandle};

const HELLO_TIMEOUT: Duration = Duration::from_secs(10);
const PING_EVERY: Duration = Duration::from_secs(1);
const ALIVE_EVERY: Duration = Duration::from_millis(250);
/// More consecutive malformed messages than this closes the connection.
pub const MALFORMED_LIMIT: u32 = 100;

pub async fn serve_socket(socket: WebSocket, registry: Arc<Registry>) {
    let (sink, mut stream) = socket.split();
    let outbox = Arc::new(Outbox::new());
    let mut writer = tokio::spawn(write_loop(sink, outbox.clone()));

    match handshake(&mut stream, &registry, &outbox).await {
        Ok((room, member)) => {
            read_loop(&mut stream, &room, &member, &outbox, &mut writer).await;
            room.leave(member).await;
        }
        Err(Some(reply)) => outbox.push_control(reply.to_json()),
        Err(None) => {}
    }
    outbox.close();
    if !writer.is_finished() {
        let _ = tokio::time::timeout(Duration::from_secs(2), &mut writer).await;
    }
}

async fn write_loop(mut sink: futures::stream::SplitSink<WebSocket, WsMessage>, outbox: Arc<Outbox>) {
    let mut ping = tokio::time::interval_at((Instant::now() + PING_EVERY).into(), PING_EVERY);
    loop {
        let sent = tokio::select! {
            next = outbox.recv() => match next {
                Some(m) => sink.send(WsMessage::Text(m.text().clone())).await,
                None => {
                    let _ = sink.send(WsMessage::Close(None)).await;
                    return;
                }
            },
            _ = ping.tick() => sink.send(WsMessage::Ping(Bytes::new())).await,
        };
        if sent.is_err() {
            outbox.close();
            return;
        }
    }
}

type Rejected = Option<Message>;

async fn handshake(
    stream: &mut SplitStream<WebSocket>,
    registry: &Arc<Registry>,
    outbox: &Arc<Outbox>,
) -> Result<(RoomHandle, MemberRef), Rejected> {
    let deadline = tokio::time::Instant::now() + HELLO_TIMEOUT;
    let text = loop {
        let next = tokio::time::timeout_at(deadline, stream.next()).await;
        match next {
            Err(_) => return Err(Some(Message::error(ErrorCode::Protocol, "no HELLO received"))),
            Ok(None | Some(Err(_)) | Some(Ok(WsMessage::Close(_)))) => return Err(None),
            Ok(Some(Ok(WsMessage::Ping(_) | WsMessage::Pong(_)))) => continue,
            Ok(Some(Ok(WsMessage::Binary(_)))) => {
                return Err(Some(Message::error(ErrorCode::Protocol, "binary messages are not supported")))
            }
            Ok(Some(Ok(WsMessage::Text(text)))) => break text,
        }
    };
    if message_type(&text).as_deref() != Some("hello") {
        return Err(Some(Message::error(ErrorCode::Protocol, "first message must be HELLO")));
    }
    let (room, role, mode) = match Message::parse(&text) {
        Ok(Message::Hello { room, role, mode }) => (room, role, mode),
        _ => return Err(Some(Message::error(ErrorCode::BadHello, "HELLO needs room, role and mode"))),
    };
    if room.is_empty() || room.len() > MAX_ROOM_NAME {
        return Err(Some(Message::error(
            ErrorCode::BadHello,
            format!("room name must be 1..={MAX_ROOM_NAME} bytes"),
        )));
    }
    match registry.join(&room, role, mode, outbox).await {
        Ok(joined) => Ok(joined),
        Err(ErrorCode::RoomModeMismatch) => {
            let existing = registry.room(&room).map(|r| r.mode.as_str()).unwrap_or("other");
            Err(Some(Message::error(
                ErrorCode::RoomModeMismatch,
                format!("room {room:?} is a {existing} room"),
            )))
        }
        Err(code) => Err(Some(Message::error(code, "join refused"))),
    }
}

async fn read_loop(
    stream: &mut SplitStream<WebSocket>,
    room: &RoomHandle,
    member: &MemberRef,
    outbox: &Arc<Outbox>,
    writer: &mut tokio::task::JoinHandle<()>,
) {
    let mut rebase = ClockRebase::new();
    let mut strikes = 0u32;
    let mut last_alive = Instant::now();
    loop {
        let next = tokio::select! {
            next = stream.next() => next,
            _ = &mut *writer => return,
        };
        let text = match next {
            None | Some(Err(_)) | Some(Ok(WsMessage::Close(_))) => return,
            Some(Ok(WsMessage::Ping(_) | WsMessage::Pong(_))) => {
                if let MemberRef::Audience(id) = member {
                    if last_alive.elapsed() >= ALIVE_EVERY {
                        last_alive = Instant::now();
                        room.alive(id);
                    }
                }
                continue;
            }
            Some(Ok(WsMessage::Binary(_))) => None,
            Some(Ok(WsMessage::Text(text))) => Some(text),
        };
        let parsed = text.as_deref().map(Message::parse);
        match (member, parsed) {
            (_, Some(Ok(Message::Bye))) => return,
            (MemberRef::Audience(id), Some(Ok(msg @ (Message::Gaze { .. } | Message::Nod { .. })))) => {
                strikes = 0;
                let sample = msg.as_sample().expect("gaze and nod are samples");
                if sample.mode() != room.mode {
                    room.counters.dropped.fetch_add(1, Ordering::Relaxed);
                    continue;
                }
                let t = rebase.rebase(sample.t(), room.now_ms());
                room.offer_sample(id, sample.with_t(t));
            }
            _ => {
                room.counters.malformed.fetch_add(1, Ordering::Relaxed);
                strikes += 1;
                if strikes > MALFORMED_LIMIT {
                    outbox.close_with(
                        Message::error(ErrorCode::MalformedFlood, "too many malformed messages").to_json(),
                    );
                    return;
                }
            }
        }
    }
}
