//! Room registry and the per-room task that owns a [`RoomEngine`].

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, Weak};
use std::time::{Duration, Instant};

use axum::extract::ws::Utf8Bytes;
use calmrelay_core::model::{AudienceId, Millis, Mode, RawSample};
use calmrelay_core::protocol::{ErrorCode, Message, Role};
use calmrelay_core::record::{LogHeader, MembershipEvent, Record, SampleBody};
use calmrelay_core::room::{mix64, JoinError};
use calmrelay_core::RoomEngine;
use tokio::sync::{mpsc, oneshot};
use tokio::time::MissedTickBehavior;

use crate::config::ServerConfig;
use crate::outbox::Outbox;
use crate::recorder::Recorder;

const COMMAND_QUEUE: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum MemberRef {
    Audience(AudienceId),
    Speaker(u64),
}

pub(crate) enum RoomCmd {
    Join {
        role: Role,
        outbox: Arc<Outbox>,
        reply: oneshot::Sender<Result<MemberRef, ErrorCode>>,
    },
    Sample {
        audience: AudienceId,
        sample: RawSample,
    },
    Alive {
        audience: AudienceId,
    },
    Leave {
        member: MemberRef,
    },
    Stats {
        reply: oneshot::Sender<RoomStats>,
    },
}

#[derive(Debug, Default)]
pub struct RoomCounters {
    /// Samples of the wrong kind or shed because the room queue was full.
    pub dropped: AtomicU64,
    /// Messages that failed to parse or made no sense for the sender's role.
    pub malformed: AtomicU64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoomStats {
    pub n_audiences: usize,
    pub n_speakers: usize,
    pub tick_seq: u64,
    pub admitted: u64,
    pub rejected: u64,
    pub dropped: u64,
    pub malformed: u64,
    pub evicted: u64,
    pub recording: Option<PathBuf>,
}

#[derive(Clone)]
pub struct RoomHandle {
    id: u64,
    pub name: Arc<str>,
    pub mode: Mode,
    /// Room time zero; frame `seq` is due at `epoch + seq * period`.
    pub epoch: Instant,
    pub counters: Arc<RoomCounters>,
    tx: mpsc::Sender<RoomCmd>,
}

impl RoomHandle {
    pub fn now_ms(&self) -> Millis {
        self.epoch.elapsed().as_millis() as Millis
    }

    /// Never waits; a full queue sheds the sample.
    pub fn offer_sample(&self, audience: &AudienceId, sample: RawSample) {
        let cmd = RoomCmd::Sample {
            audience: audience.clone(),
            sample,
        };
        if self.tx.try_send(cmd).is_err() {
            self.counters.dropped.fetch_add(1, Ordering::Relaxed);
        }
    }

    pub fn alive(&self, audience: &AudienceId) {
        let _ = self.tx.try_send(RoomCmd::Alive {
            audience: audience.clone(),
        });
    }

    pub async fn leave(&self, member: MemberRef) {
        let _ = self.tx.send(RoomCmd::Leave { member }).await;
    }

    pub async fn stats(&self) -> Option<RoomStats> {
        let (reply, rx) = oneshot::channel();
        self.tx.send(RoomCmd::Stats { reply }).await.ok()?;
        rx.await.ok()
    }
}

pub struct Registry {
    config: ServerConfig,
    rooms: Mutex<HashMap<String, RoomHandle>>,
    next_id: AtomicU64,
    recordings: Mutex<Vec<PathBuf>>,
}

impl Registry {
    pub fn new(config: ServerConfig) -> Arc<Registry> {
        Arc::new(Registry {
            config,
            rooms: Mutex::new(HashMap::new()),
            next_id: AtomicU64::new(0),
            recordings: Mutex::new(Vec::new()),
        })
    }

    pub fn config(&self) -> &ServerConfig {
        &self.config
    }

    pub fn room(&self, name: &str) -> Option<RoomHandle> {
        self.rooms.lock().unwrap().get(name).cloned()
    }

    pub fn room_names(&self) -> Vec<String> {
        self.rooms.lock().unwrap().keys().cloned().collect()
    }

    /// Session logs written so far, oldest first.
    pub fn recordings(&self) -> Vec<PathBuf> {
        self.recordings.lock().unwrap().clone()
    }

    pub async fn stats(&self, name: &str) -> Option<RoomStats> {
        self.room(name)?.stats().await
    }

    /// Joins `name`, creating it in `mode` if needed.
    pub async fn join(
        self: &Arc<Self>,
        name: &str,
        role: Role,
        mode: Mode,
        outbox: &Arc<Outbox>,
    ) -> Result<(RoomHandle, MemberRef), ErrorCode> {
        loop {
            let room = self.get_or_create(name, mode);
            if room.mode != mode {
                return Err(ErrorCode::RoomModeMismatch);
            }
            let (reply, rx) = oneshot::channel();
            let cmd = RoomCmd::Join {
                role,
                outbox: outbox.clone(),
                reply,
            };
            if room.tx.send(cmd).await.is_err() {
                // raced with the room shutting down
                self.remove(name, room.id);
                continue;
            }
            match rx.await {
                Ok(result) => return result.map(|m| (room, m)),
                Err(_) => self.remove(name, room.id),
            }
        }
    }

    fn remove(&self, name: &str, id: u64) {
        let mut rooms = self.rooms.lock().unwrap();
        if rooms.get(name).is_some_and(|r| r.id == id) {
            rooms.remove(name);
        }
    }

    fn get_or_create(self: &Arc<Self>, name: &str, mode: Mode) -> RoomHandle {
        let mut rooms = self.rooms.lock().unwrap();
        if let Some(room) = rooms.get(name) {
            return room.clone();
        }
        let mut config = self.config.room.clone();
        config.mode = mode;
        let seed = match config.seed {
            Some(s) => mix64(s ^ fnv1a(name.as_bytes())),
            None => rand::random(),
        };
        let recorder = if config.record {
            let header = LogHeader::new(name, config.clone(), seed);
            match Recorder::create(&self.config.record_dir, &header) {
                Ok(r) => {
                    self.recordings.lock().unwrap().push(r.path().to_owned());
                    Some(r)
                }
                Err(e) => {
                    tracing::error!(room = name, "cannot open session log: {e}");
                    None
                }
            }
        } else {
            None
        };
        let (tx, rx) = mpsc::channel(COMMAND_QUEUE);
        let handle = RoomHandle {
            id: self.next_id.fetch_add(1, Ordering::Relaxed),
            name: name.into(),
            mode,
            epoch: Instant::now(),
            counters: Arc::default(),
            tx,
        };
        let room = Room {
            engine: RoomEngine::new(config, seed),
            handle: handle.clone(),
            audiences: HashMap::new(),
            speakers: BTreeMap::new(),
            next_speaker: 0,
            last_ms: 0,
            empty_since: Some(Instant::now()),
            evicted: 0,
            recorder,
        };
        tracing::info!(room = name, mode = mode.as_str(), seed, "room created");
        tokio::spawn(room.run(rx, Arc::downgrade(self)));
        rooms.insert(name.to_owned(), handle.clone());
        handle
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

struct Room {
    engine: RoomEngine,
    handle: RoomHandle,
    audiences: HashMap<AudienceId, Arc<Outbox>>,
    speakers: BTreeMap<u64, Arc<Outbox>>,
    next_speaker: u64,
    /// Room time never runs backwards, so log records stay ordered.
    last_ms: Millis,
    empty_since: Option<Instant>,
    evicted: u64,
    recorder: Option<Recorder>,
}

impl Room {
    async fn run(mut self, mut rx: mpsc::Receiver<RoomCmd>, registry: Weak<Registry>) {
        let period = Duration::from_secs_f64(self.engine.config().tick_period_s());
        let grace = Duration::from_secs_f64(self.engine.config().empty_grace_s);
        let mut ticker = tokio::time::interval_at((self.handle.epoch + period).into(), period);
        ticker.set_missed_tick_behavior(MissedTickBehavior::Skip);
        loop {
            tokio::select! {
                biased;
                due = ticker.tick() => {
                    if self.is_empty() {
                        if self.empty_since.is_some_and(|t| t.elapsed() >= grace) {
                            break;
                        }
                        continue;
                    }
                    self.on_tick(due.into_std());
                }
                cmd = rx.recv() => match cmd {
                    Some(cmd) => self.handle(cmd),
                    None => break,
                },
            }
        }
        if let Some(registry) = registry.upgrade() {
            registry.remove(&self.handle.name, self.handle.id);
        }
        rx.close();
        while let Some(cmd) = rx.recv().await {
            // joiners see their reply dropped and retry on a fresh room
            drop(cmd);
        }
        tracing::info!(room = %self.handle.name, frames = self.engine.tick_seq(), "room closed");
    }

    fn clock(&mut self, at: Instant) -> Millis {
        let t = at.saturating_duration_since(self.handle.epoch).as_millis() as Millis;
        self.last_ms = self.last_ms.max(t);
        self.last_ms
    }

    fn is_empty(&self) -> bool {
        self.audiences.is_empty() && self.speakers.is_empty()
    }

    fn record(&mut self, record: Record) {
        if let Some(r) = &mut self.recorder {
            r.log(record);
        }
    }

    fn handle(&mut self, cmd: RoomCmd) {
        let now = self.clock(Instant::now());
        match cmd {
            RoomCmd::Join { role, outbox, reply } => {
                let result = self.join(role, outbox, now);
                let joined = result.is_ok();
                let _ = reply.send(result);
                if joined {
                    self.empty_since = None;
                    self.broadcast_info();
                }
            }
            RoomCmd::Sample { audience, sample } => {
                if let Ok(admitted) = self.engine.ingest(&audience, sample, now) {
                    self.record(Record::Sample {
                        t: now,
                        audience,
                        sample_t: admitted.t(),
                        body: SampleBody::from_sample(admitted),
                    });
                }
            }
            RoomCmd::Alive { audience } => self.engine.touch(&audience, now),
            RoomCmd::Leave { member } => {
                let left = match member {
                    MemberRef::Audience(id) => self.remove_audience(&id, now).is_some(),
                    MemberRef::Speaker(k) => self.speakers.remove(&k).is_some(),
                };
                if left {
                    self.after_departure();
                }
            }
            RoomCmd::Stats { reply } => {
                let stats = self.engine.stats();
                let _ = reply.send(RoomStats {
                    n_audiences: self.engine.n_audiences(),
                    n_speakers: self.speakers.len(),
                    tick_seq: self.engine.tick_seq(),
                    admitted: stats.admitted,
                    rejected: stats.rejected,
                    dropped: self.handle.counters.dropped.load(Ordering::Relaxed),
                    malformed: self.handle.counters.malformed.load(Ordering::Relaxed),
                    evicted: self.evicted,
                    recording: self.recorder.as_ref().map(|r| r.path().to_owned()),
                });
            }
        }
    }

    fn join(&mut self, role: Role, outbox: Arc<Outbox>, now: Millis) -> Result<MemberRef, ErrorCode> {
        match role {
            Role::Speaker => {
                let k = self.next_speaker;
                self.next_speaker += 1;
                self.speakers.insert(k, outbox);
                Ok(MemberRef::Speaker(k))
            }
            Role::Audience => loop {
                let id = AudienceId::from_entropy(rand::random());
                match self.engine.join(id.clone(), now) {
                    Ok(()) => {
                        self.record(Record::Membership {
                            t: now,
                            audience: id.clone(),
                            event: MembershipEvent::Join,
                        });
                        self.audiences.insert(id.clone(), outbox);
                        return Ok(MemberRef::Audience(id));
                    }
                    Err(JoinError::RoomFull(_)) => return Err(ErrorCode::RoomFull),
                    Err(JoinError::Duplicate(_)) => continue,
                }
            },
        }
    }

    fn remove_audience(&mut self, id: &AudienceId, now: Millis) -> Option<Arc<Outbox>> {
        let outbox = self.audiences.remove(id)?;
        self.engine.leave(id);
        self.record(Record::Membership {
            t: now,
            audience: id.clone(),
            event: MembershipEvent::Leave,
        });
        Some(outbox)
    }

    fn after_departure(&mut self) {
        if self.is_empty() {
            self.empty_since = Some(Instant::now());
        }
        self.broadcast_info();
    }

    fn broadcast_info(&self) {
        let info: Utf8Bytes = Message::RoomInfo {
            mode: self.engine.mode(),
            n_audiences: self.engine.n_audiences(),
        }
        .to_json()
        .into();
        for outbox in self.speakers.values().chain(self.audiences.values()) {
            outbox.push_control(info.clone());
        }
    }

    fn on_tick(&mut self, due: Instant) {
        let now = self.clock(due);
        let stale = self.engine.stale_audiences(now);
        for id in &stale {
            if let Some(outbox) = self.remove_audience(id, now) {
                self.evicted += 1;
                outbox.close_with(Message::error(ErrorCode::Evicted, "no samples or pongs for too long").to_json());
                tracing::info!(room = %self.handle.name, audience = %id.as_str(), "evicted");
            }
        }
        if !stale.is_empty() {
            self.after_departure();
        }

        let tick = self.engine.tick(now);
        let text: Utf8Bytes = tick.json.as_str().into();
        for outbox in self.speakers.values() {
            outbox.push_frame(text.clone());
        }
        if self.engine.mode() == Mode::Nod {
            // nod audiences see the collective trails too
            for outbox in self.audiences.values() {
                outbox.push_frame(text.clone());
            }
        }
        self.record(Record::Frame {
            t: now,
            seq: tick.seq,
            frame: tick.json,
        });
    }
}
