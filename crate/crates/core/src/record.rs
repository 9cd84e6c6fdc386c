//! Append-only JSONL session logs and deterministic replay.
//!
//! Line 1 is a header holding the schema version, room config and session
//! seed. Every following line is one record tagged by `kind`: an admitted
//! `sample`, a `membership` change, or a broadcast `frame` embedded verbatim.
//! Record `t` is the room's processing time and never decreases; a sample's
//! own (rebased) timestamp travels separately as `sample_t`.
//! Replaying the sample and membership records through a fresh
//! [`RoomEngine`] must reproduce every frame byte for byte.

use std::io::{self, BufRead, Write};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::config::RoomConfig;
use crate::model::{AudienceId, GazeSample, Millis, NodSample, RawSample};
use crate::room::RoomEngine;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub kind: String,
    pub schema_version: u32,
    pub room: String,
    pub config: RoomConfig,
    pub seed: u64,
}

impl LogHeader {
    pub fn new(room: impl Into<String>, config: RoomConfig, seed: u64) -> Self {
        LogHeader {
            kind: "header".into(),
            schema_version: SCHEMA_VERSION,
            room: room.into(),
            config,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MembershipEvent {
    Join,
    Leave,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SampleBody {
    Gaze { x: f64, y: f64 },
    Nod { vx: f64, vy: f64 },
}

impl SampleBody {
    pub fn from_sample(sample: RawSample) -> Self {
        match sample {
            RawSample::Gaze(s) => SampleBody::Gaze { x: s.x, y: s.y },
            RawSample::Nod(s) => SampleBody::Nod { vx: s.vx, vy: s.vy },
        }
    }

    pub fn at(self, t: Millis) -> RawSample {
        match self {
            SampleBody::Gaze { x, y } => RawSample::Gaze(GazeSample { t, x, y }),
            SampleBody::Nod { vx, vy } => RawSample::Nod(NodSample { t, vx, vy }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Record {
    Sample {
        t: Millis,
        audience: AudienceId,
        sample_t: Millis,
        body: SampleBody,
    },
    Membership {
        t: Millis,
        audience: AudienceId,
        event: MembershipEvent,
    },
    /// `frame` is the broadcast message exactly as sent.
    Frame { t: Millis, seq: u64, frame: String },
}

impl Record {
    pub fn t(&self) -> Millis {
        match self {
            Record::Sample { t, .. } | Record::Membership { t, .. } | Record::Frame { t, .. } => *t,
        }
    }

    pub fn to_line(&self) -> Result<String, LogError> {
        let line = match self {
            Record::Sample {
                t,
                audience,
                sample_t,
                body,
            } => serde_json::to_string(&SampleLine {
                kind: "sample".into(),
                t: *t,
                audience: audience.clone(),
                sample_t: *sample_t,
                body: *body,
            })?,
            Record::Membership { t, audience, event } => serde_json::to_string(&MembershipLine {
                kind: "membership".into(),
                t: *t,
                audience: audience.clone(),
                event: *event,
            })?,
            Record::Frame { t, seq, frame } => {
                let raw = RawValue::from_string(frame.clone())?;
                serde_json::to_string(&FrameLine {
                    kind: "frame".into(),
                    t: *t,
                    seq: *seq,
                    frame: raw,
                })?
            }
        };
        Ok(line)
    }

    pub fn parse_line(line: &str) -> Result<Record, LogError> {
        #[derive(Deserialize)]
        struct Kind {
            kind: String,
        }
        let kind: Kind = serde_json::from_str(line)?;
        Ok(match kind.kind.as_str() {
            "sample" => {
                let l: SampleLine = serde_json::from_str(line)?;
                Record::Sample {
                    t: l.t,
                    audience: l.audience,
                    sample_t: l.sample_t,
                    body: l.body,
                }
            }
            "membership" => {
                let l: MembershipLine = serde_json::from_str(line)?;
                Record::Membership {
                    t: l.t,
                    audience: l.audience,
                    event: l.event,
                }
            }
            "frame" => {
                let l: FrameLine = serde_json::from_str(line)?;
                Record::Frame {
                    t: l.t,
                    seq: l.seq,
                    frame: l.frame.get().to_owned(),
                }
            }
            other => return Err(LogError::UnknownKind(other.to_owned())),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct SampleLine {
    kind: String,
    t: Millis,
    audience: AudienceId,
    sample_t: Millis,
    #[serde(flatten)]
    body: SampleBody,
}

#[derive(Serialize, Deserialize)]
struct MembershipLine {
    kind: String,
    t: Millis,
    audience: AudienceId,
    event: MembershipEvent,
}

#[derive(Serialize, Deserialize)]
struct FrameLine {
    kind: String,
    t: Millis,
    seq: u64,
    frame: Box<RawValue>,
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("ERR_IO: {0}")]
    Io(#[from] io::Error),
    #[error("malformed record: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown record kind {0:?}")]
    UnknownKind(String),
    #[error("ERR_SCHEMA: {0}")]
    Schema(String),
    #[error("corrupt record at line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
    #[error("record at line {line} goes back in time")]
    OutOfOrder { line: usize },
}

/// Buffered JSONL writer that flushes at least once per `flush_every`.
pub struct SessionWriter<W: Write> {
    out: io::BufWriter<W>,
    last_flush: Instant,
    flush_every: Duration,
}

impl<W: Write> SessionWriter<W> {
    pub fn new(out: W, header: &LogHeader) -> Result<Self, LogError> {
        let mut writer = SessionWriter {
            out: io::BufWriter::new(out),
            last_flush: Instant::now(),
            flush_every: Duration::from_secs(1),
        };
        let line = serde_json::to_string(header)?;
        writer.out.write_all(line.as_bytes())?;
        writer.out.write_all(b"\n")?;
        writer.flush()?;
        Ok(writer)
    }

    pub fn append(&mut self, record: &Record) -> Result<(), LogError> {
        let line = record.to_line()?;
        self.out.write_all(line.as_bytes())?;
        self.out.write_all(b"\n")?;
        if self.last_flush.elapsed() >= self.flush_every {
            self.flush()?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), LogError> {
        self.out.flush()?;
        self.last_flush = Instant::now();
        Ok(())
    }

    pub fn into_inner(self) -> Result<W, LogError> {
        self.out.into_inner().map_err(|e| LogError::Io(e.into_error()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionLog {
    pub header: LogHeader,
    pub records: Vec<Record>,
    /// Unparseable lines dropped from the end of the file.
    pub skipped_tail: usize,
}

impl SessionLog {
    pub fn frames(&self) -> impl Iterator<Item = (u64, &str)> {
        self.records.iter().filter_map(|r| match r {
            Record::Frame { seq, frame, .. } => Some((*seq, frame.as_str())),
            _ => None,
        })
    }
}

/// Reads a session log, tolerating a torn or garbled tail.
///
/// A bad line is only forgiven when nothing parseable follows it.
pub fn read_log<R: BufRead>(input: R) -> Result<SessionLog, LogError> {
    let mut lines = input.split(b'\n');
    let header_line = lines
        .next()
        .ok_or_else(|| LogError::Schema("empty log".into()))??;
    let header: LogHeader = serde_json::from_slice(&header_line)
        .map_err(|e| LogError::Schema(format!("bad header: {e}")))?;
    if header.kind != "header" {
        return Err(LogError::Schema(format!("first record is {:?}", header.kind)));
    }
    if header.schema_version != SCHEMA_VERSION {
        return Err(LogError::Schema(format!(
            "unsupported schema_version {}",
            header.schema_version
        )));
    }

    let mut records = Vec::new();
    let mut pending_bad: Option<(usize, String)> = None;
    let mut skipped_tail = 0;
    let mut last_t = Millis::MIN;
    for (n, raw) in lines.enumerate() {
        let line_no = n + 2;
        let raw = raw?;
        if raw.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let parsed = std::str::from_utf8(&raw)
            .map_err(|e| LogError::Schema(e.to_string()))
            .and_then(Record::parse_line);
        match parsed {
            Ok(record) => {
                if let Some((line, reason)) = pending_bad.take() {
                    return Err(LogError::Corrupt { line, reason });
                }
                if record.t() < last_t {
                    return Err(LogError::OutOfOrder { line: line_no });
                }
                last_t = record.t();
                records.push(record);
            }
            Err(e) => {
                skipped_tail += 1;
                pending_bad.get_or_insert((line_no, e.to_string()));
            }
        }
    }
    Ok(SessionLog {
        header,
        records,
        skipped_tail,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReplayError {
    #[error("ERR_SCHEMA: {0}")]
    Schema(String),
    #[error("ERR_DIVERGENCE at seq {seq}")]
    Divergence { seq: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayReport {
    pub frames_checked: usize,
    pub samples_replayed: usize,
}

/// Replays a log against its own recorded config.
pub fn replay(log: &SessionLog) -> Result<ReplayReport, ReplayError> {
    replay_with_config(log, log.header.config.clone())
}

/// Replays a log through a fresh engine built from `config` and the logged seed.
pub fn replay_with_config(log: &SessionLog, config: RoomConfig) -> Result<ReplayReport, ReplayError> {
    if log.header.schema_version != SCHEMA_VERSION {
        return Err(ReplayError::Schema(format!(
            "unsupported schema_version {}",
            log.header.schema_version
        )));
    }
    if config.mode != log.header.config.mode {
        return Err(ReplayError::Schema("replay config changes the room mode".into()));
    }
    let mut engine = RoomEngine::new(config, log.header.seed);
    let mut report = ReplayReport {
        frames_checked: 0,
        samples_replayed: 0,
    };
    // a sample or membership record the engine refuses surfaces at the next frame
    let mut poisoned = false;
    for record in &log.records {
        match record {
            Record::Membership { t, audience, event } => match event {
                MembershipEvent::Join => poisoned |= engine.join(audience.clone(), *t).is_err(),
                MembershipEvent::Leave => poisoned |= !engine.leave(audience),
            },
            Record::Sample {
                t,
                audience,
                sample_t,
                body,
            } => {
                poisoned |= engine.ingest(audience, body.at(*sample_t), *t).is_err();
                report.samples_replayed += 1;
            }
            Record::Frame { t, seq, frame } => {
                let tick = engine.tick(*t);
                if poisoned || tick.seq != *seq || tick.json != *frame {
                    return Err(ReplayError::Divergence { seq: *seq });
                }
                report.frames_checked += 1;
            }
        }
    }
    Ok(report)
}
