//! `calmrelay.v1` wire messages: JSON text frames tagged by `type`.

use serde::{Deserialize, Serialize};

use crate::gaze::{DotsFrame, HeatMap};
use crate::model::{GazeSample, Millis, Mode, NodSample, RawSample};
use crate::nod::TrailFrame;

pub const SUBPROTOCOL: &str = "calmrelay.v1";
pub const WS_PATH: &str = "/ws";
pub const MAX_ROOM_NAME: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Audience,
    Speaker,
}

/// Which aggregate a FRAME payload holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameKind {
    Heatmap,
    Dots,
    Dense,
    Trails,
}

impl FrameKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FrameKind::Heatmap => "heatmap",
            FrameKind::Dots => "dots",
            FrameKind::Dense => "dense",
            FrameKind::Trails => "trails",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorCode {
    #[serde(rename = "ERR_ROOM_MODE_MISMATCH")]
    RoomModeMismatch,
    #[serde(rename = "ERR_ROOM_FULL")]
    RoomFull,
    #[serde(rename = "ERR_BAD_HELLO")]
    BadHello,
    #[serde(rename = "ERR_PROTOCOL")]
    Protocol,
    #[serde(rename = "ERR_MALFORMED_FLOOD")]
    MalformedFlood,
    #[serde(rename = "ERR_EVICTED")]
    Evicted,
    #[serde(other)]
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    Hello {
        room: String,
        role: Role,
        mode: Mode,
    },
    Gaze {
        t: Millis,
        x: f64,
        y: f64,
    },
    Nod {
        t: Millis,
        vx: f64,
        vy: f64,
    },
    Frame {
        mode: FrameKind,
        seq: u64,
        payload: serde_json::Value,
    },
    RoomInfo {
        mode: Mode,
        n_audiences: usize,
    },
    Error {
        code: ErrorCode,
        detail: String,
    },
    Bye,
}

impl Message {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("messages always serialize")
    }

    pub fn parse(text: &str) -> Result<Message, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn as_sample(&self) -> Option<RawSample> {
        match *self {
            Message::Gaze { t, x, y } => Some(RawSample::Gaze(GazeSample { t, x, y })),
            Message::Nod { t, vx, vy } => Some(RawSample::Nod(NodSample { t, vx, vy })),
            _ => None,
        }
    }

    pub fn from_sample(sample: RawSample) -> Message {
        match sample {
            RawSample::Gaze(s) => Message::Gaze { t: s.t, x: s.x, y: s.y },
            RawSample::Nod(s) => Message::Nod { t: s.t, vx: s.vx, vy: s.vy },
        }
    }

    pub fn error(code: ErrorCode, detail: impl Into<String>) -> Message {
        Message::Error {
            code,
            detail: detail.into(),
        }
    }
}

/// Peeks at the `type` tag without committing to a variant.
pub fn message_type(text: &str) -> Option<String> {
    #[derive(Deserialize)]
    struct Tag {
        #[serde(rename = "type")]
        kind: String,
    }
    serde_json::from_str::<Tag>(text).ok().map(|t| t.kind)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatPayload {
    pub w: usize,
    pub h: usize,
    pub cells: Vec<f64>,
    pub max: f64,
}

impl From<&HeatMap> for HeatPayload {
    fn from(map: &HeatMap) -> Self {
        HeatPayload {
            w: map.grid.width,
            h: map.grid.height,
            cells: map.cells.clone(),
            max: map.max_density,
        }
    }
}

impl HeatPayload {
    /// Cell holding `max` (highest index on ties), if any mass is present.
    pub fn argmax(&self) -> Option<(usize, usize)> {
        if self.max <= 0.0 || self.w == 0 {
            return None;
        }
        let k = self.cells.iter().rposition(|&c| c == self.max)?;
        Some((k % self.w, k / self.w))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DotsPayload {
    pub points: Vec<(f64, f64)>,
}

impl From<&DotsFrame> for DotsPayload {
    fn from(frame: &DotsFrame) -> Self {
        DotsPayload {
            points: frame.points.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrailsPayload {
    pub spacing: f64,
    pub slots: Vec<Vec<(f64, f64)>>,
}

impl From<&TrailFrame> for TrailsPayload {
    fn from(frame: &TrailFrame) -> Self {
        TrailsPayload {
            spacing: frame.spacing,
            slots: frame.slots.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FramePayload {
    Heat(HeatPayload),
    Dots(DotsPayload),
    Trails(TrailsPayload),
}

impl FramePayload {
    pub fn kind_matches(&self, kind: FrameKind) -> bool {
        matches!(
            (self, kind),
            (FramePayload::Heat(_), FrameKind::Heatmap | FrameKind::Dense)
                | (FramePayload::Dots(_), FrameKind::Dots)
                | (FramePayload::Trails(_), FrameKind::Trails)
        )
    }

    pub fn from_value(kind: FrameKind, value: serde_json::Value) -> Result<Self, serde_json::Error> {
        Ok(match kind {
            FrameKind::Heatmap | FrameKind::Dense => FramePayload::Heat(serde_json::from_value(value)?),
            FrameKind::Dots => FramePayload::Dots(serde_json::from_value(value)?),
            FrameKind::Trails => FramePayload::Trails(serde_json::from_value(value)?),
        })
    }
}

#[derive(Serialize)]
struct FrameOut<'a, P: Serialize> {
    #[serde(rename = "type")]
    kind: &'static str,
    mode: FrameKind,
    seq: u64,
    payload: &'a P,
}

fn encode_typed<P: Serialize>(kind: FrameKind, seq: u64, payload: &P) -> String {
    serde_json::to_string(&FrameOut {
        kind: "frame",
        mode: kind,
        seq,
        payload,
    })
    .expect("finite payloads always serialize")
}

/// Serializes a FRAME message directly from a typed payload.
pub fn encode_frame(kind: FrameKind, seq: u64, payload: &FramePayload) -> String {
    match payload {
        FramePayload::Heat(p) => encode_typed(kind, seq, p),
        FramePayload::Dots(p) => encode_typed(kind, seq, p),
        FramePayload::Trails(p) => encode_typed(kind, seq, p),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hello_wire_shape() {
        let msg = Message::parse(r#"{"type":"hello","room":"r1","role":"audience","mode":"gaze"}"#).unwrap();
        assert_eq!(
            msg,
            Message::Hello {
                room: "r1".into(),
                role: Role::Audience,
                mode: Mode::Gaze
            }
        );
    }

    #[test]
    fn unknown_fields_ignored() {
        let msg = Message::parse(r#"{"x":0.25,"type":"gaze","t":10,"y":0.5,"extra":[1,2]}"#).unwrap();
        assert_eq!(msg, Message::Gaze { t: 10, x: 0.25, y: 0.5 });
    }

    #[test]
    fn server_messages_serialize_with_exact_keys() {
        assert_eq!(Message::Bye.to_json(), r#"{"type":"bye"}"#);
        assert_eq!(
            Message::RoomInfo {
                mode: Mode::Nod,
                n_audiences: 3
            }
            .to_json(),
            r#"{"type":"room_info","mode":"nod","n_audiences":3}"#
        );
        assert_eq!(
            Message::error(ErrorCode::RoomModeMismatch, "room is nod").to_json(),
            r#"{"type":"error","code":"ERR_ROOM_MODE_MISMATCH","detail":"room is nod"}"#
        );
    }

    #[test]
    fn encoded_frames_parse_back() {
        let payload = FramePayload::Trails(TrailsPayload {
            spacing: 0.02,
            slots: vec![vec![(-0.01, 0.0), (-0.01, 0.25)], vec![(0.01, 0.0)]],
        });
        let text = encode_frame(FrameKind::Trails, 9, &payload);
        assert_eq!(
            text,
            r#"{"type":"frame","mode":"trails","seq":9,"payload":{"spacing":0.02,"slots":[[[-0.01,0.0],[-0.01,0.25]],[[0.01,0.0]]]}}"#
        );
        let Message::Frame { mode, seq, payload: value } = Message::parse(&text).unwrap() else {
            panic!("not a frame");
        };
        assert_eq!((mode, seq), (FrameKind::Trails, 9));
        assert_eq!(FramePayload::from_value(mode, value).unwrap(), payload);
    }

    #[test]
    fn heat_payload_keys() {
        let payload = FramePayload::Heat(HeatPayload {
            w: 2,
            h: 1,
            cells: vec![0.0, 1.5],
            max: 1.5,
        });
        assert_eq!(
            encode_frame(FrameKind::Heatmap, 1, &payload),
            r#"{"type":"frame","mode":"heatmap","seq":1,"payload":{"w":2,"h":1,"cells":[0.0,1.5],"max":1.5}}"#
        );
    }

    #[test]
    fn peek_type() {
        assert_eq!(message_type(r#"{"type":"gaze"}"#).as_deref(), Some("gaze"));
        assert_eq!(message_type("not json"), None);
    }

    #[test]
    fn unknown_error_code_tolerated() {
        let msg = Message::parse(r#"{"type":"error","code":"ERR_FUTURE","detail":""}"#).unwrap();
        assert!(matches!(msg, Message::Error { code: ErrorCode::Unknown, .. }));
    }
}
