//! Aggregation pipelines and wire formats for a real-time collective
//! audience-reaction relay.
//!
//! Audience clients stream gaze positions or nose-tip velocities; a room
//! smooths them per audience and emits anonymized aggregate frames (heat map,
//! dots, or superimposed nod trails) at a fixed tick rate. Everything here is
//! clock-free and deterministic, so the same [`room::RoomEngine`] drives the
//! live server and offline replay of recorded sessions.

pub mod config;
pub mod gaze;
pub mod model;
pub mod nod;
pub mod protocol;
pub mod record;
pub mod room;
pub mod scenario;

pub use config::{GazeDisplay, GazeParams, RoomConfig};
pub use model::{AudienceId, GazeSample, Millis, Mode, NodSample, RawSample, Rejection};
pub use protocol::{FrameKind, FramePayload, Message, Role};
pub use room::{RoomEngine, Tick};
