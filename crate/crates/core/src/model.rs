//! Shared domain types: audience identity, admitted samples, and admission rules.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Milliseconds on a room's session timebase.
pub type Millis = i64;

/// Bound on nose-tip velocity in normalized units per second.
pub const V_MAX: f64 = 5.0;

/// Client/room clock disagreement beyond which a connection's offset is re-anchored.
pub const MAX_CLOCK_SKEW_MS: Millis = 2_000;

/// Which reaction a room aggregates. Fixed at room creation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Gaze,
    Nod,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Gaze => "gaze",
            Mode::Nod => "nod",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Opaque per-room audience token assigned by the server at join.
///
/// Never serialized into a broadcast frame; it only appears in server-side
/// session logs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AudienceId(String);

impl AudienceId {
    pub const PREFIX: &'static str = "aud_";

    /// Builds an id from 64 bits of server-side entropy.
    pub fn from_entropy(bits: u64) -> Self {
        AudienceId(format!("{}{bits:016x}", Self::PREFIX))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AudienceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeSample {
    pub t: Millis,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodSample {
    pub t: Millis,
    pub vx: f64,
    pub vy: f64,
}

/// A sample as parsed off the wire, before admission.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RawSample {
    Gaze(GazeSample),
    Nod(NodSample),
}

impl RawSample {
    pub fn mode(&self) -> Mode {
        match self {
            RawSample::Gaze(_) => Mode::Gaze,
            RawSample::Nod(_) => Mode::Nod,
        }
    }

    pub fn t(&self) -> Millis {
        match self {
            RawSample::Gaze(s) => s.t,
            RawSample::Nod(s) => s.t,
        }
    }

    pub fn with_t(self, t: Millis) -> Self {
        match self {
            RawSample::Gaze(s) => RawSample::Gaze(GazeSample { t, ..s }),
            RawSample::Nod(s) => RawSample::Nod(NodSample { t, ..s }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum Rejection {
    #[error("REJECT_NONFINITE: sample has a non-finite field")]
    NonFinite,
    #[error("REJECT_STALE_TIMESTAMP: t={t} precedes last admitted t={last}")]
    StaleTimestamp { t: Millis, last: Millis },
    #[error("REJECT_WRONG_KIND: {got} sample in a {room} room")]
    WrongKind { got: Mode, room: Mode },
}

impl Rejection {
    pub fn code(&self) -> &'static str {
        match self {
            Rejection::NonFinite => "REJECT_NONFINITE",
            Rejection::StaleTimestamp { .. } => "REJECT_STALE_TIMESTAMP",
            Rejection::WrongKind { .. } => "REJECT_WRONG_KIND",
        }
    }
}

/// Admits a sample into a room of `room_mode`.
///
/// Coordinates are clamped to the unit square, velocities to `±V_MAX`.
/// Timestamps equal to `last_admitted` are accepted, earlier ones are not.
pub fn validate_sample(
    raw: RawSample,
    room_mode: Mode,
    last_admitted: Option<Millis>,
) -> Result<RawSample, Rejection> {
    if raw.mode() != room_mode {
        return Err(Rejection::WrongKind {
            got: raw.mode(),
            room: room_mode,
        });
    }
    let admitted = match raw {
        RawSample::Gaze(s) => {
            if !(s.x.is_finite() && s.y.is_finite()) {
                return Err(Rejection::NonFinite);
            }
            RawSample::Gaze(GazeSample {
                t: s.t,
                x: s.x.clamp(0.0, 1.0),
                y: s.y.clamp(0.0, 1.0),
            })
        }
        RawSample::Nod(s) => {
            if !(s.vx.is_finite() && s.vy.is_finite()) {
                return Err(Rejection::NonFinite);
            }
            RawSample::Nod(NodSample {
                t: s.t,
                vx: s.vx.clamp(-V_MAX, V_MAX),
                vy: s.vy.clamp(-V_MAX, V_MAX),
            })
        }
    };
    if let Some(last) = last_admitted {
        if admitted.t() < last {
            return Err(Rejection::StaleTimestamp {
                t: admitted.t(),
                last,
            });
        }
    }
    Ok(admitted)
}

/// Maps one connection's client-relative timestamps onto room time.
///
/// The first sample anchors an offset against its arrival time; later samples
/// keep the client's own spacing until they drift more than
/// [`MAX_CLOCK_SKEW_MS`] from arrival, at which point the offset is re-anchored.
#[derive(Debug, Clone, Default)]
pub struct ClockRebase {
    offset: Option<Millis>,
}

impl ClockRebase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rebase(&mut self, client_t: Millis, arrival: Millis) -> Millis {
        if let Some(offset) = self.offset {
            let t = client_t.saturating_add(offset);
            if (t - arrival).abs() <= MAX_CLOCK_SKEW_MS {
                return t;
            }
        }
        self.offset = Some(arrival.saturating_sub(client_t));
        arrival
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaze(t: Millis, x: f64, y: f64) -> RawSample {
        RawSample::Gaze(GazeSample { t, x, y })
    }

    fn nod(t: Millis, vx: f64, vy: f64) -> RawSample {
        RawSample::Nod(NodSample { t, vx, vy })
    }

    #[test]
    fn in_range_gaze_passes_unchanged() {
        let s = gaze(100, 0.5, 0.5);
        assert_eq!(validate_sample(s, Mode::Gaze, Some(90)), Ok(s));
    }

    #[test]
    fn out_of_range_gaze_is_clamped() {
        let got = validate_sample(gaze(5, 1.2, -0.1), Mode::Gaze, None).unwrap();
        assert_eq!(got, gaze(5, 1.0, 0.0));
    }

    #[test]
    fn nan_velocity_rejected() {
        assert_eq!(
            validate_sample(nod(0, f64::NAN, 0.0), Mode::Nod, None),
            Err(Rejection::NonFinite)
        );
        assert_eq!(
            validate_sample(gaze(0, 0.1, f64::INFINITY), Mode::Gaze, None),
            Err(Rejection::NonFinite)
        );
    }

    #[test]
    fn velocity_clamped_to_vmax() {
        let got = validate_sample(nod(0, 12.0, -9.0), Mode::Nod, None).unwrap();
        assert_eq!(got, nod(0, V_MAX, -V_MAX));
    }

    #[test]
    fn stale_and_wrong_kind() {
        assert_eq!(
            validate_sample(gaze(80, 0.5, 0.5), Mode::Gaze, Some(90)),
            Err(Rejection::StaleTimestamp { t: 80, last: 90 })
        );
        let err = validate_sample(nod(0, 0.0, 0.0), Mode::Gaze, None).unwrap_err();
        assert_eq!(err.code(), "REJECT_WRONG_KIND");
    }

    #[test]
    fn rebase_keeps_client_spacing_until_skew() {
        let mut clock = ClockRebase::new();
        assert_eq!(clock.rebase(1_000_000, 50), 50);
        assert_eq!(clock.rebase(1_000_033, 90), 83);
        // client jumps 10 s ahead of arrival: re-anchor
        assert_eq!(clock.rebase(1_010_000, 120), 120);
        assert_eq!(clock.rebase(1_010_033, 160), 153);
    }

    #[test]
    fn audience_id_has_prefix() {
        let id = AudienceId::from_entropy(0xdead_beef);
        assert_eq!(id.as_str(), "aud_00000000deadbeef");
    }
}
