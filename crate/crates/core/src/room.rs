//! Deterministic per-room aggregation engine.
//!
//! The engine owns membership and every audience's pipeline state. It has no
//! clock of its own: callers pass room time into each operation, which lets
//! the server drive it from a tick loop and lets replay drive it from a log.

use std::collections::{BTreeMap, HashMap, VecDeque};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{GazeDisplay, RoomConfig};
use crate::gaze::{accumulate_heatmap, dense_area_map, dots_frame, Smoother, TimedPosition};
use crate::model::{validate_sample, AudienceId, Millis, Mode, RawSample, Rejection};
use crate::nod::{compose_trails, TrailState};
use crate::protocol::{encode_frame, DotsPayload, FrameKind, FramePayload, HeatPayload, TrailsPayload};

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the dots permutation of frame `seq`.
pub fn frame_seed(session_seed: u64, seq: u64) -> u64 {
    mix64(session_seed ^ mix64(seq))
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum JoinError {
    #[error("room is full ({0} audiences)")]
    RoomFull(usize),
    #[error("audience {0} already joined")]
    Duplicate(AudienceId),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IngestError {
    #[error("unknown audience {0}")]
    UnknownAudience(AudienceId),
    #[error(transparent)]
    Rejected(#[from] Rejection),
}

#[derive(Debug, Clone)]
enum Pipeline {
    Gaze {
        smoother: Smoother,
        latest: Option<(f64, f64)>,
    },
    Nod {
        trail: TrailState,
        pending: (f64, f64, u32),
    },
}

#[derive(Debug, Clone)]
struct Member {
    id: AudienceId,
    slot_key: u64,
    last_admitted: Option<Millis>,
    last_seen: Millis,
    pipeline: Pipeline,
}

/// One computed broadcast frame, serialized exactly once.
#[derive(Debug, Clone, PartialEq)]
pub struct Tick {
    pub seq: u64,
    pub kind: FrameKind,
    pub payload: FramePayload,
    pub json: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EngineStats {
    pub admitted: u64,
    pub rejected: u64,
}

#[derive(Debug, Clone)]
pub struct RoomEngine {
    config: RoomConfig,
    seed: u64,
    slot_rng: ChaCha8Rng,
    members: BTreeMap<u64, Member>,
    ordinals: HashMap<AudienceId, u64>,
    next_ordinal: u64,
    heat: VecDeque<(u64, TimedPosition)>,
    tick_seq: u64,
    stats: EngineStats,
}

impl RoomEngine {
    pub fn new(config: RoomConfig, seed: u64) -> Self {
        RoomEngine {
            slot_rng: ChaCha8Rng::seed_from_u64(mix64(seed)),
            config,
            seed,
            members: BTreeMap::new(),
            ordinals: HashMap::new(),
            next_ordinal: 0,
            heat: VecDeque::new(),
            tick_seq: 0,
            stats: EngineStats::default(),
        }
    }

    pub fn config(&self) -> &RoomConfig {
        &self.config
    }

    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn tick_seq(&self) -> u64 {
        self.tick_seq
    }

    pub fn n_audiences(&self) -> usize {
        self.members.len()
    }

    pub fn stats(&self) -> EngineStats {
        self.stats
    }

    pub fn contains(&self, id: &AudienceId) -> bool {
        self.ordinals.contains_key(id)
    }

    pub fn audience_ids(&self) -> impl Iterator<Item = &AudienceId> {
        self.members.values().map(|m| &m.id)
    }

    /// Samples currently held by an audience's gaze smoother.
    pub fn smoother_len(&self, id: &AudienceId) -> Option<usize> {
        let m = self.member(id)?;
        match &m.pipeline {
            Pipeline::Gaze { smoother, .. } => Some(smoother.len()),
            Pipeline::Nod { .. } => None,
        }
    }

    pub fn frame_kind(&self) -> FrameKind {
        match (self.config.mode, self.config.gaze.display) {
            (Mode::Nod, _) => FrameKind::Trails,
            (Mode::Gaze, GazeDisplay::Heatmap) => FrameKind::Heatmap,
            (Mode::Gaze, GazeDisplay::Dots) => FrameKind::Dots,
            (Mode::Gaze, GazeDisplay::Dense) => FrameKind::Dense,
        }
    }

    fn member(&self, id: &AudienceId) -> Option<&Member> {
        self.ordinals.get(id).and_then(|o| self.members.get(o))
    }

    pub fn join(&mut self, id: AudienceId, now: Millis) -> Result<(), JoinError> {
        if self.ordinals.contains_key(&id) {
            return Err(JoinError::Duplicate(id));
        }
        if self.members.len() >= self.config.max_audiences {
            return Err(JoinError::RoomFull(self.config.max_audiences));
        }
        let pipeline = match self.config.mode {
            Mode::Gaze => Pipeline::Gaze {
                smoother: Smoother::new(self.config.gaze.window),
                latest: None,
            },
            Mode::Nod => Pipeline::Nod {
                trail: TrailState::new(self.config.nod.history_len),
                pending: (0.0, 0.0, 0),
            },
        };
        let ordinal = self.next_ordinal;
        self.next_ordinal += 1;
        let slot_key = self.slot_rng.next_u64();
        self.ordinals.insert(id.clone(), ordinal);
        self.members.insert(
            ordinal,
            Member {
                id,
                slot_key,
                last_admitted: None,
                last_seen: now,
                pipeline,
            },
        );
        Ok(())
    }

    /// Removes an audience and everything derived from it. Returns whether it was present.
    pub fn leave(&mut self, id: &AudienceId) -> bool {
        let Some(ordinal) = self.ordinals.remove(id) else {
            return false;
        };
        self.members.remove(&ordinal);
        self.heat.retain(|(o, _)| *o != ordinal);
        true
    }

    /// Records transport liveness without a sample.
    pub fn touch(&mut self, id: &AudienceId, now: Millis) {
        if let Some(o) = self.ordinals.get(id) {
            if let Some(m) = self.members.get_mut(o) {
                m.last_seen = m.last_seen.max(now);
            }
        }
    }

    /// Validates a sample (already on room time) and applies it to the audience's pipeline.
    pub fn ingest(&mut self, id: &AudienceId, raw: RawSample, now: Millis) -> Result<RawSample, IngestError> {
        let mode = self.config.mode;
        let ordinal = *self
            .ordinals
            .get(id)
            .ok_or_else(|| IngestError::UnknownAudience(id.clone()))?;
        let member = self.members.get_mut(&ordinal).expect("ordinal map in sync");
        member.last_seen = member.last_seen.max(now);
        let admitted = match validate_sample(raw, mode, member.last_admitted) {
            Ok(s) => s,
            Err(e) => {
                self.stats.rejected += 1;
                return Err(e.into());
            }
        };
        member.last_admitted = Some(admitted.t());
        match (&mut member.pipeline, admitted) {
            (Pipeline::Gaze { smoother, latest }, RawSample::Gaze(s)) => {
                *latest = Some(smoother.smooth(s.x, s.y));
            }
            (Pipeline::Nod { pending, .. }, RawSample::Nod(s)) => {
                pending.0 += s.vx;
                pending.1 += s.vy;
                pending.2 += 1;
            }
            _ => unreachable!("validate_sample enforces the room mode"),
        }
        self.stats.admitted += 1;
        Ok(admitted)
    }

    /// Audiences with no traffic for longer than the liveness window.
    pub fn stale_audiences(&self, now: Millis) -> Vec<AudienceId> {
        let limit = (self.config.liveness_s * 1000.0).round() as Millis;
        self.members
            .values()
            .filter(|m| now - m.last_seen > limit)
            .map(|m| m.id.clone())
            .collect()
    }

    /// Computes the next frame from the current pipeline states.
    pub fn tick(&mut self, now: Millis) -> Tick {
        self.tick_seq += 1;
        let seq = self.tick_seq;
        let kind = self.frame_kind();
        let payload = match self.config.mode {
            Mode::Gaze => self.gaze_payload(kind, now, seq),
            Mode::Nod => self.nod_payload(seq),
        };
        let json = encode_frame(kind, seq, &payload);
        Tick {
            seq,
            kind,
            payload,
            json,
        }
    }

    fn gaze_payload(&mut self, kind: FrameKind, now: Millis, seq: u64) -> FramePayload {
        let params = &self.config.gaze;
        let latest: Vec<(u64, (f64, f64))> = self
            .members
            .iter()
            .filter_map(|(&o, m)| match m.pipeline {
                Pipeline::Gaze { latest: Some(p), .. } => Some((o, p)),
                _ => None,
            })
            .collect();

        for &(o, (x, y)) in &latest {
            self.heat.push_back((o, TimedPosition { x, y, t: now }));
        }
        let horizon = (params.horizon_s * 1000.0).round() as Millis;
        while self.heat.front().is_some_and(|(_, p)| now - p.t > horizon) {
            self.heat.pop_front();
        }

        match kind {
            FrameKind::Dots => {
                let points: Vec<(f64, f64)> = latest.iter().map(|&(_, p)| p).collect();
                FramePayload::Dots(DotsPayload::from(&dots_frame(&points, frame_seed(self.seed, seq), seq)))
            }
            _ => {
                let positions: Vec<TimedPosition> = self.heat.iter().map(|&(_, p)| p).collect();
                let map = accumulate_heatmap(&positions, now, params.grid, &params.kernel());
                let map = if kind == FrameKind::Dense {
                    dense_area_map(&map, params.dense_threshold).expect("threshold validated with config")
                } else {
                    map
                };
                FramePayload::Heat(HeatPayload::from(&map))
            }
        }
    }

    fn nod_payload(&mut self, seq: u64) -> FramePayload {
        let params = self.config.nod;
        let dt = self.config.tick_period_s();
        for m in self.members.values_mut() {
            if let Pipeline::Nod { trail, pending } = &mut m.pipeline {
                let (vx, vy) = if pending.2 > 0 {
                    (pending.0 / pending.2 as f64, pending.1 / pending.2 as f64)
                } else {
                    (0.0, 0.0)
                };
                trail.advance(&params, vx, vy, dt);
                *pending = (0.0, 0.0, 0);
            }
        }
        let mut order: Vec<&Member> = self.members.values().collect();
        order.sort_by_key(|m| m.slot_key);
        let trails: Vec<&TrailState> = order
            .iter()
            .filter_map(|m| match &m.pipeline {
                Pipeline::Nod { trail, .. } => Some(trail),
                Pipeline::Gaze { .. } => None,
            })
            .collect();
        FramePayload::Trails(TrailsPayload::from(&compose_trails(trails, params.spacing, seq)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GazeSample, NodSample};

    fn id(n: u64) -> AudienceId {
        AudienceId::from_entropy(n)
    }

    fn gaze(t: Millis, x: f64, y: f64) -> RawSample {
        RawSample::Gaze(GazeSample { t, x, y })
    }

    #[test]
    fn gaze_ingest_grows_smoother_until_window() {
        let mut room = RoomEngine::new(RoomConfig::default(), 1);
        room.join(id(1), 0).unwrap();
        for k in 0..10 {
            room.ingest(&id(1), gaze(k, 0.5, 0.5), k).unwrap();
            assert_eq!(room.smoother_len(&id(1)), Some((k as usize + 1).min(6)));
        }
    }

    #[test]
    fn nod_sample_in_gaze_room_rejected() {
        let mut room = RoomEngine::new(RoomConfig::default(), 1);
        room.join(id(1), 0).unwrap();
        let err = room
            .ingest(&id(1), RawSample::Nod(NodSample { t: 0, vx: 0.0, vy: 0.0 }), 0)
            .unwrap_err();
        assert!(matches!(err, IngestError::Rejected(Rejection::WrongKind { .. })));
        assert_eq!(room.stats().rejected, 1);
    }

    #[test]
    fn room_full_and_duplicate() {
        let cfg = RoomConfig {
            max_audiences: 2,
            ..RoomConfig::default()
        };
        let mut room = RoomEngine::new(cfg, 1);
        room.join(id(1), 0).unwrap();
        assert_eq!(room.join(id(1), 0), Err(JoinError::Duplicate(id(1))));
        room.join(id(2), 0).unwrap();
        assert_eq!(room.join(id(3), 0), Err(JoinError::RoomFull(2)));
    }

    #[test]
    fn tick_seq_has_no_gaps() {
        let mut room = RoomEngine::new(RoomConfig::default(), 1);
        room.join(id(1), 0).unwrap();
        // 60 s at 15 Hz
        let seqs: Vec<u64> = (1..=900).map(|k| room.tick(k * 1000 / 15).seq).collect();
        assert_eq!(seqs, (1..=900).collect::<Vec<_>>());
    }

    #[test]
    fn empty_nod_room_sends_empty_slots() {
        let mut room = RoomEngine::new(RoomConfig::with_mode(Mode::Nod), 1);
        let tick = room.tick(0);
        assert_eq!(tick.kind, FrameKind::Trails);
        assert_eq!(tick.json, r#"{"type":"frame","mode":"trails","seq":1,"payload":{"spacing":0.02,"slots":[]}}"#);
    }

    #[test]
    fn stale_members_detected_after_liveness_window() {
        let mut room = RoomEngine::new(RoomConfig::default(), 1);
        room.join(id(1), 0).unwrap();
        room.join(id(2), 0).unwrap();
        room.ingest(&id(1), gaze(0, 0.5, 0.5), 3_000).unwrap();
        assert!(room.stale_audiences(5_000).is_empty());
        assert_eq!(room.stale_audiences(5_001), vec![id(2)]);
        room.touch(&id(2), 5_001);
        assert!(room.stale_audiences(8_000).is_empty());
        assert_eq!(room.stale_audiences(10_002).len(), 2);
    }

    #[test]
    fn leave_discards_heat_contribution() {
        let mut room = RoomEngine::new(RoomConfig::default(), 1);
        room.join(id(1), 0).unwrap();
        room.ingest(&id(1), gaze(0, 0.5, 0.5), 0).unwrap();
        room.tick(0);
        assert!(room.leave(&id(1)));
        assert!(!room.leave(&id(1)));
        let Tick { payload: FramePayload::Heat(heat), .. } = room.tick(10) else {
            panic!("expected heat payload");
        };
        assert_eq!(heat.max, 0.0);
    }

    #[test]
    fn frames_never_mention_audience_ids() {
        for mode in [Mode::Gaze, Mode::Nod] {
            let mut room = RoomEngine::new(RoomConfig::with_mode(mode), 9);
            let ids: Vec<AudienceId> = (0..5).map(|n| id(0xabc0 + n)).collect();
            for a in &ids {
                room.join(a.clone(), 0).unwrap();
                let s = match mode {
                    Mode::Gaze => gaze(0, 0.4, 0.6),
                    Mode::Nod => RawSample::Nod(NodSample { t: 0, vx: 0.1, vy: 0.5 }),
                };
                room.ingest(a, s, 0).unwrap();
            }
            let tick = room.tick(66);
            assert!(!tick.json.contains(AudienceId::PREFIX));
            for a in &ids {
                assert!(!tick.json.contains(a.as_str()));
            }
        }
    }

    #[test]
    fn slot_order_is_fixed_for_the_session() {
        let mut room = RoomEngine::new(RoomConfig::with_mode(Mode::Nod), 5);
        for n in 0..4 {
            room.join(id(n), 0).unwrap();
        }
        // only audience 2 moves; its slot must stay put across ticks
        let moving_slot = |room: &mut RoomEngine, t| {
            room.ingest(&id(2), RawSample::Nod(NodSample { t, vx: 0.0, vy: 1.0 }), t)
                .unwrap();
            let Tick { payload: FramePayload::Trails(p), .. } = room.tick(t) else {
                panic!()
            };
            p.slots.iter().position(|s| s.last().unwrap().1 != 0.0).unwrap()
        };
        let first = moving_slot(&mut room, 0);
        for k in 1..20 {
            assert_eq!(moving_slot(&mut room, k * 66), first);
        }
    }
}
