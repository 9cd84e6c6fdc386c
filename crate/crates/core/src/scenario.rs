//! Synthetic audience scripts and their deterministic sample generators.

use std::f64::consts::TAU;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::model::{GazeSample, Millis, Mode, NodSample, RawSample};
use crate::room::mix64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GazeBehavior {
    Fixate {
        x: f64,
        y: f64,
        #[serde(default)]
        sigma: f64,
    },
    /// Waypoints are `(t_seconds, x, y)`; the latest one at or before `t` is active.
    SaccadeScript {
        waypoints: Vec<(f64, f64, f64)>,
        #[serde(default)]
        sigma: f64,
    },
    RandomWalk {
        sigma_step: f64,
        #[serde(default = "centre")]
        start: (f64, f64),
    },
}

fn centre() -> (f64, f64) {
    (0.5, 0.5)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodBehavior {
    /// Vertical nose-tip oscillation with displacement amplitude `amp`.
    Nod { freq_hz: f64, amp: f64 },
    Shake { freq_hz: f64, amp: f64 },
    Still {
        #[serde(default)]
        sigma: f64,
    },
    /// Points are `(t_seconds, vx, vy)`, linearly interpolated and held at the ends.
    Script { points: Vec<(f64, f64, f64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudienceGroup {
    pub count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gaze: Option<GazeBehavior>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nod: Option<NodBehavior>,
}

/// Checks evaluated over the frames a scenario's speakers receive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Assertion {
    /// Every full 10 s window holds `tick_hz * 10` frames within `tolerance` (relative).
    FrameRate { tolerance: f64 },
    MedianLatencyBelow { ms: f64 },
    NoProtocolErrors,
    /// Heat-map argmax lies in the cell containing `(x, y)` for at least `min_fraction` of post-warm-up frames.
    ArgmaxCell { x: f64, y: f64, min_fraction: f64 },
    DominanceAbove { threshold: f64, min_fraction: f64 },
    DominanceBelow { threshold: f64, min_fraction: f64 },
    /// Frames arrive and carry no aggregate mass.
    EmptyFrames { min_fraction: f64 },
    /// All speakers receive byte-identical frames for every shared seq.
    SpeakersAgree,
    /// No frame contains an audience identifier.
    NoAudienceIds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub room: String,
    pub mode: Mode,
    pub duration_s: f64,
    #[serde(default = "default_sample_hz")]
    pub sample_hz: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub speakers: usize,
    #[serde(default = "default_warmup")]
    pub warmup_s: f64,
    /// Server tick rate the frame-rate and latency checks expect.
    #[serde(default = "default_tick_hz")]
    pub tick_hz: u32,
    #[serde(default)]
    pub audiences: Vec<AudienceGroup>,
    #[serde(default)]
    pub assertions: Vec<Assertion>,
}

fn default_name() -> String {
    "scenario".into()
}
fn default_sample_hz() -> f64 {
    30.0
}
fn one() -> usize {
    1
}
fn default_warmup() -> f64 {
    2.0
}
fn default_tick_hz() -> u32 {
    15
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("reading scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing scenario: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

impl ScenarioConfig {
    /// Parses TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let cfg: ScenarioConfig = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn n_audiences(&self) -> usize {
        self.audiences.iter().map(|g| g.count).sum()
    }

    /// Samples each audience sends over the scenario.
    pub fn samples_per_audience(&self) -> u64 {
        (self.duration_s * self.sample_hz).floor() as u64
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if self.room.is_empty() {
            return bad("room must be non-empty".into());
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return bad("duration_s must be positive".into());
        }
        if !(self.sample_hz > 0.0 && self.sample_hz <= 120.0) {
            return bad("sample_hz must be in (0, 120]".into());
        }
        if !(self.warmup_s >= 0.0 && self.warmup_s < self.duration_s) {
            return bad("warmup_s must be in [0, duration_s)".into());
        }
        if !(1..=60).contains(&self.tick_hz) {
            return bad("tick_hz must be in [1, 60]".into());
        }
        for (i, g) in self.audiences.iter().enumerate() {
            let ok = match self.mode {
                Mode::Gaze => g.gaze.is_some() && g.nod.is_none(),
                Mode::Nod => g.nod.is_some() && g.gaze.is_none(),
            };
            if !ok {
                return bad(format!("audience group {i} needs exactly one {} behavior", self.mode));
            }
        }
        Ok(())
    }

    /// Behavior of the audience at `index`, counting through the groups in order.
    pub fn behavior_of(&self, index: usize) -> Option<&AudienceGroup> {
        let mut left = index;
        for g in &self.audiences {
            if left < g.count {
                return Some(g);
            }
            left -= g.count;
        }
        None
    }

    pub fn stream(&self, index: usize) -> Option<SampleStream> {
        let group = self.behavior_of(index)?.clone();
        Some(SampleStream {
            group,
            state: GeneratorState::new(self.seed, index as u64),
            sample_hz: self.sample_hz,
            next: 0,
            total: self.samples_per_audience(),
        })
    }
}

/// Per-audience generator randomness and random-walk position.
#[derive(Debug, Clone)]
pub struct GeneratorState {
    rng: ChaCha8Rng,
    walk: Option<(f64, f64)>,
}

impl GeneratorState {
    pub fn new(seed: u64, index: u64) -> Self {
        GeneratorState {
            rng: ChaCha8Rng::seed_from_u64(mix64(seed ^ mix64(index.wrapping_add(1)))),
            walk: None,
        }
    }

    fn normal(&mut self, sigma: f64) -> f64 {
        if sigma == 0.0 {
            return 0.0;
        }
        let z: f64 = self.rng.sample(StandardNormal);
        z * sigma
    }
}

/// `cos(2π·turns)` with exact zeros at quarter turns.
pub fn cos_turns(turns: f64) -> f64 {
    let p = turns.rem_euclid(1.0);
    let quarter = (p * 4.0).floor();
    let r = TAU * (p - quarter / 4.0);
    match quarter as u8 {
        0 => r.cos(),
        1 => -r.sin(),
        2 => -r.cos(),
        _ => r.sin(),
    }
}

pub fn generate_gaze(behavior: &GazeBehavior, t: f64, state: &mut GeneratorState) -> (f64, f64) {
    let (x, y) = match behavior {
        GazeBehavior::Fixate { x, y, sigma } => (x + state.normal(*sigma), y + state.normal(*sigma)),
        GazeBehavior::SaccadeScript { waypoints, sigma } => {
            let active = waypoints
                .iter()
                .take_while(|w| w.0 <= t)
                .last()
                .or(waypoints.first());
            match active {
                Some(&(_, x, y)) => (x + state.normal(*sigma), y + state.normal(*sigma)),
                None => centre(),
            }
        }
        GazeBehavior::RandomWalk { sigma_step, start } => {
            let (wx, wy) = state.walk.unwrap_or(*start);
            let next = (
                (wx + state.normal(*sigma_step)).clamp(0.0, 1.0),
                (wy + state.normal(*sigma_step)).clamp(0.0, 1.0),
            );
            state.walk = Some(next);
            next
        }
    };
    (x.clamp(0.0, 1.0), y.clamp(0.0, 1.0))
}

pub fn generate_nod(behavior: &NodBehavior, t: f64, state: &mut GeneratorState) -> (f64, f64) {
    match behavior {
        NodBehavior::Nod { freq_hz, amp } => (0.0, amp * TAU * freq_hz * cos_turns(freq_hz * t)),
        NodBehavior::Shake { freq_hz, amp } => (amp * TAU * freq_hz * cos_turns(freq_hz * t), 0.0),
        NodBehavior::Still { sigma } => (state.normal(*sigma), state.normal(*sigma)),
        NodBehavior::Script { points } => interpolate(points, t),
    }
}

fn interpolate(points: &[(f64, f64, f64)], t: f64) -> (f64, f64) {
    let Some(first) = points.first() else {
        return (0.0, 0.0);
    };
    if t <= first.0 {
        return (first.1, first.2);
    }
    for pair in points.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if t <= b.0 {
            let span = b.0 - a.0;
            if span <= 0.0 {
                return (b.1, b.2);
            }
            let f = (t - a.0) / span;
            return (a.1 + f * (b.1 - a.1), a.2 + f * (b.2 - a.2));
        }
    }
    let last = points[points.len() - 1];
    (last.1, last.2)
}

/// Fixed-cadence sample sequence for one simulated audience.
#[derive(Debug, Clone)]
pub struct SampleStream {
    group: AudienceGroup,
    state: GeneratorState,
    sample_hz: f64,
    next: u64,
    total: u64,
}

impl SampleStream {
    pub fn len(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// Scheduled send offset of sample `k` in milliseconds from scenario start.
    pub fn offset_ms(&self, k: u64) -> Millis {
        (k as f64 * 1000.0 / self.sample_hz).round() as Millis
    }
}

impl Iterator for SampleStream {
    type Item = RawSample;

    fn next(&mut self) -> Option<RawSample> {
        if self.next >= self.total {
            return None;
        }
        let k = self.next;
        self.next += 1;
        let t_s = k as f64 / self.sample_hz;
        let t = self.offset_ms(k);
        if let Some(b) = &self.group.gaze {
            let (x, y) = generate_gaze(b, t_s, &mut self.state);
            Some(RawSample::Gaze(GazeSample { t, x, y }))
        } else {
            let b = self.group.nod.as_ref().expect("validated group has a behavior");
            let (vx, vy) = generate_nod(b, t_s, &mut self.state);
            Some(RawSample::Nod(NodSample { t, vx, vy }))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_fixation_is_exact() {
        let mut st = GeneratorState::new(1, 0);
        let b = GazeBehavior::Fixate { x: 0.5, y: 0.5, sigma: 0.0 };
        for t in [0.0, 1.5, 100.0] {
            assert_eq!(generate_gaze(&b, t, &mut st), (0.5, 0.5));
        }
    }

    #[test]
    fn saccade_waypoint_lookup() {
        let mut st = GeneratorState::new(1, 0);
        let b = GazeBehavior::SaccadeScript {
            waypoints: vec![(0.0, 0.1, 0.1), (5.0, 0.9, 0.9)],
            sigma: 0.0,
        };
        assert_eq!(generate_gaze(&b, 6.0, &mut st), (0.9, 0.9));
        assert_eq!(generate_gaze(&b, 4.9, &mut st), (0.1, 0.1));
    }

    #[test]
    fn random_walk_stays_in_unit_square() {
        let mut st = GeneratorState::new(3, 0);
        let b = GazeBehavior::RandomWalk {
            sigma_step: 0.2,
            start: (0.5, 0.5),
        };
        for k in 0..1000 {
            let (x, y) = generate_gaze(&b, k as f64, &mut st);
            assert!((0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y));
        }
    }

    #[test]
    fn nod_quarter_period_is_exact_zero() {
        let mut st = GeneratorState::new(1, 0);
        let b = NodBehavior::Nod { freq_hz: 2.0, amp: 0.05 };
        let (vx, vy) = generate_nod(&b, 0.125, &mut st);
        assert_eq!((vx, vy), (0.0, 0.0));
        let (_, peak) = generate_nod(&b, 0.0, &mut st);
        assert!((peak - 0.05 * TAU * 2.0).abs() < 1e-15);
    }

    #[test]
    fn shake_mirrors_nod() {
        let mut st = GeneratorState::new(1, 0);
        let nod = NodBehavior::Nod { freq_hz: 1.5, amp: 0.1 };
        let shake = NodBehavior::Shake { freq_hz: 1.5, amp: 0.1 };
        for k in 0..50 {
            let t = k as f64 * 0.033;
            let (a, b) = generate_nod(&nod, t, &mut st);
            let (c, d) = generate_nod(&shake, t, &mut st);
            assert_eq!((a, b), (d, c));
        }
    }

    #[test]
    fn still_zero_sigma_is_zero() {
        let mut st = GeneratorState::new(1, 0);
        assert_eq!(generate_nod(&NodBehavior::Still { sigma: 0.0 }, 3.0, &mut st), (0.0, 0.0));
    }

    #[test]
    fn script_interpolates_and_holds() {
        let mut st = GeneratorState::new(1, 0);
        let b = NodBehavior::Script {
            points: vec![(1.0, 0.0, 0.0), (2.0, 1.0, -1.0)],
        };
        assert_eq!(generate_nod(&b, 0.0, &mut st), (0.0, 0.0));
        assert_eq!(generate_nod(&b, 1.5, &mut st), (0.5, -0.5));
        assert_eq!(generate_nod(&b, 9.0, &mut st), (1.0, -1.0));
    }

    #[test]
    fn cos_turns_matches_cos() {
        for k in 0..400 {
            let turns = k as f64 * 0.0137 - 2.0;
            assert!((cos_turns(turns) - (TAU * turns).cos()).abs() < 1e-12);
        }
        for q in [0.25, 0.75, 1.25, -0.25] {
            assert_eq!(cos_turns(q), 0.0);
        }
    }

    #[test]
    fn toml_scenario_roundtrip() {
        let text = r#"
name = "all-nod"
room = "sim-nod"
mode = "nod"
duration_s = 20.0
seed = 7

[[audiences]]
count = 10
nod = { kind = "nod", freq_hz = 2.0, amp = 0.05 }

[[assertions]]
kind = "dominance_above"
threshold = 5.0
min_fraction = 0.9
"#;
        let cfg = ScenarioConfig::parse(text).unwrap();
        assert_eq!(cfg.n_audiences(), 10);
        assert_eq!(cfg.sample_hz, 30.0);
        assert_eq!(cfg.samples_per_audience(), 600);
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ScenarioConfig::parse(&json).unwrap(), cfg);
    }

    #[test]
    fn mismatched_behavior_rejected() {
        let text = r#"
room = "r"
mode = "gaze"
duration_s = 1.0
[[audiences]]
count = 1
nod = { kind = "still" }
"#;
        assert!(matches!(ScenarioConfig::parse(text), Err(ScenarioError::Invalid(_))));
    }

    #[test]
    fn streams_are_seed_deterministic() {
        let text = r#"
room = "r"
mode = "gaze"
duration_s = 3.0
seed = 11
[[audiences]]
count = 3
gaze = { kind = "random_walk", sigma_step = 0.01 }
"#;
        let cfg = ScenarioConfig::parse(text).unwrap();
        for i in 0..3 {
            let a: Vec<_> = cfg.stream(i).unwrap().collect();
            let b: Vec<_> = cfg.stream(i).unwrap().collect();
            assert_eq!(a.len(), 90);
            assert_eq!(a, b);
        }
        let a: Vec<_> = cfg.stream(0).unwrap().collect();
        let b: Vec<_> = cfg.stream(1).unwrap().collect();
        assert_ne!(a, b);
    }
}
