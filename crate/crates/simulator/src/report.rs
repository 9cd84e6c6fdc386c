//! Scenario evaluation from recorded wire traffic.
//!
//! Everything here works on what the clients saw: frame texts and their
//! arrival times. Nothing reaches into the server.

use std::collections::BTreeMap;

use calmrelay_core::model::{AudienceId, Mode};
use calmrelay_core::nod::vertical_dominance;
use calmrelay_core::protocol::{FrameKind, FramePayload, Message};
use calmrelay_core::scenario::{Assertion, ScenarioConfig};
use serde::Serialize;

/// One FRAME as a speaker received it.
#[derive(Debug, Clone)]
pub struct ReceivedFrame {
    /// Arrival in ms since the first HELLO was sent.
    pub at_ms: f64,
    pub seq: u64,
    pub text: String,
}

/// Raw traffic from one scenario run.
#[derive(Debug, Clone, Default)]
pub struct Traffic {
    /// When audiences started streaming, ms since the first HELLO.
    pub stream_start_ms: f64,
    /// One frame list per speaker, in arrival order.
    pub speakers: Vec<Vec<ReceivedFrame>>,
    pub samples_sent: u64,
    pub protocol_errors: Vec<String>,
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct LatencyStats {
    pub median_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
    /// `hello` when measured against the first HELLO send time, `min_offset`
    /// when that would give negative latencies (the room already existed).
    pub reference: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct AssertionResult {
    pub assertion: Assertion,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioReport {
    pub name: String,
    pub room: String,
    pub mode: Mode,
    pub frames_received: usize,
    pub frames_evaluated: usize,
    pub frame_rate_observed: f64,
    pub latency: LatencyStats,
    pub samples_sent: u64,
    pub protocol_errors: Vec<String>,
    pub frames_with_audience_ids: usize,
    pub speakers_agree: bool,
    /// `(seq, i, j)` per evaluated heat-map frame that has any mass.
    pub argmax_trajectory: Vec<(u64, usize, usize)>,
    /// `(seq, dominance)` per evaluated trail frame; infinity serializes as null.
    pub dominance: Vec<(u64, f64)>,
    pub wall_clock_s: f64,
    pub assertions: Vec<AssertionResult>,
    pub passed: bool,
}

impl ScenarioReport {
    pub fn failures(&self) -> impl Iterator<Item = &AssertionResult> {
        self.assertions.iter().filter(|a| !a.passed)
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[rank]
}

fn latency(frames: &[ReceivedFrame], period_ms: f64) -> LatencyStats {
    let raw: Vec<f64> = frames.iter().map(|f| f.at_ms - f.seq as f64 * period_ms).collect();
    let floor = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let (shift, reference) = if floor < 0.0 { (floor, "min_offset") } else { (0.0, "hello") };
    let mut lat: Vec<f64> = raw.iter().map(|l| l - shift).collect();
    lat.sort_by(f64::total_cmp);
    LatencyStats {
        median_ms: percentile(&lat, 0.5),
        p95_ms: percentile(&lat, 0.95),
        max_ms: lat.last().copied().unwrap_or(f64::NAN),
        reference,
    }
}

fn decode(text: &str) -> Option<(FrameKind, FramePayload)> {
    match Message::parse(text).ok()? {
        Message::Frame { mode, payload, .. } => Some((mode, FramePayload::from_value(mode, payload).ok()?)),
        _ => None,
    }
}

fn is_empty(payload: &FramePayload) -> bool {
    match payload {
        FramePayload::Heat(h) => h.max == 0.0 && h.cells.iter().all(|&c| c == 0.0),
        FramePayload::Dots(d) => d.points.is_empty(),
        FramePayload::Trails(t) => t.slots.is_empty(),
    }
}

fn fraction(hits: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

/// Builds the report. `known_ids` adds exact identifiers to the leak scan on
/// top of the `aud_` prefix.
pub fn evaluate(scenario: &ScenarioConfig, traffic: &Traffic, known_ids: &[AudienceId]) -> ScenarioReport {
    let period_ms = 1000.0 / scenario.tick_hz as f64;
    let all = traffic.speakers.first().map(Vec::as_slice).unwrap_or(&[]);
    let from = traffic.stream_start_ms + scenario.warmup_s * 1000.0;
    let until = traffic.stream_start_ms + scenario.duration_s * 1000.0;
    let window: Vec<&ReceivedFrame> = all.iter().filter(|f| f.at_ms >= from && f.at_ms <= until).collect();
    let decoded: Vec<(u64, Option<(FrameKind, FramePayload)>)> =
        window.iter().map(|f| (f.seq, decode(&f.text))).collect();

    let mut protocol_errors = traffic.protocol_errors.clone();
    let undecodable = decoded.iter().filter(|(_, d)| d.is_none()).count();
    if undecodable > 0 {
        protocol_errors.push(format!("{undecodable} frames did not decode"));
    }

    let span_s = (until - from) / 1000.0;
    let frame_rate_observed = window.len() as f64 / span_s;

    let leaks = traffic
        .speakers
        .iter()
        .flatten()
        .filter(|f| {
            f.text.contains(AudienceId::PREFIX) || known_ids.iter().any(|id| f.text.contains(id.as_str()))
        })
        .count();

    let speakers_agree = {
        let mut by_seq: BTreeMap<u64, &str> = BTreeMap::new();
        let mut agree = true;
        for f in traffic.speakers.iter().flatten() {
            if let Some(prev) = by_seq.insert(f.seq, &f.text) {
                agree &= prev == f.text;
            }
        }
        agree
    };

    let mut argmax_trajectory = Vec::new();
    let mut dominance = Vec::new();
    for (seq, d) in &decoded {
        match d {
            Some((_, FramePayload::Heat(h))) => {
                if let Some((i, j)) = h.argmax() {
                    argmax_trajectory.push((*seq, i, j));
                }
            }
            Some((_, FramePayload::Trails(t))) => dominance.push((*seq, vertical_dominance(&t.slots))),
            _ => {}
        }
    }

    let results: Vec<AssertionResult> = scenario
        .assertions
        .iter()
        .map(|a| {
            let (passed, detail) = check(a, scenario, &window, &decoded, period_ms, &protocol_errors, leaks, speakers_agree);
            AssertionResult {
                assertion: a.clone(),
                passed,
                detail,
            }
        })
        .collect();

    ScenarioReport {
        name: scenario.name.clone(),
        room: scenario.room.clone(),
        mode: scenario.mode,
        frames_received: all.len(),
        frames_evaluated: window.len(),
        frame_rate_observed,
        latency: latency(&window.iter().map(|f| (*f).clone()).collect::<Vec<_>>(), period_ms),
        samples_sent: traffic.samples_sent,
        protocol_errors,
        frames_with_audience_ids: leaks,
        speakers_agree,
        argmax_trajectory,
        dominance,
        wall_clock_s: traffic.wall_clock_s,
        passed: results.iter().all(|r| r.passed),
        assertions: results,
    }
}

#[allow(clippy::too_many_arguments)]
fn check(
    assertion: &Assertion,
    scenario: &ScenarioConfig,
    window: &[&ReceivedFrame],
    decoded: &[(u64, Option<(FrameKind, FramePayload)>)],
    period_ms: f64,
    protocol_errors: &[String],
    leaks: usize,
    speakers_agree: bool,
) -> (bool, String) {
    let n = decoded.len();
    match *assertion {
        Assertion::FrameRate { tolerance } => {
            let expected_hz = scenario.tick_hz as f64;
            let start = window.first().map_or(0.0, |f| f.at_ms);
            let end = window.last().map_or(0.0, |f| f.at_ms);
            // full 10 s windows, or the whole span when shorter
            let span = 10_000.0f64.min(end - start);
            let mut worst: f64 = 0.0;
            let mut rates = Vec::new();
            let mut w0 = start;
            while w0 + span <= end + 1e-9 && span > 0.0 {
                let count = window.iter().filter(|f| f.at_ms >= w0 && f.at_ms < w0 + span).count();
                let rate = count as f64 / (span / 1000.0);
                worst = worst.max((rate - expected_hz).abs() / expected_hz);
                rates.push(rate);
                w0 += span;
            }
            let ok = !rates.is_empty() && worst <= tolerance;
            (ok, format!("window rates {rates:.2?} Hz vs {expected_hz} Hz, worst deviation {:.1}%", worst * 100.0))
        }
        Assertion::MedianLatencyBelow { ms } => {
            let stats = latency(&window.iter().map(|f| (*f).clone()).collect::<Vec<_>>(), period_ms);
            (
                stats.median_ms < ms,
                format!("median {:.2} ms, p95 {:.2} ms ({})", stats.median_ms, stats.p95_ms, stats.reference),
            )
        }
        Assertion::NoProtocolErrors => (
            protocol_errors.is_empty(),
            if protocol_errors.is_empty() {
                "none".into()
            } else {
                protocol_errors.join("; ")
            },
        ),
        Assertion::NoAudienceIds => (leaks == 0, format!("{leaks} frames carried an audience id")),
        Assertion::SpeakersAgree => (speakers_agree, format!("speakers agree: {speakers_agree}")),
        Assertion::ArgmaxCell { x, y, min_fraction } => {
            let mut hits = 0;
            let mut expected = None;
            for (_, d) in decoded {
                if let Some((_, FramePayload::Heat(h))) = d {
                    let cell = (
                        ((x * h.w as f64).floor() as usize).min(h.w - 1),
                        ((y * h.h as f64).floor() as usize).min(h.h - 1),
                    );
                    expected = Some(cell);
                    hits += (h.argmax() == Some(cell)) as usize;
                }
            }
            let f = fraction(hits, n);
            (f >= min_fraction, format!("argmax in {expected:?} for {hits}/{n} frames ({:.1}%)", f * 100.0))
        }
        Assertion::DominanceAbove { threshold, min_fraction } | Assertion::DominanceBelow { threshold, min_fraction } => {
            let above = matches!(assertion, Assertion::DominanceAbove { .. });
            let hits = decoded
                .iter()
                .filter(|(_, d)| match d {
                    Some((_, FramePayload::Trails(t))) => {
                        let v = vertical_dominance(&t.slots);
                        if above {
                            v > threshold
                        } else {
                            v < threshold
                        }
                    }
                    _ => false,
                })
                .count();
            let f = fraction(hits, n);
            let rel = if above { '>' } else { '<' };
            (f >= min_fraction, format!("dominance {rel} {threshold} in {hits}/{n} frames ({:.1}%)", f * 100.0))
        }
        Assertion::EmptyFrames { min_fraction } => {
            let hits = decoded.iter().filter(|(_, d)| d.as_ref().is_some_and(|(_, p)| is_empty(p))).count();
            let f = fraction(hits, n);
            (n > 0 && f >= min_fraction, format!("{hits}/{n} frames empty"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use calmrelay_core::protocol::{encode_frame, HeatPayload, TrailsPayload};

    fn scenario(assertions: &str) -> ScenarioConfig {
        ScenarioConfig::parse(&format!(
            "room = \"r\"\nmode = \"nod\"\nduration_s = 10.0\nwarmup_s = 0.0\n{assertions}"
        ))
        .unwrap()
    }

    fn trails(seq: u64, slots: Vec<Vec<(f64, f64)>>) -> String {
        encode_frame(FrameKind::Trails, seq, &FramePayload::Trails(TrailsPayload { spacing: 0.02, slots }))
    }

    fn frames(texts: impl Fn(u64) -> String, period_ms: f64, latency_ms: f64) -> Vec<ReceivedFrame> {
        (1..=150)
            .map(|seq| ReceivedFrame {
                at_ms: seq as f64 * period_ms + latency_ms,
                seq,
                text: texts(seq),
            })
            .collect()
    }

    #[test]
    fn ideal_traffic_passes() {
        let s = scenario(
            r#"
[[assertions]]
kind = "frame_rate"
tolerance = 0.1
[[assertions]]
kind = "median_latency_below"
ms = 50.0
[[assertions]]
kind = "dominance_above"
threshold = 5.0
min_fraction = 0.9
[[assertions]]
kind = "no_audience_ids"
[[assertions]]
kind = "speakers_agree"
"#,
        );
        let f = frames(|seq| trails(seq, vec![vec![(0.0, 0.0), (0.0, 0.1)]]), 1000.0 / 15.0, 3.0);
        let traffic = Traffic {
            speakers: vec![f.clone(), f],
            ..Traffic::default()
        };
        let report = evaluate(&s, &traffic, &[]);
        assert!(report.passed, "{:#?}", report.assertions);
        assert!((report.latency.median_ms - 3.0).abs() < 1e-9);
        assert_eq!(report.latency.reference, "hello");
        assert!(report.dominance.iter().all(|d| d.1 == f64::INFINITY));
        // infinity becomes null in the JSON report
        assert!(serde_json::to_string(&report).unwrap().contains("[1,null]"));
    }

    #[test]
    fn detects_leaks_disagreement_and_slow_frames() {
        let s = scenario("[[assertions]]\nkind = \"no_audience_ids\"\n[[assertions]]\nkind = \"speakers_agree\"\n[[assertions]]\nkind = \"frame_rate\"\ntolerance = 0.1");
        let a = frames(|seq| trails(seq, vec![]), 100.0, 1.0);
        let mut b = a.clone();
        b[3].text = b[3].text.replace("[]", "[[]]");
        b[5].text = "{\"type\":\"frame\",\"note\":\"aud_0000000000000001\"}".into();
        let traffic = Traffic {
            speakers: vec![a, b],
            ..Traffic::default()
        };
        let report = evaluate(&s, &traffic, &[]);
        let verdicts: Vec<bool> = report.assertions.iter().map(|a| a.passed).collect();
        assert_eq!(verdicts, [false, false, false]);
        assert_eq!(report.frames_with_audience_ids, 1);
    }

    #[test]
    fn argmax_counts_expected_cell() {
        let mut s = scenario("[[assertions]]\nkind = \"argmax_cell\"\nx = 0.3\ny = 0.4\nmin_fraction = 0.95");
        s.mode = Mode::Gaze;
        s.duration_s = 11.0;
        let heat = |seq: u64| {
            let mut cells = vec![0.0; 64 * 36];
            // cell (19, 14) holds (0.3, 0.4); every 10th frame peaks elsewhere
            let k = if seq.is_multiple_of(10) { 0 } else { 14 * 64 + 19 };
            cells[k] = 1.0;
            encode_frame(FrameKind::Heatmap, seq, &FramePayload::Heat(HeatPayload { w: 64, h: 36, cells, max: 1.0 }))
        };
        let traffic = Traffic {
            speakers: vec![frames(heat, 1000.0 / 15.0, 2.0)],
            ..Traffic::default()
        };
        let report = evaluate(&s, &traffic, &[]);
        assert!(!report.passed);
        assert!(report.assertions[0].detail.contains("135/150"), "{}", report.assertions[0].detail);
    }
}
