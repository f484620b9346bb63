//! From a received packet to analysis products: a uniform calibrated load
//! grid, total load, center of pressure, sit/stand transitions, and
//! 30-second / five-repetition scores.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::acquisition::TrialPacket;
use crate::sensor::{ChannelId, GaugeChannel, SensorError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("channels share no time window")]
    NoOverlap,
    #[error("channel {0} needs at least two samples")]
    TooFewSamples(ChannelId),
    #[error("grid rate must be positive, got {0}")]
    InvalidGridRate(f64),
    #[error(transparent)]
    Sensor(#[from] SensorError),
}

/// Seat-local corner positions in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChairGeometry {
    pub width_m: f64,
    pub depth_m: f64,
}

impl Default for ChairGeometry {
    fn default() -> Self {
        Self {
            width_m: 0.40,
            depth_m: 0.38,
        }
    }
}

impl ChairGeometry {
    pub fn new(width_m: f64, depth_m: f64) -> Option<Self> {
        (width_m > 0.0 && depth_m > 0.0).then_some(Self { width_m, depth_m })
    }

    pub fn position(&self, c: ChannelId) -> (f64, f64) {
        let x = if c.is_left() { -self.width_m / 2.0 } else { self.width_m / 2.0 };
        let y = if c.is_front() { self.depth_m / 2.0 } else { -self.depth_m / 2.0 };
        (x, y)
    }
}

/// Calibrated four-channel loads on a shared uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedTrial {
    pub trial_id: Uuid,
    pub user_id: String,
    pub label: Option<String>,
    pub grid_rate_hz: f64,
    pub t_ms: Vec<f64>,
    /// `[front_left, front_right, rear_left, rear_right]` per frame, kg.
    pub loads: Vec<[f64; 4]>,
}

impl AlignedTrial {
    pub fn frames(&self) -> usize {
        self.t_ms.len()
    }

    pub fn step_ms(&self) -> f64 {
        1000.0 / self.grid_rate_hz
    }

    pub fn duration_ms(&self) -> f64 {
        match (self.t_ms.first(), self.t_ms.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    pub fn channel(&self, c: ChannelId) -> impl Iterator<Item = f64> + '_ {
        self.loads.iter().map(move |row| row[c.index()])
    }

    /// CSV with a header row and six decimal places.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_ms,front_left_kg,front_right_kg,rear_left_kg,rear_right_kg,total_kg\n");
        for (t, row) in self.t_ms.iter().zip(&self.loads) {
            let total: f64 = row.iter().sum();
            let _ = writeln!(
                out,
                "{t:.6},{:.6},{:.6},{:.6},{:.6},{total:.6}",
                row[0], row[1], row[2], row[3]
            );
        }
        out
    }
}

/// Linearly interpolates every channel's calibrated load onto a grid at
/// `grid_rate_hz` spanning the window where all channels have data.
pub fn resample_uniform(packet: &TrialPacket, grid_rate_hz: f64) -> Result<AlignedTrial, PipelineError> {
    if !(grid_rate_hz > 0.0 && grid_rate_hz.is_finite()) {
        return Err(PipelineError::InvalidGridRate(grid_rate_hz));
    }
    let mut series: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(4);
    for (c, stream) in packet.channels.iter() {
        if stream.len() < 2 {
            return Err(PipelineError::TooFewSamples(c));
        }
        let gauge = GaugeChannel::standard(c, packet.nominal_rate);
        let cal = &packet.calibration[c];
        let t = stream.iter().map(|s| s.t_ms as f64).collect();
        let kg = stream
            .iter()
            .map(|s| gauge.counts_to_kg(s.counts, cal))
            .collect::<Result<Vec<_>, _>>()?;
        series.push((t, kg));
    }
    let start = series.iter().map(|(t, _)| t[0]).fold(f64::MIN, f64::max);
    let end = series.iter().map(|(t, _)| *t.last().unwrap()).fold(f64::MAX, f64::min);
    if start > end {
        return Err(PipelineError::NoOverlap);
    }

    let step = 1000.0 / grid_rate_hz;
    let rows = ((end - start) / step + 1e-9).floor() as usize + 1;
    let t_ms: Vec<f64> = (0..rows).map(|k| start + k as f64 * step).collect();
    let mut loads = vec![[0.0; 4]; rows];
    for (ci, (ts, kg)) in series.iter().enumerate() {
        for (row, v) in loads.iter_mut().zip(interpolate(ts, kg, &t_ms)) {
            row[ci] = v;
        }
    }
    Ok(AlignedTrial {
        trial_id: packet.trial_id,
        user_id: packet.user_id.clone(),
        label: packet.label.clone(),
        grid_rate_hz,
        t_ms,
        loads,
    })
}

/// Piecewise-linear interpolation at ascending query points inside `[ts[0], ts[last]]`.
fn interpolate(ts: &[f64], ys: &[f64], query: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(query.len());
    let mut j = 0;
    for &q in query {
        while j + 2 < ts.len() && ts[j + 1] < q {
            j += 1;
        }
        let (t0, t1, y0, y1) = (ts[j], ts[j + 1], ys[j], ys[j + 1]);
        let v = if q <= t0 {
            y0
        } else if q >= t1 {
            y1
        } else {
            let w = (q - t0) / (t1 - t0);
            y0 + (y1 - y0) * w
        };
        out.push(v);
    }
    out
}

pub fn total_load(at: &AlignedTrial) -> Vec<f64> {
    at.loads.iter().map(|r| r.iter().sum()).collect()
}

pub const DEFAULT_LOAD_FLOOR_KG: f64 = 2.0;

/// Load-weighted mean corner position per frame; `None` where the total
/// (with negative noise clamped to zero) is at or below `load_floor_kg`.
pub fn center_of_pressure(at: &AlignedTrial, geom: &ChairGeometry, load_floor_kg: f64) -> Vec<Option<(f64, f64)>> {
    at.loads
        .iter()
        .map(|row| {
            let w = row.map(|v| v.max(0.0));
            let total: f64 = w.iter().sum();
            if total <= load_floor_kg {
                return None;
            }
            let (mut x, mut y) = (0.0, 0.0);
            for c in ChannelId::ALL {
                let (px, py) = geom.position(c);
                x += w[c.index()] * px;
                y += w[c.index()] * py;
            }
            Some((x / total, y / total))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransitionKind {
    SitToStand,
    StandToSit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionEvent {
    pub kind: TransitionKind,
    pub t_start_ms: f64,
    pub t_end_ms: f64,
}

impl TransitionEvent {
    pub fn duration_ms(&self) -> f64 {
        self.t_end_ms - self.t_start_ms
    }
}

/// Hysteresis thresholds as fractions of body weight, plus the dwell time a
/// state must be held before it counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub seated_fraction: f64,
    pub standing_fraction: f64,
    pub dwell_ms: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            seated_fraction: 0.60,
            standing_fraction: 0.15,
            dwell_ms: 300.0,
        }
    }
}

/// Nearest-rank 95th percentile.
pub fn estimate_body_weight(total: &[f64]) -> f64 {
    if total.is_empty() {
        return 0.0;
    }
    let mut v: Vec<f64> = total.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((0.95 * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Posture {
    Seated,
    Standing,
}

/// Time at which the segment `(t0, v0)`–`(t1, v1)` crosses `level`.
fn crossing(t0: f64, v0: f64, t1: f64, v1: f64, level: f64) -> f64 {
    if v1 == v0 {
        t1
    } else {
        t0 + (t1 - t0) * ((v0 - level) / (v0 - v1)).clamp(0.0, 1.0)
    }
}

/// Below this estimated body weight the chair is treated as unoccupied, so
/// sensor noise on an empty seat is not segmented.
pub const MIN_OCCUPIED_KG: f64 = 10.0;

/// Segments total load into seated/standing phases and reports each change.
///
/// A frame is seated-like at or above `seated_fraction * W` and standing-like
/// at or below `standing_fraction * W`; a phase is entered once such frames
/// persist for `dwell_ms`. Events span the two threshold crossings and
/// strictly alternate in kind. With `body_weight_kg` absent, W is the 95th
/// percentile of `total`, and an estimate below [`MIN_OCCUPIED_KG`] means
/// nobody used the chair: no events.
pub fn detect_transitions(
    t_ms: &[f64],
    total: &[f64],
    body_weight_kg: Option<f64>,
    cfg: &DetectorConfig,
) -> Vec<TransitionEvent> {
    assert_eq!(t_ms.len(), total.len(), "time and load series differ in length");
    let mut events = Vec::new();
    let w = match body_weight_kg {
        Some(w) => w,
        None if total.is_empty() => return events,
        None => estimate_body_weight(total),
    };
    if w.is_nan() || w <= 0.0 || (body_weight_kg.is_none() && w < MIN_OCCUPIED_KG) {
        return events;
    }
    let hi = cfg.seated_fraction * w;
    let lo = cfg.standing_fraction * w;
    let classify = |v: f64| {
        if v >= hi {
            Some(Posture::Seated)
        } else if v <= lo {
            Some(Posture::Standing)
        } else {
            None
        }
    };

    let mut state: Option<Posture> = None;
    // Current run of frames sharing a posture candidate: (posture, first frame).
    let mut run: Option<(Posture, usize)> = None;
    // Last frame classified as the confirmed state's posture.
    let mut last_in_state = 0usize;

    for i in 0..total.len() {
        let p = classify(total[i]);
        match (p, run) {
            (Some(p), Some((rp, _))) if p == rp => {}
            (Some(p), _) => run = Some((p, i)),
            (None, _) => run = None,
        }
        if p.is_some() && p == state {
            last_in_state = i;
        }
        let Some((rp, start)) = run else { continue };
        if Some(rp) == state || t_ms[i] - t_ms[start] < cfg.dwell_ms {
            continue;
        }
        if let Some(prev) = state {
            // Leave `prev` at the crossing after its last frame, arrive at the
            // crossing before the run's first frame.
            let (kind, exit_level, enter_level) = match prev {
                Posture::Seated => (TransitionKind::SitToStand, hi, lo),
                Posture::Standing => (TransitionKind::StandToSit, lo, hi),
            };
            let a = last_in_state;
            let t_start = crossing(t_ms[a], total[a], t_ms[a + 1], total[a + 1], exit_level);
            let t_end = if start == 0 {
                t_ms[0]
            } else {
                crossing(t_ms[start - 1], total[start - 1], t_ms[start], total[start], enter_level)
            };
            events.push(TransitionEvent {
                kind,
                t_start_ms: t_start,
                t_end_ms: t_end.max(t_start),
            });
        }
        state = Some(rp);
        last_in_state = i;
    }
    events
}

/// Chair-stand test results for one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StsScore {
    /// Completed rises finishing within the first 30 s.
    pub reps_30s: usize,
    /// First rise start to fifth rise end, when there are five rises.
    pub five_reps_time_s: Option<f64>,
    pub transition_durations_ms: Vec<f64>,
}

pub const THIRTY_SECONDS_MS: f64 = 30_000.0;

/// Scores events whose times are relative to `trial_start_ms`.
pub fn score_trial(events: &[TransitionEvent], trial_start_ms: f64) -> StsScore {
    let rises: Vec<&TransitionEvent> = events.iter().filter(|e| e.kind == TransitionKind::SitToStand).collect();
    let reps_30s = rises
        .iter()
        .filter(|e| e.t_end_ms - trial_start_ms <= THIRTY_SECONDS_MS)
        .count();
    let five_reps_time_s = (rises.len() >= 5).then(|| (rises[4].t_end_ms - rises[0].t_start_ms) / 1000.0);
    StsScore {
        reps_30s,
        five_reps_time_s,
        transition_durations_ms: events.iter().map(TransitionEvent::duration_ms).collect(),
    }
}

/// Convenience: resample, detect, and score a packet end to end.
pub fn analyze_packet(
    packet: &TrialPacket,
    grid_rate_hz: f64,
    body_weight_kg: Option<f64>,
    cfg: &DetectorConfig,
) -> Result<(AlignedTrial, Vec<TransitionEvent>, StsScore), PipelineError> {
    let at = resample_uniform(packet, grid_rate_hz)?;
    let total = total_load(&at);
    let events = detect_transitions(&at.t_ms, &total, body_weight_kg, cfg);
    // Packet timestamps are rebased to the trial start.
    let score = score_trial(&events, 0.0);
    Ok((at, events, score))
}
