//! Strain-gauge channel model: ADC quantization, two-point calibration, and
//! differential drift cancellation against an unloaded reference gauge.

use std::fmt;
use std::ops::{Index, IndexMut};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Rated capacity of each corner gauge.
pub const DEFAULT_MAX_LOAD_KG: f64 = 50.0;
pub const DEFAULT_RESOLUTION_BITS: u32 = 24;
/// Full positive 24-bit range at 25 kg.
pub const DEFAULT_SCALE_COUNTS_PER_KG: f64 = 335_544.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SensorError {
    #[error("{channel} reading of {kg:.3} kg exceeds the {max_load_kg} kg gauge rating")]
    OverRange {
        channel: ChannelId,
        kg: f64,
        max_load_kg: f64,
    },
    #[error("scale must be a positive finite number, got {0}")]
    InvalidScale(f64),
    #[error("resolution must be between 8 and 32 bits, got {0}")]
    InvalidResolution(u32),
    #[error("unsupported sampling rate {0} Hz (the HX711 runs at 10 or 80 Hz)")]
    UnsupportedRate(u32),
    #[error("max load must be positive, got {0}")]
    InvalidMaxLoad(f64),
}

/// The four load-bearing corners of the seat.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelId {
    FrontLeft,
    FrontRight,
    RearLeft,
    RearRight,
}

impl ChannelId {
    pub const ALL: [ChannelId; 4] = [
        ChannelId::FrontLeft,
        ChannelId::FrontRight,
        ChannelId::RearLeft,
        ChannelId::RearRight,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Wire key, e.g. `front_left`.
    pub fn key(self) -> &'static str {
        match self {
            ChannelId::FrontLeft => "front_left",
            ChannelId::FrontRight => "front_right",
            ChannelId::RearLeft => "rear_left",
            ChannelId::RearRight => "rear_right",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.key() == key)
    }

    pub fn is_front(self) -> bool {
        matches!(self, ChannelId::FrontLeft | ChannelId::FrontRight)
    }

    pub fn is_left(self) -> bool {
        matches!(self, ChannelId::FrontLeft | ChannelId::RearLeft)
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// One value per corner, indexable by [`ChannelId`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct PerChannel<T>(pub [T; 4]);

impl<T> PerChannel<T> {
    pub fn from_fn(mut f: impl FnMut(ChannelId) -> T) -> Self {
        PerChannel([
            f(ChannelId::FrontLeft),
            f(ChannelId::FrontRight),
            f(ChannelId::RearLeft),
            f(ChannelId::RearRight),
        ])
    }

    pub fn iter(&self) -> impl Iterator<Item = (ChannelId, &T)> {
        ChannelId::ALL.into_iter().zip(self.0.iter())
    }

    pub fn map<U>(&self, mut f: impl FnMut(ChannelId, &T) -> U) -> PerChannel<U> {
        PerChannel::from_fn(|c| f(c, &self[c]))
    }
}

impl<T> Index<ChannelId> for PerChannel<T> {
    type Output = T;
    fn index(&self, c: ChannelId) -> &T {
        &self.0[c.index()]
    }
}

impl<T> IndexMut<ChannelId> for PerChannel<T> {
    fn index_mut(&mut self, c: ChannelId) -> &mut T {
        &mut self.0[c.index()]
    }
}

/// Nominal HX711 output data rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum SampleRate {
    #[default]
    Hz10,
    Hz80,
}

impl SampleRate {
    pub fn hz(self) -> u32 {
        match self {
            SampleRate::Hz10 => 10,
            SampleRate::Hz80 => 80,
        }
    }

    pub fn period_ms(self) -> f64 {
        1000.0 / f64::from(self.hz())
    }
}

impl TryFrom<u32> for SampleRate {
    type Error = SensorError;
    fn try_from(hz: u32) -> Result<Self, SensorError> {
        match hz {
            10 => Ok(SampleRate::Hz10),
            80 => Ok(SampleRate::Hz80),
            other => Err(SensorError::UnsupportedRate(other)),
        }
    }
}

impl fmt::Display for SampleRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} Hz", self.hz())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaugeChannel {
    pub id: ChannelId,
    pub max_load_kg: f64,
    pub resolution_bits: u32,
    pub nominal_rate: SampleRate,
}

impl GaugeChannel {
    pub fn new(
        id: ChannelId,
        max_load_kg: f64,
        resolution_bits: u32,
        nominal_rate: SampleRate,
    ) -> Result<Self, SensorError> {
        if !(max_load_kg > 0.0 && max_load_kg.is_finite()) {
            return Err(SensorError::InvalidMaxLoad(max_load_kg));
        }
        if !(8..=32).contains(&resolution_bits) {
            return Err(SensorError::InvalidResolution(resolution_bits));
        }
        Ok(Self {
            id,
            max_load_kg,
            resolution_bits,
            nominal_rate,
        })
    }

    /// A 50 kg, 24-bit gauge.
    pub fn standard(id: ChannelId, nominal_rate: SampleRate) -> Self {
        Self {
            id,
            max_load_kg: DEFAULT_MAX_LOAD_KG,
            resolution_bits: DEFAULT_RESOLUTION_BITS,
            nominal_rate,
        }
    }

    pub fn counts_to_kg(&self, raw: i64, cal: &Calibration) -> Result<f64, SensorError> {
        counts_to_kg(raw, cal, self)
    }
}

/// A timestamped ADC reading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RawSample {
    /// Monotonic milliseconds since trial start.
    pub t_ms: u64,
    pub counts: i64,
}

impl RawSample {
    pub fn new(t_ms: u64, counts: i64) -> Self {
        Self { t_ms, counts }
    }
}

pub type ChannelStream = Vec<RawSample>;

/// Two-point affine calibration: `kg = (counts - tare) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub tare_counts: i64,
    pub scale_counts_per_kg: f64,
}

impl Default for Calibration {
    fn default() -> Self {
        Self {
            tare_counts: 0,
            scale_counts_per_kg: DEFAULT_SCALE_COUNTS_PER_KG,
        }
    }
}

impl Calibration {
    pub fn new(tare_counts: i64, scale_counts_per_kg: f64) -> Result<Self, SensorError> {
        if !(scale_counts_per_kg > 0.0 && scale_counts_per_kg.is_finite()) {
            return Err(SensorError::InvalidScale(scale_counts_per_kg));
        }
        Ok(Self {
            tare_counts,
            scale_counts_per_kg,
        })
    }

    /// Unchecked conversion; no rating check.
    pub fn to_kg(&self, raw: i64) -> f64 {
        (raw - self.tare_counts) as f64 / self.scale_counts_per_kg
    }
}

/// Converts a corrected reading to kilograms, rejecting loads beyond the
/// gauge rating. Small negative values (noise around zero) pass through.
pub fn counts_to_kg(raw: i64, cal: &Calibration, gauge: &GaugeChannel) -> Result<f64, SensorError> {
    let kg = cal.to_kg(raw);
    if kg.abs() > gauge.max_load_kg {
        return Err(SensorError::OverRange {
            channel: gauge.id,
            kg,
            max_load_kg: gauge.max_load_kg,
        });
    }
    Ok(kg)
}

/// Subtracts the paired reference gauge. Any disturbance common to both
/// readings cancels exactly.
pub fn differential_read(active: i64, reference: i64) -> i64 {
    active.wrapping_sub(reference)
}

/// Inclusive two's-complement range of a `bits`-wide ADC word.
pub fn adc_range(bits: u32) -> (i64, i64) {
    let half = 1i64 << (bits - 1);
    (-half, half - 1)
}

/// Ideal load to ADC counts: round half away from zero, then saturate.
pub fn quantize(ideal_kg: f64, cal: &Calibration, bits: u32) -> i64 {
    assert!((8..=32).contains(&bits), "resolution must be 8..=32 bits");
    quantize_counts(ideal_kg * cal.scale_counts_per_kg + cal.tare_counts as f64, bits)
}

fn quantize_counts(value: f64, bits: u32) -> i64 {
    let (lo, hi) = adc_range(bits);
    // f64::round is half-away-from-zero; NaN saturates to 0 via `as`.
    let r = value.round();
    if r <= lo as f64 {
        lo
    } else if r >= hi as f64 {
        hi
    } else {
        r as i64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftModel {
    /// Slow environmental trend, counts per second, shared by each
    /// active/reference pair.
    pub drift_rate: f64,
    /// White-noise standard deviation of one differential reading, in counts.
    pub noise_sigma: f64,
}

impl DriftModel {
    pub fn none() -> Self {
        Self {
            drift_rate: 0.0,
            noise_sigma: 0.0,
        }
    }

    pub fn new(drift_rate: f64, noise_sigma: f64) -> Self {
        assert!(noise_sigma >= 0.0, "noise_sigma must be non-negative");
        Self {
            drift_rate,
            noise_sigma,
        }
    }
}

/// Anything that can say how much load each corner carries at time `t_s`.
pub trait LoadSource {
    fn corner_loads_kg(&self, t_s: f64) -> [f64; 4];

    fn total_kg(&self, t_s: f64) -> f64 {
        self.corner_loads_kg(t_s).iter().sum()
    }
}

impl<F> LoadSource for F
where
    F: Fn(f64) -> [f64; 4],
{
    fn corner_loads_kg(&self, t_s: f64) -> [f64; 4] {
        self(t_s)
    }
}

/// A constant per-corner load.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticLoad(pub [f64; 4]);

impl LoadSource for StaticLoad {
    fn corner_loads_kg(&self, _t_s: f64) -> [f64; 4] {
        self.0
    }
}

/// Raw reading of one active/reference pair at an instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairReading {
    pub active: i64,
    pub reference: i64,
}

impl PairReading {
    pub fn corrected(&self) -> i64 {
        differential_read(self.active, self.reference)
    }
}

/// Simulated four-corner chair: a load source seen through four
/// active gauges, each wired against an unloaded reference gauge.
///
/// The active and reference gauge of a pair share one drift trajectory.
/// Each carries independent white noise of `noise_sigma / sqrt(2)` so the
/// differential reading has standard deviation `noise_sigma`.
#[derive(Debug, Clone)]
pub struct SimulatedChair<L> {
    pub load: L,
    pub calibration: PerChannel<Calibration>,
    pub drift: DriftModel,
    pub resolution_bits: u32,
}

impl<L: LoadSource> SimulatedChair<L> {
    pub fn new(load: L, calibration: PerChannel<Calibration>, drift: DriftModel) -> Self {
        Self {
            load,
            calibration,
            drift,
            resolution_bits: DEFAULT_RESOLUTION_BITS,
        }
    }

    /// Noise-free corrected counts of the corner at `t_s`.
    pub fn ideal_counts(&self, channel: ChannelId, t_s: f64) -> i64 {
        let kg = self.load.corner_loads_kg(t_s)[channel.index()];
        quantize(kg, &self.calibration[channel], self.resolution_bits)
    }

    /// One conversion of `channel`'s pair at `t_s`, drawing noise from `noise`.
    pub fn read(&self, channel: ChannelId, t_s: f64, noise: &mut GaugeNoise) -> PairReading {
        let cal = &self.calibration[channel];
        let kg = self.load.corner_loads_kg(t_s)[channel.index()];
        let drift = self.drift.drift_rate * t_s;
        let ideal = kg * cal.scale_counts_per_kg + cal.tare_counts as f64;
        let (na, nr) = noise.pair();
        PairReading {
            active: quantize_counts(ideal + drift + na, self.resolution_bits),
            reference: quantize_counts(drift + nr, self.resolution_bits),
        }
    }
}

/// Seeded per-pair noise source.
#[derive(Debug, Clone)]
pub struct GaugeNoise {
    rng: ChaCha8Rng,
    normal: Option<Normal<f64>>,
}

impl GaugeNoise {
    pub fn new(noise_sigma: f64, seed: u64) -> Self {
        let per_gauge = noise_sigma / std::f64::consts::SQRT_2;
        let normal = (per_gauge > 0.0).then(|| Normal::new(0.0, per_gauge).expect("finite sigma"));
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            normal,
        }
    }

    fn pair(&mut self) -> (f64, f64) {
        match &self.normal {
            Some(n) => (n.sample(&mut self.rng), n.sample(&mut self.rng)),
            None => (0.0, 0.0),
        }
    }
}

/// Output of [`simulate_chair`]: corrected streams plus the raw active and
/// reference streams they were derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct ChairCapture {
    pub corrected: PerChannel<ChannelStream>,
    pub active: PerChannel<ChannelStream>,
    pub reference: PerChannel<ChannelStream>,
}

/// Records `duration_s` of the chair through the asynchronous samplers with
/// the default jitter model for `rate`.
pub fn simulate_chair<L: LoadSource>(
    load: L,
    calibration: PerChannel<Calibration>,
    drift: DriftModel,
    duration_s: f64,
    rate: SampleRate,
    seed: u64,
) -> ChairCapture {
    let chair = SimulatedChair::new(load, calibration, drift);
    let config = crate::acquisition::SamplerConfig::jittered(rate, seed);
    crate::acquisition::run_samplers(&chair, &config, duration_s, seed)
}
