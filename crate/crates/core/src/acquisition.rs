//! Device-side acquisition: per-channel asynchronous samplers, tare and
//! known-mass calibration, and trial packaging.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::sensor::{
    differential_read, Calibration, ChairCapture, ChannelId, ChannelStream, GaugeNoise, LoadSource,
    PerChannel, RawSample, SampleRate, SimulatedChair,
};

pub const DEFAULT_JITTER_FRACTION: f64 = 0.02;
pub const MAX_JITTER_FRACTION: f64 = 0.05;
pub const MIN_CALIBRATION_SAMPLES: usize = 10;
/// Trial length shown in the reference recordings.
pub const DEFAULT_TRIAL_SECONDS: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AcquisitionError {
    #[error("need {needed} readings, only {available} available")]
    InsufficientSamples { needed: usize, available: usize },
    #[error("calibration needs at least {MIN_CALIBRATION_SAMPLES} readings, asked for {0}")]
    TooFewRequested(usize),
    #[error("computed scale {0} counts/kg is not positive; check the load and wiring")]
    NonPositiveScale(f64),
    #[error("known mass must be positive, got {0} kg")]
    InvalidMass(f64),
    #[error("channel {0} has no samples in the window")]
    EmptyChannel(ChannelId),
    #[error("jitter fraction {0} outside [0, {MAX_JITTER_FRACTION})")]
    InvalidJitter(f64),
    #[error("invalid packet: {0}")]
    InvalidPacket(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Test,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Train => "train",
            Mode::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Mode::Train),
            "test" => Some(Mode::Test),
            _ => None,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub nominal_rate: SampleRate,
    /// Each channel runs at `nominal * (1 + u)`, `u` uniform in `±jitter_fraction`.
    pub jitter_fraction: f64,
    pub phase_offset_ms: PerChannel<f64>,
}

impl SamplerConfig {
    pub fn new(
        nominal_rate: SampleRate,
        jitter_fraction: f64,
        phase_offset_ms: PerChannel<f64>,
    ) -> Result<Self, AcquisitionError> {
        if !(0.0..MAX_JITTER_FRACTION).contains(&jitter_fraction) {
            return Err(AcquisitionError::InvalidJitter(jitter_fraction));
        }
        Ok(Self {
            nominal_rate,
            jitter_fraction,
            phase_offset_ms,
        })
    }

    /// No jitter, no phase offsets: every channel ticks on the nominal grid.
    pub fn aligned(nominal_rate: SampleRate) -> Self {
        Self {
            nominal_rate,
            jitter_fraction: 0.0,
            phase_offset_ms: PerChannel([0.0; 4]),
        }
    }

    /// Default jitter with per-channel start offsets under half a nominal
    /// period, drawn from `seed`.
    pub fn jittered(nominal_rate: SampleRate, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5048_4153_455f_4f46);
        let half = nominal_rate.period_ms() / 2.0;
        Self {
            nominal_rate,
            jitter_fraction: DEFAULT_JITTER_FRACTION,
            phase_offset_ms: PerChannel::from_fn(|_| rng.random_range(0.0..half)),
        }
    }

    /// The concrete clock a channel runs on for a given trial seed.
    pub fn clock(&self, channel: ChannelId, seed: u64) -> ChannelClock {
        let mut rng = ChaCha8Rng::seed_from_u64(channel_seed(seed, channel, 0));
        let u = if self.jitter_fraction > 0.0 {
            rng.random_range(-self.jitter_fraction..=self.jitter_fraction)
        } else {
            0.0
        };
        ChannelClock {
            rate_hz: f64::from(self.nominal_rate.hz()) * (1.0 + u),
            phase_ms: self.phase_offset_ms[channel],
        }
    }
}

fn channel_seed(seed: u64, channel: ChannelId, stream: u64) -> u64 {
    // splitmix-style mixing keeps per-channel streams decorrelated.
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(channel.index() as u64 + 1))
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One channel's free-running conversion clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelClock {
    pub rate_hz: f64,
    pub phase_ms: f64,
}

impl ChannelClock {
    pub fn period_ms(&self) -> f64 {
        1000.0 / self.rate_hz
    }

    /// Exact conversion instants (ms) inside `[0, duration_s)`.
    pub fn ticks(&self, duration_s: f64) -> impl Iterator<Item = f64> + '_ {
        let end = duration_s * 1000.0;
        let period = self.period_ms();
        (0u64..)
            .map(move |i| self.phase_ms + i as f64 * period)
            .take_while(move |&t| t < end)
    }
}

/// Samples one channel of the chair on its own clock.
pub fn sample_channel<L: LoadSource>(
    chair: &SimulatedChair<L>,
    channel: ChannelId,
    clock: ChannelClock,
    duration_s: f64,
    noise_seed: u64,
) -> (ChannelStream, ChannelStream, ChannelStream) {
    let mut noise = GaugeNoise::new(chair.drift.noise_sigma, noise_seed);
    let mut corrected = Vec::new();
    let mut active = Vec::new();
    let mut reference = Vec::new();
    for t in clock.ticks(duration_s) {
        let reading = chair.read(channel, t / 1000.0, &mut noise);
        let t_ms = t.floor() as u64;
        active.push(RawSample::new(t_ms, reading.active));
        reference.push(RawSample::new(t_ms, reading.reference));
        corrected.push(RawSample::new(t_ms, differential_read(reading.active, reading.reference)));
    }
    (corrected, active, reference)
}

/// Runs the four channel samplers. Each channel has its own jittered clock and
/// noise stream; timestamps are that channel's clock readings, never snapped
/// to a shared grid.
pub fn run_samplers<L: LoadSource>(
    chair: &SimulatedChair<L>,
    config: &SamplerConfig,
    duration_s: f64,
    seed: u64,
) -> ChairCapture {
    assert!(duration_s > 0.0, "duration must be positive");
    let mut corrected = PerChannel::<ChannelStream>::default();
    let mut active = PerChannel::<ChannelStream>::default();
    let mut reference = PerChannel::<ChannelStream>::default();
    for channel in ChannelId::ALL {
        let clock = config.clock(channel, seed);
        let (c, a, r) = sample_channel(chair, channel, clock, duration_s, channel_seed(seed, channel, 1));
        corrected[channel] = c;
        active[channel] = a;
        reference[channel] = r;
    }
    ChairCapture {
        corrected,
        active,
        reference,
    }
}

/// Same capture as [`run_samplers`], with each channel on its own thread.
/// The samplers share only the read-only chair and join before merging.
pub fn run_samplers_threaded<L: LoadSource + Sync>(
    chair: &SimulatedChair<L>,
    config: &SamplerConfig,
    duration_s: f64,
    seed: u64,
) -> ChairCapture {
    assert!(duration_s > 0.0, "duration must be positive");
    let outputs: Vec<_> = std::thread::scope(|scope| {
        let handles: Vec<_> = ChannelId::ALL
            .map(|channel| {
                let clock = config.clock(channel, seed);
                scope.spawn(move || sample_channel(chair, channel, clock, duration_s, channel_seed(seed, channel, 1)))
            })
            .into_iter()
            .collect();
        handles.into_iter().map(|h| h.join().expect("sampler thread panicked")).collect()
    });
    let mut capture = ChairCapture {
        corrected: PerChannel::default(),
        active: PerChannel::default(),
        reference: PerChannel::default(),
    };
    for (channel, (c, a, r)) in ChannelId::ALL.into_iter().zip(outputs) {
        capture.corrected[channel] = c;
        capture.active[channel] = a;
        capture.reference[channel] = r;
    }
    capture
}

/// Inclusive per-channel sample count bounds for a capture of `duration_s`.
pub fn sample_count_bounds(rate: SampleRate, duration_s: f64, jitter_fraction: f64) -> (usize, usize) {
    let n = f64::from(rate.hz()) * duration_s;
    (
        (n * (1.0 - jitter_fraction)).floor() as usize,
        (n * (1.0 + jitter_fraction)).ceil() as usize,
    )
}

fn mean_counts(stream: &[RawSample], n: usize) -> Result<&[RawSample], AcquisitionError> {
    if n < MIN_CALIBRATION_SAMPLES {
        return Err(AcquisitionError::TooFewRequested(n));
    }
    if stream.len() < n {
        return Err(AcquisitionError::InsufficientSamples {
            needed: n,
            available: stream.len(),
        });
    }
    Ok(&stream[..n])
}

/// Mean of the first `n` unloaded readings, rounded half away from zero.
pub fn tare_channel(stream: &[RawSample], n: usize) -> Result<i64, AcquisitionError> {
    let window = mean_counts(stream, n)?;
    let sum: i128 = window.iter().map(|s| i128::from(s.counts)).sum();
    let n = n as i128;
    let q = sum / n;
    let r = sum % n;
    // Integer rounding: bump the quotient away from zero when |r| >= n/2.
    let rounded = if 2 * r.abs() >= n { q + sum.signum() } else { q };
    Ok(rounded as i64)
}

/// Scale from the first `n` readings with `known_mass_kg` on the corner.
pub fn calibrate_scale(
    stream: &[RawSample],
    tare: i64,
    known_mass_kg: f64,
    n: usize,
) -> Result<f64, AcquisitionError> {
    if !(known_mass_kg > 0.0 && known_mass_kg.is_finite()) {
        return Err(AcquisitionError::InvalidMass(known_mass_kg));
    }
    let window = mean_counts(stream, n)?;
    let mean = window.iter().map(|s| s.counts as f64).sum::<f64>() / n as f64;
    let scale = (mean - tare as f64) / known_mass_kg;
    if scale > 0.0 {
        Ok(scale)
    } else {
        Err(AcquisitionError::NonPositiveScale(scale))
    }
}

/// Everything about a trial except the samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialMeta {
    pub trial_id: Uuid,
    pub user_id: String,
    pub mode: Mode,
    pub label: Option<String>,
    /// RFC 3339 wall-clock start.
    pub started_at: String,
    pub nominal_rate: SampleRate,
    pub calibration: PerChannel<Calibration>,
}

/// One recording session as sent to the ingestion service.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialPacket {
    pub trial_id: Uuid,
    pub user_id: String,
    pub mode: Mode,
    pub label: Option<String>,
    pub started_at: String,
    pub nominal_rate: SampleRate,
    pub calibration: PerChannel<Calibration>,
    /// Drift-corrected counts.
    pub channels: PerChannel<ChannelStream>,
}

impl TrialPacket {
    pub fn meta(&self) -> TrialMeta {
        TrialMeta {
            trial_id: self.trial_id,
            user_id: self.user_id.clone(),
            mode: self.mode,
            label: self.label.clone(),
            started_at: self.started_at.clone(),
            nominal_rate: self.nominal_rate,
            calibration: self.calibration,
        }
    }

    pub fn sample_count(&self) -> usize {
        self.channels.0.iter().map(Vec::len).sum()
    }

    /// Structural invariants every packet must satisfy.
    pub fn validate(&self) -> Result<(), AcquisitionError> {
        let bad = |m: String| Err(AcquisitionError::InvalidPacket(m));
        if self.user_id.is_empty() {
            return bad("user_id is empty".into());
        }
        if self.mode == Mode::Test && self.label.is_some() {
            return bad("test-mode trials cannot carry a label".into());
        }
        if chrono::DateTime::parse_from_rfc3339(&self.started_at).is_err() {
            return bad(format!("started_at {:?} is not RFC 3339", self.started_at));
        }
        for (c, cal) in self.calibration.iter() {
            if !(cal.scale_counts_per_kg > 0.0 && cal.scale_counts_per_kg.is_finite()) {
                return bad(format!("{c} calibration scale must be positive"));
            }
        }
        for (c, stream) in self.channels.iter() {
            if stream.is_empty() {
                return Err(AcquisitionError::EmptyChannel(c));
            }
            if stream.windows(2).any(|w| w[1].t_ms <= w[0].t_ms) {
                return bad(format!("{c} timestamps are not strictly increasing"));
            }
        }
        Ok(())
    }

    /// Whether every channel's count lies in the jitter bounds for `duration_s`.
    pub fn counts_within_jitter(&self, duration_s: f64, jitter_fraction: f64) -> bool {
        let (lo, hi) = sample_count_bounds(self.nominal_rate, duration_s, jitter_fraction);
        self.channels.0.iter().all(|s| (lo..=hi).contains(&s.len()))
    }
}

/// Cuts `[t0_ms, t1_ms)` out of the sampled streams and rebases time to `t0_ms`.
pub fn assemble_trial(
    streams: &PerChannel<ChannelStream>,
    meta: TrialMeta,
    window: (u64, u64),
) -> Result<TrialPacket, AcquisitionError> {
    let (t0, t1) = window;
    let mut channels = PerChannel::<ChannelStream>::default();
    for (c, stream) in streams.iter() {
        let cut: ChannelStream = stream
            .iter()
            .filter(|s| s.t_ms >= t0 && s.t_ms < t1)
            .map(|s| RawSample::new(s.t_ms - t0, s.counts))
            .collect();
        if cut.is_empty() {
            return Err(AcquisitionError::EmptyChannel(c));
        }
        channels[c] = cut;
    }
    let packet = TrialPacket {
        trial_id: meta.trial_id,
        user_id: meta.user_id,
        mode: meta.mode,
        label: meta.label,
        started_at: meta.started_at,
        nominal_rate: meta.nominal_rate,
        calibration: meta.calibration,
        channels,
    };
    packet.validate()?;
    Ok(packet)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensor::{quantize, DriftModel, StaticLoad};

    fn constant(counts: impl Fn(usize) -> i64, n: usize) -> ChannelStream {
        (0..n).map(|i| RawSample::new(i as u64 * 100, counts(i))).collect()
    }

    fn meta() -> TrialMeta {
        TrialMeta {
            trial_id: Uuid::from_u128(7),
            user_id: "U1".into(),
            mode: Mode::Train,
            label: None,
            started_at: "2024-03-01T10:00:00Z".into(),
            nominal_rate: SampleRate::Hz10,
            calibration: PerChannel([Calibration::default(); 4]),
        }
    }

    fn unloaded(config: &SamplerConfig, duration_s: f64) -> ChairCapture {
        let chair = SimulatedChair::new(
            StaticLoad([0.0; 4]),
            PerChannel([Calibration::default(); 4]),
            DriftModel::none(),
        );
        run_samplers(&chair, config, duration_s, 11)
    }

    #[test]
    fn threaded_samplers_match_sequential() {
        let chair = SimulatedChair::new(
            |t: f64| [10.0 + t, 9.0, 8.0 - t / 10.0, 7.0],
            PerChannel([Calibration::default(); 4]),
            DriftModel::new(20.0, 500.0),
        );
        let config = SamplerConfig::jittered(SampleRate::Hz80, 11);
        assert_eq!(
            run_samplers_threaded(&chair, &config, 3.0, 11),
            run_samplers(&chair, &config, 3.0, 11)
        );
    }

    #[test]
    fn aligned_five_seconds_at_10hz() {
        let cap = unloaded(&SamplerConfig::aligned(SampleRate::Hz10), 5.0);
        for (_, s) in cap.corrected.iter() {
            let ts: Vec<u64> = s.iter().map(|x| x.t_ms).collect();
            assert_eq!(ts, (0..50).map(|i| i * 100).collect::<Vec<_>>());
        }
    }

    #[test]
    fn jittered_counts_follow_the_enumerated_clock() {
        let config = SamplerConfig::jittered(SampleRate::Hz10, 99);
        let cap = unloaded(&config, 30.0);
        let mut lens = Vec::new();
        for (c, s) in cap.corrected.iter() {
            let expected = config.clock(c, 11).ticks(30.0).count();
            assert_eq!(s.len(), expected);
            assert!((294..=306).contains(&s.len()), "{c}: {}", s.len());
            lens.push(s.len());
        }
        lens.dedup();
        assert!(lens.len() > 1, "jittered channels should differ in count");
    }

    #[test]
    fn phase_offset_grids_are_disjoint() {
        let mut phases = PerChannel([0.0; 4]);
        phases[ChannelId::FrontRight] = 50.0;
        let config = SamplerConfig::new(SampleRate::Hz10, 0.0, phases).unwrap();
        let cap = unloaded(&config, 10.0);
        let a: Vec<u64> = cap.corrected[ChannelId::FrontLeft].iter().map(|s| s.t_ms).collect();
        let b: Vec<u64> = cap.corrected[ChannelId::FrontRight].iter().map(|s| s.t_ms).collect();
        assert!(a.iter().all(|t| !b.contains(t)));
    }

    #[test]
    fn jitter_fraction_is_bounded() {
        assert!(SamplerConfig::new(SampleRate::Hz10, 0.05, PerChannel([0.0; 4])).is_err());
        assert!(SamplerConfig::new(SampleRate::Hz10, -0.01, PerChannel([0.0; 4])).is_err());
    }

    #[test]
    fn tare_examples() {
        assert_eq!(tare_channel(&constant(|_| 1234, 20), 10).unwrap(), 1234);
        let alt = constant(|i| if i % 2 == 0 { 999 } else { 1001 }, 10);
        assert_eq!(tare_channel(&alt, 10).unwrap(), 1000);
        assert_eq!(tare_channel(&constant(|i| [-3, -2][i % 2], 10), 10).unwrap(), -3);
        assert_eq!(tare_channel(&constant(|i| [2, 3][i % 2], 10), 10).unwrap(), 3);
    }

    #[test]
    fn tare_errors() {
        assert_eq!(
            tare_channel(&constant(|_| 0, 5), 10),
            Err(AcquisitionError::InsufficientSamples { needed: 10, available: 5 })
        );
        assert_eq!(tare_channel(&constant(|_| 0, 50), 3), Err(AcquisitionError::TooFewRequested(3)));
    }

    #[test]
    fn scale_examples() {
        assert_eq!(calibrate_scale(&constant(|_| 5000, 10), 1000, 10.0, 10).unwrap(), 400.0);
        assert!(matches!(
            calibrate_scale(&constant(|_| 1000, 10), 1000, 10.0, 10),
            Err(AcquisitionError::NonPositiveScale(_))
        ));
        assert!(matches!(
            calibrate_scale(&constant(|_| 900, 10), 1000, 10.0, 10),
            Err(AcquisitionError::NonPositiveScale(_))
        ));
        assert_eq!(
            calibrate_scale(&constant(|_| 5000, 10), 1000, 0.0, 10),
            Err(AcquisitionError::InvalidMass(0.0))
        );
    }

    #[test]
    fn noisy_tare_is_close_over_many_seeds() {
        // sigma = 50 counts, n = 100: standard error 5 counts, so +-15 is 3 SE.
        let true_offset = 4321i64;
        let cal = PerChannel([Calibration::new(true_offset, 400.0).unwrap(); 4]);
        let mut misses = 0;
        for seed in 0..1000u64 {
            let chair = SimulatedChair::new(StaticLoad([0.0; 4]), cal, DriftModel::new(0.0, 50.0));
            let cap = run_samplers(&chair, &SamplerConfig::jittered(SampleRate::Hz80, seed), 1.5, seed);
            let tare = tare_channel(&cap.corrected[ChannelId::RearRight], 100).unwrap();
            if (tare - true_offset).abs() > 15 {
                misses += 1;
            }
        }
        assert!(misses <= 10, "{misses} of 1000 tares missed by more than 15 counts");
    }

    #[test]
    fn scale_round_trip_through_sensor_model() {
        let truth = Calibration::new(-2500, 412.7).unwrap();
        let mass = 10.0;
        let mut load = [0.0; 4];
        load[ChannelId::FrontLeft.index()] = mass;
        let chair = SimulatedChair::new(StaticLoad(load), PerChannel([truth; 4]), DriftModel::new(3.0, 40.0));
        let cap = run_samplers(&chair, &SamplerConfig::jittered(SampleRate::Hz10, 5), 5.0, 5);
        let empty = SimulatedChair::new(StaticLoad([0.0; 4]), PerChannel([truth; 4]), DriftModel::new(3.0, 40.0));
        let cap0 = run_samplers(&empty, &SamplerConfig::jittered(SampleRate::Hz10, 6), 5.0, 6);
        let tare = tare_channel(&cap0.corrected[ChannelId::FrontLeft], 40).unwrap();
        let scale = calibrate_scale(&cap.corrected[ChannelId::FrontLeft], tare, mass, 40).unwrap();
        assert!((scale / truth.scale_counts_per_kg - 1.0).abs() < 0.002, "scale {scale}");
        assert_eq!(quantize(mass, &truth, 24), truth.tare_counts + 4127);
    }

    #[test]
    fn assemble_full_window() {
        let cap = unloaded(&SamplerConfig::aligned(SampleRate::Hz10), 5.0);
        let p = assemble_trial(&cap.corrected, meta(), (0, 5000)).unwrap();
        for (_, s) in p.channels.iter() {
            assert_eq!(s.len(), 50);
            assert_eq!(s[0].t_ms, 0);
            assert_eq!(s[49].t_ms, 4900);
        }
        assert!(p.counts_within_jitter(5.0, 0.0));
    }

    #[test]
    fn assemble_empty_window_fails() {
        let cap = unloaded(&SamplerConfig::aligned(SampleRate::Hz10), 5.0);
        assert!(matches!(
            assemble_trial(&cap.corrected, meta(), (1000, 1000)),
            Err(AcquisitionError::EmptyChannel(_))
        ));
    }

    #[test]
    fn assemble_rebases_sub_window() {
        let cap = unloaded(&SamplerConfig::jittered(SampleRate::Hz10, 4), 5.0);
        let p = assemble_trial(&cap.corrected, meta(), (1000, 4000)).unwrap();
        for (_, s) in p.channels.iter() {
            assert!(s[0].t_ms < 110);
            assert!(s.last().unwrap().t_ms < 3000);
        }
    }

    #[test]
    fn test_mode_rejects_label() {
        let cap = unloaded(&SamplerConfig::aligned(SampleRate::Hz10), 1.0);
        let mut m = meta();
        m.mode = Mode::Test;
        m.label = Some("weak".into());
        assert!(matches!(
            assemble_trial(&cap.corrected, m, (0, 1000)),
            Err(AcquisitionError::InvalidPacket(_))
        ));
    }
}
