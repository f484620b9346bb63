//! Server-hosted simulated chair.
//!
//! The device has a hidden factory calibration (what the gauges actually
//! produce) and a configured calibration (what the operator has told it).
//! Packets carry the configured one, so an uncalibrated device reports
//! slightly wrong loads until tare and scale are run.
//!
//! A session precomputes the capture, then four tasks replay their channel at
//! the channel's own timestamps and publish to the live hub. When the last
//! channel finishes the trial is assembled and submitted to the store. A
//! stopped session submits nothing.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sts_core::acquisition::{assemble_trial, calibrate_scale, run_samplers, tare_channel, AcquisitionError, SamplerConfig};
use sts_core::sensor::{SimulatedChair, StaticLoad};
use sts_core::synth::{generate_profile, profile_to_load_curves, DEFAULT_DRIFT_RATE, DEFAULT_NOISE_SIGMA_COUNTS};
use sts_core::{
    Calibration, ChairGeometry, ChannelId, DriftModel, Mode, PerChannel, SampleRate, Strength, TrialMeta, TrialPacket,
};
use thiserror::Error;
use uuid::Uuid;

use crate::live::{LiveEvent, LiveHub};
use crate::store::{Store, StoreError};

pub const DEFAULT_CALIBRATION_SAMPLES: usize = 50;

#[derive(Debug, Error)]
pub enum DeviceError {
    #[error("a device session is already running")]
    Busy,
    #[error("no device session is running")]
    Idle,
    #[error("invalid session request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Acquisition(#[from] AcquisitionError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionRequest {
    pub user_id: String,
    pub mode: Mode,
    pub label: Option<String>,
    pub strength: Strength,
    pub body_weight_kg: f64,
    pub rate_hz: u32,
    pub duration_s: f64,
    pub seed: u64,
    /// Wall-clock seconds per simulated second. 0 replays as fast as possible.
    pub time_scale: f64,
}

impl Default for SessionRequest {
    fn default() -> Self {
        Self {
            user_id: "U1".into(),
            mode: Mode::Train,
            label: None,
            strength: Strength::Moderate,
            body_weight_kg: 70.0,
            rate_hz: 10,
            duration_s: sts_core::acquisition::DEFAULT_TRIAL_SECONDS,
            seed: 1,
            time_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionInfo {
    pub session_id: u64,
    pub trial_id: Uuid,
    pub user_id: String,
    pub mode: Mode,
    pub rate_hz: u32,
    pub duration_s: f64,
}

/// How a session finished.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionOutcome {
    pub session_id: u64,
    pub trial_id: Option<Uuid>,
    pub reason: String,
}

struct Running {
    info: SessionInfo,
    abort: Vec<tokio::task::AbortHandle>,
}

pub struct Device {
    factory: PerChannel<Calibration>,
    configured: RwLock<PerChannel<Calibration>>,
    drift: DriftModel,
    running: Mutex<Option<Running>>,
    next_session: AtomicU64,
    last_outcome: Mutex<Option<SessionOutcome>>,
}

impl Device {
    /// Factory tare offsets within ±20000 counts and scales within ±3% of
    /// nominal, drawn from `seed`. The configured calibration starts at the
    /// nominal default.
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xD5E1_CE00);
        let factory = PerChannel::from_fn(|_| Calibration {
            tare_counts: rng.random_range(-20_000..=20_000),
            scale_counts_per_kg: Calibration::default().scale_counts_per_kg * rng.random_range(0.97..1.03),
        });
        Self::with_factory(factory, DriftModel::new(DEFAULT_DRIFT_RATE, DEFAULT_NOISE_SIGMA_COUNTS))
    }

    pub fn with_factory(factory: PerChannel<Calibration>, drift: DriftModel) -> Self {
        Self {
            factory,
            configured: RwLock::new(PerChannel([Calibration::default(); 4])),
            drift,
            running: Mutex::new(None),
            next_session: AtomicU64::new(1),
            last_outcome: Mutex::new(None),
        }
    }

    pub fn factory(&self) -> PerChannel<Calibration> {
        self.factory
    }

    pub fn calibration(&self) -> PerChannel<Calibration> {
        *self.configured.read().expect("device calibration poisoned")
    }

    pub fn set_calibration(&self, cal: PerChannel<Calibration>) {
        *self.configured.write().expect("device calibration poisoned") = cal;
    }

    fn capture_static(&self, corners_kg: [f64; 4], samples: usize, seed: u64) -> PerChannel<Vec<sts_core::RawSample>> {
        let chair = SimulatedChair::new(StaticLoad(corners_kg), self.factory, self.drift);
        let rate = SampleRate::Hz10;
        // Enough time for `samples` readings even on the slowest jittered clock.
        let duration_s = samples as f64 / f64::from(rate.hz()) * 1.1 + 1.0;
        run_samplers(&chair, &SamplerConfig::jittered(rate, seed), duration_s, seed).corrected
    }

    /// Tare on an unloaded chair, per channel.
    pub fn measure_tare(&self, samples: usize, seed: u64) -> Result<PerChannel<i64>, AcquisitionError> {
        let capture = self.capture_static([0.0; 4], samples, seed);
        let mut out = PerChannel([0i64; 4]);
        for c in ChannelId::ALL {
            out[c] = tare_channel(&capture[c], samples)?;
        }
        Ok(out)
    }

    /// Scale for one corner with `known_mass_kg` resting on it.
    pub fn measure_scale(
        &self,
        channel: ChannelId,
        tare_counts: i64,
        known_mass_kg: f64,
        samples: usize,
        seed: u64,
    ) -> Result<f64, AcquisitionError> {
        if !(known_mass_kg > 0.0 && known_mass_kg.is_finite()) {
            return Err(AcquisitionError::InvalidMass(known_mass_kg));
        }
        let mut corners = [0.0; 4];
        corners[channel.index()] = known_mass_kg;
        let capture = self.capture_static(corners, samples, seed);
        calibrate_scale(&capture[channel], tare_counts, known_mass_kg, samples)
    }

    pub fn session(&self) -> Option<SessionInfo> {
        self.running.lock().expect("device session poisoned").as_ref().map(|r| r.info.clone())
    }

    pub fn last_outcome(&self) -> Option<SessionOutcome> {
        self.last_outcome.lock().expect("device outcome poisoned").clone()
    }

    /// Starts a session. Must be called inside a tokio runtime.
    pub fn start(
        self: &Arc<Self>,
        req: SessionRequest,
        hub: Arc<LiveHub>,
        store: Arc<Store>,
    ) -> Result<SessionInfo, DeviceError> {
        let rate = SampleRate::try_from(req.rate_hz).map_err(|e| DeviceError::InvalidRequest(e.to_string()))?;
        if !(req.duration_s > 0.0 && req.duration_s <= 600.0) {
            return Err(DeviceError::InvalidRequest("duration_s must be in (0, 600]".into()));
        }
        if !(req.time_scale >= 0.0 && req.time_scale.is_finite()) {
            return Err(DeviceError::InvalidRequest("time_scale must be >= 0".into()));
        }
        if !(req.body_weight_kg > 0.0 && req.body_weight_kg <= 100.0) {
            return Err(DeviceError::InvalidRequest("body_weight_kg must be in (0, 100]".into()));
        }
        if req.user_id.is_empty() {
            return Err(DeviceError::InvalidRequest("user_id must be non-empty".into()));
        }
        if req.mode == Mode::Test && req.label.is_some() {
            return Err(DeviceError::InvalidRequest("test sessions cannot carry a label".into()));
        }
        let mut running = self.running.lock().expect("device session poisoned");
        if running.is_some() {
            return Err(DeviceError::Busy);
        }
        let session_id = self.next_session.fetch_add(1, Ordering::Relaxed);
        let trial_id = uuid::Builder::from_random_bytes(ChaCha8Rng::seed_from_u64(req.seed ^ session_id).random())
            .into_uuid();
        let calibration = self.calibration();
        let profile = generate_profile(req.strength, req.body_weight_kg, req.seed);
        let chair = SimulatedChair::new(profile_to_load_curves(profile, ChairGeometry::default()), self.factory, self.drift);
        let capture = run_samplers(&chair, &SamplerConfig::jittered(rate, req.seed), req.duration_s, req.seed);
        let meta = TrialMeta {
            trial_id,
            user_id: req.user_id.clone(),
            mode: req.mode,
            label: req.label.clone(),
            started_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            nominal_rate: rate,
            calibration,
        };
        let info = SessionInfo {
            session_id,
            trial_id,
            user_id: req.user_id,
            mode: req.mode,
            rate_hz: req.rate_hz,
            duration_s: req.duration_s,
        };
        hub.begin(session_id);
        let started = tokio::time::Instant::now();
        let remaining = Arc::new(AtomicU64::new(4));
        let streams = Arc::new(capture.corrected);
        let end_ms = (req.duration_s * 1000.0).ceil() as u64;
        let mut abort = Vec::with_capacity(4);
        for channel in ChannelId::ALL {
            let hub = hub.clone();
            let store = store.clone();
            let device = self.clone();
            let streams = streams.clone();
            let remaining = remaining.clone();
            let meta = meta.clone();
            let time_scale = req.time_scale;
            let handle = tokio::spawn(async move {
                let cal = meta.calibration[channel];
                for s in &streams[channel] {
                    if time_scale > 0.0 {
                        let at = started + Duration::from_secs_f64(s.t_ms as f64 / 1000.0 * time_scale);
                        tokio::time::sleep_until(at).await;
                    } else {
                        tokio::task::yield_now().await;
                    }
                    hub.publish(
                        session_id,
                        LiveEvent {
                            t_ms: s.t_ms,
                            channel,
                            kg: cal.to_kg(s.counts),
                        },
                    );
                }
                if remaining.fetch_sub(1, Ordering::AcqRel) == 1 {
                    let packet = assemble_trial(&streams, meta, (0, end_ms));
                    device.finish(session_id, packet.map_err(DeviceError::from), &hub, &store);
                }
            });
            abort.push(handle.abort_handle());
        }
        *running = Some(Running {
            info: info.clone(),
            abort,
        });
        Ok(info)
    }

    fn finish(&self, session_id: u64, packet: Result<TrialPacket, DeviceError>, hub: &LiveHub, store: &Store) {
        let mut running = self.running.lock().expect("device session poisoned");
        if running.as_ref().map(|r| r.info.session_id) != Some(session_id) {
            return;
        }
        *running = None;
        let outcome = match packet.and_then(|p| {
            let id = p.trial_id;
            store.submit(p.mode, p).map(|_| id).map_err(DeviceError::from)
        }) {
            Ok(id) => SessionOutcome {
                session_id,
                trial_id: Some(id),
                reason: "session-ended".into(),
            },
            Err(e) => {
                tracing::warn!(session_id, error = %e, "session produced no trial");
                SessionOutcome {
                    session_id,
                    trial_id: None,
                    reason: format!("failed: {e}"),
                }
            }
        };
        hub.end(session_id, &outcome.reason);
        *self.last_outcome.lock().expect("device outcome poisoned") = Some(outcome);
    }

    /// Stops the running session early. The partial capture is discarded;
    /// only sessions that run to completion produce a trial.
    pub fn stop(&self, hub: &LiveHub) -> Result<SessionOutcome, DeviceError> {
        let run = self.running.lock().expect("device session poisoned").take().ok_or(DeviceError::Idle)?;
        for a in &run.abort {
            a.abort();
        }
        let outcome = SessionOutcome {
            session_id: run.info.session_id,
            trial_id: None,
            reason: "stopped".into(),
        };
        hub.end(run.info.session_id, &outcome.reason);
        *self.last_outcome.lock().expect("device outcome poisoned") = Some(outcome.clone());
        Ok(outcome)
    }
}
