//! Seeded synthetic sit-to-stand trials with strength-dependent motion and
//! stable per-user idiosyncrasies.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::acquisition::{assemble_trial, run_samplers, Mode, SamplerConfig, TrialMeta, TrialPacket, DEFAULT_TRIAL_SECONDS};
use crate::pipeline::{ChairGeometry, TransitionKind};
use crate::sensor::{Calibration, DriftModel, LoadSource, PerChannel, SampleRate, SimulatedChair, DEFAULT_SCALE_COUNTS_PER_KG};
use crate::wire::canonical_json;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strength {
    Weak,
    Moderate,
    Strong,
}

impl Strength {
    pub const ALL: [Strength; 3] = [Strength::Weak, Strength::Moderate, Strength::Strong];

    pub fn as_str(self) -> &'static str {
        match self {
            Strength::Weak => "weak",
            Strength::Moderate => "moderate",
            Strength::Strong => "strong",
        }
    }

    /// Sit-to-stand duration range in seconds.
    pub fn rise_time_range(self) -> (f64, f64) {
        match self {
            Strength::Weak => (2.0, 3.5),
            Strength::Moderate => (1.2, 2.0),
            Strength::Strong => (0.6, 1.2),
        }
    }

    fn tremor_amp_range(self) -> (f64, f64) {
        match self {
            Strength::Weak => (1.5, 2.5),
            Strength::Moderate => (0.8, 1.5),
            Strength::Strong => (0.2, 0.8),
        }
    }
}

impl fmt::Display for Strength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strength {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Strength::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| format!("unknown strength class {s:?} (weak, moderate, strong)"))
    }
}

/// Timeline and body parameters of one trial. Starts standing, then
/// `reps` cycles of sit down, sit, rise, stand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionProfile {
    pub body_weight_kg: f64,
    pub strength: Strength,
    pub lead_in_s: f64,
    pub descent_time_s: f64,
    pub sit_time_s: f64,
    pub rise_time_s: f64,
    pub stand_time_s: f64,
    /// Left/right load skew; left share is `(1 + asymmetry) / 2`.
    pub asymmetry: f64,
    /// Forward shift of the center of pressure at the moment load leaves the seat.
    pub forward_lean_m: f64,
    pub tremor_amp_kg: f64,
    pub tremor_hz: f64,
    pub tremor_phase: f64,
    pub reps: usize,
    pub seed: u64,
}

fn smoothstep(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * (3.0 - 2.0 * u)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Standing,
    Descent(f64),
    Seated,
    Rise(f64),
}

impl MotionProfile {
    pub fn cycle_s(&self) -> f64 {
        self.descent_time_s + self.sit_time_s + self.rise_time_s + self.stand_time_s
    }

    /// Programmed transitions as `(kind, start_s, end_s)`.
    pub fn transitions(&self) -> Vec<(TransitionKind, f64, f64)> {
        let mut out = Vec::with_capacity(self.reps * 2);
        let mut t = self.lead_in_s;
        for _ in 0..self.reps {
            out.push((TransitionKind::StandToSit, t, t + self.descent_time_s));
            t += self.descent_time_s + self.sit_time_s;
            out.push((TransitionKind::SitToStand, t, t + self.rise_time_s));
            t += self.rise_time_s + self.stand_time_s;
        }
        out
    }

    fn phase(&self, t_s: f64) -> Phase {
        if self.reps == 0 || t_s < self.lead_in_s {
            return Phase::Standing;
        }
        let cycle = self.cycle_s();
        let k = ((t_s - self.lead_in_s) / cycle).floor();
        if k >= self.reps as f64 {
            return Phase::Standing;
        }
        let mut x = t_s - self.lead_in_s - k * cycle;
        if x < self.descent_time_s {
            return Phase::Descent(x / self.descent_time_s);
        }
        x -= self.descent_time_s;
        if x < self.sit_time_s {
            return Phase::Seated;
        }
        x -= self.sit_time_s;
        if x < self.rise_time_s {
            return Phase::Rise(x / self.rise_time_s);
        }
        Phase::Standing
    }

    fn tremor(&self, t_s: f64, u: f64) -> f64 {
        let window = (std::f64::consts::PI * u).sin().powi(2);
        self.tremor_amp_kg * (std::f64::consts::TAU * self.tremor_hz * t_s + self.tremor_phase).sin() * window
    }

    /// Total chair load and forward share of it (0.5 = balanced) at `t_s`.
    fn total_and_lean(&self, t_s: f64) -> (f64, f64) {
        let w = self.body_weight_kg;
        match self.phase(t_s) {
            Phase::Standing => (0.0, 0.0),
            Phase::Seated => (w, 0.0),
            Phase::Descent(u) => {
                let s = smoothstep(u);
                (w * s + self.tremor(t_s, u), 1.0 - s)
            }
            Phase::Rise(u) => {
                let s = smoothstep(u);
                (w * (1.0 - s) + self.tremor(t_s, u), s)
            }
        }
    }
}

/// Per-corner ideal load curves of a profile on a particular chair.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadCurves {
    pub profile: MotionProfile,
    pub geometry: ChairGeometry,
}

pub fn profile_to_load_curves(profile: MotionProfile, geometry: ChairGeometry) -> LoadCurves {
    LoadCurves { profile, geometry }
}

impl LoadCurves {
    pub fn total_kg_at(&self, t_s: f64) -> f64 {
        self.profile.total_and_lean(t_s).0
    }
}

impl LoadSource for LoadCurves {
    fn corner_loads_kg(&self, t_s: f64) -> [f64; 4] {
        let (total, lean) = self.profile.total_and_lean(t_s);
        let front = 0.5 + lean * self.profile.forward_lean_m / self.geometry.depth_m;
        let left = (1.0 + self.profile.asymmetry) / 2.0;
        let front_total = total * front;
        let rear_total = total - front_total;
        let fl = front_total * left;
        let rl = rear_total * left;
        [fl, front_total - fl, rl, rear_total - rl]
    }

    fn total_kg(&self, t_s: f64) -> f64 {
        self.total_kg_at(t_s)
    }
}

/// Chair-stand window the generator plans repetitions into.
const PLAN_WINDOW_S: f64 = DEFAULT_TRIAL_SECONDS;

/// Draws a profile for a person of the given class and weight. Repetitions
/// are as many cycles as fit in 30 s with a safety margin, so stronger
/// profiles complete more of them.
pub fn generate_profile(strength: Strength, body_weight_kg: f64, seed: u64) -> MotionProfile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (rlo, rhi) = strength.rise_time_range();
    let rise_time_s = rng.random_range(rlo..rhi);
    let descent_time_s = rise_time_s * rng.random_range(1.0..1.3);
    let sit_time_s = rng.random_range(1.5..3.0);
    let stand_time_s = rng.random_range(1.0..2.5);
    let lead_in_s = rng.random_range(0.5..1.5);
    let asymmetry = rng.random_range(-0.12..0.12);
    let forward_lean_m = ChairGeometry::default().depth_m * rng.random_range(0.15..0.25);
    let (alo, ahi) = strength.tremor_amp_range();
    let tremor_amp_kg = rng.random_range(alo..ahi);
    let tremor_hz = rng.random_range(3.0..6.0);
    let tremor_phase = rng.random_range(0.0..std::f64::consts::TAU);
    let cycle = descent_time_s + sit_time_s + rise_time_s + stand_time_s;
    let reps = (((PLAN_WINDOW_S - lead_in_s - 1.0) / (cycle * 1.05)).floor() as usize).max(1);
    MotionProfile {
        body_weight_kg,
        strength,
        lead_in_s,
        descent_time_s,
        sit_time_s,
        rise_time_s,
        stand_time_s,
        asymmetry,
        forward_lean_m,
        tremor_amp_kg,
        tremor_hz,
        tremor_phase,
        reps,
        seed,
    }
}

/// One line of the answer key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub trial_id: Uuid,
    pub user_id: String,
    pub true_label: String,
    pub mode: Mode,
    pub profile: MotionProfile,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CohortManifest {
    pub seed: u64,
    pub entries: Vec<ManifestEntry>,
}

impl CohortManifest {
    pub fn to_canonical_json(&self) -> String {
        canonical_json(&serde_json::to_value(self).expect("manifest serializes"))
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn entry(&self, trial_id: &Uuid) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| &e.trial_id == trial_id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortConfig {
    pub rate: SampleRate,
    pub duration_s: f64,
    pub drift: DriftModel,
    pub geometry: ChairGeometry,
    /// The last this-many trials of each user are emitted in test mode
    /// without a label.
    pub test_trials_per_user: usize,
    pub body_weight_range_kg: (f64, f64),
}

/// 0.05 kg white noise at the default scale.
pub const DEFAULT_NOISE_SIGMA_COUNTS: f64 = 0.05 * DEFAULT_SCALE_COUNTS_PER_KG;
pub const DEFAULT_DRIFT_RATE: f64 = 20.0;

impl Default for CohortConfig {
    fn default() -> Self {
        Self {
            rate: SampleRate::Hz10,
            duration_s: DEFAULT_TRIAL_SECONDS,
            drift: DriftModel::new(DEFAULT_DRIFT_RATE, DEFAULT_NOISE_SIGMA_COUNTS),
            geometry: ChairGeometry::default(),
            test_trials_per_user: 0,
            body_weight_range_kg: (52.0, 82.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub packets: Vec<TrialPacket>,
    pub manifest: CohortManifest,
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Small trial-to-trial variation around a user's base profile.
fn vary(base: &MotionProfile, rng: &mut ChaCha8Rng, seed: u64) -> MotionProfile {
    let mut jitter = |x: f64, f: f64| x * rng.random_range(1.0 - f..1.0 + f);
    let mut p = base.clone();
    p.lead_in_s = jitter(base.lead_in_s, 0.05);
    p.descent_time_s = jitter(base.descent_time_s, 0.03);
    p.sit_time_s = jitter(base.sit_time_s, 0.03);
    p.rise_time_s = jitter(base.rise_time_s, 0.03);
    p.stand_time_s = jitter(base.stand_time_s, 0.03);
    p.forward_lean_m = jitter(base.forward_lean_m, 0.05);
    p.tremor_amp_kg = jitter(base.tremor_amp_kg, 0.1);
    p.tremor_hz = jitter(base.tremor_hz, 0.03);
    p.tremor_phase = rng.random_range(0.0..std::f64::consts::TAU);
    p.asymmetry = (base.asymmetry + rng.random_range(-0.01..0.01)).clamp(-0.3, 0.3);
    p.seed = seed;
    p
}

/// Renders one profile through the simulated chair and samplers.
pub fn record_trial(profile: &MotionProfile, config: &CohortConfig, meta: TrialMeta, seed: u64) -> TrialPacket {
    let chair = SimulatedChair::new(
        profile_to_load_curves(profile.clone(), config.geometry),
        meta.calibration,
        config.drift,
    );
    let capture = run_samplers(&chair, &SamplerConfig::jittered(config.rate, seed), config.duration_s, seed);
    let end_ms = (config.duration_s * 1000.0).ceil() as u64;
    assemble_trial(&capture.corrected, meta, (0, end_ms)).expect("simulated capture fills the window")
}

fn started_at(index: usize) -> String {
    // 2024-06-03T09:00:00Z plus one minute per trial.
    let secs = 1_717_405_200 + 60 * index as i64;
    chrono::DateTime::from_timestamp(secs, 0)
        .expect("in range")
        .to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Users `U1..Un`, each assigned `classes[i % classes.len()]`, each
/// recording `trials_per_user` trials.
pub fn generate_cohort(
    n_users: usize,
    trials_per_user: usize,
    classes: &[Strength],
    seed: u64,
    config: &CohortConfig,
) -> Cohort {
    assert!(n_users >= 1 && trials_per_user >= 1, "cohort needs users and trials");
    assert!(!classes.is_empty(), "class assignment is empty");
    let mut packets = Vec::with_capacity(n_users * trials_per_user);
    let mut entries = Vec::with_capacity(n_users * trials_per_user);
    for u in 0..n_users {
        let strength = classes[u % classes.len()];
        let mut user_rng = ChaCha8Rng::seed_from_u64(mix(seed, u as u64 + 1, 0));
        let (wlo, whi) = config.body_weight_range_kg;
        let weight = user_rng.random_range(wlo..whi);
        let base = generate_profile(strength, weight, mix(seed, u as u64 + 1, 1));
        let user_id = format!("U{}", u + 1);
        for k in 0..trials_per_user {
            let trial_seed = mix(seed, u as u64 + 1, k as u64 + 2);
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
            let profile = vary(&base, &mut rng, trial_seed);
            let trial_id = uuid::Builder::from_random_bytes(rng.random()).into_uuid();
            let mode = if k + config.test_trials_per_user >= trials_per_user {
                Mode::Test
            } else {
                Mode::Train
            };
            let meta = TrialMeta {
                trial_id,
                user_id: user_id.clone(),
                mode,
                label: (mode == Mode::Train).then(|| strength.as_str().to_owned()),
                started_at: started_at(u * trials_per_user + k),
                nominal_rate: config.rate,
                calibration: PerChannel([Calibration::default(); 4]),
            };
            packets.push(record_trial(&profile, config, meta, trial_seed));
            entries.push(ManifestEntry {
                trial_id,
                user_id: user_id.clone(),
                true_label: strength.as_str().to_owned(),
                mode,
                profile,
            });
        }
    }
    Cohort {
        packets,
        manifest: CohortManifest { seed, entries },
    }
}
