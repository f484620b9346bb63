//! WebAssembly entry points for the browser demo.
//!
//! Each export takes plain numbers and strings and returns a JSON document.
//! The `*_json` functions hold the logic so native tests can call them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use sts_core::acquisition::{calibrate_scale, run_samplers, tare_channel, SamplerConfig};
use sts_core::classifier::{leave_one_out, FeatureConfig, KnnConfig, LabeledSeries};
use sts_core::pipeline::{analyze_packet, total_load};
use sts_core::plot::render_svg;
use sts_core::sensor::{SimulatedChair, StaticLoad};
use sts_core::synth::{generate_cohort, generate_profile, record_trial, CohortConfig, DEFAULT_NOISE_SIGMA_COUNTS};
use sts_core::{Calibration, ChannelId, DetectorConfig, DriftModel, Mode, PerChannel, SampleRate, Strength, TrialMeta};
use uuid::Uuid;
use wasm_bindgen::prelude::*;

/// Largest cohort the page will compute a full distance matrix for.
pub const MAX_DEMO_TRIALS: usize = 60;

fn rate(rate_hz: u32) -> Result<SampleRate, String> {
    SampleRate::try_from(rate_hz).map_err(|_| format!("rate {rate_hz} Hz is not 10 or 80"))
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// One simulated 30 s trial: grid loads, detected transitions, score, and an SVG plot.
pub fn simulate_trial_json(strength: &str, body_weight_kg: f64, rate_hz: u32, seed: u32) -> Result<String, String> {
    let strength: Strength = strength.parse()?;
    if !(20.0..=150.0).contains(&body_weight_kg) {
        return Err(format!("body weight {body_weight_kg} kg outside 20..150"));
    }
    let rate = rate(rate_hz)?;
    let seed = u64::from(seed);
    let profile = generate_profile(strength, body_weight_kg, seed);
    let config = CohortConfig {
        rate,
        ..CohortConfig::default()
    };
    let meta = TrialMeta {
        trial_id: Uuid::from_u64_pair(0x5745_4200, seed),
        user_id: "demo".into(),
        mode: Mode::Test,
        label: None,
        started_at: "2024-06-03T09:00:00Z".into(),
        nominal_rate: rate,
        calibration: PerChannel([Calibration::default(); 4]),
    };
    let packet = record_trial(&profile, &config, meta, seed);
    let (at, events, score) =
        analyze_packet(&packet, f64::from(rate.hz()), None, &DetectorConfig::default()).map_err(|e| e.to_string())?;
    let channels: serde_json::Map<String, Value> = ChannelId::ALL
        .iter()
        .map(|&c| (c.key().to_owned(), at.channel(c).map(round3).collect::<Vec<_>>().into()))
        .collect();
    Ok(json!({
        "strength": strength.as_str(),
        "rate_hz": rate.hz(),
        "samples": packet.sample_count(),
        "programmed_reps": profile.reps,
        "rise_time_s": profile.rise_time_s,
        "t_ms": at.t_ms,
        "loads_kg": channels,
        "total_kg": total_load(&at).into_iter().map(round3).collect::<Vec<_>>(),
        "events": events,
        "score": score,
        "svg": render_svg(&at),
    })
    .to_string())
}

/// Leave-one-out user identification over a small synthetic cohort, with
/// the full distance matrix for display.
pub fn cohort_distances_json(users: u32, trials: u32, rate_hz: u32, seed: u32) -> Result<String, String> {
    let (users, trials) = (users as usize, trials as usize);
    if users < 2 || trials < 2 {
        return Err("need at least 2 users with 2 trials each".into());
    }
    if users * trials > MAX_DEMO_TRIALS {
        return Err(format!("{} trials exceeds the demo limit of {MAX_DEMO_TRIALS}", users * trials));
    }
    let config = CohortConfig {
        rate: rate(rate_hz)?,
        ..CohortConfig::default()
    };
    let cohort = generate_cohort(users, trials, &Strength::ALL, u64::from(seed), &config);
    let features = FeatureConfig::default();
    let items = cohort
        .packets
        .iter()
        .map(|p| {
            Ok(LabeledSeries {
                id: p.trial_id.to_string(),
                label: p.user_id.clone(),
                series: features.extract(p).map_err(|e| e.to_string())?,
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    let (report, dm) = leave_one_out(&items, &KnnConfig::default()).map_err(|e| e.to_string())?;
    let users_of: Vec<String> = items.iter().map(|i| i.label.clone()).collect();
    let (within, between) = dm.within_between_means(&users_of);
    let n = dm.len();
    let matrix: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| round3(dm.get(i, j))).collect()).collect();
    Ok(json!({
        "users": users_of,
        "strengths": cohort.manifest.entries.iter().map(|e| e.true_label.clone()).collect::<Vec<_>>(),
        "matrix": matrix,
        "predicted": report.trials.iter().map(|t| t.predicted_label.clone()).collect::<Vec<_>>(),
        "correct": report.correct,
        "total": report.total,
        "within_mean": within,
        "between_mean": between,
    })
    .to_string())
}

/// Tare and scale one corner of a chair whose factory constants are drawn
/// from `seed`, then compare the measurement with the hidden truth.
pub fn calibrate_corner_json(channel: &str, known_mass_kg: f64, samples: u32, seed: u32) -> Result<String, String> {
    let channel = ChannelId::from_key(channel).ok_or_else(|| format!("unknown channel {channel:?}"))?;
    let samples = samples as usize;
    let seed = u64::from(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nominal = Calibration::default().scale_counts_per_kg;
    let factory = PerChannel::from_fn(|_| Calibration {
        tare_counts: rng.random_range(-20_000..=20_000),
        scale_counts_per_kg: nominal * rng.random_range(0.97..1.03),
    });
    let drift = DriftModel::new(20.0, DEFAULT_NOISE_SIGMA_COUNTS);
    let rate = SampleRate::Hz10;
    let duration_s = samples as f64 / f64::from(rate.hz()) * 1.1 + 1.0;
    let capture = |corners: [f64; 4], seed: u64| {
        let chair = SimulatedChair::new(StaticLoad(corners), factory, drift);
        run_samplers(&chair, &SamplerConfig::jittered(rate, seed), duration_s, seed).corrected
    };
    let empty = capture([0.0; 4], seed);
    let tare = tare_channel(&empty[channel], samples).map_err(|e| e.to_string())?;
    let mut corners = [0.0; 4];
    corners[channel.index()] = known_mass_kg;
    let loaded = capture(corners, seed.wrapping_add(1));
    let scale = calibrate_scale(&loaded[channel], tare, known_mass_kg, samples).map_err(|e| e.to_string())?;
    let truth = factory[channel];
    Ok(json!({
        "channel": channel.key(),
        "known_mass_kg": known_mass_kg,
        "samples": samples,
        "factory": { "tare_counts": truth.tare_counts, "scale_counts_per_kg": truth.scale_counts_per_kg },
        "measured": { "tare_counts": tare, "scale_counts_per_kg": scale },
        "tare_error_counts": tare - truth.tare_counts,
        "scale_error_pct": 100.0 * (scale - truth.scale_counts_per_kg) / truth.scale_counts_per_kg,
        "uncalibrated_reading_kg": Calibration::default().to_kg(loaded[channel][0].counts),
    })
    .to_string())
}

#[wasm_bindgen]
pub fn simulate_trial(strength: &str, body_weight_kg: f64, rate_hz: u32, seed: u32) -> Result<String, JsValue> {
    simulate_trial_json(strength, body_weight_kg, rate_hz, seed).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn cohort_distances(users: u32, trials: u32, rate_hz: u32, seed: u32) -> Result<String, JsValue> {
    cohort_distances_json(users, trials, rate_hz, seed).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn calibrate_corner(channel: &str, known_mass_kg: f64, samples: u32, seed: u32) -> Result<String, JsValue> {
    calibrate_corner_json(channel, known_mass_kg, samples, seed).map_err(|e| JsValue::from_str(&e))
}
