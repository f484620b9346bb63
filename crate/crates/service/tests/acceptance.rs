//! Acceptance suite. Every criterion runs at both device rates and prints one
//! PASS/FAIL line; the process exits non-zero if any line failed.

mod common;

use std::collections::{BTreeMap, HashMap};
use std::process::ExitCode;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use common::{InProcess, ServeProcess};
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestCaseError, TestRunner};
use sts_core::acquisition::{assemble_trial, SamplerConfig};
use sts_core::classifier::{
    distance_matrix, dtw_distance, evaluate, leave_one_out, DtwMode, FeatureConfig, FeatureSeries, KnnConfig,
    LabeledSeries,
};
use sts_core::pipeline::{analyze_packet, resample_uniform};
use sts_core::sensor::{simulate_chair, DEFAULT_SCALE_COUNTS_PER_KG};
use sts_core::synth::{generate_cohort, profile_to_load_curves, CohortConfig};
use sts_core::{
    wire, Calibration, ChairGeometry, ChannelId, DetectorConfig, DriftModel, Mode, MotionProfile, PerChannel,
    RawSample, SampleRate, Strength, TrialMeta, TrialPacket,
};
use sts_service::config::DEFAULT_SEED;
use sts_service::Client;
use uuid::Uuid;

type Outcome = Result<String, String>;
type Criterion = fn(SampleRate) -> Outcome;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn cal() -> PerChannel<Calibration> {
    PerChannel([Calibration::default(); 4])
}

fn post_all(client: &Client, packets: &[TrialPacket]) -> Result<(), String> {
    for p in packets {
        match client.submit(p) {
            Ok((201, _)) => {}
            Ok((s, _)) => return Err(format!("{} answered {s}", p.trial_id)),
            Err(e) => return Err(e.to_string()),
        }
    }
    Ok(())
}

fn features(p: &TrialPacket) -> Result<FeatureSeries, String> {
    FeatureConfig::default().extract(p).map_err(|e| e.to_string())
}

/// Mean of the upper triangle split by whether the two rows share a group.
fn group_means(n: usize, d: impl Fn(usize, usize) -> f64, groups: &[String]) -> (f64, f64) {
    let mut within = Vec::new();
    let mut between = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if groups[i] == groups[j] {
                within.push(d(i, j));
            } else {
                between.push(d(i, j));
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    (mean(&within), mean(&between))
}

fn separability(rate: SampleRate) -> Outcome {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let srv = InProcess::start(dir.path());
    let client = srv.client();
    let cfg = CohortConfig {
        rate,
        ..CohortConfig::default()
    };
    let cohort = generate_cohort(4, 3, &Strength::ALL, DEFAULT_SEED, &cfg);
    post_all(&client, &cohort.packets)?;

    let stored = client.pull_all(Mode::Train).map_err(|e| e.to_string())?;
    let items = stored
        .iter()
        .map(|t| {
            Ok(LabeledSeries {
                id: t.packet.trial_id.to_string(),
                label: t.packet.user_id.clone(),
                series: features(&t.packet)?,
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    let (report, dm) = leave_one_out(&items, &KnnConfig::default()).map_err(|e| e.to_string())?;
    let elapsed = t0.elapsed();

    let n = dm.len();
    let symmetric = (0..n).all(|i| dm.get(i, i) == 0.0 && (0..n).all(|j| dm.get(i, j) == dm.get(j, i)));
    // Recount from the matrix: the nearest other trial decides.
    let recount = (0..n)
        .filter(|&i| {
            let j = (0..n)
                .filter(|&j| j != i)
                .min_by(|&a, &b| dm.get(i, a).total_cmp(&dm.get(i, b)))
                .unwrap();
            items[i].label == items[j].label
        })
        .count();
    check(
        stored.len() == 12
            && report.total == 12
            && report.correct >= 10
            && recount == report.correct
            && symmetric
            && elapsed < Duration::from_secs(30),
        format!(
            "LOO 1-NN user identification {}/{} (need >= 10), symmetric zero-diagonal {symmetric}, {:.1} s (< 30 s)",
            report.correct,
            report.total,
            elapsed.as_secs_f64()
        ),
    )
}

fn strength_classes(rate: SampleRate) -> Outcome {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let srv = InProcess::start(dir.path());
    let client = srv.client();
    let cfg = CohortConfig {
        rate,
        test_trials_per_user: 1,
        ..CohortConfig::default()
    };
    let cohort = generate_cohort(30, 3, &Strength::ALL, DEFAULT_SEED, &cfg);
    post_all(&client, &cohort.packets)?;

    let train = client.pull_all(Mode::Train).map_err(|e| e.to_string())?;
    let test = client.pull_all(Mode::Test).map_err(|e| e.to_string())?;
    if test.iter().any(|t| t.packet.label.is_some()) {
        return Err("a test trial carries a label".into());
    }
    let train_items = train
        .iter()
        .map(|t| {
            Ok(LabeledSeries {
                id: t.packet.trial_id.to_string(),
                label: t.packet.label.clone().ok_or("unlabeled training trial")?,
                series: features(&t.packet)?,
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    let test_items = test
        .iter()
        .map(|t| Ok((t.packet.trial_id.to_string(), features(&t.packet)?)))
        .collect::<Result<Vec<_>, String>>()?;
    let truth: BTreeMap<String, String> = cohort
        .manifest
        .entries
        .iter()
        .filter(|e| e.mode == Mode::Test)
        .map(|e| (e.trial_id.to_string(), e.true_label.clone()))
        .collect();
    let report = evaluate(&train_items, &test_items, &truth, &KnnConfig::default()).map_err(|e| e.to_string())?;

    let all: Vec<(String, FeatureSeries)> = train_items
        .iter()
        .map(|t| (t.id.clone(), t.series.clone()))
        .chain(test_items.iter().cloned())
        .collect();
    let by_id: HashMap<String, String> = cohort
        .manifest
        .entries
        .iter()
        .map(|e| (e.trial_id.to_string(), e.true_label.clone()))
        .collect();
    let groups: Vec<String> = all.iter().map(|(id, _)| by_id[id].clone()).collect();
    let dm = distance_matrix(&all, KnnConfig::default().band_fraction, DtwMode::Dependent).map_err(|e| e.to_string())?;
    let (within, between) = group_means(dm.len(), |i, j| dm.get(i, j), &groups);
    let elapsed = t0.elapsed();
    check(
        train.len() == 60
            && test.len() == 30
            && report.accuracy >= 0.85
            && within < between
            && elapsed < Duration::from_secs(300),
        format!(
            "strength accuracy {:.3} ({}/{}, need >= 0.85), class DTW within {within:.1} < between {between:.1}, {:.1} s (< 300 s)",
            report.accuracy,
            report.correct,
            report.total,
            elapsed.as_secs_f64()
        ),
    )
}

/// Inverse of the smoothstep easing by bisection.
fn inverse_smoothstep(y: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid * mid * (3.0 - 2.0 * mid) < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `reps` evenly spaced cycles filling the first 28.5 s.
fn programmed(reps: usize) -> MotionProfile {
    let cycle = if reps == 0 { 4.0 } else { 28.0 / reps as f64 };
    let dwell = (cycle - 1.0) / 2.0;
    MotionProfile {
        body_weight_kg: 75.0,
        strength: Strength::Moderate,
        lead_in_s: 0.5,
        descent_time_s: 0.5,
        sit_time_s: dwell,
        rise_time_s: 0.5,
        stand_time_s: dwell,
        asymmetry: 0.05,
        forward_lean_m: 0.08,
        tremor_amp_kg: 0.0,
        tremor_hz: 5.0,
        tremor_phase: 0.0,
        reps,
        seed: reps as u64,
    }
}

fn scoring_oracle(rate: SampleRate) -> Outcome {
    let grid = f64::from(rate.hz());
    let step_s = 1.0 / grid;
    let det = DetectorConfig::default();
    let mut worst_5x: f64 = 0.0;
    for reps in 0..=15usize {
        let p = programmed(reps);
        let cap = simulate_chair(
            profile_to_load_curves(p.clone(), ChairGeometry::default()),
            cal(),
            DriftModel::none(),
            30.0,
            rate,
            DEFAULT_SEED + reps as u64,
        );
        let meta = TrialMeta {
            trial_id: Uuid::from_u128(reps as u128 + 1),
            user_id: "oracle".into(),
            mode: Mode::Test,
            label: None,
            started_at: "2024-06-03T09:00:00Z".into(),
            nominal_rate: rate,
            calibration: cal(),
        };
        let packet = assemble_trial(&cap.corrected, meta, (0, 30_000)).map_err(|e| e.to_string())?;
        let (_, _, score) = analyze_packet(&packet, grid, None, &det).map_err(|e| e.to_string())?;
        if score.reps_30s != reps {
            return Err(format!("programmed {reps} reps, scored {}", score.reps_30s));
        }
        if reps >= 5 {
            // A rise leaves the seat at 1 - s(u) = seated_fraction and is
            // complete at 1 - s(u) = standing_fraction.
            let u_exit = inverse_smoothstep(1.0 - det.seated_fraction);
            let u_enter = inverse_smoothstep(1.0 - det.standing_fraction);
            let analytic = 4.0 * p.cycle_s() + p.rise_time_s * (u_enter - u_exit);
            let got = score.five_reps_time_s.ok_or("no 5xSTS time")?;
            let err = (got - analytic).abs();
            worst_5x = worst_5x.max(err);
            if err > step_s {
                return Err(format!(
                    "{reps} reps: 5xSTS {got:.4} s vs analytic {analytic:.4} s, off by more than one {step_s} s step"
                ));
            }
        } else if score.five_reps_time_s.is_some() {
            return Err(format!("{reps} reps reported a 5xSTS time"));
        }
    }
    Ok(format!(
        "reps 0..=15 scored exactly; worst 5xSTS error {:.1} ms (step {:.1} ms)",
        worst_5x * 1000.0,
        step_s * 1000.0
    ))
}

fn drift_cancellation(rate: SampleRate) -> Outcome {
    let sigma = 10.0;
    let scale = DEFAULT_SCALE_COUNTS_PER_KG;
    let loads = [12.0, 9.0, 11.0, 8.0];
    let calib = cal();
    let cap = simulate_chair(
        sts_core::sensor::StaticLoad(loads),
        calib,
        DriftModel::new(50.0, sigma),
        30.0,
        rate,
        DEFAULT_SEED,
    );
    let (mut diff_err, mut raw_err) = (0f64, 0f64);
    for c in ChannelId::ALL {
        let truth = loads[c.index()];
        for s in &cap.corrected[c] {
            diff_err = diff_err.max((calib[c].to_kg(s.counts) - truth).abs());
        }
        for s in &cap.active[c] {
            raw_err = raw_err.max((calib[c].to_kg(s.counts) - truth).abs());
        }
    }
    let bound = 4.0 * sigma / scale;
    check(
        diff_err <= bound && raw_err > 10.0 * bound,
        format!(
            "drift 50 counts/s, sigma {sigma} counts: differential max error {diff_err:.3e} kg (<= {bound:.3e}), single-gauge {raw_err:.3e} kg (> {:.3e})",
            10.0 * bound
        ),
    )
}

#[derive(Debug, Clone)]
struct RampCase {
    seed: u64,
    duration_s: f64,
    grid_hz: f64,
    tare: i64,
    scale: f64,
    lines: [(i64, i64); 4],
}

fn resampling(rate: SampleRate) -> Outcome {
    let grids = [f64::from(rate.hz()), FeatureConfig::default().grid_rate_hz];
    // Constant when the slope is zero.
    let line = prop_oneof![
        (-3_000_000i64..3_000_000).prop_map(|c| (c, 0)),
        (-3_000_000i64..3_000_000, -80i64..=80).prop_map(|(c, b)| (c, b)),
    ];
    let strategy = (
        any::<u64>(),
        1.0f64..30.0,
        prop::sample::select(grids.to_vec()),
        -100_000i64..100_000,
        300_000.0f64..370_000.0,
        [line.clone(), line.clone(), line.clone(), line],
    )
        .prop_map(|(seed, duration_s, grid_hz, tare, scale, lines)| RampCase {
            seed,
            duration_s,
            grid_hz,
            tare,
            scale,
            lines,
        });
    let mut runner = TestRunner::new(PropConfig {
        cases: 1000,
        failure_persistence: None,
        ..PropConfig::default()
    });
    let result = runner.run(&strategy, |case| {
        let sampler = SamplerConfig::jittered(rate, case.seed);
        let calib = Calibration::new(case.tare, case.scale).unwrap();
        let channels = PerChannel::from_fn(|c| {
            let (c0, b) = case.lines[c.index()];
            sampler
                .clock(c, case.seed)
                .ticks(case.duration_s)
                .map(|t| {
                    let t = t.floor() as u64;
                    RawSample::new(t, c0 + b * t as i64)
                })
                .collect()
        });
        let packet = TrialPacket {
            trial_id: Uuid::from_u128(7),
            user_id: "ramp".into(),
            mode: Mode::Test,
            label: None,
            started_at: "2024-06-03T09:00:00Z".into(),
            nominal_rate: rate,
            calibration: PerChannel([calib; 4]),
            channels,
        };
        let at = resample_uniform(&packet, case.grid_hz).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert!(at.frames() >= 2);
        for (t, row) in at.t_ms.iter().zip(&at.loads) {
            for c in ChannelId::ALL {
                let (c0, b) = case.lines[c.index()];
                let expected = (c0 as f64 + b as f64 * t - case.tare as f64) / case.scale;
                let got = row[c.index()];
                prop_assert!(
                    (got - expected).abs() <= 1e-9 * expected.abs().max(1.0),
                    "{c} at {t} ms: {got} vs {expected}"
                );
            }
        }
        Ok(())
    });
    match result {
        Ok(()) => Ok("1000 jittered constant/ramp cases reproduced within 1e-9 relative".into()),
        Err(e) => Err(format!("resampling property failed: {e}")),
    }
}

fn arb_packet(rate: SampleRate) -> impl Strategy<Value = TrialPacket> {
    let stream = prop::collection::vec((1u64..200, -8_000_000i64..8_000_000), 1..40).prop_map(|steps| {
        let mut t = 0u64;
        steps
            .into_iter()
            .map(|(gap, counts)| {
                t += gap;
                RawSample::new(t, counts)
            })
            .collect::<Vec<_>>()
    });
    let calibration = (-1_000_000i64..1_000_000, 1.0f64..1e7).prop_map(|(t, s)| Calibration::new(t, s).unwrap());
    (
        any::<u128>(),
        "\\PC{1,16}",
        any::<bool>(),
        prop::option::of("[a-z]{1,10}"),
        0i64..4_000_000_000,
        [calibration.clone(), calibration.clone(), calibration.clone(), calibration],
        [stream.clone(), stream.clone(), stream.clone(), stream],
    )
        .prop_map(move |(id, user_id, train, label, secs, cals, streams)| TrialPacket {
            trial_id: Uuid::from_u128(id),
            user_id,
            mode: if train { Mode::Train } else { Mode::Test },
            label: if train { label } else { None },
            started_at: chrono::DateTime::from_timestamp(secs, 0)
                .unwrap()
                .to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            nominal_rate: rate,
            calibration: PerChannel(cals),
            channels: PerChannel(streams),
        })
}

fn wire_round_trip(rate: SampleRate) -> Result<(), String> {
    let mut runner = TestRunner::new(PropConfig {
        cases: 1000,
        failure_persistence: None,
        ..PropConfig::default()
    });
    runner
        .run(&arb_packet(rate), |p| {
            let bytes = wire::serialize(&p);
            let back = wire::parse(&bytes).map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assert_eq!(&back, &p);
            prop_assert_eq!(wire::serialize(&back), bytes);
            Ok(())
        })
        .map_err(|e| format!("parse/serialize identity failed: {e}"))
}

/// A short but realistic packet for the storage checks.
fn stub_packet(n: u128, mode: Mode, rate: SampleRate) -> TrialPacket {
    let period = rate.period_ms() as u64;
    TrialPacket {
        trial_id: Uuid::from_u128(0xacce_0000 + n),
        user_id: format!("U{}", n % 5),
        mode,
        label: (mode == Mode::Train).then(|| "moderate".to_owned()),
        started_at: "2024-06-03T09:00:00Z".into(),
        nominal_rate: rate,
        calibration: cal(),
        channels: PerChannel::from_fn(|c| {
            (0..50u64)
                .map(|i| RawSample::new(i * period + c.index() as u64, (n as i64) * 100 + i as i64))
                .collect()
        }),
    }
}

fn durability(rate: SampleRate) -> Result<usize, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = dir.path().join("store");
    let srv = ServeProcess::start(&store);
    let acked: Arc<Mutex<Vec<TrialPacket>>> = Arc::default();
    let writer = {
        let acked = Arc::clone(&acked);
        let client = srv.client();
        std::thread::spawn(move || {
            for n in 0..10_000u128 {
                let mode = if n % 3 == 0 { Mode::Test } else { Mode::Train };
                let p = stub_packet(n, mode, rate);
                match client.submit(&p) {
                    Ok((201, _)) => acked.lock().unwrap().push(p),
                    _ => return,
                }
            }
        })
    };
    let deadline = Instant::now() + Duration::from_secs(30);
    while acked.lock().unwrap().len() < 60 && Instant::now() < deadline {
        std::thread::sleep(Duration::from_millis(5));
    }
    srv.kill();
    writer.join().map_err(|_| "writer thread panicked")?;
    let acked = acked.lock().unwrap().clone();
    if acked.len() < 60 {
        return Err(format!("only {} submissions acknowledged before the kill", acked.len()));
    }

    let srv = ServeProcess::start(&store);
    let client = srv.client();
    for p in &acked {
        let got = client.get(p.mode, p.trial_id).map_err(|e| format!("{} lost: {e}", p.trial_id))?;
        if &got.packet != p {
            return Err(format!("{} changed across the restart", p.trial_id));
        }
    }
    Ok(acked.len())
}

fn protocol(rate: SampleRate) -> Outcome {
    wire_round_trip(rate)?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let srv = InProcess::start(dir.path());
    let client = srv.client();
    let packets: Vec<TrialPacket> = (0..12)
        .map(|n| stub_packet(n, if n % 2 == 0 { Mode::Train } else { Mode::Test }, rate))
        .collect();
    post_all(&client, &packets)?;
    let count = |c: &Client| -> Result<usize, String> {
        Ok(c.pull_all(Mode::Train).map_err(|e| e.to_string())?.len()
            + c.pull_all(Mode::Test).map_err(|e| e.to_string())?.len())
    };
    let before = count(&client)?;
    for p in &packets {
        match client.submit(p) {
            Ok((200, _)) => {}
            other => return Err(format!("resubmitting {} gave {other:?}", p.trial_id)),
        }
    }
    let after = count(&client)?;
    if before != 12 || after != before {
        return Err(format!("double POST changed the count from {before} to {after}"));
    }

    // Isolation: listings never cross modes, and neither does lookup or submission.
    for mode in [Mode::Train, Mode::Test] {
        let other = if mode == Mode::Train { Mode::Test } else { Mode::Train };
        for query in ["", "limit=1000", "status=unlabeled", "status=labeled", "user_id=U1"] {
            let rows = client.list(mode, query).map_err(|e| e.to_string())?;
            if let Some(r) = rows.iter().find(|r| r.packet.mode != mode) {
                return Err(format!("{mode} listing ?{query} returned {other} trial {}", r.packet.trial_id));
            }
        }
        for p in packets.iter().filter(|p| p.mode == other) {
            if client.get(mode, p.trial_id).map_err(|e| e.status()) != Err(Some(404)) {
                return Err(format!("{other} trial {} visible through {mode}", p.trial_id));
            }
        }
    }
    let stray = stub_packet(99, Mode::Test, rate);
    if client.submit_to(Mode::Train, &stray).is_ok() {
        return Err("train service accepted a test-mode trial".into());
    }
    if count(&client)? != 12 {
        return Err("rejected cross-mode submission changed the store".into());
    }

    let survived = durability(rate)?;
    Ok(format!(
        "1000 round-trips identical; double POST kept 12 trials; 0 cross-mode rows; {survived}/{survived} acknowledged trials survived kill -9"
    ))
}

/// Textbook full-matrix recurrence, memoized, no band and no sentinel row.
fn reference_dtw(a: &[f64], b: &[f64]) -> f64 {
    fn go(a: &[f64], b: &[f64], i: usize, j: usize, memo: &mut [Option<f64>], m: usize) -> f64 {
        if let Some(v) = memo[i * m + j] {
            return v;
        }
        let cost = (a[i] - b[j]).powi(2);
        let v = match (i, j) {
            (0, 0) => cost,
            (0, _) => cost + go(a, b, 0, j - 1, memo, m),
            (_, 0) => cost + go(a, b, i - 1, 0, memo, m),
            _ => {
                cost + go(a, b, i - 1, j - 1, memo, m)
                    .min(go(a, b, i - 1, j, memo, m))
                    .min(go(a, b, i, j - 1, memo, m))
            }
        };
        memo[i * m + j] = Some(v);
        v
    }
    let mut memo = vec![None; a.len() * b.len()];
    go(a, b, a.len() - 1, b.len() - 1, &mut memo, b.len())
}

/// Minimum over every monotone warping path, enumerated one by one.
fn enumerated_dtw(a: &[f64], b: &[f64]) -> f64 {
    fn walk(a: &[f64], b: &[f64], i: usize, j: usize, acc: f64, best: &mut f64) {
        let acc = acc + (a[i] - b[j]).powi(2);
        if i + 1 == a.len() && j + 1 == b.len() {
            *best = best.min(acc);
            return;
        }
        if i + 1 < a.len() {
            walk(a, b, i + 1, j, acc, best);
        }
        if j + 1 < b.len() {
            walk(a, b, i, j + 1, acc, best);
        }
        if i + 1 < a.len() && j + 1 < b.len() {
            walk(a, b, i + 1, j + 1, acc, best);
        }
    }
    let mut best = f64::INFINITY;
    walk(a, b, 0, 0, 0.0, &mut best);
    best
}

fn all_series(max_len: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mut layer: Vec<Vec<f64>> = vec![Vec::new()];
    for _ in 0..max_len {
        layer = layer
            .iter()
            .flat_map(|s| {
                [0.0, 1.0, 2.0].map(|v| {
                    let mut s = s.clone();
                    s.push(v);
                    s
                })
            })
            .collect();
        out.extend(layer.iter().cloned());
    }
    out
}

fn dtw_oracle(rate: SampleRate) -> Outcome {
    // Series here are not device data, so both rates check the same pairs.
    let _ = rate;
    let series = all_series(6);
    let fs: Vec<FeatureSeries> = series
        .iter()
        .map(|s| FeatureSeries::univariate(s).unwrap())
        .collect();
    let mut pairs = 0usize;
    for (a, fa) in series.iter().zip(&fs) {
        for (b, fb) in series.iter().zip(&fs) {
            let got = dtw_distance(fa, fb, 1.0).map_err(|e| e.to_string())?;
            let want = reference_dtw(a, b);
            if got != want {
                return Err(format!("{a:?} vs {b:?}: {got} != reference {want}"));
            }
            if a.len() <= 4 && b.len() <= 4 {
                let paths = enumerated_dtw(a, b);
                if got != paths {
                    return Err(format!("{a:?} vs {b:?}: {got} != path minimum {paths}"));
                }
            }
            pairs += 1;
        }
    }
    Ok(format!(
        "{pairs} pairs (lengths 1..=6, values {{0,1,2}}, full band) equal the reference recurrence"
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 7] = [
        ("separability", separability),
        ("strength-classes", strength_classes),
        ("scoring-oracle", scoring_oracle),
        ("drift-cancellation", drift_cancellation),
        ("resampling", resampling),
        ("protocol", protocol),
        ("dtw-oracle", dtw_oracle),
    ];
    let mut failures = 0;
    let mut lines = 0;
    for rate in [SampleRate::Hz10, SampleRate::Hz80] {
        for (name, run) in criteria {
            let outcome = run(rate);
            lines += 1;
            match outcome {
                Ok(detail) => println!("PASS {name} @ {} Hz: {detail}", rate.hz()),
                Err(detail) => {
                    failures += 1;
                    println!("FAIL {name} @ {} Hz: {detail}", rate.hz());
                }
            }
        }
    }
    let dual = failures == 0;
    println!(
        "{} dual-rate: {} of {lines} criterion runs passed across 10 Hz and 80 Hz",
        if dual { "PASS" } else { "FAIL" },
        lines - failures
    );
    if dual {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
