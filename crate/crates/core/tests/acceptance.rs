//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any failed.
//!
//!     cargo test --release --test acceptance

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use howlsim::dsp::{convolve, istft, stft, Spectrogram, StftConfig, TimeSignal};
use howlsim::experiment::dataset::{kalman_preprocess, sha256_hex, DatasetPlan, DatasetSignals};
use howlsim::experiment::{ExperimentSpec, Preprocess, Split, SplitCounts};
use howlsim::fdkf::{process_stream, KalmanConfig, KalmanState};
use howlsim::metrics::si_sdr;
use howlsim::room::{generate_rir, schroeder_rt60, Point3, RoomSpec};
use howlsim::sim::source::synthetic_noise;
use howlsim::sim::{make_teacher_forced_mixture, run_streaming, GainSchedule, ScenarioConfig};
use howlsim::suppress::{
    deep_filter_apply, process_offline, KalmanSuppressor, OracleSuppressor, Passthrough, PluginConfig,
    PluginSuppressor, Suppressor,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use walkdir::WalkDir;

const FS: u32 = 16_000;
const AHS: &str = env!("CARGO_BIN_EXE_ahs");

type Outcome = Result<String, String>;

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn white(rng: &mut ChaCha8Rng, len: usize) -> TimeSignal {
    TimeSignal::new((0..len).map(|_| rng.random_range(-1.0..1.0)).collect(), FS).unwrap()
}

fn stft_reconstruction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let len = rng.random_range(FS as usize..=10 * FS as usize);
        let x = white(&mut rng, len);
        let cfg = if i % 2 == 0 { StftConfig::wideband() } else { StftConfig::low_latency() };
        let y = istft(&stft(&x, &cfg).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let peak = x.peak();
        // interior: skip one frame at each end
        let (a, b) = (cfg.frame_len, len - cfg.frame_len);
        let err = x.samples()[a..b]
            .iter()
            .zip(&y.samples()[a..b])
            .map(|(u, v)| (u - v).abs())
            .fold(0.0, f64::max)
            / peak;
        worst = worst.max(err);
    }
    check(worst < 1e-10, format!("max relative error {worst:.2e}"))?;
    Ok(format!("100 signals, max relative error {worst:.2e}"))
}

fn scalar_howling() -> Outcome {
    let excitation = synthetic_noise(5, 4.0, FS).scaled(1e-4);
    let unstable = ScenarioConfig::scalar_toy(excitation.clone(), 1.0, 1.2, 0.1);
    let r = run_streaming(&unstable, &mut Passthrough).map_err(|e| e.to_string())?;
    check(r.howling.detected, "G*a = 1.2 not detected")?;
    let trip_s = (r.delay_blocks * unstable.hop()) as f64 / f64::from(FS);
    let per_trip = r.howling.growth_rate_db_per_s * trip_s;
    let theory = 20.0 * 1.2f64.log10();
    let rel = (per_trip - theory).abs() / theory;
    check(rel <= 0.05, format!("growth {per_trip:.3} dB/trip vs {theory:.3} ({:.1}%)", 100.0 * rel))?;

    let stable = ScenarioConfig::scalar_toy(excitation.clone(), 1.0, 0.5, 0.1);
    let s = run_streaming(&stable, &mut Passthrough).map_err(|e| e.to_string())?;
    check(!s.howling.detected, "G*a = 0.5 detected as howling")?;
    check(!s.limiter_engaged, "G*a = 0.5 hit the saturation guard")?;
    // geometric series bound: |y| <= |excitation| / (1 - 0.5)
    check(s.mic.peak() <= 2.0 * excitation.peak() + 1e-9, "G*a = 0.5 unbounded")?;
    Ok(format!("{per_trip:.3} dB/trip vs {theory:.3} ({:.1}% off); stable case bounded", 100.0 * rel))
}

fn teacher_forcing() -> Outcome {
    let mut spec = ExperimentSpec::default();
    spec.seed = 31;
    spec.duration_s = 2.0;
    spec.counts = SplitCounts { train: 20, val: 0, test: 0 };
    let plan = DatasetPlan::new(spec).map_err(|e| e.to_string())?;
    let bad: Vec<usize> = (0..20)
        .into_par_iter()
        .filter(|&i| {
            let (cfg, _) = plan.scenario(Split::Train, i).unwrap();
            let mix = make_teacher_forced_mixture(&cfg).unwrap();
            let mut oracle = OracleSuppressor::new(&cfg.prepare().unwrap().target);
            let run = run_streaming(&cfg, &mut oracle).unwrap();
            let same = |a: &TimeSignal, b: &TimeSignal| {
                a.len() == b.len() && a.samples().iter().zip(b.samples()).all(|(u, v)| u.to_bits() == v.to_bits())
            };
            !(same(&run.mic, &mix.mic) && same(&run.playback, &mix.playback))
        })
        .collect();
    check(bad.is_empty(), format!("scenarios differ: {bad:?}"))?;
    Ok("20 scenarios bit-identical".into())
}

fn fdkf_convergence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let taps: Vec<f64> = (0..256).map(|_| rng.random_range(-1.0..1.0) * 0.1).collect();
    let path = TimeSignal::new(taps, FS).unwrap();
    let r = white(&mut rng, 10 * FS as usize);
    let y = convolve(&r, &path).map_err(|e| e.to_string())?.resized(r.len());
    let (e, _) = process_stream(&KalmanConfig::default(), &y, &r).map_err(|e| e.to_string())?;
    let tail = FS as usize;
    let energy = |s: &TimeSignal| s.samples()[s.len() - tail..].iter().map(|v| v * v).sum::<f64>();
    let erle = 10.0 * (energy(&y) / energy(&e)).log10();
    check(erle >= 20.0, format!("final-second ERLE {erle:.1} dB"))?;

    let cfg = KalmanConfig::default();
    let mut st = KalmanState::new(&cfg).map_err(|e| e.to_string())?;
    for p in 0..cfg.partitions {
        st.h_hat[p] = (0..cfg.bins())
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
    }
    let h0 = st.h_norm();
    let zeros = vec![vec![Complex64::new(0.0, 0.0); cfg.bins()]; cfg.partitions];
    let mut worst: f64 = 0.0;
    for k in 1..=1000 {
        let err: Vec<Complex64> = (0..cfg.bins())
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        st.update(&err, &zeros).map_err(|e| e.to_string())?;
        let expected = cfg.transition.powi(k) * h0;
        worst = worst.max((st.h_norm() - expected).abs() / expected);
    }
    check(worst <= 1e-12, format!("A^k decay off by {worst:.2e}"))?;
    Ok(format!("ERLE {erle:.1} dB, A^k decay max relative error {worst:.1e}"))
}

fn kalman_in_loop() -> Outcome {
    let excitation = synthetic_noise(5, 10.0, FS).scaled(1e-4);
    let cfg = ScenarioConfig::scalar_toy(excitation.clone(), 1.0, 1.2, 0.1);
    let open = run_streaming(&cfg, &mut Passthrough).map_err(|e| e.to_string())?;
    check(open.howling.detected, "passthrough does not diverge in this setup")?;
    let r = run_streaming(&cfg, &mut KalmanSuppressor::new(None)).map_err(|e| e.to_string())?;
    check(!r.howling.detected, "detector fired with Kalman in the loop")?;
    check(!r.limiter_engaged, "saturation guard engaged with Kalman in the loop")?;
    let last = &r.enhanced.samples()[r.enhanced.len() - FS as usize..];
    let rms = (last.iter().map(|v| v * v).sum::<f64>() / last.len() as f64).sqrt();
    check(rms <= 10.0 * excitation.rms(), format!("final-second rms {rms:.2e}"))?;
    Ok(format!("10 s bounded, final-second rms {rms:.2e} (input {:.2e})", excitation.rms()))
}

fn gain_trend() -> Outcome {
    let mut spec = ExperimentSpec::default();
    spec.seed = 2024;
    spec.counts = SplitCounts { train: 0, val: 0, test: 50 };
    let plan = DatasetPlan::new(spec).map_err(|e| e.to_string())?;
    let mut means = Vec::new();
    for g in [1.0, 2.0, 3.0] {
        let rows: Vec<[f64; 4]> = (0..50)
            .into_par_iter()
            .map(|i| {
                let (mut cfg, meta) = plan.scenario(Split::Test, i).unwrap();
                cfg.gain = GainSchedule::constant(g);
                let un = run_streaming(&cfg, &mut Passthrough).unwrap();
                let ka = run_streaming(&cfg, &mut KalmanSuppressor::new(None)).unwrap();
                let p = cfg.prepare().unwrap();
                let mix = howlsim::sim::teacher_forced(&p);
                let sig = DatasetSignals::from_mixture(&mix.target, &mix.noise, &mix.playback).unwrap();
                let e = kalman_preprocess(&sig, &cfg.stft, meta.delay_blocks, Preprocess::TeacherForced).unwrap();
                [
                    si_sdr(&un.enhanced, &un.target).unwrap().value,
                    si_sdr(&ka.enhanced, &ka.target).unwrap().value,
                    si_sdr(&sig.y, &sig.s).unwrap().value,
                    si_sdr(&e, &sig.s).unwrap().value,
                ]
            })
            .collect();
        let mut m = [0.0; 4];
        for r in &rows {
            for k in 0..4 {
                m[k] += r[k] / rows.len() as f64;
            }
        }
        means.push(m);
    }
    let fmt = |k: usize| format!("{:.2} -> {:.2} -> {:.2}", means[0][k], means[1][k], means[2][k]);
    let decreasing = |k: usize| means[0][k] > means[1][k] && means[1][k] > means[2][k];
    let detail = format!(
        "closed loop: unprocessed {}, kalman {}; teacher-forced: y {}, e {}",
        fmt(0),
        fmt(1),
        fmt(2),
        fmt(3)
    );
    check((0..4).all(decreasing), detail.clone())?;
    Ok(detail)
}

fn si_sdr_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_scale: f64 = 0.0;
    for _ in 0..1000 {
        let len = rng.random_range(100..2000);
        let r = white(&mut rng, len);
        let e = white(&mut rng, len);
        let alpha = 10f64.powf(rng.random_range(-3.0..3.0)) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let a = si_sdr(&e, &r).map_err(|e| e.to_string())?.value;
        let b = si_sdr(&e.scaled(alpha), &r).map_err(|e| e.to_string())?.value;
        worst_scale = worst_scale.max((a - b).abs());
    }
    check(worst_scale <= 1e-9, format!("scale invariance off by {worst_scale:.2e} dB"))?;

    let mut worst_closed: f64 = 0.0;
    for _ in 0..100 {
        let len = rng.random_range(100..2000);
        let s = white(&mut rng, len);
        let raw = white(&mut rng, len);
        // Gram-Schmidt: noise orthogonal to s
        let proj = raw.samples().iter().zip(s.samples()).map(|(a, b)| a * b).sum::<f64>() / s.energy();
        let n = raw.sub(&s.scaled(proj)).unwrap().scaled(rng.random_range(0.01..3.0));
        let est = s.add(&n).unwrap();
        let expected = 10.0 * (s.energy() / n.energy()).log10();
        let got = si_sdr(&est, &s).map_err(|e| e.to_string())?.value;
        worst_closed = worst_closed.max((got - expected).abs());
    }
    check(worst_closed <= 1e-9, format!("closed form off by {worst_closed:.2e} dB"))?;
    Ok(format!("scale {worst_scale:.1e} dB, orthogonal closed form {worst_closed:.1e} dB"))
}

fn rir_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let point = |dims: [f64; 3], rng: &mut ChaCha8Rng| {
        Point3::new(
            rng.random_range(0.1..dims[0] - 0.1),
            rng.random_range(0.1..dims[1] - 0.1),
            rng.random_range(0.1..dims[2] - 0.1),
        )
    };
    let mut worst_delay = 0usize;
    for _ in 0..100 {
        let dims = [rng.random_range(3.0..10.0), rng.random_range(3.0..8.0), rng.random_range(2.5..4.0)];
        let room = RoomSpec::new(dims, 0.0);
        let (src, mic) = (point(dims, &mut rng), point(dims, &mut rng));
        let h = generate_rir(&room, &src, &mic, FS).map_err(|e| e.to_string())?;
        let oracle = (src.distance(&mic) / room.speed_of_sound * f64::from(FS)).round() as usize;
        let first = h.samples().iter().position(|&v| v != 0.0).ok_or("empty response")?;
        worst_delay = worst_delay.max(first.abs_diff(oracle));
    }
    check(worst_delay <= 1, format!("direct path off by {worst_delay} samples"))?;

    let cases: Vec<([f64; 3], f64, Point3, Point3)> = (0..20)
        .map(|_| {
            let dims = [rng.random_range(4.0..10.0), rng.random_range(3.5..8.0), rng.random_range(2.5..4.0)];
            (dims, rng.random_range(0.2..0.6), point(dims, &mut rng), point(dims, &mut rng))
        })
        .collect();
    let errs: Vec<Result<f64, String>> = cases
        .par_iter()
        .map(|(dims, t60, src, mic)| {
            let h = generate_rir(&RoomSpec::new(*dims, *t60), src, mic, FS).map_err(|e| e.to_string())?;
            let est = schroeder_rt60(&h, 20.0).ok_or("no decay fit")?;
            Ok((est - t60).abs() / t60)
        })
        .collect();
    let worst_rt = errs.into_iter().collect::<Result<Vec<_>, _>>()?.into_iter().fold(0.0, f64::max);
    check(worst_rt <= 0.2, format!("RT60 off by {:.1}%", 100.0 * worst_rt))?;
    Ok(format!("delay error <= {worst_delay} sample, RT60 within {:.1}%", 100.0 * worst_rt))
}

fn deep_filter() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let c = |rng: &mut ChaCha8Rng| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let cfg = StftConfig::low_latency();
        let len = rng.random_range(300..3000);
        let frames = cfg.frame_count(len);
        let data = ndarray::Array2::from_shape_fn((frames, cfg.bins()), |_| c(&mut rng));
        let spec = Spectrogram::new(data, cfg, len, FS).map_err(|e| e.to_string())?;
        let taps = rng.random_range(1..6);
        let offsets: Vec<isize> = (0..taps).map(|_| rng.random_range(-3i64..=2) as isize).collect();
        let filt = ndarray::Array3::from_shape_fn((frames, cfg.bins(), taps), |_| c(&mut rng));
        let out = deep_filter_apply(&spec, &filt, &offsets).map_err(|e| e.to_string())?;
        for t in 0..frames {
            for k in 0..cfg.bins() {
                let mut acc = Complex64::new(0.0, 0.0);
                for (l, &o) in offsets.iter().enumerate() {
                    let src = t as isize + o;
                    if (0..frames as isize).contains(&src) {
                        acc += filt[[t, k, l]] * spec.data()[[src as usize, k]];
                    }
                }
                worst = worst.max((out.data()[[t, k]] - acc).norm());
            }
        }
        let mut ident = ndarray::Array3::zeros((frames, cfg.bins(), 1));
        ident.fill(Complex64::new(1.0, 0.0));
        check(
            deep_filter_apply(&spec, &ident, &[0]).map_err(|e| e.to_string())?.data() == spec.data(),
            "identity filter not exact",
        )?;
    }
    check(worst <= 1e-12, format!("naive oracle differs by {worst:.2e}"))?;
    Ok(format!("20 tensors, max deviation {worst:.1e}, identity exact"))
}

fn plugin_protocol() -> Outcome {
    let frames = 10_000;
    let hop = 256;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let x: Vec<f32> = (0..frames * hop).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    let mut plugin = PluginSuppressor::spawn(AHS, &["plugin-peer".into(), "--mode".into(), "echo".into()], PluginConfig::default());
    plugin
        .init(&howlsim::suppress::StreamContext::new(FS, StftConfig::default(), 6))
        .map_err(|e| e.to_string())?;
    let y = process_offline(&mut plugin, &[&x], hop).map_err(|e| e.to_string())?;
    let reference = process_offline(&mut Passthrough, &[&x], hop).map_err(|e| e.to_string())?;
    check(
        y.iter().zip(&reference).all(|(a, b)| a.to_bits() == b.to_bits()) && y.len() == reference.len(),
        "echo peer differs from passthrough",
    )?;
    drop(plugin);

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let scen = dir.path().join("toy.json");
    std::fs::write(&scen, r#"{"target": {"synthetic": 1}, "rir": {"scalar": 0.5}, "gain": 1.0, "delay_s": 0.1, "duration_s": 1.0}"#)
        .map_err(|e| e.to_string())?;
    let mut codes = Vec::new();
    for mode in ["bad-magic", "truncate:20"] {
        let out = dir.path().join(mode.replace(':', "-"));
        let status = Command::new(AHS)
            .args(["stream", "--scenario", scen.to_str().unwrap(), "--suppressor", "external"])
            .args(["--cmd", &format!("{AHS} plugin-peer --mode {mode}"), "-o", out.to_str().unwrap()])
            .env("RUST_LOG", "off")
            .stderr(Stdio::null())
            .status()
            .map_err(|e| e.to_string())?;
        codes.push((mode, status.code()));
    }
    check(codes.iter().all(|(_, c)| *c == Some(4)), format!("exit codes {codes:?}"))?;
    Ok(format!("{frames} frames bit-exact; bad magic and truncation exit 4"))
}

fn tree_hashes(root: &Path) -> BTreeMap<String, String> {
    WalkDir::new(root)
        .sort_by_file_name()
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .map(|e| {
            let rel = e.path().strip_prefix(root).unwrap().to_string_lossy().into_owned();
            (rel, sha256_hex(&std::fs::read(e.path()).unwrap()))
        })
        .collect()
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut trees = Vec::new();
    for (run, jobs) in [("a", "1"), ("b", "4")] {
        let out = dir.path().join(run);
        let status = Command::new(AHS)
            .args(["gen-dataset", "--train", "2", "--val", "1", "--test", "1", "--seed", "77", "--jobs", jobs])
            .args(["-o", out.to_str().unwrap()])
            .env("RUST_LOG", "off")
            .status()
            .map_err(|e| e.to_string())?;
        check(status.success(), format!("gen-dataset run {run} failed: {status}"))?;
        trees.push(tree_hashes(&out));
    }
    check(trees[0].len() == 4 * 6 + 1, format!("{} files", trees[0].len()))?;
    check(trees[0] == trees[1], "directory trees differ")?;
    Ok(format!("{} files identical across runs (1 and 4 workers)", trees[0].len()))
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Outcome); 11] = [
        ("STFT perfect reconstruction", Duration::from_secs(10), stft_reconstruction),
        ("howling reproduction on the scalar loop", Duration::from_secs(5), scalar_howling),
        ("teacher-forcing equivalence", Duration::from_secs(30), teacher_forcing),
        ("FDKF convergence and decay law", Duration::from_secs(20), fdkf_convergence),
        ("Kalman-in-loop stability", Duration::from_secs(20), kalman_in_loop),
        ("SI-SDR trend over gain", Duration::from_secs(300), gain_trend),
        ("SI-SDR properties", Duration::from_secs(5), si_sdr_properties),
        ("image-method RIR", Duration::from_secs(60), rir_checks),
        ("deep filter oracle", Duration::from_secs(5), deep_filter),
        ("plugin protocol", Duration::from_secs(10), plugin_protocol),
        ("end-to-end determinism", Duration::from_secs(60), determinism),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(d) if took > *budget => Err(format!("{d}; took {took:.1?}, budget {budget:?}")),
            o => o,
        };
        match outcome {
            Ok(detail) => println!("criterion {:2} PASS  {name}: {detail} [{took:.1?}]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:2} FAIL  {name}: {detail} [{took:.1?}]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
