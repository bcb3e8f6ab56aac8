use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_arraysep"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn arraysep")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn ok(args: &[&str]) -> Value {
    let out = run(args);
    assert_eq!(code(&out), 0, "{args:?}\n{}", String::from_utf8_lossy(&out.stderr));
    if out.stdout.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&out.stdout).expect("JSON report")
    }
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn write_scenario(dir: &Path, duration: f64, azimuths: &[f64], seed: u64) -> PathBuf {
    let r = 0.0425;
    let mics: Vec<[f64; 3]> = (0..6)
        .map(|k| {
            let a = 2.0 * std::f64::consts::PI * k as f64 / 6.0;
            [r * a.cos(), r * a.sin(), 0.0]
        })
        .collect();
    let doc = serde_json::json!({
        "geometry": { "sound_speed": 343.0, "mic_positions": mics },
        "sources": azimuths.iter().map(|a| serde_json::json!({ "azimuth_deg": a })).collect::<Vec<_>>(),
        "duration": duration,
        "snr_db": 30.0,
        "seed": seed,
    });
    let path = dir.join("scenario.json");
    std::fs::write(&path, serde_json::to_string_pretty(&doc).unwrap()).unwrap();
    path
}

fn simulate(dir: &Path, duration: f64, azimuths: &[f64], seed: u64) -> PathBuf {
    let scen = write_scenario(dir, duration, azimuths, seed);
    let out = dir.join("sim");
    ok(&["simulate", "--scenario", s(&scen), "--out-dir", s(&out)]);
    out
}

fn read_mono(path: &Path) -> Vec<f64> {
    let r = hound::WavReader::open(path).unwrap();
    r.into_samples::<f32>().map(|v| v.unwrap() as f64).collect()
}

fn write_mono(path: &Path, samples: &[f64]) {
    let spec = hound::WavSpec { channels: 1, sample_rate: 16000, bits_per_sample: 32, sample_format: hound::SampleFormat::Float };
    let mut w = hound::WavWriter::create(path, spec).unwrap();
    for &v in samples {
        w.write_sample(v as f32).unwrap();
    }
    w.finalize().unwrap();
}

fn noise(len: usize, seed: u64) -> Vec<f64> {
    // Small LCG; the tests only need deterministic broadband samples.
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    (0..len)
        .map(|_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        })
        .collect()
}

#[test]
fn missing_subcommand_is_usage_error() {
    assert_eq!(code(&run(&[])), 2);
    assert_eq!(code(&run(&["separate", "--bogus"])), 2);
}

#[test]
fn missing_input_is_io_error_and_writes_nothing() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let res = run(&["separate", "--input", s(&dir.path().join("nope.wav")), "--n-sources", "2", "--out-dir", s(&out)]);
    assert_eq!(code(&res), 5);
    assert!(!out.exists());
}

#[test]
fn garbage_wav_is_invalid_input() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("bad.wav");
    std::fs::write(&input, b"definitely not RIFF").unwrap();
    let out = dir.path().join("out");
    let res = run(&["separate", "--input", s(&input), "--n-sources", "1", "--out-dir", s(&out)]);
    assert_eq!(code(&res), 4);
    assert!(!out.exists());
}

#[test]
fn missing_geometry_is_config_error() {
    let dir = TempDir::new().unwrap();
    let sim = simulate(dir.path(), 1.0, &[40.0], 3);
    let mix = sim.join("mixture.wav");
    let out = dir.path().join("out");
    let res = run(&["separate", "--input", s(&mix), "--n-sources", "1", "--method", "mvdr-doa", "--out-dir", s(&out)]);
    assert_eq!(code(&res), 3);
    assert!(!out.exists());
    assert_eq!(code(&run(&["doa", "--input", s(&mix), "--n-sources", "1"])), 3);
    let res = run(&["separate", "--input", s(&mix), "--n-sources", "1", "--method", "mvdr-mask", "--out-dir", s(&out)]);
    assert_eq!(code(&res), 3);
}

#[test]
fn bad_channel_selection_is_config_error() {
    let dir = TempDir::new().unwrap();
    let sim = simulate(dir.path(), 1.0, &[40.0], 3);
    let mix = sim.join("mixture.wav");
    let out = dir.path().join("out");
    for chans in ["0,9", "1,1"] {
        let res = run(&["separate", "--input", s(&mix), "--n-sources", "2", "--channels", chans, "--out-dir", s(&out)]);
        assert_eq!(code(&res), 3, "{chans}");
    }
    let res = run(&["separate", "--input", s(&mix), "--n-sources", "2", "--channels", "0,3", "--reference", "1", "--out-dir", s(&out)]);
    assert_eq!(code(&res), 3);
    assert!(!out.exists());
}

#[test]
fn simulate_is_bit_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let scen = write_scenario(dir.path(), 1.0, &[20.0, 100.0], 11);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["simulate", "--scenario", s(&scen), "--out-dir", s(&a)]);
    ok(&["simulate", "--scenario", s(&scen), "--out-dir", s(&b)]);
    let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 9);
    for name in names {
        assert_eq!(std::fs::read(a.join(&name)).unwrap(), std::fs::read(b.join(&name)).unwrap(), "{name:?}");
    }
    let truth: Value = serde_json::from_slice(&std::fs::read(a.join("truth.json")).unwrap()).unwrap();
    assert_eq!(truth["n_sources"], 2);
    assert!((truth["sources"][1]["azimuth_deg"].as_f64().unwrap() - 100.0).abs() < 1e-9);
}

#[test]
fn separate_is_deterministic_and_echoes_config() {
    let dir = TempDir::new().unwrap();
    let sim = simulate(dir.path(), 2.0, &[30.0, 120.0], 5);
    let mix = sim.join("mixture.wav");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        ok(&["separate", "--input", s(&mix), "--n-sources", "2", "--out-dir", s(out)]);
    }
    for name in ["source_0.wav", "source_1.wav", "demixing.bin", "report.json"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
    let report: Value = serde_json::from_slice(&std::fs::read(a.join("report.json")).unwrap()).unwrap();
    let cfg = &report["config"];
    assert_eq!(cfg["channels"], serde_json::json!([0, 3]));
    assert_eq!(cfg["wpe"]["taps"], 10);
    assert_eq!(cfg["wpe"]["delay"], 3);
    assert_eq!(cfg["wpe"]["iterations"], 3);
    assert_eq!(cfg["stft_wpe"]["n_fft"], 512);
    assert_eq!(cfg["stft_wpe"]["hop"], 128);
    assert_eq!(cfg["stft_sep"]["n_fft"], 4096);
    assert_eq!(cfg["stft_sep"]["hop"], 1024);
    assert_eq!(cfg["iva_iterations"], 30);
    assert_eq!(cfg["reference"], 0);
}

#[test]
fn single_source_output_matches_wpe_only_output() {
    let dir = TempDir::new().unwrap();
    let sim = simulate(dir.path(), 2.0, &[75.0], 9);
    let mix = sim.join("mixture.wav");
    let sep = dir.path().join("sep");
    let wpe_only = dir.path().join("wpe");
    ok(&["separate", "--input", s(&mix), "--n-sources", "1", "--out-dir", s(&sep)]);
    ok(&["separate", "--input", s(&mix), "--n-sources", "1", "--iva-iterations", "0", "--out-dir", s(&wpe_only)]);
    let y = read_mono(&sep.join("source_0.wav"));
    let d = read_mono(&wpe_only.join("source_0.wav"));
    let ey: f64 = y.iter().map(|v| v * v).sum();
    let ed: f64 = d.iter().map(|v| v * v).sum();
    assert!((10.0 * (ey / ed).log10()).abs() < 1.0);
    let err: f64 = y.iter().zip(&d).map(|(a, b)| (a - b).powi(2)).sum();
    assert!(err < 1e-6 * ed, "relative error {}", err / ed);
}

#[test]
fn eval_identical_signals_reach_cap() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.wav");
    let b = dir.path().join("b.wav");
    write_mono(&a, &noise(4000, 1));
    write_mono(&b, &noise(4000, 2));
    let rep = ok(&["eval", "--est", s(&b), s(&a), "--ref", s(&a), s(&b)]);
    assert_eq!(rep["si_sdr"].as_f64().unwrap(), 80.0);
    assert_eq!(rep["assignment"], serde_json::json!([1, 0]));
}

#[test]
fn cisdr_of_delayed_pair_is_at_cap() {
    let dir = TempDir::new().unwrap();
    let x = noise(3000, 4);
    let mut delayed = vec![0.0];
    delayed.extend_from_slice(&x[..x.len() - 1]);
    let r = dir.path().join("r.wav");
    let e = dir.path().join("e.wav");
    write_mono(&r, &x);
    write_mono(&e, &delayed);
    for taps in ["1", "4"] {
        let rep = ok(&["loss", "cisdr", "--est", s(&e), "--target", s(&r), "--cisdr-taps", taps]);
        assert!((rep["loss"].as_f64().unwrap() + 80.0).abs() < 1e-6, "{taps}: {}", rep["loss"]);
    }
}

#[test]
fn kld_of_identical_signals_is_zero() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.wav");
    write_mono(&a, &noise(8000, 8));
    let rep = ok(&["loss", "kld", "--est", s(&a), "--target", s(&a), "--n-fft", "512", "--hop", "128"]);
    assert!(rep["loss"].as_f64().unwrap().abs() < 1e-9);
}

#[test]
fn combined_loss_matches_separate_invocations() {
    let dir = TempDir::new().unwrap();
    let sim = simulate(dir.path(), 2.0, &[30.0, 120.0], 21);
    let mix = sim.join("mixture.wav");
    let sep = dir.path().join("sep");
    ok(&["separate", "--input", s(&mix), "--n-sources", "2", "--out-dir", s(&sep)]);
    let dm = sep.join("demixing.bin");
    let truth = sim.join("truth.json");
    let geom = sim.join("geometry.json");
    let ests = [sep.join("source_0.wav"), sep.join("source_1.wav")];
    let refs = [sim.join("reference_0.wav"), sim.join("reference_1.wav")];
    let spatial = ok(&["loss", "doa2", "--demixing", s(&dm), "--doa", s(&truth), "--geometry", s(&geom)]);
    let signal = ok(&["loss", "cisdr", "--est", s(&ests[0]), s(&ests[1]), "--target", s(&refs[0]), s(&refs[1]), "--cisdr-taps", "16"]);
    let combined = ok(&[
        "loss", "combined", "--demixing", s(&dm), "--doa", s(&truth), "--geometry", s(&geom), "--est", s(&ests[0]), s(&ests[1]),
        "--target", s(&refs[0]), s(&refs[1]), "--cisdr-taps", "16", "--alpha", "0.2",
    ]);
    let want = spatial["loss"].as_f64().unwrap() + 0.2 * signal["loss"].as_f64().unwrap();
    let got = combined["loss"].as_f64().unwrap();
    assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "{got} vs {want}");
    assert_eq!(combined["config"]["alpha"], 0.2);
    let per: f64 = spatial["spatial"]["per_frequency"].as_array().unwrap().iter().map(|v| v["loss"].as_f64().unwrap()).sum();
    assert!((per - spatial["loss"].as_f64().unwrap()).abs() < 1e-6 * per.max(1.0));
}

#[test]
fn loss_shape_mismatch_is_invalid_input() {
    let dir = TempDir::new().unwrap();
    let sim = simulate(dir.path(), 1.0, &[30.0, 120.0], 2);
    let sep = dir.path().join("sep");
    ok(&["separate", "--input", s(&sim.join("mixture.wav")), "--n-sources", "2", "--out-dir", s(&sep)]);
    let doa = dir.path().join("three.json");
    let sources: Vec<Value> =
        [10.0, 130.0, 250.0].iter().map(|a| serde_json::json!({"azimuth_deg": a, "elevation_deg": 90.0, "cluster_size": 1})).collect();
    let doc = serde_json::json!({ "n_sources": 3, "complete": true, "sources": sources });
    std::fs::write(&doa, doc.to_string()).unwrap();
    let res = run(&["loss", "doa2", "--demixing", s(&sep.join("demixing.bin")), "--doa", s(&doa), "--geometry", s(&sim.join("geometry.json"))]);
    assert_eq!(code(&res), 4);
}

#[test]
fn incomplete_doa_is_flagged() {
    let dir = TempDir::new().unwrap();
    let sim = simulate(dir.path(), 2.0, &[30.0, 120.0], 6);
    let mix = sim.join("mixture.wav");
    let geom = sim.join("geometry.json");
    let out = dir.path().join("doa.json");
    let base = ["doa", "--input", s(&mix), "--geometry", s(&geom), "--n-sources", "2", "--e-thres-ratio", "0.9", "--no-wpe"];
    let mut args = base.to_vec();
    args.extend(["--output", s(&out)]);
    ok(&args);
    let rep: Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(rep["status"], "incomplete");
    assert_eq!(rep["complete"], false);
    assert_eq!(rep["config"]["music"]["cluster"]["e_thres_ratio"], 0.9);
    let mut strict = base.to_vec();
    strict.push("--strict");
    assert_eq!(code(&run(&strict)), 7);

    let sep = dir.path().join("sep");
    ok(&["separate", "--input", s(&mix), "--n-sources", "2", "--no-wpe", "--out-dir", s(&sep)]);
    let res = run(&["loss", "doa2", "--demixing", s(&sep.join("demixing.bin")), "--doa", s(&out), "--geometry", s(&geom)]);
    assert_eq!(code(&res), 4);
}

#[test]
fn mvdr_doa_separates_simulated_mixture() {
    let dir = TempDir::new().unwrap();
    let sim = simulate(dir.path(), 3.0, &[30.0, 120.0], 13);
    let sep = dir.path().join("sep");
    ok(&[
        "separate", "--input", s(&sim.join("mixture.wav")), "--geometry", s(&sim.join("geometry.json")), "--n-sources", "2",
        "--method", "mvdr-doa", "--out-dir", s(&sep),
    ]);
    let report: Value = serde_json::from_slice(&std::fs::read(sep.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["channels"].as_array().unwrap().len(), 6);
    assert_eq!(report["doa"]["sources"].as_array().unwrap().len(), 2);
    let rep = ok(&[
        "eval", "--est", s(&sep.join("source_0.wav")), s(&sep.join("source_1.wav")), "--ref", s(&sim.join("reference_0.wav")),
        s(&sim.join("reference_1.wav")), "--mixture", s(&sim.join("mixture.wav")),
    ]);
    assert!(rep["mixture"]["improvement"].as_f64().unwrap() > 3.0, "{}", rep["mixture"]);
}
