use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ssrgan::metrics::inps;
use ssrgan::signal::{read_recording, write_recording, Recording};

const SMALL: &[&str] = &["--n-train-a", "48", "--n-train-b", "48", "--n-eval", "8"];

fn ssrgan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssrgan"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = ssrgan(args);
    assert!(
        out.status.success(),
        "ssrgan {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, seed: &str) -> PathBuf {
    let out = dir.join(format!("synth-{seed}"));
    let mut args = vec!["synth", "--out", s(&out), "--seed", seed];
    args.extend_from_slice(SMALL);
    ok(&args);
    out
}

fn read_bytes(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{}: {e}", dir.join(name).display()))
}

#[test]
fn synth_is_deterministic_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let first = synth(tmp.path(), "7");
    let again = tmp.path().join("again");
    let mut args = vec!["synth", "--out", s(&again), "--seed", "7"];
    args.extend_from_slice(SMALL);
    ok(&args);
    for name in ["a.csv", "b.csv", "eval_contaminated.csv", "eval_clean.csv", "manifest.json"] {
        assert_eq!(read_bytes(&first, name), read_bytes(&again, name), "{name}");
    }
    let other = synth(tmp.path(), "8");
    assert_ne!(read_bytes(&first, "a.csv"), read_bytes(&other, "a.csv"));
    let summary = fs::read_to_string(first.join("summary.txt")).unwrap();
    assert!(summary.contains("windows: A 48, B 48, eval 8"), "{summary}");
}

#[test]
fn model2_history_logs_disabled_subnets_as_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), "1");
    let out = tmp.path().join("train");
    ok(&["train", "--out", s(&out), "--data", s(&data), "--preset", "model2", "--iterations", "12", "--batch-size", "4"]);
    let csv = fs::read_to_string(out.join("history.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header, ["iter", "cycle", "gan_g", "gan_d", "ae", "mid_mse", "mid_mmd", "total"]);
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 12);
    for r in &rows {
        assert_eq!(&r[4..7], &[0.0, 0.0, 0.0]);
        assert!(r[1] > 0.0);
    }
    let cfg: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(cfg["train"]["sharing_enabled"], false);
    assert_eq!(cfg["model"]["sharing"], false);
}

#[test]
fn echoed_config_reproduces_outputs_bitwise() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("first");
    let mut args = vec!["train", "--out", s(&first), "--iterations", "10", "--batch-size", "4", "--seed", "3"];
    args.extend_from_slice(SMALL);
    ok(&args);
    let second = tmp.path().join("second");
    let cfg = first.join("config.json");
    ok(&["train", "--config", s(&cfg), "--out", s(&second)]);
    for name in ["checkpoint.ssrg", "history.csv", "metrics.json", "denoised_eval.csv"] {
        assert_eq!(read_bytes(&first, name), read_bytes(&second, name), "{name}");
    }
}

#[test]
fn trained_checkpoint_denoises_eval_recording() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(&["synth", "--out", s(&data), "--seed", "7", "--n-train-a", "128", "--n-train-b", "128", "--n-eval", "16"]);
    let trained = tmp.path().join("trained");
    ok(&["train", "--out", s(&trained), "--data", s(&data), "--preset", "model1", "--iterations", "300"]);

    let input = data.join("eval_contaminated.csv");
    let den = tmp.path().join("denoised");
    let ckpt = trained.join("checkpoint.ssrg");
    ok(&["denoise", "--out", s(&den), "--checkpoint", s(&ckpt), "--input", s(&input)]);
    let before = read_recording(&input).unwrap();
    let after = read_recording(den.join("denoised.csv")).unwrap();
    assert_eq!(after.len(), before.len());
    let gain = inps(&before, &after).unwrap();
    assert!(gain > 0.0, "INPS {gain}");

    let ev = tmp.path().join("eval");
    ok(&["eval", "--out", s(&ev), "--checkpoint", s(&ckpt), "--data", s(&data)]);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(ev.join("metrics.json")).unwrap()).unwrap();
    assert!((report["inps_db"].as_f64().unwrap() - gain).abs() < 1e-9);
    assert!(report["clean_correlation"].is_number());
    assert!(ev.join("psd_ch0.csv").exists());

    let feat = tmp.path().join("features");
    ok(&["features", "--out", s(&feat), "--checkpoint", s(&ckpt), "--input", s(&input)]);
    let phi1 = fs::read_to_string(feat.join("phi1.csv")).unwrap();
    let phi2 = fs::read_to_string(feat.join("phi2.csv")).unwrap();
    let (maps, len) = (32, 125);
    for phi in [&phi1, &phi2] {
        let lines: Vec<&str> = phi.lines().collect();
        assert_eq!(lines.len(), 1 + 16 * maps);
        assert_eq!(lines[0].split(',').count(), 4 + len);
    }
}

#[test]
fn aas_baseline_reduces_periodic_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(&[
        "synth", "--out", s(&data), "--n-train-a", "8", "--n-train-b", "8", "--n-eval", "120",
        "--beat-jitter-ms", "0", "--amplitude-jitter", "0",
    ]);
    let ev = tmp.path().join("eval");
    ok(&["eval", "--out", s(&ev), "--data", s(&data), "--baseline", "aas"]);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(ev.join("metrics.json")).unwrap()).unwrap();
    assert!(report["inps_db"].as_f64().unwrap() > 10.0, "{}", report["inps_db"]);
    assert!(report["clean_correlation"].as_f64().unwrap() > 0.5);
}

#[test]
fn preprocess_band_limits_and_decimates() {
    let tmp = tempfile::tempdir().unwrap();
    let fs_hz = 1000.0;
    let x: Vec<f64> = (0..20_000)
        .map(|i| {
            let t = i as f64 / fs_hz;
            (2.0 * std::f64::consts::PI * 10.0 * t).sin() + (2.0 * std::f64::consts::PI * 200.0 * t).sin()
        })
        .collect();
    let input = tmp.path().join("raw.csv");
    write_recording(&Recording::single(fs_hz, x).unwrap(), &input).unwrap();
    let out = tmp.path().join("pre");
    ok(&["preprocess", "--out", s(&out), "--input", s(&input)]);
    let rec = read_recording(out.join("preprocessed.csv")).unwrap();
    assert_eq!(rec.sample_rate_hz, 250.0);
    assert_eq!(rec.len(), 5000);
    // Only the 10 Hz component survives; its RMS away from the edges is 1/sqrt(2).
    let mid = &rec.channels[0][1000..4000];
    let rms = (mid.iter().map(|v| v * v).sum::<f64>() / mid.len() as f64).sqrt();
    assert!((rms - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.02, "rms {rms}");
}

#[test]
fn gradcheck_passes_and_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("gc");
    ok(&["gradcheck", "--out", s(&out), "--seeds", "0"]);
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.trim_end().ends_with("0 failed"), "{report}");
    assert!(!report.contains("FAIL"));
}

#[test]
fn exit_codes_distinguish_usage_config_and_runtime() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("x");
    let code = |args: &[&str]| ssrgan(args).status.code();

    assert_eq!(code(&["no-such-command"]), Some(1));
    assert_eq!(code(&["train", "--out", s(&out), "--no-such-key", "1"]), Some(1));
    assert_eq!(code(&["train", "--out", s(&out), "--batch-size", "1"]), Some(1));
    assert_eq!(code(&["synth", "--seed", "1"]), Some(1));
    assert_eq!(code(&["--help"]), Some(0));

    let missing = tmp.path().join("missing.ssrg");
    let input = tmp.path().join("in.csv");
    write_recording(&Recording::single(250.0, vec![0.5; 500]).unwrap(), &input).unwrap();
    let r = ssrgan(&["denoise", "--out", s(&out), "--checkpoint", s(&missing), "--input", s(&input)]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("checkpoint"));

    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"train": {"adam": {"momentum": 0.9}}}"#).unwrap();
    let r = ssrgan(&["train", "--config", s(&bad), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("train.adam.momentum"));
}
