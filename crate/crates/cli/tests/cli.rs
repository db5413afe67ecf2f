use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rer_cli::commands::{blur_sweep_rows, SWEEP_HEADER};
use rer_cli::config::{Config, Mode, Range, SweepKind};
use rer_core::{effective_sigma, BlurPipeline};

fn rer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rer")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, json: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, json).unwrap();
    p.to_str().unwrap().to_string()
}

fn read_matrix(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect()
}

fn read_table(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn gen_edge_default_chip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("chip.csv");
    let o = rer(&["gen-edge", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = read_matrix(&out);
    assert_eq!((m.len(), m[0].len()), (128, 128));
    assert_eq!(m[64][0], 0.0);
    assert_eq!(m[64][127], 1.0);
    let meta: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("chip.csv.json")).unwrap()).unwrap();
    assert_eq!(meta["width"], 128);
}

#[test]
fn gen_with_blur_equals_gen_then_blur() {
    let dir = tempfile::tempdir().unwrap();
    let blurred_cfg = write_config(
        dir.path(),
        "b.json",
        r#"{"chip": {"slant_angle": 5.0}, "pipeline": {"sigma0": 1.5, "sigma1": 0.0, "downsample": 1}}"#,
    );
    let plain_cfg = write_config(dir.path(), "p.json", r#"{"chip": {"slant_angle": 5.0}}"#);
    let one = dir.path().join("one.csv");
    let plain = dir.path().join("plain.csv");
    let two = dir.path().join("two.csv");
    assert!(rer(&["gen-edge", "--config", &blurred_cfg, "--out", one.to_str().unwrap()]).status.success());
    assert!(rer(&["gen-edge", "--config", &plain_cfg, "--out", plain.to_str().unwrap()]).status.success());
    let o = rer(&["blur", "--config", &blurred_cfg, "--input", plain.to_str().unwrap(), "--out", two.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    // the blur reads the 9-digit rendering back, so compare numerically
    let (a, b) = (read_matrix(&one), read_matrix(&two));
    for (ra, rb) in a.iter().zip(&b) {
        for (x, y) in ra.iter().zip(rb) {
            assert!((x - y).abs() < 1e-8);
        }
    }
}

#[test]
fn invalid_angle_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"chip": {"slant_angle": 60.0}}"#);
    let o = rer(&["gen-edge", "--config", &cfg, "--out", dir.path().join("x.csv").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("angle"));
}

#[test]
fn io_and_parse_failures_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    assert_eq!(rer(&["predict-rer", "--config", missing.to_str().unwrap()]).status.code(), Some(4));
    let bad = write_config(dir.path(), "bad.json", "{ not json");
    assert_eq!(rer(&["predict-rer", "--config", &bad]).status.code(), Some(2));
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let under_file = blocker.join("out.csv");
    assert_eq!(rer(&["gen-edge", "--out", under_file.to_str().unwrap()]).status.code(), Some(4));
    assert_eq!(rer(&["sweep", "--jobs", "0"]).status.code(), Some(2));
}

#[test]
fn measure_and_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"pipeline": {"sigma0": 2.0, "sigma1": 0.0, "downsample": 1}, "correction": {"b": 0.27, "m": -0.44}}"#,
    );
    let chip = dir.path().join("chip.csv");
    assert!(rer(&["gen-edge", "--config", &cfg, "--out", chip.to_str().unwrap()]).status.success());
    let o = rer(&["measure-rer", "--input", chip.to_str().unwrap()]);
    assert!(o.status.success());
    let m: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let measured = m["rer"].as_f64().unwrap();
    let o = rer(&["predict-rer", "--config", &cfg]);
    let p: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(p["sigma_effective"].as_f64().unwrap(), 2.0);
    assert!((p["rer_erf_model"].as_f64().unwrap() - 0.197_413).abs() < 1e-5);
    assert!((measured - p["rer_corrected_model"].as_f64().unwrap()).abs() < 0.01);

    let flat = dir.path().join("flat.csv");
    fs::write(&flat, "1,1,1,1\n1,1,1,1\n1,1,1,1\n").unwrap();
    assert_eq!(rer(&["measure-rer", "--input", flat.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn single_point_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"sweep_kind": "single_blur", "sigma0": [1.0], "sigma1": [0.0], "downsample": [1]}"#,
    );
    let out = dir.path().join("s.csv");
    assert!(rer(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
    let (header, rows) = read_table(&out);
    assert_eq!(header, SWEEP_HEADER);
    assert_eq!(rows.len(), 1);
    let measured: f64 = rows[0][4].parse().unwrap();
    let erf: f64 = rows[0][6].parse().unwrap();
    assert!((erf - 0.382_924_923).abs() < 1e-9);
    // single pass at detector resolution: kernel sampling and the pixel
    // footprint pull the measurement below the bare model
    assert!((measured - erf).abs() < 0.02, "{measured} vs {erf}");
    assert_eq!(rows[0][8], "");
}

fn column(rows: &[Vec<String>], i: usize) -> Vec<f64> {
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

#[test]
fn table_grids_span_published_blur_ranges() {
    let dir = tempfile::tempdir().unwrap();
    let t1 = write_config(dir.path(), "t1.json", r#"{"sweep_kind": "two_stage", "chip": {"width": 64, "height": 64}}"#);
    let out1 = dir.path().join("t1.csv");
    assert!(rer(&["sweep", "--config", &t1, "--out", out1.to_str().unwrap()]).status.success());
    let (_, rows) = read_table(&out1);
    let s = column(&rows, 3);
    let (lo, hi) = (s.iter().copied().fold(f64::MAX, f64::min), s.iter().copied().fold(0.0, f64::max));
    assert_eq!(lo, 0.1);
    assert!((4.2..=4.25).contains(&hi), "{hi}");

    let t2 = write_config(dir.path(), "t2.json", r#"{"chip": {"width": 48, "height": 48}}"#);
    let out2 = dir.path().join("t2.csv");
    assert!(rer(&["sweep", "--config", &t2, "--out", out2.to_str().unwrap()]).status.success());
    let (_, rows) = read_table(&out2);
    assert_eq!(rows.len(), 8 * 5 * 4);
    let s = column(&rows, 3);
    let (lo, hi) = (s.iter().copied().fold(f64::MAX, f64::min), s.iter().copied().fold(0.0, f64::max));
    assert_eq!(lo, 0.15);
    assert!((4.2..=4.25).contains(&hi), "{hi}");
}

#[test]
fn rows_carry_exact_effective_sigma_and_never_drop() {
    // a 24-pixel chip cannot hold the widest kernels, so some points fail
    let config = Config {
        mode: Mode::Free,
        sweep_kind: SweepKind::TwoStage,
        chip: rer_core::EdgeChipSpec {
            width: 24,
            height: 24,
            ..Default::default()
        },
        sigma0: Some(Range::List(vec![0.5, 3.0, 9.0])),
        sigma1: Some(Range::List(vec![0.0, 7.0])),
        downsample: Some(vec![1, 2]),
        ..Default::default()
    };
    let rows = blur_sweep_rows(&config).unwrap();
    assert_eq!(rows.len(), 12);
    assert!(rows.iter().any(|r| r.error.is_some()));
    assert!(rows.iter().any(|r| r.error.is_none()));
    let mut expected = Vec::new();
    for s0 in [0.5, 3.0, 9.0] {
        for s1 in [0.0, 7.0] {
            for k in [1, 2] {
                expected.push((s0, s1, k));
            }
        }
    }
    for (row, (s0, s1, k)) in rows.iter().zip(expected) {
        assert_eq!((row.sigma0, row.sigma1, row.downsample), (s0, s1, k));
        let p = BlurPipeline::new(s0, s1, k).unwrap();
        assert!((row.sigma_effective - effective_sigma(&p)).abs() <= 1e-12);
        if row.error.is_some() {
            assert!(row.rer_measured.is_none());
            assert!(row.rer_erf_model.is_some());
        }
    }
}

#[test]
fn sweeps_are_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"sweep_kind": "two_stage", "chip": {"width": 48, "height": 48}, "sigma0": {"start": 0.1, "stop": 3.0, "count": 6}}"#,
    );
    let run = |jobs: &str, name: &str| {
        let out = dir.path().join(name);
        assert!(rer(&["sweep", "--config", &cfg, "--jobs", jobs, "--out", out.to_str().unwrap()]).status.success());
        fs::read(out).unwrap()
    };
    let a = run("1", "a.csv");
    assert_eq!(a, run("1", "b.csv"));
    assert_eq!(a, run("3", "c.csv"));
}

#[test]
fn reproduce_mode_rejects_out_of_table_ranges() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"sigma0": [7.0]}"#);
    let o = rer(&["sweep", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("published range"));
    let free = rer(&["sweep", "--config", &cfg, "--mode", "free", "--out", dir.path().join("f.csv").to_str().unwrap()]);
    assert!(free.status.success());
}

#[test]
fn calibrate_writes_record_and_residuals_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = rer(&["calibrate", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        (fs::read(&out).unwrap(), fs::read(out.with_extension("residuals.csv")).unwrap())
    };
    let a = run("a.json");
    assert_eq!(a, run("b.json"));
    let record: serde_json::Value = serde_json::from_slice(&a.0).unwrap();
    assert!(record["b"].as_f64().unwrap() > 0.0);
    assert!(record["m"].as_f64().is_some());
    let residuals = String::from_utf8(a.1).unwrap();
    assert!(residuals.starts_with("sigma,sigma_f,residual,lorentzian\n"));
    assert_eq!(residuals.lines().count(), 1 + 39);

    // the record feeds straight back in
    let cfg = write_config(
        dir.path(),
        "use.json",
        &format!(r#"{{"correction_path": "{}", "pipeline": {{"sigma0": 0.5, "sigma1": 0.0, "downsample": 1}}}}"#, dir.path().join("a.json").display()),
    );
    assert!(rer(&["predict-rer", "--config", &cfg]).status.success());

    let tiny = write_config(dir.path(), "tiny.json", r#"{"calibration_grid": [0.1, 1.0, 2.0]}"#);
    let o = rer(&["calibrate", "--config", &tiny, "--out", dir.path().join("t.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn optical_compare_labels_both_q_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "o.json",
        r#"{"chip": {"width": 48, "height": 48},
            "optical": {"wfe": [0.08], "smear": [0.1], "jitter": [2.6e-4], "downsample": [1, 2]}}"#,
    );
    let out = dir.path().join("o.csv");
    let o = rer(&["optical-compare", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_table(&out);
    assert_eq!(header, rer_cli::commands::OPTICAL_HEADER);
    assert_eq!(rows.len(), 2);
    assert_eq!((rows[0][4].as_str(), rows[1][4].as_str()), ("2", "1"));
    for r in &rows {
        let (opt, gauss, delta): (f64, f64, f64) = (r[5].parse().unwrap(), r[6].parse().unwrap(), r[7].parse().unwrap());
        assert!((opt - gauss - delta).abs() < 1e-8);
    }
    let meta = fs::read_to_string(dir.path().join("o.csv.json")).unwrap();
    assert!(meta.contains("stand-in"));
}

#[test]
fn simulate_psf_writes_unit_sum_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "p.json", r#"{"optical": {"base": {"downsample": 2}}}"#);
    let out = dir.path().join("psf.csv");
    let o = rer(&["simulate-psf", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = read_matrix(&out);
    let sum: f64 = m.iter().flatten().sum();
    assert!((sum - 1.0).abs() < 1e-6, "{sum}");
    let meta: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("psf.csv.json")).unwrap()).unwrap();
    assert_eq!(meta["q_effective"].as_f64().unwrap(), 1.0);
    assert!(meta["aberration_model"].as_str().unwrap().contains("stand-in"));
}
