use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use combsense::harness::export::{csv_string, parse_csv};
use combsense::waveform::read_raw;
use serde_json::Value;

const SMALL_D: &str = "[pattern]\nn_fft_samples = 64\nn_cp_samples = 16\nscs_hz = 15000.0\n\
                       s_sub = 4\nscheme = \"D\"\nm_symbols = 8\n";

fn write_spec(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn cli(args: &[&str], config: Option<&Path>, out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_combsense"));
    cmd.args(args);
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    if let Some(o) = out {
        cmd.arg("--out").arg(o);
    }
    cmd.output().unwrap()
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is the JSON report")
}

#[test]
fn usage_errors_exit_1_and_help_exits_0() {
    assert_eq!(cli(&["--help"], None, None).status.code(), Some(0));
    assert_eq!(cli(&[], None, None).status.code(), Some(1));
    assert_eq!(cli(&["frobnicate"], None, None).status.code(), Some(1));
    assert_eq!(cli(&["verify"], None, None).status.code(), Some(1));
}

#[test]
fn invalid_spec_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "bad.toml", &(SMALL_D.to_string() + "slope = 2\n"));
    let out = cli(&["predict"], Some(&spec), Some(dir.path()));
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("slope not coprime"), "{err}");
}

#[test]
fn unwritable_output_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "d.toml", SMALL_D);
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let out = cli(&["af"], Some(&spec), Some(&blocker.join("sub")));
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn verify_scheme_d_defaults_is_clean() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "d.toml", SMALL_D);
    let out = cli(&["verify"], Some(&spec), Some(dir.path()));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert_eq!(r["mismatch_count"], 0);
    assert_eq!(r["af_match"]["missing"].as_array().unwrap().len(), 0);
    assert_eq!(r["af_match"]["unexpected"].as_array().unwrap().len(), 0);
}

#[test]
fn predict_scheme_c_lists_offsets() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "c.toml", &SMALL_D.replace("\"D\"", "\"C\"").replace("= 8", "= 4"));
    let out = cli(&["predict"], Some(&spec), Some(dir.path()));
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["pattern"]["offsets"], serde_json::json!([0, 2, 1, 3]));
    assert!(r["regions"].as_array().unwrap().iter().all(|g| g["sound"] == true));
    assert!(dir.path().join("report.json").exists());
}

#[test]
fn gi_demo_bound_for_large_numerology() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        "gi.toml",
        "[pattern]\nn_fft_samples = 2048\nn_cp_samples = 144\nscs_hz = 30000.0\ns_sub = 4\n\
         scheme = \"D\"\nm_symbols = 4\n",
    );
    let out = cli(&["gi-demo"], Some(&spec), Some(dir.path()));
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    let rows = r["gi_table"].as_array().unwrap();
    let bounds: Vec<u64> = rows.iter().map(|g| g["isi_free_delay_samples"].as_u64().unwrap()).collect();
    assert_eq!(bounds, vec![144, 656, 1168, 1680]);
    for g in rows {
        assert!(g["at_bound"]["relative_residual"].as_f64().unwrap() < 1e-9);
        assert_eq!(g["at_bound"]["estimate"]["correct"], true);
    }
}

#[test]
fn exported_surfaces_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        "rd.toml",
        &(SMALL_D.to_string() + "\n[[targets]]\ndelay_samples = 5\ndoppler_hz = 1250.0\n"),
    );
    for sub in ["af", "rdmap"] {
        let out = cli(&[sub, "--format", "csv,pgm,raw"], Some(&spec), Some(dir.path()));
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let name = if sub == "af" { "af.csv" } else { "rdmap.csv" };
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        assert!(text.starts_with(','));
        assert_eq!(csv_string(&parse_csv(&text).unwrap()), text);
        let pgm = std::fs::read_to_string(dir.path().join(name.replace("csv", "pgm"))).unwrap();
        assert!(pgm.starts_with("P2\n"));
        assert!(!dir.path().join("report.json").exists());
    }
    let samples = read_raw(&dir.path().join("rx.f64")).unwrap();
    assert_eq!(samples.len(), 8 * 80);
}

#[test]
fn rdmap_estimates_target() {
    let dir = tempfile::tempdir().unwrap();
    // 1250 Hz is one Doppler bin of 1/(8T).
    let spec = write_spec(
        dir.path(),
        "rd.toml",
        &(SMALL_D.to_string()
            + "\n[[targets]]\ndelay_samples = 5\ndoppler_hz = 1250.0\n[channel]\nnoise_power = 0.001\nseed = 3\n"),
    );
    let out = cli(&["rdmap", "--format", "json"], Some(&spec), Some(dir.path()));
    let r = report(&out);
    assert_eq!(r["estimation"][0]["g"], 5);
    assert_eq!(r["estimation"][0]["q"], 1);
    assert_eq!(r["estimation"][0]["correct"], true);
}

#[test]
fn overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "d.toml", SMALL_D);
    let out = cli(
        &["af", "--tau-points", "20", "--fd-points", "33", "--seed", "9", "--format", "json"],
        Some(&spec),
        Some(dir.path()),
    );
    let r = report(&out);
    assert_eq!(r["surface"]["tau_points"], 20);
    assert_eq!(r["surface"]["fd_points"], 33);
    assert_eq!(r["seed"], 9);
}

#[test]
fn seed_beyond_config_range_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "d.toml", SMALL_D);
    let out = cli(&["predict", "--seed", "18446744073709551615"], Some(&spec), Some(dir.path()));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("channel.seed"));
}
