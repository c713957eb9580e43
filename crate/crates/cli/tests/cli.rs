use std::fs;
use std::path::Path;
use std::process::Command;

use latent_impact_cli::{parse_args, run_command, CommandConfig};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_latent-impact"))
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn book_flags_parse() {
    let cfg = parse_args([
        "latent-impact",
        "book",
        "--gamma",
        "1.5",
        "--pmax",
        "2000",
        "--l0",
        "1",
    ])
    .unwrap();
    match cfg.command {
        CommandConfig::Book(p) => {
            assert_eq!(p.gamma, 1.5);
            assert_eq!(p.pmax, 2000);
            assert_eq!(p.l0, 1.0);
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(cfg.threads, 1);
}

#[test]
fn gamma_below_one_is_rejected() {
    let err = parse_args(["latent-impact", "book", "--gamma", "0.9"]).unwrap_err();
    assert!(
        format!("{err:#}").contains("gamma must exceed 1"),
        "{err:#}"
    );
    let out = bin().args(["book", "--gamma", "0.9"]).output().unwrap();
    assert!(!out.status.success());
    let msg: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(msg["error"]["kind"], "config");
}

#[test]
fn file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.toml");
    fs::write(
        &conf,
        "command = \"book\"\ngamma = 1.3\npmax = 50\nseed = 5\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let cfg = parse_args([
        "latent-impact",
        "--config",
        conf.to_str().unwrap(),
        "--seed",
        "42",
        "--out",
        out.to_str().unwrap(),
    ])
    .unwrap();
    run_command(&cfg).unwrap();
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["seed"], 42);
    assert_eq!(manifest["gamma"], 1.3);
    assert_eq!(manifest["pmax"], 50);
}

#[test]
fn unknown_keys_and_commands_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.toml");
    fs::write(&conf, "command = \"decay\"\ndelta = 0.5\ntmax = 10\n").unwrap();
    let err = parse_args(["latent-impact", "--config", conf.to_str().unwrap()]).unwrap_err();
    assert!(format!("{err:#}").contains("tmax"), "{err:#}");
    fs::write(&conf, "command = \"plot\"\n").unwrap();
    let err = parse_args(["latent-impact", "--config", conf.to_str().unwrap()]).unwrap_err();
    assert!(format!("{err:#}").contains("unknown command"), "{err:#}");
    fs::write(&conf, "command = \"decay\"\ndelta = \"half\"\n").unwrap();
    let err = parse_args(["latent-impact", "--config", conf.to_str().unwrap()]).unwrap_err();
    assert!(format!("{err:#}").contains("invalid type"), "{err:#}");
    assert!(parse_args(["latent-impact"]).is_err());
}

#[test]
fn book_command_writes_alpha_column() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["book", "--gamma", "1.5", "--pmax", "2000", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let csv = fs::read_to_string(dir.path().join("book.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("p,v_p,L_p,delta_p,alpha_p"));
    let last = csv.lines().last().unwrap();
    let alpha: f64 = last.rsplit(',').next().unwrap().parse().unwrap();
    assert!((alpha - 1.0 / 3.0).abs() < 0.02, "{alpha}");
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn exec_reports_f() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["exec", "--delta", "0.5", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let s = read_json(&dir.path().join("summary.json"));
    let f = s["f"].as_f64().unwrap();
    assert!((f - 25.0 / 144.0).abs() < 1e-12);
    assert!(fs::read_to_string(dir.path().join("summary.json"))
        .unwrap()
        .contains("0.173611"));
}

#[test]
fn passive_refill_signature_is_superlinear() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args([
            "simulate",
            "--policy",
            "passive-refill",
            "--gamma",
            "1.7",
            "--lag-lo",
            "30",
            "--lag-hi",
            "3000",
            "--out",
        ])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let s = read_json(&dir.path().join("summary.json"));
    let e = s["variance_exponent"].as_f64().unwrap();
    assert!(e > 1.15, "{e}");
    let csv = fs::read_to_string(dir.path().join("signature.csv")).unwrap();
    assert!(csv.starts_with("lag,sigma2,stderr\n"));
}

#[test]
fn manifest_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a");
    let second = dir.path().join("b");
    let status = bin()
        .args([
            "renorm",
            "--replicas",
            "200",
            "--points",
            "5",
            "--seed",
            "9",
            "--out",
        ])
        .arg(&first)
        .status()
        .unwrap();
    assert!(status.success());
    let status = bin()
        .arg("--config")
        .arg(first.join("manifest.json"))
        .arg("--out")
        .arg(&second)
        .status()
        .unwrap();
    assert!(status.success());
    for name in ["renorm.csv", "summary.json", "manifest.json"] {
        assert_eq!(
            fs::read(first.join(name)).unwrap(),
            fs::read(second.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn calibrate_and_decay_run() {
    let dir = tempfile::tempdir().unwrap();
    assert!(bin()
        .args(["calibrate", "--gamma", "1.5", "--out"])
        .arg(dir.path())
        .status()
        .unwrap()
        .success());
    assert!(
        read_json(&dir.path().join("summary.json"))["scale_c"]
            .as_f64()
            .unwrap()
            > 0.0
    );
    assert!(bin()
        .args(["decay", "--delta", "0.3", "--out"])
        .arg(dir.path())
        .status()
        .unwrap()
        .success());
    let csv = fs::read_to_string(dir.path().join("decay.csv")).unwrap();
    assert!(
        csv.starts_with("t_over_tmax,ratio\n1e-") || csv.starts_with("t_over_tmax,ratio\n0,1\n"),
        "{}",
        &csv[..40]
    );
}

#[test]
fn runtime_errors_exit_nonzero() {
    // calibration diverges when 2δ ≥ γ
    let out = bin()
        .args(["calibrate", "--gamma", "2.5", "--out"])
        .arg(tempfile::tempdir().unwrap().path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let msg: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(msg["error"]["kind"], "run");
}
