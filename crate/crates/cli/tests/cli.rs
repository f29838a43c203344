use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn nmqd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nmqd")).args(args).env_remove("NMQD_THREADS").output().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stdout);
    serde_json::from_str(text.lines().last().unwrap()).unwrap()
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.lines().last().unwrap()).unwrap()
}

fn hash(path: &Path) -> String {
    hex::encode(Sha256::digest(fs::read(path).unwrap()))
}

fn decompose(dir: &Path, name: &str, poles: &str) -> std::path::PathBuf {
    let out = dir.join(name);
    let o = nmqd(&["bath", "decompose", "--sdf", "drude", "--lambda", "0.1", "--gamma", "1", "--beta", "1", "--poles", poles, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn help_is_available_for_every_subcommand() {
    let paths: &[&[&str]] = &[
        &[],
        &["bath"],
        &["bath", "decompose"],
        &["bath", "validate"],
        &["noise", "sample"],
        &["hops", "gen"],
        &["heom", "run"],
        &["train"],
        &["validate"],
        &["apps", "operators"],
        &["apps", "density"],
        &["apps", "spectrum"],
        &["apps", "maps"],
        &["apps", "ttm"],
        &["repro"],
    ];
    for p in paths {
        let mut args = p.to_vec();
        args.push("--help");
        let o = nmqd(&args);
        assert_eq!(o.status.code(), Some(0), "{p:?}");
        assert!(String::from_utf8_lossy(&o.stdout).contains("Usage"), "{p:?}");
    }
    assert_eq!(nmqd(&["--version"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_64_with_json() {
    let o = nmqd(&["bath", "decompose", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(64));
    assert_eq!(stderr_json(&o)["error"], "usage");
    let o = nmqd(&["heom"]);
    assert_eq!(o.status.code(), Some(64));
}

#[test]
fn missing_input_exits_2_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.json");
    let out = dir.path().join("rho.csv");
    let o = nmqd(&["heom", "run", "--modes", missing.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr_json(&o);
    assert_eq!(e["error"], "io");
    assert_eq!(e["path"], missing.to_str().unwrap());
    assert!(!out.exists());
}

#[test]
fn domain_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let modes = decompose(dir.path(), "m.json", "4");
    let out = dir.path().join("s.csv");
    let o = nmqd(&[
        "apps", "spectrum", "--heom-modes", modes.to_str().unwrap(), "--steps", "20", "--corr-mode", "paper-literal",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_json(&o)["error"], "domain");
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[global]\nbase_seed = 3\n\n[bath.decompose]\nsdf = \"drude\"\nlambda = 0.1\ngamma = 1.0\nbeta = 1.0\npoles = 6\n").unwrap();
    let out = dir.path().join("m.json");
    let c = cfg.to_str().unwrap();
    let o = nmqd(&["--config", c, "bath", "decompose", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout_json(&o)["K"], 7);
    let o = nmqd(&["--config", c, "bath", "decompose", "--poles", "2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(stdout_json(&o)["K"], 3);
    let manifest: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("m.json.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["global"]["base_seed"], 3);
}

#[test]
fn manifests_rerun_identically_and_detect_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let modes = decompose(dir.path(), "m.json", "10");
    let noise = dir.path().join("noise.nmqd");
    let o = nmqd(&[
        "--threads", "1", "noise", "sample", "--modes", modes.to_str().unwrap(), "--steps", "16", "--count", "6", "--seed", "4",
        "--out", noise.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = dir.path().join("noise.nmqd.manifest.json");
    let m: Value = serde_json::from_str(&fs::read_to_string(&manifest).unwrap()).unwrap();
    assert_eq!(m["outputs"][noise.to_str().unwrap()], hash(&noise));
    assert_eq!(m["inputs"][modes.to_str().unwrap()], hash(&modes));
    assert!(m.get("elapsed_seconds").is_none());

    let before = hash(&modes);
    let o = nmqd(&["repro", "--manifest", manifest.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout_json(&o)["identical"], true);
    assert_eq!(hash(&modes), before);

    fs::write(&modes, fs::read_to_string(&modes).unwrap() + " ").unwrap();
    let o = nmqd(&["repro", "--manifest", manifest.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn thread_count_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.json");
    let o = Command::new(env!("CARGO_BIN_EXE_nmqd"))
        .args(["bath", "decompose", "--sdf", "drude", "--lambda", "0.1", "--gamma", "1", "--beta", "1", "--poles", "1"])
        .args(["--out", out.to_str().unwrap()])
        .env("NMQD_THREADS", "2")
        .output()
        .unwrap();
    assert!(o.status.success());
    let m: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("m.json.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["global"]["threads"], 2);
}

#[test]
fn small_pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let modes = decompose(dir.path(), "m.json", "4");
    let noise_modes = decompose(dir.path(), "nm.json", "10");
    let run = |args: &[&str]| {
        let o = nmqd(args);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        stdout_json(&o)
    };
    let (m, nm) = (modes.to_str().unwrap(), noise_modes.to_str().unwrap());
    run(&["noise", "sample", "--modes", nm, "--steps", "32", "--count", "12", "--seed", "2", "--out", &d("z.nmqd")]);
    let mut gen = vec!["hops", "gen", "--modes", m, "--noise", &d("z.nmqd")].into_iter().map(String::from).collect::<Vec<_>>();
    for init in ["1", "2", "+1", "-1", "+i", "-i"] {
        gen.extend(["--init".into(), init.into()]);
    }
    gen.extend(["--kmax", "2", "--out", &d("data.nmqd")].map(String::from));
    let g = run(&gen.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(g["records"], 72);
    let t = run(&["train", "--data", &d("data.nmqd"), "--n-modes", "8", "--epochs", "2", "--batch", "8", "--out", &d("model.ckpt")]);
    assert_eq!(t["epochs"], 2);
    let mean = run(&["validate", "--model", &d("model.ckpt"), "--data", &d("data.nmqd"), "--out", &d("mean.csv")]);
    let max = run(&["validate", "--model", &d("model.ckpt"), "--data", &d("data.nmqd"), "--reducer", "max", "--out", &d("max.csv")]);
    assert!(max["time_average"].as_f64().unwrap() >= mean["time_average"].as_f64().unwrap());
    run(&["apps", "operators", "--model", &d("model.ckpt"), "--data", &d("data.nmqd"), "--out", &d("ops.nmqd")]);
    run(&["apps", "density", "--ops", &d("ops.nmqd"), "--init", "+i", "--out", &d("rho.csv")]);
    let s = run(&["apps", "spectrum", "--data", &d("data.nmqd"), "--out", &d("spec.csv")]);
    assert!(s["peak"].is_number());
    run(&["apps", "maps", "--data", &d("data.nmqd"), "--out", &d("maps.nmqd")]);
    let ttm = run(&["apps", "ttm", "--maps", &d("maps.nmqd"), "--cutoff", "16", "--tmax", "1", "--out", &d("ttm.csv")]);
    assert!(ttm["window_error"].as_f64().unwrap() < 1e-10);
    let rho = fs::read_to_string(d("rho.csv")).unwrap();
    assert!(rho.lines().any(|l| l.starts_with("t,re_11,im_11")));
    for name in ["data.nmqd", "model.ckpt", "ttm.csv"] {
        let o = nmqd(&["repro", "--manifest", &d(&format!("{name}.manifest.json"))]);
        assert!(o.status.success(), "{name}: {}", String::from_utf8_lossy(&o.stderr));
    }
}
