use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_humanrecon"));
    c.env_remove("HUMANRECON_LOG");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout_json(o: &Output) -> Value {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

fn stderr_json(o: &Output) -> Value {
    assert!(!o.status.success());
    serde_json::from_slice(&o.stderr).unwrap_or_else(|_| panic!("not JSON: {}", String::from_utf8_lossy(&o.stderr)))
}

#[test]
fn help_lists_subcommands() {
    let o = run(&["--help"]);
    assert!(o.status.success());
    let s = String::from_utf8_lossy(&o.stdout);
    for c in ["datagen", "train", "reconstruct", "eval", "synth"] {
        assert!(s.contains(c), "{c} missing from:\n{s}");
    }
}

#[test]
fn unknown_config_key_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("cfg.json");
    fs::write(&p, r#"{"recon": {"field": {"resolutoin": 64}}}"#).unwrap();
    let o = run(&["--config", p.to_str().unwrap(), "--dump-config"]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr_json(&o);
    assert_eq!(e["error"]["kind"], "config");
    let msg = e["error"]["message"].as_str().unwrap();
    assert!(msg.contains("resolutoin") && msg.contains("recon.field"), "{msg}");
}

#[test]
fn usage_and_runtime_errors_are_json() {
    let o = run(&["frobnicate"]);
    assert_eq!(stderr_json(&o)["error"]["kind"], "usage");
    let o = run(&["eval", "--pred", "/nonexistent/a.ply", "--gt", "/nonexistent/b.ply"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_json(&o)["error"]["kind"], "io");
    let o = run(&["train"]);
    assert!(stderr_json(&o)["error"]["message"].as_str().unwrap().contains("paths.dataset"));
}

#[test]
fn dump_config_is_complete_and_reloadable() {
    let o = run(&["--dump-config", "--seed", "9"]);
    let v = stdout_json(&o);
    assert_eq!(v["seed"], 9);
    for k in ["paths", "datagen", "network", "train", "recon", "eval", "synthetic", "ablation"] {
        assert!(v.get(k).is_some(), "{k}");
    }
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("cfg.json");
    fs::write(&p, serde_json::to_string(&v).unwrap()).unwrap();
    assert_eq!(stdout_json(&run(&["--config", p.to_str().unwrap(), "--dump-config"])), v);
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let cfg = json!({
        "seed": 5,
        "synthetic": {"resolution": 48, "body_resolution": 32},
        "datagen": {"views": 2, "view": {"width": 32, "height": 32}, "sampling": {"count": 3000}},
        "network": {
            "feature_dim": 4, "encoder_channels": [4, 4], "encoder_strides": [1, 2, 1],
            "normal_channels": [4], "geometry_width": 16, "geometry_layers": 3, "geometry_skips": [3],
            "color_width": 8, "color_layers": 2, "color_skips": []
        },
        "train": {"normal_steps": 3, "geometry_steps": 20, "color_steps": 3, "points_per_step": 128, "log_every": 0},
        "recon": {"field": {"resolution": 24}, "align": {"restarts": 1, "iterations": 30, "silhouette_size": 64}},
        "eval": {"samples": 2000}
    });
    let p = dir.join("run.json");
    fs::write(&p, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    p
}

#[test]
fn end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let t = |p: &str| tmp.path().join(p).to_str().unwrap().to_string();
    let cfg = small_config(tmp.path());
    let c = cfg.to_str().unwrap();

    stdout_json(&run(&["--config", c, "synth", "--out", &t("src"), "--name", "fig"]));
    let d1 = stdout_json(&run(&["--config", c, "--workers", "1", "datagen", "--scans", &t("src/scans"), "--bodies", &t("src/bodies"), "--out", &t("ds")]));
    let d2 = stdout_json(&run(&["--config", c, "--workers", "2", "datagen", "--scans", &t("src/scans"), "--bodies", &t("src/bodies"), "--out", &t("ds2")]));
    assert_eq!(d1["sha256"], d2["sha256"]);
    assert_eq!(d1["scans"][0]["pairs"], 2);

    let tr = stdout_json(&run(&["--config", c, "train", "--dataset", &t("ds"), "--checkpoint", &t("model/net.ckpt")]));
    assert_eq!(tr["completed"], true);
    assert!(tmp.path().join("model/net.ckpt.report.json").is_file());

    let pair = t("ds/views/fig/pair_000");
    let recon = |out: &str, workers: &str| {
        stdout_json(&run(&[
            "--config", c, "--workers", workers, "reconstruct", "--checkpoint", &t("model/net.ckpt"),
            "--pair", &pair, "--body", &t("ds/bodies/fig.ply"), "--body-joints", &t("ds/bodies/fig.joints.json"),
            "--out", &t(out),
        ]))
    };
    let r1 = recon("rec1", "1");
    let r2 = recon("rec2", "2");
    assert_eq!(r1["sha256"], r2["sha256"]);
    assert_eq!(r1["mirrored_back"], false);
    let report: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("rec1/report.json")).unwrap()).unwrap();
    assert!(report["alignment"]["scale"].is_number(), "{report}");
    assert!(report["timings"]["field_s"].is_number());

    let e = stdout_json(&run(&[
        "--config", c, "eval", "--pred", &t("rec1/mesh.ply"), "--gt", &t("ds/scans/fig.ply"),
        "--out", &t("metrics.json"), "--ssim", &format!("{pair}/front.png"), &format!("{pair}/back.png"),
    ]));
    let m = &e["metrics"];
    assert!(m["cd_p2s"].as_f64().unwrap() >= 0.0 && (0.0..=1.0).contains(&m["fscore"].as_f64().unwrap()));
    let doc: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("metrics.json")).unwrap()).unwrap();
    assert_eq!(doc["pred"]["sha256"], r1["sha256"]);
    assert!(doc["ssim"]["value"].as_f64().unwrap() <= 1.0);

    fs::write(tmp.path().join("batch.csv"), "pred_path,gt_path\nrec1/mesh.ply,ds/scans/fig.ply\nmissing.ply,ds/scans/fig.ply\n").unwrap();
    let b = stdout_json(&run(&["--config", c, "eval", "--manifest", &t("batch.csv"), "--out", &t("batch.json")]));
    assert_eq!(b["failed"], 1);
}
