use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use humanrecon::config::RunConfig;
use humanrecon::eval::{evaluate_batch, evaluate_files, sha256_file, ssim};
use humanrecon::geom::{load_mesh, save_mesh};
use humanrecon::net::load_checkpoint;
use humanrecon::raster::{make_view_pair, MultiChannelImage, ViewSetup};
use humanrecon::recon::{reconstruct, Joint2d, JointRef, ReconInputs};
use humanrecon::synthetic::{synthetic_human, write_synthetic};
use humanrecon::trainer::dataset::{generate_dataset, read_json, PairCameras};
use humanrecon::trainer::{state_path, train, TrainOptions};
use humanrecon::{Error, Result};

const LOG_ENV: &str = "HUMANRECON_LOG";

/// Single-view textured human reconstruction: dataset generation, training,
/// reconstruction and evaluation.
///
/// Every setting lives in one JSON config (see --dump-config); flags override
/// the corresponding config entries. Log level is read from HUMANRECON_LOG.
#[derive(Parser, Debug)]
#[command(name = "humanrecon", version)]
struct Cli {
    /// JSON run configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all logical cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print the effective configuration with every default and exit.
    #[arg(long)]
    dump_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render view pairs and draw SDF samples for a directory of scans.
    Datagen {
        #[arg(long)]
        scans: Option<PathBuf>,
        #[arg(long)]
        bodies: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Evenly spaced view pairs per scan.
        #[arg(long)]
        views: Option<usize>,
    },
    /// Train the normal, geometry and color networks.
    Train {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Continue from the checkpoint's saved optimizer state.
        #[arg(long)]
        resume: bool,
        /// Stop after this many optimizer steps (resumable).
        #[arg(long)]
        stop_after: Option<usize>,
    },
    /// Reconstruct a colored mesh from a front image (and optional back).
    Reconstruct(ReconArgs),
    /// Score a predicted mesh against ground truth, or a manifest of pairs.
    Eval {
        #[arg(long)]
        pred: Option<PathBuf>,
        #[arg(long)]
        gt: Option<PathBuf>,
        /// CSV with `pred_path,gt_path` rows.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Where to write metrics.json.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also report SSIM between two images.
        #[arg(long, num_args = 2, value_names = ["A", "B"])]
        ssim: Option<Vec<PathBuf>>,
        /// Squared instead of plain distances in the Chamfer terms.
        #[arg(long)]
        squared: bool,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Write the procedural clothed test figure (scan, body, joints).
    Synth {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "synthetic")]
        name: String,
    },
}

#[derive(Args, Debug)]
struct ReconArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// View-pair directory supplying defaults for front/back/camera/mask/joints.
    #[arg(long)]
    pair: Option<PathBuf>,
    #[arg(long)]
    front: Option<PathBuf>,
    #[arg(long)]
    back: Option<PathBuf>,
    #[arg(long)]
    mask: Option<PathBuf>,
    /// 2D joints JSON: `[{name, u, v, confidence}]`.
    #[arg(long)]
    joints: Option<PathBuf>,
    #[arg(long)]
    camera: Option<PathBuf>,
    #[arg(long)]
    body: Option<PathBuf>,
    /// Body joint vertices JSON: `[{name, vertex}]`.
    #[arg(long)]
    body_joints: Option<PathBuf>,
    #[arg(long)]
    front_normals: Option<PathBuf>,
    #[arg(long)]
    back_normals: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    resolution: Option<usize>,
    /// Use the mirrored front instead of a back image.
    #[arg(long)]
    mirror: bool,
}

fn set<T>(slot: &mut Option<T>, v: Option<T>) {
    if v.is_some() {
        *slot = v;
    }
}

fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::Config(format!("paths.{key} is required (flag --{})", key.replace('_', "-"))))
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    if let Some(d) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(d).map_err(|e| Error::Io {
            path: d.to_path_buf(),
            source: e,
        })?;
    }
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    fs::write(path, s).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// SHA-256 over the sorted `(relative path, file hash)` list of a directory.
fn dir_digest(root: &Path) -> Result<String> {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for e in walkdir::WalkDir::new(root).sort_by_file_name() {
        let e = e.map_err(|e| Error::Format(e.to_string()))?;
        if e.file_type().is_file() {
            let rel = e.path().strip_prefix(root).unwrap_or(e.path());
            h.update(rel.to_string_lossy().as_bytes());
            h.update([0]);
            h.update(sha256_file(e.path())?.as_bytes());
            h.update([b'\n']);
        }
    }
    Ok(hex::encode(h.finalize()))
}

fn merge(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    set(&mut cfg.workers, cli.workers);
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let p = &mut cfg.paths;
    match &cli.command {
        Some(Command::Datagen { scans, bodies, out, views }) => {
            set(&mut p.scans, scans.clone());
            set(&mut p.bodies, bodies.clone());
            set(&mut p.dataset, out.clone());
            if let Some(v) = views {
                cfg.datagen.views = *v;
                cfg.datagen.azimuths = None;
            }
        }
        Some(Command::Train { dataset, checkpoint, .. }) => {
            set(&mut p.dataset, dataset.clone());
            set(&mut p.checkpoint, checkpoint.clone());
        }
        Some(Command::Reconstruct(a)) => {
            set(&mut p.checkpoint, a.checkpoint.clone());
            set(&mut p.pair, a.pair.clone());
            set(&mut p.front, a.front.clone());
            set(&mut p.back, a.back.clone());
            set(&mut p.mask, a.mask.clone());
            set(&mut p.joints, a.joints.clone());
            set(&mut p.camera, a.camera.clone());
            set(&mut p.body, a.body.clone());
            set(&mut p.body_joints, a.body_joints.clone());
            set(&mut p.front_normals, a.front_normals.clone());
            set(&mut p.back_normals, a.back_normals.clone());
            set(&mut p.output, a.out.clone());
            if let Some(r) = a.resolution {
                cfg.recon.field.resolution = r;
            }
            cfg.ablation.mirror_hallucination |= a.mirror;
        }
        Some(Command::Eval {
            pred,
            gt,
            manifest,
            out,
            squared,
            samples,
            ..
        }) => {
            set(&mut p.pred, pred.clone());
            set(&mut p.gt, gt.clone());
            set(&mut p.manifest, manifest.clone());
            set(&mut p.output, out.clone());
            cfg.eval.squared |= squared;
            if let Some(n) = samples {
                cfg.eval.samples = *n;
            }
        }
        Some(Command::Synth { out, .. }) => set(&mut p.output, out.clone()),
        None => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_datagen(cfg: &RunConfig) -> Result<Value> {
    let scans = required(&cfg.paths.scans, "scans")?;
    let out = required(&cfg.paths.dataset, "dataset")?;
    let rep = generate_dataset(scans, cfg.paths.bodies.as_deref(), out, &cfg.datagen, cfg.seed)?;
    if rep.manifest.scans.is_empty() {
        return Err(Error::Format(format!(
            "no scan could be processed: {}",
            rep.failures.iter().map(|f| format!("{}: {}", f.path.display(), f.error)).collect::<Vec<_>>().join("; ")
        )));
    }
    let report = json!({
        "command": "datagen",
        "seed": cfg.seed,
        "dataset": out,
        "scans": rep.manifest.scans.iter().map(|s| json!({"name": s.name, "pairs": s.pairs.len()})).collect::<Vec<_>>(),
        "failures": rep.failures,
        "sha256": dir_digest(out)?,
    });
    Ok(report)
}

fn cmd_train(cfg: &RunConfig, resume: bool, stop_after: Option<usize>) -> Result<Value> {
    let dataset = required(&cfg.paths.dataset, "dataset")?;
    let ckpt = required(&cfg.paths.checkpoint, "checkpoint")?;
    if let Some(d) = ckpt.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(d).map_err(|e| Error::Io {
            path: d.to_path_buf(),
            source: e,
        })?;
    }
    let net = cfg.effective_network();
    let rep = train(&net, &cfg.train, dataset, ckpt, cfg.seed, &TrainOptions { resume, stop_after })?;
    let final_loss: Vec<Option<f32>> = rep.phases.iter().map(|p| p.loss.last().copied()).collect();
    let report = json!({
        "command": "train",
        "seed": cfg.seed,
        "checkpoint": ckpt,
        "completed": rep.completed,
        "parameters": rep.parameters,
        "final_loss": final_loss,
        "sha256": sha256_file(ckpt)?,
        "state_sha256": sha256_file(&state_path(ckpt))?,
    });
    let mut full = report.clone();
    full["phases"] = serde_json::to_value(&rep.phases)?;
    let mut rp = ckpt.as_os_str().to_owned();
    rp.push(".report.json");
    write_json(Path::new(&rp), &full)?;
    Ok(report)
}

fn existing(p: PathBuf) -> Option<PathBuf> {
    p.is_file().then_some(p)
}

fn cmd_reconstruct(cfg: &RunConfig) -> Result<Value> {
    let paths = &cfg.paths;
    let ckpt = required(&paths.checkpoint, "checkpoint")?;
    let out = required(&paths.output, "output")?;
    let pair = paths.pair.as_deref();
    let from_pair = |own: &Option<PathBuf>, file: &str| own.clone().or_else(|| pair.and_then(|d| existing(d.join(file))));

    let front_path = from_pair(&paths.front, "front.png")
        .ok_or_else(|| Error::Config("paths.front is required (flag --front or --pair)".into()))?;
    let front = MultiChannelImage::load_png(&front_path)?;
    let back = match from_pair(&paths.back, "back.png") {
        Some(p) if !cfg.ablation.mirror_hallucination => Some(MultiChannelImage::load_png(&p)?),
        _ => None,
    };
    let (front_cam, back_cam) = match from_pair(&paths.camera, "camera.json") {
        Some(p) => {
            let c: PairCameras = read_json(&p)?;
            (c.front, c.back)
        }
        None => make_view_pair(
            0.0,
            &ViewSetup {
                width: front.width(),
                height: front.height(),
                ..cfg.datagen.view.clone()
            },
        )?,
    };
    let mask = from_pair(&paths.mask, "mask.png").map(|p| MultiChannelImage::load_mask_png(&p)).transpose()?;
    let joints: Vec<Joint2d> = from_pair(&paths.joints, "joints.json").map(|p| read_json(&p)).transpose()?.unwrap_or_default();
    let regressor: Vec<JointRef> = paths.body_joints.as_deref().map(read_json).transpose()?.unwrap_or_default();
    let body = paths.body.as_deref().map(load_mesh).transpose()?;
    let load_mci = |p: &Option<PathBuf>| p.as_deref().map(MultiChannelImage::load_mci).transpose();

    let mut model = load_checkpoint(ckpt, None)?;
    if cfg.ablation.no_body_embedding {
        model.config.use_body_embedding = false;
    }
    if cfg.ablation.no_normal_guidance {
        model.config.use_normal_guidance = false;
    }
    if model.config.use_body_embedding && body.is_none() {
        return Err(Error::Config(
            "the model uses the body embedding: pass --body (or set ablation.no_body_embedding)".into(),
        ));
    }
    let inputs = ReconInputs {
        front,
        back,
        front_normals: load_mci(&paths.front_normals)?,
        back_normals: load_mci(&paths.back_normals)?,
        front_cam,
        back_cam,
        body,
        mask,
        joints,
        regressor,
    };
    let (mesh, rep) = reconstruct(&model, &inputs, &cfg.recon)?;
    fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    let mesh_path = out.join("mesh.ply");
    save_mesh(&mesh, &mesh_path)?;
    let summary = json!({
        "command": "reconstruct",
        "seed": cfg.seed,
        "mesh": mesh_path,
        "vertices": rep.vertices,
        "faces": rep.faces,
        "mirrored_back": rep.mirrored_back,
        "sha256": sha256_file(&mesh_path)?,
    });
    let mut report = serde_json::to_value(&rep)?;
    report["mesh"] = json!({"path": mesh_path, "sha256": summary["sha256"]});
    report["checkpoint"] = json!({"path": ckpt, "sha256": sha256_file(ckpt)?});
    report["config"] = serde_json::to_value(&cfg.recon)?;
    write_json(&out.join("report.json"), &report)?;
    Ok(summary)
}

fn cmd_eval(cfg: &RunConfig, ssim_pair: Option<&[PathBuf]>) -> Result<Value> {
    let out = cfg.paths.output.clone().unwrap_or_else(|| PathBuf::from("metrics.json"));
    let mut doc = match (&cfg.paths.manifest, &cfg.paths.pred, &cfg.paths.gt) {
        (Some(m), None, None) => {
            let entries = evaluate_batch(m, &cfg.eval)?;
            let failed = entries.iter().filter(|e| e.error.is_some()).count();
            json!({"manifest": m, "config": cfg.eval, "failed": failed, "entries": entries})
        }
        (None, Some(p), Some(g)) => serde_json::to_value(evaluate_files(p, g, &cfg.eval)?)?,
        _ => {
            return Err(Error::Config(
                "eval needs either --pred and --gt, or --manifest".into(),
            ))
        }
    };
    if let Some([a, b]) = ssim_pair {
        let v = ssim(&MultiChannelImage::load_png(a)?, &MultiChannelImage::load_png(b)?)?;
        doc["ssim"] = json!({"a": a, "b": b, "value": v});
    }
    write_json(&out, &doc)?;
    let mut summary = json!({"command": "eval", "output": out, "sha256": sha256_file(&out)?});
    if let Some(m) = doc.get("metrics") {
        summary["metrics"] = m.clone();
    }
    if let Some(f) = doc.get("failed") {
        summary["failed"] = f.clone();
    }
    Ok(summary)
}

fn cmd_synth(cfg: &RunConfig, name: &str) -> Result<Value> {
    let out = required(&cfg.paths.output, "output")?;
    let human = synthetic_human(&cfg.synthetic)?;
    for d in ["scans", "bodies"] {
        fs::create_dir_all(out.join(d)).map_err(|e| Error::Io {
            path: out.join(d),
            source: e,
        })?;
    }
    write_synthetic(&human, out, name)?;
    Ok(json!({
        "command": "synth",
        "scan": out.join(format!("scans/{name}.ply")),
        "body": out.join(format!("bodies/{name}.ply")),
        "sha256": dir_digest(out)?,
    }))
}

fn run(cli: Cli) -> Result<Value> {
    let cfg = merge(&cli)?;
    if cli.dump_config {
        return Ok(serde_json::to_value(&cfg)?);
    }
    if let Some(n) = cfg.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("workers: {e}")))?;
    }
    log::info!("seed {} on {} threads", cfg.seed, rayon::current_num_threads());
    match &cli.command {
        Some(Command::Datagen { .. }) => cmd_datagen(&cfg),
        Some(Command::Train { resume, stop_after, .. }) => cmd_train(&cfg, *resume, *stop_after),
        Some(Command::Reconstruct(_)) => cmd_reconstruct(&cfg),
        Some(Command::Eval { ssim, .. }) => cmd_eval(&cfg, ssim.as_deref()),
        Some(Command::Synth { name, .. }) => cmd_synth(&cfg, name),
        None => Err(Error::Config("no subcommand given (see --help)".into())),
    }
}

fn fail(kind: &str, message: &str, code: u8) -> ExitCode {
    eprintln!("{}", json!({"error": {"kind": kind, "message": message}}));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.render().to_string().trim(), 2),
    };
    match run(cli) {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("json"));
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.kind(), &e.to_string(), if matches!(e, Error::Config(_)) { 2 } else { 1 }),
    }
}
