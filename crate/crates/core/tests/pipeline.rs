use std::fs;
use std::path::{Path, PathBuf};

use humanrecon::net::{load_checkpoint, NetworkConfig};
use humanrecon::raster::ViewSetup;
use humanrecon::recon::{reconstruct, FieldOptions, ReconConfig, ReconInputs};
use humanrecon::synthetic::{synthetic_human, write_synthetic, SyntheticConfig};
use humanrecon::trainer::dataset::{generate_dataset, load_dataset, DatagenConfig};
use humanrecon::trainer::{state_path, train, SamplingConfig, TrainConfig, TrainOptions};
use humanrecon::Error;

fn files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn source(dir: &Path) {
    let h = synthetic_human(&SyntheticConfig {
        resolution: 48,
        body_resolution: 32,
        ..Default::default()
    })
    .unwrap();
    fs::create_dir_all(dir.join("scans")).unwrap();
    fs::create_dir_all(dir.join("bodies")).unwrap();
    write_synthetic(&h, dir, "toy").unwrap();
}

fn datagen_cfg() -> DatagenConfig {
    DatagenConfig {
        views: 2,
        view: ViewSetup::square(32),
        sampling: SamplingConfig {
            count: 3000,
            ..Default::default()
        },
        ..Default::default()
    }
}

fn tiny_net() -> NetworkConfig {
    NetworkConfig {
        feature_dim: 4,
        encoder_channels: vec![4, 4],
        encoder_strides: vec![1, 2, 1],
        normal_channels: vec![4],
        geometry_width: 16,
        geometry_layers: 3,
        geometry_skips: vec![3],
        color_width: 8,
        color_layers: 2,
        color_skips: vec![],
        ..NetworkConfig::default()
    }
}

fn tiny_train() -> TrainConfig {
    TrainConfig {
        normal_steps: 4,
        geometry_steps: 40,
        color_steps: 4,
        points_per_step: 128,
        learning_rate: 5e-3,
        log_every: 0,
        ..Default::default()
    }
}

#[test]
fn datagen_train_reconstruct() {
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("src");
    source(&src);
    fs::write(src.join("scans/broken.ply"), b"ply\nnot really").unwrap();

    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let rep = generate_dataset(&src.join("scans"), Some(&src.join("bodies")), &a, &datagen_cfg(), 7).unwrap();
    assert_eq!(rep.manifest.scans.len(), 1);
    assert_eq!(rep.failures.len(), 1, "the broken scan is reported, not fatal");
    assert_eq!(rep.manifest.scans[0].pairs.len(), 2);
    for p in ["front.png", "back.png", "front_normal.mci", "mask.png", "body_uv.mci", "camera.json", "joints.json"] {
        assert!(a.join("views/toy/pair_001").join(p).is_file(), "{p}");
    }
    // same seed → identical bytes, regardless of worker count
    let pool = rayon::ThreadPoolBuilder::new().num_threads(2).build().unwrap();
    pool.install(|| generate_dataset(&src.join("scans"), Some(&src.join("bodies")), &b, &datagen_cfg(), 7)).unwrap();
    let (fa, fb) = (files(&a), files(&b));
    assert_eq!(fa, fb);
    for f in &fa {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{}", f.display());
    }

    // full run vs interrupted + resumed run
    let net = tiny_net();
    let cfg = tiny_train();
    let full = tmp.path().join("full/model.ckpt");
    let report = train(&net, &cfg, &a, &full, 3, &TrainOptions::default()).unwrap();
    assert!(report.completed);
    let geo = &report.phases[1].loss;
    let head: f32 = geo[..8].iter().sum::<f32>() / 8.0;
    let tail: f32 = geo[geo.len() - 8..].iter().sum::<f32>() / 8.0;
    assert!(tail < head, "geometry loss {head} → {tail}");

    let part = tmp.path().join("part/model.ckpt");
    let stop = TrainOptions {
        resume: false,
        stop_after: Some(21),
    };
    assert!(!train(&net, &cfg, &a, &part, 3, &stop).unwrap().completed);
    let resume = TrainOptions {
        resume: true,
        stop_after: None,
    };
    assert!(train(&net, &cfg, &a, &part, 3, &resume).unwrap().completed);
    assert_eq!(fs::read(&full).unwrap(), fs::read(&part).unwrap());
    assert_eq!(fs::read(state_path(&full)).unwrap(), fs::read(state_path(&part)).unwrap());

    // reconstruct from the first pair with a mirrored back view
    let model = load_checkpoint(&full, Some(&net)).unwrap();
    let (_, scans) = load_dataset(&a, true).unwrap();
    let pair = &scans[0].pairs[0];
    let dir = a.join("views/toy/pair_000");
    let front = humanrecon::raster::MultiChannelImage::load_png(&dir.join("front.png")).unwrap();
    let cams: humanrecon::trainer::dataset::PairCameras =
        humanrecon::trainer::dataset::read_json(&dir.join("camera.json")).unwrap();
    let inputs = ReconInputs {
        front,
        back: None,
        front_normals: None,
        back_normals: None,
        front_cam: cams.front,
        back_cam: cams.back,
        body: Some(scans[0].body.as_ref().unwrap().mesh().clone()),
        mask: None,
        joints: vec![],
        regressor: vec![],
    };
    let rc = ReconConfig {
        field: FieldOptions {
            resolution: 24,
            ..Default::default()
        },
        align_body: false,
        ..Default::default()
    };
    let (m1, r1) = reconstruct(&model, &inputs, &rc).unwrap();
    let (m2, _) = reconstruct(&model, &inputs, &rc).unwrap();
    assert!(r1.mirrored_back);
    assert_eq!(m1, m2);
    assert_eq!(pair.id, "pair_000");
}

#[test]
fn missing_dataset_files_are_listed() {
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("src");
    source(&src);
    let out = tmp.path().join("ds");
    generate_dataset(&src.join("scans"), Some(&src.join("bodies")), &out, &datagen_cfg(), 1).unwrap();
    fs::remove_file(out.join("views/toy/pair_000/front.png")).unwrap();
    fs::remove_file(out.join("samples/toy.bin")).unwrap();
    match load_dataset(&out, true) {
        Err(Error::MissingFiles(list)) => {
            assert_eq!(list.len(), 2, "{list:?}");
        }
        other => panic!("expected MissingFiles, got {other:?}"),
    }
}
