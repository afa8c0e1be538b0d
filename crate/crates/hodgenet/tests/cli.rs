use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hodgenet::checkpoint;
use hodgenet::config::TaskName;
use hodgenet::dataset::{Entry, Manifest};
use hodgenet::io::{save_mesh, write_file, write_labels};
use hodgenet_core::mesh::{normalize, shapes};

fn hodgenet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hodgenet")).args(args).env("RUST_LOG", "warn").output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

const SMALL_SEGMENTATION: &str = "epochs = 2\n[task]\nkind = \"segmentation\"\nclasses = 2\n[model]\nwidth = 8\nn = 4\nm = 6\nextra = 6\nhead_width = 8\n[optimizer]\nbatch_size = 2\nlr = 1e-3\n";

/// Three labeled spheres, a manifest and a small configuration.
fn segmentation_fixture(dir: &Path) -> (PathBuf, PathBuf) {
    let mut manifest = Manifest { task: TaskName::Segmentation, samples: Vec::new() };
    for i in 0..3u64 {
        let mesh = normalize(&shapes::jitter(&shapes::icosphere(1), 0.03, i)).unwrap();
        let labels: Vec<usize> = (0..mesh.num_triangles()).map(|t| usize::from(mesh.triangle_centroid(t)[2] > 0.0)).collect();
        let (m, l) = (PathBuf::from(format!("meshes/{i}.obj")), PathBuf::from(format!("labels/{i}.txt")));
        save_mesh(&dir.join(&m), &mesh).unwrap();
        write_file(&dir.join(&l), write_labels(&labels)).unwrap();
        manifest.samples.push(Entry { mesh: m, labels: Some(l), class: None, theta: None });
    }
    let manifest_path = dir.join("manifest.toml");
    write_file(&manifest_path, manifest.to_toml()).unwrap();
    let config = dir.join("config.toml");
    write_file(&config, SMALL_SEGMENTATION).unwrap();
    (manifest_path, config)
}

#[test]
fn train_eval_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, config) = segmentation_fixture(dir.path());
    let run = dir.path().join("run");
    let out = hodgenet(&["train", "--config", &s(&config), "--train", &s(&manifest), "--out", &s(&run), "--threads", "1"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let metrics = std::fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3);
    assert!(metrics.starts_with("epoch,phase,train_loss"));
    for f in ["best.ckpt", "last.ckpt", "config.toml"] {
        assert!(run.join(f).exists(), "{f}");
    }

    let ckpt = run.join("last.ckpt");
    let bytes = std::fs::read(&ckpt).unwrap();
    let loaded = checkpoint::load(&ckpt).unwrap();
    assert_eq!(loaded.epoch, 2);
    assert_eq!(checkpoint::encode(&loaded.config, &loaded.net, loaded.epoch), bytes);

    let per_sample = dir.path().join("eval.csv");
    let out = hodgenet(&["eval", "--checkpoint", &s(&ckpt), "--manifest", &s(&manifest), "--out", &s(&per_sample), "--threads", "1"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = String::from_utf8(out.stdout).unwrap();
    assert!(summary.starts_with("loss,accuracy,"));
    assert_eq!(std::fs::read_to_string(&per_sample).unwrap().lines().count(), 4);

    let labels = dir.path().join("pred.txt");
    let out = hodgenet(&["predict", "--checkpoint", &s(&ckpt), "--mesh", &s(&dir.path().join("meshes/0.obj")), "--out", &s(&labels)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let predicted = std::fs::read_to_string(&labels).unwrap();
    assert_eq!(predicted.lines().count(), shapes::icosphere(1).num_triangles());
    assert!(predicted.lines().all(|l| l == "0" || l == "1"));
}

#[test]
fn dihedral_flow_predicts_an_angle() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_eq!(code(&hodgenet(&["make-dihedral", "--count", "6", "--seed", "3", "--out", &s(&data)])), 0);
    assert_eq!(std::fs::read_dir(data.join("meshes")).unwrap().count(), 6);
    let config = dir.path().join("c.toml");
    write_file(&config, "epochs = 1\n[task]\nkind = \"dihedral\"\n[model]\nwidth = 8\nn = 4\n").unwrap();
    let run = dir.path().join("run");
    let out = hodgenet(&["train", "--config", &s(&config), "--train", &s(&data.join("manifest.toml")), "--out", &s(&run), "--threads", "1"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = hodgenet(&["predict", "--checkpoint", &s(&run.join("best.ckpt")), "--mesh", &s(&data.join("meshes/0000.obj"))]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let theta: f64 = text.split_whitespace().next().unwrap().parse().unwrap();
    assert!((0.0..std::f64::consts::TAU).contains(&theta), "{text}");
}

#[test]
fn usage_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.toml");
    write_file(&empty, "task = \"segmentation\"\n").unwrap();
    let out = hodgenet(&["train", "--train", &s(&empty), "--out", &s(&dir.path().join("run"))]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no samples"));

    let config = dir.path().join("bad.toml");
    write_file(&config, "[model]\nwidht = 3\n").unwrap();
    assert_eq!(code(&hodgenet(&["train", "--config", &s(&config), "--dump-config"])), 2);
    assert_eq!(code(&hodgenet(&["train", "--no-such-flag"])), 2);
    assert_eq!(code(&hodgenet(&["make-dihedral", "--count", "0", "--out", &s(dir.path())])), 2);
    assert_eq!(code(&hodgenet(&["train"])), 2);
}

#[test]
fn task_mismatch_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, _) = segmentation_fixture(dir.path());
    let config = dir.path().join("d.toml");
    write_file(&config, "[task]\nkind = \"dihedral\"\n").unwrap();
    let out = hodgenet(&["train", "--config", &s(&config), "--train", &s(&manifest), "--out", &s(&dir.path().join("run"))]);
    assert_eq!(code(&out), 2);
}

#[test]
fn data_errors_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, config) = segmentation_fixture(dir.path());
    std::fs::remove_file(dir.path().join("meshes/1.obj")).unwrap();
    let out = hodgenet(&["train", "--config", &s(&config), "--train", &s(&manifest), "--out", &s(&dir.path().join("run"))]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));

    write_file(&dir.path().join("labels/0.txt"), "0\n1\n").unwrap();
    save_mesh(&dir.path().join("meshes/1.obj"), &shapes::icosphere(1)).unwrap();
    let out = hodgenet(&["train", "--config", &s(&config), "--train", &s(&manifest), "--out", &s(&dir.path().join("run"))]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));

    let broken = dir.path().join("broken.ckpt");
    write_file(&broken, "HODGENET").unwrap();
    let out = hodgenet(&["predict", "--checkpoint", &s(&broken), "--mesh", &s(&dir.path().join("meshes/0.obj"))]);
    assert_eq!(code(&out), 3);
}

#[test]
fn dump_config_applies_overrides() {
    let out = hodgenet(&["train", "--dump-config", "--lr", "0.5", "--epochs", "7", "--batch-size", "3"]);
    assert_eq!(code(&out), 0);
    let cfg = hodgenet::config::RunConfig::from_toml(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!((cfg.optimizer.lr, cfg.epochs, cfg.optimizer.batch_size), (0.5, 7, 3));
}

#[test]
fn gradcheck_tiny_passes() {
    let out = hodgenet(&["gradcheck", "--size", "tiny"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("ok") && !text.contains("FAIL"), "{text}");
}

#[test]
fn export_operator_writes_matrix_market() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = dir.path().join("m.off");
    save_mesh(&mesh, &shapes::octahedron()).unwrap();
    let out_dir = dir.path().join("op");
    let out = hodgenet(&["export-operator", "--mesh", &s(&mesh), "--k", "2", "--spectrum", "--out", &s(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let d = std::fs::read_to_string(out_dir.join("d.mtx")).unwrap();
    assert!(d.starts_with("%%MatrixMarket matrix coordinate real general"));
    // 12 edges and 6 vertices with 2×2 blocks; two entries per edge row.
    let size: Vec<usize> = d.lines().find(|l| !l.starts_with('%')).unwrap().split_whitespace().map(|v| v.parse().unwrap()).collect();
    assert_eq!(size, vec![24, 12, 48]);
    for f in ["star0.mtx", "star1.mtx", "stiffness.mtx", "eigen.csv"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
}
