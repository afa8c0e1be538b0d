//! The ten acceptance criteria. Each prints one PASS or FAIL line; the
//! process exits nonzero when any criterion fails.

use std::path::Path;
use std::process::{Command, ExitCode, Stdio};
use std::time::{Duration, Instant};

use hodgenet::config::{RunConfig, TaskName};
use hodgenet::dataset::{Dataset, Sample};
use hodgenet::exec::{resolve_threads, Pool};
use hodgenet::train::{evaluate, train};
use hodgenet_core::dec::{assemble_star0, assemble_star1, OperatorBundle};
use hodgenet_core::eig::{solve_lowest, EigConfig, EigenSystem};
use hodgenet_core::gradcheck::{descent_sample, end_to_end_check, random_bundle, small_mesh, star_gradient_check, tiny_mesh};
use hodgenet_core::math::{self, Vec3};
use hodgenet_core::mesh::{decimate, normalize, shapes, FeatureKind, Mesh};
use hodgenet_core::model::{Example, HodgeNet, ModelConfig, Prepared, Sequential, TaskKind};
use hodgenet_core::nn::Mode;
use hodgenet_core::tasks::{make_dihedral_dataset, segmentation_metrics, Label};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn dense(n: usize, triplets: impl IntoIterator<Item = (usize, usize, f64)>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for (r, c, v) in triplets {
        m[(r, c)] += v;
    }
    m
}

/// Barycentric mass and cotangent stiffness from hat-function gradients.
fn hat_function_pair(mesh: &Mesh) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = mesh.num_vertices();
    let p = mesh.vertices();
    let mut mass = DMatrix::zeros(n, n);
    let mut stiff = DMatrix::zeros(n, n);
    for tri in mesh.triangles() {
        let x: [Vec3; 3] = tri.map(|v| p[v]);
        let normal = math::cross(math::sub(x[1], x[0]), math::sub(x[2], x[0]));
        let twice_area = math::norm(normal);
        let unit = math::scale(normal, 1.0 / twice_area);
        // ∇φᵢ = n̂ × (xᵢ₊₂ − xᵢ₊₁) / 2A
        let grad: Vec<Vec3> = (0..3).map(|i| math::scale(math::cross(unit, math::sub(x[(i + 2) % 3], x[(i + 1) % 3])), 1.0 / twice_area)).collect();
        for i in 0..3 {
            mass[(tri[i], tri[i])] += twice_area / 6.0;
            for j in 0..3 {
                stiff[(tri[i], tri[j])] += 0.5 * twice_area * math::dot(grad[i], grad[j]);
            }
        }
    }
    (mass, stiff)
}

fn criterion_1() -> Verdict {
    let started = Instant::now();
    let mesh = shapes::icosahedron();
    let f: Vec<f64> = (0..mesh.num_triangles()).map(|t| (mesh.triangle_area(t) / 3.0).sqrt()).collect();
    let g: Vec<f64> = mesh
        .edge_opposites()
        .iter()
        .enumerate()
        .map(|(e, o)| {
            let [a, b] = mesh.edges()[e];
            let p = mesh.vertices();
            let cot: f64 = [o.left, o.right].iter().flatten().map(|&c| math::cot_at(p[c], p[a], p[b])).sum();
            (0.5 * cot).sqrt()
        })
        .collect();
    let star0 = assemble_star0(&mesh, &f, 1, 0.0).unwrap();
    let star1 = assemble_star1(&mesh, &g, &[], 1, 0.0).unwrap();
    let bundle = OperatorBundle::new(&mesh, star0, star1).unwrap();
    let n = mesh.num_vertices();
    let mass = dense(n, bundle.star0.triplets());
    let stiff = dense(n, bundle.stiffness().to_dense().data().iter().enumerate().map(|(i, &v)| (i / n, i % n, v)));
    let (mass_ref, stiff_ref) = hat_function_pair(&mesh);
    let err = (&mass - &mass_ref).amax().max((&stiff - &stiff_ref).amax());
    let elapsed = started.elapsed();
    verdict(err <= 1e-10 && elapsed < Duration::from_secs(1), format!("max entry difference {err:.2e}, {elapsed:.2?}"))
}

/// Generalized eigenvalues of `(A, B)` through `L⁻¹ A L⁻ᵀ`.
fn dense_reference(bundle: &OperatorBundle) -> Vec<f64> {
    let n = bundle.dim();
    let a = dense(n, bundle.stiffness().to_dense().data().iter().enumerate().map(|(i, &v)| (i / n, i % n, v)));
    let b = dense(n, bundle.star0.triplets());
    let l = b.cholesky().expect("star0 is positive definite").l();
    let li = l.clone().try_inverse().expect("triangular factor is invertible");
    let c = &li * a * li.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let mut values: Vec<f64> = SymmetricEigen::new(c).eigenvalues.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values
}

fn b_orthonormality(bundle: &OperatorBundle, sys: &EigenSystem) -> f64 {
    let mut worst = 0.0f64;
    let mut bx = vec![0.0; bundle.dim()];
    for i in 0..sys.len() {
        bundle.star0.apply(sys.x(i), &mut bx);
        for j in 0..sys.len() {
            let d: f64 = sys.x(j).iter().zip(&bx).map(|(a, b)| a * b).sum();
            worst = worst.max((d - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    worst
}

fn criterion_2() -> Verdict {
    let started = Instant::now();
    let (mut worst_value, mut worst_zero, mut worst_orth) = (0.0f64, 0.0f64, 0.0f64);
    for seed in 0..25u64 {
        let (mesh, k) = match seed % 5 {
            0 => (shapes::jitter(&shapes::icosphere(2), 0.02, seed), 1),
            1 => (shapes::jitter(&shapes::grid(12, 10, 1.0, 1.0), 0.05, seed), 1),
            2 => (shapes::jitter(&shapes::icosphere(1), 0.02, seed), 4),
            3 => (shapes::jitter(&shapes::grid(7, 8, 1.0, 1.0), 0.05, seed), 4),
            _ => (shapes::jitter(&shapes::dihedral(1.0 + seed as f64 * 0.1), 0.02, seed), 4),
        };
        assert!(k * mesh.num_vertices() <= 300);
        let bundle = random_bundle(&mesh, k, seed).unwrap();
        let sys = solve_lowest(&bundle, 10 + k, &EigConfig::default()).unwrap();
        let reference = dense_reference(&bundle);
        // The k zero modes have no relative scale; they are measured
        // against the first nonzero eigenvalue.
        for i in 0..k {
            worst_zero = worst_zero.max((sys.values[i] - reference[i]).abs() / reference[k]);
        }
        for i in k..k + 10 {
            worst_value = worst_value.max((sys.values[i] - reference[i]).abs() / reference[i].abs());
        }
        worst_orth = worst_orth.max(b_orthonormality(&bundle, &sys));
    }
    let elapsed = started.elapsed();
    let pass = worst_value <= 1e-8 && worst_zero <= 1e-8 && worst_orth <= 1e-8 && elapsed < Duration::from_secs(30);
    verdict(
        pass,
        format!("25 bundles: eigenvalue rel error {worst_value:.2e}, zero modes {worst_zero:.2e}, star0-orthonormality {worst_orth:.2e}, {elapsed:.2?}"),
    )
}

fn criterion_3() -> Verdict {
    let started = Instant::now();
    let mut worst = [0.0f64; 2];
    for seed in 0..10u64 {
        let mesh = tiny_mesh(seed);
        assert!(mesh.num_vertices() <= 12);
        worst[0] = worst[0].max(star_gradient_check(&mesh, 1, seed).unwrap().max_rel_error);
        let mesh = small_mesh(seed);
        assert!(mesh.num_vertices() <= 20);
        worst[1] = worst[1].max(star_gradient_check(&mesh, 4, seed).unwrap().max_rel_error);
    }
    let elapsed = started.elapsed();
    let pass = worst[0] <= 1e-5 && worst[1] <= 1e-5 && elapsed < Duration::from_secs(120);
    verdict(pass, format!("k=1 rel error {:.2e}, k=4 rel error {:.2e}, 10 seeds each, {elapsed:.2?}", worst[0], worst[1]))
}

fn criterion_4() -> Verdict {
    let samples: Vec<_> = (0..20u64).map(|s| descent_sample(4, 8, s).unwrap()).collect();
    let positive = samples.iter().filter(|d| d.inner > 0.0).count();
    let min_cos = samples.iter().map(|d| d.cosine).fold(f64::INFINITY, f64::min);
    verdict(positive == 20, format!("{positive}/20 positive inner products, min cosine {min_cos:.3}"))
}

fn criterion_5() -> Verdict {
    let checks: Vec<_> = [(1, 0), (2, 1), (4, 2)].iter().map(|&(k, s)| (k, end_to_end_check(k, s).unwrap())).collect();
    let worst = checks.iter().map(|(_, c)| c.max_rel_error).fold(0.0, f64::max);
    let detail = checks.iter().map(|(k, c)| format!("k={k}: {:.2e} over {} parameters", c.max_rel_error, c.entries)).collect::<Vec<_>>().join(", ");
    verdict(worst <= 1e-4, detail)
}

fn criterion_6() -> Verdict {
    let mut cfg = ModelConfig::new(TaskKind::Segmentation { classes: 4 });
    cfg.seed = 6;
    let net = HodgeNet::new(cfg).unwrap();
    let mesh = normalize(&shapes::jitter(&shapes::icosphere(1), 0.03, 6)).unwrap();
    let label = Label::Faces((0..mesh.num_triangles()).map(|t| t % 4).collect());
    let prepared = Prepared::new(mesh, net.cfg.features);
    let ins = net.inspect(&prepared).unwrap();
    let (base_loss, _) = net.item_loss(&ins.output, &label).unwrap();
    let bits = |m: &hodgenet_core::linalg::Matrix| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    let (base_features, base_output) = (bits(&ins.features), bits(&ins.output));
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut identical = 0;
    for _ in 0..100 {
        let mut sys = ins.sys.clone();
        for i in 0..sys.len() {
            if rng.random::<bool>() {
                sys.vectors.row_mut(i).iter_mut().for_each(|v| *v = -*v);
                sys.y.row_mut(i).iter_mut().for_each(|v| *v = -*v);
            }
        }
        let (features, output) = net.spectral_head(&prepared.mesh, &sys).unwrap();
        let (loss, _) = net.item_loss(&output, &label).unwrap();
        if bits(&features) == base_features && bits(&output) == base_output && loss.to_bits() == base_loss.to_bits() {
            identical += 1;
        }
    }
    verdict(identical == 100, format!("{identical}/100 sign patterns bit-identical"))
}

fn dihedral_set(count: usize, seed: u64) -> Dataset {
    let samples = make_dihedral_dataset(count, seed)
        .unwrap()
        .into_iter()
        .enumerate()
        .map(|(i, s)| Sample { name: format!("{i:04}"), mesh: normalize(&s.mesh).unwrap(), label: s.label })
        .collect();
    Dataset { task: TaskName::Dihedral, samples }
}

fn criterion_7(scratch: &Path) -> Verdict {
    let started = Instant::now();
    let train_set = dihedral_set(2000, 1);
    let test_set = dihedral_set(200, 2);
    let mut cfg = RunConfig::default();
    cfg.task.kind = TaskName::Dihedral;
    cfg.epochs = 30;
    cfg.optimizer.batch_size = 32;
    cfg.optimizer.lr = 1e-3;
    let threads = resolve_threads(0).min(8);
    let pool = Pool::new(threads).unwrap();
    let outcome = train(&cfg, &train_set, Some(&test_set), &scratch.join("dihedral"), &pool).unwrap();
    let examples: Vec<Example> =
        test_set.samples.iter().map(|s| Example { prepared: Prepared::new(s.mesh.clone(), FeatureKind::Positions), label: s.label.clone() }).collect();
    let summary = evaluate(&outcome.net, &examples, 32, false, &pool).unwrap().summary;
    let elapsed = started.elapsed();
    let pass = summary.mean_angle_error <= 2.0 && summary.skipped == 0 && elapsed <= Duration::from_secs(3600);
    verdict(pass, format!("mean angle error {:.3} deg on 200 held-out samples after 30 epochs, {threads} threads, {elapsed:.1?}", summary.mean_angle_error))
}

/// Ends of an elongated sphere against its middle.
fn toy_segmentation(seed: u64) -> Sample {
    let sphere = shapes::jitter(&shapes::icosphere(1), 0.02, seed);
    let stretch = [2.0 + 0.2 * seed as f64, 1.0, 0.8 + 0.1 * seed as f64];
    let mesh = normalize(&sphere.with_vertices(sphere.vertices().iter().map(|p| [p[0] * stretch[0], p[1] * stretch[1], p[2] * stretch[2]]).collect())).unwrap();
    let reach = mesh.vertices().iter().fold(0.0f64, |m, p| m.max(p[0].abs()));
    let labels = (0..mesh.num_triangles()).map(|t| usize::from(mesh.triangle_centroid(t)[0].abs() > 0.5 * reach)).collect();
    Sample { name: format!("toy{seed}"), mesh, label: Label::Faces(labels) }
}

fn criterion_8(scratch: &Path) -> Verdict {
    // Two triangles of area 1 and 3; only the large one is right.
    let mesh = Mesh::new(vec![[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [3.2, 2.4, 0.0]], vec![[0, 1, 2], [1, 3, 2]]).unwrap();
    let m = segmentation_metrics(&[1, 1], &[0, 1], &mesh).unwrap();
    let hand = (m.accuracy - 0.5).abs() < 1e-12 && (m.area_weighted_accuracy - 0.75).abs() < 1e-12;

    let data = Dataset { task: TaskName::Segmentation, samples: (0..5).map(toy_segmentation).collect() };
    let mut cfg = RunConfig::default();
    cfg.task.classes = 2;
    cfg.epochs = 200;
    cfg.optimizer.batch_size = 1;
    cfg.optimizer.lr = 1e-3;
    let outcome = train(&cfg, &data, None, &scratch.join("segmentation"), &Sequential).unwrap();
    let reached = outcome.records.iter().find(|r| r.eval.accuracy >= 0.95).map(|r| r.epoch);
    let best = outcome.records.iter().map(|r| r.eval.accuracy).fold(0.0, f64::max);
    let epochs = reached.map_or_else(|| String::from("never"), |e| format!("at epoch {}", e + 1));
    verdict(
        hand && reached.is_some(),
        format!(
            "toy training accuracy reached 95% {epochs} (best {best:.4}); 2-face example accuracy {} area-weighted {}",
            m.accuracy, m.area_weighted_accuracy
        ),
    )
}

fn peak_memory_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

fn criterion_9() -> Verdict {
    let mesh = normalize(&decimate(&shapes::icosphere(5), 20_000, 9).unwrap().mesh).unwrap();
    let faces = mesh.num_triangles();
    let net = HodgeNet::new(ModelConfig::new(TaskKind::Segmentation { classes: 8 })).unwrap();
    let prepared = Prepared::new(mesh, net.cfg.features);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let label = Label::Faces((0..faces).map(|_| rng.random_range(0..8)).collect());
    let started = Instant::now();
    let fwd = net.forward(&[&prepared], Mode::Train, &Sequential).unwrap();
    let back = net.backward(&[&prepared], &fwd, &[&label], &Sequential);
    let elapsed = started.elapsed();
    let ok = back.is_ok_and(|b| b.loss.is_finite()) && fwd.failures().is_empty();
    let peak = peak_memory_bytes();
    let within_memory = peak.is_none_or(|p| p < 8 << 30);
    let memory = peak.map_or_else(|| String::from("peak memory unavailable"), |p| format!("peak resident {:.0} MiB", p as f64 / (1 << 20) as f64));
    verdict(ok && elapsed <= Duration::from_secs(120) && within_memory, format!("{faces} faces, forward + backward {elapsed:.2?}, {memory}"))
}

fn run_cli(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_hodgenet")).args(args).env("RUST_LOG", "warn").stdout(Stdio::null()).status().is_ok_and(|s| s.success())
}

fn criterion_10(scratch: &Path) -> Verdict {
    let root = scratch.join("determinism");
    let data = root.join("data");
    let s = |p: &Path| p.to_str().unwrap().to_string();
    if !run_cli(&["make-dihedral", "--count", "24", "--seed", "10", "--out", &s(&data)]) {
        return verdict(false, String::from("make-dihedral failed"));
    }
    let manifest = s(&data.join("manifest.toml"));
    let config = root.join("config.toml");
    std::fs::write(&config, "[task]\nkind = \"dihedral\"\n").unwrap();
    for run in ["a", "b"] {
        let out = s(&root.join(run));
        if !run_cli(&[
            "train",
            "--config",
            &s(&config),
            "--train",
            &manifest,
            "--out",
            &out,
            "--epochs",
            "3",
            "--batch-size",
            "8",
            "--lr",
            "1e-3",
            "--threads",
            "1",
            "--seed",
            "4",
        ]) {
            return verdict(false, format!("train run {run} failed"));
        }
    }
    let same = ["metrics.csv", "best.ckpt", "last.ckpt"]
        .iter()
        .all(|f| std::fs::read(root.join("a").join(f)).ok().is_some_and(|a| Some(a) == std::fs::read(root.join("b").join(f)).ok()));
    verdict(same, format!("metrics.csv, best.ckpt and last.ckpt {}", if same { "bit-identical" } else { "differ" }))
}

fn main() -> ExitCode {
    let scratch = tempfile::tempdir().unwrap();
    let criteria: [(&str, Box<dyn Fn() -> Verdict>); 10] = [
        ("operator reduces to barycentric mass and cotangent Laplacian", Box::new(criterion_1)),
        ("sparse eigensolver matches a dense reference", Box::new(criterion_2)),
        ("full-spectrum star gradients match finite differences", Box::new(criterion_3)),
        ("truncated gradient is a descent direction", Box::new(criterion_4)),
        ("end-to-end parameter gradients match finite differences", Box::new(criterion_5)),
        ("features and loss are invariant to eigenvector signs", Box::new(criterion_6)),
        ("dihedral angle regression", Box::new(|| criterion_7(scratch.path()))),
        ("segmentation overfit and area-weighted accuracy", Box::new(|| criterion_8(scratch.path()))),
        ("20,000-face forward and backward", Box::new(criterion_9)),
        ("single-threaded training is deterministic", Box::new(|| criterion_10(scratch.path()))),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != i + 1) {
            continue;
        }
        let v = check();
        println!("{} criterion {:>2}: {name}: {}", if v.pass { "PASS" } else { "FAIL" }, i + 1, v.detail);
        failed += usize::from(!v.pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
