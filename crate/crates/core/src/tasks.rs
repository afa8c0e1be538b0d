//! Losses, metrics and datasets for per-face segmentation, per-mesh
//! classification and crease-angle regression.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg::Matrix;
use crate::math::{self, Vec3};
use crate::mesh::{self, shapes, Mesh, MeshError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TaskError {
    #[error("label {label} is outside the {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("prediction vector has norm {0:e}; the head has collapsed")]
    ZeroVector(f64),
    #[error("{0}")]
    Shape(&'static str),
}

/// What a sample asks the model to predict.
#[derive(Debug, Clone, PartialEq)]
pub enum Label {
    Faces(Vec<usize>),
    Class(usize),
    Angle(f64),
}

/// How a sample was derived from its source mesh.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Provenance {
    pub seed: u64,
    pub decimation_target: Option<usize>,
    pub augment: Option<mesh::AugmentRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub mesh: Mesh,
    pub label: Label,
    pub provenance: Provenance,
}

impl LabeledSample {
    /// Checks label counts and class ranges.
    pub fn validate(&self, classes: Option<usize>) -> Result<(), TaskError> {
        let check = |l: usize| match classes {
            Some(c) if l >= c => Err(TaskError::Label { label: l, classes: c }),
            _ => Ok(()),
        };
        match &self.label {
            Label::Faces(f) => {
                if f.len() != self.mesh.num_triangles() {
                    return Err(TaskError::Shape("per-face label count differs from face count"));
                }
                f.iter().try_for_each(|&l| check(l))
            }
            Label::Class(c) => check(*c),
            Label::Angle(_) => Ok(()),
        }
    }
}

/// Mean over rows of `−log softmax(logits)[label]`, and its gradient.
pub fn cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix), TaskError> {
    let (n, c) = (logits.rows(), logits.cols());
    if labels.len() != n || n == 0 {
        return Err(TaskError::Shape("one label per logit row is required"));
    }
    let mut grad = Matrix::zeros(n, c);
    let mut total = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        if label >= c {
            return Err(TaskError::Label { label, classes: c });
        }
        let row = logits.row(r);
        let mx = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let sum: f64 = row.iter().map(|&v| math::exp(v - mx)).sum();
        let lse = mx + math::ln(sum);
        total += lse - row[label];
        let g = grad.row_mut(r);
        for (gi, &v) in g.iter_mut().zip(row) {
            *gi = math::exp(v - lse) / n as f64;
        }
        g[label] -= 1.0 / n as f64;
    }
    Ok((total / n as f64, grad))
}

/// `1 − ⟨p, u⟩/‖p‖` with `u = (cos θ, sin θ)`, and its gradient in `p`.
pub fn cosine_loss(pred: [f64; 2], theta: f64) -> Result<(f64, [f64; 2]), TaskError> {
    let norm = math::hypot(pred[0], pred[1]);
    if !(norm > 1e-12) {
        return Err(TaskError::ZeroVector(norm));
    }
    let u = [math::cos(theta), math::sin(theta)];
    let dot = pred[0] * u[0] + pred[1] * u[1];
    let loss = 1.0 - dot / norm;
    let n3 = norm * norm * norm;
    let grad = [-u[0] / norm + dot * pred[0] / n3, -u[1] / norm + dot * pred[1] / n3];
    Ok((loss, grad))
}

/// Absolute difference between the predicted and true angle, in degrees
/// within `[0, 180]`.
pub fn angle_error(pred: [f64; 2], theta: f64) -> f64 {
    let mut d = (math::atan2(pred[1], pred[0]) - theta) % (2.0 * PI);
    if d < 0.0 {
        d += 2.0 * PI;
    }
    if d > PI {
        d = 2.0 * PI - d;
    }
    d.abs() * 180.0 / PI
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Metrics {
    pub loss: f64,
    pub accuracy: f64,
    pub area_weighted_accuracy: f64,
    pub mean_angle_error: f64,
}

/// Plain and area-weighted per-face accuracy.
pub fn segmentation_metrics(pred: &[usize], truth: &[usize], mesh: &Mesh) -> Result<Metrics, TaskError> {
    if pred.len() != truth.len() || pred.len() != mesh.num_triangles() {
        return Err(TaskError::Shape("prediction, truth and face counts differ"));
    }
    let areas = mesh.triangle_areas();
    let (mut hit, mut hit_area, mut total_area) = (0usize, 0.0, 0.0);
    for ((p, t), a) in pred.iter().zip(truth).zip(&areas) {
        total_area += a;
        if p == t {
            hit += 1;
            hit_area += a;
        }
    }
    let n = pred.len().max(1) as f64;
    Ok(Metrics { accuracy: hit as f64 / n, area_weighted_accuracy: if total_area > 0.0 { hit_area / total_area } else { 0.0 }, ..Metrics::default() })
}

/// Row-wise argmax; ties go to the lowest class.
pub fn argmax_rows(logits: &Matrix) -> Vec<usize> {
    (0..logits.rows())
        .map(|r| {
            let row = logits.row(r);
            (1..row.len()).fold(0, |b, c| if row[c] > row[b] { c } else { b })
        })
        .collect()
}

/// Creased squares with `θ ~ U[0, 2π)`, normalized.
pub fn make_dihedral_dataset(count: usize, seed: u64) -> Result<Vec<LabeledSample>, MeshError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let theta = rng.random_range(0.0..2.0 * PI);
            Ok(LabeledSample {
                mesh: mesh::normalize(&shapes::dihedral(theta))?,
                label: Label::Angle(theta),
                provenance: Provenance { seed: seed.wrapping_add(i as u64), ..Provenance::default() },
            })
        })
        .collect()
}

/// Labels for `target` faces taken from the `source` face with the nearest
/// centroid; ties go to the lower source face.
pub fn transfer_labels(source: &Mesh, labels: &[usize], target: &Mesh) -> Vec<usize> {
    let src: Vec<Vec3> = (0..source.num_triangles()).map(|t| source.triangle_centroid(t)).collect();
    (0..target.num_triangles())
        .map(|t| {
            let c = target.triangle_centroid(t);
            let mut best = (f64::INFINITY, 0);
            for (s, p) in src.iter().enumerate() {
                let d = math::sub(*p, c);
                let d2 = math::dot(d, d);
                if d2 < best.0 {
                    best = (d2, s);
                }
            }
            labels[best.1]
        })
        .collect()
}

/// Number of classes implied by the largest label, plus one.
pub fn class_count(samples: &[LabeledSample]) -> usize {
    let mut top = 0;
    for s in samples {
        match &s.label {
            Label::Faces(f) => top = f.iter().fold(top, |a, &b| a.max(b + 1)),
            Label::Class(c) => top = top.max(c + 1),
            Label::Angle(_) => {}
        }
    }
    top
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::{prop_assert, proptest};

    #[test]
    fn cross_entropy_examples() {
        let (l, _) = cross_entropy(&Matrix::zeros(2, 4), &[0, 3]).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-15);
        let (l, _) = cross_entropy(&Matrix::from_vec(1, 2, vec![500.0, -500.0]), &[0]).unwrap();
        assert!(l < 1e-300);
        let logits = Matrix::from_vec(1, 3, vec![1.0, 2.0, 0.5]);
        let (l, g) = cross_entropy(&logits, &[2]).unwrap();
        let z = 1f64.exp() + 2f64.exp() + 0.5f64.exp();
        assert!((l - (z.ln() - 0.5)).abs() < 1e-12);
        assert!((g.get(0, 2) - (0.5f64.exp() / z - 1.0)).abs() < 1e-12);
        assert_eq!(cross_entropy(&logits, &[3]), Err(TaskError::Label { label: 3, classes: 3 }));
    }

    #[test]
    fn cross_entropy_gradient() {
        let logits = Matrix::from_fn(3, 4, |r, c| ((r * 7 + c * 3) % 5) as f64 * 0.4 - 0.7);
        let labels = [1, 3, 0];
        let (_, g) = cross_entropy(&logits, &labels).unwrap();
        let h = 1e-6;
        for i in 0..12 {
            let mut p = logits.clone();
            p.data_mut()[i] += h;
            let lp = cross_entropy(&p, &labels).unwrap().0;
            p.data_mut()[i] -= 2.0 * h;
            let lm = cross_entropy(&p, &labels).unwrap().0;
            let fd = (lp - lm) / (2.0 * h);
            assert!((fd - g.data()[i]).abs() <= 1e-6 * fd.abs().max(1e-3));
        }
    }

    #[test]
    fn cosine_examples() {
        let t: f64 = 1.1;
        assert!(cosine_loss([t.cos(), t.sin()], t).unwrap().0.abs() < 1e-15);
        assert!((cosine_loss([-t.cos(), -t.sin()], t).unwrap().0 - 2.0).abs() < 1e-15);
        assert!((cosine_loss([1.0, 0.0], PI / 3.0).unwrap().0 - 0.5).abs() < 1e-15);
        assert!(matches!(cosine_loss([0.0, 1e-13], 0.0), Err(TaskError::ZeroVector(_))));
    }

    #[test]
    fn cosine_gradient() {
        let (p, t) = ([0.3, -1.2], 2.0);
        let (_, g) = cosine_loss(p, t).unwrap();
        let h = 1e-6;
        for i in 0..2 {
            let (mut a, mut b) = (p, p);
            a[i] += h;
            b[i] -= h;
            let fd = (cosine_loss(a, t).unwrap().0 - cosine_loss(b, t).unwrap().0) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn angle_error_examples() {
        let t: f64 = 0.4;
        assert!(angle_error([t.cos(), t.sin()], t) < 1e-12);
        assert!((angle_error([-t.cos(), -t.sin()], t) - 180.0).abs() < 1e-9);
        let e = angle_error([(t + 0.01).cos(), (t + 0.01).sin()], t);
        assert!((e - 0.5729577951308232).abs() < 1e-9);
        assert!((angle_error([1.0, -1e-9], 2.0 * PI - 1e-9) - 0.0).abs() < 1e-6);
    }

    #[test]
    fn segmentation_examples() {
        let two = Mesh::new(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [3.0, 0.0, 0.0], [3.0, 2.0, 0.0]], vec![[0, 1, 2], [1, 3, 4]]).unwrap();
        let areas = two.triangle_areas();
        assert_eq!(areas, vec![1.0, 2.0]);
        let four = Mesh::new(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [4.0, 0.0, 0.0], [4.0, 2.0, 0.0]], vec![[0, 1, 2], [1, 3, 4]]).unwrap();
        assert_eq!(four.triangle_areas(), vec![1.0, 3.0]);
        let m = segmentation_metrics(&[0, 1], &[1, 1], &four).unwrap();
        assert_eq!(m.accuracy, 0.5);
        assert_eq!(m.area_weighted_accuracy, 0.75);
        let m = segmentation_metrics(&[1, 1], &[1, 1], &four).unwrap();
        assert_eq!((m.accuracy, m.area_weighted_accuracy), (1.0, 1.0));
        let grid = shapes::grid(2, 1, 2.0, 1.0);
        let m = segmentation_metrics(&[0, 1, 0, 1], &[0, 0, 0, 0], &grid).unwrap();
        assert!((m.accuracy - 0.5).abs() < 1e-15 && (m.area_weighted_accuracy - 0.5).abs() < 1e-12);
    }

    #[test]
    fn dihedral_dataset() {
        let a = make_dihedral_dataset(1000, 5).unwrap();
        let b = make_dihedral_dataset(1000, 5).unwrap();
        let thetas: Vec<f64> = a.iter().map(|s| if let Label::Angle(t) = s.label { t } else { unreachable!() }).collect();
        assert_eq!(a[17], b[17]);
        assert!(a.iter().all(|s| s.mesh.num_triangles() == 100));
        let mean = thetas.iter().sum::<f64>() / 1000.0;
        let sigma = (2.0 * PI) / 12f64.sqrt() / 1000f64.sqrt();
        assert!((mean - PI).abs() < 3.0 * sigma);
        assert!(thetas.iter().all(|&t| (0.0..2.0 * PI).contains(&t)));
    }

    #[test]
    fn label_transfer_preserves_membership() {
        let src = shapes::icosphere(2);
        let labels: Vec<usize> = (0..src.num_triangles()).map(|t| (src.triangle_centroid(t)[2] > 0.0) as usize).collect();
        let dec = mesh::decimate(&src, 80, 1).unwrap().mesh;
        let moved = transfer_labels(&src, &labels, &dec);
        assert_eq!(moved.len(), dec.num_triangles());
        assert!(moved.iter().all(|l| *l < 2));
        let same = transfer_labels(&src, &labels, &src);
        assert_eq!(same, labels);
    }

    proptest! {
        #[test]
        fn cosine_scale_invariant(x in -5.0f64..5.0, y in -5.0f64..5.0, c in 0.01f64..100.0, t in 0.0f64..6.28) {
            if x.hypot(y) > 1e-3 {
                let a = cosine_loss([x, y], t).unwrap().0;
                let b = cosine_loss([c * x, c * y], t).unwrap().0;
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
