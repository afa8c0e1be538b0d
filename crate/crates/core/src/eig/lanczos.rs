//! Thick-restart Lanczos for the largest eigenpairs of a symmetric operator.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::linalg::{self, sym_eigen, Matrix};

pub(crate) struct Outcome {
    /// Ritz vectors for descending Ritz values.
    pub vectors: Vec<Vec<f64>>,
    pub ops: usize,
    pub converged: bool,
    /// Largest `|β sᵢ| / |θᵢ|` over the wanted pairs.
    pub worst: f64,
}

/// Orthogonalizes `w` against `basis` twice and accumulates the projection
/// coefficients into `coef`.
fn orthogonalize(basis: &[Vec<f64>], w: &mut [f64], coef: &mut [f64]) {
    for _ in 0..2 {
        for (i, b) in basis.iter().enumerate() {
            let c = linalg::dot(b, w);
            coef[i] += c;
            linalg::axpy(-c, b, w);
        }
    }
}

fn random_unit(n: usize, rng: &mut ChaCha8Rng, basis: &[Vec<f64>]) -> Vec<f64> {
    let mut scratch = vec![0.0; basis.len()];
    loop {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        orthogonalize(basis, &mut v, &mut scratch);
        let nrm = linalg::norm2(&v);
        if nrm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= nrm);
            return v;
        }
    }
}

/// Linear combinations `Σ_j s[i][j] basis[j]` for each requested row `i`.
fn combine(basis: &[Vec<f64>], s: &Matrix, rows: &[usize], n: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; n]; rows.len()];
    for (j, b) in basis.iter().enumerate() {
        for (o, &i) in out.iter_mut().zip(rows) {
            let c = s.get(i, j);
            if c != 0.0 {
                linalg::axpy(c, b, o);
            }
        }
    }
    out
}

/// The `nev` largest eigenpairs of the symmetric operator `op` on `R^n`
/// using a search space of `ncv` vectors (`nev < ncv ≤ n`).
pub(crate) fn largest(n: usize, nev: usize, ncv: usize, tol: f64, max_ops: usize, rng: &mut ChaCha8Rng, mut op: impl FnMut(&[f64], &mut [f64])) -> Outcome {
    debug_assert!(nev < ncv && ncv <= n);
    let keep = (nev + (ncv - nev) / 2).min(ncv - 1);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(ncv);
    basis.push(random_unit(n, rng, &[]));
    let mut h = Matrix::zeros(ncv, ncv);
    let mut locked = 0;
    let mut ops = 0;
    let mut w = vec![0.0; n];
    let mut coef = vec![0.0; ncv];

    loop {
        let mut beta_last = 0.0;
        for j in locked..ncv {
            op(&basis[j], &mut w);
            ops += 1;
            coef.iter_mut().for_each(|c| *c = 0.0);
            orthogonalize(&basis, &mut w, &mut coef);
            for i in 0..=j {
                h.set(i, j, coef[i]);
                h.set(j, i, coef[i]);
            }
            let beta = linalg::norm2(&w);
            if j + 1 == ncv {
                beta_last = beta;
                break;
            }
            let scale = coef[..=j].iter().fold(0.0f64, |m, c| m.max(c.abs()));
            let next = if beta <= 1e-13 * scale.max(f64::MIN_POSITIVE) { random_unit(n, rng, &basis) } else { w.iter().map(|x| x / beta).collect() };
            basis.push(next);
        }

        let Some(eig) = sym_eigen(&h) else {
            return Outcome { vectors: Vec::new(), ops, converged: false, worst: f64::INFINITY };
        };
        let wanted: Vec<usize> = (ncv - nev..ncv).rev().collect();
        let mut worst = 0.0f64;
        for &i in &wanted {
            let theta = eig.values[i].abs().max(f64::MIN_POSITIVE);
            worst = worst.max((beta_last * eig.vectors.get(i, ncv - 1)).abs() / theta);
        }
        let converged = worst <= tol;
        if converged || ops >= max_ops {
            let vectors = combine(&basis, &eig.vectors, &wanted, n);
            return Outcome { vectors, ops, converged, worst };
        }

        let kept: Vec<usize> = (ncv - keep..ncv).rev().collect();
        let mut next_basis = combine(&basis, &eig.vectors, &kept, n);
        h = Matrix::zeros(ncv, ncv);
        for (slot, &i) in kept.iter().enumerate() {
            h.set(slot, slot, eig.values[i]);
        }
        let resid = if beta_last > 1e-13 * eig.values[ncv - 1].abs() {
            let mut r: Vec<f64> = w.iter().map(|x| x / beta_last).collect();
            let mut scratch = vec![0.0; keep];
            orthogonalize(&next_basis, &mut r, &mut scratch);
            let nrm = linalg::norm2(&r);
            if nrm > 1e-8 {
                r.iter_mut().for_each(|x| *x /= nrm);
                r
            } else {
                random_unit(n, rng, &next_basis)
            }
        } else {
            random_unit(n, rng, &next_basis)
        };
        next_basis.push(resid);
        basis = next_basis;
        locked = keep;
    }
}
