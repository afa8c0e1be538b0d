//! Lowest eigenpairs of the generalized problem `dᵀ⋆₁d x = λ ⋆₀ x`.
//!
//! `⋆₀ = CᵀC` is whitened blockwise, and the largest eigenvalues of
//! `C (dᵀ⋆₁d + σ⋆₀)⁻¹ Cᵀ` are found by Lanczos on a sparse block Cholesky
//! factor. Small problems go through a dense symmetric solve instead.
//! Eigenvalues are reported as Rayleigh quotients `Σ_e y_eᵀ ⋆₁_e y_e` with
//! `y = d x`, which keeps them nonnegative.

mod lanczos;

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dec::{HodgeStar0, OperatorBundle};
use crate::linalg::{self, sym_eigen, Matrix};
use crate::sparse::BlockCholesky;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EigError {
    #[error("eigensolver did not converge after {iterations} operator applications (worst relative residual {worst_residual:e})")]
    Solver { iterations: usize, worst_residual: f64 },
    #[error("requested {requested} eigenpairs from an operator of dimension {available}")]
    Dimension { requested: usize, available: usize },
    #[error("block {block} is not positive definite")]
    Factorization { block: usize },
    #[error("found {count} near-zero eigenvalues where {expected} were expected; the mesh is likely disconnected")]
    ZeroMode { count: usize, expected: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigConfig {
    /// Bound on `‖Ax − λBx‖ / (‖A‖_F ‖x‖)` for every returned pair.
    pub tol: f64,
    /// Operator applications allowed across all Lanczos restarts.
    pub max_iter: usize,
    pub seed: u64,
    /// Shift `σ = shift_scale · tr(A) / tr(B)` of the factored matrix.
    pub shift_scale: f64,
    /// Search-space size; derived from the request when `None`.
    pub ncv: Option<usize>,
}

impl Default for EigConfig {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 5000, seed: 0, shift_scale: 1e-8, ncv: None }
    }
}

/// Eigenpairs in ascending order with `Xᵀ⋆₀X = I`. The first
/// `zero_mode_count` pairs are the constant block modes; they stay stored
/// because the coupling sums of the backward pass run over them.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    pub k: usize,
    pub values: Vec<f64>,
    /// Row `i` is `xⁱ` (length `k|V|`).
    pub vectors: Matrix,
    /// Row `i` is `yⁱ = d xⁱ` (length `k|E|`).
    pub y: Matrix,
    pub residuals: Vec<f64>,
    pub zero_mode_count: usize,
}

impl EigenSystem {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn x(&self, i: usize) -> &[f64] {
        self.vectors.row(i)
    }

    pub fn y(&self, i: usize) -> &[f64] {
        self.y.row(i)
    }

    /// Eigenvalues after the zero modes.
    pub fn kept_values(&self) -> &[f64] {
        &self.values[self.zero_mode_count..]
    }

    pub fn num_kept(&self) -> usize {
        self.len() - self.zero_mode_count
    }
}

/// Blockwise factor `⋆₀ = CᵀC` with `C_v = L_vᵀ` for the lower Cholesky
/// factor `L_v` of each block.
#[derive(Debug, Clone, PartialEq)]
pub struct Whitening {
    k: usize,
    lower: Vec<f64>,
}

pub fn whiten(star0: &HodgeStar0) -> Result<Whitening, EigError> {
    let k = star0.block_size();
    let mut lower = star0.blocks().to_vec();
    for (v, blk) in lower.chunks_mut(k * k).enumerate() {
        linalg::cholesky_lower(blk, k).map_err(|_| EigError::Factorization { block: v })?;
    }
    Ok(Whitening { k, lower })
}

impl Whitening {
    fn blocks(&self) -> impl Iterator<Item = &[f64]> {
        self.lower.chunks(self.k * self.k)
    }

    /// The upper-triangular block `C_v`, row-major.
    pub fn factor(&self, v: usize) -> Vec<f64> {
        let k = self.k;
        let l = &self.lower[v * k * k..(v + 1) * k * k];
        (0..k * k).map(|i| l[(i % k) * k + i / k]).collect()
    }

    /// `x ← C x`.
    pub fn apply(&self, x: &mut [f64]) {
        let k = self.k;
        for (l, xv) in self.blocks().zip(x.chunks_mut(k)) {
            for r in 0..k {
                xv[r] = (r..k).map(|p| l[p * k + r] * xv[p]).sum();
            }
        }
    }

    /// `x ← Cᵀ x`.
    pub fn apply_t(&self, x: &mut [f64]) {
        let k = self.k;
        for (l, xv) in self.blocks().zip(x.chunks_mut(k)) {
            for r in (0..k).rev() {
                xv[r] = (0..=r).map(|p| l[r * k + p] * xv[p]).sum();
            }
        }
    }

    /// `x ← C⁻¹ x`.
    pub fn solve(&self, x: &mut [f64]) {
        for (l, xv) in self.blocks().zip(x.chunks_mut(self.k)) {
            linalg::solve_lower_t(l, self.k, xv);
        }
    }

    /// `x ← C⁻ᵀ x`.
    pub fn solve_t(&self, x: &mut [f64]) {
        for (l, xv) in self.blocks().zip(x.chunks_mut(self.k)) {
            linalg::solve_lower(l, self.k, xv);
        }
    }
}

/// Search-space size for `nev` wanted pairs.
fn default_ncv(nev: usize) -> usize {
    (2 * nev + 10).max(nev + 24)
}

/// The `m_total` smallest generalized eigenpairs of `bundle`.
pub fn solve_lowest(bundle: &OperatorBundle, m_total: usize, cfg: &EigConfig) -> Result<EigenSystem, EigError> {
    let n = bundle.dim();
    if m_total == 0 || m_total > n {
        return Err(EigError::Dimension { requested: m_total, available: n });
    }
    let c = whiten(&bundle.star0)?;
    let a = bundle.stiffness();
    let ncv = cfg.ncv.unwrap_or_else(|| default_ncv(m_total)).max(m_total + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    if ncv >= n {
        let z = dense_lowest(&a.to_dense(), &c, m_total)?;
        return finish(bundle, &a, &c, z, cfg.tol).map_err(|worst| EigError::Solver { iterations: 0, worst_residual: worst });
    }

    let tr_b = bundle
        .star0
        .blocks()
        .chunks(bundle.block_size() * bundle.block_size())
        .map(|b| (0..bundle.block_size()).map(|i| b[i * bundle.block_size() + i]).sum::<f64>());
    let sigma = cfg.shift_scale * a.trace() / tr_b.sum::<f64>();
    let mut shifted = a.clone();
    for v in 0..bundle.star0.len() {
        shifted.add_block(v, v, bundle.star0.block(v), sigma);
    }
    let chol = BlockCholesky::factor(&shifted).map_err(|e| EigError::Factorization { block: e.block })?;

    let op = |v: &[f64], out: &mut [f64]| {
        out.copy_from_slice(v);
        c.apply_t(out);
        chol.solve_in_place(out);
        c.apply(out);
    };
    let mut lanczos_tol = 1e-3 * cfg.tol;
    let mut ops = 0;
    let mut worst = f64::INFINITY;
    for _ in 0..3 {
        let budget = cfg.max_iter.saturating_sub(ops);
        if budget == 0 {
            break;
        }
        let out = lanczos::largest(n, m_total, ncv, lanczos_tol, budget, &mut rng, op);
        ops += out.ops;
        if !out.converged {
            worst = worst.min(out.worst);
            break;
        }
        match finish(bundle, &a, &c, out.vectors, cfg.tol) {
            Ok(sys) => return Ok(sys),
            Err(w) => worst = w,
        }
        lanczos_tol *= 1e-2;
    }
    Err(EigError::Solver { iterations: ops, worst_residual: worst })
}

/// Lowest `m` eigenvectors of `C⁻ᵀ A C⁻¹` by a dense solve, whitened.
fn dense_lowest(a: &Matrix, c: &Whitening, m: usize) -> Result<Vec<Vec<f64>>, EigError> {
    let n = a.rows();
    // Columns of C⁻ᵀA are C⁻ᵀ applied to rows of the symmetric A.
    let mut t = Matrix::zeros(n, n);
    for r in 0..n {
        let mut col = a.row(r).to_vec();
        c.solve_t(&mut col);
        t.row_mut(r).copy_from_slice(&col);
    }
    // t = (C⁻ᵀA)ᵀ = A C⁻¹; its columns are A C⁻¹ eⱼ, so rows of tᵀ get C⁻ᵀ.
    let tt = t.transpose();
    let mut s = Matrix::zeros(n, n);
    for r in 0..n {
        let mut row = tt.row(r).to_vec();
        c.solve_t(&mut row);
        s.row_mut(r).copy_from_slice(&row);
    }
    let s = Matrix::from_fn(n, n, |i, j| 0.5 * (s.get(i, j) + s.get(j, i)));
    let eig = sym_eigen(&s).ok_or(EigError::Solver { iterations: 0, worst_residual: f64::NAN })?;
    Ok((0..m).map(|i| eig.vectors.row(i).to_vec()).collect())
}

/// Unwhitens, evaluates Rayleigh quotients and residuals, and sorts.
/// Returns the worst residual when it exceeds `tol`.
fn finish(bundle: &OperatorBundle, a: &crate::sparse::BlockSparse, c: &Whitening, zs: Vec<Vec<f64>>, tol: f64) -> Result<EigenSystem, f64> {
    let n = bundle.dim();
    let ne = bundle.d.rows();
    let k = bundle.block_size();
    let a_norm = a.frobenius_norm();
    let mut pairs: Vec<(f64, Vec<f64>, Vec<f64>, f64)> = Vec::with_capacity(zs.len());
    let (mut ax, mut bx, mut sy) = (vec![0.0; n], vec![0.0; n], vec![0.0; ne]);
    let mut worst = 0.0f64;
    for mut x in zs {
        c.solve(&mut x);
        let mut y = vec![0.0; ne];
        bundle.d.apply(&x, &mut y);
        bundle.star1.apply(&y, &mut sy);
        let lambda = linalg::dot(&y, &sy);
        a.matvec(&x, &mut ax);
        bundle.star0.apply(&x, &mut bx);
        let r: f64 = ax.iter().zip(&bx).map(|(p, q)| (p - lambda * q) * (p - lambda * q)).sum();
        let rel = crate::math::sqrt(r) / (a_norm * linalg::norm2(&x)).max(f64::MIN_POSITIVE);
        worst = worst.max(rel);
        pairs.push((lambda, x, y, rel));
    }
    if !(worst <= tol) {
        return Err(worst);
    }
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
    let m = pairs.len();
    let (mut values, mut residuals) = (Vec::with_capacity(m), Vec::with_capacity(m));
    let (mut xs, mut ys) = (Vec::with_capacity(m * n), Vec::with_capacity(m * ne));
    for (l, x, y, r) in pairs {
        values.push(l);
        residuals.push(r);
        xs.extend_from_slice(&x);
        ys.extend_from_slice(&y);
    }
    Ok(EigenSystem { k, values, vectors: Matrix::from_vec(m, n, xs), y: Matrix::from_vec(m, ne, ys), residuals, zero_mode_count: 0 })
}

/// Marks the `k` constant block modes. Fails when more than `k` eigenvalues
/// are numerically zero.
pub fn drop_zero_modes(mut sys: EigenSystem, k: usize) -> Result<EigenSystem, EigError> {
    if sys.len() < k {
        return Err(EigError::Dimension { requested: k, available: sys.len() });
    }
    let top = sys.values.last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    let count = sys.values.iter().filter(|&&l| l <= 1e-9 * top).count();
    if count > k {
        return Err(EigError::ZeroMode { count, expected: k });
    }
    if let Some(&l) = sys.values[..k].iter().find(|&&l| l > 1e-4) {
        log::warn!("removed eigenvalue {l:e} is not near zero");
    }
    sys.zero_mode_count = k;
    Ok(sys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{shapes, Mesh};
    use rand::Rng;

    fn random_bundle(mesh: &Mesh, k: usize, seed: u64) -> OperatorBundle {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kk = k * k;
        let nb = mesh.num_boundary_edges();
        let mut draw = |n: usize| (0..n * kk).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        let (f, g, gb) = (draw(mesh.num_triangles()), draw(mesh.num_edges() - nb), draw(nb));
        OperatorBundle::from_raw(mesh, k, 1e-4, &f, &g, &gb).unwrap()
    }

    fn check_system(b: &OperatorBundle, sys: &EigenSystem) {
        let m = sys.len();
        let mut bx = vec![0.0; b.dim()];
        for i in 0..m {
            b.star0.apply(sys.x(i), &mut bx);
            for j in 0..m {
                let g = linalg::dot(sys.x(j), &bx);
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g - want).abs() < 1e-8, "gram ({i},{j}) = {g}");
            }
            assert!(sys.residuals[i] <= 1e-8);
            assert!(sys.values[i] >= -1e-10);
        }
        for w in sys.values.windows(2) {
            assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn whiten_examples() {
        let mesh = shapes::tetrahedron();
        let s = crate::dec::assemble_star0(&mesh, &vec![0.0; 4], 1, 1.0).unwrap();
        let c = whiten(&s).unwrap();
        assert_eq!(c.factor(0), vec![1.0]);

        let s = crate::dec::assemble_star0(&mesh, &vec![0.0; 16], 2, 1.0).unwrap();
        let mut blocks = s.blocks().to_vec();
        blocks[..4].copy_from_slice(&[4.0, 0.0, 0.0, 9.0]);
        let c = whiten(&s.with_blocks(blocks)).unwrap();
        assert_eq!(c.factor(0), vec![2.0, 0.0, 0.0, 3.0]);
    }

    #[test]
    fn whiten_round_trip() {
        let mesh = shapes::icosahedron();
        let b = random_bundle(&mesh, 4, 3);
        let c = whiten(&b.star0).unwrap();
        for v in 0..12 {
            let cv = c.factor(v);
            let mut ctc = vec![0.0; 16];
            linalg::add_gram(&cv, 4, &mut ctc);
            for (p, q) in ctc.iter().zip(b.star0.block(v)) {
                assert!((p - q).abs() < 1e-12);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..48).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut y = x.clone();
        c.apply(&mut y);
        c.solve(&mut y);
        c.apply_t(&mut y);
        c.solve_t(&mut y);
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_square_spectrum() {
        let mesh = Mesh::new(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]], vec![[0, 1, 2], [0, 2, 3]]).unwrap();
        let f = vec![crate::math::sqrt(0.5 / 3.0); 2];
        // Boundary edges see one right-isosceles corner (cot 45° = 1); the diagonal sees two right angles.
        let g = vec![0.0];
        let gb = vec![1.0; 4];
        let b = OperatorBundle::from_raw(&mesh, 1, 1e-4, &f, &g, &gb).unwrap();
        let sys = solve_lowest(&b, 4, &EigConfig::default()).unwrap();
        assert!(sys.values[0].abs() < 1e-12);
        check_system(&b, &sys);
    }

    #[test]
    fn lanczos_matches_dense_path() {
        for (mesh, k) in [(shapes::icosphere(2), 1), (shapes::grid(8, 6, 1.0, 1.0), 2), (shapes::icosphere(1), 4)] {
            let b = random_bundle(&mesh, k, 11);
            let m = 10;
            let sparse = solve_lowest(&b, m, &EigConfig::default()).unwrap();
            let dense = solve_lowest(&b, m, &EigConfig { ncv: Some(b.dim()), ..EigConfig::default() }).unwrap();
            check_system(&b, &sparse);
            check_system(&b, &dense);
            for (p, q) in sparse.values.iter().zip(&dense.values) {
                assert!((p - q).abs() <= 1e-8 * q.abs().max(1e-6), "{p} vs {q}");
            }
        }
    }

    #[test]
    fn zero_modes_and_disconnected() {
        let b = random_bundle(&shapes::icosphere(1), 4, 2);
        let sys = solve_lowest(&b, 12, &EigConfig::default()).unwrap();
        assert!(sys.values[..4].iter().all(|&l| l <= 1e-6));
        let sys = drop_zero_modes(sys, 4).unwrap();
        assert_eq!(sys.num_kept(), 8);

        let two =
            Mesh::new(vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [5.0, 0.0, 0.0], [6.0, 0.0, 0.0], [5.0, 1.0, 0.0]], vec![[0, 1, 2], [3, 4, 5]]).unwrap();
        let b = random_bundle(&two, 1, 4);
        let sys = solve_lowest(&b, 4, &EigConfig::default()).unwrap();
        assert_eq!(drop_zero_modes(sys, 1), Err(EigError::ZeroMode { count: 2, expected: 1 }));
    }

    #[test]
    fn dimension_error() {
        let b = random_bundle(&shapes::tetrahedron(), 1, 0);
        assert!(matches!(solve_lowest(&b, 5, &EigConfig::default()), Err(EigError::Dimension { .. })));
    }
}
