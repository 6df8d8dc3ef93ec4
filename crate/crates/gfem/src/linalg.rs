//! Sparse matrices, an equilibrated SPD solver and Lanczos extreme eigenvalues.

use std::io::Write;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Llt;
use faer::sparse::{SparseColMat, Triplet};
use faer::{MatMut, Side};
use nalgebra::DMatrix;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{GfemError, Result};

/// Compressed sparse row matrix.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(nrows: usize, ncols: usize, mut t: Vec<(u32, u32, f64)>) -> Self {
        t.sort_unstable_by_key(|e| (e.0, e.1));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(t.len());
        let mut values: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(u32, u32)> = None;
        for (r, c, v) in t {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r as usize + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..nrows {
            indptr[i + 1] += indptr[i];
        }
        Self { nrows, ncols, indptr, indices, values }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.indptr[i]..self.indptr[i + 1]).map(move |k| (self.indices[k] as usize, self.values[k]))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let s = &self.indices[self.indptr[i]..self.indptr[i + 1]];
        match s.binary_search(&(j as u32)) {
            Ok(k) => self.values[self.indptr[i] + k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.indptr[i]..self.indptr[i + 1] {
                s += self.values[k] * x[self.indices[k] as usize];
            }
            *yi = s;
        }
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.matvec(x))
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.get(i, i)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    /// `max |A_ij − A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Submatrix on the given rows and columns (both sorted or not).
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> CsrMatrix {
        let mut map = vec![u32::MAX; self.ncols];
        for (k, &c) in cols.iter().enumerate() {
            map[c] = k as u32;
        }
        let mut t = Vec::new();
        for (r, &i) in rows.iter().enumerate() {
            for (j, v) in self.row(i) {
                if map[j] != u32::MAX {
                    t.push((r as u32, map[j], v));
                }
            }
        }
        CsrMatrix::from_triplets(rows.len(), cols.len(), t)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                d[(i, j)] += v;
            }
        }
        d
    }

    fn to_faer(&self, scale: &[f64], shift: f64) -> Result<SparseColMat<usize, f64>> {
        let mut t = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                if j <= i {
                    let s = v * scale[i] * scale[j] + if i == j { shift } else { 0.0 };
                    t.push(Triplet::new(i, j, s));
                }
            }
        }
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &t).map_err(|_| GfemError::SingularSystem("sparse pattern".into()))
    }

    /// Writes `row col value` lines, zero-based.
    pub fn write_triplets(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "# {} {} {}", self.nrows, self.ncols, self.nnz())?;
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                writeln!(w, "{i} {j} {v:.17e}")?;
            }
        }
        Ok(())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Largest system solved densely when sparse Cholesky fails.
pub const DENSE_FALLBACK_LIMIT: usize = 4000;

enum Factor {
    Sparse { llt: Llt<usize, f64> },
    /// Eigen-truncated pseudo-inverse `V diag(1/λ) Vᵀ` over retained modes.
    Dense { vectors: DMatrix<f64>, inv: Vec<f64> },
}

/// Solver for symmetric positive (semi)definite systems with diagonal equilibration.
pub struct SpdSolver {
    scale: Vec<f64>,
    factor: Factor,
    /// Diagonal shift applied to the equilibrated matrix (0 when none was needed).
    pub shift: f64,
}

impl SpdSolver {
    /// Sparse Cholesky of `D A D`, `D = diag(A)^{-1/2}`; on failure, a small
    /// shift (then refinement in `solve_refined`) or a truncated dense solve.
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows;
        let scale: Vec<f64> = a.diagonal().iter().map(|d| if *d > 0.0 { 1.0 / d.sqrt() } else { 1.0 }).collect();
        if n == 0 {
            return Ok(Self { scale, factor: Factor::Dense { vectors: DMatrix::zeros(0, 0), inv: vec![] }, shift: 0.0 });
        }
        for shift in [0.0, 1e-13, 1e-11] {
            let m = a.to_faer(&scale, shift)?;
            if let Ok(llt) = m.sp_cholesky(Side::Lower) {
                if shift > 0.0 {
                    log::warn!("cholesky needed diagonal shift {shift:e} (n = {n})");
                }
                return Ok(Self { scale, factor: Factor::Sparse { llt }, shift });
            }
        }
        if n <= DENSE_FALLBACK_LIMIT {
            log::warn!("cholesky failed, truncated eigen solve (n = {n})");
            let mut d = a.to_dense();
            for i in 0..n {
                for j in 0..n {
                    d[(i, j)] *= scale[i] * scale[j];
                }
            }
            let d = (&d + d.transpose()) * 0.5;
            let eig = nalgebra::SymmetricEigen::new(d);
            let lmax = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let inv = eig.eigenvalues.iter().map(|l| if *l > 1e-12 * lmax { 1.0 / l } else { 0.0 }).collect();
            return Ok(Self { scale, factor: Factor::Dense { vectors: eig.eigenvectors, inv }, shift: 0.0 });
        }
        Err(GfemError::SingularSystem("factorisation failed for all shifts".into()))
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.scale.len();
        let mut x: Vec<f64> = b.iter().zip(&self.scale).map(|(v, s)| v * s).collect();
        match &self.factor {
            Factor::Sparse { llt } => {
                llt.solve_in_place(MatMut::from_column_major_slice_mut(&mut x, n, 1));
            }
            Factor::Dense { vectors, inv } => {
                let y = vectors.transpose() * nalgebra::DVector::from_column_slice(&x);
                let y = nalgebra::DVector::from_fn(n, |i, _| y[i] * inv[i]);
                let z = vectors * y;
                x.copy_from_slice(z.as_slice());
            }
        }
        for (v, s) in x.iter_mut().zip(&self.scale) {
            *v *= s;
        }
        x
    }

    /// Solve followed by iterative refinement against `a`.
    pub fn solve_refined(&self, a: &CsrMatrix, b: &[f64], steps: usize) -> Vec<f64> {
        let mut x = self.solve(b);
        let bn = norm_inf(b).max(f64::MIN_POSITIVE);
        for _ in 0..steps {
            let ax = a.matvec(&x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(u, v)| u - v).collect();
            if norm_inf(&r) <= 1e-14 * bn {
                break;
            }
            let dx = self.solve(&r);
            for (xi, d) in x.iter_mut().zip(&dx) {
                *xi += d;
            }
        }
        x
    }
}

/// Extreme eigenvalues of the pencil `A v = λ B v` (`B` SPD) by Lanczos in the `B` inner product.
#[derive(Clone, Copy, Debug)]
pub struct RitzBounds {
    pub min: f64,
    pub max: f64,
}

pub fn lanczos_pencil(a: &CsrMatrix, b: &CsrMatrix, b_solver: &SpdSolver, steps: usize, seed: u64) -> RitzBounds {
    let n = a.nrows;
    let steps = steps.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let bq = b.matvec(&q);
    let nrm = dot(&q, &bq).sqrt();
    q.iter_mut().for_each(|v| *v /= nrm);
    let mut qs: Vec<Vec<f64>> = Vec::new();
    let mut bqs: Vec<Vec<f64>> = Vec::new();
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    for _ in 0..steps {
        let bq = b.matvec(&q);
        let aq = a.matvec(&q);
        let mut z = b_solver.solve_refined(b, &aq, 1);
        let al = dot(&q, &aq);
        qs.push(q.clone());
        bqs.push(bq);
        alpha.push(al);
        // full reorthogonalisation in the B inner product, twice
        for _ in 0..2 {
            for (qi, bqi) in qs.iter().zip(&bqs) {
                let c = dot(bqi, &z);
                for (zk, qk) in z.iter_mut().zip(qi) {
                    *zk -= c * qk;
                }
            }
        }
        let bz = b.matvec(&z);
        let be = dot(&z, &bz).max(0.0).sqrt();
        if be < 1e-12 * al.abs().max(1e-300) {
            break;
        }
        beta.push(be);
        q = z.iter().map(|v| v / be).collect();
    }
    let k = alpha.len();
    let t = DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j || j + 1 == i {
            beta[i.min(j)]
        } else {
            0.0
        }
    });
    let ev = nalgebra::SymmetricEigen::new(t).eigenvalues;
    RitzBounds { min: ev.iter().copied().fold(f64::INFINITY, f64::min), max: ev.iter().copied().fold(f64::NEG_INFINITY, f64::max) }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize, shift: f64) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i as u32, i as u32, 2.0 + shift));
            if i > 0 {
                t.push((i as u32, i as u32 - 1, -1.0));
                t.push((i as u32 - 1, i as u32, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, t)
    }

    #[test]
    fn triplets_sum_duplicates() {
        let m = CsrMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (0, 0, 2.0), (1, 0, 4.0)]);
        assert_eq!(m.get(0, 0), 3.0);
        assert_eq!(m.get(1, 0), 4.0);
        assert_eq!(m.get(0, 1), 0.0);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn cholesky_solves() {
        let a = laplace_1d(200, 0.0);
        let x: Vec<f64> = (0..200).map(|i| (i as f64 * 0.1).sin()).collect();
        let b = a.matvec(&x);
        let s = SpdSolver::new(&a).unwrap();
        let y = s.solve_refined(&a, &b, 2);
        assert!(x.iter().zip(&y).all(|(u, v)| (u - v).abs() < 1e-9));
    }

    #[test]
    fn singular_matrix_uses_fallback() {
        // graph Laplacian of a path: constants in the kernel
        let n = 50;
        let mut t = Vec::new();
        for i in 0..n - 1 {
            let (a, b) = (i as u32, i as u32 + 1);
            t.extend([(a, a, 1.0), (b, b, 1.0), (a, b, -1.0), (b, a, -1.0)]);
        }
        let a = CsrMatrix::from_triplets(n, n, t);
        let s = SpdSolver::new(&a).unwrap();
        let mut rhs = vec![0.0; n];
        rhs[0] = 1.0;
        rhs[n - 1] = -1.0;
        let x = s.solve_refined(&a, &rhs, 3);
        let r = a.matvec(&x);
        assert!(r.iter().zip(&rhs).all(|(u, v)| (u - v).abs() < 1e-8));
    }

    #[test]
    fn lanczos_matches_dense() {
        let n = 60;
        let a = laplace_1d(n, 0.0);
        let b = laplace_1d(n, 3.0);
        let s = SpdSolver::new(&b).unwrap();
        let r = lanczos_pencil(&a, &b, &s, 60, 1);
        let ev = crate::localspace::generalized_eigenvalues(&a.to_dense(), &b.to_dense()).unwrap();
        assert!((r.max - ev[n - 1]).abs() < 1e-9);
        assert!((r.min - ev[0]).abs() < 1e-9);
    }

    #[test]
    fn submatrix_and_dump() {
        let a = laplace_1d(5, 0.0);
        let s = a.submatrix(&[1, 2], &[1, 2, 3]);
        assert_eq!(s.get(0, 0), 2.0);
        assert_eq!(s.get(1, 2), -1.0);
        let mut out = Vec::new();
        s.write_triplets(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("# 2 3 5"));
        assert_eq!(a.asymmetry(), 0.0);
    }
}
