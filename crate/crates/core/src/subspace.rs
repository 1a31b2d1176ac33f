//! Linear subspaces of R^n and the asymmetric gap between them.
//!
//! A subspace is stored as a matrix of orthonormal rows. The gap
//! `delta(T, T')` is the largest distance from a unit vector of T to its
//! orthogonal projection on T', i.e. the largest singular value of
//! (I - P') restricted to T. It is 0 iff T is contained in T', and 1 when
//! some direction of T is orthogonal to T'. The zero subspace is at gap 0
//! from everything by convention.

use nalgebra::{DMatrix, DVector};

/// Relative threshold under which a singular value or restricted covector
/// counts as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct Subspace {
    ambient: usize,
    /// dim x ambient, orthonormal rows.
    basis: DMatrix<f64>,
}

/// Repeatedly orthogonalize `v` against `rows` (two passes keep the result
/// orthogonal to working precision even for nearly dependent inputs).
fn orthogonalize(rows: &[DVector<f64>], v: &DVector<f64>) -> DVector<f64> {
    let mut u = v.clone();
    for _ in 0..2 {
        for b in rows {
            let c = b.dot(&u);
            u.axpy(-c, b, 1.0);
        }
    }
    u
}

impl Subspace {
    pub fn zero(ambient: usize) -> Subspace {
        Subspace { ambient, basis: DMatrix::zeros(0, ambient) }
    }

    pub fn full(ambient: usize) -> Subspace {
        Subspace { ambient, basis: DMatrix::identity(ambient, ambient) }
    }

    fn from_orthonormal_rows(ambient: usize, rows: Vec<DVector<f64>>) -> Subspace {
        let basis = DMatrix::from_fn(rows.len(), ambient, |i, j| rows[i][j]);
        Subspace { ambient, basis }
    }

    /// Span of the given vectors; nearly dependent vectors are dropped.
    /// Each vector is rescaled by its largest component first, so spans of
    /// vectors whose squared entries underflow (amplitudes below ~1e-154)
    /// still come out right.
    pub fn from_spanning(ambient: usize, vectors: &[DVector<f64>]) -> Subspace {
        let mut rows: Vec<DVector<f64>> = Vec::new();
        for v in vectors {
            assert_eq!(v.len(), ambient);
            let amax = v.amax();
            if amax == 0.0 || !amax.is_finite() {
                continue;
            }
            let v = v.unscale(amax);
            let u = orthogonalize(&rows, &v);
            if u.norm() > DEFAULT_RANK_TOL * v.norm().max(1.0) {
                rows.push(u.normalize());
            }
        }
        Subspace::from_orthonormal_rows(ambient, rows)
    }

    /// Line spanned by a single vector (zero subspace for a zero vector).
    pub fn line(ambient: usize, v: &DVector<f64>) -> Subspace {
        Subspace::from_spanning(ambient, std::slice::from_ref(v))
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn basis_rows(&self) -> Vec<DVector<f64>> {
        self.basis.row_iter().map(|r| r.transpose()).collect()
    }

    /// Orthogonal projection of `v` onto the subspace.
    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        self.basis.transpose() * (&self.basis * v)
    }

    pub fn contains_vector(&self, v: &DVector<f64>, tol: f64) -> bool {
        (v - self.project(v)).norm() <= tol * v.norm().max(1.0)
    }

    /// Orthonormal complement, built deterministically by greedily
    /// absorbing the standard basis vector with the largest residual.
    pub fn complement(&self) -> Subspace {
        let n = self.ambient;
        let k = self.dim();
        let mut rows = self.basis_rows();
        for _ in 0..n.saturating_sub(k) {
            let mut best: Option<(f64, DVector<f64>)> = None;
            for i in 0..n {
                let mut e = DVector::zeros(n);
                e[i] = 1.0;
                let u = orthogonalize(&rows, &e);
                let norm = u.norm();
                if best.as_ref().map(|(bn, _)| norm > *bn).unwrap_or(true) {
                    best = Some((norm, u));
                }
            }
            let (_, u) = best.expect("ambient dimension is positive");
            rows.push(u.normalize());
        }
        Subspace::from_orthonormal_rows(n, rows.split_off(k))
    }

    /// Asymmetric gap from self to `target`, in [0, 1]. The residual is
    /// rescaled by its largest entry before the singular value pass, so
    /// gaps far below 1e-154 (whose squares underflow) are still measured.
    pub fn delta(&self, target: &Subspace) -> f64 {
        assert_eq!(self.ambient, target.ambient);
        if self.dim() == 0 {
            return 0.0;
        }
        let a = &self.basis;
        let residual = if target.dim() == 0 {
            a.clone()
        } else {
            let bt = &target.basis;
            a - (a * bt.transpose()) * bt
        };
        let amax = residual.amax();
        if amax == 0.0 {
            return 0.0;
        }
        (amax * residual.unscale(amax).singular_values().max()).clamp(0.0, 1.0)
    }

    /// Intersection with the kernel of the covector `w`. When the
    /// restriction of `w` to the subspace is below `rank_tol` the covector
    /// is treated as zero and the subspace is returned unchanged (with the
    /// identical basis, so downstream results match bit for bit).
    pub fn kernel_of_covector(&self, w: &DVector<f64>, rank_tol: f64) -> Subspace {
        assert_eq!(w.len(), self.ambient);
        let c = &self.basis * w;
        if c.norm() <= rank_tol * w.norm().max(1.0) {
            return self.clone();
        }
        let k = self.dim();
        // complement of the restricted covector inside basis coordinates
        let coords = Subspace::from_orthonormal_rows(k, vec![c.normalize()]).complement();
        Subspace { ambient: self.ambient, basis: coords.basis * &self.basis }
    }
}

/// Null space of a matrix: the orthogonal complement of its row space.
/// Rows whose residual against the earlier rows falls below `rank_tol`
/// (relative to the row scale) are treated as dependent. The row space is
/// built by Gram-Schmidt rather than an SVD: an SVD smears epsilon-size
/// components into every basis vector even for structurally trivial
/// inputs, and quotient checks divide exactly that noise by approach
/// distances reaching 1e-150 and below.
pub fn nullspace_of(m: &DMatrix<f64>, rank_tol: f64) -> Subspace {
    let n = m.ncols();
    if m.nrows() == 0 {
        return Subspace::full(n);
    }
    let mut rows: Vec<DVector<f64>> = Vec::new();
    for r in m.row_iter() {
        let v = r.transpose();
        let amax = v.amax();
        if amax == 0.0 || !amax.is_finite() {
            continue;
        }
        let v = v.unscale(amax);
        let u = orthogonalize(&rows, &v);
        if u.norm() > rank_tol * v.norm().max(1.0) {
            rows.push(u.normalize());
        }
    }
    Subspace::from_orthonormal_rows(n, rows).complement()
}

/// Numerical rank with the same cut as [`nullspace_of`].
pub fn rank_of(m: &DMatrix<f64>, rank_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().singular_values();
    let cut = rank_tol * sv.max().max(1.0);
    sv.iter().filter(|&&s| s > cut).count()
}
