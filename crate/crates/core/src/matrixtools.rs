//! Dense complex-matrix utilities behind the surface-design updates:
//! Kronecker products, (half-)vectorization, duplication matrices, and
//! regularized Hermitian solves with the monotone power structure the
//! multiplier bisections rely on.
//!
//! Conventions: `vec` stacks columns (column-major), `vech` stacks the
//! lower-triangular part including the diagonal, column by column.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::{CMat, CVec, Error, Result};

// Factorizations go through nalgebra rather than a BLAS backend: threaded
// BLAS kernels are not bitwise reproducible across caller contexts, which
// would break the byte-identical-output contract of seeded sweeps.

pub(crate) fn to_na(a: &CMat) -> DMatrix<Complex64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

pub(crate) fn to_na_vec(v: &CVec) -> DVector<Complex64> {
    DVector::from_fn(v.len(), |i, _| v[i])
}

pub(crate) fn from_na(a: &DMatrix<Complex64>) -> CMat {
    CMat::from_shape_fn((a.nrows(), a.ncols()), |(i, j)| a[(i, j)])
}

pub(crate) fn from_na_vec(v: &DVector<Complex64>) -> CVec {
    CVec::from_iter(v.iter().copied())
}

/// Dense complex matrix product with a fixed summation order.
///
/// Matrix-matrix products use this instead of `.dot()`: the dispatched GEMM
/// kernels behind `.dot()` tile by buffer placement and are not bitwise
/// reproducible across runs, which the seeded sweeps require.
pub fn matmul(a: &CMat, b: &CMat) -> CMat {
    let (m, ka) = a.dim();
    let (kb, n) = b.dim();
    assert_eq!(ka, kb, "matmul inner dimensions differ: {ka} vs {kb}");
    let mut out = CMat::zeros((m, n));
    for i in 0..m {
        for k in 0..ka {
            let aik = a[(i, k)];
            for j in 0..n {
                out[(i, j)] += aik * b[(k, j)];
            }
        }
    }
    out
}

/// Kronecker product `A ⊗ B`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (m, n) = a.dim();
    let (p, q) = b.dim();
    let mut out = CMat::zeros((m * p, n * q));
    for i in 0..m {
        for j in 0..n {
            let aij = a[(i, j)];
            for r in 0..p {
                for s in 0..q {
                    out[(i * p + r, j * q + s)] = aij * b[(r, s)];
                }
            }
        }
    }
    out
}

/// Column-major vectorization `vec(A)`.
pub fn vec_mat(a: &CMat) -> CVec {
    let (m, n) = a.dim();
    let mut out = CVec::zeros(m * n);
    for j in 0..n {
        for i in 0..m {
            out[j * m + i] = a[(i, j)];
        }
    }
    out
}

/// Inverse of [`vec_mat`]: reshape a length `rows*cols` vector into a matrix.
pub fn unvec(v: &CVec, rows: usize, cols: usize) -> CMat {
    assert_eq!(v.len(), rows * cols, "unvec length mismatch");
    let mut out = CMat::zeros((rows, cols));
    for j in 0..cols {
        for i in 0..rows {
            out[(i, j)] = v[j * rows + i];
        }
    }
    out
}

/// Half-vectorization `vech(S)`: entries on and below the diagonal, stacked
/// column by column. Rejects non-square input.
pub fn vech(s: &CMat) -> Result<CVec> {
    let (m, n) = s.dim();
    if m != n {
        return Err(Error::NotSquare { rows: m, cols: n });
    }
    let mut out = CVec::zeros(n * (n + 1) / 2);
    let mut idx = 0;
    for j in 0..n {
        for i in j..n {
            out[idx] = s[(i, j)];
            idx += 1;
        }
    }
    Ok(out)
}

/// Rebuild a symmetric matrix from its half-vectorization.
pub fn unvech_symmetric(v: &CVec, n: usize) -> CMat {
    assert_eq!(v.len(), n * (n + 1) / 2, "unvech length mismatch");
    let mut out = CMat::zeros((n, n));
    let mut idx = 0;
    for j in 0..n {
        for i in j..n {
            out[(i, j)] = v[idx];
            out[(j, i)] = v[idx];
            idx += 1;
        }
    }
    out
}

/// Duplication matrix `D` of order `G`: the 0/1 matrix with
/// `D · vech(S) = vec(S)` for every symmetric `G×G` matrix `S`.
///
/// Each row of `D` selects exactly one half-vectorization entry; columns for
/// off-diagonal pairs carry two ones.
#[derive(Debug, Clone)]
pub struct DuplicationMatrix {
    group_size: usize,
    /// `row_map[r]` is the vech index feeding vec position `r`.
    row_map: Vec<usize>,
}

impl DuplicationMatrix {
    pub fn new(group_size: usize) -> Result<Self> {
        if group_size == 0 {
            return Err(Error::InvalidConfig(
                "duplication matrix requires group size >= 1".into(),
            ));
        }
        let g = group_size;
        let mut row_map = vec![0usize; g * g];
        for j in 0..g {
            for i in j..g {
                // vech position of (i, j), i >= j, column-major lower triangle
                let p = j * g + i - j * (j + 1) / 2;
                row_map[j * g + i] = p;
                row_map[i * g + j] = p;
            }
        }
        Ok(Self {
            group_size,
            row_map,
        })
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    /// Number of half-vectorization entries, `G(G+1)/2`.
    pub fn vech_len(&self) -> usize {
        self.group_size * (self.group_size + 1) / 2
    }

    /// The dense `G² × G(G+1)/2` entry matrix.
    pub fn entries(&self) -> Array2<f64> {
        let mut d = Array2::<f64>::zeros((self.row_map.len(), self.vech_len()));
        for (r, &c) in self.row_map.iter().enumerate() {
            d[(r, c)] = 1.0;
        }
        d
    }

    /// `D · v` for a half-vectorization `v`.
    pub fn expand(&self, v: &CVec) -> CVec {
        assert_eq!(v.len(), self.vech_len());
        CVec::from_iter(self.row_map.iter().map(|&c| v[c]))
    }

    /// `Dᵀ · v` for a full-vectorization `v`.
    pub fn reduce(&self, v: &CVec) -> CVec {
        assert_eq!(v.len(), self.row_map.len());
        let mut out = CVec::zeros(self.vech_len());
        for (r, &c) in self.row_map.iter().enumerate() {
            out[c] += v[r];
        }
        out
    }

    /// `Dᵀ · M · D`, the compression of a `G²×G²` form onto vech coordinates.
    pub fn compress(&self, m: &CMat) -> CMat {
        let n = self.row_map.len();
        assert_eq!(m.dim(), (n, n), "compress expects a G²×G² matrix");
        let mut out = CMat::zeros((self.vech_len(), self.vech_len()));
        for r in 0..n {
            let a = self.row_map[r];
            for c in 0..n {
                let b = self.row_map[c];
                out[(a, b)] += m[(r, c)];
            }
        }
        out
    }
}

/// Hermitian symmetrization `(A + Aᴴ)/2`, used to scrub accumulation noise
/// before factorizations.
pub fn hermitianize(a: &CMat) -> CMat {
    let ah = a.t().mapv(|z| z.conj());
    (a + &ah).mapv(|z| z * 0.5)
}

/// Hermitian eigendecomposition `A = U diag(w) Uᴴ` with eigenvectors in the
/// columns of `U`. Eigenvalues are returned in ascending order.
pub fn eigh_hermitian(a: &CMat) -> Result<(Array1<f64>, CMat)> {
    let se = to_na(a).symmetric_eigen();
    let n = se.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| se.eigenvalues[x].total_cmp(&se.eigenvalues[y]));
    let w = Array1::from_iter(order.iter().map(|&i| se.eigenvalues[i]));
    let u = CMat::from_shape_fn((n, n), |(i, j)| se.eigenvectors[(i, order[j])]);
    Ok((w, u))
}

/// One-shot solve of `(Q + λP) x = e` for Hermitian PSD `Q`, `P`.
///
/// A relative ridge `1e-12·tr(Q+λP)/n` is added before factorizing so that
/// rank-deficient systems (the surface updates are rank-deficient whenever the
/// user count is below the variable dimension) stay solvable. Signals
/// [`Error::SingularSystem`] when the shifted matrix still fails to factorize.
pub fn solve_regularized(q: &CMat, p: &CMat, e: &CVec, lambda: f64) -> Result<CVec> {
    let n = q.nrows();
    if q.dim() != (n, n) || p.dim() != (n, n) {
        return Err(Error::DimensionMismatch(
            "solve_regularized expects square Q and P of equal size".into(),
        ));
    }
    if e.len() != n {
        return Err(Error::DimensionMismatch(
            "solve_regularized rhs length must match Q".into(),
        ));
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidConfig(
            "regularization multiplier must be nonnegative".into(),
        ));
    }
    let mut a = q + &p.mapv(|z| z * lambda);
    let trace: f64 = (0..n).map(|i| a[(i, i)].re).sum();
    let ridge = 1e-12 * trace / n as f64;
    for i in 0..n {
        a[(i, i)] += Complex64::new(ridge, 0.0);
    }
    let chol = to_na(&hermitianize(&a))
        .cholesky()
        .ok_or(Error::SingularSystem)?;
    Ok(from_na_vec(&chol.solve(&to_na_vec(e))))
}

/// Pre-factored solver for the family `θ(λ) = (Q + λP)⁻¹ e` with `P`
/// Hermitian positive definite.
///
/// Internally reduces to the generalized eigenproblem via `P = LLᴴ` and a
/// Hermitian eigendecomposition of `L⁻¹QL⁻ᴴ`, after which every multiplier
/// evaluation costs `O(n)` for the constraint power `θ(λ)ᴴPθ(λ)` and one
/// matrix-vector product for the solution itself. The power is non-increasing
/// in λ, which is what the budget bisections exploit.
pub struct RegularizedSolver {
    /// Eigenvalues of `L⁻¹QL⁻ᴴ`, clamped at zero.
    eigvals: Array1<f64>,
    /// `Uᴴ L⁻¹ e` in the eigenbasis.
    coeffs: CVec,
    /// `L⁻ᴴ U`: maps eigenbasis coefficients back to θ.
    basis: CMat,
}

impl RegularizedSolver {
    pub fn new(q: &CMat, p: &CMat, e: &CVec) -> Result<Self> {
        let n = q.nrows();
        if q.dim() != (n, n) || p.dim() != (n, n) || e.len() != n {
            return Err(Error::DimensionMismatch(
                "RegularizedSolver expects square Q, P and a matching rhs".into(),
            ));
        }
        let chol = to_na(&hermitianize(p))
            .cholesky()
            .ok_or(Error::SingularSystem)?;
        let l = chol.l();
        // S = L⁻¹ Q L⁻ᴴ
        let linv_q = l
            .solve_lower_triangular(&to_na(q))
            .ok_or(Error::SingularSystem)?;
        let s_h = l
            .solve_lower_triangular(&linv_q.adjoint())
            .ok_or(Error::SingularSystem)?;
        let s = hermitianize(&from_na(&s_h.adjoint()));
        let (vals, vecs) = eigh_hermitian(&s)?;
        let eigvals = vals.mapv(|w| w.max(0.0));
        let linv_e = l
            .solve_lower_triangular(&to_na_vec(e))
            .ok_or(Error::SingularSystem)?;
        let coeffs = vecs.t().mapv(|z| z.conj()).dot(&from_na_vec(&linv_e));
        // basis = L⁻ᴴ U, via Lᴴ basis = U
        let basis = l
            .adjoint()
            .solve_upper_triangular(&to_na(&vecs))
            .ok_or(Error::SingularSystem)?;
        Ok(Self {
            eigvals,
            coeffs,
            basis: from_na(&basis),
        })
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    /// Constraint power `θ(λ)ᴴ P θ(λ) = Σ |cᵢ|²/(wᵢ+λ)²`. Returns `+∞` when a
    /// zero eigenvalue carries a nonzero coefficient at λ = 0.
    pub fn power(&self, lambda: f64) -> f64 {
        let mut total = 0.0;
        for (w, c) in self.eigvals.iter().zip(self.coeffs.iter()) {
            let c2 = c.norm_sqr();
            if c2 == 0.0 {
                continue;
            }
            let denom = (w + lambda).max(f64::MIN_POSITIVE);
            total += c2 / (denom * denom);
        }
        total
    }

    /// `θ(λ) = (Q + λP)⁻¹ e`.
    pub fn solve(&self, lambda: f64) -> CVec {
        let y = CVec::from_iter(self.eigvals.iter().zip(self.coeffs.iter()).map(|(w, c)| {
            if c.norm_sqr() == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                c / (w + lambda).max(f64::MIN_POSITIVE)
            }
        }));
        self.basis.dot(&y)
    }
}

/// Structured variant of [`RegularizedSolver`] for systems of the form
/// `(Pᵀ ⊗ Q + λ Pᵀ ⊗ I) vec(X) = vec(Eᴴ)`, i.e. `(Q + λI) X P = Eᴴ`.
///
/// This is the fully-connected surface update, where assembling the Kronecker
/// form explicitly would cost `O(M⁶)` per factorization; working on the
/// factors costs `O(M³)`.
pub struct KronRegularizedSolver {
    q_vecs: CMat,
    q_vals: Array1<f64>,
    p_vecs: CMat,
    p_vals: Array1<f64>,
    /// `Uᴴ Eᴴ V` in the joint eigenbasis.
    w: CMat,
}

impl KronRegularizedSolver {
    /// `q`: Hermitian PSD (nq×nq); `p`: Hermitian PD (np×np); `e_h`: the
    /// right-hand side matrix `Eᴴ` (nq×np).
    pub fn new(q: &CMat, p: &CMat, e_h: &CMat) -> Result<Self> {
        let nq = q.nrows();
        let np = p.nrows();
        if q.dim() != (nq, nq) || p.dim() != (np, np) || e_h.dim() != (nq, np) {
            return Err(Error::DimensionMismatch(
                "KronRegularizedSolver expects Q (nq×nq), P (np×np), Eᴴ (nq×np)".into(),
            ));
        }
        let (qv, qu) = eigh_hermitian(&hermitianize(q))?;
        let (pv, pu) = eigh_hermitian(&hermitianize(p))?;
        if pv.iter().any(|&s| s <= 0.0) {
            return Err(Error::SingularSystem);
        }
        let w = matmul(&matmul(&qu.t().mapv(|z| z.conj()), e_h), &pu);
        Ok(Self {
            q_vecs: qu,
            q_vals: qv.mapv(|w| w.max(0.0)),
            p_vecs: pu,
            p_vals: pv,
            w,
        })
    }

    /// `Tr(X(λ) P X(λ)ᴴ) = Σᵢⱼ |Wᵢⱼ|² / ((wᵢ+λ)² σⱼ)`.
    pub fn power(&self, lambda: f64) -> f64 {
        let mut total = 0.0;
        for (i, w) in self.q_vals.iter().enumerate() {
            let denom = (w + lambda).max(f64::MIN_POSITIVE);
            let inv2 = 1.0 / (denom * denom);
            for (j, sigma) in self.p_vals.iter().enumerate() {
                let c2 = self.w[(i, j)].norm_sqr();
                if c2 > 0.0 {
                    total += c2 * inv2 / sigma;
                }
            }
        }
        total
    }

    /// `X(λ) = (Q + λI)⁻¹ Eᴴ P⁻¹`.
    pub fn solve(&self, lambda: f64) -> CMat {
        let (nq, np) = self.w.dim();
        let mut m = CMat::zeros((nq, np));
        for i in 0..nq {
            let denom = (self.q_vals[i] + lambda).max(f64::MIN_POSITIVE);
            for j in 0..np {
                m[(i, j)] = self.w[(i, j)] / (denom * self.p_vals[j]);
            }
        }
        matmul(&matmul(&self.q_vecs, &m), &self.p_vecs.t().mapv(|z| z.conj()))
    }
}
