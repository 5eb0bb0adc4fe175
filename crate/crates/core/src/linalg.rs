//! Dense linear algebra primitives: SVD with a fixed sign convention, matrix
//! norms, rank-r truncation, singular value thresholding and the symmetric
//! inverse square root.
//!
//! Matrices are `nalgebra::DMatrix<f64>`. Storage is column-major, so
//! `x.as_slice()` is exactly `vec(X)` (column stacking), the layout used by
//! every measurement map in this crate.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type DenseMatrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Singular values below this fraction of the largest are treated as zero.
pub const RANK_TOL: f64 = 1e-12;

const SYMMETRY_TOL: f64 = 1e-10;

pub fn ensure_finite(x: &DenseMatrix) -> Result<()> {
    for j in 0..x.ncols() {
        for i in 0..x.nrows() {
            if !x[(i, j)].is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

/// Column-stacking vectorization.
pub fn vec(x: &DenseMatrix) -> Vector {
    DVector::from_column_slice(x.as_slice())
}

/// Inverse of [`vec`].
pub fn unvec(v: &Vector, rows: usize, cols: usize) -> Result<DenseMatrix> {
    if v.len() != rows * cols {
        return Err(Error::dims(format!("vector of length {}", rows * cols), format!("{}", v.len())));
    }
    Ok(DMatrix::from_column_slice(rows, cols, v.as_slice()))
}

/// Frobenius inner product `tr(AᵀB)`.
pub fn inner(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
}

/// Entrywise max-abs norm.
pub fn max_abs(x: &DenseMatrix) -> f64 {
    x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Thin SVD `X = U diag(s) Vᵀ` with `k = min(m, n)` columns in `U` and `V`.
///
/// Singular values are non-increasing (stable ordering on ties) and the
/// largest-magnitude entry of every left singular vector is non-negative.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DenseMatrix,
    pub singular_values: Vector,
    pub v: DenseMatrix,
}

impl Svd {
    pub fn reconstruct(&self) -> DenseMatrix {
        let mut us = self.u.clone();
        for (j, s) in self.singular_values.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.transpose()
    }

    /// Numerical rank using the [`RANK_TOL`] relative cutoff.
    pub fn rank(&self) -> usize {
        let smax = self.singular_values.get(0).copied().unwrap_or(0.0);
        if smax == 0.0 {
            return 0;
        }
        self.singular_values.iter().filter(|s| **s > RANK_TOL * smax).count()
    }

    /// `Σ_{i<r} s_i u_i v_iᵀ` for an arbitrary replacement spectrum.
    fn synthesize(&self, values: impl Fn(usize, f64) -> f64) -> DenseMatrix {
        let (m, n) = (self.u.nrows(), self.v.nrows());
        let mut us = DMatrix::zeros(m, self.singular_values.len());
        for (j, s) in self.singular_values.iter().enumerate() {
            let w = values(j, *s);
            if w != 0.0 {
                us.set_column(j, &(self.u.column(j) * w));
            }
        }
        let out = us * self.v.transpose();
        debug_assert_eq!(out.shape(), (m, n));
        out
    }
}

/// Thin SVD from faer, single-threaded. nalgebra's bidiagonal SVD returns
/// wrong factors on some rank-deficient inputs, which breaks SVT on
/// already-thresholded matrices.
fn faer_svd(x: &DenseMatrix, vectors: bool) -> Option<(Vec<f64>, DenseMatrix, DenseMatrix)> {
    use faer::dyn_stack::{MemBuffer, MemStack};
    use faer::linalg::svd::{self, ComputeSvdVectors};

    let (m, n) = x.shape();
    let k = m.min(n);
    let a = faer::MatRef::from_column_major_slice(x.as_slice(), m, n);
    let mut s = faer::diag::Diag::<f64>::zeros(k);
    let mut u = faer::Mat::<f64>::zeros(if vectors { m } else { 0 }, if vectors { k } else { 0 });
    let mut v = faer::Mat::<f64>::zeros(if vectors { n } else { 0 }, if vectors { k } else { 0 });
    let mode = if vectors { ComputeSvdVectors::Thin } else { ComputeSvdVectors::No };
    let par = faer::Par::Seq;
    let params = Default::default();
    let mut mem = MemBuffer::new(svd::svd_scratch::<f64>(m, n, mode, mode, par, params));
    let (uo, vo) = if vectors { (Some(u.as_mut()), Some(v.as_mut())) } else { (None, None) };
    svd::svd(a, s.as_mut(), uo, vo, par, MemStack::new(&mut mem), params).ok()?;
    let values = (0..k).map(|i| s[i]).collect();
    let uu = DMatrix::from_fn(u.nrows(), u.ncols(), |i, j| u[(i, j)]);
    let vv = DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)]);
    Some((values, uu, vv))
}

pub fn svd(x: &DenseMatrix) -> Result<Svd> {
    ensure_finite(x)?;
    let (m, n) = x.shape();
    if m == 0 || n == 0 {
        return Err(Error::param("x", "matrix must be non-empty"));
    }
    let (s, u, v) = faer_svd(x, true).ok_or(Error::SvdNoConvergence { rows: m, cols: n })?;
    let k = s.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap_or(std::cmp::Ordering::Equal));

    let mut uu = DMatrix::zeros(m, k);
    let mut vv = DMatrix::zeros(n, k);
    let mut ss = DVector::zeros(k);
    for (dst, &src) in order.iter().enumerate() {
        let mut ucol = u.column(src).clone_owned();
        let mut vcol = v.column(src).clone_owned();
        if pivot_is_negative(ucol.as_slice()) {
            ucol.neg_mut();
            vcol.neg_mut();
        }
        uu.set_column(dst, &ucol);
        vv.set_column(dst, &vcol);
        ss[dst] = s[src].max(0.0);
    }
    Ok(Svd {
        u: uu,
        singular_values: ss,
        v: vv,
    })
}

/// True when the first entry of largest magnitude is negative.
fn pivot_is_negative(col: &[f64]) -> bool {
    let mut best = 0.0_f64;
    let mut sign_negative = false;
    for &c in col {
        if c.abs() > best {
            best = c.abs();
            sign_negative = c < 0.0;
        }
    }
    sign_negative
}

/// Singular values only, non-increasing.
pub fn singular_values(x: &DenseMatrix) -> Result<Vector> {
    ensure_finite(x)?;
    let (m, n) = x.shape();
    let (raw, _, _) = faer_svd(x, false).ok_or(Error::SvdNoConvergence { rows: m, cols: n })?;
    let mut s: Vec<f64> = raw.iter().map(|v| v.max(0.0)).collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    Ok(DVector::from_vec(s))
}

pub fn nuclear_norm(x: &DenseMatrix) -> Result<f64> {
    Ok(singular_values(x)?.sum())
}

pub fn frobenius_norm(x: &DenseMatrix) -> f64 {
    x.norm()
}

pub fn spectral_norm(s: &DenseMatrix) -> Result<f64> {
    Ok(singular_values(s)?.get(0).copied().unwrap_or(0.0))
}

/// Schatten-p norm, the ℓ_p norm of the singular values.
pub fn schatten_norm(x: &DenseMatrix, p: f64) -> Result<f64> {
    lp_norm(singular_values(x)?.as_slice(), p)
}

/// Split `X` into its best rank-`r` approximation and the residual tail.
pub fn best_rank_r(x: &DenseMatrix, r: usize) -> Result<(DenseMatrix, DenseMatrix)> {
    let k = x.nrows().min(x.ncols());
    if r == 0 || r > k {
        return Err(Error::param("r", format!("rank {r} outside 1..={k}")));
    }
    let f = svd(x)?;
    let head = f.synthesize(|j, s| if j < r { s } else { 0.0 });
    let tail = x - &head;
    Ok((head, tail))
}

/// Singular value soft-thresholding, the proximal map of `tau·‖·‖_*`.
pub fn svt(x: &DenseMatrix, tau: f64) -> Result<DenseMatrix> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::param("tau", format!("threshold must be finite and >= 0, got {tau}")));
    }
    if tau == 0.0 {
        ensure_finite(x)?;
        return Ok(x.clone());
    }
    let f = svd(x)?;
    Ok(f.synthesize(|_, s| (s - tau).max(0.0)))
}

/// Largest violation of the optimality condition `X − Z ∈ tau·∂‖Z‖_*`.
///
/// With `Z = U_r Σ_r V_rᵀ` and `G = (X − Z)/tau`, optimality means
/// `U_rᵀ G V_r = I`, `U_rᵀ G P_V⊥ = 0`, `P_U⊥ G V_r = 0` and
/// `‖P_U⊥ G P_V⊥‖ ≤ 1`. The returned value is the worst of those residuals
/// (entrywise for the equalities, spectral excess for the inequality).
pub fn svt_optimality_residual(x: &DenseMatrix, z: &DenseMatrix, tau: f64) -> Result<f64> {
    if x.shape() != z.shape() {
        return Err(Error::dims(format!("{:?}", x.shape()), format!("{:?}", z.shape())));
    }
    if !(tau > 0.0) {
        return Err(Error::param("tau", "optimality residual needs tau > 0"));
    }
    let (m, n) = x.shape();
    let g = (x - z) / tau;
    let fz = svd(z)?;
    let r = fz.rank();
    let ur = fz.u.columns(0, r).clone_owned();
    let vr = fz.v.columns(0, r).clone_owned();

    let pu = DMatrix::identity(m, m) - &ur * ur.transpose();
    let pv = DMatrix::identity(n, n) - &vr * vr.transpose();

    let core = ur.transpose() * &g * &vr - DMatrix::<f64>::identity(r, r);
    let left = ur.transpose() * &g * &pv;
    let right = &pu * &g * &vr;
    let rest = spectral_norm(&(&pu * &g * &pv))?;

    let mut worst = (rest - 1.0).max(0.0);
    for block in [&core, &left, &right] {
        if block.len() > 0 {
            worst = worst.max(max_abs(block));
        }
    }
    Ok(worst)
}

/// Eigendecomposition of a symmetric matrix, eigenvalues non-increasing.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vector,
    pub vectors: DenseMatrix,
}

impl SymEigen {
    /// Reorder an eigenpair set into non-increasing eigenvalue order.
    pub fn from_unsorted(values: Vector, vectors: DenseMatrix) -> Self {
        let n = values.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap_or(std::cmp::Ordering::Equal));
        if order.iter().enumerate().all(|(i, j)| i == *j) {
            return Self { values, vectors };
        }
        let mut sorted_vectors = DMatrix::zeros(vectors.nrows(), n);
        let mut sorted_values = DVector::zeros(n);
        for (dst, &src) in order.iter().enumerate() {
            sorted_vectors.set_column(dst, &vectors.column(src));
            sorted_values[dst] = values[src];
        }
        Self {
            values: sorted_values,
            vectors: sorted_vectors,
        }
    }

    /// `V f(Λ) Vᵀ`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        self.map_spectrum_indexed(|_, l| f(l))
    }

    /// `V diag(f(i, λ_i)) Vᵀ`.
    pub fn map_spectrum_indexed(&self, f: impl Fn(usize, f64) -> f64) -> DenseMatrix {
        let mut scaled = self.vectors.clone();
        for (j, lam) in self.values.iter().enumerate() {
            scaled.column_mut(j).scale_mut(f(j, *lam));
        }
        let mut out = scaled * self.vectors.transpose();
        symmetrize_in_place(&mut out);
        out
    }

    pub fn max_value(&self) -> f64 {
        self.values.get(0).copied().unwrap_or(0.0)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().last().unwrap_or(0.0)
    }
}

/// Largest entrywise asymmetry `max |S − Sᵀ|`.
pub fn asymmetry(s: &DenseMatrix) -> f64 {
    let n = s.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in 0..j {
            worst = worst.max((s[(i, j)] - s[(j, i)]).abs());
        }
    }
    worst
}

fn symmetrize_in_place(s: &mut DenseMatrix) {
    let n = s.nrows();
    for j in 0..n {
        for i in 0..j {
            let avg = 0.5 * (s[(i, j)] + s[(j, i)]);
            s[(i, j)] = avg;
            s[(j, i)] = avg;
        }
    }
}

fn check_symmetric(s: &DenseMatrix) -> Result<()> {
    if s.nrows() != s.ncols() {
        return Err(Error::dims("square matrix", format!("{}x{}", s.nrows(), s.ncols())));
    }
    let dev = asymmetry(s);
    if dev > SYMMETRY_TOL * max_abs(s).max(1.0) {
        return Err(Error::NotSymmetric { deviation: dev });
    }
    Ok(())
}

pub fn sym_eigen(s: &DenseMatrix) -> Result<SymEigen> {
    ensure_finite(s)?;
    check_symmetric(s)?;
    let n = s.nrows();
    let mut sym = s.clone();
    symmetrize_in_place(&mut sym);
    let (vals, raw_vectors) = faer_sym_eigen(&sym).ok_or(Error::EigenNoConvergence { order: n })?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).unwrap_or(std::cmp::Ordering::Equal));
    let mut vectors = DMatrix::zeros(n, n);
    let mut values = DVector::zeros(n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = raw_vectors.column(src).clone_owned();
        if pivot_is_negative(col.as_slice()) {
            col.neg_mut();
        }
        vectors.set_column(dst, &col);
        values[dst] = vals[src];
    }
    Ok(SymEigen { values, vectors })
}

/// Single-threaded divide-and-conquer eigensolver from faer.
fn faer_sym_eigen(s: &DenseMatrix) -> Option<(Vec<f64>, DenseMatrix)> {
    use faer::dyn_stack::{MemBuffer, MemStack};
    use faer::linalg::evd::{self, ComputeEigenvectors};

    let n = s.nrows();
    if n == 0 {
        return Some((Vec::new(), DMatrix::zeros(0, 0)));
    }
    let a = faer::MatRef::from_column_major_slice(s.as_slice(), n, n);
    let mut vals = faer::diag::Diag::<f64>::zeros(n);
    let mut u = faer::Mat::<f64>::zeros(n, n);
    let par = faer::Par::Seq;
    let params = Default::default();
    let mut mem = MemBuffer::new(evd::self_adjoint_evd_scratch::<f64>(n, ComputeEigenvectors::Yes, par, params));
    evd::self_adjoint_evd(a, vals.as_mut(), Some(u.as_mut()), par, MemStack::new(&mut mem), params).ok()?;
    let values = (0..n).map(|i| vals[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, j| u[(i, j)]);
    Some((values, vectors))
}

/// Default clamp for [`sym_inv_sqrt`]: `1e-12 · λ_max`.
pub fn default_eig_floor(max_eigenvalue: f64) -> f64 {
    (1e-12 * max_eigenvalue).max(f64::MIN_POSITIVE)
}

/// Result of [`sym_inv_sqrt`].
#[derive(Debug, Clone)]
pub struct InvSqrt {
    pub matrix: DenseMatrix,
    /// Floor actually applied to the spectrum.
    pub floor: f64,
    /// Number of eigenvalues raised to the floor.
    pub clamped: usize,
    /// Set when some eigenvalue was `<= 0` after symmetrization.
    pub nonpositive: bool,
}

/// `S^{-1/2}` for symmetric `S`, eigenvalues clamped below at `eig_floor`
/// (default [`default_eig_floor`]).
pub fn sym_inv_sqrt(s: &DenseMatrix, eig_floor: Option<f64>) -> Result<InvSqrt> {
    if let Some(f) = eig_floor {
        if !(f > 0.0) || !f.is_finite() {
            return Err(Error::param("eig_floor", format!("must be positive, got {f}")));
        }
    }
    let eig = sym_eigen(s)?;
    Ok(inv_sqrt_from_eigen(&eig, eig_floor))
}

pub(crate) fn inv_sqrt_from_eigen(eig: &SymEigen, eig_floor: Option<f64>) -> InvSqrt {
    let floor = eig_floor.unwrap_or_else(|| default_eig_floor(eig.max_value()));
    let clamped = eig.values.iter().filter(|l| **l < floor).count();
    let nonpositive = eig.values.iter().any(|l| *l <= 0.0);
    let matrix = eig.map_spectrum(|l| 1.0 / l.max(floor).sqrt());
    InvSqrt {
        matrix,
        floor,
        clamped,
        nonpositive,
    }
}

/// `(Σ|v_i|^p)^{1/p}` for `p >= 1`; `p = ∞` gives the max norm.
pub fn lp_norm(v: &[f64], p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::param("p", format!("l_p norm needs p >= 1, got {p}")));
    }
    if p.is_infinite() {
        return Ok(v.iter().fold(0.0_f64, |m, x| m.max(x.abs())));
    }
    if p == 2.0 {
        return Ok(v.iter().map(|x| x * x).sum::<f64>().sqrt());
    }
    if p == 1.0 {
        return Ok(v.iter().map(|x| x.abs()).sum());
    }
    // scale by the max entry to avoid overflow in |v_i|^p
    let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return Ok(0.0);
    }
    let sum: f64 = v.iter().map(|x| (x.abs() / scale).powf(p)).sum();
    Ok(scale * sum.powf(1.0 / p))
}
