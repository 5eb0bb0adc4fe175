//! Numerical checks of the recovery theory and evaluators for its bounds.
//!
//! Monte-Carlo estimates here are one-sided. RIP estimates are inner bounds
//! (`mu_hat >= μ_r`, `nu_hat <= ν_r`) and the SSP estimate is an upper bound
//! on `Δ`. NSP constants are inputs: they can be falsified by sampling but
//! never certified.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix, Vector, RANK_TOL};
use crate::rng::{derive_seed, rng_from_seed};
use crate::sensing::{gen_low_rank, MeasurementMap, NoiseSpec};
use crate::whitening::{self, WhitenedSystem};

/// A linear map `ℝ^{m×n} → ℝ^M`.
pub trait MatrixOperator {
    fn input_shape(&self) -> (usize, usize);
    fn output_len(&self) -> usize;
    fn measure(&self, x: &DenseMatrix) -> Result<Vector>;
    /// Dense `M × mn` representation.
    fn dense(&self) -> &DenseMatrix;
}

impl MatrixOperator for MeasurementMap {
    fn input_shape(&self) -> (usize, usize) {
        self.shape()
    }
    fn output_len(&self) -> usize {
        self.measurements()
    }
    fn measure(&self, x: &DenseMatrix) -> Result<Vector> {
        self.apply(x)
    }
    fn dense(&self) -> &DenseMatrix {
        self.matrix()
    }
}

impl MatrixOperator for WhitenedSystem {
    fn input_shape(&self) -> (usize, usize) {
        self.shape
    }
    fn output_len(&self) -> usize {
        self.measurements()
    }
    fn measure(&self, x: &DenseMatrix) -> Result<Vector> {
        self.apply(x)
    }
    fn dense(&self) -> &DenseMatrix {
        self.b()
    }
}

/// Outcome of a sampled check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub check_name: String,
    pub trials: usize,
    pub max_violation: f64,
    pub pass: bool,
    /// Set when the hypothesis of the check does not hold, so nothing was asserted.
    pub inconclusive: bool,
}

impl CheckReport {
    fn new(name: &str, trials: usize, max_violation: f64, tol: f64) -> Self {
        Self {
            check_name: name.to_string(),
            trials,
            max_violation,
            pass: max_violation <= tol,
            inconclusive: false,
        }
    }

    fn inconclusive(name: &str) -> Self {
        Self {
            check_name: name.to_string(),
            trials: 0,
            max_violation: 0.0,
            pass: false,
            inconclusive: true,
        }
    }
}

fn gaussian_matrix(m: usize, n: usize, seed: u64) -> DenseMatrix {
    let mut rng = rng_from_seed(seed);
    DMatrix::from_fn(m, n, |_, _| StandardNormal.sample(&mut rng))
}

// ---------------------------------------------------------------------------
// RIP

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RipEstimate {
    pub r: usize,
    /// Smallest observed `‖𝒜(X)‖²/‖X‖_F²`; an upper bound on `μ_r`.
    pub mu_hat: f64,
    /// Largest observed ratio; a lower bound on `ν_r`.
    pub nu_hat: f64,
    pub trials: usize,
}

/// Extremes of `‖𝒜(X)‖²/‖X‖_F²` over `trials` random rank-`r` matrices.
/// Trial `k` uses a seed derived from `(seed, k)`, so a run with more trials
/// extends a shorter one.
pub fn estimate_rip_mc<O: MatrixOperator + ?Sized>(op: &O, r: usize, trials: usize, seed: u64) -> Result<RipEstimate> {
    let (m, n) = op.input_shape();
    if r == 0 || r > m.min(n) {
        return Err(Error::param("r", format!("rank {r} outside 1..={}", m.min(n))));
    }
    if trials == 0 {
        return Err(Error::param("trials", "must be >= 1"));
    }
    let mut mu = f64::INFINITY;
    let mut nu = 0.0_f64;
    for k in 0..trials {
        let x = gen_low_rank(m, n, r, derive_seed(seed, k as u64))?;
        let ratio = op.measure(&x)?.norm_squared() / x.norm_squared();
        mu = mu.min(ratio);
        nu = nu.max(ratio);
    }
    Ok(RipEstimate {
        r,
        mu_hat: mu,
        nu_hat: nu,
        trials,
    })
}

// ---------------------------------------------------------------------------
// Whitening sandwich and covariance identities

/// Checks `(1−δ₁′)‖𝒜(X)‖² ≤ ‖ℬ(X)‖² ≤ (1+δ₁′)‖𝒜(X)‖²` with
/// `δ₁′ = δ_eff/(1−δ_eff)` on `trials` random full-rank `X`. The violation is
/// measured relative to `‖𝒜(X)‖²`.
pub fn check_sandwich(map: &MeasurementMap, system: &WhitenedSystem, trials: usize, seed: u64) -> Result<CheckReport> {
    const NAME: &str = "whitening_sandwich";
    const TOL: f64 = 1e-9;
    if map.shape() != system.shape || map.measurements() != system.measurements() {
        return Err(Error::dims(
            format!("{:?} with {} rows", map.shape(), map.measurements()),
            format!("{:?} with {} rows", system.shape, system.measurements()),
        ));
    }
    let Some(d1) = system.delta1_eff() else {
        return Ok(CheckReport::inconclusive(NAME));
    };
    let (m, n) = map.shape();
    let mut worst = 0.0_f64;
    for k in 0..trials {
        let x = gaussian_matrix(m, n, derive_seed(seed, k as u64));
        let a2 = map.apply(&x)?.norm_squared();
        if a2 == 0.0 {
            continue;
        }
        let q = system.apply(&x)?.norm_squared() / a2;
        worst = worst.max((1.0 - d1) - q).max(q - (1.0 + d1));
    }
    Ok(CheckReport::new(NAME, trials, worst.max(0.0), TOL))
}

/// Both sides of `‖Σ₁ − I‖ = (σ₀²mn/(θM))·δ` and of `‖Σ₁^{-1} − I‖ ≤ δ/(1−δ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CovarianceIdentities {
    pub sigma1_deviation: f64,
    pub scaled_delta: f64,
    pub inverse_deviation: f64,
    /// `None` when `δ >= 1`.
    pub delta1: Option<f64>,
}

impl CovarianceIdentities {
    pub fn equality_error(&self) -> f64 {
        (self.sigma1_deviation - self.scaled_delta).abs()
    }

    /// Amount by which the inverse bound fails; `0` when it holds or does not apply.
    pub fn inverse_violation(&self) -> f64 {
        self.delta1.map_or(0.0, |d1| (self.inverse_deviation - d1).max(0.0))
    }
}

/// Evaluates the two identities from dense matrices: `Σ₁` is formed from the
/// covariance and inverted explicitly.
pub fn covariance_identities(map: &MeasurementMap, noise: &NoiseSpec) -> Result<CovarianceIdentities> {
    let (m, n) = map.shape();
    let big_m = map.measurements();
    let (_, s02) = noise.effective_variances();
    let theta = whitening::folded_variance(noise, m, n, big_m);
    if !(theta > 0.0) {
        return Err(Error::param("noise", "identities need a positive folded variance"));
    }
    let (delta, _) = whitening::delta(map)?;
    let id = DMatrix::identity(big_m, big_m);
    let sigma1 = whitening::covariance(map, noise)? / theta;
    let sigma1_deviation = linalg::spectral_norm(&(&sigma1 - &id))?;
    let inverse = sigma1
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Factorization("Σ₁ is not positive definite".into()))?
        .inverse();
    let inverse_deviation = linalg::spectral_norm(&(inverse - &id))?;
    Ok(CovarianceIdentities {
        sigma1_deviation,
        scaled_delta: s02 * (m * n) as f64 / (theta * big_m as f64) * delta,
        inverse_deviation,
        delta1: (delta < 1.0).then(|| delta / (1.0 - delta)),
    })
}

// ---------------------------------------------------------------------------
// Null space and SSP

/// Orthonormal basis of `ker(A)` as `m × n` matrices, from the right singular
/// vectors of `A` padded to a square `mn × mn` matrix. Singular values below
/// `tol · σ_max` count as zero.
pub fn null_space_of(a: &DenseMatrix, m: usize, n: usize, tol: f64) -> Result<Vec<DenseMatrix>> {
    let mn = m * n;
    if a.ncols() != mn {
        return Err(Error::dims(format!("{mn} columns"), format!("{}", a.ncols())));
    }
    if a.nrows() >= mn {
        // generically injective; a rank-deficient square map still has a kernel
        let s = linalg::singular_values(a)?;
        if s.iter().all(|v| *v > tol * s[0]) {
            return Ok(Vec::new());
        }
    }
    let mut padded = DMatrix::zeros(mn.max(a.nrows()), mn);
    padded.rows_mut(0, a.nrows()).copy_from(a);
    let svd = linalg::svd(&padded)?;
    let smax = svd.singular_values.get(0).copied().unwrap_or(0.0);
    let rank = svd.singular_values.iter().filter(|v| **v > tol * smax).count();
    (rank..mn)
        .map(|j| linalg::unvec(&svd.v.column(j).clone_owned(), m, n))
        .collect()
}

pub fn null_space_basis<O: MatrixOperator + ?Sized>(op: &O, tol: f64) -> Result<Vec<DenseMatrix>> {
    let (m, n) = op.input_shape();
    null_space_of(op.dense(), m, n, tol)
}

/// Worst `‖𝒪(V)‖₂ / (‖𝒪‖·‖V‖_F)` over the given matrices.
pub fn max_scaled_image<O: MatrixOperator + ?Sized>(op: &O, vs: &[DenseMatrix]) -> Result<f64> {
    let norm = linalg::spectral_norm(op.dense())?;
    if norm == 0.0 {
        return Ok(0.0);
    }
    let mut worst = 0.0_f64;
    for v in vs {
        let fro = v.norm();
        if fro > 0.0 {
            worst = worst.max(op.measure(v)?.norm() / (norm * fro));
        }
    }
    Ok(worst)
}

/// Checks `ker 𝒜 = ker ℬ` in both directions: each basis element of one
/// kernel must be annihilated by the other map to `tol · ‖map‖ · ‖V‖_F`.
pub fn check_null_spaces(map: &MeasurementMap, system: &WhitenedSystem, tol: f64) -> Result<CheckReport> {
    let ker_a = null_space_basis(map, RANK_TOL)?;
    let ker_b = null_space_basis(system, RANK_TOL)?;
    let mut worst = max_scaled_image(system, &ker_a)?.max(max_scaled_image(map, &ker_b)?);
    if ker_a.len() != ker_b.len() {
        worst = f64::INFINITY;
    }
    Ok(CheckReport::new("null_space_equality", ker_a.len() + ker_b.len(), worst, tol))
}

/// `‖V‖_*² / ‖V‖_F²`, which lies in `[1, rank V]`.
pub fn ssp_ratio(v: &DenseMatrix) -> Result<f64> {
    let fro2 = v.norm_squared();
    if fro2 == 0.0 {
        return Err(Error::param("V", "ratio is undefined for the zero matrix"));
    }
    let nuc = linalg::nuclear_norm(v)?;
    Ok(nuc * nuc / fro2)
}

/// Random elements of a null space: Gaussian combinations of the basis.
pub fn sample_null_space(basis: &[DenseMatrix], trials: usize, seed: u64) -> Vec<DenseMatrix> {
    let Some(first) = basis.first() else {
        return Vec::new();
    };
    let (m, n) = first.shape();
    (0..trials)
        .map(|k| {
            let mut rng = rng_from_seed(derive_seed(seed, k as u64));
            let mut v = DMatrix::zeros(m, n);
            for b in basis {
                let c: f64 = StandardNormal.sample(&mut rng);
                v += b * c;
            }
            v
        })
        .collect()
}

/// Smallest `‖V‖_*²/‖V‖_F²` over the samples; an upper bound on `Δ`.
/// `None` for an empty sample set.
pub fn ssp_from_samples(samples: &[DenseMatrix]) -> Result<Option<f64>> {
    let mut best: Option<f64> = None;
    for v in samples {
        if v.norm_squared() == 0.0 {
            continue;
        }
        let r = ssp_ratio(v)?;
        best = Some(best.map_or(r, |b: f64| b.min(r)));
    }
    Ok(best)
}

/// Upper bound on the SSP constant from `trials` random null-space elements.
/// `None` when the null space is trivial.
pub fn estimate_ssp<O: MatrixOperator + ?Sized>(op: &O, trials: usize, seed: u64) -> Result<Option<f64>> {
    let basis = null_space_basis(op, RANK_TOL)?;
    ssp_from_samples(&sample_null_space(&basis, trials, seed))
}

// ---------------------------------------------------------------------------
// Null space properties and error bounds

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NspKind {
    /// `‖X_[r]‖_F ≤ (ρ/√r)‖X_[r]ᶜ‖_* + τ‖𝒜(X)‖₂`.
    FrobeniusRobust,
    /// `‖X_[r]‖_* ≤ ρ‖X_[r]ᶜ‖_* + τ‖𝒜(X)‖₂`.
    Stable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NspConstants {
    pub rho: f64,
    pub tau: f64,
    pub r: usize,
    pub kind: NspKind,
}

impl NspConstants {
    pub fn new(rho: f64, tau: f64, r: usize, kind: NspKind) -> Result<Self> {
        let c = Self { rho, tau, r, kind };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::param("rho", format!("must lie in (0, 1), got {}", self.rho)));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::param("tau", format!("must be positive, got {}", self.tau)));
        }
        if self.r == 0 {
            return Err(Error::param("r", "must be >= 1"));
        }
        Ok(())
    }

    /// `lhs − rhs` of the property for `X` under an operator whose image has
    /// norm `image_norm`; positive means the property fails at `X`.
    pub fn margin(&self, x: &DenseMatrix, image_norm: f64) -> Result<f64> {
        let s = linalg::singular_values(x)?;
        let r = self.r.min(s.len());
        let head = &s.as_slice()[..r];
        let tail_nuc: f64 = s.as_slice()[r..].iter().sum();
        let lhs = match self.kind {
            NspKind::FrobeniusRobust => head.iter().map(|v| v * v).sum::<f64>().sqrt(),
            NspKind::Stable => head.iter().sum(),
        };
        let tail_weight = match self.kind {
            NspKind::FrobeniusRobust => self.rho / (self.r as f64).sqrt(),
            NspKind::Stable => self.rho,
        };
        Ok(lhs - tail_weight * tail_nuc - self.tau * image_norm)
    }

    /// Same `ρ` with `τ` inflated to `τ/√(1−δ₁)`: the constants the whitened
    /// map inherits.
    pub fn transferred(&self, delta1: f64) -> Result<Self> {
        check_delta1(delta1)?;
        Ok(Self {
            tau: self.tau / (1.0 - delta1).sqrt(),
            ..*self
        })
    }
}

fn check_delta1(delta1: f64) -> Result<()> {
    if !(0.0..1.0).contains(&delta1) {
        return Err(Error::param("delta1", format!("must lie in [0, 1), got {delta1}")));
    }
    Ok(())
}

fn check_kind(c: &NspConstants, kind: NspKind) -> Result<()> {
    c.validate()?;
    if c.kind != kind {
        return Err(Error::param("kind", format!("expected {kind:?} constants, got {:?}", c.kind)));
    }
    Ok(())
}

/// `(C₁, C₂)` with `C₁ = 2(1+ρ)²/(1−ρ)` and `C₂ = 2(3+ρ)τ/((1−ρ)√(1−δ₁))`.
pub fn theorem2_constants(c: &NspConstants, delta1: f64) -> Result<(f64, f64)> {
    check_kind(c, NspKind::FrobeniusRobust)?;
    check_delta1(delta1)?;
    let rho = c.rho;
    let c1 = 2.0 * (1.0 + rho).powi(2) / (1.0 - rho);
    let c2 = 2.0 * (3.0 + rho) * c.tau / ((1.0 - rho) * (1.0 - delta1).sqrt());
    Ok((c1, c2))
}

/// `C₁‖X_[r]ᶜ‖_*/√r + C₂ε`.
pub fn theorem2_bound(c: &NspConstants, delta1: f64, tail_nuclear: f64, epsilon: f64) -> Result<f64> {
    let (c1, c2) = theorem2_constants(c, delta1)?;
    Ok(c1 * tail_nuclear / (c.r as f64).sqrt() + c2 * epsilon)
}

/// `(D₁, D₂)` with `D₁ = 2(1+ρ)(ρ√r+1)/(1−ρ)` and
/// `D₂ = 2[(1+ρ)√r+2]τ/((1−ρ)√(r(1−δ₁)))`.
pub fn theorem3_constants(c: &NspConstants, delta1: f64, r: usize) -> Result<(f64, f64)> {
    check_kind(c, NspKind::Stable)?;
    check_delta1(delta1)?;
    if r == 0 {
        return Err(Error::param("r", "must be >= 1"));
    }
    let rho = c.rho;
    let sr = (r as f64).sqrt();
    let d1 = 2.0 * (1.0 + rho) * (rho * sr + 1.0) / (1.0 - rho);
    let d2 = 2.0 * ((1.0 + rho) * sr + 2.0) * c.tau / ((1.0 - rho) * (r as f64 * (1.0 - delta1)).sqrt());
    Ok((d1, d2))
}

/// `D₁‖X_[r]ᶜ‖_*/√r + D₂ε`.
pub fn theorem3_bound(c: &NspConstants, delta1: f64, tail_nuclear: f64, epsilon: f64, r: usize) -> Result<f64> {
    let (d1, d2) = theorem3_constants(c, delta1, r)?;
    Ok(d1 * tail_nuclear / (r as f64).sqrt() + d2 * epsilon)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LpBounds {
    pub frobenius_bound: f64,
    pub lp_bound: f64,
}

/// Error bounds for recovery under an ℓ_p data constraint, `1 <= p < 2`:
///
/// ```text
/// ‖X − X*‖_F ≤ 2(1+ρ)²/(1−ρ) · tail/√r + 2τ(3+ρ)/((1−ρ)M^{1/2−1/p}√(1−δ₁)) · ε
/// ‖X − X*‖_p ≤ 2(1+ρ)²/((1−ρ)r^{1−1/p}) · tail + 2τ(3+ρ)r^{1/p−1/2}/((1−ρ)M^{1/2−1/p}√(1−δ₁)) · ε
/// ```
pub fn lp_bounds(
    c: &NspConstants,
    delta1: f64,
    tail_nuclear: f64,
    epsilon: f64,
    r: usize,
    measurements: usize,
    p: f64,
) -> Result<LpBounds> {
    if !(1.0..2.0).contains(&p) {
        return Err(Error::param("p", format!("must lie in [1, 2), got {p}")));
    }
    if r == 0 {
        return Err(Error::param("r", "must be >= 1"));
    }
    check_kind(c, NspKind::FrobeniusRobust)?;
    check_delta1(delta1)?;
    let rho = c.rho;
    let rf = r as f64;
    let m_factor = (measurements as f64).powf(0.5 - 1.0 / p);
    let noise_coef = 2.0 * c.tau * (3.0 + rho) / ((1.0 - rho) * m_factor * (1.0 - delta1).sqrt());
    let c1 = 2.0 * (1.0 + rho).powi(2) / (1.0 - rho);
    Ok(LpBounds {
        frobenius_bound: c1 * tail_nuclear / rf.sqrt() + noise_coef * epsilon,
        lp_bound: c1 / rf.powf(1.0 - 1.0 / p) * tail_nuclear + noise_coef * rf.powf(1.0 / p - 0.5) * epsilon,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NspSearch {
    pub trials: usize,
    /// Largest `lhs − rhs` seen; positive means the constants are falsified.
    pub max_margin: f64,
    pub violations: usize,
}

/// Searches for matrices violating the null space property with constants
/// `c`. Candidates alternate between Gaussian matrices, rank-`r` matrices
/// plus a small perturbation, and random null-space elements.
pub fn nsp_falsify<O: MatrixOperator + ?Sized>(op: &O, c: &NspConstants, trials: usize, seed: u64) -> Result<NspSearch> {
    c.validate()?;
    let (m, n) = op.input_shape();
    let basis = null_space_basis(op, RANK_TOL)?;
    let mut max_margin = f64::NEG_INFINITY;
    let mut violations = 0;
    for x in nsp_candidates(m, n, c.r, &basis, trials, seed)? {
        let margin = c.margin(&x, op.measure(&x)?.norm())?;
        max_margin = max_margin.max(margin);
        if margin > 0.0 {
            violations += 1;
        }
    }
    Ok(NspSearch {
        trials,
        max_margin,
        violations,
    })
}

/// Candidate matrices used by [`nsp_falsify`] and [`check_nsp_transfer`].
pub fn nsp_candidates(
    m: usize,
    n: usize,
    r: usize,
    null_basis: &[DenseMatrix],
    trials: usize,
    seed: u64,
) -> Result<Vec<DenseMatrix>> {
    let r = r.clamp(1, m.min(n));
    let null_samples = sample_null_space(null_basis, trials.div_ceil(3), derive_seed(seed, u64::MAX));
    (0..trials)
        .map(|k| {
            let s = derive_seed(seed, k as u64);
            match (k % 3, null_samples.get(k / 3)) {
                (2, Some(v)) => Ok(v.clone()),
                (1, _) => Ok(gen_low_rank(m, n, r, s)? + gaussian_matrix(m, n, derive_seed(s, 1)) * 1e-2),
                _ => Ok(gaussian_matrix(m, n, s)),
            }
        })
        .collect()
}

/// Sample-level transfer of the null space property to the whitened map:
/// whenever `X` satisfies the property for `𝒜` with `(ρ, τ)`, it must satisfy
/// it for `ℬ` with `(ρ, τ/√(1−δ₁′))`. Counts samples where the first holds
/// and the second fails.
pub fn check_nsp_transfer(
    map: &MeasurementMap,
    system: &WhitenedSystem,
    c: &NspConstants,
    samples: &[DenseMatrix],
) -> Result<CheckReport> {
    let name = match c.kind {
        NspKind::FrobeniusRobust => "nsp_transfer_frobenius_robust",
        NspKind::Stable => "nsp_transfer_stable",
    };
    let Some(d1) = system.delta1_eff().filter(|d| *d < 1.0) else {
        return Ok(CheckReport::inconclusive(name));
    };
    let cb = c.transferred(d1)?;
    let mut worst = 0.0_f64;
    for x in samples {
        let scale = x.norm().max(f64::MIN_POSITIVE);
        if c.margin(x, map.apply(x)?.norm())? <= 0.0 {
            worst = worst.max(cb.margin(x, system.apply(x)?.norm())? / scale);
        }
    }
    Ok(CheckReport::new(name, samples.len(), worst, 1e-9))
}

// ---------------------------------------------------------------------------
// Matrix inequalities

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Inequality {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `‖X_[r]ᶜ‖_p ≤ r^{1/p−1}‖X‖_*` with Schatten norms.
pub fn stechkin_check(x: &DenseMatrix, r: usize, p: f64) -> Result<Inequality> {
    let s = linalg::singular_values(x)?;
    if r == 0 || r > s.len() {
        return Err(Error::param("r", format!("rank {r} outside 1..={}", s.len())));
    }
    let lhs = linalg::lp_norm(&s.as_slice()[r..], p)?;
    let nuclear: f64 = s.iter().sum();
    let rhs = (r as f64).powf(1.0 / p - 1.0) * nuclear;
    Ok(Inequality {
        lhs,
        rhs,
        holds: lhs <= rhs + 1e-9 * rhs.max(1.0),
    })
}

/// `‖X − Y‖_* ≥ Σ|σᵢ(X) − σᵢ(Y)|`.
pub fn sv_perturbation_check(x: &DenseMatrix, y: &DenseMatrix) -> Result<Inequality> {
    if x.shape() != y.shape() {
        return Err(Error::dims(format!("{:?}", x.shape()), format!("{:?}", y.shape())));
    }
    let lhs = linalg::nuclear_norm(&(x - y))?;
    let sx = linalg::singular_values(x)?;
    let sy = linalg::singular_values(y)?;
    let rhs: f64 = sx.iter().zip(sy.iter()).map(|(a, b)| (a - b).abs()).sum();
    Ok(Inequality {
        lhs,
        rhs,
        holds: lhs + 1e-9 * lhs.max(1.0) >= rhs,
    })
}

// ---------------------------------------------------------------------------
// Sample counts

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleRule {
    /// `⌈c₁ r (m+n)⌉`.
    Theorem4 { c1: f64 },
    /// `⌈2.5 r (m+n−r)⌉ + 1`.
    Experiment,
}

impl SampleRule {
    pub const DEFAULT_C1: f64 = 5.0;
}

impl Default for SampleRule {
    fn default() -> Self {
        SampleRule::Theorem4 { c1: Self::DEFAULT_C1 }
    }
}

/// Number of measurements prescribed by `rule`, at least 1.
pub fn sample_count(r: usize, m: usize, n: usize, rule: SampleRule) -> usize {
    let (r, m, n) = (r as f64, m as f64, n as f64);
    let count = match rule {
        SampleRule::Theorem4 { c1 } => (c1 * r * (m + n)).ceil(),
        SampleRule::Experiment => (2.5 * r * (m + n - r)).ceil() + 1.0,
    };
    (count.max(1.0)) as usize
}
