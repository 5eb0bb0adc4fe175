//! Whitening of the folded-noise model.
//!
//! With pre-measurement noise the observation is `y = 𝒜(X) + v` where
//! `v = A vec(Z) + w` has covariance `Σ = σ²I + σ₀²AAᵀ`. Scaling by
//! `Σ₁^{-1/2}`, `Σ₁ = Σ/θ`, `θ = σ² + mnσ₀²/M`, gives the equivalent model
//! `ỹ = B vec(X) + u` with white noise `u ~ N(0, θI)`, `B = Σ₁^{-1/2}A`.
//!
//! `Σ₁` is affine in `AAᵀ`, so one eigendecomposition of `AAᵀ` (cached on the
//! [`MeasurementMap`]) yields `Σ₁^{-1/2}`, `B`, and the spectrum of `BBᵀ`
//! used by the solver.
//!
//! Logarithms in the noise levels are natural logarithms.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix, SymEigen, Vector};
use crate::sensing::{MeasurementMap, NoiseSpec};

/// `ỹ = B vec(X) + u` together with the constants describing the transform.
///
/// `B` and `Σ₁^{-1/2}` are kept in the eigenbasis `Q` of `BBᵀ` (which is also
/// the eigenbasis of `AAᵀ`) and only formed densely on request.
#[derive(Debug, Clone)]
pub struct WhitenedSystem {
    pub y_tilde: Vector,
    /// Folded variance `θ` (or `θ′` under mixture noise).
    pub theta: f64,
    /// `‖I − (M/mn)AAᵀ‖`.
    pub delta: f64,
    /// `‖Σ₁ − I‖`.
    pub delta_eff: f64,
    /// `δ/(1−δ)`; `None` when `δ >= 1`.
    pub delta1: Option<f64>,
    /// `(m, n)` of the unknown matrix.
    pub shape: (usize, usize),
    /// Eigenvalues of `Σ₁` raised to the floor.
    pub clamped: usize,
    measurements: usize,
    /// Spectrum of `Σ₁^{-1/2}` in the basis `Q`; `None` for the identity.
    whitener_spectrum: Option<Vec<f64>>,
    b: OnceLock<DenseMatrix>,
    whitener: OnceLock<DenseMatrix>,
    b_gram: OnceLock<SymEigen>,
    b_rotated: OnceLock<DenseMatrix>,
}

impl WhitenedSystem {
    /// Assemble a system from an explicit `B` and `ỹ` (e.g. read from disk).
    /// The whitener is taken to be the identity.
    pub fn from_parts(
        b: DenseMatrix,
        y_tilde: Vector,
        shape: (usize, usize),
        theta: f64,
        delta: f64,
        delta_eff: f64,
    ) -> Result<Self> {
        if b.ncols() != shape.0 * shape.1 {
            return Err(Error::dims(format!("B with {} columns", shape.0 * shape.1), format!("{}", b.ncols())));
        }
        if y_tilde.len() != b.nrows() {
            return Err(Error::dims(format!("y_tilde of length {}", b.nrows()), format!("{}", y_tilde.len())));
        }
        linalg::ensure_finite(&b)?;
        let system = Self::empty(y_tilde, shape, theta, delta, delta_eff, None);
        let _ = system.b.set(b);
        Ok(system)
    }

    fn empty(
        y_tilde: Vector,
        shape: (usize, usize),
        theta: f64,
        delta: f64,
        delta_eff: f64,
        whitener_spectrum: Option<Vec<f64>>,
    ) -> Self {
        Self {
            measurements: y_tilde.len(),
            y_tilde,
            theta,
            delta,
            delta_eff,
            delta1: delta1_of(delta),
            shape,
            clamped: 0,
            whitener_spectrum,
            b: OnceLock::new(),
            whitener: OnceLock::new(),
            b_gram: OnceLock::new(),
            b_rotated: OnceLock::new(),
        }
    }

    pub fn measurements(&self) -> usize {
        self.measurements
    }

    /// `B = Σ₁^{-1/2}A`, `M × mn`.
    pub fn b(&self) -> &DenseMatrix {
        self.b.get_or_init(|| {
            let q = &self.b_gram.get().expect("spectral form is set when B is not").vectors;
            q * self.b_rotated.get().expect("spectral form is set when B is not")
        })
    }

    /// `Σ₁^{-1/2}`.
    pub fn whitener(&self) -> &DenseMatrix {
        self.whitener.get_or_init(|| match (&self.whitener_spectrum, self.b_gram.get()) {
            (Some(p), Some(eig)) => eig.map_spectrum_indexed(|i, _| p[i]),
            _ => DMatrix::identity(self.measurements, self.measurements),
        })
    }

    /// `ℬ(X) = B vec(X)`.
    pub fn apply(&self, x: &DenseMatrix) -> Result<Vector> {
        if x.shape() != self.shape {
            return Err(Error::dims(format!("{:?}", self.shape), format!("{:?}", x.shape())));
        }
        let v = linalg::vec(x);
        if let Some(b) = self.b.get() {
            return Ok(b * v);
        }
        Ok(&self.b_gram_eigen()?.vectors * (self.b_rotated()? * v))
    }

    /// `‖B vec(X) − ỹ‖₂`.
    pub fn residual_norm(&self, x: &DenseMatrix) -> Result<f64> {
        Ok((self.apply(x)? - &self.y_tilde).norm())
    }

    /// Eigendecomposition of `BBᵀ`.
    pub fn b_gram_eigen(&self) -> Result<&SymEigen> {
        if let Some(e) = self.b_gram.get() {
            return Ok(e);
        }
        let b = self.b();
        let mut g = b * b.transpose();
        let n = g.nrows();
        for j in 0..n {
            for i in 0..j {
                let avg = 0.5 * (g[(i, j)] + g[(j, i)]);
                g[(i, j)] = avg;
                g[(j, i)] = avg;
            }
        }
        let e = linalg::sym_eigen(&g)?;
        Ok(self.b_gram.get_or_init(|| e))
    }

    /// `QᵀB`, where `Q` holds the eigenvectors of [`Self::b_gram_eigen`].
    pub fn b_rotated(&self) -> Result<&DenseMatrix> {
        if let Some(r) = self.b_rotated.get() {
            return Ok(r);
        }
        let q = &self.b_gram_eigen()?.vectors;
        let r = q.transpose() * self.b();
        Ok(self.b_rotated.get_or_init(|| r))
    }

    /// `δ₁′ = δ_eff/(1 − δ_eff)`, the constant of the two-sided bound
    /// `(1−δ₁′)‖𝒜(X)‖² ≤ ‖ℬ(X)‖² ≤ (1+δ₁′)‖𝒜(X)‖²`.
    pub fn delta1_eff(&self) -> Option<f64> {
        delta1_of(self.delta_eff)
    }

    /// Scalar summary, e.g. for file headers.
    pub fn summary(&self) -> WhiteningSummary {
        WhiteningSummary {
            theta: self.theta,
            delta: self.delta,
            delta_eff: self.delta_eff,
            delta1: self.delta1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WhiteningSummary {
    pub theta: f64,
    pub delta: f64,
    pub delta_eff: f64,
    pub delta1: Option<f64>,
}

fn delta1_of(delta: f64) -> Option<f64> {
    (delta < 1.0).then(|| delta / (1.0 - delta))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct WhitenOptions {
    /// Clamp for the spectrum of `Σ₁`; `None` uses `1e-12 · λ_max` and
    /// refuses to whiten a singular covariance.
    pub eig_floor: Option<f64>,
}

/// `Σ = σ²I + σ₀²AAᵀ`. Mixture noise uses the component-averaged
/// variances, i.e. `Σ′`.
pub fn covariance(map: &MeasurementMap, noise: &NoiseSpec) -> Result<DenseMatrix> {
    noise.validate()?;
    let (s2, s02) = noise.effective_variances();
    let big_m = map.measurements();
    Ok(map.gram() * s02 + DMatrix::identity(big_m, big_m) * s2)
}

/// `θ = σ² + mnσ₀²/M`.
pub fn theta(noise: &NoiseSpec, m: usize, n: usize, measurements: usize) -> f64 {
    noise.sigma * noise.sigma + (m * n) as f64 * (noise.sigma0 * noise.sigma0) / measurements as f64
}

/// Folded variance of the whitened noise: `θ` for white noise, `θ′` under a mixture.
pub fn folded_variance(noise: &NoiseSpec, m: usize, n: usize, measurements: usize) -> f64 {
    let (s2, s02) = noise.effective_variances();
    s2 + (m * n) as f64 * s02 / measurements as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureTheta {
    pub theta_prime: f64,
}

/// `θ′ = [(1−ξ)+κξ]σ² + mn[(1−η)+γη]σ₀²/M`.
pub fn mixture_theta(noise: &NoiseSpec, m: usize, n: usize, measurements: usize) -> Result<MixtureTheta> {
    let mix = noise
        .mixture
        .ok_or_else(|| Error::param("mixture", "mixture parameters are required"))?;
    mix.validate()?;
    Ok(MixtureTheta {
        theta_prime: folded_variance(noise, m, n, measurements),
    })
}

/// `δ = ‖I − (M/mn)AAᵀ‖` together with the matrix `I − (M/mn)AAᵀ`.
pub fn delta(map: &MeasurementMap) -> Result<(f64, DenseMatrix)> {
    let big_m = map.measurements();
    let (m, n) = map.shape();
    let c = big_m as f64 / (m * n) as f64;
    let dev = DMatrix::identity(big_m, big_m) - map.gram() * c;
    Ok((delta_value(map)?, dev))
}

/// `δ` from the cached spectrum of `AAᵀ`.
pub fn delta_value(map: &MeasurementMap) -> Result<f64> {
    let (m, n) = map.shape();
    let c = map.measurements() as f64 / (m * n) as f64;
    let eig = map.gram_eigen()?;
    Ok(eig.values.iter().fold(0.0_f64, |acc, l| acc.max((1.0 - c * l).abs())))
}

pub fn whiten(map: &MeasurementMap, y: &Vector, noise: &NoiseSpec) -> Result<WhitenedSystem> {
    whiten_with(map, y, noise, WhitenOptions::default())
}

pub fn whiten_with(map: &MeasurementMap, y: &Vector, noise: &NoiseSpec, opts: WhitenOptions) -> Result<WhitenedSystem> {
    noise.validate()?;
    let big_m = map.measurements();
    if y.len() != big_m {
        return Err(Error::dims(format!("y of length {big_m}"), format!("{}", y.len())));
    }
    if let Some(f) = opts.eig_floor {
        if !(f > 0.0) || !f.is_finite() {
            return Err(Error::param("eig_floor", format!("must be positive, got {f}")));
        }
    }
    let (m, n) = map.shape();
    let (s2, s02) = noise.effective_variances();
    let theta = folded_variance(noise, m, n, big_m);
    let delta = delta_value(map)?;
    let eig = map.gram_eigen()?;

    if s02 == 0.0 {
        // no matrix noise: Σ₁ = I
        let system = WhitenedSystem::empty(y.clone(), (m, n), theta, delta, 0.0, None);
        let _ = system.b.set(map.matrix().clone());
        let _ = system.b_gram.set(eig.clone());
        let _ = system.b_rotated.set(map.rotated()?.clone());
        return Ok(system);
    }

    // spectrum of Σ₁ in the eigenbasis of AAᵀ
    let mu: Vec<f64> = eig.values.iter().map(|l| (s2 + s02 * l) / theta).collect();
    let mu_max = mu.iter().fold(f64::MIN, |a, b| a.max(*b));
    let mu_min = mu.iter().fold(f64::MAX, |a, b| a.min(*b));
    let floor = match opts.eig_floor {
        Some(f) => f,
        None => {
            let f = linalg::default_eig_floor(mu_max);
            if mu_min <= f {
                return Err(Error::SingularCovariance { min_eigenvalue: mu_min * theta });
            }
            f
        }
    };
    let clamped = mu.iter().filter(|v| **v < floor).count();
    let scale: Vec<f64> = mu.iter().map(|v| 1.0 / v.max(floor).sqrt()).collect();
    let delta_eff = mu.iter().fold(0.0_f64, |acc, v| acc.max((v - 1.0).abs()));

    let q = &eig.vectors;
    let mut qt_b = map.rotated()?.clone();
    for (i, s) in scale.iter().enumerate() {
        qt_b.row_mut(i).scale_mut(*s);
    }
    let mut qt_y = q.tr_mul(y);
    qt_y.component_mul_assign(&DVector::from_column_slice(&scale));
    let y_tilde = q * qt_y;

    // Λ p² is non-decreasing in Λ unless the floor bites; keep pairs aligned either way
    let b_values: Vec<f64> = eig.values.iter().zip(&scale).map(|(l, s)| l * s * s).collect();
    let mut order: Vec<usize> = (0..b_values.len()).collect();
    order.sort_by(|&a, &b| b_values[b].partial_cmp(&b_values[a]).unwrap_or(std::cmp::Ordering::Equal));
    let (b_gram, qt_b, scale) = if order.iter().enumerate().all(|(i, j)| i == *j) {
        (SymEigen { values: DVector::from_vec(b_values), vectors: q.clone() }, qt_b, scale)
    } else {
        let vectors = DMatrix::from_fn(q.nrows(), q.ncols(), |i, j| q[(i, order[j])]);
        let rows = DMatrix::from_fn(qt_b.nrows(), qt_b.ncols(), |i, j| qt_b[(order[i], j)]);
        let values = DVector::from_fn(order.len(), |i, _| b_values[order[i]]);
        let scale = order.iter().map(|&i| scale[i]).collect();
        (SymEigen { values, vectors }, rows, scale)
    };

    let mut system = WhitenedSystem::empty(y_tilde, (m, n), theta, delta, delta_eff, Some(scale));
    system.clamped = clamped;
    let _ = system.b_gram.set(b_gram);
    let _ = system.b_rotated.set(qt_b);
    Ok(system)
}

/// `ε = √(θ(M + 2√(M ln M)))`, the ℓ₂ noise level that `‖u‖₂` stays below
/// with probability at least `1 − 1/M`.
pub fn noise_level_l2(theta: f64, measurements: usize) -> Result<f64> {
    if measurements < 2 {
        return Err(Error::param("M", format!("noise level needs M >= 2, got {measurements}")));
    }
    if !(theta >= 0.0) {
        return Err(Error::param("theta", format!("must be >= 0, got {theta}")));
    }
    let m = measurements as f64;
    Ok((theta * (m + 2.0 * (m * m.ln()).sqrt())).sqrt())
}

/// ℓ_p noise level: `M^{1/p}√(θ(1 + 2√(ln M / M)))` for `1 <= p < 2`, the
/// ℓ₂ level for `p >= 2`.
pub fn noise_level_lp(theta: f64, measurements: usize, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::param("p", format!("needs p >= 1, got {p}")));
    }
    if p >= 2.0 {
        return noise_level_l2(theta, measurements);
    }
    if measurements < 2 {
        return Err(Error::param("M", format!("noise level needs M >= 2, got {measurements}")));
    }
    if !(theta >= 0.0) {
        return Err(Error::param("theta", format!("must be >= 0, got {theta}")));
    }
    let m = measurements as f64;
    Ok(m.powf(1.0 / p) * (theta * (1.0 + 2.0 * (m.ln() / m).sqrt())).sqrt())
}

/// `E‖u‖_p^p = M 2^{p/2} θ′^{p/2} Γ((p+1)/2) / √π` for `u ~ N(0, θ′I_M)`.
pub fn mixture_moment_p(theta_prime: f64, measurements: usize, p: f64) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::param("p", format!("moment order must be > 0, got {p}")));
    }
    let m = measurements as f64;
    Ok(m * 2f64.powf(p / 2.0) * theta_prime.powf(p / 2.0) * statrs::function::gamma::gamma((p + 1.0) / 2.0)
        / std::f64::consts::PI.sqrt())
}
