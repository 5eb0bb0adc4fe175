//! ADMM for `min ‖U‖_* + (λ/2)‖B vec(X) − ỹ‖²  s.t.  X = U`.
//!
//! Scaled-dual iteration with penalty continuation:
//!
//! ```text
//! X ← argmin (λ/2)‖Bx − ỹ‖² + (ρ/2)‖x − (U − W)‖²
//! U ← svt(X + W, 1/ρ)
//! W ← W + X − U
//! ρ ← min(γρ, ρ_max)        (W rescaled by ρ_old/ρ_new)
//! ```
//!
//! The X-update uses the eigendecomposition `BBᵀ = QΛQᵀ`, computed once per
//! system, so each iteration costs two products with `B`.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix, Vector};
use crate::whitening::WhitenedSystem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Weight of the data-fit term.
    pub lambda: f64,
    pub rho1_init: f64,
    pub gamma_cont: f64,
    pub rho_max: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Record the objective at every iteration.
    #[serde(skip)]
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 3.0,
            rho1_init: 1e-6,
            gamma_cont: 1.1,
            rho_max: 1e10,
            tol: 1e-8,
            max_iter: 500,
            record_trace: false,
        }
    }
}

impl SolverConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda", self.lambda),
            ("rho1_init", self.rho1_init),
            ("rho_max", self.rho_max),
            ("tol", self.tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::param(name, format!("must be positive and finite, got {v}")));
            }
        }
        if !(self.gamma_cont >= 1.0) || !self.gamma_cont.is_finite() {
            return Err(Error::param("gamma_cont", format!("must be >= 1, got {}", self.gamma_cont)));
        }
        if self.rho_max < self.rho1_init {
            return Err(Error::param("rho_max", "must be >= rho1_init"));
        }
        if self.max_iter == 0 {
            return Err(Error::param("max_iter", "must be >= 1"));
        }
        Ok(())
    }
}

/// Stopping quantities, all in the entrywise max norm except `rel_change`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Residuals {
    /// `‖X^{j+1} − X^j‖_∞`.
    pub x_change: f64,
    /// `‖U^{j+1} − U^j‖_∞`.
    pub u_change: f64,
    /// `‖X − U‖_∞`.
    pub primal: f64,
    /// `‖B vec(X) − ỹ‖_∞`, reported only.
    pub data: f64,
    /// `‖X^{j+1} − X^j‖_F / max(1, ‖X^j‖_F)`.
    pub rel_change: f64,
}

impl Residuals {
    fn within(&self, tol: f64) -> bool {
        self.x_change <= tol && self.u_change <= tol && self.primal <= tol && self.rel_change <= tol
    }
}

#[derive(Debug, Clone)]
pub struct RecoveryResult {
    pub x_star: DenseMatrix,
    pub iterations: usize,
    pub converged: bool,
    pub residuals: Residuals,
    pub objective: f64,
    pub final_rho: f64,
    /// Objective at the low-rank iterate `U` after each iteration, when requested.
    pub trace: Option<Vec<f64>>,
}

/// `‖X‖_* + (λ/2)‖B vec(X) − ỹ‖²`.
pub fn objective(system: &WhitenedSystem, x: &DenseMatrix, lambda: f64) -> Result<f64> {
    let r = system.apply(x)? - &system.y_tilde;
    Ok(linalg::nuclear_norm(x)? + 0.5 * lambda * r.norm_squared())
}

/// Solve `(λBᵀB + ρI)x = rhs` through the `M × M` system
/// `x = (rhs − λBᵀ(ρI + λBBᵀ)^{-1}B rhs)/ρ`.
pub fn solve_normal_equations(b: &DenseMatrix, rhs: &Vector, lambda: f64, rho1: f64) -> Result<Vector> {
    if rhs.len() != b.ncols() {
        return Err(Error::dims(format!("rhs of length {}", b.ncols()), format!("{}", rhs.len())));
    }
    if !(rho1 > 0.0) {
        return Err(Error::param("rho1", format!("must be positive, got {rho1}")));
    }
    if !(lambda >= 0.0) {
        return Err(Error::param("lambda", format!("must be >= 0, got {lambda}")));
    }
    if lambda == 0.0 {
        return Ok(rhs / rho1);
    }
    let big_m = b.nrows();
    let mut k = b * b.transpose() * lambda;
    for i in 0..big_m {
        k[(i, i)] += rho1;
    }
    let chol = Cholesky::new(k).ok_or_else(|| Error::Factorization("ρI + λBBᵀ is not positive definite".into()))?;
    let t = chol.solve(&(b * rhs));
    let x = (rhs - b.tr_mul(&t) * lambda) / rho1;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Factorization("solution is not finite".into()));
    }
    Ok(x)
}

/// Precomputed pieces of the X-update.
struct XStep<'a> {
    /// `Gᵀ = QᵀB`, `M × mn`.
    gt: &'a DenseMatrix,
    /// Eigenvalues of `BBᵀ`.
    lam_b: Vec<f64>,
    /// `Qᵀỹ`.
    qty: Vector,
    weights: Vector,
}

impl<'a> XStep<'a> {
    fn new(system: &'a WhitenedSystem) -> Result<Self> {
        let eig = system.b_gram_eigen()?;
        Ok(Self {
            gt: system.b_rotated()?,
            lam_b: eig.values.iter().map(|v| v.max(0.0)).collect(),
            qty: eig.vectors.tr_mul(&system.y_tilde),
            weights: DVector::zeros(eig.values.len()),
        })
    }

    /// `x = v + G D (Qᵀỹ − Gᵀv)` with `D = diag(λ/(ρ + λΛ))`, which equals the
    /// solution of `(λBᵀB + ρI)x = λBᵀỹ + ρv` without dividing by `ρ`.
    fn solve(&mut self, v: &Vector, lambda: f64, rho: f64) -> Vector {
        let mut t = self.qty.clone();
        t.gemv(-1.0, self.gt, v, 1.0);
        for (i, l) in self.lam_b.iter().enumerate() {
            self.weights[i] = lambda / (rho + lambda * l);
        }
        t.component_mul_assign(&self.weights);
        let mut x = v.clone();
        x.gemv_tr(1.0, self.gt, &t, 1.0);
        x
    }
}

fn inf_norm_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.iter().zip(b.iter()).fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()))
}

fn has_non_finite(x: &DenseMatrix) -> bool {
    x.iter().any(|v| !v.is_finite())
}

pub fn admm_recover(system: &WhitenedSystem, config: &SolverConfig) -> Result<RecoveryResult> {
    config.validate()?;
    let (m, n) = system.shape;
    let lambda = config.lambda;
    let mut step = XStep::new(system)?;

    let mut x = DMatrix::zeros(m, n);
    let mut u = DMatrix::zeros(m, n);
    let mut w = DMatrix::zeros(m, n);
    let mut rho = config.rho1_init;
    let mut residuals = Residuals::default();
    let mut converged = false;
    let mut iterations = 0;
    let mut trace = config.record_trace.then(Vec::new);

    for iter in 1..=config.max_iter {
        iterations = iter;
        let v = linalg::vec(&(&u - &w));
        let x_new = linalg::unvec(&step.solve(&v, lambda, rho), m, n)?;
        if has_non_finite(&x_new) {
            return Err(Error::NonFiniteIterate { iteration: iter });
        }
        let u_new = linalg::svt(&(&x_new + &w), 1.0 / rho)?;
        w += &x_new - &u_new;
        if has_non_finite(&w) {
            return Err(Error::NonFiniteIterate { iteration: iter });
        }

        let dx = &x_new - &x;
        residuals.x_change = dx.amax();
        residuals.u_change = inf_norm_diff(&u_new, &u);
        residuals.primal = inf_norm_diff(&x_new, &u_new);
        residuals.rel_change = dx.norm() / x.norm().max(1.0);
        x = x_new;
        u = u_new;
        if let Some(t) = trace.as_mut() {
            t.push(objective(system, &u, lambda)?);
        }
        if residuals.within(config.tol) {
            converged = true;
            break;
        }

        let rho_next = (config.gamma_cont * rho).min(config.rho_max);
        if rho_next != rho {
            w *= rho / rho_next;
            rho = rho_next;
        }
    }

    let data = system.apply(&x)? - &system.y_tilde;
    residuals.data = data.amax();
    let objective = linalg::nuclear_norm(&x)? + 0.5 * lambda * data.norm_squared();
    Ok(RecoveryResult {
        x_star: x,
        iterations,
        converged,
        residuals,
        objective,
        final_rho: rho,
        trace,
    })
}
