//! Measurement ensembles, the linear map `𝒜(X) = A vec(X)` and its adjoint,
//! and synthesis of observations `y = 𝒜(X + Z) + w`.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix, SymEigen, Vector};
use crate::rng::{rng_from_seed, Rng};

/// How the rows of `A` were produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ensemble {
    /// i.i.d. `N(0, 1/M)` entries.
    Gaussian,
    /// i.i.d. `±1/√M` entries.
    Bernoulli,
    /// Orthonormal rows, `AAᵀ = I_M`.
    RowOrthonormal,
    /// Orthonormal rows scaled by `√(mn/M)`, so `AAᵀ = (mn/M) I_M`.
    RowOrthonormalScaled,
    UserSupplied,
}

impl Ensemble {
    pub fn as_str(&self) -> &'static str {
        match self {
            Ensemble::Gaussian => "gaussian",
            Ensemble::Bernoulli => "bernoulli",
            Ensemble::RowOrthonormal => "row_orthonormal",
            Ensemble::RowOrthonormalScaled => "row_orthonormal_scaled",
            Ensemble::UserSupplied => "user_supplied",
        }
    }
}

impl fmt::Display for Ensemble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Ensemble {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "gaussian" => Ensemble::Gaussian,
            "bernoulli" => Ensemble::Bernoulli,
            "row_orthonormal" => Ensemble::RowOrthonormal,
            "row_orthonormal_scaled" => Ensemble::RowOrthonormalScaled,
            "user_supplied" => Ensemble::UserSupplied,
            other => return Err(Error::param("ensemble", format!("unknown ensemble `{other}`"))),
        })
    }
}

/// The `M × mn` matrix `A` realizing `𝒜`; row `i` is `vecᵀ(A⁽ⁱ⁾)`.
#[derive(Debug, Clone)]
pub struct MeasurementMap {
    matrix: DenseMatrix,
    rows: usize,
    cols: usize,
    ensemble: Ensemble,
    seed: Option<u64>,
    gram_eigen: OnceLock<SymEigen>,
    rotated: OnceLock<DenseMatrix>,
}

fn check_dims(m: usize, n: usize, measurements: usize) -> Result<()> {
    if m == 0 || n == 0 || measurements == 0 {
        return Err(Error::param("dimensions", format!("m, n, M must be positive (got {m}, {n}, {measurements})")));
    }
    Ok(())
}

/// `M × mn` matrix filled row by row from `draw`, so that the first `M'`
/// rows for a given seed do not depend on `M`.
fn fill_row_major(measurements: usize, len: usize, mut draw: impl FnMut() -> f64) -> DenseMatrix {
    let data: Vec<f64> = (0..measurements * len).map(|_| draw()).collect();
    DMatrix::from_row_slice(measurements, len, &data)
}

impl MeasurementMap {
    pub fn gaussian(m: usize, n: usize, measurements: usize, seed: u64) -> Result<Self> {
        check_dims(m, n, measurements)?;
        let mut rng = rng_from_seed(seed);
        let scale = 1.0 / (measurements as f64).sqrt();
        let a = fill_row_major(measurements, m * n, || {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * scale
        });
        Ok(Self::build(a, m, n, Ensemble::Gaussian, Some(seed)))
    }

    pub fn bernoulli(m: usize, n: usize, measurements: usize, seed: u64) -> Result<Self> {
        check_dims(m, n, measurements)?;
        let mut rng = rng_from_seed(seed);
        let scale = 1.0 / (measurements as f64).sqrt();
        let a = fill_row_major(measurements, m * n, || if rng.gen::<bool>() { scale } else { -scale });
        Ok(Self::build(a, m, n, Ensemble::Bernoulli, Some(seed)))
    }

    /// Orthonormalized Gaussian rows. With `scaled`, the rows are multiplied
    /// by `√(mn/M)` so that `AAᵀ = (mn/M) I`.
    pub fn row_orthonormal(m: usize, n: usize, measurements: usize, seed: u64, scaled: bool) -> Result<Self> {
        check_dims(m, n, measurements)?;
        let len = m * n;
        if measurements > len {
            return Err(Error::param(
                "M",
                format!("row-orthonormal ensemble needs M <= mn ({measurements} > {len})"),
            ));
        }
        let mut rng = rng_from_seed(seed);
        let g = fill_row_major(measurements, len, || StandardNormal.sample(&mut rng));
        let qr = g.transpose().qr();
        let r = qr.r();
        let mut q = qr.q();
        for j in 0..measurements {
            if r[(j, j)] < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        let mut a = q.transpose();
        let ensemble = if scaled {
            a *= (len as f64 / measurements as f64).sqrt();
            Ensemble::RowOrthonormalScaled
        } else {
            Ensemble::RowOrthonormal
        };
        Ok(Self::build(a, m, n, ensemble, Some(seed)))
    }

    pub fn generate(ensemble: Ensemble, m: usize, n: usize, measurements: usize, seed: u64) -> Result<Self> {
        match ensemble {
            Ensemble::Gaussian => Self::gaussian(m, n, measurements, seed),
            Ensemble::Bernoulli => Self::bernoulli(m, n, measurements, seed),
            Ensemble::RowOrthonormal => Self::row_orthonormal(m, n, measurements, seed, false),
            Ensemble::RowOrthonormalScaled => Self::row_orthonormal(m, n, measurements, seed, true),
            Ensemble::UserSupplied => Err(Error::param("ensemble", "user_supplied maps must be loaded, not generated")),
        }
    }

    /// Wrap a user-supplied `M × mn` matrix.
    pub fn from_matrix(matrix: DenseMatrix, m: usize, n: usize) -> Result<Self> {
        check_dims(m, n, matrix.nrows().max(1))?;
        if matrix.ncols() != m * n || matrix.nrows() == 0 {
            return Err(Error::dims(
                format!("M x {} matrix", m * n),
                format!("{}x{}", matrix.nrows(), matrix.ncols()),
            ));
        }
        linalg::ensure_finite(&matrix)?;
        Ok(Self::build(matrix, m, n, Ensemble::UserSupplied, None))
    }

    fn build(matrix: DenseMatrix, rows: usize, cols: usize, ensemble: Ensemble, seed: Option<u64>) -> Self {
        Self {
            matrix,
            rows,
            cols,
            ensemble,
            seed,
            gram_eigen: OnceLock::new(),
            rotated: OnceLock::new(),
        }
    }

    /// Same map with `A` multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self::build(&self.matrix * c, self.rows, self.cols, self.ensemble, self.seed)
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    /// `(m, n)` of the matrices being measured.
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn measurements(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ensemble(&self) -> Ensemble {
        self.ensemble
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    fn check_input(&self, x: &DenseMatrix) -> Result<()> {
        if x.shape() != (self.rows, self.cols) {
            return Err(Error::dims(
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", x.nrows(), x.ncols()),
            ));
        }
        Ok(())
    }

    /// `A vec(X)`.
    pub fn apply(&self, x: &DenseMatrix) -> Result<Vector> {
        self.check_input(x)?;
        Ok(&self.matrix * linalg::vec(x))
    }

    /// `[tr(Xᵀ A⁽¹⁾), …, tr(Xᵀ A⁽ᴹ⁾)]ᵀ`, evaluated one measurement matrix at a time.
    pub fn apply_trace_form(&self, x: &DenseMatrix) -> Result<Vector> {
        self.check_input(x)?;
        let out = (0..self.measurements())
            .map(|i| {
                let ai = self.measurement_matrix(i);
                (x.transpose() * ai).trace()
            })
            .collect::<Vec<_>>();
        Ok(DVector::from_vec(out))
    }

    /// `unvec(Aᵀ v)`.
    pub fn adjoint(&self, v: &Vector) -> Result<DenseMatrix> {
        if v.len() != self.measurements() {
            return Err(Error::dims(format!("vector of length {}", self.measurements()), format!("{}", v.len())));
        }
        linalg::unvec(&self.matrix.tr_mul(v), self.rows, self.cols)
    }

    /// The `i`-th measurement matrix `A⁽ⁱ⁾` (row `i` of `A`, un-vectorized).
    pub fn measurement_matrix(&self, i: usize) -> DenseMatrix {
        let row: Vec<f64> = self.matrix.row(i).iter().copied().collect();
        DMatrix::from_column_slice(self.rows, self.cols, &row)
    }

    /// `AAᵀ`, exactly symmetric.
    pub fn gram(&self) -> DenseMatrix {
        let mut g = &self.matrix * self.matrix.transpose();
        let n = g.nrows();
        for j in 0..n {
            for i in 0..j {
                let avg = 0.5 * (g[(i, j)] + g[(j, i)]);
                g[(i, j)] = avg;
                g[(j, i)] = avg;
            }
        }
        g
    }

    /// Eigendecomposition of `AAᵀ`, computed once per map.
    pub fn gram_eigen(&self) -> Result<&SymEigen> {
        if let Some(e) = self.gram_eigen.get() {
            return Ok(e);
        }
        let e = linalg::sym_eigen(&self.gram())?;
        Ok(self.gram_eigen.get_or_init(|| e))
    }

    /// `QᵀA` for the eigenvectors `Q` of `AAᵀ`, computed once per map.
    pub fn rotated(&self) -> Result<&DenseMatrix> {
        if let Some(r) = self.rotated.get() {
            return Ok(r);
        }
        let r = self.gram_eigen()?.vectors.transpose() * &self.matrix;
        Ok(self.rotated.get_or_init(|| r))
    }
}

/// Two-term Gaussian mixture contamination of `w` (ξ, κ) and `Z` (η, γ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mixture {
    pub xi: f64,
    pub kappa: f64,
    pub eta: f64,
    pub gamma_mix: f64,
}

impl Mixture {
    pub fn validate(&self) -> Result<()> {
        for (name, frac) in [("xi", self.xi), ("eta", self.eta)] {
            if !(0.0..1.0).contains(&frac) {
                return Err(Error::param(name, format!("must lie in [0, 1), got {frac}")));
            }
        }
        if !(self.kappa >= 1.0) || !self.kappa.is_finite() {
            return Err(Error::param("kappa", format!("must be >= 1, got {}", self.kappa)));
        }
        if !(self.gamma_mix >= 1.0) || !self.gamma_mix.is_finite() {
            return Err(Error::param("gamma_mix", format!("must be >= 1, got {}", self.gamma_mix)));
        }
        Ok(())
    }

    /// Average variance multiplier of `w`: `(1−ξ) + κξ`.
    pub fn meas_weight(&self) -> f64 {
        (1.0 - self.xi) + self.kappa * self.xi
    }

    /// Average variance multiplier of `Z`: `(1−η) + γη`.
    pub fn matrix_weight(&self) -> f64 {
        (1.0 - self.eta) + self.gamma_mix * self.eta
    }
}

/// Noise parameters: `w ~ N(0, σ²I)`, `Z_ij ~ N(0, σ₀²)`, optionally mixtures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub sigma0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixture: Option<Mixture>,
}

impl NoiseSpec {
    pub fn white(sigma: f64, sigma0: f64) -> Self {
        Self {
            sigma,
            sigma0,
            mixture: None,
        }
    }

    pub fn noiseless() -> Self {
        Self::white(0.0, 0.0)
    }

    pub fn with_mixture(mut self, mixture: Mixture) -> Self {
        self.mixture = Some(mixture);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::param("sigma", format!("must be finite and >= 0, got {}", self.sigma)));
        }
        if !(self.sigma0 >= 0.0) || !self.sigma0.is_finite() {
            return Err(Error::param("sigma0", format!("must be finite and >= 0, got {}", self.sigma0)));
        }
        if let Some(mix) = &self.mixture {
            mix.validate()?;
        }
        Ok(())
    }

    /// Effective `(σ², σ₀²)` after averaging over mixture components.
    pub fn effective_variances(&self) -> (f64, f64) {
        let (a, b) = self
            .mixture
            .map(|mx| (mx.meas_weight(), mx.matrix_weight()))
            .unwrap_or((1.0, 1.0));
        (a * self.sigma * self.sigma, b * self.sigma0 * self.sigma0)
    }

    fn meas_sample(&self, rng: &mut Rng) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        match &self.mixture {
            None => self.sigma * z,
            Some(mx) => {
                let outlier = rng.gen::<f64>() < mx.xi;
                let sd = if outlier { self.sigma * mx.kappa.sqrt() } else { self.sigma };
                sd * z
            }
        }
    }

    fn matrix_sample(&self, rng: &mut Rng) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        match &self.mixture {
            None => self.sigma0 * z,
            Some(mx) => {
                let outlier = rng.gen::<f64>() < mx.eta;
                let sd = if outlier { self.sigma0 * mx.gamma_mix.sqrt() } else { self.sigma0 };
                sd * z
            }
        }
    }

    /// Draw one `(Z, w)` pair: `Z` in column-major order, then `w`.
    pub fn sample(&self, m: usize, n: usize, measurements: usize, rng: &mut Rng) -> (DenseMatrix, Vector) {
        let z = DMatrix::from_fn(m, n, |_, _| self.matrix_sample(rng));
        let w = DVector::from_fn(measurements, |_, _| self.meas_sample(rng));
        (z, w)
    }
}

/// A synthesized observation and the parts it was assembled from.
#[derive(Debug, Clone)]
pub struct Observation {
    pub y: Vector,
    pub ground_truth: DenseMatrix,
    pub noise_matrix: DenseMatrix,
    pub meas_noise: Vector,
}

impl Observation {
    /// Recompute `A vec(X + Z) + w` from the stored parts.
    pub fn reassemble(&self, map: &MeasurementMap) -> Result<Vector> {
        Ok(map.apply(&(&self.ground_truth + &self.noise_matrix))? + &self.meas_noise)
    }
}

/// `y = 𝒜(X + Z) + w` with noise drawn from the stream seeded by `seed`.
pub fn synthesize(map: &MeasurementMap, x: &DenseMatrix, noise: &NoiseSpec, seed: u64) -> Result<Observation> {
    noise.validate()?;
    let (m, n) = map.shape();
    let mut rng = rng_from_seed(seed);
    let (z, w) = noise.sample(m, n, map.measurements(), &mut rng);
    let y = map.apply(&(x + &z))? + &w;
    Ok(Observation {
        y,
        ground_truth: x.clone(),
        noise_matrix: z,
        meas_noise: w,
    })
}

/// `draws` independent realizations of the folded noise `v = A vec(Z) + w`,
/// one per column.
pub fn folded_noise_batch(map: &MeasurementMap, noise: &NoiseSpec, draws: usize, rng: &mut Rng) -> Result<DenseMatrix> {
    noise.validate()?;
    let (m, n) = map.shape();
    let big_m = map.measurements();
    let mut zs = DMatrix::zeros(m * n, draws);
    let mut ws = DMatrix::zeros(big_m, draws);
    for k in 0..draws {
        let (z, w) = noise.sample(m, n, big_m, rng);
        zs.set_column(k, &linalg::vec(&z));
        ws.set_column(k, &w);
    }
    Ok(map.matrix() * zs + ws)
}

/// `X = X_L X_R` with standard normal `m × r` and `r × n` factors.
pub fn gen_low_rank(m: usize, n: usize, r: usize, seed: u64) -> Result<DenseMatrix> {
    let k = m.min(n);
    if r == 0 || r > k {
        return Err(Error::param("r", format!("rank {r} outside 1..={k}")));
    }
    let mut rng = rng_from_seed(seed);
    let left: DenseMatrix = DMatrix::from_fn(m, r, |_, _| StandardNormal.sample(&mut rng));
    let right: DenseMatrix = DMatrix::from_fn(r, n, |_, _| StandardNormal.sample(&mut rng));
    Ok(left * right)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;

    #[test]
    fn gaussian_shape_matches_experiment_setup() {
        let map = MeasurementMap::gaussian(30, 30, 750, 1).unwrap();
        assert_eq!(map.matrix().shape(), (750, 900));
    }

    #[test]
    fn gaussian_rows_are_prefix_stable_in_m() {
        let small = MeasurementMap::gaussian(4, 5, 10, 9).unwrap();
        let large = MeasurementMap::gaussian(4, 5, 12, 9).unwrap();
        let ratio = (12.0_f64 / 10.0).sqrt();
        let prefix = large.matrix().rows(0, 10) * ratio;
        assert!(max_abs(&(prefix - small.matrix())) < 1e-14);
    }

    #[test]
    fn bernoulli_entries_and_row_norms() {
        let (m, n, big_m) = (6, 5, 12);
        let map = MeasurementMap::bernoulli(m, n, big_m, 3).unwrap();
        let s = 1.0 / (big_m as f64).sqrt();
        assert!(map.matrix().iter().all(|v| *v == s || *v == -s));
        for i in 0..big_m {
            let nrm2: f64 = map.matrix().row(i).iter().map(|v| v * v).sum();
            assert!((nrm2 - (m * n) as f64 / big_m as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn row_orthonormal_gram_is_identity() {
        let map = MeasurementMap::row_orthonormal(5, 6, 20, 4, false).unwrap();
        let dev = max_abs(&(map.gram() - DMatrix::identity(20, 20)));
        assert!(dev <= 1e-10, "{dev}");
        let scaled = MeasurementMap::row_orthonormal(5, 6, 20, 4, true).unwrap();
        let dev = max_abs(&(scaled.gram() - DMatrix::identity(20, 20) * 1.5));
        assert!(dev <= 1e-10, "{dev}");
        assert!(MeasurementMap::row_orthonormal(2, 2, 5, 4, false).is_err());
    }

    #[test]
    fn apply_basic_cases() {
        let map = MeasurementMap::gaussian(3, 4, 5, 8).unwrap();
        assert_eq!(map.apply(&DMatrix::zeros(3, 4)).unwrap(), DVector::zeros(5));
        assert!(map.apply(&DMatrix::zeros(4, 3)).is_err());

        // single measurement E_11
        let mut a = DMatrix::zeros(1, 6);
        a[(0, 0)] = 1.0;
        let e11 = MeasurementMap::from_matrix(a, 2, 3).unwrap();
        let x = DMatrix::from_row_slice(2, 3, &[7.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(e11.apply(&x).unwrap()[0], 7.0);
    }

    #[test]
    fn trace_form_matches_vec_form() {
        let map = MeasurementMap::gaussian(4, 3, 7, 2).unwrap();
        let x = gen_low_rank(4, 3, 3, 5).unwrap();
        let a = map.apply(&x).unwrap();
        let b = map.apply_trace_form(&x).unwrap();
        assert!((a - b).amax() <= 1e-12);
    }

    #[test]
    fn adjoint_cases() {
        let map = MeasurementMap::bernoulli(3, 4, 6, 2).unwrap();
        assert_eq!(map.adjoint(&DVector::zeros(6)).unwrap(), DMatrix::zeros(3, 4));
        let mut e = DVector::zeros(6);
        e[2] = 1.0;
        assert_eq!(map.adjoint(&e).unwrap(), map.measurement_matrix(2));
        assert!(map.adjoint(&DVector::zeros(5)).is_err());
    }

    #[test]
    fn noiseless_synthesis_is_exact() {
        let map = MeasurementMap::gaussian(4, 4, 9, 1).unwrap();
        let x = gen_low_rank(4, 4, 2, 3).unwrap();
        let obs = synthesize(&map, &x, &NoiseSpec::noiseless(), 5).unwrap();
        assert_eq!(obs.y, map.apply(&x).unwrap());
    }

    #[test]
    fn synthesis_is_reproducible_and_reassembles() {
        let map = MeasurementMap::gaussian(5, 4, 11, 1).unwrap();
        let x = gen_low_rank(5, 4, 2, 3).unwrap();
        let noise = NoiseSpec::white(0.1, 0.2);
        let a = synthesize(&map, &x, &noise, 99).unwrap();
        let b = synthesize(&map, &x, &noise, 99).unwrap();
        assert_eq!(a.y, b.y);
        let back = a.reassemble(&map).unwrap();
        assert!((back - &a.y).amax() <= 1e-12);
    }

    #[test]
    fn low_rank_generation() {
        let x = gen_low_rank(30, 30, 6, 12).unwrap();
        let s = linalg::singular_values(&x).unwrap();
        assert!(s[5] > 1e-8);
        assert!(s[6] / s[0] < 1e-10);

        let full = gen_low_rank(5, 4, 4, 1).unwrap();
        let s = linalg::singular_values(&full).unwrap();
        assert!(s[3] > 1e-8);

        let rank1 = gen_low_rank(5, 6, 1, 2).unwrap();
        for i in 0..4 {
            for j in 0..5 {
                let minor = rank1[(i, j)] * rank1[(i + 1, j + 1)] - rank1[(i, j + 1)] * rank1[(i + 1, j)];
                assert!(minor.abs() < 1e-8);
            }
        }
        assert!(gen_low_rank(3, 3, 0, 1).is_err());
        assert!(gen_low_rank(3, 3, 4, 1).is_err());
    }

    #[test]
    fn noise_spec_validation() {
        assert!(NoiseSpec::white(-1.0, 0.0).validate().is_err());
        let bad = NoiseSpec::white(0.1, 0.1).with_mixture(Mixture {
            xi: 1.0,
            kappa: 2.0,
            eta: 0.0,
            gamma_mix: 2.0,
        });
        assert!(bad.validate().is_err());
        assert_eq!("bernoulli".parse::<Ensemble>().unwrap(), Ensemble::Bernoulli);
        assert!("nope".parse::<Ensemble>().is_err());
    }
}
