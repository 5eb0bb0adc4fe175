//! Batch experiments: Monte-Carlo trials over a parameter grid with paired
//! seeds, aggregated into one row per grid point.
//!
//! Trial `k` owns the seed `derive_seed(base_seed, k)`. The signal, the
//! measurement map and the noise each come from their own child stream, so
//! moving along any axis keeps the other draws fixed. Gaussian and Bernoulli
//! maps fill rows in order, so the map for `M` is a row prefix of the map for
//! any larger `M`, and the noise draws are shared the same way.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::{self, DB_CAP};
use crate::linalg::{self, DenseMatrix};
use crate::rng::{derive_seed, stream};
use crate::sensing::{gen_low_rank, synthesize, Ensemble, MeasurementMap, NoiseSpec};
use crate::solver::{admm_recover, SolverConfig};
use crate::whitening::{whiten, WhitenedSystem};

fn default_trials() -> usize {
    100
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Lambda,
    Rank,
    Measurements,
    Sigma0,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Lambda => "lambda",
            SweepAxis::Rank => "rank",
            SweepAxis::Measurements => "measurements",
            SweepAxis::Sigma0 => "sigma0",
        })
    }
}

/// A one-dimensional grid, optionally repeated for several noise levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub grid: Vec<f64>,
    /// σ₀ values; the grid is swept once per entry. Empty means the
    /// config's own `noise.sigma0`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub series: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub ensemble: Ensemble,
    pub m: usize,
    pub n: usize,
    pub r: usize,
    #[serde(rename = "M")]
    pub measurements: usize,
    pub noise: NoiseSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default = "default_trials")]
    pub n_trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    /// Record wall-clock solver time. Off makes every output byte-stable.
    #[serde(skip, default = "yes")]
    pub timing: bool,
}

/// One concrete parameter combination of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub r: usize,
    pub measurements: usize,
    pub sigma0: f64,
    pub lambda: f64,
}

impl ExperimentConfig {
    /// The standard instance: 30×30, rank 6, `M = 750`, `σ = 0.01`,
    /// `σ₀ = 0.05`, 100 trials.
    pub fn standard(ensemble: Ensemble) -> Self {
        Self {
            ensemble,
            m: 30,
            n: 30,
            r: 6,
            measurements: 750,
            noise: NoiseSpec::white(0.01, 0.05),
            solver: SolverConfig::default(),
            n_trials: default_trials(),
            base_seed: 0,
            sweep: None,
            timing: true,
        }
    }

    pub fn with_sweep(mut self, axis: SweepAxis, grid: Vec<f64>, series: Vec<f64>) -> Self {
        self.sweep = Some(SweepSpec { axis, grid, series });
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::param("m", "matrix dimensions must be positive"));
        }
        if self.n_trials == 0 {
            return Err(Error::param("n_trials", "must be >= 1"));
        }
        if self.ensemble == Ensemble::UserSupplied {
            return Err(Error::param("ensemble", "experiments draw their own maps; user_supplied is not allowed"));
        }
        self.noise.validate()?;
        self.solver.validate()?;
        for p in self.points()? {
            self.check_point(&p)?;
        }
        Ok(())
    }

    fn check_point(&self, p: &GridPoint) -> Result<()> {
        let k = self.m.min(self.n);
        if p.r == 0 || p.r > k {
            return Err(Error::param("r", format!("rank {} outside 1..={k}", p.r)));
        }
        if p.measurements == 0 {
            return Err(Error::param("M", "must be >= 1"));
        }
        if matches!(self.ensemble, Ensemble::RowOrthonormal | Ensemble::RowOrthonormalScaled)
            && p.measurements > self.m * self.n
        {
            return Err(Error::param("M", "orthonormal rows need M <= mn"));
        }
        if !(p.sigma0 >= 0.0) || !p.sigma0.is_finite() {
            return Err(Error::param("sigma0", format!("must be finite and >= 0, got {}", p.sigma0)));
        }
        SolverConfig::with_lambda(p.lambda).validate()
    }

    fn base_point(&self) -> GridPoint {
        GridPoint {
            r: self.r,
            measurements: self.measurements,
            sigma0: self.noise.sigma0,
            lambda: self.solver.lambda,
        }
    }

    /// Grid points in output order: series outer, grid inner.
    pub fn points(&self) -> Result<Vec<GridPoint>> {
        let Some(sweep) = &self.sweep else {
            return Ok(vec![self.base_point()]);
        };
        if sweep.grid.is_empty() {
            return Err(Error::param("grid", "sweep grid must be non-empty"));
        }
        if sweep.axis == SweepAxis::Sigma0 && !sweep.series.is_empty() {
            return Err(Error::param("series", "a sigma0 sweep cannot also carry a sigma0 series"));
        }
        let series = if sweep.series.is_empty() {
            vec![self.noise.sigma0]
        } else {
            sweep.series.clone()
        };
        let as_count = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 && v < u32::MAX as f64 {
                Ok(v as usize)
            } else {
                Err(Error::param("grid", format!("{} axis needs positive integers, got {v}", sweep.axis)))
            }
        };
        let mut out = Vec::with_capacity(series.len() * sweep.grid.len());
        for &s0 in &series {
            for &g in &sweep.grid {
                let mut p = self.base_point();
                p.sigma0 = s0;
                match sweep.axis {
                    SweepAxis::Lambda => p.lambda = g,
                    SweepAxis::Rank => p.r = as_count(g)?,
                    SweepAxis::Measurements => p.measurements = as_count(g)?,
                    SweepAxis::Sigma0 => p.sigma0 = g,
                }
                out.push(p);
            }
        }
        Ok(out)
    }

    /// Lowercase hex SHA-256 of the canonical JSON form of the config.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        format!("{:x}", Sha256::digest(json.as_bytes()))
    }

    fn noise_at(&self, p: &GridPoint) -> NoiseSpec {
        NoiseSpec {
            sigma0: p.sigma0,
            ..self.noise
        }
    }
}

/// The outcome of one trial at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub ensemble: Ensemble,
    pub m: usize,
    pub n: usize,
    pub r: usize,
    #[serde(rename = "M")]
    pub measurements: usize,
    pub sigma: f64,
    pub sigma0: f64,
    pub lambda: f64,
    pub trial: usize,
    pub seed: u64,
    pub snr_db: f64,
    pub rel_err: f64,
    pub psnr_db: Option<f64>,
    pub ssim: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub theta: f64,
    pub delta: f64,
    pub delta_eff: f64,
    /// Solver wall time (0 when timing is off).
    pub runtime_ms: f64,
    /// Set when the trial failed; the metrics are then NaN.
    pub error: Option<String>,
}

impl TrialResult {
    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

/// `‖X − X̂‖_F / ‖X‖_F`.
pub fn relative_error(truth: &DenseMatrix, estimate: &DenseMatrix) -> f64 {
    linalg::frobenius_norm(&(truth - estimate)) / linalg::frobenius_norm(truth)
}

/// `−20·log₁₀(rel_err)`, capped at [`DB_CAP`].
pub fn snr_db(rel_err: f64) -> f64 {
    if rel_err == 0.0 {
        DB_CAP
    } else {
        (-20.0 * rel_err.log10()).min(DB_CAP)
    }
}

#[derive(Default)]
struct TrialCache {
    maps: HashMap<usize, MeasurementMap>,
    signals: HashMap<usize, DenseMatrix>,
    system: Option<(SystemKey, WhitenedSystem)>,
}

#[derive(Clone, Copy, PartialEq)]
struct SystemKey {
    r: usize,
    measurements: usize,
    sigma0: u64,
}

fn run_points(config: &ExperimentConfig, points: &[GridPoint], k: usize) -> Vec<TrialResult> {
    let seed = derive_seed(config.base_seed, k as u64);
    let mut cache = TrialCache::default();
    points
        .iter()
        .map(|p| {
            let mut row = TrialResult {
                ensemble: config.ensemble,
                m: config.m,
                n: config.n,
                r: p.r,
                measurements: p.measurements,
                sigma: config.noise.sigma,
                sigma0: p.sigma0,
                lambda: p.lambda,
                trial: k,
                seed,
                snr_db: f64::NAN,
                rel_err: f64::NAN,
                psnr_db: None,
                ssim: None,
                iterations: 0,
                converged: false,
                theta: f64::NAN,
                delta: f64::NAN,
                delta_eff: f64::NAN,
                runtime_ms: 0.0,
                error: None,
            };
            if let Err(e) = trial_at(config, p, seed, &mut cache, &mut row) {
                row.error = Some(e.to_string());
            }
            row
        })
        .collect()
}

fn trial_at(
    config: &ExperimentConfig,
    p: &GridPoint,
    seed: u64,
    cache: &mut TrialCache,
    row: &mut TrialResult,
) -> Result<()> {
    let (m, n) = (config.m, config.n);
    let key = SystemKey {
        r: p.r,
        measurements: p.measurements,
        sigma0: p.sigma0.to_bits(),
    };
    if !matches!(&cache.system, Some((k, _)) if *k == key) {
        let x = match cache.signals.entry(p.r) {
            std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::hash_map::Entry::Vacant(e) => {
                e.insert(gen_low_rank(m, n, p.r, derive_seed(seed, stream::SIGNAL))?)
            }
        };
        let map = match cache.maps.entry(p.measurements) {
            std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::hash_map::Entry::Vacant(e) => e.insert(MeasurementMap::generate(
                config.ensemble,
                m,
                n,
                p.measurements,
                derive_seed(seed, stream::ENSEMBLE),
            )?),
        };
        let noise = config.noise_at(p);
        let obs = synthesize(map, x, &noise, derive_seed(seed, stream::NOISE))?;
        cache.system = Some((key, whiten(map, &obs.y, &noise)?));
    }
    let system = &cache.system.as_ref().expect("system cached above").1;
    let x = &cache.signals[&p.r];
    row.theta = system.theta;
    row.delta = system.delta;
    row.delta_eff = system.delta_eff;

    let solver = SolverConfig {
        lambda: p.lambda,
        ..config.solver
    };
    let start = Instant::now();
    let out = admm_recover(system, &solver)?;
    if config.timing {
        row.runtime_ms = start.elapsed().as_secs_f64() * 1e3;
    }
    row.rel_err = relative_error(x, &out.x_star);
    row.snr_db = snr_db(row.rel_err);
    row.iterations = out.iterations;
    row.converged = out.converged;
    Ok(())
}

/// Run trial `k` of a config without a sweep (or at its first grid point).
pub fn run_trial(config: &ExperimentConfig, k: usize) -> Result<TrialResult> {
    config.validate()?;
    let points = config.points()?;
    Ok(run_points(config, &points[..1], k).remove(0))
}

/// Every trial at every grid point, in (grid point, trial) order.
///
/// Trials run in parallel on the current rayon pool; the output does not
/// depend on the number of workers.
pub fn sweep_trials(config: &ExperimentConfig) -> Result<Vec<Vec<TrialResult>>> {
    config.validate()?;
    let points = config.points()?;
    let by_trial: Vec<Vec<TrialResult>> = (0..config.n_trials)
        .into_par_iter()
        .map(|k| run_points(config, &points, k))
        .collect();
    let mut by_point: Vec<Vec<TrialResult>> = (0..points.len()).map(|_| Vec::with_capacity(config.n_trials)).collect();
    for trial in by_trial {
        for (i, row) in trial.into_iter().enumerate() {
            by_point[i].push(row);
        }
    }
    Ok(by_point)
}

/// Mean and std of each metric at every grid point.
pub fn sweep(config: &ExperimentConfig) -> Result<Vec<AggregateRow>> {
    Ok(sweep_trials(config)?.iter().map(|rows| aggregate(rows)).collect())
}

/// Welford running mean and (sample) variance.
#[derive(Debug, Clone, Copy, Default)]
pub struct Welford {
    count: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            self.mean
        }
    }

    /// Sample standard deviation; 0 for a single value.
    pub fn std(&self) -> f64 {
        match self.count {
            0 => f64::NAN,
            1 => 0.0,
            c => (self.m2 / (c - 1) as f64).sqrt(),
        }
    }
}

/// One output row. `n_trials` counts the trials that completed; failed
/// trials are left out of every mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub ensemble: Ensemble,
    pub m: usize,
    pub n: usize,
    pub r: usize,
    #[serde(rename = "M")]
    pub measurements: usize,
    pub sigma: f64,
    pub sigma0: f64,
    pub lambda: f64,
    pub n_trials: usize,
    pub mean_snr_db: f64,
    pub std_snr_db: f64,
    pub mean_rel_err: f64,
    pub std_rel_err: f64,
    pub mean_psnr_db: Option<f64>,
    pub mean_ssim: Option<f64>,
    pub mean_iters: f64,
    pub mean_runtime_ms: f64,
}

/// Aggregate the trials of one grid point. Panics on an empty slice.
pub fn aggregate(rows: &[TrialResult]) -> AggregateRow {
    let first = &rows[0];
    let (mut snr, mut rel, mut psnr, mut ssim, mut iters, mut time) = Default::default();
    let push = |w: &mut Welford, v: f64| w.push(v);
    for row in rows.iter().filter(|r| r.is_ok()) {
        push(&mut snr, row.snr_db);
        push(&mut rel, row.rel_err);
        push(&mut iters, row.iterations as f64);
        push(&mut time, row.runtime_ms);
        if let Some(v) = row.psnr_db {
            push(&mut psnr, v);
        }
        if let Some(v) = row.ssim {
            push(&mut ssim, v);
        }
    }
    let optional = |w: &Welford| (w.count() > 0).then(|| w.mean());
    AggregateRow {
        ensemble: first.ensemble,
        m: first.m,
        n: first.n,
        r: first.r,
        measurements: first.measurements,
        sigma: first.sigma,
        sigma0: first.sigma0,
        lambda: first.lambda,
        n_trials: snr.count(),
        mean_snr_db: snr.mean(),
        std_snr_db: snr.std(),
        mean_rel_err: rel.mean(),
        std_rel_err: rel.std(),
        mean_psnr_db: optional(&psnr),
        mean_ssim: optional(&ssim),
        mean_iters: iters.mean(),
        mean_runtime_ms: time.mean(),
    }
}

/// Output column order.
pub const CSV_COLUMNS: [&str; 17] = [
    "ensemble",
    "m",
    "n",
    "r",
    "M",
    "sigma",
    "sigma0",
    "lambda",
    "n_trials",
    "mean_snr_db",
    "std_snr_db",
    "mean_rel_err",
    "std_rel_err",
    "mean_psnr_db",
    "mean_ssim",
    "mean_iters",
    "mean_runtime_ms",
];

/// CSV with a leading `# config_hash=<hash>` line; missing optional metrics
/// are empty fields.
pub fn write_csv<W: Write>(out: W, rows: &[AggregateRow], config_hash: &str) -> Result<()> {
    let mut out = out;
    writeln!(out, "# config_hash={config_hash}")?;
    // the header row comes from the field names of `AggregateRow`
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// `{"config_hash": ..., "rows": [...]}`, pretty-printed.
pub fn write_json<W: Write>(mut out: W, rows: &[AggregateRow], config_hash: &str) -> Result<()> {
    #[derive(Serialize)]
    struct Doc<'a> {
        config_hash: &'a str,
        rows: &'a [AggregateRow],
    }
    serde_json::to_writer_pretty(&mut out, &Doc { config_hash, rows }).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Image study

/// Settings of the grayscale-image study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImageStudy {
    /// Side length of the downscaled image.
    pub size: usize,
    pub r: usize,
    #[serde(rename = "M")]
    pub measurements: usize,
    pub sigma: f64,
    pub sigma0_grid: Vec<f64>,
    pub ensemble: Ensemble,
    pub solver: SolverConfig,
    pub n_trials: usize,
    pub base_seed: u64,
    /// Replace the downscaled image by its best rank-`r` approximation
    /// before measuring it (and use that as the reference).
    pub truncate: bool,
    #[serde(skip, default = "yes")]
    pub timing: bool,
}

impl Default for ImageStudy {
    fn default() -> Self {
        Self {
            size: 30,
            r: 6,
            measurements: 811,
            sigma: 0.01,
            sigma0_grid: vec![0.05, 0.10, 0.15, 0.20],
            ensemble: Ensemble::Gaussian,
            solver: SolverConfig::default(),
            n_trials: 10,
            base_seed: 0,
            truncate: false,
            timing: true,
        }
    }
}

impl ImageStudy {
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        format!("{:x}", Sha256::digest(json.as_bytes()))
    }

    fn as_experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            ensemble: self.ensemble,
            m: self.size,
            n: self.size,
            r: self.r,
            measurements: self.measurements,
            noise: NoiseSpec::white(self.sigma, self.sigma0_grid.first().copied().unwrap_or(0.0)),
            solver: self.solver,
            n_trials: self.n_trials,
            base_seed: self.base_seed,
            sweep: Some(SweepSpec {
                axis: SweepAxis::Sigma0,
                grid: self.sigma0_grid.clone(),
                series: Vec::new(),
            }),
            timing: self.timing,
        }
    }
}

/// Output of [`image_experiment`].
#[derive(Debug, Clone)]
pub struct ImageStudyResult {
    /// The image every recovery is compared against.
    pub reference: DenseMatrix,
    /// One row per σ₀, in grid order.
    pub rows: Vec<AggregateRow>,
    /// Trial-0 recovery for each σ₀.
    pub recovered: Vec<DenseMatrix>,
}

/// Downscale `image` (values in `[0, 1]`), measure it, and recover it at
/// every σ₀ of the study, with paired maps and noise draws across σ₀.
pub fn image_experiment(img: &DenseMatrix, study: &ImageStudy) -> Result<ImageStudyResult> {
    let cfg = study.as_experiment();
    if study.ensemble == Ensemble::UserSupplied || study.n_trials == 0 || study.sigma0_grid.is_empty() {
        return Err(Error::param("image study", "needs a random ensemble, n_trials >= 1 and a non-empty sigma0 grid"));
    }
    cfg.validate()?;
    let small = image::resize_bilinear(img, study.size, study.size)?;
    let reference = if study.truncate {
        linalg::best_rank_r(&small, study.r)?.0
    } else {
        small
    };
    let points = cfg.points()?;
    let trials: Vec<Vec<(TrialResult, Option<DenseMatrix>)>> = (0..study.n_trials)
        .into_par_iter()
        .map(|k| image_trial(&cfg, &reference, &points, k))
        .collect();

    let mut rows = Vec::with_capacity(points.len());
    let mut recovered = Vec::with_capacity(points.len());
    for i in 0..points.len() {
        let per_point: Vec<TrialResult> = trials.iter().map(|t| t[i].0.clone()).collect();
        rows.push(aggregate(&per_point));
        recovered.push(
            trials[0][i]
                .1
                .clone()
                .unwrap_or_else(|| DenseMatrix::zeros(study.size, study.size)),
        );
    }
    Ok(ImageStudyResult { reference, rows, recovered })
}

fn image_trial(
    cfg: &ExperimentConfig,
    reference: &DenseMatrix,
    points: &[GridPoint],
    k: usize,
) -> Vec<(TrialResult, Option<DenseMatrix>)> {
    let seed = derive_seed(cfg.base_seed, k as u64);
    let map = MeasurementMap::generate(cfg.ensemble, cfg.m, cfg.n, cfg.measurements, derive_seed(seed, stream::ENSEMBLE));
    points
        .iter()
        .map(|p| {
            let mut row = TrialResult {
                ensemble: cfg.ensemble,
                m: cfg.m,
                n: cfg.n,
                r: p.r,
                measurements: p.measurements,
                sigma: cfg.noise.sigma,
                sigma0: p.sigma0,
                lambda: p.lambda,
                trial: k,
                seed,
                snr_db: f64::NAN,
                rel_err: f64::NAN,
                psnr_db: None,
                ssim: None,
                iterations: 0,
                converged: false,
                theta: f64::NAN,
                delta: f64::NAN,
                delta_eff: f64::NAN,
                runtime_ms: 0.0,
                error: None,
            };
            let outcome = map.as_ref().map_err(Clone::clone).and_then(|map| {
                let noise = cfg.noise_at(p);
                let obs = synthesize(map, reference, &noise, derive_seed(seed, stream::NOISE))?;
                let system = whiten(map, &obs.y, &noise)?;
                row.theta = system.theta;
                row.delta = system.delta;
                row.delta_eff = system.delta_eff;
                let start = Instant::now();
                let out = admm_recover(&system, &SolverConfig { lambda: p.lambda, ..cfg.solver })?;
                if cfg.timing {
                    row.runtime_ms = start.elapsed().as_secs_f64() * 1e3;
                }
                row.iterations = out.iterations;
                row.converged = out.converged;
                row.rel_err = relative_error(reference, &out.x_star);
                row.snr_db = snr_db(row.rel_err);
                row.psnr_db = Some(image::psnr(reference, &out.x_star)?);
                row.ssim = Some(image::ssim(reference, &out.x_star)?);
                Ok(out.x_star)
            });
            match outcome {
                Ok(x) => (row, Some(x)),
                Err(e) => {
                    row.error = Some(e.to_string());
                    (row, None)
                }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(ensemble: Ensemble) -> ExperimentConfig {
        ExperimentConfig {
            ensemble,
            m: 8,
            n: 8,
            r: 2,
            measurements: 50,
            noise: NoiseSpec::white(0.01, 0.02),
            solver: SolverConfig::default(),
            n_trials: 3,
            base_seed: 11,
            sweep: None,
            timing: false,
        }
    }

    #[test]
    fn snr_definition_and_cap() {
        assert_eq!(snr_db(0.0), DB_CAP);
        assert!((snr_db(0.1) - 20.0).abs() < 1e-12);
        assert_eq!(snr_db(1e-20), DB_CAP);
        for e in [1e-6, 0.003, 0.5, 1.0] {
            assert!((snr_db(e) + 20.0 * e.log10()).abs() < 1e-9);
        }
    }

    #[test]
    fn welford_matches_two_pass() {
        let xs = [1e8 + 1.0, 1e8 + 2.0, 1e8 + 4.0, 1e8 + 7.0];
        let mut w = Welford::default();
        xs.iter().for_each(|x| w.push(*x));
        let mean = xs.iter().sum::<f64>() / 4.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 3.0;
        assert!((w.mean() - mean).abs() < 1e-6);
        assert!((w.std() - var.sqrt()).abs() < 1e-6);
        let mut one = Welford::default();
        one.push(3.0);
        assert_eq!((one.mean(), one.std()), (3.0, 0.0));
    }

    #[test]
    fn points_are_series_major() {
        let cfg = small(Ensemble::Gaussian).with_sweep(SweepAxis::Lambda, vec![1.0, 10.0], vec![0.05, 0.1]);
        let pts = cfg.points().unwrap();
        let got: Vec<(f64, f64)> = pts.iter().map(|p| (p.sigma0, p.lambda)).collect();
        assert_eq!(got, vec![(0.05, 1.0), (0.05, 10.0), (0.1, 1.0), (0.1, 10.0)]);

        let bad = small(Ensemble::Gaussian).with_sweep(SweepAxis::Rank, vec![2.5], vec![]);
        assert!(bad.validate().is_err());
        let empty = small(Ensemble::Gaussian).with_sweep(SweepAxis::Lambda, vec![], vec![]);
        assert!(empty.validate().is_err());
        let double = small(Ensemble::Gaussian).with_sweep(SweepAxis::Sigma0, vec![0.1], vec![0.2]);
        assert!(double.validate().is_err());
    }

    #[test]
    fn noiseless_orthogonal_trial_is_exact() {
        let mut cfg = small(Ensemble::RowOrthonormal);
        cfg.measurements = 64;
        cfg.noise = NoiseSpec::noiseless();
        cfg.solver.lambda = 1e4;
        let t = run_trial(&cfg, 0).unwrap();
        assert!(t.is_ok());
        assert!(t.rel_err <= 1e-4, "rel_err {}", t.rel_err);
        assert!((t.snr_db + 20.0 * t.rel_err.log10()).abs() < 1e-9 || t.snr_db == DB_CAP);
    }

    #[test]
    fn single_point_sweep_equals_trials() {
        let cfg = small(Ensemble::Gaussian);
        let rows = sweep(&cfg).unwrap();
        assert_eq!(rows.len(), 1);
        let trials: Vec<TrialResult> = (0..cfg.n_trials).map(|k| run_trial(&cfg, k).unwrap()).collect();
        assert_eq!(rows[0], aggregate(&trials));
        assert_eq!(rows[0].n_trials, 3);
        assert_eq!(rows[0].mean_psnr_db, None);
    }

    #[test]
    fn cached_points_match_fresh_runs() {
        let cfg = small(Ensemble::Bernoulli).with_sweep(SweepAxis::Measurements, vec![40.0, 50.0], vec![0.02, 0.05]);
        let swept = sweep_trials(&cfg).unwrap();
        for (i, p) in cfg.points().unwrap().iter().enumerate() {
            let mut single = cfg.clone();
            single.sweep = None;
            single.measurements = p.measurements;
            single.noise.sigma0 = p.sigma0;
            let fresh = run_trial(&single, 1).unwrap();
            assert_eq!(swept[i][1], fresh);
        }
    }

    #[test]
    fn failed_trials_are_recorded_in_row() {
        let cfg = small(Ensemble::Gaussian);
        let mut rows: Vec<TrialResult> = (0..3).map(|k| run_trial(&cfg, k).unwrap()).collect();
        rows[1].error = Some("boom".into());
        rows[1].snr_db = f64::NAN;
        let agg = aggregate(&rows);
        assert_eq!(agg.n_trials, 2);
        assert!(agg.mean_snr_db.is_finite());
    }

    #[test]
    fn csv_and_json_layout() {
        let cfg = small(Ensemble::Gaussian);
        let rows = sweep(&cfg).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows, &cfg.config_hash()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), format!("# config_hash={}", cfg.config_hash()));
        assert_eq!(lines.next().unwrap(), CSV_COLUMNS.join(","));
        let fields: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(fields.len(), 17);
        assert_eq!(fields[0], "gaussian");
        assert_eq!(fields[13], "");

        let mut buf = Vec::new();
        write_json(&mut buf, &rows, "h").unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        let keys: Vec<&String> = v["rows"][0].as_object().unwrap().keys().collect();
        let mut want: Vec<&str> = CSV_COLUMNS.to_vec();
        want.sort();
        let mut got: Vec<&str> = keys.iter().map(|s| s.as_str()).collect();
        got.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn config_hash_tracks_content() {
        let a = small(Ensemble::Gaussian);
        let mut b = a.clone();
        assert_eq!(a.config_hash(), b.config_hash());
        b.base_seed += 1;
        assert_ne!(a.config_hash(), b.config_hash());
        assert_eq!(a.config_hash().len(), 64);
    }

    #[test]
    fn constant_image_recovers_well() {
        // the unmeasured noisy image X + Z alone sits at -20 log10(σ₀) = 26 dB;
        // rank-1 recovery must clear it by a wide margin
        let img = DenseMatrix::from_element(64, 64, 0.6);
        let study = ImageStudy {
            sigma0_grid: vec![0.05],
            n_trials: 2,
            timing: false,
            solver: SolverConfig::with_lambda(3.0),
            ..ImageStudy::default()
        };
        let out = image_experiment(&img, &study).unwrap();
        assert_eq!(out.rows.len(), 1);
        let psnr = out.rows[0].mean_psnr_db.unwrap();
        assert!(psnr >= 26.0 + 4.0, "psnr {psnr}");
        assert_eq!(out.recovered[0].shape(), (30, 30));
    }
}
