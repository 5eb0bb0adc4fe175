//! Named batches of numerical checks, runnable from the command line.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix};
use crate::rng::{derive_seed, rng_from_seed};
use crate::sensing::{gen_low_rank, synthesize, Ensemble, MeasurementMap, NoiseSpec};
use crate::solver::{admm_recover, solve_normal_equations, SolverConfig};
use crate::theory::{self, CheckReport, NspConstants, NspKind};
use crate::whitening::{whiten, WhitenedSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    All,
    Whitening,
    Rip,
    Nsp,
    Lemmas,
    Solver,
}

impl Suite {
    pub const NAMES: [&'static str; 6] = ["all", "whitening", "rip", "nsp", "lemmas", "solver"];
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "all" => Suite::All,
            "whitening" => Suite::Whitening,
            "rip" => Suite::Rip,
            "nsp" => Suite::Nsp,
            "lemmas" => Suite::Lemmas,
            "solver" => Suite::Solver,
            other => {
                return Err(Error::param(
                    "suite",
                    format!("unknown suite `{other}`, expected one of {}", Suite::NAMES.join(", ")),
                ))
            }
        })
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let i = match self {
            Suite::All => 0,
            Suite::Whitening => 1,
            Suite::Rip => 2,
            Suite::Nsp => 3,
            Suite::Lemmas => 4,
            Suite::Solver => 5,
        };
        f.write_str(Suite::NAMES[i])
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub seed: u64,
    pub pass: bool,
    pub checks: Vec<CheckReport>,
}

impl SuiteReport {
    pub fn failures(&self) -> impl Iterator<Item = &CheckReport> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<SuiteReport> {
    let checks = match suite {
        Suite::All => {
            let mut all = Vec::new();
            for s in [Suite::Whitening, Suite::Rip, Suite::Nsp, Suite::Lemmas, Suite::Solver] {
                all.extend(run_suite(s, seed)?.checks);
            }
            all
        }
        Suite::Whitening => whitening_checks(seed)?,
        Suite::Rip => rip_checks(seed)?,
        Suite::Nsp => nsp_checks(seed)?,
        Suite::Lemmas => lemma_checks(seed)?,
        Suite::Solver => solver_checks(seed)?,
    };
    Ok(SuiteReport {
        suite,
        seed,
        pass: checks.iter().all(|c| c.pass),
        checks,
    })
}

fn report(name: String, trials: usize, max_violation: f64, tol: f64) -> CheckReport {
    CheckReport {
        check_name: name,
        trials,
        max_violation,
        pass: max_violation <= tol,
        inconclusive: false,
    }
}

const ENSEMBLES: [Ensemble; 3] = [Ensemble::Gaussian, Ensemble::Bernoulli, Ensemble::RowOrthonormal];

fn whitened_pair(ensemble: Ensemble, dims: (usize, usize, usize), noise: &NoiseSpec, seed: u64) -> Result<(MeasurementMap, WhitenedSystem)> {
    let (m, n, big_m) = dims;
    let map = MeasurementMap::generate(ensemble, m, n, big_m, derive_seed(seed, 1))?;
    let x = gen_low_rank(m, n, 2.min(m.min(n)), derive_seed(seed, 2))?;
    let obs = synthesize(&map, &x, noise, derive_seed(seed, 3))?;
    let system = whiten(&map, &obs.y, noise)?;
    Ok((map, system))
}

fn whitening_checks(seed: u64) -> Result<Vec<CheckReport>> {
    let noise = NoiseSpec::white(0.01, 0.05);
    let mut out = Vec::new();
    for (i, ens) in ENSEMBLES.into_iter().enumerate() {
        let s = derive_seed(seed, i as u64);
        let (map, system) = whitened_pair(ens, (20, 20, 40), &noise, s)?;
        let mut sandwich = theory::check_sandwich(&map, &system, 200, derive_seed(s, 4))?;
        sandwich.check_name = format!("{}_{ens}", sandwich.check_name);
        out.push(sandwich);

        let ids = theory::covariance_identities(&map, &noise)?;
        let scale = ids.scaled_delta.max(1.0);
        out.push(report(format!("sigma1_deviation_identity_{ens}"), 1, ids.equality_error() / scale, 1e-9));
        out.push(report(format!("sigma1_inverse_bound_{ens}"), 1, ids.inverse_violation(), 1e-9));

        let (small_map, small_sys) = whitened_pair(ens, (8, 8, 40), &noise, derive_seed(s, 5))?;
        let mut ns = theory::check_null_spaces(&small_map, &small_sys, 1e-8)?;
        ns.check_name = format!("{}_{ens}", ns.check_name);
        out.push(ns);
    }
    Ok(out)
}

/// The whitened RIP extremes must sit inside the sandwich around the
/// unwhitened ones, over the same sampled matrices.
fn rip_checks(seed: u64) -> Result<Vec<CheckReport>> {
    let noise = NoiseSpec::white(0.01, 0.05);
    let mut out = Vec::new();
    for (i, ens) in ENSEMBLES.into_iter().enumerate() {
        let s = derive_seed(seed, 10 + i as u64);
        let (map, system) = whitened_pair(ens, (20, 20, 40), &noise, s)?;
        let Some(d1) = system.delta1_eff() else {
            out.push(CheckReport {
                check_name: format!("rip_sandwich_{ens}"),
                trials: 0,
                max_violation: 0.0,
                pass: false,
                inconclusive: true,
            });
            continue;
        };
        for r in [1, 3] {
            let a = theory::estimate_rip_mc(&map, r, 200, derive_seed(s, r as u64))?;
            let b = theory::estimate_rip_mc(&system, r, 200, derive_seed(s, r as u64))?;
            let lo = (1.0 - d1) * a.mu_hat - b.mu_hat;
            let hi = b.nu_hat - (1.0 + d1) * a.nu_hat;
            out.push(report(format!("rip_sandwich_{ens}_r{r}"), 200, lo.max(hi).max(0.0) / a.nu_hat, 1e-9));
        }
    }
    Ok(out)
}

fn nsp_checks(seed: u64) -> Result<Vec<CheckReport>> {
    // measurement noise dominant, so the whitener is close to I and δ₁′ < 1
    let noise = NoiseSpec::white(0.1, 0.01);
    let (m, n) = (8, 8);
    let (map, system) = whitened_pair(Ensemble::Gaussian, (m, n, 48), &noise, derive_seed(seed, 20))?;
    let basis = theory::null_space_basis(&map, linalg::RANK_TOL)?;
    let mut out = Vec::new();
    for (kind, tau) in [(NspKind::FrobeniusRobust, 2.0), (NspKind::Stable, 4.0)] {
        let c = NspConstants::new(0.5, tau, 2, kind)?;
        let samples = theory::nsp_candidates(m, n, 2, &basis, 300, derive_seed(seed, 21))?;
        out.push(theory::check_nsp_transfer(&map, &system, &c, &samples)?);
    }
    Ok(out)
}

fn gaussian(m: usize, n: usize, rng: &mut crate::rng::Rng) -> DenseMatrix {
    DMatrix::from_fn(m, n, |_, _| rng.sample(StandardNormal))
}

fn lemma_checks(seed: u64) -> Result<Vec<CheckReport>> {
    let mut rng = rng_from_seed(derive_seed(seed, 30));
    let trials = 1000;
    let (mut stechkin, mut perturb) = (0.0_f64, 0.0_f64);
    for _ in 0..trials {
        let m = rng.gen_range(2..=8);
        let n = rng.gen_range(2..=8);
        let x = gaussian(m, n, &mut rng);
        let r = rng.gen_range(1..=m.min(n));
        let p = rng.gen_range(1.0..4.0);
        let s = theory::stechkin_check(&x, r, p)?;
        stechkin = stechkin.max((s.lhs - s.rhs) / s.rhs.max(1.0));
        let y = gaussian(m, n, &mut rng);
        let q = theory::sv_perturbation_check(&x, &y)?;
        perturb = perturb.max((q.rhs - q.lhs) / q.lhs.max(1.0));
    }
    Ok(vec![
        report("schatten_tail_bound".into(), trials, stechkin.max(0.0), 1e-9),
        report("singular_value_perturbation".into(), trials, perturb.max(0.0), 1e-9),
    ])
}

fn solver_checks(seed: u64) -> Result<Vec<CheckReport>> {
    let mut out = Vec::new();

    let (m, n) = (6, 6);
    let map = MeasurementMap::generate(Ensemble::RowOrthonormal, m, n, m * n, derive_seed(seed, 40))?;
    let x = gen_low_rank(m, n, 2, derive_seed(seed, 41))?;
    let obs = synthesize(&map, &x, &NoiseSpec::noiseless(), derive_seed(seed, 42))?;
    let system = whiten(&map, &obs.y, &NoiseSpec::noiseless())?;
    let rec = admm_recover(&system, &SolverConfig::with_lambda(1e4))?;
    let rel = (&rec.x_star - &x).norm() / x.norm();
    out.push(report("noiseless_invertible_recovery".into(), 1, rel, 1e-4));

    let mut rng = rng_from_seed(derive_seed(seed, 43));
    let trials = 50;
    let (mut normal, mut prox) = (0.0_f64, 0.0_f64);
    for _ in 0..trials {
        let big_m = rng.gen_range(3..=20);
        let b = gaussian(big_m, 12, &mut rng);
        let rhs = linalg::vec(&gaussian(12, 1, &mut rng));
        let lam = 10f64.powf(rng.gen_range(-2.0..2.0));
        let rho = 10f64.powf(rng.gen_range(-2.0..2.0));
        let v = solve_normal_equations(&b, &rhs, lam, rho)?;
        let lhs = (b.transpose() * &b) * &v * lam + &v * rho;
        normal = normal.max((lhs - &rhs).norm() / rhs.norm());

        let z = gaussian(5, 7, &mut rng);
        let tau = rng.gen_range(0.1..2.0);
        let p = linalg::svt(&z, tau)?;
        prox = prox.max(linalg::svt_optimality_residual(&z, &p, tau)?);
    }
    out.push(report("normal_equation_residual".into(), trials, normal, 1e-8));
    out.push(report("svt_optimality".into(), trials, prox, 1e-8));
    Ok(out)
}
