//! Acceptance gate. Each criterion is one test that prints a single
//! `PASS`/`FAIL` line (written straight to stderr so it shows even when
//! output is captured) and then asserts.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use noisefold::experiments::{self, ExperimentConfig, ImageStudy, SweepAxis, TrialResult};
use noisefold::linalg::{self, DenseMatrix};
use noisefold::matfile;
use noisefold::rng::rng_from_seed;
use noisefold::sensing::{folded_noise_batch, Ensemble, MeasurementMap, Mixture, NoiseSpec};
use noisefold::solver::{admm_recover, solve_normal_equations, SolverConfig};
use noisefold::theory::{self, NspConstants, NspKind};
use noisefold::whitening::{self, whiten};
use rand::Rng;
use rand_distr::StandardNormal;

fn verdict(id: u32, name: &str, pass: bool, detail: &str) {
    let line = format!("[acceptance {id:>2}] {} {name}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

fn gaussian(m: usize, n: usize, rng: &mut impl Rng) -> DenseMatrix {
    DMatrix::from_fn(m, n, |_, _| rng.sample(StandardNormal))
}

const BASE_NOISE: NoiseSpec = NoiseSpec {
    sigma: 0.01,
    sigma0: 0.05,
    mixture: None,
};

// ---------------------------------------------------------------------------

#[test]
fn criterion_01_whitening_sandwich() {
    let mut details = Vec::new();
    let mut pass = true;
    let ensembles = [Ensemble::Gaussian, Ensemble::Bernoulli, Ensemble::RowOrthonormal];
    for (k, (m, n, big_m)) in [(30, 30, 750), (40, 40, 200)].into_iter().enumerate() {
        for (e, ens) in ensembles.into_iter().enumerate() {
            let seed = 100 + 10 * k as u64 + e as u64;
            let map = MeasurementMap::generate(ens, m, n, big_m, seed).unwrap();
            let y = DVector::zeros(big_m);
            let system = whiten(&map, &y, &BASE_NOISE).unwrap();

            // δ₁′-sandwich, asserted only where δ_eff < 1
            let rep = theory::check_sandwich(&map, &system, 1000, seed + 1).unwrap();

            // independent oracle valid for any δ_eff: ‖ℬX‖²/‖𝒜X‖² lies in
            // [1/μ_max, 1/μ_min] with μ the spectrum of Σ₁
            let sigma1 = whitening::covariance(&map, &BASE_NOISE).unwrap() / system.theta;
            let mu = linalg::sym_eigen(&sigma1).unwrap();
            let (lo, hi) = (1.0 / mu.max_value(), 1.0 / mu.min_value());
            let mut rng = rng_from_seed(seed + 2);
            let mut spectral = 0.0_f64;
            for _ in 0..1000 {
                let x = gaussian(m, n, &mut rng);
                let q = system.apply(&x).unwrap().norm_squared() / map.apply(&x).unwrap().norm_squared();
                spectral = spectral.max((lo - q) / lo).max((q - hi) / hi);
            }
            let ok = (rep.inconclusive || rep.pass) && spectral <= 1e-9;
            pass &= ok;
            details.push(format!(
                "{ens}({m},{n},{big_m}) δ_eff={:.3} sandwich={} spectral_violation={:.1e}",
                system.delta_eff,
                if rep.inconclusive {
                    "inconclusive(δ_eff≥1)".to_string()
                } else {
                    format!("{:.1e}", rep.max_violation)
                },
                spectral.max(0.0)
            ));
        }
    }
    verdict(1, "whitening sandwich", pass, &details.join("; "));
}

#[test]
fn criterion_02_covariance_identities() {
    let cases = [
        (Ensemble::Gaussian, 30, 30, 750),
        (Ensemble::Bernoulli, 40, 40, 200),
        (Ensemble::Gaussian, 20, 20, 20),
        (Ensemble::RowOrthonormalScaled, 10, 10, 50),
    ];
    let mut worst_eq = 0.0_f64;
    let mut worst_inv = 0.0_f64;
    let mut applicable = 0;
    for (i, (ens, m, n, big_m)) in cases.into_iter().enumerate() {
        let map = MeasurementMap::generate(ens, m, n, big_m, 200 + i as u64).unwrap();
        let ids = theory::covariance_identities(&map, &BASE_NOISE).unwrap();
        worst_eq = worst_eq.max(ids.equality_error() / ids.scaled_delta.max(1.0));
        if ids.delta1.is_some() {
            applicable += 1;
            worst_inv = worst_inv.max(ids.inverse_violation());
        }
    }
    let pass = worst_eq <= 1e-9 && worst_inv <= 1e-9 && applicable >= 2;
    verdict(
        2,
        "covariance identities",
        pass,
        &format!("equality error {worst_eq:.1e}, inverse-bound violation {worst_inv:.1e} over {applicable} maps with δ<1"),
    );
}

#[test]
fn criterion_03_null_spaces() {
    let mut pass = true;
    let mut details = Vec::new();
    for (i, ens) in [Ensemble::Gaussian, Ensemble::Bernoulli].into_iter().enumerate() {
        let map = MeasurementMap::generate(ens, 10, 10, 60, 300 + i as u64).unwrap();
        let system = whiten(&map, &DVector::zeros(60), &BASE_NOISE).unwrap();
        let ker_a = theory::null_space_basis(&map, linalg::RANK_TOL).unwrap();
        let ker_b = theory::null_space_basis(&system, linalg::RANK_TOL).unwrap();
        let rep = theory::check_null_spaces(&map, &system, 1e-8).unwrap();
        let ok = rep.pass && ker_a.len() == 40 && ker_b.len() == 40;
        pass &= ok;
        details.push(format!("{ens}: dim ker={}/{} max scaled image {:.1e}", ker_a.len(), ker_b.len(), rep.max_violation));
    }
    verdict(3, "null space equality", pass, &details.join("; "));
}

/// Calls `f` on every whitened noise draw `u = Σ₁^{-1/2}(𝒜(Z) + w)`.
fn whitened_noise(map: &MeasurementMap, noise: &NoiseSpec, draws: usize, seed: u64, mut f: impl FnMut(&[f64])) {
    let system = whiten(map, &DVector::zeros(map.measurements()), noise).unwrap();
    let whitener = system.whitener().clone();
    let mut rng = rng_from_seed(seed);
    let batch = 5000;
    let mut done = 0;
    while done < draws {
        let k = batch.min(draws - done);
        let u = &whitener * folded_noise_batch(map, noise, k, &mut rng).unwrap();
        for col in u.column_iter() {
            f(col.as_slice());
        }
        done += k;
    }
}

#[test]
fn criterion_04_noise_folding_factor() {
    let map = MeasurementMap::generate(Ensemble::Gaussian, 30, 30, 750, 400).unwrap();
    let theta = whitening::theta(&BASE_NOISE, 30, 30, 750);
    let (mut sum, mut count) = (0.0, 0usize);
    whitened_noise(&map, &BASE_NOISE, 10_000, 401, |u| {
        sum += u.iter().map(|v| v * v).sum::<f64>();
        count += u.len();
    });
    let var = sum / count as f64;
    let rel = (var / theta - 1.0).abs();
    let pass = (theta - 0.0031).abs() < 1e-12 && rel <= 0.10;
    verdict(
        4,
        "noise folding factor",
        pass,
        &format!(
            "θ={theta:.6} (σ²={:.1e}, folding ×{:.1}), empirical Var(u_i)={var:.6}, rel dev {:.2}%",
            BASE_NOISE.sigma.powi(2),
            theta / BASE_NOISE.sigma.powi(2),
            100.0 * rel
        ),
    );
}

#[test]
fn criterion_05_l2_noise_level() {
    let big_m = 750;
    let theta = 0.0031;
    let eps = whitening::noise_level_l2(theta, big_m).unwrap();
    let map = MeasurementMap::generate(Ensemble::Gaussian, 30, 30, big_m, 500).unwrap();
    let draws = 100_000;
    let mut inside = 0usize;
    whitened_noise(&map, &BASE_NOISE, draws, 501, |u| {
        if u.iter().map(|v| v * v).sum::<f64>().sqrt() <= eps {
            inside += 1;
        }
    });
    let frac = inside as f64 / draws as f64;
    let need = 1.0 - 1.0 / big_m as f64 - 0.002;
    let pass = (eps - 1.662).abs() < 5e-4 && frac >= need;
    verdict(5, "l2 noise level", pass, &format!("ε={eps:.4}, fraction inside {frac:.5} (need ≥ {need:.5})"));
}

#[test]
fn criterion_06_lp_moments() {
    let noise = NoiseSpec::white(0.01, 0.05).with_mixture(Mixture {
        xi: 0.0,
        kappa: 1.0,
        eta: 0.1,
        gamma_mix: 10.0,
    });
    let (m, n, big_m) = (30, 30, 750);
    let theta_p = whitening::mixture_theta(&noise, m, n, big_m).unwrap().theta_prime;
    let map = MeasurementMap::generate(Ensemble::Gaussian, m, n, big_m, 600).unwrap();
    let ps = [1.0, 1.5, 2.0];
    let draws = 100_000;
    let mut sums = [0.0; 3];
    let mut sq2 = 0.0;
    whitened_noise(&map, &noise, draws, 601, |u| {
        for (s, p) in sums.iter_mut().zip(ps) {
            *s += u.iter().map(|v| v.abs().powf(p)).sum::<f64>();
        }
        let e2: f64 = u.iter().map(|v| v * v).sum();
        sq2 += e2 * e2;
    });
    let mut pass = true;
    let mut details = Vec::new();
    for (s, p) in sums.iter().zip(ps) {
        let emp = s / draws as f64;
        let want = whitening::mixture_moment_p(theta_p, big_m, p).unwrap();
        let rel = (emp / want - 1.0).abs();
        pass &= rel <= 0.02;
        details.push(format!("p={p}: {emp:.5} vs {want:.5} ({:.2}%)", 100.0 * rel));
    }
    let mean2 = sums[2] / draws as f64;
    let se = ((sq2 / draws as f64 - mean2 * mean2) / draws as f64).sqrt();
    let exact = big_m as f64 * theta_p;
    let analytic = (whitening::mixture_moment_p(theta_p, big_m, 2.0).unwrap() - exact).abs() <= 1e-12 * exact;
    pass &= analytic && (mean2 - exact).abs() <= 4.0 * se;
    details.push(format!("p=2 vs Mθ′={exact:.5}: {:.1} SE", (mean2 - exact).abs() / se));
    verdict(6, "lp noise moments", pass, &details.join("; "));
}

#[test]
fn criterion_07_lemmas() {
    let mut rng = rng_from_seed(700);
    let trials = 10_000;
    let (mut v_tail, mut v_pert) = (0usize, 0usize);
    for _ in 0..trials {
        let m = rng.gen_range(1..=10);
        let n = rng.gen_range(1..=10);
        let x = gaussian(m, n, &mut rng);
        let r = rng.gen_range(1..=m.min(n));
        let p = rng.gen_range(1.0..5.0);
        if !theory::stechkin_check(&x, r, p).unwrap().holds {
            v_tail += 1;
        }
        let y = gaussian(m, n, &mut rng) * rng.gen_range(0.01..10.0);
        if !theory::sv_perturbation_check(&x, &y).unwrap().holds {
            v_pert += 1;
        }
    }
    verdict(
        7,
        "matrix inequalities",
        v_tail == 0 && v_pert == 0,
        &format!("{v_tail} Schatten-tail and {v_pert} perturbation violations in {trials} instances each"),
    );
}

#[test]
fn criterion_08_bound_constants() {
    let c2 = NspConstants::new(0.5, 1.0, 4, NspKind::FrobeniusRobust).unwrap();
    let (c1v, c2v) = theory::theorem2_constants(&c2, 0.0).unwrap();
    let c3 = NspConstants::new(0.5, 1.0, 4, NspKind::Stable).unwrap();
    let (d1, d2) = theory::theorem3_constants(&c3, 0.0, 4).unwrap();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b;
    let pass = close(c1v, 9.0) && close(c2v, 14.0) && close(d1, 12.0) && close(d2, 10.0);
    verdict(8, "bound constants", pass, &format!("C1={c1v} C2={c2v} D1={d1} D2={d2}"));
}

#[test]
fn criterion_09_solver_correctness() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../cli/tests/fixtures");
    let (map, y) = matfile::read_system(format!("{dir}/toy_system.mat")).unwrap();
    let truth = matfile::MatFile::read(format!("{dir}/toy_truth.mat")).unwrap().matrix;
    let system = whiten(&map, &y, &NoiseSpec::noiseless()).unwrap();
    let out = admm_recover(&system, &SolverConfig::with_lambda(1e4)).unwrap();
    let rel = experiments::relative_error(&truth, &out.x_star);

    let mut rng = rng_from_seed(900);
    let mut woodbury = 0.0_f64;
    for _ in 0..100 {
        let big_m = rng.gen_range(2..=30);
        let dim = rng.gen_range(big_m..=40);
        let b = gaussian(big_m, dim, &mut rng);
        let rhs = DVector::from_fn(dim, |_, _| rng.sample(StandardNormal));
        let lam = 10f64.powf(rng.gen_range(-3.0..3.0));
        let rho = 10f64.powf(rng.gen_range(-2.0..2.0));
        let x = solve_normal_equations(&b, &rhs, lam, rho).unwrap();
        let dense = (b.transpose() * &b) * lam + DMatrix::identity(dim, dim) * rho;
        let direct = dense.lu().solve(&rhs).unwrap();
        woodbury = woodbury.max((x - &direct).norm() / direct.norm());
    }

    let mut prox = 0.0_f64;
    for _ in 0..100 {
        let (m, n) = (rng.gen_range(1..=12), rng.gen_range(1..=12));
        let z = gaussian(m, n, &mut rng);
        let tau = rng.gen_range(0.05..3.0);
        let p = linalg::svt(&z, tau).unwrap();
        prox = prox.max(linalg::svt_optimality_residual(&z, &p, tau).unwrap());
    }
    let pass = rel <= 1e-4 && woodbury <= 1e-8 && prox <= 1e-8;
    verdict(
        9,
        "solver correctness",
        pass,
        &format!("fixture rel_err {rel:.2e}, Woodbury vs dense {woodbury:.1e}, SVT optimality {prox:.1e}"),
    );
}

fn trials(cfg: &ExperimentConfig) -> Vec<Vec<TrialResult>> {
    let out = experiments::sweep_trials(cfg).unwrap();
    for point in &out {
        for t in point {
            assert!(t.is_ok(), "trial failed: {:?}", t.error);
        }
    }
    out
}

#[test]
fn criterion_10_exact_recovery() {
    let mut cfg = ExperimentConfig::standard(Ensemble::Gaussian);
    cfg.r = 3;
    cfg.measurements = 500;
    cfg.noise = NoiseSpec::noiseless();
    cfg.solver.lambda = 1e4;
    cfg.base_seed = 1000;
    cfg.timing = false;
    let rows = trials(&cfg).remove(0);
    let good = rows.iter().filter(|t| t.rel_err <= 1e-3).count();
    let worst = rows.iter().map(|t| t.rel_err).fold(0.0, f64::max);
    verdict(10, "exact recovery", good >= 95, &format!("{good}/100 seeds with rel_err ≤ 1e-3 (worst {worst:.2e})"));
}

fn means(cfg: &ExperimentConfig) -> Vec<experiments::AggregateRow> {
    trials(cfg).iter().map(|t| experiments::aggregate(t)).collect()
}

#[test]
fn criterion_11_trends() {
    let mut pass = true;
    let mut details = Vec::new();
    for (ens, m_grid) in [
        (Ensemble::Gaussian, (720..=800).step_by(10)),
        (Ensemble::Bernoulli, (730..=810).step_by(10)),
    ] {
        let mut base = ExperimentConfig::standard(ens);
        base.base_seed = 1100;
        base.timing = false;

        let noise = means(&base.clone().with_sweep(SweepAxis::Sigma0, vec![0.05, 0.10, 0.15], vec![]));
        let err: Vec<f64> = noise.iter().map(|r| r.mean_rel_err).collect();
        let ok_noise = err.windows(2).all(|w| w[0] < w[1]);

        let grid: Vec<f64> = m_grid.map(|v| v as f64).collect();
        let meas = means(&base.clone().with_sweep(SweepAxis::Measurements, grid, vec![]));
        let snr: Vec<f64> = meas.iter().map(|r| r.mean_snr_db).collect();
        let ok_meas = snr.windows(2).all(|w| w[0] <= w[1]);

        let mut rank_cfg = base.clone().with_sweep(SweepAxis::Rank, vec![4.0, 5.0, 6.0, 7.0, 8.0], vec![]);
        rank_cfg.measurements = 700;
        let rank = means(&rank_cfg);
        let rerr: Vec<f64> = rank.iter().map(|r| r.mean_rel_err).collect();
        let ok_rank = rerr.windows(2).all(|w| w[0] <= w[1]);

        pass &= ok_noise && ok_meas && ok_rank;
        let fmt = |v: &[f64], p: usize| v.iter().map(|x| format!("{x:.p$}")).collect::<Vec<_>>().join(",");
        details.push(format!(
            "{ens}: rel_err(σ₀)=[{}] {}; SNR(M)=[{}] {}; rel_err(r=4..8)=[{}] {}",
            fmt(&err, 5),
            if ok_noise { "ok" } else { "NOT increasing" },
            fmt(&snr, 2),
            if ok_meas { "ok" } else { "NOT non-decreasing" },
            fmt(&rerr, 5),
            if ok_rank { "ok" } else { "NOT non-decreasing" },
        ));
    }
    verdict(11, "noise, measurement and rank trends", pass, &details.join(" | "));
}

#[test]
fn criterion_12_lambda_plateau() {
    let mut cfg = ExperimentConfig::standard(Ensemble::Gaussian)
        .with_sweep(SweepAxis::Lambda, vec![1e-9, 1e-6, 1e-3, 1e-1], vec![]);
    cfg.base_seed = 1200;
    cfg.timing = false;
    let rows = means(&cfg);
    let snr: Vec<f64> = rows.iter().map(|r| r.mean_snr_db).collect();
    let spread = snr.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - snr.iter().cloned().fold(f64::INFINITY, f64::min);
    verdict(
        12,
        "lambda plateau",
        spread < 3.0,
        &format!(
            "mean SNR at λ=1e-9,1e-6,1e-3,1e-1: [{}] dB, spread {spread:.2} dB (need < 3)",
            snr.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>().join(", ")
        ),
    );
}

#[test]
fn criterion_13_image_trend() {
    let study = ImageStudy {
        timing: false,
        ..ImageStudy::default()
    };
    let out = experiments::image_experiment(&noisefold::image::synthetic_image(256), &study).unwrap();
    let psnr: Vec<f64> = out.rows.iter().map(|r| r.mean_psnr_db.unwrap()).collect();
    let ssim: Vec<f64> = out.rows.iter().map(|r| r.mean_ssim.unwrap()).collect();
    let dec = |v: &[f64]| v.windows(2).all(|w| w[0] > w[1]);
    let drop = psnr[0] - psnr[3];
    let pass = out.rows.len() == 4 && dec(&psnr) && dec(&ssim) && drop >= 4.0;
    verdict(
        13,
        "image study trend",
        pass,
        &format!(
            "PSNR [{}] SSIM [{}], drop {drop:.2} dB",
            psnr.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>().join(", "),
            ssim.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(", ")
        ),
    );
}
