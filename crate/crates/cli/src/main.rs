//! `noisefold`: verification suites, parameter sweeps, single recoveries and
//! the image study.
//!
//! Exit codes: 0 success, 1 a check failed, 2 usage, configuration or I/O
//! error. Every flag with an `env` name can also be set through that
//! variable (prefix `NOISEFOLD_`).

mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use noisefold::experiments::{self, ImageStudy, SweepAxis};
use noisefold::image;
use noisefold::matfile::{self, MatFile};
use noisefold::sensing::{MeasurementMap, NoiseSpec};
use noisefold::solver::{admm_recover, SolverConfig};
use noisefold::verify::{self, Suite};
use noisefold::whitening::whiten;
use serde::Serialize;
use sha2::{Digest, Sha256};

use config::{Format, RunConfig};

#[derive(Parser)]
#[command(name = "noisefold", version, about = "Low-rank recovery under pre-measurement noise")]
struct Cli {
    /// Worker threads for trials (default: all cores). Output does not depend on it.
    #[arg(long, global = true, env = "NOISEFOLD_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run numerical checks and print a JSON report.
    Verify(VerifyArgs),
    /// Run a parameter sweep from a config file.
    Sweep(SweepArgs),
    /// Whiten and solve one stored system.
    Recover(RecoverArgs),
    /// Downscale, measure and recover a grayscale image at several noise levels.
    Image(ImageArgs),
}

#[derive(Args)]
struct VerifyArgs {
    /// all | whitening | rip | nsp | lemmas | solver
    #[arg(long, default_value = "all", value_parser = parse_suite)]
    suite: Suite,
    #[arg(long, default_value_t = 0, env = "NOISEFOLD_SEED")]
    seed: u64,
    /// Also write the report to this file.
    #[arg(long, env = "NOISEFOLD_OUT")]
    out: Option<PathBuf>,
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    s.parse().map_err(|e: noisefold::Error| e.to_string())
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, env = "NOISEFOLD_CONFIG")]
    config: PathBuf,
    /// Overrides `experiment.base_seed`.
    #[arg(long, env = "NOISEFOLD_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    n_trials: Option<usize>,
    /// Overrides `solver.lambda`.
    #[arg(long)]
    lambda: Option<f64>,
    /// Overrides the σ₀ series (or the grid of a sigma0 sweep).
    #[arg(long, value_delimiter = ',')]
    sigma0: Option<Vec<f64>>,
    /// Output file; defaults to `output.path`, else stdout.
    #[arg(long, env = "NOISEFOLD_OUT")]
    out: Option<PathBuf>,
    #[arg(long, env = "NOISEFOLD_FORMAT")]
    format: Option<Format>,
    /// Report zero runtimes so that reruns are byte-identical.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct RecoverArgs {
    /// Augmented `[A | y]` matrix file with `# shape = m n` metadata.
    #[arg(long, conflicts_with_all = ["a", "y"])]
    input: Option<PathBuf>,
    /// `A` as an `M × mn` matrix file with `# shape = m n` metadata.
    #[arg(long, requires = "y")]
    a: Option<PathBuf>,
    /// `y` as an `M × 1` (or `1 × M`) matrix file.
    #[arg(long, requires = "a")]
    y: Option<PathBuf>,
    /// Ground truth `X`; adds `rel_err` to the summary.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value_t = 0.01)]
    sigma: f64,
    #[arg(long, default_value_t = 0.05)]
    sigma0: f64,
    #[arg(long, default_value_t = SolverConfig::default().lambda)]
    lambda: f64,
    #[arg(long, default_value_t = SolverConfig::default().max_iter)]
    max_iter: usize,
    /// Output directory for `x_star.mat` and `summary.json`.
    #[arg(long, env = "NOISEFOLD_OUT")]
    out: PathBuf,
    /// Also write the whitened system `[B | ỹ]` as `whitened.mat`.
    #[arg(long)]
    save_whitened: bool,
}

#[derive(Args)]
struct ImageArgs {
    /// PGM (P2 or P5) input.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    image: Option<PathBuf>,
    /// Use the built-in 256×256 synthetic target.
    #[arg(long)]
    synthetic: bool,
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.10,0.15,0.20")]
    sigma0: Vec<f64>,
    #[arg(long, default_value_t = 0.01)]
    sigma: f64,
    #[arg(long, default_value_t = SolverConfig::default().lambda)]
    lambda: f64,
    #[arg(long, default_value_t = 10)]
    n_trials: usize,
    #[arg(long, default_value_t = 0, env = "NOISEFOLD_SEED")]
    seed: u64,
    /// Measure the best rank-r approximation of the downscaled image.
    #[arg(long)]
    truncate: bool,
    /// Output directory for the table, the config echo and the PGM images;
    /// the table goes to stdout when absent.
    #[arg(long, env = "NOISEFOLD_OUT")]
    out: Option<PathBuf>,
    #[arg(long, env = "NOISEFOLD_FORMAT", default_value = "csv")]
    format: Format,
    #[arg(long)]
    no_timing: bool,
}

enum Failure {
    Check,
    Usage(String),
}

impl From<noisefold::Error> for Failure {
    fn from(e: noisefold::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global() {
            eprintln!("error: cannot size the worker pool: {e}");
            return ExitCode::from(2);
        }
    }
    let outcome = match cli.command {
        Command::Verify(a) => cmd_verify(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Recover(a) => cmd_recover(a),
        Command::Image(a) => cmd_image(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn hash_json<T: Serialize>(v: &T) -> String {
    let json = serde_json::to_string(v).expect("serializable");
    format!("{:x}", Sha256::digest(json.as_bytes()))
}

fn write_file(path: &Path, bytes: &[u8]) -> CmdResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Usage(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn cmd_verify(args: VerifyArgs) -> CmdResult {
    let report = verify::run_suite(args.suite, args.seed)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    print!("{json}");
    if let Some(out) = &args.out {
        write_file(out, json.as_bytes())?;
    }
    for c in report.failures() {
        eprintln!("FAIL {}: max violation {:e}", c.check_name, c.max_violation);
    }
    if report.pass {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".config.toml");
    out.with_file_name(name)
}

fn cmd_sweep(args: SweepArgs) -> CmdResult {
    let mut run = RunConfig::load(&args.config).map_err(Failure::Usage)?;
    if let Some(seed) = args.seed {
        run.experiment.base_seed = seed;
    }
    if let Some(t) = args.n_trials {
        run.experiment.n_trials = t;
    }
    if let Some(l) = args.lambda {
        run.solver.lambda = l;
    }
    if let Some(s0) = args.sigma0 {
        match run.sweep.as_mut() {
            Some(s) if s.axis == SweepAxis::Sigma0 => s.grid = s0,
            Some(s) => s.series = s0,
            None if s0.len() == 1 => run.noise.sigma0 = s0[0],
            None => return Err(Failure::Usage("--sigma0 with several values needs a [sweep] section".into())),
        }
    }
    if let Some(f) = args.format {
        run.output.format = f;
    }
    if let Some(out) = args.out {
        run.output.path = Some(out);
    }

    let mut cfg = run.experiment();
    cfg.timing = !args.no_timing;
    cfg.validate()?;
    let hash = cfg.config_hash();
    let rows = experiments::sweep(&cfg)?;

    let mut buf = Vec::new();
    match run.output.format {
        Format::Csv => experiments::write_csv(&mut buf, &rows, &hash)?,
        Format::Json => experiments::write_json(&mut buf, &rows, &hash)?,
    }
    match &run.output.path {
        Some(path) => {
            write_file(path, &buf)?;
            let echo = format!("# config_hash={hash}\n{}", run.to_toml());
            write_file(&sidecar_path(path), echo.as_bytes())?;
        }
        None => std::io::stdout().write_all(&buf)?,
    }
    let failed = rows.iter().map(|r| cfg.n_trials - r.n_trials).sum::<usize>();
    if failed > 0 {
        eprintln!("warning: {failed} trial(s) failed and were left out of the means");
    }
    Ok(())
}

#[derive(Serialize)]
struct RecoverSettings<'a> {
    input: Option<&'a Path>,
    a: Option<&'a Path>,
    y: Option<&'a Path>,
    noise: NoiseSpec,
    solver: SolverConfig,
}

#[derive(Serialize)]
struct RecoverSummary {
    config_hash: String,
    theta: f64,
    delta: f64,
    delta_eff: f64,
    delta1: Option<f64>,
    iterations: usize,
    converged: bool,
    objective: f64,
    residuals: noisefold::solver::Residuals,
    #[serde(skip_serializing_if = "Option::is_none")]
    rel_err: Option<f64>,
}

fn load_system(args: &RecoverArgs) -> Result<(MeasurementMap, noisefold::linalg::Vector), Failure> {
    if let Some(input) = &args.input {
        return Ok(matfile::read_system(input)?);
    }
    let (Some(a), Some(y)) = (&args.a, &args.y) else {
        return Err(Failure::Usage("give either --input or both --a and --y".into()));
    };
    let afile = MatFile::read(a)?;
    let shape = afile
        .get("shape")
        .ok_or_else(|| Failure::Usage(format!("{}: needs `# shape = m n` metadata", a.display())))?;
    let dims: Vec<usize> = shape.split_whitespace().filter_map(|t| t.parse().ok()).collect();
    let [m, n] = dims[..] else {
        return Err(Failure::Usage(format!("{}: malformed shape `{shape}`", a.display())));
    };
    let ymat = MatFile::read(y)?.matrix;
    if ymat.ncols() != 1 && ymat.nrows() != 1 {
        return Err(Failure::Usage(format!("{}: y must be a vector, got {}x{}", y.display(), ymat.nrows(), ymat.ncols())));
    }
    let yv = noisefold::linalg::Vector::from_iterator(ymat.len(), ymat.iter().copied());
    let map = MeasurementMap::from_matrix(afile.matrix, m, n)?;
    if yv.len() != map.measurements() {
        return Err(Failure::Usage(format!(
            "dimension mismatch: A has {} rows but y has {} entries",
            map.measurements(),
            yv.len()
        )));
    }
    Ok((map, yv))
}

fn cmd_recover(args: RecoverArgs) -> CmdResult {
    let (map, y) = load_system(&args)?;
    let noise = NoiseSpec::white(args.sigma, args.sigma0);
    let solver = SolverConfig {
        lambda: args.lambda,
        max_iter: args.max_iter,
        ..SolverConfig::default()
    };
    let hash = hash_json(&RecoverSettings {
        input: args.input.as_deref(),
        a: args.a.as_deref(),
        y: args.y.as_deref(),
        noise,
        solver,
    });
    let truth = match &args.truth {
        Some(p) => {
            let x = MatFile::read(p)?.matrix;
            if x.shape() != map.shape() {
                return Err(Failure::Usage(format!(
                    "dimension mismatch: truth is {}x{}, system expects {:?}",
                    x.nrows(),
                    x.ncols(),
                    map.shape()
                )));
            }
            Some(x)
        }
        None => None,
    };

    let system = whiten(&map, &y, &noise)?;
    let out = admm_recover(&system, &solver)?;
    let summary = RecoverSummary {
        config_hash: hash.clone(),
        theta: system.theta,
        delta: system.delta,
        delta_eff: system.delta_eff,
        delta1: system.delta1,
        iterations: out.iterations,
        converged: out.converged,
        objective: out.objective,
        residuals: out.residuals,
        rel_err: truth.as_ref().map(|x| experiments::relative_error(x, &out.x_star)),
    };

    fs::create_dir_all(&args.out).map_err(|e| Failure::Usage(format!("{}: {e}", args.out.display())))?;
    MatFile::new(out.x_star)
        .with_meta("config_hash", &hash)
        .write(args.out.join("x_star.mat"))?;
    if args.save_whitened {
        matfile::write_whitened(args.out.join("whitened.mat"), &system)?;
    }
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    write_file(&args.out.join("summary.json"), json.as_bytes())?;
    print!("{json}");
    Ok(())
}

fn cmd_image(args: ImageArgs) -> CmdResult {
    let img = match &args.image {
        Some(p) => image::read_pgm(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?,
        None => image::synthetic_image(256),
    };
    let study = ImageStudy {
        sigma: args.sigma,
        sigma0_grid: args.sigma0.clone(),
        solver: SolverConfig::with_lambda(args.lambda),
        n_trials: args.n_trials,
        base_seed: args.seed,
        truncate: args.truncate,
        timing: !args.no_timing,
        ..ImageStudy::default()
    };
    // the input image is part of what determines the output
    #[derive(Serialize)]
    struct Resolved<'a> {
        source: String,
        study: &'a ImageStudy,
    }
    let source = match &args.image {
        Some(_) => format!("pgm:{}", hash_json(&img.as_slice())),
        None => "synthetic:256".to_string(),
    };
    let hash = hash_json(&Resolved { source: source.clone(), study: &study });
    let result = experiments::image_experiment(&img, &study)?;

    let mut table = Vec::new();
    match args.format {
        Format::Csv => experiments::write_csv(&mut table, &result.rows, &hash)?,
        Format::Json => experiments::write_json(&mut table, &result.rows, &hash)?,
    }
    let Some(dir) = &args.out else {
        std::io::stdout().write_all(&table)?;
        return Ok(());
    };
    let table_path = dir.join(format!("table.{}", args.format.extension()));
    write_file(&table_path, &table)?;
    let echo = format!(
        "# config_hash={hash}\n# source = {source}\n{}",
        toml::to_string(&study).expect("study serializes")
    );
    write_file(&sidecar_path(&table_path), echo.as_bytes())?;
    let comments = [format!("config_hash={hash}")];
    image::write_pgm(dir.join("reference.pgm"), &result.reference, &comments)?;
    for (s0, x) in study.sigma0_grid.iter().zip(&result.recovered) {
        image::write_pgm(dir.join(format!("recovered_sigma0_{s0}.pgm")), x, &comments)?;
    }
    std::io::stdout().write_all(&table)?;
    Ok(())
}
