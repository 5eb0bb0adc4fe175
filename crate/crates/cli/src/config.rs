//! Sweep configuration files.
//!
//! A config is TOML restricted to flat `key = value` lines under section
//! headers. Every key has a default except the sweep, which is optional:
//!
//! ```toml
//! [experiment]
//! ensemble = "gaussian"   # gaussian | bernoulli | row_orthonormal | row_orthonormal_scaled
//! m = 30
//! n = 30
//! r = 6
//! M = 750
//! n_trials = 100
//! base_seed = 0
//!
//! [noise]
//! sigma = 0.01
//! sigma0 = 0.05
//!
//! [solver]
//! lambda = 3.0
//!
//! [sweep]
//! axis = "lambda"         # lambda | rank | measurements | sigma0
//! grid = [1e-3, 1e-2]
//! series = [0.05, 0.10]   # optional sigma0 values, one grid pass each
//!
//! [output]
//! format = "csv"          # csv | json
//! path = "out.csv"        # optional; stdout when absent
//! ```

use std::path::{Path, PathBuf};

use noisefold::experiments::{ExperimentConfig, SweepSpec};
use noisefold::sensing::{Ensemble, Mixture, NoiseSpec};
use noisefold::solver::SolverConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub ensemble: Ensemble,
    pub m: usize,
    pub n: usize,
    pub r: usize,
    #[serde(rename = "M")]
    pub measurements: usize,
    pub n_trials: usize,
    pub base_seed: u64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            ensemble: Ensemble::Gaussian,
            m: 30,
            n: 30,
            r: 6,
            measurements: 750,
            n_trials: 100,
            base_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub sigma: f64,
    pub sigma0: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mixture: Option<Mixture>,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            sigma: 0.01,
            sigma0: 0.05,
            mixture: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub format: Format,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub experiment: ExperimentSection,
    pub noise: NoiseSection,
    pub solver: SolverConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn experiment(&self) -> ExperimentConfig {
        let e = &self.experiment;
        ExperimentConfig {
            ensemble: e.ensemble,
            m: e.m,
            n: e.n,
            r: e.r,
            measurements: e.measurements,
            noise: NoiseSpec {
                sigma: self.noise.sigma,
                sigma0: self.noise.sigma0,
                mixture: self.noise.mixture,
            },
            solver: self.solver,
            n_trials: e.n_trials,
            base_seed: e.base_seed,
            sweep: self.sweep.clone(),
            timing: true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use noisefold::experiments::SweepAxis;

    #[test]
    fn empty_config_takes_defaults() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c, RunConfig::default());
        let e = c.experiment();
        assert_eq!((e.m, e.n, e.r, e.measurements, e.n_trials), (30, 30, 6, 750, 100));
        assert_eq!(e.solver, SolverConfig::default());
    }

    #[test]
    fn sections_parse() {
        let c = RunConfig::parse(
            "[experiment]\nensemble = \"bernoulli\"\nM = 700\n[sweep]\naxis = \"rank\"\ngrid = [4, 5]\nseries = [0.05]\n[output]\nformat = \"json\"\n",
        )
        .unwrap();
        let e = c.experiment();
        assert_eq!(e.ensemble, Ensemble::Bernoulli);
        assert_eq!(e.measurements, 700);
        let s = e.sweep.unwrap();
        assert_eq!((s.axis, s.grid, s.series), (SweepAxis::Rank, vec![4.0, 5.0], vec![0.05]));
        assert_eq!(c.output.format, Format::Json);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = RunConfig::parse("[solver]\nlamda = 3\n").unwrap_err();
        assert!(err.contains("lamda"), "{err}");
        assert!(err.contains("line 2"), "{err}");
        let err = RunConfig::parse("[bogus]\n").unwrap_err();
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn toml_round_trip() {
        let c = RunConfig::parse("[sweep]\naxis = \"lambda\"\ngrid = [1e-9, 1.0]\n").unwrap();
        assert_eq!(RunConfig::parse(&c.to_toml()).unwrap(), c);
    }
}
