use std::path::PathBuf;
use std::str::FromStr;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use subfuse_core::tuning::{PathSettings, PathStart, ScoreKind, ScoreTheta, TuningConfig};
use subfuse_core::StoppingRule;

use crate::settings::Settings;

#[derive(Debug, Parser)]
#[command(
    name = "subfuse",
    version,
    about = "Subgroup fusion for partially heterogeneous linear regression"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit at a fixed lambda, or at a tuned one with `--lambda auto`.
    Fit(FitArgs),
    /// Fit the lambda path and report the score of every value.
    Tune(TuneArgs),
    /// Monte Carlo study on a built-in simulation design.
    Simulate(SimulateArgs),
    /// Fit one model per candidate set of heterogeneous columns.
    Scan(ScanArgs),
    /// Write a synthetic table with the car-sales layout.
    SynthCar(SynthArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Numeric CSV input.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// `key = value` file naming the response, x and z columns.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Replace y by log((a + y)/(b − y)), given as `a,b`.
    #[arg(long)]
    pub transform: Option<String>,
    /// Standardize every covariate column.
    #[arg(long)]
    pub standardize: bool,
}

pub const DATA_KEYS: [&str; 4] = ["data", "schema", "transform", "standardize"];

#[derive(Debug, Args)]
pub struct PathArgs {
    #[arg(long)]
    pub gamma: Option<f64>,
    /// ADMM step size.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Primal and dual residual tolerance (default 1e-5·sqrt(n·d_z)).
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// cv or bic.
    #[arg(long)]
    pub score: Option<ScoreArg>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub path_len: Option<usize>,
    /// Coefficients a score evaluates: fused or refit.
    #[arg(long)]
    pub score_theta: Option<ThetaArg>,
    /// ascending, descending or cold.
    #[arg(long)]
    pub start: Option<StartArg>,
    /// Polish every path fit by greedy partition moves.
    #[arg(long)]
    pub refine: bool,
}

pub const PATH_KEYS: [&str; 11] = [
    "gamma",
    "eta",
    "tol",
    "max-iter",
    "seed",
    "score",
    "folds",
    "path-len",
    "score-theta",
    "start",
    "refine",
];

impl PathArgs {
    pub fn stopping(&self, s: &Settings, n: usize, dim: usize) -> Result<Option<StoppingRule>> {
        let tol: Option<f64> = s.get(self.tol, "tol")?;
        let max_iter: Option<usize> = s.get(self.max_iter, "max-iter")?;
        if tol.is_none() && max_iter.is_none() {
            return Ok(None);
        }
        let base = StoppingRule::default_for(n, dim);
        Ok(Some(StoppingRule {
            tol_primal: tol.unwrap_or(base.tol_primal),
            tol_dual: tol.unwrap_or(base.tol_dual),
            max_iter: max_iter.unwrap_or(base.max_iter),
        }))
    }

    pub fn tuning(&self, s: &Settings, n: usize, dim: usize) -> Result<TuningConfig> {
        let d = TuningConfig::default();
        let p = PathSettings::default();
        Ok(TuningConfig {
            score: s.get_or(self.score, "score", ScoreArg(d.score))?.0,
            theta: s
                .get_or(self.score_theta, "score-theta", ThetaArg(d.theta))?
                .0,
            folds: s.get_or(self.folds, "folds", d.folds)?,
            seed: s.get_or(self.seed, "seed", d.seed)?,
            path: PathSettings {
                gamma: s.get_or(self.gamma, "gamma", p.gamma)?,
                eta: s.get_or(self.eta, "eta", p.eta)?,
                count: s.get_or(self.path_len, "path-len", p.count)?,
                stop: self.stopping(s, n, dim)?,
                start: s.get_or(self.start, "start", StartArg(p.start))?.0,
                refine: s.switch(self.refine, "refine")?,
                ..p
            },
        })
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// A non-negative value or `auto`.
    #[arg(long)]
    pub lambda: Option<LambdaArg>,
    #[command(flatten)]
    pub path: PathArgs,
    /// Directory for beta.csv, groups.csv and theta.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the ADMM iteration trace as CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub path: PathArgs,
    /// Directory for tuning.csv and path.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// 1, 2 or 3.
    #[arg(long)]
    pub example: Option<u8>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Group coefficients: groups separated by `;`, components by `,`. With
    /// one Z column, `1,-1` is read as two groups.
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<String>,
    /// Correlation between X and Z (example 3).
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub mu_x: Option<f64>,
    #[arg(long)]
    pub mu_z: Option<f64>,
    /// Scale the example 2 Z covariance by sigma² instead of sigma.
    #[arg(long)]
    pub sigma_squared: bool,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Also estimate β by least squares on X alone.
    #[arg(long)]
    pub ols: bool,
    #[command(flatten)]
    pub path: PathArgs,
    /// Directory for replications.csv and summary.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// `all-singletons`, or candidates separated by `;` with columns joined
    /// by `,`.
    #[arg(long)]
    pub candidates: Option<String>,
    #[command(flatten)]
    pub path: PathArgs,
    /// CSV file for the scan table.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy)]
pub struct ScoreArg(pub ScoreKind);

impl FromStr for ScoreArg {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "cv" => Ok(ScoreArg(ScoreKind::Cv)),
            "bic" => Ok(ScoreArg(ScoreKind::Bic)),
            _ => Err(format!("expected cv or bic, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ThetaArg(pub ScoreTheta);

impl FromStr for ThetaArg {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "fused" => Ok(ThetaArg(ScoreTheta::Fused)),
            "refit" => Ok(ThetaArg(ScoreTheta::Refit)),
            _ => Err(format!("expected fused or refit, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StartArg(pub PathStart);

impl FromStr for StartArg {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "ascending" => Ok(StartArg(PathStart::WarmAscending)),
            "descending" => Ok(StartArg(PathStart::WarmDescending)),
            "cold" => Ok(StartArg(PathStart::Cold)),
            _ => Err(format!("expected ascending, descending or cold, got `{s}`")),
        }
    }
}

/// `auto` or a fixed value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaArg {
    Auto,
    Fixed(f64),
}

impl FromStr for LambdaArg {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(LambdaArg::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v >= 0.0 && v.is_finite() => Ok(LambdaArg::Fixed(v)),
            _ => Err(format!(
                "lambda must be `auto` or a non-negative number, got `{s}`"
            )),
        }
    }
}
