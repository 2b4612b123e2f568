use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kronmde::linalg::C64;
use kronmde::mde::{EtaSchedule, Method, SolverOptions};
use kronmde::presets::Preset;
use kronmde::sampler::{EntryDistribution, GENERAL_EIG_N_LIMIT};
use kronmde::spectrum::ZetaGrid;
use serde::{Serialize, Serializer};

/// Solver for the matrix Dyson equation of Kronecker random matrices, with
/// self-consistent pseudospectra and Monte Carlo checks.
///
/// Exit codes: 0 success, 2 input error, 3 solver non-convergence, 4 partial grid
/// failure, 5 verification failure.
#[derive(Parser, Debug, Serialize)]
#[command(name = "kronmde", version, about, long_about = None)]
pub struct Cli {
    /// Worker threads for grid and trial fan-out. Results do not depend on it.
    #[arg(long, global = true, env = "KRONMDE_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Solve the Dyson equation at one spectral parameter (JSON report).
    Solve(SolveArgs),
    /// Density of states along a real grid (CSV).
    Dos(DosArgs),
    /// Threshold-based estimate of the support of the density (JSON report).
    Support(SupportArgs),
    /// Self-consistent ε-pseudospectrum on a ζ grid (CSV, optional JSON report).
    Pseudospectrum(PseudospectrumArgs),
    /// Monte Carlo containment and global-law checks (JSON report).
    Verify(VerifyArgs),
    /// Stability diagnostics at one spectral parameter (JSON report).
    Diagnose(DiagnoseArgs),
    /// Write the model file of a built-in preset.
    Preset(PresetArgs),
}

/// A complex number written as `a+bi`, `bi` or `a`, whitespace allowed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Complex(pub C64);

impl FromStr for Complex {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let compact: String = s.chars().filter(|ch| !ch.is_whitespace()).collect();
        compact
            .parse::<C64>()
            .map(Complex)
            .map_err(|_| format!("`{s}` is not a complex number of the form a+bi"))
    }
}

impl fmt::Display for Complex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Serialize for Complex {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.0.re, self.0.im].serialize(s)
    }
}

/// Closed real interval written as `lo:hi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl FromStr for Range {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s.split_once(':').ok_or_else(|| format!("`{s}` is not a range lo:hi"))?;
        let lo: f64 = a.trim().parse().map_err(|_| format!("bad lower bound in `{s}`"))?;
        let hi: f64 = b.trim().parse().map_err(|_| format!("bad upper bound in `{s}`"))?;
        if !(lo < hi) {
            return Err(format!("range `{s}` must have lo < hi"));
        }
        Ok(Range { lo, hi })
    }
}

impl Range {
    pub fn grid(&self, points: usize) -> Vec<f64> {
        let h = (self.hi - self.lo) / (points.max(2) - 1) as f64;
        (0..points.max(2)).map(|k| self.lo + k as f64 * h).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    Hybrid,
    FixedPoint,
}

/// Where the model comes from: a model file or a built-in preset.
#[derive(Args, Debug, Serialize)]
pub struct ModelSource {
    /// Model file (JSON), e.g. written by `kronmde preset`.
    #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
    pub model: Option<PathBuf>,
    /// Built-in model instead of a file: wigner, ginibre, fig1a, fig1b, fig1c, fig1d or two-band.
    #[arg(long)]
    pub preset: Option<PresetName>,
    /// Block size N of the preset [default: 1000].
    #[arg(long = "n", requires = "preset")]
    pub n: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
pub struct ModelArgs {
    #[command(flatten)]
    pub source: ModelSource,
    /// Hermitize at this shift ζ. Required for non-Hermitian models.
    #[arg(long, allow_hyphen_values = true)]
    pub zeta: Option<Complex>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PresetName(pub Preset);

impl FromStr for PresetName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(PresetName).map_err(|e: kronmde::Error| e.to_string())
    }
}

impl Serialize for PresetName {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.0.name())
    }
}

#[derive(Args, Debug, Serialize)]
pub struct SolverArgs {
    /// Residual tolerance.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    /// Fixed-point iteration budget per solve.
    #[arg(long, default_value_t = 50_000)]
    pub max_iter: usize,
    /// Initial damping θ of the fixed-point map.
    #[arg(long, default_value_t = 0.5)]
    pub damping: f64,
    /// Keep θ fixed instead of halving it when the residual grows.
    #[arg(long)]
    pub no_damping_adapt: bool,
    /// First η of the continuation schedule.
    #[arg(long, default_value_t = 8.0)]
    pub eta_start: f64,
    /// Ratio of the geometric η schedule.
    #[arg(long, default_value_t = 0.7)]
    pub eta_ratio: f64,
    #[arg(long, value_enum, default_value_t = MethodArg::Hybrid)]
    pub method: MethodArg,
}

impl SolverArgs {
    pub fn options(&self, floor: f64) -> SolverOptions {
        SolverOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            damping_init: self.damping,
            damping_adapt: !self.no_damping_adapt,
            eta_schedule: EtaSchedule {
                start: self.eta_start,
                ratio: self.eta_ratio,
                floor,
            },
            method: match self.method {
                MethodArg::Hybrid => Method::Hybrid,
                MethodArg::FixedPoint => Method::FixedPoint,
            },
            ..Default::default()
        }
    }
}

#[derive(Args, Debug, Serialize)]
pub struct SolveArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Spectral parameter, Im z > 0.
    #[arg(long, allow_hyphen_values = true)]
    pub z: Complex,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Output file; standard output if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct DosArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Energy range; defaults to the support bracket widened by a quarter on each side.
    #[arg(long, allow_hyphen_values = true)]
    pub e_range: Option<Range>,
    #[arg(long, default_value_t = 601)]
    pub points: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub eta: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct ScanArgs {
    /// η at which Im m/η is compared with the threshold.
    #[arg(long, default_value_t = 1e-5)]
    pub eta_floor: f64,
    /// A point is inside the support when max |Im m_j|/η reaches this value.
    #[arg(long, default_value_t = 50.0)]
    pub threshold: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct SupportArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Energy range; defaults to the support bracket.
    #[arg(long, allow_hyphen_values = true)]
    pub e_range: Option<Range>,
    #[arg(long, default_value_t = 401)]
    pub points: usize,
    #[command(flatten)]
    pub scan: ScanArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct PseudospectrumArgs {
    #[command(flatten)]
    pub source: ModelSource,
    /// ζ grid `re_min:re_max:count,im_min:im_max:count`.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: ZetaGrid,
    #[arg(long)]
    pub epsilon: f64,
    /// E resolution of the distance scan; ε/4 if absent.
    #[arg(long)]
    pub step: Option<f64>,
    #[command(flatten)]
    pub scan: ScanArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// CSV output; standard output if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON report with metadata and counts.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

/// Set the sampled eigenvalues are checked against.
#[derive(Clone, Debug, PartialEq)]
pub enum OracleSpec {
    /// `disk:R`: closed disk of radius R around 0.
    Disk(f64),
    /// `example`: `Σ 1/|ζ_i − ζ|² ≥ L` with ζ_i the diagonal of the (common) expectation block.
    Example,
    /// `grid:SPEC`: the computed 𝔻_ε on a ζ grid.
    Grid(ZetaGrid),
}

impl FromStr for OracleSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "example" {
            return Ok(OracleSpec::Example);
        }
        if let Some(r) = s.strip_prefix("disk:") {
            let r: f64 = r.parse().map_err(|_| format!("bad disk radius in `{s}`"))?;
            if !(r >= 0.0) {
                return Err(format!("disk radius must be nonnegative in `{s}`"));
            }
            return Ok(OracleSpec::Disk(r));
        }
        if let Some(g) = s.strip_prefix("grid:") {
            return g.parse().map(OracleSpec::Grid).map_err(|e: kronmde::Error| e.to_string());
        }
        Err(format!("unknown oracle `{s}` (expected disk:R, example or grid:SPEC)"))
    }
}

impl Serialize for OracleSpec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            OracleSpec::Disk(r) => s.serialize_str(&format!("disk:{r}")),
            OracleSpec::Example => s.serialize_str("example"),
            OracleSpec::Grid(g) => s.serialize_str(&format!(
                "grid:{}:{}:{},{}:{}:{}",
                g.re_min, g.re_max, g.re_count, g.im_min, g.im_max, g.im_count
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistributionArg {
    ComplexGaussian,
    RealGaussian,
    Rademacher,
}

impl From<DistributionArg> for EntryDistribution {
    fn from(d: DistributionArg) -> Self {
        match d {
            DistributionArg::ComplexGaussian => EntryDistribution::ComplexGaussian,
            DistributionArg::RealGaussian => EntryDistribution::RealGaussian,
            DistributionArg::Rademacher => EntryDistribution::Rademacher,
        }
    }
}

#[derive(Args, Debug, Serialize)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub source: ModelSource,
    /// Dilation of the oracle set.
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub trials: usize,
    #[arg(long, value_enum, default_value_t = DistributionArg::ComplexGaussian)]
    pub distribution: DistributionArg,
    /// Containment oracle: `disk:R`, `example` or `grid:SPEC`. Optional for Hermitian
    /// models, which are always checked against the global law.
    #[arg(long, allow_hyphen_values = true)]
    pub oracle: Option<OracleSpec>,
    /// Largest Kolmogorov distance accepted by the global-law check.
    #[arg(long, default_value_t = 0.03)]
    pub ks_bound: f64,
    /// η of the density used by the global-law check.
    #[arg(long, default_value_t = 1e-3)]
    pub eta: f64,
    /// Largest N sampled.
    #[arg(long, default_value_t = GENERAL_EIG_N_LIMIT)]
    pub max_n: usize,
    #[command(flatten)]
    pub scan: ScanArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub z: Complex,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct PresetArgs {
    pub name: PresetName,
    /// Block size N.
    #[arg(long = "n", default_value_t = 1000)]
    pub n: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
