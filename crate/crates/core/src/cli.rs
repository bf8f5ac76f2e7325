//! The `singprof` command line.
//!
//! Parameters come from built-in defaults, then an optional TOML file
//! (`--config`, flat table, unknown keys rejected), then flags; later sources
//! win. Summaries go to stdout as JSON, tables as CSV. With `--format csv`
//! the subcommand's main table is printed instead of its summary.
//!
//! Exit codes: 0 success (certified nonexistence included), 1 malformed flags
//! or configuration, 2 domain or precondition error, 3 non-convergence or
//! numerical failure.

use std::ffi::OsString;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::cylinder::{
    bound_diagnostic, critical_decay_fit, energy_identity_residual, energy_trace, eta_shape_error,
    mid_profile_distance, solve_cylinder, CylinderGrid, CylinderOptions,
};
use crate::error::{Error, Result};
use crate::exponents::{classify_regime, critical_exponents, damping_coefficient, ell, ProblemParams, Regime};
use crate::identities::{cross_term, kwong_li_residual, phi_balance_residual, pohozaev_residual, KwongLiWeight};
use crate::output::{fmt_f64, real, to_json};
use crate::shooting::{existence_scan, omega0_with, solve_positive, LambdaRule, ShootingConfig, ShootingStatus};
use crate::sphere_ode::{integrate_ivp_with, ode_residual_with, IvpOptions, RadialProfile, ThetaGrid};

pub const WORKERS_ENV: &str = "SINGPROF_WORKERS";

/// Parses `2`, `2.5`, `1e-3` or an exact fraction such as `5/3`.
pub fn parse_real(s: &str) -> std::result::Result<f64, String> {
    let s = s.trim();
    let value = match s.split_once('/') {
        Some((a, b)) => {
            let (a, b): (f64, f64) = (
                a.trim().parse().map_err(|e| format!("{e}"))?,
                b.trim().parse().map_err(|e| format!("{e}"))?,
            );
            a / b
        }
        None => s.parse().map_err(|e| format!("{e}"))?,
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(format!("`{s}` is not a finite number"))
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawNumber {
    Int(i64),
    Float(f64),
    Text(String),
}

impl RawNumber {
    fn real(self) -> std::result::Result<f64, String> {
        match self {
            RawNumber::Int(i) => Ok(i as f64),
            RawNumber::Float(x) => Ok(x),
            RawNumber::Text(s) => parse_real(&s),
        }
    }
}

fn de_opt_real<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<f64>, D::Error> {
    Option::<RawNumber>::deserialize(d)?
        .map(|r| r.real().map_err(serde::de::Error::custom))
        .transpose()
}

fn de_real<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    RawNumber::deserialize(d)?.real().map_err(serde::de::Error::custom)
}

/// `ell` or a fixed value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lambda(pub LambdaRule);

impl FromStr for Lambda {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.trim().eq_ignore_ascii_case("ell") {
            Ok(Lambda(LambdaRule::Ell))
        } else {
            parse_real(s).map(|x| Lambda(LambdaRule::Fixed(x)))
        }
    }
}

impl fmt::Display for Lambda {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            LambdaRule::Ell => f.write_str("ell"),
            LambdaRule::Fixed(x) => write!(f, "{x}"),
        }
    }
}

impl Serialize for Lambda {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0 {
            LambdaRule::Ell => s.serialize_str("ell"),
            LambdaRule::Fixed(x) => s.serialize_f64(x),
        }
    }
}

impl<'de> Deserialize<'de> for Lambda {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match RawNumber::deserialize(d)? {
            RawNumber::Text(s) => s.parse().map_err(serde::de::Error::custom),
            other => other
                .real()
                .map(|x| Lambda(LambdaRule::Fixed(x)))
                .map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Omega0,
    Phi,
    Zero,
}

/// Boundary data `shape×scale`, written `omega0*2`, `phi x 10` or `zero`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundarySpec {
    pub shape: Shape,
    pub scale: f64,
}

impl FromStr for BoundarySpec {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        let (shape, rest) = [("omega0", Shape::Omega0), ("phi", Shape::Phi), ("zero", Shape::Zero)]
            .into_iter()
            .find_map(|(name, shape)| s.strip_prefix(name).map(|rest| (shape, rest.trim())))
            .ok_or_else(|| format!("boundary data `{s}` must start with omega0, phi or zero"))?;
        let scale = if rest.is_empty() {
            1.0
        } else {
            let number = rest
                .strip_prefix('*')
                .or_else(|| rest.strip_prefix('x'))
                .or_else(|| rest.strip_prefix('×'))
                .ok_or_else(|| format!("expected `*scale` after the shape in `{s}`"))?;
            parse_real(number)?
        };
        Ok(BoundarySpec { shape, scale })
    }
}

impl fmt::Display for BoundarySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.shape {
            Shape::Omega0 => "omega0",
            Shape::Phi => "phi",
            Shape::Zero => "zero",
        };
        write!(f, "{name}*{}", fmt_f64(self.scale))
    }
}

impl Serialize for BoundarySpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BoundarySpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum IdentityChoice {
    All,
    Phi,
    Pohozaev,
    Kwongli,
    Cross,
}

/// Every parameter of every subcommand. Keys in a config file use these
/// field names (`T` for the cylinder length).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dim: u32,
    #[serde(deserialize_with = "de_opt_real")]
    pub q: Option<f64>,
    pub lambda: Lambda,
    #[serde(deserialize_with = "de_real")]
    pub amplitude: f64,
    /// θ nodes of ODE profiles.
    pub nodes: usize,
    /// Shots without the `v^q` term.
    pub linear: bool,
    pub scan_min: f64,
    pub scan_max: f64,
    pub samples: usize,
    pub scan_nodes: usize,
    /// Shooting tolerance on |v(π/2)|.
    pub tol: f64,
    #[serde(deserialize_with = "de_real")]
    pub q_from: f64,
    #[serde(deserialize_with = "de_real")]
    pub q_to: f64,
    pub steps: usize,
    pub identity: IdentityChoice,
    #[serde(rename = "T")]
    pub t_max: f64,
    pub nt: usize,
    pub ntheta: usize,
    pub g0: BoundarySpec,
    pub g1: BoundarySpec,
    pub newton_tol: f64,
    pub format: Option<Format>,
    pub workers: Option<usize>,
    pub profile: Option<PathBuf>,
    pub field: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub record: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let shooting = ShootingConfig::default();
        Self {
            dim: 4,
            q: None,
            lambda: Lambda(LambdaRule::Ell),
            amplitude: 1.0,
            nodes: shooting.nodes,
            linear: false,
            scan_min: shooting.scan_min,
            scan_max: shooting.scan_max,
            samples: shooting.samples,
            scan_nodes: shooting.scan_nodes,
            tol: shooting.tol,
            q_from: 1.1,
            q_to: 6.0,
            steps: 50,
            identity: IdentityChoice::All,
            t_max: 20.0,
            nt: 81,
            ntheta: 66,
            g0: BoundarySpec {
                shape: Shape::Omega0,
                scale: 1.25,
            },
            g1: BoundarySpec {
                shape: Shape::Omega0,
                scale: 1.0,
            },
            newton_tol: CylinderOptions::default().newton_tol,
            format: None,
            workers: None,
            profile: None,
            field: None,
            trace: None,
            record: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("tol", self.tol), ("newton_tol", self.newton_tol)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a positive number, got {v}")));
            }
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(())
    }

    fn require_q(&self) -> Result<f64> {
        self.q
            .ok_or_else(|| Error::Config("missing exponent: pass --q or set `q` in the config file".into()))
    }

    fn shooting(&self) -> ShootingConfig {
        ShootingConfig {
            scan_min: self.scan_min,
            scan_max: self.scan_max,
            samples: self.samples,
            tol: self.tol,
            nodes: self.nodes,
            scan_nodes: self.scan_nodes,
            ivp: IvpOptions {
                nonlinear: !self.linear,
                ..IvpOptions::default()
            },
            ..ShootingConfig::default()
        }
    }

    fn params(&self) -> Result<ProblemParams> {
        let q = self.require_q()?;
        ProblemParams::new(self.dim, q, self.lambda.0.lambda(self.dim, q)?)
    }
}

/// Reads a TOML config. An empty file gives [`RunConfig::default`].
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    toml::from_str(text).map_err(|e| Error::Config(e.message().to_owned()))
}

/// Everything one invocation produced, for archiving with `--record`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    pub config: RunConfig,
    pub version: String,
    pub wall_time: f64,
    pub exit_code: i32,
    pub reports: Vec<Value>,
}

impl RunRecord {
    pub fn to_json(&self) -> Result<String> {
        to_json(self).map_err(|e| Error::Numerical(format!("record serialization: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("malformed run record: {e}")))
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "singprof",
    version,
    about = "Separable boundary-singularity profiles of -Δu = u^q"
)]
struct Cli {
    /// TOML file with default parameters; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for parallel scans (default: all cores).
    #[arg(long, global = true, env = WORKERS_ENV)]
    workers: Option<usize>,
    /// Write a JSON run record (config, version, wall time, reports) here.
    #[arg(long, global = true)]
    record: Option<PathBuf>,
    /// json: summary; csv: the main table (profile, scan rows, field …).
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Critical exponents q1 < q2 < q3; with --q also ℓ, β and the regime.
    Exponents(ExponentsArgs),
    /// One shot of the meridian ODE from the pole.
    SolveOde(OdeArgs),
    /// Amplitude scan and bisection for the positive profile.
    Shoot(ShootArgs),
    /// Existence status over a range of exponents (CSV).
    Scan(ScanArgs),
    /// Integral identities on the shooting solution, one JSON line each.
    Verify(VerifyArgs),
    /// Solve the elliptic problem on the truncated log-cylinder.
    Cylinder(CylinderArgs),
}

#[derive(Debug, Args)]
struct ExponentsArgs {
    /// Dimension N ≥ 4 [default: 4].
    #[arg(long)]
    dim: Option<u32>,
    /// Exponent q > 1; fractions such as 5/3 are exact.
    #[arg(long, value_parser = parse_real)]
    q: Option<f64>,
}

#[derive(Debug, Args)]
struct ProblemArgs {
    /// Dimension N ≥ 4 [default: 4].
    #[arg(long)]
    dim: Option<u32>,
    /// Exponent q > 1; fractions such as 5/3 are exact.
    #[arg(long, value_parser = parse_real)]
    q: Option<f64>,
    /// `ell` for ℓ_{N,q}, or a number [default: ell].
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<Lambda>,
}

#[derive(Debug, Args)]
struct ScanRangeArgs {
    /// Smallest scanned amplitude [default: 1e-4].
    #[arg(long)]
    scan_min: Option<f64>,
    /// Largest scanned amplitude [default: 1e4].
    #[arg(long)]
    scan_max: Option<f64>,
    /// Logarithmic scan samples [default: 400].
    #[arg(long)]
    samples: Option<usize>,
    /// Tolerance on |v(π/2)| [default: 1e-8].
    #[arg(long)]
    tol: Option<f64>,
    /// θ nodes of the returned profile [default: 4096].
    #[arg(long)]
    nodes: Option<usize>,
}

#[derive(Debug, Args)]
struct OdeArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// v(0) [default: 1].
    #[arg(long, value_parser = parse_real)]
    amplitude: Option<f64>,
    /// θ nodes [default: 4096].
    #[arg(long)]
    nodes: Option<usize>,
    /// Drop the v^q term.
    #[arg(long)]
    linear: bool,
    /// Write the profile as CSV `theta,v,dv`.
    #[arg(long)]
    profile: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ShootArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    range: ScanRangeArgs,
    /// Write the profile as CSV `theta,v,dv`.
    #[arg(long)]
    profile: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScanArgs {
    /// Dimension N ≥ 4 [default: 4].
    #[arg(long)]
    dim: Option<u32>,
    /// `ell` for ℓ_{N,q}, or a number [default: ell].
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<Lambda>,
    /// First exponent [default: 1.1].
    #[arg(long, value_parser = parse_real)]
    q_from: Option<f64>,
    /// Last exponent [default: 6].
    #[arg(long, value_parser = parse_real)]
    q_to: Option<f64>,
    /// Number of exponents, endpoints included [default: 50].
    #[arg(long)]
    steps: Option<usize>,
    #[command(flatten)]
    range: ScanRangeArgs,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Identity to evaluate [default: all].
    #[arg(long, value_enum)]
    identity: Option<IdentityChoice>,
    #[command(flatten)]
    range: ScanRangeArgs,
}

#[derive(Debug, Args)]
struct CylinderArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Cylinder length [default: 20].
    #[arg(long = "T")]
    t_max: Option<f64>,
    /// Nodes in t, ends included [default: 81].
    #[arg(long)]
    nt: Option<usize>,
    /// Nodes in θ, pole to equator [default: 66].
    #[arg(long)]
    ntheta: Option<usize>,
    /// Data at t = 0: omega0|phi|zero, optionally `*scale` [default: omega0*1.25].
    #[arg(long)]
    g0: Option<BoundarySpec>,
    /// Data at t = T [default: omega0].
    #[arg(long)]
    g1: Option<BoundarySpec>,
    /// Newton tolerance on the residual max-norm [default: 1e-8].
    #[arg(long)]
    newton_tol: Option<f64>,
    /// Write the field as CSV `t,theta,w`.
    #[arg(long)]
    field: Option<PathBuf>,
    /// Write the energy trace as CSV `t,H,kinetic`.
    #[arg(long)]
    trace: Option<PathBuf>,
}

macro_rules! overlay {
    ($cfg:expr, $args:expr; $($field:ident),* $(,)?) => {
        {
            $( if let Some(v) = $args.$field.clone() { $cfg.$field = v.into(); } )*
        }
    };
}

impl ProblemArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        overlay!(cfg, self; dim, q, lambda);
    }
}

impl ScanRangeArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        overlay!(cfg, self; scan_min, scan_max, samples, tol, nodes);
    }
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Exponents(_) => "exponents",
            Command::SolveOde(_) => "solve-ode",
            Command::Shoot(_) => "shoot",
            Command::Scan(_) => "scan",
            Command::Verify(_) => "verify",
            Command::Cylinder(_) => "cylinder",
        }
    }

    fn apply(&self, cfg: &mut RunConfig) {
        match self {
            Command::Exponents(a) => overlay!(cfg, a; dim, q),
            Command::SolveOde(a) => {
                a.problem.apply(cfg);
                overlay!(cfg, a; amplitude, nodes, profile);
                cfg.linear |= a.linear;
            }
            Command::Shoot(a) => {
                a.problem.apply(cfg);
                a.range.apply(cfg);
                overlay!(cfg, a; profile);
            }
            Command::Scan(a) => {
                overlay!(cfg, a; dim, lambda, q_from, q_to, steps);
                a.range.apply(cfg);
            }
            Command::Verify(a) => {
                a.problem.apply(cfg);
                a.range.apply(cfg);
                overlay!(cfg, a; identity);
            }
            Command::Cylinder(a) => {
                a.problem.apply(cfg);
                overlay!(cfg, a; t_max, nt, ntheta, g0, g1, newton_tol, field, trace);
            }
        }
    }
}

fn parse(
    argv: impl IntoIterator<Item = impl Into<OsString> + Clone>,
) -> std::result::Result<(Cli, RunConfig), ParseFailure> {
    let cli = Cli::try_parse_from(argv).map_err(ParseFailure::Clap)?;
    let mut cfg = match &cli.config {
        Some(path) => load_config(path).map_err(ParseFailure::Config)?,
        None => RunConfig::default(),
    };
    cli.command.apply(&mut cfg);
    overlay!(cfg, cli; workers, record, format);
    cfg.validate().map_err(ParseFailure::Config)?;
    Ok((cli, cfg))
}

enum ParseFailure {
    Clap(clap::Error),
    Config(Error),
}

/// The configuration an argument vector resolves to (defaults, then file,
/// then flags).
pub fn effective_config(argv: impl IntoIterator<Item = impl Into<OsString> + Clone>) -> Result<RunConfig> {
    match parse(argv) {
        Ok((_, cfg)) => Ok(cfg),
        Err(ParseFailure::Clap(e)) => Err(Error::Config(e.to_string())),
        Err(ParseFailure::Config(e)) => Err(e),
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 1,
        Error::Domain(_) | Error::GridMismatch(_) | Error::NotDerivedYet(_) | Error::Io(_) => 2,
        Error::NonConvergence { .. } | Error::Numerical(_) => 3,
    }
}

/// Runs the command line on `argv` (program name first) and returns the exit
/// code; stdout and stderr are the given writers.
pub fn run_with(
    argv: impl IntoIterator<Item = impl Into<OsString> + Clone>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let (cli, cfg) = match parse(argv) {
        Ok(p) => p,
        Err(ParseFailure::Clap(e)) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                1
            } else {
                let _ = write!(out, "{text}");
                0
            };
        }
        Err(ParseFailure::Config(e)) => {
            let _ = writeln!(err, "error: {e}");
            return 1;
        }
    };
    let start = Instant::now();
    let result = match cfg.workers {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| execute(&cli.command, &cfg)),
            Err(e) => Err(Error::Config(format!("cannot start {n} workers: {e}"))),
        },
        None => execute(&cli.command, &cfg),
    };
    let (code, reports) = match result {
        Ok(done) => {
            if let Err(e) = out.write_all(done.stdout.as_bytes()) {
                let _ = writeln!(err, "error: {e}");
                return 2;
            }
            (done.code, done.reports)
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            (exit_code(&e), vec![Value::String(e.to_string())])
        }
    };
    if let Some(path) = &cfg.record {
        let record = RunRecord {
            command: cli.command.name().to_owned(),
            config: cfg.clone(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            wall_time: start.elapsed().as_secs_f64(),
            exit_code: code,
            reports,
        };
        let written = record.to_json().and_then(|text| write_text(path, &(text + "\n")));
        if let Err(e) = written {
            let _ = writeln!(err, "error: {e}");
            return if code == 0 { exit_code(&e) } else { code };
        }
    }
    code
}

pub fn run(argv: impl IntoIterator<Item = impl Into<OsString> + Clone>) -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

struct Done {
    code: i32,
    stdout: String,
    reports: Vec<Value>,
}

impl Done {
    fn new() -> Self {
        Done {
            code: 0,
            stdout: String::new(),
            reports: Vec::new(),
        }
    }

    /// Adds a report and, in JSON mode, prints it as one line.
    fn report<T: Serialize>(&mut self, value: &T, print: bool) -> Result<()> {
        let v = serde_json::to_value(value).map_err(|e| Error::Numerical(format!("serialization: {e}")))?;
        if print {
            self.stdout += &to_json(&v).map_err(|e| Error::Numerical(format!("serialization: {e}")))?;
            self.stdout.push('\n');
        }
        self.reports.push(v);
        Ok(())
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(text.as_bytes())?;
    f.flush()?;
    Ok(())
}

fn write_with(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    body(&mut f)?;
    f.flush()?;
    Ok(())
}

fn profile_csv(p: &RadialProfile) -> Result<String> {
    let mut buf = Vec::new();
    p.write_csv(&mut buf)?;
    Ok(String::from_utf8(buf).expect("CSV is UTF-8"))
}

fn execute(cmd: &Command, cfg: &RunConfig) -> Result<Done> {
    let csv = cfg.format == Some(Format::Csv);
    match cmd {
        Command::Exponents(_) => exponents(cfg, csv),
        Command::SolveOde(_) => solve_ode(cfg, csv),
        Command::Shoot(_) => shoot(cfg, csv),
        Command::Scan(_) => scan(cfg, cfg.format != Some(Format::Json)),
        Command::Verify(_) => verify(cfg, csv),
        Command::Cylinder(_) => cylinder(cfg, csv),
    }
}

#[derive(Serialize)]
struct ExponentsReport {
    dim: u32,
    #[serde(serialize_with = "real")]
    q1: f64,
    #[serde(serialize_with = "real")]
    q2: f64,
    #[serde(serialize_with = "real")]
    q3: f64,
    exact: [String; 3],
    q: Option<f64>,
    ell: Option<f64>,
    beta: Option<f64>,
    regime: Option<Regime>,
}

fn exponents(cfg: &RunConfig, csv: bool) -> Result<Done> {
    let set = critical_exponents(cfg.dim)?;
    let mut r = ExponentsReport {
        dim: cfg.dim,
        q1: set.q1_f64(),
        q2: set.q2_f64(),
        q3: set.q3_f64(),
        exact: [set.q1.to_string(), set.q2.to_string(), set.q3.to_string()],
        q: cfg.q,
        ell: None,
        beta: None,
        regime: None,
    };
    if let Some(q) = cfg.q {
        r.ell = Some(ell(cfg.dim, q)?);
        r.beta = Some(damping_coefficient(cfg.dim, q)?);
        r.regime = Some(classify_regime(cfg.dim, q)?);
    }
    let mut done = Done::new();
    done.report(&r, !csv)?;
    if csv {
        let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
        done.stdout = format!(
            "dim,q1,q2,q3,q,ell,beta,regime\n{},{},{},{},{},{},{},{}\n",
            r.dim,
            fmt_f64(r.q1),
            fmt_f64(r.q2),
            fmt_f64(r.q3),
            opt(r.q),
            opt(r.ell),
            opt(r.beta),
            r.regime.map(|g| g.as_str()).unwrap_or_default()
        );
    }
    Ok(done)
}

#[derive(Serialize)]
struct OdeReport {
    params: ProblemParams,
    #[serde(serialize_with = "real")]
    amplitude: f64,
    nonlinear: bool,
    reached_end: bool,
    first_zero: Option<f64>,
    blowup_angle: Option<f64>,
    boundary_value: Option<f64>,
    ode_residual: Option<f64>,
}

fn solve_ode(cfg: &RunConfig, csv: bool) -> Result<Done> {
    let params = cfg.params()?;
    let grid = ThetaGrid::new(cfg.nodes)?;
    let ivp = IvpOptions {
        nonlinear: !cfg.linear,
        stop_at_zero: false,
        ..IvpOptions::default()
    };
    let shot = integrate_ivp_with(&params, cfg.amplitude, &grid, &ivp)?;
    let profile = shot.profile();
    let report = OdeReport {
        params,
        amplitude: cfg.amplitude,
        nonlinear: ivp.nonlinear,
        reached_end: shot.reached_end(),
        first_zero: shot.first_zero,
        blowup_angle: shot.blowup_angle,
        boundary_value: profile.as_ref().map(|p| p.boundary_value()),
        ode_residual: profile.as_ref().map(|p| ode_residual_with(p, &params, ivp.nonlinear)),
    };
    let mut done = Done::new();
    done.report(&report, !csv)?;
    if let Some(p) = &profile {
        if let Some(path) = &cfg.profile {
            write_with(path, |f| p.write_csv(f))?;
        }
        if csv {
            done.stdout = profile_csv(p)?;
        }
    }
    if profile.is_none() && (csv || cfg.profile.is_some()) {
        return Err(Error::Numerical(format!(
            "shot with amplitude {} stopped before π/2 (blowup at {:?})",
            cfg.amplitude, shot.blowup_angle
        )));
    }
    Ok(done)
}

#[derive(Serialize)]
struct ShootReport<'a> {
    params: ProblemParams,
    regime: Regime,
    #[serde(flatten)]
    outcome: &'a crate::shooting::ShootingOutcome,
}

fn shoot(cfg: &RunConfig, csv: bool) -> Result<Done> {
    let params = cfg.params()?;
    let outcome = solve_positive(&params, &cfg.shooting())?;
    let mut done = Done::new();
    done.report(
        &ShootReport {
            params,
            regime: classify_regime(params.dim, params.q)?,
            outcome: &outcome,
        },
        !csv,
    )?;
    if let Some(p) = &outcome.profile {
        if let Some(path) = &cfg.profile {
            write_with(path, |f| p.write_csv(f))?;
        }
        if csv {
            done.stdout = profile_csv(p)?;
        }
    }
    if outcome.status == ShootingStatus::Inconclusive {
        done.code = 3;
    }
    Ok(done)
}

fn scan(cfg: &RunConfig, csv: bool) -> Result<Done> {
    if cfg.steps < 1 || !(cfg.q_from <= cfg.q_to) {
        return Err(Error::domain(format!(
            "scan needs steps >= 1 and q_from <= q_to, got {} exponents on [{}, {}]",
            cfg.steps, cfg.q_from, cfg.q_to
        )));
    }
    let q_grid: Vec<f64> = (0..cfg.steps)
        .map(|k| match (k, cfg.steps) {
            (0, _) => cfg.q_from,
            (k, s) if k + 1 == s => cfg.q_to,
            (k, s) => cfg.q_from + (cfg.q_to - cfg.q_from) * k as f64 / (s - 1) as f64,
        })
        .collect();
    let rows = existence_scan(cfg.dim, &q_grid, cfg.lambda.0, &cfg.shooting());
    let mut done = Done::new();
    let mut table = String::from("q,regime,status,amplitude,residual\n");
    for row in &rows {
        done.report(row, !csv)?;
        let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
        table += &format!(
            "{},{},{},{},{}\n",
            fmt_f64(row.q),
            row.regime.map(|r| r.as_str()).unwrap_or_default(),
            row.status.map(|s| s.as_str()).unwrap_or_default(),
            opt(row.amplitude),
            opt(row.residual)
        );
    }
    if csv {
        done.stdout = table;
    }
    if rows.iter().any(|r| r.status == Some(ShootingStatus::Inconclusive)) {
        done.code = 3;
    }
    Ok(done)
}

fn verify(cfg: &RunConfig, csv: bool) -> Result<Done> {
    let params = cfg.params()?;
    let outcome = solve_positive(&params, &cfg.shooting())?;
    let profile = match (outcome.status, outcome.profile) {
        (ShootingStatus::Solution, Some(p)) => p,
        (ShootingStatus::NonexistenceCertified, _) => {
            return Err(Error::domain(format!(
                "no positive profile to verify at N = {}, q = {}, lambda = {}",
                params.dim, params.q, params.lambda
            )))
        }
        (status, _) => {
            return Err(Error::Numerical(format!(
                "shooting returned {}: {}",
                status.as_str(),
                outcome.diagnostic.unwrap_or_default()
            )))
        }
    };
    let wanted = |c: IdentityChoice| cfg.identity == IdentityChoice::All || cfg.identity == c;
    let mut reports = Vec::new();
    if wanted(IdentityChoice::Phi) {
        reports.push(phi_balance_residual(&profile, &params));
    }
    if wanted(IdentityChoice::Pohozaev) {
        reports.push(pohozaev_residual(&profile, &params));
    }
    if wanted(IdentityChoice::Kwongli) {
        reports.push(kwong_li_residual(&profile, &params, &KwongLiWeight::derived(&params))?);
    }
    if wanted(IdentityChoice::Cross) {
        // With a single positive solution the only pair is ω₀ with itself.
        reports.push(cross_term(&profile, &profile, &params)?);
    }
    let mut done = Done::new();
    let mut table = String::from("name,lhs,rhs,residual,relative_residual\n");
    for r in &reports {
        done.report(r, !csv)?;
        table += &format!(
            "{},{},{},{},{}\n",
            r.name,
            fmt_f64(r.lhs),
            fmt_f64(r.rhs),
            fmt_f64(r.residual),
            fmt_f64(r.relative_residual)
        );
    }
    if csv {
        done.stdout = table;
    }
    Ok(done)
}

#[derive(Serialize)]
struct CylinderReport {
    params: ProblemParams,
    grid: CylinderGrid,
    g0: BoundarySpec,
    g1: BoundarySpec,
    stats: crate::cylinder::SolveStats,
    energy_law: crate::identities::IdentityReport,
    /// Largest step of H against the direction set by sign(β), on [T/4, 3T/4].
    #[serde(serialize_with = "real")]
    energy_monotonicity_violation: f64,
    #[serde(serialize_with = "real")]
    mid_profile_max: f64,
    mid_profile_distance_to_omega0: Option<f64>,
    #[serde(serialize_with = "real")]
    bound_sup: f64,
    decay: Option<crate::cylinder::DecayFit>,
    eta_shape_error: Option<f64>,
}

fn cylinder(cfg: &RunConfig, csv: bool) -> Result<Done> {
    let q = cfg.require_q()?;
    let lambda = cfg.lambda.0.lambda(cfg.dim, q)?;
    let params = ProblemParams::new(cfg.dim, q, lambda)?;
    let grid = CylinderGrid::new(cfg.t_max, cfg.nt, cfg.ntheta)?;
    let th = grid.theta_grid();
    let needs_omega0 = classify_regime(cfg.dim, q)? == Regime::UniqueSolution;
    let omega0 = if needs_omega0 || [cfg.g0, cfg.g1].iter().any(|g| g.shape == Shape::Omega0) {
        Some(omega0_with(
            cfg.dim,
            q,
            &ShootingConfig {
                nodes: th.len(),
                ..cfg.shooting()
            },
        )?)
    } else {
        None
    };
    let data = |g: BoundarySpec| -> RadialProfile {
        match g.shape {
            Shape::Omega0 => omega0.as_ref().expect("ω₀ computed above").scaled(g.scale),
            Shape::Phi => RadialProfile::from_fn(th, |t| g.scale * t.cos(), |t| -g.scale * t.sin()),
            Shape::Zero => RadialProfile::zero(th),
        }
    };
    let opts = CylinderOptions {
        newton_tol: cfg.newton_tol,
        ..CylinderOptions::default()
    };
    let field = solve_cylinder(&params, &data(cfg.g0), &data(cfg.g1), &grid, &opts)?;

    let trace = energy_trace(&field, &params)?;
    let beta = damping_coefficient(cfg.dim, q)?;
    let q1 = critical_exponents(cfg.dim)?.q1_f64();
    let critical = (q - q1).abs() <= 1e-12 * q1 && cfg.t_max >= 50.0;
    let mid = field.profile_at(0.5 * cfg.t_max)?;
    let report = CylinderReport {
        params,
        grid,
        g0: cfg.g0,
        g1: cfg.g1,
        energy_law: energy_identity_residual(&trace, &params, cfg.t_max)?,
        energy_monotonicity_violation: trace.monotonicity_violation(
            if beta < 0.0 { -1.0 } else { 1.0 },
            0.25 * cfg.t_max,
            0.75 * cfg.t_max,
        ),
        mid_profile_max: mid.max_abs(),
        mid_profile_distance_to_omega0: match &omega0 {
            Some(w) if needs_omega0 => Some(mid_profile_distance(&field, w)?),
            _ => None,
        },
        bound_sup: bound_diagnostic(&field),
        decay: if critical {
            Some(critical_decay_fit(&field, &params)?)
        } else {
            None
        },
        eta_shape_error: if critical {
            Some(eta_shape_error(&field, &params, 0.75 * cfg.t_max)?)
        } else {
            None
        },
        stats: field.stats.clone(),
    };
    let mut done = Done::new();
    done.report(&report, !csv)?;
    if let Some(path) = &cfg.field {
        write_with(path, |f| field.write_csv(f))?;
    }
    if let Some(path) = &cfg.trace {
        write_with(path, |f| trace.write_csv(f))?;
    }
    if csv {
        let mut buf = Vec::new();
        field.write_csv(&mut buf)?;
        done.stdout = String::from_utf8(buf).expect("CSV is UTF-8");
    }
    Ok(done)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_specs_accept_all_separators() {
        for s in ["omega0*2", "omega0x2", "omega0×2", " omega0 * 2 "] {
            assert_eq!(
                s.parse::<BoundarySpec>().unwrap(),
                BoundarySpec {
                    shape: Shape::Omega0,
                    scale: 2.0
                }
            );
        }
        assert_eq!("zero".parse::<BoundarySpec>().unwrap().scale, 1.0);
        assert!("psi*2".parse::<BoundarySpec>().is_err());
        assert!("phi/2".parse::<BoundarySpec>().is_err());
        let b: BoundarySpec = "phi*0.1".parse().unwrap();
        assert_eq!(b.to_string().parse::<BoundarySpec>().unwrap(), b);
    }

    #[test]
    fn fractions_are_read_exactly() {
        assert_eq!(parse_real("5/3").unwrap(), 5.0 / 3.0);
        assert_eq!(parse_real("-0.75").unwrap(), -0.75);
        assert!(parse_real("1/0").is_err());
        assert_eq!("ell".parse::<Lambda>().unwrap(), Lambda(LambdaRule::Ell));
    }

    #[test]
    fn config_accepts_integers_fractions_and_strings() {
        let cfg = parse_config("q = \"5/3\"\nlambda = -3\nT = 60.0\ng0 = \"phi*10\"\n").unwrap();
        assert_eq!(cfg.q, Some(5.0 / 3.0));
        assert_eq!(cfg.lambda, Lambda(LambdaRule::Fixed(-3.0)));
        assert_eq!(cfg.t_max, 60.0);
        assert_eq!(
            cfg.g0,
            BoundarySpec {
                shape: Shape::Phi,
                scale: 10.0
            }
        );
    }

    #[test]
    fn exit_codes_follow_error_kind() {
        assert_eq!(exit_code(&Error::Config("x".into())), 1);
        assert_eq!(exit_code(&Error::domain("x")), 2);
        assert_eq!(exit_code(&Error::Numerical("x".into())), 3);
        let nc = Error::NonConvergence {
            solver: "newton",
            iterations: 3,
            last_residual: 1.0,
            history: vec![],
        };
        assert_eq!(exit_code(&nc), 3);
    }
}
