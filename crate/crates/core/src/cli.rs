//! Command-line front end. Curves are written as CSV, scalar reports as
//! JSON. Exit codes: 0 success, 1 physics or numerics failure, 2 usage or
//! configuration error.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::energies::{cp_force, cp_potential, distance_grid, energy, Method, PotentialCurve};
use crate::error::Error;
use crate::factorization::EtaEvaluator;
use crate::model::{build_config, check_stability, ModelConfig, RawConfig, RawModel, RawNumerics, RegulatorKind};
use crate::modes::coupling_density;
use crate::oracle::oracle_compare;
use crate::resolvent::{find_pole, ResolventEvaluator};
use crate::validation::{parse_suite, run_suite};

#[derive(Parser, Debug)]
#[command(name = "casimir", version, about = "Exact oscillator-field ground-state energy and Casimir-Polder potential")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Stability margin of the configuration.
    Stability(ScalarArgs),
    /// Coupling density D(k) on a wavenumber grid.
    Density(GridArgs),
    /// Boundary values G+ and G- on a wavenumber grid.
    Resolvent(GridArgs),
    /// Complex pole of the resolvent on the second sheet.
    Pole(PoleArgs),
    /// Phase shift and the factor eta on a grid.
    Eta(EtaArgs),
    /// Ground-state energy by one method.
    Energy(EnergyArgs),
    /// Casimir-Polder potential E(d) - E(free) on a distance grid.
    CpCurve(CurveArgs),
    /// Casimir-Polder force -dE/dd on a distance grid.
    ForceCurve(CurveArgs),
    /// Finite-cavity exact energy against the continuum methods.
    OracleCompare(OracleArgs),
    /// Run acceptance criteria.
    Validate(ValidateArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct ModelArgs {
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Coupling strength u.
    #[arg(long, allow_hyphen_values = true)]
    pub u: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub px: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub py: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub pz: Option<f64>,
    /// free-space or wall.
    #[arg(long)]
    pub geometry: Option<String>,
    /// Wall distance; implies the wall geometry unless --geometry says otherwise.
    #[arg(long, allow_hyphen_values = true)]
    pub distance: Option<f64>,
    #[arg(long)]
    pub regularization: Option<RegulatorArg>,
    /// Cutoff wavenumber kc.
    #[arg(long, allow_hyphen_values = true)]
    pub kc: Option<f64>,
    /// Relative quadrature tolerance.
    #[arg(long, allow_hyphen_values = true)]
    pub tolerance: Option<f64>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegulatorArg {
    Exponential,
    Gaussian,
    Sharp,
}

impl From<RegulatorArg> for RegulatorKind {
    fn from(r: RegulatorArg) -> Self {
        match r {
            RegulatorArg::Exponential => RegulatorKind::Exponential,
            RegulatorArg::Gaussian => RegulatorKind::Gaussian,
            RegulatorArg::Sharp => RegulatorKind::Sharp,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug, Clone)]
pub struct OutputArgs {
    /// Write results here instead of stdout; a manifest goes alongside.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Args, Debug, Clone)]
pub struct ScalarArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Args, Debug, Clone)]
pub struct GridArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub out: OutputArgs,
    #[arg(long, default_value_t = 0.05, allow_hyphen_values = true)]
    pub k_min: f64,
    #[arg(long, default_value_t = 5.0, allow_hyphen_values = true)]
    pub k_max: f64,
    #[arg(long, default_value_t = 100)]
    pub points: usize,
    #[arg(long)]
    pub log_grid: bool,
}

#[derive(Args, Debug, Clone)]
pub struct PoleArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub out: OutputArgs,
    /// Starting point "re,im"; by default the weak-coupling estimate.
    #[arg(long)]
    pub guess: Option<String>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Positive real axis: k, phase shift, eta(k).
    Real,
    /// Positive imaginary axis: xi, Re and Im of eta(i xi).
    Imaginary,
}

#[derive(Args, Debug, Clone)]
pub struct EtaArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, value_enum, default_value_t = Axis::Real)]
    pub axis: Axis,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodArg {
    SecondOrder,
    ExactResolvent,
    SelfConsistent,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::SecondOrder => Method::SecondOrder,
            MethodArg::ExactResolvent => Method::ExactResolvent,
            MethodArg::SelfConsistent => Method::SelfConsistent,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct EnergyArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub out: OutputArgs,
    #[arg(long, value_enum, default_value_t = MethodArg::ExactResolvent)]
    pub method: MethodArg,
}

#[derive(Args, Debug, Clone)]
pub struct CurveArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub out: OutputArgs,
    #[arg(long, value_enum, default_value_t = MethodArg::SecondOrder)]
    pub method: MethodArg,
    #[arg(long, default_value_t = 1e-2, allow_hyphen_values = true)]
    pub d_min: f64,
    #[arg(long, default_value_t = 1e2, allow_hyphen_values = true)]
    pub d_max: f64,
    #[arg(long, default_value_t = 20)]
    pub points: usize,
    #[arg(long)]
    pub log_grid: bool,
}

#[derive(Args, Debug, Clone)]
pub struct OracleArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub out: OutputArgs,
    /// Box lengths in units of pi; repeat for a sequence.
    #[arg(long = "box-pi", default_values_t = [10.0])]
    pub box_pi: Vec<f64>,
    /// Mode-set cutoff; defaults to kc for the sharp regulator.
    #[arg(long)]
    pub k_max: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct ValidateArgs {
    /// "all" or a comma-separated list of criterion numbers.
    #[arg(long, default_value = "all")]
    pub suite: String,
    #[command(flatten)]
    pub out: OutputArgs,
}

/// Provenance record written next to every file output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub arguments: Vec<String>,
    pub config: Option<ModelConfig>,
    pub version: String,
    pub timestamp: u64,
    pub outputs: Vec<OutputDigest>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputDigest {
    pub path: String,
    pub sha256: String,
}

enum Failure {
    Usage(String),
    Physics(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config_error() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Physics(e.to_string())
        }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

impl ModelArgs {
    fn raw_flags(&self) -> RawConfig {
        RawConfig {
            model: RawModel {
                u: self.u,
                p: None,
                px: self.px,
                py: self.py,
                pz: self.pz,
                geometry: self.geometry.clone(),
                distance: self.distance,
                regularization: self.regularization.map(|r| {
                    match r {
                        RegulatorArg::Exponential => "exponential",
                        RegulatorArg::Gaussian => "gaussian",
                        RegulatorArg::Sharp => "sharp",
                    }
                    .to_string()
                }),
                kc: self.kc,
            },
            numerics: RawNumerics {
                rel_tol: self.tolerance,
                ..Default::default()
            },
        }
    }

    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<ModelConfig, String> {
        self.resolve_inner().map_err(|f| match f {
            Failure::Usage(m) | Failure::Physics(m) => m,
        })
    }

    fn resolve_inner(&self) -> Result<ModelConfig, Failure> {
        let file = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| usage(format!("cannot read config file {}: {e}", path.display())))?;
                RawConfig::from_toml(&text)?
            }
            None => RawConfig::default(),
        };
        let mut merged = file.overlay(&self.raw_flags());
        // A flag distance without a geometry flag selects the wall even if
        // the file asked for free space.
        if self.distance.is_some() && self.geometry.is_none() {
            merged.model.geometry = Some("wall".into());
        }
        Ok(build_config(&merged)?)
    }
}

/// Full-precision scientific notation; parses back to the same value.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        let line: Vec<String> = r.iter().map(|v| fmt_num(*v)).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

fn json_rows(header: &[&str], rows: &[Vec<f64>]) -> Value {
    Value::Array(
        rows.iter()
            .map(|r| Value::Object(header.iter().zip(r).map(|(h, v)| (h.to_string(), json!(v))).collect()))
            .collect(),
    )
}

fn table(header: &[&str], rows: &[Vec<f64>], format: Option<Format>) -> String {
    match format.unwrap_or(Format::Csv) {
        Format::Csv => csv(header, rows),
        Format::Json => pretty(&json_rows(header, rows)),
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

/// Scalar reports: JSON by default, `field,value` rows for numeric fields in CSV.
fn report(v: &Value, format: Option<Format>) -> String {
    match format.unwrap_or(Format::Json) {
        Format::Json => pretty(v),
        Format::Csv => {
            let mut s = String::from("field,value\n");
            if let Value::Object(map) = v {
                for (k, x) in map {
                    if let Some(f) = x.as_f64() {
                        let _ = writeln!(s, "{k},{}", fmt_num(f));
                    }
                }
            }
            s
        }
    }
}

fn grid(min: f64, max: f64, points: usize, log: bool) -> Result<Vec<f64>, Failure> {
    distance_grid(min, max, points, log).map_err(|e| usage(e.to_string()))
}

fn parse_complex(s: &str) -> Result<Complex64, Failure> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(usage(format!("expected \"re,im\", got '{s}'")));
    }
    let p = |t: &str| t.trim().parse::<f64>().map_err(|_| usage(format!("bad number '{t}'")));
    Ok(Complex64::new(p(parts[0])?, p(parts[1])?))
}

fn curve_rows(c: &PotentialCurve) -> Vec<Vec<f64>> {
    c.points.iter().map(|p| vec![p.d, p.value, p.error]).collect()
}

struct Outcome {
    text: String,
    config: Option<ModelConfig>,
    code: i32,
}

fn ok(text: String, cfg: &ModelConfig) -> Result<Outcome, Failure> {
    Ok(Outcome {
        text,
        config: Some(cfg.clone()),
        code: 0,
    })
}

fn execute(cmd: &Command) -> Result<Outcome, Failure> {
    match cmd {
        Command::Stability(a) => {
            let cfg = a.model.resolve_inner()?;
            let r = check_stability(&cfg)?;
            ok(report(&serde_json::to_value(r).expect("serializable"), a.out.format), &cfg)
        }
        Command::Density(a) => {
            let cfg = a.model.resolve_inner()?;
            let rows: Vec<Vec<f64>> = grid(a.k_min, a.k_max, a.points, a.log_grid)?
                .into_iter()
                .map(|k| vec![k, coupling_density(k, &cfg)])
                .collect();
            ok(table(&["k", "D"], &rows, a.out.format), &cfg)
        }
        Command::Resolvent(a) => {
            let cfg = a.model.resolve_inner()?;
            let ev = ResolventEvaluator::new(&cfg);
            let rows = grid(a.k_min, a.k_max, a.points, a.log_grid)?
                .into_iter()
                .map(|k| {
                    let (gp, gm) = ev.boundary_values(k)?;
                    Ok(vec![k, gp.re, gp.im, gm.re, gm.im])
                })
                .collect::<Result<Vec<_>, Error>>()?;
            ok(table(&["k", "re_g_plus", "im_g_plus", "re_g_minus", "im_g_minus"], &rows, a.out.format), &cfg)
        }
        Command::Pole(a) => {
            let cfg = a.model.resolve_inner()?;
            let guess = a.guess.as_deref().map(parse_complex).transpose()?;
            let p = find_pole(&cfg, guess)?;
            let v = json!({
                "z_re": p.z.re,
                "z_im": p.z.im,
                "residual": p.residual,
                "iterations": p.iterations,
                "energy_shift": p.energy_shift(),
                "half_width": p.half_width(),
            });
            ok(report(&v, a.out.format), &cfg)
        }
        Command::Eta(a) => {
            let g = &a.grid;
            let cfg = g.model.resolve_inner()?;
            let ev = EtaEvaluator::new(&cfg)?;
            let pts = grid(g.k_min, g.k_max, g.points, g.log_grid)?;
            let (header, rows): (Vec<&str>, Vec<Vec<f64>>) = match a.axis {
                Axis::Real => (
                    vec!["k", "phase_shift", "eta"],
                    pts.into_iter()
                        .map(|k| Ok(vec![k, ev.phase_shift(k)?, ev.eta_real(k)?]))
                        .collect::<Result<_, Error>>()?,
                ),
                Axis::Imaginary => (
                    vec!["xi", "re_eta", "im_eta"],
                    pts.into_iter()
                        .map(|x| {
                            let e = ev.eta(Complex64::new(0.0, x))?;
                            Ok(vec![x, e.re, e.im])
                        })
                        .collect::<Result<_, Error>>()?,
                ),
            };
            ok(table(&header, &rows, g.out.format), &cfg)
        }
        Command::Energy(a) => {
            let cfg = a.model.resolve_inner()?;
            let r = energy(&cfg, a.method.into())?;
            let v = json!({
                "method": r.method.to_string(),
                "value": r.value,
                "error": r.quad_error,
                "integral": r.integral,
                "config": r.config,
            });
            ok(report(&v, a.out.format), &cfg)
        }
        Command::CpCurve(a) | Command::ForceCurve(a) => {
            let cfg = a.model.resolve_inner()?;
            let d = grid(a.d_min, a.d_max, a.points, a.log_grid)?;
            let mut curve = cp_potential(&cfg, &d, a.method.into())?;
            if matches!(cmd, Command::ForceCurve(_)) {
                curve = cp_force(&curve)?;
            }
            let text = match a.out.format.unwrap_or(Format::Csv) {
                Format::Csv => csv(&["d", "value", "error"], &curve_rows(&curve)),
                Format::Json => pretty(&serde_json::to_value(&curve).expect("serializable")),
            };
            ok(text, &cfg)
        }
        Command::OracleCompare(a) => {
            let cfg = a.model.resolve_inner()?;
            let k_max = match (a.k_max, cfg.reg.kind) {
                (Some(k), _) => k,
                (None, RegulatorKind::Sharp) => cfg.reg.cutoff,
                (None, _) => return Err(usage("--k-max is required unless the regularization is sharp")),
            };
            let reports = a
                .box_pi
                .iter()
                .map(|l| oracle_compare(&cfg, l * std::f64::consts::PI, k_max))
                .collect::<Result<Vec<_>, Error>>()?;
            let v = if reports.len() == 1 {
                serde_json::to_value(&reports[0])
            } else {
                serde_json::to_value(&reports)
            }
            .expect("serializable");
            ok(report(&v, a.out.format), &cfg)
        }
        Command::Validate(a) => {
            let ids = parse_suite(&a.suite).map_err(|e| usage(e.to_string()))?;
            let outcomes = run_suite(&ids);
            let all = outcomes.iter().all(|o| o.passed);
            let text = match a.out.format {
                Some(Format::Json) => pretty(&serde_json::to_value(&outcomes).expect("serializable")),
                _ => {
                    let mut s = String::new();
                    for o in &outcomes {
                        s.push_str(&o.line());
                        s.push('\n');
                    }
                    let passed = outcomes.iter().filter(|o| o.passed).count();
                    let _ = writeln!(s, "{passed}/{} criteria passed", outcomes.len());
                    s
                }
            };
            Ok(Outcome {
                text,
                config: None,
                code: if all { 0 } else { 1 },
            })
        }
    }
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Stability(_) => "stability",
        Command::Density(_) => "density",
        Command::Resolvent(_) => "resolvent",
        Command::Pole(_) => "pole",
        Command::Eta(_) => "eta",
        Command::Energy(_) => "energy",
        Command::CpCurve(_) => "cp-curve",
        Command::ForceCurve(_) => "force-curve",
        Command::OracleCompare(_) => "oracle-compare",
        Command::Validate(_) => "validate",
    }
}

fn output_path(cmd: &Command) -> Option<&Path> {
    let out = match cmd {
        Command::Stability(a) => &a.out,
        Command::Density(a) | Command::Resolvent(a) => &a.out,
        Command::Pole(a) => &a.out,
        Command::Eta(a) => &a.grid.out,
        Command::Energy(a) => &a.out,
        Command::CpCurve(a) | Command::ForceCurve(a) => &a.out,
        Command::OracleCompare(a) => &a.out,
        Command::Validate(a) => &a.out,
    };
    out.output.as_deref()
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_outputs(argv: &[String], cmd: &Command, outcome: &Outcome, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, &outcome.text)?;
    let manifest = RunManifest {
        command: command_name(cmd).to_string(),
        arguments: argv.to_vec(),
        config: outcome.config.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        outputs: vec![OutputDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(outcome.text.as_bytes()),
        }],
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("serializable");
    text.push('\n');
    std::fs::write(manifest_path(path), text)
}

/// Runs one command, writing results to `out` (or the --output file) and
/// diagnostics to `err`. Returns the process exit code.
pub fn run_with(argv: &[String], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(outcome) => {
            let written = match output_path(&cli.command) {
                Some(path) => write_outputs(argv, &cli.command, &outcome, path),
                None => out.write_all(outcome.text.as_bytes()),
            };
            if let Err(e) = written {
                let _ = writeln!(err, "error: cannot write output: {e}");
                return 2;
            }
            outcome.code
        }
        Err(Failure::Usage(m)) => {
            let _ = writeln!(err, "error: {m}");
            2
        }
        Err(Failure::Physics(m)) => {
            let _ = writeln!(err, "error: {m}");
            1
        }
    }
}

pub fn run(argv: &[String]) -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}
