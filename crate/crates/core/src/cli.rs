//! Command-line front end. Reports go to stdout as JSON and, with `--out`,
//! to files in that directory. Flags take precedence over `--config`.
//!
//! Exit codes: 0 success, 1 verdict failure, 2 usage error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::cartan::{self, area_integrand, ellipticity_scan};
use crate::error::{Error, Result};
use crate::graphsolver::{self, maximum_principle_check, solve, GraphProblem, Initial, SolverOptions};
use crate::mesh::TriMesh;
use crate::metrics::{self, check_ga, check_validity, symmetrize, MetricSpec, Phi, ThresholdFamily};
use crate::radon::funk::{funk_forward, funk_inverse, SphereGrid, SphericalHarmonicCoeffs};
use crate::radon::spherical_radon;
use crate::sphere::{norm, sample_sphere};
use crate::surfaces::{convex_hull_check, verify_isoperimetric, ImmersedPatch, Isoperimetric};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERDICT: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "finsler-area", version, about = "Finsler area integrands, Radon transforms and minimal graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sample a metric and its symmetrization for Finsler validity.
    CheckMetric(CommonArgs),
    /// Tabulate F and F_sym and check F_sym.
    Symmetrize(CommonArgs),
    /// Bisect the anisotropy at which the symmetrized metric stops being Finsler.
    ThresholdScan(ThresholdArgs),
    /// Tabulate A^F over a direction grid (CSV).
    IntegrandScan(CommonArgs),
    /// Scan tangential eigenvalues of the area Hessian.
    EllipticityScan(CommonArgs),
    /// Solve for a Finsler-minimal graph with Dirichlet data.
    SolveGraph(GraphArgs),
    /// Solve a graph problem and evaluate the isoperimetric bounds.
    VerifyIsop(IsopArgs),
    /// Funk transform and inversion round trip on S^2.
    FunkRoundtrip(FunkArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// Metric as a JSON file path or inline JSON.
    #[arg(long)]
    pub metric: Option<String>,
    /// Metric kind when --metric is absent.
    #[arg(long, value_enum)]
    pub kind: Option<Kind>,
    /// Anisotropy vector, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub b: Option<Vec<f64>>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Ambient dimension m + 1.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub quad: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON run configuration; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run the built-in checks of this command instead.
    #[arg(long)]
    pub selftest: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Kind {
    Euclidean,
    Randers,
    Matsumoto,
    TwoOrder,
    PerturbedQuartic,
    TanhOdd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Family {
    Randers,
    TwoOrder,
    Matsumoto,
}

#[derive(Args, Debug, Clone)]
pub struct ThresholdArgs {
    #[arg(long, value_enum)]
    pub family: Option<Family>,
    /// Surface dimension.
    #[arg(long)]
    pub m: Option<usize>,
    /// Direction of b, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub direction: Option<Vec<f64>>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Domain {
    Disk,
    Square,
}

#[derive(Args, Debug, Clone)]
pub struct GraphArgs {
    /// Graph problem JSON (mesh, boundary values, metric).
    #[arg(long)]
    pub problem: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub domain: Option<Domain>,
    /// Rings for the disk, cells per side for the square.
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Boundary data: `affine:a,b,c`, `wave:amplitude,k` or `scherk`.
    #[arg(long)]
    pub data: Option<String>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Which {
    Isop1,
    Isop2,
    Both,
}

#[derive(Args, Debug, Clone)]
pub struct IsopArgs {
    #[arg(long, value_enum)]
    pub which: Option<Which>,
    #[command(flatten)]
    pub graph: GraphArgs,
}

#[derive(Args, Debug, Clone)]
pub struct FunkArgs {
    /// Band limit.
    #[arg(long)]
    pub degree: Option<usize>,
    /// Sphere grid CSV to invert instead of the built-in test function.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

/// Options readable from `--config`. Unknown fields are rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub metric: Option<MetricSpec>,
    pub kind: Option<Kind>,
    pub b: Option<Vec<f64>>,
    pub epsilon: Option<f64>,
    pub dim: Option<usize>,
    pub grid: Option<usize>,
    pub quad: Option<usize>,
    pub tol: Option<f64>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub family: Option<Family>,
    pub m: Option<usize>,
    pub direction: Option<Vec<f64>>,
    pub domain: Option<Domain>,
    pub resolution: Option<usize>,
    pub data: Option<String>,
    pub max_iter: Option<usize>,
    pub which: Option<Which>,
    pub degree: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(t) = self.tol {
            if !(t > 0.0) {
                return Err(Error::InvalidArgument(format!("tolerance {t} must be positive")));
            }
        }
        Ok(())
    }
}

/// Flags merged over the config file.
#[derive(Clone, Debug)]
struct Settings {
    cfg: RunConfig,
    metric_arg: Option<String>,
    selftest: bool,
}

impl Settings {
    fn new(c: &CommonArgs) -> Result<Self> {
        let mut cfg = match &c.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! over {
            ($($f:ident),*) => { $( if c.$f.is_some() { cfg.$f = c.$f.clone(); } )* };
        }
        over!(kind, b, epsilon, dim, grid, quad, tol, out, seed);
        cfg.validate()?;
        Ok(Self { cfg, metric_arg: c.metric.clone(), selftest: c.selftest })
    }

    fn grid(&self, default: usize) -> usize {
        self.cfg.grid.unwrap_or(default)
    }

    fn quad(&self, default: usize) -> usize {
        self.cfg.quad.unwrap_or(default)
    }

    fn metric(&self) -> Result<MetricSpec> {
        if let Some(arg) = &self.metric_arg {
            let text = if arg.trim_start().starts_with('{') { arg.clone() } else { fs::read_to_string(arg)? };
            let spec: MetricSpec = serde_json::from_str(&text)?;
            spec.validate()?;
            return Ok(spec);
        }
        if let Some(spec) = &self.cfg.metric {
            spec.validate()?;
            return Ok(spec.clone());
        }
        let dim = self.cfg.dim.unwrap_or(3);
        let b = self.cfg.b.clone().unwrap_or_else(|| vec![0.0; dim]);
        if b.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: b.len() });
        }
        let spec = match self.cfg.kind.unwrap_or(Kind::Euclidean) {
            Kind::Euclidean => MetricSpec::euclidean(dim),
            Kind::Randers => MetricSpec::randers(&b),
            Kind::Matsumoto => MetricSpec::matsumoto(&b),
            Kind::TwoOrder => MetricSpec::two_order(&b),
            Kind::PerturbedQuartic => {
                let b = if b.iter().all(|v| *v == 0.0) { None } else { Some(b.as_slice()) };
                MetricSpec::perturbed_quartic(dim, self.cfg.epsilon.unwrap_or(1.0), b)
            }
            Kind::TanhOdd => MetricSpec::alpha_beta(Phi::TanhOdd { amplitude: 0.5, m: (dim - 1) as u32 }, &b),
        };
        spec.validate()?;
        Ok(spec)
    }

    fn emit(&self, out: &mut dyn Write, name: &str, value: &impl Serialize) -> Result<()> {
        let text = serde_json::to_string_pretty(value)?;
        writeln!(out, "{text}")?;
        if let Some(dir) = &self.cfg.out {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(format!("{name}.json")), format!("{text}\n"))?;
        }
        Ok(())
    }

    fn emit_file(&self, name: &str, bytes: &[u8]) -> Result<()> {
        if let Some(dir) = &self.cfg.out {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(name), bytes)?;
        }
        Ok(())
    }
}

/// Parses `argv` and runs the command, writing reports to `out`.
pub fn run<I, T>(argv: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            if code == EXIT_OK {
                let _ = write!(out, "{e}");
            } else {
                eprint!("{e}");
            }
            return code;
        }
    };
    match dispatch(&cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::EllipticityLost { .. } | Error::NonConvergence { .. } | Error::NoTransition { .. } | Error::NonPositive(_) => EXIT_VERDICT,
                _ => EXIT_USAGE,
            }
        }
    }
}

fn verdict(ok: bool) -> i32 {
    if ok {
        EXIT_OK
    } else {
        EXIT_VERDICT
    }
}

fn dispatch(cmd: &Command, out: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::CheckMetric(c) => check_metric(&Settings::new(c)?, out),
        Command::Symmetrize(c) => symmetrize_cmd(&Settings::new(c)?, out),
        Command::ThresholdScan(a) => threshold_scan(a, out),
        Command::IntegrandScan(c) => integrand_scan(&Settings::new(c)?, out),
        Command::EllipticityScan(c) => ellipticity_cmd(&Settings::new(c)?, out),
        Command::SolveGraph(a) => solve_graph(a, out),
        Command::VerifyIsop(a) => verify_isop(a, out),
        Command::FunkRoundtrip(a) => funk_roundtrip(a, out),
    }
}

#[derive(Serialize)]
struct SelfTest {
    command: &'static str,
    checks: Vec<(String, bool)>,
    passed: bool,
}

fn selftest(out: &mut dyn Write, command: &'static str, checks: Vec<(&str, Result<bool>)>) -> Result<i32> {
    let checks: Vec<(String, bool)> = checks.into_iter().map(|(n, r)| (n.to_string(), r.unwrap_or(false))).collect();
    let passed = checks.iter().all(|c| c.1);
    let text = serde_json::to_string_pretty(&SelfTest { command, checks, passed })?;
    writeln!(out, "{text}")?;
    Ok(verdict(passed))
}

#[derive(Serialize)]
struct CheckMetricReport {
    metric: MetricSpec,
    m: usize,
    validity: metrics::ValidityReport,
    ga: metrics::GaReport,
}

fn check_metric(s: &Settings, out: &mut dyn Write) -> Result<i32> {
    if s.selftest {
        let e = MetricSpec::euclidean(3);
        return selftest(
            out,
            "check-metric",
            vec![
                ("euclidean norm of (3,4,0) is 5", e.eval(&[0.0; 3], &[3.0, 4.0, 0.0]).map(|v| (v - 5.0).abs() < 1e-14)),
                ("euclidean gradient at (0,0,2)", e.gradient(&[0.0; 3], &[0.0, 0.0, 2.0]).map(|g| (g[2] - 1.0).abs() < 1e-14 && g[0] == 0.0)),
                (
                    "euclidean is Finsler with unit constants",
                    check_validity(&e, 2, 16).map(|r| r.is_finsler() && (r.m_f() - 1.0).abs() < 1e-12 && (r.big_m_f() - 1.0).abs() < 1e-12),
                ),
            ],
        );
    }
    let spec = s.metric()?;
    let m = spec.dim - 1;
    let grid = s.grid(64);
    let validity = check_validity(&spec, m, grid)?;
    let ga = check_ga(&spec, m, grid)?;
    let ok = validity.is_finsler();
    s.emit(out, "check_metric", &CheckMetricReport { metric: spec, m, validity, ga })?;
    Ok(verdict(ok))
}

#[derive(Serialize)]
struct SymmetrizeReport {
    metric: MetricSpec,
    m: usize,
    symmetrized: metrics::ValidityReport,
    samples: usize,
}

fn symmetrize_cmd(s: &Settings, out: &mut dyn Write) -> Result<i32> {
    if s.selftest {
        let r = MetricSpec::randers(&[0.0, 0.0, 0.5]);
        let q = MetricSpec::perturbed_quartic(3, 1.0, None);
        let y = [0.3, -0.4, 0.5];
        let neg = [-0.3, 0.4, -0.5];
        let x = [0.0; 3];
        return selftest(
            out,
            "symmetrize",
            vec![
                ("reversible input is unchanged", symmetrize(&q, 2).eval(&x, &y).and_then(|a| q.eval(&x, &y).map(|b| (a - b).abs() < 1e-12))),
                ("output is even", symmetrize(&r, 2).eval(&x, &y).and_then(|a| symmetrize(&r, 2).eval(&x, &neg).map(|b| (a - b).abs() < 1e-12))),
            ],
        );
    }
    let spec = s.metric()?;
    let m = spec.dim - 1;
    let sym = symmetrize(&spec, m);
    let grid = s.grid(64);
    let report = check_validity(&sym, m, grid)?;
    let x = vec![0.0; spec.dim];
    let pts = sample_sphere(m, s.grid(16).min(64))?;
    let mut wr = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (0..spec.dim).map(|i| format!("y{i}")).collect();
    header.extend(["f".into(), "f_sym".into()]);
    wr.write_record(&header)?;
    let mut samples = 0;
    for y in pts.chunks(spec.dim) {
        let mut row: Vec<String> = y.iter().map(|v| format!("{v:.17e}")).collect();
        row.push(format!("{:.17e}", spec.eval(&x, y)?));
        row.push(format!("{:.17e}", sym.eval(&x, y)?));
        wr.write_record(&row)?;
        samples += 1;
    }
    let bytes = wr.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    s.emit_file("symmetrize.csv", &bytes)?;
    let ok = report.is_finsler();
    s.emit(out, "symmetrize", &SymmetrizeReport { metric: spec, m, symmetrized: report, samples })?;
    Ok(verdict(ok))
}

fn threshold_scan(a: &ThresholdArgs, out: &mut dyn Write) -> Result<i32> {
    let s = Settings::new(&a.common)?;
    if s.selftest {
        return selftest(
            out,
            "threshold-scan",
            vec![(
                "euclidean never changes verdict",
                Ok(matches!(
                    metrics::bisect_threshold(&ThresholdFamily::AlphaBeta(Phi::Polynomial { coeffs: vec![1.0] }), 2, &[0.0, 0.0, 1.0], 1e-2, 16),
                    Err(Error::NoTransition { .. })
                )),
            )],
        );
    }
    let family = a.family.or(s.cfg.family).ok_or_else(|| Error::InvalidArgument("--family is required".into()))?;
    let m = a.m.or(s.cfg.m).unwrap_or(2);
    let mut dir = a.direction.clone().or(s.cfg.direction.clone()).unwrap_or_else(|| {
        let mut d = vec![0.0; m + 1];
        d[m] = 1.0;
        d
    });
    if dir.len() != m + 1 {
        return Err(Error::DimensionMismatch { expected: m + 1, got: dir.len() });
    }
    dir = crate::sphere::normalized(&dir)?;
    let fam = match family {
        Family::Randers => ThresholdFamily::Randers,
        Family::TwoOrder => ThresholdFamily::TwoOrder,
        Family::Matsumoto => ThresholdFamily::Matsumoto,
    };
    let report = metrics::bisect_threshold(&fam, m, &dir, s.cfg.tol.unwrap_or(1e-3), s.grid(128))?;
    s.emit(out, "threshold_scan", &report)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct IntegrandScanReport {
    metric: MetricSpec,
    quad_order: usize,
    rows: usize,
    min_area: f64,
    max_area: f64,
}

fn integrand_scan(s: &Settings, out: &mut dyn Write) -> Result<i32> {
    if s.selftest {
        let e = MetricSpec::euclidean(3);
        let x = [0.0; 3];
        return selftest(
            out,
            "integrand-scan",
            vec![
                ("euclidean area is |Z|", area_integrand(&e, &x, &[1.0, 2.0, 2.0], 64).map(|a| (a - 3.0).abs() < 1e-12)),
                ("transform of a constant is itself", spherical_radon(|_| 1.0, &[0.1, 0.2, 0.3], 64).map(|v| (v - 1.0).abs() < 1e-14)),
                (
                    "odd functions are annihilated",
                    spherical_radon(|y| y[2].powi(3) / norm(y), &[0.3, 0.1, 0.2], 64).map(|v| v.abs() < 1e-12),
                ),
            ],
        );
    }
    let spec = s.metric()?;
    let m = spec.dim - 1;
    let quad = s.quad(cartan::DEFAULT_ORDER);
    let x = vec![0.0; spec.dim];
    let mut dirs: Vec<Vec<f64>> = (0..spec.dim)
        .map(|i| {
            let mut e = vec![0.0; spec.dim];
            e[i] = 1.0;
            e
        })
        .collect();
    dirs.extend(sample_sphere(m, s.grid(16))?.chunks(spec.dim).map(|c| c.to_vec()));
    let mut wr = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (0..spec.dim).map(|i| format!("z{i}")).collect();
    header.push("area".into());
    wr.write_record(&header)?;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for z in &dirs {
        let a = area_integrand(&spec, &x, z, quad)?;
        lo = lo.min(a);
        hi = hi.max(a);
        let mut row: Vec<String> = z.iter().map(|v| format!("{v:.17e}")).collect();
        row.push(format!("{a:.17e}"));
        wr.write_record(&row)?;
    }
    let bytes = wr.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    s.emit_file("integrand_scan.csv", &bytes)?;
    if s.cfg.out.is_none() {
        out.write_all(&bytes)?;
        return Ok(EXIT_OK);
    }
    s.emit(out, "integrand_scan", &IntegrandScanReport { metric: spec, quad_order: quad, rows: dirs.len(), min_area: lo, max_area: hi })?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct EllipticitySummary {
    metric: String,
    m: usize,
    grid_resolution: usize,
    quad_order: usize,
    lambda_min: f64,
    lambda_max: f64,
    argmin: Vec<f64>,
    elliptic: bool,
}

fn ellipticity_cmd(s: &Settings, out: &mut dyn Write) -> Result<i32> {
    if s.selftest {
        let e = MetricSpec::euclidean(3);
        return selftest(
            out,
            "ellipticity-scan",
            vec![(
                "euclidean eigenvalues are 1",
                cartan::area_hessian(&e, &[0.0; 3], &[0.2, 0.3, 0.9], 64).map(|h| (h.lambda1 - 1.0).abs() < 1e-6 && (h.lambda2 - 1.0).abs() < 1e-6),
            )],
        );
    }
    let spec = s.metric()?;
    let scan = ellipticity_scan(&spec, &[vec![0.0; spec.dim]], s.grid(16), s.quad(128))?;
    let mut buf = Vec::new();
    scan.write_csv(&mut buf)?;
    s.emit_file("ellipticity_scan.csv", &buf)?;
    let elliptic = scan.lambda_min > 0.0;
    s.emit(
        out,
        "ellipticity_scan",
        &EllipticitySummary {
            metric: scan.metric.clone(),
            m: scan.m,
            grid_resolution: scan.grid_resolution,
            quad_order: scan.quad_order,
            lambda_min: scan.lambda_min,
            lambda_max: scan.lambda_max,
            argmin: scan.argmin.clone(),
            elliptic,
        },
    )?;
    Ok(verdict(elliptic))
}

/// Boundary data presets for graph problems.
#[derive(Clone, Debug, PartialEq)]
pub enum BoundaryData {
    Affine(f64, f64, f64),
    Wave(f64, f64),
    Scherk,
}

impl BoundaryData {
    pub fn parse(text: &str) -> Result<Self> {
        let (name, rest) = text.split_once(':').unwrap_or((text, ""));
        let nums: Vec<f64> = if rest.is_empty() {
            vec![]
        } else {
            rest.split(',').map(|v| v.trim().parse::<f64>().map_err(|e| Error::InvalidArgument(format!("{v}: {e}")))).collect::<Result<_>>()?
        };
        match (name, nums.as_slice()) {
            ("affine", [a, b, c]) => Ok(Self::Affine(*a, *b, *c)),
            ("wave", [amp, k]) => Ok(Self::Wave(*amp, *k)),
            ("scherk", []) => Ok(Self::Scherk),
            _ => Err(Error::InvalidArgument(format!("unknown boundary data `{text}`"))),
        }
    }

    pub fn eval(&self, p: [f64; 2]) -> f64 {
        match *self {
            Self::Affine(a, b, c) => a * p[0] + b * p[1] + c,
            Self::Wave(amp, k) => amp * (k * p[1].atan2(p[0])).cos(),
            Self::Scherk => graphsolver::scherk(p),
        }
    }
}

fn build_problem(a: &GraphArgs, s: &Settings) -> Result<GraphProblem> {
    let mut problem = if let Some(path) = &a.problem {
        let p: GraphProblem = serde_json::from_str(&fs::read_to_string(path)?)?;
        p
    } else {
        let domain = a.domain.or(s.cfg.domain).unwrap_or(Domain::Disk);
        let res = a.resolution.or(s.cfg.resolution).unwrap_or(16);
        let mesh = match domain {
            Domain::Disk => TriMesh::disk([0.0, 0.0], 1.0, res)?,
            Domain::Square => TriMesh::rectangle(-1.0, 1.0, -1.0, 1.0, res, res)?,
        };
        let data = BoundaryData::parse(a.data.as_deref().or(s.cfg.data.as_deref()).unwrap_or("wave:0.3,2"))?;
        GraphProblem::new(mesh, s.metric()?, |p| data.eval(p))?
    };
    if let Some(q) = s.cfg.quad {
        problem.quad_order = q;
    }
    let mut opts = SolverOptions { ..problem.options.clone() };
    if let Some(t) = s.cfg.tol {
        opts.tol = t;
    }
    if let Some(k) = a.max_iter.or(s.cfg.max_iter) {
        opts.max_iter = k;
    }
    problem.options = opts;
    problem.validate()?;
    Ok(problem)
}

#[derive(Serialize)]
struct SolveReport {
    metric: String,
    vertices: usize,
    triangles: usize,
    quad_order: usize,
    ga_holds: bool,
    summary: graphsolver::SolutionSummary,
    maximum_principle: graphsolver::MaximumPrincipleReport,
}

fn graph_selftest(out: &mut dyn Write, name: &'static str) -> Result<i32> {
    let run = || -> Result<bool> {
        let mesh = TriMesh::unit_square(4)?;
        let flat = GraphProblem::new(mesh.clone(), MetricSpec::euclidean(3), |_| 0.0)?;
        let e0 = graphsolver::discrete_energy(&flat, &vec![0.0; mesh.num_vertices()])?;
        let aff = GraphProblem::new(mesh.clone(), MetricSpec::euclidean(3), |p| 0.5 * p[0] - p[1])?;
        let sol = solve(&aff, &Initial::Zero)?;
        let exact = mesh.vertices.iter().zip(&sol.values).all(|(p, v)| (0.5 * p[0] - p[1] - v).abs() < 1e-8);
        Ok((e0 - 1.0).abs() < 1e-14 && exact && maximum_principle_check(&sol).holds)
    };
    selftest(out, name, vec![("flat energy, affine solution, maximum principle", run())])
}

fn solve_graph(a: &GraphArgs, out: &mut dyn Write) -> Result<i32> {
    let s = Settings::new(&a.common)?;
    if s.selftest {
        return graph_selftest(out, "solve-graph");
    }
    let problem = build_problem(a, &s)?;
    let ga_holds = problem.ga_holds(32)?;
    if !ga_holds {
        eprintln!("warning: metric or its symmetrization is not Finsler; the solve may lose ellipticity");
    }
    let sol = solve(&problem, &Initial::AffineFit)?;
    let mut buf = Vec::new();
    sol.write_csv(&mut buf)?;
    s.emit_file("solution.csv", &buf)?;
    let mp = maximum_principle_check(&sol);
    s.emit(
        out,
        "solve_graph",
        &SolveReport {
            metric: problem.metric.label(),
            vertices: problem.mesh.num_vertices(),
            triangles: problem.mesh.num_triangles(),
            quad_order: problem.quad_order,
            ga_holds,
            summary: sol.summary(),
            maximum_principle: mp,
        },
    )?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct IsopCmdReport {
    metric: String,
    summary: graphsolver::SolutionSummary,
    reports: Vec<crate::surfaces::IsopReport>,
    hull: crate::surfaces::HullReport,
    holds: bool,
}

fn verify_isop(a: &IsopArgs, out: &mut dyn Write) -> Result<i32> {
    let s = Settings::new(&a.graph.common)?;
    if s.selftest {
        let run = || -> Result<bool> {
            let e = MetricSpec::euclidean(3);
            let disk = ImmersedPatch::flat_disk([0.0; 3], [0.0, 0.0, 1.0], 1.0, 16)?;
            let r1 = verify_isoperimetric(&disk, &e, Isoperimetric::Isop1, [0.0; 3], 16, 16)?;
            let hull = convex_hull_check(&disk)?;
            Ok(r1.holds && hull.max_outside.abs() < 1e-12)
        };
        return selftest(out, "verify-isop", vec![("flat disk satisfies isop1 and lies in its hull", run())]);
    }
    let problem = build_problem(&a.graph, &s)?;
    let sol = solve(&problem, &Initial::AffineFit)?;
    let patch = ImmersedPatch::from_graph(&problem.mesh, &sol.values)?;
    let which = a.which.or(s.cfg.which).unwrap_or(Which::Both);
    let kinds: Vec<Isoperimetric> = match which {
        Which::Isop1 => vec![Isoperimetric::Isop1],
        Which::Isop2 => vec![Isoperimetric::Isop2],
        Which::Both => vec![Isoperimetric::Isop1, Isoperimetric::Isop2],
    };
    let validity = check_validity(&problem.metric, 2, s.grid(64))?;
    let center = centroid(&patch);
    let reports = kinds
        .into_iter()
        .map(|k| crate::surfaces::verify_isoperimetric_with(&patch, &problem.metric, k, center, problem.quad_order, &validity))
        .collect::<Result<Vec<_>>>()?;
    let hull = convex_hull_check(&patch)?;
    let holds = reports.iter().all(|r| r.holds) && hull.holds(1e-6);
    s.emit(out, "verify_isop", &IsopCmdReport { metric: problem.metric.label(), summary: sol.summary(), reports, hull, holds })?;
    Ok(verdict(holds))
}

/// Mean of the boundary points.
pub fn centroid(patch: &ImmersedPatch) -> [f64; 3] {
    let pts = patch.boundary_points();
    let mut c = [0.0; 3];
    for p in &pts {
        for i in 0..3 {
            c[i] += p[i] / pts.len() as f64;
        }
    }
    c
}

#[derive(Serialize)]
struct FunkReport {
    max_degree: usize,
    sup_error: f64,
    top_band_fraction: f64,
    truncation_warning: bool,
    coefficients: SphericalHarmonicCoeffs,
}

/// Even test function of degree 8.
fn funk_test_function(y: &[f64]) -> f64 {
    let r = norm(y);
    let (a, b, c) = (y[0] / r, y[1] / r, y[2] / r);
    a * a * b.powi(4) + 0.3 * c.powi(8) - 0.7 * a * b * c * c + 0.2
}

fn funk_roundtrip(a: &FunkArgs, out: &mut dyn Write) -> Result<i32> {
    let s = Settings::new(&a.common)?;
    if s.selftest {
        let run = || -> Result<bool> {
            let inv = funk_inverse(&SphericalHarmonicCoeffs::analyze(|_| 1.0, 4))?;
            Ok((inv.eval(&[0.2, 0.3, 0.4]) - 1.0).abs() < 1e-13)
        };
        return selftest(out, "funk-roundtrip", vec![("constants are fixed points", run())]);
    }
    let degree = a.degree.or(s.cfg.degree).unwrap_or(8);
    let (coeffs, reference): (SphericalHarmonicCoeffs, Option<SphereGrid>) = match &a.input {
        Some(path) => {
            let grid = SphereGrid::read_csv(fs::File::open(path)?)?;
            (grid.analyze(degree), Some(grid))
        }
        None => (SphericalHarmonicCoeffs::analyze(funk_test_function, degree), None),
    };
    // Round trip: invert the forward transform of the expansion.
    let forward = funk_forward(&coeffs);
    let back = funk_inverse(&forward)?;
    let sup_error = match &reference {
        Some(_) => back.coeffs.coeffs.iter().zip(&coeffs.coeffs).enumerate().fold(0.0f64, |m, (i, (x, y))| {
            let l = (i as f64).sqrt().floor() as usize;
            if l % 2 == 0 {
                m.max((x - y).abs())
            } else {
                m
            }
        }),
        None => {
            let g = SphereGrid::sample(|_| 0.0, 2 * (degree + 1), 4 * (degree + 1));
            let mut err: f64 = 0.0;
            for i in 0..g.nlat() {
                for j in 0..g.nlon {
                    let p = g.point(i, j);
                    let direct = spherical_radon(funk_test_function, &p, 64)?;
                    err = err.max((forward.synthesize(&p) - direct).abs());
                    err = err.max((back.eval(&p) - funk_test_function(&p)).abs());
                }
            }
            err
        }
    };
    let ok = sup_error <= s.cfg.tol.unwrap_or(1e-8);
    s.emit(
        out,
        "funk_roundtrip",
        &FunkReport { max_degree: degree, sup_error, top_band_fraction: back.top_band_fraction, truncation_warning: back.truncation_warning, coefficients: back.coeffs },
    )?;
    Ok(verdict(ok))
}
