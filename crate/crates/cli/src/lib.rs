//! Command-line front end. `run` parses argv, dispatches to the library and
//! returns the JSON payload instead of printing it, so it can be tested
//! in-process.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use dualsection::chord::{self, ChordConfig};
use dualsection::dual_ellipsoid::{self, DualOptions};
use dualsection::io::{self, Instance, UppJson};
use dualsection::lagrangian::Component;
use dualsection::linalg::{self, Mat};
use dualsection::manifolds::{ManifoldSpec, Retraction};
use dualsection::oracle::{self, AscentOptions, Weighted};
use dualsection::procrustes::{self, SolveOptions, UppInstance, UppMethod};
use dualsection::sections;
use dualsection::spectral::{self, SpectralInstance, SpectralMode, TightnessOptions};
use dualsection::Error;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

#[derive(Debug)]
pub struct CommandResult {
    pub code: i32,
    /// JSON payload on success, error message otherwise.
    pub stdout: String,
    pub stderr: String,
    pub artifacts: Vec<PathBuf>,
}

#[derive(Parser, Debug)]
#[command(name = "dualsection", version, about = "Lagrangian dual sections: solve, certify, track and benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Linear inverse eigenvalue problem: noncrossing certificate, ellipsoid dual and multistart primal.
    SolveLiep(SpectralArgs),
    /// Linear inverse singular-value problem, same pipeline in singular mode.
    SolveLisv(SpectralArgs),
    /// Unbalanced Procrustes problem from {"U", "W"} JSON.
    SolveUpp(UppArgs),
    /// Heuristic noncrossing certificate for the span of the instance matrices.
    CertifyNoncrossing(CertifyArgs),
    /// CHORD path tracking from t0 to t1.
    TrackChord(TrackArgs),
    /// Ellipsoid solve of the polar dual.
    DualSolve(DualArgs),
    /// Random-init RGD against CHORD on a batch of UPP instances.
    BenchRgdVsChord(BenchArgs),
    /// Midpoint-concavity probe of the value function V(c) for one constraint.
    ProbeConcavity(ProbeArgs),
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV artifact path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SpectralArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Comma-separated values or a JSON file; defaults to the instance's constraint_rhs.
    #[arg(long, allow_hyphen_values = true)]
    rhs: Option<String>,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 16)]
    starts: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum MethodArg {
    Section,
    Chord,
    RgdMultistart,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum RetractionArg {
    Qr,
    Exp,
    Metric,
}

impl From<RetractionArg> for Retraction {
    fn from(r: RetractionArg) -> Self {
        match r {
            RetractionArg::Qr => Retraction::Qr,
            RetractionArg::Exp => Retraction::Exponential,
            RetractionArg::Metric => Retraction::MetricProjection,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct ConstantArgs {
    #[arg(long, default_value_t = 1e-2)]
    epsilon: f64,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long = "M")]
    m: Option<f64>,
    #[arg(long = "L")]
    l: Option<f64>,
    #[arg(long, value_enum, default_value_t = RetractionArg::Qr)]
    retraction: RetractionArg,
}

impl ConstantArgs {
    fn explicit(&self) -> Result<Option<ChordConfig>, Error> {
        match (self.mu, self.m, self.l) {
            (Some(mu), Some(m), Some(l)) => Ok(Some(ChordConfig::new(self.epsilon, mu, l, m, self.retraction.into())?)),
            (None, None, None) => Ok(None),
            _ => Err(Error::InvalidArgument("--mu, --M and --L must be given together".into())),
        }
    }
}

#[derive(Args, Debug)]
struct UppArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::Section)]
    method: MethodArg,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 64)]
    starts: usize,
    #[command(flatten)]
    constants: ConstantArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct CertifyArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Number of leading eigenvalues (singular values) required simple;
    /// inferred from a fixed-spectrum manifold when omitted.
    #[arg(long)]
    level: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, default_value_t = spectral::DEFAULT_BUDGET)]
    starts: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ModeArg {
    Eigen,
    Singular,
}

#[derive(Args, Debug)]
struct TrackArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Comma-separated start multiplier.
    #[arg(long, allow_hyphen_values = true)]
    t0: String,
    #[arg(long, allow_hyphen_values = true)]
    t1: String,
    #[arg(long)]
    estimate_constants: bool,
    #[arg(long, default_value_t = 16)]
    starts: usize,
    #[command(flatten)]
    constants: ConstantArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct DualArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    rhs: Option<String>,
    #[arg(long, default_value_t = 1e-9)]
    eps: f64,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long = "M")]
    m: Option<f64>,
    #[arg(long, default_value_t = 32)]
    starts: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Directory of UPP JSON files; planted (3,2) instances are generated when omitted.
    #[arg(long)]
    instances: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    generate: usize,
    #[arg(long, default_value_t = 100)]
    points: usize,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long, default_value_t = 30)]
    starts: usize,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[command(flatten)]
    constants: ConstantArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct ProbeArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value_t = 21)]
    grid: usize,
    /// Grid end points; default is the sampled range of f₁ shrunk by 5%.
    #[arg(long, allow_hyphen_values = true)]
    lo: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    hi: Option<f64>,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 16)]
    starts: usize,
    #[command(flatten)]
    common: Common,
}

/// Exit codes: 0 completed (verdicts included), 1 numerical or module
/// failure, 2 usage or schema error, 3 I/O error.
fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => 3,
        Error::Json(_) | Error::Csv(_) | Error::InvalidArgument(_) | Error::ShapeMismatch(_) | Error::InvalidManifold(_) => 2,
        _ => 1,
    }
}

pub fn run<I, T>(argv: I) -> CommandResult
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            return CommandResult {
                code,
                stdout: if code == 0 { text.clone() } else { String::new() },
                stderr: if code == 0 { String::new() } else { text },
                artifacts: vec![],
            };
        }
    };
    let mut artifacts = Vec::new();
    match dispatch(cli.command, &mut artifacts) {
        Ok(v) => CommandResult { code: 0, stdout: v, stderr: String::new(), artifacts },
        Err(e) => CommandResult { code: exit_code(&e), stdout: String::new(), stderr: format!("error: {e}"), artifacts },
    }
}

type R<T> = Result<T, Error>;

fn dispatch(cmd: Command, artifacts: &mut Vec<PathBuf>) -> R<String> {
    match cmd {
        Command::SolveLiep(a) => solve_spectral(a, SpectralMode::Eigen),
        Command::SolveLisv(a) => solve_spectral(a, SpectralMode::Singular),
        Command::SolveUpp(a) => solve_upp(a, artifacts),
        Command::CertifyNoncrossing(a) => certify(a),
        Command::TrackChord(a) => track(a, artifacts),
        Command::DualSolve(a) => dual_solve(a),
        Command::BenchRgdVsChord(a) => bench(a, artifacts),
        Command::ProbeConcavity(a) => probe(a, artifacts),
    }
}

fn emit<T: Serialize>(v: &T) -> R<String> {
    io::to_json_string(v)
}

fn parse_list(s: &str) -> R<Vec<f64>> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| Error::InvalidArgument(format!("bad number '{p}': {e}"))))
        .collect()
}

/// `--rhs` is either a comma-separated list or a JSON file holding a number or an array.
fn parse_rhs(arg: Option<&str>, fallback: &[f64]) -> R<Vec<f64>> {
    let Some(s) = arg else { return Ok(fallback.to_vec()) };
    let p = Path::new(s);
    if p.is_file() {
        let v: serde_json::Value = io::read_json(p)?;
        return match v {
            serde_json::Value::Number(n) => Ok(vec![n.as_f64().unwrap_or(f64::NAN)]),
            other => io::parse_json(&other.to_string(), s),
        };
    }
    parse_list(s)
}

fn load_instance(path: &Path) -> R<Instance> {
    let inst: Instance = io::read_json(path)?;
    inst.family()?;
    Ok(inst)
}

fn component_matrices(inst: &Instance) -> R<Vec<Mat>> {
    inst.components
        .iter()
        .map(|c| match c {
            Component::LinearTrace { matrix } | Component::SphereQuadratic { matrix } | Component::StiefelGram { matrix } => Ok(matrix.clone()),
            other => Err(Error::InvalidArgument(format!("component kind {} has no spectral matrix", other.kind()))),
        })
        .collect()
}

/// Reads a spectral instance: a fixed-spectrum manifold with linear_trace
/// components, or the equivalent sphere / Stiefel formulation.
fn spectral_instance(inst: &Instance, mode: SpectralMode, rhs: Vec<f64>) -> R<SpectralInstance> {
    let a = component_matrices(inst)?;
    let spectrum = match (&inst.manifold, mode) {
        (ManifoldSpec::FixedEigenvalues { lambda }, SpectralMode::Eigen) => lambda.clone(),
        (ManifoldSpec::Sphere { n }, SpectralMode::Eigen) => {
            let mut l = vec![0.0; *n];
            l[0] = 1.0;
            l
        }
        (ManifoldSpec::FixedSingularValues { sigma, .. }, SpectralMode::Singular) => sigma.clone(),
        (ManifoldSpec::Stiefel { m, .. }, SpectralMode::Singular) => vec![1.0; *m],
        (other, _) => return Err(Error::InvalidArgument(format!("manifold {} does not fit a {mode:?} spectral problem", other.name()))),
    };
    let si = SpectralInstance { mode, a, spectrum, rhs };
    si.validate()?;
    Ok(si)
}

fn solve_spectral(a: SpectralArgs, mode: SpectralMode) -> R<String> {
    let inst = load_instance(&a.instance)?;
    let rhs = parse_rhs(a.rhs.as_deref(), &inst.constraint_rhs)?;
    let si = spectral_instance(&inst, mode, rhs)?;
    let opts = TightnessOptions { tol: a.tol, starts: a.starts, seed: a.common.seed, dual: DualOptions { seed: a.common.seed, ..DualOptions::default() } };
    let report = spectral::tightness_report(&si, &opts)?;
    emit(&report)
}

fn load_upp(path: &Path) -> R<UppInstance> {
    let j: UppJson = io::read_json(path)?;
    UppInstance::new(j.U, j.W)
}

fn solve_upp(a: UppArgs, artifacts: &mut Vec<PathBuf>) -> R<String> {
    let inst = load_upp(&a.instance)?;
    let method = match a.method {
        MethodArg::Section => UppMethod::Section,
        MethodArg::Chord => UppMethod::Chord,
        MethodArg::RgdMultistart => UppMethod::RgdMultistart,
    };
    let opts = SolveOptions {
        starts: a.starts,
        seed: a.common.seed,
        tol: a.tol,
        chord: a.constants.explicit()?,
        epsilon: a.constants.epsilon,
        retraction: a.constants.retraction.into(),
    };
    let sol = match procrustes::solve_upp(&inst, method, &opts) {
        Err(Error::NotCertified) => {
            let tr = procrustes::transform(&inst);
            let check = if (inst.n(), inst.m()) == (3, 2) { Some(procrustes::upp32_sectioned_check(&tr.a, &tr.b, a.tol)?) } else { None };
            return emit(&json!({"certified": false, "method": method, "sectioned_check": check,
                "note": "no closed-form section certified; rerun with --method chord or rgd-multistart"}));
        }
        r => r?,
    };
    if let Some(out) = &a.common.out {
        // Plot data: each point's projection UᵀX next to its target W.
        let proj = inst.u.transpose() * &sol.X;
        let rows: Vec<Vec<f64>> =
            (0..proj.nrows()).map(|i| proj.row(i).iter().chain(inst.w.column(i).iter()).copied().collect()).collect();
        let m = inst.m();
        let header: Vec<String> = (0..m).map(|j| format!("proj_{j}")).chain((0..m).map(|j| format!("target_{j}"))).collect();
        io::write_csv(out, &header, &rows)?;
        artifacts.push(out.clone());
    }
    emit(&sol)
}

fn certify(a: CertifyArgs) -> R<String> {
    let inst = load_instance(&a.instance)?;
    let mats = component_matrices(&inst)?;
    let mode = match (a.mode, &inst.manifold) {
        (Some(ModeArg::Eigen), _) => SpectralMode::Eigen,
        (Some(ModeArg::Singular), _) => SpectralMode::Singular,
        (None, ManifoldSpec::FixedSingularValues { .. } | ManifoldSpec::Stiefel { .. }) => SpectralMode::Singular,
        (None, _) => SpectralMode::Eigen,
    };
    let (level, full_rank) = match (&inst.manifold, a.level) {
        (_, Some(l)) => (l, false),
        (ManifoldSpec::FixedEigenvalues { lambda }, None) => (spectral::level_from_spectrum(lambda).max(1), false),
        (ManifoldSpec::FixedSingularValues { sigma, .. }, None) => {
            (spectral::level_from_spectrum(sigma), sigma.last().is_some_and(|&s| s > 0.0))
        }
        _ => return Err(Error::InvalidArgument("--level is required unless the manifold fixes a spectrum".into())),
    };
    let cert = spectral::min_gap_on_span_with(&mats, level, mode, full_rank, a.starts, a.common.seed)?;
    emit(&cert)
}

fn track(a: TrackArgs, artifacts: &mut Vec<PathBuf>) -> R<String> {
    let inst = load_instance(&a.instance)?;
    let fam = inst.family()?;
    let (t0, t1) = (parse_list(&a.t0)?, parse_list(&a.t1)?);
    let section = sections::section_for(&fam, a.starts, a.common.seed)?;
    let config = match a.constants.explicit()? {
        Some(c) if !a.estimate_constants => c,
        _ => {
            let consts = chord::estimate_constants(&fam, &t0, &t1, chord::DEFAULT_CONSTANT_SAMPLES, Some(section.as_ref()), a.common.seed)?;
            ChordConfig::from_constants(a.constants.epsilon, &consts, a.constants.retraction.into())?
        }
    };
    let x0 = section.maximize(&t0)?.point.value;
    let path = chord::chord_track(&fam, &t0, &t1, &x0, &config)?;
    if let Some(out) = &a.common.out {
        let dim = x0.len();
        let header: Vec<String> =
            ["lambda", "lagrangian", "gradient_norm"].iter().map(|s| s.to_string()).chain((0..dim).map(|i| format!("x_{i}"))).collect();
        let rows: Vec<Vec<f64>> =
            path.samples.iter().map(|s| [s.lambda, s.value, s.gradient_norm].into_iter().chain(s.point.iter().copied()).collect()).collect();
        io::write_csv(out, &header, &rows)?;
        artifacts.push(out.clone());
    }
    let last = path.samples.last().expect("path has samples");
    emit(&json!({
        "config": config,
        "final_point": path.final_point,
        "final_value": last.value,
        "final_gradient_norm": last.gradient_norm,
        "outer_steps": config.outer_steps(),
        "inner_iters": config.inner_iters(),
        "total_rgd_iters": path.total_rgd_iters,
        "iteration_bound": path.iteration_bound,
        "safeguard_sweeps": path.safeguard_sweeps,
    }))
}

fn dual_solve(a: DualArgs) -> R<String> {
    let inst = load_instance(&a.instance)?;
    let fam = inst.family()?;
    let rhs = parse_rhs(a.rhs.as_deref(), &inst.constraint_rhs)?;
    let section = sections::section_for(&fam, a.starts, a.common.seed)?;
    let constants = match (a.mu, a.m) {
        (Some(mu), Some(m)) => Some((mu, m)),
        (None, None) => None,
        _ => return Err(Error::InvalidArgument("--mu and --M must be given together".into())),
    };
    let opts = DualOptions { eps: a.eps, radius: a.radius, seed: a.common.seed, constants, ..DualOptions::default() };
    let r = dual_ellipsoid::solve(section.as_ref(), &rhs, &opts)?;
    emit(&r)
}

#[derive(Serialize)]
struct BenchRow {
    name: String,
    rgd_value: f64,
    chord_value: Option<f64>,
    multistart_value: f64,
    rgd_objective: f64,
    chord_objective: Option<f64>,
    certified: Option<bool>,
    /// Set when CHORD refused the instance, e.g. an exhausted iteration budget.
    chord_error: Option<String>,
}

fn bench(a: BenchArgs, artifacts: &mut Vec<PathBuf>) -> R<String> {
    let named: Vec<(String, UppInstance)> = match &a.instances {
        Some(dir) => {
            let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            files.sort();
            files.iter().map(|p| Ok((p.file_name().unwrap_or_default().to_string_lossy().into_owned(), load_upp(p)?))).collect::<R<_>>()?
        }
        None => {
            let mut rng = linalg::rng(a.common.seed);
            (0..a.generate)
                .map(|i| (format!("planted_{i:03}"), procrustes::planted_instance(a.points, procrustes::PLANTED_SCALES, a.noise, &mut rng).0))
                .collect()
        }
    };
    let opts_base = SolveOptions {
        starts: a.starts,
        tol: a.tol,
        chord: a.constants.explicit()?,
        epsilon: a.constants.epsilon,
        retraction: a.constants.retraction.into(),
        seed: a.common.seed,
    };
    let t = [1.0, 1.0];
    let rows: Vec<BenchRow> = named
        .par_iter()
        .enumerate()
        .map(|(i, (name, inst))| -> R<BenchRow> {
            let seed = a.common.seed.wrapping_add(i as u64);
            let tr = procrustes::transform(inst);
            let fam = procrustes::upp_family(&tr.a, &tr.b)?;
            let mut rng = linalg::rng(seed);
            let x0 = ManifoldSpec::Stiefel { n: inst.n(), m: inst.m() }.random_point_rng(&mut rng);
            let rgd = oracle::ascend(&Weighted { family: &fam, t: &t }, &x0, &AscentOptions::default())?;
            let multi = oracle::multistart_max_raw(&fam, &t, a.starts, seed)?;
            let (chord_value, chord_objective, chord_error) =
                match procrustes::solve_upp(inst, UppMethod::Chord, &SolveOptions { seed, ..opts_base.clone() }) {
                    Ok(sol) => (Some(fam.lagrangian_raw(&t, &sol.X)?), Some(sol.objective), None),
                    Err(e @ (Error::BudgetExhausted(_) | Error::ConstantsUnavailable(_) | Error::ConstantsInvalid(_))) => {
                        (None, None, Some(e.to_string()))
                    }
                    Err(e) => return Err(e),
                };
            let certified = if (inst.n(), inst.m()) == (3, 2) { Some(procrustes::upp32_sectioned_check(&tr.a, &tr.b, a.tol)?.verdict) } else { None };
            Ok(BenchRow {
                name: name.clone(),
                rgd_value: rgd.value,
                chord_value,
                multistart_value: multi.best_value,
                rgd_objective: inst.objective(&rgd.point),
                chord_objective,
                certified,
                chord_error,
            })
        })
        .collect::<R<_>>()?;
    if let Some(out) = &a.common.out {
        let mut w = csv::Writer::from_path(out).map_err(Error::from)?;
        for r in &rows {
            w.serialize(r).map_err(Error::from)?;
        }
        w.flush()?;
        artifacts.push(out.clone());
    }
    let n = rows.len().max(1) as f64;
    let best = |r: &BenchRow| r.chord_value.map_or(r.multistart_value, |c| c.max(r.multistart_value));
    let spurious = rows.iter().filter(|r| best(r) - r.rgd_value > 1e-3).count();
    let chord_ge = rows.iter().filter(|r| r.chord_value.is_some_and(|c| c >= r.rgd_value - 1e-8 * (1.0 + r.rgd_value.abs()))).count();
    let certified_rows: Vec<&BenchRow> = rows.iter().filter(|r| r.certified == Some(true)).collect();
    let certified_within = certified_rows.iter().filter(|r| r.chord_value.is_some_and(|c| best(r) - c <= 1e-4)).count();
    emit(&json!({
        "instances": rows.len(),
        "rgd_spurious_fraction": spurious as f64 / n,
        "chord_ge_rgd_fraction": chord_ge as f64 / n,
        "chord_failures": rows.iter().filter(|r| r.chord_error.is_some()).count(),
        "certified": certified_rows.len(),
        "certified_chord_within_1e-4": certified_within,
        "rows": rows,
    }))
}

fn probe(a: ProbeArgs, artifacts: &mut Vec<PathBuf>) -> R<String> {
    let inst = load_instance(&a.instance)?;
    let fam = inst.family()?;
    if fam.len() != 2 {
        return Err(Error::InvalidArgument(format!("probe-concavity needs exactly one constraint, got {}", fam.len() - 1)));
    }
    if a.grid < 3 {
        return Err(Error::InvalidArgument("--grid must be at least 3".into()));
    }
    let section = sections::section_for(&fam, a.starts, a.common.seed)?;
    let (lo, hi) = match (a.lo, a.hi) {
        (Some(lo), Some(hi)) => (lo, hi),
        _ => {
            let lo = section.maximize(&[0.0, -1.0])?;
            let hi = section.maximize(&[0.0, 1.0])?;
            let (flo, fhi) = (fam.values(&lo.point.value)?[1], fam.values(&hi.point.value)?[1]);
            let pad = 0.05 * (fhi - flo);
            (a.lo.unwrap_or(flo + pad), a.hi.unwrap_or(fhi - pad))
        }
    };
    let cs: Vec<f64> = (0..a.grid).map(|i| lo + (hi - lo) * i as f64 / (a.grid - 1) as f64).collect();
    let gradient_ok = fam.spec.supports_tangent();
    let rows: Vec<Vec<f64>> = cs
        .iter()
        .map(|&c| -> R<Vec<f64>> {
            let dual = match dual_ellipsoid::solve(section.as_ref(), &[c], &DualOptions { seed: a.common.seed, ..DualOptions::default() }) {
                Ok(d) => d.dual_value,
                Err(Error::DualInfeasible { .. }) => f64::NEG_INFINITY,
                Err(e) => return Err(e),
            };
            let primal = if gradient_ok { oracle::constrained_max(&fam, &[c], a.starts, a.common.seed)?.best_value } else { f64::NAN };
            Ok(vec![c, primal, dual])
        })
        .collect::<R<_>>()?;
    // Ground truth is the multistart primal when available, the dual otherwise.
    let samples: Vec<(Vec<f64>, f64)> = rows.iter().map(|r| (vec![r[0]], if gradient_ok { r[1] } else { r[2] })).collect();
    let report = oracle::concavity_probe(&samples, a.tol)?;
    if let Some(out) = &a.common.out {
        io::write_csv(out, &["c".into(), "primal".into(), "dual".into()], &rows)?;
        artifacts.push(out.clone());
    }
    let max_gap = rows.iter().filter(|r| r[1].is_finite() && r[2].is_finite()).map(|r| (r[2] - r[1]).abs()).fold(0.0, f64::max);
    emit(&json!({
        "report": report,
        "grid": [lo, hi],
        "points": a.grid,
        "max_dual_primal_gap": if gradient_ok { json!(max_gap) } else { serde_json::Value::Null },
        "source": if gradient_ok { "multistart primal" } else { "ellipsoid dual" },
    }))
}
