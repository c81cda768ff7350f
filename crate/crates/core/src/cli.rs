//! Command-line front end. `dispatch` parses arguments, runs one command and
//! returns the process exit code.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::blowup::{critical_profile, records_to_csv, run_sweep, GridPolicy};
use crate::error::{Error, Result};
use crate::functionals::{critical_mass, decay_fit, energy, DecayFit, gn_constant, mass_critical_exponent, pohozaev_check};
use crate::io::{
    config_hash, load_config, read_field_with_meta, write_field, write_report, write_timing, AlphaSpec, FieldMeta, MassSpec,
    OutputFormat, Override, ReportEnvelope, RunConfig,
};
use crate::potentials::{sample_potential, validate_v2, PotentialKind};
use crate::solvers::{multistart_minimize, normalized_gradient_flow, petviashvili, unboundedness_witness, InitSpec, SolverConfig};
use crate::spectral::{Field, Grid};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_DIVERGED: i32 = 4;

/// Environment variable capping sweep workers.
pub const THREADS_VAR: &str = "FNLS_THREADS";

#[derive(Parser, Debug)]
#[command(name = "fnls", version, about = "Fractional NLS ground states, constrained minimizers and blow-up sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ground state Q_alpha by Petviashvili iteration, with identity checks.
    Groundstate(RunArgs),
    /// One constrained minimization I(a).
    Minimize(RunArgs),
    /// Bottom of the spectrum of (-Δ)^s + V and the gap over min V.
    Spectrum(RunArgs),
    /// Functional checks on a stored field.
    Check(CheckArgs),
    /// Mass sweep toward a* with blow-up fits.
    Sweep(RunArgs),
    /// Probe for an energy unbounded below.
    Witness(RunArgs),
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// TOML config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    d: Option<i64>,
    #[arg(long)]
    s: Option<f64>,
    /// Number or "critical".
    #[arg(long)]
    alpha: Option<String>,
    /// Mass: a number or "<factor> a_star".
    #[arg(long)]
    a: Option<String>,
    /// Points per axis.
    #[arg(long = "N", alias = "n")]
    n: Option<i64>,
    /// Box side.
    #[arg(long = "L", alias = "l")]
    l: Option<f64>,
    #[arg(long, value_enum)]
    potential: Option<PotentialArg>,
    #[arg(long)]
    kappa: Option<f64>,
    /// Well exponent.
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    seed: Option<i64>,
    #[arg(long)]
    tol_grad: Option<f64>,
    /// Run a multistart with this many random starts.
    #[arg(long)]
    starts: Option<i64>,
    /// Output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Field output path; the report goes next to it with a `.json` extension.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PotentialArg {
    Zero,
    PeriodicPower,
    Constant,
}

#[derive(Args, Debug)]
struct CheckArgs {
    #[arg(value_enum)]
    what: CheckKind,
    file: PathBuf,
    /// Fractional order; defaults to the value stored in the file.
    #[arg(long)]
    s: Option<f64>,
    /// Exponent; defaults to the value stored in the file.
    #[arg(long)]
    alpha: Option<String>,
    /// Also write the report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum CheckKind {
    Pohozaev,
    Gn,
    Decay,
    All,
}

/// Runs the command line `args` (program name first) and returns the exit code.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("fnls: error: {e}");
            exit_code(&e)
        }
    }
}

/// Input and validation problems map to 2, numerical failures to 3.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Fit(_) | Error::Degenerate(_) | Error::NonFinite(_) => EXIT_NOT_CONVERGED,
        _ => EXIT_INVALID,
    }
}

fn run(command: Command) -> Result<i32> {
    match command {
        Command::Groundstate(a) => groundstate(&a),
        Command::Minimize(a) => minimize(&a),
        Command::Spectrum(a) => spectrum(&a),
        Command::Check(a) => check(&a),
        Command::Sweep(a) => sweep(&a),
        Command::Witness(a) => witness(&a),
    }
}

fn overrides(a: &RunArgs) -> Result<Vec<Override>> {
    let mut o = Vec::new();
    if let Some(d) = a.d {
        o.push(Override::new("problem.d", d));
    }
    if let Some(s) = a.s {
        o.push(Override::new("problem.s", s));
    }
    if let Some(t) = &a.alpha {
        let v: AlphaSpec = t.parse().map_err(|m: String| Error::Config(format!("--alpha: {m}")))?;
        o.push(match v {
            AlphaSpec::Critical => Override::new("problem.alpha", "critical"),
            AlphaSpec::Value(x) => Override::new("problem.alpha", x),
        });
    }
    if let Some(t) = &a.a {
        let m: MassSpec = t.parse().map_err(|m: String| Error::Config(format!("--a: {m}")))?;
        o.push(match m {
            MassSpec::Absolute(x) => Override::new("problem.a", x),
            MassSpec::OfCritical(_) => Override::new("problem.a", m.to_string()),
        });
    }
    if let Some(n) = a.n {
        o.push(Override::new("grid.N", n));
    }
    if let Some(l) = a.l {
        o.push(Override::new("grid.L", l));
    }
    if let Some(p) = a.potential {
        let kind = match p {
            PotentialArg::Zero => "zero",
            PotentialArg::PeriodicPower => "periodic_power",
            PotentialArg::Constant => "constant",
        };
        o.push(Override::new("potential.kind", kind));
    }
    if let Some(k) = a.kappa {
        o.push(Override::new("potential.kappa", k));
    }
    if let Some(p) = a.p {
        o.push(Override::new("potential.p", p));
    }
    if let Some(seed) = a.seed {
        o.push(Override::new("solver.rng_seed", seed));
    }
    if let Some(t) = a.tol_grad {
        o.push(Override::new("solver.tol_grad", t));
    }
    if let Some(c) = a.starts {
        let mut t = toml::Table::new();
        t.insert("kind".into(), "lattice_multistart".into());
        t.insert("count".into(), c.into());
        o.push(Override::new("solver.init", toml::Value::Table(t)));
    }
    if let Some(dir) = &a.out_dir {
        o.push(Override::new("output.directory", dir.display().to_string()));
    }
    Ok(o)
}

fn load(a: &RunArgs) -> Result<RunConfig> {
    load_config(a.config.as_deref(), &overrides(a)?)
}

/// Field and report paths for a command writing one field.
fn output_paths(cfg: &RunConfig, a: &RunArgs, stem: &str) -> Result<(PathBuf, PathBuf)> {
    let field = match &a.out {
        Some(p) => p.clone(),
        None => cfg.output.directory.join(format!("{stem}.field")),
    };
    let report = field.with_extension("json");
    if let Some(dir) = report.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok((field, report))
}

fn hash_for(command: &str, cfg: &impl Serialize) -> Result<String> {
    config_hash(&json!({ "command": command, "config": cfg }))
}

/// Hash of everything that can change results: the output section is left
/// out and `alpha` is resolved, so `"critical"` and `4s/d` hash alike.
pub fn run_config_hash(command: &str, cfg: &RunConfig) -> Result<String> {
    let mut v = serde_json::to_value(cfg)?;
    if let Some(map) = v.as_object_mut() {
        map.remove("output");
    }
    v["problem"]["alpha"] = json!(cfg.alpha());
    hash_for(command, &v)
}

fn emit(cfg: &RunConfig, report_path: &Path, hash: &str, payload: Value, started: Instant) -> Result<()> {
    if cfg.output.wants(OutputFormat::Json) {
        let env = ReportEnvelope::new(hash, payload)?;
        write_report(report_path, &env)?;
        write_timing(report_path, started.elapsed().as_secs_f64())?;
    }
    Ok(())
}

fn store_field(cfg: &RunConfig, path: &Path, u: &Field, alpha: Option<f64>) -> Result<()> {
    if cfg.output.wants(OutputFormat::Field) {
        write_field(path, u, FieldMeta { s_used: Some(cfg.problem.s), alpha_used: alpha })?;
    }
    Ok(())
}

/// Critical mass from a ground state on the dimension's reference grid.
fn reference_a_star(cfg: &RunConfig) -> Result<f64> {
    let policy = GridPolicy::for_dim(cfg.problem.d);
    let grid = Grid::new(cfg.problem.d, policy.reference_n, policy.reference_l)?;
    let solver = SolverConfig { tol_grad: cfg.solver.tol_grad.min(1e-10), init: InitSpec::default(), ..cfg.solver.clone() };
    Ok(critical_profile(&grid, cfg.problem.s, &solver)?.a_star)
}

/// The configured mass, with `a*` when the mass is given relative to it.
fn resolve_mass(cfg: &RunConfig) -> Result<(f64, Option<f64>)> {
    let m = cfg.problem.a.ok_or_else(|| Error::Config("problem.a: this command needs a mass (--a or problem.a)".into()))?;
    if m.needs_critical_mass() {
        let a_star = reference_a_star(cfg)?;
        Ok((m.resolve(a_star), Some(a_star)))
    } else {
        Ok((m.resolve(0.0), None))
    }
}

fn solve_code(converged: bool, diverged: bool) -> i32 {
    if diverged {
        EXIT_DIVERGED
    } else if converged {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    }
}

fn decay_json(fit: &DecayFit, d: usize, s: f64) -> Result<Value> {
    let mut v = serde_json::to_value(fit)?;
    v["expected_exponent"] = json!(-(d as f64 + 2.0 * s));
    Ok(v)
}

fn groundstate(args: &RunArgs) -> Result<i32> {
    let started = Instant::now();
    let cfg = load(args)?;
    let grid = cfg.build_grid()?;
    let (d, s, alpha) = (cfg.problem.d, cfg.problem.s, cfg.alpha());
    let (q, report) = petviashvili(&grid, s, alpha, &cfg.solver)?;
    let (field_path, report_path) = output_paths(&cfg, args, "groundstate")?;
    store_field(&cfg, &field_path, &q, Some(alpha))?;
    let mut payload = json!({
        "command": "groundstate",
        "d": d,
        "s": s,
        "alpha": alpha,
        "solve": report,
        "mass": q.mass(),
    });
    let checks = [
        ("pohozaev", pohozaev_check(&q, s, alpha).and_then(|r| Ok(serde_json::to_value(r)?))),
        ("gn", gn_constant(&q, s, alpha).and_then(|r| Ok(serde_json::to_value(r)?))),
    ];
    for (key, value) in checks {
        payload[key] = value.unwrap_or_else(|e| json!({ "error": e.to_string() }));
    }
    if (alpha - mass_critical_exponent(d, s)).abs() < 1e-12 {
        payload["critical_mass"] = json!(critical_mass(&q));
        let window = [10.0, grid.side_length() / 8.0];
        payload["decay"] = match decay_fit(&q, window).and_then(|fit| decay_json(&fit, d, s)) {
            Ok(v) => v,
            Err(e) => json!({ "error": e.to_string() }),
        };
    }
    emit(&cfg, &report_path, &run_config_hash("groundstate", &cfg)?, payload, started)?;
    Ok(solve_code(report.converged, report.diverged))
}

fn minimize(args: &RunArgs) -> Result<i32> {
    let started = Instant::now();
    let cfg = load(args)?;
    let grid = cfg.build_grid()?;
    let (s, alpha) = (cfg.problem.s, cfg.alpha());
    let (a, a_star) = resolve_mass(&cfg)?;
    let pot = match cfg.potential.kind {
        PotentialKind::Zero => None,
        _ => Some(sample_potential(&cfg.potential, &grid)?),
    };
    let (u, report, starts) = if matches!(cfg.solver.init, InitSpec::LatticeMultistart { .. }) {
        let best = multistart_minimize(&grid, s, alpha, pot.as_ref(), a, &cfg.solver)?;
        (best.field, best.report, Some(best.starts))
    } else {
        let (u, r) = normalized_gradient_flow(&grid, s, alpha, pot.as_ref().map(|p| &p.field), a, &cfg.solver)?;
        (u, r, None)
    };
    let (field_path, report_path) = output_paths(&cfg, args, "minimize")?;
    store_field(&cfg, &field_path, &u, Some(alpha))?;
    let mut payload = json!({
        "command": "minimize",
        "a": a,
        "alpha": alpha,
        "energy_per_mass": report.energy.total / a,
        "solve": report,
    });
    if let Some(a_star) = a_star {
        payload["a_star"] = json!(a_star);
    }
    if let Some(starts) = starts {
        payload["starts"] = serde_json::to_value(starts)?;
    }
    emit(&cfg, &report_path, &run_config_hash("minimize", &cfg)?, payload, started)?;
    Ok(solve_code(report.converged, report.diverged))
}

fn spectrum(args: &RunArgs) -> Result<i32> {
    let started = Instant::now();
    let cfg = load(args)?;
    let grid = cfg.build_grid()?;
    let pot = sample_potential(&cfg.potential, &grid)?;
    let gap = validate_v2(&pot.field, cfg.problem.s, &cfg.solver)?;
    let (_, report_path) = output_paths(&cfg, args, "spectrum")?;
    let payload = json!({ "command": "spectrum", "inf_sigma": gap.bottom, "gap": gap });
    emit(&cfg, &report_path, &run_config_hash("spectrum", &cfg)?, payload, started)?;
    Ok(if gap.converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

fn check(args: &CheckArgs) -> Result<i32> {
    let (u, meta) = read_field_with_meta(&args.file)?;
    let d = u.grid().dim();
    let s = args.s.or(meta.s_used).ok_or_else(|| Error::Config("--s is required: the file does not record s".into()))?;
    let alpha = match &args.alpha {
        Some(t) => t.parse::<AlphaSpec>().map_err(|m| Error::Config(format!("--alpha: {m}")))?.resolve(d, s),
        None => meta.alpha_used.ok_or_else(|| Error::Config("--alpha is required: the file does not record alpha".into()))?,
    };
    let mut payload = json!({
        "command": "check",
        "file": args.file.display().to_string(),
        "s": s,
        "alpha": alpha,
        "mass": u.mass(),
        "energy": energy(&u, None, s, alpha)?,
    });
    let all = args.what == CheckKind::All;
    if all || args.what == CheckKind::Pohozaev {
        payload["pohozaev"] = serde_json::to_value(pohozaev_check(&u, s, alpha)?)?;
    }
    if all || args.what == CheckKind::Gn {
        payload["gn"] = serde_json::to_value(gn_constant(&u, s, alpha)?)?;
    }
    if all || args.what == CheckKind::Decay {
        let window = [10.0, u.grid().side_length() / 8.0];
        payload["decay"] = decay_json(&decay_fit(&u, window)?, d, s)?;
    }
    let hash = config_hash(&json!({ "command": "check", "what": format!("{:?}", args.what), "s": s, "alpha": alpha }))?;
    let env = ReportEnvelope::new(&hash, payload)?;
    println!("{}", crate::io::canonical_json(&env)?);
    if let Some(path) = &args.report {
        write_report(path, &env)?;
    }
    Ok(EXIT_OK)
}

/// Worker count from `FNLS_THREADS`, default 1.
pub fn threads_from_env() -> Result<usize> {
    match std::env::var(THREADS_VAR) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n >= 1)
            .ok_or_else(|| Error::Config(format!("{THREADS_VAR} must be a positive integer, got {v:?}"))),
        Err(_) => Ok(1),
    }
}

fn sweep(args: &RunArgs) -> Result<i32> {
    let started = Instant::now();
    let cfg = load(args)?;
    let sweep_cfg = cfg.sweep_config(threads_from_env()?)?;
    let out = run_sweep(&sweep_cfg)?;
    let dir = match &args.out {
        Some(p) => p.clone(),
        None => cfg.output.directory.clone(),
    };
    fs::create_dir_all(&dir)?;
    let hash = hash_for("sweep", &sweep_cfg)?;
    if cfg.output.wants(OutputFormat::Csv) {
        fs::write(dir.join("sweep.csv"), records_to_csv(&out.records)?)?;
    }
    if cfg.output.wants(OutputFormat::Field) {
        if let Some(w) = &out.last_profile {
            write_field(dir.join("last_profile.field"), w, FieldMeta { s_used: Some(sweep_cfg.s), alpha_used: Some(sweep_cfg.alpha()) })?;
        }
    }
    let summary_path = dir.join("sweep_summary.json");
    let payload = json!({ "command": "sweep", "summary": out.summary, "records": out.records });
    emit(&cfg, &summary_path, &hash, payload, started)?;
    let all_converged = out.records.iter().all(|r| r.converged);
    Ok(if out.summary.partial || !all_converged { EXIT_NOT_CONVERGED } else { EXIT_OK })
}

fn witness(args: &RunArgs) -> Result<i32> {
    let started = Instant::now();
    let cfg = load(args)?;
    let grid = cfg.build_grid()?;
    let (d, s, alpha) = (cfg.problem.d, cfg.problem.s, cfg.alpha());
    let (a, a_star) = resolve_mass(&cfg)?;
    let pot = match cfg.potential.kind {
        PotentialKind::Zero => None,
        _ => Some(sample_potential(&cfg.potential, &grid)?),
    };
    // The test-function branch needs the critical ground state.
    let q = if (alpha - mass_critical_exponent(d, s)).abs() < 1e-12 {
        let (q, rep) = petviashvili(&grid, s, alpha, &SolverConfig { init: InitSpec::default(), ..cfg.solver.clone() })?;
        rep.converged.then_some(q)
    } else {
        None
    };
    let report = unboundedness_witness(&grid, s, alpha, pot.as_ref().map(|p| &p.field), a, q.as_ref())?;
    let (_, report_path) = output_paths(&cfg, args, "witness")?;
    let mut payload = json!({ "command": "witness", "a": a, "alpha": alpha, "witness": report });
    if let Some(a_star) = a_star {
        payload["a_star"] = json!(a_star);
    }
    emit(&cfg, &report_path, &run_config_hash("witness", &cfg)?, payload, started)?;
    Ok(EXIT_OK)
}
