//! Run configuration: TOML sections `[problem]`, `[grid]`, `[potential]`,
//! `[solver]`, `[output]` and `[sweep]`. Command-line flags are applied as
//! key overrides before validation, so flags win over the file and the file
//! over defaults.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::blowup::{GridPolicy, SweepConfig};
use crate::error::{Error, Result};
use crate::functionals::{check_exponent, mass_critical_exponent};
use crate::potentials::{sample_potential, PotentialKind, PotentialSpec};
use crate::solvers::SolverConfig;
use crate::spectral::Grid;

/// Nonlinearity exponent: a number or `"critical"` (`4s/d`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AlphaSpec {
    Critical,
    Value(f64),
}

impl AlphaSpec {
    pub fn resolve(self, dim: usize, s: f64) -> f64 {
        match self {
            AlphaSpec::Critical => mass_critical_exponent(dim, s),
            AlphaSpec::Value(a) => a,
        }
    }
}

impl Serialize for AlphaSpec {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            AlphaSpec::Critical => ser.serialize_str("critical"),
            AlphaSpec::Value(a) => ser.serialize_f64(*a),
        }
    }
}

impl<'de> Deserialize<'de> for AlphaSpec {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        match NumberOrText::deserialize(de)? {
            NumberOrText::Number(a) => Ok(AlphaSpec::Value(a)),
            NumberOrText::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl std::str::FromStr for AlphaSpec {
    type Err = String;
    fn from_str(t: &str) -> std::result::Result<Self, String> {
        let t = t.trim();
        if t.eq_ignore_ascii_case("critical") {
            return Ok(AlphaSpec::Critical);
        }
        t.parse().map(AlphaSpec::Value).map_err(|_| format!("expected a number or \"critical\", got {t:?}"))
    }
}

/// A mass, absolute or as a multiple of the critical mass `a*`
/// (`"0.9 a_star"`, `"0.9*a_star"`, `"a_star"`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MassSpec {
    Absolute(f64),
    OfCritical(f64),
}

impl MassSpec {
    pub fn resolve(self, a_star: f64) -> f64 {
        match self {
            MassSpec::Absolute(a) => a,
            MassSpec::OfCritical(f) => f * a_star,
        }
    }

    pub fn needs_critical_mass(self) -> bool {
        matches!(self, MassSpec::OfCritical(_))
    }

    fn factor(self) -> f64 {
        match self {
            MassSpec::Absolute(a) | MassSpec::OfCritical(a) => a,
        }
    }
}

impl fmt::Display for MassSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MassSpec::Absolute(a) => write!(f, "{a}"),
            MassSpec::OfCritical(c) => write!(f, "{c} a_star"),
        }
    }
}

impl std::str::FromStr for MassSpec {
    type Err = String;
    fn from_str(t: &str) -> std::result::Result<Self, String> {
        let t = t.trim();
        if let Ok(a) = t.parse::<f64>() {
            return Ok(MassSpec::Absolute(a));
        }
        let bad = || format!("expected a number, \"a_star\" or \"<factor> a_star\", got {t:?}");
        let head = ["a_star", "a*"].iter().find_map(|tag| t.strip_suffix(tag)).ok_or_else(bad)?;
        let head = head.trim().trim_end_matches('*').trim();
        if head.is_empty() {
            return Ok(MassSpec::OfCritical(1.0));
        }
        head.parse().map(MassSpec::OfCritical).map_err(|_| bad())
    }
}

impl Serialize for MassSpec {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            MassSpec::Absolute(a) => ser.serialize_f64(*a),
            MassSpec::OfCritical(_) => ser.serialize_str(&self.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for MassSpec {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        match NumberOrText::deserialize(de)? {
            NumberOrText::Number(a) => Ok(MassSpec::Absolute(a)),
            NumberOrText::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum NumberOrText {
    Number(f64),
    Text(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Problem {
    pub d: usize,
    pub s: f64,
    #[serde(default = "critical")]
    pub alpha: AlphaSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<MassSpec>,
    /// Sweep schedule; overrides `sweep.j_range`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masses: Option<Vec<MassSpec>>,
}

fn critical() -> AlphaSpec {
    AlphaSpec::Critical
}

/// Grid and refinement cap. Defaults depend on the dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "L")]
    pub l: f64,
    /// Largest `N` a sweep may refine to.
    pub max_n: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
    Field,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { directory: PathBuf::from("."), formats: vec![OutputFormat::Csv, OutputFormat::Json, OutputFormat::Field] }
    }
}

impl OutputConfig {
    pub fn wants(&self, f: OutputFormat) -> bool {
        self.formats.contains(&f)
    }
}

/// Sweep-only settings; grid fields left out fall back to the sweep policy
/// for the dimension.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j_range: Option<[u32; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_l: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_l: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    problem: Problem,
    grid: Option<RawGrid>,
    #[serde(default)]
    potential: PotentialSpec,
    #[serde(default)]
    solver: SolverConfig,
    #[serde(default)]
    output: OutputConfig,
    #[serde(default)]
    sweep: SweepSection,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    #[serde(rename = "N")]
    n: Option<usize>,
    #[serde(rename = "L")]
    l: Option<f64>,
    max_n: Option<usize>,
}

/// A fully validated configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub problem: Problem,
    pub grid: GridConfig,
    /// False when `[grid]` came from defaults; sweeps then use their own policy.
    #[serde(skip)]
    pub grid_given: bool,
    /// Whether `solver.init` was set; sweeps otherwise use a well multistart.
    #[serde(skip)]
    pub init_given: bool,
    pub potential: PotentialSpec,
    pub solver: SolverConfig,
    pub output: OutputConfig,
    pub sweep: SweepSection,
}

pub const DEFAULT_L: f64 = 128.0;

pub fn default_n(dim: usize) -> usize {
    if dim == 2 {
        512
    } else {
        4096
    }
}

/// A key override such as `problem.s = 0.5`, applied to the parsed TOML.
#[derive(Clone, Debug)]
pub struct Override {
    pub path: &'static str,
    pub value: toml::Value,
}

impl Override {
    pub fn new(path: &'static str, value: impl Into<toml::Value>) -> Self {
        Override { path, value: value.into() }
    }
}

fn apply(table: &mut toml::Table, o: &Override) {
    let mut t = table;
    let mut keys = o.path.split('.').peekable();
    while let Some(k) = keys.next() {
        if keys.peek().is_none() {
            t.insert(k.to_string(), o.value.clone());
            return;
        }
        let entry = t.entry(k.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        if !entry.is_table() {
            *entry = toml::Value::Table(toml::Table::new());
        }
        t = entry.as_table_mut().expect("table just ensured");
    }
}

/// Parses and validates a config file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    load_config(Some(path.as_ref()), &[])
}

/// Reads `path` (if any), applies the overrides, then validates.
pub fn load_config(path: Option<&Path>, overrides: &[Override]) -> Result<RunConfig> {
    let (text, origin) = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            (text, p.display().to_string())
        }
        None => (String::new(), "command line".to_string()),
    };
    config_from_str(&text, overrides).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{origin}: {m}")),
        other => other,
    })
}

pub fn config_from_str(text: &str, overrides: &[Override]) -> Result<RunConfig> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string().trim_end().to_string()))?;
    for o in overrides {
        apply(&mut table, o);
    }
    let init_given = table.get("solver").and_then(|t| t.get("init")).is_some();
    let raw: RawConfig = RawConfig::deserialize(toml::Value::Table(table))
        .map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
    let d = raw.problem.d;
    let grid_given = raw.grid.is_some();
    let g = raw.grid.unwrap_or(RawGrid { n: None, l: None, max_n: None });
    let n = g.n.unwrap_or_else(|| default_n(d));
    let grid = GridConfig { n, l: g.l.unwrap_or(DEFAULT_L), max_n: g.max_n.unwrap_or(16 * n) };
    let cfg = RunConfig {
        problem: raw.problem,
        grid,
        grid_given,
        init_given,
        potential: raw.potential,
        solver: raw.solver,
        output: raw.output,
        sweep: raw.sweep,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn at(key: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Config(m) | Error::InvalidParameter(m) | Error::InvalidGrid(m) if m.starts_with(key) => Error::Config(m),
        Error::Config(m) | Error::InvalidParameter(m) | Error::InvalidGrid(m) => Error::Config(format!("{key}: {m}")),
        other => other,
    }
}

impl RunConfig {
    pub fn alpha(&self) -> f64 {
        self.problem.alpha.resolve(self.problem.d, self.problem.s)
    }

    pub fn build_grid(&self) -> Result<Grid> {
        Grid::new(self.problem.d, self.grid.n, self.grid.l).map_err(at("grid"))
    }

    /// Re-checks every cross-field constraint.
    pub fn validate(&self) -> Result<()> {
        let p = &self.problem;
        if !(p.d == 1 || p.d == 2) {
            return Err(Error::Config(format!("problem.d: must be 1 or 2, got {}", p.d)));
        }
        if !(p.s > 0.0 && p.s < 1.0) {
            return Err(Error::Config(format!("problem.s: fractional order must lie in (0, 1), got {}", p.s)));
        }
        check_exponent(p.d, p.s, self.alpha()).map_err(at("problem.alpha"))?;
        for (key, m) in p.a.iter().map(|m| ("problem.a", m)).chain(p.masses.iter().flatten().map(|m| ("problem.masses", m))) {
            if !(m.factor() > 0.0 && m.factor().is_finite()) {
                return Err(Error::Config(format!("{key}: masses must be positive, got {m}")));
            }
        }
        if let Some(ms) = &p.masses {
            if ms.is_empty() {
                return Err(Error::Config("problem.masses: schedule is empty".into()));
            }
        }
        let grid = self.build_grid()?;
        if self.grid.max_n < self.grid.n {
            return Err(Error::Config(format!("grid.max_n: {} is below grid.N = {}", self.grid.max_n, self.grid.n)));
        }
        self.potential.validate(p.d, p.s).map_err(at("potential"))?;
        if self.potential.kind == PotentialKind::PeriodicPower {
            sample_potential(&self.potential, &grid).map_err(at("grid.L / potential"))?;
        }
        self.solver.validate().map_err(at("solver"))?;
        if self.output.formats.is_empty() {
            return Err(Error::Config("output.formats: choose at least one of csv, json, field".into()));
        }
        if let Some([lo, hi]) = self.sweep.j_range {
            if lo == 0 || hi < lo {
                return Err(Error::Config(format!("sweep.j_range: need 1 <= j_min <= j_max, got [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    /// Sweep settings derived from this config. Explicit `[grid]` values
    /// replace the sweep policy's `N`, `L` and `max_n`.
    pub fn sweep_config(&self, threads: usize) -> Result<SweepConfig> {
        let p = &self.problem;
        if !matches!(p.alpha, AlphaSpec::Critical) && (self.alpha() - mass_critical_exponent(p.d, p.s)).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "problem.alpha: sweeps run at the mass-critical exponent 4s/d = {}, got {}",
                mass_critical_exponent(p.d, p.s),
                self.alpha()
            )));
        }
        let mut cfg = SweepConfig::new(p.d, p.s, self.potential.clone());
        let mut policy = GridPolicy::for_dim(p.d);
        if self.grid_given {
            policy.n = self.grid.n;
            policy.l = self.grid.l;
            policy.max_n = self.grid.max_n;
        }
        let sw = &self.sweep;
        policy.window_l = sw.window_l.unwrap_or(policy.window_l);
        policy.window_n = sw.window_n.unwrap_or(policy.window_n);
        policy.reference_n = sw.reference_n.unwrap_or(policy.reference_n);
        policy.reference_l = sw.reference_l.unwrap_or(policy.reference_l);
        cfg.grid = policy;
        if let Some(j) = sw.j_range {
            cfg.j_range = j;
        }
        cfg.masses = p.masses.clone();
        let init = cfg.solver.init.clone();
        cfg.solver = self.solver.clone();
        if !self.init_given {
            cfg.solver.init = init;
        }
        cfg.threads = threads.max(1);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_resolves_critical_alpha() {
        let cfg = config_from_str("[problem]\nd = 1\ns = 0.5\nalpha = \"critical\"\na = \"0.9 a_star\"\n", &[]).unwrap();
        assert_eq!(cfg.alpha(), 2.0);
        assert_eq!(cfg.problem.a, Some(MassSpec::OfCritical(0.9)));
        assert_eq!(cfg.grid, GridConfig { n: 4096, l: 128.0, max_n: 65536 });
        assert!(!cfg.grid_given);
    }

    #[test]
    fn grid_defaults_follow_dimension() {
        let cfg = config_from_str("[problem]\nd = 2\ns = 0.5\n", &[]).unwrap();
        assert_eq!((cfg.grid.n, cfg.grid.l), (512, 128.0));
    }

    #[test]
    fn well_exponent_at_bound_is_rejected() {
        let text = "[problem]\nd = 1\ns = 0.5\n[potential]\nkind = \"periodic_power\"\np = 3.0\n";
        match config_from_str(text, &[]) {
            Err(Error::Config(m)) => assert!(m.contains("potential") && m.contains("d + 4s"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn supercritical_sobolev_exponent_is_rejected() {
        let text = "[problem]\nd = 2\ns = 0.5\nalpha = 5.0\n";
        match config_from_str(text, &[]) {
            Err(Error::Config(m)) => assert!(m.starts_with("problem.alpha") && m.contains("s*"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_and_bad_values_name_their_location() {
        match config_from_str("[problem]\nd = 1\ns = 0.5\n[grid]\nNN = 3\n", &[]) {
            Err(Error::Config(m)) => assert!(m.contains("NN"), "{m}"),
            other => panic!("{other:?}"),
        }
        match config_from_str("[problem]\nd = 1\ns = 1.5\n", &[]) {
            Err(Error::Config(m)) => assert!(m.starts_with("problem.s"), "{m}"),
            other => panic!("{other:?}"),
        }
        let text = "[problem]\nd = 1\ns = 0.5\n[grid]\nL = 12.5\n[potential]\nkind = \"periodic_power\"\n";
        match config_from_str(text, &[]) {
            Err(Error::Config(m)) => assert!(m.contains("grid.L"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn flags_override_file_values() {
        let text = "[problem]\nd = 1\ns = 0.5\n[grid]\nN = 1024\n";
        let cfg = config_from_str(text, &[Override::new("grid.N", 2048i64), Override::new("problem.alpha", 1.0)]).unwrap();
        assert_eq!(cfg.grid.n, 2048);
        assert_eq!(cfg.alpha(), 1.0);
        assert!(cfg.grid_given);
    }

    #[test]
    fn mass_spec_spellings() {
        for (t, m) in [
            ("0.9 a_star", MassSpec::OfCritical(0.9)),
            ("0.9*a_star", MassSpec::OfCritical(0.9)),
            ("a*", MassSpec::OfCritical(1.0)),
            ("2.5", MassSpec::Absolute(2.5)),
        ] {
            assert_eq!(t.parse::<MassSpec>().unwrap(), m, "{t}");
        }
        assert!("0.9 b".parse::<MassSpec>().is_err());
        assert_eq!(MassSpec::OfCritical(0.5).resolve(4.0), 2.0);
    }
}
