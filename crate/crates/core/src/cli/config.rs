//! Run configuration: a TOML file with a `[run]` and a `[parameters]` table.
//!
//! Preset experiments start from an embedded preset file; any keys given in
//! the user's `[parameters]` override it.

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;
use toml::{Table, Value};

pub const PRESET_FIG4: &str = include_str!("../../presets/fig4.toml");
pub const PRESET_FIG5: &str = include_str!("../../presets/fig5.toml");
pub const PRESET_FIG6: &str = include_str!("../../presets/fig6.toml");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid value for `{key}`: {message}")]
    Validation { key: String, message: String },
}

impl ConfigError {
    fn invalid(key: &str, message: impl Into<String>) -> Self {
        ConfigError::Validation { key: key.to_string(), message: message.into() }
    }

    /// Key named by a validation error.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::Validation { key, .. } => Some(key),
            ConfigError::Parse { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Qsd,
    Cq,
    Lindblad,
    TimescaleJz,
    TimescaleDp,
    PresetFig4,
    PresetFig5,
    PresetFig6,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::Qsd,
        Experiment::Cq,
        Experiment::Lindblad,
        Experiment::TimescaleJz,
        Experiment::TimescaleDp,
        Experiment::PresetFig4,
        Experiment::PresetFig5,
        Experiment::PresetFig6,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Qsd => "qsd",
            Experiment::Cq => "cq",
            Experiment::Lindblad => "lindblad",
            Experiment::TimescaleJz => "timescale-jz",
            Experiment::TimescaleDp => "timescale-dp",
            Experiment::PresetFig4 => "preset-fig4",
            Experiment::PresetFig5 => "preset-fig5",
            Experiment::PresetFig6 => "preset-fig6",
        }
    }

    pub fn preset(self) -> Option<&'static str> {
        match self {
            Experiment::PresetFig4 => Some(PRESET_FIG4),
            Experiment::PresetFig5 => Some(PRESET_FIG5),
            Experiment::PresetFig6 => Some(PRESET_FIG6),
            _ => None,
        }
    }
}

impl std::str::FromStr for Experiment {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| ConfigError::invalid("experiment", format!("unknown experiment `{s}`")))
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CollapseFamily {
    Hamiltonian,
    Position,
    Number,
}

/// Finite-level system shared by the `qsd` and `lindblad` experiments (atomic units).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemParams {
    /// Diagonal of H.
    pub energies: Vec<f64>,
    /// Nearest-neighbour coupling: `H[i][i+1] = H[i+1][i] = -tunneling`.
    pub tunneling: f64,
    pub collapse: CollapseFamily,
    /// Site positions for the position model.
    pub positions: Option<Vec<f64>>,
    /// Initial real amplitudes, renormalized if within 1e-6 of unit norm.
    pub psi0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QsdParams {
    #[serde(flatten)]
    pub system: SystemParams,
    pub eta: f64,
    pub dt: f64,
    pub t_max: f64,
    pub record_stride: usize,
    pub collapse_epsilon: f64,
    pub n_trajectories: usize,
    pub keep_trajectories: usize,
    pub histogram_bins: usize,
    /// Step of the Lindblad comparison; defaults to `min(1e-3, 0.01 / eta)`.
    pub oracle_dt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LindbladParams {
    #[serde(flatten)]
    pub system: SystemParams,
    pub rate: f64,
    pub t_max: f64,
    pub dt: Option<f64>,
    pub n_samples: usize,
}

/// SI units throughout.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CqParams {
    #[serde(rename = "B")]
    pub coupling: f64,
    pub mass: f64,
    pub omega: f64,
    pub tau: f64,
    pub dt: f64,
    pub t_max: f64,
    pub weights: Vec<f64>,
    pub q0: f64,
    pub p0: f64,
    pub record_stride: usize,
    pub n_trajectories: usize,
    pub keep_trajectories: usize,
    pub histogram_bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JzParams {
    pub number_density: f64,
    pub temperature: f64,
    pub molecular_mass: f64,
    pub size: f64,
    pub displacement: f64,
    /// Samples of the coherence decay curve over `[0, decay_span * tau_D]`.
    pub decay_samples: usize,
    pub decay_span: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DpParams {
    /// `[x, y, z, mass]` rows, m and kg.
    pub up: Vec<[f64; 4]>,
    pub down: Vec<[f64; 4]>,
    pub smear_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepParams {
    pub material_density: f64,
    pub displacement: f64,
    pub smear_sigma: f64,
    pub mass_min: f64,
    pub mass_max: f64,
    pub n_masses: usize,
    pub lattice_points_per_diameter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Parameters {
    Qsd(QsdParams),
    Lindblad(LindbladParams),
    Cq(CqParams),
    Jz(JzParams),
    Dp(DpParams),
    Sweep(SweepParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub parameters: Parameters,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn parse_table(text: &str) -> Result<Table, ConfigError> {
    toml::from_str::<Table>(text).map_err(|e| ConfigError::Parse {
        line: e.span().map_or(1, |s| line_of(text, s.start)),
        message: e.message().to_string(),
    })
}

fn sub_table(root: &Table, name: &str) -> Result<Table, ConfigError> {
    match root.get(name) {
        None => Ok(Table::new()),
        Some(Value::Table(t)) => Ok(t.clone()),
        Some(_) => Err(ConfigError::invalid(name, "expected a table")),
    }
}

/// Parses a config file. `experiment` comes from the command line when given,
/// otherwise from `[run] experiment`.
pub fn parse_config(text: &str, experiment: Option<Experiment>) -> Result<RunConfig, ConfigError> {
    let root = parse_table(text)?;
    for key in root.keys() {
        if key != "run" && key != "parameters" {
            return Err(ConfigError::invalid(key, "unknown section"));
        }
    }
    let run = sub_table(&root, "run")?;
    let mut reader = Reader::new(&run, "run");
    let named = reader.opt_string("experiment")?;
    let seed = reader.opt_u64("seed")?;
    let output_dir = reader.opt_string("output_dir")?.map(PathBuf::from);
    reader.finish()?;

    let named = named.map(|s| s.parse::<Experiment>()).transpose()?;
    let experiment = match (experiment, named) {
        (Some(a), Some(b)) if a != b => {
            return Err(ConfigError::invalid("experiment", format!("config is for `{b}`, command line asked for `{a}`")))
        }
        (Some(a), _) => a,
        (None, Some(b)) => b,
        (None, None) => return Err(ConfigError::invalid("experiment", "missing")),
    };

    let mut params = match experiment.preset() {
        Some(preset) => sub_table(&parse_table(preset)?, "parameters")?,
        None => Table::new(),
    };
    for (k, v) in sub_table(&root, "parameters")? {
        params.insert(k, v);
    }
    let parameters = build_parameters(experiment, &params)?;
    Ok(RunConfig { experiment, seed, output_dir, parameters })
}

/// Configuration of a preset with no user overrides.
pub fn preset_config(experiment: Experiment) -> Result<RunConfig, ConfigError> {
    let text = experiment
        .preset()
        .ok_or_else(|| ConfigError::invalid("config", format!("`{experiment}` needs --config")))?;
    parse_config(text, Some(experiment))
}

fn build_parameters(experiment: Experiment, table: &Table) -> Result<Parameters, ConfigError> {
    let mut r = Reader::new(table, "parameters");
    let params = match experiment {
        Experiment::Qsd | Experiment::PresetFig4 => Parameters::Qsd(read_qsd(&mut r)?),
        Experiment::Lindblad => Parameters::Lindblad(read_lindblad(&mut r)?),
        Experiment::Cq | Experiment::PresetFig6 => Parameters::Cq(read_cq(&mut r)?),
        Experiment::TimescaleJz => Parameters::Jz(read_jz(&mut r)?),
        Experiment::TimescaleDp => Parameters::Dp(read_dp(&mut r)?),
        Experiment::PresetFig5 => Parameters::Sweep(read_sweep(&mut r)?),
    };
    r.finish()?;
    Ok(params)
}

fn read_system(r: &mut Reader) -> Result<SystemParams, ConfigError> {
    let energies = r.f64_array("energies")?;
    if energies.is_empty() {
        return Err(ConfigError::invalid("energies", "at least one level required"));
    }
    let n = energies.len();
    let tunneling = r.f64_or("tunneling", 0.0, Check::Finite)?;
    let collapse = match r.string_or("collapse", "hamiltonian")?.as_str() {
        "hamiltonian" => CollapseFamily::Hamiltonian,
        "position" => CollapseFamily::Position,
        "number" => CollapseFamily::Number,
        other => return Err(ConfigError::invalid("collapse", format!("unknown family `{other}`"))),
    };
    let positions = r.opt_f64_array("positions")?;
    if let Some(p) = &positions {
        if p.len() != n {
            return Err(ConfigError::invalid("positions", format!("expected {n} values")));
        }
    }
    let psi0 = r.f64_array("psi0")?;
    if psi0.len() != n {
        return Err(ConfigError::invalid("psi0", format!("expected {n} amplitudes")));
    }
    let norm = psi0.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(ConfigError::invalid("psi0", format!("norm {norm} is not 1")));
    }
    Ok(SystemParams { energies, tunneling, collapse, positions, psi0 })
}

fn read_qsd(r: &mut Reader) -> Result<QsdParams, ConfigError> {
    let system = read_system(r)?;
    let eta = r.f64("eta", Check::Positive)?;
    let dt = r.f64("dt", Check::Positive)?;
    let t_max = r.f64("t_max", Check::Positive)?;
    if dt >= t_max {
        return Err(ConfigError::invalid("dt", "must be smaller than t_max"));
    }
    let collapse_epsilon = r.f64_or("collapse_epsilon", 1e-3, Check::Open(0.0, 0.5))?;
    Ok(QsdParams {
        system,
        eta,
        dt,
        t_max,
        record_stride: r.usize_or("record_stride", 100)?,
        collapse_epsilon,
        n_trajectories: r.usize("n_trajectories")?,
        keep_trajectories: r.count_or("keep_trajectories", 10)?,
        histogram_bins: r.usize_or("histogram_bins", 50)?,
        oracle_dt: r.opt_f64("oracle_dt", Check::Positive)?,
    })
}

fn read_lindblad(r: &mut Reader) -> Result<LindbladParams, ConfigError> {
    Ok(LindbladParams {
        system: read_system(r)?,
        rate: r.f64("rate", Check::NonNegative)?,
        t_max: r.f64("t_max", Check::Positive)?,
        dt: r.opt_f64("dt", Check::Positive)?,
        n_samples: r.usize_or("n_samples", 101)?,
    })
}

fn read_cq(r: &mut Reader) -> Result<CqParams, ConfigError> {
    let coupling = r.f64("B", Check::Positive)?;
    let mass = r.f64("mass", Check::Positive)?;
    let omega = r.f64("omega", Check::Positive)?;
    let tau = r.f64("tau", Check::Positive)?;
    let dt = r.f64("dt", Check::Positive)?;
    if dt > tau / 10.0 {
        return Err(ConfigError::invalid("dt", "must not exceed tau / 10"));
    }
    let t_max = r.f64("t_max", Check::Positive)?;
    let weights = r.f64_array("weights")?;
    if weights.len() != 2 || weights.iter().any(|w| !(*w >= 0.0)) || (weights[0] + weights[1] - 1.0).abs() > 1e-9 {
        return Err(ConfigError::invalid("weights", "expected two non-negative values summing to 1"));
    }
    Ok(CqParams {
        coupling,
        mass,
        omega,
        tau,
        dt,
        t_max,
        weights,
        q0: r.f64_or("q0", 0.0, Check::Finite)?,
        p0: r.f64_or("p0", 0.0, Check::Finite)?,
        record_stride: r.usize_or("record_stride", 1)?,
        n_trajectories: r.usize("n_trajectories")?,
        keep_trajectories: r.count_or("keep_trajectories", 10)?,
        histogram_bins: r.usize_or("histogram_bins", 50)?,
    })
}

fn read_jz(r: &mut Reader) -> Result<JzParams, ConfigError> {
    Ok(JzParams {
        number_density: r.f64("number_density", Check::Positive)?,
        temperature: r.f64("temperature", Check::NonNegative)?,
        molecular_mass: r.f64("molecular_mass", Check::Positive)?,
        size: r.f64("size", Check::Positive)?,
        displacement: r.f64("displacement", Check::NonNegative)?,
        decay_samples: r.usize_or("decay_samples", 101)?,
        decay_span: r.f64_or("decay_span", 5.0, Check::Positive)?,
    })
}

fn read_points(r: &mut Reader, key: &'static str) -> Result<Vec<[f64; 4]>, ConfigError> {
    let rows = r.take(key)?.ok_or_else(|| ConfigError::invalid(key, "missing"))?;
    let Value::Array(rows) = rows else {
        return Err(ConfigError::invalid(key, "expected an array of [x, y, z, mass] rows"));
    };
    if rows.is_empty() {
        return Err(ConfigError::invalid(key, "no points"));
    }
    rows.iter()
        .map(|row| {
            let v = number_array(key, row)?;
            if v.len() != 4 || !(v[3] > 0.0) {
                return Err(ConfigError::invalid(key, "each row is [x, y, z, mass] with mass > 0"));
            }
            Ok([v[0], v[1], v[2], v[3]])
        })
        .collect()
}

fn read_dp(r: &mut Reader) -> Result<DpParams, ConfigError> {
    Ok(DpParams {
        up: read_points(r, "up")?,
        down: read_points(r, "down")?,
        smear_sigma: r.f64_or("smear_sigma", 1e-10, Check::Positive)?,
    })
}

fn read_sweep(r: &mut Reader) -> Result<SweepParams, ConfigError> {
    let mass_min = r.f64("mass_min", Check::Positive)?;
    let mass_max = r.f64("mass_max", Check::Positive)?;
    if mass_max <= mass_min {
        return Err(ConfigError::invalid("mass_max", "must exceed mass_min"));
    }
    let n_masses = r.usize("n_masses")?;
    if n_masses < 2 {
        return Err(ConfigError::invalid("n_masses", "at least 2"));
    }
    let lattice_points_per_diameter = r.usize_or("lattice_points_per_diameter", 13)?;
    if lattice_points_per_diameter < 2 {
        return Err(ConfigError::invalid("lattice_points_per_diameter", "at least 2"));
    }
    Ok(SweepParams {
        material_density: r.f64("material_density", Check::Positive)?,
        displacement: r.f64("displacement", Check::Positive)?,
        smear_sigma: r.f64_or("smear_sigma", 1e-10, Check::Positive)?,
        mass_min,
        mass_max,
        n_masses,
        lattice_points_per_diameter,
    })
}

#[derive(Debug, Clone, Copy)]
enum Check {
    Finite,
    Positive,
    NonNegative,
    /// Open interval.
    Open(f64, f64),
}

impl Check {
    fn apply(self, key: &str, x: f64) -> Result<f64, ConfigError> {
        let ok = x.is_finite()
            && match self {
                Check::Finite => true,
                Check::Positive => x > 0.0,
                Check::NonNegative => x >= 0.0,
                Check::Open(lo, hi) => x > lo && x < hi,
            };
        let rule = match self {
            Check::Finite => "a finite number".to_string(),
            Check::Positive => "a positive number".to_string(),
            Check::NonNegative => "a non-negative number".to_string(),
            Check::Open(lo, hi) => format!("in ({lo}, {hi})"),
        };
        if ok {
            Ok(x)
        } else {
            Err(ConfigError::invalid(key, format!("{x} is not {rule}")))
        }
    }
}

fn number(key: &str, v: &Value) -> Result<f64, ConfigError> {
    match v {
        Value::Float(x) => Ok(*x),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(ConfigError::invalid(key, "expected a number")),
    }
}

fn number_array(key: &str, v: &Value) -> Result<Vec<f64>, ConfigError> {
    match v {
        Value::Array(a) => a.iter().map(|x| number(key, x)).collect(),
        _ => Err(ConfigError::invalid(key, "expected an array of numbers")),
    }
}

/// Typed access to one table; remembers which keys were read so the rest can
/// be rejected as unknown.
struct Reader<'a> {
    table: &'a Table,
    section: &'static str,
    seen: BTreeSet<&'static str>,
}

impl<'a> Reader<'a> {
    fn new(table: &'a Table, section: &'static str) -> Self {
        Self { table, section, seen: BTreeSet::new() }
    }

    fn take(&mut self, key: &'static str) -> Result<Option<&'a Value>, ConfigError> {
        self.seen.insert(key);
        Ok(self.table.get(key))
    }

    fn opt_f64(&mut self, key: &'static str, check: Check) -> Result<Option<f64>, ConfigError> {
        self.take(key)?.map(|v| check.apply(key, number(key, v)?)).transpose()
    }

    fn f64(&mut self, key: &'static str, check: Check) -> Result<f64, ConfigError> {
        self.opt_f64(key, check)?.ok_or_else(|| ConfigError::invalid(key, "missing"))
    }

    fn f64_or(&mut self, key: &'static str, default: f64, check: Check) -> Result<f64, ConfigError> {
        Ok(self.opt_f64(key, check)?.unwrap_or(default))
    }

    fn opt_f64_array(&mut self, key: &'static str) -> Result<Option<Vec<f64>>, ConfigError> {
        self.take(key)?
            .map(|v| {
                let a = number_array(key, v)?;
                a.iter().try_for_each(|&x| Check::Finite.apply(key, x).map(|_| ()))?;
                Ok(a)
            })
            .transpose()
    }

    fn f64_array(&mut self, key: &'static str) -> Result<Vec<f64>, ConfigError> {
        self.opt_f64_array(key)?.ok_or_else(|| ConfigError::invalid(key, "missing"))
    }

    fn opt_integer(&mut self, key: &'static str) -> Result<Option<i64>, ConfigError> {
        self.take(key)?
            .map(|v| match v {
                Value::Integer(i) => Ok(*i),
                _ => Err(ConfigError::invalid(key, "expected an integer")),
            })
            .transpose()
    }

    fn opt_u64(&mut self, key: &'static str) -> Result<Option<u64>, ConfigError> {
        self.opt_integer(key)?
            .map(|i| u64::try_from(i).map_err(|_| ConfigError::invalid(key, format!("{i} is negative"))))
            .transpose()
    }

    /// Integer >= 0.
    fn count_or(&mut self, key: &'static str, default: usize) -> Result<usize, ConfigError> {
        Ok(self.opt_u64(key)?.map_or(default, |v| v as usize))
    }

    /// Integer >= 1.
    fn opt_usize(&mut self, key: &'static str) -> Result<Option<usize>, ConfigError> {
        match self.opt_u64(key)? {
            Some(0) => Err(ConfigError::invalid(key, "must be at least 1")),
            other => Ok(other.map(|v| v as usize)),
        }
    }

    fn usize(&mut self, key: &'static str) -> Result<usize, ConfigError> {
        self.opt_usize(key)?.ok_or_else(|| ConfigError::invalid(key, "missing"))
    }

    fn usize_or(&mut self, key: &'static str, default: usize) -> Result<usize, ConfigError> {
        Ok(self.opt_usize(key)?.unwrap_or(default))
    }

    fn opt_string(&mut self, key: &'static str) -> Result<Option<String>, ConfigError> {
        self.take(key)?
            .map(|v| match v {
                Value::String(s) => Ok(s.clone()),
                _ => Err(ConfigError::invalid(key, "expected a string")),
            })
            .transpose()
    }

    fn string_or(&mut self, key: &'static str, default: &str) -> Result<String, ConfigError> {
        Ok(self.opt_string(key)?.unwrap_or_else(|| default.to_string()))
    }

    fn finish(self) -> Result<(), ConfigError> {
        match self.table.keys().find(|k| !self.seen.contains(k.as_str())) {
            Some(k) => Err(ConfigError::invalid(k, format!("unknown key in [{}]", self.section))),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const QSD: &str = r#"
[run]
experiment = "qsd"
seed = 3

[parameters]
energies = [0.0, 1.0]
psi0 = [0.6, 0.8]
eta = 0.1
dt = 1e-3
t_max = 1.0
n_trajectories = 10
"#;

    #[test]
    fn fig4_preset_fills_parameters() {
        let cfg = parse_config("[run]\nexperiment = \"preset-fig4\"\nseed = 42\n", None).unwrap();
        assert_eq!(cfg.seed, Some(42));
        let Parameters::Qsd(p) = cfg.parameters else { panic!() };
        assert_eq!(p.eta, 0.25);
        assert_eq!(p.n_trajectories, 10_000);
        assert_eq!(p.system.energies, vec![0.5, 1.5, 2.5]);
        assert_eq!(p.system.collapse, CollapseFamily::Hamiltonian);
    }

    #[test]
    fn every_preset_parses() {
        for e in [Experiment::PresetFig4, Experiment::PresetFig5, Experiment::PresetFig6] {
            preset_config(e).unwrap();
        }
        assert!(preset_config(Experiment::Qsd).is_err());
    }

    #[test]
    fn preset_override() {
        let cfg = parse_config("[parameters]\nn_trajectories = 50\n", Some(Experiment::PresetFig6)).unwrap();
        let Parameters::Cq(p) = cfg.parameters else { panic!() };
        assert_eq!(p.n_trajectories, 50);
        assert_eq!(p.tau, 0.01);
    }

    #[test]
    fn generic_qsd() {
        let cfg = parse_config(QSD, None).unwrap();
        assert_eq!(cfg.experiment, Experiment::Qsd);
        let Parameters::Qsd(p) = cfg.parameters else { panic!() };
        assert_eq!(p.record_stride, 100);
        assert_eq!(p.collapse_epsilon, 1e-3);
    }

    #[test]
    fn missing_eta() {
        let text = QSD.replace("eta = 0.1\n", "");
        assert_eq!(parse_config(&text, None).unwrap_err().key(), Some("eta"));
    }

    #[test]
    fn negative_dt() {
        let text = QSD.replace("dt = 1e-3", "dt = -1e-3");
        assert_eq!(parse_config(&text, None).unwrap_err().key(), Some("dt"));
    }

    #[test]
    fn unknown_key_and_section() {
        let text = format!("{QSD}etta = 2\n");
        assert_eq!(parse_config(&text, None).unwrap_err().key(), Some("etta"));
        let text = format!("{QSD}[extra]\nx = 1\n");
        assert_eq!(parse_config(&text, None).unwrap_err().key(), Some("extra"));
    }

    #[test]
    fn parse_error_has_line() {
        let text = "[run]\nexperiment = \"qsd\"\nseed = = 4\n";
        match parse_config(text, None).unwrap_err() {
            ConfigError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn experiment_conflict() {
        assert_eq!(parse_config(QSD, Some(Experiment::Cq)).unwrap_err().key(), Some("experiment"));
        assert_eq!(parse_config("[run]\nseed = 1\n", None).unwrap_err().key(), Some("experiment"));
    }

    #[test]
    fn psi0_norm_checked() {
        let text = QSD.replace("psi0 = [0.6, 0.8]", "psi0 = [0.6, 0.9]");
        assert_eq!(parse_config(&text, None).unwrap_err().key(), Some("psi0"));
    }

    #[test]
    fn cq_dt_bound() {
        let cfg = "[parameters]\ndt = 0.005\n";
        assert_eq!(parse_config(cfg, Some(Experiment::PresetFig6)).unwrap_err().key(), Some("dt"));
    }

    #[test]
    fn dp_points() {
        let text = "[parameters]\nup = [[0, 0, 0, 1e-26]]\ndown = [[1e-10, 0, 0, 1e-26]]\n";
        let cfg = parse_config(text, Some(Experiment::TimescaleDp)).unwrap();
        let Parameters::Dp(p) = cfg.parameters else { panic!() };
        assert_eq!(p.down[0], [1e-10, 0.0, 0.0, 1e-26]);
        let bad = "[parameters]\nup = [[0, 0, 1e-26]]\ndown = [[1e-10, 0, 0, 1e-26]]\n";
        assert_eq!(parse_config(bad, Some(Experiment::TimescaleDp)).unwrap_err().key(), Some("up"));
    }
}
