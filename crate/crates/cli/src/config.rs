//! Key-value run configuration with dotted section names.
//!
//! ```text
//! model.nu = 0.1
//! model.kernel = geometric(0.05, 0.5)
//! model.marks = exponential(0.3)
//! simulation.horizon = 10000
//! simulation.n_paths = 10000
//! simulation.master_seed = 42
//! ```
//!
//! Unknown keys are errors, every parse failure is addressed by line, and
//! command-line flags override file values which override defaults.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use dthawkes::model::{ExcitationKernel, MarkDistribution, ModelParams};
use dthawkes::simulate::{RecordMode, SeolParams, SimulationConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("config line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("config: {0}")]
    Invalid(String),
    #[error("config: missing required key '{0}'")]
    MissingKey(&'static str),
}

fn line_error(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError::Line {
        line,
        message: message.into(),
    }
}

/// Which verification checks to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckSet {
    pub lln: bool,
    pub clt: bool,
    pub martingale: bool,
    pub lindeberg: bool,
    pub tail_condition: bool,
}

impl CheckSet {
    pub fn all() -> Self {
        Self {
            lln: true,
            clt: true,
            martingale: true,
            lindeberg: true,
            tail_condition: true,
        }
    }

    fn none() -> Self {
        Self {
            lln: false,
            clt: false,
            martingale: false,
            lindeberg: false,
            tail_condition: false,
        }
    }

    fn canonical(&self) -> String {
        let mut names = Vec::new();
        if self.lln {
            names.push("lln");
        }
        if self.clt {
            names.push("clt");
        }
        if self.martingale {
            names.push("martingale");
        }
        if self.lindeberg {
            names.push("lindeberg");
        }
        if self.tail_condition {
            names.push("tail_condition");
        }
        names.join(",")
    }
}

/// Command-line overrides; flags beat file values.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub significance: Option<f64>,
    pub no_timestamp: bool,
    /// Replace the CLT target variance for the count statistic (power
    /// checks: a wrong variance must fail the KS test).
    pub sigma2_counts: Option<f64>,
    pub sigma2_marks: Option<f64>,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub nu: Option<f64>,
    pub kernel: Option<ExcitationKernel>,
    pub marks: Option<MarkDistribution>,
    pub horizon: Option<usize>,
    pub n_paths: Option<usize>,
    pub master_seed: Option<u64>,
    pub record_mode: RecordMode,
    pub truncation: Option<usize>,
    pub workers: Option<usize>,
    pub significance: f64,
    pub bins: usize,
    pub checks: CheckSet,
    pub out_dir: PathBuf,
    pub csv_outputs: bool,
    pub json_outputs: bool,
    pub seol_alpha0: Option<f64>,
    pub oracle_z_cap: u64,
    pub oracle_n_mc: usize,
    pub emit_timestamp: bool,
    pub sigma2_counts_override: Option<f64>,
    pub sigma2_marks_override: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            nu: None,
            kernel: None,
            marks: None,
            horizon: None,
            n_paths: None,
            master_seed: None,
            record_mode: RecordMode::TerminalOnly,
            truncation: None,
            workers: None,
            significance: 0.01,
            bins: 50,
            checks: CheckSet::all(),
            out_dir: PathBuf::from("out"),
            csv_outputs: true,
            json_outputs: true,
            seol_alpha0: None,
            oracle_z_cap: 10,
            oracle_n_mc: 1_000_000,
            emit_timestamp: true,
            sigma2_counts_override: None,
            sigma2_marks_override: None,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path, overrides: &Overrides) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::from_str_and_overrides(&text, overrides)
    }

    pub fn from_str_and_overrides(text: &str, overrides: &Overrides) -> Result<Self, ConfigError> {
        let mut config = Self::default();
        for (index, raw) in text.lines().enumerate() {
            let line_no = index + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| line_error(line_no, format!("expected 'key = value', got '{line}'")))?;
            config.apply(key.trim(), value.trim(), line_no)?;
        }
        config.apply_overrides(overrides);
        Ok(config)
    }

    fn apply(&mut self, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
        match key {
            "model.nu" => self.nu = Some(parse_f64(value, line)?),
            "model.kernel" => self.kernel = Some(parse_kernel(value, line)?),
            "model.marks" => self.marks = Some(parse_marks(value, line)?),
            "simulation.horizon" => self.horizon = Some(parse_usize(value, line)?),
            "simulation.n_paths" => self.n_paths = Some(parse_usize(value, line)?),
            "simulation.master_seed" => self.master_seed = Some(parse_u64(value, line)?),
            "simulation.record_mode" => {
                self.record_mode = match value {
                    "terminal_only" => RecordMode::TerminalOnly,
                    "full_series" => RecordMode::FullSeries,
                    other => {
                        return Err(line_error(
                            line,
                            format!("record_mode must be terminal_only or full_series, got '{other}'"),
                        ))
                    }
                }
            }
            "simulation.truncation" => self.truncation = Some(parse_usize(value, line)?),
            "simulation.workers" => self.workers = Some(parse_usize(value, line)?),
            "verification.significance" => {
                let s = parse_f64(value, line)?;
                if !(0.0..1.0).contains(&s) || s == 0.0 {
                    return Err(line_error(line, format!("significance must lie in (0, 1), got {s}")));
                }
                self.significance = s;
            }
            "verification.bins" => self.bins = parse_usize(value, line)?,
            "verification.checks" => self.checks = parse_checks(value, line)?,
            "output.directory" => self.out_dir = PathBuf::from(value),
            "output.formats" => {
                self.csv_outputs = false;
                self.json_outputs = false;
                for format in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    match format {
                        "csv" => self.csv_outputs = true,
                        "json" => self.json_outputs = true,
                        other => {
                            return Err(line_error(
                                line,
                                format!("formats must be csv and/or json, got '{other}'"),
                            ))
                        }
                    }
                }
            }
            "seol.alpha0" => self.seol_alpha0 = Some(parse_f64(value, line)?),
            "oracle.z_cap" => self.oracle_z_cap = parse_u64(value, line)?,
            "oracle.n_mc" => self.oracle_n_mc = parse_usize(value, line)?,
            other => return Err(line_error(line, format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    fn apply_overrides(&mut self, overrides: &Overrides) {
        if let Some(seed) = overrides.seed {
            self.master_seed = Some(seed);
        }
        if let Some(workers) = overrides.workers {
            self.workers = Some(workers);
        }
        if let Some(out) = &overrides.out {
            self.out_dir = out.clone();
        }
        if let Some(significance) = overrides.significance {
            self.significance = significance;
        }
        if overrides.no_timestamp {
            self.emit_timestamp = false;
        }
        self.sigma2_counts_override = overrides.sigma2_counts;
        self.sigma2_marks_override = overrides.sigma2_marks;
    }

    /// Model section materialized; all three keys are required.
    pub fn model_params(&self) -> Result<ModelParams, CommandSetupError> {
        let nu = self.nu.ok_or(ConfigError::MissingKey("model.nu"))?;
        let kernel = self
            .kernel
            .clone()
            .ok_or(ConfigError::MissingKey("model.kernel"))?;
        let marks = self
            .marks
            .clone()
            .ok_or(ConfigError::MissingKey("model.marks"))?;
        Ok(ModelParams::new(nu, kernel, marks)?)
    }

    /// Simulation section materialized.
    pub fn simulation_config(&self) -> Result<SimulationConfig, CommandSetupError> {
        let horizon = self
            .horizon
            .ok_or(ConfigError::MissingKey("simulation.horizon"))?;
        let n_paths = self
            .n_paths
            .ok_or(ConfigError::MissingKey("simulation.n_paths"))?;
        let master_seed = self
            .master_seed
            .ok_or(ConfigError::MissingKey("simulation.master_seed"))?;
        Ok(SimulationConfig::new(
            horizon,
            n_paths,
            master_seed,
            self.record_mode,
            self.truncation,
        )?)
    }

    /// Baseline section: alpha0 plus the model kernel.
    pub fn seol_params(&self) -> Result<SeolParams, CommandSetupError> {
        let alpha0 = self
            .seol_alpha0
            .ok_or(ConfigError::MissingKey("seol.alpha0"))?;
        let kernel = self
            .kernel
            .clone()
            .ok_or(ConfigError::MissingKey("model.kernel"))?;
        Ok(SeolParams::new(alpha0, kernel)?)
    }

    /// Canonical `key=value` listing of the resolved configuration; the
    /// config hash in every JSON document is the SHA-256 of this text.
    pub fn canonical(&self) -> String {
        let mut entries: BTreeMap<&'static str, String> = BTreeMap::new();
        if let Some(nu) = self.nu {
            entries.insert("model.nu", format_f64(nu));
        }
        if let Some(kernel) = &self.kernel {
            entries.insert("model.kernel", canonical_kernel(kernel));
        }
        if let Some(marks) = &self.marks {
            entries.insert("model.marks", canonical_marks(marks));
        }
        if let Some(horizon) = self.horizon {
            entries.insert("simulation.horizon", horizon.to_string());
        }
        if let Some(n_paths) = self.n_paths {
            entries.insert("simulation.n_paths", n_paths.to_string());
        }
        if let Some(seed) = self.master_seed {
            entries.insert("simulation.master_seed", seed.to_string());
        }
        entries.insert(
            "simulation.record_mode",
            match self.record_mode {
                RecordMode::TerminalOnly => "terminal_only".into(),
                RecordMode::FullSeries => "full_series".into(),
            },
        );
        if let Some(truncation) = self.truncation {
            entries.insert("simulation.truncation", truncation.to_string());
        }
        entries.insert("verification.significance", format_f64(self.significance));
        entries.insert("verification.bins", self.bins.to_string());
        entries.insert("verification.checks", self.checks.canonical());
        if let Some(alpha0) = self.seol_alpha0 {
            entries.insert("seol.alpha0", format_f64(alpha0));
        }
        entries.insert("oracle.z_cap", self.oracle_z_cap.to_string());
        entries.insert("oracle.n_mc", self.oracle_n_mc.to_string());
        if let Some(sigma2) = self.sigma2_counts_override {
            entries.insert("override.sigma2_counts", format_f64(sigma2));
        }
        if let Some(sigma2) = self.sigma2_marks_override {
            entries.insert("override.sigma2_marks", format_f64(sigma2));
        }
        let mut out = String::new();
        for (key, value) in entries {
            let _ = writeln!(out, "{key}={value}");
        }
        out
    }

    pub fn config_hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().fold(String::new(), |mut acc, byte| {
            let _ = write!(acc, "{byte:02x}");
            acc
        })
    }
}

/// Setup failures: either the config is malformed or the parameters fall
/// outside the model's admissible region.
#[derive(Debug, Error)]
pub enum CommandSetupError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] dthawkes::model::ModelError),
    #[error(transparent)]
    Sim(#[from] dthawkes::simulate::SimError),
}

/// 17 significant digits: enough for exact f64 round trips.
pub fn format_f64(value: f64) -> String {
    format!("{value:.16e}")
}

fn parse_f64(value: &str, line: usize) -> Result<f64, ConfigError> {
    value
        .parse()
        .map_err(|_| line_error(line, format!("expected a number, got '{value}'")))
}

fn parse_u64(value: &str, line: usize) -> Result<u64, ConfigError> {
    value
        .parse()
        .map_err(|_| line_error(line, format!("expected an unsigned integer, got '{value}'")))
}

fn parse_usize(value: &str, line: usize) -> Result<usize, ConfigError> {
    value
        .parse()
        .map_err(|_| line_error(line, format!("expected an unsigned integer, got '{value}'")))
}

// "name(arg, arg, ...)" -> (name, args split on top-level commas)
fn parse_call<'a>(value: &'a str, line: usize) -> Result<(&'a str, Vec<&'a str>), ConfigError> {
    let open = value
        .find('(')
        .ok_or_else(|| line_error(line, format!("expected 'name(...)', got '{value}'")))?;
    if !value.ends_with(')') {
        return Err(line_error(line, format!("missing closing ')' in '{value}'")));
    }
    let name = value[..open].trim();
    let inner = &value[open + 1..value.len() - 1];
    let mut args = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    for (i, c) in inner.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth = depth
                    .checked_sub(1)
                    .ok_or_else(|| line_error(line, format!("unbalanced parentheses in '{value}'")))?
            }
            ',' if depth == 0 => {
                args.push(inner[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err(line_error(line, format!("unbalanced parentheses in '{value}'")));
    }
    let last = inner[start..].trim();
    if !last.is_empty() {
        args.push(last);
    }
    Ok((name, args))
}

fn parse_kernel(value: &str, line: usize) -> Result<ExcitationKernel, ConfigError> {
    if value == "zero" {
        return Ok(ExcitationKernel::zero());
    }
    let (name, args) = parse_call(value, line)?;
    let kernel = match name {
        "geometric" => {
            if args.len() != 2 {
                return Err(line_error(line, "geometric(weight, ratio) takes two arguments"));
            }
            ExcitationKernel::geometric(parse_f64(args[0], line)?, parse_f64(args[1], line)?)
        }
        "powerlaw" => {
            if args.len() != 2 {
                return Err(line_error(line, "powerlaw(scale, exponent) takes two arguments"));
            }
            ExcitationKernel::power_law(parse_f64(args[0], line)?, parse_f64(args[1], line)?)
        }
        "table" => {
            let values = args
                .iter()
                .map(|a| parse_f64(a, line))
                .collect::<Result<Vec<_>, _>>()?;
            ExcitationKernel::table(values)
        }
        other => {
            return Err(line_error(
                line,
                format!("unknown kernel '{other}' (expected geometric, powerlaw, table, or zero)"),
            ))
        }
    };
    kernel.map_err(|e| line_error(line, e.to_string()))
}

fn parse_marks(value: &str, line: usize) -> Result<MarkDistribution, ConfigError> {
    let (name, args) = parse_call(value, line)?;
    let marks = match name {
        "constant" => {
            if args.len() != 1 {
                return Err(line_error(line, "constant(value) takes one argument"));
            }
            MarkDistribution::constant(parse_f64(args[0], line)?)
        }
        "exponential" => {
            if args.len() != 1 {
                return Err(line_error(line, "exponential(rate) takes one argument"));
            }
            MarkDistribution::exponential(parse_f64(args[0], line)?)
        }
        "discrete" => {
            let atoms = args
                .iter()
                .map(|atom| {
                    let (_, pair) = parse_call(atom, line)?;
                    if pair.len() != 2 {
                        return Err(line_error(line, "discrete atoms are (value, probability)"));
                    }
                    Ok((parse_f64(pair[0], line)?, parse_f64(pair[1], line)?))
                })
                .collect::<Result<Vec<_>, _>>()?;
            MarkDistribution::discrete_table(atoms)
        }
        other => {
            return Err(line_error(
                line,
                format!("unknown marks '{other}' (expected constant, exponential, or discrete)"),
            ))
        }
    };
    marks.map_err(|e| line_error(line, e.to_string()))
}

fn parse_checks(value: &str, line: usize) -> Result<CheckSet, ConfigError> {
    if value == "all" {
        return Ok(CheckSet::all());
    }
    let mut checks = CheckSet::none();
    for name in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match name {
            "lln" => checks.lln = true,
            "clt" => checks.clt = true,
            "martingale" => checks.martingale = true,
            "lindeberg" => checks.lindeberg = true,
            "tail_condition" => checks.tail_condition = true,
            other => {
                return Err(line_error(
                    line,
                    format!(
                        "unknown check '{other}' (expected lln, clt, martingale, lindeberg, tail_condition, or all)"
                    ),
                ))
            }
        }
    }
    Ok(checks)
}

fn canonical_kernel(kernel: &ExcitationKernel) -> String {
    match kernel {
        ExcitationKernel::Geometric { weight, ratio } => {
            format!("geometric({},{})", format_f64(*weight), format_f64(*ratio))
        }
        ExcitationKernel::PowerLaw { scale, exponent } => {
            format!("powerlaw({},{})", format_f64(*scale), format_f64(*exponent))
        }
        ExcitationKernel::Table { values } => {
            let body: Vec<String> = values.iter().map(|v| format_f64(*v)).collect();
            format!("table({})", body.join(","))
        }
    }
}

fn canonical_marks(marks: &MarkDistribution) -> String {
    match marks {
        MarkDistribution::Constant { value } => format!("constant({})", format_f64(*value)),
        MarkDistribution::Exponential { rate } => format!("exponential({})", format_f64(*rate)),
        MarkDistribution::DiscreteTable { atoms } => {
            let body: Vec<String> = atoms
                .iter()
                .map(|(v, p)| format!("({},{})", format_f64(*v), format_f64(*p)))
                .collect();
            format!("discrete({})", body.join(","))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PRESET: &str = "\
# paper-scale preset
model.nu = 0.1
model.kernel = geometric(0.05, 0.5)
model.marks = exponential(0.3)
simulation.horizon = 10000
simulation.n_paths = 10000
simulation.master_seed = 42
verification.significance = 0.01
output.directory = out
";

    #[test]
    fn parses_the_preset() {
        let config = RunConfig::from_str_and_overrides(PRESET, &Overrides::default()).unwrap();
        let params = config.model_params().unwrap();
        assert_eq!(params.nu(), 0.1);
        assert!((params.branching_ratio() - 1.0 / 3.0).abs() < 1e-12);
        let sim = config.simulation_config().unwrap();
        assert_eq!((sim.horizon, sim.n_paths, sim.master_seed), (10_000, 10_000, 42));
        assert_eq!(sim.record_mode, RecordMode::TerminalOnly);
    }

    #[test]
    fn unknown_keys_are_line_addressed_errors() {
        let text = "model.nu = 0.1\nmodel.kernle = zero\n";
        let err = RunConfig::from_str_and_overrides(text, &Overrides::default()).unwrap_err();
        assert_eq!(
            err,
            ConfigError::Line {
                line: 2,
                message: "unknown key 'model.kernle'".into()
            }
        );
    }

    #[test]
    fn value_errors_carry_their_line() {
        let text = "\nmodel.nu = fast\n";
        let err = RunConfig::from_str_and_overrides(text, &Overrides::default()).unwrap_err();
        assert!(matches!(err, ConfigError::Line { line: 2, .. }));
    }

    #[test]
    fn parses_every_kernel_and_mark_syntax() {
        for (kernel_text, expect) in [
            ("zero", ExcitationKernel::zero()),
            ("table()", ExcitationKernel::zero()),
            ("table(0.3, 0.1)", ExcitationKernel::table(vec![0.3, 0.1]).unwrap()),
            ("powerlaw(0.2, 2.5)", ExcitationKernel::power_law(0.2, 2.5).unwrap()),
        ] {
            let text = format!("model.kernel = {kernel_text}\n");
            let config = RunConfig::from_str_and_overrides(&text, &Overrides::default()).unwrap();
            assert_eq!(config.kernel.unwrap(), expect, "{kernel_text}");
        }
        let text = "model.marks = discrete((1, 0.5), (3, 0.5))\n";
        let config = RunConfig::from_str_and_overrides(text, &Overrides::default()).unwrap();
        assert_eq!(
            config.marks.unwrap(),
            MarkDistribution::discrete_table(vec![(1.0, 0.5), (3.0, 0.5)]).unwrap()
        );
    }

    #[test]
    fn flags_override_file_values() {
        let overrides = Overrides {
            seed: Some(7),
            workers: Some(2),
            out: Some(PathBuf::from("elsewhere")),
            significance: Some(0.05),
            no_timestamp: true,
            ..Overrides::default()
        };
        let config = RunConfig::from_str_and_overrides(PRESET, &overrides).unwrap();
        assert_eq!(config.master_seed, Some(7));
        assert_eq!(config.workers, Some(2));
        assert_eq!(config.out_dir, PathBuf::from("elsewhere"));
        assert_eq!(config.significance, 0.05);
        assert!(!config.emit_timestamp);
    }

    #[test]
    fn config_hash_tracks_resolved_values() {
        let base = RunConfig::from_str_and_overrides(PRESET, &Overrides::default()).unwrap();
        let same = RunConfig::from_str_and_overrides(PRESET, &Overrides::default()).unwrap();
        assert_eq!(base.config_hash(), same.config_hash());
        let reseeded = RunConfig::from_str_and_overrides(
            PRESET,
            &Overrides {
                seed: Some(1),
                ..Overrides::default()
            },
        )
        .unwrap();
        assert_ne!(base.config_hash(), reseeded.config_hash());
    }

    #[test]
    fn unstable_model_is_reported_as_model_error() {
        let text = "\
model.nu = 0.1
model.kernel = geometric(0.5, 0.5)
model.marks = constant(1)
";
        let config = RunConfig::from_str_and_overrides(text, &Overrides::default()).unwrap();
        let err = config.model_params().unwrap_err();
        assert!(matches!(
            err,
            CommandSetupError::Model(dthawkes::model::ModelError::UnstableModel { .. })
        ));
    }

    #[test]
    fn checks_lists_parse() {
        let text = "verification.checks = lln, clt\n";
        let config = RunConfig::from_str_and_overrides(text, &Overrides::default()).unwrap();
        assert!(config.checks.lln && config.checks.clt);
        assert!(!config.checks.martingale && !config.checks.lindeberg);
    }
}
