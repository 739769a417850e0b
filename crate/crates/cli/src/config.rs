//! TOML configuration documents.
//!
//! ```toml
//! n = 20
//! iters = 10000
//! seed = 42
//! record_every = 10          # or: record_per_decade = 20
//!
//! [density]
//! family = "smooth-bump"     # constant | affine | piecewise-linear | smooth-bump
//! amplitude = 2.0
//! center = 0.5
//! width = 0.1
//!
//! [noise]
//! kind = "uniform"           # uniform | bernoulli | zero
//! m = 0.5
//!
//! [schedule]
//! kind = "hybrid"            # theorem (u) | power (p) | hybrid
//!
//! [init]
//! kind = "all-at-one"        # uniform-random | all-at-one | explicit (positions)
//! ```
//!
//! Unknown keys are rejected, and every error names the offending key.

use std::fmt;
use std::path::Path;

use linecover::{DensityField, InitSpec, NoiseModel, PositionState, Recording, ScheduleSpec, SimConfig};
use toml::{Table, Value};

pub const DEFAULT_RECORD_EVERY: u64 = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub reason: String,
}

impl ConfigError {
    fn new(key: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError {
            key: key.into(),
            reason: reason.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.key.is_empty() {
            write!(f, "{}", self.reason)
        } else if self.reason.starts_with("must") {
            write!(f, "{} {}", self.key, self.reason)
        } else {
            write!(f, "{}: {}", self.key, self.reason)
        }
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

/// One table of the document plus its dotted path, for error messages.
struct Section<'a> {
    path: &'a str,
    table: &'a Table,
}

impl<'a> Section<'a> {
    fn key(&self, k: &str) -> String {
        if self.path.is_empty() {
            k.to_string()
        } else {
            format!("{}.{k}", self.path)
        }
    }

    fn reject_unknown(&self, allowed: &[&str]) -> Result<()> {
        match self.table.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(ConfigError::new(self.key(k), "unknown key")),
            None => Ok(()),
        }
    }

    fn get(&self, k: &str) -> Option<&'a Value> {
        self.table.get(k)
    }

    fn f64(&self, k: &str) -> Result<Option<f64>> {
        match self.get(k) {
            None => Ok(None),
            Some(Value::Float(v)) => Ok(Some(*v)),
            Some(Value::Integer(v)) => Ok(Some(*v as f64)),
            Some(other) => Err(ConfigError::new(self.key(k), format!("expected a number, found {}", other.type_str()))),
        }
    }

    fn req_f64(&self, k: &str) -> Result<f64> {
        self.f64(k)?.ok_or_else(|| ConfigError::new(self.key(k), "missing"))
    }

    fn u64(&self, k: &str) -> Result<Option<u64>> {
        match self.get(k) {
            None => Ok(None),
            Some(Value::Integer(v)) if *v >= 0 => Ok(Some(*v as u64)),
            Some(Value::Integer(v)) => Err(ConfigError::new(self.key(k), format!("must be nonnegative (got {v})"))),
            Some(other) => Err(ConfigError::new(
                self.key(k),
                format!("expected an integer, found {}", other.type_str()),
            )),
        }
    }

    fn req_u64(&self, k: &str) -> Result<u64> {
        self.u64(k)?.ok_or_else(|| ConfigError::new(self.key(k), "missing"))
    }

    fn str(&self, k: &str) -> Result<&'a str> {
        match self.get(k) {
            None => Err(ConfigError::new(self.key(k), "missing")),
            Some(Value::String(s)) => Ok(s),
            Some(other) => Err(ConfigError::new(self.key(k), format!("expected a string, found {}", other.type_str()))),
        }
    }

    fn f64_list(&self, k: &str) -> Result<Vec<f64>> {
        let arr = match self.get(k) {
            None => return Err(ConfigError::new(self.key(k), "missing")),
            Some(Value::Array(a)) => a,
            Some(other) => {
                return Err(ConfigError::new(self.key(k), format!("expected an array, found {}", other.type_str())))
            }
        };
        arr.iter()
            .enumerate()
            .map(|(i, v)| match v {
                Value::Float(x) => Ok(*x),
                Value::Integer(x) => Ok(*x as f64),
                other => Err(ConfigError::new(
                    format!("{}[{i}]", self.key(k)),
                    format!("expected a number, found {}", other.type_str()),
                )),
            })
            .collect()
    }

    fn sub(&self, k: &'a str) -> Result<Option<Section<'a>>> {
        match self.get(k) {
            None => Ok(None),
            Some(Value::Table(t)) => Ok(Some(Section { path: k, table: t })),
            Some(other) => Err(ConfigError::new(self.key(k), format!("expected a table, found {}", other.type_str()))),
        }
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<SimConfig> {
    let table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::new("", format!("malformed document: {}", e.message())))?;
    let root = Section { path: "", table: &table };
    root.reject_unknown(&[
        "n",
        "iters",
        "seed",
        "record_every",
        "record_per_decade",
        "density",
        "noise",
        "schedule",
        "init",
    ])?;

    let n = parse_n(&root)?;
    let iters = root.req_u64("iters")?;
    if iters < 1 {
        return Err(ConfigError::new("iters", "must be at least 1"));
    }
    let seed = root.u64("seed")?.unwrap_or(0);
    let recording = match (root.u64("record_every")?, root.u64("record_per_decade")?) {
        (Some(_), Some(_)) => {
            return Err(ConfigError::new(
                "record_per_decade",
                "cannot be combined with record_every",
            ))
        }
        (Some(0), None) => return Err(ConfigError::new("record_every", "must be at least 1")),
        (None, Some(0)) => return Err(ConfigError::new("record_per_decade", "must be at least 1")),
        (Some(k), None) => Recording::Every(k),
        (None, Some(d)) => Recording::LogSpaced {
            per_decade: u32::try_from(d).map_err(|_| ConfigError::new("record_per_decade", "too large"))?,
        },
        (None, None) => Recording::Every(DEFAULT_RECORD_EVERY),
    };

    let density = root.sub("density")?.ok_or_else(|| ConfigError::new("density", "missing"))?;
    let field = parse_density(&density)?;
    let noise = match root.sub("noise")? {
        Some(s) => parse_noise(&s)?,
        None => NoiseModel::zero(),
    };
    let schedule = root.sub("schedule")?.ok_or_else(|| ConfigError::new("schedule", "missing"))?;
    let schedule = parse_schedule(&schedule, n)?;
    let init = match root.sub("init")? {
        Some(s) => parse_init(&s, n)?,
        None => InitSpec::UniformRandom,
    };

    let config = SimConfig {
        n,
        iters,
        seed,
        field,
        noise,
        schedule,
        init,
        recording,
    };
    config.validate().map_err(|e| ConfigError::new("", e.to_string()))?;
    Ok(config)
}

pub fn load_config(path: &Path) -> std::result::Result<SimConfig, crate::CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| crate::CliError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(parse_config(&text)?)
}

/// Reads only `n` and the density, ignoring the run parameters; used by
/// commands that need the optimal configuration alone.
pub fn parse_problem(text: &str) -> Result<(usize, DensityField)> {
    let table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::new("", format!("malformed document: {}", e.message())))?;
    let root = Section { path: "", table: &table };
    root.reject_unknown(&[
        "n",
        "iters",
        "seed",
        "record_every",
        "record_per_decade",
        "density",
        "noise",
        "schedule",
        "init",
    ])?;
    let n = parse_n(&root)?;
    let density = root.sub("density")?.ok_or_else(|| ConfigError::new("density", "missing"))?;
    Ok((n, parse_density(&density)?))
}

pub fn load_problem(path: &Path) -> std::result::Result<(usize, DensityField), crate::CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| crate::CliError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(parse_problem(&text)?)
}

fn parse_n(root: &Section) -> Result<usize> {
    let n = root.req_u64("n")?;
    if n < 1 {
        return Err(ConfigError::new("n", "must be at least 1"));
    }
    usize::try_from(n).map_err(|_| ConfigError::new("n", "too large"))
}

fn parse_density(s: &Section) -> Result<DensityField> {
    let family = s.str("family")?;
    let (params, field): (&[&str], _) = match family {
        "constant" => (&["level"], DensityField::constant(s.f64("level")?.unwrap_or(1.0))),
        "affine" => (
            &["intercept", "slope"],
            DensityField::affine(s.req_f64("intercept")?, s.req_f64("slope")?),
        ),
        "piecewise-linear" => (
            &["breakpoints", "values"],
            DensityField::piecewise_linear(s.f64_list("breakpoints")?, s.f64_list("values")?),
        ),
        "smooth-bump" => (
            &["amplitude", "center", "width"],
            DensityField::smooth_bump(s.req_f64("amplitude")?, s.req_f64("center")?, s.req_f64("width")?),
        ),
        other => {
            return Err(ConfigError::new(
                s.key("family"),
                format!("unknown family \"{other}\" (expected constant, affine, piecewise-linear or smooth-bump)"),
            ))
        }
    };
    let mut allowed = vec!["family", "rho_max", "rho_prime_sup"];
    allowed.extend_from_slice(params);
    s.reject_unknown(&allowed)?;
    let mut field = field.map_err(|e| ConfigError::new(s.path, e.to_string()))?;
    let (rho_max, slope) = (s.f64("rho_max")?, s.f64("rho_prime_sup")?);
    if rho_max.is_some() || slope.is_some() {
        let (m, d) = (rho_max.unwrap_or(field.rho_max()), slope.unwrap_or(field.rho_prime_sup()));
        field = field.with_declared_bounds(m, d);
    }
    let violations = field.validate();
    if !violations.is_empty() {
        let msg = violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ");
        return Err(ConfigError::new(s.path, msg));
    }
    Ok(field)
}

fn parse_noise(s: &Section) -> Result<NoiseModel> {
    s.reject_unknown(&["kind", "m"])?;
    let kind = s.str("kind")?;
    let m = s.f64("m")?;
    let check_m = |m: f64| {
        if !(m.is_finite() && m >= 0.0) {
            Err(ConfigError::new(s.key("m"), "must be a nonnegative number"))
        } else if m > 1.0 {
            Err(ConfigError::new(s.key("m"), format!("must be ≤ 1 (got {m})")))
        } else {
            Ok(m)
        }
    };
    let model = match kind {
        "uniform" => NoiseModel::uniform(check_m(m.ok_or_else(|| ConfigError::new(s.key("m"), "missing"))?)?),
        "bernoulli" => NoiseModel::bernoulli(check_m(m.ok_or_else(|| ConfigError::new(s.key("m"), "missing"))?)?),
        "zero" => match m {
            None | Some(0.0) => Ok(NoiseModel::zero()),
            Some(_) => return Err(ConfigError::new(s.key("m"), "must be 0 for zero noise")),
        },
        other => {
            return Err(ConfigError::new(
                s.key("kind"),
                format!("unknown noise kind \"{other}\" (expected uniform, bernoulli or zero)"),
            ))
        }
    };
    model.map_err(|e| ConfigError::new(s.key("m"), e.to_string()))
}

fn parse_schedule(s: &Section, n: usize) -> Result<ScheduleSpec> {
    match s.str("kind")? {
        "theorem" => {
            s.reject_unknown(&["kind", "u"])?;
            let u = s.req_u64("u")? as usize;
            if u < n {
                return Err(ConfigError::new(s.key("u"), format!("must be an upper bound on n = {n} (got {u})")));
            }
            Ok(ScheduleSpec::Theorem { u })
        }
        "power" => {
            s.reject_unknown(&["kind", "p"])?;
            let p = s.req_f64("p")?;
            if !(p > 0.5 && p <= 1.0) {
                return Err(ConfigError::new(s.key("p"), format!("must lie in (1/2, 1] (got {p})")));
            }
            Ok(ScheduleSpec::Power { exponent: p })
        }
        "hybrid" => {
            s.reject_unknown(&["kind"])?;
            Ok(ScheduleSpec::Hybrid)
        }
        other => Err(ConfigError::new(
            s.key("kind"),
            format!("unknown schedule \"{other}\" (expected theorem, power or hybrid)"),
        )),
    }
}

fn parse_init(s: &Section, n: usize) -> Result<InitSpec> {
    match s.str("kind")? {
        "uniform-random" => {
            s.reject_unknown(&["kind"])?;
            Ok(InitSpec::UniformRandom)
        }
        "all-at-one" => {
            s.reject_unknown(&["kind"])?;
            Ok(InitSpec::AllAtOne)
        }
        "explicit" => {
            s.reject_unknown(&["kind", "positions"])?;
            let v = s.f64_list("positions")?;
            if v.len() != n {
                return Err(ConfigError::new(
                    s.key("positions"),
                    format!("has {} entries but n = {n}", v.len()),
                ));
            }
            PositionState::new(v.clone()).map_err(|e| ConfigError::new(s.key("positions"), e.to_string()))?;
            Ok(InitSpec::Explicit(v))
        }
        other => Err(ConfigError::new(
            s.key("kind"),
            format!("unknown init \"{other}\" (expected uniform-random, all-at-one or explicit)"),
        )),
    }
}
