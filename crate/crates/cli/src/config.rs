//! Flat `key = value` run configuration.
//!
//! A config file holds strings, numbers and booleans only; tables, arrays and
//! dates are rejected. Command-line flags (`--grid-n` for `grid_n`) override
//! file keys. Every key is declared in [`KEYS`].

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Float,
    Int,
    Bool,
    Str,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::Float => "a number",
            Kind::Int => "a non-negative integer",
            Kind::Bool => "a boolean",
            Kind::Str => "a string",
        })
    }
}

pub struct KeySpec {
    pub name: &'static str,
    pub kind: Kind,
    pub help: &'static str,
}

const fn key(name: &'static str, kind: Kind, help: &'static str) -> KeySpec {
    KeySpec { name, kind, help }
}

pub const KEYS: &[KeySpec] = &[
    key("out", Kind::Str, "output directory"),
    key("seed", Kind::Int, "master seed"),
    key("threads", Kind::Int, "worker threads (0 = one per core)"),
    key("grid_n", Kind::Int, "points per axis"),
    key("grid_l", Kind::Float, "box half-width L"),
    key("refine_n", Kind::Int, "points per axis of the refinement grid (0 = skip)"),
    key("r_outer", Kind::Float, "outer radius of the exterior annulus"),
    key("r_min", Kind::Float, "inner end of a radial fit window"),
    key("eps_in", Kind::Float, "inner radius of the punctured ball"),
    key("t_min", Kind::Float, "first time or coupling of a sweep"),
    key("t_max", Kind::Float, "last time or coupling of a sweep"),
    key("t_step", Kind::Float, "coupling step of a scan"),
    key("t_count", Kind::Int, "number of times in a geometric sweep"),
    key("p", Kind::Float, "exponent p"),
    key("q", Kind::Float, "exponent q"),
    key("k", Kind::Float, "exponent k"),
    key("t", Kind::Float, "weight exponent t, or coupling for nullity"),
    key("s", Kind::Float, "integrability exponent s"),
    key("alpha", Kind::Float, "Besov exponent (negative)"),
    key("potential", Kind::Str, "loss_yau or zero"),
    key("variant", Kind::Str, "dsineq, cor1, cor2 or lemma"),
    key("trials", Kind::Int, "number of seeded trial fields"),
    key("budget", Kind::Int, "objective evaluations of a search"),
    key("samples", Kind::Int, "random points of the algebra sweep"),
    key("field", Kind::Str, "input spinor field file"),
    key("threshold", Kind::Float, "singular-value threshold for nullity"),
    key("tol_algebra", Kind::Float, "Clifford identity tolerance"),
    key("tol_inversion", Kind::Float, "pointwise inversion identity tolerance"),
    key("tol_identity", Kind::Float, "transform identity relative error"),
    key("tol_convergence", Kind::Float, "maximal error ratio under refinement"),
    key("tol_jacobian", Kind::Float, "change-of-variables gap"),
    key("tol_residual", Kind::Float, "zero-mode residual"),
    key("tol_slope", Kind::Float, "decay slope deviation"),
    key("tol_tail", Kind::Float, "extrapolated tail fraction"),
    key("tol_scale", Kind::Float, "ratio scale-invariance deviation"),
    key("tol_refine", Kind::Float, "relative change of the maximal ratio under refinement"),
    key("tol_fit", Kind::Float, "semigroup slope deviation"),
    key("tol_dip", Kind::Float, "dip depth relative to the value at t = 0.5"),
];

pub fn spec(name: &str) -> Option<&'static KeySpec> {
    KEYS.iter().find(|k| k.name == name)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(u64),
    Float(f64),
    Str(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{x}"),
            Value::Str(s) => write!(f, "{s:?}"),
        }
    }
}

/// A configuration problem; maps to exit code 2.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn bad<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

fn coerce_text(name: &str, kind: Kind, text: &str) -> Result<Value, ConfigError> {
    let fail = || bad(format!("key `{name}` expects {kind}, got {text:?}"));
    match kind {
        Kind::Float => match text.trim().parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(Value::Float(x)),
            _ => fail(),
        },
        Kind::Int => text.trim().parse::<u64>().map(Value::Int).or_else(|_| fail()),
        Kind::Bool => text.trim().parse::<bool>().map(Value::Bool).or_else(|_| fail()),
        Kind::Str => Ok(Value::Str(text.to_string())),
    }
}

fn coerce_toml(name: &str, kind: Kind, v: &toml::Value) -> Result<Value, ConfigError> {
    let fail = || bad(format!("key `{name}` expects {kind}, got `{v}`"));
    match (kind, v) {
        (_, toml::Value::Table(_) | toml::Value::Array(_) | toml::Value::Datetime(_)) => {
            bad(format!("key `{name}`: only strings, numbers and booleans are allowed"))
        }
        (Kind::Float, toml::Value::Float(x)) if x.is_finite() => Ok(Value::Float(*x)),
        (Kind::Float, toml::Value::Integer(i)) => Ok(Value::Float(*i as f64)),
        (Kind::Int, toml::Value::Integer(i)) if *i >= 0 => Ok(Value::Int(*i as u64)),
        (Kind::Bool, toml::Value::Boolean(b)) => Ok(Value::Bool(*b)),
        (Kind::Str, toml::Value::String(s)) => Ok(Value::Str(s.clone())),
        _ => fail(),
    }
}

/// Resolved settings: file keys overlaid by flags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, Value>,
}

impl RunConfig {
    pub fn parse_str(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError(format!("config: {}", e.message())))?;
        let mut values = BTreeMap::new();
        for (name, v) in &table {
            let Some(s) = spec(name) else {
                return bad(format!("unknown config key `{name}`"));
            };
            values.insert(name.clone(), coerce_toml(name, s.kind, v)?);
        }
        Ok(RunConfig { values })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("config {}: {e}", path.display())))?;
        Self::parse_str(&text)
    }

    /// Overrides `name` with a flag value given as text.
    pub fn set_text(&mut self, name: &str, text: &str) -> Result<(), ConfigError> {
        let Some(s) = spec(name) else {
            return bad(format!("unknown key `{name}`"));
        };
        self.values.insert(name.to_string(), coerce_text(name, s.kind, text)?);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.values.get(name)
    }

    pub fn values(&self) -> &BTreeMap<String, Value> {
        &self.values
    }

    /// SHA-256 of the canonical JSON of every key except `out`.
    pub fn hash(&self, command: &str, mode: Option<&str>) -> String {
        let mut canon: BTreeMap<&str, Value> = self.values.iter().filter(|(k, _)| *k != "out").map(|(k, v)| (k.as_str(), v.clone())).collect();
        canon.insert("@command", Value::Str(command.into()));
        if let Some(m) = mode {
            canon.insert("@mode", Value::Str(m.into()));
        }
        let bytes = serde_json::to_vec(&canon).expect("config values serialize");
        hex(&Sha256::digest(bytes))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Typed access with per-command defaults. Every value read is recorded, so
/// a report can list the parameters it actually used.
pub struct Params<'a> {
    cfg: &'a RunConfig,
    used: BTreeMap<String, Value>,
}

impl<'a> Params<'a> {
    pub fn new(cfg: &'a RunConfig) -> Self {
        Params { cfg, used: BTreeMap::new() }
    }

    fn lookup(&mut self, name: &str, default: Value) -> Value {
        debug_assert!(spec(name).is_some(), "undeclared key {name}");
        let v = self.cfg.get(name).cloned().unwrap_or(default);
        self.used.insert(name.to_string(), v.clone());
        v
    }

    pub fn f64(&mut self, name: &str, default: f64) -> f64 {
        match self.lookup(name, Value::Float(default)) {
            Value::Float(x) => x,
            Value::Int(i) => i as f64,
            other => unreachable!("key {name} holds {other}"),
        }
    }

    pub fn usize(&mut self, name: &str, default: usize) -> usize {
        match self.lookup(name, Value::Int(default as u64)) {
            Value::Int(i) => i as usize,
            other => unreachable!("key {name} holds {other}"),
        }
    }

    pub fn u64(&mut self, name: &str, default: u64) -> u64 {
        match self.lookup(name, Value::Int(default)) {
            Value::Int(i) => i,
            other => unreachable!("key {name} holds {other}"),
        }
    }

    pub fn string(&mut self, name: &str, default: &str) -> String {
        match self.lookup(name, Value::Str(default.into())) {
            Value::Str(s) => s,
            other => unreachable!("key {name} holds {other}"),
        }
    }

    /// A string key with no default; not recorded when absent.
    pub fn optional_string(&mut self, name: &str) -> Option<String> {
        match self.cfg.get(name)? {
            Value::Str(s) => {
                self.used.insert(name.to_string(), Value::Str(s.clone()));
                Some(s.clone())
            }
            other => unreachable!("key {name} holds {other}"),
        }
    }

    pub fn used(&self) -> &BTreeMap<String, Value> {
        &self.used
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_values() {
        let c = RunConfig::parse_str("grid_n = 32\ngrid_l = 6\npotential = \"loss_yau\"\n").unwrap();
        assert_eq!(c.get("grid_n"), Some(&Value::Int(32)));
        assert_eq!(c.get("grid_l"), Some(&Value::Float(6.0)));
    }

    #[test]
    fn rejects_unknown_and_nested_keys() {
        assert!(RunConfig::parse_str("gridn = 3").unwrap_err().0.contains("`gridn`"));
        assert!(RunConfig::parse_str("[grid]\nn = 3").unwrap_err().0.contains("`grid`"));
        assert!(RunConfig::parse_str("p = [1, 2]").unwrap_err().0.contains("`p`"));
        assert!(RunConfig::parse_str("grid_n = -4").unwrap_err().0.contains("`grid_n`"));
        assert!(RunConfig::parse_str("p = \"two\"").unwrap_err().0.contains("`p`"));
    }

    #[test]
    fn flags_override_and_hash_ignores_out() {
        let mut a = RunConfig::parse_str("p = 2\nout = \"x\"").unwrap();
        let b = RunConfig::parse_str("p = 2\nout = \"y\"").unwrap();
        assert_eq!(a.hash("norms", None), b.hash("norms", None));
        assert_ne!(a.hash("norms", None), a.hash("norms", Some("m")));
        a.set_text("p", "3").unwrap();
        assert_eq!(a.get("p"), Some(&Value::Float(3.0)));
        assert_ne!(a.hash("norms", None), b.hash("norms", None));
        assert!(a.set_text("p", "nan").is_err());
    }

    #[test]
    fn params_record_defaults() {
        let c = RunConfig::parse_str("p = 1.5").unwrap();
        let mut p = Params::new(&c);
        assert_eq!(p.f64("p", 2.0), 1.5);
        assert_eq!(p.usize("grid_n", 32), 32);
        assert_eq!(p.used().len(), 2);
    }
}
