//! Flat run configuration: schema, file and flag parsing, range checks.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use clap::ArgMatches;

pub const COMMANDS: [&str; 8] = [
    "shear",
    "homogeneous",
    "fokker-planck",
    "pgd",
    "rb-offline",
    "rb-online",
    "variance-study",
    "convergence-study",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Float,
    Int,
    Str,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Float(f64),
    Int(u64),
    Str(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Float(x) => write!(f, "{x:?}"),
            Value::Int(n) => write!(f, "{n}"),
            Value::Str(s) => write!(f, "{s:?}"),
        }
    }
}

/// Admissible values of a key, phrased as the precondition of the solver
/// that consumes it.
#[derive(Clone, Copy, Debug)]
pub enum Check {
    Finite,
    Positive(&'static str),
    NonNegative(&'static str),
    OpenUnit(&'static str),
    HalfOpenUnit(&'static str),
    AtLeast(&'static str, u64),
    OneOf(&'static [&'static str]),
    /// Comma-separated subset of the listed words.
    ListOf(&'static [&'static str]),
    Path,
}

impl Check {
    fn describe(&self) -> String {
        match *self {
            Check::Finite => "a finite number".into(),
            Check::Positive(s) => format!("{s} > 0"),
            Check::NonNegative(s) => format!("{s} ≥ 0"),
            Check::OpenUnit(s) => format!("{s} ∈ (0,1)"),
            Check::HalfOpenUnit(s) => format!("{s} ∈ (0,1]"),
            Check::AtLeast(s, n) => format!("{s} ≥ {n}"),
            Check::OneOf(words) => format!("one of {}", words.join(", ")),
            Check::ListOf(words) => format!("a comma-separated list drawn from {}", words.join(", ")),
            Check::Path => "a path".into(),
        }
    }

    fn holds(&self, v: &Value) -> bool {
        match (*self, v) {
            (Check::Finite, Value::Float(x)) => x.is_finite(),
            (Check::Positive(_), Value::Float(x)) => x.is_finite() && *x > 0.0,
            (Check::NonNegative(_), Value::Float(x)) => x.is_finite() && *x >= 0.0,
            (Check::OpenUnit(_), Value::Float(x)) => *x > 0.0 && *x < 1.0,
            (Check::HalfOpenUnit(_), Value::Float(x)) => *x > 0.0 && *x <= 1.0,
            (Check::AtLeast(_, n), Value::Int(k)) => *k >= n,
            (Check::OneOf(words), Value::Str(s)) => words.contains(&s.as_str()),
            (Check::ListOf(words), Value::Str(s)) => !s.is_empty() && s.split(',').all(|w| words.contains(&w.trim())),
            (Check::Path, Value::Str(s)) => !s.is_empty(),
            _ => false,
        }
    }
}

pub struct Key {
    pub name: &'static str,
    pub kind: Kind,
    pub check: Check,
    /// Per-command defaults; `"*"` applies to every command listed in `used_by`.
    /// A key used by a command without a default is optional there.
    defaults: &'static [(&'static str, Lit)],
    pub used_by: &'static [&'static str],
    /// Keys without a default that must be given.
    pub required: bool,
    pub help: &'static str,
}

#[derive(Clone, Copy, Debug)]
enum Lit {
    F(f64),
    I(u64),
    S(&'static str),
}

impl Key {
    fn default_for(&self, command: &str) -> Option<Value> {
        let hit = self
            .defaults
            .iter()
            .find(|(c, _)| *c == command)
            .or_else(|| self.defaults.iter().find(|(c, _)| *c == "*"))?;
        Some(match hit.1 {
            Lit::F(x) => Value::Float(x),
            Lit::I(n) => Value::Int(n),
            Lit::S(s) => Value::Str(s.to_string()),
        })
    }

    pub fn flag(&self) -> String {
        self.name.replace('_', "-")
    }

    pub fn applies_to(&self, command: &str) -> bool {
        self.used_by.contains(&command)
    }
}

const SHEAR_LIKE: &[&str] = &["shear", "variance-study", "convergence-study"];
const FLOW: &[&str] = &["shear", "homogeneous", "variance-study", "convergence-study"];
const WE: &[&str] = &["shear", "homogeneous", "fokker-planck", "rb-offline", "variance-study", "convergence-study"];
const DT: &[&str] = &["shear", "homogeneous", "rb-offline", "variance-study", "convergence-study"];
const MODEL: &[&str] = &["shear", "fokker-planck", "rb-offline", "convergence-study"];
const B: &[&str] = &["shear", "homogeneous", "fokker-planck", "rb-offline", "convergence-study"];
const T_END: &[&str] = &["shear", "homogeneous", "fokker-planck", "variance-study", "convergence-study"];
const KAPPA: &[&str] = &["homogeneous", "fokker-planck"];
const RB_GRID: &[&str] = &["rb-offline"];
const STRATEGIES: &[&str] = &["constant", "iid", "alternating"];

macro_rules! key {
    ($name:literal, $kind:ident, $check:expr, $used:expr, [$($cmd:literal => $lit:expr),*], $help:literal) => {
        Key { name: $name, kind: Kind::$kind, check: $check, defaults: &[$(($cmd, $lit)),*], used_by: $used, required: false, help: $help }
    };
}

pub static SCHEMA: &[Key] = &[
    key!("re", Float, Check::Positive("Re"), FLOW, ["*" => Lit::F(0.1)], "Reynolds number"),
    key!("we", Float, Check::Positive("We"), WE, ["*" => Lit::F(1.0)], "Weissenberg number"),
    key!("eps", Float, Check::OpenUnit("ε"), FLOW, ["*" => Lit::F(0.5)], "polymer viscosity fraction"),
    key!("dt", Float, Check::Positive("δt"), DT, ["rb-offline" => Lit::F(0.002), "shear" => Lit::F(0.001), "*" => Lit::F(0.01)], "time step"),
    key!("t_end", Float, Check::NonNegative("T"), T_END,
        ["homogeneous" => Lit::F(20.0), "variance-study" => Lit::F(2.0), "convergence-study" => Lit::F(0.5), "fokker-planck" => Lit::F(2.0), "*" => Lit::F(5.0)],
        "final time"),
    key!("model", Str, Check::OneOf(&["hookean", "fene"]), MODEL, ["rb-offline" => Lit::S("fene"), "*" => Lit::S("hookean")], "spring force"),
    key!("law", Str, Check::OneOf(&["oldroyd-b", "fene-p", "corotational"]), &["homogeneous"], ["*" => Lit::S("oldroyd-b")], "constitutive law"),
    key!("b", Float, Check::Positive("b"), B, ["*" => Lit::F(9.0)], "FENE extensibility"),
    key!("dy", Float, Check::HalfOpenUnit("Δy"), SHEAR_LIKE, ["shear" => Lit::F(0.03125), "*" => Lit::F(0.125)], "cell size; 1/Δy must be an integer"),
    key!("k", Int, Check::AtLeast("K", 1), SHEAR_LIKE, ["shear" => Lit::I(10_000), "*" => Lit::I(100)], "dumbbells per cell"),
    key!("method", Str, Check::OneOf(&["micro", "macro"]), &["shear"], ["*" => Lit::S("micro")], "CONNFFESSIT or closed-form stress"),
    key!("strategy", Str, Check::OneOf(STRATEGIES), &["shear"], ["*" => Lit::S("iid")], "Brownian correlation across cells"),
    key!("strategies", Str, Check::ListOf(STRATEGIES), &["variance-study"], ["*" => Lit::S("constant,iid,alternating")], "strategies to compare"),
    key!("u_bottom", Float, Check::Finite, SHEAR_LIKE, ["*" => Lit::F(0.0)], "velocity of the wall at y = 0"),
    key!("u_top", Float, Check::Finite, SHEAR_LIKE, ["variance-study" => Lit::F(0.0), "*" => Lit::F(1.0)], "velocity of the wall at y = 1"),
    key!("q_cutoff", Float, Check::Positive("Q cutoff"), &["shear"], [], "optional clamp on the transverse component"),
    key!("every", Int, Check::AtLeast("every", 1), &["shear", "fokker-planck"], ["*" => Lit::I(100)], "output interval in steps"),
    key!("kappa_xx", Float, Check::Finite, KAPPA, ["*" => Lit::F(0.0)], "velocity gradient entry"),
    key!("kappa_xy", Float, Check::Finite, KAPPA, ["homogeneous" => Lit::F(1.0), "*" => Lit::F(0.0)], "velocity gradient entry"),
    key!("kappa_yx", Float, Check::Finite, KAPPA, ["*" => Lit::F(0.0)], "velocity gradient entry"),
    key!("kappa_yy", Float, Check::Finite, KAPPA, ["*" => Lit::F(0.0)], "velocity gradient entry"),
    key!("a0_xx", Float, Check::Finite, &["homogeneous"], [], "initial conformation (default: equilibrium)"),
    key!("a0_xy", Float, Check::Finite, &["homogeneous"], [], "initial conformation (default: equilibrium)"),
    key!("a0_yy", Float, Check::Finite, &["homogeneous"], [], "initial conformation (default: equilibrium)"),
    key!("n", Int, Check::AtLeast("n", 4), &["fokker-planck"], ["*" => Lit::I(100)], "grid cells per axis"),
    key!("initial", Str, Check::OneOf(&["shifted", "uniform"]), &["fokker-planck"], ["*" => Lit::S("shifted")], "initial density"),
    key!("shift", Float, Check::Finite, &["fokker-planck"], ["*" => Lit::F(1.0)], "offset of the shifted Gaussian"),
    key!("dt_fraction", Float, Check::HalfOpenUnit("dt fraction"), &["fokker-planck"], ["*" => Lit::F(0.9)], "fraction of the explicit stability bound"),
    key!("nx", Int, Check::AtLeast("nx", 2), &["pgd"], ["*" => Lit::I(64)], "interior nodes in x"),
    key!("ny", Int, Check::AtLeast("ny", 2), &["pgd"], ["*" => Lit::I(64)], "interior nodes in y"),
    key!("rhs", Str, Check::OneOf(&["constant", "separable", "smooth"]), &["pgd"], ["*" => Lit::S("smooth")], "right-hand side"),
    key!("tol", Float, Check::Positive("tolerance"), &["pgd"], ["*" => Lit::F(1e-8)], "residual tolerance in H⁻¹"),
    key!("n_max", Int, Check::AtLeast("n_max", 1), &["pgd"], ["*" => Lit::I(50)], "maximal number of terms"),
    key!("als_tol", Float, Check::Positive("ALS tolerance"), &["pgd"], ["*" => Lit::F(1e-10)], "inner fixed-point tolerance"),
    key!("als_max", Int, Check::AtLeast("als_max", 1), &["pgd"], ["*" => Lit::I(200)], "inner sweep limit"),
    key!("rate_min", Float, Check::Finite, RB_GRID, ["*" => Lit::F(0.0)], "smallest shear rate of the trial set"),
    key!("rate_max", Float, Check::Finite, RB_GRID, ["*" => Lit::F(1.0)], "largest shear rate of the trial set"),
    key!("n_rates", Int, Check::AtLeast("n_rates", 1), RB_GRID, ["*" => Lit::I(20)], "shear rates in the trial set"),
    key!("elong_min", Float, Check::Finite, RB_GRID, ["*" => Lit::F(-0.1)], "smallest elongation rate of the trial set"),
    key!("elong_max", Float, Check::Finite, RB_GRID, ["*" => Lit::F(0.1)], "largest elongation rate of the trial set"),
    key!("n_elong", Int, Check::AtLeast("n_elong", 1), RB_GRID, ["*" => Lit::I(5)], "elongation rates in the trial set"),
    key!("n_basis", Int, Check::AtLeast("N", 1), RB_GRID, ["*" => Lit::I(20)], "basis size"),
    key!("m_large", Int, Check::AtLeast("M_large", 2), RB_GRID, ["*" => Lit::I(10_000)], "offline samples"),
    key!("steps", Int, Check::AtLeast("steps", 1), RB_GRID, ["*" => Lit::I(500)], "time steps per sample path"),
    key!("m_small", Int, Check::AtLeast("M_small", 2), &["rb-online"], ["*" => Lit::I(100)], "online samples"),
    key!("n_test_rates", Int, Check::AtLeast("n_test_rates", 1), &["rb-online"], ["*" => Lit::I(7)], "test shear rates"),
    key!("n_test_elong", Int, Check::AtLeast("n_test_elong", 1), &["rb-online"], ["*" => Lit::I(3)], "test elongation rates"),
    Key {
        name: "basis_dir",
        kind: Kind::Str,
        check: Check::Path,
        defaults: &[],
        used_by: &["rb-online"],
        required: true,
        help: "output directory of an rb-offline run",
    },
    key!("repeats", Int, Check::AtLeast("repeats", 2), &["variance-study", "convergence-study"], ["variance-study" => Lit::I(200), "*" => Lit::I(4)], "independent replications"),
    key!("resamples", Int, Check::AtLeast("resamples", 10), &["variance-study"], ["*" => Lit::I(2000)], "bootstrap resamples"),
    key!("level", Float, Check::OpenUnit("level"), &["variance-study"], ["*" => Lit::F(0.9)], "two-sided bootstrap interval level"),
    key!("dt_levels", Int, Check::AtLeast("dt_levels", 0), &["convergence-study"], ["*" => Lit::I(4)], "halvings of δt"),
    key!("dy_levels", Int, Check::AtLeast("dy_levels", 0), &["convergence-study"], ["*" => Lit::I(4)], "halvings of Δy"),
    key!("k_levels", Int, Check::AtLeast("k_levels", 0), &["convergence-study"], ["*" => Lit::I(4)], "multiplications of K"),
    key!("k_factor", Int, Check::AtLeast("k_factor", 2), &["convergence-study"], ["*" => Lit::I(4)], "factor between successive K"),
    key!("reference_refinement", Int, Check::AtLeast("refinement", 2), &["convergence-study"], ["*" => Lit::I(16)], "refinement of the reference solution"),
];

pub fn keys_for(command: &str) -> impl Iterator<Item = &'static Key> + '_ {
    SCHEMA.iter().filter(move |k| k.applies_to(command))
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

/// Fully resolved configuration of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: String,
    pub seed: u64,
    pub values: BTreeMap<String, Value>,
}

impl RunConfig {
    fn get(&self, key: &str) -> &Value {
        self.values.get(key).unwrap_or_else(|| panic!("key `{key}` missing for {}", self.command))
    }

    pub fn f(&self, key: &str) -> f64 {
        match self.get(key) {
            Value::Float(x) => *x,
            v => panic!("key `{key}` is not a float: {v}"),
        }
    }

    pub fn opt_f(&self, key: &str) -> Option<f64> {
        self.values.get(key).map(|_| self.f(key))
    }

    pub fn n(&self, key: &str) -> usize {
        match self.get(key) {
            Value::Int(n) => *n as usize,
            v => panic!("key `{key}` is not an integer: {v}"),
        }
    }

    pub fn s(&self, key: &str) -> &str {
        match self.get(key) {
            Value::Str(s) => s,
            v => panic!("key `{key}` is not a string: {v}"),
        }
    }

    /// Flat TOML document that reproduces this configuration.
    pub fn to_toml(&self) -> String {
        let mut out = format!("seed = {}\n", self.seed);
        for (k, v) in &self.values {
            let v = match v {
                Value::Float(x) => toml::Value::Float(*x),
                Value::Int(n) => toml::Value::Integer(*n as i64),
                Value::Str(s) => toml::Value::String(s.clone()),
            };
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        map.insert("seed".into(), self.seed.into());
        for (k, v) in &self.values {
            let v = match v {
                Value::Float(x) => serde_json::Value::from(*x),
                Value::Int(n) => serde_json::Value::from(*n),
                Value::Str(s) => serde_json::Value::from(s.clone()),
            };
            map.insert(k.clone(), v);
        }
        serde_json::Value::Object(map)
    }
}

fn line_of(source: &str, key: &str) -> usize {
    source
        .lines()
        .position(|l| {
            let l = l.trim_start();
            l.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map_or(0, |i| i + 1)
}

fn from_toml(key: &Key, v: &toml::Value) -> Option<Value> {
    match (key.kind, v) {
        (Kind::Float, toml::Value::Float(x)) => Some(Value::Float(*x)),
        (Kind::Float, toml::Value::Integer(n)) => Some(Value::Float(*n as f64)),
        (Kind::Int, toml::Value::Integer(n)) if *n >= 0 => Some(Value::Int(*n as u64)),
        (Kind::Str, toml::Value::String(s)) => Some(Value::Str(s.clone())),
        _ => None,
    }
}

fn from_flag(key: &Key, raw: &str) -> Option<Value> {
    match key.kind {
        Kind::Float => raw.trim().parse().ok().map(Value::Float),
        Kind::Int => raw.trim().parse().ok().map(Value::Int),
        Kind::Str => Some(Value::Str(raw.to_string())),
    }
}

fn kind_name(k: Kind) -> &'static str {
    match k {
        Kind::Float => "a number",
        Kind::Int => "a non-negative integer",
        Kind::Str => "a string",
    }
}

/// Reads the optional file, applies flag overrides and defaults, then
/// checks every value against its precondition.
pub fn parse_config(command: &str, file: Option<&Path>, matches: &ArgMatches, seed_flag: Option<u64>) -> Result<RunConfig, ConfigError> {
    let mut values = BTreeMap::new();
    let mut seed = 0;
    if let Some(path) = file {
        let source = std::fs::read_to_string(path).map_err(|e| err(format!("cannot read {}: {e}", path.display())))?;
        let table: toml::Table = source.parse().map_err(|e| err(format!("{}: {e}", path.display())))?;
        for (name, v) in &table {
            let line = line_of(&source, name);
            if name == "seed" {
                seed = match v {
                    toml::Value::Integer(n) if *n >= 0 => *n as u64,
                    _ => return Err(err(format!("{}:{line}: `seed` must be a non-negative integer", path.display()))),
                };
                continue;
            }
            let key = keys_for(command)
                .find(|k| k.name == name)
                .ok_or_else(|| err(format!("{}:{line}: unknown key `{name}` for `{command}`", path.display())))?;
            let parsed = from_toml(key, v).ok_or_else(|| err(format!("{}:{line}: `{name}` must be {}", path.display(), kind_name(key.kind))))?;
            values.insert(name.clone(), parsed);
        }
    }
    for key in keys_for(command) {
        if let Some(raw) = matches.get_one::<String>(key.name) {
            let parsed = from_flag(key, raw).ok_or_else(|| err(format!("flag --{}: `{raw}` is not {}", key.flag(), kind_name(key.kind))))?;
            values.insert(key.name.to_string(), parsed);
        }
    }
    if let Some(s) = seed_flag {
        seed = s;
    }
    for key in keys_for(command) {
        if !values.contains_key(key.name) {
            if let Some(d) = key.default_for(command) {
                values.insert(key.name.to_string(), d);
            } else if key.required {
                return Err(err(format!("missing required key `{}` (--{})", key.name, key.flag())));
            }
        }
        if let Some(v) = values.get(key.name) {
            if !key.check.holds(v) {
                return Err(err(format!("range error: {} = {v} violates {}", key.name, key.check.describe())));
            }
        }
    }
    Ok(RunConfig {
        command: command.to_string(),
        seed,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_command_default_passes_its_checks() {
        for cmd in COMMANDS {
            for key in keys_for(cmd) {
                if let Some(d) = key.default_for(cmd) {
                    assert!(key.check.holds(&d), "{cmd}: {} = {d}", key.name);
                }
            }
        }
    }

    #[test]
    fn schema_names_are_unique() {
        let mut names: Vec<_> = SCHEMA.iter().map(|k| k.name).collect();
        names.sort();
        let n = names.len();
        names.dedup();
        assert_eq!(n, names.len());
    }

    #[test]
    fn line_lookup() {
        assert_eq!(line_of("a = 1\n  eps=2\n", "eps"), 2);
        assert_eq!(line_of("epsilon = 1\n", "eps"), 0);
    }
}
