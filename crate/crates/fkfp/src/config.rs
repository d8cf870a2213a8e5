//! Flat key = value run configuration with a fixed schema.
//!
//! Resolution order: defaults, then a config file, then command-line overrides.
//! Unknown keys and values that fail their type check are configuration errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::{Coords, DerivFrame, GridPolicy};
use crate::symbol::FracParam;

/// Environment variable that may override `out_dir` (and nothing else).
pub const OUT_DIR_ENV: &str = "FKFP_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Real,
    Count,
    Flag,
    Text,
    Coords,
    Frame,
    Points,
}

pub struct Key {
    pub name: &'static str,
    pub kind: Kind,
    pub default: &'static str,
    pub help: &'static str,
}

macro_rules! key {
    ($n:literal, $k:ident, $d:literal, $h:literal) => {
        Key { name: $n, kind: Kind::$k, default: $d, help: $h }
    };
}

pub const SCHEMA: &[Key] = &[
    key!("s", Real, "0.5", "fractional order in (0, 1]"),
    key!("t", Real, "1", "time of the table; for the envelope command the time of the rescaled audit"),
    key!("b1", Count, "0", "x-derivative order"),
    key!("b2", Count, "0", "v-derivative order"),
    key!("eps", Real, "0", "envelope epsilon; 0 selects 0.1 min(s, 1 - s)"),
    key!("coords", Coords, "physical", "table coordinates: physical or sheared"),
    key!("frame", Frame, "sheared", "derivative frame: sheared or physical"),
    key!("n", Count, "0", "lattice size; 0 lets the grid policy choose"),
    key!("radius", Real, "0", "frequency radius when n is set"),
    key!("window", Real, "20", "physical half-window the table must cover"),
    key!("extent_factor", Real, "2", "period over twice the largest coordinate"),
    key!("truncation_tol", Real, "1e-12", "largest admissible boundary multiplier"),
    key!("mass_tol", Real, "1e-6", "allowed mass defect of a kernel table"),
    key!("n_max", Count, "4096", "largest lattice size the policy may choose"),
    key!("taper_fraction", Real, "0.5", "taper width when the size cap binds"),
    key!("quad_tol", Real, "1e-8", "refinement tolerance of the quadrature oracle"),
    key!("block_tol", Real, "1e-5", "error budget of dyadic block sums"),
    key!("max_order", Count, "3", "largest total derivative order in symbol audits"),
    key!("r_min", Real, "0.1", "smallest audit radius"),
    key!("r_max", Real, "100", "largest audit radius"),
    key!("per_decade", Count, "8", "audit samples per decade"),
    key!("points", Points, "1:1,1:4,4:1,-2:1.5", "sheared evaluation points x:w separated by commas"),
    key!("negative_control", Flag, "false", "audit against the tightened envelope"),
    key!("t_final", Real, "1", "evolution end time"),
    key!("n_steps", Count, "0", "evolution steps; 0 picks the fewest admissible"),
    key!("dealias", Flag, "false", "apply the two-thirds mask while evolving"),
    key!("init", Text, "delta", "initial data: delta, gaussian, zero or a table path stem"),
    key!("snap_every", Count, "0", "write a snapshot every this many steps; 0 writes the last only"),
    key!("out_dir", Text, "out", "output directory"),
    key!("prefix", Text, "fkfp", "output file prefix"),
];

fn schema(name: &str) -> Option<&'static Key> {
    SCHEMA.iter().find(|k| k.name == name)
}

fn check_value(key: &Key, value: &str) -> Result<()> {
    let bad = |what: &str| Error::Config(format!("{}: expected {what}, got {value:?}", key.name));
    match key.kind {
        Kind::Real => {
            let v: f64 = value.parse().map_err(|_| bad("a real number"))?;
            if !v.is_finite() {
                return Err(bad("a finite real number"));
            }
        }
        Kind::Count => {
            value.parse::<usize>().map_err(|_| bad("a non-negative integer"))?;
        }
        Kind::Flag => {
            value.parse::<bool>().map_err(|_| bad("true or false"))?;
        }
        Kind::Text => {
            if value.is_empty() {
                return Err(bad("a non-empty string"));
            }
        }
        Kind::Coords => {
            value.parse::<Coords>()?;
        }
        Kind::Frame => {
            value.parse::<DerivFrame>()?;
        }
        Kind::Points => {
            parse_points(value).map_err(|_| bad("points x:w separated by commas"))?;
        }
    }
    Ok(())
}

fn parse_points(value: &str) -> Result<Vec<(f64, f64)>> {
    value
        .split(',')
        .map(|p| {
            let (a, b) = p.trim().split_once(':').ok_or_else(|| Error::Config(format!("bad point {p:?}")))?;
            let x: f64 = a.trim().parse().map_err(|_| Error::Config(format!("bad point {p:?}")))?;
            let w: f64 = b.trim().parse().map_err(|_| Error::Config(format!("bad point {p:?}")))?;
            Ok((x, w))
        })
        .collect()
}

/// Parses `key = value` lines; blank lines and `#` comments are ignored.
pub fn parse_file_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {raw:?}", no + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// A fully resolved configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { values: SCHEMA.iter().map(|k| (k.name.to_string(), k.default.to_string())).collect() }
    }
}

impl RunConfig {
    /// Sets one key after checking it against the schema.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let k = schema(key).ok_or_else(|| Error::Config(format!("unknown configuration key {key:?}")))?;
        check_value(k, value)?;
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Defaults, then the file (if any), then the overrides, then the output-directory variable.
    pub fn resolve(file: Option<&Path>, overrides: &[(String, String)], env_out_dir: Option<String>) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(p) = file {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
            for (k, v) in parse_file_text(&text)? {
                cfg.set(&k, &v)?;
            }
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        if let Some(d) = env_out_dir.filter(|d| !d.is_empty()) {
            cfg.set("out_dir", &d)?;
        }
        cfg.fp()?;
        Ok(cfg)
    }

    /// The resolved key-value map, echoed into outputs.
    pub fn resolved(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("key {key} is not in the schema"))
    }

    pub fn real(&self, key: &str) -> f64 {
        self.raw(key).parse().expect("validated on set")
    }

    pub fn count(&self, key: &str) -> usize {
        self.raw(key).parse().expect("validated on set")
    }

    pub fn order(&self, key: &str) -> Result<u32> {
        u32::try_from(self.count(key)).map_err(|_| Error::Config(format!("{key} is too large")))
    }

    pub fn flag(&self, key: &str) -> bool {
        self.raw(key).parse().expect("validated on set")
    }

    pub fn text(&self, key: &str) -> &str {
        self.raw(key)
    }

    pub fn coords(&self) -> Coords {
        self.raw("coords").parse().expect("validated on set")
    }

    pub fn frame(&self) -> DerivFrame {
        self.raw("frame").parse().expect("validated on set")
    }

    pub fn points(&self) -> Vec<(f64, f64)> {
        parse_points(self.raw("points")).expect("validated on set")
    }

    pub fn fp(&self) -> Result<FracParam> {
        FracParam::new(self.real("s"))
    }

    pub fn grid_policy(&self) -> GridPolicy {
        GridPolicy {
            window: self.real("window"),
            extent_factor: self.real("extent_factor"),
            truncation_tol: self.real("truncation_tol"),
            n_max: self.count("n_max"),
            taper_fraction: self.real("taper_fraction"),
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.text("out_dir"))
    }

    /// Output path stem `<out_dir>/<prefix>_<name>`.
    pub fn stem(&self, name: &str) -> PathBuf {
        self.out_dir().join(format!("{}_{name}", self.text("prefix")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kv(k: &str, v: &str) -> (String, String) {
        (k.to_string(), v.to_string())
    }

    #[test]
    fn defaults_validate() {
        for k in SCHEMA {
            check_value(k, k.default).unwrap();
        }
        let c = RunConfig::resolve(None, &[], None).unwrap();
        assert_eq!(c.real("s"), 0.5);
        assert_eq!(c.points().len(), 4);
    }

    #[test]
    fn precedence_flags_over_file_over_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.cfg");
        std::fs::write(&p, "# comment\ns = 0.25\nwindow = 10 # trailing\n").unwrap();
        let c = RunConfig::resolve(Some(&p), &[kv("s", "0.75")], Some("elsewhere".into())).unwrap();
        assert_eq!(c.real("s"), 0.75);
        assert_eq!(c.real("window"), 10.0);
        assert_eq!(c.text("out_dir"), "elsewhere");
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(RunConfig::resolve(None, &[kv("sigma", "1")], None).unwrap_err().is_config());
        assert!(RunConfig::resolve(None, &[kv("n", "-3")], None).unwrap_err().is_config());
        assert!(RunConfig::resolve(None, &[kv("coords", "polar")], None).unwrap_err().is_config());
        assert!(RunConfig::resolve(None, &[kv("points", "1;2")], None).unwrap_err().is_config());
        assert!(RunConfig::resolve(None, &[kv("s", "1.5")], None).unwrap_err().is_config());
        assert!(parse_file_text("no equals sign").is_err());
    }
}
