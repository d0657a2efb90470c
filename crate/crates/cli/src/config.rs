//! Command-line and TOML configuration, merged into typed settings.
//!
//! Lookup order for a key: command-line flag, then the `[command]` table of
//! the config file, then its top level, then the built-in default. Every
//! value actually used is recorded so reports can echo the resolved config.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value as Json;
use toml::Value as Toml;

/// Bad input, as opposed to a violated mathematical contract.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error<T>(msg: impl Into<String>) -> anyhow::Result<T> {
    Err(ConfigError(msg.into()).into())
}

#[derive(Parser, Debug)]
#[command(name = "moelab", version, about = "Seeded verification runs for random subspace channels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// TOML file with default values; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Master seed (required, here or in the config file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,

    /// Report path. Defaults to `$MOELAB_OUT_DIR/<command>.<ext>`, else stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,

    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Monte Carlo moments of f against their closed forms and bounds.
    Moments(MomentsArgs),
    /// Tail frequencies of f above median + h against the Lévy bound.
    Tail(TailArgs),
    /// Bell-input output spectra of random channels and their entropy bounds.
    Bell(BellArgs),
    /// Build a θ-net and certify its covering radius.
    NetCertify(NetArgs),
    /// Certified lower bound versus Bell upper bound over a parameter grid.
    GapScan(GapArgs),
    /// Smallest ln k at which the analytic violation argument applies.
    Crossover(CrossoverArgs),
    /// Weyl extension capacity identity for one or two channel copies.
    Weyl(WeylArgs),
    /// Closed-form typical-subspace bound on f.
    TypicalBound(TypicalArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Moments(_) => "moments",
            Command::Tail(_) => "tail",
            Command::Bell(_) => "bell",
            Command::NetCertify(_) => "net-certify",
            Command::GapScan(_) => "gap-scan",
            Command::Crossover(_) => "crossover",
            Command::Weyl(_) => "weyl",
            Command::TypicalBound(_) => "typical-bound",
        }
    }
}

#[derive(Args, Debug)]
pub struct MomentsArgs {
    /// Output dimension grid, e.g. `2`, `2,3` or `2:2:8`.
    #[arg(long)]
    pub k: Option<String>,
    /// Environment dimension grid.
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long)]
    pub trials: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TailArgs {
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    /// ε grid, e.g. `0.1,0.2,0.3` or `0.1:0.1:0.5`.
    #[arg(long)]
    pub epsilon: Option<String>,
    #[arg(long)]
    pub trials: Option<usize>,
}

#[derive(Args, Debug)]
pub struct BellArgs {
    #[arg(long)]
    pub l: Option<String>,
    #[arg(long)]
    pub k: Option<String>,
    #[arg(long)]
    pub n: Option<String>,
    /// Channels sampled per dimension triple.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Evaluate this saved channel instead of sampling.
    #[arg(long)]
    pub channel: Option<PathBuf>,
    /// Save the first sampled channel as JSON.
    #[arg(long)]
    pub save_channel: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct NetArgs {
    #[arg(long)]
    pub l: Option<usize>,
    #[arg(long)]
    pub theta: Option<f64>,
    /// Monte Carlo covering samples.
    #[arg(long)]
    pub samples: Option<usize>,
    /// `grid` or `greedy`.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub phase_quotient: bool,
    /// Output dimension of channels used for the soundness check.
    #[arg(long)]
    pub k: Option<usize>,
    /// Environment dimension of channels used for the soundness check.
    #[arg(long)]
    pub n: Option<usize>,
    /// Channels for the soundness check (0 skips it).
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub save_net: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GapArgs {
    #[arg(long)]
    pub k: Option<String>,
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long)]
    pub l: Option<String>,
    /// Per-row channel seeds; defaults to the master seed.
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub phase_quotient: bool,
}

#[derive(Args, Debug)]
pub struct CrossoverArgs {
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    /// Use the β → 0 regime (α = 0).
    #[arg(long)]
    pub beta_zero: bool,
    /// Fixed β with k² = βn.
    #[arg(long)]
    pub beta: Option<f64>,
}

#[derive(Args, Debug)]
pub struct WeylArgs {
    #[arg(long)]
    pub l: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Copies of Φ in the product.
    #[arg(long)]
    pub phi_copies: Option<usize>,
    /// Copies of Ω in the product.
    #[arg(long)]
    pub omega_copies: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Use this saved channel as Φ.
    #[arg(long)]
    pub channel: Option<PathBuf>,
    #[arg(long)]
    pub save_channel: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TypicalArgs {
    #[arg(long)]
    pub l: Option<String>,
    #[arg(long)]
    pub k: Option<String>,
    #[arg(long)]
    pub n: Option<String>,
}

/// Merged settings with resolution tracking.
pub struct Settings {
    command: String,
    flags: BTreeMap<String, Toml>,
    file: toml::Table,
    resolved: BTreeMap<String, Json>,
}

fn normalize(key: &str) -> String {
    key.replace('-', "_")
}

impl Settings {
    pub fn new(command: &str, config: Option<&Path>) -> anyhow::Result<Self> {
        let file = match config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
                let table: toml::Table = text.parse().map_err(|e| ConfigError(format!("invalid TOML in {}: {e}", path.display())))?;
                table.into_iter().map(|(k, v)| (normalize(&k), v)).collect()
            }
            None => toml::Table::new(),
        };
        Ok(Self { command: command.to_string(), flags: BTreeMap::new(), file, resolved: BTreeMap::new() })
    }

    pub fn flag<T: Into<Toml>>(&mut self, key: &str, value: Option<T>) {
        if let Some(v) = value {
            self.flags.insert(normalize(key), v.into());
        }
    }

    /// Boolean switches only override when set.
    pub fn switch(&mut self, key: &str, on: bool) {
        if on {
            self.flags.insert(normalize(key), Toml::Boolean(true));
        }
    }

    fn raw(&self, key: &str) -> Option<Toml> {
        if let Some(v) = self.flags.get(key) {
            return Some(v.clone());
        }
        let section = normalize(&self.command);
        if let Some(Toml::Table(t)) = self.file.get(&section) {
            if let Some(v) = t.iter().find(|(k, _)| normalize(k) == key).map(|(_, v)| v) {
                return Some(v.clone());
            }
        }
        self.file.get(key).filter(|v| !v.is_table()).cloned()
    }

    pub fn is_set(&self, key: &str) -> bool {
        self.raw(key).is_some()
    }

    fn record(&mut self, key: &str, v: Json) {
        self.resolved.insert(key.to_string(), v);
    }

    pub fn resolved(&self) -> Json {
        Json::Object(self.resolved.iter().map(|(k, v)| (k.clone(), v.clone())).collect())
    }

    pub fn u64_required(&mut self, key: &str) -> anyhow::Result<u64> {
        match self.raw(key) {
            Some(Toml::Integer(i)) if i >= 0 => {
                self.record(key, Json::from(i));
                Ok(i as u64)
            }
            Some(other) => config_error(format!("{key} must be a nonnegative integer, got {other}")),
            None => config_error(format!("{key} is required (pass --{} or set it in the config file)", key.replace('_', "-"))),
        }
    }

    pub fn usize(&mut self, key: &str, default: usize) -> anyhow::Result<usize> {
        let v = match self.raw(key) {
            Some(Toml::Integer(i)) if i >= 0 => i as usize,
            Some(other) => return config_error(format!("{key} must be a nonnegative integer, got {other}")),
            None => default,
        };
        self.record(key, Json::from(v));
        Ok(v)
    }

    pub fn positive(&mut self, key: &str, default: Option<usize>) -> anyhow::Result<usize> {
        let v = match (self.raw(key), default) {
            (Some(Toml::Integer(i)), _) if i > 0 => i as usize,
            (Some(other), _) => return config_error(format!("{key} must be a positive integer, got {other}")),
            (None, Some(d)) => d,
            (None, None) => return config_error(format!("{key} is required")),
        };
        self.record(key, Json::from(v));
        Ok(v)
    }

    pub fn f64(&mut self, key: &str, default: Option<f64>) -> anyhow::Result<f64> {
        let v = match (self.raw(key), default) {
            (Some(Toml::Float(f)), _) => f,
            (Some(Toml::Integer(i)), _) => i as f64,
            (Some(other), _) => return config_error(format!("{key} must be a number, got {other}")),
            (None, Some(d)) => d,
            (None, None) => return config_error(format!("{key} is required")),
        };
        if !v.is_finite() {
            return config_error(format!("{key} must be finite"));
        }
        self.record(key, Json::from(v));
        Ok(v)
    }

    pub fn optional_f64(&mut self, key: &str) -> anyhow::Result<Option<f64>> {
        if self.is_set(key) {
            self.f64(key, None).map(Some)
        } else {
            Ok(None)
        }
    }

    pub fn bool(&mut self, key: &str, default: bool) -> anyhow::Result<bool> {
        let v = match self.raw(key) {
            Some(Toml::Boolean(b)) => b,
            Some(other) => return config_error(format!("{key} must be a boolean, got {other}")),
            None => default,
        };
        self.record(key, Json::Bool(v));
        Ok(v)
    }

    pub fn string(&mut self, key: &str, default: &str) -> anyhow::Result<String> {
        let v = match self.raw(key) {
            Some(Toml::String(s)) => s,
            Some(other) => return config_error(format!("{key} must be a string, got {other}")),
            None => default.to_string(),
        };
        self.record(key, Json::String(v.clone()));
        Ok(v)
    }

    pub fn path(&mut self, key: &str) -> anyhow::Result<Option<PathBuf>> {
        match self.raw(key) {
            Some(Toml::String(s)) => {
                self.record(key, Json::String(s.clone()));
                Ok(Some(PathBuf::from(s)))
            }
            Some(other) => config_error(format!("{key} must be a path string, got {other}")),
            None => Ok(None),
        }
    }

    pub fn usize_grid(&mut self, key: &str, default: Option<&str>) -> anyhow::Result<Vec<usize>> {
        let values = match (self.raw(key), default) {
            (Some(v), _) => usize_grid_value(key, &v)?,
            (None, Some(d)) => parse_usize_grid(key, d)?,
            (None, None) => return config_error(format!("{key} is required")),
        };
        self.record(key, Json::from(values.clone()));
        Ok(values)
    }

    pub fn u64_grid(&mut self, key: &str, default: &[u64]) -> anyhow::Result<Vec<u64>> {
        let values: Vec<u64> = match self.raw(key) {
            Some(v) => usize_grid_value(key, &v)?.into_iter().map(|x| x as u64).collect(),
            None => default.to_vec(),
        };
        self.record(key, Json::from(values.clone()));
        Ok(values)
    }

    pub fn f64_grid(&mut self, key: &str, default: &str) -> anyhow::Result<Vec<f64>> {
        let values = match self.raw(key) {
            Some(Toml::String(s)) => parse_f64_grid(key, &s)?,
            Some(Toml::Float(f)) => vec![f],
            Some(Toml::Integer(i)) => vec![i as f64],
            Some(Toml::Array(a)) => a
                .iter()
                .map(|v| match v {
                    Toml::Float(f) => Ok(*f),
                    Toml::Integer(i) => Ok(*i as f64),
                    other => config_error(format!("{key} entries must be numbers, got {other}")),
                })
                .collect::<anyhow::Result<_>>()?,
            Some(other) => return config_error(format!("{key} must be a number list, got {other}")),
            None => parse_f64_grid(key, default)?,
        };
        self.record(key, Json::from(values.clone()));
        Ok(values)
    }
}

fn usize_grid_value(key: &str, v: &Toml) -> anyhow::Result<Vec<usize>> {
    match v {
        Toml::String(s) => parse_usize_grid(key, s),
        Toml::Integer(i) if *i >= 0 => Ok(vec![*i as usize]),
        Toml::Array(a) => a
            .iter()
            .map(|x| match x {
                Toml::Integer(i) if *i >= 0 => Ok(*i as usize),
                other => config_error(format!("{key} entries must be nonnegative integers, got {other}")),
            })
            .collect(),
        other => config_error(format!("{key} must be an integer grid, got {other}")),
    }
}

/// `a`, `a,b,c`, or `start:step:stop` (inclusive); an empty string is an
/// empty grid.
pub fn parse_usize_grid(key: &str, s: &str) -> anyhow::Result<Vec<usize>> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(vec![]);
    }
    let parse = |t: &str| -> anyhow::Result<usize> {
        t.trim().parse::<usize>().map_err(|_| ConfigError(format!("{key}: `{t}` is not a nonnegative integer")).into())
    };
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [single] => single.split(',').map(parse).collect(),
        [a, step, b] => {
            let (a, step, b) = (parse(a)?, parse(step)?, parse(b)?);
            if step == 0 || b < a {
                return config_error(format!("{key}: range `{s}` needs step > 0 and start ≤ stop"));
            }
            Ok((a..=b).step_by(step).collect())
        }
        _ => config_error(format!("{key}: `{s}` is not a grid (use a, a,b or start:step:stop)")),
    }
}

pub fn parse_f64_grid(key: &str, s: &str) -> anyhow::Result<Vec<f64>> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(vec![]);
    }
    let parse = |t: &str| -> anyhow::Result<f64> {
        let v: f64 = t.trim().parse().map_err(|_| ConfigError(format!("{key}: `{t}` is not a number")))?;
        if v.is_finite() {
            Ok(v)
        } else {
            config_error(format!("{key}: `{t}` is not finite"))
        }
    };
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [single] => single.split(',').map(parse).collect(),
        [a, step, b] => {
            let (a, step, b) = (parse(a)?, parse(step)?, parse(b)?);
            if !(step > 0.0) || b < a {
                return config_error(format!("{key}: range `{s}` needs step > 0 and start ≤ stop"));
            }
            let count = ((b - a) / step + 1e-9).floor() as usize + 1;
            Ok((0..count).map(|i| a + i as f64 * step).collect())
        }
        _ => config_error(format!("{key}: `{s}` is not a grid (use a, a,b or start:step:stop)")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_usize_grid("k", "2:2:8").unwrap(), vec![2, 4, 6, 8]);
        assert_eq!(parse_usize_grid("k", "3").unwrap(), vec![3]);
        assert_eq!(parse_usize_grid("k", "2, 5").unwrap(), vec![2, 5]);
        assert!(parse_usize_grid("k", "").unwrap().is_empty());
        assert!(parse_usize_grid("k", "2:0:8").is_err());
        assert!(parse_usize_grid("k", "x").is_err());
        assert_eq!(parse_f64_grid("e", "0.1:0.1:0.3").unwrap().len(), 3);
        assert_eq!(parse_f64_grid("e", "0.5").unwrap(), vec![0.5]);
    }

    #[test]
    fn flag_overrides_file() {
        let dir = std::env::temp_dir().join(format!("moelab-config-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("c.toml");
        std::fs::write(&path, "seed = 1\ntrials = 300\n[moments]\ntrials = 400\n").unwrap();
        let mut s = Settings::new("moments", Some(&path)).unwrap();
        assert_eq!(s.u64_required("seed").unwrap(), 1);
        assert_eq!(s.usize("trials", 5).unwrap(), 400);
        s.flag("seed", Some(2i64));
        assert_eq!(s.u64_required("seed").unwrap(), 2);
        let mut empty = Settings::new("moments", None).unwrap();
        assert!(empty.u64_required("seed").unwrap_err().downcast_ref::<ConfigError>().is_some());
        std::fs::remove_dir_all(dir).unwrap();
    }
}
