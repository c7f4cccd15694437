//! Run configuration: flags layered over an optional key-value file.
//!
//! File grammar, one entry per line:
//!
//! ```text
//! # comment
//! alpha = 1.0
//! [grid]
//! n = 61          # read as grid.n
//! ```
//!
//! Section names are only namespaces; `grid.n` and `n` mean the same key.

use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

const SECTIONS: [&str; 6] = ["weight", "grid", "time", "filter", "run", "output"];

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Key-value configuration file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// 0 selects the raw weight |x|^alpha.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Comma-separated list for `approx`.
    #[arg(long)]
    pub epsilons: Option<String>,
    #[arg(long)]
    pub dimension: Option<usize>,
    /// Interior nodes per axis.
    #[arg(long)]
    pub n: Option<usize>,
    /// Half width of the box (-L, L)^N.
    #[arg(long = "L")]
    pub half_width: Option<f64>,
    #[arg(long = "T")]
    pub horizon: Option<f64>,
    /// Comma-separated horizons for `observe`.
    #[arg(long = "T-list")]
    pub horizons: Option<String>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub modes: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub slack: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub draws: Option<usize>,
    /// `leapfrog` or `spectral` for `simulate`.
    #[arg(long)]
    pub solver: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub no_cache: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub subcommand: String,
    pub alpha: f64,
    pub epsilon: f64,
    pub epsilons: Vec<f64>,
    pub dimension: usize,
    pub n: usize,
    pub half_width: f64,
    pub horizon: Option<f64>,
    pub horizons: Vec<f64>,
    pub dt: Option<f64>,
    pub steps: Option<usize>,
    pub modes: Option<usize>,
    pub gamma: f64,
    pub slack: f64,
    pub seed: u64,
    pub draws: usize,
    pub solver: String,
    pub out: PathBuf,
    pub cache: bool,
}

impl RunConfig {
    fn defaults(subcommand: &str) -> Self {
        RunConfig {
            subcommand: subcommand.to_string(),
            alpha: 1.0,
            epsilon: 0.1,
            epsilons: vec![0.2, 0.1, 0.05],
            dimension: 2,
            n: 61,
            half_width: 1.0,
            horizon: None,
            horizons: Vec::new(),
            dt: None,
            steps: None,
            modes: None,
            gamma: degenwave_core::observability::DEFAULT_GAMMA,
            slack: degenwave_core::observability::DISCRETE_SLACK,
            seed: 0,
            draws: 20,
            solver: "leapfrog".into(),
            out: PathBuf::from("degenwave-out"),
            cache: true,
        }
    }

    /// Defaults, then the file named by `--config`, then flags, then
    /// DEGENWAVE_OUT for the output directory.
    pub fn resolve(
        subcommand: &str,
        flags: &Flags,
        env_out: Option<PathBuf>,
    ) -> Result<Self, CliError> {
        let mut cfg = RunConfig::defaults(subcommand);
        if let Some(path) = &flags.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            for (key, value) in parse_file(&text)? {
                cfg.set(&key, &value)?;
            }
        }
        cfg.apply_flags(flags)?;
        if let Some(out) = env_out {
            cfg.out = out;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply_flags(&mut self, f: &Flags) -> Result<(), CliError> {
        macro_rules! take {
            ($field:ident) => {
                if let Some(v) = &f.$field {
                    self.$field = v.clone();
                }
            };
        }
        take!(alpha);
        take!(epsilon);
        take!(dimension);
        take!(n);
        take!(half_width);
        take!(gamma);
        take!(slack);
        take!(seed);
        take!(draws);
        take!(solver);
        take!(out);
        if f.horizon.is_some() {
            self.horizon = f.horizon;
        }
        if f.dt.is_some() {
            self.dt = f.dt;
        }
        if f.steps.is_some() {
            self.steps = f.steps;
        }
        if f.modes.is_some() {
            self.modes = f.modes;
        }
        if let Some(list) = &f.epsilons {
            self.epsilons = parse_list(list, "epsilons")?;
        }
        if let Some(list) = &f.horizons {
            self.horizons = parse_list(list, "T-list")?;
        }
        if f.no_cache {
            self.cache = false;
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let bare = match key.split_once('.') {
            Some((section, rest)) if SECTIONS.contains(&section) => rest,
            Some(_) => return Err(CliError::Config(format!("unknown section in key `{key}`"))),
            None => key,
        };
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
            v.parse()
                .map_err(|_| CliError::Config(format!("`{key}` expects a number, got `{v}`")))
        }
        match bare {
            "alpha" => self.alpha = num(key, value)?,
            "epsilon" => self.epsilon = num(key, value)?,
            "epsilons" => self.epsilons = parse_list(value, key)?,
            "dimension" | "N" => self.dimension = num(key, value)?,
            "n" => self.n = num(key, value)?,
            "L" | "half_width" => self.half_width = num(key, value)?,
            "T" | "horizon" => self.horizon = Some(num(key, value)?),
            "T_list" | "horizons" => self.horizons = parse_list(value, key)?,
            "dt" => self.dt = Some(num(key, value)?),
            "steps" => self.steps = Some(num(key, value)?),
            "modes" | "m" => self.modes = Some(num(key, value)?),
            "gamma" => self.gamma = num(key, value)?,
            "slack" => self.slack = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "draws" => self.draws = num(key, value)?,
            "solver" => self.solver = value.to_string(),
            "out" => self.out = PathBuf::from(value),
            "cache" => {
                self.cache = match value {
                    "true" | "on" | "1" => true,
                    "false" | "off" | "0" => false,
                    _ => return Err(CliError::Config(format!("`{key}` expects true or false"))),
                }
            }
            _ => return Err(CliError::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if let Err(e) = self.weight_params() {
            return bad(e.to_string());
        }
        if let Err(e) = degenwave_core::Grid::new(self.dimension, self.n, self.half_width) {
            return bad(e.to_string());
        }
        if let Some(t) = self.horizon {
            if !(t > 0.0) {
                return bad(format!("T must be positive, got {t}"));
            }
        }
        if self.horizons.iter().any(|t| !(*t > 0.0)) {
            return bad("every entry of T-list must be positive".into());
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return bad(format!("dt must be positive, got {dt}"));
            }
        }
        if matches!(self.steps, Some(s) if s < 2) {
            return bad("steps must be at least 2".into());
        }
        if matches!(self.modes, Some(0)) {
            return bad("modes must be at least 1".into());
        }
        if !(self.gamma > 0.0) {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        if !(0.0..1.0).contains(&self.slack) {
            return bad(format!("slack must lie in [0, 1), got {}", self.slack));
        }
        if self.epsilons.is_empty() || self.epsilons.iter().any(|e| !(*e > 0.0)) {
            return bad("epsilons must be a nonempty list of positive values".into());
        }
        if !matches!(self.solver.as_str(), "leapfrog" | "spectral") {
            return bad(format!(
                "solver must be `leapfrog` or `spectral`, got `{}`",
                self.solver
            ));
        }
        Ok(())
    }

    pub fn weight_params(&self) -> degenwave_core::Result<degenwave_core::WeightParams> {
        degenwave_core::WeightParams::new(
            self.alpha,
            self.epsilon,
            self.dimension,
            self.half_width,
            0.12 * self.half_width,
        )
    }

    /// The numeric fields that determine results, in a fixed textual form.
    fn canonical(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_else(|| "-".into());
        let list = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:e}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        format!(
            "alpha={:e};epsilon={:e};epsilons={};N={};n={};L={:e};T={};Ts={};dt={};steps={};modes={};gamma={:e};slack={:e};seed={};draws={};solver={}",
            self.alpha,
            self.epsilon,
            list(&self.epsilons),
            self.dimension,
            self.n,
            self.half_width,
            opt(self.horizon),
            list(&self.horizons),
            opt(self.dt),
            self.steps.map(|s| s.to_string()).unwrap_or_else(|| "-".into()),
            self.modes.map(|s| s.to_string()).unwrap_or_else(|| "-".into()),
            self.gamma,
            self.slack,
            self.seed,
            self.draws,
            self.solver,
        )
    }
}

/// Stable hash of the math-relevant configuration. Output directory, cache
/// toggle and subcommand do not enter.
pub fn cache_key(config: &RunConfig) -> String {
    hex(&Sha256::digest(config.canonical().as_bytes()))[..16].to_string()
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Key of an eigenbasis request on the configured operator.
pub fn basis_key(config: &RunConfig, request: &str) -> String {
    let text = format!(
        "alpha={:e};epsilon={:e};N={};n={};L={:e};{request}",
        config.alpha, config.epsilon, config.dimension, config.n, config.half_width
    );
    hex(&Sha256::digest(text.as_bytes()))[..16].to_string()
}

fn parse_list(text: &str, key: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse().map_err(|_| {
                CliError::Config(format!(
                    "`{key}` expects comma-separated numbers, got `{s}`"
                ))
            })
        })
        .collect()
}

/// `key = value` lines with `#` comments and `[section]` headers, returned
/// as dotted keys in file order.
pub fn parse_file(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    let mut section: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim();
            if name.is_empty() {
                return Err(CliError::Config(format!(
                    "line {}: empty section name",
                    i + 1
                )));
            }
            section = Some(name.to_string());
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", i + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(CliError::Config(format!("line {}: missing key", i + 1)));
        }
        let key = match &section {
            Some(s) => format!("{s}.{k}"),
            None => k.to_string(),
        };
        out.push((key, v.to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> RunConfig {
        RunConfig::resolve("observe", &Flags::default(), None).unwrap()
    }

    #[test]
    fn file_grammar() {
        let parsed =
            parse_file("# top\nalpha = 1.5\n[grid]\nn = 21 # inline\n\n[filter]\ngamma=0.4\n")
                .unwrap();
        assert_eq!(
            parsed,
            vec![
                ("alpha".to_string(), "1.5".to_string()),
                ("grid.n".to_string(), "21".to_string()),
                ("filter.gamma".to_string(), "0.4".to_string())
            ]
        );
        assert!(parse_file("alpha 1").is_err());
        let mut c = cfg();
        for (k, v) in parsed {
            c.set(&k, &v).unwrap();
        }
        assert_eq!((c.alpha, c.n, c.gamma), (1.5, 21, 0.4));
        assert!(c.set("nonsense", "1").is_err());
        assert!(c.set("bogus.alpha", "1").is_err());
    }

    #[test]
    fn key_ignores_output_and_tracks_gamma() {
        let a = cfg();
        let mut b = a.clone();
        b.out = PathBuf::from("/elsewhere");
        b.cache = false;
        assert_eq!(cache_key(&a), cache_key(&b));
        assert_eq!(cache_key(&a), cache_key(&a.clone()));
        let mut c = a.clone();
        c.gamma = 0.6;
        assert_ne!(cache_key(&a), cache_key(&c));
    }

    #[test]
    fn flags_override_defaults_and_validate() {
        let flags = Flags {
            alpha: Some(0.5),
            epsilons: Some("0.2, 0.1".into()),
            ..Flags::default()
        };
        let c = RunConfig::resolve("approx", &flags, Some(PathBuf::from("/tmp/x"))).unwrap();
        assert_eq!(c.alpha, 0.5);
        assert_eq!(c.epsilons, vec![0.2, 0.1]);
        assert_eq!(c.out, PathBuf::from("/tmp/x"));
        let bad = Flags {
            alpha: Some(2.5),
            ..Flags::default()
        };
        assert!(matches!(
            RunConfig::resolve("constants", &bad, None),
            Err(CliError::Config(_))
        ));
    }
}
