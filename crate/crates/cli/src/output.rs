//! Result persistence: CSV tables, JSON reports, gnuplot scripts and the
//! eigenbasis cache. Every write goes through a temporary file and a rename.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use degenwave_core::EigenBasis;
use serde::Serialize;

use crate::config::{cache_key, RunConfig};
use crate::CliError;

/// Full-precision float formatting for every numeric output.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    fs::write(&tmp, contents).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(config: &RunConfig, header: &[&str]) -> Self {
        let mut text = config_comment(config);
        let _ = writeln!(text, "{}", header.join(","));
        Csv { text }
    }

    pub fn row(&mut self, cells: &[String]) {
        let _ = writeln!(self.text, "{}", cells.join(","));
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        write_atomic(path, &self.text)
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    config: &'a RunConfig,
    cache_key: String,
    result: &'a T,
}

/// JSON with the resolved config embedded next to the result.
pub fn json<T: Serialize>(config: &RunConfig, result: &T) -> String {
    let env = Envelope {
        config,
        cache_key: cache_key(config),
        result,
    };
    let mut s = serde_json::to_string_pretty(&env).unwrap();
    s.push('\n');
    s
}

pub fn save_json<T: Serialize>(
    config: &RunConfig,
    name: &str,
    result: &T,
) -> Result<PathBuf, CliError> {
    let path = config.out.join(name);
    write_atomic(&path, &json(config, result))?;
    Ok(path)
}

/// gnuplot script plotting columns of a CSV written next to it.
/// Two `#` lines naming the run and echoing the resolved config.
pub fn config_comment(config: &RunConfig) -> String {
    let mut text = String::new();
    let _ = writeln!(
        text,
        "# degenwave {} cache_key={}",
        config.subcommand,
        cache_key(config)
    );
    let _ = writeln!(text, "# config {}", serde_json::to_string(config).unwrap());
    text
}

pub fn gnuplot(
    config: &RunConfig,
    csv_name: &str,
    title: &str,
    xlabel: &str,
    ylabel: &str,
    series: &[(usize, usize, &str)],
    logy: bool,
) -> String {
    let mut s = config_comment(config);
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set datafile commentschars '#'");
    let _ = writeln!(s, "set key autotitle columnhead");
    let _ = writeln!(s, "set title '{title}'");
    let _ = writeln!(s, "set xlabel '{xlabel}'");
    let _ = writeln!(s, "set ylabel '{ylabel}'");
    if logy {
        let _ = writeln!(s, "set logscale y");
    }
    let plots: Vec<String> = series
        .iter()
        .map(|(x, y, name)| format!("'{csv_name}' using {x}:{y} with linespoints title '{name}'"))
        .collect();
    let _ = writeln!(s, "plot {}", plots.join(", \\\n     "));
    let _ = writeln!(s, "pause -1");
    s
}

/// Text matrix cache: a header line, then one line per mode holding
/// lambda, residual and the eigenvector entries.
pub fn save_basis(path: &Path, config: &RunConfig, basis: &EigenBasis) -> Result<(), CliError> {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# m={} interior={} alpha={:e} epsilon={:e} N={} n={} L={:e}",
        basis.len(),
        basis.dim(),
        config.alpha,
        config.epsilon,
        config.dimension,
        config.n,
        config.half_width
    );
    for i in 0..basis.len() {
        s.push_str(&num(basis.values()[i]));
        s.push(' ');
        s.push_str(&num(basis.residuals()[i]));
        for v in basis.vector(i) {
            s.push(' ');
            s.push_str(&num(*v));
        }
        s.push('\n');
    }
    write_atomic(path, &s)
}

/// Load a cached basis; None when absent or inconsistent with the config.
pub fn load_basis(path: &Path, config: &RunConfig, cell_volume: f64) -> Option<EigenBasis> {
    let text = fs::read_to_string(path).ok()?;
    let mut lines = text.lines();
    let header = lines.next()?;
    let field = |name: &str| -> Option<usize> {
        header
            .split_whitespace()
            .find_map(|t| t.strip_prefix(name).and_then(|v| v.strip_prefix('=')))
            .and_then(|v| v.parse().ok())
    };
    let (m, interior) = (field("m")?, field("interior")?);
    let mut values = Vec::with_capacity(m);
    let mut residuals = Vec::with_capacity(m);
    let mut vectors = Vec::with_capacity(m);
    for line in lines {
        let nums: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse().ok())
            .collect::<Option<_>>()?;
        if nums.len() != interior + 2 {
            return None;
        }
        values.push(nums[0]);
        residuals.push(nums[1]);
        vectors.push(nums[2..].to_vec());
    }
    if values.len() != m {
        return None;
    }
    EigenBasis::from_parts(
        values,
        vectors,
        residuals,
        cell_volume,
        config.weight_params().ok(),
    )
    .ok()
}
