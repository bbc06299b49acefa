//! Errors, exit codes and reference-policy parsing.

use std::path::{Path, PathBuf};

use advreg::AlphaParam;
use ndarray::Array2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] advreg::Error),
}

impl CliError {
    /// 2 for configuration problems, 3 for numerical failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Core(e) => match e {
                advreg::Error::InvalidInput(_) | advreg::Error::Shape(_) | advreg::Error::Parse { .. } => 2,
                advreg::Error::Domain(_)
                | advreg::Error::Bracket { .. }
                | advreg::Error::NoConvergence { .. }
                | advreg::Error::Singular => 3,
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn alpha(a: f64) -> Result<AlphaParam> {
    Ok(AlphaParam::new(a)?)
}

pub fn check_beta(beta: f64) -> Result<()> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(CliError::Config(format!("--beta must be positive, got {beta}")));
    }
    Ok(())
}

/// Resolves `uniform`, `list:v1,v2,...` or `csv:<path>` into an
/// `(n_states, n_actions)` reference table. A single row is broadcast to
/// every state.
pub fn reference_table(spec: &str, n_states: usize, n_actions: usize) -> Result<Array2<f64>> {
    let rows: Vec<Vec<f64>> = if spec == "uniform" {
        return Ok(Array2::from_elem((n_states, n_actions), 1.0 / n_actions as f64));
    } else if let Some(list) = spec.strip_prefix("list:") {
        vec![parse_list(list)?]
    } else if let Some(path) = spec.strip_prefix("csv:") {
        read_csv_rows(Path::new(path))?
    } else {
        return Err(CliError::Config(format!(
            "--ref must be uniform, list:<v1,v2,...> or csv:<path>, got {spec:?}"
        )));
    };
    if rows.iter().any(|r| r.len() != n_actions) {
        return Err(CliError::Config(format!("reference rows must have {n_actions} entries")));
    }
    match rows.len() {
        1 => Ok(Array2::from_shape_fn((n_states, n_actions), |(_, a)| rows[0][a])),
        n if n == n_states => Ok(Array2::from_shape_fn((n_states, n_actions), |(s, a)| rows[s][a])),
        n => Err(CliError::Config(format!(
            "reference has {n} rows; expected 1 or {n_states}"
        ))),
    }
}

fn parse_list(list: &str) -> Result<Vec<f64>> {
    list.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Config(format!("cannot parse {v:?} as a number")))
        })
        .collect()
}

fn read_csv_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = read_file(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let row = record
            .iter()
            .map(|v| {
                v.parse::<f64>().map_err(|_| {
                    CliError::Config(format!("{}: row {}: cannot parse {v:?}", path.display(), i + 1))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Config(format!("{}: no reference rows", path.display())));
    }
    Ok(rows)
}
