//! System documents: a drift field with its fixed points and domain.
//!
//! ```toml
//! name = "maier-stein"
//! dimension = 2
//! drift = ["x1 - x1^3 - 10*x1*x2^2", "-x2 - x1^2*x2"]
//! fixed_points = [[-1.0, 0.0], [1.0, 0.0]]
//! box = [[-1.5, 1.5], [-0.75, 0.75]]
//! endpoints = [[-0.4, 0.0]]
//!
//! [decompose]
//! max_iterations = 5
//! ```
//!
//! `box` defaults to `[-2, 2]` in every coordinate; `fixed_points`,
//! `endpoints` and `[decompose]` are optional.

use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decompose::DecomposeConfig;
use crate::poly::{parse_polynomial, PolyError, VectorField};

#[derive(Debug, Error)]
pub enum SystemError {
    #[error(transparent)]
    Syntax(#[from] toml::de::Error),
    #[error("drift[{index}] `{text}`: {error}")]
    Drift { index: usize, text: String, error: PolyError },
    #[error("{field}: expected {expected} entries, found {found}")]
    Dimension { field: String, expected: usize, found: usize },
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
    #[error("reading {path}: {error}")]
    Io { path: String, error: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    name: String,
    dimension: usize,
    drift: Vec<String>,
    #[serde(default)]
    fixed_points: Vec<Vec<f64>>,
    #[serde(rename = "box")]
    domain: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    endpoints: Vec<Vec<f64>>,
    #[serde(default)]
    decompose: DecomposeConfig,
}

#[derive(Debug, Clone)]
pub struct SystemSpec {
    pub name: String,
    pub field: VectorField,
    /// Drift components as written.
    pub drift: Vec<String>,
    pub fixed_point_guesses: Vec<Vec<f64>>,
    pub domain: Vec<[f64; 2]>,
    pub endpoints: Vec<Vec<f64>>,
    /// Overrides from the document; `domain` falls back to the system box.
    pub config: DecomposeConfig,
}

impl SystemSpec {
    pub fn dimension(&self) -> usize {
        self.field.nvars()
    }

    pub fn in_box(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.domain).all(|(v, [lo, hi])| lo <= v && v <= hi)
    }
}

pub fn parse_system(text: &str) -> Result<SystemSpec, SystemError> {
    let doc: Document = toml::from_str(text)?;
    let n = doc.dimension;
    if n == 0 {
        return Err(SystemError::Invalid { field: "dimension".into(), message: "must be positive".into() });
    }
    if doc.drift.len() != n {
        return Err(SystemError::Dimension { field: "drift".into(), expected: n, found: doc.drift.len() });
    }
    let components = doc
        .drift
        .iter()
        .enumerate()
        .map(|(index, text)| {
            parse_polynomial(text, n).map_err(|error| SystemError::Drift { index, text: text.clone(), error })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let field = VectorField::new(components).expect("components share the declared dimension");
    for (label, list) in [("fixed_points", &doc.fixed_points), ("endpoints", &doc.endpoints)] {
        for (i, p) in list.iter().enumerate() {
            if p.len() != n {
                return Err(SystemError::Dimension { field: format!("{label}[{i}]"), expected: n, found: p.len() });
            }
        }
    }
    let domain = doc.domain.unwrap_or_else(|| vec![[-2.0, 2.0]; n]);
    if domain.len() != n {
        return Err(SystemError::Dimension { field: "box".into(), expected: n, found: domain.len() });
    }
    if let Some(i) = domain.iter().position(|[lo, hi]| !(lo < hi)) {
        return Err(SystemError::Invalid { field: format!("box[{i}]"), message: "empty interval".into() });
    }
    let mut config = doc.decompose;
    if config.domain.is_none() {
        config.domain = Some(domain.clone());
    }
    config
        .validate(n)
        .map_err(|e| SystemError::Invalid { field: "decompose".into(), message: e.to_string() })?;
    Ok(SystemSpec {
        name: doc.name,
        field,
        drift: doc.drift,
        fixed_point_guesses: doc.fixed_points,
        domain,
        endpoints: doc.endpoints,
        config,
    })
}

pub fn load_system(path: &FsPath) -> Result<SystemSpec, SystemError> {
    let text = std::fs::read_to_string(path)
        .map_err(|error| SystemError::Io { path: path.display().to_string(), error })?;
    parse_system(&text)
}
