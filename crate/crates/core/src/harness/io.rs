//! Plain-text input files: algebra definitions, measures and tabulated maps.
//!
//! Algebra file (1-based indices, `#` starts a comment):
//!
//! ```text
//! layers: 2 1
//! bracket: 1 2 3 1
//! inner_product:
//! 1 0 0
//! 0 1 0
//! 0 0 1
//! ```

use std::path::Path;
use std::sync::Arc;

use crate::algebra::{builtin, validate_algebra, AlgebraDef, CarnotAlgebra};
use crate::barycenter::DiscreteMeasure;
use crate::bch::GroupPoint;
use crate::mollifier::TabulatedMap;
use crate::scalar::{parse_rational, Rational};

use super::HarnessError;

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> HarnessError {
    HarnessError::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn read(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
}

/// Parses the algebra file format; `path` is only used in messages.
pub fn parse_algebra(text: &str, path: &Path) -> Result<AlgebraDef, HarnessError> {
    let mut layers: Option<Vec<usize>> = None;
    let mut brackets = Vec::new();
    let mut inner: Option<Vec<Vec<Rational>>> = None;
    let mut in_inner = false;
    for (ln, line) in content_lines(text) {
        if let Some(rest) = line.strip_prefix("layers:") {
            in_inner = false;
            let dims = rest
                .split_whitespace()
                .map(|t| {
                    t.parse::<usize>()
                        .map_err(|_| parse_err(path, ln, format!("bad layer dimension '{t}'")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            layers = Some(dims);
        } else if let Some(rest) = line.strip_prefix("bracket:") {
            in_inner = false;
            let toks: Vec<&str> = rest.split_whitespace().collect();
            if toks.len() != 4 {
                return Err(parse_err(path, ln, "expected 'bracket: i j k value'"));
            }
            let idx = |t: &str| -> Result<usize, HarnessError> {
                match t.parse::<usize>() {
                    Ok(v) if v >= 1 => Ok(v - 1),
                    _ => Err(parse_err(path, ln, format!("bad 1-based index '{t}'"))),
                }
            };
            let c = parse_rational(toks[3])
                .ok_or_else(|| parse_err(path, ln, format!("bad rational '{}'", toks[3])))?;
            brackets.push((idx(toks[0])?, idx(toks[1])?, idx(toks[2])?, c));
        } else if let Some(rest) = line.strip_prefix("inner_product:") {
            if !rest.trim().is_empty() {
                return Err(parse_err(
                    path,
                    ln,
                    "inner product rows go on the following lines",
                ));
            }
            in_inner = true;
            inner = Some(Vec::new());
        } else if in_inner {
            let row = line
                .split_whitespace()
                .map(|t| {
                    parse_rational(t)
                        .ok_or_else(|| parse_err(path, ln, format!("bad rational '{t}'")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            inner.as_mut().expect("section opened").push(row);
        } else {
            return Err(parse_err(path, ln, format!("unexpected line '{line}'")));
        }
    }
    let layer_dims = layers.ok_or_else(|| parse_err(path, 0, "missing 'layers:' line"))?;
    let def = AlgebraDef {
        layer_dims,
        brackets,
        inner_product: inner,
    };
    let report = validate_algebra(&def);
    if !report.is_pass() {
        return Err(HarnessError::InvalidAlgebra {
            path: path.to_path_buf(),
            reason: report.to_string(),
        });
    }
    Ok(def)
}

/// A built-in name (`H1`, `free(2,3)`, `H2xH2`, ...) or a path to an algebra file.
pub fn load_algebra(spec: &str, base_dir: &Path) -> Result<Arc<CarnotAlgebra>, HarnessError> {
    let path = base_dir.join(spec);
    if path.is_file() {
        let def = parse_algebra(&read(&path)?, &path)?;
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("custom")
            .to_string();
        return Ok(Arc::new(CarnotAlgebra::with_name(&def, &name)?));
    }
    match builtin(spec) {
        Ok(a) => Ok(Arc::new(a)),
        Err(_) if spec.contains('/') || spec.contains('.') => Err(HarnessError::Io {
            path,
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "algebra file not found"),
        }),
        Err(e) => Err(e.into()),
    }
}

/// Rows `w x_1 … x_N` with exact rational weights and coordinates.
pub fn parse_measure(
    text: &str,
    n: usize,
    path: &Path,
) -> Result<DiscreteMeasure<Rational>, HarnessError> {
    let mut support = Vec::new();
    let mut weights = Vec::new();
    for (ln, line) in content_lines(text) {
        let vals = line
            .split_whitespace()
            .map(|t| {
                parse_rational(t).ok_or_else(|| parse_err(path, ln, format!("bad number '{t}'")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if vals.len() != n + 1 {
            return Err(parse_err(
                path,
                ln,
                format!("expected {} numbers, found {}", n + 1, vals.len()),
            ));
        }
        weights.push(vals[0].clone());
        support.push(GroupPoint::from_coords(vals[1..].to_vec()));
    }
    Ok(DiscreteMeasure::new(support, weights)?)
}

pub fn load_measure(path: &Path, n: usize) -> Result<DiscreteMeasure<Rational>, HarnessError> {
    parse_measure(&read(path)?, n, path)
}

/// Rows `x_1 … x_N -> y_1 … y_N'` (the arrow is optional) on a full tensor grid.
pub fn parse_tabulated(
    text: &str,
    n: usize,
    nt: usize,
    path: &Path,
) -> Result<TabulatedMap, HarnessError> {
    let mut rows = Vec::new();
    for (ln, line) in content_lines(text) {
        let vals = line
            .split_whitespace()
            .filter(|t| *t != "->")
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| parse_err(path, ln, format!("bad number '{t}'")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if vals.len() != n + nt {
            return Err(parse_err(
                path,
                ln,
                format!("expected {} numbers, found {}", n + nt, vals.len()),
            ));
        }
        rows.push((vals[..n].to_vec(), vals[n..].to_vec()));
    }
    Ok(TabulatedMap::from_rows(n, &rows)?)
}

pub fn load_tabulated(path: &Path, n: usize, nt: usize) -> Result<TabulatedMap, HarnessError> {
    parse_tabulated(&read(path)?, n, nt, path)
}
