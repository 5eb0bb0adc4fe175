//! Plain-text matrix files.
//!
//! ```text
//! # key = value        (optional metadata, any number of lines)
//! 2 3
//! 1.0000000000000000e0 2.0000000000000000e0 3.0000000000000000e0
//! 4.0000000000000000e0 5.0000000000000000e0 6.0000000000000000e0
//! ```
//!
//! Entries are written row-major with 17 significant digits, which round-trips
//! every `f64` exactly. `#` lines without `=` are comments.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, Vector};
use crate::sensing::MeasurementMap;
use crate::whitening::WhitenedSystem;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatFile {
    pub matrix: DenseMatrix,
    pub meta: Vec<(String, String)>,
}

impl MatFile {
    pub fn new(matrix: DenseMatrix) -> Self {
        Self {
            matrix,
            meta: Vec::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    /// Last value recorded for `key`.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.meta.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn get_parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Format(format!("metadata `{key}` has an unparsable value `{v}`")))
            })
            .transpose()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut meta = Vec::new();
        let mut header = None;
        let mut values = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.split_once('=') {
                    meta.push((k.trim().to_string(), v.trim().to_string()));
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let bad = |what: &str| Error::Format(format!("line {}: {what}", lineno + 1));
            if header.is_none() {
                let dims: Vec<usize> = line
                    .split_ascii_whitespace()
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad("expected a `rows cols` header"))?;
                if dims.len() != 2 {
                    return Err(bad("expected a `rows cols` header"));
                }
                header = Some((dims[0], dims[1]));
                continue;
            }
            for tok in line.split_ascii_whitespace() {
                let v: f64 = tok.parse().map_err(|_| bad(&format!("`{tok}` is not a number")))?;
                values.push(v);
            }
        }
        let (rows, cols) = header.ok_or_else(|| Error::Format("missing `rows cols` header".into()))?;
        if values.len() != rows * cols {
            return Err(Error::Format(format!(
                "header declares {rows}x{cols} = {} entries, found {}",
                rows * cols,
                values.len()
            )));
        }
        Ok(Self {
            matrix: DMatrix::from_row_slice(rows, cols, &values),
            meta,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.meta {
            let _ = writeln!(out, "# {k} = {v}");
        }
        let (rows, cols) = self.matrix.shape();
        let _ = writeln!(out, "{rows} {cols}");
        for i in 0..rows {
            let line: Vec<String> = (0..cols).map(|j| format!("{:.16e}", self.matrix[(i, j)])).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_text())?;
        Ok(())
    }
}

/// Read the matrix shape `m × n` stored as `shape = m n`.
fn shape_meta(file: &MatFile) -> Result<Option<(usize, usize)>> {
    let Some(v) = file.get("shape") else {
        return Ok(None);
    };
    let dims: Vec<usize> = v
        .split_ascii_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Format(format!("metadata `shape` must be `m n`, got `{v}`")))?;
    match dims[..] {
        [m, n] => Ok(Some((m, n))),
        _ => Err(Error::Format(format!("metadata `shape` must be `m n`, got `{v}`"))),
    }
}

/// A linear system `[A | y]` stored as one augmented `M × (mn + 1)` file with
/// `shape = m n` metadata.
pub fn read_system(path: impl AsRef<Path>) -> Result<(MeasurementMap, Vector)> {
    let file = MatFile::read(path)?;
    let (m, n) = shape_meta(&file)?.ok_or_else(|| Error::Format("system file needs `# shape = m n` metadata".into()))?;
    split_augmented(&file.matrix, m, n)
}

fn split_augmented(aug: &DenseMatrix, m: usize, n: usize) -> Result<(MeasurementMap, Vector)> {
    if aug.ncols() != m * n + 1 {
        return Err(Error::dims(format!("{} columns (mn + 1)", m * n + 1), format!("{} columns", aug.ncols())));
    }
    let a = aug.columns(0, m * n).into_owned();
    let y = aug.column(m * n).into_owned();
    Ok((MeasurementMap::from_matrix(a, m, n)?, y))
}

pub fn write_system(path: impl AsRef<Path>, map: &MeasurementMap, y: &Vector) -> Result<()> {
    if y.len() != map.measurements() {
        return Err(Error::dims(map.measurements().to_string(), y.len().to_string()));
    }
    let (m, n) = map.shape();
    let mut aug = map.matrix().clone().insert_column(m * n, 0.0);
    aug.set_column(m * n, y);
    MatFile::new(aug)
        .with_meta("shape", format!("{m} {n}"))
        .with_meta("ensemble", map.ensemble())
        .write(path)
}

/// `[B | ỹ]` with the whitening constants as metadata.
pub fn write_whitened(path: impl AsRef<Path>, system: &WhitenedSystem) -> Result<()> {
    let (m, n) = system.shape;
    let mut aug = system.b().clone().insert_column(m * n, 0.0);
    aug.set_column(m * n, &system.y_tilde);
    let mut file = MatFile::new(aug)
        .with_meta("shape", format!("{m} {n}"))
        .with_meta("theta", format!("{:.16e}", system.theta))
        .with_meta("delta", format!("{:.16e}", system.delta))
        .with_meta("delta_eff", format!("{:.16e}", system.delta_eff));
    if let Some(d1) = system.delta1 {
        file = file.with_meta("delta1", format!("{d1:.16e}"));
    }
    file.write(path)
}

/// Inverse of [`write_whitened`].
pub fn read_whitened(path: impl AsRef<Path>) -> Result<WhitenedSystem> {
    let file = MatFile::read(path)?;
    let (m, n) = shape_meta(&file)?.ok_or_else(|| Error::Format("whitened file needs `# shape = m n` metadata".into()))?;
    let need = |k: &str| -> Result<f64> {
        file.get_parsed(k)?
            .ok_or_else(|| Error::Format(format!("whitened file is missing `{k}` metadata")))
    };
    let (theta, delta, delta_eff) = (need("theta")?, need("delta")?, need("delta_eff")?);
    if file.matrix.ncols() != m * n + 1 {
        return Err(Error::dims((m * n + 1).to_string(), file.matrix.ncols().to_string()));
    }
    let b = file.matrix.columns(0, m * n).into_owned();
    let y = file.matrix.column(m * n).into_owned();
    WhitenedSystem::from_parts(b, y, (m, n), theta, delta, delta_eff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::{synthesize, Ensemble, NoiseSpec};
    use crate::whitening::whiten;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("noisefold-matfile-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = DMatrix::from_fn(3, 4, |i, j| ((i * 4 + j) as f64).sin() * 1e-7 + (j as f64).exp());
        let m = m.map(|v| v / 3.0);
        let text = MatFile::new(m.clone()).with_meta("note", "x").to_text();
        let back = MatFile::parse(&text).unwrap();
        assert_eq!(back.matrix, m);
        assert_eq!(back.get("note"), Some("x"));
        for v in [f64::MIN_POSITIVE, 0.1 + 0.2, -1.0 / 3.0, 1e300] {
            let t = MatFile::new(DMatrix::from_element(1, 1, v)).to_text();
            assert_eq!(MatFile::parse(&t).unwrap().matrix[(0, 0)], v);
        }
    }

    #[test]
    fn layout_is_row_major() {
        let text = "# a comment\n2 3\n1 2 3\n4 5 6\n";
        let f = MatFile::parse(text).unwrap();
        assert_eq!(f.matrix[(0, 2)], 3.0);
        assert_eq!(f.matrix[(1, 0)], 4.0);
        assert!(f.meta.is_empty());
    }

    #[test]
    fn malformed_files_are_rejected() {
        assert!(MatFile::parse("").is_err());
        assert!(MatFile::parse("2 2\n1 2 3\n").is_err());
        assert!(MatFile::parse("2 x\n").is_err());
        let err = MatFile::parse("1 2\n1 nope\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(matches!(MatFile::read("/nonexistent/file.mat"), Err(Error::Io(_))));
    }

    #[test]
    fn system_and_whitened_round_trip() {
        let map = MeasurementMap::generate(Ensemble::Gaussian, 3, 4, 9, 5).unwrap();
        let x = DMatrix::from_fn(3, 4, |i, j| (i + j) as f64);
        let noise = NoiseSpec::white(0.01, 0.02);
        let obs = synthesize(&map, &x, &noise, 6).unwrap();

        let p = tmp("sys.mat");
        write_system(&p, &map, &obs.y).unwrap();
        let (map2, y2) = read_system(&p).unwrap();
        assert_eq!(map2.matrix(), map.matrix());
        assert_eq!(map2.shape(), (3, 4));
        assert_eq!(y2, obs.y);

        let sys = whiten(&map, &obs.y, &noise).unwrap();
        let q = tmp("white.mat");
        write_whitened(&q, &sys).unwrap();
        let back = read_whitened(&q).unwrap();
        assert_eq!(back.b(), sys.b());
        assert_eq!(back.y_tilde, sys.y_tilde);
        assert_eq!((back.theta, back.delta, back.delta_eff), (sys.theta, sys.delta, sys.delta_eff));
    }

    #[test]
    fn system_needs_shape() {
        let p = tmp("noshape.mat");
        MatFile::new(DMatrix::zeros(2, 5)).write(&p).unwrap();
        assert!(matches!(read_system(&p), Err(Error::Format(_))));
        let q = tmp("badcols.mat");
        MatFile::new(DMatrix::zeros(2, 5)).with_meta("shape", "2 3").write(&q).unwrap();
        assert!(matches!(read_system(&q), Err(Error::DimensionMismatch { .. })));
    }
}
