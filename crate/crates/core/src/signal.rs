//! Uniform-grid 1D signals: norms, means, and plain-text I/O.
//!
//! File format: one decimal value per line, `#` starts a comment line.
//! The grid spacing `h` is not stored in the file; it is supplied
//! out-of-band (CLI flag or config, default 1).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// A sampled 1D function on a uniform grid with spacing `h`.
///
/// Signals are immutable value objects: operations return new signals and
/// never change the sample count or the spacing of their inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    values: Vec<f64>,
    h: f64,
}

impl Signal {
    /// Validating constructor: at least two finite samples, positive spacing.
    pub fn new(values: Vec<f64>, h: f64) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Size(format!(
                "signal needs at least 2 samples, got {}",
                values.len()
            )));
        }
        if !h.is_finite() || h <= 0.0 {
            return Err(Error::Parameter(format!("grid spacing must be positive, got {h}")));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!("sample {i} is not finite")));
        }
        Ok(Signal { values, h })
    }

    /// Constructor for solver iterates, which may transiently carry
    /// non-finite samples in unstable regimes. Divergence checks happen at
    /// the scheme level, where a step index is available.
    pub(crate) fn from_raw(values: Vec<f64>, h: f64) -> Self {
        Signal { values, h }
    }

    /// Constant-zero signal of length `n`.
    pub(crate) fn zeros(n: usize, h: f64) -> Self {
        Signal { values: vec![0.0; n], h }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Discrete Euclidean norm `sqrt(Σ values[i]²)`, without `h`-weighting.
pub fn l2_norm(s: &Signal) -> f64 {
    l2_norm_slice(&s.values)
}

pub(crate) fn l2_norm_slice(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Arithmetic mean of the samples.
pub fn mean(s: &Signal) -> f64 {
    s.values.iter().sum::<f64>() / s.values.len() as f64
}

/// Read a signal from a plain-text file; `h` is supplied by the caller.
pub fn read_signal(path: &Path, h: f64) -> Result<Signal> {
    let text = fs::read_to_string(path)?;
    let mut values = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let value: f64 = line.parse().map_err(|_| Error::Parse {
            line: idx + 1,
            message: format!("expected a decimal value, found {line:?}"),
        })?;
        if !value.is_finite() {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!("value {line:?} is not finite"),
            });
        }
        values.push(value);
    }
    Signal::new(values, h)
}

/// Write a signal with 17 significant digits, one value per line.
pub fn write_signal(s: &Signal, path: &Path) -> Result<()> {
    let mut out = String::with_capacity(s.len() * 24);
    for v in &s.values {
        writeln!(out, "{v:.16e}").expect("string write cannot fail");
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l2_norm_examples() {
        let zero = Signal::new(vec![0.0; 4], 1.0).unwrap();
        assert_eq!(l2_norm(&zero), 0.0);
        let pyth = Signal::new(vec![3.0, 4.0], 1.0).unwrap();
        assert_eq!(l2_norm(&pyth), 5.0);
        let ones = Signal::new(vec![1.0; 4], 1.0).unwrap();
        assert_eq!(l2_norm(&ones), 2.0);
    }

    #[test]
    fn mean_examples() {
        let s = Signal::new(vec![1.0, 2.0, 3.0], 1.0).unwrap();
        assert_eq!(mean(&s), 2.0);
        let c = Signal::new(vec![0.7; 5], 1.0).unwrap();
        assert_eq!(mean(&c), 0.7);
        let odd = Signal::new(vec![-1.0, 1.0], 1.0).unwrap();
        assert_eq!(mean(&odd), 0.0);
    }

    #[test]
    fn norm_zero_iff_all_zero() {
        let s = Signal::new(vec![0.0, 1e-150], 1.0).unwrap();
        assert!(l2_norm(&s) > 0.0);
    }

    #[test]
    fn rejects_short_and_nonfinite() {
        assert!(matches!(Signal::new(vec![1.0], 1.0), Err(Error::Size(_))));
        assert!(Signal::new(vec![1.0, f64::NAN], 1.0).is_err());
        assert!(Signal::new(vec![1.0, 2.0], 0.0).is_err());
    }

    #[test]
    fn read_simple_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sig.txt");
        fs::write(&path, "0.0\n1.0\n0.0\n").unwrap();
        let s = read_signal(&path, 1.0).unwrap();
        assert_eq!(s.values(), &[0.0, 1.0, 0.0]);
        assert_eq!(s.h(), 1.0);
    }

    #[test]
    fn read_skips_comments_and_reports_bad_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sig.txt");
        fs::write(&path, "# header\n1.0\n\nnot_a_number\n").unwrap();
        match read_signal(&path, 1.0) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_a_size_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.txt");
        fs::write(&path, "").unwrap();
        assert!(matches!(read_signal(&path, 1.0), Err(Error::Size(_))));
    }

    #[test]
    fn write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.txt");
        let s = Signal::new(vec![0.1, -2.5e-7, 3.14159265358979, 1.0 / 3.0], 0.5).unwrap();
        write_signal(&s, &path).unwrap();
        let back = read_signal(&path, 0.5).unwrap();
        for (a, b) in s.values().iter().zip(back.values()) {
            assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
        }
    }
}
