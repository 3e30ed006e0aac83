use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Uniformly spaced observations of a price, demand or pv series.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSample<T> {
    /// Hours, strictly increasing with constant spacing.
    pub timestamps: Vec<T>,
    pub values: Vec<T>,
}

impl<T: Scalar> SeriesSample<T> {
    pub fn new(timestamps: Vec<T>, values: Vec<T>) -> Result<Self> {
        let s = Self { timestamps, values };
        s.validate()?;
        Ok(s)
    }

    /// Samples `f` on `start + j * step` for `j < count`.
    pub fn from_fn(start: T, step: T, count: usize, mut f: impl FnMut(usize, T) -> T) -> Self {
        let timestamps: Vec<T> = (0..count)
            .map(|j| start + step * T::from_usize_lossy(j))
            .collect();
        let values = timestamps.iter().enumerate().map(|(j, &t)| f(j, t)).collect();
        Self { timestamps, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sampling interval. Meaningful once [`validate`](Self::validate) passed.
    pub fn spacing(&self) -> T {
        self.timestamps[1] - self.timestamps[0]
    }

    pub fn validate(&self) -> Result<()> {
        if self.timestamps.len() != self.values.len() {
            return Err(Error::InvalidConfig("timestamps and values differ in length".into()));
        }
        if self.len() < 2 {
            return Err(Error::InsufficientData {
                needed: 2,
                got: self.len(),
            });
        }
        let dt = self.spacing();
        if !(dt > T::zero()) {
            return Err(Error::InvalidConfig("timestamps must be strictly increasing".into()));
        }
        let tol = dt * T::lit(1e-6);
        for (j, w) in self.timestamps.windows(2).enumerate() {
            if ((w[1] - w[0]) - dt).abs() > tol {
                return Err(Error::InvalidConfig(format!(
                    "non-uniform spacing between samples {j} and {}",
                    j + 1
                )));
            }
        }
        if self.values.iter().any(|v| !v.is_finite() || *v < T::zero()) {
            return Err(Error::InvalidConfig("values must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Reads a `timestamp_hours,value` CSV with a header row.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let name = path.display().to_string();
        let parse_err = |line: u64, message: String| Error::Parse {
            path: name.clone(),
            line,
            message,
        };
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| parse_err(0, e.to_string()))?;
        let headers = reader
            .headers()
            .map_err(|e| parse_err(1, e.to_string()))?
            .clone();
        if headers.len() != 2 || &headers[0] != "timestamp_hours" || &headers[1] != "value" {
            return Err(parse_err(1, "expected header `timestamp_hours,value`".into()));
        }
        let mut timestamps = Vec::new();
        let mut values = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                parse_err(line, e.to_string())
            })?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            if record.len() != 2 {
                return Err(parse_err(line, format!("expected 2 fields, got {}", record.len())));
            }
            let field = |i: usize| -> Result<T> {
                record[i]
                    .parse::<f64>()
                    .map(T::lit)
                    .map_err(|e| parse_err(line, format!("field {}: {e}", i + 1)))
            };
            timestamps.push(field(0)?);
            values.push(field(1)?);
        }
        if values.is_empty() {
            return Err(parse_err(1, "no data rows".into()));
        }
        Self::new(timestamps, values).map_err(|e| parse_err(0, e.to_string()))
    }

    /// Writes the CSV with full round-trip precision.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("timestamp_hours,value\n");
        for (t, v) in self.timestamps.iter().zip(&self.values) {
            out.push_str(&format!("{:?},{:?}\n", t.as_f64(), v.as_f64()));
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let s = SeriesSample::from_fn(0.0f64, 1.0 / 12.0, 50, |_, t| (t * 0.37).sin().abs() + 0.1);
        s.write_csv(&path).unwrap();
        let back = SeriesSample::<f64>::read_csv(&path).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn empty_csv_names_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        std::fs::write(&path, "").unwrap();
        let err = SeriesSample::<f64>::read_csv(&path).unwrap_err();
        assert!(err.to_string().contains("empty.csv"), "{err}");
    }

    #[test]
    fn bad_number_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "timestamp_hours,value\n0,1.0\n1,abc\n").unwrap();
        let err = SeriesSample::<f64>::read_csv(&path).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn non_uniform_rejected() {
        assert!(SeriesSample::new(vec![0.0, 1.0, 2.5], vec![1.0, 1.0, 1.0]).is_err());
    }
}
