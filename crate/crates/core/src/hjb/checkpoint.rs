//! Binary value-field files: one JSON header line, then the values as
//! little-endian `f64` in `[t][p][s]` order.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::field::ValueField;
use super::grid::SolverGrid;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const FORMAT: &str = "selfcons-value-field";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    /// `[n_t, n_p, n_s]`.
    pub dims: [usize; 3],
    pub grid: SolverGrid<f64>,
    pub config_hash: String,
}

impl CheckpointHeader {
    pub fn verify_hash(&self, expected: &str) -> Result<()> {
        if self.config_hash != expected {
            return Err(Error::CheckpointMismatch(format!(
                "checkpoint was solved for config {}, current config is {}",
                self.config_hash, expected
            )));
        }
        Ok(())
    }
}

fn grid_to_f64<T: Scalar>(g: &SolverGrid<T>) -> SolverGrid<f64> {
    SolverGrid {
        time_step: g.time_step.as_f64(),
        p_min: g.p_min.as_f64(),
        p_max: g.p_max.as_f64(),
        p_step: g.p_step.as_f64(),
        s_step: g.s_step.as_f64(),
        s_min: g.s_min.as_f64(),
        s_max: g.s_max.as_f64(),
        horizon: g.horizon.as_f64(),
        n_t: g.n_t,
        n_p: g.n_p,
        n_s: g.n_s,
    }
}

pub fn write_checkpoint<T: Scalar>(path: &Path, field: &ValueField<T>, config_hash: &str) -> Result<()> {
    let g = &field.grid;
    let header = CheckpointHeader {
        format: FORMAT.into(),
        version: VERSION,
        dims: [g.n_t, g.n_p, g.n_s],
        grid: grid_to_f64(g),
        config_hash: config_hash.into(),
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let line = serde_json::to_string(&header).map_err(|e| Error::CheckpointMismatch(e.to_string()))?;
    out.write_all(line.as_bytes())?;
    out.write_all(b"\n")?;
    for v in &field.values {
        out.write_all(&v.as_f64().to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<(CheckpointHeader, ValueField<f64>)> {
    let name = path.display();
    let mut reader = BufReader::new(std::fs::File::open(path)?);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let header: CheckpointHeader = serde_json::from_str(line.trim_end())
        .map_err(|e| Error::CheckpointMismatch(format!("{name}: bad header: {e}")))?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(Error::CheckpointMismatch(format!(
            "{name}: unsupported format {} v{}",
            header.format, header.version
        )));
    }
    let g = header.grid;
    if header.dims != [g.n_t, g.n_p, g.n_s] {
        return Err(Error::CheckpointMismatch(format!("{name}: dims disagree with grid")));
    }
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.len() != g.len() * 8 {
        return Err(Error::CheckpointMismatch(format!(
            "{name}: expected {} bytes of data, found {}",
            g.len() * 8,
            bytes.len()
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((header, ValueField { grid: g, values }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::defaults;

    #[test]
    fn round_trip() {
        let b = defaults::battery::<f64>();
        let g = SolverGrid::new(0.5, -0.2, 0.2, 0.1, 0.005, &b, 2.0).unwrap();
        let mut f = ValueField::zeros(g);
        for (i, v) in f.values.iter_mut().enumerate() {
            *v = (i as f64).sqrt() * -0.1234567890123;
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.bin");
        write_checkpoint(&path, &f, "abc").unwrap();
        let (h, back) = read_checkpoint(&path).unwrap();
        assert_eq!(back, f);
        assert_eq!(h.dims, [5, 5, 7]);
        h.verify_hash("abc").unwrap();
        assert!(matches!(h.verify_hash("xyz"), Err(Error::CheckpointMismatch(_))));
    }

    #[test]
    fn truncated_file_rejected() {
        let b = defaults::battery::<f64>();
        let g = SolverGrid::new(0.5, -0.2, 0.2, 0.1, 0.005, &b, 2.0).unwrap();
        let f = ValueField::zeros(g);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.bin");
        write_checkpoint(&path, &f, "abc").unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(read_checkpoint(&path), Err(Error::CheckpointMismatch(_))));
    }
}
