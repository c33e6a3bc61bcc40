use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::StructuredMesh;

/// Piecewise-constant permeability, one strictly positive value per fine cell
/// (row-major, x fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct PermeabilityField {
    nx: usize,
    ny: usize,
    values: Vec<f64>,
}

impl PermeabilityField {
    pub fn new(nx: usize, ny: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != nx * ny {
            return Err(Error::Data(format!(
                "permeability has {} values, expected {}x{} = {}",
                values.len(),
                nx,
                ny,
                nx * ny
            )));
        }
        if let Some((k, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(Error::Data(format!(
                "permeability must be finite and positive, cell {k} has {v}"
            )));
        }
        Ok(Self { nx, ny, values })
    }

    pub fn constant(mesh: &StructuredMesh, value: f64) -> Result<Self> {
        Self::new(mesh.nx, mesh.ny, vec![value; mesh.cell_count()])
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn cell(&self, cell: usize) -> f64 {
        self.values[cell]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contrast(&self) -> f64 {
        self.max() / self.min()
    }

    pub fn check_mesh(&self, mesh: &StructuredMesh) -> Result<()> {
        if (self.nx, self.ny) != (mesh.nx, mesh.ny) {
            return Err(Error::Data(format!(
                "permeability is {}x{} but the fine grid is {}x{}",
                self.nx, self.ny, mesh.nx, mesh.ny
            )));
        }
        Ok(())
    }

    /// Little-endian bytes of the values, used for checksums.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.values.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    /// Reads a plain-text raster: one line per cell row, bottom row (y = 0)
    /// first, whitespace-separated positive decimals. Values are used as
    /// given; no log transform is applied.
    pub fn load_raster(path: &Path, nx: usize, ny: usize) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse_raster(&text, nx, ny)
    }

    pub fn parse_raster(text: &str, nx: usize, ny: usize) -> Result<Self> {
        let mut values = Vec::with_capacity(nx * ny);
        let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        if rows.len() != ny {
            return Err(Error::Data(format!(
                "raster has {} rows, expected {ny}",
                rows.len()
            )));
        }
        for (r, line) in rows.iter().enumerate() {
            let before = values.len();
            for tok in line.split_whitespace() {
                let v: f64 = tok.parse().map_err(|_| {
                    Error::Data(format!("raster row {r}: cannot parse {tok:?}"))
                })?;
                values.push(v);
            }
            if values.len() - before != nx {
                return Err(Error::Data(format!(
                    "raster row {r} has {} values, expected {nx}",
                    values.len() - before
                )));
            }
        }
        Self::new(nx, ny, values)
    }

    pub fn save_raster(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        for row in self.values.chunks(self.nx) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(f, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_positive() {
        assert!(matches!(
            PermeabilityField::new(2, 1, vec![1.0, 0.0]),
            Err(Error::Data(_))
        ));
        assert!(PermeabilityField::new(2, 1, vec![1.0, -3.0]).is_err());
        assert!(PermeabilityField::new(2, 1, vec![1.0]).is_err());
    }

    #[test]
    fn raster_round_trip() {
        let field = PermeabilityField::new(3, 2, vec![1.0, 2.5, 1e4, 0.125, 7.0, 3.0]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kappa.txt");
        field.save_raster(&path).unwrap();
        let back = PermeabilityField::load_raster(&path, 3, 2).unwrap();
        assert_eq!(field, back);
        assert_eq!(back.contrast(), 1e4 / 0.125);
    }

    #[test]
    fn raster_dimension_mismatch() {
        assert!(PermeabilityField::parse_raster("1 2\n3 4\n", 3, 2).is_err());
        assert!(PermeabilityField::parse_raster("1 2\n", 2, 2).is_err());
        assert!(PermeabilityField::parse_raster("1 x\n3 4\n", 2, 2).is_err());
    }
}
