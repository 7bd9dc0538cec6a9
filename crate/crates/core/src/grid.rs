//! Regular rasters of field values with an optional missing-cell mask.
//!
//! Cells are stored row-major: row `r` is `y = r + 1`, column `c` is
//! `x = c + 1`, so the site sequence runs with `x` fastest.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct GridDomain {
    pub width: usize,
    pub height: usize,
}

impl GridDomain {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Shape(format!("grid must be at least 1x1, got {width}x{height}")));
        }
        Ok(Self { width, height })
    }

    /// The 16×16 reference domain.
    pub fn square16() -> Self {
        Self {
            width: 16,
            height: 16,
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Lattice coordinates `(x, y)` of every cell in storage order.
    pub fn sites(&self) -> Vec<[f64; 2]> {
        (0..self.height)
            .flat_map(|r| (0..self.width).map(move |c| [(c + 1) as f64, (r + 1) as f64]))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    domain: GridDomain,
    values: Vec<f64>,
    missing: Vec<bool>,
}

impl FieldGrid {
    /// A fully observed grid. Every value must be finite.
    pub fn new(domain: GridDomain, values: Vec<f64>) -> Result<Self> {
        let missing = vec![false; values.len()];
        Self::with_mask(domain, values, missing)
    }

    pub fn with_mask(domain: GridDomain, values: Vec<f64>, missing: Vec<bool>) -> Result<Self> {
        if values.len() != domain.len() || missing.len() != domain.len() {
            return Err(Error::Shape(format!(
                "expected {} cells for a {}x{} grid, got {} values and {} mask entries",
                domain.len(),
                domain.width,
                domain.height,
                values.len(),
                missing.len()
            )));
        }
        if let Some(i) = values
            .iter()
            .zip(&missing)
            .position(|(v, &m)| !m && !v.is_finite())
        {
            return Err(Error::Parse(format!("non-finite value at observed cell {i}")));
        }
        // missing cells hold 0.0 so that grids compare by observed content
        let values = values
            .into_iter()
            .zip(&missing)
            .map(|(v, &m)| if m { 0.0 } else { v })
            .collect();
        Ok(Self {
            domain,
            values,
            missing,
        })
    }

    /// Builds a grid treating NaN entries as missing cells.
    pub fn from_values_nan_missing(domain: GridDomain, values: Vec<f64>) -> Result<Self> {
        let missing = values.iter().map(|v| v.is_nan()).collect();
        Self::with_mask(domain, values, missing)
    }

    pub fn domain(&self) -> GridDomain {
        self.domain
    }

    pub fn width(&self) -> usize {
        self.domain.width
    }

    pub fn height(&self) -> usize {
        self.domain.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn missing_mask(&self) -> &[bool] {
        &self.missing
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let i = row * self.domain.width + col;
        if self.missing[i] {
            None
        } else {
            Some(self.values[i])
        }
    }

    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.missing[row * self.domain.width + col]
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }

    pub fn is_complete(&self) -> bool {
        self.missing_count() == 0
    }

    /// Observed sites and their values, in storage order.
    pub fn observed(&self) -> (Vec<[f64; 2]>, Vec<f64>) {
        let w = self.domain.width;
        let mut sites = Vec::new();
        let mut vals = Vec::new();
        for (i, (&v, &m)) in self.values.iter().zip(&self.missing).enumerate() {
            if !m {
                sites.push([(i % w + 1) as f64, (i / w + 1) as f64]);
                vals.push(v);
            }
        }
        (sites, vals)
    }

    /// Apply `f` to every observed value.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        let values = self
            .values
            .iter()
            .zip(&self.missing)
            .map(|(&v, &m)| if m { v } else { f(v) })
            .collect();
        Self {
            domain: self.domain,
            values,
            missing: self.missing.clone(),
        }
    }

    /// Mark one cell as missing.
    pub fn set_missing(&mut self, row: usize, col: usize) {
        let i = row * self.domain.width + col;
        self.missing[i] = true;
        self.values[i] = 0.0;
    }

    /// Extract the `h × w` block whose top-left cell is `(row, col)`.
    pub fn window(&self, row: usize, col: usize, h: usize, w: usize) -> Result<Self> {
        if row + h > self.height() || col + w > self.width() {
            return Err(Error::Shape("window exceeds grid".into()));
        }
        let mut values = Vec::with_capacity(h * w);
        let mut missing = Vec::with_capacity(h * w);
        for r in row..row + h {
            let start = r * self.width() + col;
            values.extend_from_slice(&self.values[start..start + w]);
            missing.extend_from_slice(&self.missing[start..start + w]);
        }
        Ok(Self {
            domain: GridDomain {
                width: w,
                height: h,
            },
            values,
            missing,
        })
    }

    /// Mean and population standard deviation over observed cells.
    pub fn observed_mean_std(&self) -> Option<(f64, f64)> {
        let (_, vals) = self.observed();
        if vals.is_empty() {
            return None;
        }
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some((mean, var.sqrt()))
    }

    /// Subtract the observed mean and divide by the observed standard
    /// deviation. `None` for constant or empty grids.
    pub fn standardized(&self) -> Option<Self> {
        let (mean, std) = self.observed_mean_std()?;
        if !(std > 0.0) {
            return None;
        }
        Some(self.map_values(|v| (v - mean) / std))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for r in 0..self.height() {
            for c in 0..self.width() {
                if c > 0 {
                    out.push(',');
                }
                match self.get(r, c) {
                    Some(v) => write!(out, "{v}").unwrap(),
                    None => out.push_str("NaN"),
                }
            }
            out.push('\n');
        }
        out
    }

    /// Parse a CSV grid; `NaN` (or an empty cell) marks a missing value.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut width = None;
        let mut values = Vec::new();
        let mut height = 0;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut count = 0;
            for tok in line.split(',') {
                let tok = tok.trim();
                let v = if tok.is_empty() || tok.eq_ignore_ascii_case("nan") {
                    f64::NAN
                } else {
                    tok.parse::<f64>()
                        .map_err(|e| Error::Parse(format!("line {}: {tok:?}: {e}", lineno + 1)))?
                };
                values.push(v);
                count += 1;
            }
            match width {
                None => width = Some(count),
                Some(w) if w != count => {
                    return Err(Error::Parse(format!(
                        "line {} has {count} columns, expected {w}",
                        lineno + 1
                    )))
                }
                _ => {}
            }
            height += 1;
        }
        let width = width.ok_or_else(|| Error::Parse("empty grid".into()))?;
        Self::from_values_nan_missing(GridDomain::new(width, height)?, values)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Point reflection through the grid center: cell `(i, j)` moves to
/// `(h−1−i, w−1−j)`.
pub fn rotate180(field: &FieldGrid) -> FieldGrid {
    let mut values = field.values.clone();
    let mut missing = field.missing.clone();
    values.reverse();
    missing.reverse();
    FieldGrid {
        domain: field.domain,
        values,
        missing,
    }
}
