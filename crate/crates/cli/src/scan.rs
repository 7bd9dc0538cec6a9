//! Sliding-window estimation over a gridded raster.

use std::path::{Path, PathBuf};

use anisofield::{Error, FieldGrid, MaternSpec, Result};
use rayon::prelude::*;

use crate::bench::Estimators;
use crate::csv::{fields, flag, parse_bool, parse_f64, parse_table, parse_usize};
use crate::records::Method;

/// Largest share of missing cells an NV window may have.
pub const NV_MAX_MISSING: f64 = 0.2;

/// A raster read from CSV (`NaN` marks land or no data) with optional
/// metadata from a JSON sidecar `<file>.json`.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterGrid {
    pub grid: FieldGrid,
    pub cell_size: Option<f64>,
    pub metadata: Option<serde_json::Value>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

impl RasterGrid {
    pub fn new(grid: FieldGrid) -> Self {
        Self {
            grid,
            cell_size: None,
            metadata: None,
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let grid = FieldGrid::read_csv(path)?;
        let side = sidecar_path(path);
        let metadata = if side.exists() {
            let text = std::fs::read_to_string(&side)?;
            Some(serde_json::from_str::<serde_json::Value>(&text).map_err(|e| Error::Parse(format!("{}: {e}", side.display())))?)
        } else {
            None
        };
        let cell_size = metadata
            .as_ref()
            .and_then(|m| m.get("cell_size"))
            .and_then(|v| v.as_f64());
        Ok(Self {
            grid,
            cell_size,
            metadata,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PixelStatus {
    Ok,
    /// Missing cells beyond what the method tolerates.
    Incomplete,
    /// Zero spread inside the window.
    Constant,
    /// The estimator itself failed.
    Failed,
}

impl PixelStatus {
    pub fn name(self) -> &'static str {
        match self {
            PixelStatus::Ok => "ok",
            PixelStatus::Incomplete => "incomplete",
            PixelStatus::Constant => "constant",
            PixelStatus::Failed => "failed",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        [PixelStatus::Ok, PixelStatus::Incomplete, PixelStatus::Constant, PixelStatus::Failed]
            .into_iter()
            .find(|p| p.name() == s.trim())
            .ok_or_else(|| Error::Parse(format!("unknown pixel status {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanPixel {
    pub row: usize,
    pub col: usize,
    pub status: PixelStatus,
    pub alpha: f64,
    pub lambda: f64,
    pub theta: f64,
    pub out_of_domain: bool,
}

impl ScanPixel {
    pub const CSV_HEADER: &'static str = "row,col,status,alpha,lambda,theta,out_of_domain";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.row,
            self.col,
            self.status.name(),
            self.alpha,
            self.lambda,
            self.theta,
            flag(self.out_of_domain)
        )
    }

    pub fn parse_csv_row(line: &str) -> Result<Self> {
        let f = fields(line, 7)?;
        Ok(Self {
            row: parse_usize(f[0])?,
            col: parse_usize(f[1])?,
            status: PixelStatus::parse(f[2])?,
            alpha: parse_f64(f[3])?,
            lambda: parse_f64(f[4])?,
            theta: parse_f64(f[5])?,
            out_of_domain: parse_bool(f[6])?,
        })
    }
}

pub fn scan_to_csv(pixels: &[ScanPixel]) -> String {
    let mut out = String::from(ScanPixel::CSV_HEADER);
    out.push('\n');
    for p in pixels {
        out.push_str(&p.to_csv_row());
        out.push('\n');
    }
    out
}

pub fn scan_from_csv(text: &str) -> Result<Vec<ScanPixel>> {
    parse_table(text, ScanPixel::CSV_HEADER, ScanPixel::parse_csv_row)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanOutput {
    pub pixels: Vec<ScanPixel>,
    pub warnings: Vec<String>,
}

/// Cells before and after the center along one axis for a window of
/// `size`: an even window centered at `p` spans `p − size/2 + 1 ..= p + size/2`.
pub fn window_extent(size: usize) -> (usize, usize) {
    let before = (size - 1) / 2;
    (before, size - 1 - before)
}

/// The standardized window centered at `(row, col)`, or the reason it is
/// skipped. `None` when the window leaves the raster.
pub fn centered_window(grid: &FieldGrid, row: usize, col: usize, size: usize, method: Method) -> Option<std::result::Result<FieldGrid, PixelStatus>> {
    let (before, after) = window_extent(size);
    if row < before || col < before || row + after >= grid.height() || col + after >= grid.width() {
        return None;
    }
    let w = grid.window(row - before, col - before, size, size).ok()?;
    let missing = w.missing_count();
    let tolerated = match method {
        Method::Nv => missing as f64 <= NV_MAX_MISSING * (size * size) as f64,
        Method::Ml | Method::Nf => missing == 0,
    };
    if !tolerated {
        return Some(Err(PixelStatus::Incomplete));
    }
    Some(w.standardized().ok_or(PixelStatus::Constant))
}

/// Estimates at every pixel whose window fits inside the raster, in
/// row-major pixel order.
pub fn window_scan(raster: &RasterGrid, method: Method, estimators: &Estimators, spec: MaternSpec, window: usize) -> Result<ScanOutput> {
    if window < 2 {
        return Err(Error::domain("window", window as f64, "at least 2"));
    }
    let grid = &raster.grid;
    let mut warnings = Vec::new();
    if grid.width() < window || grid.height() < window {
        warnings.push(format!(
            "raster is {}x{}, smaller than the {window}x{window} window; nothing to scan",
            grid.width(),
            grid.height()
        ));
        return Ok(ScanOutput {
            pixels: Vec::new(),
            warnings,
        });
    }
    let (before, after) = window_extent(window);
    let coords: Vec<(usize, usize)> = (before..grid.height() - after)
        .flat_map(|r| (before..grid.width() - after).map(move |c| (r, c)))
        .collect();
    let pixels = coords
        .par_iter()
        .map(|&(row, col)| {
            let mut px = ScanPixel {
                row,
                col,
                status: PixelStatus::Ok,
                alpha: f64::NAN,
                lambda: f64::NAN,
                theta: f64::NAN,
                out_of_domain: false,
            };
            match centered_window(grid, row, col, window, method).expect("interior pixel") {
                Err(status) => px.status = status,
                Ok(w) => {
                    let rec = estimators.estimate(method, &w, spec)?;
                    if rec.failed {
                        px.status = PixelStatus::Failed;
                    } else {
                        px.alpha = rec.alpha;
                        px.lambda = rec.lambda;
                        px.theta = rec.theta;
                        px.out_of_domain = rec.out_of_domain;
                    }
                }
            }
            Ok(px)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScanOutput { pixels, warnings })
}
