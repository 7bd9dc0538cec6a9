//! Benchmark harness, AIC experiment and raster window scans built on
//! `anisofield`, plus the CSV formats the `anisofield` binary emits.

pub mod aic;
pub mod bench;
pub mod csv;
pub mod records;
pub mod scan;
pub mod summary;
