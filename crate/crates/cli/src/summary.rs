//! Binned bias and spread of estimation errors.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use anisofield::Result;

use crate::csv::{fields, parse_f64, parse_table, parse_usize};
use crate::records::{EstimateRecord, Method};

pub const BINS: usize = 10;

/// Single-pass mean and variance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    count: usize,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Sample standard deviation (divisor `n − 1`); zero for one value.
    pub fn std(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).sqrt()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Parameter {
    Alpha,
    Lambda,
    Theta,
}

impl Parameter {
    pub const ALL: [Parameter; 3] = [Parameter::Alpha, Parameter::Lambda, Parameter::Theta];

    pub fn name(self) -> &'static str {
        match self {
            Parameter::Alpha => "alpha",
            Parameter::Lambda => "lambda",
            Parameter::Theta => "theta",
        }
    }

    fn index(self) -> usize {
        self as usize
    }

    /// The half-open interval split into [`BINS`] equal bins: all angles,
    /// and the densely sampled part of the ratio and range axes.
    pub fn range(self) -> (f64, f64) {
        match self {
            Parameter::Alpha => (0.0, PI),
            Parameter::Lambda => (0.3, 0.7),
            Parameter::Theta => (1.0, 3.0),
        }
    }

    pub fn bin_of(self, value: f64) -> Option<usize> {
        let (lo, hi) = self.range();
        if !(lo..hi).contains(&value) {
            return None;
        }
        Some((((value - lo) / (hi - lo)) * BINS as f64).floor().min((BINS - 1) as f64) as usize)
    }

    pub fn bin_center(self, bin: usize) -> f64 {
        let (lo, hi) = self.range();
        lo + (hi - lo) * (bin as f64 + 0.5) / BINS as f64
    }

    fn parse(s: &str) -> Result<Self> {
        Parameter::ALL
            .into_iter()
            .find(|p| p.name() == s.trim())
            .ok_or_else(|| anisofield::Error::Parse(format!("unknown parameter {s:?}")))
    }
}

/// Bias and standard deviation of `estimate − truth` for one method
/// within one bin of one parameter's true value.
#[derive(Debug, Clone, PartialEq)]
pub struct BinSummary {
    pub parameter: Parameter,
    pub bin: usize,
    pub bin_center: f64,
    pub method: Method,
    pub count: usize,
    pub bias: f64,
    pub std: f64,
}

impl BinSummary {
    pub const CSV_HEADER: &'static str = "parameter,bin,bin_center,method,count,bias,std";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.parameter.name(),
            self.bin,
            self.bin_center,
            self.method,
            self.count,
            self.bias,
            self.std
        )
    }

    pub fn parse_csv_row(line: &str) -> Result<Self> {
        let f = fields(line, 7)?;
        Ok(Self {
            parameter: Parameter::parse(f[0])?,
            bin: parse_usize(f[1])?,
            bin_center: parse_f64(f[2])?,
            method: f[3].parse()?,
            count: parse_usize(f[4])?,
            bias: parse_f64(f[5])?,
            std: parse_f64(f[6])?,
        })
    }
}

/// Summaries for every (parameter, bin, method) with at least one
/// usable record, ordered by parameter, bin, then method. Records
/// without truth or marked failed are skipped; errors are plain
/// differences, including for the angle.
pub fn summarize(records: &[EstimateRecord]) -> Vec<BinSummary> {
    let mut acc: BTreeMap<(Parameter, usize, Method), RunningStats> = BTreeMap::new();
    for r in records.iter().filter(|r| !r.failed) {
        let Some(truth) = r.truth else { continue };
        let t = truth.to_array();
        let e = r.estimate();
        for p in Parameter::ALL {
            if let Some(bin) = p.bin_of(t[p.index()]) {
                acc.entry((p, bin, r.method))
                    .or_default()
                    .push(e[p.index()] - t[p.index()]);
            }
        }
    }
    acc.into_iter()
        .map(|((parameter, bin, method), s)| BinSummary {
            parameter,
            bin,
            bin_center: parameter.bin_center(bin),
            method,
            count: s.count(),
            bias: s.mean(),
            std: s.std(),
        })
        .collect()
}

pub fn summaries_to_csv(rows: &[BinSummary]) -> String {
    let mut out = String::from(BinSummary::CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    out
}

pub fn summaries_from_csv(text: &str) -> Result<Vec<BinSummary>> {
    parse_table(text, BinSummary::CSV_HEADER, BinSummary::parse_csv_row)
}
