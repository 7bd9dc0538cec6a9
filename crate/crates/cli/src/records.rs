use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use anisofield::simulate::Label;
use anisofield::{Error, Result};

use crate::csv::{fields, flag, fmt_opt, parse_bool, parse_f64, parse_opt, parse_table, parse_usize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Ml,
    Nf,
    Nv,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Ml, Method::Nf, Method::Nv];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Ml => "ML",
            Method::Nf => "NF",
            Method::Nv => "NV",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ml" => Ok(Method::Ml),
            "nf" => Ok(Method::Nf),
            "nv" => Ok(Method::Nv),
            other => Err(Error::Parse(format!("unknown method `{other}` (expected ml, nf or nv)"))),
        }
    }
}

/// Angular distance between two axis orientations, which are only
/// defined modulo π. Always in `[0, π/2]`.
pub fn circular_alpha_error(truth: f64, estimate: f64) -> f64 {
    let d = (estimate - truth).rem_euclid(PI);
    d.min(PI - d)
}

/// One estimate of one field by one method.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRecord {
    pub config: usize,
    pub replicate: usize,
    pub method: Method,
    pub truth: Option<Label>,
    pub alpha: f64,
    pub lambda: f64,
    pub theta: f64,
    pub sigma2: Option<f64>,
    pub alpha_error: Option<f64>,
    /// Wall time of the estimate, in seconds. Not part of the CSV record.
    pub seconds: f64,
    pub converged: bool,
    pub out_of_domain: bool,
    pub failed: bool,
}

impl EstimateRecord {
    pub const CSV_HEADER: &'static str = "config,replicate,method,true_alpha,true_lambda,true_theta,alpha,lambda,theta,sigma2,alpha_error,converged,out_of_domain,failed";

    pub fn estimate(&self) -> [f64; 3] {
        [self.alpha, self.lambda, self.theta]
    }

    pub fn to_csv_row(&self) -> String {
        let t = self.truth.map(|l| l.to_array());
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.config,
            self.replicate,
            self.method,
            fmt_opt(t.map(|a| a[0])),
            fmt_opt(t.map(|a| a[1])),
            fmt_opt(t.map(|a| a[2])),
            self.alpha,
            self.lambda,
            self.theta,
            fmt_opt(self.sigma2),
            fmt_opt(self.alpha_error),
            flag(self.converged),
            flag(self.out_of_domain),
            flag(self.failed),
        )
    }

    pub fn parse_csv_row(line: &str) -> Result<Self> {
        let f = fields(line, 14)?;
        let truth = match (parse_opt(f[3])?, parse_opt(f[4])?, parse_opt(f[5])?) {
            (Some(alpha), Some(lambda), Some(theta)) => Some(Label { alpha, lambda, theta }),
            (None, None, None) => None,
            _ => return Err(Error::Parse("partial true parameters".into())),
        };
        Ok(Self {
            config: parse_usize(f[0])?,
            replicate: parse_usize(f[1])?,
            method: f[2].parse()?,
            truth,
            alpha: parse_f64(f[6])?,
            lambda: parse_f64(f[7])?,
            theta: parse_f64(f[8])?,
            sigma2: parse_opt(f[9])?,
            alpha_error: parse_opt(f[10])?,
            seconds: 0.0,
            converged: parse_bool(f[11])?,
            out_of_domain: parse_bool(f[12])?,
            failed: parse_bool(f[13])?,
        })
    }
}

pub fn records_to_csv(records: &[EstimateRecord]) -> String {
    let mut out = String::from(EstimateRecord::CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    out
}

pub fn records_from_csv(text: &str) -> Result<Vec<EstimateRecord>> {
    parse_table(text, EstimateRecord::CSV_HEADER, EstimateRecord::parse_csv_row)
}

/// Per-record wall times, kept apart from the records so those stay
/// reproducible byte for byte.
pub fn timings_to_csv(records: &[EstimateRecord]) -> String {
    let mut out = String::from("config,replicate,method,seconds\n");
    for r in records {
        out.push_str(&format!("{},{},{},{:.6}\n", r.config, r.replicate, r.method, r.seconds));
    }
    out
}
