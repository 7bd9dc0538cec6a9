//! Isotropic versus anisotropic model choice by AIC on simulated fields.

use std::f64::consts::PI;

use anisofield::likelihood::Observations;
use anisofield::ml::{fit_ml, fit_ml_isotropic, SearchConfig};
use anisofield::simulate::{sample_seed, GrfSampler};
use anisofield::{AnisotropyParams, Error, GridDomain, MaternSpec, Result};
use rayon::prelude::*;

use crate::csv::{fields, flag, parse_bool, parse_f64, parse_table, parse_usize};

pub const DEFAULT_LAMBDAS: [f64; 3] = [0.25, 0.5, 0.75];

/// The fixed part of the simulation model: `α = π/4`, `θ = 2`, `σ² = 1`.
pub fn scenario_params(lambda: f64) -> Result<AnisotropyParams> {
    AnisotropyParams::new(PI / 4.0, lambda, 2.0, 1.0)
}

/// One replicate: both fits on the same field. A failed fit leaves its
/// values as NaN and sets `failed`.
#[derive(Debug, Clone, PartialEq)]
pub struct AicRecord {
    pub lambda: f64,
    pub replicate: usize,
    pub iso_loglik: f64,
    pub aniso_loglik: f64,
    pub iso_aic: f64,
    pub aniso_aic: f64,
    pub failed: bool,
}

impl AicRecord {
    pub const CSV_HEADER: &'static str = "lambda,replicate,iso_loglik,aniso_loglik,iso_aic,aniso_aic,aniso_preferred,failed";

    pub fn aniso_preferred(&self) -> bool {
        !self.failed && self.aniso_aic < self.iso_aic
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.lambda,
            self.replicate,
            self.iso_loglik,
            self.aniso_loglik,
            self.iso_aic,
            self.aniso_aic,
            flag(self.aniso_preferred()),
            flag(self.failed)
        )
    }

    pub fn parse_csv_row(line: &str) -> Result<Self> {
        let f = fields(line, 8)?;
        Ok(Self {
            lambda: parse_f64(f[0])?,
            replicate: parse_usize(f[1])?,
            iso_loglik: parse_f64(f[2])?,
            aniso_loglik: parse_f64(f[3])?,
            iso_aic: parse_f64(f[4])?,
            aniso_aic: parse_f64(f[5])?,
            failed: parse_bool(f[7])?,
        })
    }
}

pub fn aic_to_csv(rows: &[AicRecord]) -> String {
    let mut out = String::from(AicRecord::CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    out
}

pub fn aic_from_csv(text: &str) -> Result<Vec<AicRecord>> {
    parse_table(text, AicRecord::CSV_HEADER, AicRecord::parse_csv_row)
}

/// Replicates for every ratio, in ratio-then-replicate order. Scenario
/// `i` uses field seeds `sample_seed(seed, i, replicate)`.
pub fn aic_experiment(lambdas: &[f64], replicates: usize, seed: u64, search: &SearchConfig) -> Result<Vec<AicRecord>> {
    let spec = MaternSpec::three_halves();
    let domain = GridDomain::square16();
    let samplers = lambdas
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            GrfSampler::new(domain, &scenario_params(l)?, spec).map_err(|e| Error::Simulation {
                config: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..lambdas.len())
        .flat_map(|i| (0..replicates).map(move |r| (i, r)))
        .collect();
    Ok(jobs
        .par_iter()
        .map(|&(i, r)| {
            let field = samplers[i].sample(sample_seed(seed, i, r));
            let fits = Observations::from_field(&field)
                .and_then(|obs| Ok((fit_ml_isotropic(&obs, spec, search)?, fit_ml(&obs, spec, search)?)));
            match fits {
                Ok((iso, aniso)) => AicRecord {
                    lambda: lambdas[i],
                    replicate: r,
                    iso_loglik: iso.loglik,
                    aniso_loglik: aniso.loglik,
                    iso_aic: iso.aic,
                    aniso_aic: aniso.aic,
                    failed: false,
                },
                Err(_) => AicRecord {
                    lambda: lambdas[i],
                    replicate: r,
                    iso_loglik: f64::NAN,
                    aniso_loglik: f64::NAN,
                    iso_aic: f64::NAN,
                    aniso_aic: f64::NAN,
                    failed: true,
                },
            }
        })
        .collect())
}

/// Share of replicates at `lambda` where the anisotropic model has the
/// lower AIC (failed replicates count against it).
pub fn preferred_fraction(rows: &[AicRecord], lambda: f64) -> f64 {
    let at: Vec<_> = rows.iter().filter(|r| r.lambda == lambda).collect();
    if at.is_empty() {
        return f64::NAN;
    }
    at.iter().filter(|r| r.aniso_preferred()).count() as f64 / at.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            AicRecord {
                lambda: 0.25,
                replicate: 0,
                iso_loglik: -310.25,
                aniso_loglik: -290.125,
                iso_aic: 624.5,
                aniso_aic: 588.25,
                failed: false,
            },
            AicRecord {
                lambda: 0.75,
                replicate: 3,
                iso_loglik: f64::NAN,
                aniso_loglik: f64::NAN,
                iso_aic: f64::NAN,
                aniso_aic: f64::NAN,
                failed: true,
            },
        ];
        let back = aic_from_csv(&aic_to_csv(&rows)).unwrap();
        assert_eq!(back[0], rows[0]);
        assert!(back[1].failed && back[1].iso_aic.is_nan());
        assert_eq!(preferred_fraction(&rows, 0.25), 1.0);
        assert_eq!(preferred_fraction(&rows, 0.75), 0.0);
    }
}
