//! Simulation benchmark: fields at known parameters, estimated by any of
//! the three methods.

use std::f64::consts::PI;
use std::time::Instant;

use anisofield::estimator::ModelArtifact;
use anisofield::likelihood::Observations;
use anisofield::ml::{fit_ml, SearchConfig};
use anisofield::simulate::{sample_seed, GrfSampler, Label, ParamGrid};
use anisofield::{Error, FieldGrid, GridDomain, MaternSpec, Result};
use rayon::prelude::*;

use crate::records::{circular_alpha_error, EstimateRecord, Method};

/// Validation configurations: 20 angles `kπ/20` and 34 equally spaced
/// ratios in `[0.3, 0.7)` and ranges in `[1, 3)`, 23,120 in all.
pub fn validation_param_grid() -> ParamGrid {
    ParamGrid {
        alphas: (0..20).map(|k| k as f64 * PI / 20.0).collect(),
        lambdas: (0..34).map(|i| 0.3 + 0.4 * i as f64 / 34.0).collect(),
        thetas: (0..34).map(|i| 1.0 + 2.0 * i as f64 / 34.0).collect(),
    }
}

/// Trained models and the likelihood search settings.
#[derive(Debug, Clone, Default)]
pub struct Estimators {
    pub nf: Option<ModelArtifact>,
    pub nv: Option<ModelArtifact>,
    pub ml: SearchConfig,
}

impl Estimators {
    fn check(&self, methods: &[Method]) -> Result<()> {
        for m in methods {
            let present = match m {
                Method::Ml => true,
                Method::Nf => self.nf.is_some(),
                Method::Nv => self.nv.is_some(),
            };
            if !present {
                return Err(Error::Missing(format!("no model artifact given for {m}")));
            }
        }
        Ok(())
    }

    /// Estimate `field` with `method`. ML failures become a record
    /// flagged `failed`; network errors propagate.
    pub fn estimate(&self, method: Method, field: &FieldGrid, spec: MaternSpec) -> Result<EstimateRecord> {
        let start = Instant::now();
        let mut rec = EstimateRecord {
            config: 0,
            replicate: 0,
            method,
            truth: None,
            alpha: f64::NAN,
            lambda: f64::NAN,
            theta: f64::NAN,
            sigma2: None,
            alpha_error: None,
            seconds: 0.0,
            converged: false,
            out_of_domain: false,
            failed: false,
        };
        match method {
            Method::Ml => match Observations::from_field(field).and_then(|obs| fit_ml(&obs, spec, &self.ml)) {
                Ok(fit) => {
                    rec.alpha = fit.params.alpha;
                    rec.lambda = fit.params.lambda;
                    rec.theta = fit.params.theta;
                    rec.sigma2 = Some(fit.params.sigma2);
                    rec.converged = fit.converged;
                }
                Err(_) => rec.failed = true,
            },
            Method::Nf | Method::Nv => {
                let model = if method == Method::Nf { &self.nf } else { &self.nv };
                let model = model
                    .as_ref()
                    .ok_or_else(|| Error::Missing(format!("no model artifact given for {method}")))?;
                let e = model.estimate(field)?;
                rec.alpha = e.alpha;
                rec.lambda = e.lambda;
                rec.theta = e.theta;
                rec.converged = true;
                rec.out_of_domain = e.out_of_domain;
            }
        }
        rec.seconds = start.elapsed().as_secs_f64();
        Ok(rec)
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub methods: Vec<Method>,
    pub configs: Vec<Label>,
    pub replicates: usize,
    pub seed: u64,
    pub spec: MaternSpec,
    pub domain: GridDomain,
}

/// Simulates `replicates` unit-variance fields per configuration and
/// estimates each with every method. Records come back ordered by
/// configuration, replicate, then method, whatever the thread count.
pub fn benchmark(config: &BenchConfig, estimators: &Estimators) -> Result<Vec<EstimateRecord>> {
    estimators.check(&config.methods)?;
    let per_config: Vec<Result<Vec<EstimateRecord>>> = config
        .configs
        .par_iter()
        .enumerate()
        .map(|(ci, label)| {
            let sampler = GrfSampler::new(config.domain, &label.params(1.0)?, config.spec).map_err(|e| Error::Simulation {
                config: ci,
                source: Box::new(e),
            })?;
            let mut out = Vec::with_capacity(config.replicates * config.methods.len());
            for rep in 0..config.replicates {
                let field = sampler.sample(sample_seed(config.seed, ci, rep));
                for &m in &config.methods {
                    let mut rec = estimators.estimate(m, &field, config.spec)?;
                    rec.config = ci;
                    rec.replicate = rep;
                    rec.truth = Some(*label);
                    if !rec.failed {
                        rec.alpha_error = Some(circular_alpha_error(label.alpha, rec.alpha));
                    }
                    out.push(rec);
                }
            }
            Ok(out)
        })
        .collect();
    let mut records = Vec::new();
    for chunk in per_config {
        records.extend(chunk?);
    }
    Ok(records)
}
