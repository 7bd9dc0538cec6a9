//! Exact Gaussian random field simulation by dense Cholesky factorization
//! of the covariance matrix, and the labeled training grid.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::covariance::{fill_correlation, AnisotropyParams, MaternSpec};
use crate::error::{Error, Result};
use crate::grid::{FieldGrid, GridDomain};
use crate::linalg::{cholesky_with_jitter, lower_mul_vec};
use crate::rng::{fill_standard_normal, stream};

/// Holds the Cholesky factor of `σ²R` over a grid so that many
/// realizations can be drawn for one parameter set.
#[derive(Debug, Clone)]
pub struct GrfSampler {
    domain: GridDomain,
    factor: Vec<f64>,
}

impl GrfSampler {
    pub fn new(domain: GridDomain, params: &AnisotropyParams, spec: MaternSpec) -> Result<Self> {
        let n = domain.len();
        let mut corr = vec![0.0; n * n];
        fill_correlation(&domain.sites(), params, spec, &mut corr);
        let mut factor = Vec::with_capacity(n * n);
        cholesky_with_jitter(&corr, n, 1.0, &mut factor)?;
        // L(σ²R) = σ L(R)
        let sd = params.sigma2.sqrt();
        if sd != 1.0 {
            factor.iter_mut().for_each(|v| *v *= sd);
        }
        Ok(Self { domain, factor })
    }

    pub fn domain(&self) -> GridDomain {
        self.domain
    }

    /// One realization; identical seeds give bit-identical fields.
    pub fn sample(&self, seed: u64) -> FieldGrid {
        let n = self.domain.len();
        let mut rng = stream(seed, &[]);
        let mut eps = vec![0.0; n];
        fill_standard_normal(&mut rng, &mut eps);
        let mut values = vec![0.0; n];
        lower_mul_vec(&self.factor, n, &eps, &mut values);
        FieldGrid::new(self.domain, values).expect("finite simulated values")
    }
}

pub fn simulate_grf(
    domain: GridDomain,
    params: &AnisotropyParams,
    spec: MaternSpec,
    seed: u64,
) -> Result<FieldGrid> {
    Ok(GrfSampler::new(domain, params, spec)?.sample(seed))
}

/// Target triple learned by the networks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Label {
    pub alpha: f64,
    pub lambda: f64,
    pub theta: f64,
}

impl Label {
    pub fn to_array(self) -> [f64; 3] {
        [self.alpha, self.lambda, self.theta]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self {
            alpha: a[0],
            lambda: a[1],
            theta: a[2],
        }
    }

    pub fn params(&self, sigma2: f64) -> Result<AnisotropyParams> {
        AnisotropyParams::new(self.alpha, self.lambda, self.theta, sigma2)
    }
}

/// Cartesian product of angle, ratio and range values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub alphas: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub thetas: Vec<f64>,
}

/// `k` points `a + (b−a)·i/k`, `i = 0..k` (half-open `[a, b)`).
fn half_open(a: f64, b: f64, k: usize) -> impl Iterator<Item = f64> {
    (0..k).map(move |i| a + (b - a) * i as f64 / k as f64)
}

/// `k` points strictly inside `(a, b)`.
fn open(a: f64, b: f64, k: usize) -> impl Iterator<Item = f64> {
    (1..=k).map(move |i| a + (b - a) * i as f64 / (k + 1) as f64)
}

/// `k` points covering `[a, b]` inclusively.
fn closed(a: f64, b: f64, k: usize) -> impl Iterator<Item = f64> {
    (0..k).map(move |i| a + (b - a) * i as f64 / (k - 1) as f64)
}

/// The 20 × 150 × 150 training grid.
pub fn training_param_grid() -> ParamGrid {
    let alphas = half_open(0.0, PI, 20).collect();
    let lambdas = open(0.0, 0.3, 25)
        .chain(half_open(0.3, 0.7, 100))
        .chain(closed(0.7, 1.0, 25))
        .collect();
    let thetas = half_open(0.02, 1.0, 25)
        .chain(half_open(1.0, 3.0, 100))
        .chain(closed(3.0, 5.0, 25))
        .collect();
    ParamGrid {
        alphas,
        lambdas,
        thetas,
    }
}

impl ParamGrid {
    pub fn len(&self) -> usize {
        self.alphas.len() * self.lambdas.len() * self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Configuration `index` in alpha-major, theta-fastest order.
    pub fn config(&self, index: usize) -> Label {
        let nt = self.thetas.len();
        let nl = self.lambdas.len();
        Label {
            alpha: self.alphas[index / (nl * nt)],
            lambda: self.lambdas[(index / nt) % nl],
            theta: self.thetas[index % nt],
        }
    }

    pub fn configs(&self) -> Vec<Label> {
        (0..self.len()).map(|i| self.config(i)).collect()
    }

    /// A seeded uniform subsample without replacement, in ascending
    /// configuration order.
    pub fn subsample(&self, count: usize, seed: u64) -> Vec<Label> {
        let count = count.min(self.len());
        let mut rng = stream(seed, &[0x5ab5]);
        let mut idx = rand::seq::index::sample(&mut rng, self.len(), count).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| self.config(i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub field: FieldGrid,
    pub label: Label,
}

/// Seed of replicate `replicate` of configuration `config`.
pub fn sample_seed(base_seed: u64, config: usize, replicate: usize) -> u64 {
    crate::rng::derive_seed(base_seed, &[config as u64, replicate as u64])
}

/// Streams `configs.len() · fields_per_config` labeled realizations in
/// configuration order, replicates innermost.
pub fn generate_dataset<'a>(
    configs: &'a [Label],
    domain: GridDomain,
    spec: MaternSpec,
    fields_per_config: usize,
    base_seed: u64,
) -> impl Iterator<Item = Result<LabeledSample>> + 'a {
    configs.iter().enumerate().flat_map(move |(ci, &label)| {
        let sampler = label
            .params(1.0)
            .and_then(|p| GrfSampler::new(domain, &p, spec))
            .map_err(|e| Error::Simulation {
                config: ci,
                source: Box::new(e),
            });
        let items: Box<dyn Iterator<Item = Result<LabeledSample>>> = match sampler {
            Ok(s) => Box::new((0..fields_per_config).map(move |r| {
                Ok(LabeledSample {
                    field: s.sample(sample_seed(base_seed, ci, r)),
                    label,
                })
            })),
            Err(e) => Box::new(std::iter::once(Err(e))),
        };
        items
    })
}
