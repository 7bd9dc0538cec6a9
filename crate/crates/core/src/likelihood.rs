//! Exact Gaussian log-likelihood (up to the additive constant):
//!
//! `ℓ(σ², α, λ, θ; Z) = −½ [ n log σ² + log|R| + Zᵀ(σ²R)⁻¹Z ]`
//!
//! and its profile over σ², obtained by plugging in `σ̂² = ZᵀR⁻¹Z / n`.

use crate::covariance::{check_distinct, fill_correlation, AnisotropyParams, MaternSpec};
use crate::error::{Error, Result};
use crate::grid::FieldGrid;
use crate::linalg::{cholesky_with_jitter, dot, forward_substitute, log_det_from_factor};

/// Observed sites and values, zero mean assumed.
#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    sites: Vec<[f64; 2]>,
    values: Vec<f64>,
}

impl Observations {
    pub fn new(sites: Vec<[f64; 2]>, values: Vec<f64>) -> Result<Self> {
        if sites.len() != values.len() {
            return Err(Error::Shape(format!(
                "{} sites but {} values",
                sites.len(),
                values.len()
            )));
        }
        if sites.is_empty() {
            return Err(Error::EmptyData);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Missing(format!("value {i} is not finite")));
        }
        check_distinct(&sites)?;
        Ok(Self { sites, values })
    }

    /// Uses only the observed cells of `field`.
    pub fn from_field(field: &FieldGrid) -> Result<Self> {
        let (sites, values) = field.observed();
        if sites.is_empty() {
            return Err(Error::EmptyData);
        }
        Ok(Self { sites, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sites(&self) -> &[[f64; 2]] {
        &self.sites
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            sites: self.sites.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LikelihoodEval {
    pub loglik: f64,
    pub sigma2_profile: f64,
    pub cholesky_logdet: f64,
}

/// `log|R|` and `ZᵀR⁻¹Z` for one correlation configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationStats {
    pub log_det: f64,
    pub quad_form: f64,
    pub n: usize,
}

impl CorrelationStats {
    pub fn sigma2_hat(&self) -> f64 {
        self.quad_form / self.n as f64
    }

    pub fn loglik(&self, sigma2: f64) -> f64 {
        let n = self.n as f64;
        -0.5 * (n * sigma2.ln() + self.log_det + self.quad_form / sigma2)
    }

    /// `−(n/2)(log σ̂² + 1) − ½ log|R|`; `−∞` for all-zero data.
    pub fn profile_loglik(&self) -> f64 {
        let s2 = self.sigma2_hat();
        if !(s2 > 0.0) {
            return f64::NEG_INFINITY;
        }
        -0.5 * self.n as f64 * (s2.ln() + 1.0) - 0.5 * self.log_det
    }
}

/// Reusable buffers for repeated likelihood evaluations on one data set.
#[derive(Debug, Clone)]
pub struct LikelihoodWorkspace {
    obs: Observations,
    spec: MaternSpec,
    corr: Vec<f64>,
    factor: Vec<f64>,
    rhs: Vec<f64>,
}

impl LikelihoodWorkspace {
    pub fn new(obs: Observations, spec: MaternSpec) -> Self {
        let n = obs.len();
        Self {
            obs,
            spec,
            corr: vec![0.0; n * n],
            factor: Vec::with_capacity(n * n),
            rhs: vec![0.0; n],
        }
    }

    pub fn observations(&self) -> &Observations {
        &self.obs
    }

    pub fn spec(&self) -> MaternSpec {
        self.spec
    }

    /// Factor `R(α, λ, θ)` and return the two data-dependent terms.
    /// `sigma2` of `params` is ignored.
    pub fn stats(&mut self, params: &AnisotropyParams) -> Result<CorrelationStats> {
        let n = self.obs.len();
        fill_correlation(&self.obs.sites, params, self.spec, &mut self.corr);
        cholesky_with_jitter(&self.corr, n, 1.0, &mut self.factor)?;
        self.rhs.copy_from_slice(&self.obs.values);
        forward_substitute(&self.factor, n, &mut self.rhs);
        Ok(CorrelationStats {
            log_det: log_det_from_factor(&self.factor, n),
            quad_form: dot(&self.rhs, &self.rhs),
            n,
        })
    }

    pub fn evaluate(&mut self, params: &AnisotropyParams) -> Result<LikelihoodEval> {
        let st = self.stats(params)?;
        Ok(LikelihoodEval {
            loglik: st.loglik(params.sigma2),
            sigma2_profile: st.sigma2_hat(),
            cholesky_logdet: st.log_det,
        })
    }
}

pub fn log_likelihood(
    obs: &Observations,
    params: &AnisotropyParams,
    spec: MaternSpec,
) -> Result<LikelihoodEval> {
    LikelihoodWorkspace::new(obs.clone(), spec).evaluate(params)
}

/// `σ̂² = ZᵀR⁻¹Z / n` for correlation parameters `(alpha, lambda, theta)`.
pub fn profile_sigma2(
    obs: &Observations,
    alpha: f64,
    lambda: f64,
    theta: f64,
    spec: MaternSpec,
) -> Result<f64> {
    let p = AnisotropyParams::new(alpha, lambda, theta, 1.0)?;
    Ok(LikelihoodWorkspace::new(obs.clone(), spec).stats(&p)?.sigma2_hat())
}
