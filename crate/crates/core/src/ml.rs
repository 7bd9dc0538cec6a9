//! Maximum likelihood fitting of the anisotropy triple.
//!
//! σ² is profiled out, leaving a three-dimensional search over
//! `(α, λ, θ)`. The search runs Nelder–Mead in unconstrained coordinates
//! `(a, u, v)`:
//!
//! * `a` is the angle itself, folded into `[0, π)` afterwards;
//! * `u` maps to an *extended* ratio `λₑ = λ_min^{−tanh u}` on
//!   `(λ_min, 1/λ_min)`; values above one are read as the ratio `1/λₑ`
//!   with the angle turned by a quarter turn, so λ = 1 is an interior
//!   point of the search rather than a boundary;
//! * `v` maps to `log θ` through a logistic squash onto `[θ_min, θ_max]`.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::covariance::{canonical_angle, AnisotropyParams, MaternSpec};
use crate::error::{Error, Result};
use crate::likelihood::{LikelihoodWorkspace, Observations};
use crate::nelder_mead::{minimize, NelderMeadConfig};

/// Free parameters counted by AIC for the anisotropic model (σ², α, λ, θ).
pub const K_ANISOTROPIC: usize = 4;
/// Free parameters counted by AIC for the isotropic model (σ², θ).
pub const K_ISOTROPIC: usize = 2;

/// Fewest observed sites accepted by the fitting routines.
pub const MIN_SITES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub lambda_min: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub start_alphas: Vec<f64>,
    pub start_lambdas: Vec<f64>,
    pub start_thetas: Vec<f64>,
    /// How many of the best lattice starts are refined by Nelder–Mead.
    /// `usize::MAX` refines every start.
    pub refine_top: usize,
    pub max_iterations: usize,
    pub diameter_tol: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            lambda_min: 0.01,
            theta_min: 0.01,
            theta_max: 10.0,
            start_alphas: vec![0.0, PI / 3.0, 2.0 * PI / 3.0],
            start_lambdas: vec![0.25, 0.5, 0.85],
            start_thetas: vec![0.5, 1.5, 4.0],
            refine_top: 3,
            max_iterations: 500,
            diameter_tol: 1e-6,
        }
    }
}

impl SearchConfig {
    fn nm(&self) -> NelderMeadConfig {
        NelderMeadConfig {
            max_iterations: self.max_iterations,
            diameter_tol: self.diameter_tol,
        }
    }

    fn theta_of(&self, v: f64) -> f64 {
        let (lo, hi) = (self.theta_min.ln(), self.theta_max.ln());
        let s = 1.0 / (1.0 + (-v).exp());
        (lo + (hi - lo) * s).exp().clamp(self.theta_min, self.theta_max)
    }

    fn v_of(&self, theta: f64) -> f64 {
        let (lo, hi) = (self.theta_min.ln(), self.theta_max.ln());
        let s = ((theta.ln() - lo) / (hi - lo)).clamp(1e-9, 1.0 - 1e-9);
        (s / (1.0 - s)).ln()
    }

    /// Unconstrained point to `(α, λ, θ)`.
    pub fn decode(&self, x: &[f64]) -> (f64, f64, f64) {
        let span = (1.0 / self.lambda_min).ln();
        let log_ext = span * x[1].tanh();
        let (alpha, lambda) = if log_ext <= 0.0 {
            (x[0], log_ext.exp())
        } else {
            (x[0] + FRAC_PI_2, (-log_ext).exp())
        };
        (canonical_angle(alpha), lambda.max(self.lambda_min), self.theta_of(x[2]))
    }

    pub fn encode(&self, alpha: f64, lambda: f64, theta: f64) -> [f64; 3] {
        let span = (1.0 / self.lambda_min).ln();
        let t = (lambda.ln() / span).clamp(-1.0 + 1e-12, 0.0);
        [alpha, t.atanh(), self.v_of(theta)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MLResult {
    pub params: AnisotropyParams,
    pub loglik: f64,
    pub aic: f64,
    /// Free-parameter count used for `aic`.
    pub k: usize,
    pub converged: bool,
    pub iterations: usize,
    pub restarts_used: usize,
    pub evaluations: usize,
}

/// `AIC = 2k − 2ℓ̂`.
pub fn aic(loglik: f64, k: usize) -> f64 {
    2.0 * k as f64 - 2.0 * loglik
}

fn prepare(obs: &Observations) -> Result<()> {
    if obs.len() < MIN_SITES {
        return Err(Error::Missing(format!(
            "maximum likelihood needs at least {MIN_SITES} observed sites, got {}",
            obs.len()
        )));
    }
    if obs.values().iter().all(|&v| v == 0.0) {
        return Err(Error::Missing("all observations are zero".into()));
    }
    Ok(())
}

/// Negative profile log-likelihood; `+∞` where `R` cannot be factored.
fn objective(ws: &mut LikelihoodWorkspace, alpha: f64, lambda: f64, theta: f64) -> f64 {
    let Ok(p) = AnisotropyParams::new(alpha, lambda, theta, 1.0) else {
        return f64::INFINITY;
    };
    match ws.stats(&p) {
        Ok(st) => -st.profile_loglik(),
        Err(_) => f64::INFINITY,
    }
}

fn result(ws: &mut LikelihoodWorkspace, alpha: f64, lambda: f64, theta: f64) -> Result<(AnisotropyParams, f64)> {
    let corr = AnisotropyParams::new(alpha, lambda, theta, 1.0)?;
    let st = ws.stats(&corr)?;
    let params = AnisotropyParams::new(alpha, lambda, theta, st.sigma2_hat())?;
    Ok((params, st.profile_loglik()))
}

/// Anisotropic fit over `(α, λ, θ)` with σ² profiled.
pub fn fit_ml(obs: &Observations, spec: MaternSpec, config: &SearchConfig) -> Result<MLResult> {
    prepare(obs)?;
    let mut ws = LikelihoodWorkspace::new(obs.clone(), spec);

    let mut starts = Vec::new();
    for &a in &config.start_alphas {
        for &l in &config.start_lambdas {
            for &t in &config.start_thetas {
                let x = config.encode(a, l, t);
                let value = objective(&mut ws, a, l, t);
                starts.push((x, value));
            }
        }
    }
    let mut ranked: Vec<usize> = (0..starts.len()).collect();
    ranked.sort_by(|&i, &j| starts[i].1.total_cmp(&starts[j].1));
    let take = config.refine_top.clamp(1, ranked.len());

    let steps = [0.3, 0.3, 0.5];
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut iterations = 0;
    let mut evaluations = starts.len();
    let mut any_converged = false;
    for &i in &ranked[..take] {
        let m = minimize(
            |x| {
                let (a, l, t) = config.decode(x);
                objective(&mut ws, a, l, t)
            },
            &starts[i].0,
            &steps,
            config.nm(),
        );
        iterations += m.iterations;
        evaluations += m.evaluations;
        any_converged |= m.converged;
        // strict improvement keeps the earliest restart on ties
        if best.as_ref().is_none_or(|(v, _)| m.value < *v) {
            best = Some((m.value, m.x));
        }
    }
    let (best_value, best_x) = best.expect("at least one restart");
    if !best_value.is_finite() {
        return Err(Error::NotPositiveDefinite { pivot: 0 });
    }
    let (mut alpha, mut lambda, theta) = config.decode(&best_x);
    let mut loglik = -best_value;

    // A ratio indistinguishable from one is reported as exact isotropy
    // with the canonical angle 0.
    if lambda > 1.0 - 1e-3 {
        let iso = -objective(&mut ws, 0.0, 1.0, theta);
        evaluations += 1;
        if iso >= loglik - 1e-6 {
            alpha = 0.0;
            lambda = 1.0;
            loglik = iso;
        }
    }

    let (params, _) = result(&mut ws, alpha, lambda, theta)?;
    Ok(MLResult {
        params,
        loglik,
        aic: aic(loglik, K_ANISOTROPIC),
        k: K_ANISOTROPIC,
        converged: any_converged,
        iterations,
        restarts_used: take,
        evaluations,
    })
}

/// Isotropic fit: λ fixed at one, search over θ only.
pub fn fit_ml_isotropic(
    obs: &Observations,
    spec: MaternSpec,
    config: &SearchConfig,
) -> Result<MLResult> {
    prepare(obs)?;
    let mut ws = LikelihoodWorkspace::new(obs.clone(), spec);
    let mut best: Option<(f64, f64)> = None;
    let mut iterations = 0;
    let mut evaluations = 0;
    let mut any_converged = false;
    for &t in &config.start_thetas {
        let m = minimize(
            |x| objective(&mut ws, 0.0, 1.0, config.theta_of(x[0])),
            &[config.v_of(t)],
            &[0.5],
            config.nm(),
        );
        iterations += m.iterations;
        evaluations += m.evaluations;
        any_converged |= m.converged;
        if best.is_none_or(|(v, _)| m.value < v) {
            best = Some((m.value, m.x[0]));
        }
    }
    let (value, v) = best.expect("at least one start");
    if !value.is_finite() {
        return Err(Error::NotPositiveDefinite { pivot: 0 });
    }
    let (params, _) = result(&mut ws, 0.0, 1.0, config.theta_of(v))?;
    Ok(MLResult {
        params,
        loglik: -value,
        aic: aic(-value, K_ISOTROPIC),
        k: K_ISOTROPIC,
        converged: any_converged,
        iterations,
        restarts_used: config.start_thetas.len(),
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridDomain;
    use crate::simulate::simulate_grf;
    use approx::assert_relative_eq;

    fn spec() -> MaternSpec {
        MaternSpec::three_halves()
    }

    #[test]
    fn aic_examples() {
        assert_eq!(aic(0.0, 4), 8.0);
        assert_eq!(aic(-10.0, 2), 24.0);
    }

    #[test]
    fn transform_round_trip() {
        let c = SearchConfig::default();
        for &(a, l, t) in &[(0.2, 0.3, 2.0), (2.5, 0.9, 0.05), (1.0, 0.02, 9.0)] {
            let x = c.encode(a, l, t);
            let (a2, l2, t2) = c.decode(&x);
            assert_relative_eq!(a, a2, epsilon = 1e-12);
            assert_relative_eq!(l, l2, max_relative = 1e-9);
            assert_relative_eq!(t, t2, max_relative = 1e-9);
        }
        // past the fold: ratio above one becomes its reciprocal, angle turns
        let (a, l, _) = c.decode(&[0.1, 0.5, 0.0]);
        let ext = (100f64.ln() * 0.5f64.tanh()).exp();
        assert_relative_eq!(l, 1.0 / ext, max_relative = 1e-12);
        assert_relative_eq!(a, 0.1 + FRAC_PI_2, epsilon = 1e-12);
    }

    #[test]
    fn too_few_sites() {
        let obs = Observations::new(
            (0..5).map(|i| [i as f64, 0.0]).collect(),
            vec![1.0, 0.5, -0.2, 0.3, 0.9],
        )
        .unwrap();
        assert!(fit_ml(&obs, spec(), &SearchConfig::default()).is_err());
    }

    #[test]
    fn isotropic_profile_is_flat_in_alpha() {
        let p = AnisotropyParams::new(0.0, 1.0, 2.0, 1.0).unwrap();
        let f = simulate_grf(GridDomain::square16(), &p, spec(), 4).unwrap();
        let mut ws = LikelihoodWorkspace::new(Observations::from_field(&f).unwrap(), spec());
        let base = objective(&mut ws, 0.0, 1.0, 2.0);
        for &a in &[0.3, 1.0, 2.0, 3.1] {
            assert!((objective(&mut ws, a, 1.0, 2.0) - base).abs() < 1e-6);
        }
    }

    #[test]
    fn two_site_optimum_matches_rho_grid() {
        // R = [[1, ρ], [ρ, 1]]; the profile likelihood in closed form is
        // −(log σ̂² + 1) − ½ log(1 − ρ²), σ̂² = (z₁² − 2ρz₁z₂ + z₂²) / (2(1 − ρ²))
        let (z1, z2) = (1.0, 0.8);
        let profile = |rho: f64| {
            let s2 = (z1 * z1 - 2.0 * rho * z1 * z2 + z2 * z2) / (2.0 * (1.0 - rho * rho));
            -(s2.ln() + 1.0) - 0.5 * (1.0 - rho * rho).ln()
        };
        let (mut best_rho, mut best) = (0.0, f64::NEG_INFINITY);
        for k in 1..1_000_000 {
            let rho = k as f64 * 1e-6;
            let v = profile(rho);
            if v > best {
                best = v;
                best_rho = rho;
            }
        }
        let obs = Observations::new(vec![[0.0, 0.0], [1.0, 0.0]], vec![z1, z2]).unwrap();
        let cfg = SearchConfig::default();
        let mut ws = LikelihoodWorkspace::new(obs, spec());
        let m = minimize(
            |x| objective(&mut ws, 0.0, 1.0, cfg.theta_of(x[0])),
            &[0.0],
            &[0.5],
            NelderMeadConfig::default(),
        );
        let rho = spec().correlation(1.0, cfg.theta_of(m.x[0]));
        assert!((rho - best_rho).abs() < 1e-4, "{rho} vs {best_rho}");
        assert!((-m.value - best).abs() < 1e-8);
    }

    #[test]
    fn line_fit_matches_grid_search() {
        // sites on a horizontal line with λ = 1: compare the isotropic fit
        // with a dense 1-D grid over θ
        let sites: Vec<[f64; 2]> = (0..12).map(|i| [i as f64, 0.0]).collect();
        let vals = vec![0.3, 0.8, 1.1, 0.7, 0.2, -0.4, -0.9, -1.0, -0.6, 0.1, 0.5, 0.6];
        let obs = Observations::new(sites, vals).unwrap();
        let cfg = SearchConfig::default();
        let fit = fit_ml_isotropic(&obs, spec(), &cfg).unwrap();
        let mut ws = LikelihoodWorkspace::new(obs, spec());
        let (mut best_t, mut best_v) = (0.0, f64::INFINITY);
        for k in 0..=200_000 {
            let t = 0.01 * (1000f64).powf(k as f64 / 200_000.0);
            let v = objective(&mut ws, 0.0, 1.0, t);
            if v < best_v {
                best_v = v;
                best_t = t;
            }
        }
        assert!((fit.params.theta - best_t).abs() < 1e-4, "{} vs {best_t}", fit.params.theta);
        assert!(fit.loglik >= -best_v - 1e-9);
    }

    #[test]
    fn scaling_data_scales_sigma2_only() {
        let p = AnisotropyParams::new(0.8, 0.4, 1.5, 1.0).unwrap();
        let f = simulate_grf(GridDomain::new(8, 8).unwrap(), &p, spec(), 21).unwrap();
        let obs = Observations::from_field(&f).unwrap();
        let cfg = SearchConfig::default();
        let a = fit_ml(&obs, spec(), &cfg).unwrap();
        let b = fit_ml(&obs.scaled(3.0), spec(), &cfg).unwrap();
        assert_relative_eq!(a.params.alpha, b.params.alpha, epsilon = 1e-4);
        assert_relative_eq!(a.params.lambda, b.params.lambda, epsilon = 1e-4);
        assert_relative_eq!(a.params.theta, b.params.theta, max_relative = 1e-4);
        assert_relative_eq!(b.params.sigma2, 9.0 * a.params.sigma2, max_relative = 1e-3);
    }

    #[test]
    fn isotropic_data_fits_agree_on_range() {
        let p = AnisotropyParams::new(0.0, 1.0, 1.5, 1.0).unwrap();
        let f = simulate_grf(GridDomain::new(10, 10).unwrap(), &p, spec(), 8).unwrap();
        let obs = Observations::from_field(&f).unwrap();
        let cfg = SearchConfig::default();
        let iso = fit_ml_isotropic(&obs, spec(), &cfg).unwrap();
        let aniso = fit_ml(&obs, spec(), &cfg).unwrap();
        assert!(aniso.loglik >= iso.loglik - 1e-6);
        if aniso.params.lambda == 1.0 {
            assert_relative_eq!(aniso.params.theta, iso.params.theta, max_relative = 1e-3);
            assert_eq!(aniso.params.alpha, 0.0);
        }
        assert_eq!(iso.k, 2);
        assert_eq!(aniso.k, 4);
    }
}
