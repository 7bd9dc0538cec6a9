//! Geometrically anisotropic Matérn covariance.
//!
//! The covariance between two sites separated by `h` is
//! `σ² φ(√(hᵀΩh); θ)` where `Ω = P(α)ᵀ D(λ) P(α)` stretches the circular
//! contours of the radial Matérn correlation `φ` into ellipses.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::bessel::{ln_bessel_k, ln_gamma};
use crate::error::{Error, Result};

/// Reduce an angle into `[0, π)`; α and α + π describe the same ellipse.
pub fn canonical_angle(alpha: f64) -> f64 {
    let a = alpha.rem_euclid(PI);
    if a >= PI {
        0.0
    } else {
        a
    }
}

/// The anisotropy triple plus the field variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnisotropyParams {
    pub alpha: f64,
    pub lambda: f64,
    pub theta: f64,
    pub sigma2: f64,
}

impl AnisotropyParams {
    /// Validates the domains and folds `alpha` into `[0, π)`.
    pub fn new(alpha: f64, lambda: f64, theta: f64, sigma2: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::domain("alpha", alpha, "finite"));
        }
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::domain("lambda", lambda, "(0, 1]"));
        }
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::domain("theta", theta, "> 0"));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::domain("sigma2", sigma2, "> 0"));
        }
        Ok(Self {
            alpha: canonical_angle(alpha),
            lambda,
            theta,
            sigma2,
        })
    }

    pub fn unit_variance(alpha: f64, lambda: f64, theta: f64) -> Result<Self> {
        Self::new(alpha, lambda, theta, 1.0)
    }

    pub fn matrix(&self) -> AnisotropyMatrix {
        AnisotropyMatrix::from_canonical(self.alpha, self.lambda)
    }
}

/// Matérn smoothness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaternSpec {
    nu: f64,
}

impl MaternSpec {
    pub fn new(nu: f64) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::domain("nu", nu, "> 0"));
        }
        Ok(Self { nu })
    }

    /// ν = 3/2, the smoothness used for every shipped experiment.
    pub fn three_halves() -> Self {
        Self { nu: 1.5 }
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// `Some(m)` when ν = m + 1/2 for a nonnegative integer `m`.
    pub fn half_integer_order(&self) -> Option<u32> {
        let m = self.nu - 0.5;
        let r = m.round();
        if r >= 0.0 && (m - r).abs() < 1e-12 && r < 64.0 {
            Some(r as u32)
        } else {
            None
        }
    }

    /// Correlation at distance `t`, using the closed form when available.
    pub fn correlation(&self, t: f64, theta: f64) -> f64 {
        if t == 0.0 {
            return 1.0;
        }
        let u = t / theta;
        match self.half_integer_order() {
            Some(m) => matern_half_integer(u, m),
            None => matern_general(u, self.nu),
        }
    }
}

impl Default for MaternSpec {
    fn default() -> Self {
        Self::three_halves()
    }
}

/// `exp(−u) · 2^m m!/(2m)! · Σ_k (m+k)!/(k!(m−k)!) 2^{−k} u^{m−k}`.
fn matern_half_integer(u: f64, m: u32) -> f64 {
    match m {
        0 => (-u).exp(),
        1 => (1.0 + u) * (-u).exp(),
        2 => (1.0 + u + u * u / 3.0) * (-u).exp(),
        _ => {
            let m = m as i32;
            let fact = |n: i32| (1..=n).fold(1.0f64, |acc, k| acc * k as f64);
            let scale = 2f64.powi(m) * fact(m) / fact(2 * m);
            let poly: f64 = (0..=m)
                .map(|k| fact(m + k) / (fact(k) * fact(m - k)) * 0.5f64.powi(k) * u.powi(m - k))
                .sum();
            scale * poly * (-u).exp()
        }
    }
}

/// `2^{1−ν}/Γ(ν) u^ν K_ν(u)` through the Bessel quadrature, for any ν > 0.
pub fn matern_general(u: f64, nu: f64) -> f64 {
    if u == 0.0 {
        return 1.0;
    }
    ((1.0 - nu) * std::f64::consts::LN_2 - ln_gamma(nu) + nu * u.ln() + ln_bessel_k(nu, u)).exp()
}

/// Matérn correlation `φ(t; θ)` for smoothness ν.
pub fn matern(t: f64, theta: f64, nu: f64) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(Error::domain("theta", theta, "> 0"));
    }
    if !(t >= 0.0) {
        return Err(Error::domain("t", t, ">= 0"));
    }
    Ok(MaternSpec::new(nu)?.correlation(t, theta))
}

/// Distance at which the correlation drops to `level` (0.05 for the usual
/// practical range). Bisection on the monotone correlation curve.
pub fn practical_range(theta: f64, spec: MaternSpec, level: f64) -> f64 {
    let f = |t: f64| spec.correlation(t, theta) - level;
    let mut lo = 0.0;
    let mut hi = theta;
    while f(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Symmetric 2×2 matrix `Ω`, stored as its three distinct entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnisotropyMatrix {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl AnisotropyMatrix {
    pub fn identity() -> Self {
        Self {
            xx: 1.0,
            xy: 0.0,
            yy: 1.0,
        }
    }

    // Ω = I − (1−λ) v vᵀ with v = (−sin α, cos α), the second row of P(α).
    // This form is algebraically PᵀDP and gives exactly I at λ = 1.
    fn from_canonical(alpha: f64, lambda: f64) -> Self {
        let (s, c) = alpha.sin_cos();
        let k = 1.0 - lambda;
        Self {
            xx: 1.0 - k * s * s,
            xy: k * s * c,
            yy: 1.0 - k * c * c,
        }
    }

    pub fn to_array(&self) -> [[f64; 2]; 2] {
        [[self.xx, self.xy], [self.xy, self.yy]]
    }

    pub fn determinant(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn eigenvalues(&self) -> (f64, f64) {
        let mean = 0.5 * (self.xx + self.yy);
        let half_gap = (0.25 * (self.xx - self.yy).powi(2) + self.xy * self.xy).sqrt();
        (mean - half_gap, mean + half_gap)
    }

    pub fn quadratic_form(&self, h: [f64; 2]) -> f64 {
        self.xx * h[0] * h[0] + 2.0 * self.xy * h[0] * h[1] + self.yy * h[1] * h[1]
    }
}

/// `Ω(α, λ) = P(α)ᵀ D(λ) P(α)`.
pub fn anisotropy_matrix(alpha: f64, lambda: f64) -> Result<AnisotropyMatrix> {
    if !(0.0..PI).contains(&alpha) {
        return Err(Error::domain("alpha", alpha, "[0, pi)"));
    }
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::domain("lambda", lambda, "(0, 1]"));
    }
    Ok(AnisotropyMatrix::from_canonical(alpha, lambda))
}

/// `√(hᵀΩh)`.
pub fn aniso_distance(h: [f64; 2], omega: &AnisotropyMatrix) -> f64 {
    omega.quadratic_form(h).max(0.0).sqrt()
}

pub fn covariance(h: [f64; 2], params: &AnisotropyParams, spec: MaternSpec) -> f64 {
    let d = aniso_distance(h, &params.matrix());
    params.sigma2 * spec.correlation(d, params.theta)
}

/// Dense row-major correlation matrix `R` over `sites`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl CorrelationMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}

pub fn correlation_matrix(
    sites: &[[f64; 2]],
    params: &AnisotropyParams,
    spec: MaternSpec,
) -> Result<CorrelationMatrix> {
    if sites.is_empty() {
        return Err(Error::EmptyData);
    }
    check_distinct(sites)?;
    let n = sites.len();
    let mut data = vec![0.0; n * n];
    fill_correlation(sites, params, spec, &mut data);
    Ok(CorrelationMatrix { n, data })
}

pub(crate) fn check_distinct(sites: &[[f64; 2]]) -> Result<()> {
    for i in 0..sites.len() {
        for j in 0..i {
            if sites[i] == sites[j] {
                return Err(Error::DuplicateSite(j, i));
            }
        }
    }
    Ok(())
}

/// Fills the lower and upper triangles of `out` (n×n row-major).
///
/// When every site sits on the integer lattice the correlation only
/// depends on the integer lag, so each distinct lag is evaluated once.
pub(crate) fn fill_correlation(
    sites: &[[f64; 2]],
    params: &AnisotropyParams,
    spec: MaternSpec,
    out: &mut [f64],
) {
    let n = sites.len();
    debug_assert_eq!(out.len(), n * n);
    let omega = params.matrix();
    let theta = params.theta;

    let lattice = sites
        .iter()
        .all(|s| s[0].fract() == 0.0 && s[1].fract() == 0.0 && s[0].abs() < 1e6 && s[1].abs() < 1e6);

    if lattice && n > 16 {
        let (min_x, max_x, min_y, max_y) = sites.iter().fold(
            (f64::MAX, f64::MIN, f64::MAX, f64::MIN),
            |(a, b, c, d), s| (a.min(s[0]), b.max(s[0]), c.min(s[1]), d.max(s[1])),
        );
        let span_x = (max_x - min_x) as i64;
        let span_y = (max_y - min_y) as i64;
        let w = (2 * span_x + 1) as usize;
        let table_len = w * (2 * span_y + 1) as usize;
        if table_len <= 4 * n * n {
            let mut table = vec![f64::NAN; table_len];
            for i in 0..n {
                out[i * n + i] = 1.0;
                for j in 0..i {
                    let dx = (sites[i][0] - sites[j][0]) as i64;
                    let dy = (sites[i][1] - sites[j][1]) as i64;
                    let idx = (dy + span_y) as usize * w + (dx + span_x) as usize;
                    let mut v = table[idx];
                    if v.is_nan() {
                        let d = aniso_distance([dx as f64, dy as f64], &omega);
                        v = spec.correlation(d, theta);
                        table[idx] = v;
                        // the mirrored lag has the same correlation
                        let mirror = (span_y - dy) as usize * w + (span_x - dx) as usize;
                        table[mirror] = v;
                    }
                    out[i * n + j] = v;
                    out[j * n + i] = v;
                }
            }
            return;
        }
    }

    for i in 0..n {
        out[i * n + i] = 1.0;
        for j in 0..i {
            let h = [sites[i][0] - sites[j][0], sites[i][1] - sites[j][1]];
            let v = spec.correlation(aniso_distance(h, &omega), theta);
            out[i * n + j] = v;
            out[j * n + i] = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const E_INV: f64 = 0.367_879_441_171_442_33;

    #[test]
    fn matrix_examples() {
        let m = anisotropy_matrix(0.0, 0.5).unwrap();
        assert_eq!(m.to_array(), [[1.0, 0.0], [0.0, 0.5]]);

        let m = anisotropy_matrix(PI / 2.0, 0.5).unwrap();
        assert_relative_eq!(m.xx, 0.5, epsilon = 1e-15);
        assert_relative_eq!(m.xy, 0.0, epsilon = 1e-15);
        assert_relative_eq!(m.yy, 1.0, epsilon = 1e-15);

        let m = anisotropy_matrix(PI / 4.0, 0.5).unwrap();
        assert_relative_eq!(m.xx, 0.75, epsilon = 1e-15);
        assert_relative_eq!(m.xy, 0.25, epsilon = 1e-15);
        assert_relative_eq!(m.yy, 0.75, epsilon = 1e-15);
    }

    #[test]
    fn matrix_matches_explicit_product() {
        // PᵀDP written out with the rotation matrix
        for &(a, l) in &[(0.3, 0.2), (1.9, 0.77), (2.9, 0.05)] {
            let (s, c) = f64::sin_cos(a);
            let p = [[c, s], [-s, c]];
            let d = [1.0, l];
            let mut full = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    full[i][j] = (0..2).map(|k| p[k][i] * d[k] * p[k][j]).sum();
                }
            }
            let m = anisotropy_matrix(a, l).unwrap().to_array();
            for i in 0..2 {
                for j in 0..2 {
                    assert_relative_eq!(m[i][j], full[i][j], epsilon = 1e-15);
                }
            }
        }
    }

    #[test]
    fn matrix_domain_errors() {
        assert!(anisotropy_matrix(PI, 0.5).is_err());
        assert!(anisotropy_matrix(-0.1, 0.5).is_err());
        assert!(anisotropy_matrix(0.1, 0.0).is_err());
        assert!(anisotropy_matrix(0.1, 1.2).is_err());
    }

    #[test]
    fn params_canonicalize_alpha() {
        let p = AnisotropyParams::new(PI + 0.25, 0.5, 1.0, 1.0).unwrap();
        assert_relative_eq!(p.alpha, 0.25, epsilon = 1e-14);
        let p = AnisotropyParams::new(-0.25, 0.5, 1.0, 1.0).unwrap();
        assert_relative_eq!(p.alpha, PI - 0.25, epsilon = 1e-14);
        assert_eq!(canonical_angle(-1e-18), 0.0);
        assert!(AnisotropyParams::new(0.0, 0.5, 0.0, 1.0).is_err());
        assert!(AnisotropyParams::new(0.0, 0.5, 1.0, -1.0).is_err());
        assert!(AnisotropyParams::new(f64::NAN, 0.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn distance_examples() {
        assert_eq!(aniso_distance([1.0, 0.0], &AnisotropyMatrix::identity()), 1.0);
        let m = anisotropy_matrix(0.0, 0.25).unwrap();
        assert_eq!(aniso_distance([0.0, 1.0], &m), 0.5);
        let m = anisotropy_matrix(PI / 4.0, 0.5).unwrap();
        assert_relative_eq!(aniso_distance([1.0, 1.0], &m), 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn matern_examples() {
        assert_eq!(matern(0.0, 0.7, 2.3).unwrap(), 1.0);
        assert_relative_eq!(matern(2.0, 2.0, 1.5).unwrap(), 2.0 * E_INV, epsilon = 1e-15);
        assert!(matern(1.0, 0.0, 1.5).is_err());
        assert!(matern(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn half_integer_closed_forms_match_quadrature() {
        for m in 0..6u32 {
            let nu = m as f64 + 0.5;
            for &u in &[1e-4, 0.1, 1.0, 4.0, 17.0] {
                assert_relative_eq!(
                    matern_half_integer(u, m),
                    matern_general(u, nu),
                    max_relative = 1e-11
                );
            }
        }
    }

    #[test]
    fn practical_range_three_halves() {
        let spec = MaternSpec::three_halves();
        let r = practical_range(1.0, spec, 0.05);
        assert!((r - 4.744).abs() < 1e-3, "{r}");
        assert!((practical_range(0.02, spec, 0.05) - 0.0949).abs() < 1e-4);
        assert!((practical_range(5.0, spec, 0.05) - 23.72).abs() < 1e-2);
    }

    #[test]
    fn covariance_examples() {
        let spec = MaternSpec::three_halves();
        let p = AnisotropyParams::new(0.3, 0.4, 1.2, 1.0).unwrap();
        assert_eq!(covariance([0.0, 0.0], &p, spec), 1.0);
        let p = AnisotropyParams::new(0.3, 0.4, 1.2, 3.7).unwrap();
        assert_eq!(covariance([0.0, 0.0], &p, spec), 3.7);
        let p = AnisotropyParams::new(0.0, 0.5, 2.0, 1.0).unwrap();
        assert_relative_eq!(covariance([2.0, 0.0], &p, spec), 2.0 * E_INV, epsilon = 1e-15);
    }

    #[test]
    fn correlation_matrix_examples() {
        let spec = MaternSpec::three_halves();
        let p = AnisotropyParams::new(0.0, 1.0, 1.0, 1.0).unwrap();
        let r = correlation_matrix(&[[0.0, 0.0]], &p, spec).unwrap();
        assert_eq!(r.data, vec![1.0]);

        let r = correlation_matrix(&[[0.0, 0.0], [1.0, 0.0]], &p, spec).unwrap();
        assert_relative_eq!(r.get(0, 1), 2.0 * E_INV, epsilon = 1e-15);
        assert_eq!(r.get(0, 1), r.get(1, 0));

        let tiny = AnisotropyParams::new(0.0, 1.0, 1e-3, 1.0).unwrap();
        let r = correlation_matrix(&[[0.0, 0.0], [1.0, 0.0]], &tiny, spec).unwrap();
        assert!(r.get(0, 1) < 1e-300);

        assert!(matches!(
            correlation_matrix(&[[0.0, 0.0], [1.0, 2.0], [0.0, 0.0]], &p, spec),
            Err(Error::DuplicateSite(0, 2))
        ));
    }

    #[test]
    fn lattice_cache_matches_direct_evaluation() {
        let spec = MaternSpec::three_halves();
        let p = AnisotropyParams::new(1.1, 0.3, 2.2, 1.0).unwrap();
        let sites: Vec<[f64; 2]> = (0..36).map(|i| [(i % 6) as f64, (i / 6) as f64]).collect();
        let r = correlation_matrix(&sites, &p, spec).unwrap();
        let omega = p.matrix();
        for i in 0..sites.len() {
            for j in 0..sites.len() {
                let h = [sites[i][0] - sites[j][0], sites[i][1] - sites[j][1]];
                let direct = spec.correlation(aniso_distance(h, &omega), p.theta);
                assert_relative_eq!(r.get(i, j), direct, max_relative = 1e-14);
            }
        }
    }

    proptest! {
        #[test]
        fn matrix_eigenvalues_are_one_and_lambda(a in 0.0..PI, l in 0.001f64..=1.0) {
            let m = anisotropy_matrix(a, l).unwrap();
            let (lo, hi) = m.eigenvalues();
            prop_assert!((lo - l).abs() < 1e-12);
            prop_assert!((hi - 1.0).abs() < 1e-12);
            prop_assert!((m.determinant() - l).abs() < 1e-12);
        }

        #[test]
        fn alpha_plus_pi_gives_same_matrix(a in 0.0..PI, l in 0.01f64..=1.0) {
            let m1 = anisotropy_matrix(a, l).unwrap();
            let m2 = anisotropy_matrix(canonical_angle(a + PI), l).unwrap();
            prop_assert!((m1.xx - m2.xx).abs() < 1e-12);
            prop_assert!((m1.xy - m2.xy).abs() < 1e-12);
            prop_assert!((m1.yy - m2.yy).abs() < 1e-12);
        }

        #[test]
        fn distance_is_a_norm(
            a in 0.0..PI, l in 0.01f64..=1.0,
            x1 in -10.0..10.0f64, y1 in -10.0..10.0f64,
            x2 in -10.0..10.0f64, y2 in -10.0..10.0f64,
            c in -5.0..5.0f64,
        ) {
            let m = anisotropy_matrix(a, l).unwrap();
            let d = |h: [f64; 2]| aniso_distance(h, &m);
            prop_assert!(d([x1 + x2, y1 + y2]) <= d([x1, y1]) + d([x2, y2]) + 1e-12);
            prop_assert!((d([c * x1, c * y1]) - c.abs() * d([x1, y1])).abs() < 1e-10);
        }

        #[test]
        fn isotropic_covariance_ignores_alpha(
            a1 in 0.0..PI, a2 in 0.0..PI, theta in 0.05..8.0f64,
            hx in -15.0..15.0f64, hy in -15.0..15.0f64,
        ) {
            let spec = MaternSpec::three_halves();
            let p1 = AnisotropyParams::new(a1, 1.0, theta, 1.0).unwrap();
            let p2 = AnisotropyParams::new(a2, 1.0, theta, 1.0).unwrap();
            prop_assert_eq!(covariance([hx, hy], &p1, spec), covariance([hx, hy], &p2, spec));
        }

        #[test]
        fn matern_decreasing(t in 0.0..20.0f64, dt in 1e-3..1.0f64, theta in 0.05..5.0f64) {
            let spec = MaternSpec::three_halves();
            prop_assert!(spec.correlation(t + dt, theta) < spec.correlation(t, theta)
                || spec.correlation(t, theta) == 0.0);
        }
    }
}
