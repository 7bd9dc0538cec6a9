//! Special functions needed by the general Matérn evaluation.
//!
//! `ln_bessel_k` integrates the representation
//! `K_ν(x) = ∫₀^∞ exp(−x cosh t) cosh(νt) dt` with the trapezoidal rule.
//! The integrand is entire and decays double-exponentially, so the rule
//! converges geometrically in the step size; everything is accumulated in
//! log space so large orders and tiny arguments do not overflow.

use std::f64::consts::PI;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    assert!(x > 0.0, "ln_gamma requires a positive argument, got {x}");
    if x < 0.5 {
        // reflection: Γ(x)Γ(1−x) = π / sin(πx)
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

pub fn gamma(x: f64) -> f64 {
    ln_gamma(x).exp()
}

/// `ln K_ν(x)` for `x > 0` and any real order.
pub fn ln_bessel_k(nu: f64, x: f64) -> f64 {
    assert!(x > 0.0, "ln_bessel_k requires x > 0, got {x}");
    let nu = nu.abs();
    // Log of the integrand after factoring out e^{-x}:
    //   g(t) = −x (cosh t − 1) + log cosh(ν t)
    let log_cosh = |y: f64| y + (-2.0 * y).exp().ln_1p() - std::f64::consts::LN_2;
    let g = |t: f64| -x * (t.cosh() - 1.0) + log_cosh(nu * t);

    // The peak sits where x sinh t = ν tanh(νt) ≈ ν; the curvature there
    // is about −max(x, ν), which sets the step.
    let peak = if nu > 0.0 { (nu / x).asinh() } else { 0.0 };
    let step = (0.5 / x.max(nu).max(1.0).sqrt()).min(0.1);
    let g_peak = g(peak);

    // Walk right from the origin until the integrand has fallen 45
    // e-folds below its maximum, then accumulate the trapezoid sum
    // relative to the peak value.
    let mut sum = 0.5 * (g(0.0) - g_peak).exp();
    let mut k = 1usize;
    loop {
        let t = k as f64 * step;
        let rel = g(t) - g_peak;
        sum += rel.exp();
        if t > peak && rel < -45.0 {
            break;
        }
        k += 1;
    }
    g_peak + (sum * step).ln() - x
}

pub fn bessel_k(nu: f64, x: f64) -> f64 {
    ln_bessel_k(nu, x).exp()
}
