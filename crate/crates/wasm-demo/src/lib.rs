//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Fields cross the boundary as row-major `Float64Array`s with `NaN`
//! marking missing cells.

use anisofield::likelihood::Observations;
use anisofield::ml::{fit_ml, SearchConfig};
use anisofield::simulate::simulate_grf;
use anisofield::variogram::variogram_map;
use anisofield::{AnisotropyParams, FieldGrid, GridDomain, MaternSpec, Result};
use wasm_bindgen::prelude::*;

/// Unit-variance Matérn field on a `size × size` grid.
pub fn simulate(alpha: f64, lambda: f64, theta: f64, nu: f64, size: usize, seed: u64) -> Result<Vec<f64>> {
    let params = AnisotropyParams::unit_variance(alpha, lambda, theta)?;
    let field = simulate_grf(GridDomain::new(size, size)?, &params, MaternSpec::new(nu)?, seed)?;
    Ok(field.values().to_vec())
}

/// Variogram map values, `(2·max_lag+1)²` row-major with lag `(0, 0)` at
/// the center. Lags without pairs are `NaN`.
pub fn varmap(values: &[f64], width: usize, height: usize, max_lag: usize) -> Result<Vec<f64>> {
    let field = FieldGrid::from_values_nan_missing(GridDomain::new(width, height)?, values.to_vec())?;
    let map = variogram_map(&field, max_lag)?;
    Ok(map
        .values()
        .iter()
        .zip(map.pair_counts())
        .map(|(&v, &c)| if c > 0 { v } else { f64::NAN })
        .collect())
}

/// `[alpha, lambda, theta, sigma2, loglik]` of the anisotropic ML fit.
pub fn ml_fit(values: &[f64], width: usize, height: usize, nu: f64) -> Result<Vec<f64>> {
    let field = FieldGrid::from_values_nan_missing(GridDomain::new(width, height)?, values.to_vec())?;
    let fit = fit_ml(&Observations::from_field(&field)?, MaternSpec::new(nu)?, &SearchConfig::default())?;
    let p = fit.params;
    Ok(vec![p.alpha, p.lambda, p.theta, p.sigma2, fit.loglik])
}

fn js(e: anisofield::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = simulateField)]
pub fn simulate_field(alpha: f64, lambda: f64, theta: f64, nu: f64, size: usize, seed: u32) -> std::result::Result<Vec<f64>, JsError> {
    simulate(alpha, lambda, theta, nu, size, seed.into()).map_err(js)
}

#[wasm_bindgen(js_name = variogramMap)]
pub fn variogram_map_js(values: &[f64], width: usize, height: usize, max_lag: usize) -> std::result::Result<Vec<f64>, JsError> {
    varmap(values, width, height, max_lag).map_err(js)
}

#[wasm_bindgen(js_name = fitMl)]
pub fn fit_ml_js(values: &[f64], width: usize, height: usize, nu: f64) -> std::result::Result<Vec<f64>, JsError> {
    ml_fit(values, width, height, nu).map_err(js)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simulate_then_map_then_fit() {
        let z = simulate(0.8, 0.4, 2.0, 1.5, 16, 3).unwrap();
        assert_eq!(z.len(), 256);
        let m = varmap(&z, 16, 16, 6).unwrap();
        assert_eq!(m.len(), 169);
        assert_eq!(m[84], 0.0);
        let fit = ml_fit(&z, 16, 16, 1.5).unwrap();
        assert_eq!(fit.len(), 5);
        assert!((0.0..std::f64::consts::PI).contains(&fit[0]));
        assert!(fit[1] > 0.0 && fit[1] <= 1.0 && fit[2] > 0.0);
    }

    #[test]
    fn nan_cells_are_missing() {
        let mut z = simulate(0.3, 0.6, 1.0, 0.5, 8, 1).unwrap();
        z[0] = f64::NAN;
        let m = varmap(&z, 8, 8, 2).unwrap();
        assert!(m.iter().all(|v| v.is_finite()));
        assert!(varmap(&z, 8, 9, 2).is_err());
    }

    #[test]
    fn invalid_parameters_are_errors() {
        assert!(simulate(0.3, 0.0, 1.0, 1.5, 8, 1).is_err());
        assert!(simulate(0.3, 0.5, 1.0, -1.0, 8, 1).is_err());
    }
}
