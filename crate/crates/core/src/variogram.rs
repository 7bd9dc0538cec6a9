//! Empirical variogram maps.
//!
//! `γ̂(h) = 1/(2N(h)) Σ (Z(s) − Z(s+h))²` over the `N(h)` observed pairs
//! at lag `h = (h_x, h_y)`, for every lag in `{−K..K}²`. Each unordered
//! pair is counted once and the map is mirrored so `γ̂(h) = γ̂(−h)`.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::grid::FieldGrid;

/// Max lag of the maps fed to the NV network (13×13 image).
pub const NV_MAX_LAG: usize = 6;

#[derive(Debug, Clone)]
pub struct VariogramMap {
    max_lag: usize,
    /// Row-major, row `h_y + K`, column `h_x + K`. NaN where no pairs.
    values: Vec<f64>,
    pair_counts: Vec<usize>,
}

impl PartialEq for VariogramMap {
    fn eq(&self, other: &Self) -> bool {
        self.max_lag == other.max_lag
            && self.pair_counts == other.pair_counts
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl VariogramMap {
    pub fn max_lag(&self) -> usize {
        self.max_lag
    }

    pub fn side(&self) -> usize {
        2 * self.max_lag + 1
    }

    fn index(&self, hx: isize, hy: isize) -> usize {
        let k = self.max_lag as isize;
        assert!(hx.abs() <= k && hy.abs() <= k, "lag ({hx}, {hy}) outside map");
        ((hy + k) as usize) * self.side() + (hx + k) as usize
    }

    /// `None` when no observed pair has this lag.
    pub fn value(&self, hx: isize, hy: isize) -> Option<f64> {
        let i = self.index(hx, hy);
        (self.pair_counts[i] > 0).then_some(self.values[i])
    }

    pub fn pair_count(&self, hx: isize, hy: isize) -> usize {
        self.pair_counts[self.index(hx, hy)]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn pair_counts(&self) -> &[usize] {
        &self.pair_counts
    }

    pub fn missing_lags(&self) -> usize {
        self.pair_counts.iter().filter(|&&c| c == 0).count()
    }

    /// CSV grid, one row per `h_y` from `−K` to `K`; `NaN` marks lags
    /// without pairs.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let side = self.side();
        for r in 0..side {
            for c in 0..side {
                if c > 0 {
                    out.push(',');
                }
                let i = r * side + c;
                if self.pair_counts[i] > 0 {
                    write!(out, "{}", self.values[i]).unwrap();
                } else {
                    out.push_str("NaN");
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Empirical variogram map with lags up to `max_lag` in each direction.
pub fn variogram_map(field: &FieldGrid, max_lag: usize) -> Result<VariogramMap> {
    if max_lag == 0 {
        return Err(Error::Shape("max lag must be at least 1".into()));
    }
    let observed = field.domain().len() - field.missing_count();
    if observed < 2 {
        return Err(Error::Missing(format!(
            "variogram needs at least two observed cells, got {observed}"
        )));
    }
    let (w, h) = (field.width() as isize, field.height() as isize);
    let k = max_lag as isize;
    let side = 2 * max_lag + 1;
    let mut values = vec![f64::NAN; side * side];
    let mut pair_counts = vec![0usize; side * side];
    let center = max_lag * side + max_lag;
    values[center] = 0.0;
    pair_counts[center] = observed;

    let vals = field.values();
    let miss = field.missing_mask();
    let mut terms = Vec::new();
    for hy in 0..=k {
        for hx in -k..=k {
            if hy == 0 && hx <= 0 {
                continue;
            }
            let rows = 0.max(-hy)..h.min(h - hy);
            let cols = 0.max(-hx)..w.min(w - hx);
            terms.clear();
            let mut count = 0usize;
            for r in rows {
                for c in cols.clone() {
                    let a = (r * w + c) as usize;
                    let b = ((r + hy) * w + c + hx) as usize;
                    if miss[a] || miss[b] {
                        terms.push(0.0);
                    } else {
                        let d = vals[a] - vals[b];
                        terms.push(d * d);
                        count += 1;
                    }
                }
            }
            let fwd = ((hy + k) as usize) * side + (hx + k) as usize;
            let bwd = ((k - hy) as usize) * side + (k - hx) as usize;
            pair_counts[fwd] = count;
            pair_counts[bwd] = count;
            if count > 0 {
                let g = palindromic_sum(&terms) / (2.0 * count as f64);
                values[fwd] = g;
                values[bwd] = g;
            }
        }
    }
    Ok(VariogramMap {
        max_lag,
        values,
        pair_counts,
    })
}

/// Sums `t[i] + t[n−1−i]` pairs first, so the result is identical for a
/// sequence and its reverse. Point reflection of the grid reverses the
/// pair sequence of every lag, which makes the map exactly invariant.
fn palindromic_sum(t: &[f64]) -> f64 {
    let n = t.len();
    let mut s = 0.0;
    for i in 0..n / 2 {
        s += t[i] + t[n - 1 - i];
    }
    if n % 2 == 1 {
        s += t[n / 2];
    }
    s
}

/// Dense network input built from a variogram map.
#[derive(Debug, Clone, PartialEq)]
pub struct VarmapImage {
    pub side: usize,
    pub pixels: Vec<f64>,
    /// Pixels that had no pairs and were filled.
    pub filled: Vec<bool>,
}

/// 13×13 image for the NV network. Lags without pairs take the mean of
/// the observed off-center map values.
pub fn varmap_image(map: &VariogramMap) -> Result<VarmapImage> {
    if map.max_lag != NV_MAX_LAG {
        return Err(Error::Shape(format!(
            "network input needs max lag {NV_MAX_LAG}, map has {}",
            map.max_lag
        )));
    }
    let side = map.side();
    let center = map.max_lag * side + map.max_lag;
    let (sum, n) = map
        .values
        .iter()
        .zip(&map.pair_counts)
        .enumerate()
        .filter(|&(i, (_, &c))| c > 0 && i != center)
        .fold((0.0, 0usize), |(s, n), (_, (v, _))| (s + v, n + 1));
    let fill = if n > 0 { sum / n as f64 } else { 0.0 };
    let filled: Vec<bool> = map.pair_counts.iter().map(|&c| c == 0).collect();
    let pixels = map
        .values
        .iter()
        .zip(&filled)
        .map(|(&v, &f)| if f { fill } else { v })
        .collect();
    Ok(VarmapImage {
        side,
        pixels,
        filled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::{AnisotropyParams, MaternSpec};
    use crate::grid::{rotate180, GridDomain};
    use crate::rng::{fill_standard_normal, stream};
    use crate::simulate::simulate_grf;
    use proptest::prelude::*;

    fn sim(seed: u64) -> FieldGrid {
        let p = AnisotropyParams::new(0.6, 0.3, 2.0, 1.0).unwrap();
        simulate_grf(GridDomain::square16(), &p, MaternSpec::three_halves(), seed).unwrap()
    }

    #[test]
    fn constant_field_is_zero() {
        let f = FieldGrid::new(GridDomain::square16(), vec![2.5; 256]).unwrap();
        let m = variogram_map(&f, 6).unwrap();
        assert!(m.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ramp_field() {
        let d = GridDomain::square16();
        let vals = (0..256).map(|i| (i % 16 + 1) as f64).collect();
        let m = variogram_map(&FieldGrid::new(d, vals).unwrap(), 6).unwrap();
        for hy in -6..=6isize {
            for hx in -6..=6isize {
                assert_eq!(m.value(hx, hy), Some((hx * hx) as f64 / 2.0));
            }
        }
    }

    #[test]
    fn complete_grid_has_all_lags() {
        let m = variogram_map(&sim(1), 6).unwrap();
        assert_eq!(m.missing_lags(), 0);
        assert_eq!(m.value(0, 0), Some(0.0));
        assert_eq!(m.pair_count(1, 0), 15 * 16);
        assert_eq!(m.pair_count(-6, 6), 10 * 10);
        for hy in -6..=6isize {
            for hx in -6..=6isize {
                assert_eq!(m.value(hx, hy), m.value(-hx, -hy));
                assert_eq!(m.pair_count(hx, hy), m.pair_count(-hx, -hy));
            }
        }
    }

    #[test]
    fn lag_pairs_match_brute_force() {
        let mut f = sim(2);
        f.set_missing(3, 4);
        f.set_missing(10, 0);
        let m = variogram_map(&f, 6).unwrap();
        for hy in -6..=6isize {
            for hx in -6..=6isize {
                if hx == 0 && hy == 0 {
                    continue;
                }
                // ordered pairs over the whole grid, halved
                let (mut s, mut n) = (0.0, 0usize);
                for r in 0..16isize {
                    for c in 0..16isize {
                        let (r2, c2) = (r + hy, c + hx);
                        if !(0..16).contains(&r2) || !(0..16).contains(&c2) {
                            continue;
                        }
                        if let (Some(a), Some(b)) = (f.get(r as usize, c as usize), f.get(r2 as usize, c2 as usize)) {
                            s += (a - b) * (a - b);
                            n += 1;
                        }
                    }
                }
                assert_eq!(m.pair_count(hx, hy), n);
                let g = m.value(hx, hy).unwrap();
                assert!((g - s / (2.0 * n as f64)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rotation_invariance_is_exact() {
        for seed in 0..5 {
            let mut f = sim(seed);
            f.set_missing(1, 2);
            f.set_missing(7, 15);
            assert_eq!(variogram_map(&rotate180(&f), 6).unwrap(), variogram_map(&f, 6).unwrap());
        }
    }

    #[test]
    fn removing_a_cell_only_touches_its_lags() {
        let f = sim(3);
        let mut g = f.clone();
        g.set_missing(0, 0);
        let a = variogram_map(&f, 6).unwrap();
        let b = variogram_map(&g, 6).unwrap();
        for hy in -6..=6isize {
            for hx in -6..=6isize {
                assert!(b.pair_count(hx, hy) <= a.pair_count(hx, hy));
                // the corner pairs only with lags pointing into the grid
                let involved = (hx >= 0 && hy >= 0) || (hx <= 0 && hy <= 0);
                if !involved {
                    assert_eq!(a.value(hx, hy), b.value(hx, hy));
                }
            }
        }
    }

    #[test]
    fn iid_noise_is_flat() {
        let mut total = 0.0;
        for seed in 0..100u64 {
            let mut rng = stream(seed, &[77]);
            let mut v = vec![0.0; 256];
            fill_standard_normal(&mut rng, &mut v);
            let m = variogram_map(&FieldGrid::new(GridDomain::square16(), v).unwrap(), 6).unwrap();
            let g = m.value(1, 0).unwrap();
            assert!((g - 1.0).abs() < 0.4);
            total += g;
        }
        assert!((total / 100.0 - 1.0).abs() < 0.02);
    }

    #[test]
    fn errors_and_image() {
        let mut f = FieldGrid::new(GridDomain::new(3, 3).unwrap(), vec![1.0; 9]).unwrap();
        for i in 0..9 {
            if i != 4 {
                f.set_missing(i / 3, i % 3);
            }
        }
        assert!(variogram_map(&f, 6).is_err());
        assert!(variogram_map(&sim(0), 0).is_err());

        // a 4×4 grid cannot realize lags beyond 3: those pixels get filled
        let small = FieldGrid::new(GridDomain::new(4, 4).unwrap(), (0..16).map(|v| v as f64).collect()).unwrap();
        let m = variogram_map(&small, 6).unwrap();
        let img = varmap_image(&m).unwrap();
        assert_eq!(img.pixels.len(), 169);
        assert_eq!(img.pixels[6 * 13 + 6], 0.0);
        assert!(img.filled[0] && !img.filled[6 * 13 + 7]);
        let observed: Vec<f64> = (0..169)
            .filter(|&i| !img.filled[i] && i != 6 * 13 + 6)
            .map(|i| img.pixels[i])
            .collect();
        let mean = observed.iter().sum::<f64>() / observed.len() as f64;
        assert_eq!(img.pixels[0], mean);
        assert!(varmap_image(&variogram_map(&small, 3).unwrap()).is_err());
    }

    #[test]
    fn csv_layout() {
        let m = variogram_map(&sim(4), 6).unwrap();
        let csv = m.to_csv();
        let rows: Vec<&str> = csv.lines().collect();
        assert_eq!(rows.len(), 13);
        assert!(rows.iter().all(|r| r.split(',').count() == 13));
        let back = FieldGrid::from_csv(&csv).unwrap();
        assert_eq!(back.values(), m.values());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn shift_and_scale(seed in 0u64..1000, shift in -50.0..50.0f64, scale in 0.1..10.0f64) {
            let f = sim(seed);
            let base = variogram_map(&f, 6).unwrap();
            let shifted = variogram_map(&f.map_values(|v| v + shift), 6).unwrap();
            let scaled = variogram_map(&f.map_values(|v| v * scale), 6).unwrap();
            for i in 0..169 {
                let b = base.values()[i];
                prop_assert!((shifted.values()[i] - b).abs() <= 1e-9 * (1.0 + b));
                prop_assert!((scaled.values()[i] - scale * scale * b).abs() <= 1e-12 * (1.0 + scale * scale * b));
            }
        }
    }
}
