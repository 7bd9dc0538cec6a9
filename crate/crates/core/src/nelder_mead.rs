//! Derivative-free Nelder–Mead simplex minimization.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadConfig {
    pub max_iterations: usize,
    /// Stop once the largest pairwise vertex distance falls below this.
    pub diameter_tol: f64,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            diameter_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

fn diameter(points: &[Vec<f64>]) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..points.len() {
        for j in 0..i {
            let s: f64 = points[i]
                .iter()
                .zip(&points[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d = d.max(s.sqrt());
        }
    }
    d
}

/// Minimize `f` from `x0`; the initial simplex steps `steps[i]` along axis
/// `i`. Non-finite objective values are treated as `+∞`.
pub fn minimize<F>(mut f: F, x0: &[f64], steps: &[f64], config: NelderMeadConfig) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let dim = x0.len();
    assert_eq!(dim, steps.len());
    assert!(dim >= 1);
    let mut evaluations = 0usize;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let mut points: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    points.push(x0.to_vec());
    for i in 0..dim {
        let mut p = x0.to_vec();
        p[i] += steps[i];
        points.push(p);
    }
    let mut values: Vec<f64> = points.iter().map(|p| eval(p)).collect();

    let mut iterations = 0;
    let mut converged = false;
    loop {
        // order vertices best to worst; stable so ties keep insertion order
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        points = order.iter().map(|&i| points[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        if diameter(&points) < config.diameter_tol {
            converged = true;
            break;
        }
        if iterations >= config.max_iterations {
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..dim)
            .map(|k| points[..dim].iter().map(|p| p[k]).sum::<f64>() / dim as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&points[dim])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(REFLECT);
        let fr = eval(&xr);
        if fr < values[0] {
            let xe = along(EXPAND);
            let fe = eval(&xe);
            if fe < fr {
                points[dim] = xe;
                values[dim] = fe;
            } else {
                points[dim] = xr;
                values[dim] = fr;
            }
            continue;
        }
        if fr < values[dim - 1] {
            points[dim] = xr;
            values[dim] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[dim] {
            let xc = along(CONTRACT * REFLECT);
            let fc = eval(&xc);
            (xc, fc)
        } else {
            let xc = along(-CONTRACT);
            let fc = eval(&xc);
            (xc, fc)
        };
        if fc < fr.min(values[dim]) {
            points[dim] = xc;
            values[dim] = fc;
            continue;
        }
        // shrink toward the best vertex
        for i in 1..=dim {
            let p: Vec<f64> = points[0]
                .iter()
                .zip(&points[i])
                .map(|(b, x)| b + SHRINK * (x - b))
                .collect();
            values[i] = eval(&p);
            points[i] = p;
        }
    }

    Minimum {
        x: points[0].clone(),
        value: values[0],
        iterations,
        evaluations,
        converged,
    }
}
