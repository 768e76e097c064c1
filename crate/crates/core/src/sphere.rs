//! Finite direction sets on the unit sphere S^{m-1}.

use std::f64::consts::PI;

/// Golden angle in radians.
const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653;

/// `count` equally spaced unit vectors in the plane, starting at `(1, 0)`.
pub fn circle(count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|j| {
            let theta = 2.0 * PI * j as f64 / count as f64;
            vec![theta.cos(), theta.sin()]
        })
        .collect()
}

/// Fibonacci lattice with `count` points on S^2.
pub fn fibonacci(count: usize) -> Vec<Vec<f64>> {
    (0..count).map(|i| fibonacci_point(i, count)).collect()
}

fn fibonacci_point(i: usize, count: usize) -> Vec<f64> {
    let z = 1.0 - (2 * i + 1) as f64 / count as f64;
    let rho = (1.0 - z * z).max(0.0).sqrt();
    let phi = GOLDEN_ANGLE * i as f64;
    vec![rho * phi.cos(), rho * phi.sin(), z]
}

/// Direction set closed under `d -> -d` with roughly `count` members.
///
/// Dimension 1 always yields `{+1, -1}`; dimension 2 uses an even circle
/// grid; dimension 3 mirrors the upper half of a Fibonacci lattice.
pub fn symmetric_directions(dim: usize, count: usize) -> Vec<Vec<f64>> {
    match dim {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => circle(2 * count.div_ceil(2).max(2)),
        3 => {
            let n = 2 * count.div_ceil(2).max(2);
            let upper: Vec<Vec<f64>> = (0..n / 2).map(|i| fibonacci_point(i, n)).collect();
            let lower = upper
                .iter()
                .map(|d| d.iter().map(|v| -v).collect::<Vec<f64>>())
                .collect::<Vec<_>>();
            upper.into_iter().chain(lower).collect()
        }
        _ => {
            // Coordinate axes only; higher dimensions are not a target.
            let mut out = Vec::with_capacity(2 * dim);
            for axis in 0..dim {
                for s in [1.0, -1.0] {
                    let mut d = vec![0.0; dim];
                    d[axis] = s;
                    out.push(d);
                }
            }
            out
        }
    }
}
