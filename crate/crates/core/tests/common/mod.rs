#![allow(dead_code)]

use std::sync::Arc;

use infgame::field::{ConstantField, FnField};
use infgame::geometry::{make_domain, DomainSpec, Grid};
use infgame::tugofwar::{MoveSet, TowProblem};
use infgame::verify::{exact_solution, ExactSolution, ExactSpec};

pub fn unit_interval_oracle() -> ExactSolution {
    exact_solution(ExactSpec::OneDim {
        h_coeffs: vec![2.0],
        g0: 0.0,
        g1: 0.0,
        lo: 0.0,
        hi: 1.0,
    })
    .unwrap()
}

pub fn annulus_oracle() -> ExactSolution {
    exact_solution(ExactSpec::Radial {
        center: vec![0.0, 0.0],
        inner: 1.0,
        outer: 2.0,
        h: 2.0,
        g_inner: 0.0,
        g_outer: 1.5,
    })
    .unwrap()
}

/// Independent closed forms, kept apart from the library's oracle builder.
pub fn quadratic(x: f64) -> f64 {
    x * (1.0 - x) / 2.0
}

pub fn radial(x: &[f64]) -> f64 {
    let r = x[0].hypot(x[1]);
    -r * r / 2.0 + 3.0 * r - 2.5
}

/// 1D unit-interval game with Sphere moves and ε = spacing.
pub fn interval_problem(eps: f64, h: f64) -> TowProblem {
    let d = make_domain(DomainSpec::Interval { lo: 0.0, hi: 1.0 }).unwrap();
    let grid = Arc::new(Grid::new(d, eps).unwrap());
    TowProblem::new(
        grid,
        eps,
        &ConstantField::new(1, h),
        &ConstantField::new(1, 0.0),
        MoveSet::Sphere { directions: 2 },
    )
    .unwrap()
}

/// Annulus(1,2) game with h ≡ 2, g = 0 inside and 1.5 outside.
pub fn annulus_problem(eps: f64, refine: f64, directions: usize) -> TowProblem {
    let d = make_domain(DomainSpec::Annulus {
        center: vec![0.0, 0.0],
        inner: 1.0,
        outer: 2.0,
    })
    .unwrap();
    let spacing = eps / refine;
    let grid = Arc::new(Grid::with_boundary_layer(d, spacing, spacing).unwrap());
    let g = FnField::new(2, |x: &[f64]| if x[0].hypot(x[1]) < 1.5 { 0.0 } else { 1.5 });
    TowProblem::new(
        grid,
        eps,
        &ConstantField::new(2, 2.0),
        &g,
        MoveSet::Sphere { directions },
    )
    .unwrap()
}

/// A randomized DPP instance: a game, a second game with `h` raised
/// nodewise, a third with `g` shifted by `shift`, and two ordered
/// functions `v ≤ w`.
pub struct DppInstance {
    pub label: String,
    pub prob: TowProblem,
    pub prob_more_h: TowProblem,
    pub prob_shifted: TowProblem,
    pub shift: f64,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
}

pub fn dpp_instance(seed: u64) -> DppInstance {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let dim = if rng.random_bool(0.5) { 1 } else { 2 };
    let spec = if dim == 1 {
        let lo = rng.random_range(-1.0..1.0);
        DomainSpec::Interval {
            lo,
            hi: lo + rng.random_range(0.5..2.0),
        }
    } else {
        match rng.random_range(0..3) {
            0 => DomainSpec::Cuboid {
                lo: vec![0.0, 0.0],
                hi: vec![rng.random_range(0.5..1.5), rng.random_range(0.5..1.5)],
            },
            1 => DomainSpec::Ball {
                center: vec![rng.random_range(-1.0..1.0), 0.0],
                radius: rng.random_range(0.5..1.0),
            },
            _ => DomainSpec::Annulus {
                center: vec![0.0, 0.0],
                inner: 0.5,
                outer: rng.random_range(1.0..1.5),
            },
        }
    };
    let domain = make_domain(spec.clone()).unwrap();
    let nodes_across = rng.random_range(4..10) as f64;
    let spacing = domain.thickness() / nodes_across;
    let eps = spacing * [1.0, 1.5, 2.0][rng.random_range(0..3)];
    let moves = if rng.random_bool(0.5) {
        MoveSet::Lattice
    } else {
        MoveSet::Sphere {
            directions: if dim == 1 { 2 } else { 8 },
        }
    };
    let grid = Arc::new(Grid::new(domain, spacing).unwrap());

    let sign = if rng.random_bool(0.8) { 1.0 } else { -1.0 };
    let h0 = rng.random_range(0.5..3.0);
    let amp = rng.random_range(0.0..0.4) * h0;
    let freq = rng.random_range(0.5..4.0);
    let bump = rng.random_range(0.0..1.0);
    let h = move |x: &[f64]| sign * (h0 + amp * (freq * x[0]).sin());
    // Raising h by at most half its size keeps its sign.
    let h_more = move |x: &[f64]| h(x) + 0.5 * bump * h(x).abs();
    let slope: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
    let offset = rng.random_range(-1.0..1.0);
    let g = move |x: &[f64]| {
        offset + x.iter().zip(&slope).map(|(a, b)| a * b).sum::<f64>() + (3.0 * x[0]).cos()
    };
    let shift = rng.random_range(-5.0..5.0);
    let g_shifted = {
        let g = g.clone();
        move |x: &[f64]| g(x) + shift
    };

    let build = |hf: &(dyn Fn(&[f64]) -> f64 + Send + Sync), gf: &(dyn Fn(&[f64]) -> f64 + Send + Sync)| {
        TowProblem::new(
            grid.clone(),
            eps,
            &FnField::new(dim, |x: &[f64]| hf(x)),
            &FnField::new(dim, |x: &[f64]| gf(x)),
            moves,
        )
        .unwrap()
    };
    let prob = build(&h, &g);
    let prob_more_h = build(&h_more, &g);
    let prob_shifted = build(&h, &g_shifted);

    let v: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w: Vec<f64> = v
        .iter()
        .map(|&x| {
            if rng.random_bool(0.3) {
                x
            } else {
                x + rng.random_range(0.0..1.0)
            }
        })
        .collect();
    DppInstance {
        label: format!("seed {seed}: {spec:?}, spacing {spacing:.4}, eps {eps:.4}, {moves:?}"),
        prob,
        prob_more_h,
        prob_shifted,
        shift,
        v,
        w,
    }
}

/// Checks the three DPP-map properties on one instance and returns the
/// first violation.
pub fn check_dpp_properties(inst: &DppInstance) -> Result<(), String> {
    use infgame::geometry::GridFunction;
    use infgame::tugofwar::dpp_apply;
    let grid = inst.prob.grid().clone();
    let v = GridFunction::new(grid.clone(), inst.v.clone()).unwrap();
    let w = GridFunction::new(grid.clone(), inst.w.clone()).unwrap();
    let tv = dpp_apply(&v, &inst.prob).unwrap();
    let tw = dpp_apply(&w, &inst.prob).unwrap();
    for k in grid.interior_nodes() {
        if tv.get(k) > tw.get(k) {
            return Err(format!(
                "{}: monotonicity fails at node {k}: {} > {}",
                inst.label,
                tv.get(k),
                tw.get(k)
            ));
        }
    }

    let tv_more = dpp_apply(&v, &inst.prob_more_h).unwrap();
    for k in grid.interior_nodes() {
        if tv.get(k) > tv_more.get(k) {
            return Err(format!(
                "{}: h-comparison fails at node {k}: {} > {}",
                inst.label,
                tv.get(k),
                tv_more.get(k)
            ));
        }
    }

    let shifted: Vec<f64> = inst.v.iter().map(|x| x + inst.shift).collect();
    let shifted = GridFunction::new(grid.clone(), shifted).unwrap();
    let t_shifted = dpp_apply(&shifted, &inst.prob_shifted).unwrap();
    for k in grid.interior_nodes() {
        let want = tv.get(k) + inst.shift;
        // Adding a constant commutes with max, min and convex weights up to
        // a few roundings.
        let tol = 1e-13 * (1.0 + want.abs() + inst.shift.abs()) * 16.0;
        if (t_shifted.get(k) - want).abs() > tol {
            return Err(format!(
                "{}: shift equivariance fails at node {k}: {} vs {}",
                inst.label,
                t_shifted.get(k),
                want
            ));
        }
    }
    Ok(())
}
