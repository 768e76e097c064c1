//! Discrete Tug-of-War on a lattice.
//!
//! The value `V` of the ε-step game is the fixed point of
//!
//! ```text
//! V(x) = (ε²/4) h(x) + ½ [ max_{y ∈ M(x)} V(y) + min_{y ∈ M(x)} V(y) ]
//! ```
//!
//! with `V = g` on the boundary layer, where `M(x)` is the set of positions a
//! player may move the token to from `x`. Two move sets are available:
//!
//! * [`MoveSet::Lattice`]: nodes in the closed ε-ball around `x`.
//! * [`MoveSet::Sphere`]: moves of length exactly ε, to the points `x + ε e`
//!   for a symmetric set of directions `e`, valued by multilinear
//!   interpolation. A direction whose ray leaves the domain before distance ε
//!   stops at its boundary crossing, valued by `g`. Interpolation corners
//!   outside the domain carry `g` at their boundary projection.
//!
//! The closed-ball game lets the maximizer stay put at a peak of `V`, which
//! lifts the value by O(ε) above the continuum solution; on lattices in two
//! or more dimensions the lattice ball also sees only a few directions, and
//! its extreme points sit short of the ε-sphere. Sphere moves have neither
//! defect and reproduce quadratic solutions exactly in one dimension.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::{Grid, GridFunction, MEMBERSHIP_TOL};
use crate::sphere::symmetric_directions;

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MoveSet {
    #[default]
    Lattice,
    Sphere {
        directions: usize,
    },
}

/// Move tables compiled once per problem. Values are addressed in an
/// extended array: grid nodes first, then fixed ghost values for lattice
/// points just outside the domain.
#[derive(Debug, Clone)]
struct Stencil {
    ball_len: usize,
    corner_len: usize,
    /// Per direction: (corner slot, weight) pairs with nonzero weight.
    dir_corners: Vec<Vec<(usize, f64)>>,
    interior: Vec<usize>,
    position: Vec<u32>,
    ball_slots: Vec<u32>,
    corner_slots: Vec<u32>,
    exit_start: Vec<u32>,
    exits: Vec<(u32, f64)>,
    ghosts: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TowProblem {
    grid: Arc<Grid>,
    eps: f64,
    moves: MoveSet,
    h: Vec<f64>,
    g: Vec<f64>,
    h_min: f64,
    negative: bool,
    stencil: Stencil,
}

impl TowProblem {
    /// Samples `h` on every node and `g` at the boundary projection of every
    /// node (only boundary-layer values enter the game).
    ///
    /// `h` must be nonzero and of one sign on the grid.
    pub fn new(
        grid: Arc<Grid>,
        eps: f64,
        h: &dyn ScalarField,
        g: &dyn ScalarField,
        moves: MoveSet,
    ) -> Result<Self> {
        if !(eps.is_finite() && eps >= grid.spacing() * (1.0 - 1e-12)) {
            return Err(Error::RadiusBelowSpacing {
                eps,
                spacing: grid.spacing(),
            });
        }
        if h.dim() != grid.dim() || g.dim() != grid.dim() {
            return Err(Error::DimensionMismatch {
                expected: grid.dim(),
                got: h.dim().min(g.dim()),
            });
        }
        if grid.interior_nodes().next().is_none() {
            return Err(Error::InvalidSpec("grid has no interior nodes".into()));
        }
        let domain = grid.domain();
        let h_vals: Vec<f64> = (0..grid.len()).map(|k| h.value(grid.node(k))).collect();
        let g_vals: Vec<f64> = (0..grid.len())
            .map(|k| g.value(&domain.project(grid.node(k))))
            .collect();
        if h_vals.iter().chain(&g_vals).any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec(
                "h and g must be finite on the grid".into(),
            ));
        }
        let positive = h_vals.iter().all(|&v| v > 0.0);
        let negative = h_vals.iter().all(|&v| v < 0.0);
        if !positive && !negative {
            return Err(Error::InvalidSpec(
                "h must be strictly positive or strictly negative on the closed domain".into(),
            ));
        }
        let h_min = h_vals.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
        let stencil = Stencil::compile(&grid, eps, moves, g)?;
        Ok(Self {
            grid,
            eps,
            moves,
            h: h_vals,
            g: g_vals,
            h_min,
            negative,
            stencil,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn moves(&self) -> MoveSet {
        self.moves
    }

    /// `inf |h|` over the nodes.
    pub fn h_min(&self) -> f64 {
        self.h_min
    }

    pub fn h_at(&self, node: usize) -> f64 {
        self.h[node]
    }

    pub fn g_at(&self, node: usize) -> f64 {
        self.g[node]
    }

    /// Same game with payoffs `(-h, -g)`.
    pub fn negated(&self) -> Self {
        let mut p = self.clone();
        p.h.iter_mut().for_each(|v| *v = -*v);
        p.g.iter_mut().for_each(|v| *v = -*v);
        p.stencil.ghosts.iter_mut().for_each(|v| *v = -*v);
        for e in &mut p.stencil.exits {
            e.1 = -e.1;
        }
        p.negative = !p.negative;
        p
    }

    fn extended(&self, values: &[f64]) -> Vec<f64> {
        let mut ext = Vec::with_capacity(values.len() + self.stencil.ghosts.len());
        ext.extend_from_slice(values);
        ext.extend_from_slice(&self.stencil.ghosts);
        ext
    }

    /// One application of the dynamic-programming map at the interior node
    /// with interior position `pos`, reading from the extended array.
    #[inline]
    fn update_at(&self, ext: &[f64], pos: usize) -> f64 {
        let s = &self.stencil;
        let node = s.interior[pos];
        let mut hi = f64::NEG_INFINITY;
        let mut lo = f64::INFINITY;
        for &slot in &s.ball_slots[pos * s.ball_len..(pos + 1) * s.ball_len] {
            if slot != NONE {
                let v = ext[slot as usize];
                hi = hi.max(v);
                lo = lo.min(v);
            }
        }
        if !s.dir_corners.is_empty() {
            let slots = &s.corner_slots[pos * s.corner_len..(pos + 1) * s.corner_len];
            let exits = &s.exits[s.exit_start[pos] as usize..s.exit_start[pos + 1] as usize];
            let mut stack = [0.0f64; 64];
            let mut heap = Vec::new();
            let local: &mut [f64] = if slots.len() <= stack.len() {
                &mut stack[..slots.len()]
            } else {
                heap.resize(slots.len(), 0.0);
                &mut heap
            };
            for (v, &slot) in local.iter_mut().zip(slots) {
                if slot != NONE {
                    *v = ext[slot as usize];
                }
            }
            for (j, dir) in s.dir_corners.iter().enumerate() {
                let v = if exits.is_empty() {
                    dir.iter().map(|&(c, w)| w * local[c]).sum()
                } else {
                    match exits.iter().find(|e| e.0 as usize == j) {
                        Some(e) => e.1,
                        None => dir.iter().map(|&(c, w)| w * local[c]).sum(),
                    }
                };
                hi = hi.max(v);
                lo = lo.min(v);
            }
        }
        0.25 * self.eps * self.eps * self.h[node] + 0.5 * (hi + lo)
    }
}

impl Stencil {
    fn compile(grid: &Grid, eps: f64, moves: MoveSet, g: &dyn ScalarField) -> Result<Self> {
        let dim = grid.dim();
        let h = grid.spacing();
        let domain = grid.domain();
        let ball = match moves {
            MoveSet::Lattice => grid.ball_offsets(eps)?,
            MoveSet::Sphere { .. } => Vec::new(),
        };

        let directions = match moves {
            MoveSet::Lattice => Vec::new(),
            MoveSet::Sphere { directions } => symmetric_directions(dim, directions),
        };
        let mut corner_index: HashMap<Vec<i64>, usize> = HashMap::new();
        let mut corner_offsets: Vec<Vec<i64>> = Vec::new();
        let mut dir_corners = Vec::with_capacity(directions.len());
        for d in &directions {
            let mut base = vec![0i64; dim];
            let mut frac = vec![0.0; dim];
            for axis in 0..dim {
                let f = eps * d[axis] / h;
                let r = f.round();
                if (f - r).abs() < 1e-9 {
                    base[axis] = r as i64;
                    frac[axis] = 0.0;
                } else {
                    base[axis] = f.floor() as i64;
                    frac[axis] = f - f.floor();
                }
            }
            let mut list = Vec::new();
            for mask in 0..(1usize << dim) {
                let mut w = 1.0;
                let mut corner = base.clone();
                for axis in 0..dim {
                    if (mask >> axis) & 1 == 1 {
                        corner[axis] += 1;
                        w *= frac[axis];
                    } else {
                        w *= 1.0 - frac[axis];
                    }
                }
                if w == 0.0 {
                    continue;
                }
                let next = corner_offsets.len();
                let c = *corner_index.entry(corner.clone()).or_insert(next);
                if c == next {
                    corner_offsets.push(corner);
                }
                list.push((c, w));
            }
            dir_corners.push(list);
        }

        let interior: Vec<usize> = grid.interior_nodes().collect();
        let mut position = vec![NONE; grid.len()];
        for (p, &k) in interior.iter().enumerate() {
            position[k] = p as u32;
        }
        let ball_len = ball.len();
        let corner_len = corner_offsets.len();
        let mut ball_slots = Vec::with_capacity(interior.len() * ball_len);
        let mut corner_slots = Vec::with_capacity(interior.len() * corner_len);
        let mut exit_start = Vec::with_capacity(interior.len() + 1);
        let mut exits = Vec::new();
        let mut ghosts = Vec::new();
        let mut ghost_index: HashMap<Vec<i64>, u32> = HashMap::new();

        let mut idx = vec![0i64; dim];
        let mut point = vec![0.0; dim];
        for &k in &interior {
            let base = grid.lattice_index(k);
            let x = grid.node(k);
            for o in &ball {
                for axis in 0..dim {
                    idx[axis] = base[axis] + o[axis];
                }
                ball_slots.push(grid.node_at(&idx).map_or(NONE, |n| n as u32));
            }
            exit_start.push(exits.len() as u32);
            let row = corner_slots.len();
            for o in &corner_offsets {
                for axis in 0..dim {
                    idx[axis] = base[axis] + o[axis];
                }
                corner_slots.push(grid.node_at(&idx).map_or(NONE, |n| n as u32));
            }
            for (j, d) in directions.iter().enumerate() {
                let t = domain.ray_exit(x, d);
                if t < eps - MEMBERSHIP_TOL {
                    for axis in 0..dim {
                        point[axis] = x[axis] + t * d[axis];
                    }
                    exits.push((j as u32, g.value(&domain.project(&point))));
                    continue;
                }
                for &(c, _) in &dir_corners[j] {
                    if corner_slots[row + c] != NONE {
                        continue;
                    }
                    for axis in 0..dim {
                        idx[axis] = base[axis] + corner_offsets[c][axis];
                        point[axis] = grid.origin()[axis] + idx[axis] as f64 * h;
                    }
                    let next = (grid.len() + ghosts.len()) as u32;
                    let slot = *ghost_index.entry(idx.clone()).or_insert(next);
                    if slot == next {
                        ghosts.push(g.value(&domain.project(&point)));
                    }
                    corner_slots[row + c] = slot;
                }
            }
        }
        exit_start.push(exits.len() as u32);

        Ok(Self {
            ball_len,
            corner_len,
            dir_corners,
            interior,
            position,
            ball_slots,
            corner_slots,
            exit_start,
            exits,
            ghosts,
        })
    }
}

/// Converged (or tolerance-satisfying) value of the discrete game.
#[derive(Debug, Clone)]
pub struct TowSolution {
    pub values: GridFunction,
    pub sweeps: usize,
    pub final_residual: f64,
    pub eps: f64,
}

/// `(ε²/4) h(node) + ½ (max V + min V)` over the moves available at an
/// interior node.
pub fn dpp_update(v: &GridFunction, node: usize, prob: &TowProblem) -> Result<f64> {
    if v.grid().len() != prob.grid.len() {
        return Err(Error::DimensionMismatch {
            expected: prob.grid.len(),
            got: v.grid().len(),
        });
    }
    let pos = *prob
        .stencil
        .position
        .get(node)
        .ok_or_else(|| Error::Domain(format!("node {node} out of range")))?;
    if pos == NONE {
        return Err(Error::Domain(format!("node {node} is a boundary node")));
    }
    let ext = prob.extended(v.values());
    Ok(prob.update_at(&ext, pos as usize))
}

/// The dynamic-programming map applied at every interior node at once
/// (Jacobi form). Boundary nodes keep their values.
pub fn dpp_apply(v: &GridFunction, prob: &TowProblem) -> Result<GridFunction> {
    if v.grid().len() != prob.grid.len() {
        return Err(Error::DimensionMismatch {
            expected: prob.grid.len(),
            got: v.grid().len(),
        });
    }
    let ext = prob.extended(v.values());
    let mut out = v.values().to_vec();
    for (pos, &node) in prob.stencil.interior.iter().enumerate() {
        out[node] = prob.update_at(&ext, pos);
    }
    GridFunction::new(v.grid().clone(), out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_sweeps: usize,
    /// Over-relaxation factor in `[1, 2)`; 1 is plain Gauss-Seidel.
    #[serde(default = "default_relaxation")]
    pub relaxation: f64,
}

fn default_relaxation() -> f64 {
    1.0
}

impl SolveOptions {
    pub fn new(tol: f64, max_sweeps: usize) -> Self {
        Self {
            tol,
            max_sweeps,
            relaxation: 1.0,
        }
    }

    pub fn with_relaxation(mut self, relaxation: f64) -> Self {
        self.relaxation = relaxation;
        self
    }
}

/// Gauss-Seidel value iteration in lexicographic node order until the
/// sup-norm change of a sweep is at most `tol`.
///
/// Problems with negative `h` are solved through the payoff negation
/// symmetry, so `solve(-h, -g) = -solve(h, g)` holds exactly.
pub fn solve_tow(prob: &TowProblem, tol: f64, max_sweeps: usize) -> Result<TowSolution> {
    solve_tow_with(prob, &SolveOptions::new(tol, max_sweeps))
}

/// [`solve_tow`] with optional over-relaxation. The fixed point is the same;
/// relaxation only changes how fast the sweeps reach it.
pub fn solve_tow_with(prob: &TowProblem, opts: &SolveOptions) -> Result<TowSolution> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidSpec("tolerance must be positive".into()));
    }
    if !(1.0..2.0).contains(&opts.relaxation) {
        return Err(Error::InvalidSpec(format!(
            "relaxation {} outside [1, 2)",
            opts.relaxation
        )));
    }
    if prob.negative {
        let mut sol = solve_positive(&prob.negated(), opts)?;
        let flipped: Vec<f64> = sol.values.values().iter().map(|v| -v).collect();
        sol.values = GridFunction::new(prob.grid.clone(), flipped)?;
        return Ok(sol);
    }
    solve_positive(prob, opts)
}

fn solve_positive(prob: &TowProblem, opts: &SolveOptions) -> Result<TowSolution> {
    let SolveOptions {
        tol,
        max_sweeps,
        mut relaxation,
    } = *opts;
    let grid = &prob.grid;
    let boundary: Vec<usize> = grid.boundary_nodes().collect();
    let start = if boundary.is_empty() {
        0.0
    } else {
        boundary.iter().map(|&k| prob.g[k]).sum::<f64>() / boundary.len() as f64
    };
    let mut init: Vec<f64> = (0..grid.len())
        .map(|k| {
            if grid.is_boundary(k) {
                prob.g[k]
            } else {
                start
            }
        })
        .collect();
    let mut ext = prob.extended(&init);
    let interior_count = prob.stencil.interior.len();

    let mut residual = f64::INFINITY;
    let mut best = f64::INFINITY;
    let mut stalled = 0;
    for sweep in 1..=max_sweeps {
        residual = 0.0;
        for pos in 0..interior_count {
            let node = prob.stencil.interior[pos];
            let delta = prob.update_at(&ext, pos) - ext[node];
            residual = residual.max(delta.abs());
            ext[node] += relaxation * delta;
        }
        // Over-relaxation can cycle when the max/min selections flip; fall
        // back to plain Gauss-Seidel, which always contracts.
        if residual < best {
            best = residual;
            stalled = 0;
        } else {
            stalled += 1;
        }
        if relaxation > 1.0 && (residual > 4.0 * best || stalled >= 20) {
            relaxation = 1.0;
        }
        if residual <= tol {
            init.copy_from_slice(&ext[..grid.len()]);
            return Ok(TowSolution {
                values: GridFunction::new(grid.clone(), init)?,
                sweeps: sweep,
                final_residual: residual,
                eps: prob.eps,
            });
        }
    }
    Err(Error::NotConverged {
        sweeps: max_sweeps,
        residual,
    })
}

/// `max |V(x) - dpp_update(V, x)|` over interior nodes.
pub fn dpp_residual(values: &GridFunction, prob: &TowProblem) -> Result<f64> {
    if values.grid().len() != prob.grid.len() {
        return Err(Error::DimensionMismatch {
            expected: prob.grid.len(),
            got: values.grid().len(),
        });
    }
    let ext = prob.extended(values.values());
    Ok((0..prob.stencil.interior.len())
        .map(|pos| (prob.update_at(&ext, pos) - ext[prob.stencil.interior[pos]]).abs())
        .fold(0.0, f64::max))
}
