//! Implicit domains, lattices over them and closed-ball neighborhoods.
//!
//! A domain is described by a level field that is positive inside, zero on
//! the boundary and 1-Lipschitz (distance-like). Lattices are anchored at the
//! lower corner of the bounding box; nodes are never snapped to the boundary.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::dist;

/// Absolute tolerance for ball membership and boundary membership tests.
pub const MEMBERSHIP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainSpec {
    Interval {
        lo: f64,
        hi: f64,
    },
    #[serde(rename = "box")]
    Cuboid {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    Annulus {
        center: Vec<f64>,
        inner: f64,
        outer: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    spec: DomainSpec,
    curvature_bound: f64,
}

pub fn make_domain(spec: DomainSpec) -> Result<Domain> {
    Domain::new(spec)
}

fn finite(values: &[f64]) -> bool {
    values.iter().all(|v| v.is_finite())
}

impl Domain {
    pub fn new(spec: DomainSpec) -> Result<Self> {
        let invalid = |msg: &str| Err(Error::InvalidSpec(msg.to_string()));
        let curvature_bound = match &spec {
            DomainSpec::Interval { lo, hi } => {
                if !finite(&[*lo, *hi]) || hi <= lo {
                    return invalid("interval requires finite lo < hi");
                }
                0.0
            }
            DomainSpec::Cuboid { lo, hi } => {
                if lo.is_empty() || lo.len() != hi.len() {
                    return invalid("box corners must have equal, nonzero dimension");
                }
                if !finite(lo) || !finite(hi) || lo.iter().zip(hi).any(|(a, b)| b <= a) {
                    return invalid("box requires finite lo < hi on every axis");
                }
                0.0
            }
            DomainSpec::Ball { center, radius } => {
                if center.is_empty() || !finite(center) {
                    return invalid("ball center must be a finite, nonempty point");
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return invalid("ball radius must be positive");
                }
                1.0 / radius
            }
            DomainSpec::Annulus {
                center,
                inner,
                outer,
            } => {
                if center.len() < 2 || !finite(center) {
                    return invalid("annulus needs a finite center in dimension >= 2");
                }
                if !(inner.is_finite() && outer.is_finite() && *inner > 0.0 && inner < outer) {
                    return invalid("annulus requires 0 < inner < outer");
                }
                1.0 / inner
            }
        };
        Ok(Self {
            spec,
            curvature_bound,
        })
    }

    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    /// Upper bound on the second derivative of the level field near the
    /// boundary.
    pub fn curvature_bound(&self) -> f64 {
        self.curvature_bound
    }

    pub fn dim(&self) -> usize {
        match &self.spec {
            DomainSpec::Interval { .. } => 1,
            DomainSpec::Cuboid { lo, .. } => lo.len(),
            DomainSpec::Ball { center, .. } | DomainSpec::Annulus { center, .. } => center.len(),
        }
    }

    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.spec {
            DomainSpec::Interval { lo, hi } => (vec![*lo], vec![*hi]),
            DomainSpec::Cuboid { lo, hi } => (lo.clone(), hi.clone()),
            DomainSpec::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            DomainSpec::Annulus { center, outer, .. } => (
                center.iter().map(|c| c - outer).collect(),
                center.iter().map(|c| c + outer).collect(),
            ),
        }
    }

    /// Width of the thinnest part of the domain.
    pub fn thickness(&self) -> f64 {
        match &self.spec {
            DomainSpec::Interval { lo, hi } => hi - lo,
            DomainSpec::Cuboid { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(a, b)| b - a)
                .fold(f64::INFINITY, f64::min),
            DomainSpec::Ball { radius, .. } => 2.0 * radius,
            DomainSpec::Annulus { inner, outer, .. } => outer - inner,
        }
    }

    pub fn diameter(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        match &self.spec {
            DomainSpec::Ball { radius, .. } => 2.0 * radius,
            DomainSpec::Annulus { outer, .. } => 2.0 * outer,
            _ => dist(&lo, &hi),
        }
    }

    /// Signed, 1-Lipschitz level field: positive inside, zero on the boundary.
    pub fn level(&self, x: &[f64]) -> f64 {
        match &self.spec {
            DomainSpec::Interval { lo, hi } => (x[0] - lo).min(hi - x[0]),
            DomainSpec::Cuboid { lo, hi } => {
                let mut inside = f64::INFINITY;
                let mut outside_sq = 0.0;
                for i in 0..lo.len() {
                    let below = lo[i] - x[i];
                    let above = x[i] - hi[i];
                    inside = inside.min(-below).min(-above);
                    let excess = below.max(above).max(0.0);
                    outside_sq += excess * excess;
                }
                if outside_sq > 0.0 {
                    -outside_sq.sqrt()
                } else {
                    inside
                }
            }
            DomainSpec::Ball { center, radius } => radius - dist(x, center),
            DomainSpec::Annulus {
                center,
                inner,
                outer,
            } => {
                let r = dist(x, center);
                (r - inner).min(outer - r)
            }
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.level(x) >= -MEMBERSHIP_TOL
    }

    /// Gradient of the level field (one-sided choice on the measure-zero set
    /// where it is not differentiable).
    pub fn level_gradient(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        match &self.spec {
            DomainSpec::Interval { lo, hi } => {
                out[0] = if x[0] - lo <= hi - x[0] { 1.0 } else { -1.0 };
            }
            DomainSpec::Cuboid { lo, hi } => {
                let nearest = self.project(x);
                let d = dist(x, &nearest);
                if self.level(x) < 0.0 && d > 0.0 {
                    for i in 0..lo.len() {
                        out[i] = (nearest[i] - x[i]) / d;
                    }
                } else {
                    let (axis, upper) = box_nearest_face(lo, hi, x);
                    out[axis] = if upper { -1.0 } else { 1.0 };
                }
            }
            DomainSpec::Ball { center, .. } => {
                let r = dist(x, center);
                if r > 0.0 {
                    for i in 0..center.len() {
                        out[i] = -(x[i] - center[i]) / r;
                    }
                }
            }
            DomainSpec::Annulus {
                center,
                inner,
                outer,
            } => {
                let r = dist(x, center);
                let sign = if r - inner <= outer - r { 1.0 } else { -1.0 };
                if r > 0.0 {
                    for i in 0..center.len() {
                        out[i] = sign * (x[i] - center[i]) / r;
                    }
                }
            }
        }
    }

    /// Nearest boundary point.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        match &self.spec {
            DomainSpec::Interval { lo, hi } => {
                if x[0] - lo <= hi - x[0] {
                    vec![*lo]
                } else {
                    vec![*hi]
                }
            }
            DomainSpec::Cuboid { lo, hi } => {
                let clamped: Vec<f64> = x
                    .iter()
                    .zip(lo.iter().zip(hi))
                    .map(|(v, (a, b))| v.clamp(*a, *b))
                    .collect();
                if clamped.as_slice() != x {
                    return clamped;
                }
                let (axis, upper) = box_nearest_face(lo, hi, x);
                let mut p = x.to_vec();
                p[axis] = if upper { hi[axis] } else { lo[axis] };
                p
            }
            DomainSpec::Ball { center, radius } => radial_point(center, x, *radius),
            DomainSpec::Annulus {
                center,
                inner,
                outer,
            } => {
                let r = dist(x, center);
                let target = if r - inner <= outer - r {
                    *inner
                } else {
                    *outer
                };
                radial_point(center, x, target)
            }
        }
    }

    /// Distance from an interior point `x` along the unit direction `d` to
    /// the first boundary crossing.
    pub fn ray_exit(&self, x: &[f64], d: &[f64]) -> f64 {
        match &self.spec {
            DomainSpec::Interval { lo, hi } => {
                if d[0] > 0.0 {
                    (hi - x[0]) / d[0]
                } else if d[0] < 0.0 {
                    (lo - x[0]) / d[0]
                } else {
                    f64::INFINITY
                }
            }
            DomainSpec::Cuboid { lo, hi } => {
                let mut t = f64::INFINITY;
                for i in 0..lo.len() {
                    if d[i] > 0.0 {
                        t = t.min((hi[i] - x[i]) / d[i]);
                    } else if d[i] < 0.0 {
                        t = t.min((lo[i] - x[i]) / d[i]);
                    }
                }
                t.max(0.0)
            }
            DomainSpec::Ball { center, radius } => {
                sphere_roots(center, *radius, x, d).map_or(0.0, |(_, t1)| t1.max(0.0))
            }
            DomainSpec::Annulus {
                center,
                inner,
                outer,
            } => {
                if let Some((t0, t1)) = sphere_roots(center, *inner, x, d) {
                    if t1 > 0.0 && t0 >= -MEMBERSHIP_TOL {
                        return t0.max(0.0);
                    }
                }
                sphere_roots(center, *outer, x, d).map_or(0.0, |(_, t1)| t1.max(0.0))
            }
        }
    }
}

fn box_nearest_face(lo: &[f64], hi: &[f64], x: &[f64]) -> (usize, bool) {
    let mut best = (0, false);
    let mut best_d = f64::INFINITY;
    for i in 0..lo.len() {
        if x[i] - lo[i] < best_d {
            best_d = x[i] - lo[i];
            best = (i, false);
        }
        if hi[i] - x[i] < best_d {
            best_d = hi[i] - x[i];
            best = (i, true);
        }
    }
    best
}

fn radial_point(center: &[f64], x: &[f64], radius: f64) -> Vec<f64> {
    let r = dist(x, center);
    let mut p = center.to_vec();
    if r > 0.0 {
        for i in 0..center.len() {
            p[i] += radius * (x[i] - center[i]) / r;
        }
    } else {
        p[0] += radius;
    }
    p
}

/// Roots `t0 <= t1` of `|x + t d - c| = radius` for unit `d`.
fn sphere_roots(center: &[f64], radius: f64, x: &[f64], d: &[f64]) -> Option<(f64, f64)> {
    let mut b = 0.0;
    let mut c = -radius * radius;
    for i in 0..center.len() {
        let w = x[i] - center[i];
        b += w * d[i];
        c += w * w;
    }
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    Some((-b - s, -b + s))
}

/// Lattice of nodes over the closed domain.
#[derive(Debug, Clone)]
pub struct Grid {
    domain: Domain,
    dim: usize,
    spacing: f64,
    origin: Vec<f64>,
    counts: Vec<usize>,
    coords: Vec<f64>,
    cells: Vec<usize>,
    boundary: Vec<bool>,
    lookup: Vec<u32>,
}

const NO_NODE: u32 = u32::MAX;

pub fn build_grid(domain: &Domain, spacing: f64) -> Result<Grid> {
    Grid::new(domain.clone(), spacing)
}

impl Grid {
    /// Lattice points with `level >= 0`; those with `level < spacing` form
    /// the absorbing boundary layer.
    ///
    /// At least three nodes must fit across the thinnest part of the domain
    /// (two boundary nodes around one interior node).
    pub fn new(domain: Domain, spacing: f64) -> Result<Self> {
        Self::with_boundary_layer(domain, spacing, spacing)
    }

    /// Like [`Grid::new`] but with an explicit boundary-layer width in
    /// `[0, spacing]`; width 0 keeps only nodes lying on the boundary itself.
    pub fn with_boundary_layer(domain: Domain, spacing: f64, layer: f64) -> Result<Self> {
        if !(layer >= 0.0 && layer <= spacing) {
            return Err(Error::InvalidSpec(format!(
                "boundary layer width {layer} must lie in [0, spacing]"
            )));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::InvalidSpec("spacing must be positive".into()));
        }
        let max_spacing = domain.thickness() / 2.0;
        if spacing > max_spacing * (1.0 + 1e-9) {
            return Err(Error::SpacingTooCoarse {
                spacing,
                max_spacing,
            });
        }
        let dim = domain.dim();
        let (lo, hi) = domain.bounding_box();
        let counts: Vec<usize> = lo
            .iter()
            .zip(&hi)
            .map(|(a, b)| ((b - a) / spacing + 1e-9).floor() as usize + 1)
            .collect();
        let total: usize = counts.iter().product();
        if total >= NO_NODE as usize {
            return Err(Error::InvalidSpec(format!(
                "lattice with {total} points is too large"
            )));
        }

        let mut grid = Self {
            domain,
            dim,
            spacing,
            origin: lo,
            counts,
            coords: Vec::new(),
            cells: Vec::new(),
            boundary: Vec::new(),
            lookup: vec![NO_NODE; total],
        };
        let mut x = vec![0.0; dim];
        for cell in 0..total {
            grid.cell_coords(cell, &mut x);
            let level = grid.domain.level(&x);
            if level >= -MEMBERSHIP_TOL {
                grid.lookup[cell] = grid.cells.len() as u32;
                grid.cells.push(cell);
                grid.coords.extend_from_slice(&x);
                grid.boundary
                    .push(level < (layer - MEMBERSHIP_TOL).max(MEMBERSHIP_TOL));
            }
        }
        Ok(grid)
    }

    fn cell_coords(&self, mut cell: usize, out: &mut [f64]) {
        for axis in (0..self.dim).rev() {
            let i = cell % self.counts[axis];
            cell /= self.counts[axis];
            out[axis] = self.origin[axis] + i as f64 * self.spacing;
        }
    }

    fn cell_index(&self, cell: usize, out: &mut [i64]) {
        let mut cell = cell;
        for axis in (0..self.dim).rev() {
            out[axis] = (cell % self.counts[axis]) as i64;
            cell /= self.counts[axis];
        }
    }

    fn cell_of(&self, index: &[i64]) -> Option<usize> {
        let mut cell = 0usize;
        for axis in 0..self.dim {
            let i = index[axis];
            if i < 0 || i as usize >= self.counts[axis] {
                return None;
            }
            cell = cell * self.counts[axis] + i as usize;
        }
        Some(cell)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn node(&self, k: usize) -> &[f64] {
        &self.coords[k * self.dim..(k + 1) * self.dim]
    }

    pub fn is_boundary(&self, k: usize) -> bool {
        self.boundary[k]
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    pub fn interior_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&k| !self.boundary[k])
    }

    pub fn boundary_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&k| self.boundary[k])
    }

    /// Integer lattice coordinates of node `k`.
    pub fn lattice_index(&self, k: usize) -> Vec<i64> {
        let mut idx = vec![0; self.dim];
        self.cell_index(self.cells[k], &mut idx);
        idx
    }

    /// Node at the given integer lattice coordinates, if it lies in the
    /// closed domain.
    pub fn node_at(&self, index: &[i64]) -> Option<usize> {
        self.cell_of(index)
            .map(|c| self.lookup[c])
            .filter(|&n| n != NO_NODE)
            .map(|n| n as usize)
    }

    /// Node whose coordinates match `x` up to a small fraction of the spacing.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        let idx: Vec<i64> = x
            .iter()
            .zip(&self.origin)
            .map(|(v, o)| ((v - o) / self.spacing).round() as i64)
            .collect();
        let k = self.node_at(&idx)?;
        (dist(self.node(k), x) <= 1e-6 * self.spacing).then_some(k)
    }

    /// Integer offsets `o` with `|o| * spacing <= eps` (inclusive, with
    /// absolute tolerance), in lexicographic order.
    pub fn ball_offsets(&self, eps: f64) -> Result<Vec<Vec<i64>>> {
        if eps < self.spacing * (1.0 - 1e-12) {
            return Err(Error::RadiusBelowSpacing {
                eps,
                spacing: self.spacing,
            });
        }
        let reach = (eps / self.spacing + 1e-9).floor() as i64;
        let side = (2 * reach + 1) as usize;
        let mut offsets = Vec::new();
        let mut o = vec![0i64; self.dim];
        for flat in 0..side.pow(self.dim as u32) {
            let mut rem = flat;
            for axis in (0..self.dim).rev() {
                o[axis] = (rem % side) as i64 - reach;
                rem /= side;
            }
            let len = o.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt() * self.spacing;
            if len <= eps + MEMBERSHIP_TOL {
                offsets.push(o.clone());
            }
        }
        Ok(offsets)
    }

    /// All nodes within the closed `eps`-ball around `node`, including
    /// `node` itself, in node order.
    pub fn ball_neighbors(&self, node: usize, eps: f64) -> Result<Vec<usize>> {
        let offsets = self.ball_offsets(eps)?;
        Ok(self.neighbors_with(node, &offsets))
    }

    pub(crate) fn neighbors_with(&self, node: usize, offsets: &[Vec<i64>]) -> Vec<usize> {
        let base = self.lattice_index(node);
        let mut idx = vec![0i64; self.dim];
        offsets
            .iter()
            .filter_map(|o| {
                for axis in 0..self.dim {
                    idx[axis] = base[axis] + o[axis];
                }
                self.node_at(&idx)
            })
            .collect()
    }

    /// Multilinear interpolation of node values at `x`. Cell corners that
    /// are not nodes are filled in by `missing`.
    pub fn interpolate_with<F>(&self, values: &[f64], x: &[f64], mut missing: F) -> f64
    where
        F: FnMut(&[f64]) -> f64,
    {
        let dim = self.dim;
        let mut base = [0i64; 3];
        let mut frac = [0f64; 3];
        let mut base_vec;
        let mut frac_vec;
        let (base, frac): (&mut [i64], &mut [f64]) = if dim <= 3 {
            (&mut base[..dim], &mut frac[..dim])
        } else {
            base_vec = vec![0i64; dim];
            frac_vec = vec![0f64; dim];
            (&mut base_vec[..], &mut frac_vec[..])
        };
        for axis in 0..dim {
            let s = (x[axis] - self.origin[axis]) / self.spacing;
            let max_base = self.counts[axis] as i64 - 2;
            let b = (s.floor() as i64).clamp(0, max_base.max(0));
            base[axis] = b;
            frac[axis] = s - b as f64;
        }
        let mut acc = 0.0;
        let mut corner = vec![0i64; dim];
        let mut point = vec![0.0; dim];
        for mask in 0..(1usize << dim) {
            let mut w = 1.0;
            for axis in 0..dim {
                let up = (mask >> axis) & 1 == 1;
                corner[axis] = base[axis] + up as i64;
                w *= if up { frac[axis] } else { 1.0 - frac[axis] };
            }
            if w == 0.0 {
                continue;
            }
            let v = match self.node_at(&corner) {
                Some(k) => values[k],
                None => {
                    for axis in 0..dim {
                        point[axis] = self.origin[axis] + corner[axis] as f64 * self.spacing;
                    }
                    missing(&point)
                }
            };
            acc += w * v;
        }
        acc
    }
}

/// Values attached to the nodes of a grid.
#[derive(Debug, Clone)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "grid function value at node {k} is not finite"
            )));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` at every node.
    pub fn sample<F: FnMut(&[f64]) -> f64>(grid: Arc<Grid>, mut f: F) -> Result<Self> {
        let values = (0..grid.len()).map(|k| f(grid.node(k))).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, k: usize) -> f64 {
        self.values[k]
    }

    /// Multilinear interpolant; corners outside the domain take the value
    /// of the nearest boundary node.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let grid = &self.grid;
        grid.interpolate_with(&self.values, x, |p| {
            let q = grid.domain().project(p);
            self.nearest_value(&q)
        })
    }

    fn nearest_value(&self, x: &[f64]) -> f64 {
        let g = &self.grid;
        let idx: Vec<i64> = x
            .iter()
            .zip(g.origin())
            .map(|(v, o)| ((v - o) / g.spacing()).round() as i64)
            .collect();
        if let Some(k) = g.node_at(&idx) {
            return self.values[k];
        }
        (0..g.len())
            .min_by(|&a, &b| dist(g.node(a), x).total_cmp(&dist(g.node(b), x)))
            .map(|k| self.values[k])
            .unwrap_or(0.0)
    }

    pub fn sup_distance(&self, other: &[f64]) -> f64 {
        self.values
            .iter()
            .zip(other)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// CSV with columns `x1..xm, is_boundary, value`; values use 17
    /// significant digits.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let g = &self.grid;
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (1..=g.dim()).map(|i| format!("x{i}")).collect();
        header.push("is_boundary".into());
        header.push("value".into());
        w.write_record(&header)?;
        let mut row = Vec::with_capacity(g.dim() + 2);
        for k in 0..g.len() {
            row.clear();
            row.extend(g.node(k).iter().map(|v| format!("{v:.16e}")));
            row.push(if g.is_boundary(k) { "1" } else { "0" }.to_string());
            row.push(format!("{:.16e}", self.values[k]));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a CSV written by [`GridFunction::write_csv`] back onto `grid`.
    /// Every row must coincide with a node of the grid.
    pub fn read_csv<R: Read>(grid: Arc<Grid>, reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        let dim = grid.dim();
        if headers.len() != dim + 2 {
            return Err(Error::DimensionMismatch {
                expected: dim + 2,
                got: headers.len(),
            });
        }
        let mut values = vec![f64::NAN; grid.len()];
        let mut x = vec![0.0; dim];
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec[i].trim().parse::<f64>().map_err(|e| {
                    Error::InvalidSpec(format!("row {}: column {}: {e}", line + 2, i + 1))
                })
            };
            for (i, xi) in x.iter_mut().enumerate() {
                *xi = parse(i)?;
            }
            let k = grid.locate(&x).ok_or_else(|| {
                Error::InvalidSpec(format!("row {}: point {x:?} is not a grid node", line + 2))
            })?;
            values[k] = parse(dim + 1)?;
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidSpec(
                "CSV does not cover every grid node".into(),
            ));
        }
        Self::new(grid, values)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interval(lo: f64, hi: f64) -> Domain {
        make_domain(DomainSpec::Interval { lo, hi }).unwrap()
    }

    fn disc(radius: f64) -> Domain {
        make_domain(DomainSpec::Ball {
            center: vec![0.0, 0.0],
            radius,
        })
        .unwrap()
    }

    fn annulus(inner: f64, outer: f64) -> Domain {
        make_domain(DomainSpec::Annulus {
            center: vec![0.0, 0.0],
            inner,
            outer,
        })
        .unwrap()
    }

    #[test]
    fn level_fields_of_basic_shapes() {
        let d = interval(0.0, 1.0);
        assert_eq!(d.level(&[0.5]), 0.5);
        assert_eq!(d.level(&[0.0]), 0.0);
        assert_eq!(d.curvature_bound(), 0.0);

        let b = disc(1.0);
        assert!(b.level(&[0.6, 0.8]).abs() <= 1e-12);
        assert_eq!(b.curvature_bound(), 1.0);

        let a = annulus(1.0, 2.0);
        assert!((a.level(&[1.5, 0.0]) - 0.5).abs() < 1e-15);
        assert!((a.level(&[0.0, 1.2]) - 0.2).abs() < 1e-15);
        assert!((a.level(&[0.0, -1.9]) - 0.1).abs() < 1e-15);
        assert_eq!(a.curvature_bound(), 1.0);

        let c = make_domain(DomainSpec::Cuboid {
            lo: vec![0.0, 0.0],
            hi: vec![2.0, 1.0],
        })
        .unwrap();
        assert_eq!(c.level(&[0.5, 0.25]), 0.25);
        assert_eq!(c.level(&[3.0, 0.5]), -1.0);
    }

    #[test]
    fn degenerate_specs_are_rejected() {
        for spec in [
            DomainSpec::Interval { lo: 1.0, hi: 1.0 },
            DomainSpec::Annulus {
                center: vec![0.0, 0.0],
                inner: 2.0,
                outer: 1.0,
            },
            DomainSpec::Annulus {
                center: vec![0.0, 0.0],
                inner: 0.0,
                outer: 1.0,
            },
            DomainSpec::Ball {
                center: vec![0.0],
                radius: 0.0,
            },
            DomainSpec::Cuboid {
                lo: vec![0.0, 0.0],
                hi: vec![1.0, 0.0],
            },
        ] {
            assert!(matches!(make_domain(spec), Err(Error::InvalidSpec(_))));
        }
    }

    #[test]
    fn projection_lands_on_boundary() {
        let a = annulus(1.0, 2.0);
        for x in [[1.1, 0.3], [0.0, -1.8], [1.2, 1.3], [-0.3, 1.05]] {
            let p = a.project(&x);
            assert!(a.level(&p).abs() < 1e-12, "{x:?} -> {p:?}");
        }
        let c = make_domain(DomainSpec::Cuboid {
            lo: vec![0.0, 0.0],
            hi: vec![1.0, 1.0],
        })
        .unwrap();
        assert_eq!(c.project(&[0.2, 0.5]), vec![0.0, 0.5]);
        assert_eq!(c.project(&[0.5, 0.9]), vec![0.5, 1.0]);
    }

    #[test]
    fn ray_exit_hits_the_nearest_wall() {
        let a = annulus(1.0, 2.0);
        // Toward the hole from (1.5, 0): inner wall at distance 0.5.
        assert!((a.ray_exit(&[1.5, 0.0], &[-1.0, 0.0]) - 0.5).abs() < 1e-12);
        assert!((a.ray_exit(&[1.5, 0.0], &[1.0, 0.0]) - 0.5).abs() < 1e-12);
        // Tangential ray misses the hole and leaves through the outer wall.
        let t = a.ray_exit(&[1.5, 0.0], &[0.0, 1.0]);
        assert!((t - (4.0f64 - 2.25).sqrt()).abs() < 1e-12);
        let i = interval(0.0, 1.0);
        assert!((i.ray_exit(&[0.3], &[-1.0]) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn interval_grid_at_quarter_spacing() {
        let g = build_grid(&interval(0.0, 1.0), 0.25).unwrap();
        let xs: Vec<f64> = (0..g.len()).map(|k| g.node(k)[0]).collect();
        assert_eq!(xs, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let bnd: Vec<f64> = g.boundary_nodes().map(|k| g.node(k)[0]).collect();
        assert_eq!(bnd, vec![0.0, 1.0]);
    }

    #[test]
    fn off_lattice_boundary_is_not_snapped() {
        let g = build_grid(&interval(0.0, 1.0), 0.5).unwrap();
        assert_eq!(g.len(), 3);
        let g = build_grid(&interval(0.0, 1.0), 0.4).unwrap();
        let xs: Vec<f64> = (0..g.len()).map(|k| g.node(k)[0]).collect();
        assert_eq!(xs.len(), 3);
        assert!((xs[2] - 0.8).abs() < 1e-15);
        // 0.8 has level 0.2 < spacing: boundary layer.
        assert!(g.is_boundary(2));
    }

    #[test]
    fn disc_node_count_matches_enumeration() {
        let g = build_grid(&disc(1.0), 0.5).unwrap();
        // Independent count of lattice points of {-1,-0.5,0,0.5,1}^2 in the disc.
        let ticks = [-1.0, -0.5, 0.0, 0.5, 1.0];
        let mut expected = 0;
        for x in ticks {
            for y in ticks {
                if x * x + y * y <= 1.0 {
                    expected += 1;
                }
            }
        }
        assert_eq!(expected, 13);
        assert_eq!(g.len(), expected);
    }

    #[test]
    fn coarse_spacing_reports_the_limit() {
        match build_grid(&interval(0.0, 1.0), 0.6) {
            Err(Error::SpacingTooCoarse { max_spacing, .. }) => assert_eq!(max_spacing, 0.5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ball_neighbors_examples() {
        let g = build_grid(&interval(0.0, 1.0), 0.25).unwrap();
        let n = g.ball_neighbors(2, 0.25).unwrap();
        let xs: Vec<f64> = n.iter().map(|&k| g.node(k)[0]).collect();
        assert_eq!(xs, vec![0.25, 0.5, 0.75]);
        assert!(matches!(
            g.ball_neighbors(2, 0.2),
            Err(Error::RadiusBelowSpacing { .. })
        ));

        let sq = make_domain(DomainSpec::Cuboid {
            lo: vec![0.0, 0.0],
            hi: vec![1.0, 1.0],
        })
        .unwrap();
        let g = build_grid(&sq, 0.25).unwrap();
        let centre = g.locate(&[0.5, 0.5]).unwrap();
        assert_eq!(g.ball_neighbors(centre, 0.25).unwrap().len(), 5);
        // Diagonal neighbors sit at 0.25 * sqrt(2) = 0.35355... <= 0.3605.
        assert_eq!(g.ball_neighbors(centre, 0.3605).unwrap().len(), 9);
    }

    #[test]
    fn interior_axis_neighbors_exist() {
        let g = build_grid(&annulus(1.0, 2.0), 0.125).unwrap();
        for k in g.interior_nodes() {
            let base = g.lattice_index(k);
            for axis in 0..2 {
                for step in [-1, 1] {
                    let mut idx = base.clone();
                    idx[axis] += step;
                    assert!(g.node_at(&idx).is_some());
                }
            }
        }
    }

    #[test]
    fn csv_round_trip() {
        let g = Arc::new(build_grid(&disc(1.0), 0.25).unwrap());
        let f = GridFunction::sample(g.clone(), |x| (x[0] * 3.1).sin() + x[1] / 7.0).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x1,x2,is_boundary,value\n"));
        let back = GridFunction::read_csv(g, buf.as_slice()).unwrap();
        assert_eq!(back.values(), f.values());
    }

    #[test]
    fn interpolation_reproduces_affine_fields() {
        let g = Arc::new(build_grid(&annulus(1.0, 2.0), 1.0 / 16.0).unwrap());
        let f = GridFunction::sample(g, |x| 2.0 * x[0] - 0.5 * x[1] + 1.0).unwrap();
        for x in [[1.3, 0.2], [-0.7, 1.1], [0.1, -1.6]] {
            let v = f.interpolate(&x);
            assert!((v - (2.0 * x[0] - 0.5 * x[1] + 1.0)).abs() < 1e-12);
        }
    }
}
