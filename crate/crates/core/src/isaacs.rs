//! Hamiltonians of the differential game.
//!
//! For unit directions `a, b` and intensities `c, d ≥ 0`,
//!
//! ```text
//! Φ(a, b, c, d; p, S) = -½ (a-b)ᵀ S (a-b) - (c+d) (a+b)·p
//! Λ⁺_kl = max_{|b|=1, d≤l} min_{|a|=1, c≤k} Φ
//! Λ⁻_kl = min_{|a|=1, c≤k} max_{|b|=1, d≤l} Φ
//! Λ(p, S) = -2 pᵀSp / |p|²   (p ≠ 0),   -2λ   (p = 0, S = λI)
//! ```
//!
//! The bounded operators are evaluated by a global direction grid followed
//! by local refinement. The responding player's intensity is exact: Φ is
//! affine in it, so its optimum sits at 0 or at the bound. The leading
//! player's objective is a pointwise extremum of affine functions of its
//! intensity, hence convex (or concave), and is optimized by golden section
//! together with both endpoints.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm, SymMatrix};
use crate::sphere::{circle, fibonacci};

const UNIT_TOL: f64 = 1e-12;
const INV_PHI: f64 = 0.618_033_988_749_894_9;

fn check_unit(a: &[f64]) -> Result<()> {
    let n = norm(a);
    if !((n - 1.0).abs() <= UNIT_TOL) {
        return Err(Error::Domain(format!("direction has norm {n}, expected 1")));
    }
    Ok(())
}

fn check_intensity(c: f64) -> Result<()> {
    if !(c >= 0.0 && c.is_finite()) {
        return Err(Error::Domain(format!(
            "intensity {c} must be finite and >= 0"
        )));
    }
    Ok(())
}

/// One player's action: a unit direction and a drift intensity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlAtom {
    pub a: Vec<f64>,
    pub c: f64,
}

impl ControlAtom {
    pub fn new(a: Vec<f64>, c: f64) -> Result<Self> {
        check_unit(&a)?;
        check_intensity(c)?;
        Ok(Self { a, c })
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsaacsQuery {
    p: Vec<f64>,
    s: SymMatrix,
    k: f64,
    l: f64,
}

impl IsaacsQuery {
    /// `k` bounds `c` (the action `(a, c)` that Φ is minimized over) and `l`
    /// bounds `d`.
    pub fn new(p: Vec<f64>, s: SymMatrix, k: f64, l: f64) -> Result<Self> {
        if p.len() != s.dim() {
            return Err(Error::DimensionMismatch {
                expected: s.dim(),
                got: p.len(),
            });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("p must be finite".into()));
        }
        check_intensity(k)?;
        check_intensity(l)?;
        Ok(Self { p, s, k, l })
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn s(&self) -> &SymMatrix {
        &self.s
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn l(&self) -> f64 {
        self.l
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Plus,
    Minus,
}

/// Membership tolerances for the domain of the limit operator, shared with
/// the residual checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorTolerances {
    pub tol_grad: f64,
    /// `tol_iso = tol_iso_rel · (1 + ‖S‖_F)`.
    pub tol_iso_rel: f64,
}

impl Default for OperatorTolerances {
    fn default() -> Self {
        Self {
            tol_grad: 1e-8,
            tol_iso_rel: 1e-8,
        }
    }
}

impl OperatorTolerances {
    pub fn tol_iso(&self, s: &SymMatrix) -> f64 {
        self.tol_iso_rel * (1.0 + s.frobenius())
    }
}

#[inline]
fn phi_raw(a: &[f64], b: &[f64], c: f64, d: f64, p: &[f64], s: &SymMatrix) -> f64 {
    let m = p.len();
    let mut quad = 0.0;
    let mut lin = 0.0;
    for i in 0..m {
        let di = a[i] - b[i];
        let mut row = 0.0;
        for j in 0..m {
            row += s.get(i, j) * (a[j] - b[j]);
        }
        quad += di * row;
        lin += (a[i] + b[i]) * p[i];
    }
    -0.5 * quad - (c + d) * lin
}

pub fn phi(a: &[f64], b: &[f64], c: f64, d: f64, p: &[f64], s: &SymMatrix) -> Result<f64> {
    let m = s.dim();
    for len in [a.len(), b.len(), p.len()] {
        if len != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: len,
            });
        }
    }
    check_unit(a)?;
    check_unit(b)?;
    check_intensity(c)?;
    check_intensity(d)?;
    Ok(phi_raw(a, b, c, d, p, s))
}

/// The limit operator Λ. Errors when `|p| ≤ tol_grad` and `S` is farther
/// than `tol_iso` (Frobenius) from a multiple of the identity.
pub fn lambda_inf(p: &[f64], s: &SymMatrix, tol_grad: f64, tol_iso: f64) -> Result<f64> {
    if p.len() != s.dim() {
        return Err(Error::DimensionMismatch {
            expected: s.dim(),
            got: p.len(),
        });
    }
    let grad_norm = norm(p);
    if grad_norm > tol_grad {
        return Ok(-2.0 * s.quad(p) / (grad_norm * grad_norm));
    }
    let anisotropy = s.anisotropy();
    if anisotropy <= tol_iso {
        return Ok(-2.0 * s.trace() / s.dim() as f64);
    }
    Err(Error::OutsideOperatorDomain {
        grad_norm,
        anisotropy,
    })
}

/// Search resolution for the bounded operators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    /// Angle grid size in two dimensions.
    pub circle_points: usize,
    /// Fibonacci lattice size in three dimensions.
    pub sphere_points: usize,
    /// Target width of the final refinement intervals (radians for
    /// directions, relative to `1 + bound` for intensities).
    pub width: f64,
    /// Grid local optima refined per search.
    pub candidates: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            circle_points: 720,
            sphere_points: 2000,
            width: 1e-6,
            candidates: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundedValue {
    pub value: f64,
    /// Largest final refinement interval width over the nested searches.
    pub residual: f64,
    /// Optimal action of the outer player (the minimizer for `Minus`, the
    /// maximizer for `Plus`).
    pub outer: ControlAtom,
}

type Point = [f64; 3];

struct Directions {
    m: usize,
    points: Vec<Point>,
    spacing: f64,
}

impl Directions {
    fn new(m: usize, opts: &SearchOptions) -> Result<Self> {
        let (raw, spacing) = match m {
            1 => (vec![vec![1.0], vec![-1.0]], 0.0),
            2 => {
                let n = opts.circle_points.max(8);
                (circle(n), std::f64::consts::TAU / n as f64)
            }
            3 => {
                let n = opts.sphere_points.max(32);
                (fibonacci(n), (4.0 * std::f64::consts::PI / n as f64).sqrt())
            }
            _ => {
                return Err(Error::InvalidSpec(format!(
                    "bounded operators support dimensions 1 to 3, got {m}"
                )))
            }
        };
        let points = raw
            .into_iter()
            .map(|v| {
                let mut p = [0.0; 3];
                p[..m].copy_from_slice(&v);
                p
            })
            .collect();
        Ok(Self { m, points, spacing })
    }

    /// Grid indices to refine: local maxima on the circle, the best values
    /// elsewhere.
    fn candidates(&self, vals: &[f64], count: usize) -> Vec<usize> {
        let n = vals.len();
        let mut idx: Vec<usize> = if self.m == 2 {
            (0..n)
                .filter(|&i| vals[i] >= vals[(i + n - 1) % n] && vals[i] >= vals[(i + 1) % n])
                .collect()
        } else {
            (0..n).collect()
        };
        idx.sort_by(|&i, &j| vals[j].total_cmp(&vals[i]).then(i.cmp(&j)));
        idx.truncate(count.max(1));
        idx
    }

    /// Maximizes `f` over the unit sphere given its values on the grid.
    /// Returns the best point, its value and the final interval width.
    fn maximize(
        &self,
        vals: &[f64],
        f: &mut dyn FnMut(&Point) -> f64,
        opts: &SearchOptions,
    ) -> (Point, f64, f64) {
        let mut best_i = 0;
        for i in 1..vals.len() {
            if vals[i] > vals[best_i] {
                best_i = i;
            }
        }
        let mut best = (self.points[best_i], vals[best_i], 0.0);
        if self.m == 1 {
            return best;
        }
        for i in self.candidates(vals, opts.candidates) {
            let (pt, v, w) = if self.m == 2 {
                self.refine_circle(i, f, opts.width)
            } else {
                self.refine_sphere(i, vals[i], f, opts.width)
            };
            best.2 = f64::max(best.2, w);
            if v > best.1 {
                best.0 = pt;
                best.1 = v;
            }
        }
        best
    }

    fn refine_circle(
        &self,
        i: usize,
        f: &mut dyn FnMut(&Point) -> f64,
        width: f64,
    ) -> (Point, f64, f64) {
        let at = |t: f64| [t.cos(), t.sin(), 0.0];
        let center = self.points[i][1].atan2(self.points[i][0]);
        let (mut lo, mut hi) = (center - self.spacing, center + self.spacing);
        let mut x1 = hi - INV_PHI * (hi - lo);
        let mut x2 = lo + INV_PHI * (hi - lo);
        let mut f1 = f(&at(x1));
        let mut f2 = f(&at(x2));
        while hi - lo > width {
            if f1 >= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - INV_PHI * (hi - lo);
                f1 = f(&at(x1));
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + INV_PHI * (hi - lo);
                f2 = f(&at(x2));
            }
        }
        if f1 >= f2 {
            (at(x1), f1, hi - lo)
        } else {
            (at(x2), f2, hi - lo)
        }
    }

    /// Compass search on the tangent plane, retracting onto the sphere.
    fn refine_sphere(
        &self,
        i: usize,
        start: f64,
        f: &mut dyn FnMut(&Point) -> f64,
        width: f64,
    ) -> (Point, f64, f64) {
        let mut x = self.points[i];
        let mut fx = start;
        let mut step = self.spacing;
        while step > width {
            let (u, v) = tangent_basis(&x);
            let mut moved = false;
            for (e, sign) in [(u, 1.0), (u, -1.0), (v, 1.0), (v, -1.0)] {
                let mut y = [0.0; 3];
                for k in 0..3 {
                    y[k] = x[k] + sign * step * e[k];
                }
                let n = norm(&y);
                y.iter_mut().for_each(|c| *c /= n);
                let fy = f(&y);
                if fy > fx {
                    x = y;
                    fx = fy;
                    moved = true;
                    break;
                }
            }
            if !moved {
                step *= 0.5;
            }
        }
        (x, fx, step)
    }
}

fn tangent_basis(x: &Point) -> (Point, Point) {
    let helper = if x[0].abs() < 0.9 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 1.0, 0.0]
    };
    let dot = helper[0] * x[0] + helper[1] * x[1] + helper[2] * x[2];
    let mut u = [0.0; 3];
    for k in 0..3 {
        u[k] = helper[k] - dot * x[k];
    }
    let n = norm(&u);
    u.iter_mut().for_each(|c| *c /= n);
    let v = [
        x[1] * u[2] - x[2] * u[1],
        x[2] * u[0] - x[0] * u[2],
        x[0] * u[1] - x[1] * u[0],
    ];
    (u, v)
}

/// Evaluates `min_{x, c ≤ outer} max_{y, d ≤ inner} Φ(x, y, c, d; p, S)`.
struct MinMax<'a> {
    p: &'a [f64],
    s: &'a SymMatrix,
    outer: f64,
    inner: f64,
    dirs: Directions,
    opts: SearchOptions,
}

struct Response {
    value: f64,
    width: f64,
}

impl<'a> MinMax<'a> {
    fn new(
        p: &'a [f64],
        s: &'a SymMatrix,
        outer: f64,
        inner: f64,
        opts: &SearchOptions,
    ) -> Result<Self> {
        Ok(Self {
            p,
            s,
            outer,
            inner,
            dirs: Directions::new(p.len(), opts)?,
            opts: *opts,
        })
    }

    fn m(&self) -> usize {
        self.p.len()
    }

    /// Grid tables of the quadratic and linear parts of Φ for fixed `x`.
    fn tables(&self, x: &Point) -> (Vec<f64>, Vec<f64>) {
        let m = self.m();
        self.dirs
            .points
            .iter()
            .map(|y| {
                let q = phi_raw(&x[..m], &y[..m], 0.0, 0.0, self.p, self.s);
                let lin: f64 = (0..m).map(|i| (x[i] + y[i]) * self.p[i]).sum();
                (q, lin)
            })
            .unzip()
    }

    /// `max_{y, d ∈ {0, inner}} Φ(x, y, c, d)`.
    fn respond(&self, x: &Point, c: f64, q: &[f64], lin: &[f64], buf: &mut Vec<f64>) -> Response {
        let m = self.m();
        let mut best = Response {
            value: f64::NEG_INFINITY,
            width: 0.0,
        };
        let ds: &[f64] = if self.inner > 0.0 {
            &[0.0, self.inner]
        } else {
            &[0.0]
        };
        for &d in ds {
            buf.clear();
            buf.extend(q.iter().zip(lin).map(|(q, l)| q - (c + d) * l));
            let mut f = |y: &Point| phi_raw(&x[..m], &y[..m], c, d, self.p, self.s);
            let (_, v, w) = self.dirs.maximize(buf, &mut f, &self.opts);
            best.width = best.width.max(w);
            if v > best.value {
                best.value = v;
            }
        }
        best
    }

    /// `min_{c ∈ [0, outer]} max_{y, d} Φ(x, y, c, d)`, convex in `c`.
    /// Returns (value, optimal c, width).
    fn outer_value(&self, x: &Point) -> (f64, f64, f64) {
        let (q, lin) = self.tables(x);
        let mut buf = Vec::with_capacity(q.len());
        let mut width: f64 = 0.0;
        let mut eval = |c: f64, width: &mut f64| {
            let r = self.respond(x, c, &q, &lin, &mut buf);
            *width = width.max(r.width);
            r.value
        };
        let mut best = (eval(0.0, &mut width), 0.0);
        if self.outer == 0.0 {
            return (best.0, 0.0, width);
        }
        let at_bound = eval(self.outer, &mut width);
        if at_bound < best.0 {
            best = (at_bound, self.outer);
        }
        let tol = self.opts.width * (1.0 + self.outer);
        let (mut lo, mut hi) = (0.0, self.outer);
        let mut c1 = hi - INV_PHI * (hi - lo);
        let mut c2 = lo + INV_PHI * (hi - lo);
        let mut f1 = eval(c1, &mut width);
        let mut f2 = eval(c2, &mut width);
        while hi - lo > tol {
            if f1 <= f2 {
                hi = c2;
                c2 = c1;
                f2 = f1;
                c1 = hi - INV_PHI * (hi - lo);
                f1 = eval(c1, &mut width);
            } else {
                lo = c1;
                c1 = c2;
                f1 = f2;
                c2 = lo + INV_PHI * (hi - lo);
                f2 = eval(c2, &mut width);
            }
        }
        for (v, c) in [(f1, c1), (f2, c2)] {
            if v < best.0 {
                best = (v, c);
            }
        }
        (best.0, best.1, width.max((hi - lo) / (1.0 + self.outer)))
    }

    fn solve(&self) -> BoundedValue {
        let m = self.m();
        let outer_vals: Vec<(f64, f64, f64)> = self
            .dirs
            .points
            .par_iter()
            .map(|x| self.outer_value(x))
            .collect();
        let mut width = outer_vals.iter().map(|v| v.2).fold(0.0, f64::max);
        let neg: Vec<f64> = outer_vals.iter().map(|v| -v.0).collect();
        let mut f = |x: &Point| {
            let (v, _, w) = self.outer_value(x);
            width = width.max(w);
            -v
        };
        let (x, v, w) = self.dirs.maximize(&neg, &mut f, &self.opts);
        let (value, c, w2) = self.outer_value(&x);
        debug_assert!((value + v).abs() <= 1e-12 * (1.0 + value.abs()));
        BoundedValue {
            value,
            residual: width.max(w).max(w2),
            outer: ControlAtom {
                a: x[..m].to_vec(),
                c,
            },
        }
    }

    /// Best response of the inner player to a fixed outer action.
    fn response_to(&self, x: &Point, c: f64) -> f64 {
        let (q, lin) = self.tables(x);
        let mut buf = Vec::with_capacity(q.len());
        self.respond(x, c, &q, &lin, &mut buf).value
    }
}

fn to_point(a: &[f64]) -> Point {
    let mut p = [0.0; 3];
    p[..a.len()].copy_from_slice(a);
    p
}

/// Λ⁺_kl (max-min) or Λ⁻_kl (min-max) with default search options.
pub fn lambda_bounded(q: &IsaacsQuery, side: Side) -> Result<BoundedValue> {
    lambda_bounded_with(q, side, &SearchOptions::default())
}

pub fn lambda_bounded_with(
    q: &IsaacsQuery,
    side: Side,
    opts: &SearchOptions,
) -> Result<BoundedValue> {
    match side {
        Side::Minus => Ok(MinMax::new(&q.p, &q.s, q.k, q.l, opts)?.solve()),
        Side::Plus => {
            // Φ(a,b,c,d) = Φ(b,a,d,c) and -Φ(·; p, S) = Φ(·; -p, -S), so
            // max_{b,d} min_{a,c} Φ = -min_{b,d} max_{a,c} Φ(b,a,d,c; -p, -S).
            let p: Vec<f64> = q.p.iter().map(|v| -v).collect();
            let s = q.s.scale(-1.0);
            let mut r = MinMax::new(&p, &s, q.l, q.k, opts)?.solve();
            r.value = -r.value;
            Ok(r)
        }
    }
}

/// `max_{|b|=1, d≤l} Φ(a, b, c, d)` for a fixed action `(a, c)`.
pub fn max_response(q: &IsaacsQuery, min_action: &ControlAtom) -> Result<f64> {
    check_action(q, min_action, q.k)?;
    let mm = MinMax::new(&q.p, &q.s, q.k, q.l, &SearchOptions::default())?;
    Ok(mm.response_to(&to_point(&min_action.a), min_action.c))
}

/// `min_{|a|=1, c≤k} Φ(a, b, c, d)` for a fixed action `(b, d)`.
pub fn min_response(q: &IsaacsQuery, max_action: &ControlAtom) -> Result<f64> {
    check_action(q, max_action, q.l)?;
    let p: Vec<f64> = q.p.iter().map(|v| -v).collect();
    let s = q.s.scale(-1.0);
    let mm = MinMax::new(&p, &s, q.l, q.k, &SearchOptions::default())?;
    Ok(-mm.response_to(&to_point(&max_action.a), max_action.c))
}

fn check_action(q: &IsaacsQuery, atom: &ControlAtom, bound: f64) -> Result<()> {
    if atom.dim() != q.p.len() {
        return Err(Error::DimensionMismatch {
            expected: q.p.len(),
            got: atom.dim(),
        });
    }
    check_unit(&atom.a)?;
    if atom.c > bound {
        return Err(Error::Domain(format!(
            "intensity {} exceeds its bound {bound}",
            atom.c
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub n: usize,
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub lambda_limit: f64,
    pub gap_plus: f64,
    pub gap_minus: f64,
}

/// Bounded operators with `k = l = n` for `n = 1..=n_max` against Λ.
pub fn isaacs_diagnostics(p: &[f64], s: &SymMatrix, n_max: usize) -> Result<Vec<DiagnosticRow>> {
    if n_max == 0 {
        return Err(Error::InvalidSpec("n_max must be at least 1".into()));
    }
    let ns: Vec<usize> = (1..=n_max).collect();
    diagnostics_at(
        p,
        s,
        &ns,
        &OperatorTolerances::default(),
        &SearchOptions::default(),
    )
}

/// [`isaacs_diagnostics`] on an explicit schedule of `n` values.
pub fn diagnostics_at(
    p: &[f64],
    s: &SymMatrix,
    ns: &[usize],
    tols: &OperatorTolerances,
    opts: &SearchOptions,
) -> Result<Vec<DiagnosticRow>> {
    let limit = lambda_inf(p, s, tols.tol_grad, tols.tol_iso(s))?;
    ns.par_iter()
        .map(|&n| {
            let q = IsaacsQuery::new(p.to_vec(), s.clone(), n as f64, n as f64)?;
            let plus = lambda_bounded_with(&q, Side::Plus, opts)?.value;
            let minus = lambda_bounded_with(&q, Side::Minus, opts)?.value;
            Ok(DiagnosticRow {
                n,
                lambda_plus: plus,
                lambda_minus: minus,
                lambda_limit: limit,
                gap_plus: (plus - limit).abs(),
                gap_minus: (minus - limit).abs(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eye() -> SymMatrix {
        SymMatrix::scaled_identity(2, 1.0)
    }

    #[test]
    fn phi_examples() {
        let v = phi(&[1.0, 0.0], &[1.0, 0.0], 1.0, 1.0, &[1.0, 0.0], &eye()).unwrap();
        assert_eq!(v, -4.0);
        let v = phi(&[1.0, 0.0], &[-1.0, 0.0], 3.0, 0.5, &[0.3, -2.0], &eye()).unwrap();
        assert_eq!(v, -2.0);
        let v = phi(&[0.0, 1.0], &[1.0, 0.0], 2.0, 1.0, &[1.0, 0.0], &eye()).unwrap();
        assert_eq!(v, -4.0);
        assert!(matches!(
            phi(&[1.0, 1.0], &[1.0, 0.0], 0.0, 0.0, &[1.0, 0.0], &eye()),
            Err(Error::Domain(_))
        ));
        assert!(phi(&[1.0, 0.0], &[1.0, 0.0], -1.0, 0.0, &[1.0, 0.0], &eye()).is_err());
    }

    #[test]
    fn lambda_inf_examples() {
        let t = 1e-8;
        assert_eq!(lambda_inf(&[1.0, 0.0], &eye(), t, t).unwrap(), -2.0);
        let s3 = SymMatrix::scaled_identity(2, 3.0);
        assert_eq!(lambda_inf(&[0.0, 0.0], &s3, t, t).unwrap(), -6.0);
        let d = SymMatrix::diagonal(&[1.0, -1.0]);
        assert_eq!(lambda_inf(&[1.0, 1.0], &d, t, t).unwrap(), 0.0);
        let d = SymMatrix::diagonal(&[1.0, 2.0]);
        assert!(matches!(
            lambda_inf(&[0.0, 0.0], &d, t, t),
            Err(Error::OutsideOperatorDomain { .. })
        ));
    }

    fn query(p: &[f64], s: SymMatrix, k: f64, l: f64) -> IsaacsQuery {
        IsaacsQuery::new(p.to_vec(), s, k, l).unwrap()
    }

    #[test]
    fn bounded_examples() {
        let q = query(&[1.0, 0.0], eye(), 10.0, 10.0);
        let minus = lambda_bounded(&q, Side::Minus).unwrap();
        assert!((minus.value + 2.0).abs() < 1e-9, "{minus:?}");
        assert!(minus.residual <= 1e-6);
        let plus = lambda_bounded(&q, Side::Plus).unwrap();
        assert!((plus.value + 2.0).abs() < 1e-9, "{plus:?}");

        for k in [0.0, 1.0, 5.0] {
            let q = query(&[1.0, 0.0], SymMatrix::zeros(2), k, k + 1.0);
            let v = lambda_bounded(&q, Side::Minus).unwrap().value;
            assert!(v.abs() < 1e-9, "k={k}: {v}");
        }

        let q = query(&[1.0, 0.0], eye(), 0.0, 0.0);
        let v = lambda_bounded(&q, Side::Minus).unwrap().value;
        assert!(v.abs() < 1e-12, "{v}");
    }

    #[test]
    fn one_dimensional_operators_are_exact() {
        // a, b ∈ {±1}. With p = 1, S = s: the minimizer plays a = +1, c = k
        // against b = -1 (value -2s); b = +1 costs -2(k+d).
        let s = SymMatrix::diagonal(&[0.5]);
        let q = query(&[1.0], s, 3.0, 3.0);
        let minus = lambda_bounded(&q, Side::Minus).unwrap();
        assert!((minus.value + 1.0).abs() < 1e-12, "{minus:?}");
        let plus = lambda_bounded(&q, Side::Plus).unwrap();
        assert!((plus.value + 1.0).abs() < 1e-12, "{plus:?}");
    }

    #[test]
    fn diagnostics_examples() {
        let rows = isaacs_diagnostics(&[1.0, 0.0], &eye(), 1).unwrap();
        assert_eq!(rows.len(), 1);
        assert!((rows[0].lambda_minus + 2.0).abs() < 1e-9);
        assert_eq!(rows[0].lambda_limit, -2.0);

        let rows = isaacs_diagnostics(&[1.0, 0.0], &SymMatrix::zeros(2), 3).unwrap();
        for r in rows {
            assert!(r.gap_plus < 1e-9 && r.gap_minus < 1e-9, "{r:?}");
        }

        let d = SymMatrix::diagonal(&[1.0, 2.0]);
        assert!(isaacs_diagnostics(&[0.0, 0.0], &d, 2).is_err());
    }

    #[test]
    fn responses_bracket_the_saddle_values() {
        let s = SymMatrix::from_row_major(2, &[0.3, -0.7, -0.7, 0.9]).unwrap();
        let q = query(&[0.6, 0.8], s, 4.0, 4.0);
        let minus = lambda_bounded(&q, Side::Minus).unwrap();
        let plus = lambda_bounded(&q, Side::Plus).unwrap();
        for i in 0..12 {
            let t = i as f64 * 0.53;
            let atom = ControlAtom::new(vec![t.cos(), t.sin()], (i % 5) as f64 * 0.8).unwrap();
            assert!(minus.value >= min_response(&q, &atom).unwrap() - 1e-9);
            assert!(plus.value <= max_response(&q, &atom).unwrap() + 1e-9);
        }
        // The outer optimizers realize the reported values.
        let r = max_response(&q, &minus.outer).unwrap();
        assert!((r - minus.value).abs() < 1e-9);
        let r = min_response(&q, &plus.outer).unwrap();
        assert!((r - plus.value).abs() < 1e-9);
    }
}
