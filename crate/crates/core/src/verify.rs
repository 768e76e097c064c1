//! Finite-difference operators, pointwise residuals of `-2 Δ∞u = h`, and
//! exact solutions used as oracles.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ScalarField, SmoothField};
use crate::geometry::{make_domain, Domain, DomainSpec, GridFunction};
use crate::isaacs::OperatorTolerances;
use crate::linalg::{dist, SymMatrix};

/// Central-difference gradient and (symmetrized) Hessian of `field` at `x`.
/// With a domain, every stencil point must lie in its closure.
pub fn fd_derivatives(
    field: &dyn ScalarField,
    x: &[f64],
    step: f64,
    domain: Option<&Domain>,
) -> Result<(Vec<f64>, SymMatrix)> {
    let m = field.dim();
    if x.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: x.len(),
        });
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidSpec(format!("step {step} must be positive")));
    }
    let mut grad = vec![0.0; m];
    let mut hess = vec![0.0; m * m];
    fd_into(field, x, step, domain, &mut grad, &mut hess)?;
    Ok((grad, SymMatrix::from_row_major(m, &hess)?))
}

fn fd_into(
    field: &dyn ScalarField,
    x: &[f64],
    step: f64,
    domain: Option<&Domain>,
    grad: &mut [f64],
    hess: &mut [f64],
) -> Result<()> {
    let m = x.len();
    let mut y = x.to_vec();
    let eval = |y: &[f64]| -> Result<f64> {
        if let Some(d) = domain {
            if d.level(y) < -1e-12 {
                return Err(Error::NearBoundary(step));
            }
        }
        Ok(field.value(y))
    };
    let f0 = eval(x)?;
    for i in 0..m {
        y[i] = x[i] + step;
        let fp = eval(&y)?;
        y[i] = x[i] - step;
        let fm = eval(&y)?;
        y[i] = x[i];
        grad[i] = (fp - fm) / (2.0 * step);
        hess[i * m + i] = (fp - 2.0 * f0 + fm) / (step * step);
        for j in (i + 1)..m {
            let mut corner = |si: f64, sj: f64| {
                y[i] = x[i] + si * step;
                y[j] = x[j] + sj * step;
                let v = eval(&y);
                y[i] = x[i];
                y[j] = x[j];
                v
            };
            let v = (corner(1.0, 1.0)? - corner(1.0, -1.0)? - corner(-1.0, 1.0)?
                + corner(-1.0, -1.0)?)
                / (4.0 * step * step);
            hess[i * m + j] = v;
            hess[j * m + i] = v;
        }
    }
    Ok(())
}

/// `Δ∞f = gradᵀ hess grad / |grad|²`, or `tr(hess)/m` when the gradient
/// vanishes and the Hessian is isotropic.
pub fn infinity_laplacian(
    grad: &[f64],
    hess: &SymMatrix,
    tol_grad: f64,
    tol_iso: f64,
) -> Result<f64> {
    let m = hess.dim();
    if grad.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: grad.len(),
        });
    }
    let g2: f64 = grad.iter().map(|v| v * v).sum();
    let gn = g2.sqrt();
    if gn > tol_grad {
        let mut acc = 0.0;
        for i in 0..m {
            for j in 0..m {
                acc += grad[i] * hess.get(i, j) * grad[j];
            }
        }
        return Ok(acc / g2);
    }
    let anisotropy = hess.anisotropy();
    if anisotropy <= tol_iso {
        return Ok(hess.trace() / m as f64);
    }
    Err(Error::OutsideOperatorDomain {
        grad_norm: gn,
        anisotropy,
    })
}

/// How points outside the operator domain (vanishing gradient, anisotropic
/// Hessian) enter the residual statistics. They are always counted in
/// `skipped`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipPolicy {
    /// Excluded from the max and the mean.
    #[default]
    Unverifiable,
    /// Included with residual 0, since the definition imposes no condition there.
    Vacuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualStats {
    pub max_residual: f64,
    pub mean_abs_residual: f64,
    pub evaluated: usize,
    pub skipped: usize,
    pub step: f64,
    pub skip_policy: SkipPolicy,
}

/// Pointwise residual `-2 Δ∞u - h` from central differences at each sample.
/// Samples whose stencil leaves the closed domain are an error.
pub fn viscosity_residual(
    u: &dyn ScalarField,
    h: &dyn ScalarField,
    domain: &Domain,
    step: f64,
    samples: &[Vec<f64>],
    tols: &OperatorTolerances,
    policy: SkipPolicy,
) -> Result<ResidualStats> {
    let per_point: Vec<Option<f64>> = samples
        .par_iter()
        .map(|x| {
            let (grad, hess) = fd_derivatives(u, x, step, Some(domain))?;
            match infinity_laplacian(&grad, &hess, tols.tol_grad, tols.tol_iso(&hess)) {
                Ok(lap) => Ok(Some((-2.0 * lap - h.value(x)).abs())),
                Err(Error::OutsideOperatorDomain { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let skipped = per_point.iter().filter(|r| r.is_none()).count();
    let used: Vec<f64> = match policy {
        SkipPolicy::Unverifiable => per_point.iter().flatten().copied().collect(),
        SkipPolicy::Vacuous => per_point.iter().map(|r| r.unwrap_or(0.0)).collect(),
    };
    let max_residual = used.iter().copied().fold(0.0, f64::max);
    let mean_abs_residual = if used.is_empty() {
        0.0
    } else {
        used.iter().sum::<f64>() / used.len() as f64
    };
    Ok(ResidualStats {
        max_residual,
        mean_abs_residual,
        evaluated: samples.len() - skipped,
        skipped,
        step,
        skip_policy: policy,
    })
}

impl ScalarField for GridFunction {
    fn dim(&self) -> usize {
        self.grid().dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.interpolate(x)
    }
}

/// A scalar field with derivatives taken by central differences at a fixed
/// step, e.g. a multilinearly interpolated grid solution.
#[derive(Clone)]
pub struct FdField {
    field: Arc<dyn ScalarField>,
    step: f64,
}

impl FdField {
    pub fn new(field: Arc<dyn ScalarField>, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidSpec(format!("step {step} must be positive")));
        }
        Ok(Self { field, step })
    }

    /// Interpolated grid function differenced at `4 · spacing`.
    pub fn from_grid_function(u: GridFunction) -> Self {
        let step = 4.0 * u.grid().spacing();
        Self {
            field: Arc::new(u),
            step,
        }
    }

    pub fn step(&self) -> f64 {
        self.step
    }
}

impl ScalarField for FdField {
    fn dim(&self) -> usize {
        self.field.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.field.value(x)
    }
}

impl SmoothField for FdField {
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let mut y = x.to_vec();
        for i in 0..x.len() {
            y[i] = x[i] + self.step;
            let fp = self.field.value(&y);
            y[i] = x[i] - self.step;
            let fm = self.field.value(&y);
            y[i] = x[i];
            out[i] = (fp - fm) / (2.0 * self.step);
        }
    }
    fn hessian(&self, x: &[f64], out: &mut [f64]) {
        let mut grad = vec![0.0; x.len()];
        // Without a domain the stencil cannot fail.
        let _ = fd_into(&*self.field, x, self.step, None, &mut grad, out);
    }
}

/// Constructor input for [`ExactSolution`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExactSpec {
    /// `-2u'' = h` on `(lo, hi)` with `h(x) = Σ h_coeffs[k] x^k`,
    /// `u(lo) = g0`, `u(hi) = g1`.
    OneDim {
        h_coeffs: Vec<f64>,
        g0: f64,
        g1: f64,
        lo: f64,
        hi: f64,
    },
    /// Radial solution on an annulus with constant `h` and boundary values
    /// `g_inner`, `g_outer`.
    Radial {
        center: Vec<f64>,
        inner: f64,
        outer: f64,
        h: f64,
        g_inner: f64,
        g_outer: f64,
    },
}

#[derive(Debug, Clone)]
enum Kind {
    /// `u(x) = Σ coeffs[k] x^k`.
    Poly {
        coeffs: Vec<f64>,
        d1: Vec<f64>,
        d2: Vec<f64>,
        h: Vec<f64>,
    },
    /// `u = a r² + b r + c` about `center`.
    Radial {
        center: Vec<f64>,
        a: f64,
        b: f64,
        c: f64,
        h: f64,
    },
}

/// Analytic solution of `-2 Δ∞u = h` with its domain and data.
#[derive(Debug, Clone)]
pub struct ExactSolution {
    spec: ExactSpec,
    domain: Domain,
    kind: Kind,
}

fn poly_eval(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, v| acc * x + v)
}

fn poly_deriv(c: &[f64]) -> Vec<f64> {
    c.iter()
        .enumerate()
        .skip(1)
        .map(|(k, v)| k as f64 * v)
        .collect()
}

pub fn exact_solution(spec: ExactSpec) -> Result<ExactSolution> {
    let (domain, kind) = match &spec {
        ExactSpec::OneDim {
            h_coeffs,
            g0,
            g1,
            lo,
            hi,
        } => {
            let domain = make_domain(DomainSpec::Interval { lo: *lo, hi: *hi })?;
            if h_coeffs.is_empty() {
                return Err(Error::InvalidSpec(
                    "h needs at least one coefficient".into(),
                ));
            }
            let n = 1000;
            for i in 0..=n {
                let x = lo + (hi - lo) * i as f64 / n as f64;
                let hv = poly_eval(h_coeffs, x);
                if !(hv > 0.0) {
                    return Err(Error::InvalidSpec(format!("h({x}) = {hv} is not positive")));
                }
            }
            // u'' = -h/2: integrate twice, then fit the linear part to g.
            let mut coeffs = vec![0.0; h_coeffs.len() + 2];
            for (k, hk) in h_coeffs.iter().enumerate() {
                coeffs[k + 2] = -0.5 * hk / ((k + 1) * (k + 2)) as f64;
            }
            let (p_lo, p_hi) = (poly_eval(&coeffs, *lo), poly_eval(&coeffs, *hi));
            let slope = ((g1 - p_hi) - (g0 - p_lo)) / (hi - lo);
            coeffs[1] = slope;
            coeffs[0] = g0 - p_lo - slope * lo;
            (
                domain,
                Kind::Poly {
                    d1: poly_deriv(&coeffs),
                    d2: poly_deriv(&poly_deriv(&coeffs)),
                    coeffs,
                    h: h_coeffs.clone(),
                },
            )
        }
        ExactSpec::Radial {
            center,
            inner,
            outer,
            h,
            g_inner,
            g_outer,
        } => {
            let domain = make_domain(DomainSpec::Annulus {
                center: center.clone(),
                inner: *inner,
                outer: *outer,
            })?;
            if !(*h > 0.0 && h.is_finite()) {
                return Err(Error::InvalidSpec(format!("h = {h} is not positive")));
            }
            // u'' = -h/2 along the radius.
            let a = -h / 4.0;
            let b = (g_outer - g_inner - a * (outer * outer - inner * inner)) / (outer - inner);
            let c = g_inner - a * inner * inner - b * inner;
            let (d_in, d_out) = (2.0 * a * inner + b, 2.0 * a * outer + b);
            if !(d_in * d_out > 0.0) {
                return Err(Error::InvalidSpec(format!(
                    "radial derivative changes sign or vanishes on [{inner}, {outer}] (u'={d_in} .. {d_out})"
                )));
            }
            (
                domain,
                Kind::Radial {
                    center: center.clone(),
                    a,
                    b,
                    c,
                    h: *h,
                },
            )
        }
    };
    let sol = ExactSolution { spec, domain, kind };
    sol.self_check()?;
    Ok(sol)
}

impl ExactSolution {
    pub fn spec(&self) -> &ExactSpec {
        &self.spec
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn h(&self, x: &[f64]) -> f64 {
        match &self.kind {
            Kind::Poly { h, .. } => poly_eval(h, x[0]),
            Kind::Radial { h, .. } => *h,
        }
    }

    /// The running payoff as a field.
    pub fn h_field(&self) -> Arc<dyn ScalarField> {
        Arc::new(HField(self.clone()))
    }

    /// `u` itself; on the boundary it is the terminal payoff.
    pub fn u_field(&self) -> Arc<dyn SmoothField> {
        Arc::new(self.clone())
    }

    /// Checks `-2 Δ∞u = h` with analytic derivatives at 64 pseudo-random
    /// interior points.
    fn self_check(&self) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let (lo, hi) = self.domain.bounding_box();
        let m = lo.len();
        let tols = OperatorTolerances::default();
        let mut checked = 0;
        let mut x = vec![0.0; m];
        let mut grad = vec![0.0; m];
        let mut hess = vec![0.0; m * m];
        while checked < 64 {
            for i in 0..m {
                x[i] = rng.random_range(lo[i]..hi[i]);
            }
            if self.domain.level(&x) <= 0.0 {
                continue;
            }
            self.gradient(&x, &mut grad);
            self.hessian(&x, &mut hess);
            let s = SymMatrix::from_row_major(m, &hess)?;
            let lap = infinity_laplacian(&grad, &s, tols.tol_grad, tols.tol_iso(&s))?;
            let r = -2.0 * lap - self.h(&x);
            if !(r.abs() <= 1e-10 * (1.0 + self.h(&x).abs())) {
                return Err(Error::InvalidSpec(format!("oracle residual {r} at {x:?}")));
            }
            checked += 1;
        }
        Ok(())
    }
}

impl ScalarField for ExactSolution {
    fn dim(&self) -> usize {
        self.domain.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        match &self.kind {
            Kind::Poly { coeffs, .. } => poly_eval(coeffs, x[0]),
            Kind::Radial {
                center, a, b, c, ..
            } => {
                let r = dist(x, center);
                a * r * r + b * r + c
            }
        }
    }
}

impl SmoothField for ExactSolution {
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            Kind::Poly { d1, .. } => out[0] = poly_eval(d1, x[0]),
            Kind::Radial { center, a, b, .. } => {
                // Du = (2a + b/r)(x - center).
                let r = dist(x, center);
                let f = 2.0 * a + b / r;
                for i in 0..x.len() {
                    out[i] = f * (x[i] - center[i]);
                }
            }
        }
    }

    fn hessian(&self, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            Kind::Poly { d2, .. } => out[0] = poly_eval(d2, x[0]),
            Kind::Radial { center, a, b, .. } => {
                // D²u = u'' r̂r̂ᵀ + (u'/r)(I - r̂r̂ᵀ), u' = 2ar + b, u'' = 2a.
                let m = x.len();
                let r = dist(x, center);
                let (d1, d2) = (2.0 * a * r + b, 2.0 * a);
                for i in 0..m {
                    for j in 0..m {
                        let rr = (x[i] - center[i]) * (x[j] - center[j]) / (r * r);
                        let id = if i == j { 1.0 } else { 0.0 };
                        out[i * m + j] = d2 * rr + d1 / r * (id - rr);
                    }
                }
            }
        }
    }
}

struct HField(ExactSolution);

impl ScalarField for HField {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.0.h(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{ConstantField, FnField};

    #[test]
    fn quadratic_fields_are_differenced_exactly() {
        // ½xᵀMx + b·x with M = [[2, 1], [1, -3]], b = (0.5, -1).
        let f = FnField::new(2, |x: &[f64]| {
            0.5 * (2.0 * x[0] * x[0] + 2.0 * x[0] * x[1] - 3.0 * x[1] * x[1]) + 0.5 * x[0] - x[1]
        });
        let x = [0.3, -0.7];
        let (g, h) = fd_derivatives(&f, &x, 1e-3, None).unwrap();
        let want_g = [2.0 * 0.3 + -0.7 + 0.5, 0.3 - 3.0 * -0.7 - 1.0];
        for i in 0..2 {
            assert!((g[i] - want_g[i]).abs() < 1e-9);
        }
        for (got, want) in h.as_slice().iter().zip([2.0, 1.0, 1.0, -3.0]) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn cubic_second_derivative_within_taylor_remainder() {
        let f = FnField::new(2, |x: &[f64]| x[0].powi(3));
        let (_, h) = fd_derivatives(&f, &[1.0, 0.0], 1e-3, None).unwrap();
        assert!((h.get(0, 0) - 6.0).abs() < 1e-5);
    }

    #[test]
    fn constant_field_has_no_derivatives() {
        let (g, h) =
            fd_derivatives(&ConstantField::new(3, 4.2), &[0.1, 0.2, 0.3], 1e-2, None).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
        assert!(h.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stencil_outside_the_domain_is_refused() {
        let d = make_domain(DomainSpec::Interval { lo: 0.0, hi: 1.0 }).unwrap();
        let f = ConstantField::new(1, 0.0);
        assert!(matches!(
            fd_derivatives(&f, &[0.05], 0.1, Some(&d)),
            Err(Error::NearBoundary(_))
        ));
        assert!(fd_derivatives(&f, &[0.1], 0.1, Some(&d)).is_ok());
    }

    #[test]
    fn infinity_laplacian_examples() {
        let h = SymMatrix::diagonal(&[5.0, -7.0]);
        assert_eq!(
            infinity_laplacian(&[1.0, 0.0], &h, 1e-8, 1e-8).unwrap(),
            5.0
        );
        let h = SymMatrix::scaled_identity(2, 2.0);
        assert_eq!(
            infinity_laplacian(&[0.0, 0.0], &h, 1e-8, 1e-8).unwrap(),
            2.0
        );
        let h = SymMatrix::diagonal(&[1.0, 2.0]);
        assert!(infinity_laplacian(&[0.0, 0.0], &h, 1e-8, 1e-8).is_err());
    }

    fn radial() -> ExactSolution {
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

    #[test]
    fn exact_solution_examples() {
        let u = exact_solution(ExactSpec::OneDim {
            h_coeffs: vec![2.0],
            g0: 0.0,
            g1: 0.0,
            lo: 0.0,
            hi: 1.0,
        })
        .unwrap();
        for x in [0.1, 0.5, 0.77] {
            assert!((u.value(&[x]) - x * (1.0 - x) / 2.0).abs() < 1e-15);
        }

        let u = radial();
        for (r, want) in [(1.0, 0.0), (1.5, 0.875), (2.0, 1.5)] {
            let x = [r * 0.6, r * 0.8];
            assert!((u.value(&x) - want).abs() < 1e-14);
            let want_u = -r * r / 2.0 + 3.0 * r - 2.5;
            assert!((u.value(&x) - want_u).abs() < 1e-14);
        }

        // -2u'' = 2 + x, u(0) = u(1) = 0: u = -x²/2 - x³/12 + 7x/12.
        let u = exact_solution(ExactSpec::OneDim {
            h_coeffs: vec![2.0, 1.0],
            g0: 0.0,
            g1: 0.0,
            lo: 0.0,
            hi: 1.0,
        })
        .unwrap();
        for x in [0.2, 0.6] {
            let want = -x * x / 2.0 - x * x * x / 12.0 + 7.0 * x / 12.0;
            assert!((u.value(&[x]) - want).abs() < 1e-15);
        }
    }

    #[test]
    fn invalid_oracles_are_refused() {
        let r = exact_solution(ExactSpec::OneDim {
            h_coeffs: vec![-1.0, 2.0],
            g0: 0.0,
            g1: 0.0,
            lo: 0.0,
            hi: 1.0,
        });
        assert!(matches!(r, Err(Error::InvalidSpec(_))));
        // Equal boundary values force an interior critical radius.
        let r = exact_solution(ExactSpec::Radial {
            center: vec![0.0, 0.0],
            inner: 1.0,
            outer: 2.0,
            h: 2.0,
            g_inner: 0.0,
            g_outer: 0.0,
        });
        assert!(matches!(r, Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn radial_oracle_has_unit_negative_infinity_laplacian() {
        let u = radial();
        for t in [0.1, 1.3, 2.9, 4.4] {
            for r in [1.1, 1.5, 1.9] {
                let x = [r * f64::cos(t), r * f64::sin(t)];
                let mut g = [0.0; 2];
                let mut h = [0.0; 4];
                u.gradient(&x, &mut g);
                u.hessian(&x, &mut h);
                let s = SymMatrix::from_row_major(2, &h).unwrap();
                let lap = infinity_laplacian(&g, &s, 1e-8, 1e-8).unwrap();
                assert!((lap + 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn residuals_of_the_oracles_match_the_truncation_error() {
        // Only the 3r term of the radial oracle has nonzero fourth
        // derivatives. Along the gradient the central-difference error of
        // -2Δ∞u is at most 2.625 step²/r³, attained at 45° to the axes.
        let u = radial();
        let tols = OperatorTolerances::default();
        let step = 1e-3;
        let mut worst: f64 = 0.0;
        for i in 0..40 {
            let t = i as f64 * 0.157;
            let r = 1.05 + 0.9 * (i as f64 / 39.0);
            let x = vec![r * t.cos(), r * t.sin()];
            let st = viscosity_residual(
                &u,
                &*u.h_field(),
                u.domain(),
                step,
                std::slice::from_ref(&x),
                &tols,
                SkipPolicy::default(),
            )
            .unwrap();
            assert_eq!(st.skipped, 0);
            let bound = 2.625 * step * step / r.powi(3);
            assert!(
                st.max_residual <= bound * 1.01 + 1e-9,
                "r={r} t={t}: {st:?}"
            );
            worst = worst.max(st.max_residual / bound);
        }
        // The bound is sharp.
        assert!(worst > 0.5, "{worst}");

        let u = exact_solution(ExactSpec::OneDim {
            h_coeffs: vec![2.0],
            g0: 0.0,
            g1: 0.0,
            lo: 0.0,
            hi: 1.0,
        })
        .unwrap();
        let samples: Vec<Vec<f64>> = (1..20).map(|i| vec![i as f64 / 20.0]).collect();
        let st = viscosity_residual(
            &u,
            &*u.h_field(),
            u.domain(),
            1e-3,
            &samples,
            &tols,
            SkipPolicy::default(),
        )
        .unwrap();
        assert!(st.max_residual <= 1e-6, "{st:?}");
    }

    #[test]
    fn anisotropic_critical_points_are_skipped_per_policy() {
        let d = make_domain(DomainSpec::Cuboid {
            lo: vec![-1.0, -1.0],
            hi: vec![1.0, 1.0],
        })
        .unwrap();
        // Saddle at the origin: Du = 0, D²u = diag(2, -2).
        let u = FnField::new(2, |x: &[f64]| x[0] * x[0] - x[1] * x[1]);
        let h = ConstantField::new(2, 1.0);
        let samples = vec![vec![0.0, 0.0], vec![0.5, 0.0]];
        let tols = OperatorTolerances::default();
        let a = viscosity_residual(&u, &h, &d, 1e-2, &samples, &tols, SkipPolicy::Unverifiable)
            .unwrap();
        assert_eq!((a.skipped, a.evaluated), (1, 1));
        assert!((a.max_residual - 5.0).abs() < 1e-6);
        assert!((a.mean_abs_residual - 5.0).abs() < 1e-6);
        let v = viscosity_residual(&u, &h, &d, 1e-2, &samples, &tols, SkipPolicy::Vacuous).unwrap();
        assert!((v.mean_abs_residual - 2.5).abs() < 1e-6);
    }
}
