//! Scalar fields over R^m.
//!
//! `ScalarField` is all the solvers need for running and terminal payoffs;
//! `SmoothField` adds derivatives, used by the near-optimal feedback and the
//! residual checks.

use std::sync::Arc;

pub trait ScalarField: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
}

pub trait SmoothField: ScalarField {
    fn gradient(&self, x: &[f64], out: &mut [f64]);
    /// Row-major `dim x dim` Hessian.
    fn hessian(&self, x: &[f64], out: &mut [f64]);
}

impl<T: ScalarField + ?Sized> ScalarField for Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        (**self).value(x)
    }
}

impl<T: SmoothField + ?Sized> SmoothField for Arc<T> {
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        (**self).gradient(x, out)
    }
    fn hessian(&self, x: &[f64], out: &mut [f64]) {
        (**self).hessian(x, out)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantField {
    pub dim: usize,
    pub value: f64,
}

impl ConstantField {
    pub fn new(dim: usize, value: f64) -> Self {
        Self { dim, value }
    }
}

impl ScalarField for ConstantField {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, _x: &[f64]) -> f64 {
        self.value
    }
}

impl SmoothField for ConstantField {
    fn gradient(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn hessian(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// Wraps a closure `x -> f(x)`.
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> ScalarField for FnField<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}
