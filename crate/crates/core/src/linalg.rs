//! Dense helpers for the tiny vectors and matrices (dimension 1..=3 in
//! practice) that appear in gradients, Hessians and control directions.

use crate::error::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Symmetric matrix stored densely in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Builds from row-major entries, replacing the input by its symmetric
    /// part `(M + M')/2`.
    pub fn from_row_major(dim: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: entries.len(),
            });
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("matrix entries must be finite".into()));
        }
        let mut data = entries.to_vec();
        for i in 0..dim {
            for j in (i + 1)..dim {
                let s = 0.5 * (entries[i * dim + j] + entries[j * dim + i]);
                data[i * dim + j] = s;
                data[j * dim + i] = s;
            }
        }
        Ok(Self { dim, data })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn scaled_identity(dim: usize, lambda: f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = lambda;
        }
        m
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, d) in diag.iter().enumerate() {
            m.data[i * diag.len() + i] = *d;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius(&self) -> f64 {
        norm(&self.data)
    }

    /// `x' S x`.
    pub fn quad(&self, x: &[f64]) -> f64 {
        quad_form(self.dim, &self.data, x)
    }

    /// Frobenius distance to the nearest multiple of the identity,
    /// `|S - (tr S / m) I|_F`.
    pub fn anisotropy(&self) -> f64 {
        let mean = self.trace() / self.dim as f64;
        let mut acc = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                let d = self.get(i, j) - if i == j { mean } else { 0.0 };
                acc += d * d;
            }
        }
        acc.sqrt()
    }

    pub fn scale(&self, alpha: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|v| v * alpha).collect(),
        }
    }

    /// `S x` written into `out`.
    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        mat_vec(self.dim, &self.data, x, out);
    }
}

/// `x' M x` for a row-major `dim x dim` matrix.
pub fn quad_form(dim: usize, m: &[f64], x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..dim {
        let row = &m[i * dim..(i + 1) * dim];
        acc += x[i] * dot(row, x);
    }
    acc
}

pub fn mat_vec(dim: usize, m: &[f64], x: &[f64], out: &mut [f64]) {
    for i in 0..dim {
        out[i] = dot(&m[i * dim..(i + 1) * dim], x);
    }
}

/// Normalizes in place; returns the original norm.
pub fn normalize(v: &mut [f64]) -> f64 {
    let n = norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}
