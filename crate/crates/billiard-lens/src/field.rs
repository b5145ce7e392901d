//! Planar derivative jets and trigonometric product fields with exact derivatives.

use serde::{Deserialize, Serialize};

use crate::special::NeumaierSum;

/// Value and partial derivatives up to third order of a planar field at one point.
///
/// Hessian order is (xx, xy, yy); third derivatives are (xxx, xxy, xyy, yyy).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Jet2 {
    pub value: f64,
    pub grad: [f64; 2],
    pub hess: [f64; 3],
    pub third: [f64; 4],
}

impl Jet2 {
    /// Builds a jet from a partial-derivative oracle indexed by (order in x, order in y).
    pub fn from_partials<F: Fn(usize, usize) -> f64>(p: F) -> Self {
        Jet2 {
            value: p(0, 0),
            grad: [p(1, 0), p(0, 1)],
            hess: [p(2, 0), p(1, 1), p(0, 2)],
            third: [p(3, 0), p(2, 1), p(1, 2), p(0, 3)],
        }
    }

    /// Partial derivative with multi-index (i, j), i + j <= 3.
    pub fn partial(&self, i: usize, j: usize) -> f64 {
        match (i, j) {
            (0, 0) => self.value,
            (1, 0) => self.grad[0],
            (0, 1) => self.grad[1],
            (2, 0) => self.hess[0],
            (1, 1) => self.hess[1],
            (0, 2) => self.hess[2],
            (3, 0) => self.third[0],
            (2, 1) => self.third[1],
            (1, 2) => self.third[2],
            (0, 3) => self.third[3],
            _ => panic!("jet holds derivatives up to order 3"),
        }
    }

    pub fn laplacian(&self) -> f64 {
        self.hess[0] + self.hess[2]
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = *self;
        out.value *= c;
        out.grad.iter_mut().for_each(|v| *v *= c);
        out.hess.iter_mut().for_each(|v| *v *= c);
        out.third.iter_mut().for_each(|v| *v *= c);
        out
    }

    pub fn add_scaled(&mut self, other: &Jet2, c: f64) {
        self.value += c * other.value;
        for k in 0..2 {
            self.grad[k] += c * other.grad[k];
        }
        for k in 0..3 {
            self.hess[k] += c * other.hess[k];
        }
        for k in 0..4 {
            self.third[k] += c * other.third[k];
        }
    }

    /// Largest absolute entry among derivatives of order <= `order`.
    pub fn max_abs_upto(&self, order: usize) -> f64 {
        let mut m = self.value.abs();
        if order >= 1 {
            m = self.grad.iter().fold(m, |a, v| a.max(v.abs()));
        }
        if order >= 2 {
            m = self.hess.iter().fold(m, |a, v| a.max(v.abs()));
        }
        if order >= 3 {
            m = self.third.iter().fold(m, |a, v| a.max(v.abs()));
        }
        m
    }
}

/// Scalar field on the plane with exact derivatives up to third order.
pub trait Field2: Sync {
    fn jet(&self, z: [f64; 2]) -> Jet2;

    fn value(&self, z: [f64; 2]) -> f64 {
        self.jet(z).value
    }
}

/// Adapter turning a closure into a [`Field2`].
pub struct FnField<F>(pub F);

impl<F: Fn([f64; 2]) -> Jet2 + Sync> Field2 for FnField<F> {
    fn jet(&self, z: [f64; 2]) -> Jet2 {
        (self.0)(z)
    }
}

/// One-dimensional trigonometric factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Wave1 {
    Sin,
    Cos,
}

/// Factor wave(freq * x + phase).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub wave: Wave1,
    pub freq: f64,
    pub phase: f64,
}

impl Factor {
    pub fn new(wave: Wave1, freq: f64, phase: f64) -> Self {
        Self { wave, freq, phase }
    }

    /// Derivatives of orders 0..=3 at x.
    #[inline]
    pub fn derivs(&self, x: f64) -> [f64; 4] {
        let (s, c) = (self.freq * x + self.phase).sin_cos();
        let k = self.freq;
        let (k2, k3) = (k * k, k * k * k);
        match self.wave {
            Wave1::Sin => [s, k * c, -k2 * s, -k3 * c],
            Wave1::Cos => [c, -k * s, -k2 * c, k3 * s],
        }
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        match self.wave {
            Wave1::Sin => (self.freq * x + self.phase).sin(),
            Wave1::Cos => (self.freq * x + self.phase).cos(),
        }
    }

    /// Derivative of arbitrary order at x.
    pub fn deriv(&self, x: f64, order: usize) -> f64 {
        let (s, c) = (self.freq * x + self.phase).sin_cos();
        let cycle = match self.wave {
            Wave1::Sin => [s, c, -s, -c],
            Wave1::Cos => [c, -s, -c, s],
        };
        cycle[order % 4] * self.freq.powi(order as i32)
    }

    /// Same factor in the rescaled variable x = x0 + y / scale.
    pub fn rescaled(&self, x0: f64, scale: f64) -> Self {
        Self { wave: self.wave, freq: self.freq / scale, phase: self.freq * x0 + self.phase }
    }
}

/// coeff * prod_j factor_j(x_j).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductTerm {
    pub coeff: f64,
    pub factors: Vec<Factor>,
}

/// Finite sum of separable trigonometric products in d variables.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrigField {
    pub dim: usize,
    pub terms: Vec<ProductTerm>,
}

impl TrigField {
    pub fn new(dim: usize, terms: Vec<ProductTerm>) -> Self {
        Self { dim, terms }
    }

    pub fn value_at(&self, x: &[f64]) -> f64 {
        let mut acc = NeumaierSum::new();
        for t in &self.terms {
            let mut p = t.coeff;
            for (f, &xj) in t.factors.iter().zip(x) {
                p *= f.value(xj);
            }
            acc.add(p);
        }
        acc.value()
    }

    /// Partial derivative with multi-index `alpha` at x.
    pub fn partial(&self, x: &[f64], alpha: &[usize]) -> f64 {
        let mut acc = NeumaierSum::new();
        for t in &self.terms {
            let mut p = t.coeff;
            for ((f, &xj), &a) in t.factors.iter().zip(x).zip(alpha) {
                p *= f.deriv(xj, a);
            }
            acc.add(p);
        }
        acc.value()
    }

    /// Gradient at x.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|j| {
                let mut alpha = vec![0; self.dim];
                alpha[j] = 1;
                self.partial(x, &alpha)
            })
            .collect()
    }

    /// Laplacian from exact second derivatives.
    pub fn laplacian(&self, x: &[f64]) -> f64 {
        (0..self.dim)
            .map(|j| {
                let mut alpha = vec![0; self.dim];
                alpha[j] = 2;
                self.partial(x, &alpha)
            })
            .sum()
    }

    /// The field y -> f(x0 + y / scale), with exact rescaled factors.
    pub fn rescaled(&self, x0: &[f64], scale: f64) -> TrigField {
        TrigField {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .map(|t| ProductTerm {
                    coeff: t.coeff,
                    factors: t
                        .factors
                        .iter()
                        .zip(x0)
                        .map(|(f, &a)| f.rescaled(a, scale))
                        .collect(),
                })
                .collect(),
        }
    }

    /// Applies an affine change of the second planar coordinate x2 -> offset - x2
    /// and of the first x1 -> x1 - shift1, used by the shifted triangle frame.
    pub fn compose_affine_2d(&self, scale: [f64; 2], offset: [f64; 2]) -> TrigField {
        TrigField {
            dim: 2,
            terms: self
                .terms
                .iter()
                .map(|t| ProductTerm {
                    coeff: t.coeff,
                    factors: t
                        .factors
                        .iter()
                        .enumerate()
                        .map(|(j, f)| Factor {
                            wave: f.wave,
                            freq: f.freq * scale[j],
                            phase: f.freq * offset[j] + f.phase,
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    /// Values (and optionally gradients) on the tensor grid xs x ys, row-major with y outer.
    pub fn grid_2d(&self, xs: &[f64], ys: &[f64], with_grad: bool) -> GridEval {
        assert_eq!(self.dim, 2, "grid evaluation needs a planar field");
        let (nx, ny) = (xs.len(), ys.len());
        let mut value = vec![0.0; nx * ny];
        let mut gx = if with_grad { vec![0.0; nx * ny] } else { Vec::new() };
        let mut gy = if with_grad { vec![0.0; nx * ny] } else { Vec::new() };
        let mut fx = vec![[0.0; 2]; nx];
        let mut fy = vec![[0.0; 2]; ny];
        for t in &self.terms {
            let (a, b) = (&t.factors[0], &t.factors[1]);
            for (slot, &x) in fx.iter_mut().zip(xs) {
                let d = a.derivs(x);
                *slot = [d[0], d[1]];
            }
            for (slot, &y) in fy.iter_mut().zip(ys) {
                let d = b.derivs(y);
                *slot = [t.coeff * d[0], t.coeff * d[1]];
            }
            for (j, ry) in fy.iter().enumerate() {
                let row = j * nx;
                for (i, rx) in fx.iter().enumerate() {
                    value[row + i] += rx[0] * ry[0];
                }
                if with_grad {
                    for (i, rx) in fx.iter().enumerate() {
                        gx[row + i] += rx[1] * ry[0];
                        gy[row + i] += rx[0] * ry[1];
                    }
                }
            }
        }
        GridEval { nx, ny, value, gx, gy }
    }
}

/// Field values and gradients on a tensor grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridEval {
    pub nx: usize,
    pub ny: usize,
    pub value: Vec<f64>,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
}

impl Field2 for TrigField {
    fn jet(&self, z: [f64; 2]) -> Jet2 {
        let mut acc = [NeumaierSum::new(); 10];
        for t in &self.terms {
            let a = t.factors[0].derivs(z[0]);
            let b = t.factors[1].derivs(z[1]);
            let c = t.coeff;
            let vals = [
                a[0] * b[0],
                a[1] * b[0],
                a[0] * b[1],
                a[2] * b[0],
                a[1] * b[1],
                a[0] * b[2],
                a[3] * b[0],
                a[2] * b[1],
                a[1] * b[2],
                a[0] * b[3],
            ];
            for (s, v) in acc.iter_mut().zip(vals) {
                s.add(c * v);
            }
        }
        let v: Vec<f64> = acc.iter().map(|s| s.value()).collect();
        Jet2 {
            value: v[0],
            grad: [v[1], v[2]],
            hess: [v[3], v[4], v[5]],
            third: [v[6], v[7], v[8], v[9]],
        }
    }

    fn value(&self, z: [f64; 2]) -> f64 {
        self.value_at(&z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_derivative_cycle() {
        let f = Factor::new(Wave1::Sin, 2.0, 0.3);
        let d = f.derivs(0.7);
        for (k, v) in d.iter().enumerate() {
            assert!((v - f.deriv(0.7, k)).abs() < 1e-14);
        }
    }

    #[test]
    fn rescaling_matches_direct_evaluation() {
        let field = TrigField::new(
            2,
            vec![ProductTerm {
                coeff: 1.5,
                factors: vec![Factor::new(Wave1::Sin, 3.0, 0.0), Factor::new(Wave1::Cos, 5.0, 0.2)],
            }],
        );
        let r = field.rescaled(&[0.3, 0.4], 7.0);
        let y = [0.9, -1.3];
        let direct = field.value_at(&[0.3 + y[0] / 7.0, 0.4 + y[1] / 7.0]);
        assert!((r.value_at(&y) - direct).abs() < 1e-14);
    }
}
