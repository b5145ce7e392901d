//! The shell kernel K, its Bessel limit, derandomized square eigenfunctions and covariance statistics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::billiards::{orbit_size, BilliardSpec, Boundary, Coefficient, EigenExpansion, ExpansionTerm};
use crate::error::{Error, Result};
use crate::lattice::{enumerate_shell, LatticeShell, QuadraticForm};
use crate::special::{radial_profile, NeumaierSum};
use crate::waves::PolygonKind;

/// Unit frequency vectors xi_N = (sqrt(a_j) N_j)_j / sqrt(Q(N)) of a shell.
pub fn shell_directions(shell: &LatticeShell) -> Result<Vec<Vec<f64>>> {
    if shell.is_empty() {
        return Err(Error::Empty(format!("shell {} is empty", shell.mu)));
    }
    let roots: Vec<f64> = shell.form.int_coeffs().iter().map(|&a| (a as f64).sqrt()).collect();
    let norm = (shell.mu as f64).sqrt();
    Ok(shell
        .points
        .iter()
        .map(|n| n.iter().zip(&roots).map(|(&x, r)| x as f64 * r / norm).collect())
        .collect())
}

/// Shell kernel with precomputed directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellKernel {
    pub polygon: PolygonKind,
    pub mu: i64,
    pub directions: Vec<Vec<f64>>,
}

impl ShellKernel {
    pub fn new(shell: &LatticeShell, polygon: PolygonKind) -> Result<Self> {
        Ok(Self { polygon, mu: shell.mu, directions: shell_directions(shell)? })
    }

    pub fn dim(&self) -> usize {
        self.directions[0].len()
    }

    /// K(w) = (1/#N) sum_N cos(xi_N . w), compensated; K(0) = 1.
    pub fn eval(&self, w: &[f64]) -> f64 {
        let mut acc = NeumaierSum::new();
        for xi in &self.directions {
            acc.add(xi.iter().zip(w).map(|(a, b)| a * b).sum::<f64>().cos());
        }
        acc.value() / self.directions.len() as f64
    }

    /// Gradient of K at w.
    pub fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; w.len()];
        for xi in &self.directions {
            let s = -xi.iter().zip(w).map(|(a, b)| a * b).sum::<f64>().sin();
            for (gj, x) in g.iter_mut().zip(xi) {
                *gj += s * x;
            }
        }
        let n = self.directions.len() as f64;
        g.iter().map(|v| v / n).collect()
    }
}

/// The normalized sphere average of cos(xi . w): g_d(|w|) / g_d(0); J_0 in the plane.
pub fn bessel_limit(d: usize, r: f64) -> f64 {
    radial_profile(d, r) / radial_profile(d, 0.0)
}

/// K at w for a shell and polygon tag.
pub fn reproducing_kernel(shell: &LatticeShell, polygon: PolygonKind, w: &[f64]) -> Result<f64> {
    let k = ShellKernel::new(shell, polygon)?;
    if w.len() != k.dim() {
        return Err(Error::Invalid("kernel argument has the wrong dimension".into()));
    }
    Ok(k.eval(w))
}

/// Sup over the planar grid points of the disk |w| <= radius (step `radius / half_nodes`) of |K - J_0|.
pub fn kernel_vs_bessel(shell: &LatticeShell, polygon: PolygonKind, radius: f64, half_nodes: usize) -> Result<f64> {
    let k = ShellKernel::new(shell, polygon)?;
    if k.dim() != 2 {
        return Err(Error::Unsupported("kernel comparison is planar".into()));
    }
    if half_nodes == 0 || !(radius > 0.0) {
        return Err(Error::Invalid("kernel grid needs a positive radius and node count".into()));
    }
    let h = radius / half_nodes as f64;
    let n = half_nodes as i64;
    let rows: Vec<f64> = (-n..=n)
        .into_par_iter()
        .map(|j| {
            let mut worst: f64 = 0.0;
            for i in -n..=n {
                let w = [i as f64 * h, j as f64 * h];
                let r = (w[0] * w[0] + w[1] * w[1]).sqrt();
                if r <= radius + 1e-12 {
                    worst = worst.max((k.eval(&w) - bessel_limit(2, r)).abs());
                }
            }
            worst
        })
        .collect();
    Ok(rows.into_iter().fold(0.0, f64::max))
}

/// One row of a radial kernel profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub r: f64,
    pub kernel: f64,
    pub bessel: f64,
    pub diff: f64,
}

/// Kernel along the ray w = r (cos angle, sin angle) at `count` + 1 equispaced radii.
pub fn kernel_profile(kernel: &ShellKernel, radius: f64, count: usize, angle: f64) -> Vec<ProfileRow> {
    (0..=count)
        .map(|i| {
            let r = radius * i as f64 / count.max(1) as f64;
            let mut w = vec![0.0; kernel.dim()];
            w[0] = r * angle.cos();
            w[1] = r * angle.sin();
            let kv = kernel.eval(&w);
            let b = bessel_limit(kernel.dim(), r);
            ProfileRow { r, kernel: kv, bessel: b, diff: kv - b }
        })
        .collect()
}

/// Flat-coefficient unit-square eigenfunction with coefficient orbit(N) / sqrt(#N) on the filtered shell.
///
/// The L^2 norm over the square is 1.
pub fn derandomized_eigenfunction(mu: i64, bc: Boundary) -> Result<EigenExpansion> {
    if !matches!(bc, Boundary::Dirichlet | Boundary::Neumann) {
        return Err(Error::Invalid("derandomized eigenfunctions use Dirichlet or Neumann".into()));
    }
    let shell = enumerate_shell(&QuadraticForm::circle(), mu)?;
    let keep: Vec<&Vec<i64>> = match bc {
        Boundary::Dirichlet => shell.points.iter().filter(|n| n.iter().all(|&x| x > 0)).collect(),
        _ => shell.points.iter().filter(|n| n.iter().all(|&x| x >= 0)).collect(),
    };
    if keep.is_empty() {
        return Err(Error::Empty(format!("no admissible modes at mu = {mu}")));
    }
    let norm = (shell.len() as f64).sqrt();
    let terms = keep
        .into_iter()
        .map(|n| ExpansionTerm { index: n.clone(), coeff: Coefficient::Scalar(orbit_size(n) / norm) })
        .collect();
    EigenExpansion::new(BilliardSpec::unit_square(bc), terms)
}

/// Exact squared L^2 norm over the rectangle of a Dirichlet or Neumann rectangle expansion.
pub fn l2_norm_squared(e: &EigenExpansion) -> Result<f64> {
    if !matches!(e.spec.bc, Boundary::Dirichlet | Boundary::Neumann) || e.spec.polygon_kind() != Some(PolygonKind::Rectangle) {
        return Err(Error::Unsupported("exact norms cover Dirichlet/Neumann rectangles".into()));
    }
    let vol: f64 = e.spec.side_lengths().iter().product();
    let mut acc = NeumaierSum::new();
    for t in &e.terms {
        let Coefficient::Scalar(c) = t.coeff else {
            return Err(Error::Invalid("rectangle coefficients are scalar".into()));
        };
        let factor: f64 = t.index.iter().map(|&n| if n == 0 { 1.0 } else { 0.5 }).product();
        acc.add(c * c * factor * vol);
    }
    Ok(acc.value())
}

/// Squared L^2 norm by the midpoint rule with `per_axis` nodes per axis (exact for trigonometric
/// products whose frequencies stay below the rule's aliasing limit).
pub fn l2_norm_squared_quadrature(e: &EigenExpansion, per_axis: usize) -> Result<f64> {
    let f = e.compile()?;
    let l = e.spec.side_lengths();
    if l.len() != 2 {
        return Err(Error::Unsupported("quadrature norm is planar".into()));
    }
    let h = [l[0] / per_axis as f64, l[1] / per_axis as f64];
    let rows: Vec<f64> = (0..per_axis)
        .into_par_iter()
        .map(|j| {
            let mut acc = NeumaierSum::new();
            for i in 0..per_axis {
                let z = [(i as f64 + 0.5) * h[0], (j as f64 + 0.5) * h[1]];
                let v = f.value(&z);
                acc.add(v * v);
            }
            acc.value()
        })
        .collect();
    Ok(rows.iter().sum::<f64>() * h[0] * h[1])
}

/// Uniform cell-centred base grid on a rectangle's planar box.
pub fn base_grid(spec: &BilliardSpec, nx: usize, ny: usize) -> Result<Vec<[f64; 2]>> {
    if spec.dim() != 2 || nx == 0 || ny == 0 {
        return Err(Error::Invalid("base grids are planar and nonempty".into()));
    }
    let l = spec.side_lengths();
    let mut out = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            out.push([(i as f64 + 0.5) * l[0] / nx as f64, (j as f64 + 0.5) * l[1] / ny as f64]);
        }
    }
    Ok(out)
}

/// Base-point average of u(z0 + x / sqrt(lambda)) u(z0 + y / sqrt(lambda)).
pub fn empirical_covariance(e: &EigenExpansion, base: &[[f64; 2]], x: [f64; 2], y: [f64; 2]) -> Result<f64> {
    if base.is_empty() {
        return Err(Error::Empty("no base points".into()));
    }
    let f = e.compile()?;
    let s = e.lambda.sqrt();
    let prods: Vec<f64> = base
        .par_iter()
        .map(|z0| {
            let a = f.value(&[z0[0] + x[0] / s, z0[1] + x[1] / s]);
            let b = f.value(&[z0[0] + y[0] / s, z0[1] + y[1] / s]);
            a * b
        })
        .collect();
    let mut acc = NeumaierSum::new();
    for p in prods {
        acc.add(p);
    }
    Ok(acc.value() / base.len() as f64)
}

/// Covariance matrix of the rescaled field at the given probe points, averaged over base points.
pub fn covariance_matrix(e: &EigenExpansion, base: &[[f64; 2]], probes: &[[f64; 2]]) -> Result<Vec<Vec<f64>>> {
    if base.is_empty() {
        return Err(Error::Empty("no base points".into()));
    }
    let f = e.compile()?;
    let s = e.lambda.sqrt();
    let n = probes.len();
    let samples: Vec<Vec<f64>> = base
        .par_iter()
        .map(|z0| probes.iter().map(|p| f.value(&[z0[0] + p[0] / s, z0[1] + p[1] / s])).collect())
        .collect();
    let mut m = vec![vec![0.0; n]; n];
    for (a, row) in m.iter_mut().enumerate() {
        for (b, slot) in row.iter_mut().enumerate() {
            let mut acc = NeumaierSum::new();
            for v in &samples {
                acc.add(v[a] * v[b]);
            }
            *slot = acc.value() / base.len() as f64;
        }
    }
    Ok(m)
}

/// Deterministic probe pairs in the window: radial pairs from the origin plus off-centre pairs.
pub fn probe_pairs(count: usize, radius: f64) -> Vec<([f64; 2], [f64; 2])> {
    (0..count)
        .map(|i| {
            let t = i as f64 / count.max(1) as f64;
            let angle = 2.399_963_229_728_653 * i as f64;
            let r = radius * (0.1 + 0.9 * t);
            let x = if i % 2 == 0 { [0.0, 0.0] } else { [0.3 * angle.sin(), -0.2 * angle.cos()] };
            (x, [x[0] + r * angle.cos(), x[1] + r * angle.sin()])
        })
        .collect()
}

/// Max over pairs of |empirical covariance - J_0(|x - y|)|.
pub fn covariance_deviation(e: &EigenExpansion, base: &[[f64; 2]], pairs: &[([f64; 2], [f64; 2])]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (x, y) in pairs {
        let c = empirical_covariance(e, base, *x, *y)?;
        let r = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
        worst = worst.max((c - bessel_limit(2, r)).abs());
    }
    Ok(worst)
}
