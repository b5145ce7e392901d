//! Monochromatic waves: Bessel-translate sums, Herglotz polynomials and reflection symmetry.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Field2, Jet2};
use crate::grid::{stencil_residual, FieldGrid, GridMeta, GridSpec};
pub use crate::special::bessel_j;
use crate::special::{scaled_bessel, NeumaierSum};

/// Seed used by symmetry residual sampling.
pub const SYMMETRY_SEED: u64 = 0x005E_ED0C;

/// One Bessel translate c * g_d(|z - center|).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Translate {
    pub center: Vec<f64>,
    pub coeff: f64,
}

/// Finite sum of Bessel translates in dimension d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BesselTranslateSum {
    pub d: usize,
    pub translates: Vec<Translate>,
}

impl BesselTranslateSum {
    pub fn new(d: usize, translates: Vec<Translate>) -> Result<Self> {
        if d < 2 {
            return Err(Error::Invalid("waves need dimension >= 2".into()));
        }
        if translates.iter().any(|t| t.center.len() != d) {
            return Err(Error::Invalid("translate center has the wrong dimension".into()));
        }
        Ok(Self { d, translates })
    }

    /// The radial wave g_d(|z|) centered at the origin.
    pub fn radial(d: usize) -> Self {
        Self { d, translates: vec![Translate { center: vec![0.0; d], coeff: 1.0 }] }
    }

    /// Planar sum from (center, coefficient) pairs.
    pub fn planar(items: &[([f64; 2], f64)]) -> Self {
        Self {
            d: 2,
            translates: items
                .iter()
                .map(|(c, a)| Translate { center: c.to_vec(), coeff: *a })
                .collect(),
        }
    }

    /// Largest distance of a center from the origin.
    pub fn envelope(&self) -> f64 {
        self.translates
            .iter()
            .map(|t| t.center.iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    fn order(&self) -> f64 {
        0.5 * self.d as f64 - 1.0
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        let nu = self.order();
        let mut acc = NeumaierSum::new();
        for t in &self.translates {
            let r = dist(z, &t.center);
            acc.add(t.coeff * scaled_bessel(nu, r));
        }
        acc.value()
    }

    /// Derivatives of the profile in s = |w|^2: (-1/2)^k G_{nu+k}(r) for k = 0..=3.
    fn profile_chain(&self, r: f64) -> [f64; 4] {
        let nu = self.order();
        [
            scaled_bessel(nu, r),
            -0.5 * scaled_bessel(nu + 1.0, r),
            0.25 * scaled_bessel(nu + 2.0, r),
            -0.125 * scaled_bessel(nu + 3.0, r),
        ]
    }

    pub fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.d];
        for t in &self.translates {
            let w: Vec<f64> = z.iter().zip(&t.center).map(|(a, b)| a - b).collect();
            let r = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            let ch = self.profile_chain(r);
            for (gi, wi) in g.iter_mut().zip(&w) {
                *gi += t.coeff * 2.0 * wi * ch[1];
            }
        }
        g
    }

    /// Exact Laplacian 4 s G'' + 2 d G'.
    pub fn laplacian(&self, z: &[f64]) -> f64 {
        let mut acc = NeumaierSum::new();
        for t in &self.translates {
            let r = dist(z, &t.center);
            let ch = self.profile_chain(r);
            acc.add(t.coeff * (4.0 * r * r * ch[2] + 2.0 * self.d as f64 * ch[1]));
        }
        acc.value()
    }

    /// Image of the sum under z -> M z for an orthogonal matrix M: centers map by M^T.
    pub fn compose_linear(&self, m: &Isometry) -> Self {
        let inv = m.inverse();
        Self {
            d: self.d,
            translates: self
                .translates
                .iter()
                .map(|t| Translate { center: inv.apply(&t.center), coeff: t.coeff })
                .collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            d: self.d,
            translates: self
                .translates
                .iter()
                .map(|t| Translate { center: t.center.clone(), coeff: c * t.coeff })
                .collect(),
        }
    }
}

impl Field2 for BesselTranslateSum {
    fn jet(&self, z: [f64; 2]) -> Jet2 {
        assert_eq!(self.d, 2, "planar jets need d = 2");
        let mut out = Jet2::default();
        for t in &self.translates {
            let w = [z[0] - t.center[0], z[1] - t.center[1]];
            let r = (w[0] * w[0] + w[1] * w[1]).sqrt();
            let g = self.profile_chain(r);
            let p = |i: usize, j: usize| -> f64 {
                let mut idx = Vec::new();
                idx.extend(std::iter::repeat_n(0, i));
                idx.extend(std::iter::repeat_n(1, j));
                chain_partial(&w, &idx, &g)
            };
            out.add_scaled(&Jet2::from_partials(p), t.coeff);
        }
        out
    }

    fn value(&self, z: [f64; 2]) -> f64 {
        self.eval(&z)
    }
}

/// Partial derivative of G(|w|^2) for a multi-index given as a list of axes (length <= 3).
fn chain_partial(w: &[f64], axes: &[usize], g: &[f64; 4]) -> f64 {
    let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    match *axes {
        [] => g[0],
        [i] => 2.0 * w[i] * g[1],
        [i, j] => 4.0 * w[i] * w[j] * g[2] + 2.0 * delta(i, j) * g[1],
        [i, j, k] => {
            8.0 * w[i] * w[j] * w[k] * g[3]
                + 4.0 * (delta(i, j) * w[k] + delta(i, k) * w[j] + delta(j, k) * w[i]) * g[2]
        }
        _ => panic!("derivatives above third order are not provided"),
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Trigonometric density p(theta) = sum_{k=-D}^{D} c_k e^{i k theta} on the unit circle.
///
/// The generated wave is phi(z) = integral over theta in [0, 2pi) of e^{i z.xi(theta)} p(theta),
/// with the unnormalized arclength measure.
#[derive(Debug, Clone, PartialEq)]
pub struct HerglotzPolynomial {
    degree: usize,
    coeffs: Vec<Complex64>,
}

#[derive(Serialize, Deserialize)]
struct HerglotzRepr {
    degree: usize,
    coeffs: Vec<[f64; 2]>,
}

impl Serialize for HerglotzPolynomial {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        HerglotzRepr { degree: self.degree, coeffs: self.coeffs.iter().map(|c| [c.re, c.im]).collect() }
            .serialize(s)
    }
}

impl<'de> Deserialize<'de> for HerglotzPolynomial {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = HerglotzRepr::deserialize(d)?;
        HerglotzPolynomial::new(r.degree, r.coeffs.iter().map(|c| Complex64::new(c[0], c[1])).collect())
            .map_err(serde::de::Error::custom)
    }
}

impl HerglotzPolynomial {
    /// Coefficients ordered from k = -degree to k = degree.
    pub fn new(degree: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != 2 * degree + 1 {
            return Err(Error::Invalid(format!(
                "degree {degree} needs {} coefficients, got {}",
                2 * degree + 1,
                coeffs.len()
            )));
        }
        Ok(Self { degree, coeffs })
    }

    pub fn zero() -> Self {
        Self { degree: 0, coeffs: vec![Complex64::new(0.0, 0.0)] }
    }

    /// Constant density 1/(2 pi), whose wave is J_0(|z|).
    pub fn bessel_radial() -> Self {
        Self { degree: 0, coeffs: vec![Complex64::new(0.5 / PI, 0.0)] }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Coefficient of e^{i k theta}; zero outside the stored range.
    pub fn coeff(&self, k: i64) -> Complex64 {
        if k.unsigned_abs() as usize > self.degree {
            Complex64::new(0.0, 0.0)
        } else {
            self.coeffs[(k + self.degree as i64) as usize]
        }
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Largest deviation from c_k (-1)^k = conj(c_{-k}).
    pub fn hermitian_defect(&self) -> f64 {
        let d = self.degree as i64;
        (-d..=d)
            .map(|k| {
                let s = if k % 2 == 0 { 1.0 } else { -1.0 };
                (self.coeff(k) * s - self.coeff(-k).conj()).norm()
            })
            .fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self) -> bool {
        let scale = self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        self.hermitian_defect() <= 1e-12 * scale.max(1e-300)
    }

    /// Projection onto Hermitian densities (the part generating a real wave).
    pub fn hermitian_part(&self) -> Self {
        let d = self.degree as i64;
        let coeffs = (-d..=d)
            .map(|k| {
                let s = if k % 2 == 0 { 1.0 } else { -1.0 };
                (self.coeff(k) + self.coeff(-k).conj() * s) * 0.5
            })
            .collect();
        Self { degree: self.degree, coeffs }
    }

    /// p at angle theta.
    pub fn density(&self, theta: f64) -> Complex64 {
        let d = self.degree as i64;
        let mut acc = Complex64::new(0.0, 0.0);
        for k in -d..=d {
            acc += self.coeff(k) * Complex64::from_polar(1.0, k as f64 * theta);
        }
        acc
    }

    /// p at a direction xi (normalized before use).
    pub fn density_at(&self, xi: [f64; 2]) -> Complex64 {
        self.density(xi[1].atan2(xi[0]))
    }

    fn nodes(&self, z: [f64; 2]) -> usize {
        let r = (z[0] * z[0] + z[1] * z[1]).sqrt();
        4 * (self.degree + r.ceil() as usize + 16)
    }

    /// Complex wave value and derivatives by trapezoid quadrature of the differentiated integrand.
    pub fn jet_complex(&self, z: [f64; 2]) -> [Complex64; 10] {
        let n = self.nodes(z);
        let w = 2.0 * PI / n as f64;
        let mut acc = [Complex64::new(0.0, 0.0); 10];
        let i = Complex64::new(0.0, 1.0);
        for q in 0..n {
            let th = q as f64 * w;
            let (s, c) = th.sin_cos();
            let base = Complex64::from_polar(1.0, z[0] * c + z[1] * s) * self.density(th) * w;
            let (a, b) = (i * c, i * s);
            let f = [
                Complex64::new(1.0, 0.0),
                a,
                b,
                a * a,
                a * b,
                b * b,
                a * a * a,
                a * a * b,
                a * b * b,
                b * b * b,
            ];
            for (slot, m) in acc.iter_mut().zip(f) {
                *slot += base * m;
            }
        }
        acc
    }

    /// Complex wave value by trapezoid quadrature.
    pub fn eval_complex(&self, z: [f64; 2]) -> Complex64 {
        let n = self.nodes(z);
        let w = 2.0 * PI / n as f64;
        let mut acc = Complex64::new(0.0, 0.0);
        for q in 0..n {
            let th = q as f64 * w;
            let (s, c) = th.sin_cos();
            acc += Complex64::from_polar(1.0, z[0] * c + z[1] * s) * self.density(th);
        }
        acc * w
    }

    /// Real wave value; requires a Hermitian density.
    pub fn eval(&self, z: [f64; 2]) -> Result<f64> {
        if !self.is_hermitian() {
            return Err(Error::Invalid("real evaluation needs a Hermitian density".into()));
        }
        Ok(self.eval_complex(z).re)
    }

    /// Closed form 2 pi sum_k c_k i^k J_k(r) e^{i k psi}.
    pub fn eval_series(&self, z: [f64; 2]) -> Complex64 {
        let r = (z[0] * z[0] + z[1] * z[1]).sqrt();
        let psi = z[1].atan2(z[0]);
        let d = self.degree as i64;
        let mut acc = Complex64::new(0.0, 0.0);
        for k in -d..=d {
            let jk = bessel_j(k.unsigned_abs() as f64, r) * if k < 0 && k % 2 != 0 { -1.0 } else { 1.0 };
            acc += self.coeff(k) * Complex64::i().powi(k as i32) * jk * Complex64::from_polar(1.0, k as f64 * psi);
        }
        acc * (2.0 * PI)
    }

    /// Density of the wave phi o g for a planar isometry g.
    pub fn compose(&self, g: &Isometry) -> Self {
        let (reflect, angle) = g.planar_form();
        let d = self.degree as i64;
        let coeffs = (-d..=d)
            .map(|k| {
                if reflect {
                    self.coeff(-k) * Complex64::from_polar(1.0, -2.0 * k as f64 * angle)
                } else {
                    self.coeff(k) * Complex64::from_polar(1.0, k as f64 * angle)
                }
            })
            .collect();
        Self { degree: self.degree, coeffs }
    }

    pub fn add_scaled(&mut self, other: &Self, c: f64) {
        if other.degree > self.degree {
            let d = other.degree as i64;
            self.coeffs = (-d..=d).map(|k| self.coeff(k)).collect();
            self.degree = other.degree;
        }
        let d = other.degree as i64;
        for k in -d..=d {
            let idx = (k + self.degree as i64) as usize;
            self.coeffs[idx] += other.coeff(k) * c;
        }
    }
}

impl Field2 for HerglotzPolynomial {
    fn jet(&self, z: [f64; 2]) -> Jet2 {
        let a = self.jet_complex(z);
        Jet2 {
            value: a[0].re,
            grad: [a[1].re, a[2].re],
            hess: [a[3].re, a[4].re, a[5].re],
            third: [a[6].re, a[7].re, a[8].re, a[9].re],
        }
    }

    fn value(&self, z: [f64; 2]) -> f64 {
        self.eval_complex(z).re
    }
}

/// Herglotz density of a planar translate sum: c_n = sum (c/2pi) (-i)^n J_n(rho) e^{-i n psi}.
///
/// The degree is the smallest D with |J_n(rho_max)| below 1e-16 for every n > D.
pub fn translate_to_herglotz(w: &BesselTranslateSum) -> Result<HerglotzPolynomial> {
    if w.d != 2 {
        return Err(Error::Invalid("Herglotz conversion is planar".into()));
    }
    if w.translates.is_empty() {
        return Ok(HerglotzPolynomial::zero());
    }
    let rho_max = w.envelope();
    let mut degree = rho_max.ceil() as usize;
    while bessel_j(degree as f64 + 1.0, rho_max).abs() > 1e-16 {
        degree += 1;
    }
    let d = degree as i64;
    let mut coeffs = vec![Complex64::new(0.0, 0.0); 2 * degree + 1];
    for t in &w.translates {
        let rho = (t.center[0] * t.center[0] + t.center[1] * t.center[1]).sqrt();
        let psi = t.center[1].atan2(t.center[0]);
        for k in -d..=d {
            let n = k.unsigned_abs() as f64;
            let jn = bessel_j(n, rho) * if k < 0 && k % 2 != 0 { -1.0 } else { 1.0 };
            let phase = Complex64::new(0.0, -1.0).powi(k as i32) * Complex64::from_polar(1.0, -(k as f64) * psi);
            coeffs[(k + d) as usize] += phase * (t.coeff * jn / (2.0 * PI));
        }
    }
    HerglotzPolynomial::new(degree, coeffs)
}

/// Orthogonal linear map of R^d stored as a row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Isometry {
    pub dim: usize,
    pub matrix: Vec<f64>,
}

impl Isometry {
    pub fn identity(dim: usize) -> Self {
        let mut matrix = vec![0.0; dim * dim];
        for i in 0..dim {
            matrix[i * dim + i] = 1.0;
        }
        Self { dim, matrix }
    }

    /// Reflection across the line z2 = m z1; `None` is the line z1 = 0.
    pub fn line_reflection(slope: Option<f64>) -> Self {
        match slope {
            None => Self { dim: 2, matrix: vec![-1.0, 0.0, 0.0, 1.0] },
            Some(m) => {
                let q = 1.0 + m * m;
                Self {
                    dim: 2,
                    matrix: vec![(1.0 - m * m) / q, 2.0 * m / q, 2.0 * m / q, (m * m - 1.0) / q],
                }
            }
        }
    }

    /// Reflection across the line through the origin at angle `beta`.
    pub fn reflection_at_angle(beta: f64) -> Self {
        let (s, c) = (2.0 * beta).sin_cos();
        Self { dim: 2, matrix: vec![c, s, s, -c] }
    }

    pub fn rotation(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self { dim: 2, matrix: vec![c, -s, s, c] }
    }

    /// Sign flip of coordinate j in dimension d.
    pub fn coordinate_flip(dim: usize, j: usize) -> Self {
        let mut m = Self::identity(dim);
        m.matrix[j * dim + j] = -1.0;
        m
    }

    /// Swap of the two planar coordinates.
    pub fn swap() -> Self {
        Self { dim: 2, matrix: vec![0.0, 1.0, 1.0, 0.0] }
    }

    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.matrix[i * self.dim + j] * z[j]).sum())
            .collect()
    }

    pub fn apply2(&self, z: [f64; 2]) -> [f64; 2] {
        let m = &self.matrix;
        [m[0] * z[0] + m[1] * z[1], m[2] * z[0] + m[3] * z[1]]
    }

    /// self o other.
    pub fn compose(&self, other: &Isometry) -> Isometry {
        let d = self.dim;
        let mut matrix = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                matrix[i * d + j] = (0..d).map(|k| self.matrix[i * d + k] * other.matrix[k * d + j]).sum();
            }
        }
        Isometry { dim: d, matrix }
    }

    /// Transpose, which is the inverse of an orthogonal map.
    pub fn inverse(&self) -> Isometry {
        let d = self.dim;
        let mut matrix = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                matrix[i * d + j] = self.matrix[j * d + i];
            }
        }
        Isometry { dim: d, matrix }
    }

    /// Determinant sign parity: 1 for orientation-reversing maps.
    pub fn parity(&self) -> u8 {
        if self.determinant() < 0.0 {
            1
        } else {
            0
        }
    }

    pub fn determinant(&self) -> f64 {
        let d = self.dim;
        let mut a = self.matrix.clone();
        let mut det = 1.0;
        for c in 0..d {
            let p = (c..d)
                .max_by(|&x, &y| a[x * d + c].abs().total_cmp(&a[y * d + c].abs()))
                .expect("nonempty pivot range");
            if a[p * d + c] == 0.0 {
                return 0.0;
            }
            if p != c {
                for k in 0..d {
                    a.swap(p * d + k, c * d + k);
                }
                det = -det;
            }
            det *= a[c * d + c];
            for r in c + 1..d {
                let f = a[r * d + c] / a[c * d + c];
                for k in c..d {
                    a[r * d + k] -= f * a[c * d + k];
                }
            }
        }
        det
    }

    /// Planar form: (true, beta) for a reflection across angle beta, (false, omega) for a rotation.
    pub fn planar_form(&self) -> (bool, f64) {
        assert_eq!(self.dim, 2, "planar form needs a 2x2 map");
        let m = &self.matrix;
        if self.determinant() < 0.0 {
            (true, 0.5 * m[2].atan2(m[0]))
        } else {
            (false, m[2].atan2(m[0]))
        }
    }

    pub fn distance(&self, other: &Isometry) -> f64 {
        self.matrix.iter().zip(&other.matrix).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Largest deviation of M M^T from the identity.
    pub fn orthogonality_defect(&self) -> f64 {
        self.compose(&self.inverse()).distance(&Isometry::identity(self.dim))
    }
}

/// Boundary condition class for symmetry signs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SymmetryBc {
    Dirichlet,
    Neumann,
}

/// Polygon family of the symmetry tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolygonKind {
    Rectangle,
    Iso,
    Equi,
    Hemi,
}

/// Which table a symmetry row comes from: fixed base points or lattice polygons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SymmetryTable {
    FixedPoint,
    Lattice,
}

/// One row of the symmetry tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SymmetryRow {
    pub table: SymmetryTable,
    pub polygon: PolygonKind,
    pub bc: SymmetryBc,
    pub dim: usize,
}

impl SymmetryRow {
    pub fn new(table: SymmetryTable, polygon: PolygonKind, bc: SymmetryBc) -> Self {
        Self { table, polygon, bc, dim: 2 }
    }

    pub fn with_dim(mut self, dim: usize) -> Self {
        self.dim = dim;
        self
    }

    /// Reflections whose (anti)symmetry the row demands.
    pub fn reflections(&self) -> Vec<Isometry> {
        let s3 = 3f64.sqrt();
        let line = Isometry::line_reflection;
        match (self.table, self.polygon) {
            (SymmetryTable::Lattice, PolygonKind::Rectangle) if self.dim == 2 => {
                vec![line(None), line(Some(0.0))]
            }
            (_, PolygonKind::Rectangle) => {
                (0..self.dim).map(|j| Isometry::coordinate_flip(self.dim, j)).collect()
            }
            (SymmetryTable::FixedPoint, PolygonKind::Iso) => vec![line(None), line(Some(0.0)), line(Some(1.0))],
            (SymmetryTable::FixedPoint, PolygonKind::Equi) => vec![line(Some(0.0))],
            (SymmetryTable::FixedPoint, PolygonKind::Hemi) => vec![line(Some(0.0)), line(None)],
            (SymmetryTable::Lattice, PolygonKind::Iso) => {
                vec![line(None), line(Some(0.0)), line(Some(1.0)), line(Some(-1.0))]
            }
            (SymmetryTable::Lattice, PolygonKind::Equi) => {
                vec![line(Some(0.0)), line(Some(s3)), line(Some(-s3))]
            }
            (SymmetryTable::Lattice, PolygonKind::Hemi) => vec![
                line(None),
                line(Some(0.0)),
                line(Some(s3)),
                line(Some(-s3)),
                line(Some(s3 / 3.0)),
                line(Some(-s3 / 3.0)),
            ],
        }
    }

    /// Required factor (-1)^{sigma}: -1 for Dirichlet, +1 for Neumann.
    pub fn sign(&self) -> f64 {
        match self.bc {
            SymmetryBc::Dirichlet => -1.0,
            SymmetryBc::Neumann => 1.0,
        }
    }

    /// Finite group generated by the row's reflections.
    pub fn group(&self) -> Result<SymmetryGroup> {
        SymmetryGroup::generate(self.reflections())
    }
}

impl fmt::Display for SymmetryRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = match self.table {
            SymmetryTable::FixedPoint => "tableA",
            SymmetryTable::Lattice => "tableB",
        };
        let p = match self.polygon {
            PolygonKind::Rectangle => "rectangle",
            PolygonKind::Iso => "iso",
            PolygonKind::Equi => "equi",
            PolygonKind::Hemi => "hemi",
        };
        let b = match self.bc {
            SymmetryBc::Dirichlet => "dirichlet",
            SymmetryBc::Neumann => "neumann",
        };
        write!(f, "{t}:{p}:{b}")
    }
}

impl FromStr for SymmetryRow {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Invalid(format!("unknown table row '{s}'")));
        }
        let table = match parts[0] {
            "tableA" => SymmetryTable::FixedPoint,
            "tableB" => SymmetryTable::Lattice,
            _ => return Err(Error::Invalid(format!("unknown table '{}'", parts[0]))),
        };
        let polygon = match parts[1] {
            "rectangle" | "square" => PolygonKind::Rectangle,
            "iso" => PolygonKind::Iso,
            "equi" => PolygonKind::Equi,
            "hemi" => PolygonKind::Hemi,
            _ => return Err(Error::Invalid(format!("unknown polygon '{}'", parts[1]))),
        };
        let bc = match parts[2] {
            "dirichlet" | "D" => SymmetryBc::Dirichlet,
            "neumann" | "N" => SymmetryBc::Neumann,
            _ => return Err(Error::Invalid(format!("unknown boundary condition '{}'", parts[2]))),
        };
        Ok(Self::new(table, polygon, bc))
    }
}

/// Group element with its sign exponent (parity of the number of generating reflections).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupElement {
    pub map: Isometry,
    pub parity: u8,
}

/// Finite group of orthogonal maps generated by reflections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryGroup {
    pub generators: Vec<Isometry>,
    pub elements: Vec<GroupElement>,
}

impl SymmetryGroup {
    const MAX_ORDER: usize = 64;
    const MATCH_TOL: f64 = 1e-9;

    /// Closure of the generators under composition.
    pub fn generate(generators: Vec<Isometry>) -> Result<Self> {
        let dim = generators.first().map_or(2, |g| g.dim);
        for g in &generators {
            if g.dim != dim {
                return Err(Error::Invalid("generators of mixed dimension".into()));
            }
            if g.compose(g).distance(&Isometry::identity(dim)) > 1e-12 {
                return Err(Error::Invalid("generator is not an involution".into()));
            }
        }
        let mut elements = vec![GroupElement { map: Isometry::identity(dim), parity: 0 }];
        let mut frontier = 0;
        while frontier < elements.len() {
            let current = elements[frontier].clone();
            for g in &generators {
                let next = g.compose(&current.map);
                if !elements.iter().any(|e| e.map.distance(&next) < Self::MATCH_TOL) {
                    let parity = (current.parity + 1) % 2;
                    elements.push(GroupElement { map: next, parity });
                    if elements.len() > Self::MAX_ORDER {
                        return Err(Error::Invalid("reflection group is not finite".into()));
                    }
                }
            }
            frontier += 1;
        }
        Ok(Self { generators, elements })
    }

    pub fn trivial(dim: usize) -> Self {
        Self { generators: Vec::new(), elements: vec![GroupElement { map: Isometry::identity(dim), parity: 0 }] }
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    /// Sign applied to an element: (-1)^{parity} for Dirichlet, +1 for Neumann.
    pub fn sign(element: &GroupElement, bc: SymmetryBc) -> f64 {
        match bc {
            SymmetryBc::Neumann => 1.0,
            SymmetryBc::Dirichlet => {
                if element.parity == 1 {
                    -1.0
                } else {
                    1.0
                }
            }
        }
    }
}

/// A monochromatic wave with optional declared symmetry.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveSpec {
    pub shape: WaveShape,
    pub symmetry: Option<SymmetryRow>,
}

/// Representation of a wave.
#[derive(Debug, Clone, PartialEq)]
pub enum WaveShape {
    Translates(BesselTranslateSum),
    Herglotz(HerglotzPolynomial),
}

#[derive(Serialize, Deserialize)]
struct WaveSpecRepr {
    d: usize,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    translates: Option<Vec<Translate>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    herglotz: Option<HerglotzPolynomial>,
    #[serde(default = "none_symmetry")]
    symmetry: String,
}

fn none_symmetry() -> String {
    "none".into()
}

impl Serialize for WaveSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let symmetry = self.symmetry.map_or_else(none_symmetry, |r| r.to_string());
        let repr = match &self.shape {
            WaveShape::Translates(t) => WaveSpecRepr {
                d: t.d,
                kind: "translates".into(),
                translates: Some(t.translates.clone()),
                herglotz: None,
                symmetry,
            },
            WaveShape::Herglotz(h) => WaveSpecRepr {
                d: 2,
                kind: "herglotz".into(),
                translates: None,
                herglotz: Some(h.clone()),
                symmetry,
            },
        };
        repr.serialize(s)
    }
}

impl<'de> Deserialize<'de> for WaveSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let r = WaveSpecRepr::deserialize(d)?;
        let shape = match r.kind.as_str() {
            "translates" => WaveShape::Translates(
                BesselTranslateSum::new(r.d, r.translates.unwrap_or_default()).map_err(D::Error::custom)?,
            ),
            "herglotz" => {
                if r.d != 2 {
                    return Err(D::Error::custom("Herglotz waves are planar"));
                }
                WaveShape::Herglotz(r.herglotz.ok_or_else(|| D::Error::custom("missing herglotz block"))?)
            }
            other => return Err(D::Error::custom(format!("unknown wave kind '{other}'"))),
        };
        let symmetry = if r.symmetry == "none" {
            None
        } else {
            Some(r.symmetry.parse::<SymmetryRow>().map_err(D::Error::custom)?.with_dim(r.d))
        };
        Ok(WaveSpec { shape, symmetry })
    }
}

impl WaveSpec {
    pub fn translates(t: BesselTranslateSum) -> Self {
        Self { shape: WaveShape::Translates(t), symmetry: None }
    }

    pub fn herglotz(h: HerglotzPolynomial) -> Self {
        Self { shape: WaveShape::Herglotz(h), symmetry: None }
    }

    /// The translate-sum form, if the wave is given as one.
    pub fn translate_sum(&self) -> Option<&BesselTranslateSum> {
        match &self.shape {
            WaveShape::Translates(t) => Some(t),
            WaveShape::Herglotz(_) => None,
        }
    }

    pub fn dim(&self) -> usize {
        match &self.shape {
            WaveShape::Translates(t) => t.d,
            WaveShape::Herglotz(_) => 2,
        }
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        match &self.shape {
            WaveShape::Translates(t) => t.eval(z),
            WaveShape::Herglotz(h) => h.eval_complex([z[0], z[1]]).re,
        }
    }

    /// Envelope radius of the translates (0 for Herglotz densities).
    pub fn envelope(&self) -> f64 {
        match &self.shape {
            WaveShape::Translates(t) => t.envelope(),
            WaveShape::Herglotz(_) => 0.0,
        }
    }

    /// Herglotz density of the wave.
    pub fn to_herglotz(&self) -> Result<HerglotzPolynomial> {
        match &self.shape {
            WaveShape::Translates(t) => translate_to_herglotz(t),
            WaveShape::Herglotz(h) => Ok(h.clone()),
        }
    }

    /// Validates the declared symmetry with the default sampling.
    pub fn validate(&self) -> Result<()> {
        if let Some(row) = self.symmetry {
            let r = check_symmetry(self, &row, 64)?;
            if r > 1e-8 {
                return Err(Error::Symmetry { residual: r, tolerance: 1e-8 });
            }
        }
        Ok(())
    }
}

impl Field2 for WaveSpec {
    fn jet(&self, z: [f64; 2]) -> Jet2 {
        match &self.shape {
            WaveShape::Translates(t) => t.jet(z),
            WaveShape::Herglotz(h) => h.jet(z),
        }
    }

    fn value(&self, z: [f64; 2]) -> f64 {
        self.eval(&z)
    }
}

/// Signed group average (1/|G|) sum_i (-1)^{s_i} w o g_i.
pub fn symmetrize(w: &WaveSpec, g: &SymmetryGroup, bc: SymmetryBc) -> Result<WaveSpec> {
    let n = g.order() as f64;
    let shape = match &w.shape {
        WaveShape::Translates(t) => {
            let mut out = Vec::new();
            for e in &g.elements {
                if e.map.dim != t.d {
                    return Err(Error::Invalid("group and wave dimensions differ".into()));
                }
                let s = SymmetryGroup::sign(e, bc) / n;
                out.extend(t.compose_linear(&e.map).scaled(s).translates);
            }
            WaveShape::Translates(BesselTranslateSum { d: t.d, translates: out })
        }
        WaveShape::Herglotz(h) => {
            let mut acc = HerglotzPolynomial::zero();
            for e in &g.elements {
                acc.add_scaled(&h.compose(&e.map), SymmetryGroup::sign(e, bc) / n);
            }
            WaveShape::Herglotz(acc)
        }
    };
    Ok(WaveSpec { shape, symmetry: w.symmetry })
}

/// Projection of a wave onto a table row's symmetry class, tagged with the row.
pub fn symmetrize_row(w: &WaveSpec, row: &SymmetryRow) -> Result<WaveSpec> {
    let mut out = symmetrize(w, &row.group()?, row.bc)?;
    out.symmetry = Some(*row);
    Ok(out)
}

/// Max over seeded random points of B_3 of |phi(S z) - sign * phi(z)| over the row's reflections.
pub fn check_symmetry(w: &WaveSpec, row: &SymmetryRow, sample_count: usize) -> Result<f64> {
    let d = w.dim();
    let refl = row.with_dim(d).reflections();
    let sign = row.sign();
    let mut rng = ChaCha8Rng::seed_from_u64(SYMMETRY_SEED);
    let mut worst: f64 = 0.0;
    for _ in 0..sample_count {
        let z = loop {
            let p: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
            if p.iter().map(|x| x * x).sum::<f64>() <= 9.0 {
                break p;
            }
        };
        let v = w.eval(&z);
        for s in &refl {
            worst = worst.max((w.eval(&s.apply(&z)) - sign * v).abs());
        }
    }
    Ok(worst)
}

/// Stencil residual of a wave on a grid and on the halved grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCheck {
    pub coarse: f64,
    pub fine: f64,
    pub ratio: f64,
}

impl ConvergenceCheck {
    /// Ratio in [3.5, 4.5], or both residuals at rounding level.
    pub fn is_second_order(&self) -> bool {
        (3.5..=4.5).contains(&self.ratio) || self.coarse <= 1e-9
    }
}

/// Max over interior nodes of |Delta_h phi + phi|.
pub fn helmholtz_residual(w: &WaveSpec, grid: &GridSpec) -> Result<f64> {
    let g = FieldGrid::from_fn(grid.clone(), GridMeta::default(), |z| w.eval(z));
    Ok(stencil_residual(&g, 1.0, None)?.0)
}

/// Second-order convergence test by halving the step once.
pub fn helmholtz_convergence(w: &WaveSpec, grid: &GridSpec) -> Result<ConvergenceCheck> {
    let coarse = helmholtz_residual(w, grid)?;
    let fine = helmholtz_residual(w, &grid.refined())?;
    let ratio = if fine > 0.0 { coarse / fine } else { f64::INFINITY };
    Ok(ConvergenceCheck { coarse, fine, ratio })
}

/// Sampled decay norm sup (1 + |z|)^{1/2} |phi(z)| over rays up to `radius`.
pub fn decay_norm(w: &WaveSpec, radius: f64, rays: usize, per_ray: usize) -> f64 {
    let d = w.dim();
    let mut best: f64 = 0.0;
    for a in 0..rays {
        let th = 2.0 * PI * a as f64 / rays as f64;
        for k in 0..=per_ray {
            let r = radius * k as f64 / per_ray as f64;
            let mut z = vec![0.0; d];
            z[0] = r * th.cos();
            z[1] = r * th.sin();
            best = best.max((1.0 + r).sqrt() * w.eval(&z).abs());
        }
    }
    best
}

/// Admissible parity classes of localized eigenfunctions at a base point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParityClass {
    /// Odd (Dirichlet) or even (Neumann) under reflection of the listed coordinates.
    Axes { odd: Vec<usize>, even: Vec<usize> },
    /// Even under z -> -z.
    PointEven,
    /// Odd under z -> -z.
    PointOdd,
    NotClassified,
}

/// Symmetry forced on localized eigenfunctions of the unit square at `z0` for shell value `mu`.
pub fn required_symmetry(is_square: bool, dirichlet: bool, z0: [f64; 2], mu: i64) -> ParityClass {
    if !is_square {
        return ParityClass::NotClassified;
    }
    let tol = 1e-12;
    let on_edge = |x: f64| x.abs() < tol || (x - 1.0).abs() < tol;
    let mut flagged = Vec::new();
    for (j, &x) in z0.iter().enumerate() {
        if on_edge(x) {
            flagged.push(j);
        }
    }
    if !flagged.is_empty() {
        return if dirichlet {
            ParityClass::Axes { odd: flagged, even: Vec::new() }
        } else {
            ParityClass::Axes { odd: Vec::new(), even: flagged }
        };
    }
    if (z0[0] - 0.5).abs() < tol && (z0[1] - 0.5).abs() < tol {
        return if mu % 2 == 0 { ParityClass::PointEven } else { ParityClass::PointOdd };
    }
    ParityClass::NotClassified
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflections_are_involutions() {
        for m in [Some(0.0), Some(1.0), Some(-3f64.sqrt()), Some(0.3), None] {
            let s = Isometry::line_reflection(m);
            assert!(s.compose(&s).distance(&Isometry::identity(2)) < 1e-15);
            if let Some(m) = m {
                let p = s.apply2([1.0, m]);
                assert!((p[0] - 1.0).abs() < 1e-15 && (p[1] - m).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn group_orders() {
        let order = |t, p| SymmetryRow::new(t, p, SymmetryBc::Dirichlet).group().unwrap().order();
        assert_eq!(order(SymmetryTable::Lattice, PolygonKind::Rectangle), 4);
        assert_eq!(order(SymmetryTable::Lattice, PolygonKind::Iso), 8);
        assert_eq!(order(SymmetryTable::Lattice, PolygonKind::Equi), 6);
        assert_eq!(order(SymmetryTable::Lattice, PolygonKind::Hemi), 12);
        assert_eq!(order(SymmetryTable::FixedPoint, PolygonKind::Equi), 2);
    }

    #[test]
    fn row_round_trips_through_text() {
        let r: SymmetryRow = "tableB:hemi:neumann".parse().unwrap();
        assert_eq!(r.to_string(), "tableB:hemi:neumann");
    }
}
