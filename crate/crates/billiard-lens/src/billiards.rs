//! Billiard geometries, exact eigenvalues and eigenbases, and PDE/boundary residuals.

use std::f64::consts::PI;

use num_integer::Integer;
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Factor, Field2, Jet2, ProductTerm, TrigField, Wave1};
use crate::grid::{stencil_residual, FieldGrid, GridMeta, GridSpec};
use crate::lattice::{enumerate_shell, LatticeShell, QuadraticForm};
use crate::special::{bessel_j, bessel_j_prime, bisect, newton_polish, nth_sign_change, scaled_bessel, NeumaierSum};
use crate::waves::{PolygonKind, SymmetryBc};

const SQRT3: f64 = 1.732_050_807_568_877_2;
/// Frequency of the second shifted coordinate in triangle bases.
pub const TRI_FREQ_2: f64 = 2.0 * PI * SQRT3 / 3.0;
/// Frequency of the first shifted coordinate in triangle bases.
pub const TRI_FREQ_1: f64 = 2.0 * PI / 3.0;

/// Boundary condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Dirichlet,
    Neumann,
    Periodic,
    Robin,
}

impl Boundary {
    pub fn symmetry_bc(self) -> Option<SymmetryBc> {
        match self {
            Boundary::Dirichlet => Some(SymmetryBc::Dirichlet),
            Boundary::Neumann => Some(SymmetryBc::Neumann),
            _ => None,
        }
    }
}

/// Exact description of a squared side length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SideSquare {
    /// l^2 = num / den.
    Rational { num: i64, den: i64 },
    /// l^2 = radicand^(1/index), assumed irrational.
    Root { radicand: i64, index: u32 },
}

impl SideSquare {
    pub fn rational(num: i64, den: i64) -> Self {
        SideSquare::Rational { num, den }
    }

    /// l^2 as a float.
    pub fn value(&self) -> f64 {
        match *self {
            SideSquare::Rational { num, den } => num as f64 / den as f64,
            SideSquare::Root { radicand, index } => (radicand as f64).powf(1.0 / index as f64),
        }
    }

    pub fn as_ratio(&self) -> Option<Ratio<i64>> {
        match *self {
            SideSquare::Rational { num, den } => Some(Ratio::new(num, den)),
            SideSquare::Root { .. } => None,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            SideSquare::Rational { num, den } if num > 0 && den > 0 => Ok(()),
            SideSquare::Root { radicand, index } if radicand > 0 && index >= 2 => {
                let r = (radicand as f64).powf(1.0 / index as f64).round() as i64;
                if r.checked_pow(index).is_some_and(|p| p == radicand) {
                    Err(Error::Invalid(format!("root certificate {radicand}^(1/{index}) is rational")))
                } else {
                    Ok(())
                }
            }
            _ => Err(Error::Invalid("side squares must be positive".into())),
        }
    }
}

/// Billiard shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum BilliardKind {
    /// (0,l_1) x ... x (0,l_{d-1}) x (0,1); `sides` holds l_1^2 .. l_{d-1}^2.
    Rectangle { sides: Vec<SideSquare> },
    IsoTriangle,
    EquiTriangle,
    HemiTriangle,
    Disk { d: usize },
    RobinSquare { sigma: f64 },
}

/// Geometry plus boundary condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilliardSpec {
    #[serde(flatten)]
    pub kind: BilliardKind,
    pub bc: Boundary,
}

/// A boundary point with its outward unit normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub z: Vec<f64>,
    pub normal: Vec<f64>,
}

/// Shifted triangle frame: (z1 - 1/2, sqrt3/2 - z2).
pub fn to_shifted(z: [f64; 2]) -> [f64; 2] {
    [z[0] - 0.5, 0.5 * SQRT3 - z[1]]
}

/// Inverse of [`to_shifted`].
pub fn from_shifted(w: [f64; 2]) -> [f64; 2] {
    [w[0] + 0.5, 0.5 * SQRT3 - w[1]]
}

impl BilliardSpec {
    pub fn new(kind: BilliardKind, bc: Boundary) -> Result<Self> {
        let s = Self { kind, bc };
        s.validate()?;
        Ok(s)
    }

    pub fn unit_square(bc: Boundary) -> Self {
        Self { kind: BilliardKind::Rectangle { sides: vec![SideSquare::rational(1, 1)] }, bc }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            BilliardKind::Rectangle { sides } => {
                if sides.is_empty() {
                    return Err(Error::Invalid("rectangles need dimension >= 2".into()));
                }
                for s in sides {
                    s.validate()?;
                }
                if self.bc == Boundary::Robin {
                    return Err(Error::Invalid("Robin conditions apply to the Robin square only".into()));
                }
            }
            BilliardKind::RobinSquare { sigma } => {
                if !(*sigma >= 0.0) || !sigma.is_finite() {
                    return Err(Error::Invalid("Robin parameter must be finite and >= 0".into()));
                }
                if self.bc != Boundary::Robin {
                    return Err(Error::Invalid("the Robin square carries the Robin condition".into()));
                }
            }
            BilliardKind::Disk { d } => {
                if !(2..=3).contains(d) {
                    return Err(Error::Unsupported("disk modes are implemented for d = 2, 3".into()));
                }
                if !matches!(self.bc, Boundary::Dirichlet | Boundary::Neumann) {
                    return Err(Error::Invalid("disks take Dirichlet or Neumann conditions".into()));
                }
            }
            _ => {
                if !matches!(self.bc, Boundary::Dirichlet | Boundary::Neumann) {
                    return Err(Error::Invalid("triangles take Dirichlet or Neumann conditions".into()));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            BilliardKind::Rectangle { sides } => sides.len() + 1,
            BilliardKind::Disk { d } => *d,
            _ => 2,
        }
    }

    /// Side lengths l_1..l_d (last equals 1) for rectangles and the Robin square.
    pub fn side_lengths(&self) -> Vec<f64> {
        match &self.kind {
            BilliardKind::Rectangle { sides } => {
                sides.iter().map(|s| s.value().sqrt()).chain(std::iter::once(1.0)).collect()
            }
            _ => vec![1.0; self.dim()],
        }
    }

    pub fn polygon_kind(&self) -> Option<PolygonKind> {
        match self.kind {
            BilliardKind::Rectangle { .. } => Some(PolygonKind::Rectangle),
            BilliardKind::IsoTriangle => Some(PolygonKind::Iso),
            BilliardKind::EquiTriangle => Some(PolygonKind::Equi),
            BilliardKind::HemiTriangle => Some(PolygonKind::Hemi),
            _ => None,
        }
    }

    pub fn is_rational_rectangle(&self) -> bool {
        matches!(&self.kind, BilliardKind::Rectangle { sides } if sides.iter().all(|s| s.as_ratio().is_some()))
    }

    /// Integer quadratic form indexing the eigenvalues, when the spectrum is a lattice shell.
    ///
    /// Rectangles: lambda = pi^2 Q^int(N) / p. Iso: lambda = pi^2 (m^2 + n^2).
    /// Equi and hemi: m^2 + 3 n^2 = 4 mu with lambda = 16 pi^2 mu / 9.
    pub fn shell_form(&self) -> Option<QuadraticForm> {
        match &self.kind {
            BilliardKind::Rectangle { sides } => {
                let ratios: Option<Vec<Ratio<i64>>> = sides.iter().map(|s| s.as_ratio()).collect();
                QuadraticForm::rectangle(&ratios?).ok()
            }
            BilliardKind::IsoTriangle => Some(QuadraticForm::circle()),
            BilliardKind::EquiTriangle | BilliardKind::HemiTriangle => QuadraticForm::integer(&[1, 3]).ok(),
            _ => None,
        }
    }

    /// Shell value of the form for a given eigenvalue datum mu.
    pub fn shell_value(&self, mu: i64) -> i64 {
        match self.kind {
            BilliardKind::EquiTriangle | BilliardKind::HemiTriangle => 4 * mu,
            _ => mu,
        }
    }

    /// Eigenvalue attached to a shell datum mu.
    pub fn lambda_of_mu(&self, mu: i64) -> Result<f64> {
        match &self.kind {
            BilliardKind::Rectangle { .. } => {
                let f = self
                    .shell_form()
                    .ok_or_else(|| Error::Invalid("irrational rectangles have no shell datum".into()))?;
                Ok(PI * PI * mu as f64 / f.scale() as f64)
            }
            BilliardKind::IsoTriangle => Ok(PI * PI * mu as f64),
            BilliardKind::EquiTriangle | BilliardKind::HemiTriangle => Ok(16.0 * PI * PI * mu as f64 / 9.0),
            _ => Err(Error::Invalid("this billiard has no shell datum".into())),
        }
    }

    /// Vertices of planar polygonal billiards, counter-clockwise.
    pub fn vertices(&self) -> Option<Vec<[f64; 2]>> {
        match &self.kind {
            BilliardKind::Rectangle { .. } | BilliardKind::RobinSquare { .. } if self.dim() == 2 => {
                let l = self.side_lengths()[0];
                Some(vec![[0.0, 0.0], [l, 0.0], [l, 1.0], [0.0, 1.0]])
            }
            BilliardKind::IsoTriangle => Some(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]),
            BilliardKind::EquiTriangle => Some(vec![[0.0, 0.0], [1.0, 0.0], [0.5, 0.5 * SQRT3]]),
            BilliardKind::HemiTriangle => Some(vec![[0.5, 0.0], [1.0, 0.0], [0.5, 0.5 * SQRT3]]),
            _ => None,
        }
    }

    /// Closed-domain membership with tolerance `tol`.
    pub fn contains(&self, z: &[f64], tol: f64) -> bool {
        match &self.kind {
            BilliardKind::Disk { .. } => z.iter().map(|x| x * x).sum::<f64>().sqrt() <= 1.0 + tol,
            BilliardKind::Rectangle { .. } | BilliardKind::RobinSquare { .. } => z
                .iter()
                .zip(self.side_lengths())
                .all(|(&x, l)| x >= -tol && x <= l + tol),
            _ => {
                let v = self.vertices().expect("polygon vertices");
                point_in_convex(&v, [z[0], z[1]], tol)
            }
        }
    }

    /// `count` boundary samples spread over all faces or sides (deterministic).
    pub fn boundary_samples(&self, count: usize) -> Vec<BoundaryPoint> {
        match &self.kind {
            BilliardKind::Disk { d } => sphere_points(*d, count)
                .into_iter()
                .map(|p| BoundaryPoint { z: p.clone(), normal: p })
                .collect(),
            BilliardKind::Rectangle { .. } | BilliardKind::RobinSquare { .. } if self.dim() > 2 => {
                let d = self.dim();
                let l = self.side_lengths();
                let mut rng = ChaCha8Rng::seed_from_u64(0xB0DA);
                (0..count)
                    .map(|i| {
                        let face = i % (2 * d);
                        let axis = face / 2;
                        let hi = face % 2 == 1;
                        let mut z: Vec<f64> = l.iter().map(|&lj| rng.random_range(0.0..lj)).collect();
                        z[axis] = if hi { l[axis] } else { 0.0 };
                        let mut normal = vec![0.0; d];
                        normal[axis] = if hi { 1.0 } else { -1.0 };
                        BoundaryPoint { z, normal }
                    })
                    .collect()
            }
            _ => {
                let v = self.vertices().expect("polygon vertices");
                let k = v.len();
                let per = count.div_ceil(k);
                let mut out = Vec::with_capacity(per * k);
                for i in 0..k {
                    let (a, b) = (v[i], v[(i + 1) % k]);
                    let e = [b[0] - a[0], b[1] - a[1]];
                    let len = (e[0] * e[0] + e[1] * e[1]).sqrt();
                    let normal = vec![e[1] / len, -e[0] / len];
                    for j in 0..per {
                        let t = (j as f64 + 0.5) / per as f64;
                        out.push(BoundaryPoint {
                            z: vec![a[0] + t * e[0], a[1] + t * e[1]],
                            normal: normal.clone(),
                        });
                    }
                }
                out
            }
        }
    }

    /// Seeded uniform interior samples.
    pub fn interior_samples(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.dim();
        let (lo, hi): (Vec<f64>, Vec<f64>) = match &self.kind {
            BilliardKind::Disk { .. } => (vec![-1.0; d], vec![1.0; d]),
            _ => (vec![0.0; d], self.side_lengths()),
        };
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let z: Vec<f64> = lo.iter().zip(&hi).map(|(&a, &b)| rng.random_range(a..b)).collect();
            if self.contains(&z, -1e-9) {
                out.push(z);
            }
        }
        out
    }
}

fn point_in_convex(v: &[[f64; 2]], z: [f64; 2], tol: f64) -> bool {
    let k = v.len();
    (0..k).all(|i| {
        let (a, b) = (v[i], v[(i + 1) % k]);
        let e = [b[0] - a[0], b[1] - a[1]];
        let len = (e[0] * e[0] + e[1] * e[1]).sqrt();
        (e[0] * (z[1] - a[1]) - e[1] * (z[0] - a[0])) / len >= -tol
    })
}

fn sphere_points(d: usize, count: usize) -> Vec<Vec<f64>> {
    if d == 2 {
        (0..count)
            .map(|i| {
                let t = 2.0 * PI * (i as f64 + 0.5) / count as f64;
                vec![t.cos(), t.sin()]
            })
            .collect()
    } else {
        let golden = PI * (3.0 - 5f64.sqrt());
        (0..count)
            .map(|i| {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
                let r = (1.0 - z * z).sqrt();
                let t = golden * i as f64;
                vec![r * t.cos(), r * t.sin(), z]
            })
            .collect()
    }
}

/// Eigenvalue with its integer shell datum when one exists.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalue {
    pub lambda: f64,
    pub mu: Option<i64>,
}

fn require(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Invalid(msg.into()))
    }
}

/// Exact eigenvalue of a basis index.
///
/// Rectangles: N in Z^d (signs per BC). Triangles: (m, n). Disk: (l, n) or (l, n, m). Robin: (m, n).
pub fn eigenvalue_of(spec: &BilliardSpec, index: &[i64]) -> Result<Eigenvalue> {
    spec.validate()?;
    match &spec.kind {
        BilliardKind::Rectangle { .. } => {
            require(index.len() == spec.dim(), "index dimension mismatch")?;
            match spec.bc {
                Boundary::Dirichlet => require(index.iter().all(|&n| n >= 1), "Dirichlet indices are >= 1")?,
                Boundary::Neumann => require(index.iter().all(|&n| n >= 0), "Neumann indices are >= 0")?,
                _ => {}
            }
            let l2: Vec<f64> = spec.side_lengths().iter().map(|l| l * l).collect();
            let lambda = PI * PI * index.iter().zip(&l2).map(|(&n, &l)| (n * n) as f64 / l).sum::<f64>();
            let mu = match spec.shell_form() {
                Some(f) => Some(f.eval_int(index)?),
                None => None,
            };
            Ok(Eigenvalue { lambda, mu })
        }
        BilliardKind::IsoTriangle => {
            require(index.len() == 2, "triangle indices are pairs")?;
            let min = if spec.bc == Boundary::Dirichlet { 1 } else { 0 };
            require(index.iter().all(|&n| n >= min), "index outside the boundary-condition set")?;
            let mu = index[0] * index[0] + index[1] * index[1];
            Ok(Eigenvalue { lambda: PI * PI * mu as f64, mu: Some(mu) })
        }
        BilliardKind::EquiTriangle | BilliardKind::HemiTriangle => {
            require(index.len() == 2, "triangle indices are pairs")?;
            let (m, n) = (index[0], index[1]);
            let ok = match (&spec.kind, spec.bc) {
                (BilliardKind::EquiTriangle, Boundary::Dirichlet) => m >= 0 && n >= 1,
                (BilliardKind::HemiTriangle, Boundary::Dirichlet) => m >= 1 && n >= 1,
                _ => m >= 0 && n >= 0,
            };
            require(ok, "index outside the boundary-condition set")?;
            let four_mu = m * m + 3 * n * n;
            require(four_mu % 4 == 0, "m and n must have equal parity")?;
            let mu = four_mu / 4;
            Ok(Eigenvalue { lambda: 16.0 * PI * PI * mu as f64 / 9.0, mu: Some(mu) })
        }
        BilliardKind::Disk { d } => {
            require(index.len() == 2 || index.len() == 3, "disk indices are (l, n) or (l, n, m)")?;
            require(index[0] >= 0, "angular degree must be >= 0")?;
            let l = index[0] as usize;
            let n = usize::try_from(index[1]).map_err(|_| Error::Invalid("radial index must be >= 0".into()))?;
            let mode = disk_mode(*d, l, n, spec.bc)?;
            Ok(Eigenvalue { lambda: mode.frequency * mode.frequency, mu: None })
        }
        BilliardKind::RobinSquare { sigma } => {
            require(index.len() == 2 && index.iter().all(|&n| n >= 0), "Robin indices are pairs >= 0")?;
            let km = robin_frequency(*sigma, index[0] as usize)?;
            let kn = robin_frequency(*sigma, index[1] as usize)?;
            Ok(Eigenvalue { lambda: km * km + kn * kn, mu: None })
        }
    }
}

/// Value of a basis function: scalar, or the (symmetric, antisymmetric) pair of the equilateral triangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisValue {
    Scalar(f64),
    Pair { sym: f64, anti: f64 },
}

/// Expansion coefficient: scalar, or a pair for equilateral (sym, anti) and periodic (cos, sin) terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Coefficient {
    Scalar(f64),
    Pair { sym: f64, anti: f64 },
}

impl Coefficient {
    pub fn scaled(self, c: f64) -> Self {
        match self {
            Coefficient::Scalar(a) => Coefficient::Scalar(c * a),
            Coefficient::Pair { sym, anti } => Coefficient::Pair { sym: c * sym, anti: c * anti },
        }
    }

    pub fn magnitude(self) -> f64 {
        match self {
            Coefficient::Scalar(a) => a.abs(),
            Coefficient::Pair { sym, anti } => sym.abs() + anti.abs(),
        }
    }
}

/// One term of an eigenfunction expansion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionTerm {
    pub index: Vec<i64>,
    pub coeff: Coefficient,
}

/// Finite expansion over the eigenbasis at one eigenvalue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenExpansion {
    pub spec: BilliardSpec,
    pub lambda: f64,
    pub mu: Option<i64>,
    pub terms: Vec<ExpansionTerm>,
}

fn wave_for(bc: Boundary) -> Wave1 {
    if bc == Boundary::Dirichlet {
        Wave1::Sin
    } else {
        Wave1::Cos
    }
}

/// Product terms in the original coordinates for wave(k * (x - shift) * orientation).
fn shifted_factors(bc: Boundary, m: i64, n: i64, first: Wave1) -> Vec<Factor> {
    let a = TRI_FREQ_2 * n as f64;
    let b = TRI_FREQ_1 * m as f64;
    vec![Factor::new(first, b, -0.5 * b), Factor::new(wave_for(bc), -a, 0.5 * SQRT3 * a)]
}

/// Signed products of one-dimensional factors.
type ProductSum = Vec<(f64, Vec<Factor>)>;

/// Products for cos(theta) and sin(theta), theta = sum_j k_j x_j.
fn angle_sum_products(freqs: &[f64]) -> (ProductSum, ProductSum) {
    if freqs.is_empty() {
        return (vec![(1.0, Vec::new())], Vec::new());
    }
    let (head, rest) = (freqs[0], &freqs[1..]);
    let (cr, sr) = angle_sum_products(rest);
    let prefix = |w: Wave1, list: &[(f64, Vec<Factor>)], sign: f64| -> Vec<(f64, Vec<Factor>)> {
        list.iter()
            .map(|(c, fs)| {
                let mut v = vec![Factor::new(w, head, 0.0)];
                v.extend(fs.iter().copied());
                (sign * c, v)
            })
            .collect()
    };
    let mut cos_terms = prefix(Wave1::Cos, &cr, 1.0);
    cos_terms.extend(prefix(Wave1::Sin, &sr, -1.0));
    let mut sin_terms = prefix(Wave1::Sin, &cr, 1.0);
    sin_terms.extend(prefix(Wave1::Cos, &sr, 1.0));
    (cos_terms, sin_terms)
}

/// One-dimensional Robin factor u_k(x) = k cos(kx) + Sigma sin(kx) as amplitude * cos(kx - delta).
fn robin_factor(k: f64, sigma: f64) -> (f64, Factor) {
    if k == 0.0 {
        return (1.0, Factor::new(Wave1::Cos, 0.0, 0.0));
    }
    let amp = (k * k + sigma * sigma).sqrt();
    (amp, Factor::new(Wave1::Cos, k, -sigma.atan2(k)))
}

fn basis_products(spec: &BilliardSpec, index: &[i64], coeff: Coefficient) -> Result<Vec<ProductTerm>> {
    let (c0, c1) = match coeff {
        Coefficient::Scalar(a) => (a, 0.0),
        Coefficient::Pair { sym, anti } => (sym, anti),
    };
    let mut out = Vec::new();
    match &spec.kind {
        BilliardKind::Rectangle { .. } => {
            let l = spec.side_lengths();
            let freqs: Vec<f64> = index.iter().zip(&l).map(|(&n, &lj)| PI * n as f64 / lj).collect();
            match spec.bc {
                Boundary::Periodic => {
                    let (cos_t, sin_t) = angle_sum_products(&freqs);
                    for (c, f) in cos_t {
                        out.push(ProductTerm { coeff: c0 * c, factors: f });
                    }
                    for (c, f) in sin_t {
                        out.push(ProductTerm { coeff: c1 * c, factors: f });
                    }
                }
                bc => out.push(ProductTerm {
                    coeff: c0,
                    factors: freqs.iter().map(|&k| Factor::new(wave_for(bc), k, 0.0)).collect(),
                }),
            }
        }
        BilliardKind::IsoTriangle => {
            let w = wave_for(spec.bc);
            out.push(ProductTerm {
                coeff: c0,
                factors: vec![Factor::new(w, PI * index[0] as f64, 0.0), Factor::new(w, PI * index[1] as f64, 0.0)],
            });
        }
        BilliardKind::EquiTriangle => {
            out.push(ProductTerm { coeff: c0, factors: shifted_factors(spec.bc, index[0], index[1], Wave1::Cos) });
            out.push(ProductTerm { coeff: c1, factors: shifted_factors(spec.bc, index[0], index[1], Wave1::Sin) });
        }
        BilliardKind::HemiTriangle => {
            out.push(ProductTerm {
                coeff: c0,
                factors: shifted_factors(spec.bc, index[0], index[1], wave_for(spec.bc)),
            });
        }
        BilliardKind::RobinSquare { sigma } => {
            let (am, fm) = robin_factor(robin_frequency(*sigma, index[0] as usize)?, *sigma);
            let (an, fn_) = robin_factor(robin_frequency(*sigma, index[1] as usize)?, *sigma);
            out.push(ProductTerm { coeff: c0 * am * an, factors: vec![fm, fn_] });
        }
        BilliardKind::Disk { .. } => return Err(Error::Invalid("disk modes are not trigonometric".into())),
    }
    Ok(out)
}

/// Evaluates one basis function (pair for the equilateral triangle) at z in original coordinates.
pub fn basis_eval(spec: &BilliardSpec, index: &[i64], z: &[f64]) -> Result<BasisValue> {
    match &spec.kind {
        BilliardKind::Disk { d } => {
            let l = index[0] as usize;
            let m = index.get(2).copied().unwrap_or(l as i64);
            let mode = disk_mode(*d, l, index[1] as usize, spec.bc)?;
            Ok(BasisValue::Scalar(DiskTerm { mode, m, coeff: 1.0 }.value(z)))
        }
        BilliardKind::EquiTriangle => {
            let sym = TrigField::new(2, basis_products(spec, index, Coefficient::Pair { sym: 1.0, anti: 0.0 })?);
            let anti = TrigField::new(2, basis_products(spec, index, Coefficient::Pair { sym: 0.0, anti: 1.0 })?);
            Ok(BasisValue::Pair { sym: sym.value_at(z), anti: anti.value_at(z) })
        }
        _ => {
            let f = TrigField::new(spec.dim(), basis_products(spec, index, Coefficient::Scalar(1.0))?);
            Ok(BasisValue::Scalar(f.value_at(z)))
        }
    }
}

/// Disk mode: frequency (root) and radial profile rho^{1-d/2} J_{d/2+l-1}(k rho).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiskMode {
    pub d: usize,
    pub l: usize,
    pub n: usize,
    pub dirichlet: bool,
    pub frequency: f64,
}

impl DiskMode {
    fn order(&self) -> f64 {
        0.5 * self.d as f64 + self.l as f64 - 1.0
    }

    /// Radial profile and its first two derivatives at rho.
    ///
    /// Written as k^nu rho^l G_nu(k rho) with G_mu(r) = r^{-mu} J_mu(r) and G_mu' = -r G_{mu+1}.
    pub fn profile(&self, rho: f64) -> [f64; 3] {
        let (k, nu, l) = (self.frequency, self.order(), self.l as i32);
        if k == 0.0 {
            return [1.0, 0.0, 0.0];
        }
        let x = k * rho;
        let g0 = scaled_bessel(nu, x);
        let g1 = scaled_bessel(nu + 1.0, x);
        let g2 = scaled_bessel(nu + 2.0, x);
        let kn = k.powf(nu);
        let p = |e: i32| if e < 0 { 0.0 } else { rho.powi(e) };
        let lf = l as f64;
        let r0 = kn * p(l) * g0;
        let r1 = kn * (if l >= 1 { lf * p(l - 1) * g0 } else { 0.0 } - k * k * p(l + 1) * g1);
        let r2 = kn
            * (if l >= 2 { lf * (lf - 1.0) * p(l - 2) * g0 } else { 0.0 }
                - (2.0 * lf + 1.0) * k * k * p(l) * g1
                + k.powi(4) * p(l + 2) * g2);
        [r0, r1, r2]
    }

    /// Residual of the radial equation R'' + (d-1)/rho R' - l(l+d-2)/rho^2 R + k^2 R at rho.
    pub fn radial_equation_residual(&self, rho: f64) -> f64 {
        let [r0, r1, r2] = self.profile(rho);
        let (d, l) = (self.d as f64, self.l as f64);
        r2 + (d - 1.0) / rho * r1 - l * (l + d - 2.0) / (rho * rho) * r0 + self.frequency.powi(2) * r0
    }
}

/// n-th Dirichlet (root of J_{d/2+l-1}) or Neumann (root of the profile derivative) disk frequency.
///
/// Neumann uses l J_nu(x) - x J_{nu+1}(x), proportional to the profile derivative; l = 0, n = 0 is the constant mode.
pub fn disk_mode(d: usize, l: usize, n: usize, bc: Boundary) -> Result<DiskMode> {
    if !(2..=3).contains(&d) {
        return Err(Error::Unsupported("disk modes are implemented for d = 2, 3".into()));
    }
    let nu = 0.5 * d as f64 + l as f64 - 1.0;
    let dirichlet = match bc {
        Boundary::Dirichlet => true,
        Boundary::Neumann => false,
        _ => return Err(Error::Invalid("disk modes need Dirichlet or Neumann".into())),
    };
    if n == 0 {
        if !dirichlet && l == 0 {
            return Ok(DiskMode { d, l, n, dirichlet, frequency: 0.0 });
        }
        return Err(Error::Invalid("radial index starts at 1".into()));
    }
    let limit = nu + (n as f64 + 3.0) * PI + 10.0;
    let frequency = if dirichlet {
        let f = |x: f64| bessel_j(nu, x);
        let (a, b) = nth_sign_change(f, 1e-3, 0.05, limit, n)?;
        let x = bisect(f, a, b, 1e-15)?;
        newton_polish(f, |x| bessel_j_prime(nu, x), x, a, b)
    } else {
        let lf = l as f64;
        let f = |x: f64| lf * bessel_j(nu, x) - x * bessel_j(nu + 1.0, x);
        let df = |x: f64| lf * bessel_j_prime(nu, x) - bessel_j(nu + 1.0, x) - x * bessel_j_prime(nu + 1.0, x);
        let (a, b) = nth_sign_change(f, 1e-3, 0.05, limit, n)?;
        let x = bisect(f, a, b, 1e-15)?;
        newton_polish(f, df, x, a, b)
    };
    Ok(DiskMode { d, l, n, dirichlet, frequency })
}

/// Associated Legendre P_l^m(x) with first and second x-derivatives, |x| < 1.
fn legendre(l: usize, m: usize, x: f64) -> [f64; 3] {
    let p_at = |deg: usize| -> f64 {
        if deg < m {
            return 0.0;
        }
        let s = (1.0 - x * x).sqrt();
        let mut pmm = 1.0;
        for i in 0..m {
            pmm *= -((2 * i + 1) as f64) * s;
        }
        if deg == m {
            return pmm;
        }
        let mut p_prev = pmm;
        let mut p = x * (2 * m + 1) as f64 * pmm;
        for ll in m + 2..=deg {
            let next = ((2 * ll - 1) as f64 * x * p - (ll + m - 1) as f64 * p_prev) / (ll - m) as f64;
            p_prev = p;
            p = next;
        }
        p
    };
    let deriv = |deg: usize| -> f64 {
        if deg == 0 {
            return 0.0;
        }
        (deg as f64 * x * p_at(deg) - (deg + m) as f64 * p_at(deg - 1)) / (x * x - 1.0)
    };
    let p = p_at(l);
    let dp = deriv(l);
    let dprev = if l >= 1 { deriv(l - 1) } else { 0.0 };
    let lf = l as f64;
    let d2 = if l == 0 {
        0.0
    } else {
        (lf * p + lf * x * dp - (l + m) as f64 * dprev - 2.0 * x * dp) / (x * x - 1.0)
    };
    [p, dp, d2]
}

/// One disk term: coefficient times the mode times its angular harmonic of order m.
///
/// Planar: m >= 0 gives cos(l theta), m < 0 gives sin(l theta). Spatial: real spherical harmonic (l, m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiskTerm {
    pub mode: DiskMode,
    pub m: i64,
    pub coeff: f64,
}

impl DiskTerm {
    /// Angular harmonic value and its spherical Laplacian.
    pub(crate) fn harmonic(&self, z: &[f64]) -> (f64, f64) {
        let l = self.mode.l as f64;
        if self.mode.d == 2 {
            let th = z[1].atan2(z[0]);
            let y = if self.m >= 0 { (l * th).cos() } else { (l * th).sin() };
            (y, -l * l * y)
        } else {
            let rho = (z[0] * z[0] + z[1] * z[1] + z[2] * z[2]).sqrt();
            let x = z[2] / rho;
            let ph = z[1].atan2(z[0]);
            let am = self.m.unsigned_abs() as usize;
            let [p, dp, d2p] = legendre(self.mode.l, am, x);
            let trig = if self.m >= 0 { (am as f64 * ph).cos() } else { (am as f64 * ph).sin() };
            let amf = am as f64;
            let lap = ((1.0 - x * x) * d2p - 2.0 * x * dp - amf * amf * p / (1.0 - x * x)) * trig;
            (p * trig, lap)
        }
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        let rho = z.iter().map(|x| x * x).sum::<f64>().sqrt();
        if rho == 0.0 {
            return if self.mode.l == 0 { self.coeff * self.mode.profile(0.0)[0] } else { 0.0 };
        }
        self.coeff * self.mode.profile(rho)[0] * self.harmonic(z).0
    }

    /// Laplacian from the radial derivatives and the angular Laplacian.
    pub fn laplacian(&self, z: &[f64]) -> f64 {
        let rho = z.iter().map(|x| x * x).sum::<f64>().sqrt();
        let [r0, r1, r2] = self.mode.profile(rho);
        let (y, lap_s) = self.harmonic(z);
        let d = self.mode.d as f64;
        self.coeff * ((r2 + (d - 1.0) / rho * r1) * y + r0 / (rho * rho) * lap_s)
    }

    /// Radial derivative at z.
    pub fn radial_derivative(&self, z: &[f64]) -> f64 {
        let rho = z.iter().map(|x| x * x).sum::<f64>().sqrt();
        self.coeff * self.mode.profile(rho)[1] * self.harmonic(z).0
    }

    /// Planar jet through J_l(k rho) e^{i l theta} = (2 pi i^l)^{-1} integral e^{i k z.xi} e^{i l phi} dphi.
    fn jet2(&self, z: [f64; 2]) -> Jet2 {
        use num_complex::Complex64;
        let k = self.mode.frequency;
        let l = self.mode.l as i64;
        let r = (z[0] * z[0] + z[1] * z[1]).sqrt();
        let nodes = 4 * (l as usize + (k * r).ceil() as usize + 16);
        let w = 2.0 * PI / nodes as f64;
        let i = Complex64::i();
        let mut acc = [Complex64::new(0.0, 0.0); 10];
        for q in 0..nodes {
            let ph = q as f64 * w;
            let (s, c) = ph.sin_cos();
            let base = Complex64::from_polar(1.0, k * (z[0] * c + z[1] * s) + l as f64 * ph);
            let (a, b) = (i * k * c, i * k * s);
            let f = [Complex64::new(1.0, 0.0), a, b, a * a, a * b, b * b, a * a * a, a * a * b, a * b * b, b * b * b];
            for (slot, m) in acc.iter_mut().zip(f) {
                *slot += base * m;
            }
        }
        let norm = Complex64::i().powi(l as i32) * (2.0 * PI) / w;
        let take = |v: Complex64| {
            let c = v / norm;
            if self.m >= 0 {
                c.re
            } else {
                c.im
            }
        };
        let s = self.coeff;
        Jet2 {
            value: s * take(acc[0]),
            grad: [s * take(acc[1]), s * take(acc[2])],
            hess: [s * take(acc[3]), s * take(acc[4]), s * take(acc[5])],
            third: [s * take(acc[6]), s * take(acc[7]), s * take(acc[8]), s * take(acc[9])],
        }
    }
}

/// Sum of disk terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiskField {
    pub d: usize,
    pub terms: Vec<DiskTerm>,
}

impl DiskField {
    pub fn value(&self, z: &[f64]) -> f64 {
        let mut acc = NeumaierSum::new();
        for t in &self.terms {
            acc.add(t.value(z));
        }
        acc.value()
    }

    pub fn laplacian(&self, z: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.laplacian(z)).sum()
    }

    pub fn radial_derivative(&self, z: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.radial_derivative(z)).sum()
    }
}

impl Field2 for DiskField {
    fn jet(&self, z: [f64; 2]) -> Jet2 {
        assert_eq!(self.d, 2, "planar jets need a planar disk");
        let mut out = Jet2::default();
        for t in &self.terms {
            out.add_scaled(&t.jet2(z), 1.0);
        }
        out
    }

    fn value(&self, z: [f64; 2]) -> f64 {
        DiskField::value(self, &z)
    }
}

/// Expansion compiled to an evaluable field in original coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum CompiledField {
    Trig(TrigField),
    Disk(DiskField),
}

impl CompiledField {
    pub fn value(&self, z: &[f64]) -> f64 {
        match self {
            CompiledField::Trig(t) => t.value_at(z),
            CompiledField::Disk(d) => d.value(z),
        }
    }

    pub fn laplacian(&self, z: &[f64]) -> f64 {
        match self {
            CompiledField::Trig(t) => t.laplacian(z),
            CompiledField::Disk(d) => d.laplacian(z),
        }
    }

    /// Normal derivative along `normal` (radial for disks).
    pub fn normal_derivative(&self, z: &[f64], normal: &[f64]) -> f64 {
        match self {
            CompiledField::Trig(t) => t.gradient(z).iter().zip(normal).map(|(g, n)| g * n).sum(),
            CompiledField::Disk(d) => d.radial_derivative(z),
        }
    }

    pub fn trig(&self) -> Option<&TrigField> {
        match self {
            CompiledField::Trig(t) => Some(t),
            CompiledField::Disk(_) => None,
        }
    }
}

impl Field2 for CompiledField {
    fn jet(&self, z: [f64; 2]) -> Jet2 {
        match self {
            CompiledField::Trig(t) => t.jet(z),
            CompiledField::Disk(d) => d.jet(z),
        }
    }

    fn value(&self, z: [f64; 2]) -> f64 {
        CompiledField::value(self, &z)
    }
}

impl EigenExpansion {
    /// Builds and validates an expansion: every index must be admissible with eigenvalue `lambda`.
    pub fn new(spec: BilliardSpec, terms: Vec<ExpansionTerm>) -> Result<Self> {
        spec.validate()?;
        let first = terms.first().ok_or_else(|| Error::Empty("expansion has no terms".into()))?;
        let ev = eigenvalue_of(&spec, &first.index)?;
        let e = Self { spec, lambda: ev.lambda, mu: ev.mu, terms };
        e.check_indices()?;
        Ok(e)
    }

    /// Exact membership of every index in the eigenvalue's shell.
    pub fn check_indices(&self) -> Result<()> {
        for t in &self.terms {
            let ev = eigenvalue_of(&self.spec, &t.index)?;
            let same = match (ev.mu, self.mu) {
                (Some(a), Some(b)) => a == b,
                _ => (ev.lambda - self.lambda).abs() <= 1e-12 * self.lambda.max(1.0),
            };
            if !same {
                return Err(Error::Invalid(format!("index {:?} lies on a different eigenvalue", t.index)));
            }
            if matches!(self.spec.kind, BilliardKind::EquiTriangle) || self.spec.bc == Boundary::Periodic {
                continue;
            }
            if matches!(t.coeff, Coefficient::Pair { .. }) {
                return Err(Error::Invalid("pair coefficients apply to equilateral or periodic bases".into()));
            }
        }
        Ok(())
    }

    pub fn compile(&self) -> Result<CompiledField> {
        match &self.spec.kind {
            BilliardKind::Disk { d } => {
                let mut terms = Vec::with_capacity(self.terms.len());
                for t in &self.terms {
                    let l = t.index[0] as usize;
                    let mode = disk_mode(*d, l, t.index[1] as usize, self.spec.bc)?;
                    let m = t.index.get(2).copied().unwrap_or(l as i64);
                    let c = match t.coeff {
                        Coefficient::Scalar(c) => c,
                        Coefficient::Pair { .. } => return Err(Error::Invalid("disk coefficients are scalar".into())),
                    };
                    terms.push(DiskTerm { mode, m, coeff: c });
                }
                Ok(CompiledField::Disk(DiskField { d: *d, terms }))
            }
            _ => {
                let mut products = Vec::new();
                for t in &self.terms {
                    products.extend(basis_products(&self.spec, &t.index, t.coeff)?);
                }
                Ok(CompiledField::Trig(TrigField::new(self.spec.dim(), products)))
            }
        }
    }

    /// Value at z with compensated summation in term order.
    pub fn eval(&self, z: &[f64]) -> Result<f64> {
        Ok(self.compile()?.value(z))
    }

    /// Samples the expansion on a grid.
    pub fn sample(&self, grid: &GridSpec) -> Result<FieldGrid> {
        let f = self.compile()?;
        let meta = GridMeta { description: "eigenfunction".into(), eigenvalue: Some(self.lambda), ..GridMeta::default() };
        Ok(FieldGrid::from_fn(grid.clone(), meta, |z| f.value(z)))
    }
}

/// Independent naive re-summation used as an oracle: per-term basis evaluation in double precision.
pub fn naive_eval(e: &EigenExpansion, z: &[f64]) -> Result<f64> {
    let mut s = 0.0;
    for t in &e.terms {
        s += match (basis_eval(&e.spec, &t.index, z)?, t.coeff) {
            (BasisValue::Scalar(v), Coefficient::Scalar(c)) => c * v,
            (BasisValue::Pair { sym, anti }, Coefficient::Pair { sym: cs, anti: ca }) => cs * sym + ca * anti,
            (BasisValue::Scalar(v), Coefficient::Pair { sym, .. }) => sym * v,
            (BasisValue::Pair { sym, .. }, Coefficient::Scalar(c)) => c * sym,
        };
    }
    Ok(s)
}

/// Rotation by 2 pi k / 3 about the apex of the shifted triangle frame.
pub fn apex_rotation(k: usize, w: [f64; 2]) -> [f64; 2] {
    let a = 2.0 * PI * (k % 3) as f64 / 3.0;
    let (s, c) = a.sin_cos();
    [c * w[0] - s * w[1], s * w[0] + c * w[1]]
}

/// Number of sign-flip images of an index: 2^{number of nonzero coordinates}.
pub fn orbit_size(index: &[i64]) -> f64 {
    (1u64 << index.iter().filter(|&&n| n != 0).count()) as f64
}

/// Projection coefficient sum_k u_N(rho^k y) for triangle bases, with y given in original coordinates.
///
/// Rectangles and the iso triangle use the direct (or antisymmetrized) basis value.
pub fn projected_coefficient(spec: &BilliardSpec, index: &[i64], y: &[f64]) -> Result<Coefficient> {
    match spec.kind {
        BilliardKind::EquiTriangle | BilliardKind::HemiTriangle => {
            let ybar = to_shifted([y[0], y[1]]);
            let (mut s, mut a) = (0.0, 0.0);
            for k in 0..3 {
                let p = from_shifted(apex_rotation(k, ybar));
                match basis_eval(spec, index, &p)? {
                    BasisValue::Pair { sym, anti } => {
                        s += sym;
                        a += anti;
                    }
                    BasisValue::Scalar(v) => s += v,
                }
            }
            Ok(if matches!(spec.kind, BilliardKind::EquiTriangle) {
                Coefficient::Pair { sym: s, anti: a }
            } else {
                Coefficient::Scalar(s)
            })
        }
        BilliardKind::IsoTriangle => {
            let v = |n: &[i64]| -> Result<f64> {
                match basis_eval(spec, n, y)? {
                    BasisValue::Scalar(v) => Ok(v),
                    BasisValue::Pair { sym, .. } => Ok(sym),
                }
            };
            let swapped = [index[1], index[0]];
            let sign = if spec.bc == Boundary::Dirichlet { -1.0 } else { 1.0 };
            Ok(Coefficient::Scalar(v(index)? + sign * v(&swapped)?))
        }
        _ => match basis_eval(spec, index, y)? {
            BasisValue::Scalar(v) => Ok(Coefficient::Scalar(v)),
            BasisValue::Pair { sym, anti } => Ok(Coefficient::Pair { sym, anti }),
        },
    }
}

/// Boundary-condition filtered shell indices for a shell datum mu.
pub fn filtered_indices(spec: &BilliardSpec, mu: i64) -> Result<(LatticeShell, Vec<Vec<i64>>)> {
    let form = spec
        .shell_form()
        .ok_or_else(|| Error::Unsupported("this billiard has no lattice shell".into()))?;
    let shell = enumerate_shell(&form, spec.shell_value(mu))?;
    let keep: Vec<Vec<i64>> = shell
        .points
        .iter()
        .filter(|n| eigenvalue_of(spec, n).is_ok())
        .cloned()
        .collect();
    Ok((shell, keep))
}

/// Random eigenfunction in the eigenspace of a shell datum, built from the structural constraints of each basis.
pub fn random_expansion(spec: &BilliardSpec, mu: i64, seed: u64) -> Result<EigenExpansion> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (_, idx) = filtered_indices(spec, mu)?;
    if idx.is_empty() {
        return Err(Error::Empty(format!("no admissible indices at mu = {mu}")));
    }
    let terms: Vec<ExpansionTerm> = match spec.kind {
        BilliardKind::EquiTriangle | BilliardKind::HemiTriangle | BilliardKind::IsoTriangle => {
            let anchors: Vec<(Vec<f64>, f64)> = spec
                .interior_samples(3, rng.random())
                .into_iter()
                .map(|y| (y, rng.random_range(-1.0..1.0)))
                .collect();
            idx.iter()
                .map(|n| {
                    let mut acc = Coefficient::Pair { sym: 0.0, anti: 0.0 };
                    for (y, w) in &anchors {
                        let c = projected_coefficient(spec, n, y)?.scaled(*w);
                        acc = add_coeff(acc, c);
                    }
                    let acc = match (spec.kind.clone(), acc) {
                        (BilliardKind::EquiTriangle, a) => a,
                        (_, Coefficient::Pair { sym, .. }) => Coefficient::Scalar(sym),
                        (_, a) => a,
                    };
                    Ok(ExpansionTerm { index: n.clone(), coeff: acc })
                })
                .collect::<Result<_>>()?
        }
        _ if spec.bc == Boundary::Periodic => idx
            .iter()
            .map(|n| ExpansionTerm {
                index: n.clone(),
                coeff: Coefficient::Pair { sym: rng.random_range(-1.0..1.0), anti: rng.random_range(-1.0..1.0) },
            })
            .collect(),
        _ => idx
            .iter()
            .map(|n| ExpansionTerm { index: n.clone(), coeff: Coefficient::Scalar(rng.random_range(-1.0..1.0)) })
            .collect(),
    };
    EigenExpansion::new(spec.clone(), terms)
}

fn add_coeff(a: Coefficient, b: Coefficient) -> Coefficient {
    match (a, b) {
        (Coefficient::Pair { sym, anti }, Coefficient::Pair { sym: s, anti: t }) => {
            Coefficient::Pair { sym: sym + s, anti: anti + t }
        }
        (Coefficient::Pair { sym, anti }, Coefficient::Scalar(s)) => Coefficient::Pair { sym: sym + s, anti },
        (Coefficient::Scalar(s), Coefficient::Pair { sym, anti }) => Coefficient::Pair { sym: sym + s, anti },
        (Coefficient::Scalar(s), Coefficient::Scalar(t)) => Coefficient::Scalar(s + t),
    }
}

/// Equilateral Dirichlet orbit mode T_s or T_a for beta >= alpha > 0, as an expansion.
pub fn equi_orbit_mode(alpha: i64, beta: i64, antisymmetric: bool) -> Result<EigenExpansion> {
    if alpha <= 0 || beta < alpha || (antisymmetric && beta == alpha) {
        return Err(Error::Invalid("orbit modes need beta >= alpha > 0 (strict for the antisymmetric mode)".into()));
    }
    let spec = BilliardSpec { kind: BilliardKind::EquiTriangle, bc: Boundary::Dirichlet };
    // (n, m, sign) of the three orbit products.
    let parts: [(i64, i64, f64, f64); 3] = [
        (alpha + beta, alpha - beta, -1.0, -1.0),
        (alpha, 2 * beta + alpha, 1.0, 1.0),
        (beta, 2 * alpha + beta, 1.0, -1.0),
    ];
    let mut terms: Vec<ExpansionTerm> = Vec::new();
    for (n, m, s_sym, s_anti) in parts {
        let (mm, flip) = if m < 0 { (-m, -1.0) } else { (m, 1.0) };
        let coeff = if antisymmetric {
            Coefficient::Pair { sym: 0.0, anti: s_anti * flip }
        } else {
            Coefficient::Pair { sym: s_sym, anti: 0.0 }
        };
        if let Some(t) = terms.iter_mut().find(|t| t.index == [mm, n]) {
            t.coeff = add_coeff(t.coeff, coeff);
        } else {
            terms.push(ExpansionTerm { index: vec![mm, n], coeff });
        }
    }
    EigenExpansion::new(spec, terms)
}

/// Robin frequency k_n in (n pi, (n+1) pi) from (k^2 - S^2) sin k - 2 S k cos k = 0.
///
/// For S = 0 the frequencies are n pi exactly (n = 0 is the constant mode).
pub fn robin_frequency(sigma: f64, n: usize) -> Result<f64> {
    if !(sigma >= 0.0) {
        return Err(Error::Invalid("Robin parameter must be >= 0".into()));
    }
    if sigma == 0.0 {
        return Ok(n as f64 * PI);
    }
    let g = |k: f64| (k * k - sigma * sigma) * k.sin() - 2.0 * sigma * k * k.cos();
    let lo = n as f64 * PI;
    let hi = lo + PI;
    let eps = 1e-9 * hi;
    let k = bisect(g, lo + eps, hi - eps, 4.0 * f64::EPSILON * hi)?;
    let dg = |k: f64| 2.0 * k * k.sin() + (k * k - sigma * sigma) * k.cos() - 2.0 * sigma * k.cos() + 2.0 * sigma * k * k.sin();
    Ok(newton_polish(g, dg, k, lo, hi))
}

/// Frequencies k_0..k_{n_max}.
pub fn robin_frequencies(sigma: f64, n_max: usize) -> Result<Vec<f64>> {
    (0..=n_max).map(|n| robin_frequency(sigma, n)).collect()
}

/// Normalized residual |(k^2 - S^2) sin k - 2 S k cos k| / (k^2 + S^2), the sine of the phase error.
pub fn robin_equation_residual(sigma: f64, k: f64) -> f64 {
    let g = (k * k - sigma * sigma) * k.sin() - 2.0 * sigma * k * k.cos();
    let s = k * k + sigma * sigma;
    if s == 0.0 {
        0.0
    } else {
        g.abs() / s
    }
}

/// Robin-square eigenfunction c0 u_m(x) u_n(y) + c1 u_n(x) u_m(y).
pub fn robin_eigenfunction(sigma: f64, m: usize, n: usize, coeffs: [f64; 2]) -> Result<EigenExpansion> {
    let spec = BilliardSpec::new(BilliardKind::RobinSquare { sigma }, Boundary::Robin)?;
    let mut terms = vec![ExpansionTerm { index: vec![m as i64, n as i64], coeff: Coefficient::Scalar(coeffs[0]) }];
    if m != n {
        terms.push(ExpansionTerm { index: vec![n as i64, m as i64], coeff: Coefficient::Scalar(coeffs[1]) });
    } else if let Coefficient::Scalar(c) = &mut terms[0].coeff {
        *c += coeffs[1];
    }
    EigenExpansion::new(spec, terms)
}

/// PDE and boundary residuals of an expansion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// Stencil residual max |Delta_h u + lambda u| / (lambda max|u|) on the grid.
    pub pde: f64,
    /// Same on the grid with halved step.
    pub pde_fine: f64,
    /// pde / pde_fine, near 4 for second-order convergence.
    pub ratio: f64,
    /// Normalized boundary functional residual.
    pub bc: f64,
}

/// Max |Delta u + lambda u| / (lambda max|u|) over points, with exact second derivatives.
pub fn pde_identity_residual(e: &EigenExpansion, points: &[Vec<f64>]) -> Result<f64> {
    let f = e.compile()?;
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for z in points {
        let u = f.value(z);
        scale = scale.max(u.abs());
        worst = worst.max((f.laplacian(z) + e.lambda * u).abs());
    }
    if scale == 0.0 {
        return Err(Error::Degenerate("field vanishes at every sample".into()));
    }
    Ok(worst / (e.lambda.max(f64::MIN_POSITIVE) * scale))
}

/// Boundary functional residual at samples, normalized by the field scale on the sampled region.
///
/// Dirichlet: |u|. Neumann: |du/dn| / sqrt(lambda). Robin: |cos s du/dn + sin s u| / (cos s sqrt(lambda) + sin s).
/// Periodic: mismatch of value and gradient across opposite faces of the doubled box.
pub fn boundary_residual(e: &EigenExpansion, samples: &[BoundaryPoint], scale_points: &[Vec<f64>]) -> Result<f64> {
    let f = e.compile()?;
    let scale = scale_points
        .iter()
        .chain(samples.iter().map(|b| &b.z))
        .map(|z| f.value(z).abs())
        .fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(Error::Degenerate("field vanishes at every sample".into()));
    }
    let k = e.lambda.sqrt();
    let mut worst: f64 = 0.0;
    for b in samples {
        let r = match (&e.spec.kind, e.spec.bc) {
            (_, Boundary::Dirichlet) => f.value(&b.z).abs(),
            (_, Boundary::Neumann) => f.normal_derivative(&b.z, &b.normal).abs() / k.max(1.0),
            (BilliardKind::RobinSquare { sigma }, Boundary::Robin) => {
                let (s, c) = sigma.atan().sin_cos();
                (c * f.normal_derivative(&b.z, &b.normal) + s * f.value(&b.z)).abs() / (c * k + s)
            }
            (_, Boundary::Periodic) => {
                let axis = b.normal.iter().position(|&n| n != 0.0).expect("face normal");
                let period = 2.0 * e.spec.side_lengths()[axis];
                let mut lo = b.z.clone();
                lo[axis] = 0.0;
                let mut hi = b.z.clone();
                hi[axis] = period;
                let t = f.trig().expect("periodic fields are trigonometric");
                let gv = t.gradient(&lo);
                let gh = t.gradient(&hi);
                let dg = gv.iter().zip(&gh).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                (t.value_at(&lo) - t.value_at(&hi)).abs().max(dg / k.max(1.0))
            }
            _ => return Err(Error::Invalid("boundary condition does not match the billiard".into())),
        };
        worst = worst.max(r);
    }
    Ok(worst / scale)
}

/// Stencil PDE residual with ratio test plus the boundary residual at `boundary_count` samples.
pub fn pde_and_boundary_residual(e: &EigenExpansion, grid: &GridSpec, boundary_count: usize) -> Result<Residuals> {
    if grid.dim() != e.spec.dim() {
        return Err(Error::Invalid("grid dimension does not match the billiard".into()));
    }
    let f = e.compile()?;
    let run = |g: &GridSpec| -> Result<f64> {
        let fg = FieldGrid::from_fn(g.clone(), GridMeta::default(), |z| f.value(z));
        let mask: Vec<bool> = (0..g.len()).map(|k| e.spec.contains(&g.point(&g.unflatten(k)), 1e-12)).collect();
        let (res, scale) = stencil_residual(&fg, e.lambda, Some(&mask))?;
        if scale == 0.0 {
            return Err(Error::Degenerate("field vanishes on the grid".into()));
        }
        Ok(res / (e.lambda * scale))
    };
    let pde = run(grid)?;
    let pde_fine = run(&grid.refined())?;
    let samples = e.spec.boundary_samples(boundary_count);
    let interior = e.spec.interior_samples(200, 0xB111);
    let bc = boundary_residual(e, &samples, &interior)?;
    Ok(Residuals { pde, pde_fine, ratio: if pde_fine > 0.0 { pde / pde_fine } else { f64::INFINITY }, bc })
}

/// Genus of the translation surface of a rational polygon with angles pi m_i / n_i.
pub fn genus_of_polygon(angles: &[Ratio<i64>]) -> Result<i64> {
    if angles.is_empty() {
        return Err(Error::Invalid("polygon needs at least one angle".into()));
    }
    if angles.iter().any(|a| *a.numer() <= 0) {
        return Err(Error::Invalid("angles must be positive".into()));
    }
    let big_n = angles.iter().fold(1i64, |acc, a| acc.lcm(a.denom()));
    let sum = angles
        .iter()
        .fold(Ratio::from_integer(0), |acc, a| acc + Ratio::new(a.numer() - 1, *a.denom()));
    let g = Ratio::from_integer(1) + Ratio::new(big_n, 2) * sum;
    if !g.is_integer() {
        return Err(Error::Invalid(format!("genus {g} is not an integer; angles are inconsistent")));
    }
    Ok(g.to_integer())
}

/// Integer partition of rectangle coordinates by irrationality class of 1/l_j^2 (rational sides and
/// the unit side share a class; each root certificate forms its own class).
pub fn irrationality_partition(spec: &BilliardSpec) -> Vec<Vec<usize>> {
    let BilliardKind::Rectangle { sides } = &spec.kind else {
        return vec![(0..spec.dim()).collect()];
    };
    let mut rational: Vec<usize> = Vec::new();
    let mut classes: Vec<(SideSquare, Vec<usize>)> = Vec::new();
    for (j, s) in sides.iter().enumerate() {
        match s {
            SideSquare::Rational { .. } => rational.push(j),
            root => match classes.iter_mut().find(|(r, _)| r == root) {
                Some((_, v)) => v.push(j),
                None => classes.push((*root, vec![j])),
            },
        }
    }
    rational.push(sides.len());
    let mut out: Vec<Vec<usize>> = classes.into_iter().map(|(_, v)| v).collect();
    out.push(rational);
    out
}

/// Angle-free unit direction of a boundary outward normal, exposed for reuse in gluing checks.
pub fn outward_normal(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    let e = [b[0] - a[0], b[1] - a[1]];
    let len = (e[0] * e[0] + e[1] * e[1]).sqrt();
    [e[1] / len, -e[0] / len]
}
