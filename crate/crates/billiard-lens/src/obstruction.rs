//! Numerical certificates that localized eigenfunctions of irrational rectangles, disks and Robin
//! squares live on thin sets that generic monochromatic waves avoid.

use nalgebra::{DMatrix, DVector, Matrix4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::billiards::DiskField;
use crate::error::{Error, Result};
use crate::field::Field2;
use crate::special::bessel_j;

/// Second and third derivatives at a point, planar order (xx, xy, yy; xxx, xxy, xyy, yyy).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JetVector {
    pub d: usize,
    pub second: Vec<f64>,
    pub third: Vec<f64>,
}

impl JetVector {
    pub fn len(&self) -> usize {
        self.second.len() + self.third.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn norm(&self) -> f64 {
        self.second.iter().chain(&self.third).map(|x| x * x).sum::<f64>().sqrt()
    }

    /// d^2 f / dz_i^2.
    fn pure2(&self, i: usize) -> f64 {
        match i {
            0 => self.second[0],
            _ => self.second[2],
        }
    }

    /// d^3 f / dz_i^2 dz_j.
    fn mixed3(&self, i: usize, j: usize) -> f64 {
        match (i, j) {
            (0, 0) => self.third[0],
            (0, _) => self.third[1],
            (_, 0) => self.third[2],
            _ => self.third[3],
        }
    }
}

/// Jet of a planar field at `z`, from its analytic derivatives.
pub fn jet_at(field: &dyn Field2, z: [f64; 2]) -> JetVector {
    let j = field.jet(z);
    JetVector { d: 2, second: j.hess.to_vec(), third: j.third.to_vec() }
}

/// Normalized defect of the product identity that cuts out the rectangle jet variety.
///
/// `first_class` lists the coordinates of one irrationality class; indices >= 2 are ignored.
/// Returns None for a zero jet.
pub fn rectangle_variety_residual(jet: &JetVector, first_class: &[usize]) -> Result<Option<f64>> {
    if jet.d != 2 || jet.second.len() != 3 || jet.third.len() != 4 {
        return Err(Error::Unsupported("jet varieties are implemented for planar rectangles".into()));
    }
    let norm = jet.norm();
    if norm == 0.0 {
        return Ok(None);
    }
    let inside = |i: usize| first_class.contains(&i);
    let mut worst: f64 = 0.0;
    for j in 0..2 {
        let (mut a3, mut b3, mut a2, mut b2) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..2 {
            if inside(i) {
                a3 += jet.mixed3(i, j);
                a2 += jet.pure2(i);
            } else {
                b3 += jet.mixed3(i, j);
                b2 += jet.pure2(i);
            }
        }
        worst = worst.max((a3 * b2 - b3 * a2).abs());
    }
    Ok(Some(worst / (norm * norm)))
}

/// Values, first and second derivatives at four offsets of one block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleBlock {
    /// (f, f', f'') at offsets alpha + {0, 1/4, 1/2, 3/4} * width, flattened as P_1..P_12.
    pub values: [f64; 12],
    pub alpha: f64,
    pub width: f64,
}

impl SampleBlock {
    pub fn offsets(&self) -> [f64; 4] {
        [0.0, 0.25, 0.5, 0.75].map(|q| self.alpha + q * self.width)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { values: self.values.map(|v| c * v), ..*self }
    }
}

/// Samples a 1-d profile r -> (f, f', f'') on [0, R] in M blocks.
pub fn radial_samples<F: Fn(f64) -> [f64; 3]>(profile: F, radius: f64, blocks: usize) -> Result<Vec<SampleBlock>> {
    if blocks == 0 || !(radius > 0.0) {
        return Err(Error::Invalid("radial sampling needs R > 0 and M >= 1".into()));
    }
    let width = radius / blocks as f64;
    Ok((0..blocks)
        .map(|j| {
            let alpha = j as f64 * width;
            let mut values = [0.0; 12];
            for (k, q) in [0.0, 0.25, 0.5, 0.75].into_iter().enumerate() {
                let s = profile(alpha + q * width);
                values[3 * k..3 * k + 3].copy_from_slice(&s);
            }
            SampleBlock { values, alpha, width }
        })
        .collect())
}

/// Radial profile of a disk field along direction `dir`, rescaled at (r0, dir) by sqrt(lambda):
/// r -> u((r0 + r / sqrt(lambda)) dir).
pub fn disk_ray<'a>(field: &'a DiskField, dir: &[f64], r0: f64, lambda: f64, radius: f64) -> Result<impl Fn(f64) -> [f64; 3] + 'a> {
    let n = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
    if dir.len() != field.d || (n - 1.0).abs() > 1e-12 {
        return Err(Error::Invalid("ray direction must be a unit vector of the disk dimension".into()));
    }
    let s = lambda.sqrt();
    if r0 < 0.0 || r0 + radius / s > 1.0 + 1e-12 {
        return Err(Error::Invalid("radial segment leaves the disk".into()));
    }
    let dir = dir.to_vec();
    Ok(move |r: f64| {
        let rho = r0 + r / s;
        let mut out = [0.0; 3];
        for t in &field.terms {
            let y = t.harmonic(&dir).0;
            let p = t.mode.profile(rho);
            for k in 0..3 {
                out[k] += t.coeff * y * p[k] / s.powi(k as i32);
            }
        }
        out
    })
}

/// Directional profile of a planar field: r -> f(origin + r dir) with derivatives along dir.
pub fn planar_ray<'a>(field: &'a dyn Field2, origin: [f64; 2], dir: [f64; 2]) -> impl Fn(f64) -> [f64; 3] + 'a {
    move |r: f64| {
        let j = field.jet([origin[0] + r * dir[0], origin[1] + r * dir[1]]);
        let (a, b) = (dir[0], dir[1]);
        [
            j.value,
            j.grad[0] * a + j.grad[1] * b,
            j.hess[0] * a * a + 2.0 * j.hess[1] * a * b + j.hess[2] * b * b,
        ]
    }
}

/// f_{t,l}(r) = (t + r)^{1 - d/2} J_{d/2 + l - 1}(t + r) with derivatives from the Bessel recurrences.
pub fn shifted_bessel_profile(d: usize, t: f64, l: usize) -> impl Fn(f64) -> [f64; 3] {
    let p = 0.5 * d as f64 - 1.0;
    let nu = p + l as f64;
    move |r: f64| {
        let x = t + r;
        let (j0, j1, j2) = (bessel_j(nu, x), bessel_j(nu + 1.0, x), bessel_j(nu + 2.0, x));
        let dj = nu / x * j0 - j1;
        let dj1 = (nu + 1.0) / x * j1 - j2;
        let ddj = -nu / (x * x) * j0 + nu / x * dj - dj1;
        let xp = x.powf(-p);
        [
            xp * j0,
            -p * xp / x * j0 + xp * dj,
            p * (p + 1.0) * xp / (x * x) * j0 - 2.0 * p * xp / x * dj + xp * ddj,
        ]
    }
}

/// The degree-two polynomials a, b, c, d, e, f of one block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockQuadratics {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
}

impl BlockQuadratics {
    /// Coefficients with the block's own offsets alpha + {0, 1/4, 1/2, 3/4} * width.
    pub fn new(block: &SampleBlock, dim: usize) -> Self {
        Self::with_offsets(block, dim, block.offsets())
    }

    /// Uncorrected variant: offsets alpha + {0, R/4, R/2, 3R/4} with the (d-1) P5 P1 term of c
    /// weighted by alpha + R/2 instead of alpha + R/4. It does not vanish on Bessel blocks.
    pub fn uncorrected(block: &SampleBlock, dim: usize, radius: f64) -> Self {
        let p = |i: usize| block.values[i - 1];
        let (al, r, dm1) = (block.alpha, radius, dim as f64 - 1.0);
        Self {
            a: p(3) * p(4) - p(6) * p(1),
            d: p(9) * p(10) - p(12) * p(7),
            b: 2.0 * al * (p(3) * p(4) + p(1) * p(4)) + dm1 * (p(2) * p(4) - p(5) * p(1))
                - (2.0 * al + r / 2.0) * (p(6) * p(1) + p(4) * p(1)),
            c: al * al * (p(3) * p(4) + p(1) * p(4)) + al * dm1 * p(2) * p(4)
                - (al + r / 2.0) * dm1 * p(5) * p(1)
                - (al + r / 4.0).powi(2) * (p(6) * p(1) + p(4) * p(1)),
            e: (2.0 * al + r) * (p(9) * p(10) + p(7) * p(10)) + dm1 * (p(8) * p(10) - p(11) * p(7))
                - (2.0 * al + 1.5 * r) * (p(12) * p(7) + p(10) * p(7)),
            f: (al + r / 2.0).powi(2) * (p(9) * p(10) + p(7) * p(10)) + (al + r / 2.0) * dm1 * p(8) * p(10)
                - (al + 0.75 * r) * dm1 * p(11) * p(7)
                - (al + 0.75 * r).powi(2) * (p(12) * p(7) + p(10) * p(7)),
        }
    }

    fn with_offsets(block: &SampleBlock, dim: usize, s: [f64; 4]) -> Self {
        let p = |i: usize| block.values[i - 1];
        let dm1 = dim as f64 - 1.0;
        let pair = |u: usize, v: usize, s0: f64, s1: f64| {
            // eliminate l(l+d-2) between the equations at samples u and v (1-based value slots)
            let (fu, du, su) = (p(u), p(u + 1), p(u + 2));
            let (fv, dv, sv) = (p(v), p(v + 1), p(v + 2));
            let a = su * fv - sv * fu;
            let b = 2.0 * s0 * (su * fv + fu * fv) + dm1 * (du * fv - dv * fu) - 2.0 * s1 * (sv * fu + fv * fu);
            let c = s0 * s0 * (su * fv + fu * fv) + s0 * dm1 * du * fv - s1 * dm1 * dv * fu - s1 * s1 * (sv * fu + fv * fu);
            (a, b, c)
        };
        let (a, b, c) = pair(1, 4, s[0], s[1]);
        let (d, e, f) = pair(7, 10, s[2], s[3]);
        Self { a, b, c, d, e, f }
    }

    /// The two squared terms of the eliminant: X^2 and Y^2 D.
    pub fn eliminant_terms(&self) -> (f64, f64) {
        let Self { a, b, c, d, e, f } = *self;
        let x = b * b * d - 2.0 * a * c * d - a * b * e + 2.0 * a * a * f;
        let y = a * e - b * d;
        (x * x, y * y * (b * b - 4.0 * a * c))
    }

    /// The degree-12 eliminant X^2 - Y^2 (b^2 - 4ac).
    pub fn q_tilde(&self) -> f64 {
        let (x2, y2d) = self.eliminant_terms();
        x2 - y2d
    }
}

/// Relative eliminant residual |X^2 - Y^2 D| / (X^2 + |Y^2 D|), zero for vanishing blocks.
pub fn disk_constraint_residual(blocks: &[SampleBlock], dim: usize) -> Result<Vec<f64>> {
    if blocks.is_empty() {
        return Err(Error::Empty("no sample blocks".into()));
    }
    let w = blocks[0].width;
    if blocks.iter().any(|b| (b.width - w).abs() > 1e-12 * w) {
        return Err(Error::Invalid("inconsistent block sizes".into()));
    }
    Ok(blocks
        .iter()
        .map(|b| {
            let (x2, y2d) = BlockQuadratics::new(b, dim).eliminant_terms();
            let scale = x2 + y2d.abs();
            if scale == 0.0 {
                0.0
            } else {
                (x2 - y2d).abs() / scale
            }
        })
        .collect())
}

/// Resultant of the two quadratics in t obtained directly from the radial Bessel equation
/// x^2 f'' + (d - 1) x f' + (x^2 - L) f = 0, x = t + s, at the block's four offsets.
pub fn ode_resultant(block: &SampleBlock, dim: usize) -> f64 {
    let s = block.offsets();
    let v = &block.values;
    let dm1 = dim as f64 - 1.0;
    // E_k(t) = (f'' + f) (t + s)^2 + (d-1) f' (t + s) - L f, as [t^2, t, 1] plus the L coefficient
    let eq = |k: usize| {
        let (f, df, ddf) = (v[3 * k], v[3 * k + 1], v[3 * k + 2]);
        let g = ddf + f;
        ([g, 2.0 * g * s[k] + dm1 * df, g * s[k] * s[k] + dm1 * df * s[k]], -f)
    };
    let elim = |i: usize, j: usize| {
        let (pi, li) = eq(i);
        let (pj, lj) = eq(j);
        [0, 1, 2].map(|k| lj * pi[k] - li * pj[k])
    };
    let p = elim(0, 1);
    let q = elim(2, 3);
    let m = Matrix4::new(
        p[0], p[1], p[2], 0.0, //
        0.0, p[0], p[1], p[2], //
        q[0], q[1], q[2], 0.0, //
        0.0, q[0], q[1], q[2],
    );
    m.determinant()
}

/// Sampled field values on the ball grid used by plane-wave fits.
#[derive(Debug, Clone, PartialEq)]
pub struct FitGrid {
    pub points: Vec<[f64; 2]>,
    pub values: Vec<f64>,
}

impl FitGrid {
    pub fn sample(field: &dyn Field2, radius: f64, step: f64) -> Result<Self> {
        if !(radius > 0.0) || !(step > 0.0) {
            return Err(Error::Invalid("fit grid needs positive radius and step".into()));
        }
        let n = (radius / step).floor() as i64;
        let mut points = Vec::new();
        for j in -n..=n {
            for i in -n..=n {
                let z = [i as f64 * step, j as f64 * step];
                if z[0] * z[0] + z[1] * z[1] <= radius * radius * (1.0 + 1e-12) {
                    points.push(z);
                }
            }
        }
        let values = points.iter().map(|&z| field.value(z)).collect();
        Ok(Self { points, values })
    }

    fn norm2(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    fn columns(&self, theta: f64) -> (Vec<f64>, Vec<f64>) {
        let (s, c) = theta.sin_cos();
        self.points
            .iter()
            .map(|z| {
                let ph = c * z[0] + s * z[1];
                (ph.cos(), ph.sin())
            })
            .unzip()
    }

    /// Relative L2 residual of the least-squares fit by the given directions (SVD solve).
    pub fn residual(&self, angles: &[f64]) -> f64 {
        let n = self.points.len();
        let mut a = DMatrix::zeros(n, 2 * angles.len());
        for (j, &th) in angles.iter().enumerate() {
            let (c, s) = self.columns(th);
            for i in 0..n {
                a[(i, 2 * j)] = c[i];
                a[(i, 2 * j + 1)] = s[i];
            }
        }
        let f = DVector::from_column_slice(&self.values);
        let svd = a.clone().svd(true, true);
        let coef = match svd.solve(&f, 1e-13) {
            Ok(c) => c,
            Err(_) => return 1.0,
        };
        let r = &f - &a * coef;
        (r.norm_squared() / self.norm2()).sqrt()
    }
}

/// Incremental normal-equation state for coordinate descent over angles.
struct NormalState<'a> {
    grid: &'a FitGrid,
    cols: Vec<Vec<f64>>,
    gram: DMatrix<f64>,
    rhs: DVector<f64>,
    norm2: f64,
}

impl<'a> NormalState<'a> {
    fn new(grid: &'a FitGrid, angles: &[f64]) -> Self {
        let k = 2 * angles.len();
        let mut s = Self {
            grid,
            cols: vec![Vec::new(); k],
            gram: DMatrix::zeros(k, k),
            rhs: DVector::zeros(k),
            norm2: grid.norm2(),
        };
        for (j, &th) in angles.iter().enumerate() {
            s.set(j, th);
        }
        s
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    fn set(&mut self, j: usize, theta: f64) {
        let (c, s) = self.grid.columns(theta);
        self.cols[2 * j] = c;
        self.cols[2 * j + 1] = s;
        for col in [2 * j, 2 * j + 1] {
            self.rhs[col] = Self::dot(&self.cols[col], &self.grid.values);
            for other in 0..self.cols.len() {
                if self.cols[other].is_empty() {
                    continue;
                }
                let g = Self::dot(&self.cols[col], &self.cols[other]);
                self.gram[(col, other)] = g;
                self.gram[(other, col)] = g;
            }
        }
    }

    /// Squared relative residual of the ridge-regularized normal equations.
    fn objective(&self) -> f64 {
        let k = self.gram.nrows();
        let ridge = 1e-10 * (0..k).map(|i| self.gram[(i, i)]).sum::<f64>() / k as f64;
        let g = &self.gram + DMatrix::identity(k, k) * ridge;
        match g.cholesky() {
            Some(ch) => {
                let c = ch.solve(&self.rhs);
                ((self.norm2 - c.dot(&self.rhs)) / self.norm2).max(0.0)
            }
            None => 1.0,
        }
    }
}

/// Plane-wave fit outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneWaveFit {
    pub residual: f64,
    pub angles: Vec<f64>,
    pub restart: usize,
}

const SCAN: usize = 36;
const GOLDEN_STEPS: usize = 14;
const MAX_SWEEPS: usize = 20;

fn descend(grid: &FitGrid, start: Vec<f64>) -> Vec<f64> {
    let mut angles = start;
    let mut state = NormalState::new(grid, &angles);
    let mut current = state.objective();
    for _ in 0..MAX_SWEEPS {
        let before = current;
        #[allow(clippy::needless_range_loop)]
        for j in 0..angles.len() {
            let eval = |th: f64, st: &mut NormalState| {
                st.set(j, th);
                st.objective()
            };
            let mut best = (current, angles[j]);
            for k in 0..SCAN {
                let th = std::f64::consts::PI * k as f64 / SCAN as f64;
                let v = eval(th, &mut state);
                if v < best.0 {
                    best = (v, th);
                }
            }
            let h = std::f64::consts::PI / SCAN as f64;
            let (mut lo, mut hi) = (best.1 - h, best.1 + h);
            let g = 0.5 * (5f64.sqrt() - 1.0);
            for _ in 0..GOLDEN_STEPS {
                let (x1, x2) = (hi - g * (hi - lo), lo + g * (hi - lo));
                let (f1, f2) = (eval(x1, &mut state), eval(x2, &mut state));
                if f1 < best.0 {
                    best = (f1, x1);
                }
                if f2 < best.0 {
                    best = (f2, x2);
                }
                if f1 < f2 {
                    hi = x2;
                } else {
                    lo = x1;
                }
            }
            angles[j] = best.1;
            state.set(j, best.1);
            current = best.0;
        }
        if before - current <= 1e-12 * before.max(1e-300) {
            break;
        }
    }
    angles
}

/// Best relative L2 distance to the span of T plane waves: coordinate descent on the angles with
/// linear least squares for the amplitudes, from `restarts` seeded starts plus an optional warm start.
pub fn plane_wave_distance(grid: &FitGrid, t: usize, restarts: usize, seed: u64, warm: Option<&[f64]>) -> Result<PlaneWaveFit> {
    if t == 0 {
        return Err(Error::Invalid("at least one plane wave is needed".into()));
    }
    if grid.norm2() == 0.0 {
        return Ok(PlaneWaveFit { residual: 0.0, angles: vec![0.0; t], restart: 0 });
    }
    let mut starts: Vec<Vec<f64>> = Vec::new();
    if let Some(w) = warm {
        let mut a: Vec<f64> = w.iter().map(|x| x.rem_euclid(std::f64::consts::PI)).collect();
        a.resize(t, 0.0);
        for i in 0..a.len() {
            // separate coincident directions so the design matrix keeps full rank
            for j in 0..i {
                if (a[i] - a[j]).abs() < 1e-9 {
                    a[i] += 1e-3 * (i as f64 + 1.0);
                }
            }
        }
        starts.push(a);
    }
    for r in 0..restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
        starts.push((0..t).map(|_| rng.random_range(0.0..std::f64::consts::PI)).collect());
    }
    let fits: Vec<PlaneWaveFit> = starts
        .into_par_iter()
        .enumerate()
        .map(|(i, s)| {
            let warm_exact = warm.is_some() && i == 0;
            let angles = if warm_exact { s.clone() } else { descend(grid, s) };
            let mut residual = grid.residual(&angles);
            let mut best = angles;
            if warm_exact {
                let polished = descend(grid, best.clone());
                let r = grid.residual(&polished);
                if r < residual {
                    residual = r;
                    best = polished;
                }
            }
            PlaneWaveFit { residual, angles: best, restart: i }
        })
        .collect();
    Ok(fits
        .into_iter()
        .min_by(|a, b| a.residual.total_cmp(&b.residual).then(a.restart.cmp(&b.restart)))
        .expect("at least one start"))
}

/// Which obstruction a report certifies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObstructionTest {
    RectJet,
    DiskRadial,
    RobinSpan,
}

/// Variety membership verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    OnVariety,
    OffVariety,
}

/// Obstruction report row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstructionReport {
    pub test: ObstructionTest,
    pub residual: f64,
    pub threshold: f64,
    pub verdict: Verdict,
}

impl ObstructionReport {
    pub fn new(test: ObstructionTest, residual: f64, threshold: f64) -> Self {
        let verdict = if residual <= threshold { Verdict::OnVariety } else { Verdict::OffVariety };
        Self { test, residual, threshold, verdict }
    }
}
