//! Inverse localization: eigenfunctions whose Planck-scale rescalings approximate a target wave.

use std::f64::consts::PI;

use num_integer::Integer;
use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::billiards::{
    filtered_indices, orbit_size, projected_coefficient, BilliardKind, BilliardSpec, Boundary, Coefficient,
    EigenExpansion, ExpansionTerm,
};
use crate::error::{Error, Result};
use crate::field::{Field2, Jet2, TrigField};
use crate::kernel::ShellKernel;
use crate::lattice::{enumerate_shell, LatticeShell};
use crate::special::{radial_profile, NeumaierSum};
use crate::waves::{
    check_symmetry, BesselTranslateSum, Isometry, PolygonKind, SymmetryBc, SymmetryRow, SymmetryTable, WaveSpec,
};

/// Tolerance of the symmetry precondition for fixed-point localization.
pub const SYMMETRY_TOLERANCE: f64 = 1e-8;

/// Localization window: the grid of step `step` restricted to the ball of radius `radius`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub radius: f64,
    pub step: f64,
}

impl Window {
    pub fn new(radius: f64, step: f64) -> Result<Self> {
        if !(radius > 0.0) || !(step > 0.0) || step > 0.05 {
            return Err(Error::Invalid("window needs radius > 0 and 0 < step <= 0.05".into()));
        }
        Ok(Self { radius, step })
    }

    /// Symmetric axis of grid coordinates covering [-radius, radius].
    pub fn axis(&self) -> Vec<f64> {
        let n = (self.radius / self.step).floor() as i64;
        (-n..=n).map(|i| i as f64 * self.step).collect()
    }

    /// Row-major (y outer) ball mask over axis x axis.
    pub fn mask(&self) -> Vec<bool> {
        let a = self.axis();
        let r2 = self.radius * self.radius * (1.0 + 1e-12);
        let mut m = Vec::with_capacity(a.len() * a.len());
        for y in &a {
            for x in &a {
                m.push(x * x + y * y <= r2);
            }
        }
        m
    }
}

/// Target values and first derivatives cached on a window grid.
#[derive(Debug, Clone)]
pub struct WindowSamples {
    pub window: Window,
    axis: Vec<f64>,
    mask: Vec<bool>,
    value: Vec<f64>,
    gx: Vec<f64>,
    gy: Vec<f64>,
}

impl WindowSamples {
    pub fn new(target: &dyn Field2, window: Window) -> Self {
        let axis = window.axis();
        let mask = window.mask();
        let n = axis.len();
        let jets: Vec<Jet2> = (0..n * n)
            .into_par_iter()
            .map(|k| if mask[k] { target.jet([axis[k % n], axis[k / n]]) } else { Jet2::default() })
            .collect();
        Self {
            window,
            value: jets.iter().map(|j| j.value).collect(),
            gx: jets.iter().map(|j| j.grad[0]).collect(),
            gy: jets.iter().map(|j| j.grad[1]).collect(),
            axis,
            mask,
        }
    }

    /// C^k distance (k = 0 or 1) from a rescaled planar trigonometric field, via separable evaluation.
    pub fn error_trig(&self, field: &TrigField, k: usize) -> Result<f64> {
        if k > 1 {
            return Err(Error::Invalid("cached window errors cover k <= 1".into()));
        }
        let g = field.grid_2d(&self.axis, &self.axis, k == 1);
        let mut worst: f64 = 0.0;
        for i in 0..self.value.len() {
            if !self.mask[i] {
                continue;
            }
            worst = worst.max((g.value[i] - self.value[i]).abs());
            if k == 1 {
                worst = worst.max((g.gx[i] - self.gx[i]).abs()).max((g.gy[i] - self.gy[i]).abs());
            }
        }
        Ok(worst)
    }
}

/// C^k distance (k <= 3) between two planar fields on the window grid, pointwise jets.
pub fn field_distance(a: &dyn Field2, b: &dyn Field2, window: &Window, k: usize) -> Result<f64> {
    if k > 3 {
        return Err(Error::Invalid("derivative order above 3 is not supported".into()));
    }
    let axis = window.axis();
    let mask = window.mask();
    let n = axis.len();
    let worst = (0..n * n)
        .into_par_iter()
        .filter(|&i| mask[i])
        .map(|i| {
            let z = [axis[i % n], axis[i / n]];
            let mut d = a.jet(z);
            d.add_scaled(&b.jet(z), -1.0);
            d.max_abs_upto(k)
        })
        .reduce(|| 0.0, f64::max);
    Ok(worst)
}

/// Localized eigenfunction with its construction data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Localized {
    pub expansion: EigenExpansion,
    pub z0: Vec<f64>,
    pub scale: f64,
    pub target: BesselTranslateSum,
    pub kernel: ShellKernel,
}

impl Localized {
    /// The rescaled field z -> u(z0 + z / sqrt(lambda)).
    pub fn rescaled(&self) -> Result<TrigField> {
        let f = self.expansion.compile()?;
        let t = f.trig().ok_or_else(|| Error::Unsupported("localization needs a trigonometric basis".into()))?;
        Ok(t.rescaled(&self.z0, self.scale))
    }

    /// Translation-invariant part sum_gamma c_gamma g_d(0) K(z - z^gamma).
    pub fn kernel_part(&self, z: &[f64]) -> f64 {
        let amp = radial_profile(self.target.d, 0.0);
        let mut acc = NeumaierSum::new();
        for t in &self.target.translates {
            let w: Vec<f64> = z.iter().zip(&t.center).map(|(a, b)| a - b).collect();
            acc.add(t.coeff * amp * self.kernel.eval(&w));
        }
        acc.value()
    }

    /// Error field by subtraction: rescaled field minus the translation-invariant part.
    pub fn error_by_subtraction(&self, z: &[f64]) -> Result<f64> {
        Ok(self.rescaled()?.value_at(z) - self.kernel_part(z))
    }

    /// Error field from the explicit product expansion over i in {1,2}^d, |i| < 2d (rectangles).
    pub fn error_explicit(&self, z: &[f64]) -> Result<f64> {
        let spec = &self.expansion.spec;
        if !matches!(spec.kind, BilliardKind::Rectangle { .. }) {
            return Err(Error::Unsupported("explicit error fields are implemented for rectangles".into()));
        }
        let d = spec.dim();
        let l = spec.side_lengths();
        let sign = match spec.bc {
            Boundary::Dirichlet => -1.0,
            Boundary::Neumann => 1.0,
            Boundary::Periodic => return Ok(0.0),
            Boundary::Robin => return Err(Error::Invalid("Robin rectangles are not localizable".into())),
        };
        let amp = radial_profile(self.target.d, 0.0);
        let n_full = self.kernel.directions.len() as f64;
        let pref = (1u64 << d) as f64 / n_full;
        let mut acc = NeumaierSum::new();
        for term in &self.expansion.terms {
            let n = &term.index;
            for t in &self.target.translates {
                let mut c2 = vec![0.0; d];
                let mut c1 = vec![0.0; d];
                for j in 0..d {
                    let k = n[j] as f64 * PI / l[j];
                    c2[j] = (k / self.scale * (z[j] - t.center[j])).cos();
                    c1[j] = (2.0 * k * self.z0[j] + k / self.scale * (z[j] + t.center[j])).cos();
                }
                for mask in 0..(1usize << d) - 1 {
                    // bit j set selects C^2 in coordinate j; the all-C^2 product is the kernel part
                    let mut prod = 1.0;
                    let mut ones = 0;
                    for j in 0..d {
                        if mask >> j & 1 == 1 {
                            prod *= c2[j];
                        } else {
                            prod *= c1[j];
                            ones += 1;
                        }
                    }
                    let s = if ones % 2 == 1 { sign } else { 1.0 };
                    acc.add(pref * t.coeff * amp * s * prod);
                }
            }
        }
        Ok(acc.value())
    }
}

fn form_symmetry_factor(spec: &BilliardSpec) -> f64 {
    match spec.kind {
        BilliardKind::Rectangle { .. } => (1u64 << spec.dim()) as f64,
        BilliardKind::IsoTriangle => 4.0,
        BilliardKind::EquiTriangle => 2.0,
        BilliardKind::HemiTriangle => 4.0,
        _ => 1.0,
    }
}

/// Shell of the billiard at `mu`, rejecting shells with points on coordinate axes (the kernel exclusions).
pub fn kernel_shell(spec: &BilliardSpec, mu: i64) -> Result<LatticeShell> {
    let form = spec
        .shell_form()
        .ok_or_else(|| Error::Unsupported("localization needs a rational integrable polygon".into()))?;
    let shell = enumerate_shell(&form, spec.shell_value(mu))?;
    if shell.is_empty() {
        return Err(Error::Empty(format!("shell at mu = {mu} is empty")));
    }
    if spec.bc != Boundary::Periodic && shell.points.iter().any(|n| n.contains(&0)) {
        return Err(Error::Invalid(format!("mu = {mu} is excluded: its shell meets a coordinate axis")));
    }
    Ok(shell)
}

/// Builds the localized eigenfunction at base point z0 for a translate-sum target.
pub fn build_localized(spec: &BilliardSpec, target: &WaveSpec, mu: i64, z0: &[f64]) -> Result<Localized> {
    spec.validate()?;
    let t = target
        .translate_sum()
        .ok_or_else(|| Error::Invalid("target must be a Bessel translate sum".into()))?
        .clone();
    if t.d != spec.dim() || z0.len() != spec.dim() {
        return Err(Error::Invalid("target, base point and billiard dimensions differ".into()));
    }
    let shell = kernel_shell(spec, mu)?;
    let kernel = ShellKernel::new(&shell, spec.polygon_kind().expect("polygonal billiard"))?;
    let lambda = spec.lambda_of_mu(mu)?;
    let scale = lambda.sqrt();
    let n_full = shell.len() as f64;
    let amp = radial_profile(t.d, 0.0);
    let (_, indices) = filtered_indices(spec, mu)?;
    if indices.is_empty() {
        return Err(Error::Empty("boundary-condition filtered shell is empty".into()));
    }
    let ys: Vec<(Vec<f64>, f64)> = t
        .translates
        .iter()
        .map(|tr| (z0.iter().zip(&tr.center).map(|(a, c)| a + c / scale).collect(), tr.coeff * amp))
        .collect();
    let h = form_symmetry_factor(spec);
    let l = spec.side_lengths();
    let terms = indices
        .iter()
        .map(|n| {
            let mut acc = Coefficient::Pair { sym: 0.0, anti: 0.0 };
            for (y, c) in &ys {
                let part = if spec.bc == Boundary::Periodic {
                    let th: f64 = n.iter().zip(y).zip(&l).map(|((&k, yj), lj)| PI * k as f64 * yj / lj).sum();
                    Coefficient::Pair { sym: th.cos() / n_full, anti: th.sin() / n_full }
                } else {
                    projected_coefficient(spec, n, y)?.scaled(orbit_size(n) * h / n_full)
                };
                acc = add(acc, part.scaled(*c));
            }
            let coeff = match (&spec.kind, spec.bc, acc) {
                (BilliardKind::EquiTriangle, _, a) | (_, Boundary::Periodic, a) => a,
                (_, _, Coefficient::Pair { sym, .. }) => Coefficient::Scalar(sym),
                (_, _, a) => a,
            };
            Ok(ExpansionTerm { index: n.clone(), coeff })
        })
        .collect::<Result<Vec<_>>>()?;
    let expansion = EigenExpansion::new(spec.clone(), terms)?;
    Ok(Localized { expansion, z0: z0.to_vec(), scale, target: t, kernel })
}

fn add(a: Coefficient, b: Coefficient) -> Coefficient {
    match (a, b) {
        (Coefficient::Pair { sym, anti }, Coefficient::Pair { sym: s, anti: t }) => {
            Coefficient::Pair { sym: sym + s, anti: anti + t }
        }
        (Coefficient::Pair { sym, anti }, Coefficient::Scalar(s)) => Coefficient::Pair { sym: sym + s, anti },
        (Coefficient::Scalar(s), Coefficient::Pair { sym, anti }) => Coefficient::Pair { sym: sym + s, anti },
        (Coefficient::Scalar(s), Coefficient::Scalar(t)) => Coefficient::Scalar(s + t),
    }
}

/// C^k distance on the window between the rescaled expansion at z0 and the target.
pub fn localization_error(e: &EigenExpansion, z0: &[f64], target: &WaveSpec, window: &Window, k: usize) -> Result<f64> {
    let f = e.compile()?;
    let t = f.trig().ok_or_else(|| Error::Unsupported("localization needs a trigonometric basis".into()))?;
    if t.dim != 2 {
        return Err(Error::Unsupported("window errors are planar".into()));
    }
    let r = t.rescaled(z0, e.lambda.sqrt());
    if k <= 1 {
        WindowSamples::new(target, *window).error_trig(&r, k)
    } else {
        field_distance(&r, target, window, k)
    }
}

/// Empirical error distribution over base points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub count: usize,
    pub min: f64,
    pub best_decile: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

/// Nearest-rank quantile: the smallest sample x with empirical CDF(x) >= q.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let k = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[k - 1]
}

impl ErrorSummary {
    pub fn from_errors(errors: &[f64]) -> Result<Self> {
        if errors.is_empty() {
            return Err(Error::Empty("no errors to summarize".into()));
        }
        if errors.iter().any(|e| e.is_nan()) {
            return Err(Error::Contract("NaN localization error".into()));
        }
        let mut s = errors.to_vec();
        s.sort_by(f64::total_cmp);
        let mut acc = NeumaierSum::new();
        for e in &s {
            acc.add(*e);
        }
        Ok(Self {
            count: s.len(),
            min: s[0],
            best_decile: nearest_rank(&s, 0.1),
            q1: nearest_rank(&s, 0.25),
            median: nearest_rank(&s, 0.5),
            q3: nearest_rank(&s, 0.75),
            max: s[s.len() - 1],
            mean: acc.value() / s.len() as f64,
        })
    }
}

/// Fraction of errors strictly below epsilon.
pub fn admissible_fraction(errors: &[f64], epsilon: f64) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::Empty("empty base-point grid".into()));
    }
    Ok(errors.iter().filter(|&&e| e < epsilon).count() as f64 / errors.len() as f64)
}

fn inradius(v: &[[f64; 2]]) -> f64 {
    let n = v.len();
    let mut area = 0.0;
    let mut perimeter = 0.0;
    for i in 0..n {
        let (p, q) = (v[i], v[(i + 1) % n]);
        area += p[0] * q[1] - q[0] * p[1];
        perimeter += ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt();
    }
    area.abs() / perimeter
}

/// Cell-centred nx x ny grid over the bounding box, kept where the window margin fits inside the billiard.
///
/// The margin is capped at half the inradius so low shells keep a nonempty grid.
pub fn base_points(spec: &BilliardSpec, nx: usize, ny: usize, margin: f64) -> Result<Vec<[f64; 2]>> {
    if spec.dim() != 2 || nx == 0 || ny == 0 {
        return Err(Error::Invalid("base grids are planar and nonempty".into()));
    }
    let v = spec.vertices().ok_or_else(|| Error::Unsupported("base grids need a polygon".into()))?;
    let margin = margin.min(0.5 * inradius(&v));
    let (mut lo, mut hi) = ([f64::MAX; 2], [f64::MIN; 2]);
    for p in &v {
        for j in 0..2 {
            lo[j] = lo[j].min(p[j]);
            hi[j] = hi[j].max(p[j]);
        }
    }
    let rect = matches!(spec.kind, BilliardKind::Rectangle { .. });
    if rect {
        for j in 0..2 {
            lo[j] += margin;
            hi[j] -= margin;
        }
    }
    let mut out = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let z = [
                lo[0] + (i as f64 + 0.5) * (hi[0] - lo[0]) / nx as f64,
                lo[1] + (j as f64 + 0.5) * (hi[1] - lo[1]) / ny as f64,
            ];
            if rect || spec.contains(&z, -margin) {
                out.push(z);
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Empty("no base points survive the margin".into()));
    }
    Ok(out)
}

/// Localization errors at each base point, in base-point order.
pub fn error_sweep(
    spec: &BilliardSpec,
    target: &WaveSpec,
    mu: i64,
    base: &[[f64; 2]],
    window: &Window,
    k: usize,
) -> Result<Vec<f64>> {
    let samples = WindowSamples::new(target, *window);
    base.par_iter()
        .map(|z0| {
            let loc = build_localized(spec, target, mu, z0)?;
            if k <= 1 {
                samples.error_trig(&loc.rescaled()?, k)
            } else {
                field_distance(&loc.rescaled()?, target, window, k)
            }
        })
        .collect()
}

/// Monte-Carlo mean of E^2 over base points and window nodes, E by subtraction.
pub fn error_mean_square(spec: &BilliardSpec, target: &WaveSpec, mu: i64, base: &[[f64; 2]], window: &Window) -> Result<f64> {
    let axis = window.axis();
    let mask = window.mask();
    let n = axis.len();
    let per: Vec<f64> = base
        .par_iter()
        .map(|z0| {
            let loc = build_localized(spec, target, mu, z0)?;
            let r = loc.rescaled()?;
            let g = r.grid_2d(&axis, &axis, false);
            let mut acc = NeumaierSum::new();
            let mut count = 0usize;
            for i in 0..n * n {
                if mask[i] {
                    let z = [axis[i % n], axis[i / n]];
                    let e = g.value[i] - loc.kernel_part(&z);
                    acc.add(e * e);
                    count += 1;
                }
            }
            Ok(acc.value() / count as f64)
        })
        .collect::<Result<_>>()?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

/// Localization job as read from a job file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationJob {
    pub spec: BilliardSpec,
    pub target: WaveSpec,
    pub mus: Vec<i64>,
    pub z0_grid: BaseGrid,
    #[serde(rename = "window_R")]
    pub window_r: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_k")]
    pub k: usize,
    pub epsilon: f64,
}

fn default_step() -> f64 {
    0.05
}

fn default_k() -> usize {
    1
}

/// Base grid resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaseGrid {
    pub nx: usize,
    pub ny: usize,
}

/// Per-shell localization statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellReport {
    pub mu: i64,
    pub shell_size: usize,
    pub base_points: usize,
    pub errors: ErrorSummary,
    pub admissible_fraction: f64,
}

/// Full job report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub epsilon: f64,
    pub k: usize,
    pub window_r: f64,
    pub shells: Vec<ShellReport>,
}

/// Runs a localization job over its shells with deterministic ordering.
pub fn run_job(job: &LocalizationJob) -> Result<LocalizationReport> {
    let window = Window::new(job.window_r, job.step)?;
    if job.target.envelope() > job.window_r {
        return Err(Error::Invalid("window radius is below the target envelope".into()));
    }
    let mut shells = Vec::with_capacity(job.mus.len());
    for &mu in &job.mus {
        let shell = kernel_shell(&job.spec, mu)?;
        let lambda = job.spec.lambda_of_mu(mu)?;
        let base = base_points(&job.spec, job.z0_grid.nx, job.z0_grid.ny, job.window_r / lambda.sqrt())?;
        let errors = error_sweep(&job.spec, &job.target, mu, &base, &window, job.k)?;
        shells.push(ShellReport {
            mu,
            shell_size: shell.len(),
            base_points: base.len(),
            errors: ErrorSummary::from_errors(&errors)?,
            admissible_fraction: admissible_fraction(&errors, job.epsilon)?,
        });
    }
    Ok(LocalizationReport { epsilon: job.epsilon, k: job.k, window_r: job.window_r, shells })
}

/// Simultaneous rational approximation result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletApprox {
    pub r: Vec<i64>,
    pub s: i64,
    /// max_i |alpha_i - r_i / s|.
    pub error: f64,
    /// s^{-1-1/d}, the inequality bound.
    pub bound: f64,
    /// s^{-1/d}, the budget of the surrogate base point.
    pub budget: f64,
}

/// Best simultaneous approximation with gcd(s, r) = 1, s <= s_max and |alpha_i - r_i/s| < s^{-1-1/d}.
///
/// Among admissible s the smallest ratio error / bound wins, ties to the smaller s.
pub fn dirichlet_approx(alpha: &[f64], s_max: i64) -> Result<DirichletApprox> {
    let d = alpha.len();
    if d == 0 || d > 3 {
        return Err(Error::Invalid("dirichlet_approx supports 1 <= d <= 3".into()));
    }
    if s_max < 2 {
        return Err(Error::Invalid("s_max must be at least 2".into()));
    }
    let mut best: Option<DirichletApprox> = None;
    for s in 1..=s_max {
        let r: Vec<i64> = alpha.iter().map(|a| (a * s as f64).round() as i64).collect();
        if r.iter().fold(s, |g, &x| g.gcd(&x)) != 1 {
            continue;
        }
        let err = alpha.iter().zip(&r).map(|(a, &x)| (a - x as f64 / s as f64).abs()).fold(0.0, f64::max);
        let bound = (s as f64).powf(-1.0 - 1.0 / d as f64);
        if err >= bound {
            continue;
        }
        if best.as_ref().is_none_or(|b| err / bound < b.error / b.bound) {
            best = Some(DirichletApprox { r, s, error: err, bound, budget: (s as f64).powf(-1.0 / d as f64) });
        }
    }
    best.ok_or(Error::Exhausted { found: 0, wanted: 1 })
}

/// Fixed-point localized eigenfunction with its rational scaling data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub expansion: EigenExpansion,
    pub z0: Vec<f64>,
    /// Common denominator s of the base point; the eigenvalue is s^2 lambda.
    pub s: i64,
    /// Numerators r_j with z0_j = r_j l_j / s.
    pub r: Vec<i64>,
    pub scale: f64,
}

impl FixedPoint {
    pub fn rescaled(&self) -> Result<TrigField> {
        let f = self.expansion.compile()?;
        Ok(f.trig().expect("rectangle fields are trigonometric").rescaled(&self.z0, self.scale))
    }
}

/// Fixed-point localization at a rational base point z0_j = (p_j / q_j) l_j of a planar rectangle.
pub fn build_fixed_point(spec: &BilliardSpec, target: &WaveSpec, mu: i64, z0: &[Ratio<i64>]) -> Result<FixedPoint> {
    spec.validate()?;
    if !matches!(spec.kind, BilliardKind::Rectangle { .. }) || spec.dim() != 2 {
        return Err(Error::Unsupported("fixed-point localization is implemented for planar rectangles".into()));
    }
    let bc = match spec.bc {
        Boundary::Dirichlet => SymmetryBc::Dirichlet,
        Boundary::Neumann => SymmetryBc::Neumann,
        _ => return Err(Error::Invalid("fixed-point localization needs Dirichlet or Neumann".into())),
    };
    if z0.len() != 2 {
        return Err(Error::Invalid("base point must be planar".into()));
    }
    let row = SymmetryRow::new(SymmetryTable::FixedPoint, PolygonKind::Rectangle, bc);
    let residual = check_symmetry(target, &row, 64)?;
    if residual > SYMMETRY_TOLERANCE {
        return Err(Error::Symmetry { residual, tolerance: SYMMETRY_TOLERANCE });
    }
    let p = target.to_herglotz()?;
    let shell = kernel_shell(spec, mu)?;
    let n_full = shell.len() as f64;
    let norm = (shell.mu as f64).sqrt();
    let roots: Vec<f64> = shell.form.int_coeffs().iter().map(|&a| (a as f64).sqrt()).collect();
    let s = z0.iter().fold(1i64, |acc, q| acc.lcm(q.denom()));
    let r: Vec<i64> = z0.iter().map(|q| q.numer() * (s / q.denom())).collect();
    let (_, indices) = filtered_indices(spec, mu)?;
    let dirichlet = bc == SymmetryBc::Dirichlet;
    let mut terms = Vec::with_capacity(indices.len());
    for n in &indices {
        let xi = [n[0] as f64 * roots[0] / norm, n[1] as f64 * roots[1] / norm];
        let mut acc = num_complex::Complex64::new(0.0, 0.0);
        let mut seen: Vec<[i64; 2]> = Vec::new();
        for (s0, s1) in [(1i64, 1i64), (-1, 1), (1, -1), (-1, -1)] {
            let img = [s0 * n[0], s1 * n[1]];
            if dirichlet {
                acc += p.density_at([s0 as f64 * xi[0], s1 as f64 * xi[1]]) * (s0 * s1) as f64;
            } else if !seen.contains(&img) {
                seen.push(img);
                acc += p.density_at([s0 as f64 * xi[0], s1 as f64 * xi[1]]);
            }
        }
        if dirichlet {
            acc *= num_complex::Complex64::new(-1.0, 0.0);
        }
        let c = 2.0 * PI / n_full * acc.re;
        let parity: i64 = n.iter().zip(&r).map(|(a, b)| a * b).sum();
        let sign = if parity.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        terms.push(ExpansionTerm { index: n.iter().map(|x| x * s).collect(), coeff: Coefficient::Scalar(c * sign) });
    }
    let expansion = EigenExpansion::new(spec.clone(), terms)?;
    let l = spec.side_lengths();
    let z: Vec<f64> = r.iter().zip(&l).map(|(&ri, lj)| ri as f64 * lj / s as f64).collect();
    let scale = expansion.lambda.sqrt();
    Ok(FixedPoint { expansion, z0: z, s, r, scale })
}

/// Max of |v(z) - v(-z)| (even) or |v(z) + v(-z)| (odd) relative to max|v| on the window.
pub fn point_parity_residual(field: &TrigField, window: &Window, even: bool) -> f64 {
    let axis = window.axis();
    let g = field.grid_2d(&axis, &axis, false);
    let n = axis.len();
    let scale = g.value.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut worst: f64 = 0.0;
    for i in 0..n * n {
        let j = n * n - 1 - i;
        let r = if even { g.value[i] - g.value[j] } else { g.value[i] + g.value[j] };
        worst = worst.max(r.abs());
    }
    worst / scale
}

/// Affine reflection about the line through `point` with direction angle `angle`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeLine {
    pub point: [f64; 2],
    pub angle: f64,
}

impl LatticeLine {
    /// Line through `point` with the given slope (None = vertical).
    pub fn with_slope(point: [f64; 2], slope: Option<f64>) -> Self {
        Self { point, angle: slope.map_or(PI / 2.0, f64::atan) }
    }

    fn linear(&self) -> Isometry {
        Isometry::reflection_at_angle(self.angle)
    }
}

/// Affine map A(x) = L x + t.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub linear: Isometry,
    pub offset: [f64; 2],
    pub reflections: usize,
}

impl Cell {
    fn identity() -> Self {
        Self { linear: Isometry::identity(2), offset: [0.0; 2], reflections: 0 }
    }

    /// R o self for the affine reflection R about `line`.
    fn then_reflect(&self, line: &LatticeLine) -> Self {
        let r = line.linear();
        let p = line.point;
        let rp = r.apply2(p);
        let rt = r.apply2(self.offset);
        Self {
            linear: r.compose(&self.linear),
            offset: [rt[0] + p[0] - rp[0], rt[1] + p[1] - rp[1]],
            reflections: self.reflections + 1,
        }
    }

    pub fn apply(&self, x: [f64; 2]) -> [f64; 2] {
        let y = self.linear.apply2(x);
        [y[0] + self.offset[0], y[1] + self.offset[1]]
    }

    pub fn inverse_apply(&self, z: [f64; 2]) -> [f64; 2] {
        self.linear.inverse().apply2([z[0] - self.offset[0], z[1] - self.offset[1]])
    }

    /// Linear part S^j of the inverse map.
    pub fn unfold_linear(&self) -> Isometry {
        self.linear.inverse()
    }
}

/// A polygon drawn on the reflection lattice of a base polygon, as images of the base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellDecomposition {
    pub base: BilliardSpec,
    pub cells: Vec<Cell>,
}

/// Result of unfolding a point of the drawn polygon onto the base polygon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unfolded {
    pub cell: usize,
    pub local: [f64; 2],
    pub linear: Isometry,
    pub parity: usize,
}

const TIE_TOL: f64 = 1e-12;

impl CellDecomposition {
    /// Cells from reflection chains: chain j produces A_j = R_k o ... o R_1 (first line applied first).
    pub fn from_chains(base: BilliardSpec, chains: &[Vec<LatticeLine>]) -> Result<Self> {
        if base.vertices().is_none() || base.dim() != 2 {
            return Err(Error::Invalid("cell decompositions need a planar polygon".into()));
        }
        let cells = chains
            .iter()
            .map(|chain| chain.iter().fold(Cell::identity(), |c, l| c.then_reflect(l)))
            .collect();
        let d = Self { base, cells };
        d.validate()?;
        Ok(d)
    }

    /// Four equilateral cells: identity, reflection about the line through (1,0) with slope -sqrt3,
    /// then successive reflections about y = sqrt3/2 and the line through (2,0) with slope -sqrt3.
    pub fn four_cell_equilateral(bc: Boundary) -> Result<Self> {
        let s3 = 3f64.sqrt();
        let a = LatticeLine::with_slope([1.0, 0.0], Some(-s3));
        let b = LatticeLine::with_slope([0.0, 0.5 * s3], Some(0.0));
        let c = LatticeLine::with_slope([2.0, 0.0], Some(-s3));
        Self::from_chains(
            BilliardSpec::new(BilliardKind::EquiTriangle, bc)?,
            &[vec![], vec![a], vec![a, b], vec![a, b, c]],
        )
    }

    pub fn cell_vertices(&self, j: usize) -> Vec<[f64; 2]> {
        self.base.vertices().expect("polygon").iter().map(|&v| self.cells[j].apply(v)).collect()
    }

    fn in_cell(&self, j: usize, z: [f64; 2], tol: f64) -> bool {
        let w = self.cells[j].inverse_apply(z);
        self.base.contains(&w, tol)
    }

    /// Checks orthogonality, exact vertex images and disjoint interiors.
    pub fn validate(&self) -> Result<()> {
        let base_v = self.base.vertices().expect("polygon");
        for (j, c) in self.cells.iter().enumerate() {
            if c.linear.orthogonality_defect() > 1e-12 {
                return Err(Error::Contract(format!("cell {j} map is not orthogonal")));
            }
            for v in &base_v {
                let back = c.inverse_apply(c.apply(*v));
                if (back[0] - v[0]).abs() > 1e-12 || (back[1] - v[1]).abs() > 1e-12 {
                    return Err(Error::Contract(format!("cell {j} vertex round trip failed")));
                }
            }
            let vs = self.cell_vertices(j);
            let centroid = [
                vs.iter().map(|p| p[0]).sum::<f64>() / vs.len() as f64,
                vs.iter().map(|p| p[1]).sum::<f64>() / vs.len() as f64,
            ];
            for i in 0..self.cells.len() {
                if i != j && self.in_cell(i, centroid, -1e-9) {
                    return Err(Error::Contract(format!("cells {i} and {j} overlap")));
                }
            }
        }
        Ok(())
    }

    /// Lowest-index cell containing z (closed cells, tolerance 1e-12).
    pub fn unfold(&self, z: [f64; 2]) -> Result<Unfolded> {
        for (j, c) in self.cells.iter().enumerate() {
            if self.in_cell(j, z, TIE_TOL) {
                return Ok(Unfolded {
                    cell: j,
                    local: c.inverse_apply(z),
                    linear: c.unfold_linear(),
                    parity: c.reflections % 2,
                });
            }
        }
        Err(Error::Invalid(format!("point {z:?} lies outside the drawn polygon")))
    }

    /// Pairs of cells sharing an edge, with the edge endpoints.
    pub fn shared_edges(&self) -> Vec<(usize, usize, [f64; 2], [f64; 2])> {
        let mut out = Vec::new();
        let close = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9;
        for i in 0..self.cells.len() {
            let vi = self.cell_vertices(i);
            for j in i + 1..self.cells.len() {
                let vj = self.cell_vertices(j);
                for a in 0..vi.len() {
                    let (p, q) = (vi[a], vi[(a + 1) % vi.len()]);
                    for b in 0..vj.len() {
                        let (s, t) = (vj[b], vj[(b + 1) % vj.len()]);
                        if (close(p, s) && close(q, t)) || (close(p, t) && close(q, s)) {
                            out.push((i, j, p, q));
                        }
                    }
                }
            }
        }
        out
    }

    /// Point in the interior of cell j: the image of a base point.
    pub fn cell_point(&self, j: usize, local: [f64; 2]) -> [f64; 2] {
        self.cells[j].apply(local)
    }
}

/// Field on the drawn polygon glued from a base-polygon eigenfunction.
#[derive(Debug, Clone, PartialEq)]
pub struct GluedField {
    pub decomposition: CellDecomposition,
    pub base_field: TrigField,
    pub lambda: f64,
}

impl GluedField {
    pub fn new(decomposition: CellDecomposition, expansion: &EigenExpansion) -> Result<Self> {
        if expansion.spec != decomposition.base {
            return Err(Error::Invalid("expansion lives on a different base polygon".into()));
        }
        let f = expansion.compile()?;
        let base_field = f.trig().ok_or_else(|| Error::Unsupported("gluing needs trigonometric fields".into()))?.clone();
        Ok(Self { decomposition, base_field, lambda: expansion.lambda })
    }

    fn sign(&self, parity: usize) -> f64 {
        if self.decomposition.base.bc == Boundary::Dirichlet && parity == 1 {
            -1.0
        } else {
            1.0
        }
    }

    /// Value and gradient through cell j's unfolding: s_j u~(A_j^{-1} z), gradient s_j L_j grad u~.
    pub fn through_cell(&self, j: usize, z: [f64; 2]) -> (f64, [f64; 2]) {
        let c = &self.decomposition.cells[j];
        let w = c.inverse_apply(z);
        let s = self.sign(c.reflections % 2);
        let g = self.base_field.gradient(&w);
        let lg = c.linear.apply2([g[0], g[1]]);
        (s * self.base_field.value_at(&w), [s * lg[0], s * lg[1]])
    }

    pub fn value(&self, z: [f64; 2]) -> Result<f64> {
        let u = self.decomposition.unfold(z)?;
        Ok(self.through_cell(u.cell, z).0)
    }

    /// Max value mismatch and max normal-derivative jump across shared edges at `count` samples,
    /// relative to max|u| and sqrt(lambda) max|u|.
    pub fn gluing_residuals(&self, count: usize) -> Result<(f64, f64)> {
        let edges = self.decomposition.shared_edges();
        if edges.is_empty() {
            return Ok((0.0, 0.0));
        }
        let per = count.div_ceil(edges.len());
        let mut scale: f64 = 0.0;
        let mut jump_v: f64 = 0.0;
        let mut jump_n: f64 = 0.0;
        for (i, j, p, q) in &edges {
            let e = [q[0] - p[0], q[1] - p[1]];
            let len = (e[0] * e[0] + e[1] * e[1]).sqrt();
            let nrm = [e[1] / len, -e[0] / len];
            for k in 0..per {
                let t = (k as f64 + 0.5) / per as f64;
                let z = [p[0] + t * e[0], p[1] + t * e[1]];
                let (a, ga) = self.through_cell(*i, z);
                let (b, gb) = self.through_cell(*j, z);
                scale = scale.max(a.abs()).max(b.abs());
                jump_v = jump_v.max((a - b).abs());
                jump_n = jump_n.max(((ga[0] - gb[0]) * nrm[0] + (ga[1] - gb[1]) * nrm[1]).abs());
            }
        }
        for j in 0..self.decomposition.cells.len() {
            for w in self.decomposition.base.interior_samples(50, 17 + j as u64) {
                scale = scale.max(self.through_cell(j, self.decomposition.cell_point(j, [w[0], w[1]])).0.abs());
            }
        }
        let scale = scale.max(f64::MIN_POSITIVE);
        Ok((jump_v / scale, jump_n / (scale * self.lambda.sqrt())))
    }
}

/// How the glued construction assigns expansions to cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GluingMode {
    /// One expansion; the target must satisfy the lattice symmetry row of the base polygon.
    Fixed,
    /// One expansion per cell j, built for the target composed with the cell's unfolding.
    Roaming,
}

/// Result of localization on a drawn polygon.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeLocalization {
    pub pieces: Vec<GluedField>,
    pub errors: Vec<f64>,
    pub base_cell: usize,
}

impl LatticeLocalization {
    pub fn best_error(&self) -> f64 {
        self.errors.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Localization on a drawn polygon at base point z0 (window errors of order k on `window`).
pub fn build_on_lattice_polygon(
    decomp: &CellDecomposition,
    target: &WaveSpec,
    mu: i64,
    z0: [f64; 2],
    mode: GluingMode,
    window: &Window,
    k: usize,
) -> Result<LatticeLocalization> {
    let home = decomp.unfold(z0)?;
    let translates = target
        .translate_sum()
        .ok_or_else(|| Error::Invalid("target must be a Bessel translate sum".into()))?;
    let bc = decomp
        .base
        .bc
        .symmetry_bc()
        .ok_or_else(|| Error::Invalid("gluing needs Dirichlet or Neumann".into()))?;
    let sign_of = |parity: usize| if bc == SymmetryBc::Dirichlet && parity == 1 { -1.0 } else { 1.0 };
    let mut builds: Vec<(BesselTranslateSum, [f64; 2])> = Vec::new();
    match mode {
        GluingMode::Fixed => {
            let poly = decomp.base.polygon_kind().expect("polygon");
            let row = SymmetryRow::new(SymmetryTable::Lattice, poly, bc);
            let residual = check_symmetry(target, &row, 64)?;
            if residual > SYMMETRY_TOLERANCE {
                return Err(Error::Symmetry { residual, tolerance: SYMMETRY_TOLERANCE });
            }
            let t = translates.compose_linear(&home.linear.inverse()).scaled(sign_of(home.parity));
            builds.push((t, home.local));
        }
        GluingMode::Roaming => {
            for c in &decomp.cells {
                let t = translates.compose_linear(&c.unfold_linear().inverse()).scaled(sign_of(c.reflections % 2));
                builds.push((t, c.inverse_apply(z0)));
            }
        }
    }
    let mut pieces = Vec::with_capacity(builds.len());
    let mut errors = Vec::with_capacity(builds.len());
    for (t, w0) in builds {
        let loc = build_localized(&decomp.base, &WaveSpec::translates(t), mu, &w0)?;
        let glued = GluedField::new(decomp.clone(), &loc.expansion)?;
        let scale = loc.scale;
        let local = GluedWindow { glued: &glued, z0, scale, cell: home.cell };
        errors.push(field_distance(&local, target, window, k)?);
        pieces.push(glued);
    }
    Ok(LatticeLocalization { pieces, errors, base_cell: home.cell })
}

/// The glued field rescaled around z0, evaluated through a fixed cell.
struct GluedWindow<'a> {
    glued: &'a GluedField,
    z0: [f64; 2],
    scale: f64,
    cell: usize,
}

impl Field2 for GluedWindow<'_> {
    fn jet(&self, z: [f64; 2]) -> Jet2 {
        let c = &self.glued.decomposition.cells[self.cell];
        let s = self.glued.sign(c.reflections % 2);
        let w0 = c.inverse_apply(self.z0);
        let sl = c.unfold_linear();
        let y = sl.apply2(z);
        let local = self.glued.base_field.rescaled(&w0, self.scale);
        let j = local.jet(y);
        // chain rule for z -> S z with S orthogonal: grad = S^T g, hessian = S^T H S
        let m = &sl.matrix;
        let g = [m[0] * j.grad[0] + m[2] * j.grad[1], m[1] * j.grad[0] + m[3] * j.grad[1]];
        let h = [[j.hess[0], j.hess[1]], [j.hess[1], j.hess[2]]];
        let mut hz = [[0.0; 2]; 2];
        for (a, row) in hz.iter_mut().enumerate() {
            for (b, slot) in row.iter_mut().enumerate() {
                for p in 0..2 {
                    for q in 0..2 {
                        *slot += m[2 * p + a] * h[p][q] * m[2 * q + b];
                    }
                }
            }
        }
        Jet2 {
            value: s * j.value,
            grad: [s * g[0], s * g[1]],
            hess: [s * hz[0][0], s * hz[0][1], s * hz[1][1]],
            third: [f64::NAN; 4],
        }
    }
}
