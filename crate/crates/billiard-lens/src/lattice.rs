//! Integer points on shells of diagonal positive quadratic forms, representation
//! counts, and selection of well-distributed shell sequences.

use num_integer::{Integer, Roots};
use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::NeumaierSum;

/// Diagonal positive definite form Q(N) = sum_j a_j N_j^2 with rational a_j,
/// stored together with its integerization Q = Q^int / p.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuadraticForm {
    coeffs: Vec<Ratio<i64>>,
    int_coeffs: Vec<i64>,
    scale: i64,
}

#[derive(Serialize, Deserialize)]
struct FormRepr {
    d: usize,
    coeffs: Vec<[i64; 2]>,
}

impl Serialize for QuadraticForm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FormRepr {
            d: self.dim(),
            coeffs: self.coeffs.iter().map(|r| [*r.numer(), *r.denom()]).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for QuadraticForm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = FormRepr::deserialize(d)?;
        if repr.coeffs.len() != repr.d {
            return Err(serde::de::Error::custom("coefficient count differs from d"));
        }
        let coeffs = repr
            .coeffs
            .iter()
            .map(|[p, q]| {
                if *q == 0 {
                    Err(serde::de::Error::custom("zero denominator"))
                } else {
                    Ok(Ratio::new(*p, *q))
                }
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        QuadraticForm::new(coeffs).map_err(serde::de::Error::custom)
    }
}

impl QuadraticForm {
    /// Builds the form from positive rational coefficients (reduced on entry).
    pub fn new(coeffs: Vec<Ratio<i64>>) -> Result<Self> {
        if coeffs.len() < 2 {
            return Err(Error::Invalid("quadratic form needs dimension >= 2".into()));
        }
        if coeffs.iter().any(|c| *c.numer() <= 0 || *c.denom() <= 0) {
            return Err(Error::Invalid("form coefficients must be positive".into()));
        }
        let mut scale = 1i64;
        for c in &coeffs {
            scale = scale.lcm(c.denom());
        }
        let int_coeffs = coeffs
            .iter()
            .map(|c| {
                (c * Ratio::from_integer(scale))
                    .to_integer()
                    .checked_mul(1)
                    .ok_or_else(|| Error::Invalid("form scale overflow".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { coeffs, int_coeffs, scale })
    }

    /// Form with integer coefficients.
    pub fn integer(coeffs: &[i64]) -> Result<Self> {
        Self::new(coeffs.iter().map(|&c| Ratio::from_integer(c)).collect())
    }

    /// The circle form x^2 + y^2.
    pub fn circle() -> Self {
        Self::integer(&[1, 1]).expect("valid form")
    }

    /// Form of the rectangle with side lengths l_j (given through l_j^2) and a final unit side:
    /// Q(N) = sum_j N_j^2 / l_j^2 + N_d^2.
    pub fn rectangle(side_squares: &[Ratio<i64>]) -> Result<Self> {
        let mut coeffs: Vec<Ratio<i64>> = side_squares
            .iter()
            .map(|l2| {
                if *l2.numer() <= 0 {
                    Err(Error::Invalid("rectangle sides must be positive".into()))
                } else {
                    Ok(l2.recip())
                }
            })
            .collect::<Result<_>>()?;
        coeffs.push(Ratio::from_integer(1));
        Self::new(coeffs)
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[Ratio<i64>] {
        &self.coeffs
    }

    pub fn int_coeffs(&self) -> &[i64] {
        &self.int_coeffs
    }

    /// Common scale p with Q = Q^int / p.
    pub fn scale(&self) -> i64 {
        self.scale
    }

    /// Exact value of Q^int at an integer vector.
    pub fn eval_int(&self, n: &[i64]) -> Result<i64> {
        let mut acc = 0i64;
        for (&a, &x) in self.int_coeffs.iter().zip(n) {
            let term = x
                .checked_mul(x)
                .and_then(|sq| sq.checked_mul(a))
                .ok_or(Error::ShellTooLarge { value: i64::MAX })?;
            acc = acc.checked_add(term).ok_or(Error::ShellTooLarge { value: i64::MAX })?;
        }
        Ok(acc)
    }

    /// Exact rational value Q(N).
    pub fn eval(&self, n: &[i64]) -> Result<Ratio<i64>> {
        Ok(Ratio::new(self.eval_int(n)?, self.scale))
    }

    fn has_equal_coeffs(&self) -> bool {
        self.int_coeffs.iter().all(|&c| c == self.int_coeffs[0])
    }
}

/// All integer vectors with Q^int(N) = mu.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeShell {
    pub form: QuadraticForm,
    pub mu: i64,
    pub points: Vec<Vec<i64>>,
}

impl LatticeShell {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points with every coordinate >= 1 (Dirichlet index set).
    pub fn points_dirichlet(&self) -> Vec<Vec<i64>> {
        self.points.iter().filter(|n| n.iter().all(|&x| x >= 1)).cloned().collect()
    }

    /// Points with every coordinate >= 0 (Neumann index set).
    pub fn points_neumann(&self) -> Vec<Vec<i64>> {
        self.points.iter().filter(|n| n.iter().all(|&x| x >= 0)).cloned().collect()
    }
}

fn enumerate_rec(
    coeffs: &[i64],
    remaining: i64,
    prefix: &mut Vec<i64>,
    out: &mut Vec<Vec<i64>>,
) {
    let a = coeffs[0];
    if coeffs.len() == 1 {
        if remaining % a != 0 {
            return;
        }
        let q = remaining / a;
        let r = q.sqrt();
        if r * r != q {
            return;
        }
        if r == 0 {
            prefix.push(0);
            out.push(prefix.clone());
            prefix.pop();
        } else {
            for v in [-r, r] {
                prefix.push(v);
                out.push(prefix.clone());
                prefix.pop();
            }
        }
        return;
    }
    let bound = (remaining / a).sqrt();
    for v in -bound..=bound {
        let used = a * v * v;
        prefix.push(v);
        enumerate_rec(&coeffs[1..], remaining - used, prefix, out);
        prefix.pop();
    }
}

/// Exhaustive enumeration of the shell Q^int(N) = mu in lexicographic order.
pub fn enumerate_shell(form: &QuadraticForm, mu: i64) -> Result<LatticeShell> {
    if mu < 0 {
        return Err(Error::Invalid("shell value must be nonnegative".into()));
    }
    let coeffs = form.int_coeffs();
    for &a in coeffs {
        // Every partial sum a*v^2 is bounded by mu; guard the largest product.
        let bound = (mu / a).sqrt();
        bound
            .checked_mul(bound)
            .and_then(|b| b.checked_mul(a))
            .and_then(|b| b.checked_mul(coeffs.len() as i64))
            .ok_or(Error::ShellTooLarge { value: mu })?;
    }
    let a0 = coeffs[0];
    let bound = (mu / a0).sqrt();
    let chunks: Vec<Vec<Vec<i64>>> = (-bound..=bound)
        .into_par_iter()
        .map(|v| {
            let mut out = Vec::new();
            let mut prefix = vec![v];
            enumerate_rec(&coeffs[1..], mu - a0 * v * v, &mut prefix, &mut out);
            out
        })
        .collect();
    let points = chunks.into_iter().flatten().collect();
    Ok(LatticeShell { form: form.clone(), mu, points })
}

/// Number of representations of n as a sum of two squares, r2(n) = 4 (d_1(n) - d_3(n)).
pub fn representation_count(n: u64) -> u64 {
    if n == 0 {
        return 1;
    }
    let mut d1 = 0i64;
    let mut d3 = 0i64;
    let mut tally = |d: u64| match d % 4 {
        1 => d1 += 1,
        3 => d3 += 1,
        _ => {}
    };
    let mut k = 1u64;
    while k * k <= n {
        if n.is_multiple_of(k) {
            tally(k);
            if k * k != n {
                tally(n / k);
            }
        }
        k += 1;
    }
    (4 * (d1 - d3)) as u64
}

/// Shell-selection heuristic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Products of the first k primes congruent to 1 mod 4 (circle form only).
    PrimeProducts,
    /// Ascending scan keeping shells whose discrepancy stays below the running best times (1 + slack).
    DiscrepancyGreedy { slack: f64, window: i64 },
}

impl Strategy {
    pub const DEFAULT_SLACK: f64 = 0.25;
    pub const DEFAULT_WINDOW: i64 = 1_000_000;

    pub fn greedy() -> Self {
        Strategy::DiscrepancyGreedy { slack: Self::DEFAULT_SLACK, window: Self::DEFAULT_WINDOW }
    }
}

/// Opt-in restrictions on admissible shell values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ShellFilter {
    /// Reject values whose reduced value is a perfect square.
    pub exclude_squares: bool,
    /// Reject values whose reduced value is three times a perfect square.
    pub exclude_three_squares: bool,
    /// Only scan shell values divisible by this factor; exclusions apply to value / factor.
    pub multiple_of: i64,
}

impl ShellFilter {
    /// Exclusions needed by the kernel simplification for triangles and squares.
    pub fn kernel_restriction() -> Self {
        Self { exclude_squares: true, exclude_three_squares: true, multiple_of: 1 }
    }

    fn step(&self) -> i64 {
        self.multiple_of.max(1)
    }

    /// Whether a shell value passes the exclusions.
    pub fn admits(&self, value: i64) -> bool {
        let step = self.step();
        if value % step != 0 {
            return false;
        }
        let reduced = value / step;
        let is_square = |x: i64| x >= 0 && x.sqrt() * x.sqrt() == x;
        if self.exclude_squares && is_square(reduced) {
            return false;
        }
        if self.exclude_three_squares && reduced % 3 == 0 && is_square(reduced / 3) {
            return false;
        }
        true
    }
}

fn primes_one_mod_four() -> impl Iterator<Item = i64> {
    (5i64..).step_by(4).filter(|&p| (2..).take_while(|k| k * k <= p).all(|k| p % k != 0))
}

/// Strictly increasing list of `count` admissible shell values.
pub fn equidistributed_sequence(
    form: &QuadraticForm,
    count: usize,
    strategy: Strategy,
    filter: ShellFilter,
) -> Result<Vec<i64>> {
    if count == 0 {
        return Err(Error::Invalid("count must be >= 1".into()));
    }
    match strategy {
        Strategy::PrimeProducts => {
            if form.dim() != 2 || form.int_coeffs() != [1, 1] {
                return Err(Error::Invalid("prime products apply to the circle form".into()));
            }
            let mut out = Vec::with_capacity(count);
            let mut product = 1i64;
            for p in primes_one_mod_four() {
                product = product.checked_mul(p).ok_or(Error::Exhausted {
                    found: out.len(),
                    wanted: count,
                })?;
                if filter.admits(product) {
                    out.push(product);
                }
                if out.len() == count {
                    break;
                }
            }
            Ok(out)
        }
        Strategy::DiscrepancyGreedy { slack, window } => {
            let mut out = Vec::with_capacity(count);
            let mut best = f64::INFINITY;
            let step = filter.step();
            let mut value = step;
            while value <= window {
                if filter.admits(value) {
                    let shell = enumerate_shell(form, value)?;
                    if !shell.is_empty() {
                        let disc = angular_discrepancy(&shell)?;
                        if disc < best * (1.0 + slack) {
                            out.push(value);
                            best = best.min(disc);
                            if out.len() == count {
                                return Ok(out);
                            }
                        }
                    }
                }
                value += step;
            }
            Err(Error::Exhausted { found: out.len(), wanted: count })
        }
    }
}

/// Normalized arclength on the ellipse a1 x^2 + a2 y^2 = 1 as a function of the
/// parameter angle t, through the Fourier series of the speed.
struct EllipseArclength {
    mean: f64,
    cos_coeffs: Vec<f64>,
    sin_coeffs: Vec<f64>,
    total: f64,
}

impl EllipseArclength {
    const SAMPLES: usize = 256;

    fn new(a1: f64, a2: f64) -> Self {
        let m = Self::SAMPLES;
        let speed: Vec<f64> = (0..m)
            .map(|j| {
                let t = 2.0 * std::f64::consts::PI * j as f64 / m as f64;
                (t.sin().powi(2) / a1 + t.cos().powi(2) / a2).sqrt()
            })
            .collect();
        let mean = speed.iter().sum::<f64>() / m as f64;
        let kmax = m / 2 - 1;
        let mut cos_coeffs = Vec::with_capacity(kmax);
        let mut sin_coeffs = Vec::with_capacity(kmax);
        for k in 1..=kmax {
            let (mut c, mut s) = (0.0, 0.0);
            for (j, v) in speed.iter().enumerate() {
                let t = 2.0 * std::f64::consts::PI * (k * j) as f64 / m as f64;
                c += v * t.cos();
                s += v * t.sin();
            }
            cos_coeffs.push(2.0 * c / m as f64);
            sin_coeffs.push(2.0 * s / m as f64);
        }
        let total = 2.0 * std::f64::consts::PI * mean;
        Self { mean, cos_coeffs, sin_coeffs, total }
    }

    fn fraction(&self, t: f64) -> f64 {
        let mut s = self.mean * t;
        for (i, (c, d)) in self.cos_coeffs.iter().zip(&self.sin_coeffs).enumerate() {
            let k = (i + 1) as f64;
            s += c * (k * t).sin() / k + d * (1.0 - (k * t).cos()) / k;
        }
        (s / self.total).clamp(0.0, 1.0)
    }
}

/// Star discrepancy of sorted values in [0, 1).
pub fn star_discrepancy(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len() as f64;
    values
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let i = i as f64;
            ((i + 1.0) / n - x).max(x - i / n)
        })
        .fold(0.0, f64::max)
}

/// Star discrepancy of the shell directions, measured in normalized arclength
/// of the ellipse Q(xi) = 1.
pub fn angular_discrepancy(shell: &LatticeShell) -> Result<f64> {
    if shell.form.dim() != 2 {
        return Err(Error::Unsupported("angular discrepancy needs d = 2".into()));
    }
    if shell.is_empty() || shell.mu <= 0 {
        return Err(Error::Empty("angular discrepancy of an empty shell".into()));
    }
    let a1 = shell.form.int_coeffs()[0] as f64;
    let a2 = shell.form.int_coeffs()[1] as f64;
    let circle = shell.form.has_equal_coeffs();
    let arc = EllipseArclength::new(a1, a2);
    let mut values: Vec<f64> = shell
        .points
        .iter()
        .map(|n| {
            let mut t = (a2.sqrt() * n[1] as f64).atan2(a1.sqrt() * n[0] as f64);
            if t < 0.0 {
                t += 2.0 * std::f64::consts::PI;
            }
            if circle {
                t / (2.0 * std::f64::consts::PI)
            } else {
                arc.fraction(t)
            }
        })
        .map(|x| if x >= 1.0 { 0.0 } else { x })
        .collect();
    Ok(star_discrepancy(&mut values))
}

/// Shell average (1/#N) sum_N f(N / scale), compensated, in lexicographic order.
pub fn shell_average<F: Fn(&[f64]) -> f64>(shell: &LatticeShell, scale: f64, f: F) -> Result<f64> {
    if scale <= 0.0 {
        return Err(Error::Invalid("scale must be positive".into()));
    }
    if shell.is_empty() {
        return Err(Error::Empty("shell average over an empty shell".into()));
    }
    let mut acc = NeumaierSum::new();
    let mut xi = vec![0.0; shell.form.dim()];
    for n in &shell.points {
        for (x, &v) in xi.iter_mut().zip(n) {
            *x = v as f64 / scale;
        }
        acc.add(f(&xi));
    }
    Ok(acc.value() / shell.len() as f64)
}

/// Ratio |shell| / lambda^{(d-2)/2}, a sanity diagnostic for shell growth.
pub fn shell_growth_ratio(shell: &LatticeShell) -> f64 {
    let d = shell.form.dim() as f64;
    let lambda = shell.mu as f64 / shell.form.scale() as f64;
    shell.len() as f64 / lambda.powf(0.5 * (d - 2.0)).max(f64::MIN_POSITIVE)
}
