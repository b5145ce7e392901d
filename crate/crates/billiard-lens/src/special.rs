//! Bessel functions of the first kind, bracketed root finding and compensated summation.

use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{Error, Result};

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated sum of an iterator, in iteration order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(items: I) -> f64 {
    let mut acc = NeumaierSum::new();
    for x in items {
        acc.add(x);
    }
    acc.value()
}

fn series_is_stable(nu: f64, x: f64) -> bool {
    x <= 4.0 || x * x < 4.0 * (nu + 1.0)
}

/// Power series of J_nu, accurate when the terms do not cancel badly.
fn bessel_series(nu: f64, x: f64) -> f64 {
    let half = 0.5 * x;
    let lead = if nu + 1.0 < 150.0 {
        half.powf(nu) / gamma(nu + 1.0)
    } else {
        (nu * half.ln() - ln_gamma(nu + 1.0)).exp()
    };
    let q = half * half;
    let mut term = lead;
    let mut acc = NeumaierSum::new();
    acc.add(term);
    for k in 1..600 {
        let kf = k as f64;
        term *= -q / (kf * (kf + nu));
        acc.add(term);
        if term.abs() <= 1e-18 * acc.value().abs() || term == 0.0 {
            break;
        }
    }
    acc.value()
}

/// Miller backward recurrence normalized by the Neumann series
/// (x/2)^a = sum_k (a+2k) Gamma(a+k)/k! J_{a+2k}(x), with a the fractional order.
fn bessel_miller(nu: f64, x: f64) -> f64 {
    let n = nu.floor() as usize;
    let frac = nu - n as f64;
    let top = (n as f64).max(x);
    let mut start = (top + 30.0 + 8.0 * top.sqrt()).ceil() as usize;
    if start % 2 == 1 {
        start += 1;
    }
    let mut f = vec![0.0_f64; start + 2];
    f[start] = 1e-300;
    for k in (1..=start).rev() {
        let next = 2.0 * (frac + k as f64) / x * f[k] - f[k + 1];
        f[k - 1] = next;
        if next.abs() > 1e250 {
            for v in f[k - 1..].iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    let g1 = gamma(frac + 1.0);
    let mut norm = NeumaierSum::new();
    norm.add(g1 * f[0]);
    let mut g = g1;
    let mut k = 1usize;
    while 2 * k <= start {
        norm.add((frac + 2.0 * k as f64) * g * f[2 * k]);
        g *= (frac + k as f64) / (k as f64 + 1.0);
        k += 1;
    }
    f[n] * (0.5 * x).powf(frac) / norm.value()
}

/// Bessel function of the first kind J_nu(x) for nu >= 0.
///
/// Negative arguments are accepted for integer orders via J_n(-x) = (-1)^n J_n(x).
pub fn bessel_j(nu: f64, x: f64) -> f64 {
    if x < 0.0 {
        if nu.fract() == 0.0 {
            let s = if (nu as i64) % 2 == 0 { 1.0 } else { -1.0 };
            return s * bessel_j(nu, -x);
        }
        return f64::NAN;
    }
    if x == 0.0 {
        return if nu == 0.0 { 1.0 } else { 0.0 };
    }
    if series_is_stable(nu, x) {
        bessel_series(nu, x)
    } else {
        bessel_miller(nu, x)
    }
}

/// Derivative of J_nu at x > 0, via J_nu' = (nu/x) J_nu - J_{nu+1}.
pub fn bessel_j_prime(nu: f64, x: f64) -> f64 {
    if x == 0.0 {
        return if nu == 1.0 {
            0.5
        } else if nu == 0.0 || nu > 1.0 {
            0.0
        } else {
            f64::INFINITY
        };
    }
    if nu == 0.0 {
        return -bessel_j(1.0, x);
    }
    nu / x * bessel_j(nu, x) - bessel_j(nu + 1.0, x)
}

/// Scaled Bessel function r^{-mu} J_mu(r), entire in r^2.
///
/// Its derivative in s = r^2 obeys d/ds G_mu = -G_{mu+1} / 2.
pub fn scaled_bessel(mu: f64, r: f64) -> f64 {
    let r = r.abs();
    if r < 1.0 {
        let q = 0.25 * r * r;
        let mut term = 0.5_f64.powf(mu) / gamma(mu + 1.0);
        let mut acc = NeumaierSum::new();
        acc.add(term);
        for k in 1..60 {
            let kf = k as f64;
            term *= -q / (kf * (kf + mu));
            acc.add(term);
            if term.abs() < 1e-19 {
                break;
            }
        }
        acc.value()
    } else {
        bessel_j(mu, r) / r.powf(mu)
    }
}

/// Value of the radial wave profile g_d(r) = r^{1-d/2} J_{d/2-1}(r).
pub fn radial_profile(d: usize, r: f64) -> f64 {
    scaled_bessel(0.5 * d as f64 - 1.0, r)
}

/// Bisection on a bracket with a sign change; returns the midpoint of the final bracket.
pub fn bisect<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let (mut a, mut b) = (lo, hi);
    let mut fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Bracket { lo, hi });
    }
    for _ in 0..400 {
        let m = 0.5 * (a + b);
        if b - a <= tol || m == a || m == b {
            return Ok(m);
        }
        let fm = f(m);
        if fm == 0.0 {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// Newton polish inside a bracket, keeping the iterate with the smallest residual.
pub fn newton_polish<F, D>(f: F, df: D, x0: f64, lo: f64, hi: f64) -> f64
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let mut best = x0;
    let mut best_res = f(x0).abs();
    let mut x = x0;
    for _ in 0..8 {
        let d = df(x);
        if d == 0.0 || !d.is_finite() {
            break;
        }
        let next = x - f(x) / d;
        if !(lo..=hi).contains(&next) {
            break;
        }
        let r = f(next).abs();
        if r < best_res {
            best = next;
            best_res = r;
        }
        if next == x {
            break;
        }
        x = next;
    }
    best
}

/// Bracket of the `n`-th sign change (1-based) of `f` on (start, limit), scanning with `step`.
pub fn nth_sign_change<F: Fn(f64) -> f64>(
    f: F,
    start: f64,
    step: f64,
    limit: f64,
    n: usize,
) -> Result<(f64, f64)> {
    let mut count = 0;
    let mut a = start;
    let mut fa = f(a);
    while a < limit {
        let b = (a + step).min(limit);
        let fb = f(b);
        if fa == 0.0 || fa.signum() != fb.signum() {
            count += 1;
            if count == n {
                return Ok((a, b));
            }
        }
        a = b;
        fa = fb;
    }
    Err(Error::Bracket { lo: start, hi: limit })
}

/// The `n`-th positive zero (1-based) of J_nu.
pub fn bessel_zero(nu: f64, n: usize) -> Result<f64> {
    let limit = nu + (n as f64 + 2.0) * std::f64::consts::PI + 10.0;
    let g = |x: f64| bessel_j(nu, x);
    let (a, b) = nth_sign_change(g, 1e-3, 0.05, limit, n)?;
    let x = bisect(g, a, b, 1e-15)?;
    Ok(newton_polish(g, |x| bessel_j_prime(nu, x), x, a, b))
}
