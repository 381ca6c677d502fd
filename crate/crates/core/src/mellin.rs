//! Mellin symbol of `T_{ν,μ} = ℋ_ν ℋ_μ` and the numerical multiplier
//! conditions: analyticity in the strip, boundedness, and decay of `m'`.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, validation, Result};
use crate::par;
use crate::specfun::{digamma, log_gamma, log_gamma_diff};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiplierParams {
    pub nu: f64,
    pub mu: f64,
    pub d: usize,
}

impl MultiplierParams {
    pub fn new(nu: f64, mu: f64, d: usize) -> Result<Self> {
        if !(nu >= 0.0 && mu >= 0.0 && nu.is_finite() && mu.is_finite()) {
            return Err(validation(format!("orders must be finite and non-negative, got ν = {nu}, μ = {mu}")));
        }
        if d < 1 {
            return Err(validation("dimension must be positive"));
        }
        Ok(Self { nu, mu, d })
    }

    pub fn n_d(&self) -> f64 {
        (self.d as f64 - 2.0) / 2.0
    }

    /// Open strip `(n(d) - ν, 2 + n(d) + μ)`.
    pub fn strip(&self) -> (f64, f64) {
        (self.n_d() - self.nu, 2.0 + self.n_d() + self.mu)
    }

    /// Gamma arguments `(A, B, C, D)` with `m = Γ(A)Γ(B) / (Γ(C)Γ(D))`.
    fn args(&self, z: Complex64) -> [Complex64; 4] {
        let n = self.n_d();
        [
            (z + self.nu - n) * 0.5,
            1.0 - (z - self.mu - n) * 0.5,
            1.0 - (z - self.nu - n) * 0.5,
            (z + self.mu - n) * 0.5,
        ]
    }

    fn check(&self, z: Complex64) -> Result<[Complex64; 4]> {
        let (lo, hi) = self.strip();
        if !(z.re > lo && z.re < hi) {
            return Err(domain(format!("Re z = {} outside the open strip ({lo}, {hi})", z.re)));
        }
        let args = self.args(z);
        let tol = 1e-8 * z.norm().max(1.0);
        for a in &args[..2] {
            if a.re <= 0.5 && a.im.abs() < tol && (a.re - a.re.round()).abs() < tol {
                return Err(domain(format!("z = {z} is within {tol:e} of a Gamma pole")));
            }
        }
        Ok(args)
    }
}

fn at_pole(a: Complex64) -> bool {
    a.im == 0.0 && a.re <= 0.0 && a.re == a.re.round()
}

/// `m_{ν,μ}(z)`.
pub fn m_eval(z: Complex64, p: &MultiplierParams) -> Result<Complex64> {
    let [a, b, c, d] = p.check(z)?;
    // 1/Γ vanishes at the poles of the denominator
    if at_pole(c) || at_pole(d) {
        return Ok(Complex64::new(0.0, 0.0));
    }
    if p.nu == p.mu {
        return Ok(Complex64::new(1.0, 0.0));
    }
    // A = D + δ and C = B + δ with δ = (ν - μ)/2
    let delta = 0.5 * (p.nu - p.mu);
    let l = if delta.abs() <= 1.0 {
        log_gamma_diff(d, delta)? - log_gamma_diff(b, delta)?
    } else {
        log_gamma(a)? - log_gamma(d)? + log_gamma(b)? - log_gamma(c)?
    };
    Ok(l.exp())
}

/// `n_{ν,μ}(z)` with `m' = m n / 2`.
pub fn n_eval(z: Complex64, p: &MultiplierParams) -> Result<Complex64> {
    let [a, b, c, d] = p.check(z)?;
    if p.nu == p.mu {
        return Ok(Complex64::new(0.0, 0.0));
    }
    Ok((digamma(a)? - digamma(d)?) + (digamma(c)? - digamma(b)?))
}

/// `m'(z) = m(z) n(z) / 2`.
pub fn m_derivative(z: Complex64, p: &MultiplierParams) -> Result<Complex64> {
    Ok(0.5 * m_eval(z, p)? * n_eval(z, p)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StripReport {
    pub alpha: f64,
    pub beta: f64,
    pub d_over_p: f64,
    pub margin_lower: f64,
    pub margin_upper: f64,
    pub admissible: bool,
}

/// Whether `d/p` lies in the open strip.
pub fn strip_check(params: &MultiplierParams, p: f64) -> Result<StripReport> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(validation(format!("p must lie in (1, ∞), got {p}")));
    }
    let (alpha, beta) = params.strip();
    let x = params.d as f64 / p;
    Ok(StripReport {
        alpha,
        beta,
        d_over_p: x,
        margin_lower: x - alpha,
        margin_upper: beta - x,
        admissible: x > alpha && x < beta,
    })
}

/// Open interval of admissible `p`, clamped to `(1, ∞)`.
pub fn admissible_p(params: &MultiplierParams) -> (f64, f64) {
    let (alpha, beta) = params.strip();
    let d = params.d as f64;
    let lo = (d / beta).max(1.0);
    let hi = if alpha > 0.0 { (d / alpha).max(1.0) } else { f64::INFINITY };
    (lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub re_z: f64,
    pub im_z: f64,
    pub abs_m: f64,
    pub abs_n_times_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StripScan {
    pub points: Vec<ScanPoint>,
    pub max_abs_m: f64,
    /// Largest Cauchy–Riemann residual, relative to `|m'|`.
    pub cauchy_riemann: f64,
}

/// Sample `|m|` and `|n||z|` on an `nx × ny` grid of
/// `[α + inset, β - inset] × [-y_max, y_max]`.
pub fn strip_scan(params: &MultiplierParams, inset: f64, y_max: f64, nx: usize, ny: usize) -> Result<StripScan> {
    let (alpha, beta) = params.strip();
    let (lo, hi) = (alpha + inset, beta - inset);
    if !(lo < hi) || nx < 2 || ny < 2 || !(y_max > 0.0) {
        return Err(validation("empty strip scan"));
    }
    let points = par::try_map_range(nx * ny, |idx| {
        let (i, j) = (idx / ny, idx % ny);
        let x = lo + (hi - lo) * i as f64 / (nx - 1) as f64;
        let y = -y_max + 2.0 * y_max * j as f64 / (ny - 1) as f64;
        let z = Complex64::new(x, y);
        let m = m_eval(z, params)?;
        let n = n_eval(z, params)?;
        Ok(ScanPoint {
            re_z: x,
            im_z: y,
            abs_m: m.norm(),
            abs_n_times_z: n.norm() * z.norm(),
        })
    })?;
    let max_abs_m = points.iter().map(|p| p.abs_m).fold(0.0, f64::max);
    let cr = par::try_map_range(nx * ny, |idx| {
        let i = idx / ny;
        if i == 0 || i == nx - 1 {
            return Ok(0.0);
        }
        let z = Complex64::new(points[idx].re_z, points[idx].im_z);
        cauchy_riemann_residual(z, params, 1e-5)
    })?;
    Ok(StripScan {
        points,
        max_abs_m,
        cauchy_riemann: cr.into_iter().fold(0.0, f64::max),
    })
}

/// `|∂_x m + i ∂_y m| / |m'|` by central differences.
pub fn cauchy_riemann_residual(z: Complex64, p: &MultiplierParams, h: f64) -> Result<f64> {
    let dx = (m_eval(z + h, p)? - m_eval(z - h, p)?) / (2.0 * h);
    let dy = (m_eval(z + Complex64::new(0.0, h), p)? - m_eval(z - Complex64::new(0.0, h), p)?) / (2.0 * h);
    let scale = dx.norm().max(m_eval(z, p)?.norm()).max(1e-300);
    Ok((dx + Complex64::i() * dy).norm() / scale)
}

/// Relative gap between the central difference of `m` and `m n / 2`.
pub fn derivative_check(z: Complex64, p: &MultiplierParams, h: f64) -> Result<f64> {
    let fd = (m_eval(z + h, p)? - m_eval(z - h, p)?) / (2.0 * h);
    let an = m_derivative(z, p)?;
    Ok((fd - an).norm() / an.norm().max(1e-300))
}

/// [`derivative_check`] with the fourth-order central stencil
/// `(m(z-2h) - 8m(z-h) + 8m(z+h) - m(z+2h)) / 12h`.
pub fn derivative_check4(z: Complex64, p: &MultiplierParams, h: f64) -> Result<f64> {
    let fd = (m_eval(z - 2.0 * h, p)? - 8.0 * m_eval(z - h, p)? + 8.0 * m_eval(z + h, p)? - m_eval(z + 2.0 * h, p)?) / (12.0 * h);
    let an = m_derivative(z, p)?;
    Ok((fd - an).norm() / an.norm().max(1e-300))
}

/// Steps scanned by [`derivative_check_scan`].
pub const DERIVATIVE_STEPS: [f64; 7] = [1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1];

/// Smallest [`derivative_check`] or [`derivative_check4`] residual over
/// [`DERIVATIVE_STEPS`], with its step. Large orders make `m'` small against
/// the rounding of `m`, which moves the best step up until the stencil's
/// truncation error shows.
pub fn derivative_check_scan(z: Complex64, p: &MultiplierParams) -> Result<(f64, f64)> {
    let mut best = (DERIVATIVE_STEPS[0], f64::INFINITY);
    for h in DERIVATIVE_STEPS {
        let r = derivative_check(z, p, h)?.min(derivative_check4(z, p, h)?);
        if r < best.1 {
            best = (h, r);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauReport {
    /// `(|Im z|, value)` samples.
    pub samples: Vec<(f64, f64)>,
    /// `max / min - 1` over the samples.
    pub spread: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn plateau(samples: Vec<(f64, f64)>, tolerance: f64) -> PlateauReport {
    let max = samples.iter().map(|s| s.1).fold(0.0, f64::max);
    let min = samples.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let spread = if min > 0.0 { max / min - 1.0 } else { f64::INFINITY };
    PlateauReport {
        samples,
        spread,
        tolerance,
        pass: spread <= tolerance,
    }
}

fn log_samples(y_lo: f64, y_hi: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| y_lo * (y_hi / y_lo).powf(i as f64 / (count - 1).max(1) as f64))
        .collect()
}

/// `|m'(x + iy)| · y` for log-spaced `y`; passes when the spread is at most
/// `tolerance`.
pub fn derivative_plateau(p: &MultiplierParams, x: f64, y_lo: f64, y_hi: f64, count: usize, tolerance: f64) -> Result<PlateauReport> {
    let samples = log_samples(y_lo, y_hi, count)
        .into_iter()
        .map(|y| Ok((y, m_derivative(Complex64::new(x, y), p)?.norm() * y)))
        .collect::<Result<Vec<_>>>()?;
    Ok(plateau(samples, tolerance))
}

/// `|n(x + iy)| · |z|^k` for log-spaced `y`.
pub fn n_plateau(p: &MultiplierParams, x: f64, y_lo: f64, y_hi: f64, count: usize, power: i32, tolerance: f64) -> Result<PlateauReport> {
    let samples = log_samples(y_lo, y_hi, count)
        .into_iter()
        .map(|y| {
            let z = Complex64::new(x, y);
            Ok((y, n_eval(z, p)?.norm() * z.norm().powi(power)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(plateau(samples, tolerance))
}

/// CSV with columns `re_z, im_z, abs_m, abs_n_times_z`.
pub fn export_scan_csv<W: Write>(scan: &StripScan, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in &scan.points {
        w.serialize(p).map_err(|e| validation(e.to_string()))?;
    }
    w.flush().map_err(|e| validation(e.to_string()))?;
    Ok(())
}
