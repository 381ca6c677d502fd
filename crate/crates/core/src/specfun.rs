//! Bessel functions of the first kind of real order, the complex log-gamma and
//! digamma functions, and the gamma ratio that drives the kernel series.

use num_complex::Complex64;

use crate::error::{domain, validation, Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Relative tolerance and term budget for series evaluations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyTarget {
    pub rel_tol: f64,
    pub max_terms: usize,
}

impl Default for AccuracyTarget {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            max_terms: 400,
        }
    }
}

impl AccuracyTarget {
    pub fn new(rel_tol: f64, max_terms: usize) -> Result<Self> {
        let t = Self { rel_tol, max_terms };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol < 1e-4) {
            return Err(validation(format!(
                "rel_tol must lie in (0, 1e-4), got {}",
                self.rel_tol
            )));
        }
        if self.max_terms < 50 {
            return Err(validation(format!(
                "max_terms must be at least 50, got {}",
                self.max_terms
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Bessel J

/// `J_order(x)` for `order >= 0`, `x >= 0`.
///
/// Regions: ascending series for small `x` relative to `sqrt(order)`, Hankel's
/// large-argument expansion where it converges to machine precision, forward
/// recurrence from the fractional order for `x` well past the turning point,
/// and Miller's backward recurrence with Neumann-sum normalisation elsewhere.
pub fn bessel_j(order: f64, x: f64, acc: &AccuracyTarget) -> Result<f64> {
    if !(order.is_finite() && order >= 0.0) {
        return Err(domain(format!("Bessel order must be finite and >= 0, got {order}")));
    }
    if !(x.is_finite() && x >= 0.0) {
        return Err(domain(format!("Bessel argument must be finite and >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(if order == 0.0 { 1.0 } else { 0.0 });
    }
    if x <= 6.0 || x * x <= 9.0 * (order + 1.0) {
        return bessel_j_series(order, x, acc);
    }
    if x >= 30.0 {
        if let Some(v) = bessel_j_hankel(order, x) {
            return Ok(v);
        }
        if x > order + 10.0 {
            return Ok(bessel_j_forward(order, x));
        }
    }
    bessel_j_miller(order, x, acc)
}

/// Ascending power series. Accurate while `x^2/4` is not large against
/// `order + 1`; used directly by [`bessel_j`] in that region.
pub fn bessel_j_series(order: f64, x: f64, acc: &AccuracyTarget) -> Result<f64> {
    if x == 0.0 {
        return Ok(if order == 0.0 { 1.0 } else { 0.0 });
    }
    let lead = (order * (0.5 * x).ln() - ln_gamma_real(order + 1.0)).exp();
    if lead == 0.0 {
        return Ok(0.0);
    }
    let q = -0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..=acc.max_terms {
        let kf = k as f64;
        term *= q / (kf * (order + kf));
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            return Ok(lead * sum);
        }
    }
    let residual = (term / sum).abs();
    if residual <= acc.rel_tol {
        Ok(lead * sum)
    } else {
        Err(Error::Convergence {
            what: format!("Bessel series J_{order}({x})"),
            residual,
            iterations: acc.max_terms,
        })
    }
}

/// Hankel's asymptotic expansion; `None` when the terms stop decreasing
/// before reaching machine precision.
pub fn bessel_j_hankel(order: f64, x: f64) -> Option<f64> {
    let mu = 4.0 * order * order;
    let inv8x = 1.0 / (8.0 * x);
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0_f64;
    let mut prev = f64::INFINITY;
    let mut converged = false;
    for k in 1..200 {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        term *= (mu - odd * odd) * inv8x / kf;
        let a = term.abs();
        if a == 0.0 {
            converged = true;
            break;
        }
        if a > prev && a > 1e-17 {
            return None;
        }
        prev = a;
        match k % 4 {
            1 => q += term,
            2 => p -= term,
            3 => q -= term,
            _ => p += term,
        }
        if a < 1e-17 {
            converged = true;
            break;
        }
    }
    if !converged {
        return None;
    }
    let phi = (0.5 * order + 0.25) * std::f64::consts::PI;
    let (sx, cx) = x.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let cos_chi = cx * cp + sx * sp;
    let sin_chi = sx * cp - cx * sp;
    Some((2.0 / (std::f64::consts::PI * x)).sqrt() * (p * cos_chi - q * sin_chi))
}

fn bessel_j_forward(order: f64, x: f64) -> f64 {
    let n = order.floor();
    let nu0 = order - n;
    let j0 = bessel_j_hankel(nu0, x).expect("Hankel expansion converges for x >= 30, order < 2");
    if n == 0.0 {
        return j0;
    }
    let mut jm = j0;
    let mut jc = bessel_j_hankel(nu0 + 1.0, x).expect("Hankel expansion converges for x >= 30, order < 2");
    for k in 1..(n as usize) {
        let jn = 2.0 * (nu0 + k as f64) / x * jc - jm;
        jm = jc;
        jc = jn;
    }
    jc
}

fn bessel_j_miller(order: f64, x: f64, acc: &AccuracyTarget) -> Result<f64> {
    let n = order.floor() as usize;
    let nu0 = order - n as f64;
    let k0 = (n as f64).max(x);
    let top = (k0 + 40.0 + 8.0 * k0.cbrt()).ceil() as usize;
    if top > 200_000 {
        return Err(Error::Convergence {
            what: format!("Miller recurrence J_{order}({x})"),
            residual: f64::INFINITY,
            iterations: acc.max_terms,
        });
    }
    // Neumann weights c_k = (nu0 + 2k) Γ(nu0 + k) / k!, c_0 = Γ(nu0 + 1).
    let g0 = ln_gamma_real(nu0 + 1.0).exp();
    let mut g = vec![0.0; top / 2 + 2];
    g[0] = g0;
    if g.len() > 1 {
        g[1] = g0;
    }
    for k in 1..g.len() - 1 {
        g[k + 1] = g[k] * (nu0 + k as f64) / (k as f64 + 1.0);
    }
    let weight = |k: usize| -> f64 {
        if k == 0 {
            g0
        } else {
            (nu0 + 2.0 * k as f64) * g[k]
        }
    };

    let mut j_up = 0.0;
    let mut j_cur = 1e-300_f64.sqrt();
    let mut sum = 0.0;
    let mut target = 0.0;
    if top == n {
        target = j_cur;
    }
    if top % 2 == 0 {
        sum += weight(top / 2) * j_cur;
    }
    for k in (0..top).rev() {
        let j_new = 2.0 * (nu0 + (k + 1) as f64) / x * j_cur - j_up;
        j_up = j_cur;
        j_cur = j_new;
        if k == n {
            target = j_cur;
        }
        if k % 2 == 0 {
            sum += weight(k / 2) * j_cur;
        }
        if j_cur.abs() > 1e250 {
            let s = 1e-250;
            j_cur *= s;
            j_up *= s;
            sum *= s;
            target *= s;
        }
    }
    let norm = (0.5 * x).powf(nu0);
    Ok(target * norm / sum)
}

// ---------------------------------------------------------------------------
// Gamma family

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for real `x > 0`.
pub fn ln_gamma_real(x: f64) -> f64 {
    if x < 0.5 {
        // Γ(x)Γ(1-x) = π / sin(πx), with sin(πx) > 0 on (0, 1/2).
        return std::f64::consts::PI.ln() - (std::f64::consts::PI * x).sin().ln() - ln_gamma_real(1.0 - x);
    }
    let z = x - 1.0;
    let mut s = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        s += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    LN_SQRT_2PI + (z + 0.5) * t.ln() - t + s.ln()
}

fn is_nonpositive_integer(z: Complex64) -> bool {
    z.im == 0.0 && z.re <= 0.0 && z.re == z.re.round()
}

/// `ln Γ(z)` on the branch continuous off the negative real axis; its
/// exponential is `Γ(z)`. Non-positive integers are poles.
pub fn log_gamma(z: Complex64) -> Result<Complex64> {
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(domain(format!("log_gamma of non-finite argument {z}")));
    }
    if is_nonpositive_integer(z) {
        return Err(domain(format!("log_gamma pole at {}", z.re)));
    }
    Ok(log_gamma_unchecked(z))
}

fn log_gamma_unchecked(z: Complex64) -> Complex64 {
    if z.re < 0.5 {
        let pi = std::f64::consts::PI;
        return Complex64::new(pi.ln(), 0.0) - log_sin_pi(z) - log_gamma_unchecked(1.0 - z);
    }
    let zm = z - 1.0;
    let mut s = Complex64::new(LANCZOS[0], 0.0);
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        s += *c / (zm + i as f64);
    }
    let t = zm + (LANCZOS_G + 0.5);
    (zm + 0.5) * t.ln() - t + s.ln() + LN_SQRT_2PI
}

// B_{2k} / (2k (2k - 1)) for k = 1..8
const STIRLING: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
    1.0 / 156.0,
    -3617.0 / 122400.0,
];

/// `ln(1 + u)` accurate for small `|u|`.
fn ln1p(u: Complex64) -> Complex64 {
    if u.norm() > 0.1 {
        return (1.0 + u).ln();
    }
    // ln(1 + u) = 2 atanh(u / (2 + u))
    let s = u / (2.0 + u);
    let s2 = s * s;
    let mut term = s;
    let mut sum = s;
    for k in 1..40 {
        term *= s2;
        let t = term / (2 * k + 1) as f64;
        sum += t;
        if t.norm() <= 1e-17 * sum.norm() {
            break;
        }
    }
    2.0 * sum
}

/// `e^t - 1` accurate for small `|t|`.
fn expm1(t: Complex64) -> Complex64 {
    if t.norm() > 0.1 {
        return t.exp() - 1.0;
    }
    let mut term = t;
    let mut sum = t;
    for k in 2..30 {
        term *= t / k as f64;
        sum += term;
        if term.norm() <= 1e-17 * sum.norm() {
            break;
        }
    }
    sum
}

/// `ln Γ(z + δ) - ln Γ(z)` without the cancellation of two separate
/// log-gamma values when `δ` is small. Agrees with the difference of
/// [`log_gamma`] values modulo `2πi`. Requires `|δ| <= 1`.
pub fn log_gamma_diff(z: Complex64, delta: f64) -> Result<Complex64> {
    if !(z.re.is_finite() && z.im.is_finite() && delta.is_finite()) {
        return Err(domain(format!("log_gamma_diff of non-finite argument ({z}, {delta})")));
    }
    if delta.abs() > 1.0 {
        return Err(validation(format!("log_gamma_diff needs |δ| <= 1, got {delta}")));
    }
    if is_nonpositive_integer(z) || is_nonpositive_integer(z + delta) {
        return Err(domain(format!("log_gamma_diff pole at ({z}, {delta})")));
    }
    if delta == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let mut w = z;
    let mut acc = Complex64::new(0.0, 0.0);
    while w.norm() < 20.0 || w.re < 1.0 {
        acc -= ln1p(delta / w);
        w += 1.0;
    }
    let l = ln1p(delta / w);
    // (w + δ - 1/2) ln(w + δ) - (w - 1/2) ln w - δ
    acc += (w - 0.5) * l + delta * (w + delta).ln() - delta;
    let mut pw = 1.0 / w;
    let inv2 = pw * pw;
    for (k, c) in STIRLING.iter().enumerate() {
        acc += *c * pw * expm1(-((2 * k + 1) as f64) * l);
        pw *= inv2;
    }
    Ok(acc)
}

/// `ln sin(πz)`, evaluated without overflow for large `|Im z|`.
fn log_sin_pi(z: Complex64) -> Complex64 {
    let pi = std::f64::consts::PI;
    if z.im > 10.0 {
        // sin(πz) = e^{-iπz} (1 - e^{2πiz}) i/2
        let w = (Complex64::i() * 2.0 * pi * z).exp();
        -Complex64::i() * pi * z + Complex64::new(-std::f64::consts::LN_2, 0.5 * pi) + (1.0 - w).ln()
    } else if z.im < -10.0 {
        log_sin_pi(z.conj()).conj()
    } else {
        (pi * z).sin().ln()
    }
}

/// `π cot(πz)` with the large-`|Im z|` limit taken analytically.
fn pi_cot_pi(z: Complex64) -> Complex64 {
    let pi = std::f64::consts::PI;
    let x = 2.0 * pi * z.re;
    let y = 2.0 * pi * z.im;
    if y.abs() > 40.0 {
        return Complex64::new(0.0, -pi * y.signum());
    }
    let den = y.cosh() - x.cos();
    Complex64::new(x.sin() / den, -y.sinh() / den) * pi
}

// B_{2k} / (2k) for k = 1..8
const DIGAMMA_ASYM: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
    -3617.0 / 8160.0,
];

/// Digamma `ψ(z) = Γ'(z)/Γ(z)`. Non-positive integers are poles.
pub fn digamma(z: Complex64) -> Result<Complex64> {
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(domain(format!("digamma of non-finite argument {z}")));
    }
    if is_nonpositive_integer(z) {
        return Err(domain(format!("digamma pole at {}", z.re)));
    }
    Ok(digamma_unchecked(z))
}

fn digamma_unchecked(z: Complex64) -> Complex64 {
    if z.re < 0.5 {
        return digamma_unchecked(1.0 - z) - pi_cot_pi(z);
    }
    let mut w = z;
    let mut shift = Complex64::new(0.0, 0.0);
    while w.norm() < 10.0 {
        shift -= 1.0 / w;
        w += 1.0;
    }
    shift + digamma_asymptotic(w)
}

/// Asymptotic series `ln z - 1/(2z) - Σ B_{2k} / (2k z^{2k})`, eight terms.
pub fn digamma_asymptotic(z: Complex64) -> Complex64 {
    let inv2 = 1.0 / (z * z);
    let mut pw = inv2;
    let mut s = Complex64::new(0.0, 0.0);
    for c in DIGAMMA_ASYM {
        s += c * pw;
        pw *= inv2;
    }
    z.ln() - 0.5 / z - s
}

/// Euler–Mascheroni constant.
pub const fn euler_gamma() -> f64 {
    EULER_GAMMA
}

/// `Γ(a+n+1) Γ(b+n+1) / (Γ(a+b+n+1) Γ(n+1))` for `a > 0`, `|b| <= 1`.
pub fn gamma_ratio(a: f64, b: f64, n: u64) -> Result<f64> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(domain(format!("gamma_ratio needs a > 0, got {a}")));
    }
    if !(b.abs() <= 1.0) {
        return Err(domain(format!("gamma_ratio needs |b| <= 1, got {b}")));
    }
    let nf = n as f64;
    if b + nf + 1.0 <= 0.0 {
        return Err(domain(format!("gamma_ratio pole: b + n + 1 = {}", b + nf + 1.0)));
    }
    let l = ln_gamma_real(a + nf + 1.0) - ln_gamma_real(a + b + nf + 1.0) + ln_gamma_real(b + nf + 1.0)
        - ln_gamma_real(nf + 1.0);
    Ok(l.exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn bessel_small_values() {
        let acc = AccuracyTarget::default();
        assert!((bessel_j(0.0, 1.0, &acc).unwrap() - 0.765_197_686_557_966_6).abs() < 1e-14);
        assert!((bessel_j(1.0, 1.0, &acc).unwrap() - 0.440_050_585_744_933_5).abs() < 1e-14);
        assert_eq!(bessel_j(0.0, 0.0, &acc).unwrap(), 1.0);
        assert_eq!(bessel_j(2.5, 0.0, &acc).unwrap(), 0.0);
    }

    #[test]
    fn bessel_rejects_bad_input() {
        let acc = AccuracyTarget::default();
        assert!(matches!(bessel_j(-0.5, 1.0, &acc), Err(Error::Domain(_))));
        assert!(matches!(bessel_j(1.0, -1.0, &acc), Err(Error::Domain(_))));
    }

    #[test]
    fn series_budget_failure_reports_residual() {
        let acc = AccuracyTarget { rel_tol: 1e-12, max_terms: 3 };
        match bessel_j_series(0.0, 5.0, &acc) {
            Err(Error::Convergence { residual, .. }) => assert!(residual > 1e-12),
            other => panic!("expected convergence failure, got {other:?}"),
        }
    }

    #[test]
    fn accuracy_target_validation() {
        assert!(AccuracyTarget::new(1e-3, 100).is_err());
        assert!(AccuracyTarget::new(1e-10, 10).is_err());
        assert!(AccuracyTarget::new(1e-10, 50).is_ok());
    }

    #[test]
    fn log_gamma_poles() {
        assert!(log_gamma(c(0.0, 0.0)).is_err());
        assert!(log_gamma(c(-3.0, 0.0)).is_err());
        assert!(log_gamma(c(-3.0, 1e-9)).is_ok());
        assert!(digamma(c(-2.0, 0.0)).is_err());
    }

    #[test]
    fn digamma_at_one() {
        let v = digamma(c(1.0, 0.0)).unwrap();
        assert!((v.re + EULER_GAMMA).abs() < 1e-14 && v.im.abs() < 1e-15);
    }

    #[test]
    fn gamma_ratio_special() {
        assert!((gamma_ratio(3.0, 0.0, 7).unwrap() - 1.0).abs() < 1e-13);
        assert!((gamma_ratio(1.0, 0.5, 0).unwrap() - 2.0 / 3.0).abs() < 1e-13);
        assert!(gamma_ratio(1.0, -1.0, 0).is_err());
        assert!(gamma_ratio(0.0, 0.5, 0).is_err());
        assert!(gamma_ratio(1.0, 1.5, 0).is_err());
    }
}
