//! The off-diagonal kernel `K̃(r, s) = s^{d/2+1-d/p} r^{-(d/2-1-d/p)} ∫ λ J_μ̃(sλ) J_ν̃(rλ) dλ`:
//! its Gamma-ratio series, an independent oscillatory-integral oracle, the
//! near-diagonal split `K¹ + K² + K³`, and a probe of the log-scale singular
//! operator that controls the middle piece.

use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, validation, Error, Result};
use crate::hankel::RadialGrid;
use crate::par;
use crate::specfun::{bessel_j, ln_gamma_real, AccuracyTarget};

/// Hard cap on series terms.
pub const MAX_TERMS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub mu_tilde: f64,
    pub nu_tilde: f64,
    pub d: usize,
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// `s < r`, coefficients `A⁺`.
    Plus,
    /// `s > r`, coefficients `A⁻`.
    Minus,
}

impl Branch {
    fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }
}

impl KernelParams {
    pub fn new(mu_tilde: f64, nu_tilde: f64, d: usize, p: f64) -> Result<Self> {
        if !(mu_tilde >= 0.0 && nu_tilde >= 0.0 && mu_tilde.is_finite() && nu_tilde.is_finite()) {
            return Err(validation(format!("effective orders must be finite and >= 0, got {mu_tilde}, {nu_tilde}")));
        }
        if d < 1 {
            return Err(validation("dimension must be positive"));
        }
        if !(p > 1.0 && p.is_finite()) {
            return Err(validation(format!("p must lie in (1, ∞), got {p}")));
        }
        let k = Self { mu_tilde, nu_tilde, d, p };
        if k.b().abs() > 1.0 {
            return Err(validation(format!("|b| = {} exceeds 1", k.b().abs())));
        }
        Ok(k)
    }

    pub fn a(&self) -> f64 {
        0.5 * (self.mu_tilde + self.nu_tilde)
    }

    pub fn b(&self) -> f64 {
        0.5 * (self.mu_tilde - self.nu_tilde)
    }

    fn half_d(&self) -> f64 {
        0.5 * self.d as f64
    }

    fn d_over_p(&self) -> f64 {
        self.d as f64 / self.p
    }

    /// Power of the ratio in front of the series.
    fn exponent(&self, branch: Branch) -> f64 {
        match branch {
            Branch::Plus => self.half_d() + 1.0 - self.d_over_p() + self.mu_tilde,
            Branch::Minus => self.d_over_p() - self.half_d() + 1.0 + self.nu_tilde,
        }
    }

    /// `sin(∓πb)/π`, the large-`n` limit of the series coefficients.
    fn limit(&self, branch: Branch) -> f64 {
        (-branch.sign() * PI * self.b()).sin() / PI
    }

    /// Effective `b` of the branch: `A⁻(a, b) = A⁺(a, -b)`.
    fn branch_b(&self, branch: Branch) -> f64 {
        branch.sign() * self.b()
    }

    /// `c_0 = sin(∓πb)/π · A_0`, written as `Γ(a+1) / (Γ(a±b+1) Γ(∓b))` so
    /// that it stays finite at the poles of `Γ(±b+1)`.
    fn lead(&self, branch: Branch) -> f64 {
        let a = self.a();
        let b = self.branch_b(branch);
        (ln_gamma_real(a + 1.0) - ln_gamma_real(a + b + 1.0)).exp() * recip_gamma_small(-b)
    }

    /// `c_{n+1} / c_n`.
    fn ratio(&self, branch: Branch, n: usize) -> f64 {
        let a = self.a();
        let b = self.branch_b(branch);
        let n1 = n as f64 + 1.0;
        1.0 + a * b / (n1 * (a + b + n1))
    }
}

/// `1/Γ(x)` for `x ∈ [-1, 1]`.
fn recip_gamma_small(x: f64) -> f64 {
    x * (x + 1.0) * (-ln_gamma_real(x + 2.0)).exp()
}

/// `A±_n`. The minus branch has `Γ(1-b+n) / Γ(a-b+n+1)`.
pub fn coeff_a(params: &KernelParams, n: usize, branch: Branch) -> Result<f64> {
    let a = params.a();
    let b = params.branch_b(branch);
    if b == 0.0 {
        return Ok(1.0);
    }
    let nf = n as f64;
    if b + nf + 1.0 <= 0.0 {
        return Err(domain(format!("Γ pole: b + n + 1 = {} for n = {n}", b + nf + 1.0)));
    }
    let l = ln_gamma_real(a + nf + 1.0) - ln_gamma_real(a + b + nf + 1.0) + ln_gamma_real(b + nf + 1.0)
        - ln_gamma_real(nf + 1.0);
    Ok(l.exp())
}

/// `E⁺_n = A⁺_n - 1 + ab/(n+1)` and `E⁻_n = A⁻_n - 1 - ab/(n+1)`.
pub fn coeff_e(params: &KernelParams, n: usize, branch: Branch) -> Result<f64> {
    let ab = params.a() * params.b();
    Ok(coeff_a(params, n, branch)? - 1.0 + branch.sign() * ab / (n as f64 + 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesValue {
    pub value: f64,
    pub terms: usize,
    /// Bound on the discarded tail, in the units of `value`.
    pub tail_bound: f64,
}

/// One branch of the series at ratio `q ∈ (0, 1)`.
///
/// The coefficients `c_n = sin(∓πb)/π · A_n` are monotone in `|c_n|` with
/// limit `|sin(πb)|/π`, so the tail after `N` terms is at most
/// `max(|c_{N+1}|, |sin πb|/π) q^{2(N+1)} / (1 - q^2)`; the reported bound adds
/// the accumulated rounding of the partial sum.
pub fn kernel_series_branch(q: f64, branch: Branch, params: &KernelParams, rel_tol: f64) -> Result<SeriesValue> {
    if !(q > 0.0 && q < 1.0) {
        return Err(domain(format!("series ratio must lie in (0, 1), got {q}")));
    }
    if !(rel_tol >= 1e-12) {
        return Err(validation(format!("rel_tol must be >= 1e-12, got {rel_tol}")));
    }
    let q2 = q * q;
    let limit = params.limit(branch).abs();
    let front = 2.0 * q.powf(params.exponent(branch));
    let mut c = params.lead(branch);
    let mut pw = 1.0;
    let mut sum = 0.0;
    for n in 0..MAX_TERMS {
        sum += c * pw;
        pw *= q2;
        c *= params.ratio(branch, n);
        let tail = c.abs().max(limit) * pw / (1.0 - q2);
        if tail <= rel_tol * sum.abs() || tail == 0.0 {
            return Ok(SeriesValue {
                value: front * sum,
                terms: n + 1,
                tail_bound: front * (tail + (n + 1) as f64 * f64::EPSILON * sum.abs()),
            });
        }
    }
    Err(Error::Convergence {
        what: format!("kernel series at q = {q}"),
        residual: c.abs().max(limit) * pw / ((1.0 - q2) * sum.abs()),
        iterations: MAX_TERMS,
    })
}

/// The branch series truncated after exactly `terms` terms.
pub fn kernel_series_terms(q: f64, branch: Branch, params: &KernelParams, terms: usize) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(domain(format!("series ratio must lie in (0, 1), got {q}")));
    }
    let q2 = q * q;
    let mut c = params.lead(branch);
    let mut pw = 1.0;
    let mut sum = 0.0;
    for n in 0..terms {
        sum += c * pw;
        pw *= q2;
        c *= params.ratio(branch, n);
    }
    Ok(2.0 * q.powf(params.exponent(branch)) * sum)
}

/// `K̃(r, s)` for `s ≠ r`.
pub fn kernel_series_eval(r: f64, s: f64, params: &KernelParams, rel_tol: f64) -> Result<SeriesValue> {
    check_pair(r, s)?;
    if s < r {
        kernel_series_branch(s / r, Branch::Plus, params, rel_tol)
    } else {
        kernel_series_branch(r / s, Branch::Minus, params, rel_tol)
    }
}

fn check_pair(r: f64, s: f64) -> Result<()> {
    if !(r > 0.0 && s > 0.0 && r.is_finite() && s.is_finite()) {
        return Err(domain(format!("kernel needs positive finite (r, s), got ({r}, {s})")));
    }
    if r == s {
        return Err(domain("the kernel is not evaluated on the diagonal"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    /// Leading `1/(1 - q^2)` part.
    pub k1: f64,
    /// Logarithmic part `∝ ab ln(1 - q^2)`.
    pub k2: f64,
    /// Remainder summed from the `E±` coefficients.
    pub k3: f64,
    pub terms: usize,
}

impl Decomposition {
    pub fn total(&self) -> f64 {
        self.k1 + self.k2 + self.k3
    }
}

/// `K̃ = K¹ + K² + K³` for `1/2 < s/r < 2`.
///
/// With `q` the ratio below one and `c_n = sin(∓πb)/π A_n`,
/// `Σ c_n q^{2n} = L/(1-q^2) ± L ab ln(1-q^2)/q^2 + Σ L E_n q^{2n}`
/// where `L = sin(∓πb)/π` (upper signs for `s < r`).
pub fn kernel_decompose(r: f64, s: f64, params: &KernelParams, rel_tol: f64) -> Result<Decomposition> {
    check_pair(r, s)?;
    let t = s / r;
    if !(t > 0.5 && t < 2.0) {
        return Err(domain(format!("decomposition needs 1/2 < s/r < 2, got {t}")));
    }
    if !(rel_tol >= 1e-12) {
        return Err(validation(format!("rel_tol must be >= 1e-12, got {rel_tol}")));
    }
    let (q, branch) = if s < r { (t, Branch::Plus) } else { (1.0 / t, Branch::Minus) };
    let q2 = q * q;
    let ab = params.a() * params.b();
    let l = params.limit(branch);
    let sg = branch.sign();
    let front = 2.0 * q.powf(params.exponent(branch));
    let k1 = front * l / (1.0 - q2);
    let log = (-q2).ln_1p();
    let k2 = front * sg * ab * l * log / q2;

    // e_n = c_n - L + sg L ab/(n+1) = O(1/(n+1)^2)
    let mut c = params.lead(branch);
    let mut pw = 1.0;
    let mut sum = 0.0;
    let mut scale = 0.0_f64;
    let head = (k1.abs() + k2.abs()) / front;
    for n in 0..MAX_TERMS {
        let n1 = n as f64 + 1.0;
        let e = c - l + sg * l * ab / n1;
        sum += e * pw;
        scale = scale.max(e.abs() * n1 * n1);
        pw *= q2;
        c *= params.ratio(branch, n);
        let n2 = n1 + 1.0;
        let tail = 2.0 * scale * pw / (n2 * n2 * (1.0 - q2));
        if tail <= rel_tol * (head + sum.abs()) || tail == 0.0 {
            return Ok(Decomposition {
                k1,
                k2,
                k3: front * sum,
                terms: n + 1,
            });
        }
    }
    Err(Error::Convergence {
        what: format!("remainder series at q = {q}"),
        residual: scale * pw,
        iterations: MAX_TERMS,
    })
}

// ---------------------------------------------------------------------------
// Oracle

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleOptions {
    /// Number of damping levels `ε_k = ε_0 / 2^k`.
    pub levels: usize,
    /// Relative accuracy aimed for; a larger extrapolation spread by 10× is
    /// reported as failure.
    pub target: f64,
    /// Gauss–Legendre points per panel of length `2π/(r+s)`.
    pub points: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            levels: 8,
            target: 1e-7,
            points: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleValue {
    pub value: f64,
    pub error_estimate: f64,
    pub nodes: usize,
}

/// `K̃(r, s)` from the damped integral `∫ λ J_μ̃(sλ) J_ν̃(rλ) e^{-ελ} dλ`.
///
/// The equal-order integral `∫ λ J_μ̃(sλ) J_μ̃(rλ) e^{-ελ} dλ`, whose limit
/// vanishes off the diagonal, is subtracted as a control variate. The damped
/// integral is analytic in `ε` for `|ε| < |r - s|`; it is computed at
/// `ε_0 = |r - s|/2` and successive halvings and extrapolated to `ε = 0` by
/// Neville's scheme.
pub fn kernel_oracle(r: f64, s: f64, params: &KernelParams, opts: &OracleOptions) -> Result<OracleValue> {
    check_pair(r, s)?;
    if opts.levels < 3 || opts.points < 4 {
        return Err(validation("oracle needs at least 3 levels and 4 points per panel"));
    }
    let k = opts.levels;
    let eps: Vec<f64> = (0..k).map(|i| 0.5 * (r - s).abs() / 2f64.powi(i as i32)).collect();
    let lam_max = 42.0 / eps[k - 1];
    let width = 2.0 * PI / (r + s);
    let panels = (lam_max / width).ceil() as usize;
    let (x, w) = gauss_legendre(opts.points);
    let acc = AccuracyTarget::default();
    let (mu, nu) = (params.mu_tilde, params.nu_tilde);
    let same = mu == nu;
    let sums = par::try_map_range(panels, |pi| -> Result<Vec<f64>> {
        let mut out = vec![0.0; k];
        if same {
            return Ok(out);
        }
        let lo = pi as f64 * width;
        for (xi, wi) in x.iter().zip(&w) {
            let lam = lo + 0.5 * width * (xi + 1.0);
            let js = bessel_j(mu, s * lam, &acc)?;
            if js == 0.0 {
                continue;
            }
            let g = lam * js * (bessel_j(nu, r * lam, &acc)? - bessel_j(mu, r * lam, &acc)?);
            let gw = 0.5 * width * wi * g;
            for (o, e) in out.iter_mut().zip(&eps) {
                *o += gw * (-e * lam).exp();
            }
        }
        Ok(out)
    })?;
    let mut totals = vec![0.0; k];
    for p in &sums {
        for (t, v) in totals.iter_mut().zip(p) {
            *t += v;
        }
    }
    let front = s.powf(params.half_d() + 1.0 - params.d_over_p()) * r.powf(-(params.half_d() - 1.0 - params.d_over_p()));
    let full = neville_at_zero(&eps, &totals);
    let reduced = neville_at_zero(&eps[1..], &totals[1..]);
    let value = front * full;
    let error_estimate = front * (full - reduced).abs();
    if value != 0.0 && error_estimate > 10.0 * opts.target * value.abs() {
        return Err(Error::Convergence {
            what: format!("kernel oracle at (r, s) = ({r}, {s})"),
            residual: error_estimate / value.abs(),
            iterations: k,
        });
    }
    Ok(OracleValue {
        value,
        error_estimate,
        nodes: panels * opts.points,
    })
}

/// `K̃(r, s)` from the closed form of the undamped integral as a Gauss
/// hypergeometric function, evaluated through its Euler integral:
///
/// `K̃ = -(2a/π) sin(±πb) q^e ∫_0^1 t^{±b} (1-t)^{a-1} (1-q²t)^{-a-1} dt`
///
/// with `q = min(r, s)/max(r, s)`, `e` the branch exponent and the sign `+`
/// for `s < r`. The integral is summed by tanh-sinh quadrature, halving the
/// step until two levels agree to `target`.
pub fn kernel_euler_oracle(r: f64, s: f64, params: &KernelParams, target: f64) -> Result<OracleValue> {
    check_pair(r, s)?;
    if !(target >= 1e-15) {
        return Err(validation(format!("oracle target must be >= 1e-15, got {target}")));
    }
    let branch = if s < r { Branch::Plus } else { Branch::Minus };
    let q = if s < r { s / r } else { r / s };
    let b = params.branch_b(branch);
    let a = params.a();
    let sin = (PI * b).sin();
    if sin == 0.0 {
        return Ok(OracleValue {
            value: 0.0,
            error_estimate: 0.0,
            nodes: 0,
        });
    }
    let z = q * q;
    // ln of the integrand times dt/dx at x, with t = 1/(1 + e^{-π sinh x})
    let log_term = |x: f64| {
        let u = PI * x.sinh();
        let ln_t = -softplus(-u);
        let ln_1mt = -softplus(u);
        let t = ln_t.exp();
        b * ln_t + (a - 1.0) * ln_1mt - (a + 1.0) * (-z * t).ln_1p() + ln_t + ln_1mt + (PI * x.cosh()).ln()
    };
    let x_max = 6.0;
    let mut h = 0.5;
    let mut sum = log_term(0.0).exp();
    let mut k = 1;
    while k as f64 * h <= x_max {
        sum += log_term(k as f64 * h).exp() + log_term(-(k as f64) * h).exp();
        k += 1;
    }
    let mut prev = sum * h;
    let mut nodes = 2 * k - 1;
    for _ in 0..12 {
        // new nodes at odd multiples of h/2
        let mut add = 0.0;
        let mut i = 1;
        while i as f64 * 0.5 * h <= x_max {
            let x = i as f64 * 0.5 * h;
            add += log_term(x).exp() + log_term(-x).exp();
            nodes += 2;
            i += 2;
        }
        sum += add;
        h *= 0.5;
        let cur = sum * h;
        if (cur - prev).abs() <= target * cur.abs() {
            let front = -2.0 * a * sin / PI * q.powf(params.exponent(branch));
            return Ok(OracleValue {
                value: front * cur,
                error_estimate: (front * (cur - prev)).abs(),
                nodes,
            });
        }
        prev = cur;
    }
    Err(Error::Convergence {
        what: format!("Euler-integral oracle at (r, s) = ({r}, {s})"),
        residual: 1.0,
        iterations: 12,
    })
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Value at `0` of the interpolating polynomial through `(x_i, y_i)`.
fn neville_at_zero(x: &[f64], y: &[f64]) -> f64 {
    let mut p = y.to_vec();
    let n = x.len();
    for m in 1..n {
        for i in 0..n - m {
            p[i] = (x[i + m] * p[i] - x[i] * p[i + 1]) / (x[i + m] - x[i]);
        }
    }
    p[0]
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

// ---------------------------------------------------------------------------
// Singular operator on the half-line

/// `T f(r) = ∫_{r/2}^{r} (s/r)^{α} f(s)/(1-(s/r)^2) ds/s - ∫_r^{2r} (r/s)^{β} f(s)/(1-(r/s)^2) ds/s`
/// with `α = μ + 1 + d/2 - d/p`, `β = d/p - d/2 + 1 + ν`, on the log-uniform
/// grid. The two halves cancel to a principal value at `s = r`, realised by
/// omitting the diagonal node.
pub fn cz_apply(grid: &RadialGrid, f: &[f64], p: f64, mu: f64, nu: f64) -> Result<Vec<f64>> {
    if f.len() != grid.m {
        return Err(validation(format!("expected {} samples, got {}", grid.m, f.len())));
    }
    let (alpha, beta) = cz_exponents(grid.d, p, mu, nu);
    let h = grid.h;
    let band = (std::f64::consts::LN_2 / h + 1e-9).floor() as usize;
    let kern: Vec<f64> = (1..=band)
        .map(|m| {
            let tau = m as f64 * h;
            (-alpha * tau).exp() / (-(-2.0 * tau).exp_m1())
        })
        .collect();
    let kern_up: Vec<f64> = (1..=band)
        .map(|m| {
            let tau = m as f64 * h;
            (-beta * tau).exp() / (-(-2.0 * tau).exp_m1())
        })
        .collect();
    let m = grid.m;
    Ok(par::map_range(m, |i| {
        let mut acc = 0.0;
        for (k, (&kd, &ku)) in kern.iter().zip(&kern_up).enumerate() {
            let o = k + 1;
            if i >= o {
                acc += kd * f[i - o];
            }
            if i + o < m {
                acc -= ku * f[i + o];
            }
        }
        acc * h
    }))
}

fn cz_exponents(d: usize, p: f64, mu: f64, nu: f64) -> (f64, f64) {
    let hd = 0.5 * d as f64;
    let dp = d as f64 / p;
    (mu + 1.0 + hd - dp, dp - hd + 1.0 + nu)
}

/// `(Σ |f_i|^p h)^{1/p}`, the `L^p(dr/r)` norm on the grid.
pub fn log_lp_norm(grid: &RadialGrid, f: &[f64], p: f64) -> f64 {
    (f.iter().map(|v| v.abs().powf(p)).sum::<f64>() * grid.h).powf(1.0 / p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CzReport {
    pub ratio: f64,
    pub ratio_refined: f64,
    /// `ratio_refined / ratio`.
    pub growth: f64,
}

/// Number of random test functions in [`cz_probe`].
pub const CZ_FAMILY: usize = 20;

/// Max of `‖Tf‖_p / ‖f‖_p` over seeded random sums of log-Gaussian bumps,
/// on `grid` and on its refinement.
pub fn cz_probe(grid: &RadialGrid, p: f64, mu: f64, nu: f64, seed: u64) -> Result<CzReport> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(validation(format!("p must lie in (1, ∞), got {p}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (t0, t1) = (grid.r_min.ln(), grid.r_max.ln());
    let (c0, c1) = (t0 + 0.3 * (t1 - t0), t1 - 0.3 * (t1 - t0));
    let family: Vec<Vec<(f64, f64, f64)>> = (0..CZ_FAMILY)
        .map(|_| {
            (0..3)
                .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(c0..c1), rng.gen_range(0.1..0.8)))
                .collect()
        })
        .collect();
    let ratio_on = |g: &RadialGrid| -> Result<f64> {
        let mut best = 0.0_f64;
        for bumps in &family {
            let f: Vec<f64> = g
                .nodes
                .iter()
                .map(|r| {
                    let t = r.ln();
                    bumps.iter().map(|(c, m, s)| c * (-(t - m).powi(2) / (2.0 * s * s)).exp()).sum()
                })
                .collect();
            let tf = cz_apply(g, &f, p, mu, nu)?;
            let nf = log_lp_norm(g, &f, p);
            if nf > 0.0 {
                best = best.max(log_lp_norm(g, &tf, p) / nf);
            }
        }
        Ok(best)
    };
    let ratio = ratio_on(grid)?;
    let ratio_refined = ratio_on(&grid.refined())?;
    Ok(CzReport {
        ratio,
        ratio_refined,
        growth: ratio_refined / ratio,
    })
}

// ---------------------------------------------------------------------------
// Output

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelRow {
    pub r: f64,
    pub s: f64,
    pub series_value: f64,
    pub oracle_value: f64,
    pub rel_err: f64,
    pub terms_used: usize,
}

/// Series and oracle at one pair.
pub fn kernel_row(r: f64, s: f64, params: &KernelParams, rel_tol: f64, opts: &OracleOptions) -> Result<KernelRow> {
    let sv = kernel_series_eval(r, s, params, rel_tol)?;
    let ov = kernel_oracle(r, s, params, opts)?;
    let rel_err = if sv.value == 0.0 && ov.value == 0.0 {
        0.0
    } else {
        (sv.value - ov.value).abs() / sv.value.abs().max(ov.value.abs())
    };
    Ok(KernelRow {
        r,
        s,
        series_value: sv.value,
        oracle_value: ov.value,
        rel_err,
        terms_used: sv.terms,
    })
}

/// Series and [`kernel_euler_oracle`] at one pair.
pub fn kernel_row_euler(r: f64, s: f64, params: &KernelParams, rel_tol: f64) -> Result<KernelRow> {
    let sv = kernel_series_eval(r, s, params, rel_tol)?;
    let ov = kernel_euler_oracle(r, s, params, 1e-13)?;
    let rel_err = if sv.value == 0.0 && ov.value == 0.0 {
        0.0
    } else {
        (sv.value - ov.value).abs() / sv.value.abs().max(ov.value.abs())
    };
    Ok(KernelRow {
        r,
        s,
        series_value: sv.value,
        oracle_value: ov.value,
        rel_err,
        terms_used: sv.terms,
    })
}

/// CSV with columns `r, s, series_value, oracle_value, rel_err, terms_used`.
pub fn export_kernel_csv<W: Write>(rows: &[KernelRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(|e| validation(e.to_string()))?;
    }
    w.flush().map_err(|e| validation(e.to_string()))?;
    Ok(())
}
