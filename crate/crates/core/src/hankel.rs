//! Discrete Hankel transforms on a log-uniform half-line grid.
//!
//! The grid `r_i = r_min e^{ih}` doubles as the frequency grid, so in the
//! variable `t = ln r` the transform matrix depends on `i + k` only. A
//! [`HankelPlan`] caches that generating vector per order; applying it is
//! the dense `O(M^2)` sum.

use std::collections::HashMap;
use std::f64::consts::{LN_2, PI};
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{domain, validation, Error, Result};
use crate::par;
use crate::specfun::log_gamma;

/// Log-uniform samples of `(r_min, r_max)` with trapezoid weights for
/// `∫ · r^{d-1} dr`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadialGrid {
    pub r_min: f64,
    pub r_max: f64,
    pub m: usize,
    pub d: usize,
    /// Log step.
    pub h: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl PartialEq for RadialGrid {
    fn eq(&self, other: &Self) -> bool {
        self.r_min == other.r_min && self.r_max == other.r_max && self.m == other.m && self.d == other.d
    }
}

impl RadialGrid {
    pub fn new(r_min: f64, r_max: f64, m: usize, d: usize) -> Result<Self> {
        if !(r_min > 0.0 && r_max.is_finite() && r_min < r_max) {
            return Err(validation(format!("radial grid needs 0 < r_min < r_max, got [{r_min}, {r_max}]")));
        }
        if m < 64 {
            return Err(validation(format!("radial grid needs M >= 64, got {m}")));
        }
        if d < 1 {
            return Err(validation("dimension must be positive"));
        }
        let h = (r_max / r_min).ln() / (m - 1) as f64;
        let nodes: Vec<f64> = (0..m).map(|i| r_min * (i as f64 * h).exp()).collect();
        // dr = r dt: periodic trapezoid in t with weight h r^d
        let weights = nodes.iter().map(|r| h * r.powi(d as i32)).collect();
        Ok(Self {
            r_min,
            r_max,
            m,
            d,
            h,
            nodes,
            weights,
        })
    }

    /// The default `[1e-3, 1e3]`, `M = 512` grid.
    pub fn standard(d: usize) -> Self {
        Self::new(1e-3, 1e3, 512, d).expect("static grid")
    }

    /// Same range, twice the resolution (`2M - 1` points so old nodes are kept).
    pub fn refined(&self) -> Self {
        Self::new(self.r_min, self.r_max, 2 * self.m - 1, self.d).expect("refinement of a valid grid")
    }

    /// Same step, twice the points: the log range doubles about its centre.
    pub fn extended(&self) -> Self {
        let c = (self.r_min * self.r_max).sqrt();
        let half = (self.r_max / self.r_min).sqrt();
        let m = 2 * self.m - 1;
        Self::new(c / (half * half), c * half * half, m, self.d).expect("extension of a valid grid")
    }

    /// `n(d) = (d - 2)/2`.
    pub fn n_d(&self) -> f64 {
        (self.d as f64 - 2.0) / 2.0
    }
}

/// Samples on a [`RadialGrid`].
#[derive(Debug, Clone)]
pub struct RadialFunction {
    pub grid: Arc<RadialGrid>,
    pub values: Vec<Complex64>,
}

impl RadialFunction {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.m {
            return Err(validation(format!("expected {} samples, got {}", grid.m, values.len())));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(validation("radial samples must be finite"));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> Complex64) -> Self {
        let values = grid.nodes.iter().map(|&r| f(r)).collect();
        Self { grid, values }
    }

    pub fn from_real(grid: Arc<RadialGrid>, f: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(grid, |r| Complex64::new(f(r), 0.0))
    }

    pub fn zeros(grid: Arc<RadialGrid>) -> Self {
        let m = grid.m;
        Self {
            grid,
            values: vec![Complex64::new(0.0, 0.0); m],
        }
    }

    pub fn norm2(&self) -> f64 {
        weighted_lp_norm(self, 2.0)
    }

    /// `‖self - other‖_2`.
    pub fn distance(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .zip(&self.grid.weights)
            .map(|((a, b), w)| w * (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// `max(|f(r_0)|, |f(r_{M-1})|) / max |f|`.
    pub fn endpoint_ratio(&self) -> f64 {
        let peak = self.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if peak == 0.0 {
            return 0.0;
        }
        let ends = self.values[0].norm().max(self.values[self.grid.m - 1].norm());
        ends / peak
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }
}

/// `(∫ |f|^p r^{d-1} dr)^{1/p}` by the grid quadrature.
pub fn weighted_lp_norm(f: &RadialFunction, p: f64) -> f64 {
    f.values
        .iter()
        .zip(&f.grid.weights)
        .map(|(v, w)| w * v.norm().powf(p))
        .sum::<f64>()
        .powf(1.0 / p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HankelOptions {
    /// Reject inputs that have not decayed at the grid ends.
    pub strict: bool,
    /// Endpoint-to-peak ratio allowed in strict mode.
    pub decay_tol: f64,
}

impl Default for HankelOptions {
    fn default() -> Self {
        Self {
            strict: false,
            decay_tol: 1e-6,
        }
    }
}

/// Smooth cutoff equal to 1 on `[4 r_min, r_max / 4]` and vanishing outside
/// `[2 r_min, r_max / 2]`.
pub fn window(grid: &RadialGrid, r: f64) -> f64 {
    let t = r.ln();
    let (a, b) = ((2.0 * grid.r_min).ln(), (4.0 * grid.r_min).ln());
    let (c, d) = ((grid.r_max / 4.0).ln(), (grid.r_max / 2.0).ln());
    smooth_step((t - a) / (b - a)) * smooth_step((d - t) / (d - c))
}

fn smooth_step(x: f64) -> f64 {
    fn g(x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            (-1.0 / x).exp()
        }
    }
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        g(x) / (g(x) + g(1.0 - x))
    }
}

/// Multiply by [`window`].
pub fn apply_window(f: &RadialFunction) -> RadialFunction {
    let values = f
        .values
        .iter()
        .zip(&f.grid.nodes)
        .map(|(v, &r)| v * window(&f.grid, r))
        .collect();
    RadialFunction {
        grid: f.grid.clone(),
        values,
    }
}

/// Generating vector `c[n]`, `n = 0..2M-1`, of the discrete transform
/// `G_j = Σ_i c[i + j] F_i` acting on `F = r^{d/2} f`, `G = λ^{d/2} ℋ_ν f`.
///
/// In `t = ln r` the transform is a correlation with `x J_ν(x)`, whose
/// Fourier transform is the phase `2^{iω} Γ((ν+1+iω)/2) / Γ((ν+1-iω)/2)`.
/// `c` samples that kernel band-limited to the grid's Nyquist range, so the
/// quadrature is exact for band-limited `F` and does not alias at large `λr`
/// the way sampling `J_ν(λr)` directly does.
pub fn kernel_vector(grid: &RadialGrid, order: f64) -> Result<Vec<f64>> {
    if !(order.is_finite() && order >= 0.0) {
        return Err(domain(format!("Hankel order must be finite and non-negative, got {order}")));
    }
    let m = grid.m;
    let len = (8 * m).next_power_of_two();
    let t0 = grid.r_min.ln();
    let nyquist = PI / grid.h;
    let period = len as f64 * grid.h;
    let mut u = par::try_map_range(len, |k| {
        let kk = if 2 * k < len { k as f64 } else { k as f64 - len as f64 };
        let w = 2.0 * PI * kk / period;
        let taper = band_taper(w.abs() / nyquist);
        if taper == 0.0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let lg = log_gamma(Complex64::new(0.5 * (order + 1.0), 0.5 * w))?;
        Ok::<Complex64, Error>(Complex64::from_polar(taper, w * (LN_2 - 2.0 * t0) + 2.0 * lg.im))
    })?;
    FftPlanner::<f64>::new().plan_fft_forward(len).process(&mut u);
    Ok(u[..2 * m - 1].iter().map(|v| v.re / len as f64).collect())
}

/// 1 below 3/4 of the Nyquist frequency, smoothly 0 at it.
fn band_taper(x: f64) -> f64 {
    smooth_step((1.0 - x) * 4.0)
}

fn apply_kernel(gen: &[f64], f: &RadialFunction) -> RadialFunction {
    let grid = &f.grid;
    let m = grid.m;
    let half = grid.d as f64 / 2.0;
    let big: Vec<Complex64> = f.values.iter().zip(&grid.nodes).map(|(v, r)| v * r.powf(half)).collect();
    let values = par::map_range(m, |j| {
        let mut acc = Complex64::new(0.0, 0.0);
        for (g, v) in gen[j..j + m].iter().zip(&big) {
            acc += v * *g;
        }
        acc * grid.nodes[j].powf(-half)
    });
    RadialFunction {
        grid: grid.clone(),
        values,
    }
}

fn check_decay(f: &RadialFunction, opts: &HankelOptions) -> Result<()> {
    if opts.strict {
        let ratio = f.endpoint_ratio();
        if ratio >= opts.decay_tol {
            return Err(Error::Resolution(format!(
                "input has not decayed at the grid ends (endpoint/peak = {ratio:.3e}); window it first"
            )));
        }
    }
    Ok(())
}

/// `ℋ_ν f(λ) = ∫ (rλ)^{-n(d)} J_ν(rλ) f(r) r^{d-1} dr` by quadrature; the
/// result lives on the same grid read as `λ` nodes.
pub fn hankel_transform(f: &RadialFunction, order: f64, opts: &HankelOptions) -> Result<RadialFunction> {
    check_decay(f, opts)?;
    let gen = kernel_vector(&f.grid, order)?;
    Ok(apply_kernel(&gen, f))
}

/// `ℋ_ν ℋ_μ f` without a plan.
pub fn t_compose(f: &RadialFunction, nu: f64, mu: f64, opts: &HankelOptions) -> Result<RadialFunction> {
    let g = hankel_transform(f, mu, opts)?;
    hankel_transform(&g, nu, &HankelOptions { strict: false, ..*opts })
}

/// Per-grid cache of Hankel generating vectors.
#[derive(Debug)]
pub struct HankelPlan {
    grid: Arc<RadialGrid>,
    opts: HankelOptions,
    cache: Mutex<HashMap<u64, Arc<Vec<f64>>>>,
}

impl HankelPlan {
    pub fn new(grid: Arc<RadialGrid>) -> Self {
        Self::with_options(grid, HankelOptions::default())
    }

    pub fn with_options(grid: Arc<RadialGrid>, opts: HankelOptions) -> Self {
        Self {
            grid,
            opts,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn cached_orders(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }

    /// Generating vector for `order`, built on first use.
    pub fn kernel(&self, order: f64) -> Result<Arc<Vec<f64>>> {
        let key = order.to_bits();
        if let Some(k) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(k.clone());
        }
        // built outside the lock; a racing duplicate is harmless
        let v = Arc::new(kernel_vector(&self.grid, order)?);
        let mut guard = self.cache.lock().expect("cache lock");
        Ok(guard.entry(key).or_insert(v).clone())
    }

    /// Dense `M × M` matrix of `ℋ_ν` acting on samples of `f`.
    pub fn matrix(&self, order: f64) -> Result<Vec<Vec<f64>>> {
        let g = self.kernel(order)?;
        let (m, half) = (self.grid.m, self.grid.d as f64 / 2.0);
        let nodes = &self.grid.nodes;
        Ok((0..m)
            .map(|j| {
                (0..m)
                    .map(|i| g[i + j] * (nodes[i] / nodes[j]).powf(half))
                    .collect()
            })
            .collect())
    }

    pub fn transform(&self, f: &RadialFunction, order: f64) -> Result<RadialFunction> {
        if *f.grid != *self.grid {
            return Err(validation("function and plan use different grids"));
        }
        check_decay(f, &self.opts)?;
        let g = self.kernel(order)?;
        Ok(apply_kernel(&g, f))
    }

    /// `ℋ_ν ℋ_μ f`.
    pub fn t_compose(&self, f: &RadialFunction, nu: f64, mu: f64) -> Result<RadialFunction> {
        // ℋ_μ is an involution, so T_{μ,μ} = I exactly
        if nu == mu {
            return Ok(f.clone());
        }
        let g = self.transform(f, mu)?;
        let k = self.kernel(nu)?;
        Ok(apply_kernel(&k, &g))
    }

    /// `ℋ_ν [F(λ) ℋ_ν f]`.
    pub fn multiplier(&self, f: &RadialFunction, order: f64, symbol: impl Fn(f64) -> Complex64) -> Result<RadialFunction> {
        let mut g = self.transform(f, order)?;
        for (v, &l) in g.values.iter_mut().zip(&self.grid.nodes) {
            *v *= symbol(l);
        }
        let k = self.kernel(order)?;
        Ok(apply_kernel(&k, &g))
    }
}

/// `-f'' - ((d-1)/r) f' + μ^2 f / r^2`, with the `t = ln r` derivatives taken
/// spectrally (FFT) on the grid.
pub fn radial_operator(f: &RadialFunction, mu: f64) -> RadialFunction {
    let grid = &f.grid;
    let m = grid.m;
    // -r^{-2} (∂_t^2 + (d-2) ∂_t) + μ^2 r^{-2}
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);
    let mut buf = f.values.clone();
    fwd.process(&mut buf);
    let period = m as f64 * grid.h;
    let mut d1 = buf.clone();
    let mut d2 = buf;
    for k in 0..m {
        let kk = if k <= m / 2 { k as f64 } else { k as f64 - m as f64 };
        let w = 2.0 * PI * kk / period;
        // the Nyquist mode has no well-defined odd derivative
        let w1 = if m % 2 == 0 && k == m / 2 { 0.0 } else { w };
        d1[k] *= Complex64::new(0.0, w1);
        d2[k] *= -w * w;
    }
    inv.process(&mut d1);
    inv.process(&mut d2);
    let scale = 1.0 / m as f64;
    let dm2 = grid.d as f64 - 2.0;
    let values = (0..m)
        .map(|i| {
            let r2 = grid.nodes[i] * grid.nodes[i];
            (-(d2[i] + d1[i] * dm2) * scale + f.values[i] * mu * mu) / r2
        })
        .collect();
    RadialFunction {
        grid: grid.clone(),
        values,
    }
}

/// Log-Gaussian bump `exp(-(ln(r/c))^2 / (2σ^2))`.
pub fn log_bump(c: f64, sigma: f64) -> impl Fn(f64) -> f64 {
    move |r: f64| {
        let t = (r / c).ln() / sigma;
        (-0.5 * t * t).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        assert!(RadialGrid::new(1.0, 0.5, 128, 2).is_err());
        assert!(RadialGrid::new(1e-3, 1e3, 32, 2).is_err());
        let g = RadialGrid::new(1e-3, 1e3, 128, 2).unwrap();
        assert!(g.nodes.windows(2).all(|w| w[0] < w[1]));
        assert!((g.nodes[127] - 1e3).abs() < 1e-9);
    }

    #[test]
    fn cache_reuses_vectors() {
        let plan = HankelPlan::new(Arc::new(RadialGrid::new(1e-2, 1e2, 128, 2).unwrap()));
        let a = plan.kernel(0.5).unwrap();
        let b = plan.kernel(0.5).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(plan.cached_orders(), 1);
    }

    #[test]
    fn strict_mode_rejects_plateau() {
        let grid = Arc::new(RadialGrid::new(1e-2, 1e2, 128, 2).unwrap());
        let f = RadialFunction::from_real(grid.clone(), |_| 1.0);
        let strict = HankelOptions { strict: true, ..Default::default() };
        assert!(matches!(hankel_transform(&f, 0.0, &strict), Err(Error::Resolution(_))));
        let w = apply_window(&f);
        assert!(hankel_transform(&w, 0.0, &strict).is_ok());
    }
}
