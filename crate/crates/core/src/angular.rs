//! Angular problem: the Hill operator `(-i d/dθ + A(θ))^2 + a(θ)` on the
//! circle, solved by Fourier–Galerkin after removing the non-constant part of
//! the flux by a gauge transformation.
//!
//! Eigenfunctions are stored in the reduced frame. A Galerkin coefficient
//! vector `c` over `n ∈ [-N, N]` represents
//! `φ(θ) = phase(θ) Σ_n c_n e^{inθ} / sqrt(2π)` with
//! `phase(θ) = exp(-i∫_0^θ A + i Ā θ)`, and the quasi-periodic Galerkin basis
//! is `e^{i(n+Ā)θ}`.

use std::f64::consts::PI;
use std::io::Write;

use faer::complex_native::c64;
use faer::{Mat, Side};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::par;

/// Real trigonometric polynomial stored by complex Fourier coefficients with
/// `c_{-k} = conj(c_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierSeries {
    /// `coef[k + K]` is `c_k` for `k ∈ [-K, K]`.
    coef: Vec<Complex64>,
}

impl FourierSeries {
    /// From a centred coefficient list of odd length; rejects coefficient sets
    /// that are not Hermitian-symmetric.
    pub fn from_coefficients(coef: Vec<Complex64>) -> Result<Self> {
        if coef.len() % 2 == 0 {
            return Err(validation("Fourier coefficient list must have odd length"));
        }
        let k = coef.len() / 2;
        let scale = coef.iter().map(|c| c.norm()).fold(1.0_f64, f64::max);
        for i in 0..=k {
            let d = coef[k + i] - coef[k - i].conj();
            if d.norm() > 1e-12 * scale {
                return Err(validation(format!(
                    "coefficients violate c_-n = conj(c_n) at n = {i}; the function is not real"
                )));
            }
        }
        let mut s = Self { coef };
        s.trim();
        Ok(s)
    }

    /// `mean + Σ_k cos[k-1] cos kθ + sin[k-1] sin kθ`.
    pub fn from_trig(mean: f64, cos: &[f64], sin: &[f64]) -> Self {
        let k = cos.len().max(sin.len());
        let mut coef = vec![Complex64::new(0.0, 0.0); 2 * k + 1];
        coef[k] = Complex64::new(mean, 0.0);
        for i in 1..=k {
            let a = cos.get(i - 1).copied().unwrap_or(0.0);
            let b = sin.get(i - 1).copied().unwrap_or(0.0);
            let c = Complex64::new(0.5 * a, -0.5 * b);
            coef[k + i] = c;
            coef[k - i] = c.conj();
        }
        let mut s = Self { coef };
        s.trim();
        s
    }

    pub fn constant(c: f64) -> Self {
        Self {
            coef: vec![Complex64::new(c, 0.0)],
        }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    fn trim(&mut self) {
        while self.coef.len() > 1 {
            let k = self.coef.len() / 2;
            if self.coef[0].norm() == 0.0 && self.coef[2 * k].norm() == 0.0 {
                self.coef.remove(2 * k);
                self.coef.remove(0);
            } else {
                break;
            }
        }
    }

    /// Largest `k` with a non-zero coefficient.
    pub fn support(&self) -> usize {
        self.coef.len() / 2
    }

    pub fn coeff(&self, k: i64) -> Complex64 {
        let kk = self.support() as i64;
        if k.abs() > kk {
            Complex64::new(0.0, 0.0)
        } else {
            self.coef[(k + kk) as usize]
        }
    }

    pub fn mean(&self) -> f64 {
        self.coeff(0).re
    }

    pub fn is_zero(&self) -> bool {
        self.coef.iter().all(|c| c.norm() == 0.0)
    }

    pub fn is_constant(&self) -> bool {
        self.support() == 0
    }

    /// Symmetric under `θ -> -θ` (equivalently across `θ = π`).
    pub fn is_even(&self) -> bool {
        let scale = self.coef.iter().map(|c| c.norm()).fold(1e-300_f64, f64::max);
        self.coef.iter().all(|c| c.im.abs() <= 1e-13 * scale)
    }

    pub fn eval(&self, theta: f64) -> f64 {
        let mut s = self.mean();
        for k in 1..=self.support() {
            let c = self.coeff(k as i64);
            let (sn, cs) = (k as f64 * theta).sin_cos();
            s += 2.0 * (c.re * cs - c.im * sn);
        }
        s
    }

    /// `∫_0^θ (f - mean)`.
    pub fn integral_zero_mean(&self, theta: f64) -> f64 {
        let mut s = 0.0;
        for k in 1..=self.support() {
            let c = self.coeff(k as i64);
            let kf = k as f64;
            let (sn, cs) = (kf * theta).sin_cos();
            // 2 Re[c (e^{ikθ} - 1) / (ik)]
            s += 2.0 * (c.re * sn + c.im * (cs - 1.0)) / kf;
        }
        s
    }

    /// Cosine coefficients `a_{c,k}` with `f = Σ_{k>=0} a_{c,k} cos kθ` for even `f`.
    pub fn cos_coefficients(&self) -> Vec<f64> {
        (0..=self.support())
            .map(|k| {
                if k == 0 {
                    self.mean()
                } else {
                    2.0 * self.coeff(k as i64).re
                }
            })
            .collect()
    }

    /// `sup |f|`, sampled on a grid fine enough that the trigonometric
    /// polynomial cannot exceed the sampled maximum by more than 1e-9 relative.
    pub fn sup_norm(&self) -> f64 {
        if self.is_constant() {
            return self.mean().abs();
        }
        let n = 512 * (self.support() + 1);
        let mut best = 0.0_f64;
        let mut arg = 0;
        for i in 0..n {
            let v = self.eval(2.0 * PI * i as f64 / n as f64).abs();
            if v > best {
                best = v;
                arg = i;
            }
        }
        // golden-section polish around the best sample
        let h = 2.0 * PI / n as f64;
        let (mut lo, mut hi) = ((arg as f64 - 1.0) * h, (arg as f64 + 1.0) * h);
        let g = 0.618_033_988_749_894_8;
        for _ in 0..60 {
            let m1 = hi - g * (hi - lo);
            let m2 = lo + g * (hi - lo);
            if self.eval(m1).abs() > self.eval(m2).abs() {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        best.max(self.eval(0.5 * (lo + hi)).abs())
    }
}

/// Angular data of the operator: flux `A(θ)` and electric part `a(θ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularPotential {
    pub flux: FourierSeries,
    pub electric: FourierSeries,
}

impl AngularPotential {
    pub fn new(flux: FourierSeries, electric: FourierSeries) -> Self {
        Self { flux, electric }
    }

    /// Pure constant flux with no electric part.
    pub fn free(flux: f64) -> Self {
        Self::new(FourierSeries::constant(flux), FourierSeries::zero())
    }

    /// Same flux, electric part removed.
    pub fn free_counterpart(&self) -> Self {
        Self::new(self.flux.clone(), FourierSeries::zero())
    }

    /// `Ã`, the mean of the flux.
    pub fn flux_mean(&self) -> f64 {
        self.flux.mean()
    }

    /// `ã`, the mean of the electric part.
    pub fn electric_mean(&self) -> f64 {
        self.electric.mean()
    }
}

/// Reduced flux `Ā ∈ (-1/2, 1/2]` with `Ā - Ã ∈ ℤ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaugeReduction {
    pub flux_mean: f64,
    pub reduced: f64,
}

impl GaugeReduction {
    pub fn winding(&self) -> i64 {
        (self.reduced - self.flux_mean).round() as i64
    }

    /// Whether `Ā ∈ {0, 1/2}`: the free clusters are degenerate.
    pub fn is_half_integer_class(&self) -> bool {
        self.reduced.abs() < 1e-12 || (self.reduced - 0.5).abs() < 1e-12
    }
}

/// Reduce the flux modulo integers into `(-1/2, 1/2]`.
pub fn gauge_reduce(pot: &AngularPotential) -> GaugeReduction {
    let m = pot.flux_mean();
    let reduced = m - (m - 0.5).ceil();
    GaugeReduction {
        flux_mean: m,
        reduced,
    }
}

/// `exp(-i∫_0^θ A + i Ā θ)`; 2π-periodic.
pub fn gauge_phase(pot: &AngularPotential, g: &GaugeReduction, theta: f64) -> Complex64 {
    let arg = -pot.flux.integral_zero_mean(theta) - (g.flux_mean - g.reduced) * theta;
    Complex64::from_polar(1.0, arg)
}

/// Derivative of the argument of [`gauge_phase`]: `Ā - A(θ)`.
pub fn gauge_phase_rate(pot: &AngularPotential, g: &GaugeReduction, theta: f64) -> f64 {
    g.reduced - pot.flux.eval(theta)
}

/// Reflection parity of an eigenvector in the degenerate flux classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parity {
    Even,
    Odd,
}

/// How degenerate flux classes are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParityMode {
    /// Rotate near-degenerate pairs onto parity classes when `Ā ∈ {0, 1/2}`
    /// and `a` is even.
    Auto,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GalerkinOptions {
    /// Truncation `N`: basis `n ∈ [-N, N]`.
    pub truncation: usize,
    pub vectors: bool,
    pub parity: ParityMode,
}

impl Default for GalerkinOptions {
    fn default() -> Self {
        Self {
            truncation: 256,
            vectors: true,
            parity: ParityMode::Auto,
        }
    }
}

/// Accepted eigenpairs of one angular operator, ascending.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumTable {
    pub potential: AngularPotential,
    pub gauge: GaugeReduction,
    pub truncation: usize,
    pub eigenvalues: Vec<f64>,
    /// Coefficient vectors of length `2N + 1`, index `n + N`.
    pub vectors: Option<Vec<Vec<Complex64>>>,
    /// Set when the table is in the parity basis.
    pub parity: Option<Vec<Parity>>,
}

impl SpectrumTable {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn dimension(&self) -> usize {
        2
    }

    pub fn vector(&self, idx: usize) -> Result<&[Complex64]> {
        self.vectors
            .as_ref()
            .and_then(|v| v.get(idx))
            .map(|v| v.as_slice())
            .ok_or_else(|| validation(format!("eigenvector {idx} not stored")))
    }

    /// `φ(θ)` of eigenvector `idx`.
    pub fn eval_eigenfunction(&self, idx: usize, theta: f64) -> Result<Complex64> {
        let v = self.vector(idx)?;
        let n = self.truncation as i64;
        let mut s = Complex64::new(0.0, 0.0);
        for (i, c) in v.iter().enumerate() {
            if c.norm() > 1e-17 {
                s += c * Complex64::from_polar(1.0, (i as i64 - n) as f64 * theta);
            }
        }
        Ok(s * gauge_phase(&self.potential, &self.gauge, theta) / (2.0 * PI).sqrt())
    }

    /// Samples of eigenfunction `idx` at `theta_q = 2πq/Q`.
    pub fn sample_eigenfunction(&self, idx: usize, q: usize) -> Result<Vec<Complex64>> {
        let v = self.vector(idx)?;
        let n = self.truncation as i64;
        let support: Vec<(i64, Complex64)> = v
            .iter()
            .enumerate()
            .filter(|(_, c)| c.norm() > 1e-17)
            .map(|(i, c)| (i as i64 - n, *c))
            .collect();
        let norm = 1.0 / (2.0 * PI).sqrt();
        Ok((0..q)
            .map(|iq| {
                let theta = 2.0 * PI * iq as f64 / q as f64;
                let mut s = Complex64::new(0.0, 0.0);
                for (k, c) in &support {
                    s += c * Complex64::from_polar(1.0, *k as f64 * theta);
                }
                s * gauge_phase(&self.potential, &self.gauge, theta) * norm
            })
            .collect())
    }
}

fn hermitian_matrix(pot: &AngularPotential, t: f64, n: usize) -> Mat<c64> {
    let dim = 2 * n + 1;
    let k = pot.electric.support() as i64;
    let mut m = Mat::<c64>::zeros(dim, dim);
    for row in 0..dim {
        let nr = row as i64 - n as i64;
        for dk in -k..=k {
            let col = row as i64 - dk;
            if col < 0 || col >= dim as i64 {
                continue;
            }
            let c = pot.electric.coeff(dk);
            let mut v = c64::new(c.re, c.im);
            if dk == 0 {
                v.re += (nr as f64 + t) * (nr as f64 + t);
            }
            m.write(row, col as usize, v);
        }
    }
    m
}

fn apply_hermitian(pot: &AngularPotential, t: f64, n: usize, v: &[Complex64]) -> Vec<Complex64> {
    let dim = 2 * n + 1;
    let k = pot.electric.support() as i64;
    (0..dim)
        .map(|row| {
            let nr = row as i64 - n as i64;
            let mut s = v[row] * (nr as f64 + t) * (nr as f64 + t);
            for dk in -k..=k {
                let col = row as i64 - dk;
                if col >= 0 && col < dim as i64 {
                    s += pot.electric.coeff(dk) * v[col as usize];
                }
            }
            s
        })
        .collect()
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Reflection `θ -> -θ` on coefficient vectors: `n -> -n - 2Ā`.
fn reflect(v: &[Complex64], n: usize, half: bool) -> Vec<Complex64> {
    let dim = 2 * n + 1;
    let mut out = vec![Complex64::new(0.0, 0.0); dim];
    for (i, o) in out.iter_mut().enumerate() {
        let k = i as i64 - n as i64;
        let src = if half { -k - 1 } else { -k } + n as i64;
        if src >= 0 && src < dim as i64 {
            *o = v[src as usize];
        }
    }
    out
}

fn normalize_phase(v: &mut [Complex64]) {
    let mut best = 0.0;
    let mut arg = Complex64::new(1.0, 0.0);
    for c in v.iter() {
        // strict comparison with a small margin keeps the first of equal peaks
        if c.norm() > best * (1.0 + 1e-9) {
            best = c.norm();
            arg = *c;
        }
    }
    if best > 0.0 {
        let rot = arg.conj() / arg.norm();
        for c in v.iter_mut() {
            *c *= rot;
        }
    }
}

/// Fourier–Galerkin solution of the quasi-periodic problem.
///
/// Only eigenpairs with index at most `N/2` are returned; the rest are
/// polluted by truncation.
pub fn solve_quasi_periodic(pot: &AngularPotential, opts: &GalerkinOptions) -> Result<SpectrumTable> {
    let n = opts.truncation;
    let support = pot.electric.support();
    if n < 8 {
        return Err(validation(format!("Galerkin truncation must be at least 8, got {n}")));
    }
    if n < 4 * support {
        return Err(validation(format!(
            "Galerkin truncation N = {n} is below 4 x support of a ({support})"
        )));
    }
    let gauge = gauge_reduce(pot);
    let t = gauge.reduced;
    let dim = 2 * n + 1;
    let keep = n / 2 + 1;

    let (mut values, mut vectors): (Vec<f64>, Option<Vec<Vec<Complex64>>>) = if pot.electric.is_zero()
        || pot.electric.is_constant()
    {
        // Diagonal: exact.
        let shift = pot.electric.mean();
        let mut idx: Vec<i64> = (-(n as i64)..=n as i64).collect();
        idx.sort_by(|a, b| {
            let fa = (*a as f64 + t).powi(2);
            let fb = (*b as f64 + t).powi(2);
            fa.partial_cmp(&fb).unwrap().then(a.cmp(b))
        });
        idx.truncate(keep);
        let vals = idx.iter().map(|&k| (k as f64 + t).powi(2) + shift).collect();
        let vecs = opts.vectors.then(|| {
            idx.iter()
                .map(|&k| {
                    let mut v = vec![Complex64::new(0.0, 0.0); dim];
                    v[(k + n as i64) as usize] = Complex64::new(1.0, 0.0);
                    v
                })
                .collect()
        });
        (vals, vecs)
    } else {
        let m = hermitian_matrix(pot, t, n);
        if opts.vectors {
            let evd = m.selfadjoint_eigendecomposition(Side::Lower);
            let s = evd.s().column_vector();
            let u = evd.u();
            let mut order: Vec<usize> = (0..dim).collect();
            order.sort_by(|&a, &b| s.read(a).re.partial_cmp(&s.read(b).re).unwrap());
            order.truncate(keep);
            let vals = order.iter().map(|&i| s.read(i).re).collect();
            let vecs = order
                .iter()
                .map(|&i| {
                    let mut v: Vec<Complex64> = (0..dim)
                        .map(|r| {
                            let z = u.read(r, i);
                            Complex64::new(z.re, z.im)
                        })
                        .collect();
                    normalize_phase(&mut v);
                    v
                })
                .collect();
            (vals, Some(vecs))
        } else {
            let mut s: Vec<f64> = m.selfadjoint_eigenvalues(Side::Lower);
            s.sort_by(|a, b| a.partial_cmp(b).unwrap());
            s.truncate(keep);
            (s, None)
        }
    };

    let mut parity = None;
    let use_parity =
        opts.parity == ParityMode::Auto && gauge.is_half_integer_class() && pot.electric.is_even();
    if use_parity {
        if let Some(vecs) = vectors.as_mut() {
            let half = (t - 0.5).abs() < 1e-12;
            parity = Some(rotate_to_parity(pot, t, n, half, &mut values, vecs));
        }
    }

    Ok(SpectrumTable {
        potential: pot.clone(),
        gauge,
        truncation: n,
        eigenvalues: values,
        vectors,
        parity,
    })
}

fn rotate_to_parity(
    pot: &AngularPotential,
    t: f64,
    n: usize,
    half: bool,
    values: &mut [f64],
    vecs: &mut [Vec<Complex64>],
) -> Vec<Parity> {
    let len = vecs.len();
    let mut par = vec![Parity::Even; len];
    let mut i = 0;
    while i < len {
        let pv = reflect(&vecs[i], n, half);
        let self_p = dot(&vecs[i], &pv).re;
        if i + 1 < len {
            let pw = reflect(&vecs[i + 1], n, half);
            let m00 = self_p;
            let m11 = dot(&vecs[i + 1], &pw).re;
            let m01 = dot(&vecs[i], &pw);
            // Hermitian 2x2 [[m00, m01], [conj m01, m11]]
            let tr = 0.5 * (m00 + m11);
            let det = ((0.5 * (m00 - m11)).powi(2) + m01.norm_sqr()).sqrt();
            let mixed = m00.abs() < 0.999 || m11.abs() < 0.999;
            if mixed && (tr.abs() < 0.1) && (det - 1.0).abs() < 1e-3 {
                // eigenvector for eigenvalue +1 (even) and -1 (odd)
                let mut rotated = Vec::with_capacity(2);
                for &lam in &[-det + tr, det + tr] {
                    let (x, y) = if m01.norm() > 1e-14 {
                        (m01, Complex64::new(lam - m00, 0.0))
                    } else if (m00 - lam).abs() < (m11 - lam).abs() {
                        (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0))
                    } else {
                        (Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0))
                    };
                    let nrm = (x.norm_sqr() + y.norm_sqr()).sqrt();
                    let w: Vec<Complex64> = vecs[i]
                        .iter()
                        .zip(&vecs[i + 1])
                        .map(|(a, b)| (a * x + b * y) / nrm)
                        .collect();
                    rotated.push(w);
                }
                // odd first (k = 1), even second (k = 2)
                for (slot, w) in rotated.into_iter().enumerate() {
                    let mut w = w;
                    normalize_phase(&mut w);
                    let hw = apply_hermitian(pot, t, n, &w);
                    values[i + slot] = dot(&w, &hw).re;
                    par[i + slot] = if slot == 0 { Parity::Odd } else { Parity::Even };
                    vecs[i + slot] = w;
                }
                i += 2;
                continue;
            }
        }
        par[i] = if self_p >= 0.0 { Parity::Even } else { Parity::Odd };
        i += 1;
    }
    par
}

/// Free eigenvalue `(n + Ā)^2` associated with cluster `(j, k)`.
pub fn free_cluster_value(reduced: f64, j: usize, k: u8) -> f64 {
    let jf = j as f64;
    let (lo, hi) = if (reduced - 0.5).abs() < 1e-12 {
        ((jf + 0.5).powi(2), (jf + 0.5).powi(2))
    } else {
        ((jf - reduced.abs()).powi(2), (jf + reduced.abs()).powi(2))
    };
    if k == 1 {
        lo
    } else {
        hi
    }
}

/// Free Fourier index `n` whose exponential `e^{i(n+Ā)θ}` gives cluster
/// `(j, k)` in the non-degenerate case.
pub fn free_cluster_index(reduced: f64, j: usize, k: u8) -> i64 {
    let j = j as i64;
    if reduced < 0.0 {
        if k == 1 {
            j
        } else {
            -j
        }
    } else if k == 1 {
        -j
    } else {
        j
    }
}

/// One entry of the mode list: a low mode or a cluster member.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    /// Position in the ascending eigenvalue list of both tables.
    pub index: usize,
    /// Cluster label; `j < ℓ` for low modes.
    pub j: usize,
    /// `1` or `2` within a cluster.
    pub k: u8,
    pub low: bool,
    pub mu_sq: f64,
    pub nu_sq: f64,
}

impl Mode {
    /// `μ̃ = sqrt(μ^2 + n(d)^2)` with `n(2) = 0`.
    pub fn mu_tilde(&self) -> f64 {
        self.mu_sq.max(0.0).sqrt()
    }

    pub fn nu_tilde(&self) -> f64 {
        self.nu_sq.max(0.0).sqrt()
    }
}

/// Low modes and high-energy clusters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterSet {
    /// First cluster index with pairwise disjoint windows beyond it.
    pub ell: usize,
    /// Number of low modes.
    pub ell0: usize,
    /// Median of `sqrt(ν^2) - j` over the clusters.
    pub c_big: f64,
    /// `ã`.
    pub c_small: f64,
    pub a_lower: f64,
    pub a_upper: f64,
    pub modes: Vec<Mode>,
}

impl ClusterSet {
    pub fn clusters(&self) -> impl Iterator<Item = &Mode> {
        self.modes.iter().filter(|m| !m.low)
    }

    pub fn low_modes(&self) -> impl Iterator<Item = &Mode> {
        self.modes.iter().filter(|m| m.low)
    }

    pub fn find(&self, j: usize, k: u8) -> Option<&Mode> {
        self.modes.iter().find(|m| !m.low && m.j == j && m.k == k)
    }

    /// Highest cluster index present.
    pub fn max_cluster(&self) -> usize {
        self.clusters().map(|m| m.j).max().unwrap_or(0)
    }

    /// Modes up to and including cluster `jmax`.
    pub fn truncated(&self, jmax: usize) -> Vec<Mode> {
        self.modes.iter().filter(|m| m.j <= jmax).copied().collect()
    }
}

/// `(j, k)` label of the sorted free eigenvalue list.
fn free_labels(reduced: f64, count: usize) -> Vec<(usize, u8, f64)> {
    let half = (reduced - 0.5).abs() < 1e-12;
    let mut out = Vec::with_capacity(count);
    if half {
        let mut j = 0;
        while out.len() < count {
            let v = (j as f64 + 0.5).powi(2);
            out.push((j, 1, v));
            out.push((j, 2, v));
            j += 1;
        }
    } else {
        out.push((0, 1, reduced * reduced));
        let mut j = 1;
        while out.len() < count {
            out.push((j, 1, free_cluster_value(reduced, j, 1)));
            out.push((j, 2, free_cluster_value(reduced, j, 2)));
            j += 1;
        }
    }
    out.truncate(count);
    out
}

/// Partition the spectrum of `table` into low modes and clusters using the
/// comparison windows `[μ_{j1}^2 + a_*, μ_{j2}^2 + a^*]`,
/// `a_* = -‖a‖∞ - 1`, `a^* = ‖a‖∞ + 1`.
pub fn cluster_partition(table: &SpectrumTable) -> Result<ClusterSet> {
    let t = table.gauge.reduced;
    let sup = table.potential.electric.sup_norm();
    let a_lower = -sup - 1.0;
    let a_upper = sup + 1.0;
    let width = a_upper - a_lower;
    let count = table.len();
    let labels = free_labels(t, count);
    let jmax = labels.last().map(|l| l.0).unwrap_or(0);
    // highest complete cluster
    let complete = |j: usize| labels.iter().filter(|l| l.0 == j).count() == 2;
    let top = if complete(jmax) { jmax } else { jmax.saturating_sub(1) };

    let lo = |j: usize| free_cluster_value(t, j, 1);
    let hi = |j: usize| free_cluster_value(t, j, 2);
    let mut ell = top + 1;
    // windows of j and j+1 are disjoint iff hi(j) + a^* < lo(j+1) + a_*
    let start = if (t - 0.5).abs() < 1e-12 { 0 } else { 1 };
    for j in (start..top).rev() {
        if hi(j) + width < lo(j + 1) {
            ell = j;
        } else {
            break;
        }
    }
    if ell >= top {
        return Err(Error::Resolution(format!(
            "no disjoint cluster windows below index {top}; raise the Galerkin truncation"
        )));
    }

    let parity = table.parity.as_ref();
    let mut modes = Vec::with_capacity(count);
    let mut i = 0;
    while i < labels.len() {
        let (j, k, mu_sq) = labels[i];
        if j > top {
            break;
        }
        let low = j < ell;
        let pair_degenerate = k == 1 && i + 1 < labels.len() && labels[i + 1].0 == j && parity.is_some();
        if pair_degenerate && (labels[i + 1].2 - mu_sq).abs() < 1e-12 {
            // parity decides which member is k = 1 (odd) and k = 2 (even)
            let p = parity.unwrap();
            let (odd, even) = if p[i] == Parity::Odd { (i, i + 1) } else { (i + 1, i) };
            modes.push(Mode { index: odd, j, k: 1, low, mu_sq, nu_sq: table.eigenvalues[odd] });
            modes.push(Mode { index: even, j, k: 2, low, mu_sq, nu_sq: table.eigenvalues[even] });
            i += 2;
            continue;
        }
        modes.push(Mode {
            index: i,
            j,
            k,
            low,
            mu_sq,
            nu_sq: table.eigenvalues[i],
        });
        i += 1;
    }
    let ell0 = modes.iter().filter(|m| m.low).count();
    let mut offsets: Vec<f64> = modes
        .iter()
        .filter(|m| !m.low)
        .map(|m| m.nu_sq.max(0.0).sqrt() - m.j as f64)
        .collect();
    offsets.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let c_big = if offsets.is_empty() {
        0.0
    } else if offsets.len() % 2 == 1 {
        offsets[offsets.len() / 2]
    } else {
        0.5 * (offsets[offsets.len() / 2 - 1] + offsets[offsets.len() / 2])
    };
    Ok(ClusterSet {
        ell,
        ell0,
        c_big,
        c_small: table.potential.electric_mean(),
        a_lower,
        a_upper,
        modes,
    })
}

/// Margins of the sandwich `λ_n(a_*) < λ_n(a) < λ_n(a^*)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub lower_margin: Vec<f64>,
    pub upper_margin: Vec<f64>,
    pub pass: bool,
}

/// Compare the spectrum of `table` with those of the constants `a_*` and
/// `a^*` at the same truncation and flux.
pub fn comparison_check(table: &SpectrumTable) -> Result<ComparisonReport> {
    let sup = table.potential.electric.sup_norm();
    let opts = GalerkinOptions {
        truncation: table.truncation,
        vectors: false,
        parity: ParityMode::Off,
    };
    let lower = AngularPotential::new(table.potential.flux.clone(), FourierSeries::constant(-sup - 1.0));
    let upper = AngularPotential::new(table.potential.flux.clone(), FourierSeries::constant(sup + 1.0));
    let lo = solve_quasi_periodic(&lower, &opts)?;
    let hi = solve_quasi_periodic(&upper, &opts)?;
    let mut pert = table.eigenvalues.clone();
    pert.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lower_margin: Vec<f64> = pert.iter().zip(&lo.eigenvalues).map(|(p, l)| p - l).collect();
    let upper_margin: Vec<f64> = pert.iter().zip(&hi.eigenvalues).map(|(p, h)| h - p).collect();
    let pass = lower_margin.iter().chain(&upper_margin).all(|m| *m > 0.0);
    Ok(ComparisonReport {
        lower_margin,
        upper_margin,
        pass,
    })
}

/// `R_{jk}` sampled on a uniform θ grid, with its θ-derivative.
///
/// Non-degenerate case: `R = φ/e - 1` (complex), `cross` is `None`.
/// Parity case: `φ/e_norm = e_{jk}(1 + R_c) ± e_{jk'} R_s` with `main = R_c`
/// and `cross = R_s`; the sign is `+` for `k = 1` and `-` for `k = 2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemainderProfile {
    pub j: usize,
    pub k: u8,
    pub theta: Vec<f64>,
    pub main: Vec<Complex64>,
    pub main_deriv: Vec<Complex64>,
    pub cross: Option<Vec<Complex64>>,
    pub cross_deriv: Option<Vec<Complex64>>,
    pub sup: f64,
    pub sup_deriv: f64,
}

/// Remainder of the perturbed eigenfunction `φ_{jk}` against the free `e_{jk}`.
pub fn remainder_from_eigenvectors(
    free: &SpectrumTable,
    pert: &SpectrumTable,
    free_mode: &Mode,
    pert_mode: &Mode,
    grid: usize,
) -> Result<RemainderProfile> {
    if free.truncation != pert.truncation {
        return Err(validation("free and perturbed tables use different truncations"));
    }
    let n = pert.truncation as i64;
    let c = pert.vector(pert_mode.index)?;
    let theta: Vec<f64> = (0..grid).map(|i| 2.0 * PI * i as f64 / grid as f64).collect();
    let (j, k) = (pert_mode.j, pert_mode.k);

    if let (Some(pp), Some(_)) = (pert.parity.as_ref(), free.parity.as_ref()) {
        let half = (pert.gauge.reduced - 0.5).abs() < 1e-12;
        let odd = pp[pert_mode.index] == Parity::Odd;
        // real-basis coefficients s_m, m >= 0, of Σ s_m f((m + h)θ)/sqrt(π)
        let at = |m: i64| -> Complex64 {
            if m.abs() > n {
                Complex64::new(0.0, 0.0)
            } else {
                c[(m + n) as usize]
            }
        };
        let mmax = n as usize;
        let mut s: Vec<Complex64> = (0..=mmax)
            .map(|m| {
                let cm = at(m as i64);
                if odd {
                    Complex64::new(0.0, std::f64::consts::SQRT_2) * cm
                } else if m == 0 && !half {
                    cm / std::f64::consts::SQRT_2
                } else {
                    cm * std::f64::consts::SQRT_2
                }
            })
            .collect();
        if odd && !half {
            s[0] = Complex64::new(0.0, 0.0);
        }
        let sj = s[j];
        let rot = sj.conj() / sj.norm();
        for v in s.iter_mut() {
            *v *= rot;
        }
        let terms: Vec<(i64, Complex64)> = s
            .iter()
            .enumerate()
            .filter(|(m, v)| *m != j && v.norm() > 1e-17)
            .map(|(m, v)| (m as i64 - j as i64, *v))
            .collect();
        let sj = s[j];
        let rows: Vec<(Complex64, Complex64, Complex64, Complex64)> = par::map_slice(&theta, |&th| {
            let mut rc = sj - 1.0;
            let mut rs = Complex64::new(0.0, 0.0);
            let mut drc = Complex64::new(0.0, 0.0);
            let mut drs = Complex64::new(0.0, 0.0);
            for &(d, v) in &terms {
                let df = d as f64;
                let (sn, cs) = (df * th).sin_cos();
                rc += v * cs;
                rs += v * sn;
                drc -= v * (df * sn);
                drs += v * (df * cs);
            }
            (rc, drc, rs, drs)
        });
        let main: Vec<Complex64> = rows.iter().map(|r| r.0).collect();
        let main_deriv: Vec<Complex64> = rows.iter().map(|r| r.1).collect();
        let cross: Vec<Complex64> = rows.iter().map(|r| r.2).collect();
        let cross_deriv: Vec<Complex64> = rows.iter().map(|r| r.3).collect();
        let sup = main.iter().zip(&cross).map(|(a, b)| a.norm() + b.norm()).fold(0.0, f64::max);
        let sup_deriv = main_deriv
            .iter()
            .zip(&cross_deriv)
            .map(|(a, b)| a.norm() + b.norm())
            .fold(0.0, f64::max);
        return Ok(RemainderProfile {
            j,
            k,
            theta,
            main,
            main_deriv,
            cross: Some(cross),
            cross_deriv: Some(cross_deriv),
            sup,
            sup_deriv,
        });
    }

    // Non-degenerate: ratio against the free exponential.
    let n0 = if let Some(fv) = free.vectors.as_ref() {
        let v = &fv[free_mode.index];
        let (imax, _) = v
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap())
            .unwrap();
        imax as i64 - n
    } else {
        free_cluster_index(free.gauge.reduced, free_mode.j, free_mode.k)
    };
    let c0 = c[(n0 + n) as usize];
    if c0.norm() == 0.0 {
        return Err(Error::Resolution(format!(
            "eigenvector ({j},{k}) has no weight on its free index {n0}"
        )));
    }
    let rot = c0.conj() / c0.norm();
    let terms: Vec<(f64, Complex64)> = c
        .iter()
        .enumerate()
        .filter(|(_, v)| v.norm() > 1e-17)
        .map(|(i, v)| ((i as i64 - n - n0) as f64, v * rot))
        .collect();
    let rows: Vec<(Complex64, Complex64)> = par::map_slice(&theta, |&th| {
        let g = gauge_phase(&pert.potential, &pert.gauge, th) / gauge_phase(&free.potential, &free.gauge, th);
        let gr = gauge_phase_rate(&pert.potential, &pert.gauge, th)
            - gauge_phase_rate(&free.potential, &free.gauge, th);
        let mut s = Complex64::new(0.0, 0.0);
        let mut ds = Complex64::new(0.0, 0.0);
        for &(d, v) in &terms {
            let e = Complex64::from_polar(1.0, d * th);
            s += v * e;
            ds += v * e * Complex64::new(0.0, d);
        }
        let r = g * s - 1.0;
        let dr = g * (Complex64::new(0.0, gr) * s + ds);
        (r, dr)
    });
    let main: Vec<Complex64> = rows.iter().map(|r| r.0).collect();
    let main_deriv: Vec<Complex64> = rows.iter().map(|r| r.1).collect();
    let sup = main.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let sup_deriv = main_deriv.iter().map(|v| v.norm()).fold(0.0, f64::max);
    Ok(RemainderProfile {
        j,
        k,
        theta,
        main,
        main_deriv,
        cross: None,
        cross_deriv: None,
        sup,
        sup_deriv,
    })
}

/// Flux classes for which the explicit first-order remainder is available.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FluxClass {
    Integer,
    HalfInteger,
}

/// First-order remainder `(R_{jk,s}, R_{jk,c})` from the cosine coefficients
/// of an even potential, at the given angles.
///
/// Integer flux:
/// `R_s = ½ Σ_{m≠j} (a_{c,|j-m|} + (-1)^k a_{c,j+m}) / ((j-m)(j+m)) sin((m-j)θ)`,
/// `R_c` the same with cosine. Half-integer flux uses `â(θ) = 4a(2θ)`, index
/// `2j+1` and argument `(m-2j-1)θ/2`.
pub fn perturbative_remainder_series(
    electric: &FourierSeries,
    class: FluxClass,
    j: usize,
    k: u8,
    theta: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !electric.is_even() {
        return Err(validation(
            "the explicit remainder series needs a potential symmetric across θ = π",
        ));
    }
    if !(k == 1 || k == 2) {
        return Err(validation(format!("cluster member must be 1 or 2, got {k}")));
    }
    let base = electric.cos_coefficients();
    let (coef, big_j, scale) = match class {
        FluxClass::Integer => (base, j as i64, 1.0),
        FluxClass::HalfInteger => {
            let mut hat = vec![0.0; 2 * base.len() - 1];
            for (i, v) in base.iter().enumerate() {
                hat[2 * i] = 4.0 * v;
            }
            (hat, 2 * j as i64 + 1, 0.5)
        }
    };
    if big_j == 0 {
        return Err(validation("the remainder series is defined for j >= 1"));
    }
    let kk = coef.len() as i64 - 1;
    let ac = |i: i64| -> f64 {
        if i < 0 || i > kk {
            0.0
        } else {
            coef[i as usize]
        }
    };
    let sign = if k == 1 { -1.0 } else { 1.0 };
    let lo = (big_j - kk).max(0);
    let hi = big_j + kk;
    let mut weights = Vec::new();
    for m in lo..=hi {
        if m == big_j {
            continue;
        }
        let w = 0.5 * (ac((big_j - m).abs()) + sign * ac(big_j + m)) / (((big_j - m) * (big_j + m)) as f64);
        if w != 0.0 {
            weights.push(((m - big_j) as f64 * scale, w));
        }
    }
    let mut rs = Vec::with_capacity(theta.len());
    let mut rc = Vec::with_capacity(theta.len());
    for &th in theta {
        let mut s = 0.0;
        let mut c = 0.0;
        for &(f, w) in &weights {
            let (sn, cs) = (f * th).sin_cos();
            s += w * sn;
            c += w * cs;
        }
        rs.push(s);
        rc.push(c);
    }
    Ok((rs, rc))
}

/// One line of the spectrum export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub j: usize,
    pub k: u8,
    pub mu_sq: f64,
    pub nu_sq: f64,
    pub mu_tilde: f64,
    pub nu_tilde: f64,
    pub delta_minus_atilde: f64,
    #[serde(rename = "sup_R")]
    pub sup_r: f64,
    #[serde(rename = "sup_dR")]
    pub sup_dr: f64,
}

/// Rows for every cluster of `clusters`, with remainders on a `grid`-point θ grid.
pub fn spectrum_rows(
    free: &SpectrumTable,
    pert: &SpectrumTable,
    free_clusters: &ClusterSet,
    clusters: &ClusterSet,
    grid: usize,
) -> Result<Vec<SpectrumRow>> {
    let modes: Vec<Mode> = clusters.clusters().copied().collect();
    par::try_map_range(modes.len(), |i| {
        let m = &modes[i];
        let fm = free_clusters
            .find(m.j, m.k)
            .ok_or_else(|| validation(format!("free table lacks cluster ({}, {})", m.j, m.k)))?;
        let rem = remainder_from_eigenvectors(free, pert, fm, m, grid)?;
        Ok(SpectrumRow {
            j: m.j,
            k: m.k,
            mu_sq: fm.nu_sq,
            nu_sq: m.nu_sq,
            mu_tilde: fm.nu_tilde(),
            nu_tilde: m.nu_tilde(),
            delta_minus_atilde: m.nu_sq - fm.nu_sq - clusters.c_small,
            sup_r: rem.sup,
            sup_dr: rem.sup_deriv,
        })
    })
}

/// Write rows as CSV with the header
/// `j,k,mu_sq,nu_sq,mu_tilde,nu_tilde,delta_minus_atilde,sup_R,sup_dR`.
pub fn export_csv<W: Write>(rows: &[SpectrumRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| validation(format!("csv: {e}")))?;
    }
    w.flush().map_err(|e| validation(format!("csv: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauge_reduction_examples() {
        let pot = AngularPotential::new(FourierSeries::from_trig(0.3, &[], &[0.5]), FourierSeries::zero());
        let g = gauge_reduce(&pot);
        assert!((g.reduced - 0.3).abs() < 1e-15);
        for i in 0..50 {
            let th = 0.13 * i as f64;
            let want = Complex64::from_polar(1.0, 0.5 * th.cos() - 0.5);
            assert!((gauge_phase(&pot, &g, th) - want).norm() < 1e-14);
        }
        assert!((gauge_reduce(&AngularPotential::free(1.0)).reduced).abs() < 1e-15);
        assert!((gauge_reduce(&AngularPotential::free(-0.5)).reduced - 0.5).abs() < 1e-15);
        assert!((gauge_reduce(&AngularPotential::free(2.7)).reduced + 0.3).abs() < 1e-12);
    }

    #[test]
    fn hermitian_check_rejects_complex_functions() {
        let c = vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)];
        assert!(FourierSeries::from_coefficients(c).is_ok());
        let c = vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(2.0, 0.0)];
        assert!(FourierSeries::from_coefficients(c).is_err());
    }

    #[test]
    fn support_precondition() {
        let cos: Vec<f64> = (0..300).map(|i| if i == 299 { 1.0 } else { 0.0 }).collect();
        let pot = AngularPotential::new(FourierSeries::constant(0.2), FourierSeries::from_trig(0.0, &cos, &[]));
        let r = solve_quasi_periodic(&pot, &GalerkinOptions::default());
        assert!(matches!(r, Err(Error::Validation(_))));
    }

    #[test]
    fn trig_constructor_round_trip() {
        let f = FourierSeries::from_trig(0.5, &[2.0], &[0.0, 1.0]);
        for i in 0..20 {
            let th = 0.3 * i as f64;
            let want = 0.5 + 2.0 * th.cos() + (2.0 * th).sin();
            assert!((f.eval(th) - want).abs() < 1e-14);
        }
        let prim = FourierSeries::from_trig(0.0, &[0.0], &[0.5]);
        assert!((prim.integral_zero_mean(1.0) - 0.5 * (1.0 - 1f64.cos())).abs() < 1e-15);
        assert!(!f.is_even());
        assert!((FourierSeries::from_trig(0.0, &[2.0], &[]).sup_norm() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn series_example_terms() {
        let a = FourierSeries::from_trig(0.0, &[1.0], &[]);
        let th = [0.7];
        let (rs, rc) = perturbative_remainder_series(&a, FluxClass::Integer, 5, 1, &th).unwrap();
        // m = 4 and m = 6 only
        let w4 = 0.5 / (1.0 * 9.0);
        let w6 = 0.5 / (-1.0 * 11.0);
        let want_s = w4 * (-0.7f64).sin() + w6 * 0.7f64.sin();
        let want_c = w4 * 0.7f64.cos() + w6 * 0.7f64.cos();
        assert!((rs[0] - want_s).abs() < 1e-15 && (rc[0] - want_c).abs() < 1e-15);
        let asym = FourierSeries::from_trig(0.0, &[1.0], &[1.0]);
        assert!(perturbative_remainder_series(&asym, FluxClass::HalfInteger, 5, 1, &th).is_err());
    }
}
