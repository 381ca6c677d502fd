//! The intertwining operators `W`, `W*` between the free and perturbed
//! Aharonov–Bohm operators on the plane, and spectral functional calculus
//! for both.
//!
//! A field is sampled on a radial grid times a uniform angular grid. Modes
//! are paired by position in the ascending eigenvalue lists of the free and
//! perturbed angular tables, and each pair is moved by `ℋ_ν̃ ℋ_μ̃`.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::angular::{cluster_partition, solve_quasi_periodic, AngularPotential, GalerkinOptions, SpectrumTable};
use crate::error::{validation, Error, Result};
use crate::hankel::{log_bump, HankelPlan, RadialFunction, RadialGrid};
use crate::par;

/// Samples `f(r_i, θ_q)`, `θ_q = 2πq/Q`, stored row-major by angle.
#[derive(Debug, Clone)]
pub struct Field2D {
    pub grid: Arc<RadialGrid>,
    pub q: usize,
    pub values: Vec<Complex64>,
}

impl Field2D {
    pub fn new(grid: Arc<RadialGrid>, q: usize, values: Vec<Complex64>) -> Result<Self> {
        if grid.d != 2 {
            return Err(validation(format!("planar fields need a d = 2 grid, got d = {}", grid.d)));
        }
        if q < 4 {
            return Err(validation(format!("angular grid needs Q >= 4, got {q}")));
        }
        if values.len() != q * grid.m {
            return Err(validation(format!("expected {} samples, got {}", q * grid.m, values.len())));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(validation("field samples must be finite"));
        }
        Ok(Self { grid, q, values })
    }

    pub fn from_fn(grid: Arc<RadialGrid>, q: usize, f: impl Fn(f64, f64) -> Complex64 + Sync) -> Result<Self> {
        let m = grid.m;
        let rows = par::map_range(q, |iq| {
            let th = 2.0 * PI * iq as f64 / q as f64;
            grid.nodes.iter().map(|&r| f(r, th)).collect::<Vec<_>>()
        });
        let mut values = Vec::with_capacity(q * m);
        rows.into_iter().for_each(|r| values.extend(r));
        Self::new(grid, q, values)
    }

    pub fn zeros(grid: Arc<RadialGrid>, q: usize) -> Result<Self> {
        let n = q * grid.m;
        Self::new(grid, q, vec![Complex64::new(0.0, 0.0); n])
    }

    pub fn theta(&self, iq: usize) -> f64 {
        2.0 * PI * iq as f64 / self.q as f64
    }

    pub fn at(&self, iq: usize, ir: usize) -> Complex64 {
        self.values[iq * self.grid.m + ir]
    }

    pub fn row(&self, iq: usize) -> &[Complex64] {
        let m = self.grid.m;
        &self.values[iq * m..(iq + 1) * m]
    }

    /// `(∫∫ |f|^p r dr dθ)^{1/p}`; `p = ∞` gives the sup over the samples.
    pub fn lp_norm(&self, p: f64) -> f64 {
        if p.is_infinite() {
            return self.sup_norm();
        }
        let m = self.grid.m;
        let dth = 2.0 * PI / self.q as f64;
        let s: f64 = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| self.grid.weights[i % m] * v.norm().powf(p))
            .sum();
        (s * dth).powf(1.0 / p)
    }

    pub fn norm2(&self) -> f64 {
        self.lp_norm(2.0)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(Self {
            grid: self.grid.clone(),
            q: self.q,
            values,
        })
    }

    /// `‖self - other‖_2`.
    pub fn distance(&self, other: &Self) -> Result<f64> {
        Ok(self.sub(other)?.norm2())
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.q != other.q || *self.grid != *other.grid {
            return Err(validation("fields live on different grids"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisKind {
    /// Eigenfunctions `e_α` of the operator with `a = 0`.
    Free,
    /// Eigenfunctions `φ_α` of the perturbed operator.
    Perturbed,
}

/// The first `modes` eigenfunctions of one table sampled on the angular grid,
/// with their radial orders.
#[derive(Debug, Clone)]
pub struct ModeBasis {
    pub kind: BasisKind,
    pub table: SpectrumTable,
    /// Cluster cutoff `J`.
    pub cutoff: usize,
    pub q: usize,
    pub orders: Vec<f64>,
    samples: Vec<Vec<Complex64>>,
}

/// Number of modes with cluster label `j <= cutoff`.
pub fn mode_count(reduced_flux: f64, cutoff: usize) -> usize {
    if (reduced_flux - 0.5).abs() < 1e-12 {
        2 * (cutoff + 1)
    } else {
        2 * cutoff + 1
    }
}

/// Radial order `sqrt(λ + n(d)^2)`; errors when `λ < -n(d)^2`.
fn radial_order(lambda: f64, d: usize) -> Result<f64> {
    let n = (d as f64 - 2.0) / 2.0;
    let s = lambda + n * n;
    // eigenvalues of the exactly free problem may round to -1e-16
    if s < -1e-10 {
        return Err(validation(format!(
            "form condition violated: λ = {lambda} < -n(d)^2 = {}; the radial order is not real",
            -n * n
        )));
    }
    Ok(s.max(0.0).sqrt())
}

impl ModeBasis {
    pub fn new(kind: BasisKind, table: SpectrumTable, cutoff: usize, q: usize) -> Result<Self> {
        let modes = mode_count(table.gauge.reduced, cutoff);
        if q < 4 * cutoff.max(1) {
            return Err(validation(format!("angular grid Q = {q} is below 4J = {}", 4 * cutoff)));
        }
        if table.vectors.is_none() {
            return Err(validation("the spectrum table has no eigenvectors"));
        }
        if modes > table.len() {
            return Err(validation(format!(
                "cutoff J = {cutoff} needs {modes} modes but the table holds {}; raise the Galerkin truncation",
                table.len()
            )));
        }
        let orders = table.eigenvalues[..modes]
            .iter()
            .map(|&l| radial_order(l, table.dimension()))
            .collect::<Result<Vec<_>>>()?;
        let samples = par::try_map_range(modes, |i| table.sample_eigenfunction(i, q))?;
        Ok(Self {
            kind,
            table,
            cutoff,
            q,
            orders,
            samples,
        })
    }

    pub fn modes(&self) -> usize {
        self.orders.len()
    }

    /// `e_i(θ_q)` for `q = 0..Q`.
    pub fn samples(&self, i: usize) -> &[Complex64] {
        &self.samples[i]
    }
}

/// Radial coefficients `f_α(r) = ∫ f(r, θ) ē_α(θ) dθ`.
#[derive(Debug, Clone)]
pub struct ModalDecomposition {
    pub kind: BasisKind,
    pub coefficients: Vec<RadialFunction>,
}

impl ModalDecomposition {
    pub fn energy(&self) -> f64 {
        self.coefficients.iter().map(|c| c.norm2().powi(2)).sum()
    }
}

fn check_field(f: &Field2D, basis: &ModeBasis) -> Result<()> {
    if f.q != basis.q {
        return Err(validation(format!("field has Q = {}, basis expects {}", f.q, basis.q)));
    }
    Ok(())
}

/// Angular quadrature projections onto the basis; errors if more than 1% of
/// `‖f‖²` falls outside the retained modes.
pub fn decompose(f: &Field2D, basis: &ModeBasis) -> Result<ModalDecomposition> {
    check_field(f, basis)?;
    let m = f.grid.m;
    let dth = 2.0 * PI / f.q as f64;
    let coefficients = par::map_range(basis.modes(), |i| {
        let e = basis.samples(i);
        let mut acc = vec![Complex64::new(0.0, 0.0); m];
        for (iq, ev) in e.iter().enumerate() {
            let w = ev.conj() * dth;
            for (a, v) in acc.iter_mut().zip(f.row(iq)) {
                *a += v * w;
            }
        }
        RadialFunction {
            grid: f.grid.clone(),
            values: acc,
        }
    });
    let dec = ModalDecomposition {
        kind: basis.kind,
        coefficients,
    };
    let total = f.norm2().powi(2);
    if total > 0.0 {
        let deficit = 1.0 - dec.energy() / total;
        if deficit > 0.01 {
            return Err(Error::Resolution(format!(
                "{:.2}% of ‖f‖² lies beyond the J = {} mode cutoff",
                100.0 * deficit,
                basis.cutoff
            )));
        }
    }
    Ok(dec)
}

/// `Σ_α f_α(r) e_α(θ)`.
pub fn synthesize(dec: &ModalDecomposition, basis: &ModeBasis) -> Result<Field2D> {
    if dec.coefficients.len() != basis.modes() {
        return Err(validation(format!(
            "{} coefficients for a basis of {} modes",
            dec.coefficients.len(),
            basis.modes()
        )));
    }
    let grid = dec
        .coefficients
        .first()
        .map(|c| c.grid.clone())
        .ok_or_else(|| validation("empty decomposition"))?;
    let m = grid.m;
    let rows = par::map_range(basis.q, |iq| {
        let mut row = vec![Complex64::new(0.0, 0.0); m];
        for (i, c) in dec.coefficients.iter().enumerate() {
            let e = basis.samples(i)[iq];
            for (o, v) in row.iter_mut().zip(&c.values) {
                *o += v * e;
            }
        }
        row
    });
    let mut values = Vec::with_capacity(basis.q * m);
    rows.into_iter().for_each(|r| values.extend(r));
    Field2D::new(grid, basis.q, values)
}

/// Grid and truncation parameters for [`IntertwiningSetup::from_potential`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetupOptions {
    pub r_min: f64,
    pub r_max: f64,
    pub m: usize,
    /// Cluster cutoff `J`.
    pub cutoff: usize,
    pub q: usize,
    /// Galerkin truncation for both angular tables.
    pub truncation: usize,
}

impl Default for SetupOptions {
    fn default() -> Self {
        Self {
            r_min: 1e-8,
            r_max: 1e8,
            m: 1024,
            cutoff: 64,
            q: 256,
            truncation: 256,
        }
    }
}

impl SetupOptions {
    /// Smaller cutoff for quick checks.
    pub fn small(cutoff: usize) -> Self {
        Self {
            cutoff,
            q: 4 * cutoff,
            truncation: (4 * cutoff).max(128),
            ..Self::default()
        }
    }

    /// Grid fine enough to resolve outgoing waves with frequency up to 2
    /// out to `r = 200`.
    pub fn wave(cutoff: usize) -> Self {
        Self {
            r_min: 1e-2,
            r_max: 2e2,
            m: 2048,
            ..Self::small(cutoff)
        }
    }

    /// Twice `M`, `J`, `Q` and the truncation over the same radial range.
    pub fn refined(&self) -> Self {
        Self {
            m: 2 * self.m - 1,
            cutoff: 2 * self.cutoff,
            q: 2 * self.q,
            truncation: 2 * self.truncation,
            ..*self
        }
    }

    /// Twice `M`, `J`, `Q` and the truncation at the same log step: the
    /// radial range is squared about its centre.
    pub fn extended(&self) -> Self {
        let c = (self.r_min * self.r_max).sqrt();
        let half = (self.r_max / self.r_min).sqrt();
        Self {
            r_min: c / (half * half),
            r_max: c * half * half,
            ..self.refined()
        }
    }

    pub fn grid(&self) -> Result<Arc<RadialGrid>> {
        Ok(Arc::new(RadialGrid::new(self.r_min, self.r_max, self.m, 2)?))
    }
}

/// Matched free and perturbed bases on a common grid.
#[derive(Debug)]
pub struct IntertwiningSetup {
    pub free: ModeBasis,
    pub pert: ModeBasis,
    pub plan: HankelPlan,
}

impl IntertwiningSetup {
    pub fn new(free: SpectrumTable, pert: SpectrumTable, cutoff: usize, q: usize, grid: Arc<RadialGrid>) -> Result<Self> {
        if free.potential.flux != pert.potential.flux {
            return Err(validation("free and perturbed tables have different fluxes"));
        }
        if !free.potential.electric.is_zero() {
            return Err(validation("the free table must have a = 0"));
        }
        if grid.d != 2 {
            return Err(validation("intertwining fields are planar (d = 2)"));
        }
        Ok(Self {
            free: ModeBasis::new(BasisKind::Free, free, cutoff, q)?,
            pert: ModeBasis::new(BasisKind::Perturbed, pert, cutoff, q)?,
            plan: HankelPlan::new(grid),
        })
    }

    pub fn from_potential(pot: &AngularPotential, opts: &SetupOptions) -> Result<Self> {
        let g = GalerkinOptions {
            truncation: opts.truncation,
            ..GalerkinOptions::default()
        };
        let free = solve_quasi_periodic(&pot.free_counterpart(), &g)?;
        let pert = solve_quasi_periodic(pot, &g)?;
        Self::new(free, pert, opts.cutoff, opts.q, opts.grid()?)
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        self.plan.grid()
    }

    pub fn q(&self) -> usize {
        self.free.q
    }

    pub fn modes(&self) -> usize {
        self.free.modes()
    }

    fn check(&self, f: &Field2D) -> Result<()> {
        if *f.grid != **self.grid() {
            return Err(validation("field and setup use different radial grids"));
        }
        Ok(())
    }

    /// Table indices of the perturbed low modes (`α ∈ ℐ_ℓ^⊥`) below the cutoff.
    pub fn low_modes(&self) -> Result<Vec<usize>> {
        let cl = cluster_partition(&self.pert.table)?;
        Ok(cl.low_modes().map(|m| m.index).filter(|&i| i < self.modes()).collect())
    }
}

fn transplant(
    f: &Field2D,
    setup: &IntertwiningSetup,
    from: &ModeBasis,
    to: &ModeBasis,
    keep: &(dyn Fn(usize) -> bool + Sync),
) -> Result<Field2D> {
    setup.check(f)?;
    let dec = decompose(f, from)?;
    let coefficients = par::try_map_range(dec.coefficients.len(), |i| {
        if keep(i) {
            setup.plan.t_compose(&dec.coefficients[i], to.orders[i], from.orders[i])
        } else {
            Ok(RadialFunction::zeros(f.grid.clone()))
        }
    })?;
    synthesize(
        &ModalDecomposition {
            kind: to.kind,
            coefficients,
        },
        to,
    )
}

/// `W f = Σ_α ℋ_ν̃ ℋ_μ̃ f_α · φ_α`.
pub fn apply_w(f: &Field2D, setup: &IntertwiningSetup) -> Result<Field2D> {
    transplant(f, setup, &setup.free, &setup.pert, &|_| true)
}

/// `W* f = Σ_α ℋ_μ̃ ℋ_ν̃ f̃_α · e_α`.
pub fn apply_w_star(f: &Field2D, setup: &IntertwiningSetup) -> Result<Field2D> {
    transplant(f, setup, &setup.pert, &setup.free, &|_| true)
}

/// `W` restricted to the modes for which `keep(index)` holds.
pub fn apply_w_modes(f: &Field2D, setup: &IntertwiningSetup, keep: &(dyn Fn(usize) -> bool + Sync)) -> Result<Field2D> {
    transplant(f, setup, &setup.free, &setup.pert, keep)
}

/// Frequency cutoff `φ`: 1 on `[flat_lo, flat_hi]`, 0 outside `(lo, hi)`,
/// polynomial transitions in between that are `C^smoothness` at the joins.
/// The support must lie in `[1/2, 2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveCutoff {
    pub lo: f64,
    pub flat_lo: f64,
    pub flat_hi: f64,
    pub hi: f64,
    pub smoothness: u32,
}

impl Default for WaveCutoff {
    fn default() -> Self {
        Self {
            lo: 0.5,
            flat_lo: 0.75,
            flat_hi: 1.5,
            hi: 2.0,
            smoothness: 6,
        }
    }
}

/// Degree `2k + 1` step with `k` vanishing derivatives at both ends:
/// `x^{k+1} Σ_j C(k+j, j) (1-x)^j`.
fn poly_step(x: f64, k: u32) -> f64 {
    let x = x.clamp(0.0, 1.0);
    let mut sum = 0.0;
    let mut binom = 1.0;
    for j in 0..=k {
        if j > 0 {
            binom *= (k + j) as f64 / j as f64;
        }
        sum += binom * (1.0 - x).powi(j as i32);
    }
    x.powi(k as i32 + 1) * sum
}

impl WaveCutoff {
    pub fn validate(&self) -> Result<()> {
        if !(0.5 <= self.lo && self.lo < self.flat_lo && self.flat_lo <= self.flat_hi && self.flat_hi < self.hi && self.hi <= 2.0 && self.smoothness <= 16) {
            return Err(validation(format!(
                "wave cutoff needs 1/2 <= lo < flat_lo <= flat_hi < hi <= 2 and smoothness <= 16, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn eval(&self, l: f64) -> f64 {
        if l <= self.lo || l >= self.hi {
            0.0
        } else if l < self.flat_lo {
            poly_step((l - self.lo) / (self.flat_lo - self.lo), self.smoothness)
        } else if l > self.flat_hi {
            poly_step((self.hi - l) / (self.hi - self.flat_hi), self.smoothness)
        } else {
            1.0
        }
    }
}

/// Spectral multiplier `F`, written as a function of `λ = sqrt(spectral value)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CalculusRequest {
    Identity,
    /// `exp(-tλ²)`.
    Heat { t: f64 },
    /// `sin(tλ)/λ · φ(λ)`.
    Wave { t: f64, cutoff: WaveCutoff },
    /// `(λ² - z)^{-1}`.
    Resolvent { z: Complex64 },
    /// `(1 - λ²/R²)_+^δ`.
    Riesz { radius: f64, delta: f64 },
}

impl CalculusRequest {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Identity => Ok(()),
            Self::Heat { t } if t >= 0.0 && t.is_finite() => Ok(()),
            Self::Heat { t } => Err(validation(format!("heat time must be finite and non-negative, got {t}"))),
            Self::Wave { t, cutoff } if t.is_finite() => cutoff.validate(),
            Self::Wave { t, .. } => Err(validation(format!("wave time must be finite, got {t}"))),
            Self::Resolvent { z } => {
                if !(z.re.is_finite() && z.im.is_finite()) {
                    Err(validation("resolvent point must be finite"))
                } else if z.im == 0.0 && z.re >= 0.0 {
                    Err(validation(format!("resolvent point z = {z} lies on the spectrum [0, ∞)")))
                } else {
                    Ok(())
                }
            }
            Self::Riesz { radius, delta } => {
                if !(radius > 0.0 && radius.is_finite()) {
                    Err(validation(format!("Riesz radius must be positive, got {radius}")))
                } else if !(delta >= 0.0 && delta.is_finite()) {
                    Err(validation(format!("Riesz index must be non-negative, got {delta}")))
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn eval(&self, l: f64) -> Complex64 {
        let re = |x: f64| Complex64::new(x, 0.0);
        match *self {
            Self::Identity => re(1.0),
            Self::Heat { t } => re((-t * l * l).exp()),
            Self::Wave { t, cutoff } => {
                let phi = cutoff.eval(l);
                if phi == 0.0 || t == 0.0 {
                    re(0.0)
                } else {
                    re((t * l).sin() / l * phi)
                }
            }
            Self::Resolvent { z } => 1.0 / (re(l * l) - z),
            Self::Riesz { radius, delta } => {
                let x = 1.0 - (l / radius).powi(2);
                if x <= 0.0 {
                    re(0.0)
                } else {
                    re(x.powf(delta))
                }
            }
        }
    }
}

fn calculus_in(req: &CalculusRequest, f: &Field2D, basis: &ModeBasis, plan: &HankelPlan) -> Result<Field2D> {
    req.validate()?;
    let dec = decompose(f, basis)?;
    let coefficients = par::try_map_range(dec.coefficients.len(), |i| {
        plan.multiplier(&dec.coefficients[i], basis.orders[i], |l| req.eval(l))
    })?;
    synthesize(
        &ModalDecomposition {
            kind: basis.kind,
            coefficients,
        },
        basis,
    )
}

/// `F(L) f = Σ_α ℋ_ν̃ [F(λ²) ℋ_ν̃ f̃_α] φ_α` in the given basis.
pub fn functional_calculus_direct(req: &CalculusRequest, f: &Field2D, basis: &ModeBasis, plan: &HankelPlan) -> Result<Field2D> {
    if *f.grid != **plan.grid() {
        return Err(validation("field and plan use different radial grids"));
    }
    calculus_in(req, f, basis, plan)
}

/// `‖F(L_{A,a}) f - W F(L_{A,0}) W* f‖₂ / ‖f‖₂`.
pub fn intertwining_residual(req: &CalculusRequest, f: &Field2D, setup: &IntertwiningSetup) -> Result<f64> {
    setup.check(f)?;
    let direct = calculus_in(req, f, &setup.pert, &setup.plan)?;
    let conj = apply_w(&calculus_in(req, &apply_w_star(f, setup)?, &setup.free, &setup.plan)?, setup)?;
    let n = f.norm2();
    if n == 0.0 {
        return direct.distance(&conj);
    }
    Ok(direct.distance(&conj)? / n)
}

/// Open interval `(lo, hi)` of exponents, `hi` possibly infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PInterval {
    pub lo: f64,
    pub hi: f64,
}

impl PInterval {
    pub fn contains(&self, p: f64) -> bool {
        p > self.lo && p < self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleRange {
    pub mu1: f64,
    pub nu1: f64,
    pub w: PInterval,
    pub w_star: PInterval,
}

/// `(n - ν̃₁)/d < 1/p < (d - n + μ̃₁)/d`, read as an interval of `p` and
/// clamped to `(1, ∞)`.
fn p_interval(d: f64, n: f64, mu1: f64, nu1: f64) -> PInterval {
    let upper_inv = (d - n + mu1) / d;
    let lower_inv = (n - nu1) / d;
    let lo = if upper_inv > 0.0 { (1.0 / upper_inv).max(1.0) } else { f64::INFINITY };
    let hi = if lower_inv > 0.0 { (1.0 / lower_inv).max(1.0) } else { f64::INFINITY };
    PInterval { lo, hi }
}

/// Admissible `p` for `W` and `W*` from the first free and perturbed
/// eigenvalues in dimension `d`.
pub fn admissible_p_interval(d: usize, lambda1_free: f64, lambda1_pert: f64) -> Result<AdmissibleRange> {
    if d < 2 {
        return Err(validation("dimension must be at least 2"));
    }
    let mu1 = radial_order(lambda1_free, d)?;
    let nu1 = radial_order(lambda1_pert, d)?;
    let (df, n) = (d as f64, (d as f64 - 2.0) / 2.0);
    Ok(AdmissibleRange {
        mu1,
        nu1,
        w: p_interval(df, n, mu1, nu1),
        w_star: p_interval(df, n, nu1, mu1),
    })
}

pub fn admissible_p_range(free: &SpectrumTable, pert: &SpectrumTable) -> Result<AdmissibleRange> {
    let first = |t: &SpectrumTable| {
        t.eigenvalues
            .first()
            .copied()
            .ok_or_else(|| validation("empty spectrum table"))
    };
    admissible_p_interval(free.dimension(), first(free)?, first(pert)?)
}

/// Members of the declared test family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FamilyMember {
    /// Random log-bump profiles on angular frequencies `|n| <= J/4`.
    Random { seed: u64, band: i64 },
    /// Gaussian `exp(-|x - x₀|²/(2σ²))`.
    Translated { rho: f64, angle: f64, sigma: f64 },
    /// `log_bump(c, σ)(r) e^{inθ}`.
    HighMode { n: i64, c: f64, sigma: f64 },
}

impl FamilyMember {
    pub fn eval(&self, r: f64, th: f64) -> Complex64 {
        match *self {
            Self::Random { seed, band } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut s = Complex64::new(0.0, 0.0);
                for n in -band..=band {
                    for _ in 0..2 {
                        let amp = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                        let c = rng.gen_range(0.5f64..2.0);
                        let sigma = rng.gen_range(0.35..0.6);
                        s += amp * log_bump(c, sigma)(r) * Complex64::from_polar(1.0, n as f64 * th);
                    }
                }
                s
            }
            Self::Translated { rho, angle, sigma } => {
                let d2 = r * r + rho * rho - 2.0 * r * rho * (th - angle).cos();
                Complex64::new((-0.5 * d2 / (sigma * sigma)).exp(), 0.0)
            }
            Self::HighMode { n, c, sigma } => log_bump(c, sigma)(r) * Complex64::from_polar(1.0, n as f64 * th),
        }
    }

    pub fn field(&self, grid: Arc<RadialGrid>, q: usize) -> Result<Field2D> {
        Field2D::from_fn(grid, q, |r, th| self.eval(r, th))
    }
}

/// `size` members cycling through random band-limited fields, translated
/// bumps and high-mode fields below `J/2`.
pub fn test_family(cutoff: usize, size: usize, seed: u64) -> Vec<FamilyMember> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let high = (cutoff as i64 / 2 - 1).max(1);
    (0..size)
        .map(|i| match i % 3 {
            0 => FamilyMember::Random {
                seed: rng.gen(),
                band: (cutoff as i64 / 4).max(1),
            },
            1 => FamilyMember::Translated {
                rho: rng.gen_range(0.3..1.0),
                angle: rng.gen_range(0.0..2.0 * PI),
                sigma: rng.gen_range(0.8..1.2),
            },
            _ => FamilyMember::HighMode {
                n: if rng.gen::<bool>() { high } else { -high },
                c: rng.gen_range(0.8..2.0),
                sigma: rng.gen_range(0.3..0.5),
            },
        })
        .collect()
}

fn fit_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn check_exponent(p: f64) -> Result<()> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(validation(format!("p must lie in (1, ∞), got {p}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpScanRow {
    pub p: f64,
    pub max_ratio: f64,
    pub refined_max_ratio: f64,
    /// `refined / base - 1`.
    pub growth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpScanReport {
    pub rows: Vec<LpScanRow>,
    pub family: Vec<FamilyMember>,
}

fn lp_ratios(setup: &IntertwiningSetup, family: &[FamilyMember], p_list: &[f64]) -> Result<Vec<f64>> {
    let mut best = vec![0.0f64; p_list.len()];
    for m in family {
        let f = m.field(setup.grid().clone(), setup.q())?;
        let wf = apply_w(&f, setup)?;
        for (b, &p) in best.iter_mut().zip(p_list) {
            *b = b.max(wf.lp_norm(p) / f.lp_norm(p));
        }
    }
    Ok(best)
}

/// `max ‖Wf‖_p / ‖f‖_p` over [`test_family`] at `opts` and at
/// `opts.refined()`.
pub fn lp_ratio_scan(pot: &AngularPotential, opts: &SetupOptions, p_list: &[f64], family_size: usize, seed: u64) -> Result<LpScanReport> {
    if p_list.is_empty() || family_size == 0 {
        return Err(validation("empty L^p scan"));
    }
    for &p in p_list {
        check_exponent(p)?;
    }
    let base = IntertwiningSetup::from_potential(pot, opts)?;
    let range = admissible_p_range(&base.free.table, &base.pert.table)?;
    if let Some(p) = p_list.iter().find(|&&p| !range.w.contains(p)) {
        return Err(validation(format!("p = {p} outside the admissible range ({}, {})", range.w.lo, range.w.hi)));
    }
    let family = test_family(opts.cutoff, family_size, seed);
    let coarse = lp_ratios(&base, &family, p_list)?;
    drop(base);
    let fine = lp_ratios(&IntertwiningSetup::from_potential(pot, &opts.refined())?, &family, p_list)?;
    let rows = p_list
        .iter()
        .zip(coarse.iter().zip(&fine))
        .map(|(&p, (&c, &f))| LpScanRow {
            p,
            max_ratio: c,
            refined_max_ratio: f,
            growth: f / c - 1.0,
        })
        .collect();
    Ok(LpScanReport { rows, family })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveDecayReport {
    /// `(t, sup |u(t)|)`.
    pub samples: Vec<(f64, f64)>,
    pub slope: f64,
}

/// Sup norms of `sin(t√L)/√L · φ(√L) f` over `t_list ⊂ [1, 64]` and their
/// log-log slope. Errors if the outermost 1% of radial nodes carries a
/// larger value than the rest of the grid.
pub fn wave_decay_fit(setup: &IntertwiningSetup, cutoff: &WaveCutoff, t_list: &[f64], f: &Field2D) -> Result<WaveDecayReport> {
    cutoff.validate()?;
    setup.check(f)?;
    if t_list.len() < 2 || t_list.iter().any(|t| !(1.0..=64.0).contains(t)) {
        return Err(validation("wave decay fit needs at least two times in [1, 64]"));
    }
    let basis = &setup.pert;
    let dec = decompose(f, basis)?;
    let spectral = par::try_map_range(dec.coefficients.len(), |i| setup.plan.transform(&dec.coefficients[i], basis.orders[i]))?;
    let grid = setup.grid();
    let m = grid.m;
    let edge = (m / 100).max(2);
    let mut samples = Vec::with_capacity(t_list.len());
    for &t in t_list {
        let req = CalculusRequest::Wave { t, cutoff: *cutoff };
        let coefficients = par::try_map_range(spectral.len(), |i| {
            let mut g = spectral[i].clone();
            for (v, &l) in g.values.iter_mut().zip(&grid.nodes) {
                *v *= req.eval(l);
            }
            setup.plan.transform(&g, basis.orders[i])
        })?;
        let u = synthesize(
            &ModalDecomposition {
                kind: basis.kind,
                coefficients,
            },
            basis,
        )?;
        let mut interior = 0.0f64;
        let mut boundary = 0.0f64;
        for iq in 0..u.q {
            for (ir, v) in u.row(iq).iter().enumerate() {
                if ir >= m - edge {
                    boundary = boundary.max(v.norm());
                } else {
                    interior = interior.max(v.norm());
                }
            }
        }
        if boundary > interior {
            return Err(Error::Resolution(format!(
                "wave at t = {t} reaches the radial grid boundary (edge max {boundary:e} > interior max {interior:e})"
            )));
        }
        samples.push((t, interior));
    }
    let pts: Vec<(f64, f64)> = samples.iter().map(|&(t, s)| (t.ln(), s.ln())).collect();
    Ok(WaveDecayReport {
        slope: fit_slope(&pts),
        samples,
    })
}

/// `2/3 <= 1/p - 1/q < 1`, `3/4 < 1/p <= 1`, `0 <= 1/q < 1/4`, `p, q ∈ (1, ∞)`.
pub fn resolvent_window(p: f64, q: f64) -> Result<()> {
    check_exponent(p)?;
    check_exponent(q)?;
    let (ip, iq) = (1.0 / p, 1.0 / q);
    let gap = ip - iq;
    if !((2.0 / 3.0..1.0).contains(&gap) && ip > 0.75 && ip <= 1.0 && (0.0..0.25).contains(&iq)) {
        return Err(validation(format!(
            "(p, q) = ({p}, {q}) outside the window 2/3 <= 1/p - 1/q < 1, 3/4 < 1/p <= 1, 0 <= 1/q < 1/4 (1/p - 1/q = {gap:.4})"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolventRow {
    pub z: Complex64,
    /// `max_f ‖(L - z)^{-1} f‖_q / (|z|^{1/p - 1/q - 1} ‖f‖_p)`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolventReport {
    pub p: f64,
    pub q: f64,
    pub rows: Vec<ResolventRow>,
    pub max: f64,
    /// `max / min` over the rows.
    pub spread: f64,
}

/// Dilation factors of the resolvent family, `2^{k/2}` for `k = -2..=8`.
pub fn resolvent_dilations() -> Vec<f64> {
    (-2..=8).map(|k| 2f64.powf(k as f64 / 2.0)).collect()
}

/// Uniform resolvent probe: for each `z`, the sup of the scaled ratio over
/// the dilates `f(κ·)` of `base`, `κ ∈` [`resolvent_dilations`].
pub fn resolvent_probe(
    setup: &IntertwiningSetup,
    p: f64,
    q: f64,
    z_list: &[Complex64],
    base: &(dyn Fn(f64, f64) -> Complex64 + Sync),
) -> Result<ResolventReport> {
    resolvent_window(p, q)?;
    if z_list.is_empty() {
        return Err(validation("empty z list"));
    }
    let fields = resolvent_dilations()
        .into_iter()
        .map(|k| Field2D::from_fn(setup.grid().clone(), setup.q(), |r, th| base(k * r, th)))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(z_list.len());
    for &z in z_list {
        let req = CalculusRequest::Resolvent { z };
        let scale = z.norm().powf(1.0 / p - 1.0 / q - 1.0);
        let mut best = 0.0f64;
        for f in &fields {
            let u = calculus_in(&req, f, &setup.pert, &setup.plan)?;
            best = best.max(u.lp_norm(q) / (scale * f.lp_norm(p)));
        }
        rows.push(ResolventRow { z, ratio: best });
    }
    let max = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let min = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    Ok(ResolventReport {
        p,
        q,
        rows,
        max,
        spread: max / min,
    })
}

/// `δ_c(p, 2) = max{0, 2|1/2 - 1/p| - 1/2}`.
pub fn riesz_critical_index(p: f64) -> f64 {
    (2.0 * (0.5 - 1.0 / p).abs() - 0.5).max(0.0)
}

/// `δ > δ_c(p, 2)`, with `δ = 0` also admitted at `p = 2`.
pub fn riesz_admissible(p: f64, delta: f64) -> Result<()> {
    check_exponent(p)?;
    let dc = riesz_critical_index(p);
    let ok = delta > dc || (p == 2.0 && delta == 0.0);
    if !ok || !delta.is_finite() {
        return Err(validation(format!("Riesz index δ = {delta} must exceed δ_c(p = {p}, 2) = {dc}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RieszReport {
    pub p: f64,
    pub delta: f64,
    pub critical: f64,
    /// `max ‖S_R^δ f‖_p / ‖f‖_p` over the family and `R ∈ {1, 2, 8, 32}`.
    pub max_ratio: f64,
    pub refined_max_ratio: f64,
    /// `(R, max ‖S_R^δ f - f‖_p / ‖f‖_p)` for `R ∈ {2, 8, 32}`.
    pub convergence: Vec<(f64, f64)>,
}

fn riesz_pass(setup: &IntertwiningSetup, family: &[FamilyMember], p: f64, delta: f64, radii: &[f64]) -> Result<(f64, Vec<f64>)> {
    let mut ratio = 0.0f64;
    let mut conv = vec![0.0f64; radii.len()];
    for m in family {
        let f = m.field(setup.grid().clone(), setup.q())?;
        let fp = f.lp_norm(p);
        for (k, &radius) in std::iter::once(&1.0).chain(radii).enumerate() {
            let s = calculus_in(&CalculusRequest::Riesz { radius, delta }, &f, &setup.pert, &setup.plan)?;
            ratio = ratio.max(s.lp_norm(p) / fp);
            if k > 0 {
                conv[k - 1] = conv[k - 1].max(s.sub(&f)?.lp_norm(p) / fp);
            }
        }
    }
    Ok((ratio, conv))
}

/// Bochner–Riesz means `S_R^δ(L)` over [`test_family`].
///
/// `L` is homogeneous of degree 2, so `‖S_R f‖_p / ‖f‖_p` equals the `S_1`
/// ratio of the dilate `f(·/R)`; the bound is the max over the family and
/// `R ∈ {1, 2, 8, 32}`, at `opts` and `opts.refined()`. Convergence is
/// `max_f ‖S_R f - f‖_p / ‖f‖_p` for `R ∈ {2, 8, 32}`.
pub fn riesz_probe(pot: &AngularPotential, opts: &SetupOptions, p: f64, delta: f64, family_size: usize, seed: u64) -> Result<RieszReport> {
    riesz_admissible(p, delta)?;
    if family_size == 0 {
        return Err(validation("empty Riesz family"));
    }
    let radii = [2.0, 8.0, 32.0];
    let family = test_family(opts.cutoff, family_size, seed);
    let base = IntertwiningSetup::from_potential(pot, opts)?;
    let (max_ratio, conv) = riesz_pass(&base, &family, p, delta, &radii)?;
    drop(base);
    let fine = IntertwiningSetup::from_potential(pot, &opts.refined())?;
    let (refined_max_ratio, _) = riesz_pass(&fine, &family, p, delta, &radii)?;
    Ok(RieszReport {
        p,
        delta,
        critical: riesz_critical_index(p),
        max_ratio,
        refined_max_ratio,
        convergence: radii.iter().copied().zip(conv).collect(),
    })
}

/// `(index, ‖φ‖_∞, ν̃^d)` for the low modes: the diagnostic `‖φ_α‖_∞ ≲ |ν_α|^d`.
pub fn low_mode_sup_diagnostic(setup: &IntertwiningSetup) -> Result<Vec<(usize, f64, f64)>> {
    Ok(setup
        .low_modes()?
        .into_iter()
        .map(|i| {
            let sup = setup.pert.samples(i).iter().map(|v| v.norm()).fold(0.0, f64::max);
            (i, sup, setup.pert.orders[i].powi(2))
        })
        .collect())
}

/// One CSV line of an operator experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub experiment: String,
    pub parameter: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// CSV with columns `experiment, parameter, value, tolerance, pass`.
pub fn export_experiment_csv<W: Write>(rows: &[ExperimentRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| validation(e.to_string()))?;
    }
    w.flush().map_err(|e| validation(e.to_string()))?;
    Ok(())
}
