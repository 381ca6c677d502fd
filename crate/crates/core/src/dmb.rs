//! Discrete-multiplier-basis hypotheses (uniform bound and dyadic difference
//! bounds of cluster-averaged sequences) and the proper-perturbation
//! conditions for a pair of computed angular spectra.

use std::io::Write;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::angular::{remainder_from_eigenvectors, ClusterSet, SpectrumTable};
use crate::error::{validation, Result};

/// `C_{jk}` for `j = ell, ell+1, …`, optionally sampled on a uniform θ grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoubleSequence {
    pub ell: usize,
    /// Entries per cluster, `m_j`.
    pub m: usize,
    pub theta: Option<Vec<f64>>,
    /// `data[((j - ell) * m + k) * nθ + t]`.
    data: Vec<Complex64>,
}

impl DoubleSequence {
    /// Constant coefficients; `values[i]` holds the `m` entries of cluster `ell + i`.
    pub fn scalar(ell: usize, values: Vec<Vec<Complex64>>) -> Result<Self> {
        let m = values.first().map(Vec::len).unwrap_or(0);
        if m == 0 {
            return Err(validation("double sequence needs at least one non-empty cluster"));
        }
        if let Some(i) = values.iter().position(|v| v.len() != m) {
            return Err(validation(format!("cluster j = {} has {} entries, expected {m}", ell + i, values[i].len())));
        }
        Ok(Self {
            ell,
            m,
            theta: None,
            data: values.into_iter().flatten().collect(),
        })
    }

    /// `C_{jk} = f(j, k)` for `j ∈ [ell, jmax]`, `k ∈ 1..=m`.
    pub fn from_fn(ell: usize, jmax: usize, m: usize, f: impl Fn(usize, usize) -> Complex64) -> Result<Self> {
        if jmax < ell {
            return Err(validation(format!("empty range [{ell}, {jmax}]")));
        }
        Self::scalar(ell, (ell..=jmax).map(|j| (1..=m).map(|k| f(j, k)).collect()).collect())
    }

    /// θ-dependent coefficients on the uniform grid `2πt/nθ`;
    /// `values[i][k]` is the sampled `C_{ell+i, k+1}`.
    pub fn variable(ell: usize, n_theta: usize, values: Vec<Vec<Vec<Complex64>>>) -> Result<Self> {
        let m = values.first().map(Vec::len).unwrap_or(0);
        if m == 0 || n_theta < 4 {
            return Err(validation("variable sequence needs clusters and at least 4 angles"));
        }
        for (i, v) in values.iter().enumerate() {
            if v.len() != m {
                return Err(validation(format!("cluster j = {} has {} entries, expected {m}", ell + i, v.len())));
            }
            if v.iter().any(|s| s.len() != n_theta) {
                return Err(validation(format!("cluster j = {} is not sampled on {n_theta} angles", ell + i)));
            }
        }
        let theta = (0..n_theta).map(|t| 2.0 * std::f64::consts::PI * t as f64 / n_theta as f64).collect();
        Ok(Self {
            ell,
            m,
            theta: Some(theta),
            data: values.into_iter().flatten().flatten().collect(),
        })
    }

    fn n_theta(&self) -> usize {
        self.theta.as_ref().map_or(1, Vec::len)
    }

    pub fn clusters(&self) -> usize {
        self.data.len() / (self.m * self.n_theta())
    }

    pub fn jmax(&self) -> usize {
        self.ell + self.clusters() - 1
    }

    pub fn get(&self, j: usize, k: usize, t: usize) -> Complex64 {
        self.data[((j - self.ell) * self.m + k) * self.n_theta() + t]
    }

    /// `λ C`.
    pub fn scaled(&self, lambda: Complex64) -> Self {
        Self {
            data: self.data.iter().map(|v| v * lambda).collect(),
            ..self.clone()
        }
    }
}

/// `C̄_j(θ)` for `j = ell, …`; `values[i][t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub ell: usize,
    pub values: Vec<Vec<Complex64>>,
}

impl Averages {
    pub fn jmax(&self) -> usize {
        self.ell + self.values.len() - 1
    }

    pub fn at(&self, j: usize) -> &[Complex64] {
        &self.values[j - self.ell]
    }

    /// Spectral θ-derivative of every average (periodic uniform grid).
    pub fn theta_derivative(&self) -> Self {
        let n = self.values.first().map_or(0, Vec::len);
        if n <= 1 {
            return Self {
                ell: self.ell,
                values: self.values.iter().map(|v| vec![Complex64::new(0.0, 0.0); v.len()]).collect(),
            };
        }
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let values = self
            .values
            .iter()
            .map(|v| {
                let mut buf = v.clone();
                fwd.process(&mut buf);
                for (i, c) in buf.iter_mut().enumerate() {
                    let f = if 2 * i < n {
                        i as f64
                    } else if 2 * i == n {
                        0.0
                    } else {
                        i as f64 - n as f64
                    };
                    *c *= Complex64::new(0.0, f / n as f64);
                }
                inv.process(&mut buf);
                buf
            })
            .collect();
        Self { ell: self.ell, values }
    }
}

/// `C̄_j = (1/m_j) Σ_k C_{jk}`.
pub fn average_seq(seq: &DoubleSequence) -> Averages {
    let nt = seq.n_theta();
    let values = (seq.ell..=seq.jmax())
        .map(|j| {
            (0..nt)
                .map(|t| (0..seq.m).map(|k| seq.get(j, k, t)).sum::<Complex64>() / seq.m as f64)
                .collect()
        })
        .collect();
    Averages { ell: seq.ell, values }
}

/// `𝔇^N`, with `𝔇 C̄_j = C̄_{j+1} - C̄_j`; the result is shorter by `N`.
pub fn forward_difference(avgs: &Averages, order: usize) -> Averages {
    let mut v = avgs.values.clone();
    for _ in 0..order {
        v = v
            .windows(2)
            .map(|w| w[1].iter().zip(&w[0]).map(|(a, b)| a - b).collect())
            .collect();
    }
    Averages { ell: avgs.ell, values: v }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockSum {
    pub level: u32,
    /// `sup_θ 2^{(N-1)L} Σ_{j=2^L}^{2^{L+1}} |𝔇^N C̄_j(θ)|`.
    pub value: f64,
}

/// Dyadic block sums of `|𝔇^N C̄_j|` for every block `2^L ≥ ell` whose
/// differences are available.
pub fn dyadic_difference_sums(avgs: &Averages, order: usize) -> Result<Vec<BlockSum>> {
    if order == 0 {
        return Err(validation("difference order must be at least 1"));
    }
    let diff = forward_difference(avgs, order);
    if diff.values.is_empty() {
        return Err(validation(format!("need more than {order} clusters for order-{order} differences")));
    }
    let last = diff.jmax();
    let mut level = 0u32;
    while (1usize << level) < avgs.ell.max(1) {
        level += 1;
    }
    let mut out = Vec::new();
    loop {
        let (lo, hi) = (1usize << level, 1usize << (level + 1));
        if hi > last {
            break;
        }
        let nt = diff.values[0].len();
        let weight = 2f64.powi(((order - 1) * level as usize) as i32);
        let value = (0..nt)
            .map(|t| (lo..=hi).map(|j| diff.at(j)[t].norm()).sum::<f64>())
            .fold(0.0, f64::max)
            * weight;
        out.push(BlockSum { level, value });
        level += 1;
    }
    if out.is_empty() {
        return Err(validation(format!(
            "block L = {level} needs clusters up to j = {}, have {}",
            (1usize << (level + 1)) + order,
            avgs.jmax()
        )));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmbThresholds {
    pub uniform: f64,
    pub difference: f64,
}

impl Default for DmbThresholds {
    fn default() -> Self {
        Self {
            uniform: 10.0,
            difference: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderReport {
    pub order: usize,
    pub blocks: Vec<BlockSum>,
    pub sup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmbReport {
    pub uniform_bound_sup: f64,
    pub per_order: Vec<OrderReport>,
    /// Same checks on `∂_θ^{d-1} C̄_j` for θ-dependent sequences.
    pub derivative: Option<Box<DmbReport>>,
    pub thresholds: DmbThresholds,
    pub pass: bool,
}

/// Orders checked: `1, …, ⌊(d-1)/2⌋`, and always `N = 1`.
pub fn difference_orders(d: usize) -> Vec<usize> {
    let top = (d.saturating_sub(1) / 2).max(1);
    (1..=top).collect()
}

/// Uniform bound and dyadic difference bounds of `C̄_j`.
pub fn check_dmb_conditions(seq: &DoubleSequence, d: usize, thresholds: &DmbThresholds) -> Result<DmbReport> {
    let avgs = average_seq(seq);
    let mut rep = check_averages(&avgs, d, thresholds)?;
    if seq.theta.is_some() {
        let mut da = avgs.theta_derivative();
        for _ in 1..d.saturating_sub(1) {
            da = da.theta_derivative();
        }
        let dr = check_averages(&da, d, thresholds)?;
        rep.pass &= dr.pass;
        rep.derivative = Some(Box::new(dr));
    }
    Ok(rep)
}

fn check_averages(avgs: &Averages, d: usize, thresholds: &DmbThresholds) -> Result<DmbReport> {
    let uniform_bound_sup = avgs.values.iter().flatten().map(|v| v.norm()).fold(0.0, f64::max);
    let mut pass = uniform_bound_sup <= thresholds.uniform;
    let mut per_order = Vec::new();
    for order in difference_orders(d) {
        let blocks = dyadic_difference_sums(avgs, order)?;
        let sup = blocks.iter().map(|b| b.value).fold(0.0, f64::max);
        pass &= sup <= thresholds.difference;
        per_order.push(OrderReport { order, blocks, sup });
    }
    Ok(DmbReport {
        uniform_bound_sup,
        per_order,
        derivative: None,
        thresholds: *thresholds,
        pass,
    })
}

// ---------------------------------------------------------------------------
// Proper perturbation

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProperPerturbationOptions {
    pub jmin: usize,
    pub jmax: usize,
    /// θ samples for the remainders.
    pub grid: usize,
    pub thresholds: DmbThresholds,
}

impl Default for ProperPerturbationOptions {
    fn default() -> Self {
        Self {
            jmin: 8,
            jmax: 64,
            grid: 256,
            thresholds: DmbThresholds::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub j: usize,
    pub k: u8,
    /// `ν_{jk}^2 - μ_{jk}^2`.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProperPerturbationReport {
    pub ell: usize,
    pub c_a: f64,
    pub deltas: Vec<DeltaRow>,
    /// `max_j j |δ_{jk} - C_a|`.
    pub delta_constant: f64,
    /// Log-log slope of `max_k |δ_{jk} - C_a|` against `j`.
    pub delta_slope: f64,
    /// `(j, sup_θ |R̄_j|)`.
    pub remainder_sup: Vec<(usize, f64)>,
    /// `max_j j sup_θ |R̄_j|`.
    pub remainder_constant: f64,
    pub remainder_slope: f64,
    /// `ℓ ·` sup over blocks of the `N = 1` sums of `𝔇R̄_j`.
    pub difference_constant: f64,
    /// `ℓ · sup_j sup_θ |∂_θ R̄_j|`.
    pub derivative_constant: f64,
    /// `ℓ ·` sup over blocks of the `N = 1` sums of `𝔇∂_θR̄_j`.
    pub derivative_difference_constant: f64,
    pub eigenvalue_pass: bool,
    pub eigenfunction_pass: bool,
    pub pass: bool,
}

fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, y)| *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NEG_INFINITY;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Conditions (1) and (2a)–(2d) of a proper perturbation over
/// `j ∈ [max(ℓ, jmin), jmax]`, with `C_a = ã` and `N = 1`.
///
/// Condition (1) passes when `j |δ - C_a|` stays below the threshold and does
/// not grow (log-log slope of `|δ - C_a|` below `-1/2`); (2a) likewise for
/// `sup |R̄_j|`; (2b)–(2d) compare `ℓ ·` the quantity with the threshold.
pub fn check_proper_perturbation(
    free: &SpectrumTable,
    pert: &SpectrumTable,
    free_clusters: &ClusterSet,
    pert_clusters: &ClusterSet,
    opts: &ProperPerturbationOptions,
) -> Result<ProperPerturbationReport> {
    let ell = free_clusters.ell.max(pert_clusters.ell);
    let j0 = ell.max(opts.jmin);
    if opts.jmax < j0 + 2 {
        return Err(validation(format!("cluster range [{j0}, {}] too short", opts.jmax)));
    }
    let c_a = pert_clusters.c_small - free_clusters.c_small;
    let mut deltas = Vec::new();
    let mut pairs = Vec::new();
    for j in j0..=opts.jmax {
        for k in [1u8, 2] {
            let (f, p) = match (free_clusters.find(j, k), pert_clusters.find(j, k)) {
                (Some(f), Some(p)) => (f, p),
                _ => return Err(validation(format!("cluster ({j}, {k}) missing from one of the tables"))),
            };
            deltas.push(DeltaRow {
                j,
                k,
                delta: p.nu_sq - f.nu_sq,
            });
            pairs.push((*f, *p));
        }
    }
    let per_j: Vec<(f64, f64)> = (j0..=opts.jmax)
        .map(|j| {
            let dev = deltas
                .iter()
                .filter(|d| d.j == j)
                .map(|d| (d.delta - c_a).abs())
                .fold(0.0, f64::max);
            (j as f64, dev)
        })
        .collect();
    let delta_constant = per_j.iter().map(|(j, d)| j * d).fold(0.0, f64::max);
    let delta_slope = loglog_slope(&per_j);
    let th = opts.thresholds;
    let eigenvalue_pass = delta_constant <= 1e-9 || (delta_constant <= th.uniform && delta_slope < -0.5);

    // R̄_j(θ) and its θ-derivative, averaged over k
    let mut rbar = Vec::new();
    let mut drbar = Vec::new();
    for pair in pairs.chunks(2) {
        let mut acc = vec![Complex64::new(0.0, 0.0); opts.grid];
        let mut dacc = vec![Complex64::new(0.0, 0.0); opts.grid];
        for (f, p) in pair {
            let prof = remainder_from_eigenvectors(free, pert, f, p, opts.grid)?;
            for t in 0..opts.grid {
                acc[t] += prof.main[t] * 0.5;
                dacc[t] += prof.main_deriv[t] * 0.5;
            }
        }
        rbar.push(acc);
        drbar.push(dacc);
    }
    let remainder_sup: Vec<(usize, f64)> = rbar
        .iter()
        .enumerate()
        .map(|(i, v)| (j0 + i, v.iter().map(|c| c.norm()).fold(0.0, f64::max)))
        .collect();
    let remainder_constant = remainder_sup.iter().map(|(j, s)| *j as f64 * s).fold(0.0, f64::max);
    let fit: Vec<(f64, f64)> = remainder_sup.iter().map(|(j, s)| (*j as f64, *s)).collect();
    let remainder_slope = loglog_slope(&fit);
    let all_zero = remainder_constant <= 1e-9;
    let r_avgs = Averages { ell: j0, values: rbar };
    let d_avgs = Averages { ell: j0, values: drbar };
    let block_sup = |a: &Averages| -> Result<f64> {
        Ok(dyadic_difference_sums(a, 1)?.iter().map(|b| b.value).fold(0.0, f64::max))
    };
    let ellf = ell as f64;
    let difference_constant = ellf * block_sup(&r_avgs)?;
    let derivative_constant = ellf * d_avgs.values.iter().flatten().map(|c| c.norm()).fold(0.0, f64::max);
    let derivative_difference_constant = ellf * block_sup(&d_avgs)?;
    let eigenfunction_pass = (all_zero || (remainder_constant <= th.uniform && remainder_slope < -0.5))
        && difference_constant <= th.difference
        && derivative_constant <= th.difference
        && derivative_difference_constant <= th.difference;
    Ok(ProperPerturbationReport {
        ell,
        c_a,
        deltas,
        delta_constant,
        delta_slope,
        remainder_sup,
        remainder_constant,
        remainder_slope,
        difference_constant,
        derivative_constant,
        derivative_difference_constant,
        eigenvalue_pass,
        eigenfunction_pass,
        pass: eigenvalue_pass && eigenfunction_pass,
    })
}

// ---------------------------------------------------------------------------
// Output

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmbRow {
    pub j_or_l: usize,
    pub quantity: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Rows for a [`DmbReport`]: the uniform bound (index 0) and every block sum.
pub fn dmb_rows(rep: &DmbReport) -> Vec<DmbRow> {
    let mut rows = vec![DmbRow {
        j_or_l: 0,
        quantity: "uniform_bound".into(),
        value: rep.uniform_bound_sup,
        threshold: rep.thresholds.uniform,
        pass: rep.uniform_bound_sup <= rep.thresholds.uniform,
    }];
    for o in &rep.per_order {
        for b in &o.blocks {
            rows.push(DmbRow {
                j_or_l: b.level as usize,
                quantity: format!("difference_sum_n{}", o.order),
                value: b.value,
                threshold: rep.thresholds.difference,
                pass: b.value <= rep.thresholds.difference,
            });
        }
    }
    if let Some(d) = &rep.derivative {
        for mut r in dmb_rows(d) {
            r.quantity = format!("dtheta_{}", r.quantity);
            rows.push(r);
        }
    }
    rows
}

/// Rows for a [`ProperPerturbationReport`].
pub fn proper_perturbation_rows(rep: &ProperPerturbationReport, thresholds: &DmbThresholds) -> Vec<DmbRow> {
    let mut rows: Vec<DmbRow> = rep
        .deltas
        .iter()
        .map(|d| DmbRow {
            j_or_l: d.j,
            quantity: format!("j_delta_dev_k{}", d.k),
            value: d.j as f64 * (d.delta - rep.c_a).abs(),
            threshold: thresholds.uniform,
            pass: d.j as f64 * (d.delta - rep.c_a).abs() <= thresholds.uniform,
        })
        .collect();
    for (j, s) in &rep.remainder_sup {
        rows.push(DmbRow {
            j_or_l: *j,
            quantity: "j_sup_rbar".into(),
            value: *j as f64 * s,
            threshold: thresholds.uniform,
            pass: *j as f64 * s <= thresholds.uniform,
        });
    }
    for (name, v) in [
        ("ell_difference_sum", rep.difference_constant),
        ("ell_sup_dtheta_rbar", rep.derivative_constant),
        ("ell_dtheta_difference_sum", rep.derivative_difference_constant),
    ] {
        rows.push(DmbRow {
            j_or_l: rep.ell,
            quantity: name.into(),
            value: v,
            threshold: thresholds.difference,
            pass: v <= thresholds.difference,
        });
    }
    rows
}

/// CSV with columns `j_or_l, quantity, value, threshold, pass`.
pub fn export_dmb_csv<W: Write>(rows: &[DmbRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(|e| validation(e.to_string()))?;
    }
    w.flush().map_err(|e| validation(e.to_string()))?;
    Ok(())
}
