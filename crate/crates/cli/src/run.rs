//! Pipelines behind each subcommand.
//!
//! Every pipeline returns the summary rows `(experiment, parameter, value,
//! tolerance, pass)` plus optional detail tables, each a CSV body.

use num_complex::Complex64;
use serde::Serialize;
use stark_core::angular::{
    cluster_partition, comparison_check, export_csv, remainder_from_eigenvectors, solve_quasi_periodic, spectrum_rows, ClusterSet,
    GalerkinOptions, SpectrumTable,
};
use stark_core::dmb::{
    check_dmb_conditions, check_proper_perturbation, export_dmb_csv, proper_perturbation_rows, DmbThresholds, DoubleSequence,
    ProperPerturbationOptions,
};
use stark_core::hankel::log_bump;
use stark_core::intertwining::{
    apply_w, apply_w_star, decompose, intertwining_residual, lp_ratio_scan, resolvent_probe, riesz_critical_index, riesz_probe, synthesize, test_family,
    wave_decay_fit, CalculusRequest, ExperimentRow, Field2D, IntertwiningSetup,
};
use stark_core::kernel::{kernel_row_euler, kernel_series_eval, KernelParams};
use stark_core::mellin::{derivative_check_scan, derivative_plateau, export_scan_csv, strip_check, strip_scan, MultiplierParams};
use stark_core::specfun::gamma_ratio;
use stark_core::{par, Error, Result};

use crate::config::ExperimentConfig;

/// The experiments reachable from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Subcommand {
    Spectrum,
    Clusters,
    Dmb,
    KernelCheck,
    MellinScan,
    IntertwineCheck,
    Propagate,
    Resolvent,
    Riesz,
    LpScan,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Self::Spectrum => "spectrum",
            Self::Clusters => "clusters",
            Self::Dmb => "dmb",
            Self::KernelCheck => "kernel-check",
            Self::MellinScan => "mellin-scan",
            Self::IntertwineCheck => "intertwine-check",
            Self::Propagate => "propagate",
            Self::Resolvent => "resolvent",
            Self::Riesz => "riesz",
            Self::LpScan => "lp-scan",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub rows: Vec<ExperimentRow>,
    /// `(file name, CSV body)`.
    pub details: Vec<(String, Vec<u8>)>,
}

impl Report {
    pub fn pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    fn push(&mut self, experiment: &str, parameter: impl Into<String>, value: f64, tolerance: f64, pass: bool) {
        self.rows.push(ExperimentRow {
            experiment: experiment.into(),
            parameter: parameter.into(),
            value,
            tolerance,
            pass,
        });
    }

    /// Row passing when `value <= tolerance`.
    fn at_most(&mut self, experiment: &str, parameter: impl Into<String>, value: f64, tolerance: f64) {
        self.push(experiment, parameter, value, tolerance, value <= tolerance);
    }
}

/// Exit status of an error: 3 for convergence and resolution failures, 2
/// otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Convergence { .. } | Error::Resolution(_) => 3,
        Error::Domain(_) | Error::Validation(_) => 2,
    }
}

pub fn run(cmd: Subcommand, cfg: &ExperimentConfig) -> Result<Report> {
    match cmd {
        Subcommand::Spectrum => spectrum(cfg),
        Subcommand::Clusters => clusters(cfg),
        Subcommand::Dmb => dmb(cfg),
        Subcommand::KernelCheck => kernel_check(cfg),
        Subcommand::MellinScan => mellin_scan(cfg),
        Subcommand::IntertwineCheck => intertwine_check(cfg),
        Subcommand::Propagate => propagate(cfg),
        Subcommand::Resolvent => resolvent(cfg),
        Subcommand::Riesz => riesz(cfg),
        Subcommand::LpScan => lp_scan(cfg),
    }
}

fn csv_body<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv_writer();
    for r in rows {
        w.serialize(r).map_err(|e| Error::Validation(format!("csv: {e}")))?;
    }
    w.into_inner().map_err(|e| Error::Validation(format!("csv: {e}")))
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::Writer::from_writer(Vec::new())
}

struct Tables {
    free: SpectrumTable,
    pert: SpectrumTable,
    fc: ClusterSet,
    pc: ClusterSet,
}

fn tables(cfg: &ExperimentConfig, truncation: usize, vectors: bool) -> Result<Tables> {
    let pot = cfg.potential.to_potential();
    let opts = GalerkinOptions {
        truncation,
        vectors,
        ..GalerkinOptions::default()
    };
    let free = solve_quasi_periodic(&pot.free_counterpart(), &opts)?;
    let pert = solve_quasi_periodic(&pot, &opts)?;
    let fc = cluster_partition(&free)?;
    let pc = cluster_partition(&pert)?;
    Ok(Tables { free, pert, fc, pc })
}

fn free_exact(flux: f64, count: usize) -> Vec<f64> {
    let half = count as i64 + 2;
    let mut v: Vec<f64> = (-half..=half).map(|n| (n as f64 + flux).powi(2)).collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.truncate(count);
    v
}

fn spectrum(cfg: &ExperimentConfig) -> Result<Report> {
    let t = tables(cfg, cfg.grid.n, true)?;
    let mut rep = Report::default();
    let pot = &t.pert.potential;
    if pot.electric.is_zero() {
        let count = t.pert.len().min(100);
        let exact = free_exact(pot.flux_mean(), count);
        let err = t.pert.eigenvalues[..count]
            .iter()
            .zip(&exact)
            .map(|(a, b)| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);
        rep.at_most("spectrum", format!("free_rel_err_lowest_{count}"), err, cfg.tolerances.spectrum);
    } else {
        let cmp = comparison_check(&t.pert)?;
        let margin = cmp.lower_margin.iter().chain(&cmp.upper_margin).copied().fold(f64::INFINITY, f64::min);
        rep.push("spectrum", "comparison_min_margin", margin, 0.0, cmp.pass);
    }
    let rows = spectrum_rows(&t.free, &t.pert, &t.fc, &t.pc, cfg.experiment.theta_grid)?;
    let mut body = Vec::new();
    export_csv(&rows, &mut body)?;
    rep.details.push(("spectrum_table.csv".into(), body));
    Ok(rep)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in pts {
        let (lx, ly) = (x.ln(), y.ln());
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

#[derive(Serialize)]
struct ClusterRow {
    j: usize,
    k: u8,
    mu_sq: f64,
    nu_sq: f64,
    deviation: f64,
    j_sup_r: f64,
    j_sup_r_refined: f64,
}

/// `j sup_θ |R_jk|` for the clusters `(j, k)` with `j ∈ [j_min, j_max]`.
fn remainder_constants(t: &Tables, labels: &[(usize, u8)], grid: usize) -> Result<Vec<f64>> {
    par::try_map_range(labels.len(), |i| {
        let (j, k) = labels[i];
        let fm = t.fc.find(j, k).ok_or_else(|| missing(j, k))?;
        let pm = t.pc.find(j, k).ok_or_else(|| missing(j, k))?;
        Ok(remainder_from_eigenvectors(&t.free, &t.pert, fm, pm, grid)?.sup * j as f64)
    })
}

fn missing(j: usize, k: u8) -> Error {
    Error::Resolution(format!("no cluster ({j}, {k}): below ℓ or beyond the Galerkin truncation"))
}

fn clusters(cfg: &ExperimentConfig) -> Result<Report> {
    let e = &cfg.experiment;
    let tol = &cfg.tolerances;
    let t = tables(cfg, cfg.grid.n, true)?;
    let fine = tables(cfg, 2 * cfg.grid.n, true)?;
    // clusters start at ℓ; below it the eigenvalues are low modes
    let lo = e.j_min.max(t.pc.ell).max(t.fc.ell);
    let labels: Vec<(usize, u8)> = (lo..=e.j_max).flat_map(|j| [(j, 1u8), (j, 2u8)]).collect();
    let range = format!("j={lo}..{}", e.j_max);
    let mut rep = Report::default();
    let mut fit = Vec::new();
    let mut devs = Vec::new();
    for &(j, k) in &labels {
        let (fm, pm) = (t.fc.find(j, k).ok_or_else(|| missing(j, k))?, t.pc.find(j, k).ok_or_else(|| missing(j, k))?);
        let dev = (pm.nu_sq - fm.nu_sq - t.pc.c_small).abs();
        devs.push((fm.nu_sq, pm.nu_sq, dev));
        // deviations at round-off carry no rate information
        if dev > 1e-12 * pm.nu_sq.abs().max(1.0) {
            fit.push((j as f64, dev));
        }
    }
    let slope = if fit.len() >= 2 { loglog_slope(&fit) } else { f64::NEG_INFINITY };
    rep.push("clusters", format!("{range} deviation_loglog_slope"), slope, -tol.cluster_decay, slope <= -tol.cluster_decay);
    let c = remainder_constants(&t, &labels, e.theta_grid)?;
    let cf = remainder_constants(&fine, &labels, e.theta_grid)?;
    let max = c.iter().copied().fold(0.0, f64::max);
    let max_fine = cf.iter().copied().fold(0.0, f64::max);
    rep.push("clusters", format!("{range} remainder_constant"), max, f64::INFINITY, max.is_finite());
    let drift = if max_fine > 0.0 { (max - max_fine).abs() / max_fine } else { (max - max_fine).abs() };
    rep.at_most("clusters", format!("{range} remainder_constant_refinement_drift"), drift, tol.stability);
    let rows: Vec<ClusterRow> = labels
        .iter()
        .zip(&devs)
        .zip(c.iter().zip(&cf))
        .map(|((&(j, k), &(mu_sq, nu_sq, deviation)), (&a, &b))| ClusterRow {
            j,
            k,
            mu_sq,
            nu_sq,
            deviation,
            j_sup_r: a,
            j_sup_r_refined: b,
        })
        .collect();
    rep.details.push(("clusters_table.csv".into(), csv_body(&rows)?));
    Ok(rep)
}

fn dmb(cfg: &ExperimentConfig) -> Result<Report> {
    let e = &cfg.experiment;
    let t = tables(cfg, cfg.grid.n, true)?;
    let th = DmbThresholds {
        uniform: cfg.tolerances.dmb,
        difference: cfg.tolerances.dmb,
    };
    let jmax = e.j_max.min(t.pc.max_cluster().min(t.fc.max_cluster()) - 1);
    let opts = ProperPerturbationOptions {
        jmin: e.j_min,
        jmax,
        grid: e.theta_grid,
        thresholds: th,
    };
    let pp = check_proper_perturbation(&t.free, &t.pert, &t.fc, &t.pc, &opts)?;
    let mut rep = Report::default();
    rep.push("dmb", "eigenvalue_delta_constant", pp.delta_constant, th.uniform, pp.eigenvalue_pass);
    rep.push("dmb", "eigenfunction_remainder_constant", pp.remainder_constant, th.uniform, pp.eigenfunction_pass);
    // sin(π b_jk) of the kernel parameters, the leading coefficient of the series
    let ell = t.pc.ell.max(e.j_min);
    let params = |j: usize, k: usize| -> Result<KernelParams> {
        let (m, n) = (t.fc.find(j, k as u8).ok_or_else(|| missing(j, k as u8))?, t.pc.find(j, k as u8).ok_or_else(|| missing(j, k as u8))?);
        KernelParams::new(m.nu_tilde(), n.nu_tilde(), 2, 2.0)
    };
    let mut vals = Vec::new();
    for j in ell..=jmax + 1 {
        vals.push(vec![
            Complex64::new((std::f64::consts::PI * params(j, 1)?.b()).sin(), 0.0),
            Complex64::new((std::f64::consts::PI * params(j, 2)?.b()).sin(), 0.0),
        ]);
    }
    let seq = DoubleSequence::scalar(ell, vals)?;
    let kr = check_dmb_conditions(&seq, 2, &th)?;
    rep.push("dmb", "kernel_sin_pi_b_uniform_bound", kr.uniform_bound_sup, th.uniform, kr.pass);
    let mut body = Vec::new();
    export_dmb_csv(&proper_perturbation_rows(&pp, &th), &mut body)?;
    rep.details.push(("dmb_table.csv".into(), body));
    Ok(rep)
}

/// `(j, μ̃_j1, ν̃_j1)` for the configured kernel clusters.
fn cluster_orders(cfg: &ExperimentConfig) -> Result<Vec<(usize, f64, f64)>> {
    let t = tables(cfg, cfg.grid.n, false)?;
    cfg.experiment
        .kernel_clusters
        .iter()
        .map(|&j| {
            let fm = t.fc.find(j, 1).ok_or_else(|| missing(j, 1))?;
            let pm = t.pc.find(j, 1).ok_or_else(|| missing(j, 1))?;
            Ok((j, fm.nu_tilde(), pm.nu_tilde()))
        })
        .collect()
}

#[derive(Serialize)]
struct KernelDetail {
    j: usize,
    mu_tilde: f64,
    nu_tilde: f64,
    r: f64,
    s: f64,
    series_value: f64,
    oracle_value: f64,
    rel_err: f64,
    terms_used: usize,
}

fn kernel_check(cfg: &ExperimentConfig) -> Result<Report> {
    let e = &cfg.experiment;
    let tol = cfg.tolerances.kernel;
    let mut rep = Report::default();
    let mut details = Vec::new();
    let pairs: Vec<(f64, f64)> = e.kernel_r.iter().flat_map(|&r| e.kernel_s.iter().map(move |&s| (r, s))).filter(|(r, s)| r != s).collect();
    for (j, mu, nu) in cluster_orders(cfg)? {
        let params = KernelParams::new(mu, nu, 2, 2.0)?;
        let rows = par::try_map_range(pairs.len(), |i| kernel_row_euler(pairs[i].0, pairs[i].1, &params, 1e-12))?;
        let worst = rows.iter().map(|r| r.rel_err).fold(0.0, f64::max);
        rep.at_most("kernel-check", format!("j={j} max_rel_err"), worst, tol);
        let same = KernelParams::new(mu, mu, 2, 2.0)?;
        let zero = pairs
            .iter()
            .map(|&(r, s)| kernel_series_eval(r, s, &same, 1e-12).map(|v| v.value.abs()))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        rep.push("kernel-check", format!("j={j} equal_order_max_abs"), zero, 0.0, zero == 0.0);
        details.extend(rows.into_iter().map(|r| KernelDetail {
            j,
            mu_tilde: mu,
            nu_tilde: nu,
            r: r.r,
            s: r.s,
            series_value: r.series_value,
            oracle_value: r.oracle_value,
            rel_err: r.rel_err,
            terms_used: r.terms_used,
        }));
    }
    let mut bound = 0.0f64;
    for &a in &e.gamma_a {
        for &b in &e.gamma_b {
            let scale = a.powf(b.abs());
            let mut sup = 0.0f64;
            // b = -1 puts a pole of Γ(b + n + 1) at n = 0
            let first = if b + 1.0 <= 0.0 { 1 } else { 0 };
            for n in first..=e.gamma_n_max {
                sup = sup.max(gamma_ratio(a, b, n)? / scale);
            }
            bound = bound.max(sup);
        }
    }
    rep.at_most("kernel-check", "gamma_ratio_constant", bound, cfg.tolerances.gamma_bound);
    rep.details.push(("kernel_table.csv".into(), csv_body(&details)?));
    Ok(rep)
}

fn mellin_scan(cfg: &ExperimentConfig) -> Result<Report> {
    let e = &cfg.experiment;
    let tol = &cfg.tolerances;
    let mut rep = Report::default();
    for (j, mu, nu) in cluster_orders(cfg)? {
        let p = MultiplierParams::new(nu, mu, 2)?;
        let strip = strip_check(&p, e.mellin_p)?;
        rep.push("mellin-scan", format!("j={j} strip_margin_at_d_over_p"), strip.margin_lower.min(strip.margin_upper), 0.0, strip.admissible);
        let n = e.mellin_nodes;
        let coarse = strip_scan(&p, 0.05, e.mellin_y_max, n, n)?;
        let fine = strip_scan(&p, 0.05, e.mellin_y_max, 2 * n - 1, 2 * n - 1)?;
        let drift = (coarse.max_abs_m - fine.max_abs_m).abs() / fine.max_abs_m;
        rep.at_most("mellin-scan", format!("j={j} sup_abs_m_refinement_drift"), drift, tol.mellin_refinement);
        let x = strip.d_over_p;
        let mut worst = 0.0f64;
        for y in [0.0, 1.0, 10.0, 40.0] {
            worst = worst.max(derivative_check_scan(Complex64::new(x, y), &p)?.1);
        }
        rep.at_most("mellin-scan", format!("j={j} derivative_central_difference"), worst, tol.mellin_derivative);
        let pl = derivative_plateau(&p, x, e.plateau_y_lo, e.plateau_y_hi, 9, tol.mellin_plateau)?;
        rep.push("mellin-scan", format!("j={j} derivative_times_im_z_plateau_spread"), pl.spread, tol.mellin_plateau, pl.pass);
        let mut body = Vec::new();
        export_scan_csv(&coarse, &mut body)?;
        rep.details.push((format!("mellin_scan_j{j}.csv"), body));
    }
    Ok(rep)
}

fn setup(cfg: &ExperimentConfig) -> Result<IntertwiningSetup> {
    IntertwiningSetup::from_potential(&cfg.potential.to_potential(), &cfg.grid.setup_options())
}

fn intertwine_check(cfg: &ExperimentConfig) -> Result<Report> {
    let s = setup(cfg)?;
    let tol = &cfg.tolerances;
    let e = &cfg.experiment;
    let family = test_family(cfg.grid.j, e.family_size, cfg.seed);
    let fields = family.iter().map(|m| m.field(s.grid().clone(), s.q())).collect::<Result<Vec<_>>>()?;
    let (mut norm, mut inv, mut inv2, mut heat, mut wave) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let heat_req = CalculusRequest::Heat { t: e.heat_t };
    let wave_req = CalculusRequest::Wave {
        t: e.wave_t,
        cutoff: cfg.wave_cutoff,
    };
    for f in &fields {
        let n = f.norm2();
        let w = apply_w(f, &s)?;
        norm = norm.max((w.norm2() - n).abs() / n);
        // W*W and WW* are the projections onto the free and perturbed modes
        let pf = synthesize(&decompose(f, &s.free)?, &s.free)?;
        let qf = synthesize(&decompose(f, &s.pert)?, &s.pert)?;
        inv = inv.max(apply_w_star(&w, &s)?.distance(&pf)? / n);
        inv2 = inv2.max(apply_w(&apply_w_star(f, &s)?, &s)?.distance(&qf)? / n);
        heat = heat.max(intertwining_residual(&heat_req, f, &s)? / n);
        wave = wave.max(intertwining_residual(&wave_req, f, &s)? / n);
    }
    let mut rep = Report::default();
    rep.at_most("intertwine-check", "norm_defect", norm, tol.unitarity);
    rep.at_most("intertwine-check", "w_star_w_residual", inv, tol.unitarity);
    rep.at_most("intertwine-check", "w_w_star_residual", inv2, tol.unitarity);
    rep.at_most("intertwine-check", format!("heat_t={}_residual", e.heat_t), heat, tol.intertwining);
    rep.at_most("intertwine-check", format!("wave_t={}_residual", e.wave_t), wave, tol.intertwining);
    Ok(rep)
}

/// `log_bump(1, 0.4)(r) (1 + cos θ / 2)`.
pub fn wave_data(s: &IntertwiningSetup) -> Result<Field2D> {
    let b = log_bump(1.0, 0.4);
    Field2D::from_fn(s.grid().clone(), s.q(), |r, th| Complex64::new(b(r) * (1.0 + 0.5 * th.cos()), 0.0))
}

#[derive(Serialize)]
struct DecayRow {
    t: f64,
    sup: f64,
}

fn propagate(cfg: &ExperimentConfig) -> Result<Report> {
    let s = setup(cfg)?;
    let f = wave_data(&s)?;
    let times = &cfg.experiment.times;
    let fit = wave_decay_fit(&s, &cfg.wave_cutoff, times, &f)?;
    let tol = cfg.tolerances.slope;
    let mut rep = Report::default();
    rep.at_most("propagate", "decay_slope_distance_from_-1/2", (fit.slope + 0.5).abs(), tol);
    let late: Vec<(f64, f64)> = fit.samples.iter().copied().filter(|&(t, _)| t >= 8.0).collect();
    if late.len() >= 2 {
        let sl = loglog_slope(&late);
        rep.at_most("propagate", "late_decay_slope_distance_from_-1/2", (sl + 0.5).abs(), tol);
    }
    let rows: Vec<DecayRow> = fit.samples.iter().map(|&(t, sup)| DecayRow { t, sup }).collect();
    rep.details.push(("decay_table.csv".into(), csv_body(&rows)?));
    Ok(rep)
}

#[derive(Serialize)]
struct ResolventDetail {
    z_re: f64,
    z_im: f64,
    ratio: f64,
}

fn resolvent(cfg: &ExperimentConfig) -> Result<Report> {
    let s = setup(cfg)?;
    let e = &cfg.experiment;
    let zs: Vec<Complex64> = e.z_abs.iter().map(|&m| Complex64::new(0.0, m)).collect();
    let b = log_bump(1.0, 0.5);
    let base = move |r: f64, th: f64| Complex64::new(b(r) * (1.0 + 0.5 * th.cos()), 0.0);
    let out = resolvent_probe(&s, e.resolvent_p, e.resolvent_q, &zs, &base)?;
    let mut rep = Report::default();
    rep.at_most("resolvent", format!("p={} q={} ratio_spread", e.resolvent_p, e.resolvent_q), out.spread, cfg.tolerances.resolvent_spread);
    let rows: Vec<ResolventDetail> = out
        .rows
        .iter()
        .map(|r| ResolventDetail {
            z_re: r.z.re,
            z_im: r.z.im,
            ratio: r.ratio,
        })
        .collect();
    rep.details.push(("resolvent_table.csv".into(), csv_body(&rows)?));
    Ok(rep)
}

fn riesz(cfg: &ExperimentConfig) -> Result<Report> {
    let e = &cfg.experiment;
    let tol = &cfg.tolerances;
    let pot = cfg.potential.to_potential();
    let mut rep = Report::default();
    for &p in &e.riesz_p {
        let delta = riesz_critical_index(p) + e.riesz_excess;
        let r = riesz_probe(&pot, &cfg.grid.setup_options(), p, delta, e.family_size, cfg.seed)?;
        let drift = (r.refined_max_ratio - r.max_ratio).abs() / r.max_ratio;
        rep.at_most("riesz", format!("p={p} delta={delta} max_ratio_refinement_drift"), drift, tol.stability);
        for &(radius, c) in &r.convergence {
            rep.at_most("riesz", format!("p={p} delta={delta} R={radius} residual"), c, tol.riesz_convergence);
        }
    }
    Ok(rep)
}

fn lp_scan(cfg: &ExperimentConfig) -> Result<Report> {
    let e = &cfg.experiment;
    let tol = &cfg.tolerances;
    let r = lp_ratio_scan(&cfg.potential.to_potential(), &cfg.grid.setup_options(), &e.lp_p, e.family_size, cfg.seed)?;
    let mut rep = Report::default();
    for row in &r.rows {
        rep.at_most("lp-scan", format!("p={} ratio_growth", row.p), row.growth, tol.stability);
        if row.p == 2.0 {
            rep.at_most("lp-scan", "p=2 ratio_distance_from_1", (row.max_ratio - 1.0).abs(), tol.lp_unit);
        }
    }
    Ok(rep)
}
