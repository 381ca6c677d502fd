//! Experiment configuration.
//!
//! The file is TOML with the key set of [`ExperimentConfig`]. Every table
//! rejects unknown keys. All violations (unknown keys, type mismatches and
//! invariant failures) are collected into one validation error.

use std::path::Path;

use serde::{Deserialize, Serialize};
use stark_core::angular::{AngularPotential, FourierSeries};
use stark_core::intertwining::{SetupOptions, WaveCutoff};
use stark_core::Error;
use toml::{Table, Value};

/// Real trigonometric coefficients `[c0, c1, s1, c2, s2, ...]` of
/// `c0 + Σ_k (c_k cos kθ + s_k sin kθ)`.
pub type TrigList = Vec<f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    /// Magnetic flux profile `A(θ)`.
    #[serde(rename = "A")]
    pub flux: TrigList,
    /// Electric potential `a(θ)`.
    #[serde(rename = "a", default)]
    pub electric: TrigList,
}

impl PotentialConfig {
    pub fn to_potential(&self) -> AngularPotential {
        AngularPotential::new(series(&self.flux), series(&self.electric))
    }
}

fn series(c: &[f64]) -> FourierSeries {
    if c.is_empty() {
        return FourierSeries::zero();
    }
    let rest = &c[1..];
    let cos: Vec<f64> = rest.iter().step_by(2).copied().collect();
    let sin: Vec<f64> = rest.iter().skip(1).step_by(2).copied().collect();
    FourierSeries::from_trig(c[0], &cos, &sin)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Galerkin truncation.
    #[serde(rename = "N")]
    pub n: usize,
    /// Radial nodes.
    #[serde(rename = "M")]
    pub m: usize,
    /// Angular nodes.
    #[serde(rename = "Q")]
    pub q: usize,
    /// Cluster cutoff.
    #[serde(rename = "J")]
    pub j: usize,
    pub r_min: f64,
    pub r_max: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n: 256,
            m: 1024,
            q: 256,
            j: 64,
            r_min: 1e-8,
            r_max: 1e8,
        }
    }
}

impl GridConfig {
    pub fn setup_options(&self) -> SetupOptions {
        SetupOptions {
            r_min: self.r_min,
            r_max: self.r_max,
            m: self.m,
            cutoff: self.j,
            q: self.q,
            truncation: self.n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentParams {
    /// Cluster range for fits and DMB sequences.
    pub j_min: usize,
    pub j_max: usize,
    /// θ samples for remainders.
    pub theta_grid: usize,
    /// Cluster indices whose `(μ̃, ν̃)` drive kernel-check and mellin-scan.
    pub kernel_clusters: Vec<usize>,
    pub kernel_r: Vec<f64>,
    pub kernel_s: Vec<f64>,
    pub gamma_a: Vec<f64>,
    pub gamma_b: Vec<f64>,
    pub gamma_n_max: u64,
    pub mellin_p: f64,
    pub mellin_nodes: usize,
    pub mellin_y_max: f64,
    pub plateau_y_lo: f64,
    pub plateau_y_hi: f64,
    pub heat_t: f64,
    pub wave_t: f64,
    pub family_size: usize,
    pub times: Vec<f64>,
    pub resolvent_p: f64,
    pub resolvent_q: f64,
    /// `|z|` values; `z` is placed on the positive imaginary axis.
    pub z_abs: Vec<f64>,
    pub riesz_p: Vec<f64>,
    /// `δ - δ_c(p, 2)`.
    pub riesz_excess: f64,
    pub lp_p: Vec<f64>,
}

impl Default for ExperimentParams {
    fn default() -> Self {
        Self {
            j_min: 8,
            j_max: 64,
            theta_grid: 256,
            kernel_clusters: vec![12, 24, 48],
            kernel_r: vec![0.6, 1.1, 1.9, 3.1, 5.3],
            kernel_s: vec![0.45, 0.85, 1.45, 2.5, 4.1],
            gamma_a: vec![10.0, 100.0, 1000.0],
            gamma_b: vec![-1.0, -0.5, 0.5, 1.0],
            gamma_n_max: 10_000,
            mellin_p: 2.0,
            mellin_nodes: 101,
            mellin_y_max: 100.0,
            plateau_y_lo: 1e2,
            plateau_y_hi: 1e4,
            heat_t: 0.5,
            wave_t: 2.0,
            family_size: 10,
            times: vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0],
            resolvent_p: 1.1,
            resolvent_q: 5.0,
            z_abs: vec![1.0, 4.0, 16.0, 64.0],
            riesz_p: vec![1.5, 4.0],
            riesz_excess: 0.2,
            lp_p: vec![1.5, 2.0, 3.0, 4.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Relative error of free eigenvalues.
    pub spectrum: f64,
    /// Cluster fit slope must be at most `-cluster_decay`.
    pub cluster_decay: f64,
    /// Relative refinement drift of `j sup|R_jk|` and of L^p / Riesz maxima.
    pub stability: f64,
    pub unitarity: f64,
    pub intertwining: f64,
    pub kernel: f64,
    /// Bound on `sup_n ratio / a^{|b|}` of the Gamma ratio.
    pub gamma_bound: f64,
    pub mellin_refinement: f64,
    pub mellin_plateau: f64,
    pub mellin_derivative: f64,
    /// Allowed distance of the decay slope from `-1/2`.
    pub slope: f64,
    /// Allowed `max / min` of the resolvent ratios.
    pub resolvent_spread: f64,
    pub riesz_convergence: f64,
    pub lp_unit: f64,
    /// DMB uniform and difference bounds.
    pub dmb: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            spectrum: 1e-10,
            cluster_decay: 1.5,
            stability: 0.1,
            unitarity: 1e-6,
            intertwining: 1e-5,
            kernel: 1e-5,
            gamma_bound: 2.0,
            mellin_refinement: 0.01,
            mellin_plateau: 0.1,
            mellin_derivative: 1e-6,
            slope: 0.1,
            resolvent_spread: 3.0,
            riesz_convergence: 1e-6,
            lp_unit: 1e-6,
            dmb: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: String,
    pub potential: PotentialConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub experiment: ExperimentParams,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub wave_cutoff: WaveCutoff,
}

fn default_output() -> String {
    "out".into()
}

impl ExperimentConfig {
    /// Defaults around a given potential.
    pub fn with_potential(potential: PotentialConfig) -> Self {
        Self {
            potential,
            grid: GridConfig::default(),
            experiment: ExperimentParams::default(),
            tolerances: Tolerances::default(),
            wave_cutoff: WaveCutoff::default(),
            seed: 0,
            output: default_output(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Every invariant violation, as `key: message`.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let g = &self.grid;
        for (key, n) in [("grid.N", g.n), ("grid.M", g.m), ("grid.Q", g.q), ("grid.J", g.j)] {
            if !n.is_power_of_two() {
                v.push(format!("{key}: {n} is not a power of two"));
            }
        }
        if g.q < 4 * g.j {
            v.push(format!("grid.Q: {} is below 4 * grid.J = {}", g.q, 4 * g.j));
        }
        if !(g.r_min > 0.0 && g.r_min < g.r_max && g.r_max.is_finite()) {
            v.push(format!("grid.r_min, grid.r_max: need 0 < r_min < r_max < inf, got {} and {}", g.r_min, g.r_max));
        }
        if self.potential.flux.is_empty() {
            v.push("potential.A: needs at least the mean coefficient".into());
        }
        for (key, c) in [("potential.A", &self.potential.flux), ("potential.a", &self.potential.electric)] {
            if c.iter().any(|x| !x.is_finite()) {
                v.push(format!("{key}: coefficients must be finite"));
            }
        }
        let t = &self.tolerances;
        for (key, x) in [
            ("spectrum", t.spectrum),
            ("cluster_decay", t.cluster_decay),
            ("stability", t.stability),
            ("unitarity", t.unitarity),
            ("intertwining", t.intertwining),
            ("kernel", t.kernel),
            ("gamma_bound", t.gamma_bound),
            ("mellin_refinement", t.mellin_refinement),
            ("mellin_plateau", t.mellin_plateau),
            ("mellin_derivative", t.mellin_derivative),
            ("slope", t.slope),
            ("resolvent_spread", t.resolvent_spread),
            ("riesz_convergence", t.riesz_convergence),
            ("lp_unit", t.lp_unit),
            ("dmb", t.dmb),
        ] {
            if !(x > 0.0 && x.is_finite()) {
                v.push(format!("tolerances.{key}: {x} is not positive"));
            }
        }
        let e = &self.experiment;
        if !(e.j_min >= 1 && e.j_min < e.j_max) {
            v.push(format!("experiment.j_min, experiment.j_max: need 1 <= j_min < j_max, got {} and {}", e.j_min, e.j_max));
        }
        if e.theta_grid < 8 {
            v.push("experiment.theta_grid: needs at least 8 samples".into());
        }
        if e.family_size == 0 {
            v.push("experiment.family_size: must be positive".into());
        }
        for (key, xs) in [
            ("experiment.kernel_r", &e.kernel_r),
            ("experiment.kernel_s", &e.kernel_s),
            ("experiment.gamma_a", &e.gamma_a),
            ("experiment.times", &e.times),
            ("experiment.z_abs", &e.z_abs),
        ] {
            if xs.is_empty() || xs.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                v.push(format!("{key}: needs positive finite entries"));
            }
        }
        if e.gamma_b.iter().any(|b| !(b.abs() <= 1.0)) {
            v.push("experiment.gamma_b: entries must satisfy |b| <= 1".into());
        }
        for (key, xs) in [("experiment.riesz_p", &e.riesz_p), ("experiment.lp_p", &e.lp_p)] {
            if xs.is_empty() || xs.iter().any(|p| !(*p > 1.0 && p.is_finite())) {
                v.push(format!("{key}: exponents must lie in (1, inf)"));
            }
        }
        for (key, x) in [
            ("experiment.heat_t", e.heat_t),
            ("experiment.wave_t", e.wave_t),
            ("experiment.riesz_excess", e.riesz_excess),
            ("experiment.mellin_y_max", e.mellin_y_max),
        ] {
            if !(x > 0.0 && x.is_finite()) {
                v.push(format!("{key}: {x} is not positive"));
            }
        }
        if !(e.plateau_y_lo > 0.0 && e.plateau_y_lo < e.plateau_y_hi) {
            v.push("experiment.plateau_y_lo, experiment.plateau_y_hi: need 0 < lo < hi".into());
        }
        if e.mellin_nodes < 3 {
            v.push("experiment.mellin_nodes: needs at least 3".into());
        }
        if e.kernel_clusters.is_empty() {
            v.push("experiment.kernel_clusters: needs at least one cluster".into());
        }
        if let Err(err) = self.wave_cutoff.validate() {
            v.push(format!("wave_cutoff: {err}"));
        }
        v
    }
}

/// Read, apply `key=value` overrides, check keys and types, then validate.
pub fn parse_config(path: &Path, overrides: &[String]) -> Result<ExperimentConfig, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    parse_config_str(&text, overrides)
}

pub fn parse_config_str(text: &str, overrides: &[String]) -> Result<ExperimentConfig, Error> {
    let mut table: Table = text.parse().map_err(|e: toml::de::Error| Error::Validation(format!("malformed config: {e}")))?;
    let mut issues = Vec::new();
    for o in overrides {
        if let Err(e) = apply_override(&mut table, o) {
            issues.push(e);
        }
    }
    let template = Value::try_from(ExperimentConfig::with_potential(PotentialConfig {
        flux: vec![0.0],
        electric: vec![0.0],
    }))
    .expect("template serialises");
    check_keys(&mut table, template.as_table().unwrap(), "", &mut issues);
    if !table.get("potential").and_then(Value::as_table).is_some_and(|p| p.contains_key("A")) {
        issues.push("potential.A: missing".into());
    }
    if !issues.is_empty() {
        return Err(Error::Validation(issues.join("\n")));
    }
    let cfg: ExperimentConfig = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Validation(e.to_string()))?;
    let v = cfg.violations();
    if v.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Validation(v.join("\n")))
    }
}

/// `a.b.c=value`, with `value` read as a TOML literal and otherwise as a string.
fn apply_override(table: &mut Table, spec: &str) -> Result<(), String> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| format!("override `{spec}`: expected key=value"))?;
    let key = key.trim();
    let value = format!("v = {}", raw.trim())
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.trim().to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(format!("override `{spec}`: empty key segment"));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()))
            .as_table_mut()
            .ok_or_else(|| format!("override `{spec}`: `{p}` is not a table"))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn type_name(v: &Value) -> &'static str {
    v.type_str()
}

/// Compare `table` against `template`: unknown keys and type mismatches.
/// Integers are widened in place where the template holds a float.
fn check_keys(table: &mut Table, template: &Table, prefix: &str, issues: &mut Vec<String>) {
    for (k, v) in table.iter_mut() {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        let Some(t) = template.get(k) else {
            issues.push(format!("{key}: unknown key"));
            continue;
        };
        check_value(v, t, &key, issues);
    }
}

fn check_value(v: &mut Value, t: &Value, key: &str, issues: &mut Vec<String>) {
    match (t, &mut *v) {
        (Value::Table(tt), Value::Table(vt)) => check_keys(vt, tt, key, issues),
        (Value::Float(_), Value::Integer(i)) => *v = Value::Float(*i as f64),
        (Value::Array(ta), Value::Array(va)) => {
            let elem = ta.first().cloned().unwrap_or(Value::Float(0.0));
            for (i, x) in va.iter_mut().enumerate() {
                check_value(x, &elem, &format!("{key}[{i}]"), issues);
            }
        }
        (Value::Integer(_), Value::Integer(i)) if *i < 0 => issues.push(format!("{key}: must be non-negative")),
        (t, v) if std::mem::discriminant(t) == std::mem::discriminant(v) => {}
        (t, v) => issues.push(format!("{key}: expected {}, found {}", type_name(t), type_name(v))),
    }
}
