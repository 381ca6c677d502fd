use std::f64::consts::PI;
use std::sync::Arc;

use proptest::prelude::*;
use stark_core::angular::*;
use stark_core::hankel::{t_compose, HankelOptions, RadialFunction, RadialGrid};
use stark_core::kernel::*;

fn params(mu: f64, nu: f64) -> KernelParams {
    KernelParams::new(mu, nu, 2, 2.0).unwrap()
}

fn spec_params() -> KernelParams {
    params(5.25, (5.25f64 * 5.25 + 5.0).sqrt())
}

/// Cluster `(j, k)` of `-(d/dθ + i 0.3)^2 + 2cos θ`.
fn cosine_cluster(j: usize, k: u8) -> Mode {
    let pot = AngularPotential::new(FourierSeries::constant(0.3), FourierSeries::from_trig(0.0, &[2.0], &[]));
    let t = solve_quasi_periodic(&pot, &GalerkinOptions { truncation: 128, vectors: false, ..Default::default() }).unwrap();
    *cluster_partition(&t).unwrap().find(j, k).unwrap()
}

#[test]
fn equal_orders_vanish_everywhere() {
    let p = params(3.7, 3.7);
    for n in [0, 1, 17, 1000] {
        assert_eq!(coeff_a(&p, n, Branch::Plus).unwrap(), 1.0);
        assert_eq!(coeff_a(&p, n, Branch::Minus).unwrap(), 1.0);
        assert_eq!(coeff_e(&p, n, Branch::Plus).unwrap(), 0.0);
    }
    for (r, s) in [(1.0, 0.3), (1.0, 1.7), (2.0, 1.9)] {
        assert_eq!(kernel_series_eval(r, s, &p, 1e-10).unwrap().value, 0.0);
        assert_eq!(kernel_oracle(r, s, &p, &OracleOptions::default()).unwrap().value, 0.0);
    }
    let d = kernel_decompose(1.0, 0.9, &p, 1e-10).unwrap();
    assert_eq!((d.k1, d.k2, d.k3), (0.0, 0.0, 0.0));
}

#[test]
fn coefficient_by_hand() {
    // a = 1, b = 1/2: Γ(2)Γ(3/2) / (Γ(5/2)Γ(1)) = 1/(3/2)
    let p = params(1.5, 0.5);
    assert!((coeff_a(&p, 0, Branch::Plus).unwrap() - 2.0 / 3.0).abs() < 1e-14);
    // minus branch: Γ(2)Γ(1/2) / (Γ(3/2)Γ(1)) = 2
    assert!((coeff_a(&p, 0, Branch::Minus).unwrap() - 2.0).abs() < 1e-14);
    // n = 2 by the recurrence A_{n+1}/A_n = (a+n+1)(b+n+1)/((a+b+n+1)(n+1))
    let want = 2.0 / 3.0 * (2.0 * 1.5 / (2.5 * 1.0)) * (3.0 * 2.5 / (3.5 * 2.0));
    assert!((coeff_a(&p, 2, Branch::Plus).unwrap() - want).abs() < 1e-14);
}

#[test]
fn coefficient_bound_linear_in_j() {
    let sup_over = |nmax: usize| {
        let mut worst = 0.0_f64;
        let mut j = 4;
        while j <= 512 {
            let jf = j as f64;
            for b in [1.0 / jf, -1.0 / jf] {
                let p = params(jf + b, jf - b);
                for branch in [Branch::Plus, Branch::Minus] {
                    for n in (0..=nmax).step_by(7) {
                        worst = worst.max(coeff_a(&p, n, branch).unwrap().abs() / jf);
                    }
                }
            }
            j *= 2;
        }
        worst
    };
    let a = sup_over(5_000);
    let b = sup_over(10_000);
    assert!(a.is_finite() && a <= 1.0, "sup |A|/j = {a}");
    assert!((b / a - 1.0).abs() < 0.01);
}

#[test]
fn remainder_coefficients_decay() {
    let p = params(3.4, 2.6);
    let mut prev = f64::NAN;
    for n in [10, 100, 1_000, 5_000, 10_000] {
        let e = coeff_e(&p, n, Branch::Plus).unwrap();
        let n1 = n as f64 + 1.0;
        assert!(e.abs() * n1 <= 1.0, "n = {n}: E = {e}");
        prev = e * n1 * n1;
    }
    // E (n+1)^2 settles, so E (n+1) -> 0
    let e5 = coeff_e(&p, 5_000, Branch::Plus).unwrap() * 5001f64.powi(2);
    assert!((e5 / prev - 1.0).abs() < 0.01, "{e5} vs {prev}");
    for n in [0, 10, 1000] {
        let em = coeff_e(&p, n, Branch::Minus).unwrap();
        assert!(em.abs() * (n as f64 + 1.0) <= 1.0);
    }
}

#[test]
fn remainder_differences_in_j() {
    // a_j = j + 0.3, b_j = 0.5/j; centred first difference in j
    let e = |j: f64, n: usize| {
        let (a, b) = (j + 0.3, 0.5 / j);
        coeff_e(&params(a + b, a - b), n, Branch::Plus).unwrap()
    };
    let scaled = |j: f64| {
        [0usize, 1, 10, 100, 1000]
            .iter()
            .map(|&n| ((e(j + 1.0, n) - e(j - 1.0, n)) / 2.0).abs() * j * (n as f64 + 1.0))
            .fold(0.0, f64::max)
    };
    let low = [8.0, 12.0, 16.0, 24.0, 32.0].map(scaled).into_iter().fold(0.0, f64::max);
    let high = [64.0, 96.0, 128.0, 192.0, 256.0].map(scaled).into_iter().fold(0.0, f64::max);
    assert!(low.is_finite() && high <= 1.5 * low, "low {low}, high {high}");
}

#[test]
fn series_matches_oracle_at_reference_pair() {
    let p = spec_params();
    let s = kernel_series_eval(1.0, 0.4, &p, 1e-12).unwrap();
    let o = kernel_oracle(1.0, 0.4, &p, &OracleOptions::default()).unwrap();
    assert!((s.value - o.value).abs() <= 1e-6 * s.value.abs(), "{s:?} vs {o:?}");
    assert!(o.error_estimate <= 1e-6 * o.value.abs());
}

#[test]
fn series_matches_oracle_at_scattered_pairs() {
    let p = spec_params();
    for (r, s) in [(1.0, 0.25), (0.7, 1.3), (2.2, 1.6), (0.35, 0.9), (4.0, 6.5)] {
        let row = kernel_row(r, s, &p, 1e-12, &OracleOptions::default()).unwrap();
        assert!(row.rel_err <= 1e-5, "{row:?}");
    }
}

#[test]
fn euler_oracle_matches_damped_oracle() {
    let p = spec_params();
    for (r, s) in [(1.0, 0.4), (1.0, 0.25), (0.7, 1.3), (2.2, 1.6), (0.35, 0.9), (4.0, 6.5)] {
        let d = kernel_oracle(r, s, &p, &OracleOptions::default()).unwrap();
        let e = kernel_euler_oracle(r, s, &p, 1e-13).unwrap();
        assert!((d.value - e.value).abs() <= 1e-8 * e.value.abs(), "({r}, {s}): {d:?} vs {e:?}");
    }
    assert_eq!(kernel_euler_oracle(1.0, 0.5, &params(3.0, 3.0), 1e-13).unwrap().value, 0.0);
}

#[test]
fn series_matches_euler_oracle_at_cluster_orders() {
    for (j, k) in [(10usize, 1u8), (16, 2), (28, 1)] {
        let m = cosine_cluster(j, k);
        let p = params(m.mu_tilde(), m.nu_tilde());
        for r in [0.6, 1.1, 1.9, 3.1, 5.3] {
            for s in [0.45, 0.85, 1.45, 2.5, 4.1] {
                let row = kernel_row_euler(r, s, &p, 1e-12).unwrap();
                assert!(row.rel_err <= 1e-10, "j={j} k={k}: {row:?}");
            }
        }
    }
}

#[test]
fn oracle_depends_on_ratio_only() {
    let p = spec_params();
    let o = OracleOptions::default();
    for (r, s) in [(1.0, 0.6), (1.0, 1.5)] {
        let a = kernel_oracle(r, s, &p, &o).unwrap().value;
        let b = kernel_oracle(2.7 * r, 2.7 * s, &p, &o).unwrap().value;
        assert!((b / a - 1.0).abs() <= 1e-6, "{a} vs {b}");
    }
}

#[test]
fn kernel_envelope_near_diagonal() {
    let p = spec_params();
    let l = (-PI * p.b()).sin() / PI;
    let mut ratios = vec![];
    for q in [0.9, 0.99, 0.999] {
        let v = kernel_series_eval(1.0, q, &p, 1e-12).unwrap().value;
        let envelope = 2.0 * q.powf(1.0 + p.mu_tilde) * l / (1.0 - q * q);
        ratios.push(v / envelope);
    }
    assert!(ratios.iter().all(|r| *r > 0.5 && *r < 2.0), "{ratios:?}");
    assert!((ratios[2] - 1.0).abs() < (ratios[0] - 1.0).abs());
}

#[test]
fn decomposition_sums_to_series() {
    let m = cosine_cluster(10, 1);
    let p = params(m.mu_tilde(), m.nu_tilde());
    for (r, s) in [(1.0, 0.9), (1.0, 1.15), (1.0, 0.55), (1.0, 1.9)] {
        let k = kernel_series_eval(r, s, &p, 1e-12).unwrap().value;
        let d = kernel_decompose(r, s, &p, 1e-12).unwrap();
        assert!((d.total() - k).abs() <= 1e-8 * k.abs(), "({r}, {s}): {d:?} vs {k}");
    }
}

#[test]
fn logarithmic_coefficient_near_diagonal() {
    // (K̃ - K¹) = c ln(1 - q^2) + (bounded, continuous at q = 1): the slope
    // against the logarithm isolates c from the series alone.
    let m = cosine_cluster(10, 2);
    let p = params(m.mu_tilde(), m.nu_tilde());
    let (a, b) = (p.a(), p.b());
    for plus in [true, false] {
        let piece = |q: f64| {
            let (r, s) = if plus { (1.0, q) } else { (q, 1.0) };
            let v = kernel_series_eval(r, s, &p, 1e-12).unwrap().value;
            let d = kernel_decompose(r, s, &p, 1e-12).unwrap();
            (v - d.k1, (1.0 - q * q).ln(), d.k2)
        };
        let (y1, l1, k2) = piece(0.999);
        let (y2, l2, _) = piece(0.9995);
        let slope = (y1 - y2) / (l1 - l2);
        let want = if plus {
            2.0 * a * b * (-PI * b).sin() / PI
        } else {
            -2.0 * a * b * (PI * b).sin() / PI
        };
        assert!((slope / want - 1.0).abs() < 0.01, "plus = {plus}: {slope} vs {want}");
        let q = 0.999f64;
        let power = if plus { p.mu_tilde - 1.0 } else { p.nu_tilde - 1.0 };
        assert!((k2 / l1 / (want * q.powf(power)) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn tail_bound_is_honest() {
    let sets = [spec_params(), params(10.3, 10.0), params(1.5, 0.9), params(40.0, 40.05)];
    for p in &sets {
        for q in [0.2, 0.5, 0.8, 0.95, 0.99] {
            for branch in [Branch::Plus, Branch::Minus] {
                for tol in [1e-4, 1e-8, 1e-12] {
                    let v = kernel_series_branch(q, branch, p, tol).unwrap();
                    let long = kernel_series_terms(q, branch, p, 2 * v.terms).unwrap();
                    assert!((long - v.value).abs() <= v.tail_bound, "{p:?} q = {q} {branch:?}: {v:?} vs {long}");
                }
            }
        }
    }
}

#[test]
fn integer_b_is_finite() {
    // b = -1: only the leading term survives for s < r and the s > r branch vanishes
    let p = params(0.25, 2.25);
    let v = kernel_series_eval(1.0, 0.5, &p, 1e-12).unwrap();
    assert!((v.value - 2.5 * 0.5f64.powf(1.25)).abs() < 1e-14);
    assert_eq!(kernel_series_eval(1.0, 2.0, &p, 1e-12).unwrap().value, 0.0);
    assert!(coeff_a(&p, 0, Branch::Plus).is_err());
}

#[test]
fn hankel_composition_matches_kernel_off_diagonal() {
    // ℋ_{2.25} ℋ_{0.25} f(r) = ∫ K̃(r, s) f(s) ds / r for r off the support of f
    let p = params(0.25, 2.25);
    let bump = |s: f64| if s > 0.2 && s < 0.5 { (-1.0 / ((s - 0.2) * (0.5 - s)) + 1.0 / 0.0225).exp() } else { 0.0 };
    let grid = Arc::new(RadialGrid::new(1e-3, 1e3, 2048, 2).unwrap());
    let f = RadialFunction::from_real(grid.clone(), bump);
    let tf = t_compose(&f, 2.25, 0.25, &HankelOptions::default()).unwrap();
    let n = 4000;
    let h = 0.3 / n as f64;
    let mut worst = 0.0_f64;
    let mut peak = 0.0_f64;
    for (i, &r) in grid.nodes.iter().enumerate() {
        if !(1.0..=2.0).contains(&r) {
            continue;
        }
        let want: f64 = (1..n)
            .map(|k| {
                let s = 0.2 + k as f64 * h;
                kernel_series_eval(r, s, &p, 1e-12).unwrap().value * bump(s) * h / r
            })
            .sum();
        worst = worst.max((tf.values[i].re - want).abs());
        peak = peak.max(want.abs());
    }
    assert!(peak > 0.0 && worst <= 1e-4 * peak, "worst {worst}, peak {peak}");
}

#[test]
fn cz_operator_zero_and_stability() {
    let g = RadialGrid::new(1e-3, 1e3, 256, 2).unwrap();
    let zero = cz_apply(&g, &vec![0.0; 256], 2.0, 0.25, 0.25).unwrap();
    assert!(zero.iter().all(|v| *v == 0.0));
    for p in [2.0, 1.5, 4.0] {
        let rep = cz_probe(&g, p, 0.25, 0.25, 7).unwrap();
        assert!(rep.ratio.is_finite() && rep.ratio > 0.0);
        assert!((rep.growth - 1.0).abs() < 0.1, "p = {p}: {rep:?}");
    }
}

#[test]
fn domain_errors() {
    let p = spec_params();
    assert!(kernel_series_eval(1.0, 1.0, &p, 1e-10).is_err());
    assert!(kernel_series_branch(1.0, Branch::Plus, &p, 1e-10).is_err());
    assert!(kernel_series_branch(0.5, Branch::Plus, &p, 1e-14).is_err());
    assert!(kernel_decompose(1.0, 0.4, &p, 1e-10).is_err());
    assert!(kernel_decompose(1.0, 2.5, &p, 1e-10).is_err());
    assert!(kernel_oracle(2.0, 2.0, &p, &OracleOptions::default()).is_err());
    assert!(KernelParams::new(1.0, 3.5, 2, 2.0).is_err());
}

#[test]
fn csv_has_expected_columns() {
    let p = spec_params();
    let row = kernel_row(1.0, 0.4, &p, 1e-12, &OracleOptions::default()).unwrap();
    let mut buf = Vec::new();
    export_kernel_csv(&[row], &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("r,s,series_value,oracle_value,rel_err,terms_used\n"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn recurrence_matches_gamma_ratio(mu in 0.5f64..30.0, db in -0.9f64..0.9, n in 0usize..400) {
        let p = params(mu, mu - 2.0 * db);
        prop_assume!(p.nu_tilde >= 0.0);
        for branch in [Branch::Plus, Branch::Minus] {
            let q: f64 = 0.5;
            let direct: f64 = (0..=n)
                .map(|k| coeff_a(&p, k, branch).unwrap() * q.powi(2 * k as i32))
                .sum::<f64>();
            let l = if branch == Branch::Plus { (-PI * p.b()).sin() / PI } else { (PI * p.b()).sin() / PI };
            let ex = if branch == Branch::Plus { 1.0 + p.mu_tilde } else { 1.0 + p.nu_tilde };
            let want = 2.0 * q.powf(ex) * l * direct;
            let got = kernel_series_terms(q, branch, &p, n + 1).unwrap();
            prop_assert!((got - want).abs() <= 1e-12 * want.abs().max(1e-300));
        }
    }

    #[test]
    fn decomposition_is_consistent(mu in 1.0f64..40.0, db in -0.5f64..0.5, t in 0.55f64..1.8) {
        prop_assume!((t - 1.0).abs() > 1e-3);
        let p = params(mu, mu - 2.0 * db);
        let k = kernel_series_eval(1.0, t, &p, 1e-12).unwrap().value;
        let d = kernel_decompose(1.0, t, &p, 1e-12).unwrap();
        prop_assert!((d.total() - k).abs() <= 1e-8 * k.abs().max(1e-300));
    }
}
