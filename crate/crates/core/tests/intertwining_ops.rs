use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use stark_core::angular::*;
use stark_core::hankel::{log_bump, t_compose, HankelOptions, RadialFunction};
use stark_core::intertwining::*;
use stark_core::Error;

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// `2 + 2cos θ` at flux 0.3: the oscillating part of `2cos θ` with the form
/// condition restored.
fn shifted_cosine() -> AngularPotential {
    AngularPotential::new(FourierSeries::constant(0.3), FourierSeries::from_trig(2.0, &[2.0], &[]))
}

fn setup(pot: &AngularPotential, cutoff: usize) -> IntertwiningSetup {
    IntertwiningSetup::from_potential(pot, &SetupOptions::small(cutoff)).unwrap()
}

fn random_fields(s: &IntertwiningSetup, count: usize, seed: u64) -> Vec<Field2D> {
    (0..count as u64)
        .map(|k| {
            FamilyMember::Random {
                seed: seed + k,
                band: (s.free.cutoff as i64 / 4).max(1),
            }
            .field(s.grid().clone(), s.q())
            .unwrap()
        })
        .collect()
}

/// `Σ_α c_α ℋ_ν̃[ψ] φ_α` with `ψ = log_bump(1, 0.15)`, below 1e-18 for
/// `λ >= 4`.
fn spectrally_band_limited(s: &IntertwiningSetup, modes: usize) -> Field2D {
    let coefficients = (0..s.modes())
        .map(|i| {
            let g = RadialFunction::from_real(s.grid().clone(), log_bump(1.0, 0.15));
            if i < modes {
                s.plan.transform(&g, s.pert.orders[i]).unwrap().scale(c(1.0 / (1.0 + i as f64)))
            } else {
                RadialFunction::zeros(s.grid().clone())
            }
        })
        .collect();
    synthesize(
        &ModalDecomposition {
            kind: BasisKind::Perturbed,
            coefficients,
        },
        &s.pert,
    )
    .unwrap()
}

#[test]
fn single_mode_field_has_one_coefficient() {
    let s = setup(&shifted_cosine(), 26);
    let g = RadialFunction::from_real(s.grid().clone(), log_bump(1.5, 0.4));
    for basis in [&s.free, &s.pert] {
        let e = basis.samples(51);
        let values = e.iter().flat_map(|ev| g.values.iter().map(move |v| v * ev)).collect();
        let f = Field2D::new(s.grid().clone(), s.q(), values).unwrap();
        let dec = decompose(&f, basis).unwrap();
        let peak = g.norm2();
        for (i, coef) in dec.coefficients.iter().enumerate() {
            let want = if i == 51 { g.clone() } else { RadialFunction::zeros(s.grid().clone()) };
            assert!(coef.distance(&want) <= 1e-12 * peak, "mode {i}: {:e}", coef.distance(&want));
        }
    }
}

#[test]
fn reconstruction_round_trip() {
    let s = setup(&shifted_cosine(), 8);
    for f in random_fields(&s, 3, 11) {
        for basis in [&s.free, &s.pert] {
            let back = synthesize(&decompose(&f, basis).unwrap(), basis).unwrap();
            assert!(back.distance(&f).unwrap() <= 1e-8 * f.norm2());
        }
    }
}

#[test]
fn real_fields_have_conjugate_coefficients() {
    let s = setup(&AngularPotential::free(0.3), 8);
    let f = FamilyMember::Translated {
        rho: 0.7,
        angle: 0.0,
        sigma: 1.0,
    }
    .field(s.grid().clone(), s.q())
    .unwrap();
    let dec = decompose(&f, &s.free).unwrap();
    let mut pairs = 0;
    for i in 0..s.modes() {
        let conj: Vec<Complex64> = s.free.samples(i).iter().map(|v| v.conj()).collect();
        for j in 0..s.modes() {
            let dist = s.free.samples(j).iter().zip(&conj).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            if dist == 0.0 {
                pairs += 1;
                for (a, b) in dec.coefficients[i].values.iter().zip(&dec.coefficients[j].values) {
                    assert!((a.conj() - b).norm() <= 1e-15 * (1.0 + a.norm()));
                }
            }
        }
    }
    // e^{inθ} and e^{-inθ} are separate modes at Ā = 0.3; n = 0 pairs with itself
    assert_eq!(pairs, s.modes());
}

#[test]
fn modes_beyond_the_cutoff_are_reported() {
    let s = setup(&AngularPotential::free(0.3), 4);
    // n = 6 does not alias into |n| <= 4 on Q = 16 points
    let f = FamilyMember::HighMode {
        n: 6,
        c: 1.0,
        sigma: 0.4,
    }
    .field(s.grid().clone(), s.q())
    .unwrap();
    assert!(matches!(decompose(&f, &s.free), Err(Error::Resolution(_))));
}

#[test]
fn free_potential_gives_identity() {
    let s = setup(&AngularPotential::free(0.3), 8);
    for f in random_fields(&s, 2, 3) {
        let wf = apply_w(&f, &s).unwrap();
        assert!(wf.distance(&f).unwrap() <= 1e-6 * f.norm2());
    }
}

#[test]
fn w_is_unitary_and_inverted_by_its_adjoint() {
    let s = setup(&shifted_cosine(), 8);
    for f in random_fields(&s, 10, 100) {
        let n = f.norm2();
        let wf = apply_w(&f, &s).unwrap();
        assert!((wf.norm2() / n - 1.0).abs() <= 1e-6);
        assert!(apply_w_star(&wf, &s).unwrap().distance(&f).unwrap() <= 1e-6 * n);
        let ws = apply_w_star(&f, &s).unwrap();
        assert!(apply_w(&ws, &s).unwrap().distance(&f).unwrap() <= 1e-6 * n);
    }
}

#[test]
fn constant_potential_acts_mode_by_mode() {
    let pot = AngularPotential::new(FourierSeries::constant(0.25), FourierSeries::constant(5.0));
    let s = setup(&pot, 8);
    let g = RadialFunction::from_real(s.grid().clone(), log_bump(1.2, 0.45));
    for n in [0i64, 3, -2] {
        let f = Field2D::from_fn(s.grid().clone(), s.q(), |r, th| {
            c(log_bump(1.2, 0.45)(r)) * Complex64::from_polar(1.0 / (2.0 * PI).sqrt(), n as f64 * th)
        })
        .unwrap();
        let mu = (n as f64 + 0.25).abs();
        let nu = (mu * mu + 5.0).sqrt();
        let radial = t_compose(&g, nu, mu, &HankelOptions::default()).unwrap();
        let values = (0..s.q())
            .flat_map(|iq| {
                let e = Complex64::from_polar(1.0 / (2.0 * PI).sqrt(), n as f64 * 2.0 * PI * iq as f64 / s.q() as f64);
                radial.values.iter().map(move |v| v * e).collect::<Vec<_>>()
            })
            .collect();
        let want = Field2D::new(s.grid().clone(), s.q(), values).unwrap();
        let wf = apply_w(&f, &s).unwrap();
        assert!(wf.distance(&want).unwrap() <= 1e-8 * f.norm2(), "n = {n}");
    }
}

#[test]
fn identity_and_heat_limits() {
    let s = setup(&shifted_cosine(), 8);
    let f = &random_fields(&s, 1, 5)[0];
    let id = functional_calculus_direct(&CalculusRequest::Identity, f, &s.pert, &s.plan).unwrap();
    assert!(id.distance(f).unwrap() <= 1e-8 * f.norm2());
    let gaps: Vec<f64> = [1.0, 0.1, 0.01]
        .iter()
        .map(|&t| {
            functional_calculus_direct(&CalculusRequest::Heat { t }, f, &s.pert, &s.plan)
                .unwrap()
                .distance(f)
                .unwrap()
        })
        .collect();
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
}

#[test]
fn sharp_riesz_means_fix_low_band_fields() {
    let s = setup(&shifted_cosine(), 8);
    let f = spectrally_band_limited(&s, 9);
    for radius in [4.0, 16.0, 64.0] {
        let req = CalculusRequest::Riesz { radius, delta: 0.0 };
        let sf = functional_calculus_direct(&req, &f, &s.pert, &s.plan).unwrap();
        let rel = sf.distance(&f).unwrap() / f.norm2();
        assert!(rel < 1e-6, "R = {radius}: {rel:e}");
    }
}

#[test]
fn calculus_requests_are_validated() {
    let s = setup(&shifted_cosine(), 4);
    let f = &random_fields(&s, 1, 2)[0];
    for req in [
        CalculusRequest::Resolvent { z: c(2.0) },
        CalculusRequest::Riesz { radius: 1.0, delta: -0.1 },
        CalculusRequest::Wave {
            t: 1.0,
            cutoff: WaveCutoff { lo: 0.4, ..WaveCutoff::default() },
        },
    ] {
        assert!(matches!(functional_calculus_direct(&req, f, &s.pert, &s.plan), Err(Error::Validation(_))));
    }
    let wave0 = CalculusRequest::Wave {
        t: 0.0,
        cutoff: WaveCutoff::default(),
    };
    let u = functional_calculus_direct(&wave0, f, &s.pert, &s.plan).unwrap();
    assert!(u.values.iter().all(|v| *v == c(0.0)));
}

#[test]
fn intertwining_identity() {
    let heat = CalculusRequest::Heat { t: 0.5 };
    let free = setup(&AngularPotential::free(0.3), 8);
    let f = &random_fields(&free, 1, 9)[0];
    assert!(intertwining_residual(&heat, f, &free).unwrap() <= 1e-10);

    let s = setup(&shifted_cosine(), 8);
    for f in random_fields(&s, 2, 21) {
        assert!(intertwining_residual(&heat, &f, &s).unwrap() <= 1e-5);
    }

    // the cutoff wave symbol needs the finer radial step to reach 1e-5
    let wave = CalculusRequest::Wave {
        t: 2.0,
        cutoff: WaveCutoff::default(),
    };
    let coarse = SetupOptions::small(8);
    let fine = IntertwiningSetup::from_potential(&shifted_cosine(), &SetupOptions { m: 2047, ..coarse }).unwrap();
    let f = &random_fields(&fine, 1, 21)[0];
    assert!(intertwining_residual(&wave, f, &fine).unwrap() <= 1e-5);
}

#[test]
fn intertwining_residual_improves_under_refinement() {
    let wave = CalculusRequest::Wave {
        t: 2.0,
        cutoff: WaveCutoff::default(),
    };
    let member = FamilyMember::Random { seed: 4, band: 2 };
    let opts = SetupOptions::small(8);
    let mut prev = f64::INFINITY;
    for o in [opts, opts.refined()] {
        let s = IntertwiningSetup::from_potential(&shifted_cosine(), &o).unwrap();
        let f = member.field(s.grid().clone(), s.q()).unwrap();
        let r = intertwining_residual(&wave, &f, &s).unwrap();
        assert!(r < prev, "{r:e} after {prev:e}");
        prev = r;
    }
}

#[test]
fn form_condition_is_enforced() {
    let literal = AngularPotential::new(FourierSeries::constant(0.3), FourierSeries::from_trig(0.0, &[2.0], &[]));
    let err = IntertwiningSetup::from_potential(&literal, &SetupOptions::small(4)).unwrap_err();
    assert!(matches!(&err, Error::Validation(m) if m.contains("form condition")), "{err}");
    assert!(admissible_p_interval(4, 0.0, -1.5).is_err());
}

#[test]
fn admissible_ranges() {
    let s = setup(&shifted_cosine(), 4);
    let r = admissible_p_range(&s.free.table, &s.pert.table).unwrap();
    assert_eq!((r.w.lo, r.w.hi), (1.0, f64::INFINITY));
    assert_eq!((r.w_star.lo, r.w_star.hi), (1.0, f64::INFINITY));
    // d = 4, n(d) = 1: ν̃₁ = 0.5 means λ₁ = 0.25 - 1
    let r = admissible_p_interval(4, 0.0, -0.75).unwrap();
    assert!((r.nu1 - 0.5).abs() < 1e-15);
    assert!((r.w.hi - 8.0).abs() < 1e-12);
    assert!(r.w.contains(7.9) && !r.w.contains(8.1));
}

#[test]
fn lp_scan_reports() {
    let opts = SetupOptions::small(8);
    let rep = lp_ratio_scan(&shifted_cosine(), &opts, &[2.0], 6, 1).unwrap();
    assert!((rep.rows[0].max_ratio - 1.0).abs() <= 1e-6);
    let rep = lp_ratio_scan(&AngularPotential::free(0.3), &opts, &[1.5, 3.0], 3, 1).unwrap();
    for row in &rep.rows {
        assert!((row.max_ratio - 1.0).abs() <= 1e-6, "{row:?}");
    }
    let pot = AngularPotential::new(FourierSeries::constant(0.3), FourierSeries::from_trig(2.5, &[2.0], &[1.0]));
    let rep = lp_ratio_scan(&pot, &opts, &[1.5, 3.0, 4.0], 6, 2).unwrap();
    for row in &rep.rows {
        assert!(row.max_ratio.is_finite() && row.growth.abs() < 0.1, "{row:?}");
    }
    assert!(lp_ratio_scan(&pot, &opts, &[1.0], 3, 2).is_err());
}

fn wave_data(s: &IntertwiningSetup) -> Field2D {
    Field2D::from_fn(s.grid().clone(), s.q(), |r, th| c(log_bump(1.0, 0.4)(r) * (1.0 + 0.5 * th.cos()))).unwrap()
}

#[test]
fn dispersive_decay_rate() {
    let times = [8.0, 16.0, 32.0, 64.0];
    for pot in [shifted_cosine(), AngularPotential::free(0.0)] {
        let s = IntertwiningSetup::from_potential(&pot, &SetupOptions::wave(8)).unwrap();
        let rep = wave_decay_fit(&s, &WaveCutoff::default(), &times, &wave_data(&s)).unwrap();
        assert!((rep.slope + 0.5).abs() <= 0.1, "{rep:?}");
    }
}

#[test]
fn wave_leaving_the_grid_is_detected() {
    let opts = SetupOptions {
        r_max: 40.0,
        m: 1024,
        ..SetupOptions::wave(4)
    };
    let s = IntertwiningSetup::from_potential(&shifted_cosine(), &opts).unwrap();
    let err = wave_decay_fit(&s, &WaveCutoff::default(), &[8.0, 64.0], &wave_data(&s)).unwrap_err();
    assert!(matches!(err, Error::Resolution(_)), "{err}");
}

#[test]
fn resolvent_window_and_uniformity() {
    assert!(resolvent_window(1.1, 5.0).is_ok());
    let err = resolvent_window(1.2, 5.0).unwrap_err();
    assert!(err.to_string().contains("2/3"), "{err}");
    let s = setup(&shifted_cosine(), 8);
    let zs: Vec<Complex64> = [1.0, 4.0, 16.0, 64.0].iter().map(|&m| Complex64::new(0.0, m)).collect();
    let base = |r: f64, th: f64| c(log_bump(1.0, 0.5)(r) * (1.0 + 0.5 * th.cos()));
    let rep = resolvent_probe(&s, 1.1, 5.0, &zs, &base).unwrap();
    assert!(rep.max.is_finite() && rep.spread < 3.0, "{rep:?}");
}

#[test]
fn riesz_critical_indices() {
    assert_eq!(riesz_critical_index(4.0), 0.0);
    assert!((riesz_critical_index(1.2) - 1.0 / 6.0).abs() < 1e-12);
    assert!(riesz_admissible(1.2, 0.3).is_ok());
    let err = riesz_admissible(1.2, 0.1).unwrap_err();
    assert!(err.to_string().contains("0.1666"), "{err}");
    assert!(riesz_admissible(4.0, 0.05).is_ok() && riesz_admissible(4.0, 0.0).is_err());
    assert!(riesz_admissible(2.0, 0.0).is_ok());
}

#[test]
fn riesz_probe_at_p_two() {
    let rep = riesz_probe(&shifted_cosine(), &SetupOptions::small(4), 2.0, 0.01, 3, 6).unwrap();
    assert!(rep.max_ratio <= 1.0 + 1e-6 && rep.max_ratio > 0.9, "{rep:?}");
    let conv: Vec<f64> = rep.convergence.iter().map(|c| c.1).collect();
    assert!(conv[0] > conv[1] && conv[1] > conv[2], "{conv:?}");
}

#[test]
fn dropping_low_modes_removes_their_projection() {
    let s = setup(&shifted_cosine(), 8);
    let low = s.low_modes().unwrap();
    assert!(!low.is_empty());
    let f = &random_fields(&s, 1, 17)[0];
    let wf = apply_w(f, &s).unwrap();
    let kept = apply_w_modes(f, &s, &|i| !low.contains(&i)).unwrap();
    let dec = decompose(f, &s.free).unwrap();
    let projection = low.iter().map(|&i| dec.coefficients[i].norm2().powi(2)).sum::<f64>().sqrt();
    let change = wf.distance(&kept).unwrap();
    assert!((change - projection).abs() <= 1e-6 * f.norm2(), "{change} vs {projection}");
}

#[test]
fn low_mode_sup_norms_are_recorded() {
    let s = setup(&shifted_cosine(), 8);
    let diag = low_mode_sup_diagnostic(&s).unwrap();
    assert_eq!(diag.len(), s.low_modes().unwrap().len());
    assert!(diag.iter().all(|d| d.1.is_finite() && d.1 > 0.0));
}

#[test]
fn experiment_csv_header() {
    let rows = vec![ExperimentRow {
        experiment: "unitarity".into(),
        parameter: "p=2".into(),
        value: 1.0,
        tolerance: 1e-6,
        pass: true,
    }];
    let mut out = Vec::new();
    export_experiment_csv(&rows, &mut out).unwrap();
    assert!(String::from_utf8(out).unwrap().starts_with("experiment,parameter,value,tolerance,pass\n"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn unitarity_on_random_fields(seed in 0u64..1_000_000) {
        let s = setup(&shifted_cosine(), 4);
        let f = &random_fields(&s, 1, seed)[0];
        let wf = apply_w(f, &s).unwrap();
        prop_assert!((wf.norm2() / f.norm2() - 1.0).abs() <= 1e-6);
        prop_assert!(apply_w_star(&wf, &s).unwrap().distance(f).unwrap() <= 1e-6 * f.norm2());
    }

    #[test]
    fn admissible_range_ignores_constant_shifts(shift in 0.0f64..10.0, flux in -0.45f64..0.45) {
        let g = GalerkinOptions { truncation: 16, ..GalerkinOptions::default() };
        let base = AngularPotential::new(FourierSeries::constant(flux), FourierSeries::from_trig(2.0, &[2.0], &[]));
        let moved = AngularPotential::new(FourierSeries::constant(flux), FourierSeries::from_trig(2.0 + shift, &[2.0], &[]));
        let free = solve_quasi_periodic(&base.free_counterpart(), &g).unwrap();
        let a = admissible_p_range(&free, &solve_quasi_periodic(&base, &g).unwrap()).unwrap();
        let b = admissible_p_range(&free, &solve_quasi_periodic(&moved, &g).unwrap()).unwrap();
        prop_assert_eq!((a.w, a.w_star), (b.w, b.w_star));
    }
}
