use heteroreg::domain::*;
use heteroreg::regprofile::*;
use heteroreg::theory::*;
use proptest::prelude::*;

fn golden_section<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..400 {
        let c = hi - g * (hi - lo);
        let d = lo + g * (hi - lo);
        if f(c) < f(d) {
            hi = d;
        } else {
            lo = c;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn optimal_rho_examples() {
    assert_eq!(rho_from_coefficients(1.0, 4.0), (1.0, false));
    let (r, capped) = rho_from_coefficients(1.0, 128.0);
    assert!((r - 4.0).abs() < 1e-14 && !capped);
    let (r, capped) = rho_from_coefficients(0.0, 1.0);
    assert!(capped && r == RHO_MAX);
}

#[test]
fn scale_covariance_of_coefficients() {
    // r scales by 1/c when I scales by c: A by c^-2, B by c^-1/2, rho by c^{3/5}
    let spec = hetero_classification_spec();
    let part = GroupPartition::new(vec![0.0, 0.25, 0.5, 1.0]).unwrap();
    let coeffs = group_coefficients(&spec, &part);
    for c in [0.5, 2.0, 10.0] {
        for g in &coeffs {
            let (base, _) = rho_from_coefficients(g.curvature, g.spread);
            let (scaled, _) = rho_from_coefficients(g.curvature / (c * c), g.spread / c.sqrt());
            assert!((scaled / base / c.powf(0.6) - 1.0).abs() < 1e-7);
        }
    }
}

#[test]
fn scale_covariance_through_the_spec() {
    // Only q I enters the coefficients, so rescaling the density group by
    // group acts like rescaling I there.
    let f = Piecewise::new(vec![Segment {
        lo: 0.0,
        hi: 1.0,
        expr: Expr::Sine { amplitude: 1.0, frequency: 1.5, phase: 0.3, offset: 0.2 },
    }])
    .unwrap();
    let sigma = Some(Piecewise::constant(1.0));
    let part = GroupPartition::new(vec![0.0, 0.5, 1.0]).unwrap();
    let a = ProblemSpec::new(Task::Regression, f.clone(), Piecewise::steps(&[0.0, 0.5, 1.0], &[1.0, 1.0]).unwrap(), sigma.clone()).unwrap();
    for c in [0.5, 1.5] {
        let q = Piecewise::steps(&[0.0, 0.5, 1.0], &[c, 2.0 - c]).unwrap();
        let b = ProblemSpec::new(Task::Regression, f.clone(), q, sigma.clone()).unwrap();
        let (ra, rb) = (optimal_rho(&a, &part), optimal_rho(&b, &part));
        assert!((rb.rho()[0] / ra.rho()[0] / c.powf(0.6) - 1.0).abs() < 1e-7);
        assert!((rb.rho()[1] / ra.rho()[1] / (2.0 - c).powf(0.6) - 1.0).abs() < 1e-7);
    }
}

#[test]
fn optimal_rho_minimizes_each_group() {
    for spec in [figure3_spec(), hetero_classification_spec()] {
        let part = GroupPartition::new(vec![0.0, 0.2, 0.45, 0.5, 0.8, 1.0]).unwrap();
        let coeffs = group_coefficients(&spec, &part);
        let prof = optimal_rho(&spec, &part);
        for (j, g) in coeffs.iter().enumerate() {
            if g.curvature == 0.0 {
                assert_eq!(prof.rho()[j], RHO_MAX);
                continue;
            }
            let f = |r: f64| g.bias(r, 1.0) + g.variance(r);
            let rho = prof.rho()[j];
            let gs = golden_section(f, rho * 1e-3, rho * 1e3);
            assert!((gs / rho - 1.0).abs() < 1e-6, "group {j}: {gs} vs {rho}");
        }
    }
}

#[test]
fn optimal_beats_uniform_levels() {
    let spec = hetero_classification_spec();
    let part = GroupPartition::uniform(2).unwrap();
    let opt = optimal_rho(&spec, &part);
    let best = asymptotic_mse(&spec, &opt, 1.0).unwrap().total;
    for k in 0..50 {
        let level = opt.mean() * 10f64.powf(-2.0 + 4.0 * k as f64 / 49.0);
        let u = uniform_profile(&part, level).unwrap();
        assert!(best <= asymptotic_mse(&spec, &u, 1.0).unwrap().total);
    }
}

#[test]
fn optimal_for_lambda_rescales() {
    let spec = hetero_classification_spec();
    let part = GroupPartition::uniform(2).unwrap();
    let base = optimal_rho(&spec, &part);
    let lam = 0.05;
    let at = optimal_rho_for_lambda(&spec, &part, lam);
    for (a, b) in at.rho().iter().zip(base.rho()) {
        assert!((a / b / lam.powf(-0.8) - 1.0).abs() < 1e-12);
    }
    let best = asymptotic_mse(&spec, &at, lam).unwrap().total;
    for c in [0.8, 1.25] {
        assert!(best < asymptotic_mse(&spec, &at.scaled(c), lam).unwrap().total);
    }
}

#[test]
fn quadrature_refinement_is_stable() {
    // a fine partition evaluates the same integrals on smaller pieces
    let spec = hetero_classification_spec();
    let coarse = group_coefficients(&spec, &GroupPartition::uniform(2).unwrap());
    let fine = group_coefficients(&spec, &GroupPartition::uniform(8).unwrap());
    for (j, g) in coarse.iter().enumerate() {
        let a: f64 = fine[4 * j..4 * j + 4].iter().map(|f| f.curvature).sum();
        let b: f64 = fine[4 * j..4 * j + 4].iter().map(|f| f.spread).sum();
        assert!((a / g.curvature - 1.0).abs() < 1e-7);
        assert!((b / g.spread - 1.0).abs() < 1e-7);
    }
}

#[test]
fn functional_is_additive_over_groups() {
    let spec = figure3_spec();
    let coarse = GroupPartition::new(vec![0.0, 0.5, 1.0]).unwrap();
    let fine = GroupPartition::new(vec![0.0, 0.2, 0.5, 0.7, 1.0]).unwrap();
    let rho_c = [0.3, 2.0];
    let rho_f = [0.3, 0.3, 2.0, 2.0];
    let a = asymptotic_mse(&spec, &RegProfile::new(coarse, rho_c.to_vec()).unwrap(), 0.7).unwrap();
    let b = asymptotic_mse(&spec, &RegProfile::new(fine, rho_f.to_vec()).unwrap(), 0.7).unwrap();
    assert!((a.total - b.total).abs() <= 1e-10 * a.total.max(1.0));
    assert!((a.bias_term - b.bias_term).abs() <= 1e-10 * a.bias_term.max(1.0));
}

#[test]
fn homogeneity_in_rho() {
    let spec = hetero_classification_spec();
    let part = GroupPartition::uniform(2).unwrap();
    let p = optimal_rho(&spec, &part);
    let r = asymptotic_mse(&spec, &p, 1.0).unwrap();
    for c in [0.5, 2.0, 10.0] {
        let s = asymptotic_mse(&spec, &p.scaled(c), 1.0).unwrap();
        assert!((s.bias_term / r.bias_term - c * c).abs() < 1e-10 * c * c);
        assert!((s.variance_term / r.variance_term - c.powf(-0.5)).abs() < 1e-10);
        assert!((s.total - s.bias_term - s.variance_term).abs() < 1e-12 * s.total);
    }
}

#[test]
fn simplified_and_tau_examples() {
    assert_eq!(simplified_rho(1.0, 1.0).unwrap(), 1.0);
    assert_eq!(simplified_rho(2f64.powi(-5), 2f64.powi(-5)).unwrap(), 0.015625);
    assert_eq!(tau_factor(2f64.powi(-5), 2f64.powi(-5)).unwrap(), 0.5);
    assert!(simplified_rho(0.0, 1.0).is_err());
    assert!(tau_factor(1.0, -1.0).is_err());
}

#[test]
fn regression_tau_is_density_power() {
    let spec = figure3_spec();
    let part = GroupPartition::uniform(2).unwrap();
    let ds = spec.sample_dataset(200, 1).unwrap();
    let (q, info) = group_means(&spec, &part);
    assert_eq!(info, vec![1.0, 1.0]);
    let w = tau_weights(&ds, &part, &q, &info).unwrap();
    for (p, t) in ds.points.iter().zip(w.tau()) {
        let expected = spec.density(p.x).powf(-0.4);
        assert!((t - expected).abs() < 1e-12);
    }
    let rare = w.tau()[ds.points.iter().position(|p| p.x > 0.5).unwrap()];
    let common = w.tau()[ds.points.iter().position(|p| p.x <= 0.5).unwrap()];
    assert!(rare > common);
}

#[test]
fn profile_csv_layouts() {
    let part = GroupPartition::uniform(2).unwrap();
    let mut buf = Vec::new();
    uniform_profile(&part, 2.0).unwrap().write_csv(&mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), "group_lo,group_hi,rho\n0,0.5,2\n0.5,1,2\n");
    let ds = Dataset::new(Task::Regression, vec![Point { x: 0.25, y: 0.0 }], None).unwrap();
    let mut buf = Vec::new();
    ExampleWeights::new(vec![1.5]).unwrap().write_csv(&ds, &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), "index,x,tau\n0,0.25,1.5\n");
}

#[test]
fn uniform_matches_optimal_budget() {
    let spec = hetero_classification_spec();
    let part = GroupPartition::uniform(2).unwrap();
    let opt = optimal_rho(&spec, &part);
    let u = uniform_profile(&part, 1.0).unwrap().with_mean(opt.mean());
    assert!((u.mean() - opt.mean()).abs() < 1e-15 * opt.mean().max(1.0));
    assert_eq!(u.rho()[0], u.rho()[1]);
}

#[test]
fn l0_and_ridge() {
    assert!((l0_quadrature(40.0, 1e-13) - l0_constant()).abs() < 1e-10);
    assert!(l0_tail_bound(40.0) < 1e-34);
    assert!((ridge_lambda_opt(10, 1.0, 100, 1.0).unwrap() - 0.1).abs() < 1e-15);
}

proptest! {
    #[test]
    fn closed_form_minimizer(a in 1e-3f64..1e3, b in 1e-3f64..1e3) {
        let (rho, capped) = rho_from_coefficients(a, b);
        prop_assert!(!capped);
        let f = |r: f64| a * r * r + b / r.sqrt();
        let gs = golden_section(f, rho * 1e-3, rho * 1e3);
        prop_assert!((gs / rho - 1.0).abs() < 1e-6);
        // stationarity: 2 a rho = b rho^{-3/2} / 2
        prop_assert!((2.0 * a * rho / (0.5 * b * rho.powf(-1.5)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tau_times_q_is_rho(q in 1e-3f64..1e3, i in 1e-4f64..0.25) {
        let tau = tau_factor(q, i).unwrap();
        prop_assert_eq!(tau * q, simplified_rho(q, i).unwrap());
    }

    #[test]
    fn simplified_monotone_in_info(q in 1e-3f64..1e3, i in 1e-4f64..0.25, d in 0.0f64..0.25) {
        prop_assert!(simplified_rho(q, i + d).unwrap() >= simplified_rho(q, i).unwrap());
    }

    #[test]
    fn lambda_c0_roundtrip(c0 in 1e-3f64..1e3, n in 1usize..1_000_000) {
        let l = lambda_from_c0(c0, n);
        prop_assert!((l * (n as f64).powf(0.4) / c0 - 1.0).abs() < 1e-12);
    }
}
