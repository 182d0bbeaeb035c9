use super::*;
use proptest::prelude::*;

fn sphere(n: usize, phi: impl Fn(f64) -> f64) -> MetricState {
    let grid = Arc::new(build_grid(BackendKind::ConformalSphere, n, None).unwrap());
    let values = grid.nodes().iter().map(|&t| phi(t)).collect();
    MetricState::conformal_sphere(grid, ScalarField::new(values).unwrap(), 0.0).unwrap()
}

fn torus(n: usize, dim: usize, length: f64) -> MetricState {
    let grid = Arc::new(build_grid(BackendKind::FlatTorus, n, Some(length)).unwrap());
    MetricState::flat_torus(grid, dim, 0.0).unwrap()
}

fn max_err(a: &ScalarField, b: &ScalarField) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn order(coarse: f64, fine: f64) -> f64 {
    (coarse / fine).log2()
}

#[test]
fn polar_grid_is_staggered() {
    let g = build_grid(BackendKind::ConformalSphere, 8, None).unwrap();
    assert_eq!(g.spacing(), PI / 8.0);
    for (i, &t) in g.nodes().iter().enumerate() {
        assert_eq!(t, (i as f64 + 0.5) * PI / 8.0);
    }
    assert!(g.nodes()[0] > 0.0 && g.nodes()[7] < PI);
}

#[test]
fn periodic_grid_is_uniform() {
    let g = build_grid(BackendKind::FlatTorus, 8, Some(2.0 * PI)).unwrap();
    assert_eq!(g.spacing(), PI / 4.0);
    assert_eq!(g.nodes()[0], 0.0);
    assert!((g.nodes()[7] - 7.0 * PI / 4.0).abs() < 1e-15);
}

#[test]
fn grid_preconditions() {
    assert!(matches!(
        build_grid(BackendKind::ConformalSphere, 7, None),
        Err(Error::InvalidResolution(_))
    ));
    assert!(matches!(
        build_grid(BackendKind::ConformalSphere, 4, None),
        Err(Error::InvalidResolution(_))
    ));
    assert!(matches!(
        build_grid(BackendKind::FlatTorus, 16, Some(0.0)),
        Err(Error::InvalidGeometry(_))
    ));
    assert!(matches!(
        build_grid(BackendKind::FlatTorus, 16, None),
        Err(Error::InvalidGeometry(_))
    ));
}

#[test]
fn non_finite_field_is_corruption() {
    assert!(matches!(
        ScalarField::new(vec![0.0, f64::NAN]),
        Err(Error::CorruptedState(_))
    ));
}

#[test]
fn curvature_of_flat_and_round() {
    let t = torus(16, 2, 2.0 * PI);
    assert!(t.scalar_curvature().unwrap().values().iter().all(|&r| r == 0.0));
    let s = sphere(32, |_| 0.0);
    assert!(s.scalar_curvature().unwrap().values().iter().all(|&r| r == 2.0));
    for c in [-0.7, 0.0, 0.3, 1.1] {
        let s = sphere(24, |_| c);
        let expected = 2.0 * (-2.0 * c).exp();
        for &r in s.scalar_curvature().unwrap().values() {
            assert_eq!(r, expected);
        }
    }
}

#[test]
fn curvature_of_first_harmonic_perturbation() {
    // cos θ is a Δ_{S²} eigenfunction with eigenvalue −2.
    let exact = |t: f64| (-0.2 * t.cos()).exp() * (2.0 + 0.4 * t.cos());
    let errs: Vec<f64> = [64, 128]
        .iter()
        .map(|&n| {
            let s = sphere(n, |t| 0.1 * t.cos());
            max_err(&s.scalar_curvature().unwrap(), &s.sample(|x| exact(x[0])))
        })
        .collect();
    assert!(errs[1] < 1e-3);
    let p = order(errs[0], errs[1]);
    assert!((1.7..=2.3).contains(&p), "order {p}");
    assert!((exact(PI / 2.0) - 2.0).abs() < 1e-15);
}

#[test]
fn laplacian_of_constant_vanishes() {
    let s = sphere(16, |t| 0.05 * t.cos());
    let c = ScalarField::constant(16, 3.5);
    assert!(s.laplacian(&c).unwrap().values().iter().all(|&v| v == 0.0));
    let t = torus(8, 3, 1.0);
    let c = ScalarField::constant(512, -2.0);
    assert!(t.laplacian(&c).unwrap().values().iter().all(|&v| v == 0.0));
}

#[test]
fn sphere_laplacian_converges_on_harmonics() {
    // Degree-1 and degree-2 zonal harmonics: Δ cos θ = −2 cos θ, Δ P₂ = −6 P₂.
    let p2 = |t: f64| 0.5 * (3.0 * t.cos().powi(2) - 1.0);
    let cases: [(&dyn Fn(f64) -> f64, f64); 2] = [(&|t: f64| t.cos(), -2.0), (&p2, -6.0)];
    for (f, eig) in cases {
        let errs: Vec<f64> = [32, 64, 128]
            .iter()
            .map(|&n| {
                let s = sphere(n, |_| 0.0);
                let a = s.sample(|x| f(x[0]));
                max_err(&s.laplacian(&a).unwrap(), &a.map(|v| eig * v))
            })
            .collect();
        for w in errs.windows(2) {
            let p = order(w[0], w[1]);
            assert!((1.7..=2.3).contains(&p), "order {p} errs {errs:?}");
        }
    }
}

#[test]
fn torus_laplacian_on_fourier_mode() {
    let errs: Vec<f64> = [32, 64]
        .iter()
        .map(|&n| {
            let t = torus(n, 1, 2.0 * PI);
            let a = t.sample(|x| x[0].cos());
            max_err(&t.laplacian(&a).unwrap(), &a.map(|v| -v))
        })
        .collect();
    assert!(errs[1] < 1e-3);
    assert!((1.9..=2.1).contains(&order(errs[0], errs[1])));
}

#[test]
fn gradient_norm_oracles() {
    let s = sphere(128, |_| 0.0);
    let a = s.sample(|x| x[0].cos());
    let g = s.gradient_norm_sq(&a).unwrap();
    assert!(max_err(&g, &s.sample(|x| x[0].sin().powi(2))) < 1e-3);
    let t = torus(128, 1, 2.0 * PI);
    let a = t.sample(|x| x[0].sin());
    let g = t.gradient_norm_sq(&a).unwrap();
    assert!(max_err(&g, &t.sample(|x| x[0].cos().powi(2))) < 1e-3);
    let c = ScalarField::constant(128, 1.25);
    assert!(t.gradient_norm_sq(&c).unwrap().values().iter().all(|&v| v == 0.0));
}

#[test]
fn inner_grad_with_constant_and_self() {
    let s = sphere(32, |t| 0.05 * t.cos());
    let a = s.sample(|x| (2.0 * x[0]).cos() + 0.3 * x[0].cos());
    let c = ScalarField::constant(32, 7.0);
    assert!(s.inner_grad(&a, &c).unwrap().values().iter().all(|&v| v == 0.0));
    assert_eq!(s.inner_grad(&a, &a).unwrap(), s.gradient_norm_sq(&a).unwrap());
    let b = s.sample(|x| x[0].cos());
    let ex = s.sample(|x| x[0].sin().powi(2));
    let s0 = sphere(128, |_| 0.0);
    let b0 = s0.sample(|x| x[0].cos());
    assert!(max_err(&s0.inner_grad(&b0, &b0).unwrap(), &s0.sample(|x| x[0].sin().powi(2))) < 1e-3);
    assert_eq!(b.len(), ex.len());
}

#[test]
fn shape_mismatch_is_reported() {
    let s = sphere(16, |_| 0.0);
    let wrong = ScalarField::constant(15, 0.0);
    assert!(matches!(s.laplacian(&wrong), Err(Error::Shape { .. })));
    assert!(matches!(s.gradient_norm_sq(&wrong), Err(Error::Shape { .. })));
    assert!(matches!(s.integrate_measure(&wrong), Err(Error::Shape { .. })));
}

#[test]
fn hessian_deficit_constant_cases() {
    // |−λ g|² = n λ² on the flat torus.
    let t = torus(16, 1, 2.0 * PI);
    let c = ScalarField::constant(16, 0.4);
    let v = t.hessian_deficit_norm_sq(&c, RicciSign::Minus, 1.0 / 0.5).unwrap();
    assert!(v.values().iter().all(|&x| x == 4.0));
    // Round sphere: two diagonal entries (R/2 + λ)² each.
    let s = sphere(16, |_| 0.0);
    let c = ScalarField::constant(16, 0.4);
    let v = s.hessian_deficit_norm_sq(&c, RicciSign::Minus, 1.0).unwrap();
    assert!(v.values().iter().all(|&x| x == 8.0));
    assert!(matches!(
        s.hessian_deficit_norm_sq(&c, RicciSign::Plus, f64::NAN),
        Err(Error::InvalidParameter(_))
    ));
}

fn trace_gap(state: &MetricState, a: &ScalarField, sign: RicciSign, lambda: f64) -> f64 {
    let n = state.dim() as f64;
    let norm = state.hessian_deficit_norm_sq(a, sign, lambda).unwrap();
    let lap = state.laplacian(a).unwrap();
    let r = state.scalar_curvature().unwrap();
    (0..a.len())
        .map(|i| {
            let tr = lap[i] + sign.value() * r[i] - n * lambda;
            norm[i] - tr * tr / n
        })
        .fold(f64::INFINITY, f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trace_inequality_on_sphere(
        c in prop::collection::vec(-0.5f64..0.5, 4),
        p in -0.1f64..0.1,
        lambda in 0.1f64..100.0,
        plus in any::<bool>(),
    ) {
        let s = sphere(24, |t| p * t.cos());
        let a = s.sample(|x| c[0] + c[1] * x[0].cos() + c[2] * (2.0 * x[0]).cos() + c[3] * (3.0 * x[0]).cos());
        let sign = if plus { RicciSign::Plus } else { RicciSign::Minus };
        prop_assert!(trace_gap(&s, &a, sign, lambda) >= -1e-12);
    }

    #[test]
    fn trace_inequality_on_tori(
        dim in 1usize..=3,
        c in prop::collection::vec(-1.0f64..1.0, 3),
        lambda in 0.1f64..100.0,
    ) {
        let t = torus(8, dim, 2.0 * PI);
        let a = t.sample(|x| {
            x.iter().enumerate().map(|(i, xi)| c[i] * (xi + 0.3 * i as f64).sin()).sum::<f64>()
                + c[0] * c[1] * x.iter().map(|xi| xi.cos()).product::<f64>()
        });
        prop_assert!(trace_gap(&t, &a, RicciSign::Minus, lambda) >= -1e-12);
    }

    #[test]
    fn inner_grad_bilinear_symmetric(
        c in prop::collection::vec(-1.0f64..1.0, 4),
        alpha in -3.0f64..3.0,
    ) {
        let s = sphere(20, |t| 0.05 * t.cos());
        let a = s.sample(|x| c[0] * x[0].cos() + c[1] * (2.0 * x[0]).cos());
        let b = s.sample(|x| c[2] * x[0].cos().powi(3) + c[3] * (2.0 * x[0]).cos());
        let d = s.sample(|x| (x[0].cos() + 0.5).powi(2));
        let ab = s.inner_grad(&a, &b).unwrap();
        let ba = s.inner_grad(&b, &a).unwrap();
        prop_assert_eq!(&ab, &ba);
        let lhs = s.inner_grad(&a.zip_map(&d, |x, y| x + alpha * y), &b).unwrap();
        let ad = s.inner_grad(&a, &d).unwrap();
        let db = s.inner_grad(&d, &b).unwrap();
        for i in 0..lhs.len() {
            prop_assert!((lhs[i] - (ab[i] + alpha * db[i])).abs() < 1e-9 * (1.0 + ab[i].abs() + ad[i].abs()));
        }
        prop_assert!(s.gradient_norm_sq(&a).unwrap().values().iter().all(|&v| v >= 0.0));
    }
}

#[test]
fn ricci_flow_rhs_values() {
    let t = torus(8, 2, 1.0);
    assert!(t.ricci_flow_rhs().unwrap().values().iter().all(|&v| v == 0.0));
    let s = sphere(16, |_| 0.0);
    assert!(s.ricci_flow_rhs().unwrap().values().iter().all(|&v| v == -1.0));
}

#[test]
fn curvature_time_derivative_round_and_perturbed() {
    let s = sphere(16, |_| 0.0);
    assert!(s
        .scalar_curvature_time_derivative()
        .unwrap()
        .values()
        .iter()
        .all(|&v| v == 4.0));
    let t = torus(8, 1, 1.0);
    assert!(t
        .scalar_curvature_time_derivative()
        .unwrap()
        .values()
        .iter()
        .all(|&v| v == 0.0));

    // Centered difference of R along φ ± ε ∂φ/∂t.
    let s = sphere(64, |t| 0.08 * t.cos() + 0.03 * (2.0 * t).cos());
    let phi = s.phi().unwrap().clone();
    let rhs = s.ricci_flow_rhs().unwrap();
    let eps = 1e-4;
    let shifted = |e: f64| {
        let p = phi.zip_map(&rhs, |a, b| a + e * b);
        s.with_phi(p, 0.0).unwrap().scalar_curvature().unwrap()
    };
    let fd = shifted(eps).zip_map(&shifted(-eps), |a, b| (a - b) / (2.0 * eps));
    let analytic = s.scalar_curvature_time_derivative().unwrap();
    assert!(max_err(&fd, &analytic) < 1e-6, "{}", max_err(&fd, &analytic));
}

#[test]
fn measure_quadrature() {
    let errs: Vec<f64> = [64, 128]
        .iter()
        .map(|&n| {
            let s = sphere(n, |_| 0.0);
            let one = ScalarField::constant(n, 1.0);
            (s.integrate_measure(&one).unwrap() - 4.0 * PI).abs()
        })
        .collect();
    assert!(errs[1] < 1e-3);
    assert!((1.9..=2.1).contains(&order(errs[0], errs[1])));

    let s = sphere(128, |_| 0.0);
    let c2 = s.sample(|x| x[0].cos().powi(2));
    assert!((s.integrate_measure(&c2).unwrap() - 4.0 * PI / 3.0).abs() < 1e-3);

    let c = 0.3;
    let s = sphere(128, |_| c);
    let one = ScalarField::constant(128, 1.0);
    let v = s.integrate_measure(&one).unwrap();
    assert!((v - 4.0 * PI * (2.0 * c).exp()).abs() < 1e-3);

    let t = torus(8, 1, 2.0 * PI);
    let one = ScalarField::constant(8, 1.0);
    assert!((t.integrate_measure(&one).unwrap() - 2.0 * PI).abs() < 1e-14);
}

#[test]
fn interpolation_reproduces_nodes_and_wraps() {
    let t = torus(16, 2, 2.0 * PI);
    let a = t.sample(|x| x[0].sin() + 2.0 * x[1].cos());
    for idx in [0, 5, 37, 255] {
        let x = t.node_position(idx);
        assert!((t.interpolate(&a, &x).unwrap() - a[idx]).abs() < 1e-14);
        let wrapped: Vec<f64> = x.iter().map(|v| v + 2.0 * PI).collect();
        assert!((t.interpolate(&a, &wrapped).unwrap() - a[idx]).abs() < 1e-12);
    }
    let s = sphere(16, |_| 0.0);
    let a = s.sample(|x| x[0].cos());
    assert_eq!(s.interpolate(&a, &[0.0]).unwrap(), a[0]);
    assert_eq!(s.interpolate(&a, &[PI]).unwrap(), a[15]);
    assert!(s.interpolate(&a, &[3.5]).is_err());
    let mid = 0.5 * (s.grid().nodes()[3] + s.grid().nodes()[4]);
    assert!((s.interpolate(&a, &[mid]).unwrap() - 0.5 * (a[3] + a[4])).abs() < 1e-15);
}

#[test]
fn diffusivity_and_conformal_factor() {
    let s = sphere(16, |_| 0.5f64.ln() / 2.0);
    assert!((s.max_diffusivity() - 2.0).abs() < 1e-12);
    assert!((s.min_conformal_factor() - 0.5).abs() < 1e-12);
    assert_eq!(torus(8, 1, 1.0).max_diffusivity(), 1.0);
    assert_eq!(torus(8, 2, 1.0).max_diffusivity(), 1.0);
    assert_eq!(torus(8, 3, 1.0).max_diffusivity(), 1.5);
}
