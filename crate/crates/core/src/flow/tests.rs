use std::f64::consts::PI;

use super::*;
use crate::config::ModeFamily;

fn torus_cfg(n_nodes: usize, equation: EquationKind, u0: ModeFamily, t_end: f64) -> ScenarioConfig {
    ScenarioConfig::torus(1, n_nodes, equation, u0, t_end)
}

#[test]
fn log_heat_constant_data_is_exponential_decay() {
    let traj = run_forward(&torus_cfg(16, EquationKind::LogHeat, ModeFamily::constant(-1.0), 1.0)).unwrap();
    let k = traj.len() - 1;
    assert_eq!(traj.stamps()[k], 1.0);
    let exact = -(-1.0f64).exp();
    for &u in traj.field(k).values() {
        assert!((u - exact).abs() < 1e-8, "{u} vs {exact}");
    }
    assert!((exact + 0.3678794).abs() < 1e-7);
}

#[test]
fn soliton_heat_constant_data_matches_separable_solution() {
    let traj = run_forward(&torus_cfg(
        16,
        EquationKind::SolitonHeat,
        ModeFamily::constant(1.0),
        1.0,
    ))
    .unwrap();
    let k = traj.len() - 1;
    for &u in traj.field(k).values() {
        assert!((u - 4.0 / 9.0).abs() < 1e-8);
    }
}

#[test]
fn round_sphere_metric_shrinks_linearly() {
    let cfg = ScenarioConfig::sphere(
        16,
        ModeFamily::constant(0.0),
        EquationKind::Conjugate,
        ModeFamily::constant(0.0),
        0.2,
    );
    let mut metric = cfg.initial_metric().unwrap();
    while metric.time() < 0.2 {
        let dt = stable_dt(&metric, 0.25).min(0.2 - metric.time());
        metric = step_metric(&metric, dt).unwrap();
    }
    for &p in metric.phi().unwrap().values() {
        assert!(((2.0 * p).exp() - 0.6).abs() < 1e-8);
    }
}

#[test]
fn step_preconditions() {
    let cfg = torus_cfg(16, EquationKind::LogHeat, ModeFamily::constant(0.0), 1.0);
    let m = cfg.initial_metric().unwrap();
    let u = m.zeros();
    let limit = stable_dt(&m, SIGMA_MAX);
    assert!(matches!(
        step(&m, &u, EquationKind::LogHeat, 1.01 * limit),
        Err(Error::Cfl { .. })
    ));
    assert!(matches!(
        step(&m, &u, EquationKind::Conjugate, 0.5 * limit),
        Err(Error::WrongEquation(_))
    ));
    assert!(step(&m, &u, EquationKind::LogHeat, limit).is_ok());
}

#[test]
fn rk4_local_error_is_fifth_order() {
    // Constant data reduces the soliton equation to u' = −u/(1 + t/2).
    let cfg = torus_cfg(8, EquationKind::SolitonHeat, ModeFamily::constant(1.0), 1.0);
    let m = cfg.initial_metric().unwrap();
    let u = ScalarField::constant(8, 1.0);
    let gap = |dt: f64| {
        let (_, one) = step(&m, &u, EquationKind::SolitonHeat, dt).unwrap();
        let (m_half, half) = step(&m, &u, EquationKind::SolitonHeat, dt / 2.0).unwrap();
        let (_, two) = step(&m_half, &half, EquationKind::SolitonHeat, dt / 2.0).unwrap();
        (one[0] - two[0]).abs()
    };
    let ratio = gap(0.2) / gap(0.1);
    assert!((24.0..=40.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn forward_run_keeps_f_positive_and_is_deterministic() {
    let cfg = torus_cfg(32, EquationKind::LogHeat, ModeFamily::new(-1.0, 0.1, 1), 2.0);
    let a = run_forward(&cfg).unwrap();
    let b = run_forward(&cfg).unwrap();
    assert_eq!(a.stamps(), b.stamps());
    assert_eq!(a.fields(), b.fields());
    assert_eq!(*a.stamps().last().unwrap(), 2.0);
    assert!(a.stamps().windows(2).all(|w| w[1] > w[0]));
    for u in a.fields() {
        assert!(u.values().iter().all(|v| v.is_finite() && (-v).exp() > 0.0));
    }
    assert!(!a.hypothesis_violated());
    assert!(!a.truncated());
}

#[test]
fn store_every_thins_trajectory_but_keeps_endpoint() {
    let mut cfg = torus_cfg(16, EquationKind::LogHeat, ModeFamily::new(-1.0, 0.1, 1), 1.0);
    let full = run_forward(&cfg).unwrap();
    cfg.store_every = 7;
    let thin = run_forward(&cfg).unwrap();
    assert!(thin.len() < full.len());
    assert_eq!(thin.stamps().last(), full.stamps().last());
    assert_eq!(thin.fields().last(), full.fields().last());
    assert!(thin.step_indices()[1..thin.len() - 1].iter().all(|s| s % 7 == 0));
}

#[test]
fn round_sphere_run_matches_exact_area_decay() {
    let cfg = ScenarioConfig::sphere(
        32,
        ModeFamily::constant(0.0),
        EquationKind::LogHeat,
        ModeFamily::constant(0.5),
        0.45,
    );
    let traj = run_forward(&cfg).unwrap();
    assert!(!traj.truncated());
    assert_eq!(*traj.stamps().last().unwrap(), 0.45);
    for k in 0..traj.len() {
        let t = traj.stamps()[k];
        let factor = (2.0 * traj.metric(k).phi().unwrap()[0]).exp();
        assert!(((factor - (1.0 - 2.0 * t)) / (1.0 - 2.0 * t)).abs() < 1e-6);
        assert!(traj.min_r()[k] > 0.0);
        assert!((traj.min_r()[k] - 2.0 / (1.0 - 2.0 * t)).abs() < 1e-5 * traj.min_r()[k]);
    }
}

#[test]
fn sphere_run_past_extinction_is_truncated() {
    let cfg = ScenarioConfig::sphere(
        16,
        ModeFamily::constant(0.0),
        EquationKind::LogHeat,
        ModeFamily::constant(0.0),
        0.6,
    );
    let traj = run_forward(&cfg).unwrap();
    assert!(traj.truncated());
    let t_last = *traj.stamps().last().unwrap();
    assert!(t_last < 0.5 && t_last > 0.49);
    assert!(traj.metrics().last().unwrap().min_conformal_factor() > EXTINCTION_GUARD);
}

#[test]
fn conjugate_on_static_torus_follows_heat_semigroup() {
    let errs: Vec<f64> = [32, 64]
        .iter()
        .map(|&n| {
            let cfg = torus_cfg(n, EquationKind::Conjugate, ModeFamily::constant(0.0), 1.0);
            let forward = run_forward(&cfg).unwrap();
            assert!(!forward.has_solution());
            let m = forward.metric(0);
            let f_t = m.sample(|x| 1.0 + 0.5 * x[0].cos());
            let conj = run_conjugate(&forward, &f_t).unwrap();
            assert_eq!(conj.stamps()[0], 0.0);
            assert_eq!(conj.interpolation(), MetricInterpolation::None);
            let k = conj.len() - 1;
            let tau = conj.stamps()[k];
            assert!((tau - 1.0).abs() < 1e-12);
            let exact = m.sample(|x| 1.0 + 0.5 * (-tau).exp() * x[0].cos());
            conj.field(k)
                .values()
                .iter()
                .zip(exact.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    assert!(errs[1] < 1e-3);
    let order = (errs[0] / errs[1]).log2();
    assert!((1.8..=2.2).contains(&order), "order {order}");
}

#[test]
fn conjugate_mass_is_conserved() {
    let cfg = torus_cfg(16, EquationKind::Conjugate, ModeFamily::constant(0.0), 0.5);
    let forward = run_forward(&cfg).unwrap();
    let conj = run_conjugate(&forward, &ScalarField::constant(16, 2.0)).unwrap();
    assert!(conj.mass_drift().unwrap() < 1e-12);

    let drifts: Vec<f64> = [32, 64]
        .iter()
        .map(|&n| {
            let cfg = ScenarioConfig::sphere(
                n,
                ModeFamily::new(0.0, 0.05, 1),
                EquationKind::Conjugate,
                ModeFamily::constant(0.0),
                0.4,
            );
            let forward = run_forward(&cfg).unwrap();
            let conj = run_conjugate(&forward, &ScalarField::constant(n, 1.5)).unwrap();
            assert_eq!(conj.interpolation(), MetricInterpolation::Linear);
            let h = PI / n as f64;
            let drift = conj.mass_drift().unwrap();
            assert!(drift <= 10.0 * h * h, "drift {drift}");
            drift
        })
        .collect();
    // The midpoint rule is spectrally accurate for pole-symmetric integrands,
    // so the drift decays at least as fast as the O(h²) operator error.
    let order = (drifts[0] / drifts[1]).log2();
    assert!(order >= 1.7, "order {order} {drifts:?}");
}

#[test]
fn conjugate_rejects_nonpositive_terminal_data() {
    let cfg = torus_cfg(16, EquationKind::Conjugate, ModeFamily::constant(0.0), 0.5);
    let forward = run_forward(&cfg).unwrap();
    let mut values = vec![1.0; 16];
    values[3] = 0.0;
    let f_t = ScalarField::new(values).unwrap();
    assert!(matches!(run_conjugate(&forward, &f_t), Err(Error::Domain(_))));
}

#[test]
fn manufactured_torus_converges_at_second_order() {
    let cfg = torus_cfg(16, EquationKind::LogHeat, ModeFamily::constant(0.0), 1.0);
    let target = ManufacturedTarget {
        constant: 0.0,
        amplitude: 1.0,
        wavenumber: 1,
        trig: Trig::Sin,
        decay_rate: 1.0,
    };
    let report = manufactured_run(&cfg, &target).unwrap();
    assert!((1.7..=2.3).contains(&report.order), "{report:?}");
}

#[test]
fn manufactured_sphere_converges_at_second_order() {
    let cfg = ScenarioConfig::sphere(
        16,
        ModeFamily::constant(0.0),
        EquationKind::SolitonHeat,
        ModeFamily::constant(0.0),
        0.5,
    );
    let target = ManufacturedTarget {
        constant: 0.0,
        amplitude: 1.0,
        wavenumber: 1,
        trig: Trig::Cos,
        decay_rate: 2.0,
    };
    let report = manufactured_run(&cfg, &target).unwrap();
    assert!((1.7..=2.3).contains(&report.order), "{report:?}");
    let bad = ManufacturedTarget {
        trig: Trig::Sin,
        ..target
    };
    assert!(matches!(manufactured_run(&cfg, &bad), Err(Error::InvalidParameter(_))));
}

#[test]
fn manufactured_zero_source_is_exact() {
    let cfg = torus_cfg(16, EquationKind::LogHeat, ModeFamily::constant(0.0), 1.0);
    let target = ManufacturedTarget {
        constant: 0.7,
        amplitude: 0.0,
        wavenumber: 0,
        trig: Trig::Cos,
        decay_rate: 1.0,
    };
    let report = manufactured_run(&cfg, &target).unwrap();
    assert!(report.errors.iter().all(|&e| e <= 1e-8), "{report:?}");
}
