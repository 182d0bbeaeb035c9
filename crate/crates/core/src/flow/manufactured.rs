//! Manufactured-solution verification of the forward integrator.

use serde::Serialize;

use super::{integrate, EquationKind, ForwardSystem};
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::geometry::{BackendKind, MetricState, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Trig {
    Cos,
    Sin,
}

/// `u*(x, t) = e^{−λ t} (c₀ + c₁ m(x))` with `m = Σ_d trig(κ x_d)`,
/// `κ = 2π k / L` on the torus and `m = cos(k θ)` on the sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ManufacturedTarget {
    pub constant: f64,
    pub amplitude: f64,
    pub wavenumber: u32,
    pub trig: Trig,
    pub decay_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub resolutions: [usize; 2],
    pub errors: [f64; 2],
    /// `log₂(e_N / e_2N)`.
    pub order: f64,
}

/// Closed-form pieces of the mode `m` at one node.
struct Mode {
    value: f64,
    laplacian: f64,
    grad_sq: f64,
}

impl ManufacturedTarget {
    fn time_factor(&self, t: f64) -> f64 {
        (-self.decay_rate * t).exp()
    }

    fn mode(&self, state: &MetricState, x: &[f64]) -> Mode {
        let k = self.wavenumber as f64;
        match state.backend() {
            BackendKind::FlatTorus => {
                let kappa = 2.0 * std::f64::consts::PI * k / state.grid().extent();
                let mut value = 0.0;
                let mut grad_sq = 0.0;
                for &xi in x {
                    let (s, c) = (kappa * xi).sin_cos();
                    let (v, d) = match self.trig {
                        Trig::Cos => (c, -kappa * s),
                        Trig::Sin => (s, kappa * c),
                    };
                    value += v;
                    grad_sq += d * d;
                }
                Mode {
                    value,
                    laplacian: -kappa * kappa * value,
                    grad_sq,
                }
            }
            BackendKind::ConformalSphere => {
                let phi = state.phi().expect("sphere state")[0];
                let inv = (-2.0 * phi).exp();
                let theta = x[0];
                let (s, c) = (k * theta).sin_cos();
                let cot = theta.cos() / theta.sin();
                Mode {
                    value: c,
                    laplacian: inv * (-k * k * c - k * cot * s),
                    grad_sq: inv * k * k * s * s,
                }
            }
        }
    }

    pub fn exact(&self, state: &MetricState, t: f64) -> ScalarField {
        let e = self.time_factor(t);
        state.sample(|x| e * (self.constant + self.amplitude * self.mode(state, x).value))
    }

    /// `S = u*_t − Δu* + |∇u*|² + R + decay(u*)` on a frozen metric.
    fn source(&self, state: &MetricState, t: f64, equation: EquationKind) -> ScalarField {
        let e = self.time_factor(t);
        let r = match state.phi() {
            Some(phi) => 2.0 * (-2.0 * phi[0]).exp(),
            None => 0.0,
        };
        state.sample(|x| {
            let m = self.mode(state, x);
            let u = e * (self.constant + self.amplitude * m.value);
            let decay = match equation {
                EquationKind::SolitonHeat => u / (1.0 + 0.5 * t),
                _ => u,
            };
            -self.decay_rate * u - e * self.amplitude * m.laplacian
                + e * e * self.amplitude * self.amplitude * m.grad_sq
                + r
                + decay
        })
    }
}

/// Runs the forced equation at N and 2N on a frozen metric and reports the
/// L∞ error against the target at `T_end` together with the observed order.
pub fn manufactured_run(config: &ScenarioConfig, target: &ManufacturedTarget) -> Result<ConvergenceReport> {
    config.validate()?;
    if config.equation == EquationKind::Conjugate {
        return Err(Error::WrongEquation(
            "manufactured runs use log_heat or soliton_heat".into(),
        ));
    }
    if config.backend == BackendKind::ConformalSphere {
        if config.phi0.is_some_and(|p| p.b != 0.0) {
            return Err(Error::InvalidParameter(
                "manufactured sphere runs need a constant conformal exponent".into(),
            ));
        }
        if target.trig == Trig::Sin {
            return Err(Error::InvalidParameter("sin(kθ) is not smooth at the poles".into()));
        }
    }
    let mut errors = [0.0; 2];
    let resolutions = [config.grid_size, 2 * config.grid_size];
    for (slot, &n) in resolutions.iter().enumerate() {
        let cfg = config.with_grid_size(n);
        let metric = cfg.initial_metric()?;
        let source_fn = |state: &MetricState, t: f64| target.source(state, t, cfg.equation);
        let system = ForwardSystem {
            equation: Some(cfg.equation),
            evolve_metric: false,
            source: Some(&source_fn),
        };
        let u0 = target.exact(&metric, 0.0);
        let traj = integrate(&cfg, system, metric, Some(u0))?;
        let k = traj.len() - 1;
        let exact = target.exact(traj.metric(k), traj.stamps()[k]);
        errors[slot] = traj
            .field(k)
            .values()
            .iter()
            .zip(exact.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
    }
    Ok(ConvergenceReport {
        resolutions,
        errors,
        order: (errors[0] / errors[1]).log2(),
    })
}
