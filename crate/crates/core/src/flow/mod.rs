//! Time integration of the metric coupled with a scalar equation.
//!
//! Forward runs advance `(φ, u)` together with classical RK4, where
//! `∂φ/∂t = −R/2` and `u` solves either
//!
//! * `log_heat`:     `u_t = Δu − |∇u|² − R − u`, or
//! * `soliton_heat`: `u_t = Δu − |∇u|² − R − u / (1 + t/2)`.
//!
//! Working with `u = −ln f` keeps `f = e^{−u}` positive. Conjugate runs
//! ([`run_conjugate`]) sweep `f_τ = Δf − R f` backwards over a stored forward
//! metric trajectory.

mod conjugate;
mod manufactured;

use serde::{Deserialize, Serialize};

use crate::config::{ScenarioConfig, SIGMA_MAX};
use crate::error::{Error, Result};
use crate::geometry::{MetricState, ScalarField};

pub use conjugate::run_conjugate;
pub use manufactured::{manufactured_run, ConvergenceReport, ManufacturedTarget, Trig};

/// Runs stop before the smallest conformal factor drops to this value.
pub const EXTINCTION_GUARD: f64 = 1e-3;

/// A step is flagged when `min R` falls below this.
pub const CURVATURE_FLOOR: f64 = -1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquationKind {
    LogHeat,
    SolitonHeat,
    Conjugate,
}

impl EquationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EquationKind::LogHeat => "log_heat",
            EquationKind::SolitonHeat => "soliton_heat",
            EquationKind::Conjugate => "conjugate",
        }
    }

    /// Zeroth-order decay term subtracted from `u_t`.
    fn decay(self, u: f64, t: f64) -> f64 {
        match self {
            EquationKind::LogHeat => u,
            EquationKind::SolitonHeat => u / (1.0 + 0.5 * t),
            EquationKind::Conjugate => 0.0,
        }
    }
}

impl std::fmt::Display for EquationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Direction of the trajectory clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Clock {
    /// Stamps are physical times t.
    Forward,
    /// Stamps are τ = T − t for the stored horizon T.
    Backward { horizon: f64 },
}

/// How the conjugate sweep obtained metrics between stored stamps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricInterpolation {
    None,
    Linear,
}

/// Immutable record of one run.
#[derive(Debug, Clone)]
pub struct FlowTrajectory {
    pub(crate) equation: EquationKind,
    pub(crate) clock: Clock,
    pub(crate) stamps: Vec<f64>,
    pub(crate) steps: Vec<usize>,
    pub(crate) metrics: Vec<MetricState>,
    /// `u` for forward runs, `f` for conjugate runs, empty for metric-only runs.
    pub(crate) fields: Vec<ScalarField>,
    pub(crate) min_r: Vec<f64>,
    pub(crate) max_r: Vec<f64>,
    pub(crate) mass: Option<Vec<f64>>,
    pub(crate) hypothesis_violated: bool,
    pub(crate) truncated: bool,
    pub(crate) sigma: f64,
    pub(crate) interpolation: MetricInterpolation,
    pub(crate) fingerprint: String,
}

impl FlowTrajectory {
    pub fn equation(&self) -> EquationKind {
        self.equation
    }

    pub fn clock(&self) -> Clock {
        self.clock
    }

    /// Time stamps in the trajectory's own clock (t forward, τ backward).
    pub fn stamps(&self) -> &[f64] {
        &self.stamps
    }

    /// Physical time of stamp `k`.
    pub fn physical_time(&self, k: usize) -> f64 {
        match self.clock {
            Clock::Forward => self.stamps[k],
            Clock::Backward { .. } => self.metrics[k].time(),
        }
    }

    /// Integrator step index of each stamp.
    pub fn step_indices(&self) -> &[usize] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.stamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stamps.is_empty()
    }

    pub fn metric(&self, k: usize) -> &MetricState {
        &self.metrics[k]
    }

    pub fn metrics(&self) -> &[MetricState] {
        &self.metrics
    }

    pub fn has_solution(&self) -> bool {
        !self.fields.is_empty()
    }

    pub fn field(&self, k: usize) -> &ScalarField {
        &self.fields[k]
    }

    pub fn fields(&self) -> &[ScalarField] {
        &self.fields
    }

    pub fn min_r(&self) -> &[f64] {
        &self.min_r
    }

    pub fn max_r(&self) -> &[f64] {
        &self.max_r
    }

    pub fn mass(&self) -> Option<&[f64]> {
        self.mass.as_deref()
    }

    /// Largest relative deviation of the mass from its value at τ = 0.
    pub fn mass_drift(&self) -> Option<f64> {
        let mass = self.mass.as_ref()?;
        let reference = mass[0];
        Some(
            mass.iter()
                .map(|m| ((m - reference) / reference).abs())
                .fold(0.0, f64::max),
        )
    }

    pub fn hypothesis_violated(&self) -> bool {
        self.hypothesis_violated
    }

    pub fn truncated(&self) -> bool {
        self.truncated
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn interpolation(&self) -> MetricInterpolation {
        self.interpolation
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn dim(&self) -> usize {
        self.metrics[0].dim()
    }

    pub fn spacing(&self) -> f64 {
        self.metrics[0].spacing()
    }

    /// Index of the stored stamp nearest to `s` (in the trajectory clock).
    pub fn nearest_stamp(&self, s: f64) -> usize {
        let pos = self.stamps.partition_point(|&x| x < s);
        if pos == 0 {
            0
        } else if pos == self.stamps.len() {
            pos - 1
        } else if (self.stamps[pos] - s).abs() < (s - self.stamps[pos - 1]).abs() {
            pos
        } else {
            pos - 1
        }
    }
}

/// Stability limit `σ h² / D_max` of the explicit step.
pub fn stable_dt(metric: &MetricState, sigma: f64) -> f64 {
    let h = metric.spacing();
    sigma * h * h / metric.max_diffusivity()
}

/// Optional source term `S(x, t)` added to the scalar equation.
pub(crate) type Source<'a> = &'a dyn Fn(&MetricState, f64) -> ScalarField;

/// Right-hand side of the coupled forward system.
#[derive(Clone, Copy)]
pub(crate) struct ForwardSystem<'a> {
    pub equation: Option<EquationKind>,
    pub evolve_metric: bool,
    pub source: Option<Source<'a>>,
}

impl ForwardSystem<'_> {
    fn phi_rate(&self, metric: &MetricState) -> Result<Option<ScalarField>> {
        if self.evolve_metric && metric.phi().is_some() {
            Ok(Some(metric.ricci_flow_rhs()?))
        } else {
            Ok(None)
        }
    }

    fn u_rate(&self, metric: &MetricState, u: &ScalarField) -> Result<ScalarField> {
        let eqn = self.equation.expect("u_rate without an equation");
        let t = metric.time();
        let lap = metric.laplacian(u)?;
        let grad = metric.gradient_norm_sq(u)?;
        let r = metric.scalar_curvature()?;
        let mut rate: Vec<f64> = (0..u.len())
            .map(|i| lap[i] - grad[i] - r[i] - eqn.decay(u[i], t))
            .collect();
        if let Some(source) = self.source {
            for (v, s) in rate.iter_mut().zip(source(metric, t).values()) {
                *v += s;
            }
        }
        Ok(ScalarField::from_vec(rate))
    }

    fn stage(
        &self,
        metric: &MetricState,
        u: Option<&ScalarField>,
    ) -> Result<(Option<ScalarField>, Option<ScalarField>)> {
        let dphi = self.phi_rate(metric)?;
        let du = match u {
            Some(u) => Some(self.u_rate(metric, u)?),
            None => None,
        };
        Ok((dphi, du))
    }

    /// One classical RK4 step of the coupled system.
    pub fn rk4(
        &self,
        metric: &MetricState,
        u: Option<&ScalarField>,
        dt: f64,
    ) -> Result<(MetricState, Option<ScalarField>)> {
        let t = metric.time();
        let shifted = |base: &MetricState, dphi: &Option<ScalarField>, scale: f64, time: f64| -> Result<MetricState> {
            match (base.phi(), dphi) {
                (Some(phi), Some(d)) => base.with_phi(phi.zip_map(d, |p, q| p + scale * q), time),
                _ => base.with_time(time),
            }
        };
        let axpy = |u: Option<&ScalarField>, du: &Option<ScalarField>, scale: f64| {
            u.zip(du.as_ref()).map(|(u, d)| u.zip_map(d, |a, b| a + scale * b))
        };

        let (p1, u1) = self.stage(metric, u)?;
        let m2 = shifted(metric, &p1, 0.5 * dt, t + 0.5 * dt)?;
        let s2 = axpy(u, &u1, 0.5 * dt);
        let (p2, u2) = self.stage(&m2, s2.as_ref())?;
        let m3 = shifted(metric, &p2, 0.5 * dt, t + 0.5 * dt)?;
        let s3 = axpy(u, &u2, 0.5 * dt);
        let (p3, u3) = self.stage(&m3, s3.as_ref())?;
        let m4 = shifted(metric, &p3, dt, t + dt)?;
        let s4 = axpy(u, &u3, dt);
        let (p4, u4) = self.stage(&m4, s4.as_ref())?;

        let combine = |y: &ScalarField, k1: &ScalarField, k2: &ScalarField, k3: &ScalarField, k4: &ScalarField| {
            ScalarField::from_vec(
                (0..y.len())
                    .map(|i| y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
                    .collect(),
            )
        };
        let next_metric = match (metric.phi(), &p1, &p2, &p3, &p4) {
            (Some(phi), Some(k1), Some(k2), Some(k3), Some(k4)) => {
                let phi = combine(phi, k1, k2, k3, k4);
                if !phi.is_finite() {
                    return Err(Error::CorruptedState("conformal exponent became non-finite".into()));
                }
                metric.with_phi(phi, t + dt)?
            }
            _ => metric.with_time(t + dt)?,
        };
        let next_u = match (u, &u1, &u2, &u3, &u4) {
            (Some(u), Some(k1), Some(k2), Some(k3), Some(k4)) => Some(combine(u, k1, k2, k3, k4)),
            _ => None,
        };
        Ok((next_metric, next_u))
    }
}

fn check_cfl(metric: &MetricState, dt: f64) -> Result<()> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt = {dt} must be positive")));
    }
    let limit = stable_dt(metric, SIGMA_MAX);
    if dt > limit {
        return Err(Error::Cfl { dt, limit });
    }
    Ok(())
}

/// Advances metric and `u` by one coupled RK4 step.
pub fn step(
    metric: &MetricState,
    u: &ScalarField,
    equation: EquationKind,
    dt: f64,
) -> Result<(MetricState, ScalarField)> {
    if equation == EquationKind::Conjugate {
        return Err(Error::WrongEquation(
            "the forward step integrates log_heat or soliton_heat".into(),
        ));
    }
    check_cfl(metric, dt)?;
    let system = ForwardSystem {
        equation: Some(equation),
        evolve_metric: true,
        source: None,
    };
    let (metric, u) = system.rk4(metric, Some(u), dt)?;
    let u = u.expect("forward step carries u");
    if !u.is_finite() {
        return Err(Error::Blowup {
            step: 0,
            t: metric.time(),
            message: "non-finite solution".into(),
        });
    }
    Ok((metric, u))
}

/// Advances the metric alone by one RK4 step of the Ricci flow.
pub fn step_metric(metric: &MetricState, dt: f64) -> Result<MetricState> {
    check_cfl(metric, dt)?;
    let system = ForwardSystem {
        equation: None,
        evolve_metric: true,
        source: None,
    };
    Ok(system.rk4(metric, None, dt)?.0)
}

/// Runs the scenario forward from t = 0 to `T_end`.
///
/// Conjugate scenarios evolve the metric only; pass the result to
/// [`run_conjugate`]. Sphere runs stop early, with the truncated flag set,
/// when the next step would bring `min e^{2φ}` to [`EXTINCTION_GUARD`].
pub fn run_forward(config: &ScenarioConfig) -> Result<FlowTrajectory> {
    config.validate()?;
    let metric = config.initial_metric()?;
    let u0 = match config.equation {
        EquationKind::Conjugate => None,
        _ => Some(config.u0.sample(&metric)),
    };
    let system = ForwardSystem {
        equation: match config.equation {
            EquationKind::Conjugate => None,
            eqn => Some(eqn),
        },
        evolve_metric: true,
        source: None,
    };
    integrate(config, system, metric, u0)
}

pub(crate) fn integrate(
    config: &ScenarioConfig,
    system: ForwardSystem<'_>,
    mut metric: MetricState,
    mut u: Option<ScalarField>,
) -> Result<FlowTrajectory> {
    let t_end = config.t_end;
    let mut traj = FlowTrajectory {
        equation: config.equation,
        clock: Clock::Forward,
        stamps: Vec::new(),
        steps: Vec::new(),
        metrics: Vec::new(),
        fields: Vec::new(),
        min_r: Vec::new(),
        max_r: Vec::new(),
        mass: None,
        hypothesis_violated: false,
        truncated: false,
        sigma: config.sigma,
        interpolation: MetricInterpolation::None,
        fingerprint: config.digest(),
    };
    record(&mut traj, 0, &metric, u.as_ref())?;

    let mut step_index = 0usize;
    while metric.time() < t_end {
        let t = metric.time();
        let dt_max = stable_dt(&metric, config.sigma);
        let remaining = t_end - t;
        let steps_left = (remaining / dt_max).ceil().max(1.0);
        let last = steps_left <= 1.0;
        let dt = if last { remaining } else { remaining / steps_left };
        step_index += 1;

        let (mut next_metric, next_u) = system.rk4(&metric, u.as_ref(), dt).map_err(|e| match e {
            Error::CorruptedState(message) => Error::Blowup {
                step: step_index,
                t,
                message,
            },
            other => other,
        })?;
        if let Some(next_u) = &next_u {
            if !next_u.is_finite() {
                return Err(Error::Blowup {
                    step: step_index,
                    t: t + dt,
                    message: "non-finite solution".into(),
                });
            }
        }
        if next_metric.min_conformal_factor() <= EXTINCTION_GUARD {
            traj.truncated = true;
            break;
        }
        if last {
            next_metric = next_metric.with_time(t_end)?;
        }
        metric = next_metric;
        u = next_u;
        if step_index.is_multiple_of(config.store_every) || last {
            record(&mut traj, step_index, &metric, u.as_ref())?;
        }
        if last {
            break;
        }
    }
    if traj.truncated && traj.steps.last() != Some(&(step_index - 1)) {
        record(&mut traj, step_index - 1, &metric, u.as_ref())?;
    }
    Ok(traj)
}

fn record(traj: &mut FlowTrajectory, step_index: usize, metric: &MetricState, u: Option<&ScalarField>) -> Result<()> {
    let r = metric.scalar_curvature()?;
    let min_r = r.min();
    if min_r < CURVATURE_FLOOR {
        traj.hypothesis_violated = true;
    }
    traj.stamps.push(metric.time());
    traj.steps.push(step_index);
    traj.metrics.push(metric.clone());
    if let Some(u) = u {
        traj.fields.push(u.clone());
    }
    traj.min_r.push(min_r);
    traj.max_r.push(r.max());
    Ok(())
}

#[cfg(test)]
mod tests;
