use super::{stable_dt, Clock, EquationKind, FlowTrajectory, MetricInterpolation};
use crate::error::{Error, Result};
use crate::geometry::{MetricState, ScalarField};

/// Solves the conjugate heat equation `∂f/∂t = −Δf + R f` backwards in time.
///
/// In `τ = T − t` this is `f_τ = Δ_{g(T−τ)} f − R f`, integrated with RK4
/// forward in τ over the stored metrics of `forward` (which must start at
/// t = 0; T is its last stamp). Each stored interval is split into substeps
/// obeying the stability rule; on the sphere the metric inside an interval is
/// linearly interpolated in time. The result is indexed by τ and carries the
/// total mass `∫ f dμ` at every stamp.
pub fn run_conjugate(forward: &FlowTrajectory, f_terminal: &ScalarField) -> Result<FlowTrajectory> {
    if forward.clock != Clock::Forward {
        return Err(Error::Interpolation("metric trajectory must run forward in t".into()));
    }
    if forward.len() < 2 {
        return Err(Error::Interpolation(
            "metric trajectory needs at least two stamps".into(),
        ));
    }
    if forward.stamps[0] != 0.0 {
        return Err(Error::Interpolation(format!(
            "metric trajectory starts at t = {} instead of 0",
            forward.stamps[0]
        )));
    }
    let last = forward.len() - 1;
    let horizon = forward.stamps[last];
    let terminal_metric = &forward.metrics[last];
    if f_terminal.len() != terminal_metric.field_len() {
        return Err(Error::Shape {
            expected: terminal_metric.field_len(),
            found: f_terminal.len(),
        });
    }
    if let Some(i) = f_terminal.values().iter().position(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::Domain(format!(
            "terminal data must be positive; f_T = {} at node {i}",
            f_terminal[i]
        )));
    }

    let interpolation = if terminal_metric.phi().is_some() {
        MetricInterpolation::Linear
    } else {
        MetricInterpolation::None
    };
    let mut out = FlowTrajectory {
        equation: EquationKind::Conjugate,
        clock: Clock::Backward { horizon },
        stamps: Vec::with_capacity(forward.len()),
        steps: Vec::with_capacity(forward.len()),
        metrics: Vec::with_capacity(forward.len()),
        fields: Vec::with_capacity(forward.len()),
        min_r: Vec::with_capacity(forward.len()),
        max_r: Vec::with_capacity(forward.len()),
        mass: Some(Vec::with_capacity(forward.len())),
        hypothesis_violated: forward.hypothesis_violated,
        truncated: forward.truncated,
        sigma: forward.sigma,
        interpolation,
        fingerprint: forward.fingerprint.clone(),
    };

    let mut f = f_terminal.clone();
    let mut substeps = 0usize;
    push(&mut out, last, forward, &f, substeps)?;
    for j in (1..=last).rev() {
        let late = &forward.metrics[j];
        let early = &forward.metrics[j - 1];
        let span = forward.stamps[j] - forward.stamps[j - 1];
        let dt_max = stable_dt(late, forward.sigma).min(stable_dt(early, forward.sigma));
        let count = (span / dt_max).ceil().max(1.0) as usize;
        let dt = span / count as f64;
        let tau0 = horizon - forward.stamps[j];
        let at = |s: f64| -> Result<MetricState> {
            // s ∈ [0, 1] runs from `late` to `early`.
            match (late.phi(), early.phi()) {
                (Some(pl), Some(pe)) => {
                    let phi = pl.zip_map(pe, |a, b| a + s * (b - a));
                    late.with_phi(phi, (forward.stamps[j] - s * span).max(0.0))
                }
                _ => late.with_time((forward.stamps[j] - s * span).max(0.0)),
            }
        };
        for sub in 0..count {
            let s0 = sub as f64 / count as f64;
            let sh = (sub as f64 + 0.5) / count as f64;
            let s1 = (sub + 1) as f64 / count as f64;
            let (m0, mh, m1) = (at(s0)?, at(sh)?, at(s1)?);
            let k1 = rate(&m0, &f)?;
            let k2 = rate(&mh, &axpy(&f, &k1, 0.5 * dt))?;
            let k3 = rate(&mh, &axpy(&f, &k2, 0.5 * dt))?;
            let k4 = rate(&m1, &axpy(&f, &k3, dt))?;
            f = ScalarField::from_vec(
                (0..f.len())
                    .map(|i| f[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
                    .collect(),
            );
            substeps += 1;
            if let Some(i) = f.values().iter().position(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(Error::Blowup {
                    step: substeps,
                    t: tau0 + (sub + 1) as f64 * dt,
                    message: format!("conjugate solution lost positivity at node {i} (f = {})", f[i]),
                });
            }
        }
        push(&mut out, j - 1, forward, &f, substeps)?;
    }
    Ok(out)
}

fn rate(metric: &MetricState, f: &ScalarField) -> Result<ScalarField> {
    let lap = metric.laplacian(f)?;
    let r = metric.scalar_curvature()?;
    Ok(ScalarField::from_vec(
        (0..f.len()).map(|i| lap[i] - r[i] * f[i]).collect(),
    ))
}

fn axpy(y: &ScalarField, x: &ScalarField, a: f64) -> ScalarField {
    y.zip_map(x, |p, q| p + a * q)
}

fn push(
    out: &mut FlowTrajectory,
    index: usize,
    forward: &FlowTrajectory,
    f: &ScalarField,
    substeps: usize,
) -> Result<()> {
    let horizon = match out.clock {
        Clock::Backward { horizon } => horizon,
        Clock::Forward => unreachable!(),
    };
    let metric = &forward.metrics[index];
    out.stamps.push(horizon - forward.stamps[index]);
    out.steps.push(substeps);
    out.metrics.push(metric.clone());
    out.min_r.push(forward.min_r[index]);
    out.max_r.push(forward.max_r[index]);
    let mass = metric.integrate_measure(f)?;
    out.mass.as_mut().expect("conjugate runs track mass").push(mass);
    out.fields.push(f.clone());
    Ok(())
}
