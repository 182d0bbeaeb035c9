//! Harnack quantities, their evolution identities and theorem verification.
//!
//! Forward runs are checked through
//! `H = 2Δu − |∇u|² − 3R − 2n/t`, conjugate runs through
//! `P = 2Δv − |∇v|² + R − 2n/τ` with `v = −ln f − (n/2) ln(4πτ)` and its
//! shifted form `P̃ = P + 2n/τ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{Clock, EquationKind, FlowTrajectory};
use crate::geometry::{MetricState, RicciSign, ScalarField};

/// Statements that can be checked against a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TheoremId {
    /// `H ≤ n/4`, and `H ≤ 0` on windows inside (0, 4), for `log_heat`.
    #[serde(rename = "thm_1_1")]
    LogHeatBound,
    /// `H ≤ 0` for `soliton_heat`.
    #[serde(rename = "thm_1_2")]
    SolitonBound,
    /// `max_M P̃` is nondecreasing in t for conjugate runs.
    #[serde(rename = "thm_4_1")]
    ShiftedPMonotone,
    /// `P ≤ 0` for conjugate runs with `R ≥ 0`.
    #[serde(rename = "thm_3_6_P")]
    PBound,
    /// Integrated Harnack inequality along space-time paths.
    #[serde(rename = "corollary_2_3")]
    IntegratedHarnack,
}

impl TheoremId {
    pub const ALL: [TheoremId; 5] = [
        TheoremId::LogHeatBound,
        TheoremId::SolitonBound,
        TheoremId::ShiftedPMonotone,
        TheoremId::PBound,
        TheoremId::IntegratedHarnack,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TheoremId::LogHeatBound => "thm_1_1",
            TheoremId::SolitonBound => "thm_1_2",
            TheoremId::ShiftedPMonotone => "thm_4_1",
            TheoremId::PBound => "thm_3_6_P",
            TheoremId::IntegratedHarnack => "corollary_2_3",
        }
    }

    /// Equation the trajectory must solve.
    pub fn equation(self) -> EquationKind {
        match self {
            TheoremId::LogHeatBound | TheoremId::IntegratedHarnack => EquationKind::LogHeat,
            TheoremId::SolitonBound => EquationKind::SolitonHeat,
            TheoremId::ShiftedPMonotone | TheoremId::PBound => EquationKind::Conjugate,
        }
    }
}

impl std::fmt::Display for TheoremId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TheoremId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TheoremId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown theorem id `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    HypothesisBreach,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::HypothesisBreach => "hypothesis_breach",
        }
    }

    fn decide(max_violation: f64, tolerance: f64, hypothesis_violated: bool) -> Self {
        if hypothesis_violated {
            Verdict::HypothesisBreach
        } else if max_violation <= tolerance {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

/// One monitored stamp (or one path query for the integrated inequality).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesPoint {
    pub t: f64,
    pub sup_quantity: f64,
    pub min_r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HarnackReport {
    pub theorem: TheoremId,
    /// Monitored window in the trajectory clock (t, or τ for conjugate runs).
    pub window: [f64; 2],
    #[serde(skip)]
    pub series: Vec<SeriesPoint>,
    /// Largest amount by which the bound is exceeded; negative means slack.
    pub max_violation: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
    pub fingerprint: String,
}

impl HarnackReport {
    pub(crate) fn new(
        theorem: TheoremId,
        window: [f64; 2],
        series: Vec<SeriesPoint>,
        max_violation: f64,
        tolerance: f64,
        traj: &FlowTrajectory,
    ) -> Self {
        Self {
            theorem,
            window,
            series,
            max_violation,
            tolerance,
            verdict: Verdict::decide(max_violation, tolerance, traj.hypothesis_violated()),
            fingerprint: traj.fingerprint().to_string(),
        }
    }
}

fn check_positive(name: &str, value: f64) -> Result<()> {
    if !(value.is_finite() && value > 0.0) {
        return Err(Error::InvalidTime(format!("{name} = {value} must be positive")));
    }
    Ok(())
}

/// `H = 2Δu − |∇u|² − 3R − 2n/t`.
pub fn compute_h(metric: &MetricState, u: &ScalarField, t: f64) -> Result<ScalarField> {
    check_positive("t", t)?;
    let lap = metric.laplacian(u)?;
    let grad = metric.gradient_norm_sq(u)?;
    let r = metric.scalar_curvature()?;
    let n = metric.dim() as f64;
    Ok(ScalarField::from_vec(
        (0..u.len())
            .map(|i| 2.0 * lap[i] - grad[i] - 3.0 * r[i] - 2.0 * n / t)
            .collect(),
    ))
}

/// `v = −ln f − (n/2) ln(4πτ)`.
pub fn potential_v(metric: &MetricState, f: &ScalarField, tau: f64) -> Result<ScalarField> {
    check_positive("τ", tau)?;
    if let Some(i) = f.values().iter().position(|&v| !(v > 0.0)) {
        return Err(Error::Domain(format!("f = {} at node {i} is not positive", f[i])));
    }
    let shift = 0.5 * metric.dim() as f64 * (4.0 * std::f64::consts::PI * tau).ln();
    Ok(f.map(|v| -v.ln() - shift))
}

/// `P` and `P̃ = P + 2n/τ` for a positive solution `f` at backward time τ.
#[derive(Debug, Clone, PartialEq)]
pub struct PQuantities {
    pub p: ScalarField,
    pub p_tilde: ScalarField,
}

pub fn compute_p(metric: &MetricState, f: &ScalarField, tau: f64) -> Result<PQuantities> {
    let v = potential_v(metric, f, tau)?;
    let lap = metric.laplacian(&v)?;
    let grad = metric.gradient_norm_sq(&v)?;
    let r = metric.scalar_curvature()?;
    let n = metric.dim() as f64;
    let p_tilde: Vec<f64> = (0..v.len()).map(|i| 2.0 * lap[i] - grad[i] + r[i]).collect();
    let p = p_tilde.iter().map(|q| q - 2.0 * n / tau).collect();
    Ok(PQuantities {
        p: ScalarField::from_vec(p),
        p_tilde: ScalarField::from_vec(p_tilde),
    })
}

/// `∂R/∂t + R/t + 2∇R·∇u + 2Rc(∇u, ∇u)`; on surfaces `Rc = (R/2) g`.
pub fn trace_harnack(metric: &MetricState, u: &ScalarField, t: f64) -> Result<ScalarField> {
    check_positive("t", t)?;
    let r = metric.scalar_curvature()?;
    let dr = metric.scalar_curvature_time_derivative()?;
    let cross = metric.inner_grad(&r, u)?;
    let grad = metric.gradient_norm_sq(u)?;
    Ok(ScalarField::from_vec(
        (0..u.len())
            .map(|i| dr[i] + r[i] / t + 2.0 * cross[i] + r[i] * grad[i])
            .collect(),
    ))
}

/// Weights of the interpolating-polynomial first derivative at `x0` through `xs`.
fn derivative_weights(x0: f64, xs: &[f64]) -> Vec<f64> {
    (0..xs.len())
        .map(|j| {
            let mut total = 0.0;
            for m in 0..xs.len() {
                if m == j {
                    continue;
                }
                let mut term = 1.0 / (xs[j] - xs[m]);
                for l in 0..xs.len() {
                    if l != j && l != m {
                        term *= (x0 - xs[l]) / (xs[j] - xs[l]);
                    }
                }
                total += term;
            }
            total
        })
        .collect()
}

/// Stencil half-width of the time difference in the residual checks.
const TIME_STENCIL: usize = 2;

/// Index of the stamp nearest `s` and the clock-derivative weights around it.
fn time_stencil(traj: &FlowTrajectory, s: f64) -> Result<(usize, Vec<f64>)> {
    let stamps = traj.stamps();
    if stamps.len() < 2 * TIME_STENCIL + 1 {
        return Err(Error::Interpolation(format!(
            "trajectory has {} stamps; the time difference needs {}",
            stamps.len(),
            2 * TIME_STENCIL + 1
        )));
    }
    if !(s > stamps[0] && s < stamps[stamps.len() - 1]) {
        return Err(Error::InvalidTime(format!(
            "{s} is not strictly inside [{}, {}]",
            stamps[0],
            stamps[stamps.len() - 1]
        )));
    }
    let k = traj.nearest_stamp(s);
    if k < TIME_STENCIL || k + TIME_STENCIL >= stamps.len() {
        return Err(Error::Interpolation(format!(
            "stamp {k} at {} lacks {TIME_STENCIL} neighbours on each side",
            stamps[k]
        )));
    }
    let xs = &stamps[k - TIME_STENCIL..=k + TIME_STENCIL];
    Ok((k, derivative_weights(stamps[k], xs)))
}

fn sup_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `‖∂H/∂t − RHS‖_∞` at the stored stamp nearest `t`, where
///
/// `RHS = ΔH − 2∇H·∇u − 2|Hess u − Rc − g/t|² − (2/t)H − (2/t)|∇u|²
///        − 2(∂R/∂t + R/t + 2∇R·∇u + 2Rc(∇u,∇u)) + c(t)(−2Δu + 2|∇u|²)`
///
/// with `c = 1` for `log_heat` and `c = 2/(t+2)` for `soliton_heat`. The time
/// derivative is a five-point difference over neighbouring stamps.
pub fn evolution_residual_h(traj: &FlowTrajectory, t: f64) -> Result<f64> {
    let extra_scale: fn(f64) -> f64 = match traj.equation() {
        EquationKind::LogHeat => |_| 1.0,
        EquationKind::SolitonHeat => |t| 2.0 / (t + 2.0),
        EquationKind::Conjugate => return Err(Error::WrongEquation("H residual needs a forward heat run".into())),
    };
    let (k, weights) = time_stencil(traj, t)?;
    let mut dh = vec![0.0; traj.field(k).len()];
    for (j, w) in weights.iter().enumerate() {
        let idx = k - TIME_STENCIL + j;
        let h = compute_h(traj.metric(idx), traj.field(idx), traj.stamps()[idx])?;
        for (acc, v) in dh.iter_mut().zip(h.values()) {
            *acc += w * v;
        }
    }

    let metric = traj.metric(k);
    let u = traj.field(k);
    let t = traj.stamps()[k];
    let h = compute_h(metric, u, t)?;
    let lap_h = metric.laplacian(&h)?;
    let cross = metric.inner_grad(&h, u)?;
    let deficit = metric.hessian_deficit_norm_sq(u, RicciSign::Minus, 1.0 / t)?;
    let grad = metric.gradient_norm_sq(u)?;
    let lap_u = metric.laplacian(u)?;
    let th = trace_harnack(metric, u, t)?;
    let c = extra_scale(t);
    let residual: Vec<f64> = (0..u.len())
        .map(|i| {
            let rhs = lap_h[i] - 2.0 * cross[i] - 2.0 * deficit[i] - 2.0 / t * h[i] - 2.0 / t * grad[i] - 2.0 * th[i]
                + c * (-2.0 * lap_u[i] + 2.0 * grad[i]);
            dh[i] - rhs
        })
        .collect();
    Ok(sup_norm(&residual))
}

/// `‖∂P/∂τ − RHS‖_∞` at the stored stamp nearest `τ` of a conjugate run, where
///
/// `RHS = ΔP − 2∇P·∇v − 2|Hess v + Rc − g/τ|² − (2/τ)P − (2/τ)|∇v|² − (2/τ)R`.
pub fn evolution_residual_p(traj: &FlowTrajectory, tau: f64) -> Result<f64> {
    if traj.equation() != EquationKind::Conjugate || !matches!(traj.clock(), Clock::Backward { .. }) {
        return Err(Error::WrongEquation("P residual needs a conjugate run".into()));
    }
    let (k, weights) = time_stencil(traj, tau)?;
    let mut dp = vec![0.0; traj.field(k).len()];
    for (j, w) in weights.iter().enumerate() {
        let idx = k - TIME_STENCIL + j;
        let q = compute_p(traj.metric(idx), traj.field(idx), traj.stamps()[idx])?;
        for (acc, v) in dp.iter_mut().zip(q.p.values()) {
            *acc += w * v;
        }
    }

    let metric = traj.metric(k);
    let tau = traj.stamps()[k];
    let v = potential_v(metric, traj.field(k), tau)?;
    let p = compute_p(metric, traj.field(k), tau)?.p;
    let lap_p = metric.laplacian(&p)?;
    let cross = metric.inner_grad(&p, &v)?;
    let deficit = metric.hessian_deficit_norm_sq(&v, RicciSign::Plus, 1.0 / tau)?;
    let grad = metric.gradient_norm_sq(&v)?;
    let r = metric.scalar_curvature()?;
    let residual: Vec<f64> = (0..v.len())
        .map(|i| {
            let rhs = lap_p[i]
                - 2.0 * cross[i]
                - 2.0 * deficit[i]
                - 2.0 / tau * p[i]
                - 2.0 / tau * grad[i]
                - 2.0 / tau * r[i];
            dp[i] - rhs
        })
        .collect();
    Ok(sup_norm(&residual))
}

/// Indices of the stamps inside `[start, end]` and the window actually covered.
fn window_indices(traj: &FlowTrajectory, start: f64) -> Result<(Vec<usize>, [f64; 2])> {
    if !(start.is_finite() && start > 0.0) {
        return Err(Error::InvalidWindow(format!("window start {start} must be positive")));
    }
    let end = *traj
        .stamps()
        .last()
        .ok_or_else(|| Error::InvalidWindow("empty trajectory".into()))?;
    let idx: Vec<usize> = (0..traj.len()).filter(|&k| traj.stamps()[k] >= start).collect();
    if idx.is_empty() {
        return Err(Error::InvalidWindow(format!("no stored stamp in [{start}, {end}]")));
    }
    Ok((idx, [start, end]))
}

/// Checks one theorem over the stamps at or after `window_start`.
///
/// The window is measured in the trajectory clock: t for forward runs, τ for
/// conjugate runs. Violations are one-sided; the integrated inequality uses
/// the default query lattice of [`crate::pathopt::default_queries`].
pub fn verify_theorem(
    traj: &FlowTrajectory,
    id: TheoremId,
    window_start: f64,
    tolerance: f64,
) -> Result<HarnackReport> {
    if traj.equation() != id.equation() {
        return Err(Error::WrongEquation(format!(
            "{id} applies to {} runs, trajectory solves {}",
            id.equation(),
            traj.equation()
        )));
    }
    if !traj.has_solution() {
        return Err(Error::InvalidParameter("trajectory carries no solution field".into()));
    }
    if !(tolerance.is_finite() && tolerance >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance {tolerance} must be nonnegative"
        )));
    }
    if id == TheoremId::IntegratedHarnack {
        let queries = crate::pathopt::default_queries(traj, window_start)?;
        return Ok(crate::pathopt::verify_integrated_harnack(traj, &queries, tolerance)?.report);
    }
    let (indices, window) = window_indices(traj, window_start)?;
    if id == TheoremId::ShiftedPMonotone && indices.len() < 2 {
        return Err(Error::InvalidWindow(format!(
            "monotonicity needs two stored stamps in [{}, {}]",
            window[0], window[1]
        )));
    }
    let mut series = Vec::with_capacity(indices.len());
    for &k in &indices {
        let s = traj.stamps()[k];
        let sup = match id {
            TheoremId::LogHeatBound | TheoremId::SolitonBound => compute_h(traj.metric(k), traj.field(k), s)?.max(),
            TheoremId::ShiftedPMonotone => compute_p(traj.metric(k), traj.field(k), s)?.p_tilde.max(),
            TheoremId::PBound => compute_p(traj.metric(k), traj.field(k), s)?.p.max(),
            TheoremId::IntegratedHarnack => unreachable!(),
        };
        series.push(SeriesPoint {
            t: s,
            sup_quantity: sup,
            min_r: traj.min_r()[k],
        });
    }
    let sup_all = series.iter().map(|p| p.sup_quantity).fold(f64::NEG_INFINITY, f64::max);
    let max_violation = match id {
        TheoremId::LogHeatBound => {
            let n = traj.dim() as f64;
            let end = window[1];
            let mut bound = (0.25 * n).min(0.25 * n * (1.0 - 5.0 / (end + 1.0)));
            if end < 4.0 {
                bound = bound.min(0.0);
            }
            sup_all - bound
        }
        TheoremId::SolitonBound | TheoremId::PBound => sup_all,
        // Increasing τ is decreasing t, so m must not grow from one stamp to the next.
        TheoremId::ShiftedPMonotone => series
            .windows(2)
            .map(|w| w[1].sup_quantity - w[0].sup_quantity)
            .fold(f64::NEG_INFINITY, f64::max),
        TheoremId::IntegratedHarnack => unreachable!(),
    };
    let mut report = HarnackReport::new(id, window, series, max_violation, tolerance, traj);
    if id == TheoremId::PBound && traj.min_r().iter().any(|&r| r < 0.0) {
        report.verdict = Verdict::HypothesisBreach;
    }
    Ok(report)
}
