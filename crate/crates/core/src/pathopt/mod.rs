//! Space-time path action and the integrated Harnack inequality.
//!
//! For a path γ from `(x₁, t₁)` to `(x₂, t₂)` the action is
//! `∫ e^t (|γ̇|² + R(γ, t) + 2n/t + n/4) dt`. Paths are piecewise linear;
//! each segment is integrated over the sub-intervals cut by the stored stamps,
//! with the kinetic term at sub-interval midpoints and the potential term by
//! the trapezoid rule, so the action is additive under splitting at a stamp.
//! The minimum over paths is searched by dynamic programming on a space-time
//! lattice followed by coordinate-descent refinement of the node positions.

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::flow::{Clock, EquationKind, FlowTrajectory};
use crate::geometry::{BackendKind, MetricState, ScalarField};
use crate::harnack::{HarnackReport, SeriesPoint, TheoremId};

/// Endpoints of one integrated-Harnack comparison.
///
/// Positions are θ on the sphere and `n` coordinates on the torus; a single
/// number is accepted for one-coordinate positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathQuery {
    #[serde(deserialize_with = "position")]
    pub x1: Vec<f64>,
    pub t1: f64,
    #[serde(deserialize_with = "position")]
    pub x2: Vec<f64>,
    pub t2: f64,
}

fn position<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Position {
        Scalar(f64),
        Vector(Vec<f64>),
    }
    Ok(match Position::deserialize(d)? {
        Position::Scalar(x) => vec![x],
        Position::Vector(v) => v,
    })
}

impl PathQuery {
    pub fn new(x1: Vec<f64>, t1: f64, x2: Vec<f64>, t2: f64) -> Self {
        Self { x1, t1, x2, t2 }
    }

    /// Checks `0 < t₁ < t₂` and finite positions.
    pub fn validate_times(&self) -> Result<()> {
        if !(self.t1.is_finite() && self.t1 > 0.0) {
            return Err(Error::InvalidTime(format!("t1 = {} must be positive", self.t1)));
        }
        if !(self.t2.is_finite() && self.t1 < self.t2) {
            return Err(Error::InvalidQuery(format!(
                "t1 = {} must be smaller than t2 = {}",
                self.t1, self.t2
            )));
        }
        if self.x1.iter().chain(&self.x2).any(|x| !x.is_finite()) {
            return Err(Error::InvalidQuery("positions must be finite".into()));
        }
        Ok(())
    }

    fn validate(&self, traj: &FlowTrajectory) -> Result<()> {
        self.validate_times()?;
        let stamps = traj.stamps();
        let (lo, hi) = (stamps[0], stamps[stamps.len() - 1]);
        for t in [self.t1, self.t2] {
            if t < lo || t > hi {
                return Err(Error::InvalidWindow(format!(
                    "t = {t} outside the trajectory range [{lo}, {hi}]"
                )));
            }
        }
        let dim = traj.metric(0).dim_of_position();
        for x in [&self.x1, &self.x2] {
            if x.len() != dim {
                return Err(Error::InvalidQuery(format!(
                    "position has {} coordinates, expected {dim}",
                    x.len()
                )));
            }
        }
        if traj.metric(0).backend() == BackendKind::ConformalSphere {
            for x in [&self.x1, &self.x2] {
                if !(0.0..=std::f64::consts::PI).contains(&x[0]) {
                    return Err(Error::InvalidQuery(format!("θ = {} outside [0, π]", x[0])));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathNode {
    pub x: Vec<f64>,
    pub t: f64,
}

/// Piecewise-linear space-time path with strictly increasing node times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpaceTimePath {
    pub nodes: Vec<PathNode>,
    /// Action of the path once evaluated.
    pub action: Option<f64>,
}

impl SpaceTimePath {
    pub fn new(nodes: Vec<PathNode>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidQuery("a path needs at least two nodes".into()));
        }
        if nodes.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(Error::InvalidQuery("node times must be strictly increasing".into()));
        }
        let dim = nodes[0].x.len();
        if nodes
            .iter()
            .any(|n| n.x.len() != dim || n.x.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::InvalidQuery(
                "node positions must be finite and of equal length".into(),
            ));
        }
        Ok(Self { nodes, action: None })
    }

    /// Straight segment from `(x1, t1)` to `(x2, t2)`.
    pub fn straight(x1: Vec<f64>, t1: f64, x2: Vec<f64>, t2: f64) -> Result<Self> {
        Self::new(vec![PathNode { x: x1, t: t1 }, PathNode { x: x2, t: t2 }])
    }

    pub fn segments(&self) -> usize {
        self.nodes.len() - 1
    }
}

/// Interpolation and quadrature over a forward trajectory.
struct ActionContext<'a> {
    traj: &'a FlowTrajectory,
    n: f64,
    /// Torus side length; `None` on the sphere.
    period: Option<f64>,
    /// Scalar curvature per stamp (sphere only; the torus is flat).
    curvature: Vec<ScalarField>,
}

impl<'a> ActionContext<'a> {
    fn new(traj: &'a FlowTrajectory) -> Result<Self> {
        if traj.clock() != Clock::Forward {
            return Err(Error::WrongEquation(
                "the path action needs a forward trajectory".into(),
            ));
        }
        if traj.len() < 2 {
            return Err(Error::Resolution("trajectory has fewer than two stamps".into()));
        }
        let metric = traj.metric(0);
        let (period, curvature) = match metric.backend() {
            BackendKind::FlatTorus => (Some(metric.grid().extent()), Vec::new()),
            BackendKind::ConformalSphere => (
                None,
                traj.metrics()
                    .iter()
                    .map(MetricState::scalar_curvature)
                    .collect::<Result<_>>()?,
            ),
        };
        Ok(Self {
            traj,
            n: metric.dim() as f64,
            period,
            curvature,
        })
    }

    /// Stamp index `k` and weight `w` with `s = (1 − w) t_k + w t_{k+1}`.
    fn bracket(&self, s: f64) -> (usize, f64) {
        let stamps = self.traj.stamps();
        let k = stamps
            .partition_point(|&x| x <= s)
            .saturating_sub(1)
            .min(stamps.len() - 2);
        (k, (s - stamps[k]) / (stamps[k + 1] - stamps[k]))
    }

    fn interpolate<'b>(&self, fields: &dyn Fn(usize) -> &'b ScalarField, x: &[f64], s: f64) -> f64 {
        let (k, w) = self.bracket(s);
        let metric = self.traj.metric(k);
        let lo = metric.interpolate(fields(k), x).expect("aligned field");
        if w == 0.0 {
            return lo;
        }
        let hi = metric.interpolate(fields(k + 1), x).expect("aligned field");
        (1.0 - w) * lo + w * hi
    }

    fn curvature_at(&self, x: &[f64], s: f64) -> f64 {
        if self.period.is_some() {
            return 0.0;
        }
        let curvature = &self.curvature;
        self.interpolate(&|k| &curvature[k], x, s)
    }

    fn conformal_factor_at(&self, theta: f64, s: f64) -> f64 {
        let traj = self.traj;
        let phi = self.interpolate(&|k| traj.metric(k).phi().expect("sphere"), &[theta], s);
        (2.0 * phi).exp()
    }

    /// `u` at `(x, s)`, linear in space and time.
    fn solution_at(&self, x: &[f64], s: f64) -> f64 {
        let traj = self.traj;
        self.interpolate(&|k| traj.field(k), x, s)
    }

    /// Displacement from `a` to `b`; on the torus the minimal representative
    /// modulo L, ties toward the nonnegative one.
    fn displacement(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        a.iter()
            .zip(b)
            .map(|(&p, &q)| match self.period {
                Some(l) => {
                    let d = (q - p).rem_euclid(l);
                    if d > 0.5 * l {
                        d - l
                    } else {
                        d
                    }
                }
                None => q - p,
            })
            .collect()
    }

    /// Squared length of [`Self::displacement`] without allocating.
    fn displacement_sq(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(&p, &q)| {
                let d = match self.period {
                    Some(l) => {
                        let d = (q - p).rem_euclid(l);
                        if d > 0.5 * l {
                            d - l
                        } else {
                            d
                        }
                    }
                    None => q - p,
                };
                d * d
            })
            .sum()
    }

    fn point(&self, a: &[f64], d: &[f64], frac: f64) -> Vec<f64> {
        a.iter()
            .zip(d)
            .map(|(&p, &q)| {
                let x = p + frac * q;
                match self.period {
                    Some(l) => x.rem_euclid(l),
                    None => x,
                }
            })
            .collect()
    }

    fn potential(&self, x: &[f64], s: f64) -> f64 {
        s.exp() * (self.curvature_at(x, s) + 2.0 * self.n / s + 0.25 * self.n)
    }

    /// `t_a`, the stamps strictly inside `(t_a, t_b)`, and `t_b`.
    fn sub_times(&self, ta: f64, tb: f64) -> Vec<f64> {
        let stamps = self.traj.stamps();
        let lo = stamps.partition_point(|&x| x <= ta);
        let hi = stamps.partition_point(|&x| x < tb);
        let mut out = Vec::with_capacity(hi.saturating_sub(lo) + 2);
        out.push(ta);
        if lo < hi {
            out.extend_from_slice(&stamps[lo..hi]);
        }
        out.push(tb);
        out
    }

    fn segment(&self, xa: &[f64], ta: f64, xb: &[f64], tb: f64) -> f64 {
        let d = self.displacement(xa, xb);
        let span = tb - ta;
        let d_sq: f64 = d.iter().map(|v| v * v).sum();
        let times = self.sub_times(ta, tb);
        let mut total = 0.0;
        let mut left = self.potential(xa, ta);
        for w in times.windows(2) {
            let (s0, s1) = (w[0], w[1]);
            let ds = s1 - s0;
            let sm = 0.5 * (s0 + s1);
            let speed_sq = match self.period {
                Some(_) => d_sq / (span * span),
                None => {
                    let theta = self.point(xa, &d, (sm - ta) / span)[0];
                    self.conformal_factor_at(theta, sm) * d_sq / (span * span)
                }
            };
            let right = self.potential(&self.point(xa, &d, (s1 - ta) / span), s1);
            total += sm.exp() * speed_sq * ds + 0.5 * ds * (left + right);
            left = right;
        }
        total
    }

    fn path(&self, path: &SpaceTimePath) -> Vec<f64> {
        path.nodes
            .windows(2)
            .map(|w| self.segment(&w[0].x, w[0].t, &w[1].x, w[1].t))
            .collect()
    }

    fn check_nodes(&self, path: &SpaceTimePath) -> Result<()> {
        let stamps = self.traj.stamps();
        let (lo, hi) = (stamps[0], stamps[stamps.len() - 1]);
        let first = path.nodes[0].t;
        let last = path.nodes[path.nodes.len() - 1].t;
        if !(first > 0.0) {
            return Err(Error::InvalidTime(format!("path starts at t = {first}")));
        }
        if first < lo || last > hi {
            return Err(Error::InvalidWindow(format!(
                "path spans [{first}, {last}], trajectory covers [{lo}, {hi}]"
            )));
        }
        let dim = self.traj.metric(0).dim_of_position();
        if path.nodes[0].x.len() != dim {
            return Err(Error::InvalidQuery(format!("positions need {dim} coordinates")));
        }
        Ok(())
    }
}

/// Action of one fixed path over a forward trajectory.
pub fn path_action(traj: &FlowTrajectory, path: &SpaceTimePath) -> Result<f64> {
    let ctx = ActionContext::new(traj)?;
    ctx.check_nodes(path)?;
    Ok(ctx.path(path).iter().sum())
}

/// Minimum-cost path through a layered lattice.
///
/// `successors(j, a, out)` fills the nodes of layer `j + 1` reachable from
/// node `a` of layer `j`; `edge(j, a, b)` is the transition cost. Every node
/// of layer 0 starts at cost 0. Ties are broken toward the smaller node index,
/// both for predecessors and for the final node. Returns `None` when no node of
/// the last layer is reachable.
pub fn lattice_dp(
    layer_sizes: &[usize],
    mut successors: impl FnMut(usize, usize, &mut Vec<usize>),
    edge: impl Fn(usize, usize, usize) -> f64,
) -> Option<(f64, Vec<usize>)> {
    if layer_sizes.is_empty() {
        return None;
    }
    let layers = layer_sizes.len();
    let mut value = vec![0.0; layer_sizes[0]];
    let mut reached = vec![true; layer_sizes[0]];
    let mut preds: Vec<Vec<usize>> = Vec::with_capacity(layers - 1);
    let mut buf = Vec::new();
    for j in 0..layers - 1 {
        let size = layer_sizes[j + 1];
        let mut next = vec![f64::INFINITY; size];
        let mut next_reached = vec![false; size];
        let mut pred = vec![usize::MAX; size];
        for a in 0..layer_sizes[j] {
            if !reached[a] {
                continue;
            }
            buf.clear();
            successors(j, a, &mut buf);
            for &b in &buf {
                let candidate = value[a] + edge(j, a, b);
                if !next_reached[b] || candidate < next[b] || (candidate == next[b] && a < pred[b]) {
                    next[b] = candidate;
                    next_reached[b] = true;
                    pred[b] = a;
                }
            }
        }
        value = next;
        reached = next_reached;
        preds.push(pred);
    }
    let mut best: Option<usize> = None;
    for b in 0..value.len() {
        if reached[b] && best.is_none_or(|m| value[b] < value[m]) {
            best = Some(b);
        }
    }
    let end = best?;
    let mut nodes = vec![end; layers];
    for j in (0..layers - 1).rev() {
        nodes[j] = preds[j][nodes[j + 1]];
    }
    Some((value[end], nodes))
}

/// Default cap on the number of lattice nodes per time slice.
pub const MAX_LATTICE_NODES: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerOptions {
    /// Upper bound on the number of time slices, endpoints included.
    pub max_slices: usize,
    /// Largest per-slice jump in lattice cells; `max(2, ⌈N/8⌉)` when absent.
    pub window: Option<usize>,
    /// Use every `stride`-th grid node along each axis as a lattice node.
    /// When absent, the smallest divisor of N that keeps the lattice at or
    /// below [`MAX_LATTICE_NODES`].
    pub lattice_stride: Option<usize>,
    /// Coordinate-descent sweeps after the lattice search.
    pub sweeps: usize,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            max_slices: 32,
            window: None,
            lattice_stride: None,
            sweeps: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathOptimum {
    /// Action of the returned path.
    pub gamma: f64,
    /// Lattice minimum before refinement.
    pub lattice_value: f64,
    /// Action of the straight path through the same time slices.
    pub straight_value: f64,
    /// Action after each refinement sweep.
    pub sweep_actions: Vec<f64>,
    pub path: SpaceTimePath,
}

/// Lattice geometry used by the search.
struct Lattice {
    per_axis: usize,
    dim: usize,
    stride: usize,
    window: usize,
    periodic: bool,
}

impl Lattice {
    fn size(&self) -> usize {
        self.per_axis.pow(self.dim as u32)
    }

    fn coords(&self, mut idx: usize) -> Vec<usize> {
        let mut c = vec![0; self.dim];
        for axis in (0..self.dim).rev() {
            c[axis] = idx % self.per_axis;
            idx /= self.per_axis;
        }
        c
    }

    fn index(&self, coords: &[usize]) -> usize {
        coords.iter().fold(0, |acc, &c| acc * self.per_axis + c)
    }

    fn position(&self, metric: &MetricState, idx: usize) -> Vec<f64> {
        let nodes = metric.grid().nodes();
        self.coords(idx).iter().map(|&c| nodes[c * self.stride]).collect()
    }

    /// Nearest lattice coordinates of a position.
    fn nearest(&self, metric: &MetricState, x: &[f64]) -> Vec<usize> {
        let h = metric.spacing() * self.stride as f64;
        x.iter()
            .map(|&v| {
                if self.periodic {
                    ((v / h).round() as i64).rem_euclid(self.per_axis as i64) as usize
                } else {
                    let s = (v / metric.spacing() - 0.5) / self.stride as f64;
                    (s.round().max(0.0) as usize).min(self.per_axis - 1)
                }
            })
            .collect()
    }

    fn within(&self, a: &[usize], b: &[usize]) -> bool {
        a.iter().zip(b).all(|(&p, &q)| {
            let d = p.abs_diff(q);
            let d = if self.periodic { d.min(self.per_axis - d) } else { d };
            d <= self.window
        })
    }

    fn neighbours(&self, center: &[usize], out: &mut Vec<usize>) {
        let w = self.window as i64;
        let m = self.per_axis as i64;
        let ranges: Vec<Vec<usize>> = center
            .iter()
            .map(|&c| {
                let mut r: Vec<usize> = if self.periodic && 2 * w + 1 >= m {
                    (0..self.per_axis).collect()
                } else {
                    (c as i64 - w..=c as i64 + w)
                        .filter_map(|v| {
                            if self.periodic {
                                Some(v.rem_euclid(m) as usize)
                            } else if (0..m).contains(&v) {
                                Some(v as usize)
                            } else {
                                None
                            }
                        })
                        .collect()
                };
                r.sort_unstable();
                r
            })
            .collect();
        let mut coords = vec![0usize; self.dim];
        fn recurse(axis: usize, ranges: &[Vec<usize>], coords: &mut [usize], lat: &Lattice, out: &mut Vec<usize>) {
            if axis == ranges.len() {
                out.push(lat.index(coords));
                return;
            }
            for &c in &ranges[axis] {
                coords[axis] = c;
                recurse(axis + 1, ranges, coords, lat, out);
            }
        }
        recurse(0, &ranges, &mut coords, self, out);
    }
}

/// Minimizes the action between the query endpoints.
pub fn optimize_path(traj: &FlowTrajectory, query: &PathQuery) -> Result<PathOptimum> {
    optimize_path_with(traj, query, &OptimizerOptions::default())
}

pub fn optimize_path_with(traj: &FlowTrajectory, query: &PathQuery, options: &OptimizerOptions) -> Result<PathOptimum> {
    let ctx = ActionContext::new(traj)?;
    query.validate(traj)?;
    let metric = traj.metric(0);
    let grid_n = metric.grid().node_count();
    let dim = metric.dim_of_position();
    let stride = options.lattice_stride.unwrap_or_else(|| {
        (1..=grid_n)
            .find(|&s| grid_n.is_multiple_of(s) && (grid_n / s).pow(dim as u32) <= MAX_LATTICE_NODES)
            .unwrap_or(grid_n)
    });
    if stride == 0 || !grid_n.is_multiple_of(stride) {
        return Err(Error::InvalidParameter(format!(
            "lattice stride {stride} must divide N = {grid_n}"
        )));
    }
    if options.max_slices < 3 {
        return Err(Error::InvalidParameter("at least three time slices are needed".into()));
    }
    let per_axis = grid_n / stride;
    let lattice = Lattice {
        per_axis,
        dim,
        stride,
        window: options.window.unwrap_or_else(|| 2.max(per_axis.div_ceil(8))),
        periodic: metric.backend() == BackendKind::FlatTorus,
    };

    let stamps = traj.stamps();
    let inner: Vec<f64> = stamps
        .iter()
        .copied()
        .filter(|&s| s > query.t1 && s < query.t2)
        .collect();
    if inner.len() < 4 {
        return Err(Error::Resolution(format!(
            "only {} stored stamps between t1 = {} and t2 = {}; at least 4 are needed",
            inner.len(),
            query.t1,
            query.t2
        )));
    }
    let keep = (options.max_slices - 2).min(inner.len());
    let mut times = vec![query.t1];
    for j in 0..keep {
        times.push(inner[((j + 1) * inner.len()) / (keep + 1)]);
    }
    times.push(query.t2);
    times.dedup();
    let layers = times.len();

    let start = lattice.nearest(metric, &query.x1);
    let end = lattice.nearest(metric, &query.x2);
    let mut sizes = vec![lattice.size(); layers];
    sizes[0] = 1;
    sizes[layers - 1] = 1;
    let positions: Vec<Vec<f64>> = (0..lattice.size()).map(|i| lattice.position(metric, i)).collect();
    let pos = |j: usize, a: usize| -> &[f64] {
        if j == 0 {
            &query.x1
        } else if j == layers - 1 {
            &query.x2
        } else {
            &positions[a]
        }
    };

    // On the flat torus the potential does not depend on position and the
    // kinetic term is |d|² times a per-slice weight.
    let flat_weights: Option<Vec<(f64, f64)>> = ctx.period.map(|_| {
        times
            .windows(2)
            .map(|w| {
                let zero = vec![0.0; lattice.dim];
                let potential = ctx.segment(&zero, w[0], &zero, w[1]);
                let kinetic: f64 = ctx
                    .sub_times(w[0], w[1])
                    .windows(2)
                    .map(|s| (0.5 * (s[0] + s[1])).exp() * (s[1] - s[0]))
                    .sum::<f64>()
                    / ((w[1] - w[0]) * (w[1] - w[0]));
                (kinetic, potential)
            })
            .collect()
    });
    let edge = |j: usize, a: usize, b: usize| -> f64 {
        let (xa, xb) = (pos(j, a), pos(j + 1, b));
        match &flat_weights {
            Some(weights) => {
                let (kinetic, potential) = weights[j];
                kinetic * ctx.displacement_sq(xa, xb) + potential
            }
            None => ctx.segment(xa, times[j], xb, times[j + 1]),
        }
    };
    let successors = |j: usize, a: usize, out: &mut Vec<usize>| {
        if j + 1 == layers - 1 {
            let from = if j == 0 { start.clone() } else { lattice.coords(a) };
            if lattice.within(&from, &end) {
                out.push(0);
            }
        } else if j == 0 {
            lattice.neighbours(&start, out);
        } else {
            lattice.neighbours(&lattice.coords(a), out);
        }
    };
    let (lattice_value, route) = lattice_dp(&sizes, successors, edge).ok_or_else(|| {
        Error::Resolution(format!(
            "x2 is not reachable within {} slices of at most {} cells",
            layers - 1,
            lattice.window
        ))
    })?;

    let dp_path = SpaceTimePath::new(
        (0..layers)
            .map(|j| PathNode {
                x: pos(j, route[j]).to_vec(),
                t: times[j],
            })
            .collect(),
    )?;
    let d = ctx.displacement(&query.x1, &query.x2);
    let straight = SpaceTimePath::new(
        times
            .iter()
            .enumerate()
            .map(|(j, &t)| PathNode {
                x: match j {
                    0 => query.x1.clone(),
                    _ if j == layers - 1 => query.x2.clone(),
                    _ => ctx.point(&query.x1, &d, (t - query.t1) / (query.t2 - query.t1)),
                },
                t,
            })
            .collect(),
    )?;
    let dp_segments = ctx.path(&dp_path);
    let straight_segments = ctx.path(&straight);
    let straight_value: f64 = straight_segments.iter().sum();
    let (mut path, mut segments) = if straight_value < dp_segments.iter().sum::<f64>() {
        (straight, straight_segments)
    } else {
        (dp_path, dp_segments)
    };

    let mut step = 0.5 * metric.spacing() * stride as f64;
    let mut sweep_actions = Vec::with_capacity(options.sweeps);
    for _ in 0..options.sweeps {
        refine_sweep(&ctx, &mut path, &mut segments, step);
        sweep_actions.push(segments.iter().sum());
        step *= 0.5;
    }
    let gamma = segments.iter().sum();
    path.action = Some(gamma);
    Ok(PathOptimum {
        gamma,
        lattice_value,
        straight_value,
        sweep_actions,
        path,
    })
}

/// One coordinate-descent pass over the interior nodes with trial moves ±step.
///
/// A move is kept only if it lowers the action by more than a relative
/// `1e-12`, so the recorded per-sweep totals cannot creep up through rounding.
fn refine_sweep(ctx: &ActionContext<'_>, path: &mut SpaceTimePath, segments: &mut [f64], step: f64) {
    let nodes = path.nodes.len();
    let slack = 1e-12 * segments.iter().map(|s| s.abs()).sum::<f64>();
    for i in 1..nodes - 1 {
        for axis in 0..path.nodes[i].x.len() {
            for dir in [-1.0, 1.0] {
                let mut x = path.nodes[i].x.clone();
                x[axis] += dir * step;
                match ctx.period {
                    Some(l) => x[axis] = x[axis].rem_euclid(l),
                    None => x[axis] = x[axis].clamp(0.0, std::f64::consts::PI),
                }
                let (prev, next) = (&path.nodes[i - 1], &path.nodes[i + 1]);
                let left = ctx.segment(&prev.x, prev.t, &x, path.nodes[i].t);
                let right = ctx.segment(&x, path.nodes[i].t, &next.x, next.t);
                if left + right < segments[i - 1] + segments[i] - slack {
                    segments[i - 1] = left;
                    segments[i] = right;
                    path.nodes[i].x = x;
                }
            }
        }
    }
}

/// Outcome of one query of the integrated inequality.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathResult {
    pub query: PathQuery,
    pub gamma: f64,
    /// `e^{t₁} ln f(x₁,t₁) − e^{t₂} ln f(x₂,t₂) − Γ/2`; the inequality asks for ≤ 0.
    pub margin: f64,
    /// Same expression with the two sides exchanged, recorded for inspection only.
    pub reverse_slack: f64,
    pub sweep_actions: Vec<f64>,
    pub path: SpaceTimePath,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratedHarnack {
    pub report: HarnackReport,
    pub paths: Vec<PathResult>,
}

/// Checks `e^{t₁} ln f(x₁,t₁) ≤ e^{t₂} ln f(x₂,t₂) + Γ/2` with `f = e^{−u}`.
///
/// Each margin is compared to `e^{t₂}·tolerance`; the report's violation is
/// the largest `margin / e^{t₂}` and its series holds one point per query
/// (t₂, scaled margin, min R over [t₁, t₂]).
pub fn verify_integrated_harnack(
    traj: &FlowTrajectory,
    queries: &[PathQuery],
    tolerance: f64,
) -> Result<IntegratedHarnack> {
    if traj.equation() != EquationKind::LogHeat {
        return Err(Error::WrongEquation(format!(
            "the integrated inequality applies to log_heat runs, trajectory solves {}",
            traj.equation()
        )));
    }
    if queries.is_empty() {
        return Err(Error::InvalidWindow("no path queries".into()));
    }
    let ctx = ActionContext::new(traj)?;
    let mut paths = Vec::with_capacity(queries.len());
    let mut series = Vec::with_capacity(queries.len());
    let mut max_violation = f64::NEG_INFINITY;
    for q in queries {
        let opt = optimize_path(traj, q)?;
        let ln_f1 = -ctx.solution_at(&q.x1, q.t1);
        let ln_f2 = -ctx.solution_at(&q.x2, q.t2);
        let (e1, e2) = (q.t1.exp(), q.t2.exp());
        let margin = e1 * ln_f1 - e2 * ln_f2 - 0.5 * opt.gamma;
        let reverse_slack = e2 * ln_f2 - e1 * ln_f1 - 0.5 * opt.gamma;
        let scaled = margin / e2;
        max_violation = max_violation.max(scaled);
        let min_r = (0..traj.len())
            .filter(|&k| traj.stamps()[k] >= q.t1 && traj.stamps()[k] <= q.t2)
            .map(|k| traj.min_r()[k])
            .fold(f64::INFINITY, f64::min);
        series.push(SeriesPoint {
            t: q.t2,
            sup_quantity: scaled,
            min_r,
        });
        paths.push(PathResult {
            query: q.clone(),
            gamma: opt.gamma,
            margin,
            reverse_slack,
            sweep_actions: opt.sweep_actions,
            path: opt.path,
        });
    }
    let t_lo = queries.iter().map(|q| q.t1).fold(f64::INFINITY, f64::min);
    let t_hi = queries.iter().map(|q| q.t2).fold(f64::NEG_INFINITY, f64::max);
    let report = HarnackReport::new(
        TheoremId::IntegratedHarnack,
        [t_lo, t_hi],
        series,
        max_violation,
        tolerance,
        traj,
    );
    Ok(IntegratedHarnack { report, paths })
}

/// Ten endpoint pairs on a fixed lattice of grid nodes and stored stamps
/// inside `[window_start, T]`.
pub fn default_queries(traj: &FlowTrajectory, window_start: f64) -> Result<Vec<PathQuery>> {
    let stamps = traj.stamps();
    let end = stamps[stamps.len() - 1];
    if !(window_start > 0.0 && window_start < end) {
        return Err(Error::InvalidWindow(format!(
            "window start {window_start} must lie in (0, {end})"
        )));
    }
    let metric = traj.metric(0);
    let n = metric.grid().node_count();
    let dim = metric.dim_of_position();
    let span = end - window_start;
    let at = |frac: f64| stamps[traj.nearest_stamp(window_start + frac * span)];
    let node = |i: usize| -> Vec<f64> {
        let nodes = metric.grid().nodes();
        (0..dim).map(|axis| nodes[(i * (axis + 1)) % n]).collect()
    };
    Ok((0..10)
        .map(|i| {
            let a = 0.05 + 0.04 * i as f64;
            let b = a + 0.3 + 0.05 * i as f64;
            let p1 = i * n / 10;
            let p2 = p1 + (i % 4) * n / 16;
            PathQuery::new(node(p1), at(a), node(p2), at(b.min(1.0)))
        })
        .collect())
}
