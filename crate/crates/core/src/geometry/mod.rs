//! Manifold backends, their grids and the differential operators of the evolving metric.
//!
//! Two backends are supported:
//!
//! * a static flat torus `T^n = (R / L Z)^n`, `n ∈ {1, 2, 3}`, where every curvature
//!   quantity vanishes;
//! * the 2-sphere with an axisymmetric conformal metric `g = e^{2φ(θ)} g_{S²}`
//!   sampled on a staggered polar grid (no node on either pole).
//!
//! All derivatives are second-order centered differences. Fields are stored as
//! flat vectors aligned with the grid nodes (row-major for multi-dimensional tori).

mod stencil;

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub(crate) use stencil::Periodic;

/// Smallest admissible number of nodes per axis.
pub const MIN_NODES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    FlatTorus,
    ConformalSphere,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    Periodic,
    PolarStaggered,
}

/// A uniform one-axis grid. Tori use it along each axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    kind: GridKind,
    spacing: f64,
    nodes: Vec<f64>,
    /// cot θ_i on polar grids, empty otherwise.
    cot: Vec<f64>,
    sin: Vec<f64>,
}

impl Grid {
    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Period of a periodic grid, π for the polar grid.
    pub fn extent(&self) -> f64 {
        self.spacing * self.nodes.len() as f64
    }
}

/// Builds the grid for a backend.
///
/// Periodic nodes are `x_i = i L / N`; polar nodes are `θ_i = (i + 1/2) π / N`.
pub fn build_grid(backend: BackendKind, n_nodes: usize, length: Option<f64>) -> Result<Grid> {
    if n_nodes < MIN_NODES {
        return Err(Error::InvalidResolution(format!(
            "N = {n_nodes} is below the minimum of {MIN_NODES}"
        )));
    }
    match backend {
        BackendKind::FlatTorus => {
            let length = length.ok_or_else(|| Error::InvalidGeometry("torus side length L is required".into()))?;
            if !(length.is_finite() && length > 0.0) {
                return Err(Error::InvalidGeometry(format!("L = {length} must be positive")));
            }
            let h = length / n_nodes as f64;
            Ok(Grid {
                kind: GridKind::Periodic,
                spacing: h,
                nodes: (0..n_nodes).map(|i| i as f64 * h).collect(),
                cot: Vec::new(),
                sin: Vec::new(),
            })
        }
        BackendKind::ConformalSphere => {
            if length.is_some() {
                return Err(Error::InvalidGeometry("L is only meaningful for the flat torus".into()));
            }
            let h = PI / n_nodes as f64;
            let nodes: Vec<f64> = (0..n_nodes).map(|i| (i as f64 + 0.5) * h).collect();
            Ok(Grid {
                kind: GridKind::PolarStaggered,
                spacing: h,
                cot: nodes.iter().map(|t| t.cos() / t.sin()).collect(),
                sin: nodes.iter().map(|t| t.sin()).collect(),
                nodes,
            })
        }
    }
}

/// Grid-sampled real function on the manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    values: Vec<f64>,
}

impl ScalarField {
    /// Wraps node values, rejecting NaN or infinite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::CorruptedState(format!(
                "non-finite value {} at node {i}",
                values[i]
            )));
        }
        Ok(Self { values })
    }

    pub(crate) fn from_vec(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn constant(len: usize, value: f64) -> Self {
        Self {
            values: vec![value; len],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_vec(self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Self {
        Self::from_vec(self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect())
    }
}

impl std::ops::Index<usize> for ScalarField {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    FlatTorus {
        length: f64,
    },
    /// Conformal exponent φ(θ) of `g = e^{2φ} g_{S²}`.
    ConformalSphere {
        phi: ScalarField,
    },
}

/// Snapshot of the evolving metric at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricState {
    grid: Arc<Grid>,
    dim: usize,
    geometry: Geometry,
    time: f64,
}

/// Sign in front of the Ricci term of a Hessian deficit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RicciSign {
    Plus,
    Minus,
}

impl RicciSign {
    pub fn value(self) -> f64 {
        match self {
            RicciSign::Plus => 1.0,
            RicciSign::Minus => -1.0,
        }
    }
}

impl MetricState {
    pub fn flat_torus(grid: Arc<Grid>, dim: usize, time: f64) -> Result<Self> {
        if grid.kind != GridKind::Periodic {
            return Err(Error::InvalidGeometry("flat torus needs a periodic grid".into()));
        }
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGeometry(format!(
                "torus dimension n = {dim} must be 1, 2 or 3"
            )));
        }
        check_time(time)?;
        let length = grid.extent();
        Ok(Self {
            grid,
            dim,
            geometry: Geometry::FlatTorus { length },
            time,
        })
    }

    pub fn conformal_sphere(grid: Arc<Grid>, phi: ScalarField, time: f64) -> Result<Self> {
        if grid.kind != GridKind::PolarStaggered {
            return Err(Error::InvalidGeometry(
                "conformal sphere needs a polar staggered grid".into(),
            ));
        }
        if phi.len() != grid.node_count() {
            return Err(Error::Shape {
                expected: grid.node_count(),
                found: phi.len(),
            });
        }
        if !phi.is_finite() {
            return Err(Error::CorruptedState("conformal exponent is not finite".into()));
        }
        check_time(time)?;
        Ok(Self {
            grid,
            dim: 2,
            geometry: Geometry::ConformalSphere { phi },
            time,
        })
    }

    pub fn backend(&self) -> BackendKind {
        match self.geometry {
            Geometry::FlatTorus { .. } => BackendKind::FlatTorus,
            Geometry::ConformalSphere { .. } => BackendKind::ConformalSphere,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn spacing(&self) -> f64 {
        self.grid.spacing
    }

    /// Number of values in a field aligned with this state.
    pub fn field_len(&self) -> usize {
        match self.geometry {
            Geometry::FlatTorus { .. } => self.periodic().len(),
            Geometry::ConformalSphere { .. } => self.grid.node_count(),
        }
    }

    pub fn phi(&self) -> Option<&ScalarField> {
        match &self.geometry {
            Geometry::ConformalSphere { phi } => Some(phi),
            Geometry::FlatTorus { .. } => None,
        }
    }

    /// Same geometry with a new conformal exponent and clock.
    pub fn with_phi(&self, phi: ScalarField, time: f64) -> Result<Self> {
        match self.geometry {
            Geometry::ConformalSphere { .. } => Self::conformal_sphere(Arc::clone(&self.grid), phi, time),
            Geometry::FlatTorus { .. } => Err(Error::InvalidGeometry(
                "the flat torus has no conformal exponent".into(),
            )),
        }
    }

    pub fn with_time(&self, time: f64) -> Result<Self> {
        check_time(time)?;
        let mut next = self.clone();
        next.time = time;
        Ok(next)
    }

    pub fn zeros(&self) -> ScalarField {
        ScalarField::constant(self.field_len(), 0.0)
    }

    /// Samples `f(x)` at every node; `x` has one coordinate per axis (θ on the sphere).
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> ScalarField {
        match self.geometry {
            Geometry::ConformalSphere { .. } => {
                ScalarField::from_vec(self.grid.nodes.iter().map(|&t| f(&[t])).collect())
            }
            Geometry::FlatTorus { .. } => {
                let p = self.periodic();
                let mut x = vec![0.0; self.dim];
                ScalarField::from_vec(
                    (0..p.len())
                        .map(|i| {
                            for (axis, c) in p.coords(i).into_iter().enumerate() {
                                x[axis] = self.grid.nodes[c];
                            }
                            f(&x)
                        })
                        .collect(),
                )
            }
        }
    }

    /// Coordinates of node `idx`.
    pub fn node_position(&self, idx: usize) -> Vec<f64> {
        match self.geometry {
            Geometry::ConformalSphere { .. } => vec![self.grid.nodes[idx]],
            Geometry::FlatTorus { .. } => self
                .periodic()
                .coords(idx)
                .into_iter()
                .map(|c| self.grid.nodes[c])
                .collect(),
        }
    }

    pub(crate) fn periodic(&self) -> Periodic {
        Periodic {
            n_nodes: self.grid.node_count(),
            dim: self.dim,
        }
    }

    fn check_aligned(&self, a: &ScalarField) -> Result<()> {
        let expected = self.field_len();
        if a.len() != expected {
            return Err(Error::Shape {
                expected,
                found: a.len(),
            });
        }
        Ok(())
    }

    fn sphere_phi(&self) -> Result<&ScalarField> {
        match &self.geometry {
            Geometry::ConformalSphere { phi } => {
                if !phi.is_finite() {
                    return Err(Error::CorruptedState("conformal exponent is not finite".into()));
                }
                Ok(phi)
            }
            Geometry::FlatTorus { .. } => unreachable!("sphere_phi on a torus"),
        }
    }

    /// Largest diffusion coefficient of the Laplacian, scaled so that
    /// `dt = σ h² / D_max` has the same stability margin on every backend.
    ///
    /// On the sphere this is `max e^{-2φ}`. The torus Laplacian stacks one
    /// second difference per axis, so its stiffness grows with `n`; the factor
    /// `max(1, n/2)` keeps the RK4 stability bound for `n = 3`.
    pub fn max_diffusivity(&self) -> f64 {
        match &self.geometry {
            Geometry::FlatTorus { .. } => (self.dim as f64 / 2.0).max(1.0),
            Geometry::ConformalSphere { phi } => phi
                .values
                .iter()
                .map(|p| (-2.0 * p).exp())
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Smallest conformal factor `min e^{2φ}`; 1 on the torus.
    pub fn min_conformal_factor(&self) -> f64 {
        match &self.geometry {
            Geometry::FlatTorus { .. } => 1.0,
            Geometry::ConformalSphere { phi } => {
                phi.values.iter().map(|p| (2.0 * p).exp()).fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Scalar curvature. On the sphere `R = e^{-2φ}(2 - 2 Δ_{S²} φ)`.
    pub fn scalar_curvature(&self) -> Result<ScalarField> {
        match &self.geometry {
            Geometry::FlatTorus { .. } => Ok(self.zeros()),
            Geometry::ConformalSphere { .. } => {
                let phi = self.sphere_phi()?;
                let h = self.grid.spacing;
                let (d1, d2) = stencil::polar_derivatives(&phi.values, h);
                Ok(ScalarField::from_vec(
                    (0..phi.len())
                        .map(|i| {
                            let lap0 = d2[i] + self.grid.cot[i] * d1[i];
                            (-2.0 * phi.values[i]).exp() * (2.0 - 2.0 * lap0)
                        })
                        .collect(),
                ))
            }
        }
    }

    /// Laplace–Beltrami operator of the current metric.
    pub fn laplacian(&self, a: &ScalarField) -> Result<ScalarField> {
        self.check_aligned(a)?;
        let h = self.grid.spacing;
        match &self.geometry {
            Geometry::FlatTorus { .. } => {
                let p = self.periodic();
                let mut out = p.d2(&a.values, 0, h);
                for axis in 1..self.dim {
                    for (o, d) in out.iter_mut().zip(p.d2(&a.values, axis, h)) {
                        *o += d;
                    }
                }
                Ok(ScalarField::from_vec(out))
            }
            Geometry::ConformalSphere { .. } => {
                let phi = self.sphere_phi()?;
                let (d1, d2) = stencil::polar_derivatives(&a.values, h);
                Ok(ScalarField::from_vec(
                    (0..a.len())
                        .map(|i| (-2.0 * phi.values[i]).exp() * (d2[i] + self.grid.cot[i] * d1[i]))
                        .collect(),
                ))
            }
        }
    }

    /// Pointwise `g(∇a, ∇b)`.
    pub fn inner_grad(&self, a: &ScalarField, b: &ScalarField) -> Result<ScalarField> {
        self.check_aligned(a)?;
        self.check_aligned(b)?;
        let h = self.grid.spacing;
        match &self.geometry {
            Geometry::FlatTorus { .. } => {
                let p = self.periodic();
                let mut out = vec![0.0; a.len()];
                let same = std::ptr::eq(a, b);
                for axis in 0..self.dim {
                    let da = p.d1(&a.values, axis, h);
                    if same {
                        for (o, d) in out.iter_mut().zip(&da) {
                            *o += d * d;
                        }
                    } else {
                        let db = p.d1(&b.values, axis, h);
                        for i in 0..out.len() {
                            out[i] += da[i] * db[i];
                        }
                    }
                }
                Ok(ScalarField::from_vec(out))
            }
            Geometry::ConformalSphere { .. } => {
                let phi = self.sphere_phi()?;
                let (da, _) = stencil::polar_derivatives(&a.values, h);
                let db = if std::ptr::eq(a, b) {
                    da.clone()
                } else {
                    stencil::polar_derivatives(&b.values, h).0
                };
                Ok(ScalarField::from_vec(
                    (0..a.len())
                        .map(|i| (-2.0 * phi.values[i]).exp() * (da[i] * db[i]))
                        .collect(),
                ))
            }
        }
    }

    /// Pointwise `|∇a|²`; identical to `inner_grad(a, a)`.
    pub fn gradient_norm_sq(&self, a: &ScalarField) -> Result<ScalarField> {
        self.inner_grad(a, a)
    }

    /// Pointwise squared norm of `Hess a + sign·Rc − λ g`.
    ///
    /// On the sphere, in an orthonormal frame, the two diagonal entries are
    /// `e^{-2φ}(a_θθ − φ_θ a_θ)` and `e^{-2φ}(cot θ + φ_θ) a_θ`, each shifted by
    /// `sign·R/2 − λ`; the off-diagonal entry vanishes for axisymmetric data.
    /// The second entry is formed as `Δa` minus the first, so the two always sum
    /// to the discrete Laplacian.
    pub fn hessian_deficit_norm_sq(&self, a: &ScalarField, sign: RicciSign, lambda: f64) -> Result<ScalarField> {
        self.check_aligned(a)?;
        if !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("λ = {lambda} is not finite")));
        }
        let h = self.grid.spacing;
        match &self.geometry {
            Geometry::FlatTorus { .. } => {
                let p = self.periodic();
                let mut out = vec![0.0; a.len()];
                for axis in 0..self.dim {
                    let d2 = p.d2(&a.values, axis, h);
                    for i in 0..out.len() {
                        let e = d2[i] - lambda;
                        out[i] += e * e;
                    }
                }
                for q in 0..self.dim {
                    for r in (q + 1)..self.dim {
                        let mixed = p.d11(&a.values, q, r, h);
                        for i in 0..out.len() {
                            out[i] += 2.0 * mixed[i] * mixed[i];
                        }
                    }
                }
                Ok(ScalarField::from_vec(out))
            }
            Geometry::ConformalSphere { .. } => {
                let phi = self.sphere_phi()?;
                let r = self.scalar_curvature()?;
                let lap = self.laplacian(a)?;
                let (d1, d2) = stencil::polar_derivatives(&a.values, h);
                let (dphi, _) = stencil::polar_derivatives(&phi.values, h);
                let shift_scale = sign.value();
                Ok(ScalarField::from_vec(
                    (0..a.len())
                        .map(|i| {
                            let inv = (-2.0 * phi.values[i]).exp();
                            let hess_tt = inv * (d2[i] - dphi[i] * d1[i]);
                            let hess_pp = lap.values[i] - hess_tt;
                            let shift = shift_scale * r.values[i] / 2.0 - lambda;
                            let e1 = hess_tt + shift;
                            let e2 = hess_pp + shift;
                            e1 * e1 + e2 * e2
                        })
                        .collect(),
                ))
            }
        }
    }

    /// `∂φ/∂t = −R/2` on the sphere; zero on the stationary torus.
    pub fn ricci_flow_rhs(&self) -> Result<ScalarField> {
        match self.geometry {
            Geometry::FlatTorus { .. } => Ok(self.zeros()),
            Geometry::ConformalSphere { .. } => Ok(self.scalar_curvature()?.map(|r| -0.5 * r)),
        }
    }

    /// `∂R/∂t = Δ_g R + R²` for two-dimensional Ricci flow; zero on the torus.
    pub fn scalar_curvature_time_derivative(&self) -> Result<ScalarField> {
        match self.geometry {
            Geometry::FlatTorus { .. } => Ok(self.zeros()),
            Geometry::ConformalSphere { .. } => {
                let r = self.scalar_curvature()?;
                let lap = self.laplacian(&r)?;
                Ok(lap.zip_map(&r, |l, r| l + r * r))
            }
        }
    }

    /// Midpoint-rule integral of `a` against the Riemannian measure.
    pub fn integrate_measure(&self, a: &ScalarField) -> Result<f64> {
        self.check_aligned(a)?;
        let h = self.grid.spacing;
        match &self.geometry {
            Geometry::FlatTorus { .. } => Ok(a.values.iter().sum::<f64>() * h.powi(self.dim as i32)),
            Geometry::ConformalSphere { .. } => {
                let phi = self.sphere_phi()?;
                let sum: f64 = (0..a.len())
                    .map(|i| a.values[i] * (2.0 * phi.values[i]).exp() * self.grid.sin[i])
                    .sum();
                Ok(2.0 * PI * h * sum)
            }
        }
    }

    /// Linear (multilinear on tori) interpolation of `a` at position `x`.
    ///
    /// Torus coordinates wrap modulo L. Polar positions may lie anywhere in
    /// `[0, π]`; between the pole and the first node the mirror ghost makes the
    /// interpolant constant.
    pub fn interpolate(&self, a: &ScalarField, x: &[f64]) -> Result<f64> {
        self.check_aligned(a)?;
        if x.len() != self.dim_of_position() {
            return Err(Error::InvalidQuery(format!(
                "position has {} coordinates, expected {}",
                x.len(),
                self.dim_of_position()
            )));
        }
        let h = self.grid.spacing;
        let n = self.grid.node_count();
        match self.geometry {
            Geometry::ConformalSphere { .. } => {
                let theta = x[0];
                if !(0.0..=PI).contains(&theta) {
                    return Err(Error::InvalidQuery(format!("θ = {theta} outside [0, π]")));
                }
                let s = theta / h - 0.5;
                let lo = s.floor();
                let w = s - lo;
                let lo = lo as isize;
                let at = |i: isize| a.values[i.clamp(0, n as isize - 1) as usize];
                Ok((1.0 - w) * at(lo) + w * at(lo + 1))
            }
            Geometry::FlatTorus { length } => {
                let p = self.periodic();
                let mut base = vec![0usize; self.dim];
                let mut frac = vec![0.0; self.dim];
                for axis in 0..self.dim {
                    let s = x[axis].rem_euclid(length) / h;
                    let lo = s.floor();
                    frac[axis] = s - lo;
                    base[axis] = (lo as usize) % n;
                }
                let mut total = 0.0;
                for corner in 0..(1usize << self.dim) {
                    let mut weight = 1.0;
                    let mut coords = base.clone();
                    for axis in 0..self.dim {
                        if corner >> axis & 1 == 1 {
                            coords[axis] = (coords[axis] + 1) % n;
                            weight *= frac[axis];
                        } else {
                            weight *= 1.0 - frac[axis];
                        }
                    }
                    total += weight * a.values[p.index(&coords)];
                }
                Ok(total)
            }
        }
    }

    /// Number of coordinates of a position: `n` on the torus, 1 (θ) on the sphere.
    pub fn dim_of_position(&self) -> usize {
        match self.geometry {
            Geometry::FlatTorus { .. } => self.dim,
            Geometry::ConformalSphere { .. } => 1,
        }
    }
}

fn check_time(time: f64) -> Result<()> {
    if !(time.is_finite() && time >= 0.0) {
        return Err(Error::InvalidTime(format!("t = {time} must be finite and nonnegative")));
    }
    Ok(())
}

#[cfg(test)]
mod tests;
