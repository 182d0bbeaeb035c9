//! Scenario configuration: the JSON document consumed by the command line,
//! its validation rules and its content digest.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::flow::EquationKind;
use crate::geometry::{build_grid, BackendKind, Grid, MetricState, ScalarField};
use crate::harnack::TheoremId;
use crate::pathopt::PathQuery;

pub const DEFAULT_SIGMA: f64 = 0.25;

/// Largest accepted dt safety factor. With the diffusivity scaling of
/// [`MetricState::max_diffusivity`] the stiffest discrete Laplacian mode then
/// stays inside the RK4 stability interval `[-2.78, 0]`.
pub const SIGMA_MAX: f64 = 0.34;

/// Fraction of `T_end` used as the default monitoring start.
pub const DEFAULT_WINDOW_START: f64 = 0.05;

/// `a + b cos(k s)` where `s` is θ on the sphere and `2π x_d / L` (summed over
/// axes) on the torus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeFamily {
    pub a: f64,
    #[serde(default)]
    pub b: f64,
    #[serde(default)]
    pub k: u32,
}

impl ModeFamily {
    pub const fn constant(a: f64) -> Self {
        Self { a, b: 0.0, k: 0 }
    }

    pub const fn new(a: f64, b: f64, k: u32) -> Self {
        Self { a, b, k }
    }

    /// Samples the family on the nodes of `state`.
    pub fn sample(&self, state: &MetricState) -> ScalarField {
        let k = self.k as f64;
        match state.backend() {
            BackendKind::ConformalSphere => state.sample(|x| self.a + self.b * (k * x[0]).cos()),
            BackendKind::FlatTorus => {
                let scale = 2.0 * std::f64::consts::PI * k / state.grid().extent();
                state.sample(|x| self.a + self.b * x.iter().map(|xi| (scale * xi).cos()).sum::<f64>())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub backend: BackendKind,
    #[serde(default = "default_dim")]
    pub n: usize,
    #[serde(rename = "N")]
    pub grid_size: usize,
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi0: Option<ModeFamily>,
    pub equation: EquationKind,
    /// Initial data for forward runs; terminal data `f_T = e^{-u0}` for conjugate runs.
    pub u0: ModeFamily,
    #[serde(rename = "T_end")]
    pub t_end: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_min: Option<f64>,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Keep every k-th integrator step in the trajectory (the final step is always kept).
    #[serde(default = "default_store_every")]
    pub store_every: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub theorems: Vec<TheoremId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub path_queries: Vec<PathQuery>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

fn default_dim() -> usize {
    2
}

fn default_sigma() -> f64 {
    DEFAULT_SIGMA
}

fn default_store_every() -> usize {
    1
}

impl ScenarioConfig {
    /// Minimal torus scenario; adjust fields afterwards.
    pub fn torus(n: usize, grid_size: usize, equation: EquationKind, u0: ModeFamily, t_end: f64) -> Self {
        Self {
            backend: BackendKind::FlatTorus,
            n,
            grid_size,
            length: Some(2.0 * std::f64::consts::PI),
            phi0: None,
            equation,
            u0,
            t_end,
            t_min: None,
            sigma: DEFAULT_SIGMA,
            store_every: 1,
            theorems: Vec::new(),
            path_queries: Vec::new(),
            output_dir: None,
        }
    }

    /// Minimal sphere scenario; adjust fields afterwards.
    pub fn sphere(grid_size: usize, phi0: ModeFamily, equation: EquationKind, u0: ModeFamily, t_end: f64) -> Self {
        Self {
            backend: BackendKind::ConformalSphere,
            n: 2,
            grid_size,
            length: None,
            phi0: Some(phi0),
            equation,
            u0,
            t_end,
            t_min: None,
            sigma: DEFAULT_SIGMA,
            store_every: 1,
            theorems: Vec::new(),
            path_queries: Vec::new(),
            output_dir: None,
        }
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let config: Self = serde_json::from_slice(bytes).map_err(|e| {
            let field = extract_field(&e.to_string()).unwrap_or_else(|| "document".into());
            Error::config(&field, e.to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Monitoring window start, defaulting to `0.05 T_end`.
    pub fn window_start(&self) -> f64 {
        self.t_min.unwrap_or(DEFAULT_WINDOW_START * self.t_end)
    }

    pub fn with_grid_size(&self, grid_size: usize) -> Self {
        let mut c = self.clone();
        c.grid_size = grid_size;
        c
    }

    pub fn validate(&self) -> Result<()> {
        match self.backend {
            BackendKind::FlatTorus => {
                if !(1..=3).contains(&self.n) {
                    return Err(Error::config(
                        "n",
                        format!("torus dimension {} must be 1, 2 or 3", self.n),
                    ));
                }
                match self.length {
                    None => return Err(Error::config("L", "torus side length is required")),
                    Some(l) if !(l.is_finite() && l > 0.0) => {
                        return Err(Error::config("L", format!("side length {l} must be positive")))
                    }
                    _ => {}
                }
                if self.phi0.is_some() {
                    return Err(Error::config("phi0", "the flat torus has no conformal exponent"));
                }
            }
            BackendKind::ConformalSphere => {
                if self.n != 2 {
                    return Err(Error::config("n", "the conformal sphere has dimension 2"));
                }
                if self.length.is_some() {
                    return Err(Error::config("L", "side length is only meaningful for the torus"));
                }
            }
        }
        if self.grid_size < crate::geometry::MIN_NODES {
            return Err(Error::config(
                "N",
                format!(
                    "{} nodes is below the minimum of {}",
                    self.grid_size,
                    crate::geometry::MIN_NODES
                ),
            ));
        }
        for (name, family) in [("u0", Some(self.u0)), ("phi0", self.phi0)] {
            if let Some(f) = family {
                if !(f.a.is_finite() && f.b.is_finite()) {
                    return Err(Error::config(name, "coefficients must be finite"));
                }
            }
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(Error::config(
                "T_end",
                format!("T_end = {} must be positive", self.t_end),
            ));
        }
        let t_min = self.window_start();
        if !(t_min.is_finite() && t_min > 0.0) {
            return Err(Error::config("t_min", format!("t_min = {t_min} must be positive")));
        }
        if self.t_end <= t_min {
            return Err(Error::config(
                "T_end",
                format!("T_end = {} must exceed t_min = {t_min}", self.t_end),
            ));
        }
        if !(self.sigma > 0.0 && self.sigma <= SIGMA_MAX) {
            return Err(Error::config(
                "sigma",
                format!("sigma = {} must lie in (0, {SIGMA_MAX}]", self.sigma),
            ));
        }
        for q in &self.path_queries {
            q.validate_times()
                .map_err(|e| Error::config("path_queries", e.to_string()))?;
        }
        if self.store_every == 0 {
            return Err(Error::config("store_every", "must be at least 1"));
        }
        if self.backend == BackendKind::ConformalSphere {
            let state = self.initial_metric()?;
            let min_r = state.scalar_curvature()?.min();
            if min_r < 0.0 {
                return Err(Error::config(
                    "phi0",
                    format!("initial metric has negative scalar curvature (min R = {min_r})"),
                ));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        build_grid(self.backend, self.grid_size, self.length)
    }

    /// Metric at t = 0.
    pub fn initial_metric(&self) -> Result<MetricState> {
        let grid = Arc::new(self.grid()?);
        match self.backend {
            BackendKind::FlatTorus => MetricState::flat_torus(grid, self.n, 0.0),
            BackendKind::ConformalSphere => {
                let family = self.phi0.unwrap_or(ModeFamily::constant(0.0));
                let k = family.k as f64;
                let phi = grid
                    .nodes()
                    .iter()
                    .map(|&t| family.a + family.b * (k * t).cos())
                    .collect();
                MetricState::conformal_sphere(grid, ScalarField::new(phi)?, 0.0)
            }
        }
    }

    /// Hex SHA-256 of the canonical JSON form (sorted keys, no whitespace).
    pub fn digest(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        digest_value(&value)
    }
}

/// Canonical JSON text: object keys sorted, no insignificant whitespace.
pub fn canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_canonical(value, &mut out);
    out
}

fn write_canonical(value: &Value, out: &mut String) {
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_canonical(&map[k], out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, v) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(v, out);
            }
            out.push(']');
        }
        other => out.push_str(&other.to_string()),
    }
}

pub fn digest_value(value: &Value) -> String {
    hex::encode(Sha256::digest(canonical_json(value).as_bytes()))
}

fn extract_field(message: &str) -> Option<String> {
    // serde messages look like "missing field `T_end`" or "unknown field `foo`".
    let start = message.find('`')? + 1;
    let end = start + message[start..].find('`')?;
    Some(message[start..end].to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TORUS: &str = r#"{"backend":"flat_torus","n":1,"N":32,"L":6.283185307179586,
        "equation":"log_heat","u0":{"a":-1.0,"b":0.1,"k":1},"T_end":2.0}"#;

    #[test]
    fn parses_and_defaults() {
        let c = ScenarioConfig::from_json(TORUS.as_bytes()).unwrap();
        assert_eq!(c.sigma, DEFAULT_SIGMA);
        assert_eq!(c.window_start(), 0.1);
        assert_eq!(c.store_every, 1);
    }

    #[test]
    fn digest_ignores_key_order_and_whitespace() {
        let reordered = r#"{ "T_end": 2.0, "u0": {"k":1, "b":0.1, "a":-1.0}, "equation":"log_heat",
            "L":6.283185307179586, "N":32, "n":1, "backend":"flat_torus" }"#;
        let a = ScenarioConfig::from_json(TORUS.as_bytes()).unwrap();
        let b = ScenarioConfig::from_json(reordered.as_bytes()).unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
        let c = a.with_grid_size(64);
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn canonical_form_sorts_nested_keys() {
        let v: Value = serde_json::from_str(r#"{"b":{"z":1,"a":[{"y":2,"x":3}]},"a":"s"}"#).unwrap();
        assert_eq!(canonical_json(&v), r#"{"a":"s","b":{"a":[{"x":3,"y":2}],"z":1}}"#);
    }

    #[test]
    fn window_must_be_inside_run() {
        let mut c = ScenarioConfig::from_json(TORUS.as_bytes()).unwrap();
        c.t_min = Some(2.5);
        match c.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "T_end"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_fields() {
        let bad = TORUS.replace("\"N\":32", "\"N\":7");
        assert!(matches!(ScenarioConfig::from_json(bad.as_bytes()), Err(Error::Config { field, .. }) if field == "N"));
        let bad = TORUS.replace(",\"L\":6.283185307179586", "");
        assert!(matches!(ScenarioConfig::from_json(bad.as_bytes()), Err(Error::Config { field, .. }) if field == "L"));
        let bad = TORUS.replace("\"T_end\":2.0", "\"T_end\":2.0,\"bogus\":1");
        assert!(
            matches!(ScenarioConfig::from_json(bad.as_bytes()), Err(Error::Config { field, .. }) if field == "bogus")
        );
        let bad = TORUS.replace(",\"T_end\":2.0", "");
        assert!(
            matches!(ScenarioConfig::from_json(bad.as_bytes()), Err(Error::Config { field, .. }) if field == "T_end")
        );
    }

    #[test]
    fn sphere_rejects_negative_initial_curvature() {
        // φ = 0.6 cos 2θ: R ∝ 4.4 + 7.2 cos 2θ changes sign.
        let c = ScenarioConfig::sphere(
            32,
            ModeFamily::new(0.0, 0.6, 2),
            EquationKind::LogHeat,
            ModeFamily::constant(0.0),
            0.4,
        );
        assert!(matches!(c.validate(), Err(Error::Config { field, .. }) if field == "phi0"));
        let ok = ScenarioConfig::sphere(
            32,
            ModeFamily::new(0.0, 0.05, 1),
            EquationKind::LogHeat,
            ModeFamily::constant(0.0),
            0.4,
        );
        ok.validate().unwrap();
    }

    #[test]
    fn torus_mode_family_sums_over_axes() {
        let c = ScenarioConfig::torus(2, 8, EquationKind::LogHeat, ModeFamily::new(1.0, 0.5, 1), 1.0);
        let m = c.initial_metric().unwrap();
        let u = c.u0.sample(&m);
        assert_eq!(u.len(), 64);
        assert!((u[0] - 2.0).abs() < 1e-15);
    }
}
