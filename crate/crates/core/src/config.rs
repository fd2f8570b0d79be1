//! JSON experiment configuration: the graph as a vertex count plus edge
//! triples (self-loops allowed), the drift vectors, and run options.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{GraphPotentialParams, SquareMatrix};
use crate::paths::SdeOptions;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphSpec {
    pub vertices: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    /// (i, j, weight) with 0-based vertex ids; i == j is a self-loop.
    pub edges: Vec<(usize, usize, f64)>,
}

fn default_seed() -> u64 {
    1
}
fn default_replicas() -> usize {
    10_000
}
fn default_dt() -> f64 {
    1e-3
}
fn default_du() -> f64 {
    1e-3
}
fn default_u_max() -> f64 {
    12.0
}
fn default_u0() -> f64 {
    1.0
}
fn default_alpha() -> f64 {
    0.01
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub graph: GraphSpec,
    pub theta: Vec<f64>,
    pub eta: Vec<f64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_du")]
    pub du: f64,
    #[serde(default = "default_u_max")]
    pub u_max: f64,
    #[serde(default = "default_u0")]
    pub u0: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_grid: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.replicas == 0 {
            return Err(Error::InvalidParam("replicas must be >= 1".into()));
        }
        for (name, v) in [("dt", self.dt), ("du", self.du), ("u_max", self.u_max), ("u0", self.u0)]
        {
            if !(v > 0.0) {
                return Err(Error::InvalidParam(format!("{name} must be > 0")));
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParam("alpha must be in (0, 1)".into()));
        }
        self.params().map(|_| ())
    }

    /// Build and validate the graph parameters.
    pub fn params(&self) -> Result<GraphPotentialParams> {
        let n = self.graph.vertices;
        let mut w = SquareMatrix::zeros(n);
        for (k, &(i, j, weight)) in self.graph.edges.iter().enumerate() {
            if i >= n || j >= n {
                return Err(Error::InvalidParam(format!(
                    "edges[{k}] references vertex {} but vertices = {n}",
                    i.max(j)
                )));
            }
            if !(weight >= 0.0) || !weight.is_finite() {
                return Err(Error::InvalidParam(format!("edges[{k}] weight must be finite and >= 0")));
            }
            w.set(i, j, weight);
            w.set(j, i, weight);
        }
        match &self.graph.labels {
            Some(labels) => GraphPotentialParams::with_labels(
                w,
                self.theta.clone(),
                self.eta.clone(),
                labels.clone(),
            ),
            None => GraphPotentialParams::new(w, self.theta.clone(), self.eta.clone()),
        }
    }

    pub fn sde_options(&self) -> SdeOptions {
        SdeOptions::with_dt(self.dt)
    }

    /// The two-vertex reference configuration used throughout the
    /// verification suite.
    pub fn reference_two_vertex() -> Self {
        ExperimentConfig {
            graph: GraphSpec { vertices: 2, labels: None, edges: vec![(0, 1, 1.0)] },
            theta: vec![1.0, 1.0],
            eta: vec![0.0, 1.0],
            seed: default_seed(),
            replicas: default_replicas(),
            dt: default_dt(),
            du: default_du(),
            u_max: default_u_max(),
            u0: default_u0(),
            alpha: default_alpha(),
            lambda_grid: None,
            z: None,
            out: None,
        }
    }
}

/// 17-significant-digit float formatting for reproducible CSV artifacts.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_params() {
        let cfg = ExperimentConfig::reference_two_vertex();
        let js = serde_json::to_string_pretty(&cfg).unwrap();
        let back = ExperimentConfig::from_json(&js).unwrap();
        let p = back.params().unwrap();
        assert_eq!(p.n(), 2);
        assert_eq!(p.w().get(0, 1), 1.0);
    }

    #[test]
    fn corrupted_config_names_field() {
        let mut cfg = ExperimentConfig::reference_two_vertex();
        cfg.theta[0] = 0.0;
        let js = serde_json::to_string(&cfg).unwrap();
        let err = ExperimentConfig::from_json(&js).unwrap_err();
        assert!(err.to_string().contains("theta[0]"), "{err}");
    }

    #[test]
    fn bad_edge_index_named() {
        let mut cfg = ExperimentConfig::reference_two_vertex();
        cfg.graph.edges.push((0, 7, 1.0));
        let js = serde_json::to_string(&cfg).unwrap();
        let err = ExperimentConfig::from_json(&js).unwrap_err();
        assert!(err.to_string().contains("edges[1]"), "{err}");
    }

    #[test]
    fn float_formatting_has_17_digits() {
        let s = fmt_f64(std::f64::consts::PI);
        assert!(s.starts_with("3.1415926535897931"), "{s}");
    }
}
