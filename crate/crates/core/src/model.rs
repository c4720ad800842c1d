//! Trained element models and their JSON persistence.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, Vector2};
use serde::{Deserialize, Serialize};

use crate::env::{ElementShape, MotionProfile, TrainingRange};
use crate::error::{Error, Result};
use crate::gp::{GpModel, KernelParams};

/// The element a model was trained against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementInfo {
    pub shape: ElementShape,
    pub motion: MotionProfile,
}

/// Training provenance stored alongside the means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingInfo {
    pub epochs: usize,
    pub max_steps: usize,
    pub lambda: f64,
    pub dt: f64,
    pub seed: u64,
    /// State-cost constant used in training; the composer needs it to
    /// rebuild the value derivative.
    #[serde(default)]
    pub qc: f64,
    /// Training-range radius; outside it the model is extrapolating.
    pub radius: f64,
    #[serde(default)]
    pub eta: f64,
    #[serde(default)]
    pub sigma_explore: f64,
    #[serde(default)]
    pub u_max: f64,
    #[serde(default)]
    pub w_term: f64,
    #[serde(default)]
    pub init_value: f64,
}

/// One trained actor-critic pair.
#[derive(Debug, Clone)]
pub struct ElementModel {
    pub gp: GpModel,
    pub element: ElementInfo,
    pub training: TrainingInfo,
}

#[derive(Serialize, Deserialize)]
struct KernelFile {
    #[serde(rename = "type")]
    kind: String,
    lengthscale: f64,
    variance: f64,
    jitter: f64,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    state_dim: usize,
    control_dim: usize,
    kernel: KernelFile,
    base_points: Vec<Vec<f64>>,
    mu_v: Vec<f64>,
    mu_u: Vec<Vec<f64>>,
    element: ElementInfo,
    training: TrainingInfo,
}

impl ElementModel {
    pub fn range(&self) -> TrainingRange {
        TrainingRange { radius: self.training.radius }
    }

    pub fn value(&self, x: &Vector2<f64>) -> f64 {
        self.gp.predict_value(x.as_slice()).expect("2-D model")
    }

    pub fn policy(&self, x: &Vector2<f64>) -> Vector2<f64> {
        let u = self.gp.predict_policy(x.as_slice()).expect("2-D model");
        Vector2::new(u[0], u[1])
    }

    pub fn value_grad(&self, x: &Vector2<f64>) -> Vector2<f64> {
        let g = self.gp.predict_value_grad(x.as_slice()).expect("2-D model");
        Vector2::new(g[0], g[1])
    }

    pub fn value_policy(&self, x: &Vector2<f64>) -> (f64, Vector2<f64>) {
        let (v, u) = self.gp.predict_value_policy(x.as_slice()).expect("2-D model");
        (v, Vector2::new(u[0], u[1]))
    }

    /// Largest stored value mean.
    pub fn max_base_value(&self) -> f64 {
        self.gp.mu_v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Reflection through the y axis: a model for the mirrored element with
    /// mirrored motion. Exact, since the kernel is isotropic.
    pub fn mirrored_x(&self) -> Result<Self> {
        let mut bp = self.gp.base_points().clone();
        bp.column_mut(0).neg_mut();
        let mut gp = GpModel::build(bp, self.gp.control_dim(), *self.gp.kernel())?;
        gp.mu_v = self.gp.mu_v.clone();
        gp.mu_u = self.gp.mu_u.clone();
        gp.mu_u.column_mut(0).neg_mut();
        let v = self.element.motion.velocity;
        Ok(Self {
            gp,
            element: ElementInfo {
                shape: self.element.shape.mirrored_x(),
                motion: MotionProfile::constant(-v.x, v.y),
            },
            training: self.training.clone(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let gp = &self.gp;
        let k = gp.kernel();
        let bp = gp.base_points();
        let file = ModelFile {
            state_dim: gp.state_dim(),
            control_dim: gp.control_dim(),
            kernel: KernelFile {
                kind: "rbf".into(),
                lengthscale: k.lengthscale,
                variance: k.variance,
                jitter: k.jitter,
            },
            base_points: bp.row_iter().map(|r| r.iter().copied().collect()).collect(),
            mu_v: gp.mu_v.iter().copied().collect(),
            mu_u: gp.mu_u.row_iter().map(|r| r.iter().copied().collect()).collect(),
            element: self.element.clone(),
            training: self.training.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: ModelFile = serde_json::from_str(text)?;
        if f.kernel.kind != "rbf" {
            return Err(Error::Model(format!("unsupported kernel type {:?}", f.kernel.kind)));
        }
        let n = f.base_points.len();
        if f.mu_v.len() != n || f.mu_u.len() != n {
            return Err(Error::Model(format!(
                "base_points ({n}), mu_v ({}) and mu_u ({}) lengths differ",
                f.mu_v.len(),
                f.mu_u.len()
            )));
        }
        if f.base_points.iter().any(|p| p.len() != f.state_dim) {
            return Err(Error::Model("base point dimension differs from state_dim".into()));
        }
        if f.mu_u.iter().any(|p| p.len() != f.control_dim) {
            return Err(Error::Model("mu_u row dimension differs from control_dim".into()));
        }
        f.element.shape.validate()?;
        let kernel = KernelParams {
            lengthscale: f.kernel.lengthscale,
            variance: f.kernel.variance,
            jitter: f.kernel.jitter,
        };
        let bp = DMatrix::from_fn(n, f.state_dim, |i, j| f.base_points[i][j]);
        let mut gp = GpModel::build(bp, f.control_dim, kernel)?;
        gp.mu_v = nalgebra::DVector::from_vec(f.mu_v);
        gp.mu_u = DMatrix::from_fn(n, f.control_dim, |i, j| f.mu_u[i][j]);
        Ok(Self { gp, element: f.element, training: f.training })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Model(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
