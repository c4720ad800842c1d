//! Model-free continuous-time actor-critic.
//!
//! Two estimates of the differential advantage are kept consistent:
//!
//! ```text
//! critic: A_c(x, u) = 1/2 |u|^2 + q_c + grad V(x) . xdot - lambda V(x)
//! actor:  A_a(x, u) = 1/2 |u - u*(x)|^2
//! loss    = 1/2 (A_a - A_c)^2
//! ```
//!
//! Only `(x, xdot, u)` enter the loss, so the dynamics never have to be known.

use nalgebra::{DMatrix, DVector, Vector2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::env::{
    rollout_from, sample_initial, Control, ElementShape, Event, MotionProfile, RelativeState, RolloutConfig, Sample,
    TrainingRange,
    XdotMode, DEFAULT_DT,
};
use crate::error::{Error, Result};
use crate::gp::{lattice_in_disc, GpModel, KernelParams, Weights};
use crate::model::{ElementInfo, ElementModel, TrainingInfo};

/// Running cost `1/2 |u|^2 + q_c`, discounted at rate `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub lambda: f64,
    pub qc: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        Self { lambda: 0.1, qc: 0.0 }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        if self.lambda >= 0.0 && self.qc >= 0.0 && self.lambda.is_finite() && self.qc.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!("cost parameters must be non-negative: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub max_steps: usize,
    pub eta: f64,
    pub sigma_explore: f64,
    pub u_max: f64,
    pub w_term: f64,
    pub seed: u64,
    pub dt: f64,
    pub kernel: KernelParams,
    /// Base-point lattice spacing.
    pub spacing: f64,
    pub xdot_mode: XdotMode,
    /// Over the first `curriculum_epochs` epochs the start disc grows linearly
    /// from one lengthscale beyond the element to the full range. 0 disables it.
    #[serde(default)]
    pub curriculum_epochs: usize,
    /// Initial value mean at every base point. `q_c / lambda` is the cost of
    /// never arriving.
    #[serde(default)]
    pub init_value: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20_000,
            max_steps: 100,
            eta: 1e-2,
            sigma_explore: 0.5,
            u_max: 1.0,
            w_term: 10.0,
            seed: 0,
            dt: DEFAULT_DT,
            kernel: KernelParams::default(),
            spacing: 1.0,
            xdot_mode: XdotMode::Exact,
            curriculum_epochs: 0,
            init_value: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if self.epochs == 0 || self.max_steps == 0 {
            return Err(Error::Config("epochs and max_steps must be at least 1".into()));
        }
        if !(pos(self.eta) && pos(self.sigma_explore) && pos(self.u_max) && pos(self.w_term) && pos(self.dt)) {
            return Err(Error::Config(format!(
                "eta, sigma_explore, u_max, w_term and dt must be positive: {self:?}"
            )));
        }
        if !self.init_value.is_finite() {
            return Err(Error::NonFinite("init_value"));
        }
        if !pos(self.spacing) {
            return Err(Error::Config("base-point spacing must be positive".into()));
        }
        self.kernel.validate()
    }
}

/// The element to learn, in its own coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementConfig {
    pub shape: ElementShape,
    pub motion: MotionProfile,
    pub range: TrainingRange,
}

/// Everything the loss needs at one sample, from a single weight evaluation.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub weights: Weights,
    pub value: f64,
    pub value_grad: DVector<f64>,
    pub policy: DVector<f64>,
    pub actor: f64,
    pub critic: f64,
}

impl Evaluation {
    /// `A_actor - A_critic`, the HJB residual at this sample.
    pub fn residual(&self) -> f64 {
        self.actor - self.critic
    }

    pub fn loss(&self) -> f64 {
        0.5 * self.residual().powi(2)
    }
}

pub fn evaluate(model: &GpModel, cost: &CostParams, s: &Sample) -> Result<Evaluation> {
    let weights = model.weights(s.x.as_slice())?;
    let value = weights.j.dot(&model.mu_v);
    let value_grad = &weights.jprime * &model.mu_v;
    let policy = model.mu_u.tr_mul(&weights.j);
    let u = DVector::from_column_slice(s.u.as_slice());
    let xdot = DVector::from_column_slice(s.xdot.as_slice());
    let critic = 0.5 * u.norm_squared() + cost.qc + value_grad.dot(&xdot) - cost.lambda * value;
    let actor = 0.5 * (&u - &policy).norm_squared();
    Ok(Evaluation { weights, value, value_grad, policy, actor, critic })
}

pub fn advantage_critic(model: &GpModel, cost: &CostParams, s: &Sample) -> Result<f64> {
    let v = model.predict_value(s.x.as_slice())?;
    let g = model.predict_value_grad(s.x.as_slice())?;
    let xdot = DVector::from_column_slice(s.xdot.as_slice());
    Ok(0.5 * s.u.norm_squared() + cost.qc + g.dot(&xdot) - cost.lambda * v)
}

pub fn advantage_actor(model: &GpModel, s: &Sample) -> Result<f64> {
    let p = model.predict_policy(s.x.as_slice())?;
    let u = DVector::from_column_slice(s.u.as_slice());
    Ok(0.5 * (u - p).norm_squared())
}

pub fn loss(model: &GpModel, cost: &CostParams, s: &Sample) -> Result<f64> {
    Ok(evaluate(model, cost, s)?.loss())
}

/// Exact partials of the loss with respect to `mu_v` and `mu_u`.
pub fn gradients(model: &GpModel, cost: &CostParams, s: &Sample) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let e = evaluate(model, cost, s)?;
    Ok(gradients_from(&e, cost, s))
}

pub fn gradients_from(e: &Evaluation, cost: &CostParams, s: &Sample) -> (DVector<f64>, DMatrix<f64>) {
    let delta = e.residual();
    let xdot = DVector::from_column_slice(s.xdot.as_slice());
    let mut d_v = e.weights.jprime.tr_mul(&xdot);
    d_v.axpy(cost.lambda, &e.weights.j, -1.0);
    d_v *= delta;
    let u = DVector::from_column_slice(s.u.as_slice());
    let du_dir = u - &e.policy;
    let d_u = &e.weights.j * du_dir.transpose() * (-delta);
    (d_v, d_u)
}

/// Gradient of `1/2 w_term V(x_term)^2` with respect to `mu_v`.
pub fn terminal_anchor_gradient(model: &GpModel, x_term: &RelativeState, w_term: f64) -> Result<DVector<f64>> {
    let j = model.value_weights(x_term.as_slice())?;
    let v = j.dot(&model.mu_v);
    Ok(j * (w_term * v))
}

/// Rescale onto the ball `|u| <= u_max` if needed.
pub fn clip_to_ball(u: Control, u_max: f64) -> Control {
    let n = u.norm();
    if n > u_max {
        u * (u_max / n)
    } else {
        u
    }
}

/// Current actor plus isotropic Gaussian noise, clipped to the input ball.
pub fn exploration_policy<R: Rng + ?Sized>(
    model: &GpModel,
    x: &RelativeState,
    sigma: f64,
    u_max: f64,
    rng: &mut R,
) -> Control {
    let p = model.predict_policy(x.as_slice()).expect("2-D model");
    let mut u = Vector2::new(p[0], p[1]);
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).expect("finite sigma");
        u.x += normal.sample(rng);
        u.y += normal.sample(rng);
    }
    clip_to_ball(u, u_max)
}

/// Sum of sample losses over a dataset; anchor terms are not included.
pub fn total_loss(model: &GpModel, cost: &CostParams, samples: &[Sample]) -> Result<f64> {
    samples
        .iter()
        .filter(|s| s.event == Event::None)
        .map(|s| loss(model, cost, s))
        .sum()
}

/// One full-batch step along the mean gradient of the HJB-residual loss.
pub fn batch_step(model: &mut GpModel, cost: &CostParams, samples: &[Sample], eta: f64) -> Result<()> {
    let n = model.num_points();
    let mut d_v = DVector::zeros(n);
    let mut d_u = DMatrix::zeros(n, model.control_dim());
    let mut count = 0usize;
    for s in samples.iter().filter(|s| s.event == Event::None) {
        let (gv, gu) = gradients(model, cost, s)?;
        d_v += gv;
        d_u += gu;
        count += 1;
    }
    if count == 0 {
        return Ok(());
    }
    let scale = 1.0 / count as f64;
    model.apply_gradients(&(d_v * scale), &(d_u * scale), eta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean `|A_actor - A_critic|` over the epoch's non-terminal samples.
    pub mean_abs_residual: f64,
    /// Cumulative count of episodes ended by contact.
    pub episodes_terminated_contact: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainStatus {
    Completed,
    /// Training stopped; the model is the last good one.
    Aborted { epoch: usize, reason: String },
}

#[derive(Debug, Clone)]
pub struct Training {
    pub model: ElementModel,
    pub history: Vec<EpochStats>,
    pub status: TrainStatus,
}

/// Fresh model on the default lattice, value means at `init_value`.
pub fn initial_model(element: &ElementConfig, cfg: &TrainConfig) -> Result<GpModel> {
    let pts = lattice_in_disc(element.range.radius, cfg.spacing);
    let mut gp = GpModel::from_points(&pts, 2, cfg.kernel)?;
    gp.mu_v.fill(cfg.init_value);
    Ok(gp)
}

pub fn train(element: &ElementConfig, cost: &CostParams, cfg: &TrainConfig) -> Result<Training> {
    let gp = initial_model(element, cfg)?;
    train_from(gp, element, cost, cfg)
}

/// Train starting from an existing GP (base points are kept).
pub fn train_from(mut gp: GpModel, element: &ElementConfig, cost: &CostParams, cfg: &TrainConfig) -> Result<Training> {
    element.shape.validate()?;
    element.range.validate(&element.shape)?;
    if !element.motion.is_finite() {
        return Err(Error::NonFinite("element motion"));
    }
    cost.validate()?;
    cfg.validate()?;

    let rollout_cfg = RolloutConfig {
        shape: element.shape.clone(),
        motion: element.motion,
        range: element.range,
        dt: cfg.dt,
        max_steps: cfg.max_steps,
        xdot_mode: cfg.xdot_mode,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut contacts = 0usize;
    let mut status = TrainStatus::Completed;

    for epoch in 0..cfg.epochs {
        let start_range = start_range(element, cfg, epoch);
        let x0 = sample_initial(&element.shape, &start_range, &mut rng)?;
        let samples = rollout_from(
            x0,
            |x, r: &mut ChaCha8Rng| exploration_policy(&gp, x, cfg.sigma_explore, cfg.u_max, r),
            &rollout_cfg,
            &mut rng,
        )?;
        let last_good = gp.clone();
        match train_episode(&mut gp, cost, cfg, &samples) {
            Ok((residual, contact)) => {
                contacts += usize::from(contact);
                history.push(EpochStats { epoch, mean_abs_residual: residual, episodes_terminated_contact: contacts });
            }
            Err(reason) => {
                gp = last_good;
                status = TrainStatus::Aborted { epoch, reason };
                break;
            }
        }
    }

    let model = ElementModel {
        gp,
        element: ElementInfo { shape: element.shape.clone(), motion: element.motion },
        training: TrainingInfo {
            epochs: history.len(),
            max_steps: cfg.max_steps,
            lambda: cost.lambda,
            dt: cfg.dt,
            seed: cfg.seed,
            qc: cost.qc,
            radius: element.range.radius,
            eta: cfg.eta,
            sigma_explore: cfg.sigma_explore,
            u_max: cfg.u_max,
            w_term: cfg.w_term,
            init_value: cfg.init_value,
        },
    };
    Ok(Training { model, history, status })
}

/// Disc the episode start is drawn from at `epoch`.
pub fn start_range(element: &ElementConfig, cfg: &TrainConfig, epoch: usize) -> TrainingRange {
    let full = element.range.radius;
    if epoch >= cfg.curriculum_epochs {
        return element.range;
    }
    let r0 = (element.shape.circumradius() + cfg.kernel.lengthscale).min(full);
    let frac = epoch as f64 / cfg.curriculum_epochs as f64;
    TrainingRange { radius: r0 + (full - r0) * frac }
}

/// Per-sample updates over one episode. Returns `(mean |residual|, ended in contact)`.
fn train_episode(
    gp: &mut GpModel,
    cost: &CostParams,
    cfg: &TrainConfig,
    samples: &[Sample],
) -> std::result::Result<(f64, bool), String> {
    let mut sum = 0.0;
    let mut n = 0usize;
    let mut contact = false;
    for s in samples {
        match s.event {
            Event::None => {
                let e = evaluate(gp, cost, s).map_err(|e| e.to_string())?;
                let r = e.residual();
                if !r.is_finite() {
                    return Err(format!("non-finite HJB residual at x = ({}, {})", s.x.x, s.x.y));
                }
                sum += r.abs();
                n += 1;
                let (d_v, d_u) = gradients_from(&e, cost, s);
                gp.apply_gradients(&d_v, &d_u, cfg.eta).map_err(|e| e.to_string())?;
            }
            Event::Contact => {
                contact = true;
                let d_v = terminal_anchor_gradient(gp, &s.x, cfg.w_term).map_err(|e| e.to_string())?;
                gp.apply_value_gradient(&d_v, cfg.eta).map_err(|e| e.to_string())?;
            }
            // no terminal cost and no anchor outside the range
            Event::OutOfBound => {}
        }
    }
    Ok((if n > 0 { sum / n as f64 } else { 0.0 }, contact))
}
