//! World scenarios and the closed-loop composition run.

use std::collections::HashMap;

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{signed_distance, ElementShape, MotionProfile, RelativeState, TrainingRange, DEFAULT_DT};
use crate::error::{Error, Result};
use crate::gp::KernelParams;
use crate::model::ElementModel;
use crate::safety::{compose_step, ElementView, QcqpStatus, Role, SafetyParams};
use crate::trainer::{train, CostParams, ElementConfig, TrainConfig, TrainStatus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioElement {
    pub name: String,
    pub shape: ElementShape,
    /// World-frame center at t = 0.
    pub position: [f64; 2],
    #[serde(default)]
    pub motion: MotionProfile,
    pub role: Role,
    /// Key into the model map passed to [`run`].
    pub model: String,
}

impl ScenarioElement {
    pub fn center_at(&self, t: f64) -> Vector2<f64> {
        Vector2::new(self.position[0], self.position[1]) + self.motion.velocity * t
    }
}

/// Per-seed randomization of the initial layout.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Jitter {
    /// Moving elements shift along their direction of motion by up to this.
    pub along_motion: f64,
    /// The agent start shifts horizontally by up to this.
    pub agent_x: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub elements: Vec<ScenarioElement>,
    pub agent_start: [f64; 2],
    pub dt: f64,
    pub max_steps: usize,
    /// The goal counts as reached within this signed distance of its region.
    pub goal_radius: f64,
    #[serde(default)]
    pub jitter: Jitter,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let goals = self.elements.iter().filter(|e| e.role == Role::Goal).count();
        if goals != 1 {
            return Err(Error::Config(format!("scenario needs exactly one goal, found {goals}")));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.goal_radius >= 0.0) {
            return Err(Error::Config("goal_radius must be non-negative".into()));
        }
        if !(self.jitter.along_motion >= 0.0 && self.jitter.agent_x >= 0.0) {
            return Err(Error::Config("jitter amplitudes must be non-negative".into()));
        }
        for e in &self.elements {
            e.shape.validate()?;
            if !e.motion.is_finite() || e.position.iter().any(|c| !c.is_finite()) {
                return Err(Error::NonFinite("scenario element"));
            }
        }
        Ok(())
    }

    /// Check every element against its model: present, same shape, same motion.
    pub fn check_models(&self, models: &HashMap<String, ElementModel>) -> Result<()> {
        for e in &self.elements {
            let m = models
                .get(&e.model)
                .ok_or_else(|| Error::Config(format!("element {:?}: no model named {:?}", e.name, e.model)))?;
            if m.gp.state_dim() != 2 || m.gp.control_dim() != 2 {
                return Err(Error::Dimension { expected: 2, got: m.gp.state_dim() });
            }
            if m.element.shape != e.shape {
                return Err(Error::Config(format!("element {:?}: shape differs from model {:?}", e.name, e.model)));
            }
            if (m.element.motion.velocity - e.motion.velocity).norm() > 1e-9 {
                return Err(Error::Config(format!(
                    "element {:?}: motion {:?} differs from model {:?} motion {:?}",
                    e.name,
                    e.motion.velocity.as_slice(),
                    e.model,
                    m.element.motion.velocity.as_slice()
                )));
            }
        }
        Ok(())
    }

    /// Layout for one seed. Seeds give independent draws; zero jitter is the identity.
    pub fn instantiate(&self, seed: u64) -> Result<Scenario> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = self.clone();
        let j = self.jitter;
        if j.agent_x > 0.0 {
            s.agent_start[0] += rng.random_range(-j.agent_x..=j.agent_x);
        }
        if j.along_motion > 0.0 {
            for e in &mut s.elements {
                let v = e.motion.velocity;
                if v.norm() > 0.0 {
                    let shift = v.normalize() * rng.random_range(-j.along_motion..=j.along_motion);
                    e.position[0] += shift.x;
                    e.position[1] += shift.y;
                }
            }
        }
        check_no_overlap(&s.elements)?;
        Ok(s)
    }

    /// Reflection through the y axis.
    pub fn mirrored_x(&self) -> Self {
        let mut s = self.clone();
        s.agent_start[0] = -s.agent_start[0];
        for e in &mut s.elements {
            e.position[0] = -e.position[0];
            e.shape = e.shape.mirrored_x();
            e.motion.velocity.x = -e.motion.velocity.x;
        }
        s
    }
}

/// Agent position relative to an element's center at time `t`.
pub fn relative_state(agent: &Vector2<f64>, element: &ScenarioElement, t: f64) -> RelativeState {
    agent - element.center_at(t)
}

fn aabb(e: &ScenarioElement) -> [f64; 4] {
    let (cx, cy) = (e.position[0], e.position[1]);
    match &e.shape {
        ElementShape::Rectangle { width, height } => [cx - width / 2.0, cx + width / 2.0, cy - height / 2.0, cy + height / 2.0],
        ElementShape::Polygon { vertices } => vertices.iter().fold(
            [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY],
            |b, v| [b[0].min(cx + v[0]), b[1].max(cx + v[0]), b[2].min(cy + v[1]), b[3].max(cy + v[1])],
        ),
    }
}

fn check_no_overlap(elements: &[ScenarioElement]) -> Result<()> {
    for (i, a) in elements.iter().enumerate() {
        for b in &elements[i + 1..] {
            let (p, q) = (aabb(a), aabb(b));
            if p[0] < q[1] && q[0] < p[1] && p[2] < q[3] && q[2] < p[3] {
                return Err(Error::Config(format!("elements {:?} and {:?} overlap at t = 0", a.name, b.name)));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    GoalReached,
    Collision,
    Timeout,
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Outcome::GoalReached => "goal_reached",
            Outcome::Collision => "collision",
            Outcome::Timeout => "timeout",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub position: Vector2<f64>,
    pub u: Vector2<f64>,
    pub goal_policy: Vector2<f64>,
    pub status: QcqpStatus,
    /// Predicted value per obstacle, in scenario order.
    pub values: Vec<f64>,
    pub in_range: Vec<bool>,
    pub active: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    pub final_position: Vector2<f64>,
    pub outcome: Outcome,
    /// Smallest signed distance to any obstacle over visited states.
    pub min_signed_distance: f64,
    pub obstacle_names: Vec<String>,
}

impl RunTrace {
    /// Smallest `V^q - V_min` over Optimal-status steps and in-range obstacles.
    pub fn min_barrier_margin(&self, p: &SafetyParams) -> f64 {
        self.steps
            .iter()
            .filter(|s| s.status == QcqpStatus::Optimal)
            .flat_map(|s| s.values.iter().zip(&s.in_range).filter(|(_, r)| **r).map(|(v, _)| v.max(0.0).powf(p.q) - p.v_min))
            .fold(f64::INFINITY, f64::min)
    }

    /// Columns: t, x, y, u_x, u_y, status, then one `V_<name>` per obstacle.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut header: Vec<String> = ["t", "x", "y", "u_x", "u_y", "status"].iter().map(|s| s.to_string()).collect();
        header.extend(self.obstacle_names.iter().map(|n| format!("V_{n}")));
        let records: Vec<Vec<String>> = self
            .steps
            .iter()
            .map(|s| {
                let mut r = vec![
                    s.t.to_string(),
                    s.position.x.to_string(),
                    s.position.y.to_string(),
                    s.u.x.to_string(),
                    s.u.y.to_string(),
                    s.status.to_string(),
                ];
                r.extend(s.values.iter().map(|v| v.to_string()));
                r
            })
            .collect();
        crate::io::csv_records(&header, &records)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub seed: u64,
    pub outcome: String,
    pub steps: usize,
    pub min_signed_distance: f64,
}

pub fn summary_csv(traces: &[RunTrace]) -> Result<Vec<u8>> {
    crate::io::csv_bytes(traces.iter().map(|t| SummaryRow {
        seed: t.seed,
        outcome: t.outcome.to_string(),
        steps: t.steps.len(),
        min_signed_distance: t.min_signed_distance,
    }))
}

/// Closed loop: compose, integrate the agent, advance the elements.
pub fn run(scenario: &Scenario, models: &HashMap<String, ElementModel>, params: &SafetyParams, seed: u64) -> Result<RunTrace> {
    scenario.validate()?;
    params.validate()?;
    scenario.check_models(models)?;
    let sc = scenario.instantiate(seed)?;
    let goal = sc.elements.iter().find(|e| e.role == Role::Goal).expect("validated");
    let obstacles: Vec<&ScenarioElement> = sc.elements.iter().filter(|e| e.role == Role::Obstacle).collect();

    let mut agent = Vector2::new(sc.agent_start[0], sc.agent_start[1]);
    let mut steps = Vec::new();
    let mut min_sd = f64::INFINITY;
    let mut outcome = Outcome::Timeout;

    for k in 0..=sc.max_steps {
        let t = k as f64 * sc.dt;
        let sd = obstacles
            .iter()
            .map(|e| signed_distance(&relative_state(&agent, e, t), &e.shape))
            .fold(f64::INFINITY, f64::min);
        min_sd = min_sd.min(sd);
        if sd <= 0.0 {
            outcome = Outcome::Collision;
            break;
        }
        if signed_distance(&relative_state(&agent, goal, t), &goal.shape) <= sc.goal_radius {
            outcome = Outcome::GoalReached;
            break;
        }
        if k == sc.max_steps {
            break;
        }
        let views: Vec<ElementView<'_>> = sc
            .elements
            .iter()
            .map(|e| ElementView { center: e.center_at(t), role: e.role, model: models.get(&e.model) })
            .collect();
        let out = compose_step(&agent, &views, params)?;
        if !out.u.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinitePolicy { step: k, x: agent.x, y: agent.y });
        }
        steps.push(StepRecord {
            t,
            position: agent,
            u: out.u,
            goal_policy: out.goal_policy,
            status: out.result.status,
            values: out.obstacles.iter().map(|o| o.value).collect(),
            in_range: out.obstacles.iter().map(|o| o.in_range).collect(),
            active: out.obstacles.iter().map(|o| o.active).collect(),
        });
        agent += out.u * sc.dt;
    }

    Ok(RunTrace {
        seed,
        steps,
        final_position: agent,
        outcome,
        min_signed_distance: min_sd,
        obstacle_names: obstacles.iter().map(|e| e.name.clone()).collect(),
    })
}

/// Independent runs over `seeds`, spread across threads. Output follows seed order.
pub fn run_batch(
    scenario: &Scenario,
    models: &HashMap<String, ElementModel>,
    params: &SafetyParams,
    seeds: &[u64],
) -> Result<Vec<RunTrace>> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(seeds.len().max(1));
    let chunk = seeds.len().div_ceil(threads).max(1);
    std::thread::scope(|s| {
        let handles: Vec<_> = seeds
            .chunks(chunk)
            .map(|c| s.spawn(move || c.iter().map(|&seed| run(scenario, models, params, seed)).collect::<Result<Vec<_>>>()))
            .collect();
        let mut out = Vec::with_capacity(seeds.len());
        for h in handles {
            out.extend(h.join().expect("run thread panicked")?);
        }
        Ok(out)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lane {
    /// Lane centerline.
    pub y: f64,
    /// Signed speed along x.
    pub speed: f64,
    /// Initial car centers along x.
    pub car_x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreetCrossingConfig {
    pub lanes: Vec<Lane>,
    pub car_width: f64,
    pub car_height: f64,
    pub goal_center: [f64; 2],
    pub goal_size: f64,
    pub agent_start: [f64; 2],
    pub dt: f64,
    pub max_steps: usize,
    pub goal_radius: f64,
    pub jitter: Jitter,
    pub goal_model: String,
    /// Model name for cars moving in +x; cars moving in -x use `car_model_reverse`.
    pub car_model: String,
    pub car_model_reverse: String,
}

impl Default for StreetCrossingConfig {
    fn default() -> Self {
        Self {
            lanes: vec![
                Lane { y: -1.25, speed: 0.8, car_x: vec![-5.0, -15.0] },
                Lane { y: 1.25, speed: -0.8, car_x: vec![5.0, 15.0] },
            ],
            car_width: 4.0,
            car_height: 2.0,
            goal_center: [0.0, 3.5],
            goal_size: 2.0,
            agent_start: [0.0, -3.0],
            dt: DEFAULT_DT,
            max_steps: 1000,
            goal_radius: 0.1,
            jitter: Jitter { along_motion: 2.0, agent_x: 1.0 },
            goal_model: "goal".into(),
            car_model: "car".into(),
            car_model_reverse: "car_reverse".into(),
        }
    }
}

/// Two-way traffic between the agent and a goal square across the road.
pub fn build_street_crossing(cfg: &StreetCrossingConfig) -> Result<Scenario> {
    if cfg.lanes.is_empty() {
        return Err(Error::Config("street crossing needs at least one lane".into()));
    }
    let car = ElementShape::rectangle(cfg.car_width, cfg.car_height)?;
    let mut elements = vec![ScenarioElement {
        name: "goal".into(),
        shape: ElementShape::rectangle(cfg.goal_size, cfg.goal_size)?,
        position: cfg.goal_center,
        motion: MotionProfile::stationary(),
        role: Role::Goal,
        model: cfg.goal_model.clone(),
    }];
    for (l, lane) in cfg.lanes.iter().enumerate() {
        for (c, &x) in lane.car_x.iter().enumerate() {
            let model = if lane.speed >= 0.0 { &cfg.car_model } else { &cfg.car_model_reverse };
            elements.push(ScenarioElement {
                name: format!("car{l}_{c}"),
                shape: car.clone(),
                position: [x, lane.y],
                motion: MotionProfile::constant(lane.speed, 0.0),
                role: Role::Obstacle,
                model: model.clone(),
            });
        }
    }
    check_no_overlap(&elements)?;
    let s = Scenario {
        elements,
        agent_start: cfg.agent_start,
        dt: cfg.dt,
        max_steps: cfg.max_steps,
        goal_radius: cfg.goal_radius,
        jitter: cfg.jitter,
    };
    s.validate()?;
    Ok(s)
}

/// One model to train for a scenario.
#[derive(Debug, Clone)]
pub struct ElementRecipe {
    pub name: String,
    pub element: ElementConfig,
    pub train: TrainConfig,
}

/// Costs shared by every street-crossing model.
pub const STREET_COST: CostParams = CostParams { lambda: 0.1, qc: 1.0 };

/// Composition parameters the street-crossing preset is tuned for.
pub fn street_crossing_safety() -> SafetyParams {
    SafetyParams {
        c: vec![15.0],
        q: 0.5,
        v_min: 1.1,
        lambda: STREET_COST.lambda,
        qc: STREET_COST.qc,
        u_max: 1.0,
    }
}

/// Models needed by [`build_street_crossing`]: the goal and one car model.
/// The reverse car is the mirror image of the forward one, see
/// [`ElementModel::mirrored_x`].
///
/// Values start at `q_c / lambda` and the start disc grows over the first
/// half of training; the goal uses a coarser lattice so its range covers the
/// whole crossing.
pub fn street_crossing_recipes(cfg: &StreetCrossingConfig, epochs: usize, seed: u64) -> Result<Vec<ElementRecipe>> {
    let speed = cfg.lanes.first().map(|l| l.speed.abs()).unwrap_or(0.0);
    if cfg.lanes.iter().any(|l| l.speed.abs() != speed) {
        return Err(Error::Config("street crossing training needs one speed for all lanes".into()));
    }
    let base = TrainConfig {
        epochs,
        seed,
        u_max: 1.5,
        init_value: STREET_COST.qc / STREET_COST.lambda,
        curriculum_epochs: epochs / 2,
        ..Default::default()
    };
    let goal_shape = ElementShape::rectangle(cfg.goal_size, cfg.goal_size)?;
    let goal_reach = Vector2::from(cfg.agent_start) - Vector2::from(cfg.goal_center);
    let goal_radius = (goal_reach.norm() + cfg.jitter.agent_x + 4.0).max(10.0);
    let car_shape = ElementShape::rectangle(cfg.car_width, cfg.car_height)?;
    Ok(vec![
        ElementRecipe {
            name: cfg.goal_model.clone(),
            element: ElementConfig {
                range: TrainingRange::new(goal_radius, &goal_shape)?,
                shape: goal_shape,
                motion: MotionProfile::stationary(),
            },
            train: TrainConfig {
                spacing: 1.5,
                kernel: KernelParams { lengthscale: 1.5, ..Default::default() },
                ..base.clone()
            },
        },
        ElementRecipe {
            name: cfg.car_model.clone(),
            element: ElementConfig {
                range: TrainingRange::new(8.0_f64.max(car_shape.circumradius() + 4.0), &car_shape)?,
                shape: car_shape,
                motion: MotionProfile::constant(speed, 0.0),
            },
            train: TrainConfig { seed: seed.wrapping_add(1), ..base },
        },
    ])
}

/// Train every model named by the preset, including the mirrored reverse car.
pub fn train_street_crossing(cfg: &StreetCrossingConfig, epochs: usize, seed: u64) -> Result<HashMap<String, ElementModel>> {
    let mut models = HashMap::new();
    for r in street_crossing_recipes(cfg, epochs, seed)? {
        let t = train(&r.element, &STREET_COST, &r.train)?;
        if let TrainStatus::Aborted { epoch, reason } = t.status {
            return Err(Error::Model(format!("{} training aborted at epoch {epoch}: {reason}", r.name)));
        }
        models.insert(r.name, t.model);
    }
    let car = &models[&cfg.car_model];
    models.insert(cfg.car_model_reverse.clone(), car.mirrored_x()?);
    Ok(models)
}
