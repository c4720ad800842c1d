//! Single-element relative dynamics, termination, and rollouts.
//!
//! The agent is a planar single integrator and an element translates at a
//! constant velocity, so in element-relative coordinates
//!
//! ```text
//! xdot = u - v
//! ```
//!
//! The learner only ever sees `(x, xdot, u, event)`; the drift `-v` and the
//! identity input map are never exposed to it.

use nalgebra::Vector2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Agent position relative to an element center.
pub type RelativeState = Vector2<f64>;
/// Velocity-level planar input.
pub type Control = Vector2<f64>;

/// Rejection-sampling budget for [`sample_initial`].
pub const MAX_REJECTIONS: usize = 10_000;

/// Default integration step.
pub const DEFAULT_DT: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ElementShape {
    /// Axis-aligned rectangle centered on the element origin.
    Rectangle { width: f64, height: f64 },
    /// Simple polygon, vertices in element coordinates.
    Polygon { vertices: Vec<[f64; 2]> },
}

impl ElementShape {
    pub fn rectangle(width: f64, height: f64) -> Result<Self> {
        let s = ElementShape::Rectangle { width, height };
        s.validate()?;
        Ok(s)
    }

    pub fn polygon(vertices: Vec<[f64; 2]>) -> Result<Self> {
        let s = ElementShape::Polygon { vertices };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ElementShape::Rectangle { width, height } => {
                if !(width.is_finite() && height.is_finite() && *width > 0.0 && *height > 0.0) {
                    return Err(Error::Config(format!(
                        "rectangle needs positive finite sides, got {width}x{height}"
                    )));
                }
            }
            ElementShape::Polygon { vertices } => {
                if vertices.len() < 3 {
                    return Err(Error::Config("polygon needs at least 3 vertices".into()));
                }
                if vertices.iter().flatten().any(|c| !c.is_finite()) {
                    return Err(Error::NonFinite("polygon vertices"));
                }
                if polygon_area(vertices).abs() < 1e-12 {
                    return Err(Error::Config("polygon has zero area".into()));
                }
                if !polygon_is_simple(vertices) {
                    return Err(Error::Config("polygon is self-intersecting".into()));
                }
            }
        }
        Ok(())
    }

    /// Largest distance from the element origin to the shape.
    pub fn circumradius(&self) -> f64 {
        match self {
            ElementShape::Rectangle { width, height } => 0.5 * width.hypot(*height),
            ElementShape::Polygon { vertices } => vertices
                .iter()
                .map(|v| v[0].hypot(v[1]))
                .fold(0.0, f64::max),
        }
    }

    /// Mirror the shape across the y axis (x -> -x).
    pub fn mirrored_x(&self) -> Self {
        match self {
            ElementShape::Rectangle { .. } => self.clone(),
            ElementShape::Polygon { vertices } => ElementShape::Polygon {
                vertices: vertices.iter().rev().map(|v| [-v[0], v[1]]).collect(),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionProfile {
    pub velocity: Vector2<f64>,
}

impl MotionProfile {
    pub fn stationary() -> Self {
        Self { velocity: Vector2::zeros() }
    }

    pub fn constant(vx: f64, vy: f64) -> Self {
        Self { velocity: Vector2::new(vx, vy) }
    }

    pub fn is_finite(&self) -> bool {
        self.velocity.iter().all(|c| c.is_finite())
    }
}

impl Default for MotionProfile {
    fn default() -> Self {
        Self::stationary()
    }
}

/// Circular training domain centered on the element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingRange {
    pub radius: f64,
}

impl TrainingRange {
    pub fn new(radius: f64, shape: &ElementShape) -> Result<Self> {
        let r = TrainingRange { radius };
        r.validate(shape)?;
        Ok(r)
    }

    pub fn validate(&self, shape: &ElementShape) -> Result<()> {
        if !(self.radius.is_finite() && self.radius > shape.circumradius()) {
            return Err(Error::Config(format!(
                "training radius {} must exceed the shape circumradius {:.4}",
                self.radius,
                shape.circumradius()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Event {
    None,
    Contact,
    OutOfBound,
}

/// One observation `(x, xdot, u, event)`; `event` classifies `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub x: RelativeState,
    pub xdot: Vector2<f64>,
    pub u: Control,
    pub event: Event,
}

/// How rollouts report `xdot`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum XdotMode {
    /// The model derivative `u - v`.
    #[default]
    Exact,
    /// `(x' - x) / dt` from consecutive integrated states.
    FiniteDifference,
}

/// Explicit Euler step of the relative dynamics. Returns `(x', xdot)`.
pub fn step(
    x: &RelativeState,
    u: &Control,
    motion: &MotionProfile,
    dt: f64,
) -> Result<(RelativeState, Vector2<f64>)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Config(format!("dt must be positive, got {dt}")));
    }
    if !x.iter().all(|c| c.is_finite()) {
        return Err(Error::NonFinite("state"));
    }
    if !u.iter().all(|c| c.is_finite()) {
        return Err(Error::NonFinite("control"));
    }
    let xdot = u - motion.velocity;
    Ok((x + dt * xdot, xdot))
}

/// Distance to the shape boundary, negative inside.
pub fn signed_distance(x: &RelativeState, shape: &ElementShape) -> f64 {
    match shape {
        ElementShape::Rectangle { width, height } => {
            let qx = x.x.abs() - 0.5 * width;
            let qy = x.y.abs() - 0.5 * height;
            let outside = qx.max(0.0).hypot(qy.max(0.0));
            let inside = qx.max(qy).min(0.0);
            outside + inside
        }
        ElementShape::Polygon { vertices } => {
            let n = vertices.len();
            let mut d = f64::INFINITY;
            let mut inside = false;
            for i in 0..n {
                let a = vertices[i];
                let b = vertices[(i + 1) % n];
                d = d.min(point_segment_distance(x, a, b));
                if (a[1] > x.y) != (b[1] > x.y) {
                    let t = (x.y - a[1]) / (b[1] - a[1]);
                    if x.x < a[0] + t * (b[0] - a[0]) {
                        inside = !inside;
                    }
                }
            }
            if inside {
                -d
            } else {
                d
            }
        }
    }
}

/// Termination classification. Boundary points count as contact.
pub fn classify(x: &RelativeState, shape: &ElementShape, range: &TrainingRange) -> Event {
    if signed_distance(x, shape) <= 0.0 {
        Event::Contact
    } else if x.norm() > range.radius {
        Event::OutOfBound
    } else {
        Event::None
    }
}

/// Uniform draw over the training disc minus the shape.
pub fn sample_initial<R: Rng + ?Sized>(
    shape: &ElementShape,
    range: &TrainingRange,
    rng: &mut R,
) -> Result<RelativeState> {
    shape.validate()?;
    range.validate(shape)?;
    for _ in 0..MAX_REJECTIONS {
        let r = range.radius * rng.random::<f64>().sqrt();
        let theta = std::f64::consts::TAU * rng.random::<f64>();
        let p = Vector2::new(r * theta.cos(), r * theta.sin());
        if classify(&p, shape, range) == Event::None {
            return Ok(p);
        }
    }
    Err(Error::Config(format!(
        "no admissible start after {MAX_REJECTIONS} draws; the shape nearly fills the training range"
    )))
}

/// Everything a rollout needs besides the policy and the RNG.
#[derive(Debug, Clone)]
pub struct RolloutConfig {
    pub shape: ElementShape,
    pub motion: MotionProfile,
    pub range: TrainingRange,
    pub dt: f64,
    pub max_steps: usize,
    pub xdot_mode: XdotMode,
}

/// Rollout from a random admissible start.
pub fn rollout<R, P>(policy: P, cfg: &RolloutConfig, rng: &mut R) -> Result<Vec<Sample>>
where
    R: Rng + ?Sized,
    P: FnMut(&RelativeState, &mut R) -> Control,
{
    let x0 = sample_initial(&cfg.shape, &cfg.range, rng)?;
    rollout_from(x0, policy, cfg, rng)
}

/// Rollout from a given start. The last sample carries the terminal event,
/// if any; at most `max_steps` samples are emitted.
pub fn rollout_from<R, P>(
    x0: RelativeState,
    mut policy: P,
    cfg: &RolloutConfig,
    rng: &mut R,
) -> Result<Vec<Sample>>
where
    R: Rng + ?Sized,
    P: FnMut(&RelativeState, &mut R) -> Control,
{
    if cfg.max_steps == 0 {
        return Err(Error::Config("max_steps must be at least 1".into()));
    }
    let mut samples = Vec::with_capacity(cfg.max_steps);
    let mut x = x0;
    for k in 0..cfg.max_steps {
        let event = classify(&x, &cfg.shape, &cfg.range);
        let u = policy(&x, rng);
        if !u.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinitePolicy { step: k, x: x.x, y: x.y });
        }
        let (next, exact) = step(&x, &u, &cfg.motion, cfg.dt)?;
        let xdot = match cfg.xdot_mode {
            XdotMode::Exact => exact,
            XdotMode::FiniteDifference => (next - x) / cfg.dt,
        };
        samples.push(Sample { x, xdot, u, event });
        if event != Event::None {
            break;
        }
        x = next;
    }
    Ok(samples)
}

fn point_segment_distance(p: &Vector2<f64>, a: [f64; 2], b: [f64; 2]) -> f64 {
    let a = Vector2::new(a[0], a[1]);
    let b = Vector2::new(b[0], b[1]);
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p - (a + t * ab)).norm()
}

fn polygon_area(v: &[[f64; 2]]) -> f64 {
    let n = v.len();
    (0..n)
        .map(|i| {
            let (a, b) = (v[i], v[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        * 0.5
}

fn polygon_is_simple(v: &[[f64; 2]]) -> bool {
    let n = v.len();
    for i in 0..n {
        for j in (i + 1)..n {
            // adjacent edges share a vertex
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            if segments_intersect(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

fn segments_intersect(p1: [f64; 2], p2: [f64; 2], p3: [f64; 2], p4: [f64; 2]) -> bool {
    fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
        (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    }
    fn on_segment(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> bool {
        c[0] >= a[0].min(b[0]) && c[0] <= a[0].max(b[0]) && c[1] >= a[1].min(b[1]) && c[1] <= a[1].max(b[1])
    }
    let d1 = orient(p3, p4, p1);
    let d2 = orient(p3, p4, p2);
    let d3 = orient(p1, p2, p3);
    let d4 = orient(p1, p2, p4);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(p3, p4, p1))
        || (d2 == 0.0 && on_segment(p3, p4, p2))
        || (d3 == 0.0 && on_segment(p1, p2, p3))
        || (d4 == 0.0 && on_segment(p1, p2, p4))
}
