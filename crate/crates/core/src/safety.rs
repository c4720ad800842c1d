//! CBF constraints built from learned value functions, and the QCQP that
//! composes them with a goal policy.
//!
//! With the critic and actor advantages equal, the value derivative along the
//! dynamics is affine in the action:
//!
//! ```text
//! dV/dt = 1/2 |u*|^2 - u*.u - q_c + lambda V
//! ```
//!
//! so the sharpened barrier condition `d(V^q)/dt + c (V^q - V_min) >= 0`
//! becomes one half-space `a.u <= b` per obstacle.

use nalgebra::{DMatrix, DVector, Vector2};
use serde::{Deserialize, Serialize};

use crate::env::Control;
use crate::error::{Error, Result};
use crate::model::ElementModel;
use crate::trainer::clip_to_ball;

/// Candidate feasibility tolerance (relative to constraint scale).
const FEAS_TOL: f64 = 1e-10;
/// Constraints within this distance of equality are reported active.
pub const ACTIVE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyParams {
    /// Barrier gains per obstacle. The last entry repeats for obstacles past
    /// the end; empty means 1.0.
    pub c: Vec<f64>,
    /// Sharpening exponent in (0, 1].
    pub q: f64,
    pub v_min: f64,
    /// Must equal the discount the models were trained with.
    pub lambda: f64,
    /// Must equal the state cost the models were trained with.
    pub qc: f64,
    pub u_max: f64,
}

impl Default for SafetyParams {
    fn default() -> Self {
        Self { c: vec![1.0], q: 0.5, v_min: 0.0, lambda: 0.1, qc: 0.0, u_max: 1.0 }
    }
}

impl SafetyParams {
    pub fn c_for(&self, j: usize) -> f64 {
        self.c.get(j).or(self.c.last()).copied().unwrap_or(1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(Error::Config(format!("q must lie in (0, 1], got {}", self.q)));
        }
        if self.c.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::Config("barrier gains must be non-negative".into()));
        }
        if !(self.v_min >= 0.0 && self.lambda >= 0.0 && self.qc >= 0.0 && self.u_max > 0.0) {
            return Err(Error::Config(format!("invalid safety parameters: {self:?}")));
        }
        Ok(())
    }

    /// Default buffer: 5% of the largest stored obstacle value.
    pub fn default_v_min<'a>(models: impl IntoIterator<Item = &'a ElementModel>) -> f64 {
        let max_v = models.into_iter().map(|m| m.max_base_value()).fold(0.0, f64::max);
        0.05 * max_v
    }
}

/// `a . u <= b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub a: DVector<f64>,
    pub b: f64,
}

impl LinearConstraint {
    pub fn vacuous(n: usize) -> Self {
        Self { a: DVector::zeros(n), b: 0.0 }
    }

    /// `b - a.u`; non-negative when satisfied.
    pub fn slack(&self, u: &DVector<f64>) -> f64 {
        self.b - self.a.dot(u)
    }

    fn tol(&self) -> f64 {
        FEAS_TOL * (1.0 + self.b.abs() + self.a.norm())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QcqpStatus {
    Optimal,
    RelaxedInfeasible,
}

impl std::fmt::Display for QcqpStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            QcqpStatus::Optimal => "optimal",
            QcqpStatus::RelaxedInfeasible => "relaxed_infeasible",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QcqpResult {
    pub u: DVector<f64>,
    pub status: QcqpStatus,
    /// Indices of linear constraints holding with equality.
    pub active_set: Vec<usize>,
    pub ball_active: bool,
    pub objective: f64,
}

/// `(lin, const)` with `dV/dt = lin . u + const`.
pub fn vdot_affine(v: f64, u_star: &DVector<f64>, lambda: f64, qc: f64) -> (DVector<f64>, f64) {
    (-u_star, 0.5 * u_star.norm_squared() - qc + lambda * v)
}

/// Half-space form of the sharpened barrier condition for obstacle `j`.
pub fn cbf_constraint(v: f64, u_star: &DVector<f64>, p: &SafetyParams, j: usize) -> Result<LinearConstraint> {
    if !v.is_finite() || u_star.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("obstacle value or policy"));
    }
    if v <= 0.0 {
        // inside the zero level set: force retreat along -u*
        let n = u_star.norm();
        let a = if n > 0.0 { u_star / n } else { DVector::zeros(u_star.len()) };
        return Ok(LinearConstraint { a, b: -p.u_max });
    }
    let vq = v.powf(p.q);
    let s = p.q * v.powf(p.q - 1.0);
    let (_, k) = vdot_affine(v, u_star, p.lambda, p.qc);
    Ok(LinearConstraint { a: u_star * s, b: p.c_for(j) * (vq - p.v_min) + s * k })
}

struct Candidate {
    u: DVector<f64>,
    objective: f64,
}

/// Exact minimizer of `|u - u_g|^2` over the half-spaces and `|u| <= u_max`,
/// by enumerating KKT active sets.
pub fn solve_qcqp(u_g: &DVector<f64>, cons: &[LinearConstraint], u_max: f64) -> QcqpResult {
    let n = u_g.len();
    let finite = u_g.iter().all(|c| c.is_finite())
        && u_max.is_finite()
        && cons.iter().all(|c| c.b.is_finite() && c.a.iter().all(|x| x.is_finite()));
    if !finite {
        return zero_action(n, u_g, cons, u_max);
    }

    let mut candidates: Vec<Candidate> = Vec::new();
    let mut push = |u: DVector<f64>| {
        let objective = (&u - u_g).norm_squared();
        if objective.is_finite() {
            candidates.push(Candidate { u, objective });
        }
    };

    push(u_g.clone());
    let gn = u_g.norm();
    if gn > 0.0 {
        push(u_g * (u_max / gn));
    }

    let live: Vec<usize> = (0..cons.len()).filter(|&i| cons[i].a.norm() > 0.0).collect();
    for k in 1..=n.min(live.len()) {
        for subset in combinations(&live, k) {
            let a = DMatrix::from_fn(k, n, |r, c| cons[subset[r]].a[c]);
            let b = DVector::from_fn(k, |r, _| cons[subset[r]].b);
            let gram = &a * a.transpose();
            let Some(gram_inv) = well_conditioned_inverse(&gram) else { continue };
            // projection onto the affine set
            let resid = &a * u_g - &b;
            push(u_g - a.transpose() * (&gram_inv * resid));
            // affine set intersected with the sphere
            let u0 = a.transpose() * (&gram_inv * &b);
            let r2 = u_max * u_max - u0.norm_squared();
            if r2 < -1e-12 * u_max * u_max {
                continue;
            }
            let r = r2.max(0.0).sqrt();
            let proj = DMatrix::identity(n, n) - a.transpose() * &gram_inv * &a;
            let g = &proj * u_g;
            let gnorm = g.norm();
            if gnorm > 1e-14 {
                push(&u0 + g * (r / gnorm));
            } else if k < n {
                let dir = (0..n)
                    .map(|c| proj.column(c).into_owned())
                    .max_by(|x, y| x.norm().total_cmp(&y.norm()))
                    .expect("n >= 1");
                let dn = dir.norm();
                push(if dn > 1e-14 { &u0 + dir * (r / dn) } else { u0 });
            } else {
                push(u0);
            }
        }
    }

    candidates.sort_by(|x, y| x.objective.total_cmp(&y.objective));
    for c in candidates {
        if is_feasible(&c.u, cons, u_max) {
            return finish(c.u, u_g, cons, u_max, QcqpStatus::Optimal);
        }
    }
    relax(u_g, cons, u_max)
}

fn is_feasible(u: &DVector<f64>, cons: &[LinearConstraint], u_max: f64) -> bool {
    u.norm() <= u_max * (1.0 + FEAS_TOL) && cons.iter().all(|c| c.a.dot(u) <= c.b + c.tol())
}

fn finish(u: DVector<f64>, u_g: &DVector<f64>, cons: &[LinearConstraint], u_max: f64, status: QcqpStatus) -> QcqpResult {
    let active_set = (0..cons.len())
        .filter(|&i| cons[i].a.norm() > 0.0 && cons[i].slack(&u).abs() <= ACTIVE_TOL)
        .collect();
    let ball_active = (u.norm() - u_max).abs() <= ACTIVE_TOL;
    let objective = (&u - u_g).norm_squared();
    QcqpResult { u, status, active_set, ball_active, objective }
}

fn zero_action(n: usize, u_g: &DVector<f64>, cons: &[LinearConstraint], u_max: f64) -> QcqpResult {
    let u = DVector::zeros(n);
    let mut r = finish(u, u_g, cons, u_max, QcqpStatus::RelaxedInfeasible);
    if !r.objective.is_finite() {
        r.objective = f64::NAN;
    }
    r
}

/// Safety-first fallback: least total squared violation over the ball.
fn relax(u_g: &DVector<f64>, cons: &[LinearConstraint], u_max: f64) -> QcqpResult {
    let n = u_g.len();
    let lip: f64 = 2.0 * cons.iter().map(|c| c.a.norm_squared()).sum::<f64>();
    let project = |u: DVector<f64>| {
        let nu = u.norm();
        if nu > u_max {
            u * (u_max / nu)
        } else {
            u
        }
    };
    let mut u = project(u_g.clone());
    if lip > 0.0 {
        let step = 1.0 / lip;
        for _ in 0..20_000 {
            let mut grad = DVector::zeros(n);
            for c in cons {
                let viol = c.a.dot(&u) - c.b;
                if viol > 0.0 {
                    grad.axpy(2.0 * viol, &c.a, 1.0);
                }
            }
            let next = project(&u - grad * step);
            let moved = (&next - &u).norm();
            u = next;
            if moved < 1e-15 {
                break;
            }
        }
    }
    if u.iter().all(|c| c.is_finite()) {
        finish(u, u_g, cons, u_max, QcqpStatus::RelaxedInfeasible)
    } else {
        zero_action(n, u_g, cons, u_max)
    }
}

fn well_conditioned_inverse(gram: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let scale = gram.diagonal().max();
    let det = gram.determinant();
    if !(det.abs() > 1e-12 * scale.powi(gram.nrows() as i32)) {
        return None;
    }
    gram.clone().try_inverse()
}

fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    fn rec(items: &[usize], k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            cur.push(items[i]);
            rec(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(items, k, 0, &mut Vec::with_capacity(k), &mut out);
    out
}

/// KKT check of a solver output.
#[derive(Debug, Clone, PartialEq)]
pub struct KktReport {
    /// Norm of `2(u - u_g) + sum mu_i a_i + 2 nu u` at the best non-negative multipliers.
    pub stationarity: f64,
    pub multipliers: Vec<f64>,
    pub ball_multiplier: f64,
    pub max_violation: f64,
}

/// Stationarity residual over non-negative multipliers supported on the
/// constraints active at `u` (enumerated supports, least squares on each).
pub fn kkt_certificate(u: &DVector<f64>, u_g: &DVector<f64>, cons: &[LinearConstraint], u_max: f64) -> KktReport {
    let n = u.len();
    // gradient columns of the active constraints; the ball is tagged usize::MAX
    let mut cols: Vec<(usize, DVector<f64>)> = cons
        .iter()
        .enumerate()
        .filter(|(_, c)| c.a.norm() > 0.0 && c.slack(u).abs() <= ACTIVE_TOL)
        .map(|(i, c)| (i, c.a.clone()))
        .collect();
    if (u.norm() - u_max).abs() <= ACTIVE_TOL {
        cols.push((usize::MAX, u * 2.0));
    }
    let g0: DVector<f64> = (u - u_g) * 2.0;
    let max_violation = cons
        .iter()
        .map(|c| (-c.slack(u)).max(0.0))
        .fold((u.norm() - u_max).max(0.0), f64::max);

    let idx: Vec<usize> = (0..cols.len()).collect();
    let mut best = (g0.norm(), Vec::<(usize, f64)>::new());
    for k in 1..=n.min(cols.len()) {
        for subset in combinations(&idx, k) {
            let m = DMatrix::from_fn(n, k, |r, c| cols[subset[c]].1[r]);
            let mtm = m.transpose() * &m;
            let Some(inv) = mtm.try_inverse() else { continue };
            let mu = -(inv * m.transpose() * &g0);
            if mu.iter().any(|v| *v < -1e-12) {
                continue;
            }
            let res = (&g0 + &m * &mu).norm();
            if res < best.0 {
                best = (res, subset.iter().zip(mu.iter()).map(|(&s, &v)| (cols[s].0, v)).collect());
            }
        }
    }
    let mut multipliers = vec![0.0; cons.len()];
    let mut ball_multiplier = 0.0;
    for (i, v) in best.1 {
        if i == usize::MAX {
            ball_multiplier = v;
        } else {
            multipliers[i] = v;
        }
    }
    KktReport { stationarity: best.0, multipliers, ball_multiplier, max_violation }
}

/// Deployment role of an element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Goal,
    Obstacle,
}

/// An element at the current instant, as the composer sees it.
#[derive(Debug, Clone, Copy)]
pub struct ElementView<'a> {
    pub center: Vector2<f64>,
    pub role: Role,
    pub model: Option<&'a ElementModel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleDiagnostics {
    pub value: f64,
    pub policy: Vector2<f64>,
    pub in_range: bool,
    pub constraint: LinearConstraint,
    pub slack: f64,
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComposeOutput {
    pub u: Control,
    pub goal_policy: Control,
    pub result: QcqpResult,
    pub obstacles: Vec<ObstacleDiagnostics>,
}

/// One composition step: clipped goal policy as the target, one barrier
/// half-space per obstacle, solved over the input ball.
pub fn compose_step(agent: &Vector2<f64>, elements: &[ElementView<'_>], p: &SafetyParams) -> Result<ComposeOutput> {
    p.validate()?;
    let goals: Vec<_> = elements.iter().filter(|e| e.role == Role::Goal).collect();
    if goals.len() != 1 {
        return Err(Error::Config(format!("exactly one goal element required, found {}", goals.len())));
    }
    let goal_model = goals[0].model.ok_or_else(|| Error::Config("goal element has no model".into()))?;
    let u_goal = clip_to_ball(goal_model.policy(&(agent - goals[0].center)), p.u_max);

    let mut cons = Vec::new();
    let mut diag = Vec::new();
    for (j, e) in elements.iter().filter(|e| e.role == Role::Obstacle).enumerate() {
        let model = e.model.ok_or_else(|| Error::Config(format!("obstacle {j} has no model")))?;
        check_consistency(model, p)?;
        let x = agent - e.center;
        let in_range = x.norm() <= model.training.radius;
        let (value, policy) = model.value_policy(&x);
        let c = if in_range {
            cbf_constraint(value, &DVector::from_column_slice(policy.as_slice()), p, j)?
        } else {
            LinearConstraint::vacuous(2)
        };
        cons.push(c.clone());
        diag.push(ObstacleDiagnostics { value, policy, in_range, constraint: c, slack: 0.0, active: false });
    }

    let ug = DVector::from_column_slice(u_goal.as_slice());
    let result = solve_qcqp(&ug, &cons, p.u_max);
    for (j, d) in diag.iter_mut().enumerate() {
        d.slack = d.constraint.slack(&result.u);
        d.active = result.active_set.contains(&j);
    }
    Ok(ComposeOutput { u: Vector2::new(result.u[0], result.u[1]), goal_policy: u_goal, result, obstacles: diag })
}

fn check_consistency(model: &ElementModel, p: &SafetyParams) -> Result<()> {
    let t = &model.training;
    if (t.lambda - p.lambda).abs() > 1e-12 || (t.qc - p.qc).abs() > 1e-12 {
        return Err(Error::Config(format!(
            "model trained with lambda = {}, qc = {} but composer uses lambda = {}, qc = {}",
            t.lambda, t.qc, p.lambda, p.qc
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v2(x: f64, y: f64) -> DVector<f64> {
        DVector::from_vec(vec![x, y])
    }

    #[test]
    fn vdot_examples() {
        let (lin, k) = vdot_affine(2.0, &v2(1.0, 0.0), 0.1, 0.0);
        assert_relative_eq!(lin.dot(&v2(0.0, 0.0)) + k, 0.7, epsilon = 1e-15);
        let us = v2(0.3, -0.4);
        let (lin, k) = vdot_affine(1.5, &us, 0.1, 0.0);
        assert_relative_eq!(lin.dot(&us) + k, -0.5 * us.norm_squared() + 0.15, epsilon = 1e-15);
    }

    #[test]
    fn vdot_matches_actor_expansion() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10_000 {
            let v = rng.random_range(0.0..10.0);
            let us = v2(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let u = v2(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let (lin, k) = vdot_affine(v, &us, 0.1, 0.0);
            let direct = 0.5 * (&u - &us).norm_squared() - 0.5 * u.norm_squared() + 0.1 * v;
            assert!((lin.dot(&u) + k - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
        }
    }

    #[test]
    fn cbf_reduces_at_unsharpened_buffer() {
        let p = SafetyParams { q: 1.0, v_min: 2.0, ..Default::default() };
        let us = v2(0.6, 0.8);
        let c = cbf_constraint(2.0, &us, &p, 0).unwrap();
        assert_relative_eq!(c.a, us, epsilon = 1e-15);
        assert_relative_eq!(c.b, 0.5 * us.norm_squared() + 0.1 * 2.0, epsilon = 1e-15);
    }

    #[test]
    fn cbf_vacuous_for_large_gain() {
        let us = v2(0.6, 0.8);
        let mut prev = f64::NEG_INFINITY;
        for c in [1.0, 10.0, 100.0, 1e4] {
            let p = SafetyParams { c: vec![c], v_min: 0.1, ..Default::default() };
            let con = cbf_constraint(4.0, &us, &p, 0).unwrap();
            assert!(con.b > prev);
            prev = con.b;
        }
        assert!(prev > 1e3);
    }

    #[test]
    fn cbf_equivalent_to_barrier_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut agree = 0;
        for _ in 0..10_000 {
            let p = SafetyParams {
                c: vec![rng.random_range(0.0..3.0)],
                q: rng.random_range(0.1..1.0),
                v_min: rng.random_range(0.0..0.5),
                ..Default::default()
            };
            let v = rng.random_range(0.01..6.0);
            let us = v2(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
            let u = v2(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let (lin, k) = vdot_affine(v, &us, p.lambda, p.qc);
            let barrier = p.q * v.powf(p.q - 1.0) * (lin.dot(&u) + k) + p.c_for(0) * (v.powf(p.q) - p.v_min);
            let c = cbf_constraint(v, &us, &p, 0).unwrap();
            let margin = c.b - c.a.dot(&u);
            if barrier.abs() > 1e-9 {
                assert_eq!(barrier >= 0.0, margin >= 0.0);
                agree += 1;
            }
            assert!((barrier - margin).abs() < 1e-9 * (1.0 + barrier.abs()));
        }
        assert!(agree > 9_900);
    }

    #[test]
    fn cbf_fallback_and_errors() {
        let p = SafetyParams::default();
        let c = cbf_constraint(0.0, &v2(0.0, 2.0), &p, 0).unwrap();
        assert_eq!(c.a, v2(0.0, 1.0));
        assert_eq!(c.b, -1.0);
        assert!(cbf_constraint(f64::NAN, &v2(0.0, 2.0), &p, 0).is_err());
        let r = solve_qcqp(&v2(0.5, 0.5), &[c], 1.0);
        assert_eq!(r.status, QcqpStatus::Optimal);
        assert_relative_eq!(r.u, v2(0.0, -1.0), epsilon = 1e-12);
    }

    #[test]
    fn monotone_in_gain() {
        let us = v2(0.3, 0.9);
        let mut prev = f64::NEG_INFINITY;
        for c in [0.0, 0.5, 1.0, 2.0] {
            let p = SafetyParams { c: vec![c], v_min: 0.2, ..Default::default() };
            let b = cbf_constraint(1.0, &us, &p, 0).unwrap().b;
            assert!(b >= prev);
            prev = b;
        }
    }

    #[test]
    fn qcqp_trivial_cases() {
        let r = solve_qcqp(&v2(0.3, 0.4), &[], 1.0);
        assert_eq!(r.u, v2(0.3, 0.4));
        assert_eq!(r.status, QcqpStatus::Optimal);
        let r = solve_qcqp(&v2(2.0, 0.0), &[], 1.0);
        assert_relative_eq!(r.u, v2(1.0, 0.0), epsilon = 1e-15);
        assert!(r.ball_active);
        let con = LinearConstraint { a: v2(1.0, 0.0), b: 0.0 };
        let r = solve_qcqp(&v2(1.0, 0.0), &[con], 1.0);
        assert_relative_eq!(r.u, v2(0.0, 0.0), epsilon = 1e-15);
        assert_eq!(r.active_set, vec![0]);
    }

    #[test]
    fn qcqp_infeasible_relaxes() {
        // u_x >= 2 cannot hold inside the unit ball
        let con = LinearConstraint { a: v2(-1.0, 0.0), b: -2.0 };
        let r = solve_qcqp(&v2(0.0, 1.0), &[con], 1.0);
        assert_eq!(r.status, QcqpStatus::RelaxedInfeasible);
        assert_relative_eq!(r.u, v2(1.0, 0.0), epsilon = 1e-6);
        let vac = LinearConstraint { a: v2(0.0, 0.0), b: -1.0 };
        let r = solve_qcqp(&v2(0.0, 1.0), &[vac], 1.0);
        assert_eq!(r.status, QcqpStatus::RelaxedInfeasible);
        assert!(r.u.norm() <= 1.0 + 1e-12);
    }

    #[test]
    fn qcqp_non_finite_gives_zero() {
        let r = solve_qcqp(&v2(f64::NAN, 0.0), &[], 1.0);
        assert_eq!(r.status, QcqpStatus::RelaxedInfeasible);
        assert_eq!(r.u, v2(0.0, 0.0));
    }

    #[test]
    fn qcqp_kkt_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..500 {
            let m = rng.random_range(0..=6);
            let cons: Vec<_> = (0..m)
                .map(|_| LinearConstraint {
                    a: v2(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                    b: rng.random_range(-0.3..1.0),
                })
                .collect();
            let ug = v2(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let r = solve_qcqp(&ug, &cons, 1.0);
            assert!(r.u.norm() <= 1.0 + 1e-9);
            if r.status == QcqpStatus::Optimal {
                let k = kkt_certificate(&r.u, &ug, &cons, 1.0);
                assert!(k.stationarity <= 1e-8, "{k:?}");
                assert!(k.max_violation <= 1e-8);
            }
        }
    }

    #[test]
    fn gain_broadcast() {
        let p = SafetyParams { c: vec![1.0, 2.0], ..Default::default() };
        assert_eq!(p.c_for(0), 1.0);
        assert_eq!(p.c_for(5), 2.0);
        assert_eq!(SafetyParams { c: vec![], ..Default::default() }.c_for(0), 1.0);
    }
}
