//! Brute-force oracles: grid value iteration, dense QCQP search, and central
//! finite differences. None of these share code paths with the learner or
//! the solver they are used to check.

use nalgebra::{DVector, Vector2};
use serde::Serialize;

use crate::env::{signed_distance, ElementShape, MotionProfile};
use crate::error::{Error, Result};
use crate::safety::LinearConstraint;
use crate::trainer::CostParams;

/// Central differences along each axis.
pub fn finite_diff<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let up = f(&p);
            p[i] = x[i] - h;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Best feasible point of a `resolution x resolution` grid over the disc's
/// bounding square. `None` when no grid point is feasible.
pub fn qcqp_grid_search(
    u_g: &DVector<f64>,
    cons: &[LinearConstraint],
    u_max: f64,
    resolution: usize,
) -> Result<Option<(DVector<f64>, f64)>> {
    if resolution < 101 {
        return Err(Error::Config(format!("grid resolution must be at least 101, got {resolution}")));
    }
    if let Some(bad) = std::iter::once(u_g.len()).chain(cons.iter().map(|c| c.a.len())).find(|&n| n != 2) {
        return Err(Error::Dimension { expected: 2, got: bad });
    }
    let h = 2.0 * u_max / (resolution - 1) as f64;
    let mut best: Option<([f64; 2], f64)> = None;
    for i in 0..resolution {
        for j in 0..resolution {
            let (x, y) = (-u_max + i as f64 * h, -u_max + j as f64 * h);
            if x.hypot(y) > u_max || cons.iter().any(|c| c.a[0] * x + c.a[1] * y > c.b) {
                continue;
            }
            let obj = (x - u_g[0]).powi(2) + (y - u_g[1]).powi(2);
            if best.is_none_or(|(_, b)| obj < b) {
                best = Some(([x, y], obj));
            }
        }
    }
    Ok(best.map(|(u, obj)| (DVector::from_row_slice(&u), obj)))
}

/// Regular grid over a rectangle, with an optional absorbing disc boundary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
    /// Nodes farther than this from the origin are out of bounds.
    pub range_radius: Option<f64>,
}

impl GridSpec {
    pub fn square(half_width: f64, n: usize, range_radius: Option<f64>) -> Self {
        Self { x_min: -half_width, x_max: half_width, y_min: -half_width, y_max: half_width, nx: n, ny: n, range_radius }
    }

    pub fn hx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    pub fn hy(&self) -> f64 {
        (self.y_max - self.y_min) / (self.ny - 1) as f64
    }

    pub fn node(&self, i: usize, j: usize) -> Vector2<f64> {
        Vector2::new(self.x_min + i as f64 * self.hx(), self.y_min + j as f64 * self.hy())
    }

    fn validate(&self) -> Result<()> {
        if self.nx < 2 || self.ny < 2 || !(self.x_max > self.x_min) || !(self.y_max > self.y_min) {
            return Err(Error::Config(format!("degenerate grid: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sweep {
    /// Synchronous backups; sweep deltas are non-increasing.
    Jacobi,
    /// In-place backups in alternating orderings, with the self-referencing
    /// term solved exactly. Same fixed point, far fewer sweeps.
    #[default]
    GaussSeidel,
}

#[derive(Debug, Clone)]
pub struct ValueIterationOptions {
    pub tolerance: f64,
    pub max_sweeps: usize,
    pub directions: usize,
    pub magnitudes: usize,
    pub sweep: Sweep,
}

impl Default for ValueIterationOptions {
    fn default() -> Self {
        Self { tolerance: 1e-8, max_sweeps: 100_000, directions: 64, magnitudes: 8, sweep: Sweep::GaussSeidel }
    }
}

#[derive(Debug, Clone)]
pub struct GridValueFunction {
    pub spec: GridSpec,
    /// Row-major, `values[j * nx + i]`.
    pub values: Vec<f64>,
    /// Nodes whose value is fixed at zero (contact or out of bounds).
    pub fixed: Vec<bool>,
    /// Max absolute update of every sweep.
    pub deltas: Vec<f64>,
}

impl GridValueFunction {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.spec.nx + i]
    }

    /// Bilinear interpolation; `None` outside the grid.
    pub fn interpolate(&self, p: &Vector2<f64>) -> Option<f64> {
        let s = &self.spec;
        let fx = (p.x - s.x_min) / s.hx();
        let fy = (p.y - s.y_min) / s.hy();
        if fx < 0.0 || fy < 0.0 || fx > (s.nx - 1) as f64 || fy > (s.ny - 1) as f64 {
            return None;
        }
        let i = (fx.floor() as usize).min(s.nx - 2);
        let j = (fy.floor() as usize).min(s.ny - 2);
        let tx = fx - i as f64;
        let ty = fy - j as f64;
        Some(
            (1.0 - tx) * (1.0 - ty) * self.at(i, j)
                + tx * (1.0 - ty) * self.at(i + 1, j)
                + (1.0 - tx) * ty * self.at(i, j + 1)
                + tx * ty * self.at(i + 1, j + 1),
        )
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        #[derive(Serialize)]
        struct Row {
            x: f64,
            y: f64,
            v: f64,
        }
        let s = &self.spec;
        let rows = (0..s.ny).flat_map(|j| (0..s.nx).map(move |i| (i, j))).map(|(i, j)| {
            let p = s.node(i, j);
            Row { x: p.x, y: p.y, v: self.at(i, j) }
        });
        crate::io::csv_bytes(rows)
    }
}

/// One action's stencil: cost and bilinear weights at fixed node offsets.
struct Stencil {
    cost: f64,
    taps: Vec<(isize, isize, f64)>,
}

/// Discrete-time value iteration for the single-element reach problem.
///
/// Backup: `V(x) = min_u dt C(x, u) + exp(-lambda dt) V(x + dt (u - v))`,
/// bilinear in `V`, with `V = 0` on contact nodes and out of bounds.
pub fn value_iteration(
    shape: &ElementShape,
    motion: &MotionProfile,
    cost: &CostParams,
    u_max: f64,
    dt: f64,
    grid: &GridSpec,
    opts: &ValueIterationOptions,
) -> Result<GridValueFunction> {
    grid.validate()?;
    shape.validate()?;
    cost.validate()?;
    let (hx, hy) = (grid.hx(), grid.hy());
    if !(dt > 0.0 && u_max > 0.0) {
        return Err(Error::Config("dt and u_max must be positive".into()));
    }
    let max_speed = u_max + motion.velocity.norm();
    if max_speed * dt >= 2.0 * hx.min(hy) {
        return Err(Error::Config(format!(
            "step too large for the grid: (u_max + |v|) dt = {} >= 2 h = {}",
            max_speed * dt,
            2.0 * hx.min(hy)
        )));
    }
    let (nx, ny) = (grid.nx, grid.ny);
    let gamma = (-cost.lambda * dt).exp();

    let mut actions = vec![Vector2::zeros()];
    for k in 1..=opts.magnitudes {
        let r = u_max * k as f64 / opts.magnitudes as f64;
        for d in 0..opts.directions {
            let th = std::f64::consts::TAU * d as f64 / opts.directions as f64;
            actions.push(Vector2::new(r * th.cos(), r * th.sin()));
        }
    }
    let stencils: Vec<Stencil> = actions
        .iter()
        .map(|u| {
            let d = dt * (u - motion.velocity);
            let fx = d.x / hx;
            let fy = d.y / hy;
            let (ix, iy) = (fx.floor(), fy.floor());
            let (tx, ty) = (fx - ix, fy - iy);
            let (ix, iy) = (ix as isize, iy as isize);
            let taps = [
                (ix, iy, (1.0 - tx) * (1.0 - ty)),
                (ix + 1, iy, tx * (1.0 - ty)),
                (ix, iy + 1, (1.0 - tx) * ty),
                (ix + 1, iy + 1, tx * ty),
            ]
            .into_iter()
            .filter(|t| t.2 > 0.0)
            .collect();
            Stencil { cost: dt * (0.5 * u.norm_squared() + cost.qc), taps }
        })
        .collect();

    let mut fixed = vec![false; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let p = grid.node(i, j);
            let out = grid.range_radius.is_some_and(|r| p.norm() > r);
            fixed[j * nx + i] = out || signed_distance(&p, shape) <= 0.0;
        }
    }

    let mut values = vec![0.0; nx * ny];
    let mut deltas = Vec::new();
    let backup = |vals: &[f64], i: usize, j: usize, local_solve: bool| -> f64 {
        let current = vals[j * nx + i];
        let mut best = f64::INFINITY;
        for s in &stencils {
            let mut acc = 0.0;
            let mut w_self = 0.0;
            for &(di, dj, w) in &s.taps {
                let (ii, jj) = (i as isize + di, j as isize + dj);
                if ii < 0 || jj < 0 || ii >= nx as isize || jj >= ny as isize {
                    continue; // absorbed outside the grid
                }
                if local_solve && di == 0 && dj == 0 {
                    w_self += w;
                } else {
                    acc += w * vals[jj as usize * nx + ii as usize];
                }
            }
            let num = s.cost + gamma * acc;
            let cand = if local_solve {
                let den = 1.0 - gamma * w_self;
                if den > 1e-15 {
                    num / den
                } else if num <= 0.0 {
                    current
                } else {
                    continue;
                }
            } else {
                num
            };
            best = best.min(cand);
        }
        best
    };

    let orders: [(bool, bool); 4] = [(false, false), (true, false), (true, true), (false, true)];
    for sweep in 0..opts.max_sweeps {
        let mut delta: f64 = 0.0;
        match opts.sweep {
            Sweep::Jacobi => {
                let mut next = values.clone();
                for j in 0..ny {
                    for i in 0..nx {
                        if fixed[j * nx + i] {
                            continue;
                        }
                        let v = backup(&values, i, j, false);
                        delta = delta.max((v - values[j * nx + i]).abs());
                        next[j * nx + i] = v;
                    }
                }
                values = next;
            }
            Sweep::GaussSeidel => {
                let (rev_i, rev_j) = orders[sweep % 4];
                for jj in 0..ny {
                    let j = if rev_j { ny - 1 - jj } else { jj };
                    for ii in 0..nx {
                        let i = if rev_i { nx - 1 - ii } else { ii };
                        if fixed[j * nx + i] {
                            continue;
                        }
                        let v = backup(&values, i, j, true);
                        delta = delta.max((v - values[j * nx + i]).abs());
                        values[j * nx + i] = v;
                    }
                }
            }
        }
        if !delta.is_finite() {
            return Err(Error::NonFinite("value iteration"));
        }
        deltas.push(delta);
        if delta < opts.tolerance {
            return Ok(GridValueFunction { spec: grid.clone(), values, fixed, deltas });
        }
    }
    Err(Error::NoConvergence { sweeps: opts.max_sweeps, delta: deltas.last().copied().unwrap_or(f64::NAN) })
}
