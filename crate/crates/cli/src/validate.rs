//! Release-gate checks against the brute-force oracles.

use anyhow::Result;
use hjbnav::env::{ElementShape, Event, MotionProfile, Sample};
use hjbnav::gp::{lattice_in_disc, GpModel, KernelParams};
use hjbnav::safety::{kkt_certificate, solve_qcqp, LinearConstraint, QcqpStatus};
use hjbnav::trainer::{gradients, loss, CostParams};
use hjbnav::validation::{finite_diff, qcqp_grid_search, value_iteration, GridSpec, ValueIterationOptions};
use nalgebra::{DVector, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct Check {
    pub name: &'static str,
    /// Worst measured error.
    pub measured: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub pass: bool,
    pub checks: Vec<Check>,
}

fn check(name: &'static str, measured: f64, tolerance: f64, detail: String) -> Check {
    Check { name, measured, tolerance, pass: measured <= tolerance, detail }
}

fn random_gp(rng: &mut ChaCha8Rng) -> Result<GpModel> {
    let lengthscale = rng.random_range(0.7..1.3);
    let kernel = KernelParams { lengthscale, ..Default::default() };
    let mut gp = GpModel::from_points(&lattice_in_disc(3.0, lengthscale), 2, kernel)?;
    gp.mu_v.iter_mut().for_each(|v| *v = rng.random_range(0.0..2.0));
    gp.mu_u.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
    Ok(gp)
}

fn point(rng: &mut ChaCha8Rng, r: f64) -> Vector2<f64> {
    Vector2::new(rng.random_range(-r..r), rng.random_range(-r..r))
}

fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-6)
}

fn gp_gradient(rng: &mut ChaCha8Rng) -> Result<Check> {
    let mut worst = 0.0_f64;
    for _ in 0..5 {
        let gp = random_gp(rng)?;
        for _ in 0..40 {
            let x = point(rng, 3.0);
            let g = gp.predict_value_grad(x.as_slice())?;
            let fd = finite_diff(|p| gp.predict_value(p).expect("2-D"), x.as_slice(), 1e-5);
            worst = worst.max(rel_err(&g, &DVector::from_vec(fd)));
        }
    }
    Ok(check("gp_value_gradient", worst, 1e-5, "200 points, 5 models, central differences".into()))
}

fn trainer_gradient(rng: &mut ChaCha8Rng) -> Result<Check> {
    let mut worst = 0.0_f64;
    for _ in 0..20 {
        let gp = random_gp(rng)?;
        let cost = CostParams { lambda: rng.random_range(0.0..0.5), qc: rng.random_range(0.0..2.0) };
        let u = point(rng, 1.0);
        let s = Sample { x: point(rng, 3.0), xdot: u - point(rng, 1.0), u, event: Event::None };
        let (dv, du) = gradients(&gp, &cost, &s)?;
        let n = gp.num_points();
        let analytic = DVector::from_iterator(dv.len() + du.len(), dv.iter().chain(du.iter()).copied());
        let theta: Vec<f64> = gp.mu_v.iter().chain(gp.mu_u.iter()).copied().collect();
        let fd = finite_diff(
            |t| {
                let mut m = gp.clone();
                m.mu_v.copy_from_slice(&t[..n]);
                m.mu_u.copy_from_slice(&t[n..]);
                loss(&m, &cost, &s).expect("2-D")
            },
            &theta,
            1e-6,
        );
        worst = worst.max(rel_err(&analytic, &DVector::from_vec(fd)));
    }
    Ok(check("trainer_gradients", worst, 1e-4, "20 random instances, all means".into()))
}

fn qcqp(rng: &mut ChaCha8Rng, perturb: bool) -> Result<Vec<Check>> {
    let (mut gap, mut violation, mut kkt) = (0.0_f64, 0.0_f64, 0.0_f64);
    let mut solved = 0;
    for _ in 0..200 {
        let m = rng.random_range(0..=6);
        let cons: Vec<LinearConstraint> = (0..m)
            .map(|_| LinearConstraint {
                a: DVector::from_vec(vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]),
                b: rng.random_range(-0.3..1.0),
            })
            .collect();
        let ug = DVector::from_vec(vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]);
        let mut r = solve_qcqp(&ug, &cons, 1.0);
        if r.status != QcqpStatus::Optimal {
            continue;
        }
        if perturb {
            r.u[0] += 1e-3;
            r.objective = (&r.u - &ug).norm_squared();
        }
        solved += 1;
        if let Some((_, best)) = qcqp_grid_search(&ug, &cons, 1.0, 401)? {
            gap = gap.max(r.objective - best);
        }
        let k = kkt_certificate(&r.u, &ug, &cons, 1.0);
        violation = violation.max(k.max_violation);
        kkt = kkt.max(k.stationarity);
    }
    let detail = format!("{solved} feasible instances of 200");
    Ok(vec![
        check("qcqp_objective_vs_grid", gap, 1e-3, detail.clone()),
        check("qcqp_constraint_violation", violation, 1e-8, detail.clone()),
        check("qcqp_kkt_residual", kkt, 1e-8, detail),
    ])
}

fn slab_value_iteration() -> Result<Check> {
    // V = sqrt(2 qc) d when the speed limit does not bind
    let slab = ElementShape::rectangle(2.0, 200.0)?;
    let grid = GridSpec { x_min: 1.0, x_max: 3.0, y_min: -1.0, y_max: 1.0, nx: 101, ny: 101, range_radius: None };
    let cost = CostParams { lambda: 0.0, qc: 1.0 };
    let vf = value_iteration(&slab, &MotionProfile::stationary(), &cost, 2.0, 0.01, &grid, &ValueIterationOptions::default())?;
    let worst = [0.2, 0.4, 0.5]
        .iter()
        .map(|&d| {
            let v = vf.interpolate(&Vector2::new(1.0 + d, 0.0)).unwrap_or(f64::NAN);
            (v - 2f64.sqrt() * d).abs() / (2f64.sqrt() * d)
        })
        .fold(0.0, f64::max);
    Ok(check("value_iteration_slab", worst, 2e-2, format!("{} sweeps, grid step 0.02", vf.deltas.len())))
}

pub fn run(seed: u64, perturb_solver: bool) -> Result<Report> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = vec![gp_gradient(&mut rng)?, trainer_gradient(&mut rng)?];
    checks.extend(qcqp(&mut rng, perturb_solver)?);
    checks.push(slab_value_iteration()?);
    Ok(Report { pass: checks.iter().all(|c| c.pass), checks })
}
