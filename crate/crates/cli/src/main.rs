//! `hjbnav`: train element models, export evaluation grids, run composed
//! scenarios and the oracle checks.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 validation failure or
//! collision.

mod manifest;
mod validate;

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hjbnav::env::{ElementShape, MotionProfile, TrainingRange};
use hjbnav::gp::KernelParams;
use hjbnav::io::{csv_bytes, csv_records, write_atomic};
use hjbnav::model::ElementModel;
use hjbnav::safety::{Role, SafetyParams};
use hjbnav::scene::{
    build_street_crossing, run_batch, summary_csv, train_street_crossing, Outcome, Scenario, StreetCrossingConfig,
};
use hjbnav::trainer::{train, CostParams, ElementConfig, TrainConfig, TrainStatus};
use nalgebra::Vector2;
use serde_json::json;

use manifest::RunManifest;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "HJBNAV_OUT_DIR";

#[derive(Parser)]
#[command(name = "hjbnav", version, about = "Learned value functions and CBF composition for 2-D navigation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the value function and policy of one element.
    Train(TrainArgs),
    /// Evaluate a model on a regular grid (columns x, y, V, u_x, u_y).
    ExportGrid(ExportArgs),
    /// Run a composed scenario over several seeds.
    Simulate(SimulateArgs),
    /// Gradient, QCQP and value-iteration oracle checks.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// `rect:WxH` or `polygon:@vertices.json` (a JSON list of [x, y]).
    #[arg(long, value_parser = parse_shape)]
    shape: ElementShape,
    /// Constant element velocity `vx,vy`.
    #[arg(long, value_parser = parse_pair, default_value = "0,0", allow_hyphen_values = true)]
    motion: (f64, f64),
    #[arg(long, default_value_t = 20_000)]
    epochs: usize,
    #[arg(long, default_value_t = 100)]
    max_steps: usize,
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
    #[arg(long, default_value_t = 0.0)]
    qc: f64,
    #[arg(long, default_value_t = 1e-2)]
    eta: f64,
    /// Training-range radius around the element.
    #[arg(long, default_value_t = 8.0)]
    radius: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    u_max: f64,
    /// Exploration noise; defaults to half of `--u-max`.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 10.0)]
    w_term: f64,
    #[arg(long, default_value_t = 1.0)]
    lengthscale: f64,
    /// Base-point spacing; defaults to the lengthscale.
    #[arg(long)]
    spacing: Option<f64>,
    /// Initial value mean at every base point.
    #[arg(long, default_value_t = 0.0)]
    init_value: f64,
    /// Epochs over which the start disc grows to the full range (0: off).
    #[arg(long, default_value_t = 0)]
    curriculum_epochs: usize,
    /// Model JSON path; the loss history goes next to it as `.loss.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    model: PathBuf,
    /// `H` for the square [-H, H]^2, or `xmin,xmax,ymin,ymax`.
    #[arg(long, value_parser = parse_bounds, default_value = "8", allow_hyphen_values = true)]
    bounds: [f64; 4],
    /// Points per axis.
    #[arg(long, default_value_t = 101)]
    res: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    StreetCrossing,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario JSON file.
    #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
    scenario: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Number of seeds to run.
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    first_seed: u64,
    /// `NAME=PATH` for a model referenced by the scenario; repeatable.
    #[arg(long = "model", value_parser = parse_model_ref)]
    models: Vec<(String, PathBuf)>,
    /// Directory holding `<NAME>.json` for referenced models.
    #[arg(long)]
    models_dir: Option<PathBuf>,
    /// Epochs for preset models that have to be trained first.
    #[arg(long, default_value_t = 20_000)]
    train_epochs: usize,
    #[arg(long, default_value_t = 0)]
    train_seed: u64,
    #[arg(long)]
    v_min: Option<f64>,
    /// Barrier gains, one per obstacle (the last repeats).
    #[arg(long, value_delimiter = ',')]
    gain: Vec<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    u_max: Option<f64>,
    /// Output directory for traces, summary and manifest.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Write the JSON report here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Perturb the QCQP solution before checking it.
    #[arg(long, hide = true)]
    perturb_solver: bool,
}

enum Status {
    Ok,
    Failed,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::ExportGrid(a) => cmd_export_grid(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Failed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

// argument parsers --------------------------------------------------------

fn parse_shape(s: &str) -> std::result::Result<ElementShape, String> {
    let (kind, rest) = s.split_once(':').ok_or_else(|| format!("expected rect:WxH or polygon:@FILE, got {s:?}"))?;
    match kind {
        "rect" | "rectangle" => {
            let (w, h) = rest.split_once(['x', 'X']).ok_or_else(|| format!("expected WxH, got {rest:?}"))?;
            let w: f64 = w.trim().parse().map_err(|e| format!("width {w:?}: {e}"))?;
            let h: f64 = h.trim().parse().map_err(|e| format!("height {h:?}: {e}"))?;
            ElementShape::rectangle(w, h).map_err(|e| e.to_string())
        }
        "polygon" => {
            let path = rest.strip_prefix('@').ok_or("polygon vertices are read from a file: polygon:@FILE")?;
            let text = fs::read_to_string(path).map_err(|e| format!("{path}: {e}"))?;
            let vertices: Vec<[f64; 2]> =
                serde_json::from_str(&text).map_err(|e| format!("{path}: expected a JSON list of [x, y]: {e}"))?;
            ElementShape::polygon(vertices).map_err(|e| e.to_string())
        }
        other => Err(format!("unknown shape kind {other:?}; use rect or polygon")),
    }
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected two comma-separated numbers, got {s:?}"))?;
    let a: f64 = a.trim().parse().map_err(|e| format!("{a:?}: {e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("{b:?}: {e}"))?;
    if !(a.is_finite() && b.is_finite()) {
        return Err("values must be finite".into());
    }
    Ok((a, b))
}

fn parse_bounds(s: &str) -> std::result::Result<[f64; 4], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    let b = match v.as_slice() {
        [h] => [-h, *h, -h, *h],
        [a, b, c, d] => [*a, *b, *c, *d],
        _ => return Err("expected H or xmin,xmax,ymin,ymax".into()),
    };
    if !(b.iter().all(|x| x.is_finite()) && b[0] < b[1] && b[2] < b[3]) {
        return Err(format!("empty or non-finite bounds {b:?}"));
    }
    Ok(b)
}

fn parse_model_ref(s: &str) -> std::result::Result<(String, PathBuf), String> {
    let (name, path) = s.split_once('=').ok_or_else(|| format!("expected NAME=PATH, got {s:?}"))?;
    if name.is_empty() || path.is_empty() {
        return Err(format!("expected NAME=PATH, got {s:?}"));
    }
    Ok((name.to_string(), PathBuf::from(path)))
}

// paths -------------------------------------------------------------------

fn out_dir_env() -> Option<PathBuf> {
    std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

/// Relative output paths land under `$HJBNAV_OUT_DIR` when it is set.
fn resolve_out(p: &Path) -> PathBuf {
    match out_dir_env() {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p.to_path_buf(),
    }
}

/// `dir/name.json` -> `dir/name<suffix>`.
fn sibling(p: &Path, suffix: &str) -> PathBuf {
    let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    p.with_file_name(format!("{stem}{suffix}"))
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

// commands ----------------------------------------------------------------

fn cmd_train(a: &TrainArgs) -> Result<Status> {
    let started = Instant::now();
    let out = resolve_out(&a.out);
    let element = ElementConfig {
        range: TrainingRange::new(a.radius, &a.shape)?,
        shape: a.shape.clone(),
        motion: MotionProfile::constant(a.motion.0, a.motion.1),
    };
    let cost = CostParams { lambda: a.lambda, qc: a.qc };
    let cfg = TrainConfig {
        epochs: a.epochs,
        max_steps: a.max_steps,
        eta: a.eta,
        sigma_explore: a.sigma.unwrap_or(0.5 * a.u_max),
        u_max: a.u_max,
        w_term: a.w_term,
        seed: a.seed,
        kernel: KernelParams { lengthscale: a.lengthscale, ..Default::default() },
        spacing: a.spacing.unwrap_or(a.lengthscale),
        init_value: a.init_value,
        curriculum_epochs: a.curriculum_epochs,
        ..Default::default()
    };
    let t = train(&element, &cost, &cfg)?;
    t.model.save(&out)?;
    let loss_path = sibling(&out, ".loss.csv");
    write_atomic(&loss_path, &csv_bytes(&t.history)?)?;
    let status = match &t.status {
        TrainStatus::Completed => Status::Ok,
        TrainStatus::Aborted { epoch, reason } => {
            eprintln!("training aborted at epoch {epoch}: {reason}; saved the last good model");
            Status::Failed
        }
    };
    if let Some(last) = t.history.last() {
        println!(
            "trained {} epochs, final mean |residual| {:.4}, contact episodes {}",
            t.history.len(),
            last.mean_abs_residual,
            last.episodes_terminated_contact
        );
    }
    RunManifest::new("train", json!({ "element": element, "cost": cost, "train": cfg }), Some(a.seed))
        .artifacts([&out, &loss_path])
        .finish(started)
        .write(&sibling(&out, ".manifest.json"))?;
    Ok(status)
}

fn cmd_export_grid(a: &ExportArgs) -> Result<Status> {
    let started = Instant::now();
    if a.res < 2 {
        bail!("--res must be at least 2");
    }
    let model = ElementModel::load(&a.model)?;
    if model.gp.state_dim() != 2 || model.gp.control_dim() != 2 {
        bail!(
            "model {} has state dimension {} and control dimension {}; the grid is 2-D",
            a.model.display(),
            model.gp.state_dim(),
            model.gp.control_dim()
        );
    }
    let [x0, x1, y0, y1] = a.bounds;
    let step = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / (a.res - 1) as f64;
    let mut records = Vec::with_capacity(a.res * a.res);
    for j in 0..a.res {
        for i in 0..a.res {
            let p = Vector2::new(step(x0, x1, i), step(y0, y1, j));
            let (v, u) = model.value_policy(&p);
            records.push([p.x, p.y, v, u.x, u.y].iter().map(|c| c.to_string()).collect());
        }
    }
    let header: Vec<String> = ["x", "y", "V", "u_x", "u_y"].iter().map(|s| s.to_string()).collect();
    let out = resolve_out(&a.out);
    write_atomic(&out, &csv_records(&header, &records)?)?;
    RunManifest::new(
        "export-grid",
        json!({ "model": display(&a.model), "bounds": a.bounds, "res": a.res }),
        None,
    )
    .artifacts([&out])
    .finish(started)
    .write(&sibling(&out, ".manifest.json"))?;
    println!("wrote {} rows to {}", records.len(), out.display());
    Ok(Status::Ok)
}

fn cmd_simulate(a: &SimulateArgs) -> Result<Status> {
    let started = Instant::now();
    let out_dir = a.out.as_deref().map(resolve_out).or_else(out_dir_env).unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let mut artifacts: Vec<PathBuf> = Vec::new();

    let preset = a.preset.map(|Preset::StreetCrossing| StreetCrossingConfig::default());
    let scenario: Scenario = match (&a.scenario, &preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let s: Scenario = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            s.validate()?;
            s
        }
        (None, Some(cfg)) => build_street_crossing(cfg)?,
        (None, None) => bail!("one of --scenario or --preset is required"),
    };

    let needed: BTreeSet<&str> = scenario.elements.iter().map(|e| e.model.as_str()).collect();
    let given: HashMap<&str, &Path> = a.models.iter().map(|(n, p)| (n.as_str(), p.as_path())).collect();
    let mut models: HashMap<String, ElementModel> = HashMap::new();
    let mut sources = serde_json::Map::new();
    for name in &needed {
        let path = match (given.get(name), &a.models_dir) {
            (Some(p), _) => Some(p.to_path_buf()),
            (None, Some(dir)) => Some(dir.join(format!("{name}.json"))).filter(|p| p.exists()),
            (None, None) => None,
        };
        if let Some(p) = path {
            models.insert(name.to_string(), ElementModel::load(&p)?);
            sources.insert(name.to_string(), json!(display(&p)));
        }
    }
    let missing: Vec<&str> = needed.iter().copied().filter(|n| !models.contains_key(*n)).collect();
    if !missing.is_empty() {
        let Some(cfg) = &preset else {
            bail!("no model for {missing:?}; pass --model NAME=PATH or --models-dir");
        };
        eprintln!("training preset models {missing:?} ({} epochs)", a.train_epochs);
        let trained = train_street_crossing(cfg, a.train_epochs, a.train_seed)?;
        for name in missing {
            let m = trained[name].clone();
            let p = out_dir.join("models").join(format!("{name}.json"));
            m.save(&p)?;
            sources.insert(name.to_string(), json!(display(&p)));
            artifacts.push(p);
            models.insert(name.to_string(), m);
        }
    }
    scenario.check_models(&models)?;

    let mut params = match &preset {
        Some(_) => hjbnav::scene::street_crossing_safety(),
        None => {
            let first = models.values().next().context("scenario has no elements")?;
            let obstacles = scenario.elements.iter().filter(|e| e.role == Role::Obstacle).map(|e| &models[&e.model]);
            SafetyParams {
                lambda: first.training.lambda,
                qc: first.training.qc,
                v_min: SafetyParams::default_v_min(obstacles),
                ..Default::default()
            }
        }
    };
    if let Some(v) = a.v_min {
        params.v_min = v;
    }
    if !a.gain.is_empty() {
        params.c = a.gain.clone();
    }
    if let Some(q) = a.q {
        params.q = q;
    }
    if let Some(u) = a.u_max {
        params.u_max = u;
    }
    params.validate()?;

    let seeds: Vec<u64> = (a.first_seed..a.first_seed + a.seeds).collect();
    let traces = run_batch(&scenario, &models, &params, &seeds)?;
    for t in &traces {
        let p = out_dir.join(format!("trace_{}.csv", t.seed));
        write_atomic(&p, &t.to_csv()?)?;
        artifacts.push(p);
        println!(
            "seed {:>3}: {:<12} steps {:>4}  min signed distance {:.3}",
            t.seed,
            t.outcome.to_string(),
            t.steps.len(),
            t.min_signed_distance
        );
    }
    let summary = out_dir.join("summary.csv");
    write_atomic(&summary, &summary_csv(&traces)?)?;
    artifacts.push(summary);
    let scenario_path = out_dir.join("scenario.json");
    write_atomic(&scenario_path, serde_json::to_string_pretty(&scenario)?.as_bytes())?;
    artifacts.push(scenario_path);

    let collisions = traces.iter().filter(|t| t.outcome == Outcome::Collision).count();
    let reached = traces.iter().filter(|t| t.outcome == Outcome::GoalReached).count();
    println!("{reached}/{} reached the goal, {collisions} collisions", traces.len());

    RunManifest::new(
        "simulate",
        json!({
            "scenario": a.scenario.as_deref().map(display),
            "preset": a.preset.map(|_| "street-crossing"),
            "seeds": seeds,
            "models": sources,
            "safety": params,
            "train_epochs": a.train_epochs,
            "train_seed": a.train_seed,
        }),
        Some(a.first_seed),
    )
    .artifacts(&artifacts)
    .finish(started)
    .write(&out_dir.join("manifest.json"))?;
    Ok(if collisions > 0 { Status::Failed } else { Status::Ok })
}

fn cmd_validate(a: &ValidateArgs) -> Result<Status> {
    let started = Instant::now();
    let report = validate::run(a.seed, a.perturb_solver)?;
    let text = serde_json::to_string_pretty(&report)?;
    println!("{text}");
    if let Some(out) = &a.out {
        let out = resolve_out(out);
        write_atomic(&out, text.as_bytes())?;
        RunManifest::new("validate", json!({ "seed": a.seed, "perturb_solver": a.perturb_solver }), Some(a.seed))
            .artifacts([&out])
            .finish(started)
            .write(&sibling(&out, ".manifest.json"))?;
    }
    Ok(if report.pass { Status::Ok } else { Status::Failed })
}
