//! Command-line driver: reads the grid, history and configuration, runs the
//! simulation, and writes CSV, GeoJSON and a run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use sha2::{Digest, Sha256};

use stormgrid::engine::{self, LossTable};
use stormgrid::scenario::{self, Track};
use stormgrid::{grid, CellPlan, FragilityCurve, GridModel, HurricaneScenario, SimulationConfig};

pub mod geojson;

pub const THREADS_ENV: &str = "STORMGRID_THREADS";

#[derive(Debug, Parser)]
#[command(name = "stormgrid", version, about = "Hurricane impact simulation on transmission grids")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the Monte-Carlo impact study.
    Simulate(SimulateArgs),
    /// Sample hurricane scenarios and write them to CSV.
    GenScenarios(GenScenariosArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// MATPOWER case file.
    #[arg(long)]
    pub case: PathBuf,
    /// Bus coordinates CSV (`bus_id,lat_deg,lon_deg`).
    #[arg(long)]
    pub coords: PathBuf,
    /// Historical parameter CSV; required unless `--scenarios` is given.
    #[arg(long, required_unless_present = "scenarios")]
    pub history: Option<PathBuf>,
    /// Flat `key = value` configuration file; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Parent directory for the timestamped run directory.
    #[arg(long, default_value = "runs")]
    pub out_dir: PathBuf,
    /// Explicit track CSV (`track_id,t_hours,lat_deg,lon_deg`).
    #[arg(long)]
    pub tracks: Option<PathBuf>,
    /// Scenario CSV from `gen-scenarios` to use instead of sampling.
    #[arg(long)]
    pub scenarios: Option<PathBuf>,
    /// Also write one GeoJSON file per track, hurricane and time step.
    #[arg(long)]
    pub geojson: bool,
}

#[derive(Debug, Args)]
pub struct GenScenariosArgs {
    #[arg(long)]
    pub history: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "scenarios.csv")]
    pub out: PathBuf,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_config(path: Option<&Path>, seed: Option<u64>, trials: Option<usize>) -> Result<SimulationConfig> {
    let mut cfg = match path {
        Some(p) => SimulationConfig::from_kv_str(&read(p)?).with_context(|| format!("config {}", p.display()))?,
        None => SimulationConfig::default(),
    };
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    if let Some(t) = trials {
        cfg.trials_per_cell = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn sample_scenarios(cfg: &SimulationConfig, history_path: &Path) -> Result<Vec<HurricaneScenario>> {
    let history = scenario::load_history(read(history_path)?.as_bytes())
        .with_context(|| format!("history {}", history_path.display()))?;
    let mut rng = engine::scenario_rng(cfg.master_seed);
    Ok(scenario::generate_scenarios(cfg, &history, &mut rng)?)
}

/// Worker count from `STORMGRID_THREADS`, if set.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .with_context(|| format!("{THREADS_ENV} must be a positive integer, got `{v}`"))?;
            if n == 0 {
                bail!("{THREADS_ENV} must be a positive integer, got 0");
            }
            Ok(Some(n))
        }
        Err(_) => Ok(None),
    }
}

/// Writes `scenarios.csv` for the configured hurricanes.
pub fn cmd_gen_scenarios(args: &GenScenariosArgs) -> Result<()> {
    let cfg = load_config(args.config.as_deref(), args.seed, None)?;
    let scenarios = sample_scenarios(&cfg, &args.history)?;
    let mut buf = Vec::new();
    scenario::write_scenarios(&mut buf, &scenarios)?;
    fs::write(&args.out, buf).with_context(|| format!("writing {}", args.out.display()))?;
    Ok(())
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn fresh_run_dir(parent: &Path, seed: u64) -> Result<PathBuf> {
    fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    let stamp = chrono::Local::now().format("%Y%m%dT%H%M%S");
    let base = format!("run-{stamp}-seed{seed}");
    for n in 1.. {
        let name = if n == 1 { base.clone() } else { format!("{base}-{n}") };
        let dir = parent.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e).with_context(|| format!("creating {}", dir.display())),
        }
    }
    unreachable!()
}

/// `t_hours,track_id,hurricane_id,loss_avg_mw,n_trials`, ordered by step, track, hurricane.
pub fn losses_csv(table: &LossTable) -> String {
    let mut cells: Vec<_> = table.cells.iter().collect();
    cells.sort_by_key(|c| (c.track_id, c.hurricane_id));
    let mut s = String::from("t_hours,track_id,hurricane_id,loss_avg_mw,n_trials\n");
    for (step, (t, _)) in table.aggregate_by_step.iter().enumerate() {
        for c in &cells {
            let _ = writeln!(
                s,
                "{t},{},{},{},{}",
                c.track_id, c.hurricane_id, c.loss_avg_by_step[step], c.n_trials
            );
        }
    }
    s
}

pub fn aggregate_csv(table: &LossTable) -> String {
    let mut s = String::from("t_hours,loss_mw\n");
    for (t, loss) in &table.aggregate_by_step {
        let _ = writeln!(s, "{t},{loss}");
    }
    s
}

pub fn exposures_csv(plans: &[CellPlan]) -> String {
    let mut s = String::from("t_hours,track_id,hurricane_id,branch_id,gamma_kt,p_out\n");
    let n_steps = plans.first().map_or(0, |p| p.time_steps.len());
    for step in 0..n_steps {
        for p in plans {
            let t = p.time_steps[step];
            for e in &p.exposures[step] {
                let _ = writeln!(
                    s,
                    "{t},{},{},{},{},{}",
                    p.track_id, p.hurricane_id, e.branch_id, e.gamma, e.p_out
                );
            }
        }
    }
    s
}

fn write_geojson(
    dir: &Path,
    grid: &GridModel,
    plans: &[CellPlan],
    scenarios: &[HurricaneScenario],
    tracks: &[Track],
) -> Result<()> {
    let gj_dir = dir.join("geojson");
    fs::create_dir_all(&gj_dir)?;
    for p in plans {
        let scen = scenarios
            .iter()
            .find(|s| s.id == p.hurricane_id)
            .context("plan without scenario")?;
        let track = tracks.iter().find(|t| t.id == p.track_id).context("plan without track")?;
        for (step, &t) in p.time_steps.iter().enumerate() {
            let eye = track.eye_at(t).context("track without eye")?;
            let doc = geojson::export_geojson(grid, &p.exposures[step], eye, scen.params_at(step));
            let name = format!("t{t}_track{}_h{}.geojson", p.track_id, p.hurricane_id);
            fs::write(gj_dir.join(name), serde_json::to_string(&doc)?)?;
        }
    }
    Ok(())
}

/// Runs the full study and returns the run directory.
pub fn cmd_simulate(args: &SimulateArgs) -> Result<PathBuf> {
    let started = Instant::now();
    let cfg = load_config(args.config.as_deref(), args.seed, args.trials)?;
    let threads = threads_from_env()?;

    let case_text = read(&args.case)?;
    let coords_text = read(&args.coords)?;
    let model = grid::parse_case(&case_text)
        .with_context(|| format!("case {}", args.case.display()))?
        .with_coordinates(coords_text.as_bytes())
        .with_context(|| format!("coordinates {}", args.coords.display()))?;

    eprintln!(
        "grid: {} buses, {} branches, {} wind-exposed lines, {} MW load",
        model.buses().len(),
        model.branches().len(),
        model.exposed_line_count(),
        model.total_load_mw()
    );

    let mut inputs = serde_json::Map::new();
    inputs.insert("case".into(), json!({"path": args.case, "sha256": sha256_hex(case_text.as_bytes())}));
    inputs.insert("coords".into(), json!({"path": args.coords, "sha256": sha256_hex(coords_text.as_bytes())}));

    let scenarios = match (&args.scenarios, &args.history) {
        (Some(path), _) => {
            let text = read(path)?;
            inputs.insert("scenarios".into(), json!({"path": path, "sha256": sha256_hex(text.as_bytes())}));
            scenario::read_scenarios(text.as_bytes(), &cfg).with_context(|| format!("scenarios {}", path.display()))?
        }
        (None, Some(path)) => {
            inputs.insert("history".into(), json!({"path": path, "sha256": sha256_hex(read(path)?.as_bytes())}));
            sample_scenarios(&cfg, path)?
        }
        (None, None) => bail!("either --history or --scenarios is required"),
    };
    let tracks = match &args.tracks {
        Some(path) => {
            let text = read(path)?;
            inputs.insert("tracks".into(), json!({"path": path, "sha256": sha256_hex(text.as_bytes())}));
            scenario::load_tracks(text.as_bytes(), &cfg).with_context(|| format!("tracks {}", path.display()))?
        }
        None => scenario::build_tracks(&cfg, &cfg.bearings())?,
    };

    let curve = FragilityCurve::new(cfg.v_cri, cfg.v_col)?;
    let plans = engine::plan_cells(&model, &scenarios, &tracks, &curve)?;
    let table = match threads {
        Some(n) => engine::simulate_with_threads(&model, &plans, &cfg, n)?,
        None => engine::simulate(&model, &plans, &cfg)?,
    };

    let dir = fresh_run_dir(&args.out_dir, cfg.master_seed)?;
    fs::write(dir.join("losses.csv"), losses_csv(&table))?;
    fs::write(dir.join("aggregate.csv"), aggregate_csv(&table))?;
    fs::write(dir.join("exposures.csv"), exposures_csv(&plans))?;
    if args.geojson {
        write_geojson(&dir, &model, &plans, &scenarios, &tracks)?;
    }

    let config_snapshot: serde_json::Map<String, serde_json::Value> = cfg
        .to_kv_pairs()
        .into_iter()
        .map(|(k, v)| (k.to_string(), json!(v)))
        .collect();
    let manifest = json!({
        "tool": "stormgrid",
        "version": env!("CARGO_PKG_VERSION"),
        "master_seed": cfg.master_seed,
        "config": config_snapshot,
        "inputs": inputs,
        "grid": {
            "buses": model.buses().len(),
            "branches": model.branches().len(),
            "wind_exposed_lines": model.exposed_line_count(),
            "total_load_mw": model.total_load_mw(),
            "total_gen_mw": model.total_gen_mw(),
        },
        "threads": threads,
        "wall_clock_seconds": started.elapsed().as_secs_f64(),
    });
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(dir)
}
