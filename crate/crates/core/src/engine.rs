//! Chained Monte-Carlo outage simulation and loss aggregation.
//!
//! A cell is one (track, hurricane) pair. Each trial walks the time steps in
//! order: lines still in service draw against their outage probability,
//! lines already out stay out, and the islanded load is recorded after every
//! step. Cells and trials get their own random streams derived from the
//! master seed, so results do not depend on how work is scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::SimulationConfig;
use crate::grid::{GridError, GridModel, OutageState};
use crate::impact::{exposure_for_step, FragilityCurve, LineExposure};
use crate::scenario::Track;
use crate::windfield::HurricaneScenario;

/// Trials between convergence checks when early stopping is on.
pub const EARLY_STOP_WINDOW: usize = 100;
pub const EARLY_STOP_MIN_TRIALS: usize = 200;
pub const EARLY_STOP_REL_CHANGE: f64 = 1e-3;

const STREAM_TRIAL: u64 = 0x7472_6961_6c00_0001;
const STREAM_SCENARIO: u64 = 0x7363_656e_0000_0002;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("hurricane {hurricane} has no wind field for t = {t} h")]
    MissingStep { hurricane: usize, t: f64 },
    #[error("track {track} has no eye position for t = {t} h")]
    MissingEye { track: usize, t: f64 },
    #[error("no result for track {track}, hurricane {hurricane}")]
    MissingCell { track: usize, hurricane: usize },
    #[error("{0}")]
    Mismatch(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("thread pool: {0}")]
    Pool(String),
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn hash_words(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(0x243F_6A88_85A3_08D3, |h, &w| splitmix64(h ^ splitmix64(w)))
}

/// Random stream for one trial of one cell.
pub fn trial_rng(master_seed: u64, track_id: usize, hurricane_id: usize, trial_index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(hash_words(&[
        master_seed,
        STREAM_TRIAL,
        track_id as u64,
        hurricane_id as u64,
        trial_index as u64,
    ]))
}

/// Random stream used to sample hurricane scenarios.
pub fn scenario_rng(master_seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(hash_words(&[master_seed, STREAM_SCENARIO]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial_index: usize,
    /// Islanded load (MW) after each time step.
    pub loss_by_step: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub hurricane_id: usize,
    pub track_id: usize,
    pub time_steps: Vec<f64>,
    pub loss_avg_by_step: Vec<f64>,
    pub n_trials: usize,
    /// Running mean of the final-step loss after each trial.
    pub convergence_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossTable {
    /// Ordered by track, then hurricane.
    pub cells: Vec<CellResult>,
    /// `(t_hours, loss_mw)` averaged over all cells.
    pub aggregate_by_step: Vec<(f64, f64)>,
}

/// Precomputed line exposures of one cell at every time step.
#[derive(Debug, Clone, PartialEq)]
pub struct CellPlan {
    pub track_id: usize,
    pub hurricane_id: usize,
    pub time_steps: Vec<f64>,
    pub exposures: Vec<Vec<LineExposure>>,
}

impl CellPlan {
    pub fn new(
        scenario: &HurricaneScenario,
        track: &Track,
        grid: &GridModel,
        curve: &FragilityCurve,
    ) -> Result<Self, EngineError> {
        let mut time_steps = Vec::with_capacity(scenario.params_by_step.len());
        let mut exposures = Vec::with_capacity(scenario.params_by_step.len());
        for (t, params) in &scenario.params_by_step {
            let eye = track.eye_at(*t).ok_or(EngineError::MissingEye { track: track.id, t: *t })?;
            exposures.push(exposure_for_step(grid, params, eye, curve)?);
            time_steps.push(*t);
        }
        Ok(Self {
            track_id: track.id,
            hurricane_id: scenario.id,
            time_steps,
            exposures,
        })
    }

    /// Builds a plan straight from per-step outage probabilities.
    pub fn from_probabilities(
        track_id: usize,
        hurricane_id: usize,
        time_steps: Vec<f64>,
        p_out: Vec<Vec<f64>>,
    ) -> Self {
        let exposures = p_out
            .into_iter()
            .map(|step| {
                step.into_iter()
                    .enumerate()
                    .map(|(i, p)| LineExposure {
                        branch_id: i + 1,
                        gamma: 0.0,
                        d_bounds: crate::geo::DistanceBounds::OUTSIDE,
                        p_out: p,
                    })
                    .collect()
            })
            .collect();
        Self {
            track_id,
            hurricane_id,
            time_steps,
            exposures,
        }
    }

    /// One chained trajectory across all time steps.
    pub fn run_trial<R: Rng + ?Sized>(&self, grid: &GridModel, trial_index: usize, rng: &mut R) -> TrialResult {
        let branches = grid.branches();
        let mut outages = OutageState::none(branches.len());
        let mut loss_by_step = Vec::with_capacity(self.exposures.len());
        let mut loss = 0.0;
        for (step, exposures) in self.exposures.iter().enumerate() {
            let mut changed = step == 0;
            for (idx, e) in exposures.iter().enumerate() {
                // already out, out of service from the start, or immune to wind
                if outages.is_out(idx) || !branches[idx].in_service_initially || e.p_out <= 0.0 {
                    continue;
                }
                let r: f64 = rng.random();
                if e.p_out > r {
                    outages.set_out(idx);
                    changed = true;
                }
            }
            if changed {
                loss = grid.disconnected_load(&outages);
            }
            loss_by_step.push(loss);
        }
        TrialResult {
            trial_index,
            loss_by_step,
        }
    }
}

/// Runs a single chained trial for one hurricane on one track.
pub fn run_trial<R: Rng + ?Sized>(
    scenario: &HurricaneScenario,
    track: &Track,
    grid: &GridModel,
    curve: &FragilityCurve,
    rng: &mut R,
) -> Result<TrialResult, EngineError> {
    Ok(CellPlan::new(scenario, track, grid, curve)?.run_trial(grid, 0, rng))
}

fn settled(trace: &[f64]) -> bool {
    let n = trace.len();
    if n < EARLY_STOP_MIN_TRIALS {
        return false;
    }
    let now = trace[n - 1];
    let before = trace[n - 1 - EARLY_STOP_WINDOW];
    (now - before).abs() <= EARLY_STOP_REL_CHANGE * now.abs()
}

/// Monte-Carlo estimate of the per-step loss for one cell.
pub fn run_mcs(plan: &CellPlan, grid: &GridModel, config: &SimulationConfig) -> CellResult {
    let n_steps = plan.time_steps.len();
    let trial = |i: usize| {
        let mut rng = trial_rng(config.master_seed, plan.track_id, plan.hurricane_id, i);
        plan.run_trial(grid, i, &mut rng)
    };
    let batch = if config.early_stop {
        EARLY_STOP_WINDOW
    } else {
        config.trials_per_cell
    };

    let mut sums = vec![0.0; n_steps];
    let mut trace = Vec::with_capacity(config.trials_per_cell);
    let mut done = 0;
    'outer: while done < config.trials_per_cell {
        let end = (done + batch).min(config.trials_per_cell);
        let results: Vec<TrialResult> = (done..end).into_par_iter().map(trial).collect();
        for r in results {
            for (s, l) in sums.iter_mut().zip(&r.loss_by_step) {
                *s += l;
            }
            done += 1;
            trace.push(sums[n_steps - 1] / done as f64);
            if config.early_stop && settled(&trace) {
                break 'outer;
            }
        }
    }
    CellResult {
        hurricane_id: plan.hurricane_id,
        track_id: plan.track_id,
        time_steps: plan.time_steps.clone(),
        loss_avg_by_step: sums.iter().map(|s| s / done as f64).collect(),
        n_trials: done,
        convergence_trace: trace,
    }
}

/// Equal-weight mean over every (track, hurricane) cell at each time step.
pub fn aggregate_loss(cells: &[CellResult], config: &SimulationConfig) -> Result<Vec<(f64, f64)>, EngineError> {
    let mut ordered = Vec::with_capacity(config.n_tracks * config.n_hurricanes);
    for track in 1..=config.n_tracks {
        for hurricane in 1..=config.n_hurricanes {
            let cell = cells
                .iter()
                .find(|c| c.track_id == track && c.hurricane_id == hurricane)
                .ok_or(EngineError::MissingCell { track, hurricane })?;
            if cell.loss_avg_by_step.len() != config.time_steps.len() {
                return Err(EngineError::Mismatch(format!(
                    "cell (track {track}, hurricane {hurricane}) has {} steps, config has {}",
                    cell.loss_avg_by_step.len(),
                    config.time_steps.len()
                )));
            }
            ordered.push(cell);
        }
    }
    let n = ordered.len() as f64;
    Ok(config
        .time_steps
        .iter()
        .enumerate()
        .map(|(s, &t)| {
            let total: f64 = ordered.iter().map(|c| c.loss_avg_by_step[s]).sum();
            (t, total / n)
        })
        .collect())
}

/// Exposure plans for every track × hurricane pair, ordered by track then hurricane.
pub fn plan_cells(
    grid: &GridModel,
    scenarios: &[HurricaneScenario],
    tracks: &[Track],
    curve: &FragilityCurve,
) -> Result<Vec<CellPlan>, EngineError> {
    let pairs: Vec<(&Track, &HurricaneScenario)> = tracks
        .iter()
        .flat_map(|t| scenarios.iter().map(move |s| (t, s)))
        .collect();
    pairs
        .into_par_iter()
        .map(|(t, s)| CellPlan::new(s, t, grid, curve))
        .collect()
}

/// Runs every cell and aggregates the losses.
pub fn simulate(grid: &GridModel, plans: &[CellPlan], config: &SimulationConfig) -> Result<LossTable, EngineError> {
    for p in plans {
        if p.time_steps.len() != config.time_steps.len()
            || p.time_steps.iter().zip(&config.time_steps).any(|(a, b)| a != b)
        {
            return Err(EngineError::MissingStep {
                hurricane: p.hurricane_id,
                t: config.time_steps.iter().copied().find(|t| !p.time_steps.contains(t)).unwrap_or(f64::NAN),
            });
        }
    }
    let cells: Vec<CellResult> = plans.par_iter().map(|p| run_mcs(p, grid, config)).collect();
    let aggregate_by_step = aggregate_loss(&cells, config)?;
    Ok(LossTable {
        cells,
        aggregate_by_step,
    })
}

/// [`simulate`] on a dedicated pool of `threads` workers.
pub fn simulate_with_threads(
    grid: &GridModel,
    plans: &[CellPlan],
    config: &SimulationConfig,
    threads: usize,
) -> Result<LossTable, EngineError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| EngineError::Pool(e.to_string()))?;
    pool.install(|| simulate(grid, plans, config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::parse_case;

    // REF(1) - 2 (10 MW) ; REF(1) - 3 (20 MW)
    const STAR: &str = "mpc.bus = [\n1 3 0\n2 1 10\n3 1 20\n];\nmpc.gen = [\n1 0 0 0 0 1 100 1 100 0\n];\n\
                        mpc.branch = [\n1 2 0 0.1 0 0 0 0 0 0 1\n1 3 0 0.1 0 0 0 0 0 0 1\n];\n";

    fn star() -> GridModel {
        parse_case(STAR).unwrap()
    }

    fn config(trials: usize, steps: usize) -> SimulationConfig {
        SimulationConfig {
            n_hurricanes: 1,
            n_tracks: 1,
            trials_per_cell: trials,
            time_steps: (0..steps).map(|i| 2.0 * i as f64).collect(),
            master_seed: 9,
            ..Default::default()
        }
    }

    #[test]
    fn forced_outage_carries_forward() {
        let g = star();
        let plan = CellPlan::from_probabilities(1, 1, vec![0.0, 2.0, 4.0], vec![vec![1.0, 0.0], vec![0.0, 0.0], vec![0.0, 0.0]]);
        let mut rng = trial_rng(0, 1, 1, 0);
        let r = plan.run_trial(&g, 0, &mut rng);
        assert_eq!(r.loss_by_step, vec![10.0, 10.0, 10.0]);
    }

    #[test]
    fn zero_probability_never_fails() {
        let g = star();
        let plan = CellPlan::from_probabilities(1, 1, vec![0.0, 2.0], vec![vec![0.0, 0.0]; 2]);
        let cell = run_mcs(&plan, &g, &config(50, 2));
        assert_eq!(cell.loss_avg_by_step, vec![0.0, 0.0]);
        assert!(cell.convergence_trace.iter().all(|m| *m == 0.0));
    }

    #[test]
    fn single_trial_average_is_that_trial() {
        let g = star();
        let plan = CellPlan::from_probabilities(1, 1, vec![0.0, 2.0], vec![vec![0.5, 0.5]; 2]);
        let cfg = config(1, 2);
        let cell = run_mcs(&plan, &g, &cfg);
        let mut rng = trial_rng(cfg.master_seed, 1, 1, 0);
        assert_eq!(cell.loss_avg_by_step, plan.run_trial(&g, 0, &mut rng).loss_by_step);
        assert_eq!(cell.n_trials, 1);
    }

    #[test]
    fn deterministic_case_has_constant_trace() {
        let g = star();
        let plan = CellPlan::from_probabilities(1, 1, vec![0.0], vec![vec![1.0, 0.0]]);
        let cell = run_mcs(&plan, &g, &config(40, 1));
        assert!(cell.convergence_trace.iter().all(|m| *m == 10.0));
    }

    #[test]
    fn two_independent_lines_expectation() {
        let g = star();
        let plan = CellPlan::from_probabilities(1, 1, vec![0.0], vec![vec![0.5, 0.5]]);
        let n = 100_000;
        let cfg = config(n, 1);
        let cell = run_mcs(&plan, &g, &cfg);
        // outcomes {0, 10, 20, 30} equally likely: mean 15, sd sqrt(125)
        let mut sq = 0.0;
        for i in 0..n {
            let mut rng = trial_rng(cfg.master_seed, 1, 1, i);
            let l = plan.run_trial(&g, i, &mut rng).loss_by_step[0];
            sq += (l - cell.loss_avg_by_step[0]).powi(2);
        }
        let se = (sq / (n as f64 - 1.0)).sqrt() / (n as f64).sqrt();
        assert!((cell.loss_avg_by_step[0] - 15.0).abs() < 3.0 * se, "{} se {se}", cell.loss_avg_by_step[0]);
    }

    #[test]
    fn early_stop_respects_minimum() {
        let g = star();
        let plan = CellPlan::from_probabilities(1, 1, vec![0.0], vec![vec![1.0, 1.0]]);
        let cfg = SimulationConfig {
            early_stop: true,
            ..config(800, 1)
        };
        let cell = run_mcs(&plan, &g, &cfg);
        assert_eq!(cell.n_trials, EARLY_STOP_MIN_TRIALS);
        assert_eq!(cell.loss_avg_by_step, vec![30.0]);
    }

    #[test]
    fn aggregate_is_cell_mean() {
        let cfg = SimulationConfig {
            n_hurricanes: 2,
            n_tracks: 1,
            time_steps: vec![0.0],
            ..Default::default()
        };
        let cell = |h, v| CellResult {
            hurricane_id: h,
            track_id: 1,
            time_steps: vec![0.0],
            loss_avg_by_step: vec![v],
            n_trials: 1,
            convergence_trace: vec![v],
        };
        let agg = aggregate_loss(&[cell(1, 100.0), cell(2, 200.0)], &cfg).unwrap();
        assert_eq!(agg, vec![(0.0, 150.0)]);
        match aggregate_loss(&[cell(1, 100.0)], &cfg) {
            Err(EngineError::MissingCell { track: 1, hurricane: 2 }) => {}
            other => panic!("{other:?}"),
        }
        let same = aggregate_loss(&[cell(1, 42.5), cell(2, 42.5)], &cfg).unwrap();
        assert_eq!(same[0].1, 42.5);
    }

    #[test]
    fn trial_streams_differ() {
        let a: u64 = trial_rng(1, 1, 1, 0).random();
        let b: u64 = trial_rng(1, 1, 1, 1).random();
        let c: u64 = trial_rng(1, 1, 2, 0).random();
        let d: u64 = trial_rng(1, 2, 1, 0).random();
        assert!(a != b && a != c && a != d && c != d);
        let again: u64 = trial_rng(1, 1, 1, 0).random();
        assert_eq!(a, again);
    }
}
