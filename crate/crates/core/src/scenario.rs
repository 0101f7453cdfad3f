//! Hurricane scenario generation.
//!
//! Historical landfall parameters are smoothed with independent Gaussian
//! kernel density estimates, one per parameter, and sampled to produce
//! equally likely hurricanes. Forecast tracks are fixed eye positions over
//! time, either built from a bearing and speed or read from a CSV.

use std::io::Read;

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

pub use crate::config::SimulationConfig;
use crate::geo::{haversine_nmi, GeoError, GeoPoint, EARTH_RADIUS_NMI};
use crate::windfield::{landfall_pressure, HurricaneScenario, WindError, WindFieldParams};

/// Upper bound on rejected draws while sampling one scenario.
pub const MAX_REJECTIONS: usize = 10_000;

const HISTORY_HEADER: [&str; 3] = ["r_vmax_nmi", "r_s_nmi", "v_max_kt"];
const TRACK_HEADER: [&str; 4] = ["track_id", "t_hours", "lat_deg", "lon_deg"];
const SCENARIO_HEADER: [&str; 6] = ["h", "t_hours", "v_max_kt", "r_vmax_nmi", "r_s_nmi", "delta_p"];

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("expected header `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("row {row}: {msg}")]
    Row { row: usize, msg: String },
    #[error("need at least 2 rows, found {0}")]
    TooFewRows(usize),
    #[error("kde needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("kde sample {value} is not above the support minimum {support_min}")]
    OutsideSupport { value: f64, support_min: f64 },
    #[error("gave up after {0} rejected draws; the parameter distributions look incompatible")]
    TooManyRejections(usize),
    #[error("track {track}: {msg}")]
    Track { track: usize, msg: String },
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Wind(#[from] WindError),
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub r_vmax: f64,
    pub r_s: f64,
    pub v_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryTable {
    pub rows: Vec<HistoryRow>,
    pub source_note: String,
}

impl HistoryTable {
    pub fn column(&self, f: impl Fn(&HistoryRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }
}

fn check_header(found: &csv::StringRecord, expected: &[&str]) -> Result<(), ScenarioError> {
    let found: Vec<&str> = found.iter().map(str::trim).collect();
    if found != expected {
        return Err(ScenarioError::Header {
            expected: expected.join(","),
            found: found.join(","),
        });
    }
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, row: usize, name: &str) -> Result<T, ScenarioError> {
    let raw = rec.get(i).unwrap_or("").trim();
    raw.parse::<T>().map_err(|_| ScenarioError::Row {
        row,
        msg: format!("{name} `{raw}` is not a number"),
    })
}

fn csv_reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input)
}

/// Reads a historical parameter table (`r_vmax_nmi,r_s_nmi,v_max_kt`).
///
/// Row numbers in errors count data rows from 1.
pub fn load_history<R: Read>(input: R) -> Result<HistoryTable, ScenarioError> {
    let mut rdr = csv_reader(input);
    check_header(rdr.headers()?, &HISTORY_HEADER)?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let r_vmax: f64 = field(&rec, 0, row, "r_vmax_nmi")?;
        let r_s: f64 = field(&rec, 1, row, "r_s_nmi")?;
        let v_max: f64 = field(&rec, 2, row, "v_max_kt")?;
        for (name, v) in [("r_vmax_nmi", r_vmax), ("r_s_nmi", r_s), ("v_max_kt", v_max)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ScenarioError::Row {
                    row,
                    msg: format!("{name} must be positive, got {v}"),
                });
            }
        }
        rows.push(HistoryRow { r_vmax, r_s, v_max });
    }
    if rows.len() < 2 {
        return Err(ScenarioError::TooFewRows(rows.len()));
    }
    Ok(HistoryTable {
        source_note: format!("{} historical rows", rows.len()),
        rows,
    })
}

/// One-dimensional Gaussian kernel density estimate, truncated below at
/// `support_min` when sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct Kde {
    samples: Vec<f64>,
    bandwidth: f64,
    support_min: f64,
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Silverman's rule of thumb, `0.9 * min(sd, IQR / 1.34) * n^(-1/5)`.
///
/// Uses the sample standard deviation. Falls back to the standard deviation
/// alone when the IQR is zero, and never returns less than
/// `1e-6 * mean(|x|)`.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let bw = 0.9 * spread * n.powf(-0.2);
    let mean_abs = samples.iter().map(|x| x.abs()).sum::<f64>() / n;
    let floor = if mean_abs > 0.0 { 1e-6 * mean_abs } else { 1e-6 };
    bw.max(floor)
}

pub fn fit_kde(samples: &[f64], support_min: f64) -> Result<Kde, ScenarioError> {
    if samples.len() < 2 {
        return Err(ScenarioError::TooFewSamples(samples.len()));
    }
    if let Some(&value) = samples.iter().find(|&&v| !(v > support_min)) {
        return Err(ScenarioError::OutsideSupport { value, support_min });
    }
    Ok(Kde {
        bandwidth: silverman_bandwidth(samples),
        samples: samples.to_vec(),
        support_min,
    })
}

impl Kde {
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn support_min(&self) -> f64 {
        self.support_min
    }

    /// Untruncated mixture density at `x`.
    pub fn density(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let norm = 1.0 / (self.samples.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
        norm * self
            .samples
            .iter()
            .map(|s| (-0.5 * ((x - s) / h).powi(2)).exp())
            .sum::<f64>()
    }

    /// One draw from the untruncated mixture.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let centre = self.samples[rng.random_range(0..self.samples.len())];
        let z: f64 = rng.sample(StandardNormal);
        centre + self.bandwidth * z
    }

    /// Draws until the value lies above `support_min`, charging each
    /// rejection against `budget`.
    pub fn draw_truncated<R: Rng + ?Sized>(&self, rng: &mut R, budget: &mut usize) -> Result<f64, ScenarioError> {
        loop {
            let v = self.draw(rng);
            if v > self.support_min {
                return Ok(v);
            }
            spend(budget)?;
        }
    }
}

fn spend(budget: &mut usize) -> Result<(), ScenarioError> {
    if *budget == 0 {
        return Err(ScenarioError::TooManyRejections(MAX_REJECTIONS));
    }
    *budget -= 1;
    Ok(())
}

/// The three independent parameter densities.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamKdes {
    pub r_vmax: Kde,
    pub r_s: Kde,
    pub v_max: Kde,
}

impl ParamKdes {
    /// Fits each history column with support bounded below by zero.
    pub fn fit(history: &HistoryTable) -> Result<Self, ScenarioError> {
        Ok(Self {
            r_vmax: fit_kde(&history.column(|r| r.r_vmax), 0.0)?,
            r_s: fit_kde(&history.column(|r| r.r_s), 0.0)?,
            v_max: fit_kde(&history.column(|r| r.v_max), 0.0)?,
        })
    }
}

fn sample_with_budget<R: Rng + ?Sized>(
    kdes: &ParamKdes,
    k: f64,
    beta: f64,
    rng: &mut R,
    budget: &mut usize,
) -> Result<WindFieldParams, ScenarioError> {
    loop {
        let r_vmax = kdes.r_vmax.draw_truncated(rng, budget)?;
        let r_s = kdes.r_s.draw_truncated(rng, budget)?;
        let v_max = kdes.v_max.draw_truncated(rng, budget)?;
        if r_vmax < r_s {
            return Ok(WindFieldParams::new(v_max, r_vmax, r_s, k, beta)?);
        }
        spend(budget)?;
    }
}

/// Samples one wind field, rejecting draws outside the support or with
/// `r_vmax >= r_s`.
pub fn sample_params<R: Rng + ?Sized>(
    kdes: &ParamKdes,
    k: f64,
    beta: f64,
    rng: &mut R,
) -> Result<WindFieldParams, ScenarioError> {
    let mut budget = MAX_REJECTIONS;
    sample_with_budget(kdes, k, beta, rng, &mut budget)
}

/// Draws `n_hurricanes` landfall wind fields and evolves each over the
/// configured time steps.
pub fn generate_scenarios<R: Rng + ?Sized>(
    config: &SimulationConfig,
    history: &HistoryTable,
    rng: &mut R,
) -> Result<Vec<HurricaneScenario>, ScenarioError> {
    config.validate()?;
    let kdes = ParamKdes::fit(history)?;
    let lat = config.landfall.lat();
    (1..=config.n_hurricanes)
        .map(|id| {
            let mut budget = MAX_REJECTIONS;
            loop {
                let params = sample_with_budget(&kdes, config.shape_k, config.boundary_beta, rng, &mut budget)?;
                match landfall_pressure(lat, params.r_vmax) {
                    Ok(dp) if dp > 0.0 => {
                        return Ok(HurricaneScenario::evolve(
                            id,
                            params,
                            dp,
                            config.decay_alpha,
                            config.size_growth_rate,
                            &config.time_steps,
                        ))
                    }
                    _ => spend(&mut budget)?,
                }
            }
        })
        .collect()
}

/// Eye positions of one forecast track.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: usize,
    eye_positions: Vec<(f64, GeoPoint)>,
}

const TIME_MATCH_TOL: f64 = 1e-9;

impl Track {
    /// Validates time order and a constant translational speed (within 1%).
    pub fn new(id: usize, eye_positions: Vec<(f64, GeoPoint)>) -> Result<Self, ScenarioError> {
        let err = |msg: String| ScenarioError::Track { track: id, msg };
        match eye_positions.first() {
            None => return Err(err("no eye positions".into())),
            Some((t, _)) if *t != 0.0 => return Err(err(format!("first eye is at t = {t}, expected 0"))),
            _ => {}
        }
        if eye_positions.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(err("times must be strictly increasing".into()));
        }
        let speeds: Vec<f64> = eye_positions
            .windows(2)
            .map(|w| haversine_nmi(w[0].1, w[1].1) / (w[1].0 - w[0].0))
            .collect();
        if !speeds.is_empty() {
            let mean = speeds.iter().sum::<f64>() / speeds.len() as f64;
            if let Some(s) = speeds.iter().find(|s| (*s - mean).abs() > 0.01 * mean) {
                return Err(err(format!(
                    "translational speed {s:.3} kt deviates more than 1% from the mean {mean:.3} kt"
                )));
            }
        }
        Ok(Self { id, eye_positions })
    }

    pub fn eye_positions(&self) -> &[(f64, GeoPoint)] {
        &self.eye_positions
    }

    pub fn eye_at(&self, t: f64) -> Option<GeoPoint> {
        self.eye_positions
            .iter()
            .find(|(tt, _)| (tt - t).abs() <= TIME_MATCH_TOL)
            .map(|(_, p)| *p)
    }

    fn check_against(&self, config: &SimulationConfig) -> Result<(), ScenarioError> {
        let err = |msg: String| ScenarioError::Track { track: self.id, msg };
        if !self.eye_positions[0].1.approx_eq(&config.landfall, 1e-6) {
            return Err(err(format!(
                "t = 0 eye {} is not the landfall {}",
                self.eye_positions[0].1, config.landfall
            )));
        }
        if let Some(t) = config.time_steps.iter().find(|t| self.eye_at(**t).is_none()) {
            return Err(err(format!("no eye position for t = {t} h")));
        }
        Ok(())
    }
}

/// Point reached from `start` after `distance_nmi` along the great circle
/// leaving at `bearing_deg` (clockwise from true north).
pub fn destination_point(start: GeoPoint, bearing_deg: f64, distance_nmi: f64) -> Result<GeoPoint, GeoError> {
    let delta = distance_nmi / EARTH_RADIUS_NMI;
    let theta = bearing_deg.to_radians();
    let lat1 = start.lat().to_radians();
    let lon1 = start.lon().to_radians();
    let lat2 = (lat1.sin() * delta.cos() + lat1.cos() * delta.sin() * theta.cos()).asin();
    let lon2 = lon1 + (theta.sin() * delta.sin() * lat1.cos()).atan2(delta.cos() - lat1.sin() * lat2.sin());
    let lon = (lon2.to_degrees() + 180.0).rem_euclid(360.0) - 180.0;
    GeoPoint::new(lat2.to_degrees(), lon)
}

/// One track per bearing, moving at the configured speed from landfall.
pub fn build_tracks(config: &SimulationConfig, bearings: &[f64]) -> Result<Vec<Track>, ScenarioError> {
    config.validate()?;
    bearings
        .iter()
        .enumerate()
        .map(|(i, &bearing)| {
            let eyes = config
                .time_steps
                .iter()
                .map(|&t| {
                    let p = if t == 0.0 {
                        config.landfall
                    } else {
                        destination_point(config.landfall, bearing, config.translational_speed * t)?
                    };
                    Ok((t, p))
                })
                .collect::<Result<Vec<_>, ScenarioError>>()?;
            Track::new(i + 1, eyes)
        })
        .collect()
}

/// Reads explicit tracks (`track_id,t_hours,lat_deg,lon_deg`).
///
/// Track ids must be `1..=n_tracks` and each track must cover every
/// configured time step, starting at the landfall.
pub fn load_tracks<R: Read>(input: R, config: &SimulationConfig) -> Result<Vec<Track>, ScenarioError> {
    let mut rdr = csv_reader(input);
    check_header(rdr.headers()?, &TRACK_HEADER)?;
    let mut by_id: Vec<Vec<(f64, GeoPoint)>> = vec![Vec::new(); config.n_tracks];
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let id: usize = field(&rec, 0, row, "track_id")?;
        let t: f64 = field(&rec, 1, row, "t_hours")?;
        let lat: f64 = field(&rec, 2, row, "lat_deg")?;
        let lon: f64 = field(&rec, 3, row, "lon_deg")?;
        if id == 0 || id > config.n_tracks {
            return Err(ScenarioError::Row {
                row,
                msg: format!("track_id {id} outside 1..={}", config.n_tracks),
            });
        }
        let p = GeoPoint::new(lat, lon).map_err(|e| ScenarioError::Row { row, msg: e.to_string() })?;
        by_id[id - 1].push((t, p));
    }
    by_id
        .into_iter()
        .enumerate()
        .map(|(i, mut eyes)| {
            eyes.sort_by(|a, b| a.0.total_cmp(&b.0));
            let track = Track::new(i + 1, eyes)?;
            track.check_against(config)?;
            Ok(track)
        })
        .collect()
}

/// Writes scenarios as `h,t_hours,v_max_kt,r_vmax_nmi,r_s_nmi,delta_p`.
///
/// Values use shortest round-trip formatting so [`read_scenarios`] restores
/// them exactly.
pub fn write_scenarios<W: std::io::Write>(out: W, scenarios: &[HurricaneScenario]) -> Result<(), ScenarioError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SCENARIO_HEADER)?;
    for s in scenarios {
        for (t, p) in &s.params_by_step {
            w.write_record([
                s.id.to_string(),
                t.to_string(),
                p.v_max.to_string(),
                p.r_vmax.to_string(),
                p.r_s.to_string(),
                s.delta_p_at(*t).to_string(),
            ])?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads scenarios written by [`write_scenarios`]; K, beta and alpha come from `config`.
pub fn read_scenarios<R: Read>(input: R, config: &SimulationConfig) -> Result<Vec<HurricaneScenario>, ScenarioError> {
    let mut rdr = csv_reader(input);
    check_header(rdr.headers()?, &SCENARIO_HEADER)?;
    let mut out: Vec<HurricaneScenario> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let h: usize = field(&rec, 0, row, "h")?;
        let t: f64 = field(&rec, 1, row, "t_hours")?;
        let v_max: f64 = field(&rec, 2, row, "v_max_kt")?;
        let r_vmax: f64 = field(&rec, 3, row, "r_vmax_nmi")?;
        let r_s: f64 = field(&rec, 4, row, "r_s_nmi")?;
        let delta_p: f64 = field(&rec, 5, row, "delta_p")?;
        let params = WindFieldParams::new(v_max, r_vmax, r_s, config.shape_k, config.boundary_beta)
            .map_err(|e| ScenarioError::Row { row, msg: e.to_string() })?;
        match out.last_mut() {
            Some(s) if s.id == h => {
                if !(t > s.params_by_step.last().map_or(f64::NEG_INFINITY, |x| x.0)) {
                    return Err(ScenarioError::Row { row, msg: "t_hours must increase within a scenario".into() });
                }
                s.params_by_step.push((t, params));
            }
            _ => {
                if t != 0.0 {
                    return Err(ScenarioError::Row { row, msg: format!("scenario {h} must start at t = 0") });
                }
                if out.iter().any(|s| s.id == h) {
                    return Err(ScenarioError::Row { row, msg: format!("scenario {h} appears in two blocks") });
                }
                out.push(HurricaneScenario {
                    id: h,
                    landfall_params: params,
                    delta_p0: delta_p,
                    alpha: config.decay_alpha,
                    params_by_step: vec![(t, params)],
                });
            }
        }
    }
    if out.len() != config.n_hurricanes {
        return Err(ScenarioError::Row {
            row: 0,
            msg: format!("found {} scenarios, config expects {}", out.len(), config.n_hurricanes),
        });
    }
    for s in &out {
        let times: Vec<f64> = s.params_by_step.iter().map(|x| x.0).collect();
        if times.len() != config.time_steps.len()
            || times.iter().zip(&config.time_steps).any(|(a, b)| (a - b).abs() > TIME_MATCH_TOL)
        {
            return Err(ScenarioError::Row {
                row: 0,
                msg: format!("scenario {} does not cover the configured time steps", s.id),
            });
        }
    }
    Ok(out)
}
