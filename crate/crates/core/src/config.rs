//! Simulation configuration and its flat `key = value` text form.

use std::collections::HashSet;
use std::fmt::Write as _;

use thiserror::Error;

use crate::geo::GeoPoint;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("config line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("config line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("config line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("config line {line}: bad value for `{key}`: {msg}")]
    BadValue { line: usize, key: String, msg: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

pub const DEFAULT_BEARINGS_DEG: [f64; 3] = [300.0, 320.0, 340.0];

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub landfall: GeoPoint,
    /// Hours after landfall; starts at 0 and strictly increases.
    pub time_steps: Vec<f64>,
    pub n_hurricanes: usize,
    pub n_tracks: usize,
    /// Land decay rate of the pressure deficit, per hour.
    pub decay_alpha: f64,
    pub shape_k: f64,
    pub boundary_beta: f64,
    /// Fractional growth of both radii per time step.
    pub size_growth_rate: f64,
    pub trials_per_cell: usize,
    pub master_seed: u64,
    pub v_cri: f64,
    pub v_col: f64,
    /// Eye speed over ground, knots.
    pub translational_speed: f64,
    /// One bearing (degrees true) per track; `None` spreads tracks over 300..340.
    pub track_bearings_deg: Option<Vec<f64>>,
    /// Stop a cell early once its running mean settles.
    pub early_stop: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            landfall: GeoPoint::new(28.9, -95.2).expect("valid default landfall"),
            time_steps: vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0],
            n_hurricanes: 30,
            n_tracks: 3,
            decay_alpha: 0.2,
            shape_k: 1.14,
            boundary_beta: 10.0,
            size_growth_rate: 0.0,
            trials_per_cell: 800,
            master_seed: 0,
            v_cri: 48.59,
            v_col: 106.91,
            translational_speed: 10.0,
            track_bearings_deg: None,
            early_stop: false,
        }
    }
}

const KEYS: [&str; 15] = [
    "landfall",
    "time_steps",
    "n_hurricanes",
    "n_tracks",
    "decay_alpha",
    "shape_k",
    "boundary_beta",
    "size_growth_rate",
    "trials_per_cell",
    "master_seed",
    "v_cri",
    "v_col",
    "translational_speed",
    "track_bearings_deg",
    "early_stop",
];

fn parse_f64_list(v: &str) -> Result<Vec<f64>, String> {
    v.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| format!("`{}`: {e}", s.trim())))
        .collect()
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.time_steps.is_empty() || self.time_steps[0] != 0.0 {
            return fail("time_steps must start at 0");
        }
        if self.time_steps.windows(2).any(|w| !(w[1] > w[0])) {
            return fail("time_steps must be strictly increasing");
        }
        if self.n_hurricanes == 0 {
            return fail("n_hurricanes must be at least 1");
        }
        if self.n_tracks == 0 {
            return fail("n_tracks must be at least 1");
        }
        if !(self.decay_alpha >= 0.0 && self.decay_alpha.is_finite()) {
            return fail("decay_alpha must be >= 0");
        }
        if !(self.shape_k > 1.0 && self.shape_k.is_finite()) {
            return fail("shape_k must exceed 1");
        }
        if !(self.boundary_beta > 1.0 && self.boundary_beta.is_finite()) {
            return fail("boundary_beta must exceed 1");
        }
        if !(self.size_growth_rate > -1.0 && self.size_growth_rate.is_finite()) {
            return fail("size_growth_rate must exceed -1");
        }
        if self.trials_per_cell == 0 {
            return fail("trials_per_cell must be at least 1");
        }
        if !(self.v_cri > 0.0 && self.v_cri < self.v_col && self.v_col.is_finite()) {
            return fail("fragility thresholds must satisfy 0 < v_cri < v_col");
        }
        if !(self.translational_speed >= 0.0 && self.translational_speed.is_finite()) {
            return fail("translational_speed must be >= 0");
        }
        if let Some(b) = &self.track_bearings_deg {
            if b.len() != self.n_tracks {
                return Err(ConfigError::Invalid(format!(
                    "track_bearings_deg has {} entries but n_tracks is {}",
                    b.len(),
                    self.n_tracks
                )));
            }
        }
        Ok(())
    }

    /// Bearings for each track, defaulting to an even spread over 300..340 degrees.
    pub fn bearings(&self) -> Vec<f64> {
        if let Some(b) = &self.track_bearings_deg {
            return b.clone();
        }
        if self.n_tracks == DEFAULT_BEARINGS_DEG.len() {
            return DEFAULT_BEARINGS_DEG.to_vec();
        }
        if self.n_tracks == 1 {
            return vec![320.0];
        }
        let n = self.n_tracks as f64 - 1.0;
        (0..self.n_tracks).map(|i| 300.0 + 40.0 * i as f64 / n).collect()
    }

    /// Parses the flat config format. Keys not present keep their defaults.
    pub fn from_kv_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut seen = HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                msg: format!("expected `key = value`, got `{content}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            if !KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                });
            }
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::DuplicateKey {
                    line,
                    key: key.to_string(),
                });
            }
            cfg.set(key, value).map_err(|msg| ConfigError::BadValue {
                line,
                key: key.to_string(),
                msg,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(v: &str) -> Result<T, String>
        where
            T::Err: std::fmt::Display,
        {
            v.parse::<T>().map_err(|e| format!("`{v}`: {e}"))
        }
        match key {
            "landfall" => {
                let v = parse_f64_list(value)?;
                if v.len() != 2 {
                    return Err("expected `lat, lon`".into());
                }
                self.landfall = GeoPoint::new(v[0], v[1]).map_err(|e| e.to_string())?;
            }
            "time_steps" => self.time_steps = parse_f64_list(value)?,
            "n_hurricanes" => self.n_hurricanes = num(value)?,
            "n_tracks" => self.n_tracks = num(value)?,
            "decay_alpha" => self.decay_alpha = num(value)?,
            "shape_k" => self.shape_k = num(value)?,
            "boundary_beta" => self.boundary_beta = num(value)?,
            "size_growth_rate" => self.size_growth_rate = num(value)?,
            "trials_per_cell" => self.trials_per_cell = num(value)?,
            "master_seed" => self.master_seed = num(value)?,
            "v_cri" => self.v_cri = num(value)?,
            "v_col" => self.v_col = num(value)?,
            "translational_speed" => self.translational_speed = num(value)?,
            "track_bearings_deg" => self.track_bearings_deg = Some(parse_f64_list(value)?),
            "early_stop" => self.early_stop = num(value)?,
            _ => unreachable!("key checked against KEYS"),
        }
        Ok(())
    }

    /// Every key with its current value, in canonical order.
    pub fn to_kv_pairs(&self) -> Vec<(&'static str, String)> {
        let mut out = vec![
            (
                "landfall",
                format!("{}, {}", self.landfall.lat(), self.landfall.lon()),
            ),
            ("time_steps", join(&self.time_steps)),
            ("n_hurricanes", self.n_hurricanes.to_string()),
            ("n_tracks", self.n_tracks.to_string()),
            ("decay_alpha", self.decay_alpha.to_string()),
            ("shape_k", self.shape_k.to_string()),
            ("boundary_beta", self.boundary_beta.to_string()),
            ("size_growth_rate", self.size_growth_rate.to_string()),
            ("trials_per_cell", self.trials_per_cell.to_string()),
            ("master_seed", self.master_seed.to_string()),
            ("v_cri", self.v_cri.to_string()),
            ("v_col", self.v_col.to_string()),
            ("translational_speed", self.translational_speed.to_string()),
        ];
        if let Some(b) = &self.track_bearings_deg {
            out.push(("track_bearings_deg", join(b)));
        }
        out.push(("early_stop", self.early_stop.to_string()));
        out
    }

    pub fn to_kv_string(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.to_kv_pairs() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}
