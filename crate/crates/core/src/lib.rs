//! Probabilistic hurricane impact assessment for transmission grids.
//!
//! Hurricanes are modelled as radial gradient wind fields whose eye moves
//! along forecast tracks and whose intensity decays over land. Each line's
//! peak wind is mapped to an outage probability through a fragility curve,
//! outages are sampled by chained Monte-Carlo trials, and the loss is the
//! load islanded from the main grid.

// `!(a > b)` is used on purpose so NaN inputs fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod engine;
pub mod geo;
pub mod grid;
pub mod impact;
pub mod scenario;
pub mod windfield;

pub use config::{ConfigError, SimulationConfig};
pub use engine::{CellPlan, CellResult, EngineError, LossTable, TrialResult};
pub use geo::{DistanceBounds, GeoError, GeoPoint, LocalPoint};
pub use grid::{GridError, GridModel, OutageState};
pub use impact::{FragilityCurve, LineExposure};
pub use scenario::{HistoryTable, Kde, ScenarioError, Track};
pub use windfield::{HurricaneScenario, WindError, WindFieldParams};
