//! Wind experienced by each line and its fragility-curve outage probability.

use thiserror::Error;

use crate::geo::{segment_distance_bounds, DistanceBounds, GeoPoint};
use crate::grid::{GridError, GridModel};
use crate::windfield::WindFieldParams;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("fragility thresholds must satisfy 0 < v_cri < v_col, got v_cri {v_cri} v_col {v_col}")]
pub struct FragilityError {
    pub v_cri: f64,
    pub v_col: f64,
}

/// Linear fragility curve between a critical and a collapse wind speed (knots).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FragilityCurve {
    v_cri: f64,
    v_col: f64,
}

impl FragilityCurve {
    pub const DEFAULT_V_CRI: f64 = 48.59;
    pub const DEFAULT_V_COL: f64 = 106.91;

    pub fn new(v_cri: f64, v_col: f64) -> Result<Self, FragilityError> {
        if !(v_cri > 0.0 && v_cri < v_col && v_col.is_finite()) {
            return Err(FragilityError { v_cri, v_col });
        }
        Ok(Self { v_cri, v_col })
    }

    pub fn v_cri(&self) -> f64 {
        self.v_cri
    }

    pub fn v_col(&self) -> f64 {
        self.v_col
    }
}

impl Default for FragilityCurve {
    fn default() -> Self {
        Self {
            v_cri: Self::DEFAULT_V_CRI,
            v_col: Self::DEFAULT_V_COL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineExposure {
    pub branch_id: usize,
    pub gamma: f64,
    pub d_bounds: DistanceBounds,
    pub p_out: f64,
}

/// Peak wind along a line given its distance bounds from the eye.
///
/// A line spanning the radius of maximum wind sees `v_max`; otherwise the
/// larger of the profile values at its nearest and farthest distance.
pub fn line_wind_speed(params: &WindFieldParams, d_bounds: DistanceBounds) -> f64 {
    if d_bounds.is_outside() {
        return 0.0;
    }
    if d_bounds.d_min <= params.r_vmax && params.r_vmax <= d_bounds.d_max {
        return params.v_max;
    }
    let near = crate::windfield::gradient_wind(params, d_bounds.d_min).unwrap_or(0.0);
    let far = crate::windfield::gradient_wind(params, d_bounds.d_max).unwrap_or(0.0);
    near.max(far)
}

pub fn outage_probability(gamma: f64, curve: &FragilityCurve) -> f64 {
    if gamma < curve.v_cri {
        0.0
    } else if gamma < curve.v_col {
        (gamma - curve.v_cri) / (curve.v_col - curve.v_cri)
    } else {
        1.0
    }
}

/// Exposure of every branch to one wind field centred at `eye`.
///
/// Wind-exempt branches get zero wind and zero outage probability.
pub fn exposure_for_step(
    grid: &GridModel,
    params: &WindFieldParams,
    eye: GeoPoint,
    curve: &FragilityCurve,
) -> Result<Vec<LineExposure>, GridError> {
    grid.branches()
        .iter()
        .enumerate()
        .map(|(idx, br)| {
            let (a, b) = grid.branch_endpoints(idx)?;
            let d_bounds = segment_distance_bounds(eye, a, b);
            if br.wind_exempt {
                return Ok(LineExposure {
                    branch_id: br.id,
                    gamma: 0.0,
                    d_bounds,
                    p_out: 0.0,
                });
            }
            let gamma = line_wind_speed(params, d_bounds);
            Ok(LineExposure {
                branch_id: br.id,
                gamma,
                d_bounds,
                p_out: outage_probability(gamma, curve),
            })
        })
        .collect()
}
