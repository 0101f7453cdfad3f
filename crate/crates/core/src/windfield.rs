//! Static gradient wind field, landfall pressure deficit and inland decay.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WindError {
    #[error("invalid wind field parameters: {0}")]
    InvalidParams(String),
    #[error("wind speed requested at negative distance {0} nmi")]
    NegativeDistance(f64),
    #[error("landfall pressure undefined for these parameters (lat {lat}, r_vmax {r_vmax} nmi)")]
    PressureUndefined { lat: f64, r_vmax: f64 },
}

/// Defines one static radial wind profile.
///
/// Speeds are in knots and radii in nautical miles. `k` shapes the inner
/// rise towards the radius of maximum wind, `beta` is the factor by which the
/// peak speed has dropped at the outer boundary `r_s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindFieldParams {
    pub v_max: f64,
    pub r_vmax: f64,
    pub r_s: f64,
    pub k: f64,
    pub beta: f64,
}

impl WindFieldParams {
    pub fn new(v_max: f64, r_vmax: f64, r_s: f64, k: f64, beta: f64) -> Result<Self, WindError> {
        let p = Self {
            v_max,
            r_vmax,
            r_s,
            k,
            beta,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), WindError> {
        let bad = |m: String| Err(WindError::InvalidParams(m));
        if !(self.v_max > 0.0 && self.v_max.is_finite()) {
            return bad(format!("v_max must be positive, got {}", self.v_max));
        }
        if !(self.r_vmax > 0.0 && self.r_vmax < self.r_s && self.r_s.is_finite()) {
            return bad(format!(
                "radii must satisfy 0 < r_vmax < r_s, got r_vmax {} r_s {}",
                self.r_vmax, self.r_s
            ));
        }
        if !(self.k > 1.0 && self.k.is_finite()) {
            return bad(format!("K must exceed 1, got {}", self.k));
        }
        if !(self.beta > 1.0 && self.beta.is_finite()) {
            return bad(format!("beta must exceed 1, got {}", self.beta));
        }
        Ok(())
    }

    /// Inner growth rate, `ln(K / (K - 1)) / r_vmax`.
    pub fn psi(&self) -> f64 {
        (self.k / (self.k - 1.0)).ln() / self.r_vmax
    }

    /// Outer decay rate, `ln(beta) / (r_s - r_vmax)`.
    pub fn lambda(&self) -> f64 {
        self.beta.ln() / (self.r_s - self.r_vmax)
    }

    fn speed_unchecked(&self, x: f64) -> f64 {
        if x < self.r_vmax {
            self.k * self.v_max * -(-self.psi() * x).exp_m1()
        } else if x <= self.r_s {
            self.v_max * (-self.lambda() * (x - self.r_vmax)).exp()
        } else {
            0.0
        }
    }
}

/// Wind speed (knots) at distance `x` nmi from the eye.
pub fn gradient_wind(params: &WindFieldParams, x: f64) -> Result<f64, WindError> {
    if x < 0.0 || x.is_nan() {
        return Err(WindError::NegativeDistance(x));
    }
    Ok(params.speed_unchecked(x))
}

const PRESSURE_INTERCEPT: f64 = 2.636;
const PRESSURE_LAT_COEFF: f64 = 0.0394899;
const PRESSURE_SCALE: f64 = 5.086e-4;
// radicands within rounding noise of zero count as the boundary
const RADICAND_TOLERANCE: f64 = 1e-12;

/// Central pressure deficit at landfall from latitude (degrees) and r_vmax (nmi).
pub fn landfall_pressure(lat: f64, r_vmax: f64) -> Result<f64, WindError> {
    let undefined = WindError::PressureUndefined { lat, r_vmax };
    if !(r_vmax > 0.0) {
        return Err(undefined);
    }
    let numer = PRESSURE_INTERCEPT + PRESSURE_LAT_COEFF * lat - r_vmax.ln();
    if numer < -RADICAND_TOLERANCE || numer.is_nan() {
        return Err(undefined);
    }
    Ok((numer.max(0.0) / PRESSURE_SCALE).sqrt())
}

/// Pressure deficit after `t` hours of exponential land decay.
pub fn decay_pressure(delta_p0: f64, alpha: f64, t: f64) -> f64 {
    delta_p0 * (-alpha * t).exp()
}

/// Advances a wind field by one time step.
///
/// The peak speed follows the pressure-deficit ratio between the two steps and
/// both radii grow by `growth_rate`.
pub fn evolve_params(prev: &WindFieldParams, pressure_ratio: f64, growth_rate: f64) -> WindFieldParams {
    let scale = 1.0 + growth_rate;
    WindFieldParams {
        v_max: prev.v_max * pressure_ratio,
        r_vmax: prev.r_vmax * scale,
        r_s: prev.r_s * scale,
        k: prev.k,
        beta: prev.beta,
    }
}

/// One sampled hurricane and its wind field at every simulated time step.
#[derive(Debug, Clone, PartialEq)]
pub struct HurricaneScenario {
    pub id: usize,
    pub landfall_params: WindFieldParams,
    pub delta_p0: f64,
    pub alpha: f64,
    /// `(t_hours, params)` in time order, starting at t = 0.
    pub params_by_step: Vec<(f64, WindFieldParams)>,
}

impl HurricaneScenario {
    /// Evolves landfall parameters across `time_steps` using pressure decay.
    pub fn evolve(
        id: usize,
        landfall_params: WindFieldParams,
        delta_p0: f64,
        alpha: f64,
        growth_rate: f64,
        time_steps: &[f64],
    ) -> Self {
        let mut params_by_step = Vec::with_capacity(time_steps.len());
        let mut current = landfall_params;
        let mut prev_t = 0.0;
        let mut prev_dp = delta_p0;
        for (i, &t) in time_steps.iter().enumerate() {
            if i > 0 {
                let dp = decay_pressure(delta_p0, alpha, t);
                let ratio = if prev_dp > 0.0 {
                    dp / prev_dp
                } else {
                    (-alpha * (t - prev_t)).exp()
                };
                current = evolve_params(&current, ratio, growth_rate);
                prev_dp = dp;
            }
            prev_t = t;
            params_by_step.push((t, current));
        }
        Self {
            id,
            landfall_params,
            delta_p0,
            alpha,
            params_by_step,
        }
    }

    pub fn params_at(&self, step: usize) -> &WindFieldParams {
        &self.params_by_step[step].1
    }

    pub fn delta_p_at(&self, t: f64) -> f64 {
        decay_pressure(self.delta_p0, self.alpha, t)
    }
}
