use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::wrap_angle;

/// Smallest variance used for any noise dimension.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Control codes in tie-break order: straight, left (+Ω), right (−Ω).
pub const CONTROLS: [i8; 3] = [0, 1, -1];

const MS_TO_KMH: f64 = 3.6;

/// Unicycle aircraft model with additive Gaussian disturbance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AircraftParams {
    pub airspeed_kmh: f64,
    /// Yaw-rate magnitude Ω, rad/min.
    pub yaw_rate: f64,
    /// Zonal (West to East) wind, km/h.
    pub wind_u_kmh: f64,
    /// Meridional (South to North) wind, km/h.
    pub wind_v_kmh: f64,
    /// Per-step disturbance variances: km², km², rad².
    pub noise_var: [f64; 3],
}

impl Default for AircraftParams {
    /// 792 km/h, 0.3 rad/min, wind (2.6, 5.6) m/s, variances
    /// (0.25 km², 0.25 km², 4e-5 rad²).
    fn default() -> Self {
        AircraftParams {
            airspeed_kmh: 792.0,
            yaw_rate: 0.3,
            wind_u_kmh: 2.6 * MS_TO_KMH,
            wind_v_kmh: 5.6 * MS_TO_KMH,
            noise_var: [0.25, 0.25, 4e-5],
        }
    }
}

impl AircraftParams {
    pub fn validate(&self, step_minutes: f64) -> Result<()> {
        if !(self.airspeed_kmh > 0.0) || !self.airspeed_kmh.is_finite() {
            return Err(Error::Config(format!("airspeed must be positive, got {}", self.airspeed_kmh)));
        }
        if !(self.yaw_rate > 0.0) {
            return Err(Error::Config(format!("yaw rate must be positive, got {}", self.yaw_rate)));
        }
        if self.yaw_rate * step_minutes >= PI {
            return Err(Error::Config(format!(
                "one {step_minutes}-min step turns {} rad at Ω = {}; must stay below π",
                self.yaw_rate * step_minutes,
                self.yaw_rate
            )));
        }
        if !self.wind_u_kmh.is_finite() || !self.wind_v_kmh.is_finite() {
            return Err(Error::Config("wind must be finite".into()));
        }
        if self.noise_var.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Config(format!("noise variances must be ≥ 0, got {:?}", self.noise_var)));
        }
        Ok(())
    }

    /// Variances with zeros raised to [`VARIANCE_FLOOR`], warning once per
    /// floored dimension.
    pub fn effective_variances(&self) -> [f64; 3] {
        let mut v = self.noise_var;
        for (i, var) in v.iter_mut().enumerate() {
            if *var < VARIANCE_FLOOR {
                log::warn!("noise variance {} in dimension {i} raised to {VARIANCE_FLOOR}", *var);
                *var = VARIANCE_FLOOR;
            }
        }
        v
    }

    /// Yaw rate of a control code, rad/min.
    pub fn yaw(&self, code: i8) -> f64 {
        code as f64 * self.yaw_rate
    }

    /// Deterministic part of one `step_minutes` step, heading wrapped.
    pub fn mean_successor(&self, s: [f64; 3], code: i8, step_minutes: f64) -> [f64; 3] {
        let h = step_minutes / 60.0;
        let (sin, cos) = s[2].sin_cos();
        [
            s[0] + h * (self.airspeed_kmh * cos + self.wind_u_kmh),
            s[1] + h * (self.airspeed_kmh * sin + self.wind_v_kmh),
            wrap_angle(s[2] + step_minutes * self.yaw(code)),
        ]
    }
}
