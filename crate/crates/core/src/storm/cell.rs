use std::f64::consts::FRAC_PI_2;

use rand::Rng;

use crate::error::Result;
use crate::grid::wrap_angle;
use crate::nowcast::{project_extent, PlanarBox, PlanarFrame, StormCellObservation, FORECAST_SLOTS, HORIZON_MINUTES};
use crate::stats::ErrorModelSet;

/// Planar storm cell: center, extremities, size and motion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StormCellState {
    pub center: [f64; 2],
    pub extent: PlanarBox,
    pub pixels: u32,
    /// Heading, radians counter-clockwise from East.
    pub heading: f64,
    pub speed_kmh: f64,
}

/// An observed cell together with its planar center forecasts.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastCell {
    pub id: u32,
    pub state: StormCellState,
    pub forecasts: [Option<[f64; 2]>; FORECAST_SLOTS],
}

/// Nowcast direction (degrees clockwise from North) to radians
/// counter-clockwise from East, in [−π, π).
pub fn heading_from_north_cw(deg: f64) -> f64 {
    wrap_angle(FRAC_PI_2 - deg.to_radians())
}

impl ForecastCell {
    pub fn from_observation(obs: &StormCellObservation, frame: &PlanarFrame) -> Result<Self> {
        let (center, extent) = project_extent(obs, frame)?;
        let mut forecasts = [None; FORECAST_SLOTS];
        for (slot, f) in forecasts.iter_mut().enumerate() {
            if let Some(g) = obs.center_forecasts[slot] {
                *f = Some(frame.project(g)?);
            }
        }
        Ok(ForecastCell {
            id: obs.id,
            state: StormCellState {
                center,
                extent,
                pixels: obs.pixels,
                heading: heading_from_north_cw(obs.heading_deg),
                speed_kmh: obs.speed_kmh,
            },
            forecasts,
        })
    }

    /// Uncorrected center at horizon `tau` (1-based).
    ///
    /// Missing horizons are extrapolated linearly from the observed center
    /// through the nearest available forecast, or along the reported motion
    /// when the row carries no forecast at all.
    pub fn forecast_center(&self, tau: usize) -> [f64; 2] {
        if let Some(f) = tau.checked_sub(1).and_then(|i| self.forecasts.get(i).copied().flatten()) {
            return f;
        }
        let c = self.state.center;
        let nearest = self
            .forecasts
            .iter()
            .enumerate()
            .filter_map(|(i, f)| f.map(|p| (i + 1, p)))
            .min_by_key(|(k, _)| (k.abs_diff(tau), *k));
        match nearest {
            Some((k, p)) => {
                let r = tau as f64 / k as f64;
                [c[0] + (p[0] - c[0]) * r, c[1] + (p[1] - c[1]) * r]
            }
            None => {
                let dist = self.state.speed_kmh * (HORIZON_MINUTES as f64 * tau as f64) / 60.0;
                let (s, co) = self.state.heading.sin_cos();
                [c[0] + dist * co, c[1] + dist * s]
            }
        }
    }

    /// Forecast state at horizon `tau` with no sampled error.
    pub fn nominal(&self, tau: usize) -> StormCellState {
        let c = self.forecast_center(tau);
        let (c0, e) = (self.state.center, self.state.extent);
        StormCellState {
            center: c,
            extent: PlanarBox {
                west: c[0] + (e.west - c0[0]),
                east: c[0] + (e.east - c0[0]),
                south: c[1] + (e.south - c0[1]),
                north: c[1] + (e.north - c0[1]),
            },
            ..self.state
        }
    }
}

/// Draws one realization of the cell at horizon `tau`.
///
/// The center is the forecast plus a sampled error; the extremities keep the
/// cell's initial offsets from the center and move out (or in) by half of
/// the summed per-step width/height increments, one draw per 10-minute step.
/// An extremity never crosses the center.
pub fn sample_cell_path<R: Rng + ?Sized>(
    cell: &ForecastCell,
    models: &ErrorModelSet,
    tau: usize,
    rng: &mut R,
) -> Result<StormCellState> {
    let (ex, ey) = models.center(tau)?;
    let f = cell.forecast_center(tau);
    let center = [f[0] + ex.sample(rng), f[1] + ey.sample(rng)];

    let wm = models.width_growth.at(cell.state.pixels);
    let hm = models.height_growth.at(cell.state.pixels);
    let (mut dw, mut dh) = (0.0, 0.0);
    for _ in 0..tau {
        dw += wm.sample(rng);
        dh += hm.sample(rng);
    }

    let (c0, e) = (cell.state.center, cell.state.extent);
    let extent = PlanarBox {
        west: (center[0] + (e.west - c0[0]) - 0.5 * dw).min(center[0]),
        east: (center[0] + (e.east - c0[0]) + 0.5 * dw).max(center[0]),
        south: (center[1] + (e.south - c0[1]) - 0.5 * dh).min(center[1]),
        north: (center[1] + (e.north - c0[1]) + 0.5 * dh).max(center[1]),
    };
    Ok(StormCellState {
        center,
        extent,
        ..cell.state
    })
}
