//! Discretized planning space.
//!
//! Planar cells are boxes with centers at `min + (i + ½)·step`. Heading cells
//! are centered on `−π + k·dλ` and wrap around.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub n_x: usize,
    pub y_min: f64,
    pub y_max: f64,
    pub n_y: usize,
}

impl PlaneGrid {
    pub fn new(x: (f64, f64), n_x: usize, y: (f64, f64), n_y: usize) -> Result<Self> {
        let g = PlaneGrid {
            x_min: x.0,
            x_max: x.1,
            n_x,
            y_min: y.0,
            y_max: y.1,
            n_y,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_x < 2 || self.n_y < 2 {
            return Err(Error::Config(format!(
                "grid needs at least 2 cells per axis, got {}×{}",
                self.n_x, self.n_y
            )));
        }
        if !(self.x_max > self.x_min) || !(self.y_max > self.y_min) {
            return Err(Error::Config("grid ranges must be increasing".into()));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_x as f64
    }

    pub fn dy(&self) -> f64 {
        (self.y_max - self.y_min) / self.n_y as f64
    }

    pub fn len(&self) -> usize {
        self.n_x * self.n_y
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x_center(&self, ix: usize) -> f64 {
        self.x_min + (ix as f64 + 0.5) * self.dx()
    }

    pub fn y_center(&self, iy: usize) -> f64 {
        self.y_min + (iy as f64 + 0.5) * self.dy()
    }

    /// Row-major over y: `iy * n_x + ix`.
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.n_x + ix
    }

    pub fn center_of(&self, idx: usize) -> [f64; 2] {
        [self.x_center(idx % self.n_x), self.y_center(idx / self.n_x)]
    }

    /// Signed cell index along x; may lie outside `0..n_x`.
    pub fn x_cell(&self, x: f64) -> i64 {
        ((x - self.x_min) / self.dx()).floor() as i64
    }

    pub fn y_cell(&self, y: f64) -> i64 {
        ((y - self.y_min) / self.dy()).floor() as i64
    }

    pub fn locate(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let (ix, iy) = (self.x_cell(x), self.y_cell(y));
        (0..self.n_x as i64)
            .contains(&ix)
            .then_some(())
            .filter(|_| (0..self.n_y as i64).contains(&iy))
            .map(|_| (ix as usize, iy as usize))
    }

    /// Half the diagonal of the covered rectangle.
    pub fn half_diagonal(&self) -> f64 {
        0.5 * (self.x_max - self.x_min).hypot(self.y_max - self.y_min)
    }
}

/// Full state grid: plane × heading, plus the time discretization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    #[serde(flatten)]
    pub plane: PlaneGrid,
    pub n_heading: usize,
    /// Time step δ, minutes.
    pub step_minutes: f64,
    /// Number of decision steps N.
    pub steps: usize,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        self.plane.validate()?;
        if self.n_heading < 2 {
            return Err(Error::Config("need at least 2 heading cells".into()));
        }
        if !(self.step_minutes > 0.0) {
            return Err(Error::Config("time step must be positive".into()));
        }
        if self.steps == 0 {
            return Err(Error::Config("need at least one time step".into()));
        }
        Ok(())
    }

    pub fn d_heading(&self) -> f64 {
        TAU / self.n_heading as f64
    }

    pub fn heading_center(&self, ih: usize) -> f64 {
        -PI + ih as f64 * self.d_heading()
    }

    /// Heading cell whose center is nearest to `heading`, with wrap-around.
    pub fn heading_cell(&self, heading: f64) -> usize {
        let k = ((heading + PI) / self.d_heading()).round() as i64;
        k.rem_euclid(self.n_heading as i64) as usize
    }

    /// Number of grid states, excluding the absorbing lost state.
    pub fn n_states(&self) -> usize {
        self.plane.len() * self.n_heading
    }

    /// Index of the absorbing state entered on leaving the plane grid.
    pub fn lost_state(&self) -> usize {
        self.n_states()
    }

    pub fn state_index(&self, ix: usize, iy: usize, ih: usize) -> usize {
        self.plane.index(ix, iy) * self.n_heading + ih
    }

    /// `(plane index, heading index)` of a grid state.
    pub fn split(&self, state: usize) -> (usize, usize) {
        (state / self.n_heading, state % self.n_heading)
    }

    pub fn state_center(&self, state: usize) -> [f64; 3] {
        let (p, h) = self.split(state);
        let [x, y] = self.plane.center_of(p);
        [x, y, self.heading_center(h)]
    }

    /// Nearest-cell lookup of a continuous state; `None` off the plane grid.
    pub fn locate(&self, s: [f64; 3]) -> Option<usize> {
        let (ix, iy) = self.plane.locate(s[0], s[1])?;
        Some(self.state_index(ix, iy, self.heading_cell(s[2])))
    }

    pub fn total_minutes(&self) -> f64 {
        self.steps as f64 * self.step_minutes
    }
}

/// Wraps an angle into [−π, π).
pub fn wrap_angle(a: f64) -> f64 {
    (a + PI).rem_euclid(TAU) - PI
}
