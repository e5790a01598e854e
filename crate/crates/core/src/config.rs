//! Run configuration file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, PlaneGrid};
use crate::nowcast::{PlanarBox, PlanarFrame, FORECAST_SLOTS, HORIZON_MINUTES};
use crate::reach::AircraftParams;
use crate::stats::GrowthFitOptions;
use crate::storm::{ClusterCount, StormOptions, DEFAULT_MVE_TOLERANCE, MIN_SEMI_AXIS_KM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    /// Directory of consecutive nowcast files used for fitting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub archive: Option<PathBuf>,
    /// Nowcast file issued at the planning time.
    pub nowcast: PathBuf,
    /// Directory of observation files from the planning time on, used to
    /// score rollouts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed: Option<PathBuf>,
    pub output: PathBuf,
    /// Error model file; defaults to `models.toml` in the output directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub models: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameConfig {
    pub lat0: f64,
    pub lon0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standard_parallel: Option<f64>,
}

impl FrameConfig {
    pub fn frame(&self) -> PlanarFrame {
        match self.standard_parallel {
            Some(p) => PlanarFrame::with_parallel(self.lat0, self.lon0, p),
            None => PlanarFrame::new(self.lat0, self.lon0),
        }
    }
}

/// `clusters = 12` or `clusters = "auto"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClusterSetting {
    Fixed(usize),
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StormConfig {
    pub clusters: ClusterSetting,
    /// Largest K tried by the elbow rule.
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    pub samples: usize,
    /// Forecast horizons to fit and forecast, 10 minutes each.
    pub horizons: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heading_weight: Option<f64>,
    #[serde(default = "default_elbow")]
    pub elbow_threshold: f64,
    #[serde(default = "default_per_bucket")]
    pub min_per_bucket: usize,
    #[serde(default = "default_min_scale")]
    pub min_scale: f64,
}

fn default_k_max() -> usize {
    20
}
fn default_elbow() -> f64 {
    crate::storm::kmeans::DEFAULT_ELBOW_THRESHOLD
}
fn default_per_bucket() -> usize {
    GrowthFitOptions::default().min_per_bucket
}
fn default_min_scale() -> f64 {
    GrowthFitOptions::default().min_scale
}

impl StormConfig {
    pub fn options(&self) -> Result<StormOptions> {
        let clusters = match &self.clusters {
            ClusterSetting::Fixed(0) => return Err(Error::Config("storm.clusters must be at least 1".into())),
            ClusterSetting::Fixed(k) => ClusterCount::Fixed(*k),
            ClusterSetting::Named(s) if s == "auto" => ClusterCount::Auto { k_max: self.k_max },
            ClusterSetting::Named(s) => {
                return Err(Error::Config(format!("storm.clusters must be a number or \"auto\", got {s:?}")))
            }
        };
        Ok(StormOptions {
            clusters,
            samples: self.samples,
            heading_weight: self.heading_weight,
            elbow_threshold: self.elbow_threshold,
            mve_tolerance: DEFAULT_MVE_TOLERANCE,
            mve_pad: MIN_SEMI_AXIS_KM,
        })
    }

    pub fn growth_options(&self) -> GrowthFitOptions {
        GrowthFitOptions {
            min_per_bucket: self.min_per_bucket,
            min_scale: self.min_scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    /// Initial state (x km, y km, heading rad counter-clockwise from East).
    pub start: [f64; 3],
    pub goal: PlanarBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoringMode {
    /// Observed cell rectangles from `paths.observed`.
    Observed,
    /// Bernoulli draws from the planning storm field.
    Field,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub rollouts: usize,
    pub scoring: ScoringMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: PathsConfig,
    pub frame: FrameConfig,
    pub grid: GridSpec,
    #[serde(default)]
    pub aircraft: AircraftParams,
    pub storm: StormConfig,
    pub problem: ProblemConfig,
    pub simulate: SimulateConfig,
}

impl RunConfig {
    /// Reads a config file and resolves relative paths against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let paths = &mut self.paths;
        fix(&mut paths.nowcast);
        fix(&mut paths.output);
        for p in [&mut paths.archive, &mut paths.observed, &mut paths.models].into_iter().flatten() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.aircraft.validate(self.grid.step_minutes)?;
        self.storm.options()?;
        if self.storm.samples == 0 {
            return Err(Error::Config("storm.samples must be at least 1".into()));
        }
        if self.storm.horizons == 0 || self.storm.horizons > FORECAST_SLOTS {
            return Err(Error::Config(format!(
                "storm.horizons must be in 1..={FORECAST_SLOTS}, got {}",
                self.storm.horizons
            )));
        }
        let field_minutes = (self.storm.horizons as i64 * HORIZON_MINUTES) as f64;
        if self.grid.total_minutes() > field_minutes + 1e-9 {
            return Err(Error::Config(format!(
                "planning horizon {} min exceeds the {field_minutes}-min storm forecast",
                self.grid.total_minutes()
            )));
        }
        if self.grid.locate(self.problem.start).is_none() {
            return Err(Error::Config(format!("start {:?} lies outside the grid", self.problem.start)));
        }
        let g = self.problem.goal;
        if !(g.east > g.west && g.north > g.south) {
            return Err(Error::Config(format!("goal box {g:?} is empty")));
        }
        if self.simulate.rollouts == 0 {
            return Err(Error::Config("simulate.rollouts must be at least 1".into()));
        }
        Ok(())
    }

    pub fn plane(&self) -> PlaneGrid {
        self.grid.plane
    }

    pub fn models_path(&self) -> PathBuf {
        self.paths
            .models
            .clone()
            .unwrap_or_else(|| self.paths.output.join("models.toml"))
    }
}
