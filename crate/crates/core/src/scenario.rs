//! Synthetic nowcast scenarios with scripted storm motion and growth.
//!
//! Ground-truth cells move at a nominal velocity plus a logistic random
//! walk, and their width and height change by logistic increments whose
//! scale grows with ln(pixels). Each file's center forecasts extrapolate the
//! nominal velocity, so forecast errors follow the same laws the fitting
//! code estimates.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::Rng;

use crate::config::{
    ClusterSetting, FrameConfig, PathsConfig, ProblemConfig, RunConfig, ScoringMode, SimulateConfig, StormConfig,
};
use crate::error::{Error, Result};
use crate::grid::{GridSpec, PlaneGrid};
use crate::nowcast::{
    write_nowcast, NowcastFile, PlanarBox, PlanarFrame, StormCellObservation, FORECAST_SLOTS,
    HORIZON_MINUTES,
};
use crate::reach::AircraftParams;
use crate::rng::{stream_id, stream_rng};
use crate::stats::LogisticModel;

const STREAM_SCENARIO: u8 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    /// Two storm clusters with a flyable gap on the direct route.
    Gap,
    /// Start beyond 40 minutes' flight from the goal but within 60.
    FarStart,
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gap" => Ok(ScenarioKind::Gap),
            "far-start" => Ok(ScenarioKind::FarStart),
            other => Err(Error::Config(format!("unknown scenario {other:?}; expected gap or far-start"))),
        }
    }
}

/// Stochastic laws of the ground-truth storms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthLaws {
    /// Logistic scale of the per-step center displacement error, km.
    pub center_scale: f64,
    /// Location of the per-step width/height increment, km.
    pub growth_location: f64,
    /// Increment scale `a + b·ln(pixels)`, km.
    pub growth_intercept: f64,
    pub growth_slope: f64,
}

impl Default for TruthLaws {
    fn default() -> Self {
        TruthLaws {
            center_scale: 1.5,
            growth_location: 0.2,
            growth_intercept: 0.1,
            growth_slope: 0.08,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct TruthCell {
    id: u32,
    center: [f64; 2],
    /// Nominal velocity, km/min.
    velocity: [f64; 2],
    half: [f64; 2],
}

impl TruthCell {
    fn pixels(&self) -> u32 {
        (4.0 * self.half[0] * self.half[1]).round().max(1.0) as u32
    }

    fn advance<R: Rng + ?Sized>(&mut self, laws: &TruthLaws, rng: &mut R) {
        let err = LogisticModel { m: 0.0, s: laws.center_scale };
        let step = HORIZON_MINUTES as f64;
        for d in 0..2 {
            self.center[d] += step * self.velocity[d] + err.sample(rng);
        }
        let growth = LogisticModel {
            m: laws.growth_location,
            s: laws.growth_intercept + laws.growth_slope * (self.pixels() as f64).ln(),
        };
        for d in 0..2 {
            self.half[d] = (self.half[d] + 0.5 * growth.sample(rng)).max(1.0);
        }
    }

    fn observe(&self, frame: &PlanarFrame) -> Result<StormCellObservation> {
        let [cx, cy] = self.center;
        let [hw, hh] = self.half;
        let center = frame.unproject([cx, cy])?;
        let mut forecasts = [None; FORECAST_SLOTS];
        for (i, f) in forecasts.iter_mut().enumerate() {
            let t = ((i + 1) as i64 * HORIZON_MINUTES) as f64;
            *f = Some(frame.unproject([cx + t * self.velocity[0], cy + t * self.velocity[1]])?);
        }
        let [vx, vy] = self.velocity;
        let heading = vx.atan2(vy).to_degrees().rem_euclid(360.0);
        let pixels = self.pixels();
        Ok(StormCellObservation {
            id: self.id,
            pixels,
            center,
            radius_km: (pixels as f64 / std::f64::consts::PI).sqrt(),
            west: frame.unproject([cx - hw, cy])?.lon.min(center.lon),
            east: frame.unproject([cx + hw, cy])?.lon.max(center.lon),
            south: frame.unproject([cx, cy - hh])?.lat.min(center.lat),
            north: frame.unproject([cx, cy + hh])?.lat.max(center.lat),
            center_forecasts: forecasts,
            heading_deg: if heading >= 360.0 { 0.0 } else { heading },
            speed_kmh: 60.0 * vx.hypot(vy),
        })
    }
}

/// A generated scenario: fitting archive, planning nowcast, observations
/// from the planning time on, and a run configuration with relative paths.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub archive: Vec<NowcastFile>,
    pub nowcast: NowcastFile,
    pub observed: Vec<NowcastFile>,
    pub config: RunConfig,
}

pub fn planning_time() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2016, 12, 19)
        .and_then(|d| d.and_hms_opt(10, 30, 0))
        .expect("valid date")
}

/// Frame centered on the scenario area.
pub fn scenario_frame() -> FrameConfig {
    FrameConfig {
        lat0: 39.5,
        lon0: 2.5,
        standard_parallel: None,
    }
}

/// The 33×28×32 grid over [−650, 100]×[−550, 200] km with 2-min steps.
pub fn coarse_grid(steps: usize) -> GridSpec {
    GridSpec {
        plane: PlaneGrid {
            x_min: -650.0,
            x_max: 100.0,
            n_x: 33,
            y_min: -550.0,
            y_max: 200.0,
            n_y: 28,
        },
        n_heading: 32,
        step_minutes: 2.0,
        steps,
    }
}

fn snapshot(cells: &[TruthCell], frame: &PlanarFrame, issue_time: NaiveDateTime) -> Result<NowcastFile> {
    Ok(NowcastFile {
        issue_time,
        cells: cells.iter().map(|c| c.observe(frame)).collect::<Result<_>>()?,
    })
}

fn evolve<R: Rng + ?Sized>(
    mut cells: Vec<TruthCell>,
    frame: &PlanarFrame,
    start: NaiveDateTime,
    files: usize,
    laws: &TruthLaws,
    rng: &mut R,
) -> Result<Vec<NowcastFile>> {
    let mut out = Vec::with_capacity(files);
    for k in 0..files {
        if k > 0 {
            for c in &mut cells {
                c.advance(laws, rng);
            }
        }
        out.push(snapshot(&cells, frame, start + Duration::minutes(k as i64 * HORIZON_MINUTES))?);
    }
    Ok(out)
}

fn training_cells<R: Rng + ?Sized>(n: u32, rng: &mut R) -> Vec<TruthCell> {
    (0..n)
        .map(|i| {
            let speed = rng.random_range(10.0..40.0) / 60.0;
            let dir = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            TruthCell {
                id: 100 + i,
                center: [rng.random_range(-600.0..50.0), rng.random_range(-500.0..150.0)],
                velocity: [speed * dir.cos(), speed * dir.sin()],
                half: [rng.random_range(5.0..20.0), rng.random_range(5.0..20.0)],
            }
        })
        .collect()
}

/// `count` cells scattered around `center`, drifting at `velocity` km/min.
fn cluster<R: Rng + ?Sized>(
    first_id: u32,
    count: u32,
    center: [f64; 2],
    spread: [f64; 2],
    velocity: [f64; 2],
    rng: &mut R,
) -> Vec<TruthCell> {
    (0..count)
        .map(|i| TruthCell {
            id: first_id + i,
            center: [
                center[0] + rng.random_range(-spread[0]..=spread[0]),
                center[1] + rng.random_range(-spread[1]..=spread[1]),
            ],
            velocity,
            half: [rng.random_range(8.0..15.0), rng.random_range(8.0..15.0)],
        })
        .collect()
}

struct Preset {
    cells: Vec<TruthCell>,
    start: [f64; 3],
    goal: PlanarBox,
    steps: usize,
    horizons: usize,
    rollouts: usize,
}

fn preset<R: Rng + ?Sized>(kind: ScenarioKind, rng: &mut R) -> Preset {
    match kind {
        ScenarioKind::Gap => {
            let mut cells = cluster(1, 7, [-380.0, -30.0], [50.0, 35.0], [0.15, -0.1], rng);
            cells.extend(cluster(11, 7, [-360.0, -290.0], [50.0, 35.0], [0.15, 0.1], rng));
            cells.extend(cluster(21, 2, [-80.0, 130.0], [20.0, 20.0], [0.2, 0.0], rng));
            Preset {
                cells,
                start: [-560.0, -160.0, 0.0],
                goal: PlanarBox { west: -170.0, east: -110.0, south: -190.0, north: -130.0 },
                steps: 20,
                horizons: 4,
                rollouts: 10_000,
            }
        }
        ScenarioKind::FarStart => {
            let mut cells = cluster(1, 5, [-450.0, 100.0], [40.0, 30.0], [0.1, 0.0], rng);
            cells.extend(cluster(11, 5, [-80.0, -450.0], [40.0, 30.0], [0.1, 0.0], rng));
            let (start, goal_center): ([f64; 2], [f64; 2]) = ([-520.0, -400.0], [10.0, 50.0]);
            let heading = (goal_center[1] - start[1]).atan2(goal_center[0] - start[0]);
            Preset {
                cells,
                start: [start[0], start[1], heading],
                goal: PlanarBox { west: -20.0, east: 40.0, south: 20.0, north: 80.0 },
                steps: 30,
                horizons: 6,
                rollouts: 2_000,
            }
        }
    }
}

/// Generates a scenario deterministically from `seed`.
pub fn generate_scenario(kind: ScenarioKind, seed: u64) -> Result<Scenario> {
    let laws = TruthLaws::default();
    let frame_cfg = scenario_frame();
    let frame = frame_cfg.frame();
    let t_plan = planning_time();

    let mut train_rng = stream_rng(seed, stream_id(STREAM_SCENARIO, 0, 0));
    let train_files = 18;
    let archive_start = t_plan - Duration::minutes(train_files as i64 * HORIZON_MINUTES);
    let archive = evolve(training_cells(24, &mut train_rng), &frame, archive_start, train_files, &laws, &mut train_rng)?;

    let mut rng = stream_rng(seed, stream_id(STREAM_SCENARIO, 1, 0));
    let p = preset(kind, &mut rng);
    let observed = evolve(p.cells, &frame, t_plan, FORECAST_SLOTS + 1, &laws, &mut rng)?;
    let nowcast = observed[0].clone();

    let config = RunConfig {
        seed,
        paths: PathsConfig {
            archive: Some(PathBuf::from("archive")),
            nowcast: PathBuf::from("nowcast").join(nowcast.file_name()),
            observed: Some(PathBuf::from("observed")),
            output: PathBuf::from("out"),
            models: None,
        },
        frame: frame_cfg,
        grid: coarse_grid(p.steps),
        aircraft: AircraftParams::default(),
        storm: StormConfig {
            clusters: ClusterSetting::Fixed(12),
            k_max: 20,
            samples: 100,
            horizons: p.horizons,
            heading_weight: None,
            elbow_threshold: crate::storm::kmeans::DEFAULT_ELBOW_THRESHOLD,
            min_per_bucket: 30,
            min_scale: 0.01,
        },
        problem: ProblemConfig { start: p.start, goal: p.goal },
        simulate: SimulateConfig { rollouts: p.rollouts, scoring: ScoringMode::Observed },
    };
    config.validate()?;
    Ok(Scenario { kind, archive, nowcast, observed, config })
}

/// Writes the scenario files and `config.toml` under `dir`; returns the
/// config path.
pub fn write_scenario(scenario: &Scenario, dir: &Path) -> Result<PathBuf> {
    let sub = |name: &str| -> Result<PathBuf> {
        let p = dir.join(name);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        Ok(p)
    };
    let archive = sub("archive")?;
    for f in &scenario.archive {
        write_nowcast(f, &archive)?;
    }
    write_nowcast(&scenario.nowcast, &sub("nowcast")?)?;
    let observed = sub("observed")?;
    for f in &scenario.observed {
        write_nowcast(f, &observed)?;
    }
    let path = dir.join("config.toml");
    fs::write(&path, scenario.config.to_toml()).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
