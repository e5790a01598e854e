//! Gridded probability-of-storm fields built by MVE sampling.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cell::{sample_cell_path, ForecastCell};
use super::ellipse::{min_volume_ellipse_padded, Ellipse, DEFAULT_MVE_TOLERANCE, MIN_SEMI_AXIS_KM};
use super::kmeans::{kmeans, select_k_with, DEFAULT_ELBOW_THRESHOLD};
use crate::error::{Error, Result};
use crate::grid::PlaneGrid;
use crate::nowcast::{NowcastFile, PlanarFrame, HORIZON_MINUTES};
use crate::rng::{stream_id, stream_rng};
use crate::stats::ErrorModelSet;

const STREAM_CLUSTER: u8 = 1;
const STREAM_SAMPLE: u8 = 2;

/// How many clusters to form per horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClusterCount {
    /// Fixed K, reduced to the cell count when there are fewer cells.
    Fixed(usize),
    /// Elbow rule over K = 1..=k_max.
    Auto { k_max: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StormOptions {
    pub clusters: ClusterCount,
    /// Realizations per cluster, n_s.
    pub samples: usize,
    /// Weight on heading in the clustering features, km/rad. `None` uses
    /// half the grid diagonal over π.
    pub heading_weight: Option<f64>,
    pub elbow_threshold: f64,
    pub mve_tolerance: f64,
    pub mve_pad: f64,
}

impl Default for StormOptions {
    fn default() -> Self {
        StormOptions {
            clusters: ClusterCount::Auto { k_max: 20 },
            samples: 100,
            heading_weight: None,
            elbow_threshold: DEFAULT_ELBOW_THRESHOLD,
            mve_tolerance: DEFAULT_MVE_TOLERANCE,
            mve_pad: MIN_SEMI_AXIS_KM,
        }
    }
}

/// Probability of storm per plane-grid cell, one layer per horizon.
///
/// Layer 0 is the current observation; layer τ is the forecast `10·τ`
/// minutes ahead. Values are stored row-major over y (see
/// [`PlaneGrid::index`]).
#[derive(Debug, Clone, PartialEq)]
pub struct StormField {
    pub grid: PlaneGrid,
    pub layers: Vec<Vec<f64>>,
    pub samples: usize,
    /// Clusters formed at each horizon; entry 0 is the observed cell count.
    pub cluster_counts: Vec<usize>,
}

/// Probability of at least one of several independent events.
///
/// The result is kept within `[max p, min(1, Σp)]`, which the exact value
/// always satisfies but the rounded product can miss by an ulp.
pub fn merge_probabilities(ps: &[f64]) -> f64 {
    let merged = 1.0 - ps.iter().map(|p| 1.0 - p).product::<f64>();
    let lo = ps.iter().copied().fold(0.0, f64::max);
    let hi = ps.iter().sum::<f64>().min(1.0);
    merged.max(lo).min(hi)
}

impl StormField {
    /// Field with every layer equal to zero.
    pub fn empty(grid: PlaneGrid, horizons: usize) -> Self {
        StormField {
            grid,
            layers: vec![vec![0.0; grid.len()]; horizons + 1],
            samples: 0,
            cluster_counts: vec![0; horizons + 1],
        }
    }

    /// Highest forecast horizon, N.
    pub fn horizons(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn layer(&self, tau: usize) -> &[f64] {
        &self.layers[tau]
    }

    pub fn max_minutes(&self) -> f64 {
        (self.horizons() as i64 * HORIZON_MINUTES) as f64
    }

    /// Field at `t` minutes after issue, linear in time between horizons.
    ///
    /// Times outside `[0, 10·N]` are clamped with a warning.
    pub fn interpolate(&self, t: f64) -> Vec<f64> {
        let max = self.max_minutes();
        let t = if !(0.0..=max).contains(&t) {
            log::warn!("storm field requested at t = {t} min, outside [0, {max}]; clamped");
            t.clamp(0.0, max)
        } else {
            t
        };
        let pos = t / HORIZON_MINUTES as f64;
        let lo = (pos.floor() as usize).min(self.horizons());
        let hi = (lo + 1).min(self.horizons());
        let w = pos - lo as f64;
        if w == 0.0 || lo == hi {
            return self.layers[lo].clone();
        }
        self.layers[lo]
            .iter()
            .zip(&self.layers[hi])
            .map(|(a, b)| (a + (b - a) * w).clamp(0.0, 1.0))
            .collect()
    }

    /// One CSV per layer, `storm_field_tau{τ}.csv`: rows are y indices,
    /// columns x indices.
    pub fn write_csv(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut paths = Vec::new();
        for (tau, layer) in self.layers.iter().enumerate() {
            let path = dir.join(format!("storm_field_tau{tau}.csv"));
            fs::write(&path, layer_to_csv(&self.grid, layer)).map_err(|e| Error::io(&path, e))?;
            paths.push(path);
        }
        Ok(paths)
    }

    /// Reads layers written by [`StormField::write_csv`].
    pub fn read_csv(dir: &Path, grid: PlaneGrid, horizons: usize) -> Result<Self> {
        let mut field = StormField::empty(grid, horizons);
        for tau in 0..=horizons {
            let path = dir.join(format!("storm_field_tau{tau}.csv"));
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            field.layers[tau] = layer_from_csv(&grid, &text, &path.display().to_string())?;
        }
        Ok(field)
    }

    /// Binary graymap per layer, north up, white = probability 1.
    pub fn write_pgm(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let g = self.grid;
        let mut paths = Vec::new();
        for (tau, layer) in self.layers.iter().enumerate() {
            let path = dir.join(format!("storm_field_tau{tau}.pgm"));
            let mut bytes = format!("P5\n{} {}\n255\n", g.n_x, g.n_y).into_bytes();
            for iy in (0..g.n_y).rev() {
                for ix in 0..g.n_x {
                    bytes.push((layer[g.index(ix, iy)] * 255.0).round() as u8);
                }
            }
            let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            f.write_all(&bytes).map_err(|e| Error::io(&path, e))?;
            paths.push(path);
        }
        Ok(paths)
    }
}

fn layer_to_csv(grid: &PlaneGrid, layer: &[f64]) -> String {
    let mut out = String::with_capacity(layer.len() * 8);
    for iy in 0..grid.n_y {
        let row: Vec<String> = (0..grid.n_x).map(|ix| format!("{}", layer[grid.index(ix, iy)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn layer_from_csv(grid: &PlaneGrid, text: &str, source: &str) -> Result<Vec<f64>> {
    let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    if rows.len() != grid.n_y {
        return Err(Error::Dimension(format!(
            "{source}: {} rows, grid has n_y = {}",
            rows.len(),
            grid.n_y
        )));
    }
    let mut layer = vec![0.0; grid.len()];
    for (iy, row) in rows.iter().enumerate() {
        let cols: Vec<&str> = row.split(',').collect();
        if cols.len() != grid.n_x {
            return Err(Error::Dimension(format!(
                "{source}: row {iy} has {} columns, grid has n_x = {}",
                cols.len(),
                grid.n_x
            )));
        }
        for (ix, c) in cols.iter().enumerate() {
            let v: f64 = c.trim().parse().map_err(|_| Error::Parse {
                file: source.to_string(),
                line: iy as u64 + 1,
                column: format!("x{ix}"),
                message: format!("not a number: {c:?}"),
            })?;
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Range(format!("{source}: probability {v} outside [0, 1]")));
            }
            layer[grid.index(ix, iy)] = v;
        }
    }
    Ok(layer)
}

/// Layer with 1 at every grid cell whose center lies in some observed box.
pub fn observed_layer(grid: &PlaneGrid, cells: &[ForecastCell]) -> Vec<f64> {
    (0..grid.len())
        .map(|i| {
            let [x, y] = grid.center_of(i);
            let hit = cells.iter().any(|c| c.state.extent.contains(x, y));
            if hit {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

/// Adds one to every grid cell whose center lies inside `e`.
fn accumulate(grid: &PlaneGrid, e: &Ellipse, counts: &mut [u32]) {
    let [hx, hy] = e.half_extents();
    let ix0 = grid.x_cell(e.center[0] - hx).max(0);
    let ix1 = grid.x_cell(e.center[0] + hx).min(grid.n_x as i64 - 1);
    let iy0 = grid.y_cell(e.center[1] - hy).max(0);
    let iy1 = grid.y_cell(e.center[1] + hy).min(grid.n_y as i64 - 1);
    for iy in iy0..=iy1 {
        let y = grid.y_center(iy as usize);
        for ix in ix0..=ix1 {
            if e.contains([grid.x_center(ix as usize), y]) {
                counts[grid.index(ix as usize, iy as usize)] += 1;
            }
        }
    }
}

/// Cluster labels for the nominal forecasts at horizon `tau`.
fn cluster_horizon(
    cells: &[ForecastCell],
    tau: usize,
    heading_weight: f64,
    opts: &StormOptions,
    seed: u64,
) -> Result<(usize, Vec<usize>)> {
    let features: Vec<[f64; 3]> = cells
        .iter()
        .map(|c| {
            let s = c.nominal(tau);
            [s.center[0], s.center[1], heading_weight * s.heading]
        })
        .collect();
    let mut rng = stream_rng(seed, stream_id(STREAM_CLUSTER, tau as u32, 0));
    let k = match opts.clusters {
        ClusterCount::Fixed(k) => k.clamp(1, cells.len()),
        ClusterCount::Auto { k_max } => select_k_with(&features, k_max.max(1), opts.elbow_threshold, &mut rng)?,
    };
    let assignment = kmeans(&features, k, &mut rng)?;
    Ok((k, assignment.labels))
}

/// Containment frequency of one cluster's sampled MVEs, per grid cell.
fn cluster_layer(
    members: &[&ForecastCell],
    models: &ErrorModelSet,
    grid: &PlaneGrid,
    tau: usize,
    opts: &StormOptions,
    stream: u64,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut rng = stream_rng(seed, stream);
    let mut counts = vec![0u32; grid.len()];
    let mut points = Vec::with_capacity(4 * members.len());
    for _ in 0..opts.samples {
        points.clear();
        for cell in members {
            let s = sample_cell_path(cell, models, tau, &mut rng)?;
            points.extend(s.extent.corners());
        }
        let e = min_volume_ellipse_padded(&points, opts.mve_tolerance, opts.mve_pad)?;
        if let Some(p) = points.iter().find(|p| e.quad_form(**p) > 1.0 + 1e-9) {
            return Err(Error::Internal(format!("sampled MVE excludes its own point {p:?}")));
        }
        accumulate(grid, &e, &mut counts);
    }
    let n = opts.samples as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

/// Builds the storm field for horizons `0..=horizons` from projected cells.
///
/// At each horizon the nominal forecasts are clustered on (x, y, w·ξ); each
/// cluster is sampled `n_s` times, every realization of all member cells is
/// enclosed in one MVE, and the per-cell containment frequencies of the
/// clusters are merged as independent events. Horizon 0 is the union of the
/// observed boxes.
pub fn build_storm_field(
    cells: &[ForecastCell],
    models: &ErrorModelSet,
    grid: &PlaneGrid,
    horizons: usize,
    opts: &StormOptions,
    seed: u64,
) -> Result<StormField> {
    grid.validate()?;
    if opts.samples == 0 {
        return Err(Error::Config("storm field needs at least one sample per cluster".into()));
    }
    if horizons > models.horizons() {
        return Err(Error::Range(format!(
            "storm field to horizon {horizons} but error models cover only {}",
            models.horizons()
        )));
    }
    if cells.is_empty() {
        log::info!("no storm cells; storm field is zero everywhere");
        let mut field = StormField::empty(*grid, horizons);
        field.samples = opts.samples;
        return Ok(field);
    }
    let w = opts
        .heading_weight
        .unwrap_or(grid.half_diagonal() / std::f64::consts::PI);

    let per_horizon: Vec<(usize, Vec<f64>)> = (1..=horizons)
        .into_par_iter()
        .map(|tau| -> Result<(usize, Vec<f64>)> {
            let (k, labels) = cluster_horizon(cells, tau, w, opts, seed)?;
            let layers: Vec<Vec<f64>> = (0..k)
                .into_par_iter()
                .map(|cluster| {
                    let members: Vec<&ForecastCell> = cells
                        .iter()
                        .zip(&labels)
                        .filter(|(_, &l)| l == cluster)
                        .map(|(c, _)| c)
                        .collect();
                    let stream = stream_id(STREAM_SAMPLE, tau as u32, cluster as u32);
                    cluster_layer(&members, models, grid, tau, opts, stream, seed)
                })
                .collect::<Result<_>>()?;
            let merged = (0..grid.len())
                .map(|i| merge_probabilities(&layers.iter().map(|l| l[i]).collect::<Vec<_>>()))
                .collect();
            Ok((k, merged))
        })
        .collect::<Result<_>>()?;

    let mut layers = vec![observed_layer(grid, cells)];
    let mut cluster_counts = vec![cells.len()];
    for (k, layer) in per_horizon {
        cluster_counts.push(k);
        layers.push(layer);
    }
    Ok(StormField {
        grid: *grid,
        layers,
        samples: opts.samples,
        cluster_counts,
    })
}

/// Projects a nowcast and builds its storm field.
pub fn build_storm_field_from_nowcast(
    nowcast: &NowcastFile,
    frame: &PlanarFrame,
    models: &ErrorModelSet,
    grid: &PlaneGrid,
    horizons: usize,
    opts: &StormOptions,
    seed: u64,
) -> Result<StormField> {
    let cells = nowcast
        .cells
        .iter()
        .map(|o| ForecastCell::from_observation(o, frame))
        .collect::<Result<Vec<_>>>()?;
    build_storm_field(&cells, models, grid, horizons, opts, seed)
}
