//! Discretized transition probabilities p_r(s' | s, u).

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::params::{AircraftParams, CONTROLS};
use crate::error::{Error, Result};
use crate::grid::{wrap_angle, GridSpec};

/// Half-width of the Gaussian window in standard deviations; one extra cell
/// is added on each side.
pub const WINDOW_SIGMAS: f64 = 4.0;
/// Entries below this normalized probability are dropped.
pub const PRUNE_BELOW: f64 = 1e-14;
/// Allowed deviation of a row sum from 1.
pub const ROW_SUM_TOL: f64 = 1e-9;

const MAGIC: &[u8; 8] = b"SRKRNL01";

/// Sparse rows for one control.
#[derive(Debug, Clone, PartialEq, Default)]
struct Csr {
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    probs: Vec<f64>,
}

/// Row-stochastic transition matrices, one per control in [`CONTROLS`]
/// order. Column [`TransitionKernel::lost_state`] is the absorbing state
/// for mass leaving the plane grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    n_states: usize,
    rows: [Csr; 3],
}

impl TransitionKernel {
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn lost_state(&self) -> usize {
        self.n_states
    }

    /// Successors and probabilities of `state` under control `CONTROLS[ci]`.
    pub fn row(&self, ci: usize, state: usize) -> (&[u32], &[f64]) {
        let m = &self.rows[ci];
        let (a, b) = (m.row_ptr[state], m.row_ptr[state + 1]);
        (&m.cols[a..b], &m.probs[a..b])
    }

    /// Σ_s' V(s')·p_r(s' | s, u) with V = 0 on the lost state.
    pub fn expect(&self, ci: usize, state: usize, values: &[f64]) -> f64 {
        let (cols, probs) = self.row(ci, state);
        cols.iter()
            .zip(probs)
            .map(|(&c, &p)| values.get(c as usize).map_or(0.0, |v| v * p))
            .sum()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(|r| r.probs.len()).sum()
    }

    /// Largest |row sum − 1| over all rows and controls.
    pub fn max_row_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for ci in 0..CONTROLS.len() {
            for s in 0..self.n_states {
                let sum: f64 = self.row(ci, s).1.iter().sum();
                worst = worst.max((sum - 1.0).abs());
            }
        }
        worst
    }

    pub fn save(&self, path: &Path, key: &str) -> Result<()> {
        let mut buf = Vec::with_capacity(16 * self.nnz() + 64);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(key.len() as u64).to_le_bytes());
        buf.extend_from_slice(key.as_bytes());
        buf.extend_from_slice(&(self.n_states as u64).to_le_bytes());
        for m in &self.rows {
            buf.extend_from_slice(&(m.probs.len() as u64).to_le_bytes());
            for &p in &m.row_ptr {
                buf.extend_from_slice(&(p as u64).to_le_bytes());
            }
            for &c in &m.cols {
                buf.extend_from_slice(&c.to_le_bytes());
            }
            for &p in &m.probs {
                buf.extend_from_slice(&p.to_le_bytes());
            }
        }
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    /// Reads a cached kernel; fails if it was saved under another key.
    pub fn load(path: &Path, key: &str) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let corrupt = |what: &str| Error::Schema(format!("{}: corrupt kernel cache ({what})", path.display()));
        let mut r = Reader { bytes: &bytes, pos: 0 };
        if r.take(8).ok_or_else(|| corrupt("header"))? != MAGIC {
            return Err(corrupt("magic"));
        }
        let klen = r.u64().ok_or_else(|| corrupt("key"))? as usize;
        if r.take(klen).ok_or_else(|| corrupt("key"))? != key.as_bytes() {
            return Err(Error::Schema(format!("{}: kernel cache key mismatch", path.display())));
        }
        let n_states = r.u64().ok_or_else(|| corrupt("size"))? as usize;
        let mut rows: [Csr; 3] = Default::default();
        for m in &mut rows {
            let nnz = r.u64().ok_or_else(|| corrupt("nnz"))? as usize;
            m.row_ptr = (0..=n_states)
                .map(|_| r.u64().map(|v| v as usize))
                .collect::<Option<_>>()
                .ok_or_else(|| corrupt("row pointers"))?;
            m.cols = (0..nnz)
                .map(|_| r.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap())))
                .collect::<Option<_>>()
                .ok_or_else(|| corrupt("columns"))?;
            m.probs = (0..nnz)
                .map(|_| r.take(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())))
                .collect::<Option<_>>()
                .ok_or_else(|| corrupt("probabilities"))?;
            if m.row_ptr.last() != Some(&nnz) || m.row_ptr.windows(2).any(|w| w[0] > w[1]) {
                return Err(corrupt("row structure"));
            }
        }
        if r.pos != bytes.len() {
            return Err(corrupt("trailing bytes"));
        }
        Ok(TransitionKernel { n_states, rows })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.bytes.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(s)
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }
}

/// Log Gaussian weights of the cells whose centers lie within the window
/// around `mean`, as `(signed cell index, log weight)`.
fn axis_window(mean: f64, var: f64, min: f64, step: f64) -> Vec<(i64, f64)> {
    let reach = WINDOW_SIGMAS * var.sqrt() + step;
    let lo = ((mean - reach - min) / step).floor() as i64;
    let hi = ((mean + reach - min) / step).floor() as i64;
    (lo..=hi)
        .map(|i| {
            let c = min + (i as f64 + 0.5) * step;
            (i, -(c - mean).powi(2) / (2.0 * var))
        })
        .collect()
}

/// Log of the wrapped Gaussian density (up to a constant) at each heading
/// cell inside the window.
fn heading_window(grid: &GridSpec, mean: f64, var: f64) -> Vec<(usize, f64)> {
    let n = grid.n_heading;
    let dl = grid.d_heading();
    let half = ((WINDOW_SIGMAS * var.sqrt() + dl) / dl).ceil() as i64;
    let center = grid.heading_cell(mean) as i64;
    let cells: Vec<usize> = if 2 * half + 1 >= n as i64 {
        (0..n).collect()
    } else {
        (-half..=half).map(|j| (center + j).rem_euclid(n as i64) as usize).collect()
    };
    // enough images to cover several standard deviations on either side
    let images = (WINDOW_SIGMAS * var.sqrt() / TAU).ceil() as i64 + 1;
    cells
        .into_iter()
        .map(|ih| {
            let d = wrap_angle(grid.heading_center(ih) - mean);
            let terms: Vec<f64> = (-images..=images)
                .map(|k| -(d + TAU * k as f64).powi(2) / (2.0 * var))
                .collect();
            (ih, log_sum_exp(&terms))
        })
        .collect()
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// One normalized kernel row as sorted `(column, probability)` pairs.
fn kernel_row(grid: &GridSpec, params: &AircraftParams, var: &[f64; 3], state: usize, code: i8) -> Result<Vec<(u32, f64)>> {
    let p = &grid.plane;
    let mean = params.mean_successor(grid.state_center(state), code, grid.step_minutes);
    let wx = axis_window(mean[0], var[0], p.x_min, p.dx());
    let wy = axis_window(mean[1], var[1], p.y_min, p.dy());
    let wh = heading_window(grid, mean[2], var[2]);

    // The Gaussian density times the cell volume dx·dy·dλ, renormalized:
    // the volume and the density's constant cancel, so weights are formed
    // in log space relative to their maximum.
    let max = wx.iter().map(|w| w.1).fold(f64::NEG_INFINITY, f64::max)
        + wy.iter().map(|w| w.1).fold(f64::NEG_INFINITY, f64::max)
        + wh.iter().map(|w| w.1).fold(f64::NEG_INFINITY, f64::max);

    let lost = grid.lost_state();
    let mut on_grid: Vec<(u32, f64)> = Vec::with_capacity(wx.len() * wy.len() * wh.len());
    let mut lost_mass = 0.0;
    let mut total = 0.0;
    for &(iy, ly) in &wy {
        for &(ix, lx) in &wx {
            let inside = (0..p.n_x as i64).contains(&ix) && (0..p.n_y as i64).contains(&iy);
            for &(ih, lh) in &wh {
                let w = (lx + ly + lh - max).exp();
                total += w;
                if inside {
                    on_grid.push((grid.state_index(ix as usize, iy as usize, ih) as u32, w));
                } else {
                    lost_mass += w;
                }
            }
        }
    }
    if !(total > 0.0) {
        return Err(Error::Internal(format!("empty kernel row for state {state}")));
    }

    let mut row: Vec<(u32, f64)> = on_grid
        .into_iter()
        .map(|(c, w)| (c, w / total))
        .filter(|&(_, q)| q >= PRUNE_BELOW)
        .collect();
    if lost_mass / total >= PRUNE_BELOW {
        row.push((lost as u32, lost_mass / total));
    }
    row.sort_unstable_by_key(|e| e.0);
    let kept: f64 = row.iter().map(|e| e.1).sum();
    for e in &mut row {
        e.1 /= kept;
    }
    let sum: f64 = row.iter().map(|e| e.1).sum();
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(Error::Internal(format!("kernel row for state {state} sums to {sum}")));
    }
    Ok(row)
}

/// Builds p_r for every grid state and control.
///
/// The mean successor follows the deterministic dynamics; the Gaussian
/// disturbance is evaluated at successor cell centers inside a
/// ±4σ (+1 cell) window, heading wrapped, and renormalized. Mass landing
/// off the plane grid goes to the lost state.
pub fn build_kernel(grid: &GridSpec, params: &AircraftParams) -> Result<TransitionKernel> {
    grid.validate()?;
    params.validate(grid.step_minutes)?;
    if grid.n_states() >= u32::MAX as usize {
        return Err(Error::Config(format!("{} states exceed the kernel index range", grid.n_states())));
    }
    let var = params.effective_variances();
    let n = grid.n_states();
    let per_state: Vec<[Vec<(u32, f64)>; 3]> = (0..n)
        .into_par_iter()
        .map(|s| -> Result<[Vec<(u32, f64)>; 3]> {
            Ok([
                kernel_row(grid, params, &var, s, CONTROLS[0])?,
                kernel_row(grid, params, &var, s, CONTROLS[1])?,
                kernel_row(grid, params, &var, s, CONTROLS[2])?,
            ])
        })
        .collect::<Result<_>>()?;

    let mut rows: [Csr; 3] = Default::default();
    for (ci, m) in rows.iter_mut().enumerate() {
        m.row_ptr.reserve(n + 1);
        m.row_ptr.push(0);
        for r in &per_state {
            for &(c, p) in &r[ci] {
                m.cols.push(c);
                m.probs.push(p);
            }
            m.row_ptr.push(m.cols.len());
        }
    }
    Ok(TransitionKernel { n_states: n, rows })
}

/// Hex SHA-256 of the grid and aircraft parameters.
pub fn kernel_cache_key(grid: &GridSpec, params: &AircraftParams) -> String {
    let mut h = Sha256::new();
    h.update(format!("kernel-v1|{grid:?}|{params:?}|{WINDOW_SIGMAS}|{PRUNE_BELOW}"));
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Loads the kernel from `cache_dir` when a matching file exists, otherwise
/// builds and stores it.
pub fn load_or_build_kernel(
    grid: &GridSpec,
    params: &AircraftParams,
    cache_dir: &Path,
) -> Result<(TransitionKernel, PathBuf)> {
    let key = kernel_cache_key(grid, params);
    let path = cache_dir.join(format!("kernel_{}.bin", &key[..16]));
    if path.exists() {
        match TransitionKernel::load(&path, &key) {
            Ok(k) => {
                log::info!("loaded kernel cache {}", path.display());
                return Ok((k, path));
            }
            Err(e) => log::warn!("ignoring kernel cache: {e}"),
        }
    }
    let kernel = build_kernel(grid, params)?;
    fs::create_dir_all(cache_dir).map_err(|e| Error::io(cache_dir, e))?;
    kernel.save(&path, &key)?;
    Ok((kernel, path))
}
