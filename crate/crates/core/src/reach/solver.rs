//! Backward reach-avoid dynamic program.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::kernel::TransitionKernel;
use super::params::CONTROLS;
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::nowcast::PlanarBox;
use crate::storm::StormField;

/// Relative margin by which a later control must beat an earlier one in
/// [`CONTROLS`] order to be chosen.
const TIE_TOLERANCE: f64 = 1e-12;

/// Goal box and per-step storm probabilities on a state grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ReachAvoidProblem {
    pub grid: GridSpec,
    /// Goal in the plane; every heading counts.
    pub goal: PlanarBox,
    /// Storm probability per plane cell for t = 0..=N.
    pub storm: Vec<Vec<f64>>,
}

impl ReachAvoidProblem {
    /// Problem with storm layer `t` taken from `field` at `t·δ` minutes.
    pub fn from_field(grid: GridSpec, goal: PlanarBox, field: &StormField) -> Result<Self> {
        if field.grid != grid.plane {
            return Err(Error::Dimension(format!(
                "storm field grid {:?} differs from planning grid {:?}",
                field.grid, grid.plane
            )));
        }
        let storm = (0..=grid.steps)
            .map(|t| field.interpolate(t as f64 * grid.step_minutes))
            .collect();
        Self::new(grid, goal, storm)
    }

    /// Problem with no storms.
    pub fn clear(grid: GridSpec, goal: PlanarBox) -> Result<Self> {
        let storm = vec![vec![0.0; grid.plane.len()]; grid.steps + 1];
        Self::new(grid, goal, storm)
    }

    pub fn new(grid: GridSpec, goal: PlanarBox, storm: Vec<Vec<f64>>) -> Result<Self> {
        grid.validate()?;
        let p = Self { grid, goal, storm };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.storm.len() != self.grid.steps + 1 {
            return Err(Error::Dimension(format!(
                "{} storm layers for {} steps; need steps + 1",
                self.storm.len(),
                self.grid.steps
            )));
        }
        if let Some(l) = self.storm.iter().find(|l| l.len() != self.grid.plane.len()) {
            return Err(Error::Dimension(format!(
                "storm layer has {} cells, grid has {}",
                l.len(),
                self.grid.plane.len()
            )));
        }
        if self.storm.iter().flatten().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Range("storm probability outside [0, 1]".into()));
        }
        if !(0..self.grid.plane.len()).any(|i| self.in_goal_plane(i)) {
            return Err(Error::Config(format!(
                "goal {:?} contains no grid cell center",
                self.goal
            )));
        }
        Ok(())
    }

    pub fn in_goal_plane(&self, plane_idx: usize) -> bool {
        let [x, y] = self.grid.plane.center_of(plane_idx);
        self.goal.contains(x, y)
    }

    pub fn in_goal(&self, state: usize) -> bool {
        state < self.grid.n_states() && self.in_goal_plane(self.grid.split(state).0)
    }
}

/// V_t(s) for t = 0..=N over grid states.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    pub grid: GridSpec,
    pub values: Vec<Vec<f64>>,
}

/// Control codes μ_t(s) ∈ {−1, 0, +1} for t = 0..N−1.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub grid: GridSpec,
    pub controls: Vec<Vec<i8>>,
}

impl ValueFunction {
    /// Value of the cell containing `s` at step `t`; 0 off the grid.
    pub fn evaluate(&self, t: usize, s: [f64; 3]) -> f64 {
        self.grid.locate(s).map_or(0.0, |i| self.values[t][i])
    }

    /// One CSV per step and heading slice, `value_t{t}_h{ih}.csv`: rows
    /// are y indices, columns x indices.
    pub fn write_csv(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let g = &self.grid;
        let mut paths = Vec::new();
        for (t, v) in self.values.iter().enumerate() {
            for ih in 0..g.n_heading {
                let mut out = String::new();
                for iy in 0..g.plane.n_y {
                    let row: Vec<String> = (0..g.plane.n_x)
                        .map(|ix| format!("{}", v[g.state_index(ix, iy, ih)]))
                        .collect();
                    out.push_str(&row.join(","));
                    out.push('\n');
                }
                let path = dir.join(format!("value_t{t}_h{ih}.csv"));
                fs::write(&path, out).map_err(|e| Error::io(&path, e))?;
                paths.push(path);
            }
        }
        Ok(paths)
    }

    pub fn read_csv(dir: &Path, grid: GridSpec) -> Result<Self> {
        let mut values = vec![vec![0.0; grid.n_states()]; grid.steps + 1];
        for (t, v) in values.iter_mut().enumerate() {
            for ih in 0..grid.n_heading {
                let path = dir.join(format!("value_t{t}_h{ih}.csv"));
                let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                let rows: Vec<&str> = text.lines().collect();
                if rows.len() != grid.plane.n_y {
                    return Err(Error::Dimension(format!("{}: expected {} rows", path.display(), grid.plane.n_y)));
                }
                for (iy, row) in rows.iter().enumerate() {
                    let cols: Vec<&str> = row.split(',').collect();
                    if cols.len() != grid.plane.n_x {
                        return Err(Error::Dimension(format!(
                            "{}: row {iy} has {} columns",
                            path.display(),
                            cols.len()
                        )));
                    }
                    for (ix, c) in cols.iter().enumerate() {
                        v[grid.state_index(ix, iy, ih)] = c.parse().map_err(|_| Error::Parse {
                            file: path.display().to_string(),
                            line: iy as u64 + 1,
                            column: format!("x{ix}"),
                            message: format!("not a number: {c:?}"),
                        })?;
                    }
                }
            }
        }
        Ok(ValueFunction { grid, values })
    }
}

impl Policy {
    /// Control at step `t` for the cell containing `s`; `None` off the grid.
    pub fn control(&self, t: usize, s: [f64; 3]) -> Option<i8> {
        self.grid.locate(s).map(|i| self.controls[t][i])
    }

    /// Long-format CSV `t,ix,iy,ih,u`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let g = &self.grid;
        let mut out = String::from("t,ix,iy,ih,u\n");
        for (t, c) in self.controls.iter().enumerate() {
            for (s, &u) in c.iter().enumerate() {
                let (p, ih) = g.split(s);
                let (ix, iy) = (p % g.plane.n_x, p / g.plane.n_x);
                out.push_str(&format!("{t},{ix},{iy},{ih},{u}\n"));
            }
        }
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path, grid: GridSpec) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut controls = vec![vec![0i8; grid.n_states()]; grid.steps];
        let file = path.display().to_string();
        for (n, line) in text.lines().enumerate().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            let bad = |column: &str, message: String| Error::Parse {
                file: file.clone(),
                line: n as u64 + 1,
                column: column.into(),
                message,
            };
            if f.len() != 5 {
                return Err(bad("row", format!("expected 5 fields, got {}", f.len())));
            }
            let idx = |i: usize, name: &str, max: usize| -> Result<usize> {
                let v: usize = f[i].parse().map_err(|_| bad(name, format!("bad index {:?}", f[i])))?;
                if v >= max {
                    return Err(bad(name, format!("index {v} out of range")));
                }
                Ok(v)
            };
            let t = idx(0, "t", grid.steps)?;
            let ix = idx(1, "ix", grid.plane.n_x)?;
            let iy = idx(2, "iy", grid.plane.n_y)?;
            let ih = idx(3, "ih", grid.n_heading)?;
            let u: i8 = f[4].parse().map_err(|_| bad("u", format!("bad control {:?}", f[4])))?;
            if !CONTROLS.contains(&u) {
                return Err(bad("u", format!("control {u} not in {{-1, 0, 1}}")));
            }
            controls[t][grid.state_index(ix, iy, ih)] = u;
        }
        Ok(Policy { grid, controls })
    }
}

/// Picks the best control, preferring earlier entries of [`CONTROLS`]
/// unless a later one is better by more than a relative margin.
pub(crate) fn argmax_control(q: [f64; 3]) -> (usize, f64) {
    let mut best = (0, q[0]);
    for (ci, &v) in q.iter().enumerate().skip(1) {
        if v > best.1 + TIE_TOLERANCE * best.1.abs() {
            best = (ci, v);
        }
    }
    best
}

/// Solves the reach-avoid recursion
/// `V_N = 1_G`, `V_t = 1_G + p_{Z_t∖G}·max_u Σ V_{t+1}·p_r`.
///
/// Each sweep reads only `V_{t+1}` and writes only `V_t`, so the result does
/// not depend on the parallel schedule.
pub fn solve(problem: &ReachAvoidProblem, kernel: &TransitionKernel) -> Result<(ValueFunction, Policy)> {
    problem.validate()?;
    let g = &problem.grid;
    if kernel.n_states() != g.n_states() {
        return Err(Error::Dimension(format!(
            "kernel has {} states, grid has {}",
            kernel.n_states(),
            g.n_states()
        )));
    }
    let goal: Vec<bool> = (0..g.n_states()).map(|s| problem.in_goal(s)).collect();
    let n = g.steps;
    let mut values = vec![Vec::new(); n + 1];
    let mut controls = vec![Vec::new(); n];
    values[n] = goal.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();

    for t in (0..n).rev() {
        let next = &values[t + 1];
        let storm = &problem.storm[t];
        let (v, mu): (Vec<f64>, Vec<i8>) = (0..g.n_states())
            .into_par_iter()
            .map(|s| {
                if goal[s] {
                    return (1.0, 0);
                }
                let safe = (1.0 - storm[g.split(s).0]).clamp(0.0, 1.0);
                let q = [
                    kernel.expect(0, s, next),
                    kernel.expect(1, s, next),
                    kernel.expect(2, s, next),
                ];
                let (ci, best) = argmax_control(q);
                ((safe * best).clamp(0.0, 1.0), CONTROLS[ci])
            })
            .unzip();
        values[t] = v;
        controls[t] = mu;
    }
    Ok((
        ValueFunction { grid: *g, values },
        Policy { grid: *g, controls },
    ))
}
