//! Closed-loop Monte Carlo rollouts of the continuous dynamics under a
//! grid policy.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::wrap_angle;
use crate::nowcast::{project_extent, NowcastFile, PlanarBox, PlanarFrame};
use crate::reach::{AircraftParams, Policy, ReachAvoidProblem};
use crate::rng::{stream_id, stream_rng};

const STREAM_ROLLOUT: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Reached,
    StormHit,
    Lost,
    TimedOut,
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::Reached => "reached",
            Outcome::StormHit => "storm-hit",
            Outcome::Lost => "lost",
            Outcome::TimedOut => "timed-out",
        }
    }
}

/// States at t = 0..=N; after the rollout ends the last state repeats.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<[f64; 3]>,
    /// Control applied at each step before the end.
    pub controls: Vec<i8>,
    pub outcome: Outcome,
    /// Step at which the rollout ended.
    pub end_step: usize,
}

/// Observed storm boxes per planning step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObservedStorms {
    pub boxes: Vec<Vec<PlanarBox>>,
}

impl ObservedStorms {
    /// Boxes at `t·step_minutes` for t = 0..=steps from consecutive
    /// observation files starting at the planning time.
    ///
    /// Between two files a cell seen in both is interpolated linearly by
    /// ID; a cell seen in only one of them is taken from the nearer file.
    /// Past the last file the last observation is held.
    pub fn from_nowcasts(files: &[NowcastFile], frame: &PlanarFrame, step_minutes: f64, steps: usize) -> Result<Self> {
        if files.is_empty() {
            return Ok(ObservedStorms { boxes: vec![Vec::new(); steps + 1] });
        }
        let projected: Vec<BTreeMap<u32, PlanarBox>> = files
            .iter()
            .map(|f| {
                f.cells
                    .iter()
                    .map(|c| project_extent(c, frame).map(|(_, b)| (c.id, b)))
                    .collect::<Result<_>>()
            })
            .collect::<Result<_>>()?;
        let t0 = files[0].issue_time;
        let offsets: Vec<f64> = files
            .iter()
            .map(|f| (f.issue_time - t0).num_seconds() as f64 / 60.0)
            .collect();
        if offsets.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Structure("observation files must have increasing issue times".into()));
        }
        let boxes = (0..=steps)
            .map(|t| {
                let m = t as f64 * step_minutes;
                let hi = offsets.iter().position(|&o| o >= m);
                match hi {
                    Some(0) => projected[0].values().copied().collect(),
                    None => projected.last().unwrap().values().copied().collect(),
                    Some(i) => {
                        let w = (m - offsets[i - 1]) / (offsets[i] - offsets[i - 1]);
                        let (a, b) = (&projected[i - 1], &projected[i]);
                        let mut out = Vec::new();
                        for (id, ba) in a {
                            match b.get(id) {
                                Some(bb) => out.push(ba.lerp(bb, w)),
                                None if w < 0.5 => out.push(*ba),
                                None => {}
                            }
                        }
                        out.extend(b.iter().filter(|(id, _)| !a.contains_key(id) && w >= 0.5).map(|(_, bb)| *bb));
                        out
                    }
                }
            })
            .collect();
        Ok(ObservedStorms { boxes })
    }

    pub fn hit(&self, t: usize, x: f64, y: f64) -> bool {
        self.boxes
            .get(t)
            .or(self.boxes.last())
            .is_some_and(|bs| bs.iter().any(|b| b.contains(x, y)))
    }
}

/// What counts as hitting a storm.
#[derive(Debug, Clone, Copy)]
pub enum Scoring<'a> {
    /// Observed cell rectangles.
    Observed(&'a ObservedStorms),
    /// Bernoulli draw from the problem's storm probability at the current
    /// grid cell.
    Field,
    /// No storms.
    Ignore,
}

/// Per-step mean position with ±2σ bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub mean: Vec<[f64; 2]>,
    pub std_dev: Vec<[f64; 2]>,
}

impl Envelope {
    pub fn lower(&self) -> Vec<[f64; 2]> {
        self.mean
            .iter()
            .zip(&self.std_dev)
            .map(|(m, s)| [m[0] - 2.0 * s[0], m[1] - 2.0 * s[1]])
            .collect()
    }

    pub fn upper(&self) -> Vec<[f64; 2]> {
        self.mean
            .iter()
            .zip(&self.std_dev)
            .map(|(m, s)| [m[0] + 2.0 * s[0], m[1] + 2.0 * s[1]])
            .collect()
    }

    /// Mean over steps of the envelope width 4·(σx + σy)/2.
    pub fn mean_width(&self) -> f64 {
        let n = self.std_dev.len().max(1) as f64;
        self.std_dev.iter().map(|s| 2.0 * (s[0] + s[1])).sum::<f64>() / n
    }
}

/// Per-step mean and standard deviation of (x, y) across trajectories.
pub fn envelope(trajectories: &[Trajectory]) -> Result<Envelope> {
    let Some(first) = trajectories.first() else {
        return Err(Error::Domain("envelope of zero trajectories".into()));
    };
    let len = first.states.len();
    if trajectories.iter().any(|t| t.states.len() != len) {
        return Err(Error::Dimension("trajectories differ in length".into()));
    }
    if trajectories.len() == 1 {
        log::warn!("envelope of a single trajectory has zero width");
    }
    let n = trajectories.len() as f64;
    let mut mean = vec![[0.0; 2]; len];
    let mut std_dev = vec![[0.0; 2]; len];
    for t in 0..len {
        for d in 0..2 {
            let m = trajectories.iter().map(|tr| tr.states[t][d]).sum::<f64>() / n;
            let v = trajectories.iter().map(|tr| (tr.states[t][d] - m).powi(2)).sum::<f64>() / n;
            mean[t][d] = m;
            std_dev[t][d] = v.sqrt();
        }
    }
    Ok(Envelope { mean, std_dev })
}

/// Aggregate of a rollout batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutReport {
    pub n_rollouts: usize,
    pub reached: usize,
    pub storm_hit: usize,
    pub lost: usize,
    pub timed_out: usize,
    /// Fraction that reached the goal without hitting a storm.
    pub success_fraction: f64,
    /// Binomial standard error of `success_fraction`.
    pub success_std_error: f64,
    /// Mean time of first goal entry over successful rollouts, seconds.
    pub mean_flight_time_s: Option<f64>,
    pub envelope: Envelope,
}

impl RolloutReport {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("report serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Schema(format!("rollout report: {e}")))
    }
}

fn run_one<R: Rng + ?Sized>(
    problem: &ReachAvoidProblem,
    policy: &Policy,
    params: &AircraftParams,
    s0: [f64; 3],
    scoring: Scoring,
    rng: &mut R,
) -> Trajectory {
    let g = &problem.grid;
    let sd = params.noise_var.map(f64::sqrt);
    let mut s = s0;
    let mut states = Vec::with_capacity(g.steps + 1);
    let mut controls = Vec::with_capacity(g.steps);
    let mut outcome = Outcome::TimedOut;
    let mut end_step = g.steps;
    for t in 0..=g.steps {
        states.push(s);
        let Some(cell) = g.locate(s) else {
            outcome = Outcome::Lost;
            end_step = t;
            break;
        };
        let plane = g.split(cell).0;
        if problem.in_goal_plane(plane) {
            outcome = Outcome::Reached;
            end_step = t;
            break;
        }
        if t == g.steps {
            break;
        }
        let hit = match scoring {
            Scoring::Observed(obs) => obs.hit(t, s[0], s[1]),
            Scoring::Field => {
                let p = problem.storm[t][plane];
                p > 0.0 && rng.random::<f64>() < p
            }
            Scoring::Ignore => false,
        };
        if hit {
            outcome = Outcome::StormHit;
            end_step = t;
            break;
        }
        let u = policy.controls[t][cell];
        controls.push(u);
        let m = params.mean_successor(s, u, g.step_minutes);
        let noise: [f64; 3] = std::array::from_fn(|d| sd[d] * rng.sample::<f64, _>(StandardNormal));
        s = [m[0] + noise[0], m[1] + noise[1], wrap_angle(m[2] + noise[2])];
    }
    let last = *states.last().expect("at least the start state");
    states.resize(g.steps + 1, last);
    Trajectory { states, controls, outcome, end_step }
}

/// Runs `n` independent rollouts from `s0` under `policy`.
///
/// Rollout `i` uses its own random stream, so results do not depend on the
/// thread count.
pub fn rollout(
    problem: &ReachAvoidProblem,
    policy: &Policy,
    params: &AircraftParams,
    s0: [f64; 3],
    n: usize,
    scoring: Scoring,
    seed: u64,
) -> Result<(RolloutReport, Vec<Trajectory>)> {
    if policy.grid != problem.grid {
        return Err(Error::Dimension("policy and problem grids differ".into()));
    }
    if problem.grid.locate(s0).is_none() {
        return Err(Error::Domain(format!("start state {s0:?} lies outside the grid")));
    }
    if n == 0 {
        return Err(Error::Domain("need at least one rollout".into()));
    }
    let trajectories: Vec<Trajectory> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, stream_id(STREAM_ROLLOUT, 0, i as u32));
            run_one(problem, policy, params, s0, scoring, &mut rng)
        })
        .collect();

    let count = |o: Outcome| trajectories.iter().filter(|t| t.outcome == o).count();
    let reached = count(Outcome::Reached);
    let frac = reached as f64 / n as f64;
    let step_s = problem.grid.step_minutes * 60.0;
    let mean_flight_time_s = (reached > 0).then(|| {
        trajectories
            .iter()
            .filter(|t| t.outcome == Outcome::Reached)
            .map(|t| t.end_step as f64 * step_s)
            .sum::<f64>()
            / reached as f64
    });
    let report = RolloutReport {
        n_rollouts: n,
        reached,
        storm_hit: count(Outcome::StormHit),
        lost: count(Outcome::Lost),
        timed_out: count(Outcome::TimedOut),
        success_fraction: frac,
        success_std_error: (frac * (1.0 - frac) / n as f64).sqrt(),
        mean_flight_time_s,
        envelope: envelope(&trajectories)?,
    };
    Ok((report, trajectories))
}

/// One row per (rollout, step): `rollout,t,x,y,heading,u,outcome`. `u` is
/// blank from the final step on.
pub fn write_trajectories_csv(trajectories: &[Trajectory], path: &Path) -> Result<()> {
    let mut out = String::from("rollout,t,x,y,heading,u,outcome\n");
    for (i, tr) in trajectories.iter().enumerate() {
        for (t, s) in tr.states.iter().enumerate() {
            let u = tr.controls.get(t).map(|u| u.to_string()).unwrap_or_default();
            out.push_str(&format!("{i},{t},{},{},{},{u},{}\n", s[0], s[1], s[2], tr.outcome.as_str()));
        }
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads trajectories written by [`write_trajectories_csv`].
pub fn read_trajectories_csv(path: &Path) -> Result<Vec<Trajectory>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file = path.display().to_string();
    let mut out: Vec<Trajectory> = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let bad = |column: &str| Error::Parse {
            file: file.clone(),
            line: n as u64 + 1,
            column: column.into(),
            message: format!("malformed row {line:?}"),
        };
        if f.len() != 7 {
            return Err(bad("row"));
        }
        let i: usize = f[0].parse().map_err(|_| bad("rollout"))?;
        let num = |k: usize, name: &str| f[k].parse::<f64>().map_err(|_| bad(name));
        let s = [num(2, "x")?, num(3, "y")?, num(4, "heading")?];
        let outcome = match f[6] {
            "reached" => Outcome::Reached,
            "storm-hit" => Outcome::StormHit,
            "lost" => Outcome::Lost,
            "timed-out" => Outcome::TimedOut,
            _ => return Err(bad("outcome")),
        };
        if i == out.len() {
            out.push(Trajectory { states: Vec::new(), controls: Vec::new(), outcome, end_step: 0 });
        } else if i + 1 != out.len() {
            return Err(bad("rollout"));
        }
        let tr = out.last_mut().unwrap();
        tr.states.push(s);
        if !f[5].is_empty() {
            tr.controls.push(f[5].parse().map_err(|_| bad("u"))?);
        }
    }
    for tr in &mut out {
        tr.end_step = match tr.outcome {
            Outcome::TimedOut => tr.states.len() - 1,
            _ => tr.controls.len(),
        };
    }
    Ok(out)
}
