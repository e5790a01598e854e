//! End-to-end stages driven by a [`RunConfig`]: fit, plan and simulate.
//!
//! Every stage reads its inputs from disk and writes its outputs under
//! `paths.output`, so stages can be rerun independently. Outputs depend only
//! on the config and seed; timings go to the log.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, ScoringMode};
use crate::error::{Error, Result};
use crate::nowcast::{parse_nowcast, read_archive, PlanarBox, HORIZON_MINUTES};
use crate::reach::{load_or_build_kernel, solve, Policy, ReachAvoidProblem, ValueFunction};
use crate::simulate::{rollout, write_trajectories_csv, ObservedStorms, RolloutReport, Scoring};
use crate::stats::{fit_error_models, pair_errors, ErrorModelSet, FitReport};
use crate::storm::{build_storm_field_from_nowcast, StormField};

pub const FIT_REPORT: &str = "fit_report.txt";
pub const FIELD_DIR: &str = "field";
pub const VALUE_DIR: &str = "value";
pub const POLICY_FILE: &str = "policy.csv";
pub const PLAN_SUMMARY: &str = "plan_summary.toml";
pub const CACHE_DIR: &str = "cache";
pub const TRAJECTORIES_FILE: &str = "trajectories.csv";
pub const ROLLOUT_REPORT: &str = "rollout_report.toml";

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Human-readable table of the fitted models and BIC comparisons.
pub fn format_fit_report(models: &ErrorModelSet, report: &FitReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "center errors (km)");
    let _ = writeln!(
        out,
        "{:>3} {:>4} {:>5} {:>9} {:>9} {:>11} {:>11} {:>9} {:>9} {:>11} {:>11}",
        "tau", "min", "n", "x_m", "x_s", "x_bic_log", "x_bic_norm", "y_m", "y_s", "y_bic_log", "y_bic_norm"
    );
    for h in &report.horizons {
        let _ = writeln!(
            out,
            "{:>3} {:>4} {:>5} {:>9.4} {:>9.4} {:>11.3} {:>11.3} {:>9.4} {:>9.4} {:>11.3} {:>11.3}",
            h.tau,
            h.tau as i64 * HORIZON_MINUTES,
            h.x.n,
            h.x.logistic.m,
            h.x.logistic.s,
            h.x.bic_logistic,
            h.x.bic_normal,
            h.y.logistic.m,
            h.y.logistic.s,
            h.y.bic_logistic,
            h.y.bic_normal,
        );
    }
    for (name, fit) in [("width", &report.width), ("height", &report.height)] {
        let m = fit.model;
        let _ = writeln!(
            out,
            "\n{name} growth per 10 min: m = {:.4} km, s = {:.4} + {:.4}·ln(pixels), floor {}{}",
            m.location,
            m.intercept,
            m.slope,
            m.min_scale,
            if m.size_independent { " (size independent)" } else { "" }
        );
        for b in &fit.buckets {
            let _ = writeln!(out, "  ln(pix) {:>7.3}  n {:>5}  s {:.4}", b.mean_ln_pixels, b.count, b.scale);
        }
    }
    let _ = writeln!(out, "\nmodels cover {} horizons", models.horizons());
    out
}

/// Fits error models from `paths.archive` and writes them to the models
/// path together with a text report.
pub fn cmd_fit(cfg: &RunConfig) -> Result<(ErrorModelSet, FitReport)> {
    let started = Instant::now();
    let dir = cfg
        .paths
        .archive
        .as_deref()
        .ok_or_else(|| Error::Config("fitting needs paths.archive".into()))?;
    let archive = read_archive(dir)?;
    let paired = pair_errors(&archive, &cfg.frame.frame())?;
    let (models, report) = fit_error_models(&paired, cfg.storm.horizons, cfg.storm.growth_options())?;
    create_dir(&cfg.paths.output)?;
    let models_path = cfg.models_path();
    if let Some(parent) = models_path.parent() {
        create_dir(parent)?;
    }
    models.save(&models_path)?;
    write_text(&cfg.paths.output.join(FIT_REPORT), &format_fit_report(&models, &report))?;
    log::info!(
        "fit {} files, {} growth pairs in {:.2?}",
        archive.len(),
        paired.growth.len(),
        started.elapsed()
    );
    Ok((models, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSummary {
    /// Reach-avoid probability at the start state.
    pub start_value: f64,
    pub start: [f64; 3],
    pub goal: PlanarBox,
    pub steps: usize,
    pub step_minutes: f64,
    pub horizons: usize,
    pub samples: usize,
    /// Clusters per horizon; entry 0 is the observed cell count.
    pub cluster_counts: Vec<usize>,
    pub kernel_nonzeros: usize,
}

impl PlanSummary {
    pub fn load(path: &Path) -> Result<Self> {
        toml::from_str(&read_text(path)?).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone)]
pub struct PlanOutputs {
    pub field: StormField,
    pub problem: ReachAvoidProblem,
    pub values: ValueFunction,
    pub policy: Policy,
    pub summary: PlanSummary,
    pub kernel_path: PathBuf,
}

/// Builds the storm field, solves the reach-avoid problem and writes the
/// field, value function, policy and a summary.
pub fn cmd_plan(cfg: &RunConfig) -> Result<PlanOutputs> {
    let out = &cfg.paths.output;
    create_dir(out)?;
    let models = ErrorModelSet::load(&cfg.models_path())?;
    let nowcast = parse_nowcast(&cfg.paths.nowcast)?;

    let started = Instant::now();
    let field = build_storm_field_from_nowcast(
        &nowcast,
        &cfg.frame.frame(),
        &models,
        &cfg.plane(),
        cfg.storm.horizons,
        &cfg.storm.options()?,
        cfg.seed,
    )?;
    log::info!("storm field built in {:.2?}", started.elapsed());
    let field_dir = out.join(FIELD_DIR);
    create_dir(&field_dir)?;
    field.write_csv(&field_dir)?;
    field.write_pgm(&field_dir)?;

    let started = Instant::now();
    let (kernel, kernel_path) = load_or_build_kernel(&cfg.grid, &cfg.aircraft, &out.join(CACHE_DIR))?;
    log::info!("kernel ready in {:.2?} ({} nonzeros)", started.elapsed(), kernel.nnz());

    let problem = ReachAvoidProblem::from_field(cfg.grid, cfg.problem.goal, &field)?;
    let started = Instant::now();
    let (values, policy) = solve(&problem, &kernel)?;
    log::info!("dynamic program solved in {:.2?}", started.elapsed());

    let value_dir = out.join(VALUE_DIR);
    create_dir(&value_dir)?;
    values.write_csv(&value_dir)?;
    policy.write_csv(&out.join(POLICY_FILE))?;

    let summary = PlanSummary {
        start_value: values.evaluate(0, cfg.problem.start),
        start: cfg.problem.start,
        goal: cfg.problem.goal,
        steps: cfg.grid.steps,
        step_minutes: cfg.grid.step_minutes,
        horizons: cfg.storm.horizons,
        samples: field.samples,
        cluster_counts: field.cluster_counts.clone(),
        kernel_nonzeros: kernel.nnz(),
    };
    write_text(
        &out.join(PLAN_SUMMARY),
        &toml::to_string(&summary).expect("summary serializes"),
    )?;
    log::info!("start value {:.6}", summary.start_value);
    Ok(PlanOutputs { field, problem, values, policy, summary, kernel_path })
}

/// Rolls out the saved policy and writes the trajectories and a report.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<RolloutReport> {
    let out = &cfg.paths.output;
    let field = StormField::read_csv(&out.join(FIELD_DIR), cfg.plane(), cfg.storm.horizons)?;
    let problem = ReachAvoidProblem::from_field(cfg.grid, cfg.problem.goal, &field)?;
    let policy = Policy::read_csv(&out.join(POLICY_FILE), cfg.grid)?;

    let observed;
    let scoring = match cfg.simulate.scoring {
        ScoringMode::Field => Scoring::Field,
        ScoringMode::Observed => {
            let dir = cfg
                .paths
                .observed
                .as_deref()
                .ok_or_else(|| Error::Config("observed scoring needs paths.observed".into()))?;
            let files = read_archive(dir)?;
            observed = ObservedStorms::from_nowcasts(
                &files,
                &cfg.frame.frame(),
                cfg.grid.step_minutes,
                cfg.grid.steps,
            )?;
            Scoring::Observed(&observed)
        }
    };

    let started = Instant::now();
    let (report, trajectories) = rollout(
        &problem,
        &policy,
        &cfg.aircraft,
        cfg.problem.start,
        cfg.simulate.rollouts,
        scoring,
        cfg.seed,
    )?;
    log::info!(
        "{} rollouts in {:.2?}: success {:.4}",
        report.n_rollouts,
        started.elapsed(),
        report.success_fraction
    );
    write_trajectories_csv(&trajectories, &out.join(TRAJECTORIES_FILE))?;
    write_text(&out.join(ROLLOUT_REPORT), &report.to_toml())?;
    Ok(report)
}

/// Fit (when an archive is configured), plan and simulate.
pub fn cmd_all(cfg: &RunConfig) -> Result<(PlanSummary, RolloutReport)> {
    if cfg.paths.archive.is_some() {
        cmd_fit(cfg)?;
    }
    let plan = cmd_plan(cfg)?;
    let report = cmd_simulate(cfg)?;
    Ok((plan.summary, report))
}
