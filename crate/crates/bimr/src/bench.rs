//! Metrics and the replication-sweep benchmark runner.
//!
//! Each replication draws fresh coefficients, simulates a dataset, runs the
//! full pipeline (set discovery, direction assignment, TSLS) plus the naive
//! least-squares baseline, and scores instrument classification (CSR) and
//! squared effect error per direction. Replications run in parallel; all
//! randomness derives from the master seed, so reports are reproducible
//! bit for bit.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::direction::{infer_direction_effects, AssignmentPolicy};
use crate::discovery::{find_valid_iv_sets, DiscoveryConfig};
use crate::error::{Error, Result};
use crate::estimators::ols_estimate;
use crate::model::{Direction, ValidityLabels};
use crate::simulator::{derive_seed, draw_scenario_params, generate_dataset, ScenarioSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Correct-selecting rate for one direction: classification accuracy of the
/// selected set against the true labels, over all `g` variants. Variants
/// valid for the other direction count as negatives for this one.
pub fn csr(selected: &[usize], labels: &ValidityLabels, direction: Direction, g: usize) -> f64 {
    let truth = labels.valid_for(direction);
    let mut is_true = vec![false; g];
    for &j in truth {
        is_true[j] = true;
    }
    let mut is_sel = vec![false; g];
    for &j in selected {
        is_sel[j] = true;
    }
    let correct = (0..g).filter(|&j| is_sel[j] == is_true[j]).count();
    correct as f64 / g as f64
}

/// The verbatim ratio: correctly selected valid instruments over the total
/// number of variants. Capped at `|truth| / g` by construction; reported
/// alongside [`csr`] for transparency.
pub fn csr_verbatim(
    selected: &[usize],
    labels: &ValidityLabels,
    direction: Direction,
    g: usize,
) -> f64 {
    let truth = labels.valid_for(direction);
    let hits = selected.iter().filter(|j| truth.contains(j)).count();
    hits as f64 / g as f64
}

/// Mean squared error of a sequence of estimates against one true value.
pub fn mse(estimates: &[f64], truth: f64) -> Result<f64> {
    if estimates.is_empty() {
        return Err(Error::InvalidParams("mse needs at least one estimate".into()));
    }
    Ok(estimates.iter().map(|e| (e - truth) * (e - truth)).sum::<f64>() / estimates.len() as f64)
}

/// Runner options beyond the discovery configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchOptions {
    pub discovery: DiscoveryConfig,
    pub assignment: AssignmentPolicy,
    /// Value substituted for an absent direction estimate in the MSE
    /// (default 0, the no-effect estimate).
    pub missing_estimate: f64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            discovery: DiscoveryConfig::default(),
            assignment: AssignmentPolicy::PerVariant,
            missing_estimate: 0.0,
        }
    }
}

/// Scenario identification carried into reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub label: String,
    pub n_valid_xy: usize,
    pub n_valid_yx: usize,
    pub n_total: usize,
    pub sample_size: usize,
    pub bidirectional: bool,
    pub correlated_valid: bool,
}

impl From<&ScenarioSpec> for ScenarioSummary {
    fn from(s: &ScenarioSpec) -> Self {
        Self {
            label: s.label(),
            n_valid_xy: s.n_valid_xy,
            n_valid_yx: s.n_valid_yx,
            n_total: s.n_total,
            sample_size: s.sample_size,
            bidirectional: s.bidirectional,
            correlated_valid: s.correlated_valid,
        }
    }
}

/// Aggregated metrics of one scenario sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub scenario: ScenarioSummary,
    pub replications: usize,
    pub csr_xy: f64,
    pub csr_yx: f64,
    pub csr_verbatim_xy: f64,
    pub csr_verbatim_yx: f64,
    pub mse_xy: f64,
    pub mse_yx: f64,
    pub naive_mse_xy: f64,
    pub naive_mse_yx: f64,
    /// Replications that errored; they are excluded from the aggregates.
    pub failures: usize,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, Copy)]
struct RepOutcome {
    csr_xy: f64,
    csr_yx: f64,
    csrv_xy: f64,
    csrv_yx: f64,
    sqerr_xy: f64,
    sqerr_yx: f64,
    naive_sqerr_xy: f64,
    naive_sqerr_yx: f64,
}

fn run_replication(spec: &ScenarioSpec, seed: u64, opts: &BenchOptions) -> Result<RepOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = draw_scenario_params(spec, &mut rng)?;
    let ds = generate_dataset(&draw, spec.sample_size, &mut rng)?;
    let (collection, _) = find_valid_iv_sets(&ds, &opts.discovery);
    let (est, _) = infer_direction_effects(
        &ds,
        &collection,
        opts.assignment,
        opts.discovery.tolerance,
    )?;
    let naive_xy = ols_estimate(ds.x(), ds.y())?;
    let naive_yx = ols_estimate(ds.y(), ds.x())?;

    let g = spec.n_total;
    let truth_xy = draw.params.beta_xy;
    let truth_yx = draw.params.beta_yx;
    let sq = |v: f64| v * v;
    Ok(RepOutcome {
        csr_xy: csr(&est.assigned_xy, &draw.labels, Direction::XToY, g),
        csr_yx: csr(&est.assigned_yx, &draw.labels, Direction::YToX, g),
        csrv_xy: csr_verbatim(&est.assigned_xy, &draw.labels, Direction::XToY, g),
        csrv_yx: csr_verbatim(&est.assigned_yx, &draw.labels, Direction::YToX, g),
        sqerr_xy: sq(est.beta_hat_xy.unwrap_or(opts.missing_estimate) - truth_xy),
        sqerr_yx: sq(est.beta_hat_yx.unwrap_or(opts.missing_estimate) - truth_yx),
        naive_sqerr_xy: sq(naive_xy - truth_xy),
        naive_sqerr_yx: sq(naive_yx - truth_yx),
    })
}

/// Runs `reps` replications of each scenario and aggregates the metrics.
/// Per-replication seeds derive deterministically from `master_seed`, the
/// scenario position, and the replication index.
pub fn run_benchmark(
    specs: &[ScenarioSpec],
    reps: usize,
    opts: &BenchOptions,
    master_seed: u64,
) -> Result<Vec<BenchmarkReport>> {
    if reps == 0 {
        return Err(Error::InvalidParams("reps must be at least 1".into()));
    }
    opts.discovery.validate()?;
    specs
        .iter()
        .enumerate()
        .map(|(spec_idx, spec)| {
            spec.validate()?;
            let started = Instant::now();
            let spec_salt = derive_seed(master_seed, spec_idx as u64);
            let outcomes: Vec<Result<RepOutcome>> = (0..reps)
                .into_par_iter()
                .map(|rep| run_replication(spec, derive_seed(spec_salt, rep as u64), opts))
                .collect();
            let failures = outcomes.iter().filter(|o| o.is_err()).count();
            let ok: Vec<RepOutcome> = outcomes.into_iter().flatten().collect();
            let mean = |f: &dyn Fn(&RepOutcome) -> f64| -> f64 {
                if ok.is_empty() {
                    0.0
                } else {
                    ok.iter().map(|o| f(o)).sum::<f64>() / ok.len() as f64
                }
            };
            Ok(BenchmarkReport {
                scenario: ScenarioSummary::from(spec),
                replications: reps,
                csr_xy: mean(&|o| o.csr_xy),
                csr_yx: mean(&|o| o.csr_yx),
                csr_verbatim_xy: mean(&|o| o.csrv_xy),
                csr_verbatim_yx: mean(&|o| o.csrv_yx),
                mse_xy: mean(&|o| o.sqerr_xy),
                mse_yx: mean(&|o| o.sqerr_yx),
                naive_mse_xy: mean(&|o| o.naive_sqerr_xy),
                naive_mse_yx: mean(&|o| o.naive_sqerr_yx),
                failures,
                wall_time_secs: started.elapsed().as_secs_f64(),
            })
        })
        .collect()
}

/// Writes one CSV row per scenario and direction:
/// `scenario,direction,n,reps,csr,csr_verbatim,mse,naive_mse,failures`.
pub fn write_reports_csv<W: Write>(reports: &[BenchmarkReport], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        "scenario",
        "direction",
        "n",
        "reps",
        "csr",
        "csr_verbatim",
        "mse",
        "naive_mse",
        "failures",
    ])?;
    for r in reports {
        for (dir, csr, csrv, mse, naive) in [
            ("x_to_y", r.csr_xy, r.csr_verbatim_xy, r.mse_xy, r.naive_mse_xy),
            ("y_to_x", r.csr_yx, r.csr_verbatim_yx, r.mse_yx, r.naive_mse_yx),
        ] {
            wtr.write_record([
                r.scenario.label.clone(),
                dir.to_string(),
                r.scenario.sample_size.to_string(),
                r.replications.to_string(),
                format!("{csr}"),
                format!("{csrv}"),
                format!("{mse}"),
                format!("{naive}"),
                r.failures.to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Tidy long-format CSV for metric-versus-sample-size curves:
/// `scenario,direction,n,metric,value`.
pub fn write_plot_data<W: Write>(reports: &[BenchmarkReport], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["scenario", "direction", "n", "metric", "value"])?;
    for r in reports {
        let rows = [
            ("x_to_y", "csr", r.csr_xy),
            ("x_to_y", "csr_verbatim", r.csr_verbatim_xy),
            ("x_to_y", "mse", r.mse_xy),
            ("x_to_y", "naive_mse", r.naive_mse_xy),
            ("y_to_x", "csr", r.csr_yx),
            ("y_to_x", "csr_verbatim", r.csr_verbatim_yx),
            ("y_to_x", "mse", r.mse_yx),
            ("y_to_x", "naive_mse", r.naive_mse_yx),
        ];
        for (dir, metric, value) in rows {
            wtr.write_record([
                r.scenario.label.clone(),
                dir.to_string(),
                r.scenario.sample_size.to_string(),
                metric.to_string(),
                format!("{value}"),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}
