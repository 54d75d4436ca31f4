//! Experiment orchestration and result files.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, ExperimentKind, Targets};
use crate::covgrid::{berman_check, GridShape};
use crate::diagnostics::{
    comparison_bound, dprime_sum, dstar_bound, make_partition, tail_comparability, ConditionReport, LAG_TRUNCATION,
};
use crate::error::{Error, Result};
use crate::estimators::{mc_joint_probability, AscltPlan, AscltSetup, JointSetup};
use crate::fieldgen::{validate_trend, FieldGenerator, GaussianSampler, TrendSpec, CENTER_TOL};
use crate::levels::{limit_value, LevelPlan, TailFunction};
use crate::numeric::normal_sf;

pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const PLOT_FILE: &str = "plot.csv";

pub const SIMULATE_HEADER: [&str; 14] = [
    "shape",
    "family",
    "params",
    "lambda",
    "tau",
    "kappa",
    "u",
    "v",
    "estimate",
    "std_error",
    "target",
    "abs_error",
    "replications",
    "seed",
];

pub const ASCLT_HEADER: [&str; 12] = [
    "path",
    "shape",
    "lambda",
    "tau",
    "kappa",
    "estimate",
    "target",
    "normalized_target",
    "vacuous",
    "ratio",
    "ratio_bound",
    "seed",
];

pub const PLOT_HEADER: [&str; 3] = ["n", "estimate", "target"];

pub const CALIBRATE_HEADER: [&str; 8] = ["shape", "field", "tau", "kappa", "u", "v", "achieved_tau", "achieved_kappa"];

pub const LIMIT_HEADER: [&str; 4] = ["lambda", "tau", "kappa", "target"];

pub const DIAGNOSE_HEADER: [&str; 25] = [
    "shape",
    "family",
    "params",
    "v",
    "berman_row",
    "berman_col",
    "berman_joint",
    "berman_joint_ratio",
    "k1",
    "k2",
    "m1",
    "m2",
    "partition_rate",
    "dprime",
    "dprime_excess",
    "dprime_truncation",
    "comparison_bound",
    "dstar",
    "dstar_benchmark",
    "tail_ratio",
    "berman_pass",
    "dprime_decreasing",
    "comparison_decreasing",
    "dstar_pass",
    "tail_pass",
];

/// A CSV table as header plus string rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    /// Rows as JSON objects keyed by column.
    pub fn records(&self) -> Vec<Value> {
        self.rows
            .iter()
            .map(|r| Value::Object(self.header.iter().cloned().zip(r.iter().map(|v| json!(v))).collect()))
            .collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub results: Table,
    pub plot: Option<Table>,
    pub summary: Value,
}

fn f(x: f64) -> String {
    x.to_string()
}

fn sampler_for(config: &ExperimentConfig, shape: GridShape) -> Result<GaussianSampler> {
    GaussianSampler::with_threshold(config.model, shape, config.dense_threshold)
}

/// Levels used for Monte Carlo and calibration at `shape`.
fn plan_for(config: &ExperimentConfig, tailfn: TailFunction, shape: GridShape) -> Result<LevelPlan> {
    match config.targets {
        Targets::Exceedance { tau, kappa } if config.trend.is_zero() => LevelPlan::calibrated(tailfn, shape, tau, kappa),
        t => {
            let (x, y) = t.gumbel();
            LevelPlan::gumbel(shape, x, y)
        }
    }
}

fn trend_for(config: &ExperimentConfig, shape: GridShape) -> Result<Option<TrendSpec>> {
    if config.trend.is_zero() {
        Ok(None)
    } else {
        TrendSpec::solved(&config.trend, shape).map(Some)
    }
}

/// Run one configured experiment. Nothing is written to disk.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput> {
    let start = Instant::now();
    let (results, plot, details) = match config.experiment {
        ExperimentKind::Simulate => simulate(config)?,
        ExperimentKind::Asclt => asclt(config)?,
        ExperimentKind::Calibrate => calibrate(config)?,
        ExperimentKind::Diagnose => diagnose(config)?,
        ExperimentKind::Limit => limit(config)?,
    };
    let summary = json!({
        "experiment": config.experiment,
        "version": env!("CARGO_PKG_VERSION"),
        "config_digest": config.digest(),
        "config": config,
        "wall_time_seconds": start.elapsed().as_secs_f64(),
        "records": results.records(),
        "details": details,
    });
    Ok(RunOutput { results, plot, summary })
}

/// Write results.csv, summary.json and, when present, plot.csv into `dir`.
pub fn write_outputs(output: &RunOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let results = dir.join(RESULTS_FILE);
    fs::write(&results, output.results.to_csv()?)?;
    written.push(results);
    if let Some(plot) = &output.plot {
        let path = dir.join(PLOT_FILE);
        fs::write(&path, plot.to_csv()?)?;
        written.push(path);
    }
    let summary = dir.join(SUMMARY_FILE);
    fs::write(&summary, serde_json::to_string_pretty(&output.summary)? + "\n")?;
    written.push(summary);
    Ok(written)
}

type Parts = (Table, Option<Table>, Value);

fn simulate(config: &ExperimentConfig) -> Result<Parts> {
    let mut table = Table::new(&SIMULATE_HEADER);
    let mut details = Vec::new();
    let tailfn = config.field.tail_function();
    for &shape in &config.shapes {
        let sampler = sampler_for(config, shape)?;
        let method = sampler.method();
        let generator = FieldGenerator::new(sampler, config.field)?;
        let plan = plan_for(config, tailfn, shape)?;
        let trend = trend_for(config, shape)?;
        let trend_report = match &trend {
            Some(t) => Some(validate_trend(t, CENTER_TOL)?),
            None => None,
        };
        let setup = JointSetup {
            generator,
            lambda: config.lambda,
            plan,
            trend,
            replications: config.replications,
            seed: config.seed,
            config_digest: config.digest(),
        };
        let r = mc_joint_probability(&setup)?;
        table.rows.push(vec![
            shape.to_string(),
            config.model.tag().to_string(),
            config.model.params(),
            config.lambda.to_string(),
            f(plan.tau),
            f(plan.kappa),
            f(plan.u),
            f(plan.v),
            f(r.estimate),
            f(r.std_error),
            f(r.target),
            f(r.abs_error()),
            r.replications.to_string(),
            r.seed.to_string(),
        ]);
        details.push(json!({ "shape": shape, "sampler": method, "plan": plan, "trend": trend_report }));
    }
    Ok((table, None, Value::Array(details)))
}

fn asclt(config: &ExperimentConfig) -> Result<Parts> {
    let shape = config.shapes[0];
    let checkpoints = if config.checkpoints.is_empty() { vec![shape] } else { config.checkpoints.clone() };
    let setup = AscltSetup {
        generator: FieldGenerator::new(sampler_for(config, shape)?, config.field)?,
        lambda: config.lambda,
        rule: config.level_rule(),
        trend: if config.trend.is_zero() { None } else { Some(config.trend) },
        ratio_bound: config.ratio_bound,
        checkpoints: checkpoints.clone(),
        seed: config.seed,
    };
    let plan = AscltPlan::new(setup)?;
    let reports = (0..config.paths).into_par_iter().map(|p| plan.estimate(p)).collect::<Result<Vec<_>>>()?;
    let (tau, kappa) = config.targets.tau_kappa();

    let mut table = Table::new(&ASCLT_HEADER);
    for r in &reports {
        table.rows.push(vec![
            r.path.to_string(),
            shape.to_string(),
            config.lambda.to_string(),
            f(tau),
            f(kappa),
            f(r.estimate),
            f(r.target),
            f(r.target * r.weight_sum / r.log_product),
            r.vacuous.to_string(),
            f(r.ratio),
            f(r.ratio_bound),
            config.seed.to_string(),
        ]);
    }
    let mut plot = Table::new(&PLOT_HEADER);
    for (i, c) in checkpoints.iter().enumerate() {
        let mean = reports.iter().map(|r| r.checkpoints[i].estimate).sum::<f64>() / reports.len() as f64;
        plot.rows.push(vec![c.to_string(), f(mean), f(plan.target())]);
    }
    Ok((table, Some(plot), serde_json::to_value(&reports)?))
}

fn calibrate(config: &ExperimentConfig) -> Result<Parts> {
    let mut table = Table::new(&CALIBRATE_HEADER);
    let tailfn = config.field.tail_function();
    for &shape in &config.shapes {
        let plan = plan_for(config, tailfn, shape)?;
        table.rows.push(vec![
            shape.to_string(),
            config.field.to_string(),
            f(plan.tau),
            f(plan.kappa),
            f(plan.u),
            f(plan.v),
            f(plan.achieved_tau()),
            f(plan.achieved_kappa()),
        ]);
    }
    Ok((table, None, Value::Null))
}

fn limit(config: &ExperimentConfig) -> Result<Parts> {
    let (tau, kappa) = config.targets.tau_kappa();
    let mut table = Table::new(&LIMIT_HEADER);
    table.rows.push(vec![config.lambda.to_string(), f(tau), f(kappa), f(limit_value(&config.lambda, kappa, tau)?)]);
    Ok((table, None, Value::Null))
}

fn flag(b: bool) -> String {
    if b { "PASS" } else { "FAIL" }.to_string()
}

fn diagnose(config: &ExperimentConfig) -> Result<Parts> {
    let shapes = &config.shapes;
    let model = &config.model;
    let berman = berman_check(model, shapes, config.epsilon)?;
    let plans = shapes
        .iter()
        .map(|&s| plan_for(config, TailFunction::Gaussian, s))
        .collect::<Result<Vec<_>>>()?;
    let partitions = shapes.iter().map(|&s| make_partition(s)).collect::<Result<Vec<_>>>()?;
    let dprime = plans.iter().zip(&partitions).map(|(p, q)| dprime_sum(model, p, q)).collect::<Result<Vec<_>>>()?;
    let comparison: Vec<f64> = plans.iter().map(|p| comparison_bound(model, p)).collect();
    let dstar = plans
        .windows(2)
        .map(|w| dstar_bound(model, &w[0], &w[1], config.epsilon))
        .collect::<Result<Vec<_>>>()?;
    let tails = plans
        .iter()
        .map(|p| {
            let values = match trend_for(config, p.shape)? {
                Some(t) => t.values.iter().map(|m| normal_sf(p.u + t.center - m)).collect(),
                None => vec![normal_sf(p.u)],
            };
            tail_comparability(&values, config.comparability_bound)
        })
        .collect::<Result<Vec<_>>>()?;

    let series = |name: &str, v: Vec<f64>| ConditionReport::new(name, shapes.iter().copied().zip(v).collect(), LAG_TRUNCATION);
    let dprime_report = series("dprime", dprime.iter().map(|d| d.value).collect());
    let comparison_report = series("comparison_bound", comparison.clone());
    let mut dstar_values = vec![];
    if !dstar.is_empty() {
        dstar_values = shapes[1..].iter().copied().zip(dstar.iter().map(|d| d.value)).collect();
    }
    let dstar_report = ConditionReport::new("dstar", dstar_values, config.epsilon);

    let mut table = Table::new(&DIAGNOSE_HEADER);
    for (i, &shape) in shapes.iter().enumerate() {
        let b = &berman.rows[i];
        let p = &partitions[i];
        let (dstar_value, dstar_bench, dstar_pass) = match i.checked_sub(1).map(|j| &dstar[j]) {
            Some(d) => (f(d.value), f(d.benchmark), flag(d.below_benchmark)),
            None => (String::new(), String::new(), String::new()),
        };
        table.rows.push(vec![
            shape.to_string(),
            model.tag().to_string(),
            model.params(),
            f(plans[i].v),
            f(b.row),
            f(b.col),
            f(b.joint),
            f(b.joint_ratio),
            p.k1.to_string(),
            p.k2.to_string(),
            p.m1.to_string(),
            p.m2.to_string(),
            f(p.rate1.max(p.rate2)),
            f(dprime[i].value),
            f(dprime[i].excess),
            f(dprime[i].truncation_bound),
            f(comparison[i]),
            dstar_value,
            dstar_bench,
            f(tails[i].ratio),
            flag(berman.pass),
            flag(dprime_report.decreasing),
            flag(comparison_report.decreasing),
            dstar_pass,
            flag(tails[i].pass),
        ]);
    }
    let details = json!({
        "berman": berman,
        "conditions": [dprime_report, comparison_report, dstar_report],
        "partitions": partitions.iter().map(|p| json!({"shape": p.shape, "k": [p.k1, p.k2], "m": [p.m1, p.m2], "remainder": p.remainder})).collect::<Vec<_>>(),
    });
    Ok((table, None, details))
}
