use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::LabeledDataset;
use crate::error::Error;
use crate::eval::{
    average_loss, cov_gap, group_conditional_loss, marginal_miscoverage, marginal_misrobustness, rob_gap,
    sample_balls, worst_case_conditional, Ball, EvalRecord, Which,
};
use crate::grid::LabelGrid;
use crate::kernel::{bandwidth_rule, default_c_grid, select_bandwidth, KernelConfig};
use crate::score::ScoreModel;
use crate::select::{
    f_croims, Croims, E2e, ECroms, FCroms, NaiveCp, NaiveLcp, Problem, SelectionResult, DEFAULT_F_CROIMS_BUDGET,
};
use crate::synth::{
    lambda_grid, make_greedy_score_model, rank_penalty, train_box_model, train_ellipsoid_model,
    train_multinomial_logit, GeneratorSpec, LogitConfig,
};

use super::config::{ExperimentConfig, Method, TrainerKind, METRIC_NAMES};
use super::output::write_outputs;
use super::{mix, stream_id, HarnessError};

const STREAM_DATA: u64 = 1;
const STREAM_TRAIN: u64 = 2;
const STREAM_BALLS: u64 = 3;
const STREAM_NEFF: u64 = 4;

/// One CSV data row: metrics of one method in one replication at one sweep
/// value, aligned with [`columns`].
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub replication: usize,
    pub method: String,
    pub param_name: String,
    pub param_value: f64,
    pub values: Vec<Option<f64>>,
}

/// Metric column names: the fixed metrics, one `group_loss_<g>` per group,
/// then the best-ball rates.
pub fn columns(cfg: &ExperimentConfig) -> Vec<String> {
    let mut c: Vec<String> = METRIC_NAMES.iter().map(|s| s.to_string()).collect();
    c.extend(cfg.metrics.groups.iter().map(|g| format!("group_loss_{}", g.name)));
    c.push("wc_cond_miscoverage_min".into());
    c.push("wc_cond_misrobustness_min".into());
    c
}

/// A (sweep value, replication) cell.
#[derive(Debug, Clone)]
pub struct TaskInput {
    pub param_name: &'static str,
    pub param_value: f64,
    pub replication: usize,
    pub config: ExperimentConfig,
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn train_models(cfg: &ExperimentConfig, seed_r: u64) -> Result<Vec<ScoreModel>, Error> {
    let mut train_rng = rng(mix(seed_r, STREAM_TRAIN));
    let population = cfg.generator.family();
    let shared = if cfg.generator.is_classification() {
        Some(GeneratorSpec::new(population.clone(), cfg.train_size, 0).generate_with(&mut train_rng)?)
    } else {
        None
    };
    let mut models = Vec::new();
    for m in &cfg.models {
        let id = models.len();
        match m.trainer {
            TrainerKind::Greedy | TrainerKind::Logit => {
                let data = shared.as_ref().expect("classification training set");
                let features: Vec<usize> = m.features.clone().unwrap_or_else(|| (0..data.covariate_dim()).collect());
                let logit = LogitConfig {
                    interactions: m.interactions,
                    max_epochs: m.max_epochs.unwrap_or(LogitConfig::default().max_epochs),
                    ..LogitConfig::default()
                };
                let (base, _) = train_multinomial_logit(id, data, &features, &logit)?;
                if m.trainer == TrainerKind::Logit {
                    models.push(base);
                } else {
                    let k = base.num_classes().expect("softmax model");
                    for lambda in lambda_grid(m.lambda_count(), m.lambda_max()) {
                        let id = models.len();
                        models.push(make_greedy_score_model(id, &base, lambda, rank_penalty(k))?);
                    }
                }
            }
            TrainerKind::Ellipsoid | TrainerKind::Box => {
                let family = match &m.center {
                    Some(c) => cfg.generator.pool(c, m.pool_var()),
                    None => population.clone(),
                };
                let data = GeneratorSpec::new(family, cfg.train_size, 0).generate_with(&mut train_rng)?;
                models.push(match m.trainer {
                    TrainerKind::Ellipsoid => train_ellipsoid_model(id, &data, m.ridge())?,
                    _ => train_box_model(id, &data)?,
                });
            }
        }
    }
    Ok(models)
}

fn kernel_for(cfg: &ExperimentConfig, seed_r: u64, labeled: &LabeledDataset) -> Result<Option<KernelConfig>, Error> {
    let Some(k) = &cfg.kernel else { return Ok(None) };
    let template = k.template();
    let d = template.effective_dim(labeled.covariate_dim());
    let bandwidth = match (k.c, k.target_neff) {
        (Some(c), _) => bandwidth_rule(c, cfg.n, d),
        (None, Some(target)) => {
            // held-out sample from the same population, size n
            let sample = GeneratorSpec::new(cfg.generator.family(), cfg.n, 0)
                .generate_with(&mut rng(mix(seed_r, STREAM_NEFF)))?;
            select_bandwidth(sample.xs(), target, &template, &default_c_grid(), cfg.n)?.bandwidth
        }
        (None, None) => unreachable!("validated"),
    };
    Ok(Some(template.with_bandwidth(bandwidth)))
}

fn predictions(
    method: Method,
    name: &str,
    cfg: &ExperimentConfig,
    problem: &Problem,
    kernel: Option<&KernelConfig>,
    test: &LabeledDataset,
    seed_r: u64,
) -> Result<Vec<SelectionResult>, Error> {
    let mut method_rng = rng(mix(seed_r, stream_id(name)));
    let xs = test.xs();
    let kernel = || kernel.ok_or_else(|| Error::InvalidArgument("localized method without a kernel".into()));
    match method {
        Method::NaiveCp => {
            let fit = NaiveCp::fit(problem)?;
            xs.iter().map(|x| fit.predict(problem, x, &mut method_rng)).collect()
        }
        Method::ECroms => {
            let fit = ECroms::fit(problem)?;
            xs.iter().map(|x| fit.predict(problem, x)).collect()
        }
        Method::FCroms => {
            let mut fit = if cfg.generator.is_classification() {
                FCroms::classification(problem)?
            } else {
                let labels: Vec<Vec<f64>> = problem
                    .labeled
                    .ys()
                    .iter()
                    .map(|y| y.vector().expect("regression label").to_vec())
                    .collect();
                FCroms::regression(problem, LabelGrid::from_labels(&labels, &cfg.grid.config())?)?
            };
            xs.iter().map(|x| fit.predict(problem, x)).collect()
        }
        Method::E2e(frac) => {
            let fit = E2e::fit(problem, frac, &mut method_rng)?;
            xs.iter().map(|x| fit.predict(problem, x)).collect()
        }
        Method::Croims => {
            let fit = Croims::fit(problem, kernel()?)?;
            xs.iter().map(|x| fit.predict(problem, x)).collect()
        }
        Method::NaiveLcp => {
            let fit = NaiveLcp::fit(problem, kernel()?)?;
            xs.iter().map(|x| fit.predict(problem, x, &mut method_rng)).collect()
        }
        Method::FCroims => {
            let budget = cfg.f_croims_budget.unwrap_or(DEFAULT_F_CROIMS_BUDGET);
            let k = kernel()?;
            xs.iter().map(|x| f_croims(problem, k, x, budget).map(|o| o.result)).collect()
        }
    }
}

fn metric_row(
    cfg: &ExperimentConfig,
    records: &[EvalRecord],
    balls: &[Ball],
    ncols: usize,
) -> Result<Vec<Option<f64>>, Error> {
    let mt = &cfg.metrics;
    let groups = mt.groups();
    let mut v = vec![None; ncols];
    let want = |m: &str| mt.wants(m);
    if want("miscoverage") {
        v[0] = Some(marginal_miscoverage(records)?);
    }
    if want("misrobustness") {
        v[1] = Some(marginal_misrobustness(records)?);
    }
    if want("avg_loss") {
        v[2] = Some(average_loss(records)?);
    }
    let ball_stat = |which| -> Result<Option<(f64, f64)>, Error> {
        if balls.is_empty() {
            return Ok(None);
        }
        let r = worst_case_conditional(records, balls, which)?;
        Ok(Some((r.max, r.min)))
    };
    let last = ncols - 2;
    if want("wc_cond_miscoverage") {
        if let Some((hi, lo)) = ball_stat(Which::Miscoverage)? {
            v[3] = Some(hi);
            v[last] = Some(lo);
        }
    }
    if want("wc_cond_misrobustness") {
        if let Some((hi, lo)) = ball_stat(Which::Misrobustness)? {
            v[4] = Some(hi);
            v[last + 1] = Some(lo);
        }
    }
    if !groups.is_empty() {
        if want("covgap") {
            v[5] = Some(cov_gap(records, &groups, cfg.alpha));
        }
        if want("robgap") {
            v[6] = Some(rob_gap(records, &groups, cfg.alpha));
        }
        if want("group_loss") {
            for (slot, g) in v[7..last].iter_mut().zip(group_conditional_loss(records, &groups)) {
                *slot = g;
            }
        }
    }
    Ok(v)
}

/// Runs every method of one (sweep value, replication) cell.
pub fn run_task(task: &TaskInput) -> Result<Vec<Row>, HarnessError> {
    let cfg = &task.config;
    let seed_r = mix(cfg.master_seed, task.replication as u64);
    let wrap = |method: &str, source: Error| HarnessError::Run {
        replication: task.replication,
        param: task.param_name.to_string(),
        value: task.param_value,
        method: method.to_string(),
        source,
    };
    let setup = |e| wrap("setup", e);

    let models = train_models(cfg, seed_r).map_err(setup)?;
    let mut data_rng = rng(mix(seed_r, STREAM_DATA));
    let population = cfg.generator.family();
    let labeled = GeneratorSpec::new(population.clone(), cfg.n, 0)
        .generate_with(&mut data_rng)
        .map_err(setup)?;
    let test = GeneratorSpec::new(population, cfg.m, 0)
        .generate_with(&mut data_rng)
        .map_err(setup)?;
    let loss = cfg.loss_spec()?;
    let problem = Problem::new(&models, &labeled, &loss, cfg.alpha).map_err(setup)?;
    let kernel = kernel_for(cfg, seed_r, &labeled).map_err(setup)?;
    let wants_balls = cfg.metrics.balls > 0 && (cfg.metrics.wants("wc_cond_miscoverage") || cfg.metrics.wants("wc_cond_misrobustness"));
    let balls = if wants_balls {
        sample_balls(test.xs(), cfg.metrics.balls, cfg.metrics.ball_mass, &mut rng(mix(seed_r, STREAM_BALLS)))
            .map_err(setup)?
    } else {
        Vec::new()
    };
    let ncols = columns(cfg).len();

    let mut rows = Vec::with_capacity(cfg.methods.len());
    for name in &cfg.methods {
        let method = Method::parse(name).expect("validated method");
        let results = predictions(method, name, cfg, &problem, kernel.as_ref(), &test, seed_r).map_err(|e| wrap(name, e))?;
        let records = test
            .xs()
            .iter()
            .zip(test.ys())
            .zip(&results)
            .map(|((x, y), r)| EvalRecord::new(&problem, x, y, r))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| wrap(name, e))?;
        rows.push(Row {
            replication: task.replication,
            method: name.clone(),
            param_name: task.param_name.to_string(),
            param_value: task.param_value,
            values: metric_row(cfg, &records, &balls, ncols).map_err(|e| wrap(name, e))?,
        });
    }
    Ok(rows)
}

/// Runs all cells on a pool of `jobs` workers (all cores when `None`). Rows
/// come back ordered by sweep value, then replication, then method, whatever
/// the scheduling. On failure, the rows of the cells preceding the first
/// failing one are returned with the error.
pub fn run_rows(cfg: &ExperimentConfig, jobs: Option<usize>) -> (Vec<Row>, Option<HarnessError>) {
    let (param_name, values) = cfg.sweep_points();
    let tasks: Vec<TaskInput> = values
        .iter()
        .flat_map(|&v| {
            let config = cfg.at_sweep_value(v);
            (0..cfg.replications).map(move |r| TaskInput {
                param_name,
                param_value: v,
                replication: r,
                config: config.clone(),
            })
        })
        .collect();
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(jobs.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => return (Vec::new(), Some(HarnessError::Core(Error::InvalidArgument(e.to_string())))),
    };
    let results: Vec<Result<Vec<Row>, HarnessError>> = pool.install(|| tasks.par_iter().map(run_task).collect());
    let mut rows = Vec::new();
    for r in results {
        match r {
            Ok(mut part) => rows.append(&mut part),
            Err(e) => return (rows, Some(e)),
        }
    }
    (rows, None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub rows: usize,
    pub summary_rows: usize,
    pub files: Vec<std::path::PathBuf>,
}

/// Runs the experiment and writes `results.csv`, `summary.csv`, one SVG per
/// metric and `metadata.toml` into `out_dir`. Partial rows are written
/// before a runtime error is returned.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path, jobs: Option<usize>) -> Result<RunReport, HarnessError> {
    cfg.validate()?;
    let (rows, err) = run_rows(cfg, jobs);
    let report = write_outputs(cfg, &rows, out_dir, jobs)?;
    match err {
        Some(e) => Err(e),
        None => Ok(report),
    }
}
