//! Repeated synthetic trials comparing tournament winners with baselines.
//!
//! Output files:
//!
//! - `trials_n{N}.csv`: one row per (method, trial);
//! - `summary.csv`: nearest-rank quantiles of the `ℓ₂` error and the
//!   empirical probability that a trial fails or exceeds the threshold;
//! - `scaling.csv`: median `ℓ₂` error along the sample-size grid.
//!
//! Every file is a pure function of the configuration and the seed.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{child_seed, generate, Dataset, Design, Noise, ScenarioSpec, TruthSpec};
use crate::error::{invalid, Error, Result};
use crate::norms::RegNorm;
use crate::params::{Penalty, ProcedureConstants};
use crate::solvers::{build_pool, lasso_path, least_squares, SolverConfig};
use crate::tournament::{adaptive_radius_run, mom_risk, run_tournament, OracleMode, TournamentConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Tournament,
    /// LASSO fitted on fold 2 with the penalty level picked by
    /// median-of-means validation on fold 3.
    LassoMomCv,
    Ols,
}

/// Which data the candidate pool is fitted on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolFold {
    /// Reuse the elimination fold.
    #[default]
    Fold2,
    /// Draw a fourth, independent fold.
    Extra,
}

/// How `solver.lambda_grid` is read.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaScale {
    #[default]
    Absolute,
    /// Entries are multiples of `sqrt(ln(e d) / N)`.
    Rate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptiveConfig {
    pub r0: f64,
    pub depth: usize,
    pub validation_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub trials: usize,
    /// Samples per fold; one scenario per entry.
    pub n_grid: Vec<usize>,
    pub d: usize,
    pub design: Design,
    pub noise: Noise,
    pub truth: TruthSpec,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_penalty")]
    pub penalty: Penalty,
    /// Put the true coefficient vector in the pool.
    #[serde(default)]
    pub include_truth: bool,
    #[serde(default)]
    pub pool_fold: PoolFold,
    #[serde(default)]
    pub lambda_scale: LambdaScale,
    #[serde(default)]
    pub oracle: OracleMode,
    #[serde(default)]
    pub r_hat_override: Option<f64>,
    #[serde(default)]
    pub adaptive: Option<AdaptiveConfig>,
    /// A trial counts as a failure when its `ℓ₂` error exceeds this.
    pub failure_threshold: f64,
    /// Fill the `runtime_ms` column; off by default because timings break
    /// byte-for-byte reproducibility.
    #[serde(default)]
    pub record_runtime: bool,
    #[serde(default)]
    pub constants: ProcedureConstants,
    #[serde(default)]
    pub solver: SolverConfig,
}

fn default_methods() -> Vec<Method> {
    vec![Method::Tournament, Method::LassoMomCv]
}

fn default_penalty() -> Penalty {
    Penalty::Lasso
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate().map_err(|e| match e {
            Error::InvalidArgument(msg) => Error::Config(msg),
            other => other,
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return invalid("trials must be at least 1");
        }
        if self.n_grid.is_empty() {
            return invalid("n_grid must not be empty");
        }
        if self.methods.is_empty() {
            return invalid("methods must not be empty");
        }
        if !(self.failure_threshold >= 0.0) {
            return invalid("failure_threshold must be non-negative");
        }
        if let Some(r) = self.r_hat_override {
            if !(r > 0.0 && r.is_finite()) {
                return invalid("r_hat_override must be finite and positive");
            }
        }
        if let Some(a) = &self.adaptive {
            if !(a.r0 > 0.0) || a.depth == 0 {
                return invalid("adaptive runs need r0 > 0 and depth >= 1");
            }
            if !(a.validation_fraction > 0.0 && a.validation_fraction <= 0.5) {
                return invalid("validation_fraction must lie in (0, 1/2]");
            }
        }
        self.constants.validate()?;
        self.solver.validate()?;
        for &n in &self.n_grid {
            self.scenario(n, 0).validate()?;
        }
        Ok(())
    }

    pub fn scenario(&self, n: usize, seed: u64) -> ScenarioSpec {
        ScenarioSpec {
            d: self.d,
            n_per_fold: n,
            design: self.design,
            noise: self.noise,
            truth: self.truth.clone(),
            extra_folds: usize::from(self.pool_fold == PoolFold::Extra),
            seed,
        }
    }

    /// Solver settings for samples of size `n`, with the grid in absolute units.
    pub fn solver_at(&self, n: usize) -> SolverConfig {
        let mut solver = self.solver.clone();
        if self.lambda_scale == LambdaScale::Rate {
            let unit = ((1.0 + (self.d as f64).ln()) / n as f64).sqrt();
            solver.lambda_grid.iter_mut().for_each(|l| *l *= unit);
        }
        solver
    }

    pub fn tournament_config(&self) -> TournamentConfig {
        TournamentConfig {
            penalty: self.penalty,
            consts: self.constants.clone(),
            r_hat_override: self.r_hat_override,
            r_hat_exact: false,
            oracle: self.oracle,
        }
    }
}

/// One method's result on one trial. Error fields are `None` on failure.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub method: String,
    pub trial: usize,
    pub l2_err: Option<f64>,
    pub psi_err: Option<f64>,
    /// `R(t̂) - R(t₀)`, equal to `‖t̂ - t₀‖₂²` for the isotropic designs generated here.
    pub excess_risk: Option<f64>,
    pub level: Option<usize>,
    pub r_hat: Option<f64>,
    pub pool_size: Option<usize>,
    pub runtime_ms: Option<f64>,
    pub failed: bool,
}

impl TrialRecord {
    fn failure(method: &str, trial: usize) -> Self {
        Self {
            method: method.to_string(),
            trial,
            l2_err: None,
            psi_err: None,
            excess_risk: None,
            level: None,
            r_hat: None,
            pool_size: None,
            runtime_ms: None,
            failed: true,
        }
    }

    fn success(method: &str, trial: usize, t: &[f64], t0: &[f64], norm: &RegNorm) -> Self {
        let diff: Vec<f64> = t.iter().zip(t0).map(|(a, b)| a - b).collect();
        let sq: f64 = diff.iter().map(|v| v * v).sum();
        Self {
            method: method.to_string(),
            trial,
            l2_err: Some(sq.sqrt()),
            psi_err: Some(norm.value(&diff)),
            excess_risk: Some(sq),
            level: None,
            r_hat: None,
            pool_size: None,
            runtime_ms: None,
            failed: false,
        }
    }
}

pub fn method_tag(method: Method, penalty: Penalty) -> String {
    match method {
        Method::Tournament => format!("tournament_{}", penalty.tag()),
        Method::LassoMomCv => "lasso_mom_cv".to_string(),
        Method::Ols => "ols".to_string(),
    }
}

/// Seed of trial `trial` in the scenario at position `n_index` of the grid.
pub fn trial_seed(seed: u64, n_index: usize, trial: usize) -> u64 {
    child_seed(child_seed(seed, n_index as u64), trial as u64)
}

/// Runs every configured method on one generated data set.
pub fn run_trial(config: &ExperimentConfig, n: usize, trial: usize, seed: u64) -> Result<Vec<TrialRecord>> {
    let spec = config.scenario(n, seed);
    let dataset = generate(&spec)?;
    let norm = config.penalty.norm(config.d);
    let solver = config.solver_at(n);
    let mut out = Vec::with_capacity(config.methods.len());
    for &method in &config.methods {
        let tag = method_tag(method, config.penalty);
        let start = Instant::now();
        let mut rec = match method {
            Method::Tournament => tournament_trial(config, &solver, &dataset, &tag, trial, &norm, seed)?,
            Method::LassoMomCv => lasso_mom_cv(&dataset, &solver)
                .map(|(t, _)| {
                    let mut r = TrialRecord::success(&tag, trial, &t, &dataset.truth.t0, &norm);
                    r.pool_size = Some(solver.lambda_grid.len());
                    r
                })
                .unwrap_or_else(|_| TrialRecord::failure(&tag, trial)),
            Method::Ols => {
                let f2 = dataset.data.fold2();
                match least_squares(f2.x.view(), &f2.y) {
                    Ok(t) => TrialRecord::success(&tag, trial, &t, &dataset.truth.t0, &norm),
                    Err(_) => TrialRecord::failure(&tag, trial),
                }
            }
        };
        if config.record_runtime {
            rec.runtime_ms = Some(start.elapsed().as_secs_f64() * 1e3);
        }
        out.push(rec);
    }
    Ok(out)
}

fn tournament_trial(
    config: &ExperimentConfig,
    solver: &SolverConfig,
    dataset: &Dataset,
    tag: &str,
    trial: usize,
    norm: &RegNorm,
    seed: u64,
) -> Result<TrialRecord> {
    let fit_fold = match config.pool_fold {
        PoolFold::Fold2 => dataset.data.fold2(),
        PoolFold::Extra => &dataset.extra[0],
    };
    let truth = config.include_truth.then_some(dataset.truth.t0.as_slice());
    let pool = build_pool(fit_fold, config.penalty, solver, truth, child_seed(seed, u64::MAX))?;
    let tcfg = config.tournament_config();
    let result = match &config.adaptive {
        None => run_tournament(&pool, &dataset.data, &tcfg).map(|o| {
            let r_hat = o.reports[o.level - 1].params.r_hat;
            (o.winner, o.level, r_hat)
        }),
        Some(a) => adaptive_radius_run(&pool, &dataset.data, &tcfg, a.r0, a.depth, a.validation_fraction)
            .map(|o| (o.winner, o.level, o.r_hat)),
    };
    Ok(match result {
        Ok((winner, level, r_hat)) => {
            let mut r = TrialRecord::success(tag, trial, &winner.t, &dataset.truth.t0, norm);
            r.level = Some(level);
            r.r_hat = Some(r_hat);
            r.pool_size = Some(pool.len());
            r
        }
        Err(Error::NoWinner { .. }) => {
            let mut r = TrialRecord::failure(tag, trial);
            r.pool_size = Some(pool.len());
            r
        }
        Err(e) => return Err(e),
    })
}

/// LASSO path on fold 2; the penalty level with the smallest median-of-means
/// risk on fold 3 wins (earliest grid entry on ties).
pub fn lasso_mom_cv(dataset: &Dataset, solver: &SolverConfig) -> Result<(Vec<f64>, f64)> {
    let f2 = dataset.data.fold2();
    let fits = lasso_path(f2.x.view(), &f2.y, &solver.lambda_grid, solver)?;
    let mut best: Option<(f64, usize)> = None;
    for (k, fit) in fits.iter().enumerate() {
        let risk = mom_risk(dataset.data.fold3(), &fit.coef)?;
        if best.is_none_or(|(b, _)| risk < b) {
            best = Some((risk, k));
        }
    }
    let (_, k) = best.ok_or_else(|| Error::InvalidArgument("empty lambda grid".into()))?;
    Ok((fits[k].coef.clone(), solver.lambda_grid[k]))
}

/// Value at rank `⌈p·n⌉` of the sorted sample.
pub fn nearest_rank(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Some(sorted[rank - 1])
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub digest: String,
    pub n: usize,
    pub method: String,
    pub trials: usize,
    pub failures: usize,
    pub l2_p50: Option<f64>,
    pub l2_p90: Option<f64>,
    pub l2_p95: Option<f64>,
    pub psi_p50: Option<f64>,
    pub fail_prob: f64,
    pub threshold: f64,
}

/// Aggregates the records of one method on one scenario.
pub fn summarize(digest: &str, n: usize, method: &str, records: &[&TrialRecord], threshold: f64) -> SummaryRow {
    let mut l2: Vec<f64> = records.iter().filter_map(|r| r.l2_err).collect();
    l2.sort_by(f64::total_cmp);
    let mut psi: Vec<f64> = records.iter().filter_map(|r| r.psi_err).collect();
    psi.sort_by(f64::total_cmp);
    let failures = records.iter().filter(|r| r.failed).count();
    let bad = failures + l2.iter().filter(|e| **e > threshold).count();
    SummaryRow {
        digest: digest.to_string(),
        n,
        method: method.to_string(),
        trials: records.len(),
        failures,
        l2_p50: nearest_rank(&l2, 0.5),
        l2_p90: nearest_rank(&l2, 0.9),
        l2_p95: nearest_rank(&l2, 0.95),
        psi_p50: nearest_rank(&psi, 0.5),
        fail_prob: if records.is_empty() { 0.0 } else { bad as f64 / records.len() as f64 },
        threshold,
    }
}

fn opt<T: Display>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

fn na<T: Display>(v: Option<T>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

pub const TRIAL_HEADER: [&str; 10] = [
    "method",
    "trial",
    "l2_err",
    "psi_err",
    "excess_risk",
    "level",
    "r_hat",
    "pool_size",
    "runtime_ms",
    "failed",
];

pub const SUMMARY_HEADER: [&str; 11] = [
    "digest", "n", "method", "trials", "failures", "l2_p50", "l2_p90", "l2_p95", "psi_p50", "fail_prob", "threshold",
];

pub fn write_trials(path: &Path, records: &[TrialRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRIAL_HEADER)?;
    for r in records {
        w.write_record([
            r.method.clone(),
            r.trial.to_string(),
            opt(r.l2_err),
            opt(r.psi_err),
            opt(r.excess_risk),
            opt(r.level),
            opt(r.r_hat),
            opt(r.pool_size),
            opt(r.runtime_ms),
            u8::from(r.failed).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            r.digest.clone(),
            r.n.to_string(),
            r.method.clone(),
            r.trials.to_string(),
            r.failures.to_string(),
            na(r.l2_p50),
            na(r.l2_p90),
            na(r.l2_p95),
            na(r.psi_p50),
            r.fail_prob.to_string(),
            r.threshold.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    /// Records per entry of the sample-size grid, sorted by method then trial.
    pub records: Vec<(usize, Vec<TrialRecord>)>,
    pub summary: Vec<SummaryRow>,
    pub files: Vec<PathBuf>,
}

/// Runs all trials of every scenario and writes the CSV files into `out_dir`.
///
/// `parallel` bounds the worker threads; results do not depend on it.
pub fn run_experiment(config: &ExperimentConfig, seed: u64, out_dir: &Path, parallel: Option<usize>) -> Result<ExperimentOutput> {
    config.validate()?;
    fs::create_dir_all(out_dir)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = parallel {
        if k == 0 {
            return invalid("parallelism must be at least 1");
        }
        builder = builder.num_threads(k);
    }
    let workers = builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;

    let order: BTreeMap<String, usize> = config
        .methods
        .iter()
        .enumerate()
        .map(|(i, &m)| (method_tag(m, config.penalty), i))
        .collect();

    let mut all = Vec::with_capacity(config.n_grid.len());
    let mut summary = Vec::new();
    let mut files = Vec::new();
    for (ni, &n) in config.n_grid.iter().enumerate() {
        let per_trial: Vec<Vec<TrialRecord>> = workers.install(|| {
            (0..config.trials)
                .into_par_iter()
                .map(|trial| run_trial(config, n, trial, trial_seed(seed, ni, trial)))
                .collect::<Result<_>>()
        })?;
        let mut records: Vec<TrialRecord> = per_trial.into_iter().flatten().collect();
        records.sort_by_key(|r| (order[&r.method], r.trial));

        let path = out_dir.join(format!("trials_n{n}.csv"));
        write_trials(&path, &records)?;
        files.push(path);

        let digest = config.scenario(n, seed).digest();
        for &m in &config.methods {
            let tag = method_tag(m, config.penalty);
            let rows: Vec<&TrialRecord> = records.iter().filter(|r| r.method == tag).collect();
            summary.push(summarize(&digest, n, &tag, &rows, config.failure_threshold));
        }
        all.push((n, records));
    }

    let path = out_dir.join("summary.csv");
    write_summary(&path, &summary)?;
    files.push(path);

    let path = out_dir.join("scaling.csv");
    write_scaling(&path, config, &summary)?;
    files.push(path);

    Ok(ExperimentOutput {
        records: all,
        summary,
        files,
    })
}

/// Median error per sample size and its ratio to the previous grid entry.
fn write_scaling(path: &Path, config: &ExperimentConfig, summary: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "n", "l2_p50", "improvement"])?;
    for &m in &config.methods {
        let tag = method_tag(m, config.penalty);
        let mut prev: Option<f64> = None;
        for row in summary.iter().filter(|r| r.method == tag) {
            let ratio = match (prev, row.l2_p50) {
                (Some(p), Some(c)) if c > 0.0 => Some(p / c),
                _ => None,
            };
            w.write_record([tag.clone(), row.n.to_string(), na(row.l2_p50), na(ratio)])?;
            prev = row.l2_p50;
        }
    }
    w.flush()?;
    Ok(())
}

fn parse_na(s: &str) -> Result<Option<f64>> {
    if s == "NA" || s.is_empty() {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| Error::InvalidArgument(format!("not a number: {s:?}")))
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != SUMMARY_HEADER {
        return invalid(format!("{} is not a summary file", path.display()));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let int = |i: usize| -> Result<usize> {
            rec[i]
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("not an integer: {:?}", &rec[i])))
        };
        rows.push(SummaryRow {
            digest: rec[0].to_string(),
            n: int(1)?,
            method: rec[2].to_string(),
            trials: int(3)?,
            failures: int(4)?,
            l2_p50: parse_na(&rec[5])?,
            l2_p90: parse_na(&rec[6])?,
            l2_p95: parse_na(&rec[7])?,
            psi_p50: parse_na(&rec[8])?,
            fail_prob: parse_na(&rec[9])?.unwrap_or(f64::NAN),
            threshold: parse_na(&rec[10])?.unwrap_or(f64::NAN),
        });
    }
    Ok(rows)
}

/// `a / b`, with `0 / 0 = 1` and anything involving a missing value unavailable.
fn ratio(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(a), Some(b)) if a == 0.0 && b == 0.0 => Some(1.0),
        (Some(a), Some(b)) if b != 0.0 && a.is_finite() && b.is_finite() => Some(a / b),
        _ => None,
    }
}

pub const COMPARE_HEADER: [&str; 13] = [
    "n",
    "digest",
    "input",
    "method",
    "reference",
    "l2_p50",
    "l2_p90",
    "l2_p95",
    "fail_prob",
    "p50_ratio",
    "p90_ratio",
    "p95_ratio",
    "fail_ratio",
];

/// Side-by-side comparison of summary files against the first one.
///
/// With several files, each row is compared with the first file's row for
/// the same sample size and method, or with the first file's first row at
/// that sample size when the method does not appear there. A single file is
/// compared with its own first row at each sample size, so every method is
/// measured against the first one configured. Ratios are `row / reference`.
pub fn compare_methods(inputs: &[PathBuf], out: &Path) -> Result<()> {
    if inputs.is_empty() {
        return invalid("compare needs at least one summary file");
    }
    let tables: Vec<Vec<SummaryRow>> = inputs.iter().map(|p| read_summary(p)).collect::<Result<_>>()?;
    if tables.iter().map(Vec::len).sum::<usize>() < 2 {
        return invalid("compare needs at least two method summaries");
    }
    let same_method = inputs.len() > 1;

    let mut digests: BTreeMap<usize, &str> = BTreeMap::new();
    for row in tables.iter().flatten() {
        let d = digests.entry(row.n).or_insert(&row.digest);
        if *d != row.digest {
            return invalid(format!("scenario digests differ at n = {}: {} vs {}", row.n, d, row.digest));
        }
    }

    let reference = &tables[0];
    let mut w = csv::Writer::from_path(out)?;
    w.write_record(COMPARE_HEADER)?;
    for (k, table) in tables.iter().enumerate() {
        for row in table {
            let Some(base) = reference
                .iter()
                .find(|r| same_method && r.n == row.n && r.method == row.method)
                .or_else(|| reference.iter().find(|r| r.n == row.n))
            else {
                return invalid(format!("{} has no scenario with n = {}", inputs[0].display(), row.n));
            };
            w.write_record([
                row.n.to_string(),
                row.digest.clone(),
                inputs[k].display().to_string(),
                row.method.clone(),
                base.method.clone(),
                na(row.l2_p50),
                na(row.l2_p90),
                na(row.l2_p95),
                row.fail_prob.to_string(),
                na(ratio(row.l2_p50, base.l2_p50)),
                na(ratio(row.l2_p90, base.l2_p90)),
                na(ratio(row.l2_p95, base.l2_p95)),
                na(ratio(Some(row.fail_prob), Some(base.fail_prob))),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
