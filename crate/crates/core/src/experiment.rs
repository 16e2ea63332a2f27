//! Benchmark protocol: repeated random training subsets, grid tuning of
//! `mu` and `lambda`, accuracy on the full data set, aggregated per variant
//! and training rate.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::halfvec::{assemble_design, DesignCache};
use crate::models::{self, QuadSurfaceModel, TrainConfig, Variant};

/// Which column of a CSV file holds the class label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Last,
    Index(usize),
    Name(String),
}

/// Reads a headed CSV file. Every column except the label must be numeric;
/// the label column must hold exactly two distinct values, `positive_label`
/// becoming `+1` and the other `-1`. Parse errors carry 1-based line and
/// column numbers, the header being line 1.
pub fn load_csv(
    path: impl AsRef<Path>,
    label: &LabelColumn,
    positive_label: &str,
) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_csv(file, label, positive_label)
}

pub fn read_csv(
    reader: impl std::io::Read,
    label: &LabelColumn,
    positive_label: &str,
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let csv_err = |e: csv::Error| {
        let row = e.position().map_or(0, |p| p.line() as usize);
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Parse {
                row,
                column: 0,
                message: format!("{other:?}"),
            },
        }
    };
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let width = headers.len();
    let label_col = match label {
        LabelColumn::Last => width.checked_sub(1).ok_or(Error::EmptyDataset)?,
        LabelColumn::Index(i) if *i < width => *i,
        LabelColumn::Index(i) => {
            return Err(Error::InvalidDataset(format!(
                "label column {i} out of range for {width} columns"
            )))
        }
        LabelColumn::Name(name) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidDataset(format!("no column named '{name}'")))?,
    };
    if width < 2 {
        return Err(Error::InvalidDataset(
            "need at least one feature and a label".into(),
        ));
    }

    let mut values = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != width {
            return Err(Error::Parse {
                row: line,
                column: record.len().min(width) + 1,
                message: format!("expected {width} fields, found {}", record.len()),
            });
        }
        for (col, field) in record.iter().enumerate() {
            if field.is_empty() {
                return Err(Error::Parse {
                    row: line,
                    column: col + 1,
                    message: "missing value".into(),
                });
            }
            if col == label_col {
                raw_labels.push(field.to_string());
            } else {
                let v: f64 = field.parse().map_err(|_| Error::Parse {
                    row: line,
                    column: col + 1,
                    message: format!("'{field}' is not a number"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        row: line,
                        column: col + 1,
                        message: "non-finite value".into(),
                    });
                }
                values.push(v);
            }
        }
    }
    if raw_labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut distinct: Vec<&str> = raw_labels.iter().map(String::as_str).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() != 2 {
        return Err(Error::NotTwoClasses {
            found: distinct.len(),
        });
    }
    if !distinct.contains(&positive_label) {
        return Err(Error::InvalidDataset(format!(
            "positive label '{positive_label}' not found; labels are {distinct:?}"
        )));
    }
    let y = raw_labels
        .iter()
        .map(|l| if l == positive_label { 1 } else { -1 })
        .collect();
    let m = raw_labels.len();
    Dataset::new(DMatrix::from_row_slice(m, width - 1, &values), y)
}

/// Percentage of samples whose predicted label matches.
pub fn accuracy_score(model: &QuadSurfaceModel, dataset: &Dataset) -> Result<f64> {
    let mut correct = 0usize;
    for i in 0..dataset.len() {
        if model.predict(&dataset.sample(i))? == dataset.labels()[i] {
            correct += 1;
        }
    }
    Ok(100.0 * correct as f64 / dataset.len() as f64)
}

/// Data used to score candidates while tuning.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TuningScore {
    /// Score on the full data set (training and remaining samples).
    FullSet,
    /// Score on the training subset only.
    TrainingSet,
}

/// Data used to report the accuracy of the tuned models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Evaluation {
    FullSet,
    /// Only the samples outside the training subset.
    HeldOut,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub variants: Vec<Variant>,
    /// Percentages in `(0, 100]`.
    pub training_rates: Vec<f64>,
    pub repetitions: usize,
    /// `mu = 2^e`.
    pub mu_exponents: Vec<i32>,
    /// `lambda = 2^e`.
    pub lambda_exponents: Vec<i32>,
    pub seed: u64,
    pub tuning: TuningScore,
    pub evaluation: Evaluation,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            variants: vec![
                Variant::L1Sqssvm,
                Variant::Sqssvm,
                Variant::Ssvm,
                Variant::Svm,
            ],
            training_rates: vec![10.0, 20.0, 40.0],
            repetitions: 50,
            mu_exponents: (-3..=20).collect(),
            lambda_exponents: (-10..=25).collect(),
            seed: 0,
            tuning: TuningScore::FullSet,
            evaluation: Evaluation::FullSet,
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.variants.is_empty() {
            return Err(Error::InvalidConfig("no variants to compare".into()));
        }
        if self.training_rates.is_empty()
            || self
                .training_rates
                .iter()
                .any(|r| !(*r > 0.0 && *r <= 100.0))
        {
            return Err(Error::InvalidConfig(
                "training rates must lie in (0, 100]".into(),
            ));
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidConfig(
                "repetitions must be at least 1".into(),
            ));
        }
        if self.mu_exponents.is_empty() || self.lambda_exponents.is_empty() {
            return Err(Error::InvalidConfig(
                "tuning grids must not be empty".into(),
            ));
        }
        if self.variants.contains(&Variant::Rqssvm) {
            return Err(Error::InvalidConfig(
                "R-QSSVM needs a zero set and is not benchmarked".into(),
            ));
        }
        Ok(())
    }

    pub fn mu_grid(&self) -> Vec<f64> {
        self.mu_exponents.iter().map(|&e| 2f64.powi(e)).collect()
    }

    pub fn lambda_grid(&self) -> Vec<f64> {
        self.lambda_exponents
            .iter()
            .map(|&e| 2f64.powi(e))
            .collect()
    }
}

/// Returns the value with the best score; ties are resolved by the mean of
/// all tied values. Candidates whose training fails are skipped.
pub fn select_best(candidates: &[(f64, Option<f64>)]) -> Option<f64> {
    let best = candidates
        .iter()
        .filter_map(|(_, s)| *s)
        .fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<f64> = candidates
        .iter()
        .filter(|(_, s)| *s == Some(best))
        .map(|(v, _)| *v)
        .collect();
    (!tied.is_empty()).then(|| tied.iter().sum::<f64>() / tied.len() as f64)
}

struct Split<'a> {
    train: &'a Dataset,
    cache: &'a DesignCache,
    tune_on: &'a Dataset,
}

fn grid_search(
    split: &Split<'_>,
    grid: &[f64],
    config: impl Fn(f64) -> TrainConfig,
) -> Result<f64> {
    let scored: Vec<(f64, Option<f64>)> = grid
        .iter()
        .map(|&v| {
            let score = models::train_with_cache(split.train, &config(v), split.cache)
                .ok()
                .and_then(|r| accuracy_score(&r.model, split.tune_on).ok());
            (v, score)
        })
        .collect();
    select_best(&scored)
        .ok_or_else(|| Error::InvalidConfig("training failed for every grid point".into()))
}

/// Best `mu` for SQSSVM trained on `train`, scored on `score_on`.
pub fn tune_mu(train: &Dataset, score_on: &Dataset, plan: &ExperimentPlan) -> Result<f64> {
    let cache = assemble_design(train);
    let split = Split {
        train,
        cache: &cache,
        tune_on: score_on,
    };
    grid_search(&split, &plan.mu_grid(), |mu| {
        TrainConfig::new(Variant::Sqssvm).with_mu(mu)
    })
}

/// Best `lambda` for L1-SQSSVM at fixed `mu`.
pub fn tune_lambda(
    train: &Dataset,
    score_on: &Dataset,
    mu: f64,
    plan: &ExperimentPlan,
) -> Result<f64> {
    let cache = assemble_design(train);
    let split = Split {
        train,
        cache: &cache,
        tune_on: score_on,
    };
    grid_search(&split, &plan.lambda_grid(), |l| {
        TrainConfig::new(Variant::L1Sqssvm)
            .with_mu(mu)
            .with_lambda(l)
    })
}

/// Deterministic per-repetition seed.
pub fn repetition_seed(base: u64, rate: f64, repetition: usize) -> u64 {
    splitmix(splitmix(splitmix(base) ^ rate.to_bits()) ^ repetition as u64)
}

fn splitmix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `round(rate% * m)` distinct indices drawn by a partial Fisher-Yates
/// shuffle, returned sorted.
pub fn training_indices(m: usize, rate: f64, seed: u64) -> Vec<usize> {
    let k = ((rate / 100.0 * m as f64).round() as usize).clamp(1, m);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..m).collect();
    for i in 0..k {
        let span = (m - i) as u64;
        let j = i + (rng.next_u64() % span) as usize;
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawScore {
    pub variant: Variant,
    pub rate: f64,
    pub repetition: usize,
    /// `None` when training failed.
    pub accuracy: Option<f64>,
    pub seconds: f64,
    pub mu: Option<f64>,
    pub lambda: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub variant: Variant,
    pub rate: f64,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
    /// Mean wall time of the final training, tuning excluded.
    pub cpu_s: f64,
    pub successes: usize,
    pub failures: usize,
    /// More than 10% of the repetitions failed.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
    pub raw: Vec<RawScore>,
}

impl ResultsTable {
    pub fn row(&self, variant: Variant, rate: f64) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.variant == variant && r.rate == rate)
    }

    pub fn any_flagged(&self) -> bool {
        self.rows.iter().any(|r| r.flagged)
    }

    /// `variant,rate,mean,std,min,max,cpu_s`. Timing is written as 0 when
    /// `with_timing` is false, which makes reruns byte-identical.
    pub fn to_csv(&self, with_timing: bool) -> String {
        let mut out = String::from("variant,rate,mean,std,min,max,cpu_s\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{:.4},{:.4},{:.4},{:.4},{:.6}",
                r.variant,
                r.rate,
                r.mean,
                r.std,
                r.min,
                r.max,
                if with_timing { r.cpu_s } else { 0.0 }
            );
        }
        out
    }

    pub fn raw_csv(&self, with_timing: bool) -> String {
        let mut out = String::from("variant,rate,repetition,accuracy,seconds,mu,lambda,error\n");
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x}"));
        for s in &self.raw {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6},{},{},{}",
                s.variant,
                s.rate,
                s.repetition,
                opt(s.accuracy),
                if with_timing { s.seconds } else { 0.0 },
                opt(s.mu),
                opt(s.lambda),
                s.error.as_deref().unwrap_or("").replace(',', ";"),
            );
        }
        out
    }

    /// Plain-text table grouped by training rate.
    pub fn to_text(&self, with_timing: bool) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>6}  {:<10} {:>8} {:>7} {:>8} {:>8} {:>10}",
            "rate", "model", "mean", "std", "min", "max", "time (s)"
        );
        let mut last_rate = None;
        for r in &self.rows {
            let rate = if last_rate == Some(r.rate) {
                String::new()
            } else {
                format!("{}%", r.rate)
            };
            last_rate = Some(r.rate);
            let _ = writeln!(
                out,
                "{:>6}  {:<10} {:>8.2} {:>7.2} {:>8.2} {:>8.2} {:>10.4}{}",
                rate,
                r.variant.name(),
                r.mean,
                r.std,
                r.min,
                r.max,
                if with_timing { r.cpu_s } else { 0.0 },
                if r.flagged {
                    format!("  [{} of {} failed]", r.failures, r.failures + r.successes)
                } else {
                    String::new()
                }
            );
        }
        out
    }
}

/// Runs the full protocol. Repetitions run in parallel; each derives its own
/// seed, so the table does not depend on the schedule.
pub fn run_benchmark(dataset: &Dataset, plan: &ExperimentPlan) -> Result<ResultsTable> {
    plan.validate()?;
    let jobs: Vec<(f64, usize)> = plan
        .training_rates
        .iter()
        .flat_map(|&rate| (0..plan.repetitions).map(move |rep| (rate, rep)))
        .collect();
    let raw: Vec<RawScore> = jobs
        .par_iter()
        .flat_map_iter(|&(rate, rep)| run_repetition(dataset, plan, rate, rep))
        .collect();

    let mut rows = Vec::new();
    for &rate in &plan.training_rates {
        for &variant in &plan.variants {
            let cell: Vec<&RawScore> = raw
                .iter()
                .filter(|s| s.variant == variant && s.rate == rate)
                .collect();
            let scores: Vec<f64> = cell.iter().filter_map(|s| s.accuracy).collect();
            let times: Vec<f64> = cell
                .iter()
                .filter(|s| s.accuracy.is_some())
                .map(|s| s.seconds)
                .collect();
            let failures = cell.len() - scores.len();
            let (mean, std, min, max) = summarize(&scores);
            rows.push(ResultRow {
                variant,
                rate,
                mean,
                std,
                min,
                max,
                cpu_s: if times.is_empty() {
                    f64::NAN
                } else {
                    times.iter().sum::<f64>() / times.len() as f64
                },
                successes: scores.len(),
                failures,
                flagged: failures as f64 > 0.1 * cell.len() as f64,
            });
        }
    }
    Ok(ResultsTable { rows, raw })
}

/// `(mean, population std, min, max)`; NaN for an empty slice.
pub fn summarize(scores: &[f64]) -> (f64, f64, f64, f64) {
    if scores.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN, f64::NAN);
    }
    let k = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / k;
    let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / k;
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (mean, var.sqrt(), min, max)
}

fn run_repetition(
    dataset: &Dataset,
    plan: &ExperimentPlan,
    rate: f64,
    rep: usize,
) -> Vec<RawScore> {
    let seed = repetition_seed(plan.seed, rate, rep);
    let idx = training_indices(dataset.len(), rate, seed);
    let fail_all = |msg: String| {
        plan.variants
            .iter()
            .map(|&variant| RawScore {
                variant,
                rate,
                repetition: rep,
                accuracy: None,
                seconds: 0.0,
                mu: None,
                lambda: None,
                error: Some(msg.clone()),
            })
            .collect::<Vec<_>>()
    };
    let train = match dataset.subset(&idx) {
        Ok(t) => t,
        Err(e) => return fail_all(e.to_string()),
    };
    let held_out: Vec<usize> = (0..dataset.len())
        .filter(|i| idx.binary_search(i).is_err())
        .collect();
    let eval = match plan.evaluation {
        Evaluation::FullSet => dataset.clone(),
        Evaluation::HeldOut => match dataset.subset(&held_out) {
            Ok(d) => d,
            Err(e) => return fail_all(e.to_string()),
        },
    };
    let tune_on = match plan.tuning {
        TuningScore::FullSet => dataset,
        TuningScore::TrainingSet => &train,
    };
    let cache = assemble_design(&train);
    let split = Split {
        train: &train,
        cache: &cache,
        tune_on,
    };
    let mu_grid = plan.mu_grid();
    let needs_mu_hat = plan
        .variants
        .iter()
        .any(|v| matches!(v, Variant::Sqssvm | Variant::L1Sqssvm));
    let mu_hat = needs_mu_hat.then(|| {
        grid_search(&split, &mu_grid, |mu| {
            TrainConfig::new(Variant::Sqssvm).with_mu(mu)
        })
    });

    plan.variants
        .iter()
        .map(|&variant| {
            let tuned: Result<TrainConfig> = (|| {
                let cfg = TrainConfig::new(variant);
                Ok(match variant {
                    Variant::Svm | Variant::Qssvm => cfg,
                    Variant::Ssvm => {
                        let mu = grid_search(&split, &mu_grid, |mu| {
                            TrainConfig::new(Variant::Ssvm).with_mu(mu)
                        })?;
                        cfg.with_mu(mu)
                    }
                    Variant::Sqssvm => cfg.with_mu(mu_hat_value(&mu_hat)?),
                    Variant::L1Sqssvm => {
                        let mu = mu_hat_value(&mu_hat)?;
                        let lambda = grid_search(&split, &plan.lambda_grid(), |l| {
                            TrainConfig::new(Variant::L1Sqssvm)
                                .with_mu(mu)
                                .with_lambda(l)
                        })?;
                        cfg.with_mu(mu).with_lambda(lambda)
                    }
                    Variant::L1Qssvm => {
                        let lambda = grid_search(&split, &plan.lambda_grid(), |l| {
                            TrainConfig::new(Variant::L1Qssvm).with_lambda(l)
                        })?;
                        cfg.with_lambda(lambda)
                    }
                    Variant::Rqssvm => unreachable!("rejected by validate"),
                })
            })();
            let mut score = RawScore {
                variant,
                rate,
                repetition: rep,
                accuracy: None,
                seconds: 0.0,
                mu: None,
                lambda: None,
                error: None,
            };
            let cfg = match tuned {
                Ok(c) => c,
                Err(e) => {
                    score.error = Some(e.to_string());
                    return score;
                }
            };
            score.mu = variant.is_soft().then_some(cfg.mu);
            score.lambda = variant.is_l1().then_some(cfg.lambda);
            let t0 = Instant::now();
            let trained = models::train_with_cache(&train, &cfg, &cache);
            score.seconds = t0.elapsed().as_secs_f64();
            match trained.and_then(|r| accuracy_score(&r.model, &eval)) {
                Ok(a) => score.accuracy = Some(a),
                Err(e) => score.error = Some(e.to_string()),
            }
            score
        })
        .collect()
}

fn mu_hat_value(mu_hat: &Option<Result<f64>>) -> Result<f64> {
    match mu_hat {
        Some(Ok(mu)) => Ok(*mu),
        Some(Err(e)) => Err(Error::InvalidConfig(format!("tuning mu failed: {e}"))),
        None => Err(Error::InvalidConfig("mu was not tuned".into())),
    }
}
