//! Cross-validated test error and support recovery on synthetic scenarios.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::fit::refit_logistic;
use crate::model::{Scheme, SelectionModel};
use crate::select::{select, SelectOptions};
use crate::synth::{generate, GroundTruth, ScenarioKind, ScenarioSpec};

const LOGISTIC_MAX_ITER: usize = 100;
const LOGISTIC_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    /// Entrywise over the m × h support.
    Coefficient,
    /// Over features selected in any task.
    Feature,
}

/// Precision and recall of `selected` (m × h) against the true support.
/// An empty selection has precision 1 and recall 0.
pub fn precision_recall(selected: &[Vec<bool>], truth: &GroundTruth, level: Level) -> Result<(f64, f64)> {
    let m = truth.support.len();
    let h = truth.beta.ncols();
    if selected.len() != m || selected.iter().any(|r| r.len() != h) {
        return Err(Error::ShapeMismatch(format!(
            "selection is not {m}x{h} like the ground truth"
        )));
    }
    let pairs: Vec<(bool, bool)> = match level {
        Level::Coefficient => selected
            .iter()
            .zip(&truth.support)
            .flat_map(|(s, t)| s.iter().copied().zip(t.iter().copied()))
            .collect(),
        Level::Feature => selected
            .iter()
            .zip(&truth.support)
            .map(|(s, t)| (s.iter().any(|&b| b), t.iter().any(|&b| b)))
            .collect(),
    };
    let chosen = pairs.iter().filter(|p| p.0).count();
    let relevant = pairs.iter().filter(|p| p.1).count();
    let hits = pairs.iter().filter(|p| p.0 && p.1).count();
    let precision = if chosen == 0 { 1.0 } else { hits as f64 / chosen as f64 };
    let recall = if relevant == 0 { 0.0 } else { hits as f64 / relevant as f64 };
    Ok((precision, recall))
}

/// Assigns each row to one of `folds` folds, stratified by the 0/1 labels
/// in `labels`: each class is shuffled and dealt round-robin.
pub fn stratified_folds(labels: &[f64], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 || folds > labels.len() {
        return Err(Error::Spec(format!(
            "folds must be in 2..={} (got {folds})",
            labels.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; labels.len()];
    let mut next = 0;
    for class in [0.0, 1.0] {
        let mut rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        rows.shuffle(&mut rng);
        for i in rows {
            assignment[i] = next % folds;
            next += 1;
        }
    }
    Ok(assignment)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    /// Held-out 0/1 error of each task, averaged over folds.
    pub task_errors: Vec<f64>,
    pub fold_models: Vec<SelectionModel>,
}

impl CvResult {
    pub fn mean_error(&self) -> f64 {
        self.task_errors.iter().sum::<f64>() / self.task_errors.len() as f64
    }
}

/// K-fold cross-validation. `selector` only ever sees the training rows;
/// each task's logistic model is refit on the training rows with the
/// features selected for it and scored on the held-out rows. Folds are
/// stratified on task 0.
pub fn cross_validate<F>(data: &Dataset, folds: usize, seed: u64, selector: F) -> Result<CvResult>
where
    F: Fn(&Dataset) -> Result<SelectionModel>,
{
    let assignment = stratified_folds(data.response(0), folds, seed)?;
    let h = data.h();
    let mut wrong = vec![0usize; h];
    let mut fold_models = Vec::with_capacity(folds);
    for fold in 0..folds {
        let train_rows: Vec<usize> = (0..data.n()).filter(|&i| assignment[i] != fold).collect();
        let test_rows: Vec<usize> = (0..data.n()).filter(|&i| assignment[i] == fold).collect();
        let test = data.subset_rows(&test_rows);
        for task in 0..h {
            let ys = test.response(task);
            if !(ys.contains(&0.0) && ys.contains(&1.0)) {
                return Err(Error::FoldTooSmall { fold, task });
            }
        }
        let train = data.subset_rows(&train_rows);
        let model = selector(&train)?;
        let support = model.support();
        for (task, feats) in support.iter().enumerate() {
            let fit = refit_logistic(&train, feats, task, LOGISTIC_MAX_ITER, LOGISTIC_TOL)?;
            let ys = test.response(task);
            wrong[task] += (0..test.n()).filter(|&i| fit.predict(&test, i) != ys[i]).count();
        }
        fold_models.push(model);
    }
    Ok(CvResult {
        task_errors: wrong.iter().map(|&w| w as f64 / data.n() as f64).collect(),
        fold_models,
    })
}

/// Mean and standard error (sample sd over √N).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStderr {
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
}

impl MeanStderr {
    /// With a single value the standard error is undefined and reported as 0.
    pub fn of(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return MeanStderr {
                mean: f64::NAN,
                stderr: 0.0,
                count,
            };
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let stderr = if count < 2 {
            0.0
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
            var.sqrt() / (count as f64).sqrt()
        };
        MeanStderr { mean, stderr, count }
    }

    pub fn is_degenerate(&self) -> bool {
        self.count < 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub kinds: Vec<ScenarioKind>,
    pub schemes: Vec<Scheme>,
    pub n: usize,
    pub m: usize,
    pub h: usize,
    pub m_star: usize,
    pub noise_sd: f64,
    pub replicates: usize,
    pub folds: usize,
    pub seed: u64,
    pub options: SelectOptions,
}

impl SuiteConfig {
    pub fn new(seed: u64) -> Self {
        let base = ScenarioSpec::new(ScenarioKind::Partial, seed);
        SuiteConfig {
            kinds: ScenarioKind::ALL.to_vec(),
            schemes: vec![Scheme::PartialMic, Scheme::FullMic, Scheme::Ric],
            n: base.n,
            m: base.m,
            h: base.h,
            m_star: base.m_star,
            noise_sd: base.noise_sd,
            replicates: 5,
            folds: 5,
            seed,
            options: SelectOptions::default(),
        }
    }

    fn spec(&self, kind: ScenarioKind, replicate: usize) -> ScenarioSpec {
        ScenarioSpec {
            kind,
            n: self.n,
            m: self.m,
            h: self.h,
            m_star: self.m_star,
            noise_sd: self.noise_sd,
            seed: self.seed.wrapping_add(replicate as u64),
        }
    }
}

/// One scheme on one replicate of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteRow {
    pub kind: ScenarioKind,
    pub scheme: Scheme,
    pub replicate: usize,
    pub task_errors: Vec<f64>,
    /// Coefficient-level precision and recall of the full-data model.
    pub coef_pr: (f64, f64),
    /// Feature-level precision and recall of the full-data model.
    pub feat_pr: (f64, f64),
    pub num_coefficients: usize,
    pub num_features: usize,
}

impl SuiteRow {
    pub fn mean_error(&self) -> f64 {
        self.task_errors.iter().sum::<f64>() / self.task_errors.len() as f64
    }
}

/// Aggregate over replicates. Test error pools every task of every
/// replicate; the other columns average per-replicate values.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteSummary {
    pub kind: ScenarioKind,
    pub scheme: Scheme,
    pub error: MeanStderr,
    pub coef_precision: MeanStderr,
    pub coef_recall: MeanStderr,
    pub feat_precision: MeanStderr,
    pub feat_recall: MeanStderr,
    pub num_coefficients: MeanStderr,
    pub num_features: MeanStderr,
}

fn run_cell(config: &SuiteConfig, kind: ScenarioKind, replicate: usize) -> Result<Vec<SuiteRow>> {
    let spec = config.spec(kind, replicate);
    let (data, truth) = generate(&spec)?;
    config
        .schemes
        .iter()
        .map(|&scheme| {
            let cv = cross_validate(&data, config.folds, spec.seed, |train| {
                select(train, scheme, &config.options)
            })?;
            let model = select(&data, scheme, &config.options)?;
            let chosen = model.support_matrix();
            Ok(SuiteRow {
                kind,
                scheme,
                replicate,
                task_errors: cv.task_errors,
                coef_pr: precision_recall(&chosen, &truth, Level::Coefficient)?,
                feat_pr: precision_recall(&chosen, &truth, Level::Feature)?,
                num_coefficients: model.num_coefficients(),
                num_features: model.selected_features().len(),
            })
        })
        .collect()
}

/// Every scheme on every replicate of every scenario. Cells run in
/// parallel; rows come back in (scenario, replicate, scheme) order.
pub fn run_suite(config: &SuiteConfig) -> Result<Vec<SuiteRow>> {
    let cells: Vec<(ScenarioKind, usize)> = config
        .kinds
        .iter()
        .flat_map(|&k| (0..config.replicates).map(move |r| (k, r)))
        .collect();
    let rows: Vec<Vec<SuiteRow>> = cells
        .par_iter()
        .map(|&(kind, rep)| run_cell(config, kind, rep))
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

pub fn summarize(rows: &[SuiteRow]) -> Vec<SuiteSummary> {
    let mut keys: Vec<(ScenarioKind, Scheme)> = Vec::new();
    for r in rows {
        if !keys.contains(&(r.kind, r.scheme)) {
            keys.push((r.kind, r.scheme));
        }
    }
    keys.into_iter()
        .map(|(kind, scheme)| {
            let group: Vec<&SuiteRow> = rows.iter().filter(|r| r.kind == kind && r.scheme == scheme).collect();
            let col = |f: &dyn Fn(&SuiteRow) -> f64| MeanStderr::of(&group.iter().map(|r| f(r)).collect::<Vec<_>>());
            let errors: Vec<f64> = group.iter().flat_map(|r| r.task_errors.iter().copied()).collect();
            SuiteSummary {
                kind,
                scheme,
                error: MeanStderr::of(&errors),
                coef_precision: col(&|r| r.coef_pr.0),
                coef_recall: col(&|r| r.coef_pr.1),
                feat_precision: col(&|r| r.feat_pr.0),
                feat_recall: col(&|r| r.feat_pr.1),
                num_coefficients: col(&|r| r.num_coefficients as f64),
                num_features: col(&|r| r.num_features as f64),
            }
        })
        .collect()
}

pub const ROW_HEADER: &str =
    "scenario\tscheme\treplicate\ttest_error\tcoef_precision\tcoef_recall\tfeat_precision\tfeat_recall\tnum_coef\tnum_feat";

pub fn format_rows(rows: &[SuiteRow]) -> String {
    let mut out = String::from(ROW_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{}\t{}",
            r.kind,
            r.scheme,
            r.replicate,
            r.mean_error(),
            r.coef_pr.0,
            r.coef_pr.1,
            r.feat_pr.0,
            r.feat_pr.1,
            r.num_coefficients,
            r.num_features
        );
    }
    out
}

pub const SUMMARY_HEADER: &str =
    "scenario\tscheme\ttest_error\tcoef_precision\tcoef_recall\tfeat_precision\tfeat_recall\tnum_coef\tnum_feat";

pub fn format_summary(summary: &[SuiteSummary]) -> String {
    let cell = |v: &MeanStderr, digits: usize| format!("{:.*} ± {:.*}", digits, v.mean, digits, v.stderr);
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for s in summary {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            s.kind,
            s.scheme,
            cell(&s.error, 3),
            cell(&s.coef_precision, 2),
            cell(&s.coef_recall, 2),
            cell(&s.feat_precision, 2),
            cell(&s.feat_recall, 2),
            cell(&s.num_coefficients, 1),
            cell(&s.num_features, 1)
        );
    }
    out
}
