//! Regularization strength selection by stratified k-fold cross-validated F1.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{train_warm, CdOptions, Design, TrainedModel, DEFAULT_THRESHOLD};
use crate::error::{Error, Result};
use crate::metrics::Confusion;

/// `points` log-spaced values from `max` down to `min`.
pub fn lambda_grid(min: f64, max: f64, points: usize) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![max],
        _ => {
            let (lo, hi) = (min.ln(), max.ln());
            (0..points)
                .map(|k| (hi - (hi - lo) * k as f64 / (points - 1) as f64).exp())
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    /// Highest mean F1; ties go to the larger lambda.
    MaxMean,
    /// Largest lambda whose mean F1 is within one standard error of the best.
    #[default]
    OneStandardError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LambdaPolicy {
    Fixed {
        lambda: f64,
    },
    CrossValidated {
        grid: Vec<f64>,
        folds: usize,
        #[serde(default)]
        rule: SelectionRule,
    },
}

impl Default for LambdaPolicy {
    fn default() -> Self {
        LambdaPolicy::CrossValidated {
            grid: lambda_grid(1e-4, 1.0, 20),
            folds: 5,
            rule: SelectionRule::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    /// Grid in descending order.
    pub lambdas: Vec<f64>,
    pub mean_f1: Vec<f64>,
    pub std_err: Vec<f64>,
    pub chosen: f64,
}

fn stratified_folds(y: &[f64], k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; y.len()];
    let mut offset = 0;
    for class in [1.0, 0.0] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        idx.shuffle(&mut rng);
        for (r, i) in idx.into_iter().enumerate() {
            fold[i] = (r + offset) % k;
        }
        // continue the round-robin so small classes do not pile into fold 0
        offset += y.iter().filter(|&&v| v == class).count();
    }
    fold
}

fn is_single_class(y: &[f64]) -> bool {
    y.iter().all(|&v| v == y[0])
}

/// F1 on held-out rows for every lambda on the path (descending).
fn fold_scores(
    names: &[String],
    rows: &[Vec<f64>],
    y: &[f64],
    passthrough: &[bool],
    train: &[usize],
    test: &[usize],
    lambdas: &[f64],
    opts: &CdOptions,
) -> Result<Vec<f64>> {
    let y_train: Vec<f64> = train.iter().map(|&i| y[i]).collect();
    let truth: Vec<bool> = test.iter().map(|&i| y[i] == 1.0).collect();
    if is_single_class(&y_train) {
        let constant = y_train[0] == 1.0;
        let c = Confusion::tally(&vec![constant; test.len()], &truth, &true)?;
        return Ok(vec![c.f1(); lambdas.len()]);
    }
    let train_rows: Vec<Vec<f64>> = train.iter().map(|&i| rows[i].clone()).collect();
    let design = Design::fit(names.to_vec(), &train_rows, passthrough)?;
    let test_z: Vec<Vec<f64>> = test
        .iter()
        .map(|&i| design.standardizer.apply(&rows[i]))
        .collect::<Result<_>>()?;
    let mut scores = Vec::with_capacity(lambdas.len());
    let mut warm: Option<(Vec<f64>, f64)> = None;
    for &lambda in lambdas {
        let m = train_warm(
            &design,
            &y_train,
            lambda,
            opts,
            warm.as_ref().map(|(w, b)| (w.as_slice(), *b)),
        )?;
        let pred: Vec<bool> = test_z
            .iter()
            .map(|z| {
                let logit = m.intercept + m.weights.iter().zip(z).map(|(w, v)| w * v).sum::<f64>();
                super::logistic::sigmoid(logit) >= DEFAULT_THRESHOLD
            })
            .collect();
        scores.push(Confusion::tally(&pred, &truth, &true)?.f1());
        warm = Some((m.weights, m.intercept));
    }
    Ok(scores)
}

/// Cross-validated choice of lambda over `grid` on the given rows.
pub fn cross_validate(
    names: &[String],
    rows: &[Vec<f64>],
    y: &[f64],
    passthrough: &[bool],
    grid: &[f64],
    folds: usize,
    rule: SelectionRule,
    opts: &CdOptions,
) -> Result<CvSummary> {
    if grid.is_empty() {
        return Err(Error::Empty("lambda grid"));
    }
    if folds < 2 || folds > rows.len() {
        return Err(Error::Validation(format!(
            "cannot run {folds}-fold CV on {} rows",
            rows.len()
        )));
    }
    let mut lambdas = grid.to_vec();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    lambdas.dedup();
    let assignment = stratified_folds(y, folds, opts.seed);
    let mut per_fold = Vec::with_capacity(folds);
    for f in 0..folds {
        let (test, train): (Vec<usize>, Vec<usize>) = (0..rows.len()).partition(|&i| assignment[i] == f);
        per_fold.push(fold_scores(names, rows, y, passthrough, &train, &test, &lambdas, opts)?);
    }
    let k = folds as f64;
    let mean_f1: Vec<f64> = (0..lambdas.len())
        .map(|l| per_fold.iter().map(|s| s[l]).sum::<f64>() / k)
        .collect();
    let std_err: Vec<f64> = (0..lambdas.len())
        .map(|l| {
            let var = per_fold.iter().map(|s| (s[l] - mean_f1[l]).powi(2)).sum::<f64>() / (k - 1.0);
            (var / k).sqrt()
        })
        .collect();
    // descending lambdas: the first index reaching the best value is the largest lambda
    let best = (0..lambdas.len()).fold(0, |b, l| if mean_f1[l] > mean_f1[b] { l } else { b });
    let chosen = match rule {
        SelectionRule::MaxMean => lambdas[best],
        SelectionRule::OneStandardError => {
            let floor = mean_f1[best] - std_err[best];
            lambdas[(0..lambdas.len()).find(|&l| mean_f1[l] >= floor).unwrap_or(best)]
        }
    };
    Ok(CvSummary {
        lambdas,
        mean_f1,
        std_err,
        chosen,
    })
}

/// Standardizes `rows`, picks lambda per `policy`, and fits the final model.
pub fn fit_model(
    names: &[String],
    rows: &[Vec<f64>],
    y: &[f64],
    passthrough: &[bool],
    policy: &LambdaPolicy,
    opts: &CdOptions,
) -> Result<(TrainedModel, Option<CvSummary>)> {
    if rows.is_empty() {
        return Err(Error::Empty("training rows"));
    }
    if rows.len() != y.len() {
        return Err(Error::Shape(format!("{} rows for {} labels", rows.len(), y.len())));
    }
    if is_single_class(y) {
        return Err(Error::Validation("training labels contain a single class".into()));
    }
    let (lambda, summary) = match policy {
        LambdaPolicy::Fixed { lambda } => (*lambda, None),
        LambdaPolicy::CrossValidated { grid, folds, rule } => {
            let s = cross_validate(names, rows, y, passthrough, grid, *folds, *rule, opts)?;
            (s.chosen, Some(s))
        }
    };
    let design = Design::fit(names.to_vec(), rows, passthrough)?;
    let model = train_warm(&design, y, lambda, opts, None)?;
    Ok((model, summary))
}
