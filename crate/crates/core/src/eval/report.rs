//! The evaluation report and its CSV / JSON renderings.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::FittedModel;
use crate::config::RunConfig;
use crate::dataset::Target;
use crate::error::Result;
use crate::features::FeatureRow;
use crate::metrics::Confusion;
use crate::report::{csv_field, write_artifact, write_file};

/// F1 of one configuration for one annotator on one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorResult {
    pub target: String,
    pub annotator_id: String,
    pub configuration: String,
    pub train_size: usize,
    pub test_size: usize,
    /// Chosen regularization strength; absent for prompt strategies.
    pub lambda: Option<f64>,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub nonzero_coefficients: Option<usize>,
}

impl AnnotatorResult {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new(
        target: Target,
        annotator: &str,
        configuration: &str,
        train_size: usize,
        test: &[&FeatureRow],
        fitted: &FittedModel,
        c: Confusion,
        eps: f64,
    ) -> Self {
        Self {
            lambda: Some(fitted.model.lambda),
            nonzero_coefficients: Some(fitted.model.nonzero_coefficients(eps).len()),
            ..Self::from_confusion(target, annotator, configuration, train_size, test.len(), c)
        }
    }

    pub fn from_confusion(
        target: Target,
        annotator: &str,
        configuration: &str,
        train_size: usize,
        test_size: usize,
        c: Confusion,
    ) -> Self {
        Self {
            target: target.name(),
            annotator_id: annotator.to_string(),
            configuration: configuration.to_string(),
            train_size,
            test_size,
            lambda: None,
            f1: c.f1(),
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
            tn: c.tn,
            nonzero_coefficients: None,
        }
    }
}

/// Mean F1 over annotators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroF1 {
    pub target: String,
    pub configuration: String,
    pub mean_f1: f64,
    pub annotators: usize,
}

/// Number of individual models in which a feature has a nonzero weight.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoefficientCount {
    pub target: String,
    pub feature: String,
    pub count: usize,
    pub models: usize,
}

/// Macro F1 at one training size, summarized over seeded repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub target: String,
    pub configuration: String,
    pub size: usize,
    pub mean_f1: f64,
    pub std_f1: f64,
    pub repeats: usize,
    pub per_repeat: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_hash: String,
    pub seed: u64,
    pub config: RunConfig,
    pub results: Vec<AnnotatorResult>,
    pub macro_f1: Vec<MacroF1>,
    pub coefficient_frequency: Vec<CoefficientCount>,
    pub sweep: Vec<SweepPoint>,
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl EvalReport {
    pub fn new(config: &RunConfig) -> Self {
        Self {
            config_hash: config.config_hash(),
            seed: config.seed,
            config: config.clone(),
            results: vec![],
            macro_f1: vec![],
            coefficient_frequency: vec![],
            sweep: vec![],
        }
    }

    /// Recomputes the macro averages from `results`, in first-seen order.
    pub fn finish(&mut self) {
        self.macro_f1.clear();
        for r in &self.results {
            if self
                .macro_f1
                .iter()
                .any(|m| m.target == r.target && m.configuration == r.configuration)
            {
                continue;
            }
            let scores: Vec<f64> = self
                .results
                .iter()
                .filter(|o| o.target == r.target && o.configuration == r.configuration)
                .map(|o| o.f1)
                .collect();
            self.macro_f1.push(MacroF1 {
                target: r.target.clone(),
                configuration: r.configuration.clone(),
                mean_f1: scores.iter().sum::<f64>() / scores.len() as f64,
                annotators: scores.len(),
            });
        }
    }

    pub fn macro_f1(&self, target: &str, configuration: &str) -> Option<f64> {
        self.macro_f1
            .iter()
            .find(|m| m.target == target && m.configuration == configuration)
            .map(|m| m.mean_f1)
    }

    pub fn results_csv(&self) -> String {
        let mut s = String::from(
            "target,annotator_id,configuration,train_size,test_size,lambda,f1,tp,fp,fn,tn,nonzero_coefficients\n",
        );
        for r in &self.results {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                csv_field(&r.target),
                csv_field(&r.annotator_id),
                csv_field(&r.configuration),
                r.train_size,
                r.test_size,
                opt(r.lambda),
                r.f1,
                r.tp,
                r.fp,
                r.fn_,
                r.tn,
                opt(r.nonzero_coefficients)
            );
        }
        s
    }

    pub fn macro_csv(&self) -> String {
        let mut s = String::from("target,configuration,mean_f1,annotators\n");
        for m in &self.macro_f1 {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                csv_field(&m.target),
                csv_field(&m.configuration),
                m.mean_f1,
                m.annotators
            );
        }
        s
    }

    pub fn coefficient_csv(&self) -> String {
        let mut s = String::from("target,feature,count,models\n");
        for c in &self.coefficient_frequency {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                csv_field(&c.target),
                csv_field(&c.feature),
                c.count,
                c.models
            );
        }
        s
    }

    pub fn sweep_csv(&self) -> String {
        let mut s = String::from("target,configuration,size,mean_f1,std_f1,repeats\n");
        for p in &self.sweep {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                csv_field(&p.target),
                csv_field(&p.configuration),
                p.size,
                p.mean_f1,
                p.std_f1,
                p.repeats
            );
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Writes `<prefix>_results.csv`, `<prefix>_macro.csv`, and when nonempty
    /// `coefficient_frequency.csv` and `sweep.csv` (each with a sidecar), plus
    /// `<prefix>_report.json`, into `dir`.
    pub fn write(&self, dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        let mut csv = |name: String, body: String| -> Result<()> {
            let p = dir.join(name);
            write_artifact(&p, &body, &self.config_hash, self.seed)?;
            written.push(p);
            Ok(())
        };
        csv(format!("{prefix}_results.csv"), self.results_csv())?;
        csv(format!("{prefix}_macro.csv"), self.macro_csv())?;
        if !self.coefficient_frequency.is_empty() {
            csv("coefficient_frequency.csv".into(), self.coefficient_csv())?;
        }
        if !self.sweep.is_empty() {
            csv("sweep.csv".into(), self.sweep_csv())?;
        }
        let p = dir.join(format!("{prefix}_report.json"));
        write_file(&p, &self.to_json()?)?;
        written.push(p);
        Ok(written)
    }
}
