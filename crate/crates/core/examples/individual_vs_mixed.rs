//! Individual versus mixed (leave-one-annotator-out, size-matched) models on
//! the bundled study, with the coefficient-frequency table.
//!
//! ```text
//! cargo run --release --example individual_vs_mixed
//! ```

use std::path::Path;

use jargon::config::RunConfig;
use jargon::dataset::{splits_for, Target};
use jargon::eval::{coefficient_frequency, evaluate_target, TrainSettings};
use jargon::model::TrainedModel;
use jargon::pipeline::{featurize, load_study};

fn main() -> jargon::Result<()> {
    let config = RunConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic/run.toml"))?;
    let study = load_study(&config)?;
    let rows = featurize(&study, vec![])?;
    let splits = splits_for(
        &study.records,
        config.split.mode,
        config.split.train_fraction,
        config.seed,
    )?;
    let settings = TrainSettings::new(study.schema(), &config.model);
    let run = evaluate_target(&rows, &splits, Target::Familiarity, &settings, config.seed, true)?;

    println!(
        "{:>6} {:>12} {:>6} {:>6} {:>8}",
        "reader", "config", "train", "test", "F1"
    );
    for r in &run.results {
        println!(
            "{:>6} {:>12} {:>6} {:>6} {:>8.4}",
            r.annotator_id, r.configuration, r.train_size, r.test_size, r.f1
        );
    }
    for c in ["individual", "mixed"] {
        let f1: Vec<f64> = run
            .results
            .iter()
            .filter(|r| r.configuration == c)
            .map(|r| r.f1)
            .collect();
        println!("mean {c} F1 {:.4}", f1.iter().sum::<f64>() / f1.len() as f64);
    }
    let models: Vec<&TrainedModel> = run.individual_models.iter().map(|(_, m)| &m.model).collect();
    println!(
        "\nnonzero coefficient frequency over {} individual models:",
        models.len()
    );
    for (feature, count) in coefficient_frequency(&models, settings.eps)? {
        println!("{feature:>32} {count:>3} {}", "#".repeat(count));
    }
    Ok(())
}
