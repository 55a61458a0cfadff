//! Macro F1 as a function of training-set size, for individual and mixed
//! training, averaged over five seeded subsamples per size.
//!
//! ```text
//! cargo run --release --example training_sweep
//! ```

use std::path::Path;

use jargon::config::RunConfig;
use jargon::dataset::{splits_for, Target};
use jargon::eval::{training_size_sweep, TrainSettings};
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
    let points = training_size_sweep(
        &rows,
        &splits,
        Target::Familiarity,
        &[25, 50, 100, 200, 400],
        5,
        &settings,
        config.seed,
        true,
    )?;
    println!("{:>5} {:>12} {:>8} {:>8}", "size", "config", "mean F1", "std");
    for p in &points {
        let bar = "#".repeat((p.mean_f1 * 50.0).round() as usize);
        println!(
            "{:>5} {:>12} {:>8.4} {:>8.4} {bar}",
            p.size, p.configuration, p.mean_f1, p.std_f1
        );
    }
    Ok(())
}
