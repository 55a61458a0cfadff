//! The whole evaluation protocol on the bundled study, as run by
//! `jargon eval`: features, individual and mixed models, coefficient
//! frequencies and the training-size sweep, written as CSV and JSON.
//!
//! ```text
//! cargo run --release --example full_protocol [-- <out-dir>]
//! ```

use std::path::{Path, PathBuf};

use jargon::config::RunConfig;
use jargon::eval::evaluate_all;
use jargon::pipeline::{featurize, load_study};

fn main() -> jargon::Result<()> {
    let mut config = RunConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic/run.toml"))?;
    config.paths.out_dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("jargon-full-protocol"));
    let study = load_study(&config)?;
    let rows = featurize(&study, vec![])?;
    let report = evaluate_all(&study, &rows, None)?;
    for path in report.write(&config.out_dir(), "eval")? {
        println!("wrote {}", path.display());
    }
    println!("\nconfig hash {}\n", report.config_hash);
    print!("{}", report.macro_csv());
    println!();
    print!("{}", report.sweep_csv());
    Ok(())
}
