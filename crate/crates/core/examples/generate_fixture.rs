//! Regenerates the bundled synthetic study.
//!
//! ```text
//! cargo run --example generate_fixture            # writes fixtures/synthetic
//! cargo run --example generate_fixture -- <dir>
//! ```

use std::path::PathBuf;

use jargon::synth::{SynthConfig, SynthStudy};

fn main() -> jargon::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic"));
    let study = SynthStudy::generate(SynthConfig::default())?;
    study.write_to(&dir)?;
    println!(
        "wrote {} readers, {} abstracts, {} ratings to {}",
        study.readers.len(),
        study.abstracts.len(),
        study.annotations.len(),
        dir.display()
    );
    Ok(())
}
