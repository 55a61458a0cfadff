//! Flesch-Kincaid grade and the syllable heuristic behind it.
//!
//! ```text
//! cargo run --example readability
//! ```

use jargon::features::readability::text_counts;
use jargon::features::{count_syllables, flesch_kincaid};

fn main() -> jargon::Result<()> {
    for word in ["cat", "make", "readability", "eye", "rhythm"] {
        println!("{word:>12}: {} syllable(s)", count_syllables(word)?);
    }
    let texts = [
        "The cat sat on the mat.",
        "Heterogeneous catalysis enables selective hydrogenation of unsaturated aldehydes under mild conditions.",
    ];
    for t in texts {
        let c = text_counts(t);
        println!("\n{t}\n  counts {c:?}\n  grade {:.3}", flesch_kincaid(t)?);
    }
    Ok(())
}
