//! Rating binarization, per-domain statistics and the term split of the
//! bundled synthetic study.
//!
//! ```text
//! cargo run --example dataset_stats
//! ```

use std::collections::HashMap;
use std::path::Path;

use jargon::corpus::load_documents;
use jargon::dataset::{binarize_rating, dataset_stats, load_annotations, splits_for, stats_csv, SplitMode};

fn main() -> jargon::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic");
    for rating in 1..=5 {
        println!("rating {rating} -> {:?}", binarize_rating(rating)?);
    }
    println!("rating 7 -> {}", binarize_rating(7).unwrap_err());

    let records = load_annotations(&dir.join("annotations.jsonl"))?;
    let domains: HashMap<String, String> = load_documents(&dir.join("abstracts.jsonl"))?
        .into_iter()
        .map(|d| (d.doc_id, d.domain_label))
        .collect();
    let stats = dataset_stats(&records, &domains)?;
    println!(
        "\n{} ratings, {} annotators, {} terms; unanimous {:.3}, near-even split {:.3}",
        stats.n_records, stats.n_annotators, stats.n_terms, stats.unanimous_fraction, stats.near_even_split_fraction
    );
    print!("{}", stats_csv(&stats));

    let splits = splits_for(&records, SplitMode::Shared, 0.8, 7)?;
    let s = splits.values().next().expect("at least one annotator");
    println!(
        "\nshared split: {} train terms, {} test terms",
        s.train_terms.len(),
        s.test_terms.len()
    );
    Ok(())
}
