//! Loads the bundled study and computes the feature vector of one rating.
//!
//! ```text
//! cargo run --example feature_extraction
//! ```

use std::path::Path;

use jargon::config::RunConfig;
use jargon::features::extract_features;
use jargon::pipeline::load_study;

fn main() -> jargon::Result<()> {
    let config = RunConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic/run.toml"))?;
    let study = load_study(&config)?;
    let record = &study.records[0];
    let reader = &study.readers[&record.annotator_id];
    let doc = &study.abstracts[&record.abstract_id];
    let corpora = study.library.reader_corpora(reader)?;
    println!(
        "reader {} ({:?}), term '{}', abstract {} [{}], rating {}",
        reader.annotator_id, reader.subdomain_labels, record.term, doc.doc_id, doc.domain_label, record.rating
    );
    println!(
        "corpora: domain {} docs, subdomain {} docs, individual {} docs",
        corpora.domain.documents().len(),
        corpora.subdomain.documents().len(),
        corpora.individual.documents().len()
    );
    let v = extract_features(reader, &record.term, doc, &corpora, &study.context)?;
    for (name, value) in study.schema().names().iter().zip(v.values()) {
        println!("{name:>32} {value:>12.6}");
    }
    Ok(())
}
