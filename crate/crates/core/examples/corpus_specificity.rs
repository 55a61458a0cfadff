//! Phrase counts, smoothed probabilities and specificity across corpora.
//!
//! ```text
//! cargo run --example corpus_specificity
//! ```

use jargon::corpus::{
    build_corpus, specificity, supplement_individual, term_probability, Document, Granularity, TokenizerConfig,
};

fn doc(id: &str, text: &str) -> Document {
    Document {
        doc_id: id.into(),
        title: id.into(),
        abstract_text: text.into(),
        year: 2022,
        domain_label: "Computer Science".into(),
        venue: None,
        citation_count: 0,
        author_ids: vec![],
        reference_ids: vec![],
    }
}

fn main() -> jargon::Result<()> {
    let tok = TokenizerConfig::default();
    let abstract_corpus = build_corpus(
        vec![doc(
            "abs",
            "We fine-tune a transformer with low-rank adapters. Low-rank adapters cut memory.",
        )],
        "abstract",
        Granularity::Abstract,
        tok,
    )?;
    let background = build_corpus(
        vec![
            doc("d1", "A survey of transformer architectures for translation."),
            doc("d2", "Memory-efficient training of deep networks."),
            doc("d3", "Graph kernels for molecule property prediction."),
        ],
        "domain",
        Granularity::Domain,
        tok,
    )?;
    let publications = vec![doc("p1", "Parameter-efficient fine-tuning with adapters.")];
    let references = vec![
        doc("r1", "Low-rank adapters revisited."),
        doc("r2", "Quantized transformer inference."),
        doc("r3", "Sparse attention patterns."),
    ];
    let individual = supplement_individual(publications, &references, 3, 42, "reader", tok)?;

    println!(
        "abstract tokens {}, domain tokens {}",
        abstract_corpus.token_count(),
        background.token_count()
    );
    for term in ["low-rank adapters", "transformer", "molecule"] {
        println!(
            "{term:>18}: count {} | P(abstract) {:.4} | P(domain) {:.4} | specificity vs domain {:+.3} | vs reader {:+.3}",
            abstract_corpus.phrase_count(term)?,
            term_probability(&abstract_corpus, term, 1.0)?,
            term_probability(&background, term, 1.0)?,
            specificity(term, &abstract_corpus, &background, 1.0)?,
            specificity(term, &abstract_corpus, &individual, 1.0)?,
        );
    }
    let ids: Vec<&str> = individual.documents().iter().map(|d| d.doc_id.as_str()).collect();
    println!("individual corpus after supplementation: {ids:?}");
    Ok(())
}
