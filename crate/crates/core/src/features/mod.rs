//! Per-triple features: corpus frequency and specificity at three
//! granularities, embedding distance, readability, and reader metadata.

pub mod embedding;
pub mod extract;
pub mod perplexity;
pub mod readability;
pub mod standardize;

use std::collections::HashSet;
use std::path::Path;

pub use embedding::{min_embedding_distance, EmbeddingSource, EmbeddingStore, EmbeddingVector};
pub use extract::{
    extract_features, load_readers, CorpusLibrary, FeatureContext, FeatureSchema, FeatureVector, ReaderCorpora,
    ReaderProfile,
};
pub use perplexity::{PerplexityProvider, PerplexityScorer, UnigramPerplexity};
pub use readability::{count_syllables, flesch_kincaid};
pub use standardize::{fit_standardizer, StandardizerStats};

use crate::dataset::{Familiarity, InfoNeed, LabeledExample};
use crate::error::{Error, Result};

/// One labeled example with its feature values in schema order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub example: LabeledExample,
    pub values: Vec<f64>,
}

const ID_COLUMNS: [&str; 7] = [
    "annotator_id",
    "abstract_id",
    "term",
    "label",
    "need_definition",
    "need_background",
    "need_example",
];

/// Feature matrix as CSV: identity and label columns first, then features in schema order.
pub fn feature_csv(schema: &FeatureSchema, rows: &[FeatureRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ID_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(schema.names());
    w.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let e = &r.example;
        let mut rec = vec![
            e.annotator_id.clone(),
            e.abstract_id.clone(),
            e.term.clone(),
            match e.label {
                Familiarity::Familiar => "familiar".into(),
                Familiarity::Unfamiliar => "unfamiliar".into(),
            },
        ];
        for n in InfoNeed::ALL {
            rec.push(if e.need_labels[&n] { "1" } else { "0" }.into());
        }
        rec.extend(r.values.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Validation(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Validation(format!("csv: {e}"))
}

/// Parses a feature CSV written by [`feature_csv`] with the same schema.
pub fn read_feature_csv(path: &Path, schema: &FeatureSchema) -> Result<Vec<FeatureRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|_| Error::MissingPath(path.to_path_buf()))?;
    let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(String::from).collect();
    let mut expected: Vec<String> = ID_COLUMNS.iter().map(|s| s.to_string()).collect();
    expected.extend(schema.names());
    if header != expected {
        return Err(Error::Validation(format!(
            "{}: header does not match feature schema {}",
            path.display(),
            schema.version
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let err = |m: String| Error::Line {
            path: path.display().to_string(),
            line: i + 2,
            message: m,
        };
        let label = match &rec[3] {
            "familiar" => Familiarity::Familiar,
            "unfamiliar" => Familiarity::Unfamiliar,
            other => return Err(err(format!("bad label '{other}'"))),
        };
        let need_labels = InfoNeed::ALL
            .iter()
            .enumerate()
            .map(|(k, &n)| (n, &rec[4 + k] == "1"))
            .collect();
        let values = rec
            .iter()
            .skip(ID_COLUMNS.len())
            .map(|s| s.parse::<f64>().map_err(|e| err(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        rows.push(FeatureRow {
            example: LabeledExample {
                annotator_id: rec[0].to_string(),
                abstract_id: rec[1].to_string(),
                term: rec[2].to_string(),
                label,
                need_labels,
            },
            values,
        });
    }
    Ok(rows)
}

/// (annotator, abstract, term) keys already present in `rows`.
pub fn row_keys(rows: &[FeatureRow]) -> HashSet<(String, String, String)> {
    rows.iter()
        .map(|r| {
            (
                r.example.annotator_id.clone(),
                r.example.abstract_id.clone(),
                r.example.term.clone(),
            )
        })
        .collect()
}
