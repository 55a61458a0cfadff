//! Annotation records, rating binarization, the shared train/test split, and
//! dataset summaries.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Familiarity {
    Familiar,
    Unfamiliar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfoNeed {
    Definition,
    Background,
    Example,
}

impl InfoNeed {
    pub const ALL: [InfoNeed; 3] = [InfoNeed::Definition, InfoNeed::Background, InfoNeed::Example];

    pub fn as_str(self) -> &'static str {
        match self {
            InfoNeed::Definition => "definition",
            InfoNeed::Background => "background",
            InfoNeed::Example => "example",
        }
    }
}

impl fmt::Display for InfoNeed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InfoNeed {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "definition" | "d" => Ok(InfoNeed::Definition),
            "background" | "b" => Ok(InfoNeed::Background),
            "example" | "e" => Ok(InfoNeed::Example),
            other => Err(Error::Validation(format!("unknown information need '{other}'"))),
        }
    }
}

/// Identity of a term occurrence: the abstract it came from plus its surface form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TermKey {
    pub abstract_id: String,
    pub term: String,
}

impl TermKey {
    pub fn new(abstract_id: impl Into<String>, term: impl Into<String>) -> Self {
        Self {
            abstract_id: abstract_id.into(),
            term: term.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub annotator_id: String,
    pub abstract_id: String,
    pub term: String,
    pub rating: u8,
    #[serde(default)]
    pub needs: BTreeSet<InfoNeed>,
}

impl AnnotationRecord {
    pub fn key(&self) -> TermKey {
        TermKey::new(&self.abstract_id, &self.term)
    }
}

/// The learning target for one row: the familiarity class or one information need.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Familiarity,
    Need(InfoNeed),
}

impl Target {
    pub fn name(&self) -> String {
        match self {
            Target::Familiarity => "familiarity".into(),
            Target::Need(n) => format!("need_{n}"),
        }
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "familiarity" | "unfamiliar" => Ok(Target::Familiarity),
            other => Ok(Target::Need(other.trim_start_matches("need_").parse()?)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub annotator_id: String,
    pub abstract_id: String,
    pub term: String,
    pub label: Familiarity,
    pub need_labels: BTreeMap<InfoNeed, bool>,
}

impl LabeledExample {
    pub fn from_record(record: &AnnotationRecord) -> Result<Self> {
        Ok(Self {
            annotator_id: record.annotator_id.clone(),
            abstract_id: record.abstract_id.clone(),
            term: record.term.clone(),
            label: binarize_rating(record.rating as i64)?,
            need_labels: InfoNeed::ALL.iter().map(|&n| (n, record.needs.contains(&n))).collect(),
        })
    }

    pub fn key(&self) -> TermKey {
        TermKey::new(&self.abstract_id, &self.term)
    }

    /// Positive-class indicator for `target`. For familiarity the positive
    /// class is "unfamiliar".
    pub fn is_positive(&self, target: Target) -> bool {
        match target {
            Target::Familiarity => self.label == Familiarity::Unfamiliar,
            Target::Need(n) => self.need_labels.get(&n).copied().unwrap_or(false),
        }
    }
}

/// Ratings 3-5 are familiar, 1-2 unfamiliar.
pub fn binarize_rating(rating: i64) -> Result<Familiarity> {
    match rating {
        3..=5 => Ok(Familiarity::Familiar),
        1 | 2 => Ok(Familiarity::Unfamiliar),
        r => Err(Error::RatingOutOfRange(r)),
    }
}

#[derive(Deserialize)]
struct RawAnnotation {
    annotator_id: String,
    abstract_id: String,
    term: String,
    rating: i64,
    #[serde(default)]
    needs: Vec<String>,
}

/// Parses and validates one JSONL annotation line (1-based `line` for messages).
pub fn parse_annotation_line(text: &str, path_label: &str, line: usize) -> Result<AnnotationRecord> {
    let err = |message: String| Error::Line {
        path: path_label.to_string(),
        line,
        message,
    };
    let raw: RawAnnotation = serde_json::from_str(text).map_err(|e| err(e.to_string()))?;
    binarize_rating(raw.rating).map_err(|e| err(e.to_string()))?;
    if raw.annotator_id.is_empty() || raw.abstract_id.is_empty() || raw.term.trim().is_empty() {
        return Err(err("annotator_id, abstract_id and term must be nonempty".into()));
    }
    let needs = raw
        .needs
        .iter()
        .map(|n| n.parse::<InfoNeed>())
        .collect::<Result<BTreeSet<_>>>()
        .map_err(|e| err(e.to_string()))?;
    Ok(AnnotationRecord {
        annotator_id: raw.annotator_id,
        abstract_id: raw.abstract_id,
        term: raw.term,
        rating: raw.rating as u8,
        needs,
    })
}

/// Loads a JSONL annotation file, rejecting malformed lines, out-of-range
/// ratings and duplicate (annotator, abstract, term) keys.
pub fn load_annotations(path: &Path) -> Result<Vec<AnnotationRecord>> {
    let file = File::open(path).map_err(|_| Error::MissingPath(path.to_path_buf()))?;
    let label = path.display().to_string();
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = parse_annotation_line(&line, &label, i + 1)?;
        let key = (rec.annotator_id.clone(), rec.abstract_id.clone(), rec.term.clone());
        if !seen.insert(key) {
            return Err(Error::DuplicateAnnotation {
                line: i + 1,
                annotator_id: rec.annotator_id,
                abstract_id: rec.abstract_id,
                term: rec.term,
            });
        }
        out.push(rec);
    }
    Ok(out)
}

/// Appends one record as a JSON line.
pub fn append_annotation(path: &Path, record: &AnnotationRecord) -> Result<()> {
    binarize_rating(record.rating as i64)?;
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let line = serde_json::to_string(record)?;
    writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
    file.flush().map_err(|e| Error::io(path, e))
}

/// A record whose term does not appear in its abstract.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TermWarning {
    pub annotator_id: String,
    pub abstract_id: String,
    pub term: String,
    pub reason: &'static str,
}

/// Case-insensitive containment check of each term in its abstract text.
pub fn check_term_occurrence(records: &[AnnotationRecord], abstracts: &HashMap<String, String>) -> Vec<TermWarning> {
    let lowered: HashMap<&str, String> = abstracts.iter().map(|(k, v)| (k.as_str(), v.to_lowercase())).collect();
    records
        .iter()
        .filter_map(|r| {
            let reason = match lowered.get(r.abstract_id.as_str()) {
                None => "unknown abstract",
                Some(text) if !text.contains(&r.term.to_lowercase()) => "term not in abstract",
                Some(_) => return None,
            };
            Some(TermWarning {
                annotator_id: r.annotator_id.clone(),
                abstract_id: r.abstract_id.clone(),
                term: r.term.clone(),
                reason,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// One split over all terms, shared by every annotator.
    #[default]
    Shared,
    /// An independent split per annotator, seeded from the run seed and the annotator id.
    PerAnnotator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    pub train_fraction: f64,
    pub train_terms: BTreeSet<TermKey>,
    pub test_terms: BTreeSet<TermKey>,
}

impl SplitSpec {
    pub fn is_train(&self, key: &TermKey) -> bool {
        self.train_terms.contains(key)
    }

    pub fn is_test(&self, key: &TermKey) -> bool {
        self.test_terms.contains(key)
    }
}

/// Seeded random split of `terms` with `round(train_fraction * n)` training terms.
pub fn split_terms(terms: &BTreeSet<TermKey>, train_fraction: f64, seed: u64) -> Result<SplitSpec> {
    if terms.is_empty() {
        return Err(Error::Empty("terms to split"));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Validation(format!(
            "train_fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut shuffled: Vec<&TermKey> = terms.iter().collect();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (train_fraction * terms.len() as f64).round() as usize;
    Ok(SplitSpec {
        seed,
        train_fraction,
        train_terms: shuffled[..n_train].iter().map(|&k| k.clone()).collect(),
        test_terms: shuffled[n_train..].iter().map(|&k| k.clone()).collect(),
    })
}

/// Stable 64-bit seed derived from a base seed and a label.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    use sha2::{Digest, Sha256};
    let digest = Sha256::new()
        .chain_update(seed.to_le_bytes())
        .chain_update(label.as_bytes())
        .finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Splits for every annotator under the chosen mode.
pub fn splits_for(
    records: &[AnnotationRecord],
    mode: SplitMode,
    train_fraction: f64,
    seed: u64,
) -> Result<BTreeMap<String, SplitSpec>> {
    let mut by_annotator: BTreeMap<String, BTreeSet<TermKey>> = BTreeMap::new();
    for r in records {
        by_annotator.entry(r.annotator_id.clone()).or_default().insert(r.key());
    }
    match mode {
        SplitMode::Shared => {
            let all: BTreeSet<TermKey> = records.iter().map(AnnotationRecord::key).collect();
            let split = split_terms(&all, train_fraction, seed)?;
            Ok(by_annotator.into_keys().map(|a| (a, split.clone())).collect())
        }
        SplitMode::PerAnnotator => by_annotator
            .into_iter()
            .map(|(a, terms)| {
                let s = split_terms(&terms, train_fraction, derive_seed(seed, &a))?;
                Ok((a, s))
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainStats {
    pub domain: String,
    pub n_records: usize,
    pub mean_familiar: f64,
    pub rate_definition: f64,
    pub rate_background: f64,
    pub rate_example: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub domains: Vec<DomainStats>,
    pub n_records: usize,
    pub n_terms: usize,
    pub n_annotators: usize,
    /// Terms on which every annotator gave the same binary label.
    pub unanimous_fraction: f64,
    pub unanimous_terms: usize,
    /// Exact half/half splits, over terms with an even number of annotators;
    /// `None` when no term has an even annotator count.
    pub even_split_fraction: Option<f64>,
    pub even_split_terms: usize,
    pub even_count_terms: usize,
    /// Terms (with at least two annotators) whose familiar and unfamiliar
    /// counts differ by at most one.
    pub near_even_split_fraction: f64,
}

/// Per-domain familiarity and need rates plus term-level agreement fractions.
pub fn dataset_stats(records: &[AnnotationRecord], abstract_domains: &HashMap<String, String>) -> Result<DatasetStats> {
    if records.is_empty() {
        return Err(Error::Empty("annotation records"));
    }
    #[derive(Default)]
    struct Acc {
        n: usize,
        familiar: usize,
        needs: [usize; 3],
    }
    let mut domains: BTreeMap<&str, Acc> = BTreeMap::new();
    let mut terms: BTreeMap<TermKey, (usize, usize)> = BTreeMap::new();
    let mut annotators = HashSet::new();
    for r in records {
        let domain = abstract_domains
            .get(&r.abstract_id)
            .ok_or_else(|| Error::Validation(format!("no domain for abstract {}", r.abstract_id)))?;
        let familiar = binarize_rating(r.rating as i64)? == Familiarity::Familiar;
        let acc = domains.entry(domain.as_str()).or_default();
        acc.n += 1;
        acc.familiar += familiar as usize;
        for (i, need) in InfoNeed::ALL.iter().enumerate() {
            acc.needs[i] += r.needs.contains(need) as usize;
        }
        let t = terms.entry(r.key()).or_default();
        if familiar {
            t.0 += 1;
        } else {
            t.1 += 1;
        }
        annotators.insert(r.annotator_id.as_str());
    }
    let domains = domains
        .into_iter()
        .map(|(d, a)| {
            let n = a.n as f64;
            DomainStats {
                domain: d.to_string(),
                n_records: a.n,
                mean_familiar: a.familiar as f64 / n,
                rate_definition: a.needs[0] as f64 / n,
                rate_background: a.needs[1] as f64 / n,
                rate_example: a.needs[2] as f64 / n,
            }
        })
        .collect();
    let n_terms = terms.len();
    let unanimous_terms = terms.values().filter(|(f, u)| *f == 0 || *u == 0).count();
    let even_count_terms = terms.values().filter(|(f, u)| (f + u) % 2 == 0).count();
    let even_split_terms = terms.values().filter(|(f, u)| f == u).count();
    let multi: Vec<_> = terms.values().filter(|(f, u)| f + u >= 2).collect();
    let near_even = multi.iter().filter(|(f, u)| f.abs_diff(*u) <= 1).count();
    Ok(DatasetStats {
        domains,
        n_records: records.len(),
        n_terms,
        n_annotators: annotators.len(),
        unanimous_fraction: unanimous_terms as f64 / n_terms as f64,
        unanimous_terms,
        even_split_fraction: (even_count_terms > 0).then(|| even_split_terms as f64 / even_count_terms as f64),
        even_split_terms,
        even_count_terms,
        near_even_split_fraction: if multi.is_empty() {
            0.0
        } else {
            near_even as f64 / multi.len() as f64
        },
    })
}

/// Renders the per-domain table as CSV.
pub fn stats_csv(stats: &DatasetStats) -> String {
    let mut out = String::from("domain,mean_familiar,rate_definition,rate_background,rate_example\n");
    for d in &stats.domains {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            crate::report::csv_field(&d.domain),
            d.mean_familiar,
            d.rate_definition,
            d.rate_background,
            d.rate_example
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(a: &str, abs: &str, term: &str, rating: u8) -> AnnotationRecord {
        AnnotationRecord {
            annotator_id: a.into(),
            abstract_id: abs.into(),
            term: term.into(),
            rating,
            needs: BTreeSet::new(),
        }
    }

    #[test]
    fn binarize_table() {
        use Familiarity::*;
        let expected = [
            (1, Unfamiliar),
            (2, Unfamiliar),
            (3, Familiar),
            (4, Familiar),
            (5, Familiar),
        ];
        for (r, f) in expected {
            assert_eq!(binarize_rating(r).unwrap(), f);
        }
        for r in [0, 6, -1] {
            assert!(matches!(binarize_rating(r), Err(Error::RatingOutOfRange(_))));
        }
    }

    #[test]
    fn load_annotations_validation() {
        let dir = tempfile::tempdir().unwrap();
        let ok = dir.path().join("ok.jsonl");
        std::fs::write(
            &ok,
            r#"{"annotator_id":"a1","abstract_id":"x","term":"ionic liquid","rating":5,"needs":[]}
{"annotator_id":"a1","abstract_id":"x","term":"graphene","rating":1,"needs":["definition","example"]}
"#,
        )
        .unwrap();
        let recs = load_annotations(&ok).unwrap();
        assert_eq!(recs.len(), 2);
        assert!(recs[1].needs.contains(&InfoNeed::Example));

        let bad = dir.path().join("bad.jsonl");
        std::fs::write(
            &bad,
            r#"{"annotator_id":"a1","abstract_id":"x","term":"t","rating":3}
{"annotator_id":"a1","abstract_id":"x","term":"u","rating":0}
"#,
        )
        .unwrap();
        match load_annotations(&bad) {
            Err(Error::Line { line: 2, message, .. }) => assert!(message.contains("rating 0")),
            other => panic!("{other:?}"),
        }

        let dup = dir.path().join("dup.jsonl");
        std::fs::write(
            &dup,
            r#"{"annotator_id":"a1","abstract_id":"x","term":"t","rating":3}
{"annotator_id":"a1","abstract_id":"x","term":"t","rating":4}
"#,
        )
        .unwrap();
        assert!(matches!(
            load_annotations(&dup),
            Err(Error::DuplicateAnnotation { line: 2, .. })
        ));
    }

    #[test]
    fn unknown_need_rejected() {
        let line = r#"{"annotator_id":"a","abstract_id":"x","term":"t","rating":3,"needs":["history"]}"#;
        assert!(parse_annotation_line(line, "f", 1).is_err());
    }

    fn keys(n: usize) -> BTreeSet<TermKey> {
        (0..n)
            .map(|i| TermKey::new(format!("a{}", i / 10), format!("t{i}")))
            .collect()
    }

    #[test]
    fn split_sizes() {
        let s = split_terms(&keys(10), 0.8, 3).unwrap();
        assert_eq!((s.train_terms.len(), s.test_terms.len()), (8, 2));
        assert_eq!(s, split_terms(&keys(10), 0.8, 3).unwrap());
        let s = split_terms(&keys(956), 0.8, 0).unwrap();
        // 0.8 * 956 = 764.8
        assert_eq!((s.train_terms.len(), s.test_terms.len()), (765, 191));
        assert!(split_terms(&BTreeSet::new(), 0.8, 0).is_err());
        assert!(split_terms(&keys(3), 1.0, 0).is_err());
    }

    #[test]
    fn per_annotator_splits_differ() {
        let mut records = Vec::new();
        for a in ["a1", "a2"] {
            for k in keys(40) {
                records.push(rec(a, &k.abstract_id, &k.term, 3));
            }
        }
        let shared = splits_for(&records, SplitMode::Shared, 0.8, 9).unwrap();
        assert_eq!(shared["a1"], shared["a2"]);
        let per = splits_for(&records, SplitMode::PerAnnotator, 0.8, 9).unwrap();
        assert_ne!(per["a1"].train_terms, per["a2"].train_terms);
    }

    #[test]
    fn stats_unanimous_and_even_split() {
        let domains: HashMap<_, _> = [("x".to_string(), "Art".to_string())].into();
        let mut records: Vec<_> = (0..4).map(|i| rec(&format!("a{i}"), "x", "t1", 4)).collect();
        records.extend((0..4).map(|i| rec(&format!("a{i}"), "x", "t2", if i < 2 { 4 } else { 1 })));
        let s = dataset_stats(&records, &domains).unwrap();
        assert_eq!(s.n_terms, 2);
        assert_eq!(s.unanimous_terms, 1);
        assert_eq!(s.even_split_terms, 1);
        assert_eq!(s.even_split_fraction, Some(0.5));
        assert!((s.domains[0].mean_familiar - 0.75).abs() < 1e-12);

        let odd: Vec<_> = (0..3).map(|i| rec(&format!("a{i}"), "x", "t", 4)).collect();
        assert_eq!(dataset_stats(&odd, &domains).unwrap().even_split_fraction, None);

        let missing = HashMap::new();
        assert!(dataset_stats(&records, &missing).is_err());
    }

    #[test]
    fn stats_csv_header() {
        let domains: HashMap<_, _> = [("x".to_string(), "Art, Modern".to_string())].into();
        let s = dataset_stats(&[rec("a", "x", "t", 2)], &domains).unwrap();
        let csv = stats_csv(&s);
        assert!(csv.starts_with("domain,mean_familiar,rate_definition,rate_background,rate_example\n"));
        assert!(csv.contains("\"Art, Modern\",0,0,0,0"));
    }

    #[test]
    fn term_occurrence_warnings() {
        let abstracts: HashMap<_, _> = [("x".to_string(), "Ionic Liquids are salts".to_string())].into();
        let records = vec![
            rec("a", "x", "ionic liquid", 3),
            rec("a", "x", "plasma", 3),
            rec("a", "y", "z", 3),
        ];
        let w = check_term_occurrence(&records, &abstracts);
        assert_eq!(w.len(), 2);
        assert_eq!(w[0].term, "plasma");
        assert_eq!(w[1].reason, "unknown abstract");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn split_is_disjoint_cover(n in 1usize..200, frac in 0.05f64..0.95, seed in any::<u64>()) {
                let all = keys(n);
                let s = split_terms(&all, frac, seed).unwrap();
                prop_assert!(s.train_terms.is_disjoint(&s.test_terms));
                let union: BTreeSet<_> = s.train_terms.union(&s.test_terms).cloned().collect();
                prop_assert_eq!(union, all);
                prop_assert_eq!(s.train_terms.len(), (frac * n as f64).round() as usize);
            }

            #[test]
            fn stats_fractions_bounded(ratings in prop::collection::vec(1u8..=5, 1..60)) {
                let domains: HashMap<_, _> = [("x".to_string(), "D".to_string()), ("y".to_string(), "E".to_string())].into();
                let records: Vec<_> = ratings.iter().enumerate()
                    .map(|(i, &r)| rec(&format!("a{}", i % 5), if i % 2 == 0 { "x" } else { "y" }, &format!("t{}", i / 5), r))
                    .collect();
                let s = dataset_stats(&records, &domains).unwrap();
                for d in &s.domains {
                    prop_assert!((0.0..=1.0).contains(&d.mean_familiar));
                }
                let non_unanimous = (s.n_terms - s.unanimous_terms) as f64 / s.n_terms as f64;
                prop_assert!((s.unanimous_fraction + non_unanimous - 1.0).abs() < 1e-12);
            }
        }
    }
}
