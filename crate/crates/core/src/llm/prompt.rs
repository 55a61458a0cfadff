//! Versioned prompt templates and prompt rendering for the four familiarity
//! strategies and the information-need prompts.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::dataset::{Familiarity, InfoNeed, SplitSpec, TermKey};
use crate::error::{Error, Result};
use crate::features::ReaderProfile;

/// A template shipped with the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Template {
    pub id: &'static str,
    pub text: &'static str,
}

pub const FAMILIARITY_V1: Template = Template {
    id: "familiarity.v1",
    text: include_str!("../../templates/familiarity.v1.txt"),
};
pub const NEED_DEFINITION_V1: Template = Template {
    id: "need_definition.v1",
    text: include_str!("../../templates/need_definition.v1.txt"),
};
pub const NEED_BACKGROUND_V1: Template = Template {
    id: "need_background.v1",
    text: include_str!("../../templates/need_background.v1.txt"),
};
pub const NEED_EXAMPLE_V1: Template = Template {
    id: "need_example.v1",
    text: include_str!("../../templates/need_example.v1.txt"),
};
pub const EXTRACT_TERMS_V1: Template = Template {
    id: "extract_terms.v1",
    text: include_str!("../../templates/extract_terms.v1.txt"),
};

const TEMPLATES: [Template; 5] = [
    FAMILIARITY_V1,
    NEED_DEFINITION_V1,
    NEED_BACKGROUND_V1,
    NEED_EXAMPLE_V1,
    EXTRACT_TERMS_V1,
];

pub fn template(id: &str) -> Result<Template> {
    TEMPLATES
        .into_iter()
        .find(|t| t.id == id)
        .ok_or_else(|| Error::Validation(format!("unknown template '{id}'")))
}

pub fn need_template(need: InfoNeed) -> Template {
    match need {
        InfoNeed::Definition => NEED_DEFINITION_V1,
        InfoNeed::Background => NEED_BACKGROUND_V1,
        InfoNeed::Example => NEED_EXAMPLE_V1,
    }
}

/// Substitutes `{name}` placeholders in one pass, so slot values containing
/// braces are never re-expanded.
pub fn render(template: &Template, slots: &BTreeMap<&str, &str>) -> Result<String> {
    let text = template.text.trim_end();
    let mut out = String::with_capacity(text.len() + 256);
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if after[..close].chars().all(|c| c.is_ascii_lowercase() || c == '_') && close > 0 => {
                let name = &after[..close];
                let value = slots
                    .get(name)
                    .ok_or_else(|| Error::MissingSlot(format!("{name} (template {})", template.id)))?;
                out.push_str(value);
                rest = &after[close + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Baseline,
    Metadata,
    ContextEnhanced,
    FewShot,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Baseline => "baseline",
            Strategy::Metadata => "metadata",
            Strategy::ContextEnhanced => "context_enhanced",
            Strategy::FewShot => "few_shot",
        }
    }

    pub fn needs_granularity(self) -> bool {
        matches!(self, Strategy::ContextEnhanced | Strategy::FewShot)
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Strategy::Baseline),
            "metadata" => Ok(Strategy::Metadata),
            "context_enhanced" => Ok(Strategy::ContextEnhanced),
            "few_shot" => Ok(Strategy::FewShot),
            other => Err(Error::Validation(format!("unknown strategy '{other}'"))),
        }
    }
}

/// Where context publications or few-shot examples come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptGranularity {
    Domain,
    Subdomain,
    Individual,
}

impl PromptGranularity {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptGranularity::Domain => "domain",
            PromptGranularity::Subdomain => "subdomain",
            PromptGranularity::Individual => "individual",
        }
    }
}

fn default_examples() -> usize {
    5
}

fn default_template_id() -> String {
    FAMILIARITY_V1.id.into()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptSpec {
    pub strategy: Strategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub granularity: Option<PromptGranularity>,
    #[serde(default = "default_examples")]
    pub n_examples: usize,
    #[serde(default = "default_template_id")]
    pub template_id: String,
}

impl PromptSpec {
    pub fn baseline() -> Self {
        Self::new(Strategy::Baseline, None)
    }

    pub fn new(strategy: Strategy, granularity: Option<PromptGranularity>) -> Self {
        Self {
            strategy,
            granularity,
            n_examples: default_examples(),
            template_id: default_template_id(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.strategy.needs_granularity() != self.granularity.is_some() {
            return Err(Error::Validation(format!(
                "strategy {} {} a granularity",
                self.strategy.as_str(),
                if self.strategy.needs_granularity() {
                    "requires"
                } else {
                    "does not take"
                }
            )));
        }
        if self.n_examples == 0 {
            return Err(Error::Validation("n_examples must be at least 1".into()));
        }
        template(&self.template_id)?;
        Ok(())
    }

    /// Configuration label used in reports, e.g. `llm_few_shot_individual_5`.
    pub fn label(&self) -> String {
        match self.granularity {
            Some(g) => format!("llm_{}_{}_{}", self.strategy.as_str(), g.as_str(), self.n_examples),
            None => format!("llm_{}", self.strategy.as_str()),
        }
    }
}

impl fmt::Display for PromptSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// A labeled (term, abstract, rating) triple shown to the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub abstract_id: String,
    pub term: String,
    pub abstract_text: String,
    pub label: Familiarity,
}

impl FewShotExample {
    pub fn key(&self) -> TermKey {
        TermKey::new(&self.abstract_id, &self.term)
    }
}

/// Material for the Related Data slot. Only the part matching the strategy is used.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PromptExamples {
    pub publications: Vec<Document>,
    pub labeled: Vec<FewShotExample>,
}

/// 0 for familiar, 1 for unfamiliar, following the template's scale.
pub fn familiarity_digit(label: Familiarity) -> char {
    match label {
        Familiarity::Familiar => '0',
        Familiarity::Unfamiliar => '1',
    }
}

/// Related Data text for a strategy.
pub fn related_data(
    spec: &PromptSpec,
    reader: &ReaderProfile,
    examples: &PromptExamples,
    split: &SplitSpec,
) -> Result<String> {
    spec.validate()?;
    match spec.strategy {
        Strategy::Baseline => Ok(String::new()),
        Strategy::Metadata => Ok(format!(
            "first publication year: {}; number of publications: {}; average citation count: {}",
            reader.first_pub_year, reader.pub_count, reader.avg_citation_count
        )),
        Strategy::ContextEnhanced => {
            if examples.publications.is_empty() {
                return Err(Error::MissingSlot("related (no publications available)".into()));
            }
            Ok(examples
                .publications
                .iter()
                .take(spec.n_examples)
                .enumerate()
                .map(|(i, d)| format!("Publication {}: {}. {}", i + 1, d.title, d.abstract_text))
                .collect::<Vec<_>>()
                .join("\n"))
        }
        Strategy::FewShot => {
            if examples.labeled.is_empty() {
                return Err(Error::MissingSlot("related (no labeled examples available)".into()));
            }
            let shown = &examples.labeled[..spec.n_examples.min(examples.labeled.len())];
            if let Some(e) = shown.iter().find(|e| split.is_test(&e.key())) {
                return Err(Error::Leakage(format!(
                    "few-shot example ({}, {}) is in the test split",
                    e.abstract_id, e.term
                )));
            }
            Ok(shown
                .iter()
                .enumerate()
                .map(|(i, e)| {
                    format!(
                        "Example {}: Entity: {} Abstract: {} Familiarity score: {}",
                        i + 1,
                        e.term,
                        e.abstract_text,
                        familiarity_digit(e.label)
                    )
                })
                .collect::<Vec<_>>()
                .join("\n"))
        }
    }
}

/// Renders the familiarity prompt for one (term, abstract, reader).
pub fn build_prompt(
    spec: &PromptSpec,
    term: &str,
    abstract_doc: &Document,
    reader: &ReaderProfile,
    examples: &PromptExamples,
    split: &SplitSpec,
) -> Result<String> {
    if term.trim().is_empty() {
        return Err(Error::MissingSlot("entity".into()));
    }
    let related = related_data(spec, reader, examples, split)?;
    let slots = BTreeMap::from([
        ("entity", term),
        ("abstract", abstract_doc.abstract_text.as_str()),
        ("related", related.as_str()),
    ]);
    render(&template(&spec.template_id)?, &slots)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, text: &str) -> Document {
        Document {
            doc_id: id.into(),
            title: format!("Title {id}"),
            abstract_text: text.into(),
            year: 2021,
            domain_label: "CS".into(),
            venue: None,
            citation_count: 0,
            author_ids: vec![],
            reference_ids: vec![],
        }
    }

    fn reader() -> ReaderProfile {
        ReaderProfile {
            annotator_id: "a1".into(),
            subdomain_labels: vec!["nlp".into()],
            publication_ids: vec![],
            first_pub_year: 2012,
            pub_count: 9,
            avg_citation_count: 31.5,
        }
    }

    fn split(test: &[(&str, &str)]) -> SplitSpec {
        SplitSpec {
            seed: 0,
            train_fraction: 0.8,
            train_terms: Default::default(),
            test_terms: test.iter().map(|(a, t)| TermKey::new(*a, *t)).collect(),
        }
    }

    fn example(i: usize) -> FewShotExample {
        FewShotExample {
            abstract_id: format!("x{i}"),
            term: format!("term{i}"),
            abstract_text: format!("text {i}"),
            label: if i.is_multiple_of(2) {
                Familiarity::Familiar
            } else {
                Familiarity::Unfamiliar
            },
        }
    }

    #[test]
    fn templates_keep_the_published_wording() {
        assert!(FAMILIARITY_V1
            .text
            .starts_with("Your job is to estimate how much the reader knows about an entity."));
        assert!(FAMILIARITY_V1
            .text
            .contains("determine the familiarity score, either 0 or 1:"));
        assert!(NEED_BACKGROUND_V1.text.contains("either 0(no) or 1(yes)"));
        assert!(NEED_DEFINITION_V1.text.contains("\"What is/are [term]?\""));
        assert!(EXTRACT_TERMS_V1.text.contains("Retain the first 10 word/phrases"));
        for t in TEMPLATES {
            assert!(!t.text.contains("\\{"), "{} has latex escapes", t.id);
        }
    }

    #[test]
    fn baseline_has_term_abstract_and_empty_related() {
        let abs = doc("x", "We study {braces} and transformers.");
        let p = build_prompt(
            &PromptSpec::baseline(),
            "transformers",
            &abs,
            &reader(),
            &PromptExamples::default(),
            &split(&[]),
        )
        .unwrap();
        assert!(p.contains("Entity: transformers Abstract:We study {braces} and transformers. Related Data: Here's"));
        assert_eq!(
            p,
            build_prompt(
                &PromptSpec::baseline(),
                "transformers",
                &abs,
                &reader(),
                &PromptExamples::default(),
                &split(&[])
            )
            .unwrap()
        );
    }

    #[test]
    fn metadata_lists_reader_fields() {
        let p = build_prompt(
            &PromptSpec::new(Strategy::Metadata, None),
            "t",
            &doc("x", "t"),
            &reader(),
            &PromptExamples::default(),
            &split(&[]),
        )
        .unwrap();
        assert!(p.contains("2012") && p.contains("9") && p.contains("31.5"));
    }

    #[test]
    fn few_shot_shows_exactly_n() {
        let spec = PromptSpec::new(Strategy::FewShot, Some(PromptGranularity::Individual));
        let ex = PromptExamples {
            publications: vec![],
            labeled: (0..8).map(example).collect(),
        };
        let p = build_prompt(&spec, "t", &doc("x", "t"), &reader(), &ex, &split(&[])).unwrap();
        assert_eq!(p.matches("Familiarity score: ").count(), 5);
        assert!(p.contains("term4") && !p.contains("term5"));
    }

    #[test]
    fn few_shot_leakage_rejected() {
        let spec = PromptSpec::new(Strategy::FewShot, Some(PromptGranularity::Individual));
        let ex = PromptExamples {
            publications: vec![],
            labeled: (0..5).map(example).collect(),
        };
        let err = build_prompt(&spec, "t", &doc("x", "t"), &reader(), &ex, &split(&[("x3", "term3")])).unwrap_err();
        assert!(matches!(err, Error::Leakage(_)));
    }

    #[test]
    fn context_without_publications_is_missing_slot() {
        let spec = PromptSpec::new(Strategy::ContextEnhanced, Some(PromptGranularity::Individual));
        let err = build_prompt(
            &spec,
            "t",
            &doc("x", "t"),
            &reader(),
            &PromptExamples::default(),
            &split(&[]),
        )
        .unwrap_err();
        assert!(matches!(err, Error::MissingSlot(_)));
        let ex = PromptExamples {
            publications: vec![doc("p1", "First paper."), doc("p2", "Second paper.")],
            labeled: vec![],
        };
        let p = build_prompt(&spec, "t", &doc("x", "t"), &reader(), &ex, &split(&[])).unwrap();
        assert!(p.contains("Publication 2: Title p2. Second paper."));
    }

    #[test]
    fn spec_validation() {
        assert!(PromptSpec::new(Strategy::FewShot, None).validate().is_err());
        assert!(PromptSpec::new(Strategy::Baseline, Some(PromptGranularity::Domain))
            .validate()
            .is_err());
        let mut s = PromptSpec::new(Strategy::ContextEnhanced, Some(PromptGranularity::Domain));
        s.n_examples = 0;
        assert!(s.validate().is_err());
        assert_eq!(
            PromptSpec::new(Strategy::FewShot, Some(PromptGranularity::Subdomain)).label(),
            "llm_few_shot_subdomain_5"
        );
    }

    #[test]
    fn render_requires_every_slot() {
        let slots = BTreeMap::from([("entity", "x")]);
        assert!(matches!(render(&FAMILIARITY_V1, &slots), Err(Error::MissingSlot(_))));
    }
}
