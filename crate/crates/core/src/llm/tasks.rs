//! Prompt-based familiarity, information-need and term-extraction calls.

use std::collections::{BTreeMap, HashSet};

use super::client::ChatClient;
use super::prompt::{build_prompt, need_template, render, template, PromptExamples, PromptSpec, EXTRACT_TERMS_V1};
use crate::corpus::Document;
use crate::dataset::{Familiarity, InfoNeed, SplitSpec};
use crate::error::{Error, Result};
use crate::features::ReaderProfile;

/// Appended to the prompt on the single retry after an unparseable answer.
pub const RETRY_SUFFIX: &str = "Answer with a single digit.";

/// The first standalone `0` or `1` in `text`. A digit is standalone when it
/// is not part of a longer alphanumeric token or decimal number.
pub fn parse_binary(text: &str) -> Option<u8> {
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].is_alphanumeric() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len()
            && (chars[i].is_alphanumeric()
                || (chars[i] == '.'
                    && i > start
                    && chars[i - 1].is_ascii_digit()
                    && chars.get(i + 1).is_some_and(|c| c.is_ascii_digit())))
        {
            i += 1;
        }
        match &chars[start..i] {
            ['0'] => return Some(0),
            ['1'] => return Some(1),
            _ => {}
        }
    }
    None
}

fn ask_binary(client: &ChatClient, template_id: &str, prompt: &str) -> Result<bool> {
    let first = client.chat(template_id, prompt)?;
    if let Some(d) = parse_binary(&first.response.text) {
        return Ok(d == 1);
    }
    let retry = client.chat(template_id, &format!("{prompt}\n{RETRY_SUFFIX}"))?;
    match parse_binary(&retry.response.text) {
        Some(d) => Ok(d == 1),
        None => Err(Error::Unparseable {
            attempts: 2,
            response: retry.response.text,
        }),
    }
}

/// Familiarity by prompting: 0 maps to familiar, 1 to unfamiliar.
pub fn classify_familiarity_llm(
    spec: &PromptSpec,
    term: &str,
    abstract_doc: &Document,
    reader: &ReaderProfile,
    examples: &PromptExamples,
    split: &SplitSpec,
    client: &ChatClient,
) -> Result<Familiarity> {
    let prompt = build_prompt(spec, term, abstract_doc, reader, examples, split)?;
    Ok(if ask_binary(client, &spec.template_id, &prompt)? {
        Familiarity::Unfamiliar
    } else {
        Familiarity::Familiar
    })
}

/// Whether the reader needs `need` for `term`; the answer 1 means needed.
pub fn classify_info_need_llm(
    need: InfoNeed,
    term: &str,
    abstract_doc: &Document,
    related_data: &str,
    client: &ChatClient,
) -> Result<bool> {
    let t = need_template(need);
    let slots = BTreeMap::from([
        ("entity", term),
        ("abstract", abstract_doc.abstract_text.as_str()),
        ("related", related_data),
    ]);
    ask_binary(client, t.id, &render(&t, &slots)?)
}

/// Strips list markers such as `1.`, `2)`, `-`, `*` and surrounding quotes.
fn clean_item(line: &str) -> &str {
    let mut s = line.trim();
    let digits = s.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 && s[digits..].starts_with(['.', ')', ':']) {
        s = &s[digits + 1..];
    } else if s.starts_with(['-', '*', '•']) {
        s = &s[s.chars().next().unwrap().len_utf8()..];
    }
    s.trim()
        .trim_matches(|c| c == '"' || c == '\'' || c == '`')
        .trim()
        .trim_end_matches(['.', ',', ';'])
        .trim()
}

/// Ranked terms from a numbered, bulleted, line-separated or comma-separated
/// list, deduplicated case-insensitively (first occurrence wins), at most 10.
pub fn parse_term_list(text: &str) -> Vec<String> {
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let items: Vec<&str> = if lines.len() == 1 && lines[0].contains(',') {
        lines[0].split(',').collect()
    } else {
        lines
    };
    let mut seen = HashSet::new();
    items
        .into_iter()
        .map(clean_item)
        .filter(|s| !s.is_empty())
        .filter(|s| seen.insert(s.to_lowercase()))
        .take(10)
        .map(String::from)
        .collect()
}

/// Top-10 significant terms of an abstract, in the model's rank order.
pub fn extract_terms_llm(abstract_doc: &Document, client: &ChatClient) -> Result<Vec<String>> {
    let t = template(EXTRACT_TERMS_V1.id)?;
    let prompt = render(&t, &BTreeMap::from([("abstract", abstract_doc.abstract_text.as_str())]))?;
    let ex = client.chat(t.id, &prompt)?;
    let terms = parse_term_list(&ex.response.text);
    if terms.is_empty() {
        return Err(Error::Unparseable {
            attempts: 1,
            response: ex.response.text,
        });
    }
    Ok(terms)
}
