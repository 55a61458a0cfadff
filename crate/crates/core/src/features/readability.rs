//! Flesch-Kincaid grade level with a vowel-group syllable heuristic.
//!
//! Formula: `0.39 * (words/sentences) + 11.8 * (syllables/words) - 15.59`

use crate::error::{Error, Result};

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y')
}

/// Counts maximal vowel groups, dropping a terminal silent "e" unless it is
/// the only group. Never returns less than 1.
pub fn count_syllables(word: &str) -> Result<usize> {
    if word.is_empty() {
        return Err(Error::Empty("word"));
    }
    if !word.chars().all(char::is_alphabetic) {
        return Err(Error::Validation(format!("'{word}' is not alphabetic")));
    }
    let chars: Vec<char> = word.to_lowercase().chars().collect();
    let mut groups = 0;
    let mut prev_vowel = false;
    for &c in &chars {
        let v = is_vowel(c);
        if v && !prev_vowel {
            groups += 1;
        }
        prev_vowel = v;
    }
    let n = chars.len();
    // a lone trailing "e" after a consonant forms its own group
    let silent_e = n >= 2 && chars[n - 1] == 'e' && !is_vowel(chars[n - 2]);
    if silent_e && groups > 1 {
        groups -= 1;
    }
    Ok(groups.max(1))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TextCounts {
    pub words: usize,
    pub sentences: usize,
    pub syllables: usize,
}

/// Sentences end at `.`, `!` or `?`; a period between two digits is a decimal point.
fn split_sentences(text: &str) -> Vec<&str> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0;
    for (k, &(i, c)) in chars.iter().enumerate() {
        let decimal = c == '.'
            && k > 0
            && chars[k - 1].1.is_ascii_digit()
            && chars.get(k + 1).is_some_and(|(_, n)| n.is_ascii_digit());
        if matches!(c, '.' | '!' | '?') && !decimal {
            out.push(&text[start..i]);
            start = i + c.len_utf8();
        }
    }
    out.push(&text[start..]);
    out
}

fn words(sentence: &str) -> impl Iterator<Item = &str> {
    sentence
        .split_whitespace()
        .filter(|w| w.chars().any(char::is_alphanumeric))
}

fn word_syllables(word: &str) -> usize {
    let letters: String = word.chars().filter(|c| c.is_alphabetic()).collect();
    // words without letters ("2015") count as one syllable
    count_syllables(&letters).unwrap_or(1)
}

pub fn text_counts(text: &str) -> TextCounts {
    let mut counts = TextCounts {
        words: 0,
        sentences: 0,
        syllables: 0,
    };
    for sentence in split_sentences(text) {
        let mut any = false;
        for w in words(sentence) {
            any = true;
            counts.words += 1;
            counts.syllables += word_syllables(w);
        }
        counts.sentences += any as usize;
    }
    counts
}

/// Passage-level Flesch-Kincaid grade score.
pub fn flesch_kincaid(text: &str) -> Result<f64> {
    let c = text_counts(text);
    if c.words == 0 || c.sentences == 0 {
        return Err(Error::Empty("passage text"));
    }
    let words_per_sentence = c.words as f64 / c.sentences as f64;
    let syllables_per_word = c.syllables as f64 / c.words as f64;
    Ok(0.39 * words_per_sentence + 11.8 * syllables_per_word - 15.59)
}
