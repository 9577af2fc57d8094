//! Legality analysis: prime and molecule counts, circularity, and the
//! legality score `alpha * (primes - molecules) / total_words`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::{self, PrimeLexicon, TokenClass};
use crate::num::Scalar;

/// Default weight of the legality score.
pub const DEFAULT_ALPHA: f64 = 10.0;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExplicationError {
    #[error("explication target word is empty")]
    EmptyTarget,
    #[error("explication for {0:?} has no lines")]
    NoLines(String),
}

/// A target word plus the ordered lines paraphrasing it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawExplication")]
pub struct Explication {
    target_word: String,
    lines: Vec<String>,
}

#[derive(Deserialize)]
struct RawExplication {
    target_word: String,
    lines: Vec<String>,
}

impl TryFrom<RawExplication> for Explication {
    type Error = ExplicationError;

    fn try_from(raw: RawExplication) -> Result<Self, Self::Error> {
        Explication::new(raw.target_word, raw.lines)
    }
}

impl Explication {
    /// Trims each line and drops blank ones; at least one line must remain.
    pub fn new<S: AsRef<str>>(
        target_word: impl Into<String>,
        lines: impl IntoIterator<Item = S>,
    ) -> Result<Self, ExplicationError> {
        let target_word = target_word.into().trim().to_string();
        if target_word.is_empty() {
            return Err(ExplicationError::EmptyTarget);
        }
        let lines: Vec<String> = lines
            .into_iter()
            .map(|l| l.as_ref().trim().to_string())
            .filter(|l| !l.is_empty())
            .collect();
        if lines.is_empty() {
            return Err(ExplicationError::NoLines(target_word));
        }
        Ok(Self { target_word, lines })
    }

    /// One line per non-blank input line.
    pub fn from_text(target_word: impl Into<String>, text: &str) -> Result<Self, ExplicationError> {
        Self::new(target_word, text.lines())
    }

    pub fn target_word(&self) -> &str {
        &self.target_word
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    /// The first `n` lines, i.e. the explication with `len - n` lines
    /// removed from the end.
    pub fn head(&self, n: usize) -> &[String] {
        &self.lines[..n.min(self.lines.len())]
    }

    pub fn text(&self) -> String {
        self.lines.join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegalityReport<T = f64> {
    /// Tokens consumed by prime matches (a multiword prime counts each of
    /// its words).
    pub prime_count: usize,
    pub molecule_count: usize,
    pub stopword_count: usize,
    pub total_words: usize,
    pub circular: bool,
    pub legality_score: T,
    pub primes_ratio: T,
    pub molecules_ratio: T,
}

/// Legality score from raw counts. Zero when `total_words` is zero.
pub fn legality_score<T: Scalar>(alpha: T, primes: usize, molecules: usize, total_words: usize) -> T {
    if total_words == 0 {
        return T::zero();
    }
    let diff = T::from_count(primes) - T::from_count(molecules);
    alpha * diff / T::from_count(total_words)
}

fn percentage<T: Scalar>(count: usize, total: usize) -> T {
    if total == 0 {
        T::zero()
    } else {
        T::from_count(100) * T::from_count(count) / T::from_count(total)
    }
}

/// Counts, circularity, and legality score of an explication.
pub fn legality<T: Scalar>(
    explication: &Explication,
    lexicon: &PrimeLexicon,
    alpha: T,
) -> LegalityReport<T> {
    let tokens = lexicon::tokenize(&explication.lines.join(" "));
    let mut prime_count = 0;
    let mut molecule_count = 0;
    let mut stopword_count = 0;
    for class in lexicon.classify(&tokens) {
        match class {
            TokenClass::Prime { span, .. } => prime_count += span,
            TokenClass::Stopword => stopword_count += 1,
            TokenClass::Molecule => molecule_count += 1,
        }
    }
    let total_words = tokens.len();
    debug_assert_eq!(prime_count + molecule_count + stopword_count, total_words);

    LegalityReport {
        prime_count,
        molecule_count,
        stopword_count,
        total_words,
        circular: total_words > 0 && detect_circularity(explication, lexicon),
        legality_score: legality_score(alpha, prime_count, molecule_count, total_words),
        primes_ratio: percentage(prime_count, total_words),
        molecules_ratio: percentage(molecule_count, total_words),
    }
}

/// True if any explication token is a form of the target word.
///
/// A form is the word itself, a regular inflection (see [`word_forms`]), or
/// anything sharing its [`stem`]. Multiword targets are checked one content
/// word at a time: stopwords and prime forms inside the target are skipped
/// unless nothing else remains.
pub fn detect_circularity(explication: &Explication, lexicon: &PrimeLexicon) -> bool {
    let target_words = lexicon::words(&explication.target_word);
    let content: Vec<&String> = target_words
        .iter()
        .filter(|w| !lexicon.is_stopword(w) && lexicon.prime_for_form(w).is_none())
        .collect();
    let checked: Vec<&String> = if content.is_empty() || target_words.len() == 1 {
        target_words.iter().collect()
    } else {
        content
    };
    if checked.is_empty() {
        return false;
    }

    let families: Vec<(BTreeSet<String>, String)> = checked
        .iter()
        .map(|w| (word_forms(w), stem(w)))
        .collect();
    let tokens = lexicon::tokenize(&explication.lines.join(" "));
    tokens.iter().any(|tok| {
        let base = strip_possessive(&tok.normalized);
        families
            .iter()
            .any(|(forms, target_stem)| is_form_of(base, forms, target_stem))
    })
}

fn is_form_of(token: &str, forms: &BTreeSet<String>, target_stem: &str) -> bool {
    forms.contains(token) || stem(token) == target_stem
}

/// True if `token` is the word `word`, one of its regular inflections, or
/// shares its stem.
pub fn is_word_form(token: &str, word: &str) -> bool {
    let token = strip_possessive(token);
    is_form_of(token, &word_forms(word), &stem(word))
}

fn strip_possessive(word: &str) -> &str {
    word.strip_suffix("'s").unwrap_or(word)
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u')
}

fn is_consonant(c: char) -> bool {
    c.is_ascii_alphabetic() && !is_vowel(c)
}

/// Regular inflectional family of a lowercase word: plural/3sg `-s`/`-es`,
/// past `-ed`/`-d`, progressive `-ing`, with y→i, e-drop, and final
/// consonant doubling.
pub fn word_forms(word: &str) -> BTreeSet<String> {
    let w = word.to_lowercase();
    let mut forms = BTreeSet::new();
    forms.insert(w.clone());
    let chars: Vec<char> = w.chars().collect();
    let n = chars.len();
    if n == 0 {
        return forms;
    }
    let last = chars[n - 1];

    // -s / -es
    if w.ends_with('s')
        || w.ends_with('x')
        || w.ends_with('z')
        || w.ends_with("ch")
        || w.ends_with("sh")
        || (last == 'o' && n > 1 && is_consonant(chars[n - 2]))
    {
        forms.insert(format!("{w}es"));
    } else if last == 'y' && n > 1 && is_consonant(chars[n - 2]) {
        let root: String = chars[..n - 1].iter().collect();
        forms.insert(format!("{root}ies"));
    } else {
        forms.insert(format!("{w}s"));
    }

    // -ed / -d / -ing
    if last == 'e' {
        let root: String = chars[..n - 1].iter().collect();
        forms.insert(format!("{w}d"));
        if w.ends_with("ee") || w.ends_with("ye") || w.ends_with("oe") {
            forms.insert(format!("{w}ing"));
        } else if w.ends_with("ie") {
            let r: String = chars[..n - 2].iter().collect();
            forms.insert(format!("{r}ying"));
        } else {
            forms.insert(format!("{root}ing"));
        }
    } else if last == 'y' && n > 1 && is_consonant(chars[n - 2]) {
        let root: String = chars[..n - 1].iter().collect();
        forms.insert(format!("{root}ied"));
        forms.insert(format!("{w}ing"));
    } else {
        forms.insert(format!("{w}ed"));
        forms.insert(format!("{w}ing"));
        // consonant-vowel-consonant ending doubles the final consonant
        if n >= 3
            && is_consonant(last)
            && !matches!(last, 'w' | 'x' | 'y')
            && is_vowel(chars[n - 2])
            && is_consonant(chars[n - 3])
        {
            forms.insert(format!("{w}{last}ed"));
            forms.insert(format!("{w}{last}ing"));
        }
    }
    forms
}

const MIN_STEM: usize = 3;

/// Conservative suffix-stripping stemmer. Strips one of `-ies`, `-ied`,
/// `-ing`, `-ed`, `-es`, `-s` when at least three characters remain, then
/// undoubles a final double consonant and drops a final `e`.
pub fn stem(word: &str) -> String {
    let w = word.to_lowercase();
    let mut base = w.clone();
    for (suffix, replacement) in [
        ("ies", "y"),
        ("ied", "y"),
        ("ing", ""),
        ("ed", ""),
        ("es", ""),
        ("s", ""),
    ] {
        let Some(root) = w.strip_suffix(suffix) else {
            continue;
        };
        let candidate = format!("{root}{replacement}");
        if candidate.chars().count() < MIN_STEM {
            break;
        }
        if suffix == "s" && root.ends_with('s') {
            continue;
        }
        base = candidate;
        break;
    }
    let chars: Vec<char> = base.chars().collect();
    let n = chars.len();
    if n > MIN_STEM && chars[n - 1] == chars[n - 2] && is_consonant(chars[n - 1]) && !matches!(chars[n - 1], 'l' | 's' | 'z') {
        return chars[..n - 1].iter().collect();
    }
    if n > MIN_STEM && chars[n - 1] == 'e' {
        return chars[..n - 1].iter().collect();
    }
    base
}
