//! Semantic-prime inventory, stopword list, tokenizer, and token
//! classification.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use thiserror::Error;

/// The bundled English inventory: 65 primes and a 179-word stopword list.
pub const DEFAULT_LEXICON: &str = include_str!("../data/english.lexicon");

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("cannot read lexicon file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("lexicon line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("lexicon line {line}: surface form {form:?} already belongs to {existing}")]
    DuplicateExponent {
        line: usize,
        form: String,
        existing: String,
    },
    #[error("lexicon contains no primes")]
    Empty,
}

/// One semantic prime and all the surface forms that realize it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrimeEntry {
    pub canonical: String,
    pub category: String,
    /// Each exponent is a word sequence; multiword exponents have several
    /// words.
    pub exponents: Vec<Vec<String>>,
    pub inflections: Vec<Vec<String>>,
}

impl PrimeEntry {
    /// All surface forms, exponents first.
    pub fn forms(&self) -> impl Iterator<Item = &Vec<String>> {
        self.exponents.iter().chain(self.inflections.iter())
    }
}

#[derive(Debug, Clone)]
pub struct PrimeLexicon {
    primes: Vec<PrimeEntry>,
    stopwords: BTreeSet<String>,
    /// Surface form (words joined by a single space) to prime index.
    forms: HashMap<String, usize>,
    longest_form: usize,
}

impl PrimeLexicon {
    /// Parses the line-oriented lexicon format.
    pub fn parse(text: &str) -> Result<Self, LexiconError> {
        #[derive(PartialEq)]
        enum Section {
            None,
            Primes,
            Stopwords,
        }

        let mut section = Section::None;
        let mut primes = Vec::new();
        let mut stopwords = BTreeSet::new();
        let mut forms: HashMap<String, usize> = HashMap::new();

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line {
                "[PRIMES]" => {
                    section = Section::Primes;
                    continue;
                }
                "[STOPWORDS]" => {
                    section = Section::Stopwords;
                    continue;
                }
                _ => {}
            }
            match section {
                Section::None => {
                    return Err(LexiconError::Malformed {
                        line: line_no,
                        message: "entry outside of a [PRIMES] or [STOPWORDS] section".into(),
                    })
                }
                Section::Stopwords => {
                    if line.contains(char::is_whitespace) || line != line.to_lowercase() {
                        return Err(LexiconError::Malformed {
                            line: line_no,
                            message: format!("stopword {line:?} must be one lowercase word"),
                        });
                    }
                    stopwords.insert(line.to_string());
                }
                Section::Primes => {
                    let entry = parse_prime_line(line, line_no)?;
                    let index = primes.len();
                    for form in entry.forms() {
                        let key = form.join(" ");
                        if let Some(&other) = forms.get(&key) {
                            let existing: &PrimeEntry = if other == index {
                                &entry
                            } else {
                                &primes[other]
                            };
                            return Err(LexiconError::DuplicateExponent {
                                line: line_no,
                                form: key,
                                existing: existing.canonical.clone(),
                            });
                        }
                        forms.insert(key, index);
                    }
                    primes.push(entry);
                }
            }
        }

        if primes.is_empty() {
            return Err(LexiconError::Empty);
        }
        // Primes win over stopwords.
        stopwords.retain(|w| !forms.contains_key(w));
        let longest_form = primes
            .iter()
            .flat_map(|p| p.forms())
            .map(Vec::len)
            .max()
            .unwrap_or(1);

        Ok(Self {
            primes,
            stopwords,
            forms,
            longest_form,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LexiconError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| LexiconError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// The bundled English lexicon.
    pub fn english() -> Self {
        Self::parse(DEFAULT_LEXICON).expect("bundled lexicon is valid")
    }

    pub fn primes(&self) -> &[PrimeEntry] {
        &self.primes
    }

    pub fn stopwords(&self) -> &BTreeSet<String> {
        &self.stopwords
    }

    pub fn is_stopword(&self, word: &str) -> bool {
        self.stopwords.contains(word)
    }

    /// Looks up a surface form given as space-separated lowercase words.
    pub fn prime_for_form(&self, form: &str) -> Option<&PrimeEntry> {
        self.forms.get(form).map(|&i| &self.primes[i])
    }

    /// True when `text` (any case, any internal spacing, `_` as in lexical
    /// database lemmas) is an exponent or inflection of some prime.
    pub fn is_prime_form(&self, text: &str) -> bool {
        let key = text
            .replace('_', " ")
            .split_whitespace()
            .map(str::to_lowercase)
            .collect::<Vec<_>>()
            .join(" ");
        self.forms.contains_key(&key)
    }

    /// Greedy longest-match classification, left to right.
    pub fn classify<'a>(&'a self, tokens: &[Token]) -> Vec<TokenClass<'a>> {
        let mut out = Vec::with_capacity(tokens.len());
        let mut pos = 0;
        let mut key = String::new();
        while pos < tokens.len() {
            let max_span = self.longest_form.min(tokens.len() - pos);
            let mut matched = None;
            for span in (1..=max_span).rev() {
                key.clear();
                for (i, tok) in tokens[pos..pos + span].iter().enumerate() {
                    if i > 0 {
                        key.push(' ');
                    }
                    key.push_str(&tok.normalized);
                }
                if let Some(&index) = self.forms.get(key.as_str()) {
                    matched = Some((index, span));
                    break;
                }
            }
            match matched {
                Some((index, span)) => {
                    out.push(TokenClass::Prime {
                        entry: &self.primes[index],
                        span,
                    });
                    pos += span;
                }
                None => {
                    if self.stopwords.contains(&tokens[pos].normalized) {
                        out.push(TokenClass::Stopword);
                    } else {
                        out.push(TokenClass::Molecule);
                    }
                    pos += 1;
                }
            }
        }
        out
    }
}

fn parse_prime_line(line: &str, line_no: usize) -> Result<PrimeEntry, LexiconError> {
    let malformed = |message: String| LexiconError::Malformed {
        line: line_no,
        message,
    };
    let fields: Vec<&str> = line.split('|').collect();
    if fields.len() != 4 {
        return Err(malformed(format!(
            "expected 4 '|'-separated fields, found {}",
            fields.len()
        )));
    }
    let canonical = fields[0].trim();
    let category = fields[1].trim();
    if canonical.is_empty() {
        return Err(malformed("empty canonical label".into()));
    }
    if canonical != canonical.to_uppercase() {
        return Err(malformed(format!("canonical label {canonical:?} must be uppercase")));
    }
    if category.is_empty() {
        return Err(malformed(format!("prime {canonical} has no category")));
    }
    let exponents = parse_forms(fields[2], line_no)?;
    if exponents.is_empty() {
        return Err(malformed(format!("prime {canonical} has no exponents")));
    }
    let inflections = parse_forms(fields[3], line_no)?;
    Ok(PrimeEntry {
        canonical: canonical.to_string(),
        category: category.to_string(),
        exponents,
        inflections,
    })
}

fn parse_forms(field: &str, line_no: usize) -> Result<Vec<Vec<String>>, LexiconError> {
    let mut out = Vec::new();
    for raw in field.split(',') {
        let form = raw.trim();
        if form.is_empty() {
            if field.trim().is_empty() {
                continue;
            }
            return Err(LexiconError::Malformed {
                line: line_no,
                message: format!("empty surface form in {field:?}"),
            });
        }
        if form != form.to_lowercase() {
            return Err(LexiconError::Malformed {
                line: line_no,
                message: format!("surface form {form:?} must be lowercase"),
            });
        }
        out.push(form.split_whitespace().map(str::to_string).collect());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub normalized: String,
    pub position: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenClass<'a> {
    /// A prime occurrence; `span` is the number of tokens it consumed.
    Prime { entry: &'a PrimeEntry, span: usize },
    Stopword,
    Molecule,
}

impl TokenClass<'_> {
    /// Number of input tokens covered by this class.
    pub fn span(&self) -> usize {
        match self {
            TokenClass::Prime { span, .. } => *span,
            _ => 1,
        }
    }
}

/// Removes every `[m]` molecule marker, case-insensitively.
fn strip_molecule_markers(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(i) = rest.find('[') {
        let tail = &rest[i..];
        if tail.len() >= 3 && tail[..3].eq_ignore_ascii_case("[m]") {
            out.push_str(&rest[..i]);
            out.push(' ');
            rest = &tail[3..];
        } else {
            out.push_str(&rest[..=i]);
            rest = &tail[1..];
        }
    }
    out.push_str(rest);
    out
}

/// Whitespace tokenizer: strips leading and trailing non-alphanumeric
/// characters, lowercases, keeps inner apostrophes, and drops `[m]` markers
/// and tokens that normalize to nothing.
pub fn tokenize(text: &str) -> Vec<Token> {
    let cleaned = strip_molecule_markers(text);
    let mut tokens = Vec::new();
    for surface in cleaned.split_whitespace() {
        let normalized = surface
            .trim_matches(|c: char| !c.is_alphanumeric())
            .to_lowercase();
        if normalized.is_empty() {
            continue;
        }
        tokens.push(Token {
            surface: surface.to_string(),
            normalized,
            position: tokens.len(),
        });
    }
    tokens
}

/// Normalized token strings only.
pub fn words(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(|t| t.normalized).collect()
}
