//! Cross-translatability: translate English text into another language and
//! back, then compare the back-translation with the original by sentence
//! BLEU and embedding cosine similarity.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::BackendError;
use crate::lexicon;
use crate::num::{self, RealScalar};

/// Alur, Kinyarwanda, Dzongkha, Dinka, Abkhaz.
pub const DEFAULT_LANGUAGES: [&str; 5] = ["alz", "rw", "dz", "din", "ab"];
pub const SOURCE_LANGUAGE: &str = "en";
pub const BLEU_VARIANT: &str = "sentence-bleu-4, add-one smoothing for n>=2, lexicon tokenizer";
const MAX_ORDER: usize = 4;

pub trait Translator: Send + Sync {
    fn id(&self) -> &str;
    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String, BackendError>;
}

pub trait Embedder: Send + Sync {
    fn id(&self) -> &str;
    /// Fixed-dimension vector for `text`.
    fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError>;
}

macro_rules! forward_pointer_impls {
    ($trait:ident { $($body:tt)* }) => {
        impl<B: $trait + ?Sized> $trait for Box<B> { $($body)* }
        impl<B: $trait + ?Sized> $trait for std::sync::Arc<B> { $($body)* }
    };
}

forward_pointer_impls!(Translator {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String, BackendError> {
        (**self).translate(text, source, target)
    }
});

forward_pointer_impls!(Embedder {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        (**self).embed(text)
    }
});

#[derive(Debug, Error)]
pub enum CrossError {
    #[error("cannot round-trip empty text")]
    EmptyText,
    #[error("no texts supplied")]
    NoTexts,
    #[error("no target languages supplied")]
    NoLanguages,
    #[error("round trip en->{lang}->en failed at the {stage} step: {source}")]
    Translation {
        lang: String,
        stage: &'static str,
        #[source]
        source: BackendError,
    },
    #[error("embedding failed: {0}")]
    Embedding(#[source] BackendError),
    #[error("embedding vectors have different dimensions ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("embedding of {0:?} has zero norm")]
    ZeroNorm(String),
}

/// Maps the alternate Dzongkha code `dn` to `dz`; other codes are
/// lowercased and returned unchanged.
pub fn canonical_language(code: &str) -> String {
    let code = code.trim().to_lowercase();
    if code == "dn" {
        "dz".into()
    } else {
        code
    }
}

/// Parses a comma-separated language list, canonicalizing codes and
/// dropping duplicates while keeping order.
pub fn parse_languages(list: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for code in list.split(',').map(canonical_language).filter(|c| !c.is_empty()) {
        if !out.contains(&code) {
            out.push(code);
        }
    }
    out
}

/// Returns `(forward, back)`.
pub fn round_trip<Tr: Translator + ?Sized>(
    translator: &Tr,
    text: &str,
    lang: &str,
) -> Result<(String, String), CrossError> {
    if text.trim().is_empty() {
        return Err(CrossError::EmptyText);
    }
    let lang = canonical_language(lang);
    let forward = translator
        .translate(text, SOURCE_LANGUAGE, &lang)
        .map_err(|source| CrossError::Translation {
            lang: lang.clone(),
            stage: "forward",
            source,
        })?;
    let back = translator
        .translate(&forward, &lang, SOURCE_LANGUAGE)
        .map_err(|source| CrossError::Translation {
            lang: lang.clone(),
            stage: "back",
            source,
        })?;
    Ok((forward, back))
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Sentence-level BLEU-4 on a 0–100 scale.
///
/// Unigram precision is unsmoothed, so a hypothesis sharing no word with
/// the reference scores 0. Precisions for n = 2..4 use add-one smoothing
/// on numerator and denominator. Brevity penalty `exp(1 - r/c)` applies
/// when the hypothesis is shorter than the reference.
pub fn bleu<T: RealScalar>(reference: &str, hypothesis: &str) -> T {
    let reference = lexicon::words(reference);
    let hypothesis = lexicon::words(hypothesis);
    bleu_tokens(&reference, &hypothesis)
}

pub fn bleu_tokens<T: RealScalar>(reference: &[String], hypothesis: &[String]) -> T {
    let c = hypothesis.len();
    let r = reference.len();
    if c == 0 {
        return T::zero();
    }
    let mut log_sum = T::zero();
    for n in 1..=MAX_ORDER {
        let hyp = ngram_counts(hypothesis, n);
        let refs = ngram_counts(reference, n);
        let matched: usize = hyp
            .iter()
            .map(|(gram, &count)| count.min(refs.get(gram).copied().unwrap_or(0)))
            .sum();
        let total = c.saturating_sub(n - 1);
        let (num, den) = if n == 1 {
            if matched == 0 {
                return T::zero();
            }
            (matched, total)
        } else {
            (matched + 1, total + 1)
        };
        log_sum = log_sum + (T::from_count(num) / T::from_count(den)).ln();
    }
    let geo = (log_sum / T::from_count(MAX_ORDER)).exp();
    let bp = if c < r {
        (T::one() - T::from_count(r) / T::from_count(c)).exp()
    } else {
        T::one()
    };
    let score = T::from_count(100) * bp * geo;
    num::min(T::from_count(100), num::max(T::zero(), score))
}

/// Cosine similarity of two vectors, `None` if either has zero norm.
pub fn cosine<T: RealScalar>(a: &[T], b: &[T]) -> Option<T> {
    let dot = a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y);
    let na = a.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt();
    let nb = b.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt();
    if na == T::zero() || nb == T::zero() {
        None
    } else {
        Some(dot / (na * nb))
    }
}

/// `100 * max(0, cosine(embed(a), embed(b)))`.
pub fn embedding_similarity<E: Embedder + ?Sized>(embedder: &E, a: &str, b: &str) -> Result<f64, CrossError> {
    let va = embedder.embed(a).map_err(CrossError::Embedding)?;
    let vb = if a == b { va.clone() } else { embedder.embed(b).map_err(CrossError::Embedding)? };
    similarity_of_vectors(&va, &vb).map_err(|e| match e {
        CrossError::ZeroNorm(_) => {
            let which = if va.iter().all(|&x| x == 0.0) { a } else { b };
            CrossError::ZeroNorm(which.to_string())
        }
        other => other,
    })
}

fn similarity_of_vectors(a: &[f64], b: &[f64]) -> Result<f64, CrossError> {
    if a.len() != b.len() {
        return Err(CrossError::DimensionMismatch(a.len(), b.len()));
    }
    let cos = cosine(a, b).ok_or_else(|| CrossError::ZeroNorm(String::new()))?;
    Ok((100.0 * cos.max(0.0)).min(100.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTripReport {
    pub language: String,
    pub original: String,
    pub forward: String,
    pub back: String,
    pub bleu: f64,
    pub embed_similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageSummary {
    pub language: String,
    pub count: usize,
    pub mean_bleu: f64,
    pub mean_similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedRoundTrip {
    pub text_index: usize,
    pub language: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossReport {
    pub bleu_variant: String,
    pub reports: Vec<RoundTripReport>,
    pub languages: Vec<LanguageSummary>,
    pub failed_count: usize,
    pub failures: Vec<FailedRoundTrip>,
}

pub fn evaluate_round_trip<Tr: Translator + ?Sized, E: Embedder + ?Sized>(
    translator: &Tr,
    embedder: &E,
    text: &str,
    lang: &str,
) -> Result<RoundTripReport, CrossError> {
    let (forward, back) = round_trip(translator, text, lang)?;
    Ok(RoundTripReport {
        language: canonical_language(lang),
        original: text.to_string(),
        bleu: bleu(text, &back),
        embed_similarity: embedding_similarity(embedder, text, &back)?,
        forward,
        back,
    })
}

/// One report per (text, language), text-major. Provider failures are
/// recorded and excluded from the per-language means.
pub fn cross_report<Tr: Translator + ?Sized, E: Embedder + ?Sized>(
    translator: &Tr,
    embedder: &E,
    texts: &[String],
    langs: &[String],
) -> Result<CrossReport, CrossError> {
    if texts.is_empty() {
        return Err(CrossError::NoTexts);
    }
    if langs.is_empty() {
        return Err(CrossError::NoLanguages);
    }
    if texts.iter().any(|t| t.trim().is_empty()) {
        return Err(CrossError::EmptyText);
    }
    let langs: Vec<String> = langs.iter().map(|l| canonical_language(l)).collect();
    let pairs: Vec<(usize, &String)> = (0..texts.len())
        .flat_map(|t| langs.iter().map(move |l| (t, l)))
        .collect();
    let outcomes: Vec<Result<RoundTripReport, CrossError>> = pairs
        .par_iter()
        .map(|&(t, lang)| evaluate_round_trip(translator, embedder, &texts[t], lang))
        .collect();

    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for (&(t, lang), outcome) in pairs.iter().zip(outcomes) {
        match outcome {
            Ok(r) => reports.push(r),
            Err(e) => failures.push(FailedRoundTrip {
                text_index: t,
                language: lang.clone(),
                reason: e.to_string(),
            }),
        }
    }
    let languages = langs
        .iter()
        .map(|lang| {
            let mine: Vec<&RoundTripReport> = reports.iter().filter(|r| &r.language == lang).collect();
            let bleus: Vec<f64> = mine.iter().map(|r| r.bleu).collect();
            let sims: Vec<f64> = mine.iter().map(|r| r.embed_similarity).collect();
            LanguageSummary {
                language: lang.clone(),
                count: mine.len(),
                mean_bleu: num::mean(&bleus).unwrap_or(0.0),
                mean_similarity: num::mean(&sims).unwrap_or(0.0),
            }
        })
        .collect();
    Ok(CrossReport {
        bleu_variant: BLEU_VARIANT.into(),
        reports,
        languages,
        failed_count: failures.len(),
        failures,
    })
}
