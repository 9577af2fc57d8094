//! Composite explication score `gamma * (substitutability + legality)`,
//! forced to zero for circular explications, and benchmark reports.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::legality::{self, Explication, LegalityReport};
use crate::lexicon::PrimeLexicon;
use crate::num::{self, Scalar};
use crate::substitutability::{
    self, MaskedPassage, PromptTemplate, SubstitutabilityConfig, SubstitutabilityError,
    SubstitutabilityReport, WordScorer,
};

pub const DEFAULT_GAMMA: f64 = 2.0;
pub const BENCH_SCHEMA: &str = "nsm-bench/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport<T = f64> {
    pub legality: LegalityReport<T>,
    pub substitutability: SubstitutabilityReport<T>,
    /// `gamma * (substitutability + legality)` with no floor or circularity
    /// override.
    pub raw_score: T,
    /// The reported score: zero if circular, otherwise `raw_score`
    /// floored at zero.
    pub explication_score: T,
    pub gamma: T,
    pub circular_zeroed: bool,
}

pub fn explication_score<T: Scalar>(
    legality: LegalityReport<T>,
    substitutability: SubstitutabilityReport<T>,
    gamma: T,
) -> ScoreReport<T> {
    let raw_score = gamma * (substitutability.score + legality.legality_score);
    let circular_zeroed = legality.circular;
    let explication_score = if circular_zeroed {
        T::zero()
    } else {
        num::max(T::zero(), raw_score)
    };
    ScoreReport {
        legality,
        substitutability,
        raw_score,
        explication_score,
        gamma,
        circular_zeroed,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoringConfig {
    pub alpha: f64,
    pub substitutability: SubstitutabilityConfig<f64>,
    pub gamma: f64,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            alpha: legality::DEFAULT_ALPHA,
            substitutability: SubstitutabilityConfig::default(),
            gamma: DEFAULT_GAMMA,
        }
    }
}

/// Legality, substitutability, and the composite for one explication.
pub fn score_explication<S: WordScorer<f64>>(
    explication: &Explication,
    passages: &[MaskedPassage],
    lexicon: &PrimeLexicon,
    scorers: &[S],
    config: &ScoringConfig,
) -> Result<ScoreReport<f64>, SubstitutabilityError> {
    let leg = legality::legality(explication, lexicon, config.alpha);
    let sub = substitutability::substitutability(scorers, passages, explication, &config.substitutability)?;
    Ok(explication_score(leg, sub, config.gamma))
}

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("benchmark has no entries")]
    NoEntries,
    #[error("benchmark entry {id}: {message}")]
    InvalidEntry { id: String, message: String },
}

/// One benchmark item: an explication and the masked passages it is
/// tested against.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkEntry {
    pub id: String,
    pub explication: Explication,
    pub passages: Vec<MaskedPassage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryResult {
    pub id: String,
    pub target_word: String,
    pub report: ScoreReport<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedEntry {
    pub id: String,
    pub reason: String,
}

/// A mean with its standard error over entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanWithError {
    pub mean: f64,
    pub std_error: f64,
}

impl MeanWithError {
    fn of(values: &[f64]) -> Self {
        Self {
            mean: num::mean(values).unwrap_or(0.0),
            std_error: num::standard_error(values),
        }
    }
}

/// The benchmark table columns, averaged over scored entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkAggregates {
    pub entries: usize,
    pub explication_score: MeanWithError,
    pub legality_score: MeanWithError,
    pub substitutability_score: MeanWithError,
    pub primes_ratio: MeanWithError,
    pub molecules_ratio: MeanWithError,
    pub circular_percent: f64,
}

impl BenchmarkAggregates {
    pub fn from_results(results: &[EntryResult]) -> Option<Self> {
        if results.is_empty() {
            return None;
        }
        let col = |f: fn(&ScoreReport<f64>) -> f64| -> Vec<f64> { results.iter().map(|r| f(&r.report)).collect() };
        let circular = results.iter().filter(|r| r.report.legality.circular).count();
        Some(Self {
            entries: results.len(),
            explication_score: MeanWithError::of(&col(|r| r.explication_score)),
            legality_score: MeanWithError::of(&col(|r| r.legality.legality_score)),
            substitutability_score: MeanWithError::of(&col(|r| r.substitutability.score)),
            primes_ratio: MeanWithError::of(&col(|r| r.legality.primes_ratio)),
            molecules_ratio: MeanWithError::of(&col(|r| r.legality.molecules_ratio)),
            circular_percent: 100.0 * circular as f64 / results.len() as f64,
        })
    }
}

/// Machine-readable benchmark report (`schema = "nsm-bench/1"`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub schema: String,
    /// Unix seconds; the only field that differs between identical runs.
    pub generated_at: u64,
    pub config: serde_json::Value,
    pub prompt_template: PromptTemplate,
    pub notes: Vec<String>,
    pub excluded_count: usize,
    pub excluded: Vec<ExcludedEntry>,
    pub aggregates: Option<BenchmarkAggregates>,
    pub entries: Vec<EntryResult>,
}

impl BenchmarkReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Aligned plain-text table: one aggregate row, then one row per entry.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let header = [
            "Entry",
            "Explication Score",
            "Legality Score",
            "Substitutability Score",
            "Primes Ratio",
            "Molecules Ratio",
            "Circular %",
        ];
        let mut rows: Vec<[String; 7]> = Vec::new();
        if let Some(a) = &self.aggregates {
            let fmt = |m: &MeanWithError| format!("{:.2} ± {:.2}", m.mean, m.std_error);
            rows.push([
                format!("MEAN (n={})", a.entries),
                fmt(&a.explication_score),
                fmt(&a.legality_score),
                fmt(&a.substitutability_score),
                fmt(&a.primes_ratio),
                fmt(&a.molecules_ratio),
                format!("{:.1}", a.circular_percent),
            ]);
        }
        for e in &self.entries {
            let r = &e.report;
            rows.push([
                e.id.clone(),
                format!("{:.2}", r.explication_score),
                format!("{:.2}", r.legality.legality_score),
                format!("{:.2}", r.substitutability.score),
                format!("{:.1}", r.legality.primes_ratio),
                format!("{:.1}", r.legality.molecules_ratio),
                if r.legality.circular { "yes".into() } else { "no".into() },
            ]);
        }
        let widths: Vec<usize> = (0..header.len())
            .map(|i| {
                rows.iter()
                    .map(|r| r[i].chars().count())
                    .chain(std::iter::once(header[i].len()))
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |cells: Vec<&str>, out: &mut String| {
            let padded: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}", w = *w))
                .collect();
            let _ = writeln!(out, "{}", padded.join(" | ").trim_end());
        };
        line(header.to_vec(), &mut out);
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        let _ = writeln!(out, "{}", rule.join("-|-"));
        for r in &rows {
            line(r.iter().map(String::as_str).collect(), &mut out);
        }
        if self.excluded_count > 0 {
            let _ = writeln!(out, "excluded entries: {}", self.excluded_count);
        }
        out
    }
}

pub const AGGREGATION_NOTE: &str = "aggregates are per-entry means; the aggregate explication score is the mean of per-entry scores, not gamma applied to the mean components";

/// Scores every entry. Entries whose backends fail are excluded and listed
/// in the report rather than aborting the run.
pub fn run_benchmark<S: WordScorer<f64>>(
    entries: &[BenchmarkEntry],
    lexicon: &PrimeLexicon,
    scorers: &[S],
    config: &ScoringConfig,
    template: &PromptTemplate,
    run_config: serde_json::Value,
    generated_at: u64,
) -> Result<BenchmarkReport, ScoringError> {
    if entries.is_empty() {
        return Err(ScoringError::NoEntries);
    }
    for e in entries {
        if e.passages.is_empty() {
            return Err(ScoringError::InvalidEntry {
                id: e.id.clone(),
                message: "no masked passages".into(),
            });
        }
    }

    let outcomes: Vec<Result<ScoreReport<f64>, SubstitutabilityError>> = entries
        .par_iter()
        .map(|e| score_explication(&e.explication, &e.passages, lexicon, scorers, config))
        .collect();

    let mut results = Vec::new();
    let mut excluded = Vec::new();
    for (entry, outcome) in entries.iter().zip(outcomes) {
        match outcome {
            Ok(report) => results.push(EntryResult {
                id: entry.id.clone(),
                target_word: entry.explication.target_word().to_string(),
                report,
            }),
            Err(SubstitutabilityError::Passage { index, source }) => {
                return Err(ScoringError::InvalidEntry {
                    id: entry.id.clone(),
                    message: format!("passage {index}: {source}"),
                })
            }
            Err(err) => {
                log::warn!("excluding entry {}: {err}", entry.id);
                excluded.push(ExcludedEntry {
                    id: entry.id.clone(),
                    reason: err.to_string(),
                });
            }
        }
    }

    Ok(BenchmarkReport {
        schema: BENCH_SCHEMA.into(),
        generated_at,
        config: run_config,
        prompt_template: template.clone(),
        notes: vec![AGGREGATION_NOTE.into()],
        excluded_count: excluded.len(),
        excluded,
        aggregates: BenchmarkAggregates::from_results(&results),
        entries: results,
    })
}
