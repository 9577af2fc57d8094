//! Substitutability test: how much an explication helps a grader model
//! recover a masked word, how much it degrades when truncated, and how much
//! the prediction depends on passage context once the explication is given.
//!
//! For a grader `g` and passage `p` the cell composite is
//! `min(beta, delta_baseline - delta_min + delta_ent)` and the score is the
//! mean composite over all cells.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::BackendError;
use crate::legality::Explication;
use crate::num::{self, Scalar};

pub const MASK_TOKEN: &str = "<UNK>";
pub const DEFAULT_K: usize = 2;
pub const DEFAULT_BETA: f64 = 40.0;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PassageError {
    #[error("passage has no sentences")]
    Empty,
    #[error("passage target word is empty")]
    EmptyTarget,
    #[error("passage must contain exactly one {MASK_TOKEN} in exactly one sentence, found {0}")]
    MaskCount(usize),
    #[error("passage has {sentences} sentences but truncation depth {k} needs at least {}", k + 1)]
    TooShort { sentences: usize, k: usize },
}

/// A multi-sentence passage with the target word replaced by `<UNK>` in
/// exactly one sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPassage")]
pub struct MaskedPassage {
    sentences: Vec<String>,
    #[serde(skip_serializing)]
    mask_sentence_index: usize,
    target_word: String,
}

#[derive(Deserialize)]
struct RawPassage {
    sentences: Vec<String>,
    target_word: String,
}

impl TryFrom<RawPassage> for MaskedPassage {
    type Error = PassageError;

    fn try_from(raw: RawPassage) -> Result<Self, Self::Error> {
        MaskedPassage::new(raw.sentences, raw.target_word)
    }
}

impl MaskedPassage {
    pub fn new<S: Into<String>>(
        sentences: impl IntoIterator<Item = S>,
        target_word: impl Into<String>,
    ) -> Result<Self, PassageError> {
        let target_word = target_word.into().trim().to_string();
        if target_word.is_empty() {
            return Err(PassageError::EmptyTarget);
        }
        let sentences: Vec<String> = sentences
            .into_iter()
            .map(|s| s.into().trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        if sentences.is_empty() {
            return Err(PassageError::Empty);
        }
        let total: usize = sentences.iter().map(|s| s.matches(MASK_TOKEN).count()).sum();
        if total != 1 {
            return Err(PassageError::MaskCount(total));
        }
        let mask_sentence_index = sentences
            .iter()
            .position(|s| s.contains(MASK_TOKEN))
            .expect("one mask present");
        Ok(Self {
            sentences,
            mask_sentence_index,
            target_word,
        })
    }

    /// Splits a paragraph into sentences at `.`, `!`, or `?` followed by
    /// whitespace, and at line breaks.
    pub fn from_text(text: &str, target_word: impl Into<String>) -> Result<Self, PassageError> {
        Self::new(split_sentences(text), target_word)
    }

    pub fn sentences(&self) -> &[String] {
        &self.sentences
    }

    pub fn mask_sentence_index(&self) -> usize {
        self.mask_sentence_index
    }

    pub fn target_word(&self) -> &str {
        &self.target_word
    }

    /// Sentences other than the masked one.
    pub fn context_len(&self) -> usize {
        self.sentences.len() - 1
    }

    /// Checks that `k` context sentences can be removed.
    pub fn check_depth(&self, k: usize) -> Result<(), PassageError> {
        if self.sentences.len() < k + 1 {
            Err(PassageError::TooShort {
                sentences: self.sentences.len(),
                k,
            })
        } else {
            Ok(())
        }
    }

    /// The passage with its last `removed` non-mask sentences dropped. The
    /// masked sentence is never removed.
    pub fn truncated(&self, removed: usize) -> Vec<String> {
        let mut to_drop = removed.min(self.context_len());
        let mut keep = vec![true; self.sentences.len()];
        for i in (0..self.sentences.len()).rev() {
            if to_drop == 0 {
                break;
            }
            if i != self.mask_sentence_index {
                keep[i] = false;
                to_drop -= 1;
            }
        }
        self.sentences
            .iter()
            .zip(keep)
            .filter(|&(_, keep)| keep).map(|(s, _)| s.clone())
            .collect()
    }
}

pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in text.lines() {
        let mut current = String::new();
        let mut chars = line.chars().peekable();
        while let Some(c) = chars.next() {
            current.push(c);
            if matches!(c, '.' | '!' | '?') && chars.peek().is_some_and(|n| n.is_whitespace()) {
                let s = current.trim();
                if !s.is_empty() {
                    out.push(s.to_string());
                }
                current.clear();
            }
        }
        let s = current.trim();
        if !s.is_empty() {
            out.push(s.to_string());
        }
    }
    out
}

/// One log-probability query: the (possibly truncated) passage and the
/// (possibly truncated, possibly absent) explication.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScoringRequest {
    pub target_word: String,
    pub passage: Vec<String>,
    pub explication: Option<Vec<String>>,
}

/// Prompt shown to a grader. The target word is appended after
/// `answer_cue` by the backend and its tokens are scored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub version: String,
    pub header: String,
    pub meaning_cue: String,
    pub answer_cue: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            version: "nsm-substitutability/1".into(),
            header: "Read the passage below. One word has been replaced with <UNK>.".into(),
            meaning_cue: "Here, <UNK> means:".into(),
            answer_cue: "The word <UNK> stands for:".into(),
        }
    }
}

impl PromptTemplate {
    pub fn render(&self, request: &ScoringRequest) -> String {
        let mut out = String::new();
        out.push_str(&self.header);
        out.push_str("\n\n");
        out.push_str(&request.passage.join(" "));
        out.push_str("\n\n");
        if let Some(lines) = &request.explication {
            out.push_str(&self.meaning_cue);
            out.push('\n');
            for line in lines {
                out.push_str(line);
                out.push('\n');
            }
            out.push('\n');
        }
        out.push_str(&self.answer_cue);
        out
    }
}

/// A grader: returns the natural-log probability of `request.target_word`
/// as the model's prediction for the mask.
pub trait WordScorer<T: Scalar = f64>: Send + Sync {
    fn id(&self) -> &str;

    fn log_prob(&self, request: &ScoringRequest) -> Result<T, BackendError>;

    /// Scorers that cannot take concurrent calls return false and the
    /// engine evaluates their cells serially.
    fn supports_concurrency(&self) -> bool {
        true
    }
}

impl<T: Scalar, S: WordScorer<T> + ?Sized> WordScorer<T> for Box<S> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn log_prob(&self, request: &ScoringRequest) -> Result<T, BackendError> {
        (**self).log_prob(request)
    }
    fn supports_concurrency(&self) -> bool {
        (**self).supports_concurrency()
    }
}

impl<T: Scalar, S: WordScorer<T> + ?Sized> WordScorer<T> for std::sync::Arc<S> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn log_prob(&self, request: &ScoringRequest) -> Result<T, BackendError> {
        (**self).log_prob(request)
    }
    fn supports_concurrency(&self) -> bool {
        (**self).supports_concurrency()
    }
}

#[derive(Debug, Error)]
pub enum SubstitutabilityError {
    #[error("no grader backends configured")]
    NoScorers,
    #[error("no masked passages supplied")]
    NoPassages,
    #[error("truncation depth k must be at least 1")]
    ZeroDepth,
    #[error("passage {index}: {source}")]
    Passage {
        index: usize,
        #[source]
        source: PassageError,
    },
    #[error("grader {grader}: {source}")]
    Backend {
        grader: String,
        #[source]
        source: BackendError,
    },
    #[error(
        "grader {grader}, passage {passage}: {source} ({completed} of {total} cells had completed; no partial score reported)"
    )]
    Aborted {
        grader: String,
        passage: usize,
        completed: usize,
        total: usize,
        #[source]
        source: BackendError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubstitutabilityConfig<T = f64> {
    pub k: usize,
    pub beta: T,
}

impl<T: Scalar> Default for SubstitutabilityConfig<T> {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            beta: T::from_real(DEFAULT_BETA),
        }
    }
}

/// Memoizes log-probabilities within one (grader, passage) cell, keyed by
/// (context sentences removed, explication lines kept).
struct Probe<'a, T: Scalar, S: WordScorer<T> + ?Sized> {
    scorer: &'a S,
    passage: &'a MaskedPassage,
    explication: &'a Explication,
    memo: HashMap<(usize, Option<usize>), T>,
}

impl<'a, T: Scalar, S: WordScorer<T> + ?Sized> Probe<'a, T, S> {
    fn new(scorer: &'a S, passage: &'a MaskedPassage, explication: &'a Explication) -> Self {
        Self {
            scorer,
            passage,
            explication,
            memo: HashMap::new(),
        }
    }

    fn log_prob(&mut self, removed: usize, lines: Option<usize>) -> Result<T, SubstitutabilityError> {
        if let Some(&v) = self.memo.get(&(removed, lines)) {
            return Ok(v);
        }
        let request = ScoringRequest {
            target_word: self.passage.target_word.clone(),
            passage: self.passage.truncated(removed),
            explication: lines.map(|n| self.explication.head(n).to_vec()),
        };
        let v = self
            .scorer
            .log_prob(&request)
            .map_err(|source| SubstitutabilityError::Backend {
                grader: self.scorer.id().to_string(),
                source,
            })?;
        self.memo.insert((removed, lines), v);
        Ok(v)
    }

    fn baseline(&mut self) -> Result<T, SubstitutabilityError> {
        let full = self.explication.lines().len();
        Ok(self.log_prob(0, Some(full))? - self.log_prob(0, None)?)
    }

    fn minimality(&mut self, k: usize) -> Result<T, SubstitutabilityError> {
        let lines = self.explication.lines().len();
        // Never remove the last remaining line.
        let removals = k.min(lines.saturating_sub(1));
        if removals == 0 {
            return Ok(T::zero());
        }
        let mut total = T::zero();
        for i in 1..=removals {
            total = total + (self.log_prob(0, Some(lines - i))? - self.log_prob(0, Some(lines - i + 1))?);
        }
        Ok(total / T::from_count(removals))
    }

    fn entailment(&mut self, k: usize) -> Result<T, SubstitutabilityError> {
        if k == 0 {
            return Ok(T::zero());
        }
        let full = self.explication.lines().len();
        let mut total = T::zero();
        for j in 1..=k {
            total = total + (self.log_prob(j, Some(full))? - self.log_prob(j - 1, Some(full))?);
        }
        Ok(total / T::from_count(k))
    }
}

/// `log p(w | x, e) - log p(w | x)`.
pub fn delta_baseline<T: Scalar, S: WordScorer<T> + ?Sized>(
    scorer: &S,
    passage: &MaskedPassage,
    explication: &Explication,
) -> Result<T, SubstitutabilityError> {
    Probe::new(scorer, passage, explication).baseline()
}

/// Mean change in log-probability as explication lines are removed one at a
/// time from the end. At most `lines - 1` removals are made and the mean is
/// taken over the removals actually performed; a one-line explication
/// yields zero.
pub fn delta_min<T: Scalar, S: WordScorer<T> + ?Sized>(
    scorer: &S,
    passage: &MaskedPassage,
    explication: &Explication,
    k: usize,
) -> Result<T, SubstitutabilityError> {
    Probe::new(scorer, passage, explication).minimality(k)
}

/// Mean change in log-probability (explication present) as non-mask
/// passage sentences are removed one at a time from the end.
pub fn delta_ent<T: Scalar, S: WordScorer<T> + ?Sized>(
    scorer: &S,
    passage: &MaskedPassage,
    explication: &Explication,
    k: usize,
) -> Result<T, SubstitutabilityError> {
    passage
        .check_depth(k)
        .map_err(|source| SubstitutabilityError::Passage { index: 0, source })?;
    Probe::new(scorer, passage, explication).entailment(k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellScores<T = f64> {
    pub grader: usize,
    pub passage: usize,
    pub delta_baseline: T,
    pub delta_min: T,
    pub delta_ent: T,
    /// `delta_baseline - delta_min + delta_ent` before capping.
    pub uncapped: T,
    /// `min(beta, uncapped)`.
    pub composite: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstitutabilityReport<T = f64> {
    pub graders: Vec<String>,
    pub passages: usize,
    /// Grader-major: cell `(g, p)` sits at `g * passages + p`.
    pub cells: Vec<CellScores<T>>,
    pub score: T,
    pub k: usize,
    pub beta: T,
}

impl<T: Scalar> SubstitutabilityReport<T> {
    pub fn cell(&self, grader: usize, passage: usize) -> &CellScores<T> {
        &self.cells[grader * self.passages + passage]
    }

    /// Per-grader mean composite, in grader order.
    pub fn grader_means(&self) -> Vec<T> {
        self.cells
            .chunks(self.passages)
            .map(|row| {
                let values: Vec<T> = row.iter().map(|c| c.composite).collect();
                num::sorted_mean(&values).expect("non-empty row")
            })
            .collect()
    }

    /// Mean of per-grader means. Equal to `score` (up to rounding) because
    /// every grader sees the same passages.
    pub fn mean_of_grader_means(&self) -> T {
        num::sorted_mean(&self.grader_means()).expect("at least one grader")
    }
}

/// Scores one (grader, passage) cell.
pub fn evaluate_cell<T: Scalar, S: WordScorer<T> + ?Sized>(
    scorer: &S,
    passage: &MaskedPassage,
    explication: &Explication,
    config: &SubstitutabilityConfig<T>,
) -> Result<(T, T, T), SubstitutabilityError> {
    let mut probe = Probe::new(scorer, passage, explication);
    let baseline = probe.baseline()?;
    let min = probe.minimality(config.k)?;
    let ent = probe.entailment(config.k)?;
    Ok((baseline, min, ent))
}

/// Runs every (grader, passage) cell and averages the capped composites.
///
/// Cells run in parallel when all scorers allow it. Any backend failure
/// aborts the whole evaluation.
pub fn substitutability<T: Scalar, S: WordScorer<T>>(
    scorers: &[S],
    passages: &[MaskedPassage],
    explication: &Explication,
    config: &SubstitutabilityConfig<T>,
) -> Result<SubstitutabilityReport<T>, SubstitutabilityError> {
    if scorers.is_empty() {
        return Err(SubstitutabilityError::NoScorers);
    }
    if passages.is_empty() {
        return Err(SubstitutabilityError::NoPassages);
    }
    if config.k == 0 {
        return Err(SubstitutabilityError::ZeroDepth);
    }
    for (index, p) in passages.iter().enumerate() {
        p.check_depth(config.k)
            .map_err(|source| SubstitutabilityError::Passage { index, source })?;
    }

    let cells: Vec<(usize, usize)> = (0..scorers.len())
        .flat_map(|g| (0..passages.len()).map(move |p| (g, p)))
        .collect();
    let run = |&(g, p): &(usize, usize)| evaluate_cell(&scorers[g], &passages[p], explication, config);
    let results: Vec<Result<(T, T, T), SubstitutabilityError>> =
        if scorers.iter().all(|s| s.supports_concurrency()) {
            cells.par_iter().map(run).collect()
        } else {
            cells.iter().map(run).collect()
        };

    let total = cells.len();
    let completed = results.iter().filter(|r| r.is_ok()).count();
    let mut out = Vec::with_capacity(total);
    for (&(g, p), result) in cells.iter().zip(results) {
        let (delta_baseline, delta_min, delta_ent) = match result {
            Ok(v) => v,
            Err(SubstitutabilityError::Backend { grader, source }) => {
                return Err(SubstitutabilityError::Aborted {
                    grader,
                    passage: p,
                    completed,
                    total,
                    source,
                })
            }
            Err(e) => return Err(e),
        };
        let uncapped = delta_baseline - delta_min + delta_ent;
        out.push(CellScores {
            grader: g,
            passage: p,
            delta_baseline,
            delta_min,
            delta_ent,
            uncapped,
            composite: num::min(config.beta, uncapped),
        });
    }

    let composites: Vec<T> = out.iter().map(|c| c.composite).collect();
    let score = num::sorted_mean(&composites).expect("non-empty cells");
    Ok(SubstitutabilityReport {
        graders: scorers.iter().map(|s| s.id().to_string()).collect(),
        passages: passages.len(),
        cells: out,
        score,
        k: config.k,
        beta: config.beta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::Rational;

    /// Log-probs keyed by (context sentences kept, explication lines kept).
    struct Table {
        id: String,
        values: HashMap<(usize, Option<usize>), f64>,
    }

    impl Table {
        fn new(entries: &[((usize, Option<usize>), f64)]) -> Self {
            Self {
                id: "table".into(),
                values: entries.iter().copied().collect(),
            }
        }
    }

    impl WordScorer<f64> for Table {
        fn id(&self) -> &str {
            &self.id
        }
        fn log_prob(&self, r: &ScoringRequest) -> Result<f64, BackendError> {
            let key = (r.passage.len(), r.explication.as_ref().map(Vec::len));
            self.values
                .get(&key)
                .copied()
                .ok_or_else(|| BackendError::Other(format!("no value for {key:?}")))
        }
    }

    struct Failing;
    impl WordScorer<f64> for Failing {
        fn id(&self) -> &str {
            "broken"
        }
        fn log_prob(&self, _: &ScoringRequest) -> Result<f64, BackendError> {
            Err(BackendError::Other("boom".into()))
        }
    }

    fn passage(n: usize, mask_at: usize) -> MaskedPassage {
        let sentences = (0..n).map(|i| {
            if i == mask_at {
                "The <UNK> was there.".to_string()
            } else {
                format!("Sentence {i}.")
            }
        });
        MaskedPassage::new(sentences, "cat").unwrap()
    }

    fn expl(lines: usize) -> Explication {
        Explication::new("cat", (0..lines).map(|i| format!("line {i}"))).unwrap()
    }

    #[test]
    fn passage_validation() {
        assert_eq!(
            MaskedPassage::new(["no mask here."], "x").unwrap_err(),
            PassageError::MaskCount(0)
        );
        assert_eq!(
            MaskedPassage::new(["<UNK> and <UNK>."], "x").unwrap_err(),
            PassageError::MaskCount(2)
        );
        assert_eq!(
            MaskedPassage::new(["<UNK>.", "<UNK>."], "x").unwrap_err(),
            PassageError::MaskCount(2)
        );
        let p = MaskedPassage::from_text("A b. The <UNK> sat! Then? done", "cat").unwrap();
        assert_eq!(p.sentences().len(), 4);
        assert_eq!(p.mask_sentence_index(), 1);
        assert!(p.check_depth(3).is_ok());
        assert_eq!(
            p.check_depth(4),
            Err(PassageError::TooShort { sentences: 4, k: 4 })
        );
        let json = serde_json::to_string(&p).unwrap();
        assert!(!json.contains("mask_sentence_index"));
        assert_eq!(serde_json::from_str::<MaskedPassage>(&json).unwrap(), p);
    }

    #[test]
    fn truncation_skips_mask_sentence() {
        let p = passage(4, 3);
        assert_eq!(p.truncated(1), ["Sentence 0.", "Sentence 1.", "The <UNK> was there."]);
        assert_eq!(p.truncated(2), ["Sentence 0.", "The <UNK> was there."]);
        let p = passage(3, 1);
        assert_eq!(p.truncated(1), ["Sentence 0.", "The <UNK> was there."]);
        assert_eq!(p.truncated(5), ["The <UNK> was there."]);
    }

    #[test]
    fn baseline_examples() {
        let p = passage(3, 2);
        let e = expl(1);
        let t = Table::new(&[((3, Some(1)), -1.0), ((3, None), -4.0)]);
        assert_eq!(delta_baseline(&t, &p, &e).unwrap(), 3.0);
        let t = Table::new(&[((3, Some(1)), -2.0), ((3, None), -2.0)]);
        assert_eq!(delta_baseline(&t, &p, &e).unwrap(), 0.0);
        let t = Table::new(&[((3, Some(1)), -6.0), ((3, None), -2.0)]);
        assert_eq!(delta_baseline(&t, &p, &e).unwrap(), -4.0);
    }

    #[test]
    fn minimality_examples() {
        let p = passage(3, 2);
        let t = Table::new(&[((3, Some(3)), -1.0), ((3, Some(2)), -3.0), ((3, Some(1)), -6.0)]);
        assert_eq!(delta_min(&t, &p, &expl(3), 2).unwrap(), -2.5);
        // one line: nothing to remove, no backend calls
        assert_eq!(delta_min(&Failing, &p, &expl(1), 2).unwrap(), 0.0);
        let t = Table::new(&[((3, Some(3)), -2.0), ((3, Some(2)), -2.0), ((3, Some(1)), -2.0)]);
        assert_eq!(delta_min(&t, &p, &expl(3), 2).unwrap(), 0.0);
        // two lines with k = 2: a single removal, divided by one
        let t = Table::new(&[((3, Some(2)), -1.0), ((3, Some(1)), -4.0)]);
        assert_eq!(delta_min(&t, &p, &expl(2), 2).unwrap(), -3.0);
    }

    #[test]
    fn entailment_examples() {
        let p = passage(3, 0);
        let e = expl(2);
        let t = Table::new(&[((3, Some(2)), -2.0), ((2, Some(2)), -2.0), ((1, Some(2)), -2.0)]);
        assert_eq!(delta_ent(&t, &p, &e, 2).unwrap(), 0.0);
        let t = Table::new(&[((3, Some(2)), -2.0), ((2, Some(2)), -5.0), ((1, Some(2)), -9.0)]);
        assert_eq!(delta_ent(&t, &p, &e, 2).unwrap(), -3.5);
        let t = Table::new(&[((3, Some(2)), -2.0), ((2, Some(2)), -3.0)]);
        assert_eq!(delta_ent(&t, &p, &e, 1).unwrap(), -1.0);
        assert!(matches!(
            delta_ent(&t, &p, &e, 3),
            Err(SubstitutabilityError::Passage { .. })
        ));
    }

    struct Fixed {
        id: String,
        baseline_gain: f64,
    }

    impl WordScorer<f64> for Fixed {
        fn id(&self) -> &str {
            &self.id
        }
        fn log_prob(&self, r: &ScoringRequest) -> Result<f64, BackendError> {
            Ok(match r.explication {
                Some(_) => -10.0 + self.baseline_gain,
                None => -10.0,
            })
        }
    }

    #[test]
    fn composite_and_cap() {
        // deltas (3.0, -2.5, 0.5) -> 6.0
        let p = passage(3, 2);
        let t = Table::new(&[
            ((3, None), -4.0),
            ((3, Some(3)), -1.0),
            ((3, Some(2)), -3.0),
            ((3, Some(1)), -6.0),
            ((2, Some(3)), -0.5),
            ((1, Some(3)), 0.0),
        ]);
        let r = substitutability(&[t], std::slice::from_ref(&p), &expl(3), &SubstitutabilityConfig::default()).unwrap();
        let c = r.cell(0, 0);
        assert_eq!((c.delta_baseline, c.delta_min, c.delta_ent), (3.0, -2.5, 0.5));
        assert_eq!(r.score, 6.0);

        let big = Fixed { id: "g".into(), baseline_gain: 55.0 };
        let r = substitutability(&[big], &[p], &expl(1), &SubstitutabilityConfig::default()).unwrap();
        assert_eq!(r.cell(0, 0).uncapped, 55.0);
        assert_eq!(r.score, 40.0);
    }

    #[test]
    fn grader_means_average() {
        let scorers = vec![
            Fixed { id: "a".into(), baseline_gain: 4.0 },
            Fixed { id: "b".into(), baseline_gain: 8.0 },
        ];
        let passages = vec![passage(3, 0), passage(4, 1)];
        let r = substitutability(&scorers, &passages, &expl(1), &SubstitutabilityConfig::default()).unwrap();
        assert_eq!(r.grader_means(), [4.0, 8.0]);
        assert_eq!(r.score, 6.0);
        assert_eq!(r.mean_of_grader_means(), r.score);
        assert_eq!(r.graders, ["a", "b"]);
    }

    #[test]
    fn exact_scalar_engine() {
        struct Exact;
        impl WordScorer<Rational> for Exact {
            fn id(&self) -> &str {
                "exact"
            }
            fn log_prob(&self, r: &ScoringRequest) -> Result<Rational, BackendError> {
                let lines = r.explication.as_ref().map_or(0, Vec::len) as i64;
                Ok(Rational::new(-(10 - lines) - r.passage.len() as i64, 3))
            }
        }
        let config = SubstitutabilityConfig {
            k: 2,
            beta: Rational::from_integer(40),
        };
        let r = substitutability(&[Exact], &[passage(4, 0)], &expl(3), &config).unwrap();
        // baseline +1, min -1/3, ent +1/3 -> 5/3
        assert_eq!(r.score, Rational::new(5, 3));
    }

    #[test]
    fn backend_failure_aborts() {
        let scorers: Vec<Box<dyn WordScorer<f64>>> = vec![
            Box::new(Fixed { id: "ok".into(), baseline_gain: 1.0 }),
            Box::new(Failing),
        ];
        let err = substitutability(&scorers, &[passage(3, 0)], &expl(2), &SubstitutabilityConfig::default())
            .unwrap_err();
        match err {
            SubstitutabilityError::Aborted { grader, completed, total, .. } => {
                assert_eq!(grader, "broken");
                assert_eq!((completed, total), (1, 2));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn input_validation() {
        let none: Vec<Fixed> = Vec::new();
        let cfg = SubstitutabilityConfig::default();
        assert!(matches!(
            substitutability(&none, &[passage(3, 0)], &expl(1), &cfg),
            Err(SubstitutabilityError::NoScorers)
        ));
        let one = [Fixed { id: "a".into(), baseline_gain: 0.0 }];
        assert!(matches!(
            substitutability(&one, &[], &expl(1), &cfg),
            Err(SubstitutabilityError::NoPassages)
        ));
        assert!(matches!(
            substitutability(&one, &[passage(2, 0)], &expl(1), &cfg),
            Err(SubstitutabilityError::Passage { index: 0, .. })
        ));
        assert!(matches!(
            substitutability(&one, &[passage(3, 0)], &expl(1), &SubstitutabilityConfig { k: 0, beta: 40.0 }),
            Err(SubstitutabilityError::ZeroDepth)
        ));
    }

    #[test]
    fn prompt_rendering() {
        let t = PromptTemplate::default();
        let with = ScoringRequest {
            target_word: "cat".into(),
            passage: vec!["A.".into(), "The <UNK> sat.".into()],
            explication: Some(vec!["something".into(), "small".into()]),
        };
        let text = t.render(&with);
        assert!(text.contains("A. The <UNK> sat."));
        assert!(text.contains("Here, <UNK> means:\nsomething\nsmall\n"));
        assert!(text.ends_with("The word <UNK> stands for:"));
        let without = ScoringRequest { explication: None, ..with };
        assert!(!t.render(&without).contains("means:"));
    }
}
