//! Dataset construction: sense ingestion, example / passage / candidate
//! generation through a [`TextGenerator`], scoring, threshold filtering
//! with a per-sense cap, and contamination-free train/validation splits.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backends::BackendError;
use crate::legality::{self, Explication};
use crate::lexicon::{self, PrimeLexicon};
use crate::scoring::{self, BenchmarkEntry, ScoreReport, ScoringConfig};
use crate::substitutability::{MaskedPassage, SubstitutabilityError, WordScorer};

pub const MIN_USAGE_EXAMPLES: usize = 2;
pub const MAX_USAGE_EXAMPLES: usize = 5;
pub const DEFAULT_TEMPERATURE: f64 = 0.7;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Record {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: no readable records")]
    Unreadable { path: String },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("sense {sense_id}: {source}")]
    Scoring {
        sense_id: String,
        #[source]
        source: Box<SubstitutabilityError>,
    },
    #[error("entry for sense {0} has no score report")]
    Unscored(String),
    #[error("entry for sense {sense_id}: {message}")]
    InvalidEntry { sense_id: String, message: String },
    #[error("cannot hold out exactly {requested} of {total} entries without splitting a sense group; groups too large to fit: {offending:?}")]
    InfeasibleSplit {
        requested: usize,
        total: usize,
        offending: Vec<String>,
    },
}

/// One word sense from a lexical database.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordSense {
    pub sense_id: String,
    pub lemma: String,
    pub gloss: String,
    #[serde(default)]
    pub synonyms: Vec<String>,
    #[serde(default)]
    pub examples: Vec<String>,
}

impl WordSense {
    /// Lemma with `_` separators turned into spaces.
    pub fn surface(&self) -> String {
        self.lemma.replace('_', " ")
    }

    /// Normalized lemma plus synonyms, the words that identify this sense
    /// for contamination checks.
    pub fn word_set(&self) -> BTreeSet<String> {
        std::iter::once(&self.lemma)
            .chain(&self.synonyms)
            .map(|w| w.replace('_', " ").trim().to_lowercase())
            .filter(|w| !w.is_empty())
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub read: usize,
    pub malformed: usize,
    pub primes_dropped: usize,
    pub duplicates_dropped: usize,
}

/// Reads a sense corpus (one JSON object per line), dropping senses whose
/// lemma is a prime form and later records that repeat a `sense_id`.
/// Malformed lines are skipped and counted.
pub fn ingest_senses(path: impl AsRef<Path>, lexicon: &PrimeLexicon) -> Result<(Vec<WordSense>, IngestStats), DatasetError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut stats = IngestStats::default();
    let mut seen = BTreeSet::new();
    let mut senses = Vec::new();
    let mut any_line = false;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        any_line = true;
        let sense: WordSense = match serde_json::from_str(&line) {
            Ok(s) => s,
            Err(e) => {
                log::warn!("{}:{}: skipping malformed sense: {e}", path.display(), i + 1);
                stats.malformed += 1;
                continue;
            }
        };
        if sense.sense_id.trim().is_empty() || sense.lemma.trim().is_empty() {
            stats.malformed += 1;
            continue;
        }
        stats.read += 1;
        if lexicon.is_prime_form(&sense.lemma) {
            stats.primes_dropped += 1;
            continue;
        }
        if !seen.insert(sense.sense_id.clone()) {
            stats.duplicates_dropped += 1;
            continue;
        }
        senses.push(sense);
    }
    if any_line && stats.read == 0 {
        return Err(DatasetError::Unreadable {
            path: path.display().to_string(),
        });
    }
    if stats.malformed > 0 {
        log::warn!("{}: skipped {} malformed record(s)", path.display(), stats.malformed);
    }
    Ok((senses, stats))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationTask {
    Examples,
    Passages,
    Explications,
}

/// A generation call. `task`, `lemma`, and `attempt` let offline backends
/// and mock tables tell calls apart; HTTP backends send only the prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub task: GenerationTask,
    pub lemma: String,
    pub prompt: String,
    pub temperature: f64,
    pub count: usize,
    pub attempt: u32,
}

pub trait TextGenerator: Send + Sync {
    fn id(&self) -> &str;
    /// Returns exactly `request.count` completions.
    fn generate(&self, request: &GenerationRequest) -> Result<Vec<String>, BackendError>;
}

impl<G: TextGenerator + ?Sized> TextGenerator for Box<G> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn generate(&self, request: &GenerationRequest) -> Result<Vec<String>, BackendError> {
        (**self).generate(request)
    }
}

impl<G: TextGenerator + ?Sized> TextGenerator for std::sync::Arc<G> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn generate(&self, request: &GenerationRequest) -> Result<Vec<String>, BackendError> {
        (**self).generate(request)
    }
}

/// Versioned prompt templates. Placeholders: `{lemma}`, `{gloss}`, `{n}`,
/// `{examples}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSet {
    pub version: String,
    pub examples: String,
    pub passages: String,
    pub explications: String,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            version: "nsm-dataset-prompts/1".into(),
            examples: "Write one natural English sentence that uses the word \"{lemma}\" in this sense: {gloss}. \
The sentence must contain the word \"{lemma}\" or an inflected form of it."
                .into(),
            passages: "Write a short paragraph of four to six sentences in which the word \"{lemma}\" \
(meaning: {gloss}) has been replaced by the token <UNK> exactly once. The context should make \
the missing word hard to guess but not impossible. Do not use the word \"{lemma}\" anywhere else."
                .into(),
            explications: "Write a Natural Semantic Metalanguage explication for the word \"{lemma}\" \
in the sense \"{gloss}\". Use semantic primes wherever possible, avoid the word itself, and put each \
component on its own line.\nExamples of use:\n{examples}"
                .into(),
        }
    }
}

impl PromptSet {
    pub fn render(&self, task: GenerationTask, sense: &WordSense, examples: &[String], n: usize) -> String {
        let template = match task {
            GenerationTask::Examples => &self.examples,
            GenerationTask::Passages => &self.passages,
            GenerationTask::Explications => &self.explications,
        };
        let listed: Vec<String> = examples.iter().map(|e| format!("- {e}")).collect();
        template
            .replace("{lemma}", &sense.surface())
            .replace("{gloss}", &sense.gloss)
            .replace("{n}", &n.to_string())
            .replace("{examples}", &listed.join("\n"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationSettings {
    pub temperature: f64,
    /// Extra generation rounds allowed for replacing rejected outputs.
    pub retries: u32,
}

impl Default for GenerationSettings {
    fn default() -> Self {
        Self {
            temperature: DEFAULT_TEMPERATURE,
            retries: 3,
        }
    }
}

/// Strips bullets (`-`, `*`, `•`, `+`) and enumerators (`1.`, `2)`, `3:`)
/// from the start of a line.
pub fn strip_list_marker(line: &str) -> &str {
    let mut s = line.trim();
    if let Some(rest) = s.strip_prefix(['-', '*', '•', '+']) {
        s = rest.trim_start();
    } else {
        let digits = s.chars().take_while(|c| c.is_ascii_digit()).count();
        if digits > 0 {
            let rest = &s[digits..];
            if let Some(rest) = rest.strip_prefix(['.', ')', ':']) {
                s = rest.trim_start();
            }
        }
    }
    s.trim()
}

/// True if every word of the sense's lemma appears in the sentence, in
/// its base or a regular inflected form.
pub fn contains_lemma(sentence: &str, lemma: &str) -> bool {
    let tokens = lexicon::words(sentence);
    let lemma_words = lexicon::words(&lemma.replace('_', " "));
    !lemma_words.is_empty()
        && lemma_words
            .iter()
            .all(|lw| tokens.iter().any(|t| legality::is_word_form(t, lw)))
}

/// Runs up to `1 + retries` generation rounds, keeping outputs accepted by
/// `accept` until `n` are collected. Returns what was collected.
fn generate_validated<G, T>(
    generator: &G,
    task: GenerationTask,
    sense: &WordSense,
    prompt: &str,
    n: usize,
    settings: &GenerationSettings,
    mut accept: impl FnMut(&str) -> Vec<T>,
) -> Result<(Vec<T>, usize), BackendError>
where
    G: TextGenerator + ?Sized,
{
    let mut kept = Vec::with_capacity(n);
    let mut rejected = 0;
    for attempt in 0..=settings.retries {
        let missing = n - kept.len();
        if missing == 0 {
            break;
        }
        let request = GenerationRequest {
            task,
            lemma: sense.lemma.clone(),
            prompt: prompt.to_string(),
            temperature: settings.temperature,
            count: missing,
            attempt,
        };
        for completion in generator.generate(&request)? {
            let items = accept(&completion);
            if items.is_empty() {
                rejected += 1;
            }
            for item in items {
                if kept.len() < n {
                    kept.push(item);
                }
            }
        }
    }
    Ok((kept, rejected))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleBatch {
    pub sentences: Vec<String>,
    pub rejected: usize,
    /// Fewer than the requested number survived validation.
    pub partial: bool,
}

/// Generates `n` usage sentences for a sense. Sentences that do not contain
/// the lemma are rejected and regenerated within the retry budget.
pub fn generate_examples<G: TextGenerator + ?Sized>(
    generator: &G,
    sense: &WordSense,
    n: usize,
    prompts: &PromptSet,
    settings: &GenerationSettings,
) -> Result<ExampleBatch, BackendError> {
    assert!(n >= 1, "example count must be at least 1");
    let prompt = prompts.render(GenerationTask::Examples, sense, &[], n);
    let (sentences, rejected) = generate_validated(generator, GenerationTask::Examples, sense, &prompt, n, settings, |c| {
        c.lines()
            .map(strip_list_marker)
            .filter(|l| !l.is_empty() && contains_lemma(l, &sense.lemma))
            .map(str::to_string)
            .collect()
    })?;
    Ok(ExampleBatch {
        partial: sentences.len() < n,
        sentences,
        rejected,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassageBatch {
    pub passages: Vec<MaskedPassage>,
    pub rejected: usize,
    pub partial: bool,
}

/// Generates ambiguous masked passages. A completion is accepted only if it
/// has exactly one `<UNK>`, at least `k + 1` sentences, and no unmasked
/// occurrence of the lemma.
pub fn generate_passages<G: TextGenerator + ?Sized>(
    generator: &G,
    sense: &WordSense,
    n: usize,
    k: usize,
    prompts: &PromptSet,
    settings: &GenerationSettings,
) -> Result<PassageBatch, BackendError> {
    let prompt = prompts.render(GenerationTask::Passages, sense, &[], n);
    let surface = sense.surface();
    let (passages, rejected) = generate_validated(generator, GenerationTask::Passages, sense, &prompt, n, settings, |c| {
        match MaskedPassage::from_text(c, surface.clone()) {
            Ok(p) if p.check_depth(k).is_ok() && !contains_lemma(c, &sense.lemma) => vec![p],
            _ => Vec::new(),
        }
    })?;
    Ok(PassageBatch {
        partial: passages.len() < n,
        passages,
        rejected,
    })
}

/// Parses one completion into an explication: one line per non-empty line,
/// list markers stripped. A single paragraph becomes a one-line
/// explication.
pub fn parse_explication(target_word: &str, completion: &str) -> Option<Explication> {
    Explication::new(target_word, completion.lines().map(strip_list_marker)).ok()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateBatch {
    pub explications: Vec<Explication>,
    pub skipped: usize,
}

pub fn generate_candidates<G: TextGenerator + ?Sized>(
    generator: &G,
    sense: &WordSense,
    examples: &[String],
    count: usize,
    prompts: &PromptSet,
    temperature: f64,
) -> Result<CandidateBatch, BackendError> {
    let request = GenerationRequest {
        task: GenerationTask::Explications,
        lemma: sense.lemma.clone(),
        prompt: prompts.render(GenerationTask::Explications, sense, examples, count),
        temperature,
        count,
        attempt: 0,
    };
    let surface = sense.surface();
    let mut explications = Vec::new();
    let mut skipped = 0;
    for completion in generator.generate(&request)? {
        match parse_explication(&surface, &completion) {
            Some(e) => explications.push(e),
            None => skipped += 1,
        }
    }
    Ok(CandidateBatch { explications, skipped })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub temperature: f64,
    pub prompt_version: String,
    /// How the usage examples were chosen from the generated pool.
    pub example_sampling: String,
}

/// One word-example-explication record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub sense: WordSense,
    pub usage_examples: Vec<String>,
    pub explication: Explication,
    pub masked_passages: Vec<MaskedPassage>,
    #[serde(default)]
    pub score_report: Option<ScoreReport<f64>>,
    pub provenance: Provenance,
}

impl DatasetEntry {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let n = self.usage_examples.len();
        if !(MIN_USAGE_EXAMPLES..=MAX_USAGE_EXAMPLES).contains(&n) {
            return Err(DatasetError::InvalidEntry {
                sense_id: self.sense.sense_id.clone(),
                message: format!(
                    "{n} usage examples, expected {MIN_USAGE_EXAMPLES} to {MAX_USAGE_EXAMPLES}"
                ),
            });
        }
        Ok(())
    }

    fn score(&self) -> Result<&ScoreReport<f64>, DatasetError> {
        self.score_report
            .as_ref()
            .ok_or_else(|| DatasetError::Unscored(self.sense.sense_id.clone()))
    }

    pub fn to_benchmark_entry(&self, id: impl Into<String>) -> BenchmarkEntry {
        BenchmarkEntry {
            id: id.into(),
            explication: self.explication.clone(),
            passages: self.masked_passages.clone(),
        }
    }
}

/// Benchmark entries named by sense id, suffixed `#n` when a sense repeats.
pub fn benchmark_entries(entries: &[DatasetEntry]) -> Vec<BenchmarkEntry> {
    let mut totals: HashMap<&str, usize> = HashMap::new();
    for e in entries {
        *totals.entry(e.sense.sense_id.as_str()).or_default() += 1;
    }
    let mut seen: HashMap<&str, usize> = HashMap::new();
    entries
        .iter()
        .map(|e| {
            let id = e.sense.sense_id.as_str();
            let n = seen.entry(id).or_default();
            *n += 1;
            if totals[id] > 1 {
                e.to_benchmark_entry(format!("{id}#{n}"))
            } else {
                e.to_benchmark_entry(id)
            }
        })
        .collect()
}

/// Keeps entries scoring at least `threshold`, then at most `cap` per
/// sense: highest score first, ties broken by higher legality score and
/// then by explication text. Output is grouped by sense id in ascending
/// order, so filtering the output again changes nothing.
pub fn filter_and_cap(entries: Vec<DatasetEntry>, threshold: f64, cap: usize) -> Result<Vec<DatasetEntry>, DatasetError> {
    for e in &entries {
        e.score()?;
    }
    let mut by_sense: BTreeMap<String, Vec<DatasetEntry>> = BTreeMap::new();
    for e in entries {
        let score = e.score()?.explication_score;
        if score >= threshold {
            by_sense.entry(e.sense.sense_id.clone()).or_default().push(e);
        }
    }
    let mut out = Vec::new();
    for (_, mut group) in by_sense {
        group.sort_by(|a, b| {
            let (sa, sb) = (a.score_report.as_ref().unwrap(), b.score_report.as_ref().unwrap());
            sb.explication_score
                .total_cmp(&sa.explication_score)
                .then(sb.legality.legality_score.total_cmp(&sa.legality.legality_score))
                .then_with(|| a.explication.text().cmp(&b.explication.text()))
        });
        out.extend(group.into_iter().take(cap));
    }
    Ok(out)
}

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller index becomes the root so groups are labeled stably
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Groups entries that must share a split: same sense id, or overlapping
/// lemma/synonym sets. Groups are ordered by their first entry.
pub fn contamination_groups(entries: &[DatasetEntry]) -> Vec<Vec<usize>> {
    let mut sets = DisjointSets::new(entries.len());
    let mut first_with: HashMap<String, usize> = HashMap::new();
    for (i, e) in entries.iter().enumerate() {
        let keys = std::iter::once(format!("id:{}", e.sense.sense_id))
            .chain(e.sense.word_set().into_iter().map(|w| format!("w:{w}")));
        for key in keys {
            match first_with.get(&key) {
                Some(&j) => sets.union(i, j),
                None => {
                    first_with.insert(key, i);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..entries.len() {
        let root = sets.find(i);
        groups.entry(root).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Picks group indices whose sizes sum to exactly `target`: greedy in the
/// given order first, then an exact subset-sum search.
fn choose_groups(sizes: &[usize], target: usize) -> Option<Vec<usize>> {
    let mut chosen = Vec::new();
    let mut total = 0;
    for (i, &s) in sizes.iter().enumerate() {
        if total + s <= target {
            chosen.push(i);
            total += s;
        }
        if total == target {
            return Some(chosen);
        }
    }
    // first_reach[s] = index of the group that first made sum s reachable
    let mut first_reach: Vec<Option<usize>> = vec![None; target + 1];
    let mut reachable = vec![false; target + 1];
    reachable[0] = true;
    for (i, &s) in sizes.iter().enumerate() {
        if s == 0 || s > target {
            continue;
        }
        for sum in (s..=target).rev() {
            if !reachable[sum] && reachable[sum - s] {
                reachable[sum] = true;
                first_reach[sum] = Some(i);
            }
        }
        if reachable[target] {
            break;
        }
    }
    if !reachable[target] {
        return None;
    }
    let mut out = Vec::new();
    let mut sum = target;
    while sum > 0 {
        let i = first_reach[sum].expect("reachable sums have a predecessor");
        out.push(i);
        sum -= sizes[i];
    }
    out.sort_unstable();
    Some(out)
}

/// Seeded split into `(train, validation)` with exactly `val_count`
/// validation entries and no contamination group spanning both. Relative
/// input order is preserved within each split.
pub fn split(entries: Vec<DatasetEntry>, val_count: usize, seed: u64) -> Result<(Vec<DatasetEntry>, Vec<DatasetEntry>), DatasetError> {
    let total = entries.len();
    if val_count >= total {
        return Err(DatasetError::InfeasibleSplit {
            requested: val_count,
            total,
            offending: Vec::new(),
        });
    }
    let mut groups = contamination_groups(&entries);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    groups.shuffle(&mut rng);
    let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
    let chosen = choose_groups(&sizes, val_count).ok_or_else(|| {
        let mut offending: Vec<String> = groups
            .iter()
            .filter(|g| g.len() > 1)
            .map(|g| entries[g[0]].sense.sense_id.clone())
            .collect();
        offending.sort();
        DatasetError::InfeasibleSplit {
            requested: val_count,
            total,
            offending,
        }
    })?;
    let mut in_val = vec![false; total];
    for gi in chosen {
        for &i in &groups[gi] {
            in_val[i] = true;
        }
    }
    let mut train = Vec::with_capacity(total - val_count);
    let mut validation = Vec::with_capacity(val_count);
    for (e, v) in entries.into_iter().zip(in_val) {
        if v {
            validation.push(e);
        } else {
            train.push(e);
        }
    }
    Ok((train, validation))
}

/// Drops entries whose lemma or synonyms overlap `held_out` words (for
/// example, the words of an evaluation set). Returns kept entries and the
/// number removed.
pub fn exclude_words(entries: Vec<DatasetEntry>, held_out: &BTreeSet<String>) -> (Vec<DatasetEntry>, usize) {
    let before = entries.len();
    let kept: Vec<DatasetEntry> = entries
        .into_iter()
        .filter(|e| e.sense.word_set().is_disjoint(held_out))
        .collect();
    let removed = before - kept.len();
    (kept, removed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    /// Usage examples generated per sense before sampling.
    pub examples_per_sense: usize,
    pub passages_per_sense: usize,
    pub candidates_per_sense: usize,
    pub generation: GenerationSettings,
    pub prompts: PromptSet,
    pub scoring: ScoringConfig,
    pub seed: u64,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            examples_per_sense: 20,
            passages_per_sense: 4,
            candidates_per_sense: 5,
            generation: GenerationSettings::default(),
            prompts: PromptSet::default(),
            scoring: ScoringConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildStats {
    pub senses: usize,
    pub senses_skipped: usize,
    pub examples_rejected: usize,
    pub passages_rejected: usize,
    pub candidates_generated: usize,
    pub candidates_unparseable: usize,
    pub entries: usize,
}

const SAMPLING: &str = "uniform seeded sample of 2-5 from generated examples";

fn sense_rng(seed: u64, sense_id: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(sense_id.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

struct SenseOutcome {
    entries: Vec<DatasetEntry>,
    stats: BuildStats,
}

fn build_sense<G, S>(
    sense: &WordSense,
    generator: &G,
    scorers: &[S],
    lexicon: &PrimeLexicon,
    config: &BuildConfig,
) -> Result<SenseOutcome, DatasetError>
where
    G: TextGenerator + ?Sized,
    S: WordScorer<f64>,
{
    let mut stats = BuildStats {
        senses: 1,
        ..Default::default()
    };
    let examples = generate_examples(generator, sense, config.examples_per_sense, &config.prompts, &config.generation)?;
    stats.examples_rejected = examples.rejected;
    let mut stored = sense.clone();
    stored.examples.extend(examples.sentences);
    let pool: Vec<String> = stored.examples.iter().filter(|e| contains_lemma(e, &sense.lemma)).cloned().collect();

    let passages = generate_passages(
        generator,
        sense,
        config.passages_per_sense,
        config.scoring.substitutability.k,
        &config.prompts,
        &config.generation,
    )?;
    stats.passages_rejected = passages.rejected;

    if pool.len() < MIN_USAGE_EXAMPLES || passages.passages.is_empty() {
        log::warn!(
            "sense {}: skipped ({} usable examples, {} passages)",
            sense.sense_id,
            pool.len(),
            passages.passages.len()
        );
        stats.senses_skipped = 1;
        return Ok(SenseOutcome { entries: Vec::new(), stats });
    }

    let mut rng = sense_rng(config.seed, &sense.sense_id);
    let take = rng.gen_range(MIN_USAGE_EXAMPLES..=MAX_USAGE_EXAMPLES.min(pool.len()));
    let usage: Vec<String> = pool.choose_multiple(&mut rng, take).cloned().collect();

    let candidates = generate_candidates(
        generator,
        sense,
        &usage,
        config.candidates_per_sense,
        &config.prompts,
        config.generation.temperature,
    )?;
    stats.candidates_generated = candidates.explications.len() + candidates.skipped;
    stats.candidates_unparseable = candidates.skipped;

    let provenance = Provenance {
        generator: generator.id().to_string(),
        temperature: config.generation.temperature,
        prompt_version: config.prompts.version.clone(),
        example_sampling: SAMPLING.into(),
    };
    let mut entries = Vec::with_capacity(candidates.explications.len());
    for explication in candidates.explications {
        let report = scoring::score_explication(&explication, &passages.passages, lexicon, scorers, &config.scoring)
            .map_err(|source| DatasetError::Scoring {
                sense_id: sense.sense_id.clone(),
                source: Box::new(source),
            })?;
        entries.push(DatasetEntry {
            sense: stored.clone(),
            usage_examples: usage.clone(),
            explication,
            masked_passages: passages.passages.clone(),
            score_report: Some(report),
            provenance: provenance.clone(),
        });
    }
    stats.entries = entries.len();
    Ok(SenseOutcome { entries, stats })
}

/// Generates and scores candidate entries for every sense. Senses run in
/// parallel on the current rayon pool; output order follows input order
/// and does not depend on the pool size.
pub fn build_pool<G, S>(
    senses: &[WordSense],
    generator: &G,
    scorers: &[S],
    lexicon: &PrimeLexicon,
    config: &BuildConfig,
) -> Result<(Vec<DatasetEntry>, BuildStats), DatasetError>
where
    G: TextGenerator + ?Sized,
    S: WordScorer<f64>,
{
    let outcomes: Vec<Result<SenseOutcome, DatasetError>> = senses
        .par_iter()
        .map(|s| build_sense(s, generator, scorers, lexicon, config))
        .collect();
    let mut entries = Vec::new();
    let mut stats = BuildStats::default();
    for outcome in outcomes {
        let o = outcome?;
        stats.senses += o.stats.senses;
        stats.senses_skipped += o.stats.senses_skipped;
        stats.examples_rejected += o.stats.examples_rejected;
        stats.passages_rejected += o.stats.passages_rejected;
        stats.candidates_generated += o.stats.candidates_generated;
        stats.candidates_unparseable += o.stats.candidates_unparseable;
        entries.extend(o.entries);
    }
    stats.entries = entries.len();
    Ok((entries, stats))
}

/// Written next to every dataset output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub stage: String,
    pub config_hash: String,
    pub seed: u64,
    pub threshold: Option<f64>,
    pub cap: Option<usize>,
    pub counts: BTreeMap<String, usize>,
    pub config: serde_json::Value,
}

impl Manifest {
    pub fn new(stage: &str, config: serde_json::Value, seed: u64) -> Self {
        let hash = hex::encode(Sha256::digest(serde_json::to_vec(&config).expect("config serializes")));
        Self {
            schema: "nsm-dataset-manifest/1".into(),
            stage: stage.into(),
            config_hash: hash,
            seed,
            threshold: None,
            cap: None,
            counts: BTreeMap::new(),
            config,
        }
    }
}

/// Reads a JSON-lines file; blank lines are ignored, any bad record is an
/// error naming its line.
pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>, DatasetError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| DatasetError::Record {
                path: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, records: &[T]) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let io_err = |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    for r in records {
        serde_json::to_writer(&mut w, r).expect("records serialize");
        w.write_all(b"\n").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}
