use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use nsm_core::backends::{BackendConfig, BackendError, BackendFactory, BackendKind, BackendsFile};
use nsm_core::crosslingual::{self, CrossError, Embedder, Translator};
use nsm_core::dataset::{self, BuildConfig, DatasetEntry, DatasetError, GenerationSettings, Manifest, PromptSet};
use nsm_core::legality::{self, Explication};
use nsm_core::lexicon::{LexiconError, PrimeLexicon};
use nsm_core::scoring::{self, ScoringError};
use nsm_core::substitutability::{self, MaskedPassage, PromptTemplate, SubstitutabilityError, WordScorer};
use nsm_core::{RunConfig, TextGenerator};

use crate::args::{
    BenchArgs, BuildArgs, Cli, Command, CrossArgs, DatasetCommand, ExplicationArgs, FilterArgs, LegalityArgs,
    LexiconCommand, ScoreArgs, SplitArgs,
};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input, configuration, or flag combination.
    #[error("{0}")]
    Validation(String),
    /// A backend (HTTP service or mock table) failed.
    #[error("{0}")]
    Backend(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Backend(_) => 2,
        }
    }
}

impl From<BackendError> for CliError {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::Config(_) | BackendError::File { .. } => CliError::Validation(e.to_string()),
            _ => CliError::Backend(e.to_string()),
        }
    }
}

impl From<SubstitutabilityError> for CliError {
    fn from(e: SubstitutabilityError) -> Self {
        match e {
            SubstitutabilityError::Backend { .. } | SubstitutabilityError::Aborted { .. } => {
                CliError::Backend(e.to_string())
            }
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Backend(b) => b.into(),
            DatasetError::Scoring { sense_id, source } => match CliError::from(*source) {
                CliError::Backend(m) => CliError::Backend(format!("sense {sense_id}: {m}")),
                CliError::Validation(m) => CliError::Validation(format!("sense {sense_id}: {m}")),
            },
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<LexiconError> for CliError {
    fn from(e: LexiconError) -> Self {
        CliError::Validation(format!("lexicon: {e}"))
    }
}

impl From<ScoringError> for CliError {
    fn from(e: ScoringError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<CrossError> for CliError {
    fn from(e: CrossError) -> Self {
        CliError::Validation(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

struct Context<'a> {
    cli: &'a Cli,
    run: RunConfig,
    lexicon: PrimeLexicon,
    factory: BackendFactory,
    backends: Option<BackendsFile>,
}

impl<'a> Context<'a> {
    fn new(cli: &'a Cli) -> Result<Self> {
        let g = &cli.global;
        for (flag, value) in [("--alpha", g.alpha), ("--beta", g.beta), ("--gamma", g.gamma), ("--threshold", g.threshold)] {
            if !value.is_finite() {
                return Err(CliError::Validation(format!("{flag} must be a finite number, got {value}")));
            }
        }
        if g.beta <= 0.0 || g.gamma <= 0.0 {
            return Err(CliError::Validation("--beta and --gamma must be positive".into()));
        }
        let languages = crosslingual::parse_languages(&g.langs);
        if languages.is_empty() {
            return Err(CliError::Validation("--langs names no language".into()));
        }
        let run = RunConfig {
            lexicon: g.lexicon.clone(),
            backends: g.backends.clone(),
            k: g.k as usize,
            alpha: g.alpha,
            beta: g.beta,
            gamma: g.gamma,
            threshold: g.threshold,
            cap: g.cap as usize,
            seed: g.seed,
            languages,
            output_dir: g.output_dir.clone(),
        };
        let lexicon = match &g.lexicon {
            Some(path) => PrimeLexicon::load(path)?,
            None => PrimeLexicon::english(),
        };
        let backends = g.backends.as_ref().map(BackendsFile::load).transpose()?;
        let mut factory = BackendFactory::new(PromptTemplate::default());
        if let Some(dir) = &g.record {
            factory = factory.recording_into(dir);
        }
        Ok(Self {
            cli,
            run,
            lexicon,
            factory,
            backends,
        })
    }

    fn backends(&self) -> Result<&BackendsFile> {
        self.backends
            .as_ref()
            .ok_or_else(|| CliError::Validation("this command needs --backends FILE".into()))
    }

    fn scorers(&self, names: &[String]) -> Result<Vec<Arc<dyn WordScorer<f64>>>> {
        self.backends()?
            .select(BackendKind::Scorer, names)?
            .into_iter()
            .map(|cfg| self.factory.scorer(cfg).map_err(CliError::from))
            .collect()
    }

    /// The named backend of `kind`, or the only one configured.
    fn single(&self, kind: BackendKind, name: Option<&String>, flag: &str) -> Result<&BackendConfig> {
        let names: Vec<String> = name.into_iter().cloned().collect();
        let found = self.backends()?.select(kind, &names)?;
        match found.as_slice() {
            [one] => Ok(one),
            many => Err(CliError::Validation(format!(
                "{} {kind:?} backends configured; choose one with {flag}",
                many.len()
            ))),
        }
    }

    fn report_path(&self, explicit: &Option<PathBuf>, default_name: &str) -> PathBuf {
        explicit.clone().unwrap_or_else(|| {
            self.run
                .output_dir
                .clone()
                .unwrap_or_else(|| PathBuf::from("."))
                .join(default_name)
        })
    }

    fn config_json(&self) -> Value {
        serde_json::to_value(&self.run).expect("run config serializes")
    }
}

pub fn run(cli: &Cli) -> Result<String> {
    let ctx = Context::new(cli)?;
    let outcome = match &cli.command {
        Command::Legality(a) => legality_cmd(&ctx, a),
        Command::Substitutability(a) => substitutability_cmd(&ctx, a),
        Command::Score(a) => score_cmd(&ctx, a),
        Command::Crosstranslate(a) => cross_cmd(&ctx, a),
        Command::Bench(a) => bench_cmd(&ctx, a),
        Command::Dataset(DatasetCommand::Build(a)) => build_cmd(&ctx, a),
        Command::Dataset(DatasetCommand::Filter(a)) => filter_cmd(&ctx, a),
        Command::Dataset(DatasetCommand::Split(a)) => split_cmd(&ctx, a),
        Command::Lexicon(LexiconCommand::Validate { report }) => lexicon_cmd(&ctx, report),
    };
    // Keep whatever was recorded, even from a run that failed part-way.
    let saved = ctx.factory.save_recordings();
    let summary = outcome?;
    let saved = saved?;
    if saved.is_empty() {
        Ok(summary)
    } else {
        Ok(format!("{summary} (recorded {} mock table(s))", saved.len()))
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Validation(format!("{}: {e}", dir.display())))?;
    }
    Ok(())
}

fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    ensure_parent(path)?;
    Ok(dataset::write_jsonl(path, records)?)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    write_text(path, &text)
}

/// Blank-line separated blocks, each with its lines joined by `sep`.
fn blocks(text: &str, sep: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in text.lines().map(str::trim) {
        if line.is_empty() {
            if !current.is_empty() {
                out.push(current.join(sep));
                current.clear();
            }
        } else {
            current.push(line);
        }
    }
    if !current.is_empty() {
        out.push(current.join(sep));
    }
    out
}

fn explication(args: &ExplicationArgs) -> Result<Explication> {
    let result = match (&args.explication_file, &args.explication) {
        (Some(path), None) => Explication::from_text(&args.word, &read_text(path)?),
        (None, Some(text)) => Explication::new(&args.word, text.split([';', '\n'])),
        _ => unreachable!("clap enforces exactly one explication source"),
    };
    result.map_err(|e| CliError::Validation(e.to_string()))
}

fn passages(path: &Path, word: &str) -> Result<Vec<MaskedPassage>> {
    let found = blocks(&read_text(path)?, " ");
    if found.is_empty() {
        return Err(CliError::Validation(format!("{}: no passages", path.display())));
    }
    found
        .iter()
        .enumerate()
        .map(|(i, text)| {
            MaskedPassage::from_text(text, word)
                .map_err(|e| CliError::Validation(format!("{} passage {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn legality_cmd(ctx: &Context, args: &LegalityArgs) -> Result<String> {
    let expl = explication(&args.explication)?;
    let report = legality::legality::<f64>(&expl, &ctx.lexicon, ctx.run.alpha);
    let path = ctx.report_path(&args.report, "legality-report.json");
    write_json(
        &path,
        &json!({
            "schema": "nsm-legality/1",
            "generated_at": now(),
            "config": ctx.config_json(),
            "explication": expl,
            "report": report,
        }),
    )?;
    Ok(format!(
        "legality {}: score {:.1} (primes {}, molecules {}, words {}{}) -> {}",
        expl.target_word(),
        report.legality_score,
        report.prime_count,
        report.molecule_count,
        report.total_words,
        if report.circular { ", circular" } else { "" },
        path.display()
    ))
}

fn substitutability_cmd(ctx: &Context, args: &ScoreArgs) -> Result<String> {
    let expl = explication(&args.explication)?;
    let passages = passages(&args.passages, expl.target_word())?;
    let scorers = ctx.scorers(&args.graders)?;
    let report = substitutability::substitutability(&scorers, &passages, &expl, &ctx.run.substitutability())?;
    let path = ctx.report_path(&args.report, "substitutability-report.json");
    write_json(
        &path,
        &json!({
            "schema": "nsm-substitutability/1",
            "generated_at": now(),
            "config": ctx.config_json(),
            "prompt_template": ctx.factory.template(),
            "explication": expl,
            "report": report,
        }),
    )?;
    Ok(format!(
        "substitutability {}: score {:.2} over {} grader(s) x {} passage(s) -> {}",
        expl.target_word(),
        report.score,
        report.graders.len(),
        report.passages,
        path.display()
    ))
}

fn score_cmd(ctx: &Context, args: &ScoreArgs) -> Result<String> {
    let expl = explication(&args.explication)?;
    let passages = passages(&args.passages, expl.target_word())?;
    let scorers = ctx.scorers(&args.graders)?;
    let report = scoring::score_explication(&expl, &passages, &ctx.lexicon, &scorers, &ctx.run.scoring())?;
    let path = ctx.report_path(&args.report, "score-report.json");
    write_json(
        &path,
        &json!({
            "schema": "nsm-score/1",
            "generated_at": now(),
            "config": ctx.config_json(),
            "prompt_template": ctx.factory.template(),
            "explication": expl,
            "report": report,
        }),
    )?;
    Ok(format!(
        "score {}: {:.2} (legality {:.2}, substitutability {:.2}{}) -> {}",
        expl.target_word(),
        report.explication_score,
        report.legality.legality_score,
        report.substitutability.score,
        if report.circular_zeroed { ", circular" } else { "" },
        path.display()
    ))
}

fn cross_cmd(ctx: &Context, args: &CrossArgs) -> Result<String> {
    let texts = blocks(&read_text(&args.texts)?, "\n");
    let translator: Arc<dyn Translator> = ctx
        .factory
        .translator(ctx.single(BackendKind::Translator, args.translator.as_ref(), "--translator")?)?;
    let embedder: Arc<dyn Embedder> = ctx
        .factory
        .embedder(ctx.single(BackendKind::Embedder, args.embedder.as_ref(), "--embedder")?)?;
    let report = crosslingual::cross_report(&*translator, &*embedder, &texts, &ctx.run.languages)?;
    if !report.failures.is_empty() && report.reports.is_empty() {
        return Err(CliError::Backend(format!(
            "every round trip failed; first failure: {}",
            report.failures[0].reason
        )));
    }
    let path = ctx.report_path(&args.report, "crosstranslate-report.json");
    write_json(
        &path,
        &json!({
            "schema": "nsm-crosstranslate/1",
            "generated_at": now(),
            "config": ctx.config_json(),
            "report": report,
        }),
    )?;
    let means: Vec<String> = report
        .languages
        .iter()
        .map(|l| format!("{} {:.1}/{:.1}", l.language, l.mean_bleu, l.mean_similarity))
        .collect();
    Ok(format!(
        "crosstranslate: {} text(s), BLEU/similarity {}; {} failed -> {}",
        texts.len(),
        means.join(", "),
        report.failed_count,
        path.display()
    ))
}

fn read_entries(path: &Path) -> Result<Vec<DatasetEntry>> {
    let entries: Vec<DatasetEntry> = dataset::read_jsonl(path)?;
    for e in &entries {
        e.validate()?;
    }
    Ok(entries)
}

fn bench_cmd(ctx: &Context, args: &BenchArgs) -> Result<String> {
    let entries = dataset::benchmark_entries(&read_entries(&args.entries)?);
    let scorers = ctx.scorers(&args.graders)?;
    let report = scoring::run_benchmark(
        &entries,
        &ctx.lexicon,
        &scorers,
        &ctx.run.scoring(),
        ctx.factory.template(),
        ctx.config_json(),
        now(),
    )?;
    let Some(agg) = &report.aggregates else {
        return Err(CliError::Backend(format!(
            "all {} entries failed; first failure: {}",
            report.excluded_count, report.excluded[0].reason
        )));
    };
    let path = ctx.report_path(&args.report, "bench-report.json");
    write_text(&path, &report.to_json())?;
    if let Some(table) = &args.table {
        write_text(table, &report.to_table())?;
    }
    Ok(format!(
        "bench: {} entries, explication {:.2} ± {:.2}, legality {:.2}, substitutability {:.2}, circular {:.1}%, excluded {} -> {}",
        agg.entries,
        agg.explication_score.mean,
        agg.explication_score.std_error,
        agg.legality_score.mean,
        agg.substitutability_score.mean,
        agg.circular_percent,
        report.excluded_count,
        path.display()
    ))
}

fn manifest_path(explicit: &Option<PathBuf>, data: &Path) -> PathBuf {
    explicit.clone().unwrap_or_else(|| {
        let mut name = data.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".manifest.json");
        data.with_file_name(name)
    })
}

fn build_cmd(ctx: &Context, args: &BuildArgs) -> Result<String> {
    let (senses, ingest) = dataset::ingest_senses(&args.senses, &ctx.lexicon)?;
    if senses.is_empty() {
        return Err(CliError::Validation(format!("{}: no usable senses", args.senses.display())));
    }
    let generator: Arc<dyn TextGenerator> = ctx
        .factory
        .generator(ctx.single(BackendKind::Generator, args.generator.as_ref(), "--generator")?)?;
    let scorers = ctx.scorers(&args.graders)?;
    if !(args.temperature.is_finite() && args.temperature >= 0.0) {
        return Err(CliError::Validation(format!("--temperature must be >= 0, got {}", args.temperature)));
    }
    let config = BuildConfig {
        examples_per_sense: args.examples as usize,
        passages_per_sense: args.passages as usize,
        candidates_per_sense: args.candidates as usize,
        generation: GenerationSettings {
            temperature: args.temperature,
            retries: args.retries,
        },
        prompts: PromptSet::default(),
        scoring: ctx.run.scoring(),
        seed: ctx.run.seed,
    };
    let (entries, stats) = dataset::build_pool(&senses, &*generator, &scorers, &ctx.lexicon, &config)?;
    write_jsonl(&args.out, &entries)?;

    let mut manifest = Manifest::new(
        "build",
        json!({ "run": ctx.config_json(), "build": config, "scoring_prompt": ctx.factory.template() }),
        ctx.run.seed,
    );
    let counts = [
        ("senses_read", ingest.read),
        ("senses_malformed", ingest.malformed),
        ("senses_prime_dropped", ingest.primes_dropped),
        ("senses_duplicate_dropped", ingest.duplicates_dropped),
        ("senses_skipped", stats.senses_skipped),
        ("examples_rejected", stats.examples_rejected),
        ("passages_rejected", stats.passages_rejected),
        ("candidates_generated", stats.candidates_generated),
        ("candidates_unparseable", stats.candidates_unparseable),
        ("entries", stats.entries),
    ];
    manifest.counts = counts.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    write_json(&manifest_path(&args.report, &args.out), &manifest)?;
    Ok(format!(
        "dataset build: {} entries from {} senses ({} skipped) -> {}",
        stats.entries,
        senses.len(),
        stats.senses_skipped,
        args.out.display()
    ))
}

fn filter_cmd(ctx: &Context, args: &FilterArgs) -> Result<String> {
    let entries = read_entries(&args.input)?;
    let before = entries.len();
    let kept = dataset::filter_and_cap(entries, ctx.run.threshold, ctx.run.cap)?;
    write_jsonl(&args.out, &kept)?;

    let mut manifest = Manifest::new("filter", json!({ "run": ctx.config_json() }), ctx.run.seed);
    manifest.threshold = Some(ctx.run.threshold);
    manifest.cap = Some(ctx.run.cap);
    manifest.counts.insert("input".into(), before);
    manifest.counts.insert("kept".into(), kept.len());
    write_json(&manifest_path(&args.report, &args.out), &manifest)?;
    Ok(format!(
        "dataset filter: kept {} of {} entries (threshold {}, cap {}) -> {}",
        kept.len(),
        before,
        ctx.run.threshold,
        ctx.run.cap,
        args.out.display()
    ))
}

fn split_cmd(ctx: &Context, args: &SplitArgs) -> Result<String> {
    let mut entries = read_entries(&args.input)?;
    let mut excluded = 0;
    if let Some(path) = &args.exclude_words {
        let words: BTreeSet<String> = read_text(path)?
            .lines()
            .map(|l| l.trim().replace('_', " ").to_lowercase())
            .filter(|l| !l.is_empty())
            .collect();
        (entries, excluded) = dataset::exclude_words(entries, &words);
    }
    let val_count = match (args.val_count, args.val_fraction) {
        (Some(n), None) => n,
        (None, Some(f)) if (0.0..1.0).contains(&f) => (f * entries.len() as f64).round() as usize,
        (None, Some(f)) => {
            return Err(CliError::Validation(format!("--val-fraction must be in [0, 1), got {f}")))
        }
        _ => unreachable!("clap enforces exactly one split size"),
    };
    let total = entries.len();
    let (train, validation) = dataset::split(entries, val_count, ctx.run.seed)?;
    write_jsonl(&args.train, &train)?;
    write_jsonl(&args.validation, &validation)?;

    let mut manifest = Manifest::new("split", json!({ "run": ctx.config_json(), "val_count": val_count }), ctx.run.seed);
    manifest.counts.insert("input".into(), total + excluded);
    manifest.counts.insert("excluded".into(), excluded);
    manifest.counts.insert("train".into(), train.len());
    manifest.counts.insert("validation".into(), validation.len());
    write_json(&manifest_path(&args.report, &args.train), &manifest)?;
    Ok(format!(
        "dataset split: {} train, {} validation, {} excluded -> {}, {}",
        train.len(),
        validation.len(),
        excluded,
        args.train.display(),
        args.validation.display()
    ))
}

fn lexicon_cmd(ctx: &Context, report: &Option<PathBuf>) -> Result<String> {
    let lex = &ctx.lexicon;
    let forms: usize = lex.primes().iter().map(|p| p.forms().count()).sum();
    let multiword = lex
        .primes()
        .iter()
        .flat_map(|p| p.forms())
        .filter(|f| f.len() > 1)
        .count();
    let source = ctx
        .cli
        .global
        .lexicon
        .as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_else(|| "bundled English".into());
    let path = ctx.report_path(report, "lexicon-report.json");
    write_json(
        &path,
        &json!({
            "schema": "nsm-lexicon/1",
            "source": source,
            "primes": lex.primes().len(),
            "surface_forms": forms,
            "multiword_forms": multiword,
            "stopwords": lex.stopwords().len(),
        }),
    )?;
    Ok(format!(
        "lexicon {source}: {} primes, {forms} surface forms ({multiword} multiword), {} stopwords -> {}",
        lex.primes().len(),
        lex.stopwords().len(),
        path.display()
    ))
}
