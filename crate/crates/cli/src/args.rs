use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand};

/// Evaluate NSM explications and build explication datasets.
///
/// Exit status: 0 on success, 1 on usage or validation errors, 2 when a
/// backend (HTTP service or mock table) fails.
#[derive(Debug, Parser)]
#[command(name = "nsm", version, about, long_about = None)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    pub jobs: Option<u16>,

    /// Prime lexicon file (defaults to the bundled English inventory).
    #[arg(long, global = true, value_name = "FILE")]
    pub lexicon: Option<PathBuf>,

    /// Backends file (TOML list of `[[backend]]` tables).
    #[arg(long, global = true, value_name = "FILE")]
    pub backends: Option<PathBuf>,

    /// Record every backend response into DIR/<backend>.json mock tables.
    #[arg(long, global = true, value_name = "DIR")]
    pub record: Option<PathBuf>,

    /// Directory for default report paths.
    #[arg(long, global = true, value_name = "DIR")]
    pub output_dir: Option<PathBuf>,

    /// Sentences/lines removed per truncation series.
    #[arg(short = 'k', long, global = true, default_value_t = 2, value_parser = clap::value_parser!(u32).range(1..))]
    pub k: u32,

    /// Legality weight.
    #[arg(long, global = true, default_value_t = 10.0)]
    pub alpha: f64,

    /// Cap on each substitutability cell.
    #[arg(long, global = true, default_value_t = 40.0)]
    pub beta: f64,

    /// Explication-score normalizer.
    #[arg(long, global = true, default_value_t = 2.0)]
    pub gamma: f64,

    /// Minimum explication score kept by `dataset filter`.
    #[arg(long, global = true, default_value_t = 35.0)]
    pub threshold: f64,

    /// Maximum entries kept per sense by `dataset filter`.
    #[arg(long, global = true, default_value_t = 2, value_parser = clap::value_parser!(u32).range(1..))]
    pub cap: u32,

    /// Seed for every sampling decision.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Comma-separated target languages for round-trip translation.
    #[arg(long, global = true, default_value = "alz,rw,dz,din,ab", value_name = "CODES")]
    pub langs: String,

    /// Increase log verbosity (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Legality score of one explication.
    Legality(LegalityArgs),
    /// Substitutability of one explication against masked passages.
    Substitutability(ScoreArgs),
    /// Full explication score (legality + substitutability).
    Score(ScoreArgs),
    /// Round-trip translation report (BLEU and embedding similarity).
    Crosstranslate(CrossArgs),
    /// Score every entry of a benchmark file.
    Bench(BenchArgs),
    /// Dataset pipeline stages.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Lexicon utilities.
    #[command(subcommand)]
    Lexicon(LexiconCommand),
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["explication_file", "explication"])))]
pub struct ExplicationArgs {
    /// Target word the explication defines.
    #[arg(long)]
    pub word: String,

    /// File with one explication line per line.
    #[arg(long, value_name = "FILE", conflicts_with = "explication")]
    pub explication_file: Option<PathBuf>,

    /// Inline explication; separate lines with `;` or newlines.
    #[arg(long, value_name = "TEXT")]
    pub explication: Option<String>,
}

#[derive(Debug, Args)]
pub struct LegalityArgs {
    #[command(flatten)]
    pub explication: ExplicationArgs,

    /// Report file (default: <output-dir>/legality-report.json).
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub explication: ExplicationArgs,

    /// Masked passages, separated by blank lines; each holds one <UNK>.
    #[arg(long, value_name = "FILE")]
    pub passages: PathBuf,

    /// Comma-separated scorer backend names (default: every scorer).
    #[arg(long, value_delimiter = ',', value_name = "NAMES")]
    pub graders: Vec<String>,

    /// Report file (default: <output-dir>/<command>-report.json).
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CrossArgs {
    /// Texts to translate, separated by blank lines.
    #[arg(long, value_name = "FILE")]
    pub texts: PathBuf,

    /// Translator backend name (default: the only translator configured).
    #[arg(long, value_name = "NAME")]
    pub translator: Option<String>,

    /// Embedder backend name (default: the only embedder configured).
    #[arg(long, value_name = "NAME")]
    pub embedder: Option<String>,

    /// Report file (default: <output-dir>/crosstranslate-report.json).
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Dataset entries (JSON lines) to score.
    #[arg(long, value_name = "FILE")]
    pub entries: PathBuf,

    /// Comma-separated scorer backend names (default: every scorer).
    #[arg(long, value_delimiter = ',', value_name = "NAMES")]
    pub graders: Vec<String>,

    /// Report file (default: <output-dir>/bench-report.json).
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,

    /// Also write the plain-text table here.
    #[arg(long, value_name = "FILE")]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Generate and score candidate entries for every sense.
    Build(BuildArgs),
    /// Keep entries above the threshold, at most `cap` per sense.
    Filter(FilterArgs),
    /// Contamination-free train/validation split.
    Split(SplitArgs),
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// Sense corpus (JSON lines with sense_id, lemma, gloss, synonyms, examples).
    #[arg(long, value_name = "FILE")]
    pub senses: PathBuf,

    /// Output pool of scored entries (JSON lines).
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,

    /// Generator backend name (default: the only generator configured).
    #[arg(long, value_name = "NAME")]
    pub generator: Option<String>,

    /// Comma-separated scorer backend names (default: every scorer).
    #[arg(long, value_delimiter = ',', value_name = "NAMES")]
    pub graders: Vec<String>,

    /// Usage examples generated per sense.
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u32).range(1..))]
    pub examples: u32,

    /// Masked passages generated per sense.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..))]
    pub passages: u32,

    /// Candidate explications generated per sense.
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u32).range(1..))]
    pub candidates: u32,

    /// Sampling temperature sent to the generator.
    #[arg(long, default_value_t = 0.7)]
    pub temperature: f64,

    /// Extra generation rounds for replacing rejected outputs.
    #[arg(long, default_value_t = 3)]
    pub retries: u32,

    /// Manifest file (default: <out>.manifest.json).
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    /// Scored pool (JSON lines).
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,

    /// Surviving entries (JSON lines).
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,

    /// Manifest file (default: <out>.manifest.json).
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("size").required(true).args(["val_count", "val_fraction"])))]
pub struct SplitArgs {
    /// Entries to split (JSON lines).
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,

    #[arg(long, value_name = "FILE")]
    pub train: PathBuf,

    #[arg(long, value_name = "FILE")]
    pub validation: PathBuf,

    /// Exact number of validation entries.
    #[arg(long, value_name = "N", conflicts_with = "val_fraction")]
    pub val_count: Option<usize>,

    /// Validation share of the input, rounded to the nearest entry.
    #[arg(long, value_name = "F")]
    pub val_fraction: Option<f64>,

    /// Words (one per line) whose senses must not appear in either split.
    #[arg(long, value_name = "FILE")]
    pub exclude_words: Option<PathBuf>,

    /// Manifest file (default: <train>.manifest.json).
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum LexiconCommand {
    /// Parse the lexicon (`--lexicon` or the bundled one) and report counts.
    Validate {
        /// Report file (default: <output-dir>/lexicon-report.json).
        #[arg(long, value_name = "FILE")]
        report: Option<PathBuf>,
    },
}
