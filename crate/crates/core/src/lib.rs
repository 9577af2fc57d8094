//! Scoring and dataset tooling for Natural Semantic Metalanguage (NSM)
//! explications.
//!
//! The numeric core is generic over [`num::Scalar`], so the same code runs
//! on `f64`, `f32`, or exact rationals ([`Rational`]). The aliases below
//! fix the common choices.

pub mod backends;
pub mod config;
pub mod crosslingual;
pub mod dataset;
pub mod legality;
pub mod lexicon;
pub mod num;
pub mod scoring;
pub mod substitutability;

pub use backends::{BackendError, BackendFactory};
pub use config::RunConfig;
pub use crosslingual::{Embedder, Translator};
pub use dataset::{DatasetEntry, TextGenerator, WordSense};
pub use legality::Explication;
pub use lexicon::PrimeLexicon;
pub use num::{Rational, RealScalar, Scalar};
pub use scoring::{BenchmarkReport, ScoringConfig};
pub use substitutability::{MaskedPassage, PromptTemplate, WordScorer};

/// Default floating-point scalar.
pub type Real = f64;
/// Exact scalar for reference computations.
pub type Exact = Rational;

pub type LegalityReport = legality::LegalityReport<Real>;
pub type ExactLegalityReport = legality::LegalityReport<Exact>;
pub type SubstitutabilityReport = substitutability::SubstitutabilityReport<Real>;
pub type ExactSubstitutabilityReport = substitutability::SubstitutabilityReport<Exact>;
pub type ScoreReport = scoring::ScoreReport<Real>;
pub type SubstitutabilityConfig = substitutability::SubstitutabilityConfig<Real>;
