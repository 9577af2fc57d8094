use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::crosslingual::DEFAULT_LANGUAGES;
use crate::legality::DEFAULT_ALPHA;
use crate::scoring::DEFAULT_GAMMA;
use crate::substitutability::{SubstitutabilityConfig, DEFAULT_BETA, DEFAULT_K};

pub const DEFAULT_THRESHOLD: f64 = 35.0;
pub const DEFAULT_CAP: usize = 2;

/// Every knob that affects a reported number. Reports embed a copy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// `None` means the bundled English lexicon.
    pub lexicon: Option<PathBuf>,
    pub backends: Option<PathBuf>,
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub threshold: f64,
    pub cap: usize,
    pub seed: u64,
    pub languages: Vec<String>,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            lexicon: None,
            backends: None,
            k: DEFAULT_K,
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            gamma: DEFAULT_GAMMA,
            threshold: DEFAULT_THRESHOLD,
            cap: DEFAULT_CAP,
            seed: 0,
            languages: DEFAULT_LANGUAGES.iter().map(|s| s.to_string()).collect(),
            output_dir: None,
        }
    }
}

impl RunConfig {
    pub fn substitutability(&self) -> SubstitutabilityConfig<f64> {
        SubstitutabilityConfig {
            k: self.k,
            beta: self.beta,
        }
    }

    pub fn scoring(&self) -> crate::scoring::ScoringConfig {
        crate::scoring::ScoringConfig {
            alpha: self.alpha,
            substitutability: self.substitutability(),
            gamma: self.gamma,
        }
    }
}
