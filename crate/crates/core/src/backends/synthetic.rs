//! Seeded stand-ins for live models. Outputs are a pure function of
//! (seed, request), so whole pipeline runs are reproducible offline and can
//! be recorded into mock tables.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::BackendError;
use crate::crosslingual::{Embedder, Translator};
use crate::dataset::{GenerationRequest, GenerationTask, TextGenerator};
use crate::lexicon;
use crate::substitutability::{ScoringRequest, WordScorer, MASK_TOKEN};

fn digest<T: Serialize>(seed: u64, salt: &str, value: &T) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(salt.as_bytes());
    hasher.update(serde_json::to_vec(value).expect("serializable"));
    hasher.finalize().into()
}

fn unit(bytes: [u8; 32]) -> f64 {
    let mut word = [0u8; 8];
    word.copy_from_slice(&bytes[..8]);
    (u64::from_le_bytes(word) >> 11) as f64 / (1u64 << 53) as f64
}

/// Grader whose log-probabilities reward longer explications in proportion
/// to a per-explication quality drawn from its first line, and reward
/// passage context slightly.
pub struct SyntheticWordScorer {
    id: String,
    seed: u64,
}

impl SyntheticWordScorer {
    pub fn new(id: &str, seed: u64) -> Self {
        Self {
            id: id.to_string(),
            seed,
        }
    }
}

impl WordScorer<f64> for SyntheticWordScorer {
    fn id(&self) -> &str {
        &self.id
    }

    fn log_prob(&self, request: &ScoringRequest) -> Result<f64, BackendError> {
        let lines = request.explication.as_ref().map_or(0, Vec::len);
        let first = request
            .explication
            .as_ref()
            .and_then(|l| l.first())
            .cloned()
            .unwrap_or_default();
        let quality = unit(digest(self.seed, "quality", &(&request.target_word, &first)));
        let jitter = 0.3 * unit(digest(self.seed, "jitter", request));
        let lp = -25.0 + 3.0 * quality * lines.min(6) as f64 + 0.4 * request.passage.len().min(8) as f64
            - jitter;
        Ok(lp.min(0.0))
    }
}

const EXAMPLE_TEMPLATES: &[&str] = &[
    "She noticed the {w} as soon as she walked in.",
    "Nobody expected the {w} to matter so much.",
    "He talked about the {w} for a long time.",
    "The {w} was the first thing the children saw.",
    "They argued over the {w} until midnight.",
    "I could not stop thinking about the {w}.",
    "Everyone in the village knew about the {w}.",
    "The old man pointed at the {w} and smiled.",
    "After the storm, the {w} was all anyone discussed.",
    "We found the {w} near the river.",
];

const FILLER_SENTENCES: &[&str] = &[
    "It was late in the afternoon.",
    "The street outside was quiet.",
    "Someone had left the window open.",
    "Nobody said anything for a while.",
    "The room smelled of rain and old paper.",
    "A dog barked somewhere in the distance.",
    "Later, everyone went home.",
    "The light was starting to fade.",
    "There was a long silence.",
    "Her brother laughed at the idea.",
];

const MASK_SENTENCES: &[&str] = &[
    "Then she saw the <UNK> again.",
    "Everyone kept talking about the <UNK>.",
    "He could not forget the <UNK>.",
    "That was when the <UNK> mattered most.",
];

const NSM_LINES: &[&str] = &[
    "someone can feel something because of this",
    "people can see this thing",
    "it is like this",
    "this someone wants to do something",
    "something bad can happen because of this",
    "people think about this for a long time",
    "this is not something very big",
    "someone can say something good about it",
    "when it is here, people can touch it",
    "someone knows something about this",
    "this happens at many times in many places",
    "it is part of something else",
];

const MOLECULE_LINES: &[&str] = &[
    "it is a kind of object made of wood",
    "it is often found in houses",
    "children play with it outside",
    "it has a round shape",
];

fn seeded_rng(seed: u64, request: &GenerationRequest, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(digest(seed, "generate", &(request, index)))
}

/// Text generator that assembles plausible outputs from fixed phrase
/// pools according to the request's task.
pub struct SyntheticGenerator {
    id: String,
    seed: u64,
}

impl SyntheticGenerator {
    pub fn new(id: &str, seed: u64) -> Self {
        Self {
            id: id.to_string(),
            seed,
        }
    }

    fn example(&self, rng: &mut ChaCha8Rng, lemma: &str) -> String {
        // occasionally miss the lemma so callers' validators have work to do
        if rng.gen_bool(0.1) {
            return FILLER_SENTENCES.choose(rng).unwrap().to_string();
        }
        let surface = lemma.replace('_', " ");
        EXAMPLE_TEMPLATES.choose(rng).unwrap().replace("{w}", &surface)
    }

    fn passage(&self, rng: &mut ChaCha8Rng) -> String {
        let n = rng.gen_range(4..=6);
        let mask_at = rng.gen_range(0..n);
        let mut fillers: Vec<&str> = FILLER_SENTENCES.to_vec();
        fillers.shuffle(rng);
        let mut out = Vec::with_capacity(n);
        let mut next = fillers.into_iter();
        for i in 0..n {
            if i == mask_at {
                out.push(*MASK_SENTENCES.choose(rng).unwrap());
            } else {
                out.push(next.next().unwrap());
            }
        }
        debug_assert_eq!(out.iter().map(|s| s.matches(MASK_TOKEN).count()).sum::<usize>(), 1);
        out.join(" ")
    }

    fn explication(&self, rng: &mut ChaCha8Rng, lemma: &str) -> String {
        let n = rng.gen_range(3..=6);
        let mut pool: Vec<&str> = NSM_LINES.to_vec();
        pool.shuffle(rng);
        let mut lines: Vec<String> = pool.into_iter().take(n).map(str::to_string).collect();
        if rng.gen_bool(0.35) {
            let at = rng.gen_range(0..lines.len());
            lines[at] = MOLECULE_LINES.choose(rng).unwrap().to_string();
        }
        if rng.gen_bool(0.05) {
            lines.push(format!("people call this a {}", lemma.replace('_', " ")));
        }
        let numbered = rng.gen_bool(0.5);
        lines
            .iter()
            .enumerate()
            .map(|(i, l)| if numbered { format!("{}. {l}", i + 1) } else { format!("- {l}") })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

impl TextGenerator for SyntheticGenerator {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(&self, request: &GenerationRequest) -> Result<Vec<String>, BackendError> {
        Ok((0..request.count)
            .map(|i| {
                let mut rng = seeded_rng(self.seed, request, i);
                match request.task {
                    GenerationTask::Examples => self.example(&mut rng, &request.lemma),
                    GenerationTask::Passages => self.passage(&mut rng),
                    GenerationTask::Explications => self.explication(&mut rng, &request.lemma),
                }
            })
            .collect())
    }
}

/// Returns its input unchanged.
pub struct IdentityTranslator {
    id: String,
}

impl IdentityTranslator {
    pub fn new(id: &str) -> Self {
        Self { id: id.to_string() }
    }
}

impl Translator for IdentityTranslator {
    fn id(&self) -> &str {
        &self.id
    }

    fn translate(&self, text: &str, _source: &str, _target: &str) -> Result<String, BackendError> {
        Ok(text.to_string())
    }
}

/// Signed feature hashing of normalized tokens into a fixed dimension.
pub struct HashEmbedder {
    id: String,
    dim: usize,
}

impl HashEmbedder {
    pub fn new(id: &str, dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self {
            id: id.to_string(),
            dim,
        }
    }
}

impl Embedder for HashEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        let mut v = vec![0.0; self.dim];
        for word in lexicon::words(text) {
            let h = Sha256::digest(word.as_bytes());
            let idx = u32::from_le_bytes([h[0], h[1], h[2], h[3]]) as usize % self.dim;
            v[idx] += if h[4] & 1 == 0 { 1.0 } else { -1.0 };
        }
        Ok(v)
    }
}
