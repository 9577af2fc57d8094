use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use proptest::prelude::*;

use nsm_core::backends::BackendError;
use nsm_core::crosslingual::bleu;
use nsm_core::legality::{self, Explication};
use nsm_core::substitutability::{self, MaskedPassage, ScoringRequest, SubstitutabilityConfig, WordScorer};
use nsm_core::{PrimeLexicon, Rational};

const PRIMES: &[&str] = &["I", "you", "someone", "people", "something", "good", "bad", "know", "want", "think", "big"];
const STOPWORDS: &[&str] = &["the", "of", "and", "to", "with", "from"];
const MOLECULES: &[&str] = &["cat", "water", "machine", "river", "yellow", "explode"];

fn word() -> impl Strategy<Value = String> {
    prop_oneof![
        prop::sample::select(PRIMES),
        prop::sample::select(STOPWORDS),
        prop::sample::select(MOLECULES),
    ]
    .prop_map(str::to_string)
}

fn lines() -> impl Strategy<Value = Vec<Vec<String>>> {
    prop::collection::vec(prop::collection::vec(word(), 1..8), 1..5)
}

fn explication(lines: &[Vec<String>]) -> Explication {
    Explication::new("sky", lines.iter().map(|l| l.join(" "))).unwrap()
}

proptest! {
    #[test]
    fn legality_stays_within_alpha(lines in lines(), alpha in 0.5f64..50.0) {
        let r = legality::legality::<f64>(&explication(&lines), &PrimeLexicon::english(), alpha);
        prop_assert!(r.legality_score >= -alpha - 1e-12 && r.legality_score <= alpha + 1e-12);
    }

    #[test]
    fn token_classes_partition_the_words(lines in lines()) {
        let r = legality::legality::<f64>(&explication(&lines), &PrimeLexicon::english(), 10.0);
        prop_assert_eq!(r.prime_count + r.molecule_count + r.stopword_count, r.total_words);
        let words: usize = lines.iter().map(Vec::len).sum();
        prop_assert_eq!(r.total_words, words);
    }

    #[test]
    fn replacing_a_molecule_with_a_prime_never_lowers_legality(lines in lines(), pick in any::<prop::sample::Index>()) {
        let lex = PrimeLexicon::english();
        let before = legality::legality::<f64>(&explication(&lines), &lex, 10.0);
        let molecules: Vec<(usize, usize)> = lines
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.iter().enumerate().filter(|(_, w)| MOLECULES.contains(&w.as_str())).map(move |(j, _)| (i, j)))
            .collect();
        prop_assume!(!molecules.is_empty());
        let (i, j) = molecules[pick.index(molecules.len())];
        let mut changed = lines.clone();
        changed[i][j] = "someone".into();
        let after = legality::legality::<f64>(&explication(&changed), &lex, 10.0);
        prop_assert!(after.legality_score >= before.legality_score);
    }

    #[test]
    fn exact_and_float_legality_agree(lines in lines()) {
        let lex = PrimeLexicon::english();
        let e = explication(&lines);
        let exact = legality::legality::<Rational>(&e, &lex, Rational::from_integer(10));
        let float = legality::legality::<f64>(&e, &lex, 10.0);
        let as_float = *exact.legality_score.numer() as f64 / *exact.legality_score.denom() as f64;
        prop_assert!((as_float - float.legality_score).abs() < 1e-12);
    }

    #[test]
    fn bleu_is_bounded_and_identity_is_perfect(a in prop::collection::vec(word(), 0..12), b in prop::collection::vec(word(), 0..12)) {
        let (a, b) = (a.join(" "), b.join(" "));
        let s: f64 = bleu(&a, &b);
        prop_assert!((0.0..=100.0).contains(&s));
        if !a.is_empty() {
            prop_assert_eq!(bleu::<f64>(&a, &a), 100.0);
        }
    }
}

/// Deterministic pseudo log-probabilities derived from the request.
struct Hashed(String);

impl WordScorer<f64> for Hashed {
    fn id(&self) -> &str {
        &self.0
    }
    fn log_prob(&self, request: &ScoringRequest) -> Result<f64, BackendError> {
        let mut h = DefaultHasher::new();
        self.0.hash(&mut h);
        request.hash(&mut h);
        Ok(-((h.finish() % 4000) as f64) / 100.0)
    }
}

fn passage(tag: usize, len: usize, mask: usize) -> MaskedPassage {
    let sentences: Vec<String> = (0..len)
        .map(|i| if i == mask { format!("Here {tag} is the <UNK>.") } else { format!("Sentence {i} of {tag}.") })
        .collect();
    MaskedPassage::new(sentences, "word").unwrap()
}

fn setup() -> impl Strategy<Value = (Vec<String>, Vec<(usize, usize)>, usize)> {
    (
        prop::collection::vec("[a-z]{3,6}", 1..4),
        prop::collection::vec((3usize..7, 0usize..7), 1..4),
        1usize..7,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn score_is_invariant_under_permutation((graders, shapes, lines) in setup(), seed in any::<u64>()) {
        let scorers: Vec<Hashed> = graders.iter().map(|g| Hashed(g.clone())).collect();
        let passages: Vec<MaskedPassage> = shapes.iter().enumerate().map(|(t, &(n, m))| passage(t, n, m % n)).collect();
        let expl = Explication::new("word", (0..lines).map(|i| format!("line {i}"))).unwrap();
        let config = SubstitutabilityConfig::default();
        let base = substitutability::substitutability(&scorers, &passages, &expl, &config).unwrap();

        let mut rev_scorers: Vec<Hashed> = graders.iter().rev().map(|g| Hashed(g.clone())).collect();
        let mut shuffled = passages.clone();
        let shift = (seed as usize) % shuffled.len();
        shuffled.rotate_left(shift);
        shuffled.reverse();
        if seed % 2 == 0 {
            let n = rev_scorers.len();
            rev_scorers.rotate_left(1 % n);
        }
        let permuted = substitutability::substitutability(&rev_scorers, &shuffled, &expl, &config).unwrap();
        prop_assert!((base.score - permuted.score).abs() <= 1e-9);
        prop_assert!((base.score - base.mean_of_grader_means()).abs() <= 1e-9);
    }

    #[test]
    fn cap_bounds_cells_and_is_monotone((graders, shapes, lines) in setup(), beta in 0.5f64..60.0) {
        let scorers: Vec<Hashed> = graders.iter().map(|g| Hashed(g.clone())).collect();
        let passages: Vec<MaskedPassage> = shapes.iter().enumerate().map(|(t, &(n, m))| passage(t, n, m % n)).collect();
        let expl = Explication::new("word", (0..lines).map(|i| format!("line {i}"))).unwrap();
        let run = |beta: f64| substitutability::substitutability(&scorers, &passages, &expl, &SubstitutabilityConfig { k: 2, beta }).unwrap();

        let low = run(beta);
        prop_assert!(low.cells.iter().all(|c| c.composite <= beta));
        prop_assert!(low.score <= beta);
        let high = run(beta + 10.0);
        prop_assert!(high.score >= low.score);

        let open = run(1e12);
        let uncapped = open.cells.iter().map(|c| c.uncapped).sum::<f64>() / open.cells.len() as f64;
        prop_assert!((open.score - uncapped).abs() <= 1e-9);
    }
}
