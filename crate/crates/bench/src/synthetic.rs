//! Treebanks generated by a known branching grammar: each sentence is a run
//! of frames `a I b` whose fixed words `a`, `b` surround an inside part of
//! fixed length drawn from a large vocabulary, with optional noise words
//! between frames. Gold trees mark every frame and every inside part.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nrg_core::bracket::{Corpus, GoldTreebank, LeafToken};

/// `(left words, inside length, right words)`.
pub type Frame = (&'static [&'static str], usize, &'static [&'static str]);

pub const FRAMES: [Frame; 4] = [
    (&["in", "the"], 1, &["of"]),
    (&["he", "said"], 2, &["to", "me"]),
    (&["a"], 2, &["was", "here"]),
    (&["if"], 1, &["then"]),
];

#[derive(Clone, Copy, Debug)]
pub struct FramedSpec {
    pub sentences: usize,
    /// Probability of a noise word before each frame and at the end.
    pub noise: f64,
    pub inside_vocab: usize,
    pub noise_vocab: usize,
    pub seed: u64,
}

impl Default for FramedSpec {
    fn default() -> Self {
        FramedSpec {
            sentences: 1000,
            noise: 0.3,
            inside_vocab: 500,
            noise_vocab: 300,
            seed: 0,
        }
    }
}

/// Bracketed trees, one per line.
pub fn framed_trees(spec: &FramedSpec) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = String::new();
    for _ in 0..spec.sentences {
        out.push_str("(S");
        for _ in 0..rng.random_range(1..4) {
            if rng.random_bool(spec.noise) {
                out.push_str(&format!(" (X w{})", rng.random_range(0..spec.noise_vocab)));
            }
            let (left, k, right) = FRAMES[rng.random_range(0..FRAMES.len())];
            out.push_str(" (O");
            for w in left {
                out.push_str(&format!(" (T {w})"));
            }
            out.push_str(" (I");
            for _ in 0..k {
                out.push_str(&format!(" (C c{})", rng.random_range(0..spec.inside_vocab)));
            }
            out.push(')');
            for w in right {
                out.push_str(&format!(" (T {w})"));
            }
            out.push(')');
        }
        if rng.random_bool(spec.noise) {
            out.push_str(&format!(" (X w{})", rng.random_range(0..spec.noise_vocab)));
        }
        out.push_str(")\n");
    }
    out
}

/// The gold treebank and its sentences as a corpus.
pub fn framed(spec: &FramedSpec) -> (Corpus, GoldTreebank) {
    let gold = GoldTreebank::parse(&framed_trees(spec), LeafToken::Word).expect("generated trees parse");
    let corpus = Corpus {
        sentences: gold.sentences.iter().map(|s| s.tokens.clone()).collect(),
    };
    (corpus, gold)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frames_are_gold_constituents() {
        let (corpus, gold) = framed(&FramedSpec {
            sentences: 50,
            seed: 3,
            ..FramedSpec::default()
        });
        assert_eq!(corpus.sentences.len(), 50);
        for s in &gold.sentences {
            for &(a, b) in &s.spans {
                let t = &s.tokens[a..b];
                let framed = FRAMES.iter().any(|(l, k, r)| {
                    t.len() == l.len() + k + r.len() && t.starts_with(&l.iter().map(|w| w.to_string()).collect::<Vec<_>>())
                });
                let inside = t.iter().all(|w| w.starts_with('c'));
                assert!(framed || inside || (a, b) == (0, s.tokens.len()), "{t:?}");
            }
        }
        assert_eq!(framed_trees(&FramedSpec::default()), framed_trees(&FramedSpec::default()));
    }
}
