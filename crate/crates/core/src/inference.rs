//! Greedy inference: straight-line Greedy, NRGreedy_fix (repeats and
//! fixed-gap motifs compete every iteration) and motif post-processing of a
//! straight-line grammar.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grammar::{Encoding, Grammar, Sequence, Symbol};
use crate::motif::{MotifChoice, MotifFinder, MotifSearch};
use crate::repeat::{RepeatChoice, RepeatIndex};
use crate::working::{Code, SegRef, WRule, Working};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    Repeat {
        word: Vec<Symbol>,
        occ: usize,
        gain: i64,
    },
    Motif {
        u: Vec<Symbol>,
        k: usize,
        v: Vec<Symbol>,
        occ: usize,
        gain: i64,
    },
}

impl Action {
    pub fn gain(&self) -> i64 {
        match self {
            Action::Repeat { gain, .. } | Action::Motif { gain, .. } => *gain,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Step {
    pub step: usize,
    pub action: Action,
    /// Grammar size after the step.
    pub size: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    NoPositiveGain,
    MaxIterations,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RunTrace {
    pub initial_size: usize,
    pub steps: Vec<Step>,
    pub stop_reason: StopReason,
}

impl RunTrace {
    pub fn final_size(&self) -> usize {
        self.steps.last().map_or(self.initial_size, |s| s.size)
    }
}

#[derive(Clone, Debug)]
pub struct Inferred {
    pub grammar: Grammar,
    pub trace: RunTrace,
}

#[derive(Clone, Debug)]
pub struct PostProcessed {
    pub grammar: Grammar,
    pub trace: RunTrace,
    /// Branching pairs created.
    pub n_ctx: usize,
}

/// Limits for `nrgreedy_fix_with`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NrGreedyOptions {
    pub max_iterations: Option<usize>,
    pub search: MotifSearch,
}

/// Gap cap used by `nrgreedy_fix`.
pub const DEFAULT_MAX_GAP: usize = 32;

impl Default for NrGreedyOptions {
    fn default() -> Self {
        NrGreedyOptions {
            max_iterations: None,
            search: MotifSearch {
                max_context: None,
                max_gap: Some(DEFAULT_MAX_GAP),
            },
        }
    }
}

fn size_of(w: &Working) -> usize {
    // Straight-line and fixed-gap grammars have a fixed-length size.
    w.size(Encoding::Fixed).or_else(|_| w.size(Encoding::Variable)).expect("size")
}

struct Run {
    w: Working,
    trace: RunTrace,
}

impl Run {
    fn new(w: Working) -> Self {
        let initial_size = size_of(&w);
        Run {
            w,
            trace: RunTrace {
                initial_size,
                steps: Vec::new(),
                stop_reason: StopReason::NoPositiveGain,
            },
        }
    }

    fn at_limit(&mut self, max: Option<usize>) -> bool {
        if max.is_some_and(|m| self.trace.steps.len() >= m) {
            self.trace.stop_reason = StopReason::MaxIterations;
            true
        } else {
            false
        }
    }

    fn push(&mut self, action: Action) {
        let size = size_of(&self.w);
        debug_assert_eq!(self.trace.final_size() as i64 - size as i64, action.gain());
        self.trace.steps.push(Step {
            step: self.trace.steps.len() + 1,
            action,
            size,
        });
    }

    fn hits(idx: &RepeatIndex, starts: &[u32]) -> Vec<(SegRef, usize)> {
        starts.iter().map(|&p| idx.st.locate(p as usize)).collect()
    }

    fn apply_repeat(&mut self, idx: &RepeatIndex, c: &RepeatChoice) -> Result<()> {
        let hits = Self::hits(idx, &c.starts);
        let (seg, off) = hits[0];
        let word: Vec<Code> = self.w.segment(seg)[off..off + c.len].to_vec();
        self.w.replace_repeat(&word, &hits)?;
        let action = Action::Repeat {
            word: self.w.symbols(&word),
            occ: hits.len(),
            gain: c.gain,
        };
        self.push(action);
        Ok(())
    }

    fn apply_motif(&mut self, idx: &RepeatIndex, c: &MotifChoice) -> Result<()> {
        let hits = Self::hits(idx, &c.starts);
        let (seg, off) = hits[0];
        let body = self.w.segment(seg);
        let u: Vec<Code> = body[off..off + c.a].to_vec();
        let v: Vec<Code> = body[off + c.a + c.k..off + c.a + c.k + c.b].to_vec();
        self.w.replace_motif(&u, c.k, &v, &hits)?;
        let action = Action::Motif {
            u: self.w.symbols(&u),
            k: c.k,
            v: self.w.symbols(&v),
            occ: hits.len(),
            gain: c.gain,
        };
        self.push(action);
        Ok(())
    }

    fn finish(self) -> Inferred {
        Inferred {
            grammar: self.w.to_grammar(),
            trace: self.trace,
        }
    }
}

fn start(s: &Sequence) -> Result<Working> {
    if s.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(Working::from_sequence(s.alphabet.clone(), &s.symbols))
}

/// Replaces the best repeat while its gain is positive.
pub fn greedy(s: &Sequence, max_iterations: Option<usize>) -> Result<Inferred> {
    let mut run = Run::new(start(s)?);
    while !run.at_limit(max_iterations) {
        let idx = RepeatIndex::new(&run.w);
        let Some(c) = idx.best(1) else { break };
        run.apply_repeat(&idx, &c)?;
    }
    Ok(run.finish())
}

pub fn nrgreedy_fix(s: &Sequence) -> Result<Inferred> {
    nrgreedy_fix_with(s, NrGreedyOptions::default())
}

/// Each iteration takes the best repeat `w` and the best fixed-gap motif `m`;
/// `w` is applied only when `f(w) > f(m)`, so equal gains go to the motif.
pub fn nrgreedy_fix_with(s: &Sequence, opts: NrGreedyOptions) -> Result<Inferred> {
    let mut run = Run::new(start(s)?);
    while !run.at_limit(opts.max_iterations) {
        let idx = RepeatIndex::new(&run.w);
        let rep = idx.best(1);
        let floor = rep.as_ref().map_or(1, |r| r.gain);
        let motif = MotifFinder::new(&idx).best_acyclic(&run.w, opts.search, floor);
        match (rep, motif) {
            (_, Some(m)) => run.apply_motif(&idx, &m)?,
            (Some(r), None) => run.apply_repeat(&idx, &r)?,
            (None, None) => break,
        }
    }
    Ok(run.finish())
}

/// Turns fixed-gap motifs of a straight-line grammar into branching pairs,
/// best gain first, while some motif has positive gain.
pub fn post_process(g: &Grammar, max_iterations: Option<usize>) -> Result<PostProcessed> {
    if let Some(id) = g.rules().iter().position(|r| r.is_branching()) {
        return Err(Error::NotStraightLine(id as u32));
    }
    let mut run = Run::new(Working::from_grammar(g)?);
    // Without a positive-gain repeat, only single-symbol contexts are searched.
    let max_context = if RepeatIndex::new(&run.w).best(1).is_some() {
        None
    } else {
        Some(1)
    };
    let search = MotifSearch {
        max_context,
        max_gap: None,
    };
    let before = run.w.rules.len();
    while !run.at_limit(max_iterations) {
        let idx = RepeatIndex::new(&run.w);
        let Some(m) = MotifFinder::new(&idx).best_acyclic(&run.w, search, 1) else {
            break;
        };
        run.apply_motif(&idx, &m)?;
    }
    let n_ctx = run.w.rules[before..].iter().filter(|r| matches!(r, WRule::Outer { .. })).count();
    let out = run.finish();
    Ok(PostProcessed {
        grammar: out.grammar,
        trace: out.trace,
        n_ctx,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::Rule;
    use crate::motif::best_fixed_motif;
    use crate::repeat::best_repeat;
    use proptest::prelude::*;

    fn bytes(s: &[u8]) -> Sequence {
        Sequence::from_bytes(s)
    }

    fn check_trace(t: &RunTrace) {
        let mut prev = t.initial_size;
        for (i, s) in t.steps.iter().enumerate() {
            assert_eq!(s.step, i + 1);
            assert!(s.action.gain() > 0);
            assert_eq!(prev - s.size, s.action.gain() as usize);
            prev = s.size;
        }
    }

    #[test]
    fn abab_is_left_alone() {
        let out = greedy(&bytes(b"abab"), None).unwrap();
        assert_eq!(out.grammar.len(), 1);
        assert_eq!(out.trace.final_size(), 5);
    }

    #[test]
    fn abcabcabc() {
        let out = greedy(&bytes(b"abcabcabc"), None).unwrap();
        assert_eq!(out.grammar.size(Encoding::Fixed).unwrap().total, 8);
        assert_eq!(
            out.grammar.rules()[1],
            Rule::Plain(vec![Symbol::Terminal(97), Symbol::Terminal(98), Symbol::Terminal(99)])
        );
    }

    /// Every sequence of positive-gain repeat replacements, best final size.
    fn exhaustive_best(g: &Grammar) -> usize {
        let w = Working::from_grammar(g).unwrap();
        let here = size_of(&w);
        let mut best = here;
        let mut words: Vec<Vec<Code>> = Vec::new();
        for (_, body) in w.segments() {
            for i in 0..body.len() {
                for j in i + 2..=body.len() {
                    words.push(body[i..j].to_vec());
                }
            }
        }
        words.sort();
        words.dedup();
        for word in words {
            let mut hits = Vec::new();
            for (seg, body) in w.segments() {
                let mut p = 0;
                while p + word.len() <= body.len() {
                    if body[p..p + word.len()] == word[..] {
                        hits.push((seg, p));
                        p += word.len();
                    } else {
                        p += 1;
                    }
                }
            }
            if crate::repeat::repeat_gain(word.len(), hits.len()) <= 0 {
                continue;
            }
            let mut next = w.clone();
            next.replace_repeat(&word, &hits).unwrap();
            best = best.min(exhaustive_best(&next.to_grammar()));
        }
        best
    }

    #[test]
    fn abcabcabc_is_optimal_among_replacement_sequences() {
        let g = Grammar::straight_line(&bytes(b"abcabcabc"));
        assert_eq!(exhaustive_best(&g), 8);
    }

    #[test]
    fn no_repeats_no_motifs() {
        let out = nrgreedy_fix(&bytes(b"abcdefgh")).unwrap();
        assert_eq!(out.grammar, Grammar::straight_line(&bytes(b"abcdefgh")));
        assert_eq!(out.trace.stop_reason, StopReason::NoPositiveGain);
    }

    #[test]
    fn max_iterations_stops_early() {
        let s = bytes(b"abcabcabcxyzxyzxyzabcxyz");
        let out = greedy(&s, Some(1)).unwrap();
        assert_eq!(out.trace.steps.len(), 1);
        assert_eq!(out.trace.stop_reason, StopReason::MaxIterations);
        assert_eq!(out.grammar.expand_canonical().unwrap(), s.symbols);
    }

    #[test]
    fn empty_input() {
        assert!(matches!(greedy(&bytes(b""), None), Err(Error::EmptyInput)));
    }

    #[test]
    fn post_rejects_branching() {
        let s = Sequence::from_text("x a y x b y x c y x d y x e y x f y x g y");
        let once = post_process(&Grammar::straight_line(&s), None).unwrap();
        assert!(once.n_ctx >= 1);
        assert!(matches!(post_process(&once.grammar, None), Err(Error::NotStraightLine(_))));
    }

    #[test]
    fn post_on_flat_table() {
        // Two-field rows: every row is `<a> d d , <b> d d ;`.
        let mut s = Vec::new();
        for i in 0..40u32 {
            s.extend_from_slice(format!("<a>{:02}<b>{:02};", (i * 7) % 100, (i * 13) % 100).as_bytes());
        }
        let g = greedy(&bytes(&s), None).unwrap();
        let p = post_process(&g.grammar, None).unwrap();
        check_trace(&p.trace);
        assert!(p.trace.final_size() <= g.trace.final_size());
        assert_eq!(p.grammar.expand_canonical().unwrap(), bytes(&s).symbols);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn greedy_is_lossless_and_complete(s in proptest::collection::vec(b'a'..b'e', 1..200)) {
            let seq = bytes(&s);
            let out = greedy(&seq, None).unwrap();
            check_trace(&out.trace);
            prop_assert!(out.grammar.is_straight_line());
            prop_assert_eq!(out.grammar.expand_canonical().unwrap(), seq.symbols.clone());
            prop_assert_eq!(out.grammar.size(Encoding::Fixed).unwrap().total, out.trace.final_size());
            prop_assert!(best_repeat(&out.grammar).unwrap().is_none());
        }

        #[test]
        fn every_prefix_of_a_run_is_lossless(s in proptest::collection::vec(b'a'..b'd', 1..120), stop in 0usize..12) {
            let seq = bytes(&s);
            let g = greedy(&seq, Some(stop)).unwrap();
            prop_assert_eq!(g.grammar.expand_canonical().unwrap(), seq.symbols.clone());
            let n = nrgreedy_fix_with(&seq, NrGreedyOptions { max_iterations: Some(stop), ..Default::default() }).unwrap();
            prop_assert!(n.grammar.validate().is_empty());
            prop_assert_eq!(n.grammar.expand_canonical().unwrap(), seq.symbols.clone());
        }

        #[test]
        fn nrgreedy_is_valid_and_lossless(s in proptest::collection::vec(b'a'..b'e', 1..150)) {
            let seq = bytes(&s);
            let out = nrgreedy_fix_with(&seq, NrGreedyOptions { max_iterations: None, search: MotifSearch::default() }).unwrap();
            check_trace(&out.trace);
            prop_assert!(out.grammar.validate().is_empty());
            prop_assert_eq!(out.grammar.expand_canonical().unwrap(), seq.symbols.clone());
            prop_assert_eq!(out.grammar.size(Encoding::Fixed).unwrap().total, out.trace.final_size());
            prop_assert!(best_repeat(&out.grammar).unwrap().is_none());
            prop_assert!(best_fixed_motif(&out.grammar, None).unwrap().is_none());
        }

        #[test]
        fn post_never_grows(s in proptest::collection::vec(b'a'..b'e', 1..200)) {
            let seq = bytes(&s);
            let g = greedy(&seq, None).unwrap();
            let p = post_process(&g.grammar, None).unwrap();
            check_trace(&p.trace);
            prop_assert!(p.trace.final_size() <= g.trace.final_size());
            prop_assert_eq!(p.grammar.expand_canonical().unwrap(), seq.symbols.clone());
            prop_assert_eq!(p.n_ctx, p.grammar.branching_pairs());
            prop_assert!(best_fixed_motif(&p.grammar, Some(1)).unwrap().is_none());
        }

        #[test]
        fn deterministic(s in proptest::collection::vec(b'a'..b'd', 1..100)) {
            let seq = bytes(&s);
            let a = nrgreedy_fix(&seq).unwrap();
            let b = nrgreedy_fix(&seq).unwrap();
            prop_assert_eq!(a.grammar, b.grammar);
            prop_assert_eq!(a.trace, b.trace);
        }
    }
}
