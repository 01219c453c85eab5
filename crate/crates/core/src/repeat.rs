//! Exact repeats: non-overlapping occurrence counts, maximal repeats and the
//! best repeat under f(u) = (|u|-1)(occ(u)-1) - 2.

use std::cmp::Ordering;

use serde::Serialize;

use crate::error::Result;
use crate::grammar::{Grammar, Site, Symbol};
use crate::suffix::{lcp_array, suffix_array};
use crate::working::{is_occ, to_code, Code, SegRef, Working};

/// Searchable rule regions concatenated with unique separators, over a
/// compacted alphabet. Matchable codes keep their relative order; occurrence
/// tokens and separators get codes of their own so they never match.
pub(crate) struct SearchText {
    /// Compacted symbols.
    pub text: Vec<u32>,
    /// Codes `< matchable` can match each other.
    pub matchable: u32,
    pub alphabet: usize,
    /// (segment, start in `text`, length)
    pub segs: Vec<(SegRef, usize, usize)>,
}

impl SearchText {
    pub fn new(w: &Working) -> Self {
        let mut distinct: Vec<Code> = w.segments().flat_map(|(_, s)| s.iter().copied()).filter(|&c| !is_occ(c)).collect();
        distinct.sort_unstable();
        distinct.dedup();
        let matchable = distinct.len() as u32;
        let mut next_unique = matchable;
        let mut text = Vec::new();
        let mut segs = Vec::new();
        for (seg, body) in w.segments() {
            segs.push((seg, text.len(), body.len()));
            for &c in body {
                if is_occ(c) {
                    text.push(next_unique);
                    next_unique += 1;
                } else {
                    text.push(distinct.binary_search(&c).unwrap() as u32);
                }
            }
            text.push(next_unique);
            next_unique += 1;
        }
        SearchText {
            text,
            matchable,
            alphabet: next_unique as usize,
            segs,
        }
    }

    /// Segment index containing text position `p`.
    pub fn seg_index(&self, p: usize) -> usize {
        self.segs.partition_point(|&(_, start, _)| start <= p) - 1
    }

    pub fn locate(&self, p: usize) -> (SegRef, usize) {
        let (seg, start, _) = self.segs[self.seg_index(p)];
        (seg, p - start)
    }

    #[inline]
    pub fn is_matchable(&self, p: usize) -> bool {
        self.text[p] < self.matchable
    }
}

/// Leftmost-greedy selection over sorted starts; returns the selected count.
pub(crate) fn greedy_count(sorted: &[u32], len: usize) -> usize {
    let mut count = 0;
    let mut free = 0usize;
    for &p in sorted {
        if p as usize >= free {
            count += 1;
            free = p as usize + len;
        }
    }
    count
}

pub(crate) fn greedy_select(sorted: &[u32], len: usize) -> Vec<u32> {
    let mut out = Vec::new();
    let mut free = 0usize;
    for &p in sorted {
        if p as usize >= free {
            out.push(p);
            free = p as usize + len;
        }
    }
    out
}

/// Net size reduction of replacing `occ` non-overlapping occurrences of a
/// word of length `len` by a new nonterminal.
pub fn repeat_gain(len: usize, occ: usize) -> i64 {
    (len as i64 - 1) * (occ as i64 - 1) - 2
}

/// A word with its leftmost-greedy non-overlapping occurrences.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RepeatStats {
    pub word: Vec<Symbol>,
    pub occ: usize,
    pub positions: Vec<Site>,
}

/// One LCP interval: the suffixes `sa[lb..=rb]` share a prefix of length
/// `lcp`; the strings of length `(parent, lcp]` of that prefix occur exactly
/// at those positions.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Interval {
    pub lcp: u32,
    pub parent: u32,
    pub lb: u32,
    pub rb: u32,
}

impl Interval {
    pub fn width(&self) -> usize {
        (self.rb - self.lb + 1) as usize
    }
}

pub(crate) struct RepeatIndex {
    pub st: SearchText,
    pub sa: Vec<u32>,
    pub lcp: Vec<u32>,
}

#[derive(Clone, Debug)]
pub(crate) struct RepeatChoice {
    pub len: usize,
    pub gain: i64,
    /// Selected starts, text positions, ascending.
    pub starts: Vec<u32>,
}

impl RepeatIndex {
    pub fn new(w: &Working) -> Self {
        let st = SearchText::new(w);
        let sa = suffix_array(&st.text, st.alphabet);
        let lcp = lcp_array(&st.text, &sa);
        RepeatIndex { st, sa, lcp }
    }

    /// All LCP intervals with `lcp >= 1`, bottom-up.
    pub fn intervals(&self) -> Vec<Interval> {
        let n = self.sa.len();
        let mut out = Vec::new();
        // (lcp, lb)
        let mut stack: Vec<(u32, u32)> = vec![(0, 0)];
        for i in 1..=n {
            let cur = if i < n { self.lcp[i] } else { 0 };
            let mut lb = (i - 1) as u32;
            while cur < stack.last().unwrap().0 {
                let (l, b) = stack.pop().unwrap();
                lb = b;
                let parent = cur.max(stack.last().unwrap().0);
                out.push(Interval {
                    lcp: l,
                    parent,
                    lb,
                    rb: (i - 1) as u32,
                });
            }
            if cur > stack.last().unwrap().0 {
                stack.push((cur, lb));
            }
        }
        out
    }

    fn sorted_positions(&self, iv: &Interval, buf: &mut Vec<u32>) {
        buf.clear();
        buf.extend_from_slice(&self.sa[iv.lb as usize..=iv.rb as usize]);
        buf.sort_unstable();
    }

    /// Compares the words of length `len` starting at text positions `a`, `b`.
    pub fn cmp_words(&self, a: usize, b: usize, len: usize) -> Ordering {
        self.st.text[a..a + len].cmp(&self.st.text[b..b + len])
    }

    /// Best repeat with gain at least `min_gain`; ties prefer longer words,
    /// then lexicographically smaller ones.
    pub fn best(&self, min_gain: i64) -> Option<RepeatChoice> {
        let mut ivs: Vec<(i64, Interval)> = self
            .intervals()
            .into_iter()
            .filter(|iv| iv.lcp >= 2)
            .map(|iv| (repeat_gain(iv.lcp as usize, iv.width()), iv))
            .filter(|(b, _)| *b >= min_gain)
            .collect();
        ivs.sort_unstable_by_key(|a| std::cmp::Reverse(a.0));
        // (gain, len, representative position, interval)
        let mut best: Option<(i64, usize, usize, Interval)> = None;
        let mut buf = Vec::new();
        let better = |idx: &Self, g: i64, len: usize, pos: usize, cur: &Option<(i64, usize, usize, Interval)>| match cur {
            None => true,
            Some((bg, bl, bp, _)) => (g, len).cmp(&(*bg, *bl)).then_with(|| idx.cmp_words(*bp, pos, len)) == Ordering::Greater,
        };
        for (bound, iv) in ivs {
            if let Some((bg, ..)) = best {
                if bound < bg {
                    break;
                }
            }
            self.sorted_positions(&iv, &mut buf);
            let m = buf.len();
            let l = iv.lcp as usize;
            let min_gap = buf.windows(2).map(|w| (w[1] - w[0]) as usize).min().unwrap_or(usize::MAX);
            let span = (buf[m - 1] - buf[0]) as usize;
            let lo = (iv.parent as usize + 1).max(2);
            let pos = buf[0] as usize;
            let mut len = l;
            while len >= lo {
                if len <= min_gap {
                    // Every shorter length keeps all m occurrences.
                    let g = repeat_gain(len, m);
                    if g >= min_gain && better(self, g, len, pos, &best) {
                        best = Some((g, len, pos, iv));
                    }
                    break;
                }
                let cap = (m).min(span / len + 1);
                let ub = repeat_gain(len, cap);
                let beaten = match best {
                    Some((bg, bl, ..)) => (ub, len) < (bg, bl),
                    None => ub < min_gain,
                };
                if !beaten {
                    let occ = greedy_count(&buf, len);
                    let g = repeat_gain(len, occ);
                    if g >= min_gain && better(self, g, len, pos, &best) {
                        best = Some((g, len, pos, iv));
                    }
                }
                len -= 1;
            }
        }
        let (gain, len, _, iv) = best?;
        self.sorted_positions(&iv, &mut buf);
        Some(RepeatChoice {
            len,
            gain,
            starts: greedy_select(&buf, len),
        })
    }

    /// Maximal repeats of length >= 2 (left- and right-maximal), as
    /// (interval, sorted positions).
    pub fn maximal(&self) -> Vec<(Interval, Vec<u32>)> {
        let mut out = Vec::new();
        for iv in self.intervals() {
            if iv.lcp < 2 {
                continue;
            }
            let mut left = None;
            let mut diverse = false;
            for &p in &self.sa[iv.lb as usize..=iv.rb as usize] {
                let c = if p == 0 {
                    u32::MAX
                } else {
                    let c = self.st.text[p as usize - 1];
                    if c >= self.st.matchable {
                        u32::MAX - 1
                    } else {
                        c
                    }
                };
                // Text start and unmatchable left neighbours are unique.
                if c >= u32::MAX - 1 {
                    diverse = true;
                    break;
                }
                match left {
                    None => left = Some(c),
                    Some(x) if x != c => {
                        diverse = true;
                        break;
                    }
                    _ => {}
                }
            }
            if diverse {
                let mut pos = self.sa[iv.lb as usize..=iv.rb as usize].to_vec();
                pos.sort_unstable();
                out.push((iv, pos));
            }
        }
        out
    }

    /// Number of distinct substrings occurring at least twice.
    pub fn distinct_repeated(&self) -> u64 {
        let mut total = 0u64;
        for i in 1..self.lcp.len() {
            total += self.lcp[i].saturating_sub(self.lcp[i - 1]) as u64;
        }
        total
    }
}

pub(crate) fn site_of(w: &Working, seg: SegRef, off: usize) -> Site {
    match seg {
        SegRef::Plain(r) | SegRef::Prefix(r) => Site::new(r as usize, 0, off),
        SegRef::Suffix(r) => {
            let plen = w.segment(SegRef::Prefix(r)).len();
            Site::new(r as usize, 0, plen + 1 + off)
        }
    }
}

fn word_at(g: &Grammar, w: &Working, st: &SearchText, p: usize, len: usize) -> Vec<Symbol> {
    let (seg, off) = st.locate(p);
    let site = site_of(w, seg, off);
    let rule = &g.rules()[site.rule as usize];
    (0..len).map(|i| rule.slot_symbol(0, site.offset as usize + i)).collect()
}

fn stats(g: &Grammar, w: &Working, st: &SearchText, starts: &[u32], len: usize) -> RepeatStats {
    RepeatStats {
        word: word_at(g, w, st, starts[0] as usize, len),
        occ: starts.len(),
        positions: starts
            .iter()
            .map(|&p| {
                let (seg, off) = st.locate(p as usize);
                site_of(w, seg, off)
            })
            .collect(),
    }
}

/// All maximal repeats of length >= 2 with at least two non-overlapping
/// occurrences. Searches plain bodies and outer contexts; outer occurrences
/// and inner expansions are opaque.
pub fn maximal_repeats(g: &Grammar) -> Result<Vec<RepeatStats>> {
    let w = Working::from_grammar(g)?;
    let idx = RepeatIndex::new(&w);
    let mut out: Vec<RepeatStats> = idx
        .maximal()
        .into_iter()
        .filter_map(|(iv, pos)| {
            let len = iv.lcp as usize;
            let sel = greedy_select(&pos, len);
            (sel.len() >= 2).then(|| stats(g, &w, &idx.st, &sel, len))
        })
        .collect();
    out.sort_by(|a, b| a.word.cmp(&b.word));
    Ok(out)
}

/// Leftmost-greedy non-overlapping occurrences of `word` across all
/// searchable rule regions.
pub fn occ_nonoverlap(g: &Grammar, word: &[Symbol]) -> Result<RepeatStats> {
    let w = Working::from_grammar(g)?;
    let codes: Vec<Code> = word.iter().map(|&s| to_code(s)).collect();
    let mut positions = Vec::new();
    if !codes.is_empty() {
        for (seg, body) in w.segments() {
            let mut p = 0;
            while p + codes.len() <= body.len() {
                if body[p..p + codes.len()] == codes[..] {
                    positions.push(site_of(&w, seg, p));
                    p += codes.len();
                } else {
                    p += 1;
                }
            }
        }
    }
    Ok(RepeatStats {
        word: word.to_vec(),
        occ: positions.len(),
        positions,
    })
}

/// The repeat maximizing f(u); `None` if no repeat has positive gain.
pub fn best_repeat(g: &Grammar) -> Result<Option<(RepeatStats, i64)>> {
    let w = Working::from_grammar(g)?;
    let idx = RepeatIndex::new(&w);
    Ok(idx.best(1).map(|c| (stats(g, &w, &idx.st, &c.starts, c.len), c.gain)))
}

/// Repeat counts of a sequence normalised in two ways.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct RepeatCounts {
    /// Maximal repeats (length >= 2, occurring at least twice, possibly
    /// overlapping).
    pub maximal: u64,
    /// Distinct substrings occurring at least twice.
    pub distinct: u64,
}

pub fn repeat_counts(symbols: &[u32]) -> RepeatCounts {
    let w = Working::from_sequence(crate::grammar::Alphabet::Bytes, symbols);
    let idx = RepeatIndex::new(&w);
    RepeatCounts {
        maximal: idx.maximal().len() as u64,
        distinct: idx.distinct_repeated(),
    }
}
