//! Gapped motifs `u.^k v` (exactly k symbols between u and v) and `u.*v`
//! (at least one), their gains and the outer/inner rewrite.
//!
//! Search treats every occurrence of an outer nonterminal as a symbol of its
//! own: it never takes part in `u` or `v` but may sit inside a gap. Inner
//! expansions are not searched.

use std::cmp::Ordering;

use rustc_hash::FxHashMap;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grammar::{Encoding, Grammar, Site, Symbol};
use crate::repeat::{greedy_count, greedy_select, site_of, RepeatIndex, SearchText};
use crate::suffix::{lcp_array, suffix_array};
use crate::working::{to_code, Code, SegRef, WRule, Working};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Gap {
    Fixed(usize),
    Variable,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Realization {
    /// Position of the first symbol of `u`.
    pub site: Site,
    pub expansion: Vec<Symbol>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MotifCandidate {
    pub u: Vec<Symbol>,
    pub v: Vec<Symbol>,
    pub gap: Gap,
    /// Selected non-overlapping realizations, left to right.
    pub realizations: Vec<Realization>,
}

impl MotifCandidate {
    pub fn occ(&self) -> usize {
        self.realizations.len()
    }
}

/// Size reduction of replacing `occ` realizations of a fixed-gap motif,
/// under the fixed-length encoding.
pub fn fixed_gain(u_len: usize, v_len: usize, occ: usize) -> i64 {
    (u_len as i64 + v_len as i64 - 1) * (occ as i64 - 1) - 4
}

pub fn gain_fixed(m: &MotifCandidate) -> i64 {
    fixed_gain(m.u.len(), m.v.len(), m.occ())
}

/// Exact size change of applying a variable-gap motif, measured on the
/// rewritten grammar under the variable-length encoding.
pub fn gain_variable(m: &MotifCandidate, g: &Grammar) -> Result<i64> {
    let before = g.size(Encoding::Variable)?.total as i64;
    let after = replace_motif(g, m)?.size(Encoding::Variable)?.total as i64;
    Ok(before - after)
}

/// Search limits. `None` means unbounded.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MotifSearch {
    /// Longest `u` and longest `v` considered.
    pub max_context: Option<usize>,
    /// Largest gap `k` considered.
    pub max_gap: Option<usize>,
}

fn region_of(w: &Working, site: Site) -> Result<(SegRef, usize)> {
    let stale = || Error::Stale(format!("{site} is not in a searchable rule region"));
    let off = site.offset as usize;
    match w.rules.get(site.rule as usize) {
        Some(WRule::Plain(_)) if site.alt == 0 => Ok((SegRef::Plain(site.rule), off)),
        Some(WRule::Outer { prefix, .. }) if site.alt == 0 => {
            if off < prefix.len() {
                Ok((SegRef::Prefix(site.rule), off))
            } else if off > prefix.len() {
                Ok((SegRef::Suffix(site.rule), off - prefix.len() - 1))
            } else {
                Err(stale())
            }
        }
        _ => Err(stale()),
    }
}

fn symbols_at(g: &Grammar, site: Site, len: usize) -> Vec<Symbol> {
    let rule = &g.rules()[site.rule as usize];
    (0..len).map(|i| rule.slot_symbol(0, site.offset as usize + i)).collect()
}

/// Indices of the realizations `(segment, start, gap)` to keep so that the
/// rewrite stays acyclic: a realization whose gap derives a rule holding
/// another kept realization is dropped, first offender first.
pub(crate) fn acyclic_subset(w: &Working, hits: &[(SegRef, usize, usize)], a: usize) -> Vec<usize> {
    let mut keep: Vec<usize> = (0..hits.len()).collect();
    let gap = |i: usize| {
        let (seg, p, k) = hits[i];
        &w.segment(seg)[p + a..p + a + k]
    };
    if !keep.iter().any(|&i| gap(i).iter().any(|&c| w.rule_of(c).is_some())) {
        return keep;
    }
    loop {
        let mut hosts = vec![false; w.rules.len()];
        for &i in &keep {
            hosts[seg_rule(hits[i].0)] = true;
        }
        let anc = w.ancestors_of(&hosts);
        let bad = keep
            .iter()
            .position(|&i| gap(i).iter().any(|&c| w.rule_of(c).is_some_and(|r| anc[r])));
        match bad {
            Some(j) => {
                keep.remove(j);
            }
            None => return keep,
        }
    }
}

fn seg_rule(s: SegRef) -> usize {
    match s {
        SegRef::Plain(r) | SegRef::Prefix(r) | SegRef::Suffix(r) => r as usize,
    }
}

/// Rewrites every realization of `m` to an occurrence of a fresh outer rule
/// `O -> u I v`, with `I` listing the gap contents. Rule ids of `g` are kept;
/// `O` and `I` are appended.
pub fn replace_motif(g: &Grammar, m: &MotifCandidate) -> Result<Grammar> {
    if m.u.is_empty() || m.v.is_empty() {
        return Err(Error::Stale("motif contexts must be non-empty".into()));
    }
    let mut w = Working::from_grammar(g)?;
    let u: Vec<Code> = m.u.iter().map(|&s| to_code(s)).collect();
    let v: Vec<Code> = m.v.iter().map(|&s| to_code(s)).collect();
    let mut hits = Vec::with_capacity(m.occ());
    for r in &m.realizations {
        let (seg, off) = region_of(&w, r.site)?;
        let k = r.expansion.len();
        if let Gap::Fixed(f) = m.gap {
            if f != k {
                return Err(Error::Stale(format!("expansion at {} has length {k}, gap is {f}", r.site)));
            }
        }
        if k == 0 {
            return Err(Error::Stale(format!("empty expansion at {}", r.site)));
        }
        // Compare what the site holds with the recorded expansion.
        let body = w.segment(seg);
        let gap = body.get(off + u.len()..off + u.len() + k);
        let want: Vec<Symbol> = symbols_at(g, site_of(&w, seg, off + u.len()), gap.map_or(0, |x| x.len()));
        if gap.is_none() || want != r.expansion {
            return Err(Error::Stale(format!("realization at {} does not match", r.site)));
        }
        hits.push((seg, off, k));
    }
    if acyclic_subset(&w, &hits, u.len()).len() != hits.len() {
        return Err(Error::Stale("rewrite would make a rule derive itself".into()));
    }
    let fixed = match m.gap {
        Gap::Fixed(k) => Some(k),
        Gap::Variable => None,
    };
    w.replace_motif_gaps(&u, &v, &hits, fixed)?;
    Ok(w.to_grammar())
}

fn candidate(g: &Grammar, w: &Working, st: &SearchText, a: usize, k: Option<usize>, b: usize, starts: &[(u32, usize)]) -> MotifCandidate {
    let first = starts[0].0 as usize;
    let (seg, off) = st.locate(first);
    let site0 = site_of(w, seg, off);
    let u = symbols_at(g, site0, a);
    let kk = starts[0].1;
    let v = symbols_at(g, Site::new(site0.rule as usize, 0, site0.offset as usize + a + kk), b);
    let realizations = starts
        .iter()
        .map(|&(p, k)| {
            let (seg, off) = st.locate(p as usize);
            let site = site_of(w, seg, off);
            Realization {
                site,
                expansion: symbols_at(g, Site::new(site.rule as usize, 0, site.offset as usize + a), k),
            }
        })
        .collect();
    MotifCandidate {
        u,
        v,
        gap: k.map_or(Gap::Variable, Gap::Fixed),
        realizations,
    }
}

/// The acyclic subset of `hits`, as realizations.
fn realizations(g: &Grammar, w: &Working, hits: &[(SegRef, usize, usize)], a: usize) -> Vec<Realization> {
    acyclic_subset(w, hits, a)
        .into_iter()
        .map(|i| {
            let (seg, p, k) = hits[i];
            let site = site_of(w, seg, p);
            Realization {
                site,
                expansion: symbols_at(g, Site::new(site.rule as usize, 0, site.offset as usize + a), k),
            }
        })
        .collect()
}

/// Realizations of `u.^k v`, leftmost-greedy, minus those that would make
/// the rewrite cyclic.
pub fn find_fixed_motif(g: &Grammar, u: &[Symbol], k: usize, v: &[Symbol]) -> Result<MotifCandidate> {
    let w = Working::from_grammar(g)?;
    let uc: Vec<Code> = u.iter().map(|&s| to_code(s)).collect();
    let vc: Vec<Code> = v.iter().map(|&s| to_code(s)).collect();
    let mut hits = Vec::new();
    let len = uc.len() + k + vc.len();
    for (seg, body) in w.segments() {
        let mut p = 0;
        while p + len <= body.len() {
            if body[p..p + uc.len()] == uc[..] && body[p + uc.len() + k..p + len] == vc[..] {
                hits.push((seg, p, k));
                p += len;
            } else {
                p += 1;
            }
        }
    }
    Ok(MotifCandidate {
        u: u.to_vec(),
        v: v.to_vec(),
        gap: Gap::Fixed(k),
        realizations: realizations(g, &w, &hits, uc.len()),
    })
}

/// Realizations of `u.*v`: scanning left to right, an occurrence of `u`
/// followed by the nearest occurrence of `v` that leaves a non-empty gap.
pub fn find_variable_motif(g: &Grammar, u: &[Symbol], v: &[Symbol]) -> Result<MotifCandidate> {
    let w = Working::from_grammar(g)?;
    let uc: Vec<Code> = u.iter().map(|&s| to_code(s)).collect();
    let vc: Vec<Code> = v.iter().map(|&s| to_code(s)).collect();
    let mut hits = Vec::new();
    for (seg, body) in w.segments() {
        hits.extend(variable_realizations(body, &uc, &vc).into_iter().map(|(p, k)| (seg, p, k)));
    }
    Ok(MotifCandidate {
        u: u.to_vec(),
        v: v.to_vec(),
        gap: Gap::Variable,
        realizations: realizations(g, &w, &hits, uc.len()),
    })
}

/// (start, gap length) of the realizations of `u.*v` in `body`.
pub(crate) fn variable_realizations<T: PartialEq>(body: &[T], u: &[T], v: &[T]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    if u.is_empty() || v.is_empty() {
        return out;
    }
    let mut p = 0;
    while p + u.len() < body.len() {
        if body[p..p + u.len()] == *u {
            let from = p + u.len() + 1;
            let hit = (from..=body.len().saturating_sub(v.len())).find(|&q| body[q..q + v.len()] == *v);
            if let Some(q) = hit {
                out.push((p, q - p - u.len()));
                p = q + v.len();
                continue;
            }
        }
        p += 1;
    }
    out
}

/// The fixed-gap motif of highest gain over all `u`, `v` and `k` (within
/// `max_context`); `None` unless some motif has positive gain. Ties prefer
/// longer `|u|+|v|`, then smaller `k`, then smaller `u`, then smaller `v`.
pub fn best_fixed_motif(g: &Grammar, max_context: Option<usize>) -> Result<Option<(MotifCandidate, i64)>> {
    let search = MotifSearch {
        max_context,
        max_gap: None,
    };
    best_motif_with(g, search)
}

pub fn best_motif_with(g: &Grammar, search: MotifSearch) -> Result<Option<(MotifCandidate, i64)>> {
    let w = Working::from_grammar(g)?;
    let idx = RepeatIndex::new(&w);
    let mut finder = MotifFinder::new(&idx);
    Ok(finder.best_acyclic(&w, search, 1).map(|c| {
        let starts: Vec<(u32, usize)> = c.starts.iter().map(|&p| (p, c.k)).collect();
        (candidate(g, &w, &idx.st, c.a, Some(c.k), c.b, &starts), c.gain)
    }))
}

/// Winner of a motif search, in search-text coordinates.
#[derive(Clone, Debug)]
pub(crate) struct MotifChoice {
    pub a: usize,
    pub k: usize,
    pub b: usize,
    pub gain: i64,
    /// Realization starts (first symbol of `u`), ascending.
    pub starts: Vec<u32>,
}

/// Counters for symbol pairs: a flat table when it fits, a hash map
/// otherwise.
enum PairCounts {
    Dense(Vec<u16>),
    Sparse(FxHashMap<u64, usize>),
}

impl PairCounts {
    fn new(h: u64) -> Self {
        if h * h <= 1 << 25 {
            PairCounts::Dense(vec![0; (h * h) as usize])
        } else {
            PairCounts::Sparse(FxHashMap::default())
        }
    }

    /// Increments and returns the new count (saturating).
    fn incr(&mut self, pair: u64) -> usize {
        match self {
            PairCounts::Dense(t) => {
                let c = &mut t[pair as usize];
                *c = c.saturating_add(1);
                *c as usize
            }
            PairCounts::Sparse(m) => {
                let c = m.entry(pair).or_insert(0);
                *c += 1;
                *c
            }
        }
    }

    fn get(&self, pair: u64) -> usize {
        match self {
            PairCounts::Dense(t) => t[pair as usize] as usize,
            PairCounts::Sparse(m) => m.get(&pair).copied().unwrap_or(0),
        }
    }

    fn reset(&mut self, pair: u64) {
        match self {
            PairCounts::Dense(t) => t[pair as usize] = 0,
            PairCounts::Sparse(m) => {
                m.remove(&pair);
            }
        }
    }
}

/// Range-minimum over a fixed array.
struct SparseMin {
    levels: Vec<Vec<u32>>,
}

impl SparseMin {
    fn new(a: &[u32]) -> Self {
        let mut levels = vec![a.to_vec()];
        let mut w = 1;
        while 2 * w <= a.len() {
            let prev = levels.last().unwrap();
            let next: Vec<u32> = (0..=a.len() - 2 * w).map(|i| prev[i].min(prev[i + w])).collect();
            levels.push(next);
            w *= 2;
        }
        SparseMin { levels }
    }

    /// Minimum of `a[lo..=hi]`.
    fn min(&self, lo: usize, hi: usize) -> u32 {
        let len = hi - lo + 1;
        let j = usize::BITS as usize - 1 - len.leading_zeros() as usize;
        self.levels[j][lo].min(self.levels[j][hi + 1 - (1 << j)])
    }
}

/// Left contexts: suffix ranks of the reversed text.
struct Reverse {
    rank: Vec<u32>,
    rmq: SparseMin,
}

impl Reverse {
    fn new(text: &[u32], alphabet: usize) -> Self {
        let rev: Vec<u32> = text.iter().rev().copied().collect();
        let sa = suffix_array(&rev, alphabet);
        let lcp = lcp_array(&rev, &sa);
        let mut rank = vec![0u32; rev.len()];
        for (i, &p) in sa.iter().enumerate() {
            rank[p as usize] = i as u32;
        }
        Reverse {
            rank,
            rmq: SparseMin::new(&lcp),
        }
    }

    /// Rank of the left context ending just before text position `q`.
    fn rank_before(&self, q: usize) -> u32 {
        self.rank[self.rank.len() - q]
    }

    /// Common left extension of the contexts with reversed ranks `r1 < r2`.
    fn lcp(&self, r1: u32, r2: u32) -> u32 {
        self.rmq.min(r1 as usize + 1, r2 as usize)
    }
}

/// Current best during a search; `key` order is gain, then length, then
/// smaller k, then lexicographic (u, v).
struct Best {
    gain: i64,
    len: usize,
    k: usize,
    a: usize,
    q: usize,
    starts: Vec<u32>,
}

pub(crate) struct MotifFinder<'a> {
    idx: &'a RepeatIndex,
    seg_of: Vec<u32>,
    seg_lens: Vec<usize>,
    reverse: Option<Reverse>,
    /// (u, k, v) in search-text codes, skipped by the search.
    excluded: Vec<(Vec<u32>, usize, Vec<u32>)>,
}

/// One LCP interval over a member list: members `lb..=rb` share a context of
/// every length in `(parent, lcp]`.
#[derive(Clone, Copy)]
struct Span {
    lcp: u32,
    parent: u32,
    lb: u32,
    rb: u32,
}

fn spans(adj: &[u32]) -> Vec<Span> {
    let n = adj.len();
    let mut out = Vec::new();
    let mut stack: Vec<(u32, u32)> = vec![(0, 0)];
    for i in 1..=n {
        let cur = if i < n { adj[i] } else { 0 };
        let mut lb = (i - 1) as u32;
        while cur < stack.last().unwrap().0 {
            let (l, b) = stack.pop().unwrap();
            lb = b;
            let parent = cur.max(stack.last().unwrap().0);
            out.push(Span {
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

impl<'a> MotifFinder<'a> {
    pub fn new(idx: &'a RepeatIndex) -> Self {
        let st = &idx.st;
        let mut seg_of = vec![0u32; st.text.len()];
        let mut seg_lens = Vec::with_capacity(st.segs.len());
        for (i, &(_, start, len)) in st.segs.iter().enumerate() {
            seg_of[start..=start + len].fill(i as u32);
            seg_lens.push(len);
        }
        MotifFinder {
            idx,
            seg_of,
            seg_lens,
            reverse: None,
            excluded: Vec::new(),
        }
    }

    fn text(&self) -> &[u32] {
        &self.idx.st.text
    }

    /// Upper bound on non-overlapping realizations of length `span`.
    fn max_occ(&self, span: usize) -> usize {
        self.seg_lens.iter().map(|&l| l / span).sum()
    }

    /// Compares the candidate (gain, len, k, u, v) with the current best.
    fn beats(&self, best: &Option<Best>, gain: i64, len: usize, k: usize, a: usize, q: usize) -> bool {
        let Some(b) = best else { return true };
        match (gain, len).cmp(&(b.gain, b.len)).then(b.k.cmp(&k)) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => self.cmp_uv(q, a, len - a, k, b.q, b.a, b.len - b.a, b.k) == Ordering::Less,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn cmp_uv(&self, q1: usize, a1: usize, b1: usize, k1: usize, q2: usize, a2: usize, b2: usize, k2: usize) -> Ordering {
        let t = self.text();
        t[q1 - a1..q1]
            .cmp(&t[q2 - a2..q2])
            .then_with(|| t[q1 + k1..q1 + k1 + b1].cmp(&t[q2 + k2..q2 + k2 + b2]))
    }

    /// Whether `q` can start a gap of length `k` between two matchable
    /// symbols of the same rule region.
    fn valid_gap(&self, q: usize, k: usize) -> bool {
        let st = &self.idx.st;
        q >= 1 && q + k < st.text.len() && st.is_matchable(q - 1) && st.is_matchable(q + k) && self.seg_of[q - 1] == self.seg_of[q + k]
    }

    fn is_excluded(&self, q: usize, a: usize, b: usize, k: usize) -> bool {
        let t = self.text();
        self.excluded
            .iter()
            .any(|(u, kk, v)| *kk == k && u[..] == t[q - a..q] && v[..] == t[q + k..q + k + b])
    }

    fn cmp_choice(&self, x: &MotifChoice, y: &MotifChoice) -> Ordering {
        (x.gain, x.a + x.b).cmp(&(y.gain, y.a + y.b)).then(y.k.cmp(&x.k)).then_with(|| {
            let (qx, qy) = (x.starts[0] as usize + x.a, y.starts[0] as usize + y.a);
            self.cmp_uv(qy, y.a, y.b, y.k, qx, x.a, x.b, x.k)
        })
    }

    /// Best motif whose rewrite keeps `w` acyclic. A winner that loses
    /// realizations to the cycle check competes with its reduced gain
    /// against a fresh search that skips it.
    pub fn best_acyclic(&mut self, w: &Working, search: MotifSearch, min_gain: i64) -> Option<MotifChoice> {
        self.excluded.clear();
        let mut fallback: Option<MotifChoice> = None;
        loop {
            let floor = fallback.as_ref().map_or(min_gain, |f| f.gain.max(min_gain));
            let Some(c) = self.best(search, floor) else { break };
            let hits: Vec<(SegRef, usize, usize)> = c
                .starts
                .iter()
                .map(|&p| {
                    let (seg, off) = self.idx.st.locate(p as usize);
                    (seg, off, c.k)
                })
                .collect();
            let keep = acyclic_subset(w, &hits, c.a);
            if keep.len() == hits.len() {
                return match fallback {
                    Some(f) if self.cmp_choice(&f, &c) == Ordering::Greater => Some(f),
                    _ => Some(c),
                };
            }
            let t = self.text();
            let q = c.starts[0] as usize + c.a;
            self.excluded
                .push((t[q - c.a..q].to_vec(), c.k, t[q + c.k..q + c.k + c.b].to_vec()));
            let reduced = MotifChoice {
                gain: fixed_gain(c.a, c.b, keep.len()),
                starts: keep.iter().map(|&i| c.starts[i]).collect(),
                ..c
            };
            let better = reduced.starts.len() >= 2
                && reduced.gain >= min_gain
                && fallback.as_ref().is_none_or(|f| self.cmp_choice(&reduced, f) == Ordering::Greater);
            if better {
                fallback = Some(reduced);
            }
        }
        fallback
    }

    pub fn best(&mut self, search: MotifSearch, min_gain: i64) -> Option<MotifChoice> {
        let n = self.text().len();
        let max_ctx = search.max_context.unwrap_or(usize::MAX).max(1);
        let max_gap = search.max_gap.unwrap_or(n).min(n);
        let mut best: Option<Best> = None;
        if max_ctx == 1 {
            self.context_one(max_gap, min_gain, &mut best);
        } else {
            if self.reverse.is_none() {
                self.reverse = Some(Reverse::new(self.text(), self.idx.st.alphabet));
            }
            self.general(max_ctx, max_gap, min_gain, &mut best);
        }
        best.map(|b| MotifChoice {
            a: b.a,
            k: b.k,
            b: b.len - b.a,
            gain: b.gain,
            starts: b.starts.iter().map(|&q| q - b.a as u32).collect(),
        })
    }

    fn threshold(best: &Option<Best>, min_gain: i64) -> i64 {
        best.as_ref().map_or(min_gain, |b| b.gain.max(min_gain))
    }

    /// `|u| = |v| = 1`. For each gap, raw pair counts over symbols frequent
    /// enough to win, then exact leftmost-greedy counts for the pairs whose
    /// raw count clears the bar.
    fn context_one(&self, max_gap: usize, min_gain: i64, best: &mut Option<Best>) {
        let t = self.text();
        let n = t.len();
        let matchable = self.idx.st.matchable as usize;
        let need_for = |gain: i64| (gain + 5).max(2) as usize;
        let floor = need_for(min_gain);
        let mut freq = vec![0usize; matchable];
        for &c in t {
            if (c as usize) < matchable {
                freq[c as usize] += 1;
            }
        }
        // Dense ids follow code order, so pair order is lexicographic order.
        const NONE: u32 = u32::MAX;
        let mut dense = vec![NONE; matchable];
        let mut h = 0u32;
        for (c, &f) in freq.iter().enumerate() {
            if f >= floor {
                dense[c] = h;
                h += 1;
            }
        }
        if h == 0 {
            return;
        }
        let id: Vec<u32> = t
            .iter()
            .map(|&c| if (c as usize) < matchable { dense[c as usize] } else { NONE })
            .collect();
        let mut counts = PairCounts::new(h as u64);
        let mut touched: Vec<u64> = Vec::new();
        let mut cands: FxHashMap<u64, usize> = FxHashMap::default();
        let mut state: Vec<(usize, Vec<u32>)> = Vec::new();
        for k in 1..=max_gap {
            // A later gap only wins with a strictly larger gain.
            let need = best.as_ref().map_or(floor, |b| need_for(b.gain + 1).max(floor));
            if self.max_occ(k + 2) < need {
                break;
            }
            touched.clear();
            for q in 1..n.saturating_sub(k) {
                let (x, y) = (id[q - 1], id[q + k]);
                if x == NONE || y == NONE || self.seg_of[q - 1] != self.seg_of[q + k] {
                    continue;
                }
                let pair = x as u64 * h as u64 + y as u64;
                if counts.incr(pair) == 1 {
                    touched.push(pair);
                }
            }
            cands.clear();
            for &pair in &touched {
                if counts.get(pair) >= need.min(u16::MAX as usize) {
                    let slot = cands.len();
                    cands.insert(pair, slot);
                }
                counts.reset(pair);
            }
            if cands.is_empty() {
                continue;
            }
            state.clear();
            state.resize(cands.len(), (0, Vec::new()));
            for q in 1..n.saturating_sub(k) {
                let (x, y) = (id[q - 1], id[q + k]);
                if x == NONE || y == NONE || self.seg_of[q - 1] != self.seg_of[q + k] {
                    continue;
                }
                if let Some(&slot) = cands.get(&(x as u64 * h as u64 + y as u64)) {
                    let e = &mut state[slot];
                    if q > e.0 {
                        e.0 = q - 1 + k + 2;
                        e.1.push(q as u32);
                    }
                }
            }
            for (_, qs) in state.drain(..) {
                let gain = fixed_gain(1, 1, qs.len());
                if gain < min_gain || qs.len() < 2 {
                    continue;
                }
                let q = qs[0] as usize;
                if !self.is_excluded(q, 1, 1, k) && self.beats(best, gain, 2, k, 1, q) {
                    *best = Some(Best {
                        gain,
                        len: 2,
                        k,
                        a: 1,
                        q,
                        starts: qs,
                    });
                }
            }
        }
    }

    fn general(&self, max_ctx: usize, max_gap: usize, min_gain: i64, best: &mut Option<Best>) {
        let idx = self.idx;
        let n = self.text().len();
        let rev = self.reverse.as_ref().unwrap();
        let longest = idx.lcp.iter().copied().max().unwrap_or(0) as usize;
        let side = longest.min(max_ctx).max(1);
        let mut members: Vec<u32> = Vec::new();
        let mut adj: Vec<u32> = Vec::new();
        for k in 1..=max_gap {
            let occ_cap = self.max_occ(k + 2);
            if occ_cap < 2 || fixed_gain(side, side, occ_cap) < Self::threshold(best, min_gain) {
                break;
            }
            // Gap starts ordered by their right context.
            members.clear();
            adj.clear();
            let mut run = u32::MAX;
            for r in 0..n {
                if r > 0 {
                    run = run.min(idx.lcp[r]);
                }
                let s = idx.sa[r] as usize;
                if s < k || !self.valid_gap(s - k, k) {
                    continue;
                }
                adj.push(if members.is_empty() { 0 } else { run });
                members.push((s - k) as u32);
                run = u32::MAX;
            }
            let mut right: Vec<(i64, Span)> = spans(&adj)
                .into_iter()
                .filter(|sp| sp.lcp >= 1 && (sp.parent as usize) < max_ctx)
                .map(|sp| {
                    let b = (sp.lcp as usize).min(max_ctx);
                    let c = (sp.rb - sp.lb + 1) as usize;
                    (fixed_gain(side, b, c.min(occ_cap)), sp)
                })
                .collect();
            right.sort_unstable_by_key(|x| std::cmp::Reverse(x.0));
            for (bound, sp) in right {
                if bound < Self::threshold(best, min_gain) {
                    break;
                }
                self.evaluate_right(rev, &members[sp.lb as usize..=sp.rb as usize], sp, k, max_ctx, min_gain, best);
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn evaluate_right(&self, rev: &Reverse, members: &[u32], sp: Span, k: usize, max_ctx: usize, min_gain: i64, best: &mut Option<Best>) {
        let b_lo = sp.parent as usize + 1;
        let b_hi = (sp.lcp as usize).min(max_ctx);
        let mut by_left: Vec<(u32, u32)> = members.iter().map(|&q| (rev.rank_before(q as usize), q)).collect();
        by_left.sort_unstable();
        let adj: Vec<u32> = (0..by_left.len())
            .map(|i| if i == 0 { 0 } else { rev.lcp(by_left[i - 1].0, by_left[i].0) })
            .collect();
        let mut left: Vec<(i64, Span)> = spans(&adj)
            .into_iter()
            .filter(|s| s.lcp >= 1 && (s.parent as usize) < max_ctx)
            .map(|s| {
                let a = (s.lcp as usize).min(max_ctx);
                (fixed_gain(a, b_hi, (s.rb - s.lb + 1) as usize), s)
            })
            .collect();
        left.sort_unstable_by_key(|x| std::cmp::Reverse(x.0));
        let mut qs: Vec<u32> = Vec::new();
        for (bound, ls) in left {
            if bound < Self::threshold(best, min_gain) {
                break;
            }
            let a_lo = ls.parent as usize + 1;
            let a_hi = (ls.lcp as usize).min(max_ctx);
            qs.clear();
            qs.extend(by_left[ls.lb as usize..=ls.rb as usize].iter().map(|&(_, q)| q));
            qs.sort_unstable();
            let m = qs.len();
            let min_gap = qs.windows(2).map(|w| (w[1] - w[0]) as usize).min().unwrap_or(usize::MAX);
            let span = (qs[m - 1] - qs[0]) as usize;
            let mut len = a_hi + b_hi;
            while len >= a_lo + b_lo {
                let threshold = Self::threshold(best, min_gain);
                if fixed_gain(len - 1, 1, m) < threshold {
                    break;
                }
                let all = len + k <= min_gap;
                let occ = if all {
                    m
                } else {
                    if fixed_gain(len - 1, 1, m.min(span / (len + k) + 1)) < threshold {
                        len -= 1;
                        continue;
                    }
                    greedy_count(&qs, len + k)
                };
                let gain = fixed_gain(len - 1, 1, occ);
                if occ >= 2 && gain >= min_gain {
                    self.offer(best, gain, len, k, (a_lo, a_hi), (b_lo, b_hi), &qs);
                }
                if all {
                    break;
                }
                len -= 1;
            }
        }
    }

    /// Offers every split `a + b = len` inside the given ranges.
    #[allow(clippy::too_many_arguments)]
    fn offer(&self, best: &mut Option<Best>, gain: i64, len: usize, k: usize, ar: (usize, usize), br: (usize, usize), qs: &[u32]) {
        if let Some(b) = best {
            if (gain, len).cmp(&(b.gain, b.len)).then(b.k.cmp(&k)) == Ordering::Less {
                return;
            }
        }
        let lo = ar.0.max(len.saturating_sub(br.1));
        let hi = ar.1.min(len - br.0);
        let q = qs[0] as usize;
        let mut chosen: Option<usize> = None;
        for a in lo..=hi {
            if self.is_excluded(q, a, len - a, k) {
                continue;
            }
            let better = match chosen {
                None => true,
                Some(c) => self.cmp_uv(q, a, len - a, k, q, c, len - c, k) == Ordering::Less,
            };
            if better {
                chosen = Some(a);
            }
        }
        let Some(a) = chosen else { return };
        if self.beats(best, gain, len, k, a, q) {
            *best = Some(Best {
                gain,
                len,
                k,
                a,
                q,
                starts: greedy_select(qs, len + k),
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::{Alphabet, Rule, Sequence};
    use proptest::prelude::*;

    fn flat(s: &[u8]) -> Grammar {
        Grammar::straight_line(&Sequence::from_bytes(s))
    }

    fn terms(s: &[u8]) -> Vec<Symbol> {
        s.iter().map(|&b| Symbol::Terminal(b as u32)).collect()
    }

    /// Cubic enumeration of every (u, k, v) with leftmost-greedy counting.
    fn brute(s: &[u8], max_ctx: usize) -> Option<(i64, usize, Vec<u8>, Vec<u8>)> {
        let n = s.len();
        let mut best: Option<(i64, usize, Vec<u8>, Vec<u8>)> = None;
        for a in 1..=max_ctx.min(n) {
            for b in 1..=max_ctx.min(n) {
                for k in 1..n {
                    if a + b + k > n {
                        break;
                    }
                    for p in 0..=n - a - b - k {
                        let u = &s[p..p + a];
                        let v = &s[p + a + k..p + a + k + b];
                        let len = a + k + b;
                        let mut occ = 0;
                        let mut i = 0;
                        while i + len <= n {
                            if &s[i..i + a] == u && &s[i + a + k..i + len] == v {
                                occ += 1;
                                i += len;
                            } else {
                                i += 1;
                            }
                        }
                        if occ < 2 {
                            continue;
                        }
                        let g = fixed_gain(a, b, occ);
                        let key = |g: i64, a: usize, b: usize, k: usize, u: &[u8], v: &[u8]| {
                            (
                                g,
                                a + b,
                                std::cmp::Reverse(k),
                                std::cmp::Reverse(u.to_vec()),
                                std::cmp::Reverse(v.to_vec()),
                            )
                        };
                        let take = match &best {
                            None => true,
                            Some((bg, bk, bu, bv)) => key(g, a, b, k, u, v) > key(*bg, bu.len(), bv.len(), *bk, bu, bv),
                        };
                        if take {
                            best = Some((g, k, u.to_vec(), v.to_vec()));
                        }
                    }
                }
            }
        }
        best.filter(|b| b.0 > 0)
    }

    fn alice() -> Sequence {
        Sequence::from_text(
            "Alice was beginning to get very tired Alice was getting very tired Alice is very tired \
             Alice will be very tired Alice was getting very tired",
        )
    }

    #[test]
    fn gain_examples() {
        assert_eq!(fixed_gain(1, 1, 1), -4);
        assert_eq!(fixed_gain(3, 2, 1), -4);
        assert_eq!(fixed_gain(1, 2, 3), 0);
        assert_eq!(fixed_gain(2, 2, 4), 5);
    }

    #[test]
    fn g2_from_flat_alice() {
        let s = alice();
        let g = Grammar::straight_line(&s);
        let Alphabet::Tokens(tab) = &s.alphabet else { unreachable!() };
        let t = |w: &str| -> Vec<Symbol> {
            w.split(' ')
                .map(|x| Symbol::Terminal(tab.iter().position(|y| y == x).unwrap() as u32))
                .collect()
        };
        let m = find_fixed_motif(&g, &t("Alice"), 2, &t("very tired")).unwrap();
        assert_eq!(m.occ(), 3);
        assert_eq!(gain_fixed(&m), 0);
        let g2 = replace_motif(&g, &m).unwrap();
        assert_eq!(g2.size(Encoding::Fixed).unwrap().total, 27);
        assert_eq!(g2.expand_canonical().unwrap(), s.symbols);
        let Rule::Inner { expansions, .. } = &g2.rules()[2] else { panic!() };
        assert_eq!(expansions, &vec![t("was getting"), t("will be"), t("was getting")]);
    }

    #[test]
    fn nothing_shared() {
        assert!(best_fixed_motif(&flat(b"abcdefg"), None).unwrap().is_none());
    }

    #[test]
    fn variable_motif_on_flat_alice() {
        let s = alice();
        let g = Grammar::straight_line(&s);
        let Alphabet::Tokens(tab) = &s.alphabet else { unreachable!() };
        let t = |w: &str| -> Vec<Symbol> {
            w.split(' ')
                .map(|x| Symbol::Terminal(tab.iter().position(|y| y == x).unwrap() as u32))
                .collect()
        };
        let m = find_variable_motif(&g, &t("Alice"), &t("very tired")).unwrap();
        assert_eq!(m.occ(), 5);
        // 27 symbols flat; S -> N N N N N, O -> Alice I very tired, I lists all five.
        assert_eq!(gain_variable(&m, &g).unwrap(), 0);
        let once = find_variable_motif(&g, &t("beginning"), &t("get")).unwrap();
        assert_eq!(once.occ(), 1);
        assert!(gain_variable(&once, &g).unwrap() < 0);
    }

    #[test]
    fn replace_keeps_expansion_for_all_gaps() {
        let g = flat(b"xaybxazbxacb");
        let m = find_fixed_motif(&g, &terms(b"xa"), 1, &terms(b"b")).unwrap();
        assert_eq!(m.occ(), 3);
        let r = replace_motif(&g, &m).unwrap();
        assert_eq!(r.expand_canonical().unwrap(), g.expand_canonical().unwrap());
        assert_eq!(
            g.size(Encoding::Fixed).unwrap().total as i64 - r.size(Encoding::Fixed).unwrap().total as i64,
            gain_fixed(&m)
        );
    }

    /// (gain, |u|, k, |v|, u, v)
    type Found = Option<(i64, usize, usize, usize, Vec<Code>, Vec<Code>)>;

    /// Cubic search over the searchable regions of a working grammar.
    fn brute_working(w: &Working, max_ctx: usize) -> Found {
        use crate::working::is_occ;
        let segs: Vec<&[Code]> = w.segments().map(|(_, b)| b).collect();
        let mut cands: Vec<(Vec<Code>, usize, Vec<Code>)> = Vec::new();
        for body in &segs {
            let n = body.len();
            for p in 0..n {
                for a in 1..=max_ctx.min(n) {
                    for k in 1..n {
                        for b in 1..=max_ctx.min(n) {
                            if p + a + k + b > n {
                                continue;
                            }
                            let u = &body[p..p + a];
                            let v = &body[p + a + k..p + a + k + b];
                            if u.iter().chain(v).any(|&c| is_occ(c)) {
                                continue;
                            }
                            cands.push((u.to_vec(), k, v.to_vec()));
                        }
                    }
                }
            }
        }
        cands.sort();
        cands.dedup();
        let mut best: Found = None;
        for (u, k, v) in cands {
            let len = u.len() + k + v.len();
            let mut occ = 0;
            for body in &segs {
                let mut i = 0;
                while i + len <= body.len() {
                    if body[i..i + u.len()] == u[..] && body[i + u.len() + k..i + len] == v[..] {
                        occ += 1;
                        i += len;
                    } else {
                        i += 1;
                    }
                }
            }
            if occ < 2 {
                continue;
            }
            let g = fixed_gain(u.len(), v.len(), occ);
            let key = (
                g,
                u.len() + v.len(),
                std::cmp::Reverse(k),
                std::cmp::Reverse(u.clone()),
                std::cmp::Reverse(v.clone()),
            );
            let take = best.as_ref().is_none_or(|b| {
                key > (
                    b.0,
                    b.1 + b.3,
                    std::cmp::Reverse(b.2),
                    std::cmp::Reverse(b.4.clone()),
                    std::cmp::Reverse(b.5.clone()),
                )
            });
            if take {
                best = Some((g, u.len(), k, v.len(), u, v));
            }
        }
        best.filter(|b| b.0 > 0)
    }

    fn search_working(w: &Working, max_ctx: Option<usize>) -> Found {
        let idx = RepeatIndex::new(w);
        let c = MotifFinder::new(&idx).best(
            MotifSearch {
                max_context: max_ctx,
                max_gap: None,
            },
            1,
        )?;
        let (seg, off) = idx.st.locate(c.starts[0] as usize);
        let body = w.segment(seg);
        Some((
            c.gain,
            c.a,
            c.k,
            c.b,
            body[off..off + c.a].to_vec(),
            body[off + c.a + c.k..off + c.a + c.k + c.b].to_vec(),
        ))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn search_on_greedy_output_matches_brute_force(s in proptest::collection::vec(b'a'..b'd', 10..70), ctx in 1usize..4) {
            let g = crate::inference::greedy(&Sequence::from_bytes(&s), None).unwrap().grammar;
            let w = Working::from_grammar(&g).unwrap();
            prop_assert_eq!(search_working(&w, Some(ctx)), brute_working(&w, ctx));
        }

        #[test]
        fn search_on_branching_grammars_matches_brute_force(s in proptest::collection::vec(b'a'..b'd', 10..70), stop in 1usize..6) {
            let opts = crate::inference::NrGreedyOptions { max_iterations: Some(stop), search: MotifSearch::default() };
            let g = crate::inference::nrgreedy_fix_with(&Sequence::from_bytes(&s), opts).unwrap().grammar;
            let w = Working::from_grammar(&g).unwrap();
            prop_assert_eq!(search_working(&w, Some(1)), brute_working(&w, 1));
            prop_assert_eq!(search_working(&w, None), brute_working(&w, usize::MAX));
        }
    }

    proptest! {
        #[test]
        fn best_matches_brute_force(s in proptest::collection::vec(b'a'..b'c', 1..13)) {
            let got = best_fixed_motif(&flat(&s), None).unwrap().map(|(m, g)| {
                let Gap::Fixed(k) = m.gap else { unreachable!() };
                (g, k, m.u, m.v)
            });
            let want = brute(&s, usize::MAX).map(|(g, k, u, v)| (g, k, terms(&u), terms(&v)));
            prop_assert_eq!(got, want);
        }

        #[test]
        fn best_matches_brute_force_ternary(s in proptest::collection::vec(b'a'..b'd', 8..30)) {
            let got = best_fixed_motif(&flat(&s), None).unwrap().map(|(m, g)| {
                let Gap::Fixed(k) = m.gap else { unreachable!() };
                (g, k, m.u, m.v)
            });
            let want = brute(&s, usize::MAX).map(|(g, k, u, v)| (g, k, terms(&u), terms(&v)));
            prop_assert_eq!(got, want);
        }

        #[test]
        fn context_one_matches_brute_force(s in proptest::collection::vec(b'a'..b'd', 1..40)) {
            let got = best_fixed_motif(&flat(&s), Some(1)).unwrap().map(|(m, g)| {
                let Gap::Fixed(k) = m.gap else { unreachable!() };
                (g, k, m.u, m.v)
            });
            let want = brute(&s, 1).map(|(g, k, u, v)| (g, k, terms(&u), terms(&v)));
            prop_assert_eq!(got, want);
        }

        #[test]
        fn context_two_matches_brute_force(s in proptest::collection::vec(b'a'..b'c', 1..24)) {
            let got = best_fixed_motif(&flat(&s), Some(2)).unwrap().map(|(m, g)| {
                let Gap::Fixed(k) = m.gap else { unreachable!() };
                (g, k, m.u, m.v)
            });
            let want = brute(&s, 2).map(|(g, k, u, v)| (g, k, terms(&u), terms(&v)));
            prop_assert_eq!(got, want);
        }

        #[test]
        fn gain_equals_size_difference(s in proptest::collection::vec(b'a'..b'd', 4..40), a in 1usize..3, b in 1usize..3, k in 1usize..4, p in 0usize..40) {
            prop_assume!(a + k + b <= s.len());
            let p = p % (s.len() - a - k - b + 1);
            let g = flat(&s);
            let m = find_fixed_motif(&g, &terms(&s[p..p + a]), k, &terms(&s[p + a + k..p + a + k + b])).unwrap();
            let r = replace_motif(&g, &m).unwrap();
            prop_assert_eq!(r.validate(), vec![]);
            prop_assert_eq!(r.expand_canonical().unwrap(), g.expand_canonical().unwrap());
            let diff = g.size(Encoding::Fixed).unwrap().total as i64 - r.size(Encoding::Fixed).unwrap().total as i64;
            prop_assert_eq!(diff, gain_fixed(&m));
        }
    }
}
