//! Mutable grammar representation used by the inference loops.
//!
//! Symbols are packed into `u32` codes. Every syntactic occurrence of an outer
//! nonterminal is its own token (`OCC | slot`) carrying the expansion bound to
//! it, so rewrites can move occurrences around without re-deriving the
//! binding. Occurrence tokens never compare equal to anything during search.

use rustc_hash::FxHashMap;

use crate::error::{Error, Result};
use crate::grammar::{Alphabet, Encoding, Grammar, Rule, Symbol};

pub(crate) type Code = u32;

pub(crate) const TAG_MASK: u32 = 3 << 30;
pub(crate) const PAYLOAD: u32 = (1 << 30) - 1;
pub(crate) const TERM: u32 = 0;
pub(crate) const NT: u32 = 1 << 30;
pub(crate) const OCC: u32 = 2 << 30;

#[inline]
pub(crate) fn is_occ(c: Code) -> bool {
    c & TAG_MASK == OCC
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum WRule {
    Plain(Vec<Code>),
    Outer { prefix: Vec<Code>, suffix: Vec<Code>, inner: u32 },
    Inner { outer: u32, fixed_len: Option<usize> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct OccSlot {
    pub outer: u32,
    pub expansion: Vec<Code>,
}

/// A rule body region that repeat and motif search may look into.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub(crate) enum SegRef {
    Plain(u32),
    Prefix(u32),
    Suffix(u32),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct Working {
    pub alphabet: Alphabet,
    pub rules: Vec<WRule>,
    pub occs: Vec<OccSlot>,
}

pub(crate) fn to_code(s: Symbol) -> Code {
    match s {
        Symbol::Terminal(t) => TERM | t,
        Symbol::NonTerminal(n) => NT | n,
    }
}

impl Working {
    pub fn from_sequence(alphabet: Alphabet, symbols: &[u32]) -> Self {
        Working {
            alphabet,
            rules: vec![WRule::Plain(symbols.to_vec())],
            occs: Vec::new(),
        }
    }

    /// Requires a valid grammar.
    pub fn from_grammar(g: &Grammar) -> Result<Self> {
        g.check()?;
        let rules = g.rules();
        let ranks = g.occurrence_ranks();
        // Outer occurrence sites, in a fixed order, become slots.
        let mut sites: Vec<_> = ranks.keys().copied().collect();
        sites.sort_unstable();
        let slot_of: FxHashMap<_, u32> = sites.iter().enumerate().map(|(i, s)| (*s, i as u32)).collect();
        let code_at = |rule: usize, alt: usize, pos: usize| -> Code {
            let s = rules[rule].slot_symbol(alt, pos);
            match s {
                Symbol::NonTerminal(n) if matches!(rules[n as usize], Rule::Outer { .. }) => {
                    OCC | slot_of[&crate::grammar::Site::new(rule, alt, pos)]
                }
                _ => to_code(s),
            }
        };
        let convert =
            |rule: usize, alt: usize, range: std::ops::Range<usize>| -> Vec<Code> { range.map(|pos| code_at(rule, alt, pos)).collect() };
        let mut occs = Vec::with_capacity(sites.len());
        for site in &sites {
            let outer = match rules[site.rule as usize].slot_symbol(site.alt as usize, site.offset as usize) {
                Symbol::NonTerminal(o) => o,
                Symbol::Terminal(_) => unreachable!(),
            };
            let Rule::Outer { inner, .. } = &rules[outer as usize] else {
                unreachable!()
            };
            let rank = ranks[site];
            let len = rules[*inner as usize].slot_len(rank);
            occs.push(OccSlot {
                outer,
                expansion: convert(*inner as usize, rank, 0..len),
            });
        }
        let mut wrules = Vec::with_capacity(rules.len());
        let mut outer_of = vec![0u32; rules.len()];
        for (id, r) in rules.iter().enumerate() {
            if let Rule::Outer { inner, .. } = r {
                outer_of[*inner as usize] = id as u32;
            }
        }
        for (id, r) in rules.iter().enumerate() {
            wrules.push(match r {
                Rule::Plain(b) => WRule::Plain(convert(id, 0, 0..b.len())),
                Rule::Outer { prefix, inner, suffix } => WRule::Outer {
                    prefix: convert(id, 0, 0..prefix.len()),
                    suffix: convert(id, 0, prefix.len() + 1..prefix.len() + 1 + suffix.len()),
                    inner: *inner,
                },
                Rule::Inner { fixed_len, .. } => WRule::Inner {
                    outer: outer_of[id],
                    fixed_len: *fixed_len,
                },
            });
        }
        Ok(Working {
            alphabet: g.alphabet().clone(),
            rules: wrules,
            occs,
        })
    }

    pub fn symbol(&self, c: Code) -> Symbol {
        match c & TAG_MASK {
            TERM => Symbol::Terminal(c),
            NT => Symbol::NonTerminal(c & PAYLOAD),
            _ => Symbol::NonTerminal(self.occs[(c & PAYLOAD) as usize].outer),
        }
    }

    pub fn symbols(&self, codes: &[Code]) -> Vec<Symbol> {
        codes.iter().map(|&c| self.symbol(c)).collect()
    }

    /// Occurrence slots of every outer rule in derivation first-visit order.
    pub fn slots_in_derivation_order(&self) -> Vec<Vec<u32>> {
        let n = self.rules.len();
        let mut order: Vec<Vec<u32>> = vec![Vec::new(); n];
        let mut visited = vec![false; n];
        enum Src {
            Plain(u32),
            Prefix(u32),
            Suffix(u32),
            Expansion(u32),
        }
        let slice = |s: &Src| -> &[Code] {
            match *s {
                Src::Plain(r) => match &self.rules[r as usize] {
                    WRule::Plain(b) => b,
                    _ => unreachable!(),
                },
                Src::Prefix(r) => match &self.rules[r as usize] {
                    WRule::Outer { prefix, .. } => prefix,
                    _ => unreachable!(),
                },
                Src::Suffix(r) => match &self.rules[r as usize] {
                    WRule::Outer { suffix, .. } => suffix,
                    _ => unreachable!(),
                },
                Src::Expansion(s) => &self.occs[s as usize].expansion,
            }
        };
        if n == 0 {
            return order;
        }
        visited[0] = true;
        let mut stack = vec![(Src::Plain(0), 0usize)];
        while let Some(top) = stack.last_mut() {
            let codes = slice(&top.0);
            if top.1 == codes.len() {
                stack.pop();
                continue;
            }
            let c = codes[top.1];
            top.1 += 1;
            match c & TAG_MASK {
                NT => {
                    let r = c & PAYLOAD;
                    if !visited[r as usize] {
                        visited[r as usize] = true;
                        stack.push((Src::Plain(r), 0));
                    }
                }
                OCC => {
                    let s = c & PAYLOAD;
                    let o = self.occs[s as usize].outer;
                    order[o as usize].push(s);
                    if visited[o as usize] {
                        stack.push((Src::Expansion(s), 0));
                    } else {
                        visited[o as usize] = true;
                        stack.push((Src::Suffix(o), 0));
                        stack.push((Src::Expansion(s), 0));
                        stack.push((Src::Prefix(o), 0));
                    }
                }
                _ => {}
            }
        }
        order
    }

    pub fn to_grammar(&self) -> Grammar {
        let order = self.slots_in_derivation_order();
        let rules = self
            .rules
            .iter()
            .map(|r| match r {
                WRule::Plain(b) => Rule::Plain(self.symbols(b)),
                WRule::Outer { prefix, suffix, inner } => Rule::Outer {
                    prefix: self.symbols(prefix),
                    inner: *inner,
                    suffix: self.symbols(suffix),
                },
                WRule::Inner { outer, fixed_len } => Rule::Inner {
                    expansions: order[*outer as usize]
                        .iter()
                        .map(|&s| self.symbols(&self.occs[s as usize].expansion))
                        .collect(),
                    fixed_len: *fixed_len,
                },
            })
            .collect();
        Grammar::new(self.alphabet.clone(), rules)
    }

    /// Number of occurrence slots per outer rule.
    pub fn occurrence_counts(&self) -> Vec<usize> {
        let mut occ = vec![0usize; self.rules.len()];
        for s in &self.occs {
            occ[s.outer as usize] += 1;
        }
        occ
    }

    pub fn size(&self, encoding: Encoding) -> Result<usize> {
        let occ = self.occurrence_counts();
        let mut exp_len = vec![0usize; self.rules.len()];
        for s in &self.occs {
            exp_len[s.outer as usize] += s.expansion.len();
        }
        let mut total = 0;
        for (id, r) in self.rules.iter().enumerate() {
            total += match r {
                WRule::Plain(b) => b.len() + 1,
                WRule::Outer { prefix, suffix, .. } => prefix.len() + suffix.len() + 2,
                WRule::Inner { outer, fixed_len } => {
                    let o = *outer as usize;
                    match (encoding, fixed_len) {
                        (Encoding::Fixed, Some(k)) => occ[o] * k + 1,
                        (Encoding::Fixed, None) => return Err(Error::NotFixedLength(id as u32)),
                        (Encoding::Variable, _) => exp_len[o] + occ[o],
                    }
                }
            };
        }
        Ok(total)
    }

    /// Rule defining the symbol behind `c`, if it is a nonterminal.
    pub fn rule_of(&self, c: Code) -> Option<usize> {
        match c & TAG_MASK {
            NT => Some((c & PAYLOAD) as usize),
            OCC => Some(self.occs[(c & PAYLOAD) as usize].outer as usize),
            _ => None,
        }
    }

    /// Marks every rule that derives (reaches) some rule marked in `targets`,
    /// the targets included.
    pub fn ancestors_of(&self, targets: &[bool]) -> Vec<bool> {
        let n = self.rules.len();
        let mut parents: Vec<Vec<u32>> = vec![Vec::new(); n];
        let link = |parents: &mut Vec<Vec<u32>>, parent: usize, codes: &[Code]| {
            for &c in codes {
                if let Some(r) = self.rule_of(c) {
                    parents[r].push(parent as u32);
                }
            }
        };
        for (id, r) in self.rules.iter().enumerate() {
            match r {
                WRule::Plain(b) => link(&mut parents, id, b),
                WRule::Outer { prefix, suffix, inner } => {
                    link(&mut parents, id, prefix);
                    link(&mut parents, id, suffix);
                    parents[*inner as usize].push(id as u32);
                }
                WRule::Inner { .. } => {}
            }
        }
        for s in &self.occs {
            if let WRule::Outer { inner, .. } = self.rules[s.outer as usize] {
                link(&mut parents, inner as usize, &s.expansion);
            }
        }
        let mut mark = targets.to_vec();
        let mut stack: Vec<usize> = (0..n).filter(|&i| mark[i]).collect();
        while let Some(r) = stack.pop() {
            for &p in &parents[r] {
                if !mark[p as usize] {
                    mark[p as usize] = true;
                    stack.push(p as usize);
                }
            }
        }
        mark
    }

    pub fn segments(&self) -> impl Iterator<Item = (SegRef, &[Code])> + '_ {
        self.rules.iter().enumerate().flat_map(|(id, r)| {
            let id = id as u32;
            let (a, b): (Option<(SegRef, &[Code])>, Option<(SegRef, &[Code])>) = match r {
                WRule::Plain(body) => (Some((SegRef::Plain(id), body)), None),
                WRule::Outer { prefix, suffix, .. } => (Some((SegRef::Prefix(id), prefix)), Some((SegRef::Suffix(id), suffix))),
                WRule::Inner { .. } => (None, None),
            };
            a.into_iter().chain(b)
        })
    }

    pub fn segment(&self, r: SegRef) -> &[Code] {
        match (r, &self.rules[Self::seg_rule(r)]) {
            (SegRef::Plain(_), WRule::Plain(b)) => b,
            (SegRef::Prefix(_), WRule::Outer { prefix, .. }) => prefix,
            (SegRef::Suffix(_), WRule::Outer { suffix, .. }) => suffix,
            _ => panic!("segment reference does not match rule kind"),
        }
    }

    fn segment_mut(&mut self, r: SegRef) -> &mut Vec<Code> {
        match (r, &mut self.rules[Self::seg_rule(r)]) {
            (SegRef::Plain(_), WRule::Plain(b)) => b,
            (SegRef::Prefix(_), WRule::Outer { prefix, .. }) => prefix,
            (SegRef::Suffix(_), WRule::Outer { suffix, .. }) => suffix,
            _ => panic!("segment reference does not match rule kind"),
        }
    }

    fn seg_rule(r: SegRef) -> usize {
        match r {
            SegRef::Plain(i) | SegRef::Prefix(i) | SegRef::Suffix(i) => i as usize,
        }
    }

    /// Replaces `word` at the given non-overlapping starts by a fresh
    /// nonterminal and returns its id.
    pub fn replace_repeat(&mut self, word: &[Code], hits: &[(SegRef, usize)]) -> Result<u32> {
        let id = self.rules.len() as u32;
        let code = NT | id;
        let mut hits = hits.to_vec();
        hits.sort_unstable();
        check_hits(hits.iter().map(|&(s, p)| (s, p, word.len())))?;
        for (seg, starts) in group(&hits) {
            let body = self.segment(seg);
            for &p in &starts {
                if body.get(p..p + word.len()) != Some(word) {
                    return Err(Error::Stale(format!("repeat not found at {seg:?}+{p}")));
                }
            }
            let lens = vec![word.len(); starts.len()];
            let new = splice(body, &starts, &lens, |_| code);
            *self.segment_mut(seg) = new;
        }
        self.rules.push(WRule::Plain(word.to_vec()));
        Ok(id)
    }

    /// Replaces each realization `u w v` (|w| = `k`) starting at the given
    /// positions by an occurrence of a fresh outer rule. Returns the outer id.
    pub fn replace_motif(&mut self, u: &[Code], k: usize, v: &[Code], hits: &[(SegRef, usize)]) -> Result<u32> {
        let hits: Vec<_> = hits.iter().map(|&(s, p)| (s, p, k)).collect();
        self.replace_motif_gaps(u, v, &hits, Some(k))
    }

    /// As `replace_motif`, with a gap length per hit `(segment, start, gap)`.
    pub fn replace_motif_gaps(&mut self, u: &[Code], v: &[Code], hits: &[(SegRef, usize, usize)], fixed_len: Option<usize>) -> Result<u32> {
        let mut hits = hits.to_vec();
        hits.sort_unstable();
        let span = |k: usize| u.len() + k + v.len();
        check_hits(hits.iter().map(|&(s, p, k)| (s, p, span(k))))?;
        let outer = self.rules.len() as u32;
        let inner = outer + 1;
        let mut i = 0;
        while i < hits.len() {
            let seg = hits[i].0;
            let j = i + hits[i..].iter().take_while(|h| h.0 == seg).count();
            let group = &hits[i..j];
            i = j;
            let body = self.segment(seg);
            for &(_, p, k) in group {
                let ok = k > 0 && body.get(p..p + u.len()) == Some(u) && body.get(p + u.len() + k..p + span(k)) == Some(v);
                if !ok {
                    return Err(Error::Stale(format!("motif not found at {seg:?}+{p}")));
                }
            }
            let first_slot = self.occs.len() as u32;
            let slots: Vec<OccSlot> = group
                .iter()
                .map(|&(_, p, k)| OccSlot {
                    outer,
                    expansion: body[p + u.len()..p + u.len() + k].to_vec(),
                })
                .collect();
            let starts: Vec<usize> = group.iter().map(|h| h.1).collect();
            let lens: Vec<usize> = group.iter().map(|h| span(h.2)).collect();
            let new = splice(body, &starts, &lens, |i| OCC | (first_slot + i as u32));
            self.occs.extend(slots);
            *self.segment_mut(seg) = new;
        }
        self.rules.push(WRule::Outer {
            prefix: u.to_vec(),
            suffix: v.to_vec(),
            inner,
        });
        self.rules.push(WRule::Inner { outer, fixed_len });
        Ok(outer)
    }
}

fn check_hits(hits: impl Iterator<Item = (SegRef, usize, usize)>) -> Result<()> {
    let mut prev: Option<(SegRef, usize)> = None;
    for (seg, p, len) in hits {
        if let Some((s, end)) = prev {
            if s == seg && end > p {
                return Err(Error::Stale("overlapping occurrences".into()));
            }
        }
        prev = Some((seg, p + len));
    }
    Ok(())
}

/// Groups sorted hits by segment.
fn group(hits: &[(SegRef, usize)]) -> Vec<(SegRef, Vec<usize>)> {
    let mut out: Vec<(SegRef, Vec<usize>)> = Vec::new();
    for &(seg, p) in hits {
        match out.last_mut() {
            Some((s, v)) if *s == seg => v.push(p),
            _ => out.push((seg, vec![p])),
        }
    }
    out
}

/// Copies `body`, replacing `lens[i]` symbols at each start by one code.
fn splice(body: &[Code], starts: &[usize], lens: &[usize], mut code: impl FnMut(usize) -> Code) -> Vec<Code> {
    let mut out = Vec::with_capacity(body.len());
    let mut at = 0;
    for (i, &p) in starts.iter().enumerate() {
        out.extend_from_slice(&body[at..p]);
        out.push(code(i));
        at = p + lens[i];
    }
    out.extend_from_slice(&body[at..]);
    out
}
