//! Sequences and non-recursive grammars.
//!
//! A [`Grammar`] has one rule per nonterminal; nonterminal `0` is the start
//! symbol. Besides plain (straight-line) rules it may hold branching pairs:
//! an outer rule `O -> u I v` and its inner rule `I -> w_1 | w_2 | ...`
//! listing one expansion per occurrence of `O`.
//!
//! Occurrences of `O` are bound to expansions positionally: every symbol of
//! the grammar has a [`Site`] (rule, alternative, offset), and the `j`-th
//! site of `O` reached by the leftmost derivation from the start symbol
//! derives `I`'s `j`-th expansion. A site reached again later (through a
//! plain rule used twice) derives the same expansion again.

use std::collections::VecDeque;
use std::fmt;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Symbol {
    Terminal(u32),
    NonTerminal(u32),
}

impl Symbol {
    pub fn is_terminal(self) -> bool {
        matches!(self, Symbol::Terminal(_))
    }

    pub fn nonterminal(self) -> Option<u32> {
        match self {
            Symbol::NonTerminal(n) => Some(n),
            Symbol::Terminal(_) => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphabetMode {
    Byte,
    Token,
}

/// Terminal alphabet. In token mode terminal `t` is `tokens[t]`; the table is
/// sorted so terminal order is string order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Alphabet {
    Bytes,
    Tokens(Vec<String>),
}

impl Alphabet {
    pub fn mode(&self) -> AlphabetMode {
        match self {
            Alphabet::Bytes => AlphabetMode::Byte,
            Alphabet::Tokens(_) => AlphabetMode::Token,
        }
    }

    pub fn size(&self) -> usize {
        match self {
            Alphabet::Bytes => 256,
            Alphabet::Tokens(t) => t.len(),
        }
    }

    pub fn contains(&self, t: u32) -> bool {
        (t as usize) < self.size()
    }

    /// Human-readable form of a terminal, unescaped.
    pub fn display(&self, t: u32) -> String {
        match self {
            Alphabet::Bytes => {
                let b = t as u8;
                if b.is_ascii_graphic() {
                    (b as char).to_string()
                } else {
                    format!("\\x{b:02X}")
                }
            }
            Alphabet::Tokens(tokens) => tokens.get(t as usize).cloned().unwrap_or_else(|| format!("<t{t}>")),
        }
    }
}

/// Input sequence over a fixed alphabet.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sequence {
    pub alphabet: Alphabet,
    pub symbols: Vec<u32>,
}

impl Sequence {
    pub fn from_bytes(bytes: &[u8]) -> Self {
        Sequence {
            alphabet: Alphabet::Bytes,
            symbols: bytes.iter().map(|&b| b as u32).collect(),
        }
    }

    /// Splits on ASCII/Unicode whitespace and interns the tokens.
    pub fn from_tokens<'a, I>(tokens: I) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let raw: Vec<&str> = tokens.into_iter().collect();
        let mut table: Vec<String> = raw.iter().map(|s| s.to_string()).collect();
        table.sort();
        table.dedup();
        let index: FxHashMap<&str, u32> = table.iter().enumerate().map(|(i, s)| (s.as_str(), i as u32)).collect();
        let symbols = raw.iter().map(|s| index[s]).collect();
        Sequence {
            alphabet: Alphabet::Tokens(table),
            symbols,
        }
    }

    pub fn from_text(text: &str) -> Self {
        Self::from_tokens(text.split_whitespace())
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Number of distinct terminals actually used.
    pub fn distinct(&self) -> usize {
        let mut seen = self.symbols.clone();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }

    /// Byte mode: the raw bytes. Token mode: tokens joined by single spaces.
    pub fn to_bytes(&self) -> Vec<u8> {
        match &self.alphabet {
            Alphabet::Bytes => self.symbols.iter().map(|&s| s as u8).collect(),
            Alphabet::Tokens(t) => {
                let words: Vec<&str> = self.symbols.iter().map(|&s| t[s as usize].as_str()).collect();
                words.join(" ").into_bytes()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Rule {
    Plain(Vec<Symbol>),
    Outer {
        prefix: Vec<Symbol>,
        inner: u32,
        suffix: Vec<Symbol>,
    },
    Inner {
        expansions: Vec<Vec<Symbol>>,
        fixed_len: Option<usize>,
    },
}

impl Rule {
    pub fn is_branching(&self) -> bool {
        !matches!(self, Rule::Plain(_))
    }

    /// Number of alternatives (1 except for inner rules).
    pub fn alternatives(&self) -> usize {
        match self {
            Rule::Inner { expansions, .. } => expansions.len(),
            _ => 1,
        }
    }

    /// Length of alternative `alt`; outer rules count the inner slot.
    pub fn slot_len(&self, alt: usize) -> usize {
        match self {
            Rule::Plain(b) => b.len(),
            Rule::Outer { prefix, suffix, .. } => prefix.len() + 1 + suffix.len(),
            Rule::Inner { expansions, .. } => expansions[alt].len(),
        }
    }

    pub fn slot_symbol(&self, alt: usize, pos: usize) -> Symbol {
        match self {
            Rule::Plain(b) => b[pos],
            Rule::Outer { prefix, inner, suffix } => {
                if pos < prefix.len() {
                    prefix[pos]
                } else if pos == prefix.len() {
                    Symbol::NonTerminal(*inner)
                } else {
                    suffix[pos - prefix.len() - 1]
                }
            }
            Rule::Inner { expansions, .. } => expansions[alt][pos],
        }
    }

    /// Iterates every symbol with its (alternative, offset).
    pub fn symbols(&self) -> impl Iterator<Item = (usize, usize, Symbol)> + '_ {
        (0..self.alternatives()).flat_map(move |alt| (0..self.slot_len(alt)).map(move |pos| (alt, pos, self.slot_symbol(alt, pos))))
    }
}

/// Address of one symbol inside a grammar.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Site {
    pub rule: u32,
    pub alt: u32,
    pub offset: u32,
}

impl Site {
    pub fn new(rule: usize, alt: usize, offset: usize) -> Self {
        Site {
            rule: rule as u32,
            alt: alt as u32,
            offset: offset as u32,
        }
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "N{}[{}]@{}", self.rule, self.alt, self.offset)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    NoRules,
    StartNotPlain,
    EmptyBody {
        rule: u32,
    },
    EmptyContext {
        rule: u32,
    },
    EmptyExpansion {
        rule: u32,
        expansion: usize,
    },
    UndefinedNonTerminal {
        rule: u32,
        referenced: u32,
    },
    UnknownTerminal {
        rule: u32,
        terminal: u32,
    },
    Cycle {
        rule: u32,
    },
    NotAnInner {
        rule: u32,
        inner: u32,
    },
    OrphanInner {
        inner: u32,
    },
    MultipleOuters {
        inner: u32,
        outers: Vec<u32>,
    },
    InnerReferencedOutside {
        inner: u32,
        rule: u32,
    },
    ZeroFixedLength {
        rule: u32,
    },
    FixedLengthMismatch {
        rule: u32,
        expansion: usize,
        expected: usize,
        found: usize,
    },
    ExpansionCountMismatch {
        inner: u32,
        occurrences: usize,
        expansions: usize,
    },
    Unreachable {
        rule: u32,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            NoRules => write!(f, "grammar has no start rule"),
            StartNotPlain => write!(f, "N0: start rule must be plain"),
            EmptyBody { rule } => write!(f, "N{rule}: empty rule body"),
            EmptyContext { rule } => write!(f, "N{rule}: outer rule needs a non-empty prefix and suffix"),
            EmptyExpansion { rule, expansion } => write!(f, "N{rule}: expansion {expansion} is empty"),
            UndefinedNonTerminal { rule, referenced } => {
                write!(f, "N{rule}: references undefined N{referenced}")
            }
            UnknownTerminal { rule, terminal } => write!(f, "N{rule}: terminal {terminal} outside the alphabet"),
            Cycle { rule } => write!(f, "N{rule}: lies on a reference cycle (recursion)"),
            NotAnInner { rule, inner } => write!(f, "N{rule}: outer slot N{inner} is not an inner rule"),
            OrphanInner { inner } => write!(f, "N{inner}: inner rule without an outer rule"),
            MultipleOuters { inner, outers } => {
                write!(f, "N{inner}: inner rule referenced by several outer rules {outers:?}")
            }
            InnerReferencedOutside { inner, rule } => {
                write!(f, "N{inner}: inner rule referenced from N{rule} outside its outer slot")
            }
            ZeroFixedLength { rule } => write!(f, "N{rule}: fixed length must be positive"),
            FixedLengthMismatch {
                rule,
                expansion,
                expected,
                found,
            } => write!(f, "N{rule}: expansion {expansion} has length {found}, expected {expected}"),
            ExpansionCountMismatch {
                inner,
                occurrences,
                expansions,
            } => write!(
                f,
                "N{inner}: {expansions} expansion(s) for {occurrences} occurrence(s) of its outer rule"
            ),
            Unreachable { rule } => write!(f, "N{rule}: not reachable from N0"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    Variable,
    Fixed,
}

/// Symbol accounting of an encoded grammar.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeReport {
    /// `sum(|body| + 1)` over plain rules.
    pub rule_symbols: usize,
    /// All symbols of outer and inner rules, separators included.
    pub branching_overhead: usize,
    /// Symbols spent listing expansions past the first one (part of
    /// `branching_overhead`).
    pub cost_s: usize,
    pub total: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Grammar {
    alphabet: Alphabet,
    rules: Vec<Rule>,
}

impl Grammar {
    /// Builds a grammar without checking it; see [`Grammar::validate`].
    pub fn new(alphabet: Alphabet, rules: Vec<Rule>) -> Self {
        Grammar { alphabet, rules }
    }

    /// `{S -> s}`.
    pub fn straight_line(seq: &Sequence) -> Self {
        let body = seq.symbols.iter().map(|&t| Symbol::Terminal(t)).collect();
        Grammar {
            alphabet: seq.alphabet.clone(),
            rules: vec![Rule::Plain(body)],
        }
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn rule(&self, n: u32) -> Option<&Rule> {
        self.rules.get(n as usize)
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn into_parts(self) -> (Alphabet, Vec<Rule>) {
        (self.alphabet, self.rules)
    }

    pub fn is_straight_line(&self) -> bool {
        self.rules.iter().all(|r| !r.is_branching())
    }

    /// Number of branching pairs.
    pub fn branching_pairs(&self) -> usize {
        self.rules.iter().filter(|r| matches!(r, Rule::Outer { .. })).count()
    }

    pub fn render(&self, s: Symbol) -> String {
        match s {
            Symbol::Terminal(t) => self.alphabet.display(t),
            Symbol::NonTerminal(n) => format!("N{n}"),
        }
    }

    pub fn render_seq(&self, seq: &[Symbol]) -> String {
        let sep = match self.alphabet {
            Alphabet::Bytes => "",
            Alphabet::Tokens(_) => " ",
        };
        seq.iter().map(|&s| self.render(s)).collect::<Vec<_>>().join(sep)
    }

    /// Outgoing references of rule `n`, with multiplicity.
    fn references(&self, n: usize) -> impl Iterator<Item = u32> + '_ {
        self.rules[n].symbols().filter_map(|(_, _, s)| s.nonterminal())
    }

    /// Lists every violated invariant; empty iff the grammar is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.rules.is_empty() {
            out.push(Violation::NoRules);
            return out;
        }
        if self.rules[0].is_branching() {
            out.push(Violation::StartNotPlain);
        }
        let n = self.rules.len();
        let mut structurally_sound = true;
        let mut outers_of: Vec<Vec<u32>> = vec![Vec::new(); n];
        for (id, rule) in self.rules.iter().enumerate() {
            let id32 = id as u32;
            for (_, _, s) in rule.symbols() {
                match s {
                    Symbol::Terminal(t) if !self.alphabet.contains(t) => out.push(Violation::UnknownTerminal { rule: id32, terminal: t }),
                    Symbol::NonTerminal(r) if r as usize >= n => {
                        structurally_sound = false;
                        out.push(Violation::UndefinedNonTerminal { rule: id32, referenced: r })
                    }
                    _ => {}
                }
            }
            match rule {
                Rule::Plain(body) => {
                    if body.is_empty() {
                        out.push(Violation::EmptyBody { rule: id32 });
                    }
                }
                Rule::Outer { prefix, inner, suffix } => {
                    if prefix.is_empty() || suffix.is_empty() {
                        out.push(Violation::EmptyContext { rule: id32 });
                    }
                    match self.rules.get(*inner as usize) {
                        Some(Rule::Inner { .. }) => outers_of[*inner as usize].push(id32),
                        Some(_) => {
                            structurally_sound = false;
                            out.push(Violation::NotAnInner { rule: id32, inner: *inner })
                        }
                        None => structurally_sound = false,
                    }
                }
                Rule::Inner { expansions, fixed_len } => {
                    for (j, e) in expansions.iter().enumerate() {
                        if e.is_empty() {
                            out.push(Violation::EmptyExpansion { rule: id32, expansion: j });
                        }
                    }
                    match fixed_len {
                        Some(0) => out.push(Violation::ZeroFixedLength { rule: id32 }),
                        Some(k) => {
                            for (j, e) in expansions.iter().enumerate() {
                                if e.len() != *k {
                                    out.push(Violation::FixedLengthMismatch {
                                        rule: id32,
                                        expansion: j,
                                        expected: *k,
                                        found: e.len(),
                                    });
                                }
                            }
                        }
                        None => {}
                    }
                }
            }
        }
        // Inner rules are referenced from exactly one outer slot and nowhere else.
        for (id, rule) in self.rules.iter().enumerate() {
            if !matches!(rule, Rule::Inner { .. }) {
                continue;
            }
            match outers_of[id].len() {
                0 => {
                    structurally_sound = false;
                    out.push(Violation::OrphanInner { inner: id as u32 })
                }
                1 => {}
                _ => {
                    structurally_sound = false;
                    out.push(Violation::MultipleOuters {
                        inner: id as u32,
                        outers: outers_of[id].clone(),
                    })
                }
            }
        }
        for (id, rule) in self.rules.iter().enumerate() {
            let slot = match rule {
                Rule::Outer { prefix, .. } => Some(prefix.len()),
                _ => None,
            };
            for (_, pos, s) in rule.symbols() {
                if let Symbol::NonTerminal(r) = s {
                    if (r as usize) < n && matches!(self.rules[r as usize], Rule::Inner { .. }) && Some(pos) != slot {
                        structurally_sound = false;
                        out.push(Violation::InnerReferencedOutside { inner: r, rule: id as u32 });
                    }
                }
            }
        }
        if !structurally_sound {
            return out;
        }
        let cyclic = self.cyclic_rules();
        if !cyclic.is_empty() {
            out.extend(cyclic.into_iter().map(|rule| Violation::Cycle { rule }));
            return out;
        }
        let occ = self.outer_occurrence_counts();
        for (id, rule) in self.rules.iter().enumerate() {
            if let Rule::Outer { inner, .. } = rule {
                if let Rule::Inner { expansions, .. } = &self.rules[*inner as usize] {
                    if expansions.len() != occ[id] {
                        out.push(Violation::ExpansionCountMismatch {
                            inner: *inner,
                            occurrences: occ[id],
                            expansions: expansions.len(),
                        });
                    }
                }
            }
        }
        let reach = self.reachable();
        for (id, r) in reach.iter().enumerate() {
            if !r {
                out.push(Violation::Unreachable { rule: id as u32 });
            }
        }
        out
    }

    pub fn check(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(v))
        }
    }

    fn cyclic_rules(&self) -> Vec<u32> {
        // Iterative three-colour DFS.
        let n = self.rules.len();
        let adj: Vec<Vec<u32>> = (0..n).map(|i| self.references(i).collect()).collect();
        let mut colour = vec![0u8; n];
        let mut on_cycle = vec![false; n];
        for root in 0..n {
            if colour[root] != 0 {
                continue;
            }
            let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
            colour[root] = 1;
            while let Some(&mut (v, ref mut i)) = stack.last_mut() {
                if *i < adj[v].len() {
                    let w = adj[v][*i] as usize;
                    *i += 1;
                    match colour[w] {
                        0 => {
                            colour[w] = 1;
                            stack.push((w, 0));
                        }
                        1 => {
                            // Back edge: everything on the stack from w up is cyclic.
                            let mut mark = false;
                            for &(u, _) in stack.iter() {
                                if u == w {
                                    mark = true;
                                }
                                if mark {
                                    on_cycle[u] = true;
                                }
                            }
                        }
                        _ => {}
                    }
                } else {
                    colour[v] = 2;
                    stack.pop();
                }
            }
        }
        (0..n).filter(|&i| on_cycle[i]).map(|i| i as u32).collect()
    }

    fn reachable(&self) -> Vec<bool> {
        let n = self.rules.len();
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for w in self.references(v) {
                let w = w as usize;
                if w < n && !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen
    }

    /// For every rule id: number of syntactic occurrences if it is an outer
    /// rule, 0 otherwise.
    pub fn outer_occurrence_counts(&self) -> Vec<usize> {
        let mut occ = vec![0usize; self.rules.len()];
        for rule in &self.rules {
            for (_, _, s) in rule.symbols() {
                if let Symbol::NonTerminal(r) = s {
                    if matches!(self.rules.get(r as usize), Some(Rule::Outer { .. })) {
                        occ[r as usize] += 1;
                    }
                }
            }
        }
        occ
    }

    /// Rank of each outer occurrence among the occurrences of the same outer
    /// nonterminal, in first-visit order of the leftmost derivation. Requires
    /// a valid grammar.
    pub fn occurrence_ranks(&self) -> FxHashMap<Site, usize> {
        let n = self.rules.len();
        let mut next = vec![0usize; n];
        let mut visited = vec![false; n];
        let mut ranks = FxHashMap::default();
        if n == 0 {
            return ranks;
        }
        // (rule, alt, pos, rank of the occurrence that opened an outer frame)
        let mut stack: Vec<(u32, usize, usize, usize)> = vec![(0, 0, 0, 0)];
        visited[0] = true;
        while let Some(top) = stack.last_mut() {
            let (id, alt, pos, rank) = *top;
            let rule = &self.rules[id as usize];
            if pos == rule.slot_len(alt) {
                stack.pop();
                continue;
            }
            top.2 += 1;
            let Symbol::NonTerminal(t) = rule.slot_symbol(alt, pos) else {
                continue;
            };
            match &self.rules[t as usize] {
                Rule::Plain(_) => {
                    if !visited[t as usize] {
                        visited[t as usize] = true;
                        stack.push((t, 0, 0, 0));
                    }
                }
                Rule::Outer { inner, .. } => {
                    let r = next[t as usize];
                    next[t as usize] += 1;
                    ranks.insert(Site::new(id as usize, alt, pos), r);
                    if visited[t as usize] {
                        stack.push((*inner, r, 0, 0));
                    } else {
                        visited[t as usize] = true;
                        stack.push((t, 0, 0, r));
                    }
                }
                Rule::Inner { .. } => stack.push((t, rank, 0, 0)),
            }
        }
        ranks
    }

    /// Longest-path depth from the start symbol for every rule (`None` when
    /// unreachable). Requires an acyclic grammar.
    pub fn depths(&self) -> Result<Vec<Option<usize>>> {
        if !self.cyclic_rules().is_empty() {
            return Err(Error::Invalid(self.validate()));
        }
        let n = self.rules.len();
        let order = self.topological_order();
        let mut depth: Vec<Option<usize>> = vec![None; n];
        if n == 0 {
            return Ok(depth);
        }
        depth[0] = Some(0);
        for &v in &order {
            let Some(d) = depth[v] else { continue };
            for w in self.references(v) {
                let w = w as usize;
                if w < n {
                    depth[w] = Some(depth[w].map_or(d + 1, |x| x.max(d + 1)));
                }
            }
        }
        Ok(depth)
    }

    /// Maximal depth of `n` over all parse trees of all strings of the
    /// language; the start symbol has depth 0.
    pub fn depth(&self, n: u32) -> Result<usize> {
        if n as usize >= self.rules.len() {
            return Err(Error::UnknownNonTerminal(n));
        }
        self.depths()?[n as usize].ok_or(Error::Unreachable(n))
    }

    /// Topological order of all rules (referrers before referents). Only
    /// meaningful for acyclic grammars.
    pub(crate) fn topological_order(&self) -> Vec<usize> {
        let n = self.rules.len();
        let mut indeg = vec![0usize; n];
        for v in 0..n {
            for w in self.references(v) {
                if (w as usize) < n {
                    indeg[w as usize] += 1;
                }
            }
        }
        let mut queue: VecDeque<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for w in self.references(v) {
                let w = w as usize;
                if w < n {
                    indeg[w] -= 1;
                    if indeg[w] == 0 {
                        queue.push_back(w);
                    }
                }
            }
        }
        order
    }

    /// Size of the grammar under `encoding`; equals the encoded stream length.
    pub fn size(&self, encoding: Encoding) -> Result<SizeReport> {
        self.check()?;
        self.size_unchecked(encoding)
    }

    pub(crate) fn size_unchecked(&self, encoding: Encoding) -> Result<SizeReport> {
        let mut rep = SizeReport::default();
        for (id, rule) in self.rules.iter().enumerate() {
            match rule {
                Rule::Plain(body) => rep.rule_symbols += body.len() + 1,
                Rule::Outer { prefix, suffix, .. } => rep.branching_overhead += prefix.len() + suffix.len() + 2,
                Rule::Inner { expansions, fixed_len } => {
                    let (size, cost) = inner_size(expansions, *fixed_len, encoding).ok_or(Error::NotFixedLength(id as u32))?;
                    rep.branching_overhead += size;
                    rep.cost_s += cost;
                }
            }
        }
        rep.total = rep.rule_symbols + rep.branching_overhead;
        Ok(rep)
    }

    /// The unique string derived when `resolver` picks the expansions.
    pub fn expand(&self, resolver: &mut dyn ChoiceResolver) -> Result<Vec<Symbol>> {
        let mut out = Vec::new();
        struct Collect<'a>(&'a mut Vec<Symbol>);
        impl DerivationVisitor for Collect<'_> {
            fn terminal(&mut self, t: u32) {
                self.0.push(Symbol::Terminal(t));
            }
        }
        self.derive(resolver, &mut Collect(&mut out))?;
        Ok(out)
    }

    /// Expansion under the canonical resolver, as terminal ids.
    pub fn expand_canonical(&self) -> Result<Vec<u32>> {
        let mut out = Vec::new();
        struct Collect<'a>(&'a mut Vec<u32>);
        impl DerivationVisitor for Collect<'_> {
            fn terminal(&mut self, t: u32) {
                self.0.push(t);
            }
        }
        self.derive(&mut Canonical, &mut Collect(&mut out))?;
        Ok(out)
    }

    pub fn expand_sequence(&self) -> Result<Sequence> {
        Ok(Sequence {
            alphabet: self.alphabet.clone(),
            symbols: self.expand_canonical()?,
        })
    }

    /// Leftmost derivation from the start symbol, reporting terminals and
    /// entry/exit of every nonterminal occurrence.
    pub fn derive(&self, resolver: &mut dyn ChoiceResolver, visitor: &mut dyn DerivationVisitor) -> Result<()> {
        self.check()?;
        let ranks = self.occurrence_ranks();
        struct Frame {
            rule: u32,
            alt: usize,
            pos: usize,
            // Site of the occurrence that opened an outer frame.
            occurrence: Option<Site>,
        }
        let mut stack = vec![Frame {
            rule: 0,
            alt: 0,
            pos: 0,
            occurrence: None,
        }];
        visitor.enter(NodeKind::Plain, 0);
        while let Some(top) = stack.last_mut() {
            let rule = &self.rules[top.rule as usize];
            if top.pos == rule.slot_len(top.alt) {
                let kind = NodeKind::of(rule);
                let id = top.rule;
                stack.pop();
                visitor.exit(kind, id);
                continue;
            }
            let here = Site::new(top.rule as usize, top.alt, top.pos);
            let sym = rule.slot_symbol(top.alt, top.pos);
            top.pos += 1;
            let occurrence = top.occurrence;
            let parent = top.rule;
            match sym {
                Symbol::Terminal(t) => visitor.terminal(t),
                Symbol::NonTerminal(n) => {
                    let target = &self.rules[n as usize];
                    let frame = match target {
                        Rule::Plain(_) => Frame {
                            rule: n,
                            alt: 0,
                            pos: 0,
                            occurrence: None,
                        },
                        Rule::Outer { .. } => Frame {
                            rule: n,
                            alt: 0,
                            pos: 0,
                            occurrence: Some(here),
                        },
                        Rule::Inner { expansions, .. } => {
                            let site = occurrence.expect("inner slot outside an outer frame");
                            let rank = ranks[&site];
                            let alt = resolver
                                .choose(n, parent, rank, expansions.len())
                                .filter(|&a| a < expansions.len())
                                .ok_or(Error::ResolverExhausted {
                                    inner: n,
                                    occurrence: rank,
                                })?;
                            Frame {
                                rule: n,
                                alt,
                                pos: 0,
                                occurrence: None,
                            }
                        }
                    };
                    visitor.enter(NodeKind::of(target), n);
                    stack.push(frame);
                }
            }
        }
        resolver.finish()
    }
}

/// `(size, cost_s)` of an inner rule; `None` if fixed encoding is requested
/// for a variable-length rule.
pub(crate) fn inner_size(expansions: &[Vec<Symbol>], fixed_len: Option<usize>, encoding: Encoding) -> Option<(usize, usize)> {
    let n = expansions.len();
    if n == 0 {
        return Some((1, 0));
    }
    match encoding {
        Encoding::Fixed => {
            let k = fixed_len?;
            // first expansion, one choice separator, the rest back to back
            Some((n * k + 1, (n - 1) * k))
        }
        Encoding::Variable => {
            let syms: usize = expansions.iter().map(Vec::len).sum();
            let cost = expansions[1..].iter().map(|e| e.len() + 1).sum();
            // separators between expansions plus the end-of-rule symbol
            Some((syms + n, cost))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Plain,
    Outer,
    Inner,
}

impl NodeKind {
    fn of(rule: &Rule) -> Self {
        match rule {
            Rule::Plain(_) => NodeKind::Plain,
            Rule::Outer { .. } => NodeKind::Outer,
            Rule::Inner { .. } => NodeKind::Inner,
        }
    }
}

pub trait DerivationVisitor {
    fn terminal(&mut self, t: u32);
    fn enter(&mut self, _kind: NodeKind, _nt: u32) {}
    fn exit(&mut self, _kind: NodeKind, _nt: u32) {}
}

/// Picks which expansion an inner nonterminal derives at each point of a
/// leftmost derivation.
pub trait ChoiceResolver {
    /// `occurrence` is the rank of the outer occurrence being derived, `n`
    /// the number of available expansions. Returns an expansion index.
    fn choose(&mut self, inner: u32, outer: u32, occurrence: usize, n: usize) -> Option<usize>;

    /// Called once the derivation is complete.
    fn finish(&mut self) -> Result<()> {
        Ok(())
    }
}

/// Each outer occurrence derives the expansion bound to it. Yields the
/// encoded target sequence.
#[derive(Clone, Copy, Debug, Default)]
pub struct Canonical;

impl ChoiceResolver for Canonical {
    fn choose(&mut self, _inner: u32, _outer: u32, occurrence: usize, _n: usize) -> Option<usize> {
        Some(occurrence)
    }
}

/// Supplies, per inner nonterminal, expansion indices in derivation order.
#[derive(Clone, Debug, Default)]
pub struct InOrder {
    queues: FxHashMap<u32, VecDeque<usize>>,
}

impl InOrder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, inner: u32, choices: impl IntoIterator<Item = usize>) -> Self {
        self.queues.entry(inner).or_default().extend(choices);
        self
    }
}

impl ChoiceResolver for InOrder {
    fn choose(&mut self, inner: u32, _outer: u32, _occurrence: usize, _n: usize) -> Option<usize> {
        self.queues.get_mut(&inner)?.pop_front()
    }

    fn finish(&mut self) -> Result<()> {
        let mut left: Vec<_> = self.queues.iter().filter(|(_, q)| !q.is_empty()).collect();
        left.sort_by_key(|(k, _)| **k);
        match left.first() {
            Some((&inner, q)) => Err(Error::ResolverOverSupplied { inner, remaining: q.len() }),
            None => Ok(()),
        }
    }
}
