//! Brackets induced by a grammar's derivation over a sentence-segmented
//! corpus, and unlabeled scoring against gold trees.
//!
//! A branching pair `O -> a I b`, `I -> g1 | g2 | ...` yields per occurrence
//! an inside bracket over the chosen `g` and a context bracket over `a g b`.
//! Plain nonterminals below the start rule yield straightline brackets.

use std::fmt;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grammar::{Canonical, DerivationVisitor, Grammar, NodeKind, Sequence};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BracketKind {
    Context,
    Inside,
    Straightline,
}

impl BracketKind {
    pub const ALL: [BracketKind; 3] = [BracketKind::Context, BracketKind::Inside, BracketKind::Straightline];

    pub fn name(self) -> &'static str {
        match self {
            BracketKind::Context => "context",
            BracketKind::Inside => "inside",
            BracketKind::Straightline => "straightline",
        }
    }
}

impl fmt::Display for BracketKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for BracketKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BracketKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Bracket(format!("unknown bracket kind `{s}`")))
    }
}

/// Half-open token span `[start, end)` inside sentence `sentence`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Bracket {
    pub sentence: usize,
    pub start: usize,
    pub end: usize,
    pub kind: BracketKind,
}

impl Bracket {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// Sentence-segmented token corpus; one sentence per non-empty line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    pub sentences: Vec<Vec<String>>,
}

impl Corpus {
    pub fn from_lines(text: &str) -> Self {
        Corpus {
            sentences: text
                .lines()
                .map(|l| l.split_whitespace().map(str::to_string).collect::<Vec<_>>())
                .filter(|s| !s.is_empty())
                .collect(),
        }
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.sentences.iter().map(Vec::len).collect()
    }

    /// All sentences concatenated into one token sequence.
    pub fn sequence(&self) -> Sequence {
        Sequence::from_tokens(self.sentences.iter().flatten().map(String::as_str))
    }
}

struct Collector {
    pos: usize,
    // (kind, start, inside span recorded by a child inner frame)
    stack: Vec<(NodeKind, usize, Option<(usize, usize)>)>,
    out: Vec<(usize, usize, BracketKind)>,
}

impl DerivationVisitor for Collector {
    fn terminal(&mut self, _t: u32) {
        self.pos += 1;
    }

    fn enter(&mut self, kind: NodeKind, _nt: u32) {
        self.stack.push((kind, self.pos, None));
    }

    fn exit(&mut self, _kind: NodeKind, _nt: u32) {
        let (kind, start, inside) = self.stack.pop().expect("unbalanced derivation");
        if self.stack.is_empty() {
            return; // start rule
        }
        match kind {
            NodeKind::Plain => self.out.push((start, self.pos, BracketKind::Straightline)),
            NodeKind::Inner => self.stack.last_mut().unwrap().2 = Some((start, self.pos)),
            NodeKind::Outer => {
                let (s, e) = inside.expect("outer rule without an inner slot");
                if s < e {
                    self.out.push((start, self.pos, BracketKind::Context));
                    self.out.push((s, e, BracketKind::Inside));
                }
            }
        }
    }
}

/// Brackets of every nonterminal occurrence in the canonical derivation of
/// `g`, which must derive `corpus`. Brackets that leave their sentence are
/// dropped; a context bracket and its inside bracket are kept or dropped
/// together, as are pairs whose inside span is empty.
pub fn extract_brackets(g: &Grammar, corpus: &Corpus) -> Result<Vec<Bracket>> {
    let derived = g.expand_sequence()?;
    if derived.to_bytes() != corpus.sequence().to_bytes() || derived.len() != corpus.lengths().iter().sum::<usize>() {
        return Err(Error::Bracket("grammar does not derive the corpus".into()));
    }
    let mut c = Collector {
        pos: 0,
        stack: Vec::new(),
        out: Vec::new(),
    };
    g.derive(&mut Canonical, &mut c)?;

    let mut starts = Vec::with_capacity(corpus.sentences.len() + 1);
    let mut acc = 0;
    for n in corpus.lengths() {
        starts.push(acc);
        acc += n;
    }
    starts.push(acc);
    let locate = |s: usize, e: usize| -> Option<(usize, usize)> {
        let i = starts.partition_point(|&b| b <= s) - 1;
        (e <= starts[i + 1]).then(|| (i, starts[i]))
    };
    let mut out = Vec::with_capacity(c.out.len());
    let mut i = 0;
    while i < c.out.len() {
        let (s, e, kind) = c.out[i];
        let width = if kind == BracketKind::Context { 2 } else { 1 };
        if let Some((sent, base)) = locate(s, e) {
            for &(s, e, kind) in &c.out[i..i + width] {
                out.push(Bracket {
                    sentence: sent,
                    start: s - base,
                    end: e - base,
                    kind,
                });
            }
        }
        i += width;
    }
    Ok(out)
}

/// Predictions as tab-separated `sentence start end kind` lines.
pub fn write_tsv(brackets: &[Bracket]) -> String {
    let mut out = String::new();
    for b in brackets {
        out.push_str(&format!("{}\t{}\t{}\t{}\n", b.sentence, b.start, b.end, b.kind));
    }
    out
}

pub fn parse_tsv(text: &str) -> Result<Vec<Bracket>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let bad = || Error::Parse {
            line: i + 1,
            reason: "expected `sentence<TAB>start<TAB>end<TAB>kind`".into(),
        };
        let [s, a, b, k] = f.as_slice() else { return Err(bad()) };
        let b = Bracket {
            sentence: s.parse().map_err(|_| bad())?,
            start: a.parse().map_err(|_| bad())?,
            end: b.parse().map_err(|_| bad())?,
            kind: k.parse().map_err(|_| bad())?,
        };
        if b.start >= b.end {
            return Err(Error::Parse {
                line: i + 1,
                reason: format!("empty span [{}, {})", b.start, b.end),
            });
        }
        out.push(b);
    }
    Ok(out)
}

/// Which leaf of a preterminal `(TAG word)` becomes the sentence token.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LeafToken {
    #[default]
    Word,
    Tag,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GoldSentence {
    pub tokens: Vec<String>,
    /// Constituent spans, one per phrasal node (unary chains repeat a span).
    pub spans: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GoldTreebank {
    pub sentences: Vec<GoldSentence>,
}

enum Tok<'a> {
    Open,
    Close,
    Atom(&'a str),
}

fn lex_trees(text: &str) -> Vec<(usize, Tok<'_>)> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let mut rest = line;
        loop {
            rest = rest.trim_start();
            let Some(c) = rest.chars().next() else { break };
            match c {
                '(' => {
                    out.push((ln + 1, Tok::Open));
                    rest = &rest[1..];
                }
                ')' => {
                    out.push((ln + 1, Tok::Close));
                    rest = &rest[1..];
                }
                _ => {
                    let end = rest.find(|c: char| c.is_whitespace() || c == '(' || c == ')').unwrap_or(rest.len());
                    out.push((ln + 1, Tok::Atom(&rest[..end])));
                    rest = &rest[end..];
                }
            }
        }
    }
    out
}

impl GoldTreebank {
    /// Reads bracketed parses such as `(S (NP (DT the) (NN cat)) (VP (VBD sat)))`,
    /// one top-level tree per sentence; trees may span lines. Labels are
    /// ignored except `-NONE-`, whose leaves are dropped along with
    /// constituents left empty.
    pub fn parse(text: &str, leaf: LeafToken) -> Result<Self> {
        let toks = lex_trees(text);
        let mut sentences = Vec::new();
        let mut i = 0;
        while i < toks.len() {
            let (ln, Tok::Open) = toks[i] else {
                return Err(Error::Parse {
                    line: toks[i].0,
                    reason: "expected `(` to open a tree".into(),
                });
            };
            let mut s = GoldSentence::default();
            i = parse_node(&toks, i, leaf, &mut s)?;
            if s.tokens.is_empty() {
                return Err(Error::Parse {
                    line: ln,
                    reason: "tree has no tokens".into(),
                });
            }
            sentences.push(s);
        }
        Ok(GoldTreebank { sentences })
    }
}

/// Parses the node opening at `toks[i]`; returns the index after its `)`.
fn parse_node(toks: &[(usize, Tok<'_>)], mut i: usize, leaf: LeafToken, s: &mut GoldSentence) -> Result<usize> {
    let eof = |line| Error::Parse {
        line,
        reason: "unbalanced parentheses".into(),
    };
    let open_line = toks[i].0;
    i += 1;
    let label = match toks.get(i) {
        Some((_, Tok::Atom(a))) => {
            i += 1;
            *a
        }
        Some(_) => "",
        None => return Err(eof(open_line)),
    };
    let start = s.tokens.len();
    let mut phrasal = false;
    loop {
        match toks.get(i) {
            None => return Err(eof(open_line)),
            Some((_, Tok::Close)) => {
                i += 1;
                break;
            }
            Some((_, Tok::Open)) => {
                phrasal = true;
                i = parse_node(toks, i, leaf, s)?;
            }
            Some((ln, Tok::Atom(w))) => {
                if phrasal {
                    return Err(Error::Parse {
                        line: *ln,
                        reason: format!("bare token `{w}` beside subtrees"),
                    });
                }
                if label != "-NONE-" {
                    s.tokens.push(match leaf {
                        LeafToken::Word => w.to_string(),
                        LeafToken::Tag => label.to_string(),
                    });
                }
                i += 1;
            }
        }
    }
    let end = s.tokens.len();
    if phrasal && end > start {
        s.spans.push((start, end));
    }
    Ok(i)
}

/// Counts for one bracket kind (or all kinds together).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindScore {
    pub extracted: usize,
    /// Singleton and sentence-wide brackets removed before scoring.
    pub filtered: usize,
    pub scored: usize,
    pub matched: usize,
    pub non_crossing: usize,
}

impl KindScore {
    pub fn precision(&self) -> f64 {
        ratio(self.matched, self.scored)
    }

    pub fn non_crossing_pct(&self) -> f64 {
        ratio(self.non_crossing, self.scored)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub context: KindScore,
    pub inside: KindScore,
    pub straightline: KindScore,
    pub all: KindScore,
}

impl Scores {
    pub fn kind(&self, k: BracketKind) -> &KindScore {
        match k {
            BracketKind::Context => &self.context,
            BracketKind::Inside => &self.inside,
            BracketKind::Straightline => &self.straightline,
        }
    }

    fn kind_mut(&mut self, k: BracketKind) -> &mut KindScore {
        match k {
            BracketKind::Context => &mut self.context,
            BracketKind::Inside => &mut self.inside,
            BracketKind::Straightline => &mut self.straightline,
        }
    }
}

fn crosses(a: (usize, usize), b: (usize, usize)) -> bool {
    a.0 < b.1 && b.0 < a.1 && !(a.0 <= b.0 && b.1 <= a.1) && !(b.0 <= a.0 && a.1 <= b.1)
}

/// Unlabeled precision and non-crossing rate. Singleton and sentence-wide
/// spans are removed from predictions and gold alike. Matching is multiset
/// intersection: a gold span repeated `n` times matches at most `n`
/// predictions of one kind (or of all kinds, for the `all` row).
pub fn score(pred: &[Bracket], gold: &GoldTreebank) -> Result<Scores> {
    let mut by_sentence: Vec<Vec<&Bracket>> = vec![Vec::new(); gold.sentences.len()];
    for b in pred {
        let Some(s) = gold.sentences.get(b.sentence) else {
            return Err(Error::Bracket(format!(
                "sentence {} out of range ({} gold sentences)",
                b.sentence,
                gold.sentences.len()
            )));
        };
        if b.start >= b.end || b.end > s.tokens.len() {
            return Err(Error::Bracket(format!(
                "span [{}, {}) outside sentence {} of length {}",
                b.start,
                b.end,
                b.sentence,
                s.tokens.len()
            )));
        }
        by_sentence[b.sentence].push(b);
    }
    let mut scores = Scores::default();
    for (sent, preds) in gold.sentences.iter().zip(&by_sentence) {
        let n = sent.tokens.len();
        let keep = |(s, e): (usize, usize)| e - s > 1 && !(s == 0 && e == n);
        let mut gold_count: FxHashMap<(usize, usize), usize> = FxHashMap::default();
        let mut gold_spans = Vec::new();
        for &sp in &sent.spans {
            if keep(sp) {
                *gold_count.entry(sp).or_default() += 1;
                gold_spans.push(sp);
            }
        }
        gold_spans.sort_unstable();
        gold_spans.dedup();
        let mut used: FxHashMap<(BracketKind, (usize, usize)), usize> = FxHashMap::default();
        let mut used_all: FxHashMap<(usize, usize), usize> = FxHashMap::default();
        for b in preds {
            let sp = (b.start, b.end);
            let kind = b.kind;
            let mut bump = |f: fn(&mut KindScore)| {
                f(scores.kind_mut(kind));
                f(&mut scores.all);
            };
            bump(|r| r.extracted += 1);
            if !keep(sp) {
                bump(|r| r.filtered += 1);
                continue;
            }
            bump(|r| r.scored += 1);
            if !gold_spans.iter().any(|&g| crosses(sp, g)) {
                bump(|r| r.non_crossing += 1);
            }
            let avail = gold_count.get(&sp).copied().unwrap_or(0);
            let u = used.entry((b.kind, sp)).or_default();
            if *u < avail {
                *u += 1;
                scores.kind_mut(b.kind).matched += 1;
            }
            let u = used_all.entry(sp).or_default();
            if *u < avail {
                *u += 1;
                scores.all.matched += 1;
            }
        }
    }
    Ok(scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interchange::parse_grammar;
    use proptest::prelude::*;

    fn br(sentence: usize, start: usize, end: usize, kind: BracketKind) -> Bracket {
        Bracket {
            sentence,
            start,
            end,
            kind,
        }
    }

    const ALICE: &str = "Alice was beginning to get very tired
Alice was getting very tired
Alice is very tired
Alice will be very tired
Alice was getting very tired
";

    #[test]
    fn g2_gives_three_pairs() {
        let g = parse_grammar(
            "#mode token
N0 -> Alice was beginning to get very tired N1 Alice is very tired N1 N1
N1 -> Alice N2 very tired
N2 =>2 was getting | will be | was getting
",
        )
        .unwrap();
        let b = extract_brackets(&g, &Corpus::from_lines(ALICE)).unwrap();
        let want = vec![
            br(1, 0, 5, BracketKind::Context),
            br(1, 1, 3, BracketKind::Inside),
            br(3, 0, 5, BracketKind::Context),
            br(3, 1, 3, BracketKind::Inside),
            br(4, 0, 5, BracketKind::Context),
            br(4, 1, 3, BracketKind::Inside),
        ];
        assert_eq!(b, want);
    }

    #[test]
    fn straight_line_has_no_branching_brackets() {
        let g = parse_grammar("#mode token\nN0 -> N1 c N1\nN1 -> a b\n").unwrap();
        let b = extract_brackets(&g, &Corpus::from_lines("a b c\na b")).unwrap();
        assert_eq!(
            b,
            vec![br(0, 0, 2, BracketKind::Straightline), br(1, 0, 2, BracketKind::Straightline)]
        );
    }

    #[test]
    fn boundary_crossing_pairs_are_dropped() {
        let g = parse_grammar("#mode token\nN0 -> N1 N1\nN1 -> a N2 b\nN2 =>1 x | y\n").unwrap();
        // first occurrence crosses the line break, the second does not
        let b = extract_brackets(&g, &Corpus::from_lines("a x\nb a y b")).unwrap();
        assert_eq!(b, vec![br(1, 1, 4, BracketKind::Context), br(1, 2, 3, BracketKind::Inside)]);
        assert!(extract_brackets(&g, &Corpus::from_lines("a x b a y c")).is_err());
    }

    #[test]
    fn parses_trees() {
        let t = GoldTreebank::parse(
            "( (S (NP (DT the) (NN cat)) (VP (VBD sat) (-NONE- *T*)\n (PP (IN on) (NP (DT a) (NN mat))))) )\n(X (Y z))",
            LeafToken::Word,
        )
        .unwrap();
        assert_eq!(t.sentences.len(), 2);
        let s = &t.sentences[0];
        assert_eq!(s.tokens, ["the", "cat", "sat", "on", "a", "mat"]);
        let mut spans = s.spans.clone();
        spans.sort();
        assert_eq!(spans, [(0, 2), (0, 6), (0, 6), (2, 6), (3, 6), (4, 6)]);
        let tags = GoldTreebank::parse("(S (DT the) (NN cat))", LeafToken::Tag).unwrap();
        assert_eq!(tags.sentences[0].tokens, ["DT", "NN"]);
        assert!(GoldTreebank::parse("(S (DT the)", LeafToken::Word).is_err());
        assert!(GoldTreebank::parse("S (DT the)", LeafToken::Word).is_err());
        assert!(GoldTreebank::parse("(S (-NONE- *))", LeafToken::Word).is_err());
    }

    #[test]
    fn perfect_and_crossing() {
        let gold = GoldTreebank::parse("(S (A (B x) (B y)) (B z) (B w))", LeafToken::Word).unwrap();
        let s = score(&[br(0, 0, 2, BracketKind::Inside)], &gold).unwrap();
        assert_eq!((s.all.precision(), s.all.non_crossing_pct()), (1.0, 1.0));
        let gold = GoldTreebank::parse("(S (B x) (A (B y) (B z)) (B w))", LeafToken::Word).unwrap();
        let s = score(&[br(0, 0, 2, BracketKind::Context)], &gold).unwrap();
        assert_eq!((s.context.precision(), s.context.non_crossing_pct()), (0.0, 0.0));
        assert!(score(&[br(1, 0, 2, BracketKind::Context)], &gold).is_err());
        assert!(score(&[br(0, 0, 5, BracketKind::Context)], &gold).is_err());
    }

    #[test]
    fn tsv_round_trip() {
        let b = vec![br(0, 1, 3, BracketKind::Inside), br(2, 0, 4, BracketKind::Straightline)];
        assert_eq!(parse_tsv(&write_tsv(&b)).unwrap(), b);
        assert!(parse_tsv("0\t3\t3\tinside\n").is_err());
        assert!(parse_tsv("0\t1\t3\tother\n").is_err());
    }

    // Random well-nested span sets over sentences of length 1..12.
    fn treebank() -> impl Strategy<Value = GoldTreebank> {
        fn spans(lo: usize, hi: usize, seed: &mut u64, out: &mut Vec<(usize, usize)>) {
            out.push((lo, hi));
            let mut cut = lo;
            while cut < hi {
                *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let w = 1 + (*seed >> 33) as usize % (hi - cut);
                if w > 1 && w < hi - lo {
                    spans(cut, cut + w, seed, out);
                }
                cut += w;
            }
        }
        prop::collection::vec((1usize..12, any::<u64>()), 1..5).prop_map(|ss| GoldTreebank {
            sentences: ss
                .into_iter()
                .map(|(n, mut seed)| {
                    let mut sp = Vec::new();
                    spans(0, n, &mut seed, &mut sp);
                    GoldSentence {
                        tokens: vec!["t".into(); n],
                        spans: sp,
                    }
                })
                .collect(),
        })
    }

    fn preds(gold: &GoldTreebank, picks: &[(usize, usize, usize, u8)]) -> Vec<Bracket> {
        picks
            .iter()
            .map(|&(s, a, b, k)| {
                let s = s % gold.sentences.len();
                let n = gold.sentences[s].tokens.len();
                let (a, b) = (a % n, b % n);
                let (a, b) = (a.min(b), a.max(b) + 1);
                br(s, a, b, BracketKind::ALL[k as usize % 3])
            })
            .collect()
    }

    // Pairwise oracle: every prediction against every gold copy; a gold copy
    // is consumed by the first equal prediction of each row.
    fn oracle(pred: &[Bracket], gold: &GoldTreebank) -> [KindScore; 4] {
        let keep = |n: usize, s: usize, e: usize| e - s > 1 && !(s == 0 && e == n);
        let mut rows = [KindScore::default(); 4];
        let mut taken: Vec<Vec<[bool; 4]>> = gold.sentences.iter().map(|s| vec![[false; 4]; s.spans.len()]).collect();
        for p in pred {
            let g = &gold.sentences[p.sentence];
            let n = g.tokens.len();
            for r in [p.kind as usize, 3] {
                rows[r].extracted += 1;
                if !keep(n, p.start, p.end) {
                    rows[r].filtered += 1;
                    continue;
                }
                rows[r].scored += 1;
                let mut crossing = false;
                let mut hit = false;
                for (j, &(s, e)) in g.spans.iter().enumerate() {
                    if !keep(n, s, e) {
                        continue;
                    }
                    let overlap = p.start.max(s) < p.end.min(e);
                    let nested = (p.start <= s && e <= p.end) || (s <= p.start && p.end <= e);
                    crossing |= overlap && !nested;
                    if !hit && (s, e) == (p.start, p.end) && !taken[p.sentence][j][r] {
                        taken[p.sentence][j][r] = true;
                        hit = true;
                    }
                }
                rows[r].matched += hit as usize;
                rows[r].non_crossing += !crossing as usize;
            }
        }
        rows
    }

    proptest! {
        #[test]
        fn matches_pairwise_oracle(gold in treebank(), picks in prop::collection::vec((0usize..8, 0usize..12, 0usize..12, 0u8..3), 0..20)) {
            let pred = preds(&gold, &picks);
            let s = score(&pred, &gold).unwrap();
            let want = oracle(&pred, &gold);
            prop_assert_eq!([s.context, s.inside, s.straightline, s.all], want);
            prop_assert_eq!(s.all.extracted, pred.len());
            prop_assert_eq!(s.all.filtered + s.all.scored, s.all.extracted);
            prop_assert!(s.all.matched <= s.all.non_crossing);
            for k in BracketKind::ALL {
                let r = s.kind(k);
                prop_assert!(r.precision() <= r.non_crossing_pct());
                prop_assert!((0.0..=1.0).contains(&r.precision()));
            }
            let mut shuffled = pred.clone();
            shuffled.reverse();
            prop_assert_eq!(score(&shuffled, &gold).unwrap(), s);
        }
    }
}
