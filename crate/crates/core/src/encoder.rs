//! Grammar streams. The number of symbols in a stream is the grammar size.
//!
//! Rules are written start rule first, then by increasing depth, each inner
//! rule right after its outer rule; nonterminal `N<i>` in a stream is the
//! `i`-th rule written. Every rule ends with `#` except fixed-length inner
//! rules, which write their first expansion, one `|`, then the remaining
//! expansions back to back: the first expansion gives the length and the
//! occurrence count of the outer rule gives the number of expansions.

use std::io::{Read, Write};

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::escape::{escape_byte, escape_token, lex, unescape_byte, unescape_token, Lexeme};
use crate::grammar::{Alphabet, AlphabetMode, Encoding, Grammar, Rule, Symbol};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StreamSymbol {
    Terminal(u32),
    NonTerminal(u32),
    RuleSep,
    ChoiceSep,
}

impl From<Symbol> for StreamSymbol {
    fn from(s: Symbol) -> Self {
        match s {
            Symbol::Terminal(t) => StreamSymbol::Terminal(t),
            Symbol::NonTerminal(n) => StreamSymbol::NonTerminal(n),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedStream {
    pub alphabet: Alphabet,
    pub encoding: Encoding,
    pub symbols: Vec<StreamSymbol>,
}

impl EncodedStream {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

/// Order in which rules are written; `order[i]` is the id of the rule that
/// becomes `N<i>`.
pub fn emission_order(g: &Grammar) -> Result<Vec<u32>> {
    g.check()?;
    let depths = g.depths()?;
    let rules = g.rules();
    let mut order: Vec<u32> = (0..rules.len() as u32)
        .filter(|&i| !matches!(rules[i as usize], Rule::Inner { .. }))
        .collect();
    order.sort_by_key(|&i| (depths[i as usize].unwrap_or(usize::MAX), i));
    let mut out = Vec::with_capacity(rules.len());
    for i in order {
        out.push(i);
        if let Rule::Outer { inner, .. } = rules[i as usize] {
            out.push(inner);
        }
    }
    Ok(out)
}

/// The grammar with its rules renumbered into emission order.
pub fn renumber(g: &Grammar) -> Result<Grammar> {
    let order = emission_order(g)?;
    let mut new_id = vec![0u32; order.len()];
    for (i, &old) in order.iter().enumerate() {
        new_id[old as usize] = i as u32;
    }
    let map = |seq: &[Symbol]| -> Vec<Symbol> {
        seq.iter()
            .map(|&s| match s {
                Symbol::NonTerminal(n) => Symbol::NonTerminal(new_id[n as usize]),
                t => t,
            })
            .collect()
    };
    let rules = order
        .iter()
        .map(|&old| match &g.rules()[old as usize] {
            Rule::Plain(b) => Rule::Plain(map(b)),
            Rule::Outer { prefix, inner, suffix } => Rule::Outer {
                prefix: map(prefix),
                inner: new_id[*inner as usize],
                suffix: map(suffix),
            },
            Rule::Inner { expansions, fixed_len } => Rule::Inner {
                expansions: expansions.iter().map(|e| map(e)).collect(),
                fixed_len: *fixed_len,
            },
        })
        .collect();
    Ok(Grammar::new(g.alphabet().clone(), rules))
}

pub fn encode(g: &Grammar, encoding: Encoding) -> Result<EncodedStream> {
    let r = renumber(g)?;
    let mut out: Vec<StreamSymbol> = Vec::with_capacity(r.size_unchecked(encoding)?.total);
    let put = |out: &mut Vec<StreamSymbol>, seq: &[Symbol]| out.extend(seq.iter().map(|&s| StreamSymbol::from(s)));
    for rule in r.rules() {
        match rule {
            Rule::Plain(b) => {
                put(&mut out, b);
                out.push(StreamSymbol::RuleSep);
            }
            Rule::Outer { prefix, inner, suffix } => {
                put(&mut out, prefix);
                out.push(StreamSymbol::NonTerminal(*inner));
                put(&mut out, suffix);
                out.push(StreamSymbol::RuleSep);
            }
            Rule::Inner { expansions, .. } => match encoding {
                Encoding::Fixed => {
                    put(&mut out, &expansions[0]);
                    out.push(StreamSymbol::ChoiceSep);
                    for e in &expansions[1..] {
                        put(&mut out, e);
                    }
                }
                Encoding::Variable => {
                    for (j, e) in expansions.iter().enumerate() {
                        if j > 0 {
                            out.push(StreamSymbol::ChoiceSep);
                        }
                        put(&mut out, e);
                    }
                    out.push(StreamSymbol::RuleSep);
                }
            },
        }
    }
    Ok(EncodedStream {
        alphabet: g.alphabet().clone(),
        encoding,
        symbols: out,
    })
}

/// Length of `encode(g, encoding)` without building it.
pub fn stream_length(g: &Grammar, encoding: Encoding) -> Result<usize> {
    Ok(g.size(encoding)?.total)
}

fn stream_err(offset: usize, reason: impl Into<String>) -> Error {
    Error::Stream {
        offset,
        reason: reason.into(),
    }
}

/// Rebuilds the grammar (in emission numbering) and its target sequence.
///
/// In variable-length streams an inner rule with a single expansion cannot
/// be told apart from a plain rule and is read back as one.
pub fn decode(stream: &EncodedStream) -> Result<(Grammar, Vec<u32>)> {
    let syms = &stream.symbols;
    let n = syms.len();
    let mut rules: Vec<Rule> = Vec::new();
    // Offset of the first symbol of each rule, for diagnostics.
    let mut starts: Vec<usize> = Vec::new();
    // Occurrences of each nonterminal in the rules read so far.
    let mut occ: FxHashMap<u32, usize> = FxHashMap::default();
    let mut pos = 0;
    while pos < n {
        let start = pos;
        let id = rules.len() as u32;
        let mut first: Vec<Symbol> = Vec::new();
        let mut ended = None;
        while pos < n {
            match syms[pos] {
                StreamSymbol::Terminal(t) => first.push(Symbol::Terminal(t)),
                StreamSymbol::NonTerminal(i) => first.push(Symbol::NonTerminal(i)),
                s => {
                    ended = Some(s);
                    pos += 1;
                    break;
                }
            }
            pos += 1;
        }
        let Some(sep) = ended else {
            return Err(stream_err(n, format!("stream ends inside rule N{id} (started at symbol {start})")));
        };
        let rule = if sep == StreamSymbol::RuleSep {
            Rule::Plain(first)
        } else {
            // An inner rule; its outer rule is the previous one.
            let outer = id
                .checked_sub(1)
                .ok_or_else(|| stream_err(start, "choice separator in the start rule"))?;
            let count = *occ.get(&outer).unwrap_or(&0);
            if count == 0 {
                return Err(stream_err(start, format!("inner rule N{id} follows N{outer}, which is never used")));
            }
            let mut expansions = vec![first];
            match stream.encoding {
                Encoding::Fixed => {
                    let k = expansions[0].len();
                    if k == 0 {
                        return Err(stream_err(start, "empty first expansion"));
                    }
                    let need = (count - 1) * k;
                    if pos + need > n {
                        return Err(stream_err(
                            n,
                            format!("stream ends inside inner rule N{id}: {} of {need} expansion symbols", n - pos),
                        ));
                    }
                    for j in 1..count {
                        let mut e = Vec::with_capacity(k);
                        for (off, &s) in syms[pos..pos + k].iter().enumerate() {
                            e.push(match s {
                                StreamSymbol::Terminal(t) => Symbol::Terminal(t),
                                StreamSymbol::NonTerminal(i) => Symbol::NonTerminal(i),
                                _ => return Err(stream_err(pos + off, format!("separator inside expansion {j} of N{id}"))),
                            });
                        }
                        pos += k;
                        expansions.push(e);
                    }
                    Rule::Inner {
                        expansions,
                        fixed_len: Some(k),
                    }
                }
                Encoding::Variable => {
                    let mut cur = Vec::new();
                    loop {
                        let Some(&s) = syms.get(pos) else {
                            return Err(stream_err(n, format!("stream ends inside inner rule N{id}")));
                        };
                        pos += 1;
                        match s {
                            StreamSymbol::Terminal(t) => cur.push(Symbol::Terminal(t)),
                            StreamSymbol::NonTerminal(i) => cur.push(Symbol::NonTerminal(i)),
                            StreamSymbol::ChoiceSep => expansions.push(std::mem::take(&mut cur)),
                            StreamSymbol::RuleSep => {
                                expansions.push(cur);
                                break;
                            }
                        }
                    }
                    if expansions.len() != count {
                        return Err(stream_err(
                            pos - 1,
                            format!("N{id} lists {} expansions for {count} occurrences of N{outer}", expansions.len()),
                        ));
                    }
                    let k = expansions[0].len();
                    let fixed_len = expansions.iter().all(|e| e.len() == k).then_some(k);
                    Rule::Inner { expansions, fixed_len }
                }
            }
        };
        if matches!(rule, Rule::Inner { .. }) {
            let outer = id - 1;
            let prev = std::mem::replace(&mut rules[outer as usize], Rule::Plain(Vec::new()));
            let Rule::Plain(body) = prev else {
                return Err(stream_err(starts[outer as usize], format!("N{outer} cannot be an outer rule")));
            };
            let slots: Vec<usize> = body
                .iter()
                .enumerate()
                .filter(|(_, &s)| s == Symbol::NonTerminal(id))
                .map(|(i, _)| i)
                .collect();
            let &[at] = slots.as_slice() else {
                return Err(stream_err(
                    starts[outer as usize],
                    format!("outer rule N{outer} must reference N{id} exactly once"),
                ));
            };
            rules[outer as usize] = Rule::Outer {
                prefix: body[..at].to_vec(),
                inner: id,
                suffix: body[at + 1..].to_vec(),
            };
        }
        for (_, _, s) in rule.symbols() {
            if let Symbol::NonTerminal(i) = s {
                *occ.entry(i).or_default() += 1;
            }
        }
        rules.push(rule);
        starts.push(start);
    }
    if rules.is_empty() {
        return Err(stream_err(0, "empty stream"));
    }
    for (id, r) in rules.iter().enumerate() {
        for (_, _, s) in r.symbols() {
            match s {
                Symbol::NonTerminal(i) if i as usize >= rules.len() => {
                    return Err(stream_err(starts[id], format!("unknown nonterminal N{i} in N{id}")));
                }
                Symbol::NonTerminal(i) if i as usize <= id => {
                    return Err(stream_err(starts[id], format!("N{id} references N{i}, which precedes it")));
                }
                Symbol::Terminal(t) if !stream.alphabet.contains(t) => {
                    return Err(stream_err(starts[id], format!("terminal {t} outside the alphabet")));
                }
                _ => {}
            }
        }
    }
    let g = Grammar::new(stream.alphabet.clone(), rules);
    let v = g.validate();
    if !v.is_empty() {
        return Err(Error::Invalid(v));
    }
    let target = g.expand_canonical()?;
    Ok((g, target))
}

const MAGIC: &[u8; 4] = b"NRGS";
const VERSION: u8 = 1;

fn io_err(e: std::io::Error) -> Error {
    stream_err(0, format!("truncated file: {e}"))
}

/// Binary `.nrg` file: magic, version, alphabet mode, encoding, token table
/// (token mode only), then the symbols as LEB128 codes where, for an
/// alphabet of size T, terminals are `0..T`, `#` is T, `|` is T+1 and `N<i>`
/// is T+2+i.
pub fn write_nrg(stream: &EncodedStream) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(match stream.alphabet.mode() {
        AlphabetMode::Byte => 0,
        AlphabetMode::Token => 1,
    });
    out.push(match stream.encoding {
        Encoding::Variable => 0,
        Encoding::Fixed => 1,
    });
    let put = |out: &mut Vec<u8>, v: u64| {
        leb128::write::unsigned(out, v).expect("writing to a Vec");
    };
    if let Alphabet::Tokens(t) = &stream.alphabet {
        put(&mut out, t.len() as u64);
        for tok in t {
            put(&mut out, tok.len() as u64);
            out.write_all(tok.as_bytes()).expect("writing to a Vec");
        }
    }
    let base = stream.alphabet.size() as u64;
    put(&mut out, stream.symbols.len() as u64);
    for s in &stream.symbols {
        put(
            &mut out,
            match *s {
                StreamSymbol::Terminal(t) => t as u64,
                StreamSymbol::RuleSep => base,
                StreamSymbol::ChoiceSep => base + 1,
                StreamSymbol::NonTerminal(i) => base + 2 + i as u64,
            },
        );
    }
    out
}

pub fn read_nrg(bytes: &[u8]) -> Result<EncodedStream> {
    let mut r = bytes;
    let mut head = [0u8; 7];
    r.read_exact(&mut head).map_err(io_err)?;
    if &head[..4] != MAGIC {
        return Err(stream_err(0, "not an .nrg file"));
    }
    if head[4] != VERSION {
        return Err(stream_err(0, format!("unsupported version {}", head[4])));
    }
    let encoding = match head[6] {
        0 => Encoding::Variable,
        1 => Encoding::Fixed,
        e => return Err(stream_err(0, format!("unknown encoding flag {e}"))),
    };
    let get = |r: &mut &[u8]| -> Result<u64> {
        leb128::read::unsigned(r).map_err(|e| stream_err(bytes.len() - r.len(), format!("bad varint: {e}")))
    };
    let alphabet = match head[5] {
        0 => Alphabet::Bytes,
        1 => {
            let count = get(&mut r)?;
            if count > r.len() as u64 {
                return Err(stream_err(0, "token table larger than the file"));
            }
            let mut table = Vec::with_capacity(count as usize);
            for _ in 0..count {
                let len = get(&mut r)? as usize;
                if len > r.len() {
                    return Err(stream_err(0, "token runs past the end of the file"));
                }
                let (tok, rest) = r.split_at(len);
                r = rest;
                table.push(String::from_utf8(tok.to_vec()).map_err(|_| stream_err(0, "token is not UTF-8"))?);
            }
            if table.windows(2).any(|w| w[0] >= w[1]) {
                return Err(stream_err(0, "token table is not sorted and unique"));
            }
            Alphabet::Tokens(table)
        }
        m => return Err(stream_err(0, format!("unknown alphabet mode {m}"))),
    };
    let base = alphabet.size() as u64;
    let count = get(&mut r)?;
    if count > r.len() as u64 {
        return Err(stream_err(0, format!("header announces {count} symbols, file has fewer bytes")));
    }
    let mut symbols = Vec::with_capacity(count as usize);
    for i in 0..count as usize {
        let c = get(&mut r).map_err(|_| stream_err(i, "truncated symbol"))?;
        symbols.push(match c {
            c if c < base => StreamSymbol::Terminal(c as u32),
            c if c == base => StreamSymbol::RuleSep,
            c if c == base + 1 => StreamSymbol::ChoiceSep,
            c if c - base - 2 <= u32::MAX as u64 => StreamSymbol::NonTerminal((c - base - 2) as u32),
            _ => return Err(stream_err(i, format!("symbol code {c} out of range"))),
        });
    }
    if !r.is_empty() {
        return Err(stream_err(count as usize, "trailing bytes after the last symbol"));
    }
    Ok(EncodedStream {
        alphabet,
        encoding,
        symbols,
    })
}

/// Whitespace-separated rendering: terminals, `#`, `|` and `N<i>`.
pub fn format_stream_text(stream: &EncodedStream) -> String {
    stream
        .symbols
        .iter()
        .map(|s| match *s {
            StreamSymbol::RuleSep => "#".to_string(),
            StreamSymbol::ChoiceSep => "|".to_string(),
            StreamSymbol::NonTerminal(i) => format!("N{i}"),
            StreamSymbol::Terminal(t) => match &stream.alphabet {
                Alphabet::Bytes => escape_byte(t as u8),
                Alphabet::Tokens(tab) => escape_token(&tab[t as usize]),
            },
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Parses [`format_stream_text`] output. In token mode the token table is
/// the sorted set of terminals that occur.
pub fn parse_stream_text(text: &str, mode: AlphabetMode, encoding: Encoding) -> Result<EncodedStream> {
    let raw: Vec<&str> = text.split_whitespace().collect();
    let mut lexed = Vec::with_capacity(raw.len());
    for (i, tok) in raw.iter().enumerate() {
        lexed.push(match lex(tok) {
            Lexeme::RuleSep => StreamSymbol::RuleSep,
            Lexeme::ChoiceSep => StreamSymbol::ChoiceSep,
            Lexeme::NonTerminal(n) => StreamSymbol::NonTerminal(n),
            Lexeme::Terminal(t) => match mode {
                AlphabetMode::Byte => StreamSymbol::Terminal(unescape_byte(&t).map_err(|e| stream_err(i, e))? as u32),
                // Placeholder; resolved against the table below.
                AlphabetMode::Token => StreamSymbol::Terminal(u32::MAX),
            },
        });
    }
    let alphabet = match mode {
        AlphabetMode::Byte => Alphabet::Bytes,
        AlphabetMode::Token => {
            let mut words: Vec<Option<String>> = Vec::with_capacity(raw.len());
            for (i, t) in raw.iter().enumerate() {
                words.push(match lex(t) {
                    Lexeme::Terminal(_) => Some(unescape_token(t).map_err(|e| stream_err(i, e))?),
                    _ => None,
                });
            }
            let mut table: Vec<String> = words.iter().flatten().cloned().collect();
            table.sort();
            table.dedup();
            for (s, w) in lexed.iter_mut().zip(&words) {
                if let Some(w) = w {
                    *s = StreamSymbol::Terminal(table.binary_search(w).unwrap() as u32);
                }
            }
            Alphabet::Tokens(table)
        }
    };
    Ok(EncodedStream {
        alphabet,
        encoding,
        symbols: lexed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::Sequence;

    #[test]
    fn straight_line_stream() {
        let g = Grammar::straight_line(&Sequence::from_bytes(b"abc"));
        for enc in [Encoding::Fixed, Encoding::Variable] {
            let s = encode(&g, enc).unwrap();
            assert_eq!(format_stream_text(&s), "a b c #");
            assert_eq!(s.len(), 4);
            assert_eq!(stream_length(&g, enc).unwrap(), 4);
        }
    }

    #[test]
    fn truncated_stream_reports_offset() {
        let s = parse_stream_text("a N1 b # c", AlphabetMode::Byte, Encoding::Fixed).unwrap();
        match decode(&s) {
            Err(Error::Stream { offset, .. }) => assert_eq!(offset, 5),
            other => panic!("{other:?}"),
        }
        let s = parse_stream_text("a N1 b N1 # x N2 y # p q |  r", AlphabetMode::Byte, Encoding::Fixed).unwrap();
        match decode(&s) {
            Err(Error::Stream { offset, reason }) => {
                assert_eq!(offset, 13);
                assert!(reason.contains("inner rule N2"), "{reason}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_nonterminal() {
        let s = parse_stream_text("a N7 b #", AlphabetMode::Byte, Encoding::Variable).unwrap();
        assert!(matches!(decode(&s), Err(Error::Stream { .. })));
    }

    #[test]
    fn nrg_round_trip() {
        let s = parse_stream_text(
            "Alice N1 x N1 # Alice N2 tired # was getting | will be",
            AlphabetMode::Token,
            Encoding::Fixed,
        )
        .unwrap();
        let bytes = write_nrg(&s);
        assert_eq!(read_nrg(&bytes).unwrap(), s);
        assert!(read_nrg(&bytes[..bytes.len() - 1]).is_err());
        let (_, target) = decode(&s).unwrap();
        assert_eq!(target.len(), 10);
    }
}
