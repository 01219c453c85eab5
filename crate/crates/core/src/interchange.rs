//! Line-oriented grammar text format.
//!
//! ```text
//! #mode token
//! N0 -> Alice was N1 N1
//! N1 -> Alice N2 very tired
//! N2 =>2 was getting | will be
//! ```
//!
//! `->` introduces a plain or outer rule, `=>` an inner rule (`=>k` when all
//! expansions have length k). Labels are renumbered densely in line order, the
//! first line being the start rule; a rule must not be referenced by a line
//! that follows its own. Lines starting with `#` are comments, except an
//! optional `#mode byte|token` (byte is the default). Symbols are spelled as
//! in the text stream format.

use rustc_hash::FxHashMap;

use crate::encoder::renumber;
use crate::error::{Error, Result};
use crate::escape::{escape_byte, escape_token, lex, unescape_byte, unescape_token, Lexeme};
use crate::grammar::{Alphabet, AlphabetMode, Grammar, Rule, Symbol};

fn perr(line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        line,
        reason: reason.into(),
    }
}

enum Raw {
    Term(String),
    Label(u32),
}

enum Body {
    Arrow(Vec<Raw>),
    Choice(Option<usize>, Vec<Vec<Raw>>),
}

pub fn parse_grammar(text: &str) -> Result<Grammar> {
    let mut mode = AlphabetMode::Byte;
    let mut lines: Vec<(usize, u32, Body)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let ln = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('#') {
            let mut words = rest.split_whitespace();
            if words.next() == Some("mode") {
                if !lines.is_empty() {
                    return Err(perr(ln, "#mode must precede the rules"));
                }
                mode = match words.next() {
                    Some("byte") => AlphabetMode::Byte,
                    Some("token") => AlphabetMode::Token,
                    other => return Err(perr(ln, format!("unknown mode {other:?}"))),
                };
            }
            continue;
        }
        let mut toks = trimmed.split_whitespace();
        let head = toks.next().unwrap();
        let Lexeme::NonTerminal(label) = lex(head) else {
            return Err(perr(ln, format!("expected a rule head N<id>, found `{head}`")));
        };
        let arrow = toks.next().ok_or_else(|| perr(ln, "missing `->` or `=>`"))?;
        let symbol = |t: &str| -> Result<Option<Raw>> {
            Ok(match lex(t) {
                Lexeme::NonTerminal(n) => Some(Raw::Label(n)),
                Lexeme::Terminal(s) => Some(Raw::Term(match mode {
                    AlphabetMode::Byte => (unescape_byte(&s).map_err(|e| perr(ln, e))? as char).to_string(),
                    AlphabetMode::Token => unescape_token(&s).map_err(|e| perr(ln, e))?,
                })),
                Lexeme::ChoiceSep | Lexeme::RuleSep => None,
            })
        };
        let body = if arrow == "->" {
            let mut out = Vec::new();
            for t in toks {
                out.push(symbol(t)?.ok_or_else(|| perr(ln, format!("unexpected `{t}` in a plain rule")))?);
            }
            Body::Arrow(out)
        } else if let Some(k) = arrow.strip_prefix("=>") {
            let fixed = if k.is_empty() {
                None
            } else {
                Some(k.parse::<usize>().map_err(|_| perr(ln, format!("bad fixed length `{k}`")))?)
            };
            let mut exps = vec![Vec::new()];
            for t in toks {
                match symbol(t)? {
                    Some(s) => exps.last_mut().unwrap().push(s),
                    None if t == "|" => exps.push(Vec::new()),
                    None => return Err(perr(ln, "`#` inside an inner rule")),
                }
            }
            Body::Choice(fixed, exps)
        } else {
            return Err(perr(ln, format!("expected `->` or `=>`, found `{arrow}`")));
        };
        lines.push((ln, label, body));
    }
    if lines.is_empty() {
        return Err(perr(0, "no rules"));
    }
    let mut id_of: FxHashMap<u32, u32> = FxHashMap::default();
    for (i, (ln, label, _)) in lines.iter().enumerate() {
        if id_of.insert(*label, i as u32).is_some() {
            return Err(perr(*ln, format!("N{label} defined twice")));
        }
    }
    let is_inner: Vec<bool> = lines.iter().map(|(_, _, b)| matches!(b, Body::Choice(..))).collect();

    // Byte mode stores terminals as one-char strings holding the byte value.
    let mut table: Vec<String> = Vec::new();
    if mode == AlphabetMode::Token {
        for (_, _, b) in &lines {
            let seqs: Vec<&Vec<Raw>> = match b {
                Body::Arrow(s) => vec![s],
                Body::Choice(_, e) => e.iter().collect(),
            };
            for s in seqs {
                for r in s {
                    if let Raw::Term(t) = r {
                        table.push(t.clone());
                    }
                }
            }
        }
        table.sort();
        table.dedup();
    }
    let convert = |ln: usize, own: u32, seq: &[Raw]| -> Result<Vec<Symbol>> {
        seq.iter()
            .map(|r| match r {
                Raw::Term(t) => Ok(Symbol::Terminal(match mode {
                    AlphabetMode::Byte => t.chars().next().unwrap() as u32,
                    AlphabetMode::Token => table.binary_search(t).unwrap() as u32,
                })),
                Raw::Label(l) => {
                    let id = *id_of.get(l).ok_or_else(|| perr(ln, format!("undefined nonterminal N{l}")))?;
                    if id <= own {
                        return Err(perr(
                            ln,
                            format!("N{l} is referenced after its definition; lines must be in topological order"),
                        ));
                    }
                    Ok(Symbol::NonTerminal(id))
                }
            })
            .collect()
    };
    let mut rules = Vec::with_capacity(lines.len());
    for (i, (ln, _, body)) in lines.iter().enumerate() {
        let own = i as u32;
        rules.push(match body {
            Body::Arrow(seq) => {
                let syms = convert(*ln, own, seq)?;
                let slots: Vec<usize> = syms
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| matches!(s, Symbol::NonTerminal(n) if is_inner[*n as usize]))
                    .map(|(j, _)| j)
                    .collect();
                match slots.as_slice() {
                    [at] => Rule::Outer {
                        prefix: syms[..*at].to_vec(),
                        inner: syms[*at].nonterminal().unwrap(),
                        suffix: syms[at + 1..].to_vec(),
                    },
                    _ => Rule::Plain(syms),
                }
            }
            Body::Choice(fixed, exps) => Rule::Inner {
                expansions: exps.iter().map(|e| convert(*ln, own, e)).collect::<Result<_>>()?,
                fixed_len: *fixed,
            },
        });
    }
    let alphabet = match mode {
        AlphabetMode::Byte => Alphabet::Bytes,
        AlphabetMode::Token => Alphabet::Tokens(table),
    };
    let g = Grammar::new(alphabet, rules);
    g.check()?;
    Ok(g)
}

fn spell(g: &Grammar, seq: &[Symbol]) -> Vec<String> {
    seq.iter()
        .map(|&s| match s {
            Symbol::NonTerminal(n) => format!("N{n}"),
            Symbol::Terminal(t) => match g.alphabet() {
                Alphabet::Bytes => escape_byte(t as u8),
                Alphabet::Tokens(tab) => escape_token(&tab[t as usize]),
            },
        })
        .collect()
}

/// Writes `g` in emission order, so that the output parses back to the same
/// grammar up to renumbering.
pub fn write_grammar(g: &Grammar) -> Result<String> {
    let r = renumber(g)?;
    let mut out = String::new();
    out.push_str(match r.alphabet().mode() {
        AlphabetMode::Byte => "#mode byte\n",
        AlphabetMode::Token => "#mode token\n",
    });
    for (id, rule) in r.rules().iter().enumerate() {
        let line = match rule {
            Rule::Plain(b) => format!("N{id} -> {}", spell(&r, b).join(" ")),
            Rule::Outer { prefix, inner, suffix } => {
                format!("N{id} -> {} N{inner} {}", spell(&r, prefix).join(" "), spell(&r, suffix).join(" "))
            }
            Rule::Inner { expansions, fixed_len } => {
                let exps: Vec<String> = expansions.iter().map(|e| spell(&r, e).join(" ")).collect();
                let arrow = fixed_len.map_or("=>".to_string(), |k| format!("=>{k}"));
                format!("N{id} {arrow} {}", exps.join(" | "))
            }
        };
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}
