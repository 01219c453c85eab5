use thiserror::Error;

use crate::grammar::Violation;

/// Errors produced by grammar construction, rewriting and (de)serialization.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("invalid grammar: {}", format_violations(.0))]
    Invalid(Vec<Violation>),

    #[error("unknown nonterminal N{0}")]
    UnknownNonTerminal(u32),

    #[error("nonterminal N{0} is not reachable from the start symbol")]
    Unreachable(u32),

    #[error("fixed-length encoding requested but inner rule N{0} has no fixed length")]
    NotFixedLength(u32),

    #[error("choice resolver has no expansion for occurrence {occurrence} of inner N{inner}")]
    ResolverExhausted { inner: u32, occurrence: usize },

    #[error("choice resolver left {remaining} unused expansion(s) for inner N{inner}")]
    ResolverOverSupplied { inner: u32, remaining: usize },

    #[error("stale candidate: {0}")]
    Stale(String),

    #[error("grammar is not straight-line: rule N{0} is branching")]
    NotStraightLine(u32),

    #[error("malformed stream at symbol {offset}: {reason}")]
    Stream { offset: usize, reason: String },

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("bracket error: {0}")]
    Bracket(String),

    #[error("empty input sequence")]
    EmptyInput,
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
