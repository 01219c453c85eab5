//! Inference of small non-recursive context-free grammars from a single
//! sequence.
//!
//! - [`inference`]: straight-line greedy, greedy with fixed-gap branching
//!   motifs, and post-processing of existing straight-line grammars.
//! - [`encoder`]: symbol streams whose length is the grammar size, and their
//!   decoders.
//! - [`bracket`]: bracket extraction and scoring against gold trees.

pub mod bracket;
pub mod encoder;
pub mod error;
mod escape;
pub mod grammar;
pub mod inference;
pub mod interchange;
pub mod motif;
pub mod repeat;
mod suffix;
pub mod synth;
mod working;

pub use error::{Error, Result};
pub use grammar::{
    Alphabet, AlphabetMode, Canonical, ChoiceResolver, DerivationVisitor, Encoding, Grammar, InOrder, NodeKind, Rule, Sequence, Site,
    SizeReport, Symbol, Violation,
};
