//! Low-resource dependency parsing toolkit: CoNLL-U handling, treebank
//! splitting and augmentation, neural taggers and parsers, evaluation, and
//! experiment orchestration.

pub mod augment;
pub mod conllu;
pub mod error;
pub mod evaluation;
pub mod experiments;
pub mod neural;
pub mod parser;
pub mod synthetic;
pub mod tagger;
pub mod treebank_ops;

pub use conllu::{Sentence, Token, Treebank};
pub use error::{Error, Result};
