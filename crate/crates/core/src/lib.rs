//! Dalvik n-opcode analysis: opcode extraction from smali, n-gram
//! featurization, information-gain selection, and classifier evaluation.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod fsutil;
pub mod hex;
pub mod ig;
pub mod ingest;
pub mod learn;
pub mod ngram;
pub mod opcode;
pub mod synth;

pub use error::{Error, Result};
