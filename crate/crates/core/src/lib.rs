//! Wildcard-CTC keyword spotting and inter-layer biasing over frame-level
//! posteriorgrams.
//!
//! The crate covers the full decode-time pipeline: CTC loss and alignment
//! ([`ctc`]), wildcard keyword spotting ([`wctc`]), detection-driven
//! biasing of intermediate predictions ([`bias`]), a deterministic toy
//! encoder stack that the bias hooks ride on ([`encoder`]), prefix beam
//! search with n-gram shallow fusion and keyword boosting ([`decode`],
//! [`lm`]), CER/F1 scoring ([`metrics`]), and a generator for end-to-end
//! recovery fixtures ([`fixture`]).
//!
//! Everything is pure and deterministic: all types are immutable after
//! construction, dynamic programs run in natural-log domain with fixed
//! reduction order, and probabilities appear only at file boundaries.

pub mod bias;
pub mod ctc;
pub mod decode;
pub mod encoder;
pub mod error;
pub mod fixture;
pub mod keyword;
pub mod lm;
pub mod math;
pub mod metrics;
pub mod posteriorgram;
pub mod types;
pub mod vocab;
pub mod wctc;

pub use error::{Error, Result};
pub use keyword::{Keyword, KeywordClass};
pub use posteriorgram::Posteriorgram;
pub use types::{AlignmentPath, TokenSequence};
pub use vocab::{TokenId, Vocabulary, BLANK_ID, BLANK_TOKEN};
