//! Data selection for language-model training corpora.
//!
//! The crate shrinks a large, head-heavy sentence corpus into a small
//! training corpus in three stages:
//!
//! 1. [`downsample`]: flatten the sentence-frequency distribution (Soft Log,
//!    Simple Power, and the pure-log / dedup baselines), parameterised
//!    against a power-law fit from [`stats`].
//! 2. [`rarefilter`]: keep sentences containing a word that is rare in the
//!    acoustic transcripts.
//! 3. [`contrastive`]: keep the sentences whose target-minus-background
//!    log perplexity under two [`ngram`] models is lowest.
//!
//! [`mixer`] interleaves the resulting sources into training minibatches and
//! [`pipeline`] wires everything together from a single JSON config, and
//! [`synth`] builds the synthetic two-domain corpora used to test it.

pub mod contrastive;
pub mod corpus;
pub mod downsample;
pub mod error;
pub mod hash;
pub mod mixer;
pub mod ngram;
pub mod pipeline;
pub mod rarefilter;
pub mod stats;
pub mod synth;

pub use corpus::{Corpus, SentenceRecord};
pub use error::{Error, Result};
