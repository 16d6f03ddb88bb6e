//! Letter-level sound-symbolism toolkit.
//!
//! The crate covers the whole analysis chain:
//!
//! - [`corpus`]: phonotactically legal minimal-pair pseudoword generation
//!   for all 220 within-class letter contrasts, with lexicon screening.
//! - [`phonfeat`]: letter to phoneme mapping, articulatory feature vectors
//!   and signed feature deltas.
//! - [`ratings`]: pluggable semantic raters (synthetic planted-profile or
//!   LLM over HTTP) and the persisted rating store.
//! - [`effects`]: pair-level effect sizes, permutation inference, FDR,
//!   multi-rater consensus, letter profiles, PCA and reliability.
//! - [`artpred`]: ridge regression of consensus effects on feature deltas,
//!   nested cross-validation, ablation and hypothesis checks.
//! - [`behavior`]: forced-choice study analysis and counterbalancing.

pub mod artpred;
pub mod behavior;
pub mod config;
pub mod corpus;
pub mod effects;
pub mod error;
pub mod letters;
pub mod phonfeat;
pub mod ratings;
pub mod seed;
pub mod stats;
pub mod tsv;

pub use error::{Error, Result};
pub use letters::{Letter, LetterClass, LetterPair, PairClass};
