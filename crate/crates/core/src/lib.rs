//! Mutation-aware tokenization of protein sequences.
//!
//! Training follows byte-pair encoding over residues, extended so that
//! substitution variants of frequent units enter the vocabulary as
//! mutational children of the unit they derive from. The resulting
//! genealogy is used by the variant and functional-annotation analyses.

pub mod alignment;
pub mod corpus;
pub mod cutoff;
pub mod error;
pub mod matrices;
pub mod metrics;
pub mod segmenter;
pub mod topic_model;
pub mod trainer;
pub mod variant_eval;
pub mod vocabulary;

pub use corpus::{filter_corpus, load_fasta, Corpus, Record};
pub use cutoff::Cutoff;
pub use error::{Error, Result};
pub use matrices::SubstitutionMatrix;
pub use segmenter::{decode, encode, Encoder, Span};
pub use trainer::{train, Trainer, TrainerConfig};
pub use vocabulary::{UnitId, UnitRecord, Vocabulary};
