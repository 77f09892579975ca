//! Character-level truecasing: restore upper/lower case in lowercased text.
//!
//! The model is a character CNN feeding a two-layer bidirectional LSTM whose
//! per-character scores are decoded jointly by a linear-chain CRF. Training
//! data is self-derived from any cased plain-text corpus (one example per
//! line): lowercase the line, remember which positions were uppercase.
//!
//! The crate is self-contained: a small f64 tensor core with hand-written
//! backward passes, exact CRF inference with a brute-force oracle, Adam,
//! deterministic seeded training, binary checkpoints, evaluation, and a
//! most-frequent-casing word baseline for comparison.

pub mod checkpoint;
pub mod corpus;
pub mod crf;
pub mod error;
pub mod eval;
pub mod layers;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod train;

pub use checkpoint::Checkpoint;
pub use corpus::{derive_labels, encode, make_batches, Label, LabeledSequence, Vocabulary};
pub use error::{Error, Result};
pub use eval::{score, truecase, EvalReport, UnigramTable};
pub use model::{Head, ModelConfig, ModelParams};
pub use train::{train, train_sized, AdamState, ModelSizes, TrainConfig, TrainOutcome};
