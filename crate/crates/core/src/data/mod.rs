//! Dataset ingestion, splits, batching and the synthetic stand-in corpus.

pub mod corpus;
pub mod manifest;
pub mod synthetic;

pub use corpus::{featurize_all, Batch, Corpus, SamplingConfig};
pub use manifest::{
    scan_dataset, speaker_token, split_assign, split_percentage, ClassMap, DatasetManifest, Entry, Split, SplitCounts,
    Task, COMMANDS, DIGITS, NOISE_DIR, SILENCE_CLASS, SILENCE_WORD, UNKNOWN_CLASS, UNKNOWN_WORD,
};
pub use synthetic::{synthetic_dataset, SyntheticDataset};
