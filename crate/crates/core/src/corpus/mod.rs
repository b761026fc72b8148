//! Text ingestion: clause splitting, tokenization, two-stage label
//! aggregation, corpus records and train/test views.

pub mod dataset;
pub mod labels;
pub mod synthetic;
pub mod text;

pub use dataset::{
    load_dataset, ClauseInput, CorpusRecord, CorpusStats, Dataset, LabelField, RawSample, Split, SplitConfig, Stage,
    View,
};
pub use labels::{aggregate_labels, Aggregate, Sentiment};
pub use text::{split_clauses, tokenize, ClauseSplitter, TokenMode, DEFAULT_DELIMITERS};
