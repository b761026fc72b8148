//! The two-level model and its staged training procedure.

pub mod config;
pub mod level1;
pub mod level2;
pub mod pipeline;
pub mod train;

pub use config::{Pooling, TrainConfig};
pub use level1::{ClauseFeature, EncodedClause, Level1Model, Vocab, CLASSES, UNK};
pub use level2::{DistilledClause, DistilledSentence, Level2Model, SentenceInput};
pub use pipeline::{
    build_vocab, distill_clauses, distilled_from_jsonl, distilled_to_jsonl, evaluate_level1, evaluate_level2,
    level1_checkpoint, level1_examples, level1_from_checkpoint, level2_checkpoint, level2_examples,
    level2_from_checkpoint, predict, train_level1, train_level2, Bundle, ClausePrediction, EvalReport, Prediction,
};
pub use train::{cross_entropy, evaluate, fit, Classifier, Control, EpochStats, FitConfig};
