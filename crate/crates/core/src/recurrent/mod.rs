//! LSTM cell, bi-LSTM and position pooling, forward and backward.

pub mod attention;
pub mod bilstm;
pub mod lstm;

pub use attention::{
    attention_conj, attention_lex, attention_lex_pos, attention_plain, sum_pool, AttentionCache, AttentionOutput,
    ScoreLayer,
};
pub use bilstm::{bilstm, BiLstm, BiLstmCache, BiLstmOutput};
pub use lstm::{lstm_cell, CellConfig, CellRecurrence, CellState, LstmParams, StateGrad, StepCache, INIT_BOUND};
