//! Experiment orchestration: data preparation, the augmentation loop with
//! its update gate, DP-SGD sweeps and reporting.

mod config;
mod gate;
mod report;
mod runner;

pub use config::{GateConfig, Method, RunConfig, WindowConfig};
pub use gate::{
    evaluate_candidate, gate_metrics, read_gate_log, replay_gate_log, write_gate_log, AcceptanceState, Decision,
    GateMetrics, GateRecord, GATE_HEADER,
};
pub use report::{tradeoff_rows, write_tradeoff, TradeoffRow};
pub use runner::{
    attack_row, balanced_mixture, embed_windows, prepare, pretrain, run_attack, run_augmentation, run_dp_sweep,
    train_from_scratch, AugmentOutcome, Datasets, Prepared,
};
