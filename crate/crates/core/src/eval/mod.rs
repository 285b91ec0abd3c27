//! Recall@K evaluation, run comparison, alpha sweeps, rerank latency and a
//! synthetic benchmark with planted ground truth.

mod compare;
mod latency;
mod qrels;
mod recall;
mod sweep;
pub mod synth;

pub use compare::{compare_runs, CompareReport};
pub use latency::{measure_rerank_latency, LatencyStats};
pub use qrels::{QrelRecord, Qrels};
pub use recall::{first_hit_rank, format_table, recall_at_k, MetricsReport, ReportJson};
pub use sweep::{alpha_sweep, alpha_sweep_coarse, SweepRow};
pub use synth::{generate_synthetic, run_synthetic_pipeline, SynthData, SynthRun, SynthSpec};
