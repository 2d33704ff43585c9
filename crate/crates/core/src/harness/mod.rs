//! Experiment orchestration: instrumented training runs, frozen evaluation
//! during and after training, grid search, checkpoints and reports.

mod checkpoint;
mod config;
mod grid;
mod report;
mod run;
mod svg;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, TrainedAgent, CHECKPOINT_VERSION};
pub use config::{
    parse_backend, AgentKind, EvalSchedule, RunConfig, EVAL_EPISODES, EVAL_INTERVAL, FINAL_EVAL_EPISODES, OUTPUT_DIR_VAR,
    RUNNING_WINDOW,
};
pub use grid::{emit_grid, grid_search, nominate, CandidateResult, GridReport, GridSpec, SelectionRule, SweepResult};
pub use report::{compare_reports, emit_ranking, emit_report, eval_csv, final_csv, stats_block, training_csv, Comparison};
pub use run::{
    checkpoint_path, config_path, evaluate, evaluate_during_training, evaluate_final, mean_std, random_baseline,
    resume_experiment, resume_training, run_experiment, run_training, running_average, CheckpointEval, EvalReport,
    FinalEval, HISTOGRAM_BINS,
};
