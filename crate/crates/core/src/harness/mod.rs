//! Experiment orchestration: configs, splits, training loops and reports.

mod config;
mod output;
mod plot;
mod run;
mod split;

pub use config::ExperimentConfig;
pub use output::{load_report, write_all, write_summary, SummaryRow};
pub use plot::{band_plot_svg, Series};
pub use run::{
    evaluate, init_model, optimal_values, run_experiment, run_on_benchmark, run_seed, Aggregate, EpochRecord,
    Evaluation, RunHook, RunReport, SeedFailure, SeedReport,
};
pub use split::{split_dataset, Split, MIN_DATASET};

#[cfg(test)]
mod tests;
