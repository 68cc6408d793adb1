//! Experiment drivers: random instances, configuration, and the runners
//! behind each CLI subcommand.

mod config;
mod generate;
mod run;

pub use config::{Algorithm, Command, ExperimentConfig, Overrides, Resolved, SolverConfig, Strategy};
pub use generate::gen_random_graph;
pub use run::{
    design_oracle, design_problem, exit_code, game_instance, join_play, run, run_design_comparison, run_game,
    run_gen, run_prevention_comparison, s_bits, write_trace_csv, AlgorithmParams, AlgorithmSummary, DesignReport,
    DesignSeedSummary, GameRecord, PreventionSeedRecord, Tally, COMPARE_TOL,
};
