//! Experiment harness: trader clients, order generation, round
//! orchestration across protocol variants, metrics and reports.

mod config;
mod driver;
mod metrics;
mod orders;

pub use config::{
    ConfigError, ExperimentConfig, MatchingAlgo, Protocol, RateDistribution, RateModel,
    SettlementScheme,
};
pub use driver::{run_experiment, ExperimentOutput, SimError, Simulation};
pub use metrics::{
    Aggregates, ComponentDurations, ExperimentReport, ReportMetadata, RoundMetrics,
    ROUND_TIME_S,
};
pub use orders::{generate_orders, poisson, standard_normal, TraderIntent};
