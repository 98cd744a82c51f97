//! Per-round metrics and the experiment report.

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::privacy::GaussianParams;

/// Logical round time in seconds; orders wait half of it on average.
pub const ROUND_TIME_S: f64 = 30.0;

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct ComponentDurations {
    pub wait_s: f64,
    pub sort_s: f64,
    pub match_s: f64,
    pub settle_s: f64,
    pub shuffle_s: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: u64,
    pub orders_submitted: usize,
    pub book_size: usize,
    pub matched_pairs: usize,
    pub matched_pct: f64,
    pub fees: u64,
    pub settled_worth: u64,
    pub fees_pct_of_worth: f64,
    pub top_k_rates: Vec<u64>,
    pub expired_orders: usize,
    pub aborted: bool,
    pub durations: ComponentDurations,
    pub privacy_gain_broker_pct: Option<f64>,
    pub privacy_gain_trader_pct: Option<f64>,
    pub matches: Vec<(u64, u64)>,
}

impl RoundMetrics {
    pub fn empty(round: u64) -> Self {
        RoundMetrics {
            round,
            orders_submitted: 0,
            book_size: 0,
            matched_pairs: 0,
            matched_pct: 0.0,
            fees: 0,
            settled_worth: 0,
            fees_pct_of_worth: 0.0,
            top_k_rates: Vec::new(),
            expired_orders: 0,
            aborted: false,
            durations: ComponentDurations { wait_s: ROUND_TIME_S / 2.0, ..Default::default() },
            privacy_gain_broker_pct: None,
            privacy_gain_trader_pct: None,
            matches: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Aggregates {
    pub rounds: u64,
    pub total_orders: usize,
    pub total_matched_pairs: usize,
    pub avg_matched_pct: f64,
    pub total_fees: u64,
    pub total_settled_worth: u64,
    pub fees_pct_of_worth: f64,
    pub avg_privacy_gain_broker_pct: Option<f64>,
    pub avg_privacy_gain_trader_pct: Option<f64>,
}

/// Readings the report pins down so downstream analysis is unambiguous.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportMetadata {
    /// The rate model's `variance` field is a variance, not a std dev.
    pub variance_semantics: String,
    /// How the bucketization estimator turns its sample spread into a
    /// population variance.
    pub bucketization_variance_rule: String,
    pub true_rate_mu: f64,
    pub true_rate_sigma: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub metadata: ReportMetadata,
    pub rounds: Vec<RoundMetrics>,
    pub aggregates: Aggregates,
}

impl ExperimentReport {
    pub fn new(config: ExperimentConfig, rounds: Vec<RoundMetrics>) -> Self {
        let truth: GaussianParams = config.true_rate_params();
        let total_orders: usize = rounds.iter().map(|r| r.orders_submitted).sum();
        let total_matched_pairs: usize = rounds.iter().map(|r| r.matched_pairs).sum();
        let total_fees: u64 = rounds.iter().map(|r| r.fees).sum();
        let total_settled_worth: u64 = rounds.iter().map(|r| r.settled_worth).sum();
        let live: Vec<&RoundMetrics> = rounds.iter().filter(|r| r.book_size > 0).collect();
        let avg_matched_pct = if live.is_empty() {
            0.0
        } else {
            live.iter().map(|r| r.matched_pct).sum::<f64>() / live.len() as f64
        };
        let avg = |f: fn(&RoundMetrics) -> Option<f64>| {
            let vals: Vec<f64> = rounds.iter().filter_map(f).collect();
            if vals.is_empty() {
                None
            } else {
                Some(vals.iter().sum::<f64>() / vals.len() as f64)
            }
        };
        let aggregates = Aggregates {
            rounds: rounds.len() as u64,
            total_orders,
            total_matched_pairs,
            avg_matched_pct,
            total_fees,
            total_settled_worth,
            fees_pct_of_worth: if total_settled_worth == 0 {
                0.0
            } else {
                total_fees as f64 / total_settled_worth as f64 * 100.0
            },
            avg_privacy_gain_broker_pct: avg(|r| r.privacy_gain_broker_pct),
            avg_privacy_gain_trader_pct: avg(|r| r.privacy_gain_trader_pct),
        };
        let metadata = ReportMetadata {
            variance_semantics: "variance".into(),
            bucketization_variance_rule: crate::privacy::VARIANCE_RULE.into(),
            true_rate_mu: truth.mu,
            true_rate_sigma: truth.sigma,
        };
        ExperimentReport { config, metadata, rounds, aggregates }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "round,orders_submitted,book_size,matched_pairs,matched_pct,fees,\
             settled_worth,fees_pct_of_worth,expired_orders,aborted,wait_s,sort_s,\
             match_s,settle_s,shuffle_s,privacy_gain_broker_pct,privacy_gain_trader_pct\n",
        );
        for r in &self.rounds {
            out.push_str(&format!(
                "{},{},{},{},{:.4},{},{},{:.4},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{},{}\n",
                r.round,
                r.orders_submitted,
                r.book_size,
                r.matched_pairs,
                r.matched_pct,
                r.fees,
                r.settled_worth,
                r.fees_pct_of_worth,
                r.expired_orders,
                r.aborted,
                r.durations.wait_s,
                r.durations.sort_s,
                r.durations.match_s,
                r.durations.settle_s,
                r.durations.shuffle_s,
                r.privacy_gain_broker_pct.map(|v| format!("{v:.6}")).unwrap_or_default(),
                r.privacy_gain_trader_pct.map(|v| format!("{v:.6}")).unwrap_or_default(),
            ));
        }
        out
    }
}
