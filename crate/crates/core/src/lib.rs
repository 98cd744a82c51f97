//! Privacy-preserving decentralized exchange, desk scale.
//!
//! Traders commit to order rates and secret share them to a fixed set of
//! brokers; the brokers sort, settle and shuffle under an auditable leakage
//! contract while a simulated ledger holds balances as Pedersen commitments
//! and runs the marketplace contract. Plaintext and bucketized baselines
//! share the same matching core, and a privacy toolkit quantifies what the
//! permitted leakage reveals about the order-rate distribution.
//!
//! ```
//! use rialto_core::sim::{run_experiment, ExperimentConfig, Protocol};
//!
//! let config = ExperimentConfig {
//!     protocol: Protocol::Rialto,
//!     orders_per_round: 16.0,
//!     rounds: 1,
//!     seed: 1,
//!     ..ExperimentConfig::default()
//! };
//! let out = run_experiment(&config).unwrap();
//! assert_eq!(out.report.rounds.len(), 1);
//! assert!(out.report.rounds[0].matched_pairs > 0);
//! // Each reconstruction the brokers performed is on the record.
//! assert!(out.leakage_jsonl.contains("sorted-permutation"));
//! ```

pub mod bucketization;
pub mod group;
pub mod mpc;
pub mod ledger;
pub mod matching;
pub mod pki;
pub mod privacy;
pub mod sharing;
pub mod sim;
pub mod waksman;
