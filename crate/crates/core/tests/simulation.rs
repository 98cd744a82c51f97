//! End-to-end simulation flows across protocol variants.

use rialto_core::ledger::MARKETPLACE_ACCOUNT;
use rialto_core::mpc::{LeakageTag, Tamper};
use rialto_core::sim::{
    run_experiment, ExperimentConfig, MatchingAlgo, Protocol, RateDistribution,
    SettlementScheme, Simulation,
};

/// Every unit on the ledger entered as a trader deposit; conservation means
/// the tracked total always equals deposits.
fn deposits(sim: &Simulation) -> u64 {
    sim.trader_count() as u64 * sim.config.initial_balance
}

fn small_config(protocol: Protocol) -> ExperimentConfig {
    ExperimentConfig {
        protocol,
        orders_per_round: 24.0,
        rounds: 3,
        seed: 42,
        ..ExperimentConfig::default()
    }
}

#[test]
fn rialto_round_settles_and_conserves() {
    let mut sim = Simulation::new(small_config(Protocol::Rialto)).unwrap();
    sim.run_round().unwrap();
    let m = sim.metrics.last().unwrap();
    assert!(m.matched_pairs > 0, "expected matches in a crossing book");
    assert_eq!(sim.ledger.tracked_total().unwrap(), deposits(&sim));
    assert!(sim.ledger.tracked_openings_consistent());
    assert!(sim.ledger.verify_chain());

    let tags: Vec<LeakageTag> =
        sim.engine().unwrap().leakage().for_round(1).iter().map(|e| e.tag).collect();
    assert_eq!(
        tags,
        vec![
            LeakageTag::SortedPermutation,
            LeakageTag::AggregateFees,
            LeakageTag::TopkRates,
            LeakageTag::ShuffledCommitments,
        ]
    );
}

#[test]
fn rialto_multi_round_conserves_and_carries_orders() {
    let mut sim = Simulation::new(small_config(Protocol::Rialto)).unwrap();
    for _ in 0..3 {
        sim.run_round().unwrap();
        assert_eq!(sim.ledger.tracked_total().unwrap(), deposits(&sim));
        assert!(sim.ledger.tracked_openings_consistent());
    }
    assert!(sim.ledger.verify_chain());
}

#[test]
fn zero_intents_round_is_empty() {
    let mut config = small_config(Protocol::Rialto);
    config.orders_per_round = 1e-9;
    let mut sim = Simulation::new(config).unwrap();
    sim.run_round().unwrap();
    let m = sim.metrics.last().unwrap();
    assert_eq!(m.orders_submitted, 0);
    assert_eq!(m.matched_pairs, 0);
    assert!(sim.engine().unwrap().leakage().entries().is_empty());
}

#[test]
fn reports_are_deterministic_given_seed() {
    let config = small_config(Protocol::Rialto);
    let a = run_experiment(&config).unwrap();
    let b = run_experiment(&config).unwrap();
    assert_eq!(a.leakage_jsonl, b.leakage_jsonl);
    assert_eq!(a.ledger_jsonl, b.ledger_jsonl);
    for (ra, rb) in a.report.rounds.iter().zip(&b.report.rounds) {
        assert_eq!(ra.matches, rb.matches);
        assert_eq!(ra.fees, rb.fees);
        assert_eq!(ra.top_k_rates, rb.top_k_rates);
        assert_eq!(ra.privacy_gain_broker_pct, rb.privacy_gain_broker_pct);
        assert_eq!(ra.privacy_gain_trader_pct, rb.privacy_gain_trader_pct);
    }
}

#[test]
fn cross_protocol_match_sets_agree() {
    let zero = run_experiment(&small_config(Protocol::ZeroPrivacy)).unwrap();
    let semi = run_experiment(&small_config(Protocol::SemiPrivate)).unwrap();
    let rialto = run_experiment(&small_config(Protocol::Rialto)).unwrap();
    let offchain = run_experiment(&small_config(Protocol::OffchainMatching)).unwrap();
    let centralized = run_experiment(&small_config(Protocol::Centralized)).unwrap();
    for i in 0..zero.report.rounds.len() {
        let expect = &zero.report.rounds[i].matches;
        assert_eq!(&semi.report.rounds[i].matches, expect, "semi-private round {i}");
        assert_eq!(&rialto.report.rounds[i].matches, expect, "rialto round {i}");
        assert_eq!(&offchain.report.rounds[i].matches, expect, "offchain round {i}");
        assert_eq!(&centralized.report.rounds[i].matches, expect, "centralized round {i}");
        assert_eq!(zero.report.rounds[i].fees, rialto.report.rounds[i].fees);
    }

    // Bucketization coarsens feasibility, so it can only match fewer.
    let bucket = run_experiment(&small_config(Protocol::Bucketization)).unwrap();
    for i in 0..zero.report.rounds.len() {
        assert!(
            bucket.report.rounds[i].matched_pairs <= zero.report.rounds[i].matched_pairs,
            "round {i}"
        );
    }
}

#[test]
fn semi_private_conserves_with_committed_balances() {
    let mut sim = Simulation::new(small_config(Protocol::SemiPrivate)).unwrap();
    for _ in 0..2 {
        sim.run_round().unwrap();
    }
    assert_eq!(sim.ledger.tracked_total().unwrap(), deposits(&sim));
    assert!(sim.ledger.tracked_openings_consistent());
}

#[test]
fn bucketization_difference_scheme_conserves() {
    let mut sim = Simulation::new(small_config(Protocol::Bucketization)).unwrap();
    for _ in 0..3 {
        sim.run_round().unwrap();
        assert_eq!(sim.ledger.tracked_total().unwrap(), deposits(&sim));
        assert!(sim.ledger.tracked_openings_consistent());
    }
    let matched: usize = sim.metrics.iter().map(|m| m.matched_pairs).sum();
    assert!(matched > 0);
}

#[test]
fn bucketization_mean_scheme_conserves() {
    let mut config = small_config(Protocol::Bucketization);
    config.settlement_scheme = SettlementScheme::Mean;
    let mut sim = Simulation::new(config).unwrap();
    for _ in 0..3 {
        sim.run_round().unwrap();
        assert_eq!(sim.ledger.tracked_total().unwrap(), deposits(&sim));
        assert!(sim.ledger.tracked_openings_consistent());
    }
    assert!(sim.metrics.iter().any(|m| m.matched_pairs > 0));
}

#[test]
fn bucketization_deviation_unwinds_pair_and_penalizes() {
    let mut config = small_config(Protocol::Bucketization);
    config.seed = 5;
    let mut sim = Simulation::new(config.clone()).unwrap();
    sim.run_round().unwrap();
    let honest_pairs = sim.metrics[0].matched_pairs;
    assert!(honest_pairs > 0);
    let victim_sell = sim.metrics[0].matches[0].1;

    // Re-run the same round with the seller of the first pair lying.
    let mut sim = Simulation::new(config).unwrap();
    sim.deviate_on_sell_order = Some(victim_sell);
    sim.run_round().unwrap();
    assert_eq!(sim.metrics[0].matched_pairs, honest_pairs - 1);
    assert_eq!(sim.ledger.tracked_total().unwrap(), deposits(&sim));
    let events = sim.ledger.dump_events_jsonl();
    assert!(events.contains("deviation_penalized"));
}

#[test]
fn bucketization_disclosed_buckets_contain_true_rates() {
    // Tracked openings confirm every accepted disclosure: the hidden rate
    // lies inside the claimed bucket, across the width sweep.
    for width in [2u64, 4, 8, 16] {
        let mut config = small_config(Protocol::Bucketization);
        config.bucket_width = width;
        config.seed = 90 + width;
        let mut sim = Simulation::new(config).unwrap();
        sim.run_round().unwrap();
        let mut checked = 0;
        for line in sim.ledger.dump_events_jsonl().lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            if v["event"] == "bucket_disclosed" {
                let order = v["order"].as_u64().unwrap();
                let bucket = v["bucket"].as_i64().unwrap();
                let rate = sim.ledger.order_opening(order).unwrap().value as i64;
                let grid_line = sim
                    .ledger
                    .dump_events_jsonl()
                    .lines()
                    .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
                    .find(|e| e["event"] == "bucket_grid_chosen")
                    .unwrap();
                let offset = grid_line["offset"].as_i64().unwrap();
                let floor = offset + bucket * width as i64;
                assert!(
                    rate >= floor && rate < floor + width as i64,
                    "rate {rate} outside bucket [{floor}, {})",
                    floor + width as i64
                );
                checked += 1;
            }
        }
        assert!(checked > 0, "no disclosures at width {width}");
    }
}

#[test]
fn bucketization_phase2_dropout_refunds() {
    let mut config = small_config(Protocol::Bucketization);
    config.phase2_dropout = 1.0;
    let mut sim = Simulation::new(config).unwrap();
    sim.run_round().unwrap();
    let m = sim.metrics.last().unwrap();
    assert_eq!(m.matched_pairs, 0);
    assert_eq!(m.book_size, 0);
    assert_eq!(sim.ledger.tracked_total().unwrap(), deposits(&sim));
    // All escrows refunded; no orders survive to the next round.
    assert_eq!(sim.ledger.live_orders().count(), 0);
}

#[test]
fn rialto_plus_excludes_tampering_broker_and_completes() {
    let mut config = small_config(Protocol::RialtoPlus);
    config.orders_per_round = 12.0;
    config.rounds = 1;
    let mut sim = Simulation::new(config.clone()).unwrap();
    sim.run_round().unwrap();
    let honest_matches = sim.metrics[0].matches.clone();
    assert!(!honest_matches.is_empty());

    let mut sim = Simulation::new(config).unwrap();
    sim.engine_mut().unwrap().broker_mut(1).tamper =
        Some(Tamper::RateShare { order: 1, delta: 3 });
    sim.run_round().unwrap();
    let m = &sim.metrics[0];
    assert!(!m.aborted);
    assert_eq!(m.matches, honest_matches, "threshold mode tolerates one bad broker");
    assert_eq!(sim.engine().unwrap().validated(), &[true, false, true]);
    assert_eq!(sim.ledger.tracked_total().unwrap(), deposits(&sim));
}

#[test]
fn rialto_plus_aborts_below_quorum_and_carries_orders() {
    let mut config = small_config(Protocol::RialtoPlus);
    config.orders_per_round = 8.0;
    config.rounds = 1;
    let mut sim = Simulation::new(config).unwrap();
    sim.engine_mut().unwrap().broker_mut(0).tamper =
        Some(Tamper::RateShare { order: 1, delta: 1 });
    sim.engine_mut().unwrap().broker_mut(1).tamper =
        Some(Tamper::BlindingShare { order: 2, delta: 1 });
    sim.run_round().unwrap();
    let m = &sim.metrics[0];
    assert!(m.aborted);
    assert_eq!(m.matched_pairs, 0);
    // Orders remain on the book for the next round, value conserved.
    assert!(sim.ledger.live_orders().count() > 0);
    assert_eq!(sim.ledger.tracked_total().unwrap(), deposits(&sim));
}

#[test]
fn price_time_matches_fewer_and_earns_more() {
    let mut maximal = small_config(Protocol::ZeroPrivacy);
    maximal.orders_per_round = 128.0;
    maximal.rounds = 4;
    let mut price_time = maximal.clone();
    price_time.matching = MatchingAlgo::PriceTime;
    let a = run_experiment(&maximal).unwrap();
    let b = run_experiment(&price_time).unwrap();
    assert!(
        a.report.aggregates.total_matched_pairs > b.report.aggregates.total_matched_pairs,
        "maximal matches more"
    );
    assert!(
        b.report.aggregates.total_fees > a.report.aggregates.total_fees,
        "price-time extracts larger rate differences"
    );
}

#[test]
fn marketplace_collects_fees() {
    let mut sim = Simulation::new(small_config(Protocol::Rialto)).unwrap();
    sim.run_round().unwrap();
    let fees = sim.metrics[0].fees;
    assert_eq!(sim.ledger.tracked_opening(MARKETPLACE_ACCOUNT).unwrap().value, fees);
}

#[test]
fn normal_distribution_runs() {
    let mut config = small_config(Protocol::Rialto);
    config.rate_model.distribution = RateDistribution::Normal;
    config.rate_model.variance = 225.0;
    config.rounds = 1;
    let out = run_experiment(&config).unwrap();
    assert_eq!(out.report.rounds.len(), 1);
}

#[test]
fn csv_has_line_per_round_plus_header() {
    let out = run_experiment(&small_config(Protocol::ZeroPrivacy)).unwrap();
    let csv = out.report.to_csv();
    assert_eq!(csv.lines().count(), 1 + out.report.rounds.len());
    assert!(csv.starts_with("round,"));
}
