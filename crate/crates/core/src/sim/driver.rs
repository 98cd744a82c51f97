//! Round orchestration across protocol variants.
//!
//! One `Simulation` owns the ledger, the trader pool and (for the broker
//! protocols) the MPC engine, and drives rounds to completion:
//! submission -> (validation) -> sorting -> matching -> fairness swap ->
//! settlement -> top-K reveal -> expiry -> shuffle. The plaintext baselines
//! run the same matching core over the same sorted book; bucketization
//! replaces sorting with the two-phase bucket disclosure and settles each
//! pair through the signed counterparty exchange.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::bucketization::{
    check_opening, choose_buckets, mean_commitments, open_exchange, prove_bucket_membership,
    prove_fee, seal_exchange, settle_mean_values, verify_bucket_membership, verify_deviation,
    verify_fee, BucketError, ExchangeView,
};
use crate::group::{prove_range, Commitment, GroupParams, Scalar, DEFAULT_RANGE_BITS};
use crate::ledger::{
    AccountId, Event, Ledger, LedgerError, OrderSubmission, TrackedOpening, Visibility,
};
use crate::matching::{
    bucket_match, fair_swap, match_orders, price_time_match, BookEntry, MatchSet, OrderId, Side,
    SortedBook,
};
use crate::mpc::{
    InProcessTransport, MpcEngine, MpcError, OrderCommitments, SecurityMode, ShareBundle,
    ShuffleInput,
};
use crate::pki::Keypair;
use crate::privacy::{
    bucketization_estimate, estimate_params, privacy_gain, LeakageView, PrivacyError,
};
use crate::sharing::{split_additive, split_threshold, Scheme, ShareSet};

use super::config::{
    ConfigError, ExperimentConfig, MatchingAlgo, Protocol, SettlementScheme,
};
use super::metrics::{ExperimentReport, RoundMetrics, ROUND_TIME_S};
use super::orders::{generate_orders, TraderIntent};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Mpc(#[from] MpcError),
    #[error(transparent)]
    Bucket(#[from] BucketError),
    #[error(transparent)]
    Privacy(#[from] PrivacyError),
    #[error("protocol invariant broken: {0}")]
    Protocol(String),
}

struct Trader {
    account: AccountId,
    balance: u64,
    blinding: Scalar,
    keypair: Keypair,
    live_order: Option<OrderId>,
    rho: Scalar,
}

struct OrderMeta {
    trader: usize,
    side: Side,
    rate: u64,
    rate_blinding: Scalar,
}

/// Copied-out view of one side of a bucketized pair, so settlement can
/// mutate the ledger and traders freely.
#[derive(Clone, Copy)]
struct BucketPairSide {
    trader: usize,
    rate: u64,
    rate_blinding: Scalar,
}

impl BucketPairSide {
    fn of(meta: &OrderMeta) -> Self {
        BucketPairSide { trader: meta.trader, rate: meta.rate, rate_blinding: meta.rate_blinding }
    }
}

pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub ledger_jsonl: String,
    pub leakage_jsonl: String,
}

pub struct Simulation {
    pub config: ExperimentConfig,
    params: GroupParams,
    pub ledger: Ledger,
    engine: Option<MpcEngine>,
    traders: Vec<Trader>,
    order_meta: BTreeMap<OrderId, OrderMeta>,
    order_rng: ChaCha20Rng,
    crypto_rng: ChaCha20Rng,
    privacy_rng: ChaCha20Rng,
    round: u64,
    pub metrics: Vec<RoundMetrics>,
    /// Test hook: the seller of this order misreports its rate by one in
    /// the settlement exchange.
    pub deviate_on_sell_order: Option<OrderId>,
}

impl Simulation {
    pub fn new(config: ExperimentConfig) -> Result<Self, SimError> {
        config.validate()?;
        let params = GroupParams::ristretto();
        let scheme = match config.protocol {
            Protocol::RialtoPlus => {
                Scheme::Threshold { k: config.threshold_k(), n: config.brokers }
            }
            _ => Scheme::Additive,
        };
        let visibility = match config.protocol {
            Protocol::Centralized | Protocol::ZeroPrivacy | Protocol::OffchainMatching => {
                Visibility::PLAIN
            }
            Protocol::SemiPrivate => Visibility::SEMI_PRIVATE,
            Protocol::Bucketization | Protocol::Rialto | Protocol::RialtoPlus => {
                Visibility::PRIVATE
            }
        };
        let ledger = Ledger::new(
            params.clone(),
            scheme,
            visibility,
            DEFAULT_RANGE_BITS,
            config.tracking,
        );
        let engine = config.protocol.uses_brokers().then(|| {
            let mode = match config.protocol {
                Protocol::RialtoPlus => SecurityMode::MaliciousMinority,
                _ => SecurityMode::SemiHonest,
            };
            MpcEngine::new(
                params.clone(),
                scheme,
                mode,
                config.brokers,
                config.seed,
                Box::new(InProcessTransport::new()),
            )
        });

        let mut order_rng = ChaCha20Rng::seed_from_u64(config.seed);
        order_rng.set_stream(1);
        let mut crypto_rng = ChaCha20Rng::seed_from_u64(config.seed);
        crypto_rng.set_stream(2);
        let mut privacy_rng = ChaCha20Rng::seed_from_u64(config.seed);
        privacy_rng.set_stream(3);

        Ok(Simulation {
            config,
            params,
            ledger,
            engine,
            traders: Vec::new(),
            order_meta: BTreeMap::new(),
            order_rng,
            crypto_rng,
            privacy_rng,
            round: 0,
            metrics: Vec::new(),
            deviate_on_sell_order: None,
        })
    }

    pub fn engine(&self) -> Option<&MpcEngine> {
        self.engine.as_ref()
    }

    pub fn engine_mut(&mut self) -> Option<&mut MpcEngine> {
        self.engine.as_mut()
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn trader_count(&self) -> usize {
        self.traders.len()
    }

    fn acquire_trader(&mut self) -> usize {
        if let Some(i) = self.traders.iter().position(|t| t.live_order.is_none()) {
            return i;
        }
        let balance = self.config.initial_balance;
        let keypair = Keypair::generate(&self.params, &mut self.crypto_rng);
        let (account, blinding) = if self.ledger.visibility().public_balances {
            (self.ledger.register_plain_account(balance), self.params.scalar_zero())
        } else {
            let blinding = self.params.random_scalar(&mut self.crypto_rng);
            let commitment = self.params.commit_u64(balance, &blinding);
            let account = self.ledger.register_committed_account(
                commitment,
                Some(TrackedOpening { value: balance, blinding }),
            );
            (account, blinding)
        };
        self.traders.push(Trader {
            account,
            balance,
            blinding,
            keypair,
            live_order: None,
            rho: self.params.scalar_zero(),
        });
        self.traders.len() - 1
    }

    /// Run one full round; metrics for it are appended and returned.
    pub fn run_round(&mut self) -> Result<&RoundMetrics, SimError> {
        self.round += 1;
        self.ledger.begin_round(self.round);
        if let Some(e) = self.engine.as_mut() {
            e.begin_round(self.round);
        }

        let intents = generate_orders(&self.config, &mut self.order_rng);
        let submitted = self.submit_intents(&intents)?;
        self.ledger.seal_block();

        let mut metrics = RoundMetrics::empty(self.round);
        metrics.orders_submitted = submitted;
        metrics.durations.wait_s = ROUND_TIME_S / 2.0;

        let book: Vec<(OrderId, u64)> = self
            .ledger
            .live_orders()
            .map(|o| (o.id, o.submitted_round))
            .collect();
        if book.is_empty() {
            self.ledger.seal_block();
            self.metrics.push(metrics);
            return Ok(self.metrics.last().expect("just pushed"));
        }
        metrics.book_size = book.len();

        let outcome = match self.config.protocol {
            Protocol::Rialto | Protocol::RialtoPlus => self.run_broker_round(&book, &mut metrics),
            Protocol::Bucketization => self.run_bucketization_round(&mut metrics),
            _ => self.run_plaintext_round(&mut metrics),
        };
        match outcome {
            Ok(()) => {}
            Err(SimError::Mpc(MpcError::InsufficientValidBrokers { .. })) => {
                // Not enough honest brokers: the round aborts and every
                // order carries forward without aging.
                metrics.aborted = true;
            }
            Err(e) => return Err(e),
        }

        self.ledger.seal_block();
        self.metrics.push(metrics);
        Ok(self.metrics.last().expect("just pushed"))
    }

    pub fn run_all_rounds(&mut self) -> Result<(), SimError> {
        for _ in 0..self.config.rounds {
            self.run_round()?;
        }
        Ok(())
    }

    pub fn into_output(self) -> ExperimentOutput {
        let leakage_jsonl = self
            .engine
            .as_ref()
            .map(|e| e.leakage().to_jsonl())
            .unwrap_or_default();
        ExperimentOutput {
            report: ExperimentReport::new(self.config, self.metrics),
            ledger_jsonl: self.ledger.dump_events_jsonl(),
            leakage_jsonl,
        }
    }

    // ---- submission ----

    fn submit_intents(&mut self, intents: &[TraderIntent]) -> Result<usize, SimError> {
        let mut accepted = 0;
        for intent in intents {
            let trader_idx = self.acquire_trader();
            if intent.side == Side::Buy && self.traders[trader_idx].balance < intent.rate {
                // The range proof over balance - rate is unconstructible;
                // an honest trader refuses to submit.
                continue;
            }
            let order_id = match self.config.protocol {
                Protocol::Rialto | Protocol::RialtoPlus => {
                    self.submit_broker_order(trader_idx, intent)?
                }
                Protocol::Bucketization => self.submit_bucketized_order(trader_idx, intent)?,
                Protocol::SemiPrivate => self.submit_semi_private_order(trader_idx, intent)?,
                _ => self.submit_plain_order(trader_idx, intent)?,
            };
            let Some(order_id) = order_id else { continue };
            accepted += 1;
            let trader = &mut self.traders[trader_idx];
            trader.live_order = Some(order_id);
            if intent.side == Side::Buy {
                trader.balance -= intent.rate;
            }
        }
        Ok(accepted)
    }

    fn submit_plain_order(
        &mut self,
        trader_idx: usize,
        intent: &TraderIntent,
    ) -> Result<Option<OrderId>, SimError> {
        let account = self.traders[trader_idx].account;
        let sub = OrderSubmission {
            account,
            side: intent.side,
            share_commitments: vec![],
            rerand_commitments: vec![],
            public_rate: Some(intent.rate),
            balance_proof: None,
            tracked_rate: None,
        };
        match self.ledger.submit_order(sub) {
            Ok(id) => {
                self.order_meta.insert(
                    id,
                    OrderMeta {
                        trader: trader_idx,
                        side: intent.side,
                        rate: intent.rate,
                        rate_blinding: self.params.scalar_zero(),
                    },
                );
                Ok(Some(id))
            }
            Err(LedgerError::InsufficientBalance { .. }) => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    fn submit_semi_private_order(
        &mut self,
        trader_idx: usize,
        intent: &TraderIntent,
    ) -> Result<Option<OrderId>, SimError> {
        let trader = &self.traders[trader_idx];
        let balance_proof = if intent.side == Side::Buy {
            // Balance commitment is divided by g^rate; the blinding stays.
            Some(prove_range(
                &self.params,
                trader.balance - intent.rate,
                &trader.blinding,
                DEFAULT_RANGE_BITS,
                &mut self.crypto_rng,
            )
            .map_err(|e| SimError::Protocol(e.to_string()))?)
        } else {
            None
        };
        let sub = OrderSubmission {
            account: trader.account,
            side: intent.side,
            share_commitments: vec![],
            rerand_commitments: vec![],
            public_rate: Some(intent.rate),
            balance_proof,
            tracked_rate: None,
        };
        let id = self.ledger.submit_order(sub)?;
        self.order_meta.insert(
            id,
            OrderMeta {
                trader: trader_idx,
                side: intent.side,
                rate: intent.rate,
                rate_blinding: self.params.scalar_zero(),
            },
        );
        Ok(Some(id))
    }

    fn submit_bucketized_order(
        &mut self,
        trader_idx: usize,
        intent: &TraderIntent,
    ) -> Result<Option<OrderId>, SimError> {
        let rate_blinding = self.params.random_scalar(&mut self.crypto_rng);
        let rate_commitment = self.params.commit_u64(intent.rate, &rate_blinding);
        let trader = &self.traders[trader_idx];
        let balance_proof = if intent.side == Side::Buy {
            let residual = self.params.scalar_sub(&trader.blinding, &rate_blinding);
            Some(prove_range(
                &self.params,
                trader.balance - intent.rate,
                &residual,
                DEFAULT_RANGE_BITS,
                &mut self.crypto_rng,
            )
            .map_err(|e| SimError::Protocol(e.to_string()))?)
        } else {
            None
        };
        let sub = OrderSubmission {
            account: trader.account,
            side: intent.side,
            share_commitments: vec![rate_commitment],
            rerand_commitments: vec![],
            public_rate: None,
            balance_proof,
            tracked_rate: Some(TrackedOpening { value: intent.rate, blinding: rate_blinding }),
        };
        let id = self.ledger.submit_order(sub)?;
        if intent.side == Side::Buy {
            let t = &mut self.traders[trader_idx];
            t.blinding = self.params.scalar_sub(&t.blinding, &rate_blinding);
        }
        self.order_meta.insert(
            id,
            OrderMeta {
                trader: trader_idx,
                side: intent.side,
                rate: intent.rate,
                rate_blinding,
            },
        );
        Ok(Some(id))
    }

    fn submit_broker_order(
        &mut self,
        trader_idx: usize,
        intent: &TraderIntent,
    ) -> Result<Option<OrderId>, SimError> {
        let params = self.params.clone();
        let scheme = self.ledger.scheme();
        let parties = self.config.brokers;
        let rate_scalar = params.scalar_from_u64(intent.rate);
        let rate_blinding = params.random_scalar(&mut self.crypto_rng);
        let rho = params.random_scalar(&mut self.crypto_rng);

        let split = |secret: &Scalar, rng: &mut ChaCha20Rng| -> ShareSet {
            match scheme {
                Scheme::Additive => {
                    split_additive(&params, secret, parties, rng).expect("parties >= 2")
                }
                Scheme::Threshold { k, n } => {
                    split_threshold(&params, secret, k, n, rng).expect("2 <= k <= n")
                }
            }
        };
        let values = split(&rate_scalar, &mut self.crypto_rng);
        let blindings = split(&rate_blinding, &mut self.crypto_rng);
        let rhos = split(&rho, &mut self.crypto_rng);

        let share_commitments: Vec<Commitment> = values
            .shares
            .iter()
            .zip(&blindings.shares)
            .map(|((_, v), (_, r))| params.commit(v, r))
            .collect();
        let rerand_commitments: Vec<Commitment> =
            rhos.shares.iter().map(|(_, p)| params.commit_zero(p)).collect();

        let trader = &self.traders[trader_idx];
        let balance_proof = if intent.side == Side::Buy {
            let residual = params.scalar_sub(&trader.blinding, &rate_blinding);
            Some(prove_range(
                &params,
                trader.balance - intent.rate,
                &residual,
                DEFAULT_RANGE_BITS,
                &mut self.crypto_rng,
            )
            .map_err(|e| SimError::Protocol(e.to_string()))?)
        } else {
            None
        };

        let sub = OrderSubmission {
            account: trader.account,
            side: intent.side,
            share_commitments: share_commitments.clone(),
            rerand_commitments: rerand_commitments.clone(),
            public_rate: None,
            balance_proof,
            tracked_rate: Some(TrackedOpening { value: intent.rate, blinding: rate_blinding }),
        };
        let id = self.ledger.submit_order(sub)?;

        let account = trader.account;
        let engine = self.engine.as_mut().expect("broker protocol");
        for i in 0..parties {
            engine.deliver_bundle(
                i,
                ShareBundle {
                    order_id: id,
                    rate_share: values.shares[i].1,
                    rate_blinding_share: blindings.shares[i].1,
                    rerand_blinding_share: rhos.shares[i].1,
                    account,
                    share_commitment: share_commitments[i],
                    rerand_commitment: rerand_commitments[i],
                },
            );
        }

        let t = &mut self.traders[trader_idx];
        t.rho = rho;
        if intent.side == Side::Buy {
            t.blinding = params.scalar_sub(&t.blinding, &rate_blinding);
        }
        self.order_meta.insert(
            id,
            OrderMeta {
                trader: trader_idx,
                side: intent.side,
                rate: intent.rate,
                rate_blinding,
            },
        );
        Ok(Some(id))
    }

    // ---- plaintext pipeline ----

    fn run_plaintext_round(&mut self, metrics: &mut RoundMetrics) -> Result<(), SimError> {
        let t_match = Instant::now();
        let book = self.plaintext_book();
        let matches = match self.config.matching {
            MatchingAlgo::MaximalFair => {
                let m = match_orders(&book);
                fair_swap(&m, &book)
            }
            MatchingAlgo::PriceTime => {
                let mut buys = Vec::new();
                let mut sells = Vec::new();
                for e in &book.entries {
                    let meta = &self.order_meta[&e.id];
                    match e.side {
                        Side::Buy => buys.push((e.id, meta.rate, e.id)),
                        Side::Sell => sells.push((e.id, meta.rate, e.id)),
                    }
                }
                price_time_match(&buys, &sells)
            }
        };
        self.ledger.record_match(&matches);
        metrics.durations.match_s = t_match.elapsed().as_secs_f64();

        let t_settle = Instant::now();
        let fee: u64 = matches
            .pairs
            .iter()
            .map(|&(b, s)| self.order_meta[&b].rate - self.order_meta[&s].rate)
            .sum();
        let zero = self.params.scalar_zero();
        self.ledger.apply_settlement(&matches.pairs, fee, &zero)?;
        self.credit_settled_traders(&matches);
        metrics.durations.settle_s = t_settle.elapsed().as_secs_f64();

        let top_k = self.top_k_rates_plain(&book, &matches);
        self.finish_round_common(metrics, &matches, fee, top_k, None)?;
        Ok(())
    }

    fn plaintext_book(&self) -> SortedBook {
        let mut orders: Vec<(u64, u64, OrderId, Side)> = self
            .ledger
            .live_orders()
            .map(|o| {
                let meta = &self.order_meta[&o.id];
                (meta.rate, o.submitted_round, o.id, o.side)
            })
            .collect();
        orders.sort_unstable_by_key(|&(rate, round, id, _)| (rate, round, id));
        SortedBook {
            entries: orders
                .into_iter()
                .map(|(rate, _, id, side)| BookEntry { id, side, value: Some(rate as i64) })
                .collect(),
        }
    }

    fn top_k_rates_plain(&self, book: &SortedBook, matches: &MatchSet) -> Vec<u64> {
        let matched: std::collections::HashSet<OrderId> =
            matches.pairs.iter().map(|&(b, _)| b).collect();
        book.entries
            .iter()
            .rev()
            .filter(|e| matched.contains(&e.id))
            .take(self.config.top_k)
            .map(|e| self.order_meta[&e.id].rate)
            .collect()
    }

    /// Mirror ledger credits into the traders' own view of their balances.
    fn credit_settled_traders(&mut self, matches: &MatchSet) {
        for &(_, sell) in &matches.pairs {
            let meta = &self.order_meta[&sell];
            let t = &mut self.traders[meta.trader];
            t.balance += meta.rate;
            t.blinding = self.params.scalar_add(&t.blinding, &meta.rate_blinding);
        }
    }

    // ---- broker pipeline ----

    fn run_broker_round(
        &mut self,
        book: &[(OrderId, u64)],
        metrics: &mut RoundMetrics,
    ) -> Result<(), SimError> {
        let commitments: Vec<OrderCommitments> = book
            .iter()
            .map(|&(id, _)| {
                let o = self.ledger.order(id).expect("book order");
                OrderCommitments {
                    order: id,
                    share_commitments: o.share_commitments.clone(),
                    rerand_commitments: o.rerand_commitments.clone(),
                }
            })
            .collect();
        // Malicious-minority mode validates input shares before sorting.
        if self.config.protocol == Protocol::RialtoPlus {
            let engine = self.engine.as_mut().expect("broker protocol");
            engine.input_share_validation(&commitments)?;
        }

        let t_sort = Instant::now();
        let engine = self.engine.as_mut().expect("broker protocol");
        let sorted = engine.sorting_mpc(book)?;
        metrics.durations.sort_s = t_sort.elapsed().as_secs_f64();

        let t_match = Instant::now();
        let sorted_book = SortedBook {
            entries: sorted
                .iter()
                .map(|&id| BookEntry {
                    id,
                    side: self.ledger.order(id).expect("sorted order").side,
                    value: None,
                })
                .collect(),
        };
        let matches = fair_swap(&match_orders(&sorted_book), &sorted_book);
        self.ledger.record_match(&matches);
        metrics.durations.match_s = t_match.elapsed().as_secs_f64();

        let t_settle = Instant::now();
        let engine = self.engine.as_mut().expect("broker protocol");
        let (fee, fee_blinding) = engine.settlement_mpc(&matches.pairs)?;
        self.ledger.apply_settlement(&matches.pairs, fee, &fee_blinding)?;
        self.credit_settled_traders(&matches);
        metrics.durations.settle_s = t_settle.elapsed().as_secs_f64();

        let engine = self.engine.as_mut().expect("broker protocol");
        let top_k = engine.topk_reveal(&sorted, &matches, self.config.top_k)?;

        let trader_gain = self.broker_trader_gain(&sorted, &top_k);
        self.finish_round_common(metrics, &matches, fee, top_k, trader_gain)?;

        // Re-validate the blinding-factor shares before the shuffle; the
        // book snapshot still names every account about to move.
        if self.config.protocol == Protocol::RialtoPlus {
            let engine = self.engine.as_mut().expect("broker protocol");
            engine.input_share_validation(&commitments)?;
        }

        let t_shuffle = Instant::now();
        self.shuffle_and_replace(book)?;
        metrics.durations.shuffle_s = t_shuffle.elapsed().as_secs_f64();

        // Brokers drop bundles of orders no longer in the book.
        let live: std::collections::HashSet<OrderId> =
            self.ledger.live_orders().map(|o| o.id).collect();
        let engine = self.engine.as_mut().expect("broker protocol");
        for &(id, _) in book {
            if !live.contains(&id) {
                engine.retire_order(id);
            }
        }
        Ok(())
    }

    /// Average privacy gain over this round's traders, each estimating from
    /// the top-K plus its own (rank, rate).
    fn broker_trader_gain(&mut self, sorted: &[OrderId], top_k: &[u64]) -> Option<f64> {
        if top_k.len() < 2 {
            return None;
        }
        let truth = self.config.true_rate_params();
        let n = sorted.len();
        let mut gains = Vec::new();
        for (idx, id) in sorted.iter().enumerate() {
            let Some(meta) = self.order_meta.get(id) else { continue };
            let rank = (n - idx) as u64;
            let view = LeakageView {
                top_k: top_k.iter().map(|&r| r as f64).collect(),
                total_orders: n as u64,
                own: Some((rank, meta.rate as f64)),
                histogram: None,
                bucket_width: None,
            };
            if let Ok(est) = estimate_params(&view) {
                if let Ok(g) = privacy_gain(&est, &truth) {
                    gains.push(g);
                }
            }
        }
        if gains.is_empty() {
            None
        } else {
            Some(gains.iter().sum::<f64>() / gains.len() as f64)
        }
    }

    fn shuffle_and_replace(&mut self, book: &[(OrderId, u64)]) -> Result<(), SimError> {
        // Participants: every account referenced by the round's book, with
        // its current (post-settlement, post-expiry) commitment.
        let mut participants = Vec::new();
        let mut inputs = Vec::new();
        for &(order, _) in book {
            let meta = &self.order_meta[&order];
            let account = self.traders[meta.trader].account;
            let commitment = self
                .ledger
                .account_commitment(account)
                .ok_or_else(|| SimError::Protocol(format!("account {account} vanished")))?;
            participants.push(account);
            inputs.push(ShuffleInput { account, order, commitment });
        }

        let engine = self.engine.as_mut().expect("broker protocol");
        let shuffled = engine.shuffle_mpc(&inputs)?;

        // Each trader recomputes its own new commitment locally and claims
        // its slot in the shuffled list.
        let mut slots: Vec<Option<(Commitment, Option<TrackedOpening>, AccountId)>> =
            vec![None; shuffled.len()];
        let mut claimed = vec![false; shuffled.len()];
        for &(order, _) in book {
            let meta = &self.order_meta[&order];
            let trader = &self.traders[meta.trader];
            let new_blinding = self.params.scalar_add(&trader.blinding, &trader.rho);
            let expected = self.params.commit_u64(trader.balance, &new_blinding);
            let slot = shuffled
                .iter()
                .enumerate()
                .position(|(i, c)| !claimed[i] && *c == expected)
                .ok_or_else(|| {
                    SimError::Protocol("trader cannot locate its shuffled account".into())
                })?;
            claimed[slot] = true;
            slots[slot] = Some((
                shuffled[slot],
                Some(TrackedOpening { value: trader.balance, blinding: new_blinding }),
                trader.account,
            ));
        }
        let replacements: Vec<(Commitment, Option<TrackedOpening>, AccountId)> =
            slots.into_iter().map(|s| s.expect("every slot claimed")).collect();
        let new_ids = self.ledger.replace_accounts(&participants, &replacements)?;

        // Apply the trader-side state changes.
        for &(order, _) in book {
            let meta = &self.order_meta[&order];
            let trader = &mut self.traders[meta.trader];
            trader.blinding = self.params.scalar_add(&trader.blinding, &trader.rho);
        }
        for (slot, replacement) in replacements.iter().enumerate() {
            let account_before = replacement.2;
            let trader = self
                .traders
                .iter_mut()
                .find(|t| t.account == account_before)
                .expect("participant trader");
            trader.account = new_ids[slot];
        }
        Ok(())
    }

    // ---- bucketization pipeline ----

    fn run_bucketization_round(&mut self, metrics: &mut RoundMetrics) -> Result<(), SimError> {
        // Phase two starts from the sealed phase-one block hash.
        let hash = self
            .ledger
            .latest_block_hash()
            .ok_or_else(|| SimError::Protocol("no sealed block".into()))?
            .to_string();
        let grid = choose_buckets(self.config.bucket_width, &hash)?;
        self.ledger.record_event(Event::BucketGridChosen {
            round: self.round,
            width: grid.width,
            offset: grid.offset,
        });

        let t_match = Instant::now();
        let live: Vec<OrderId> = self.ledger.live_orders().map(|o| o.id).collect();
        let mut disclosed: Vec<(OrderId, i64)> = Vec::new();
        let mut dropped: Vec<OrderId> = Vec::new();
        for id in live {
            if self.config.phase2_dropout > 0.0
                && self.privacy_rng.gen_bool(self.config.phase2_dropout)
            {
                dropped.push(id);
                continue;
            }
            let meta = &self.order_meta[&id];
            let index = grid.bucket_index(meta.rate);
            let proof = prove_bucket_membership(
                &self.params,
                meta.rate,
                &meta.rate_blinding,
                index,
                &grid,
                DEFAULT_RANGE_BITS,
                &mut self.crypto_rng,
            )?;
            let commitment = self
                .ledger
                .order(id)
                .and_then(|o| o.rate_commitment)
                .ok_or_else(|| SimError::Protocol("bucketized order lost".into()))?;
            if !verify_bucket_membership(
                &self.params,
                &commitment,
                index,
                &grid,
                &proof,
                DEFAULT_RANGE_BITS,
            ) {
                dropped.push(id);
                continue;
            }
            self.ledger.set_bucket(id, index)?;
            disclosed.push((id, index));
        }
        // Orders that missed disclosure leave the round; escrows refund.
        for id in dropped {
            self.drop_order_and_free_trader(id, false)?;
        }

        let mut histogram: BTreeMap<i64, u64> = BTreeMap::new();
        for &(_, bucket) in &disclosed {
            *histogram.entry(bucket).or_insert(0) += 1;
        }
        let histogram: Vec<(i64, u64)> =
            histogram.into_iter().map(|(b, c)| (grid.floor(b), c)).collect();
        self.ledger.record_event(Event::BucketHistogram {
            round: self.round,
            buckets: histogram.clone(),
        });

        // Book sorted by bucket value, ties by submission order.
        let mut entries: Vec<(i64, u64, OrderId, Side)> = disclosed
            .iter()
            .map(|&(id, bucket)| {
                let o = self.ledger.order(id).expect("disclosed order");
                (grid.floor(bucket), o.submitted_round, id, o.side)
            })
            .collect();
        entries.sort_unstable_by_key(|&(floor, round, id, _)| (floor, round, id));
        let book = SortedBook {
            entries: entries
                .into_iter()
                .map(|(floor, _, id, side)| BookEntry { id, side, value: Some(floor) })
                .collect(),
        };
        let matches = fair_swap(&bucket_match(&book, grid.width), &book);
        self.ledger.record_match(&matches);
        metrics.book_size = book.entries.len();
        metrics.durations.match_s = t_match.elapsed().as_secs_f64();

        let t_settle = Instant::now();
        let mut total_fee = 0u64;
        let mut settled = MatchSet::default();
        for &(buy, sell) in &matches.pairs {
            match self.settle_bucketized_pair(buy, sell)? {
                Some(fee) => {
                    total_fee += fee;
                    settled.pairs.push((buy, sell));
                }
                None => {
                    // Deviation: the pair unwound; the honest order stays in
                    // the book for the next round.
                }
            }
        }
        metrics.durations.settle_s = t_settle.elapsed().as_secs_f64();

        let top_k = self.top_k_rates_plain(&book, &settled);
        let trader_gain =
            self.bucketization_trader_gain(&book, &histogram, &top_k, grid.width);
        let broker_view = LeakageView {
            top_k: top_k.iter().map(|&r| r as f64).collect(),
            total_orders: book.entries.len() as u64,
            own: None,
            histogram: Some(histogram),
            bucket_width: Some(grid.width),
        };
        metrics.privacy_gain_broker_pct = bucketization_estimate(&broker_view, &mut self.privacy_rng)
            .ok()
            .and_then(|est| privacy_gain(&est, &self.config.true_rate_params()).ok());
        metrics.privacy_gain_trader_pct = trader_gain;

        self.finish_round_metrics(metrics, &settled, total_fee, top_k)?;
        Ok(())
    }

    fn bucketization_trader_gain(
        &mut self,
        book: &SortedBook,
        histogram: &[(i64, u64)],
        top_k: &[u64],
        width: u64,
    ) -> Option<f64> {
        let truth = self.config.true_rate_params();
        let n = book.entries.len() as u64;
        let top_k_f: Vec<f64> = top_k.iter().map(|&r| r as f64).collect();
        let mut gains = Vec::new();
        for e in &book.entries {
            let Some(meta) = self.order_meta.get(&e.id) else { continue };
            let own_rate = meta.rate as f64;
            // A trader whose rate is already revealed adds nothing new.
            let own = if top_k_f.contains(&own_rate) {
                None
            } else {
                Some((n, own_rate))
            };
            let view = LeakageView {
                top_k: top_k_f.clone(),
                total_orders: n,
                own,
                histogram: Some(histogram.to_vec()),
                bucket_width: Some(width),
            };
            if let Ok(est) = bucketization_estimate(&view, &mut self.privacy_rng) {
                if let Ok(g) = privacy_gain(&est, &truth) {
                    gains.push(g);
                }
            }
        }
        if gains.is_empty() {
            None
        } else {
            Some(gains.iter().sum::<f64>() / gains.len() as f64)
        }
    }

    /// Pairwise settlement through the signed exchange. Returns the
    /// marketplace cut, or None when a deviation unwound the pair.
    fn settle_bucketized_pair(
        &mut self,
        buy: OrderId,
        sell: OrderId,
    ) -> Result<Option<u64>, SimError> {
        let params = self.params.clone();
        let buy_meta = BucketPairSide::of(&self.order_meta[&buy]);
        let sell_meta = BucketPairSide::of(&self.order_meta[&sell]);
        let buyer_idx = buy_meta.trader;
        let seller_idx = sell_meta.trader;
        let buy_commitment = self
            .ledger
            .order(buy)
            .and_then(|o| o.rate_commitment)
            .ok_or_else(|| SimError::Protocol("buy order lost".into()))?;
        let sell_commitment = self
            .ledger
            .order(sell)
            .and_then(|o| o.rate_commitment)
            .ok_or_else(|| SimError::Protocol("sell order lost".into()))?;

        // Both sides encrypt (rate, blinding, signature) to the other.
        let claimed_sell_rate = if self.deviate_on_sell_order == Some(sell) {
            sell_meta.rate - 1
        } else {
            sell_meta.rate
        };
        let seller_msg = seal_exchange(
            &params,
            &self.traders[seller_idx].keypair,
            &self.traders[buyer_idx].keypair.public,
            buy,
            sell,
            claimed_sell_rate,
            &sell_meta.rate_blinding,
            &mut self.crypto_rng,
        );
        let buyer_msg = seal_exchange(
            &params,
            &self.traders[buyer_idx].keypair,
            &self.traders[seller_idx].keypair.public,
            buy,
            sell,
            buy_meta.rate,
            &buy_meta.rate_blinding,
            &mut self.crypto_rng,
        );

        // Each side decrypts and checks the counterparty's opening.
        let seller_view = open_exchange(
            &params,
            &self.traders[buyer_idx].keypair,
            &self.traders[seller_idx].keypair.public,
            buy,
            sell,
            &seller_msg,
        )?;
        let buyer_view = open_exchange(
            &params,
            &self.traders[seller_idx].keypair,
            &self.traders[buyer_idx].keypair.public,
            buy,
            sell,
            &buyer_msg,
        )?;

        if let Err(report) = check_opening(&params, &seller_view, &sell_commitment, buy, sell) {
            // The buyer reports the seller's deviation; the marketplace
            // verifies it, penalizes the seller and unwinds the pair.
            if !verify_deviation(
                &params,
                &report,
                &self.traders[seller_idx].keypair.public,
                &sell_commitment,
            ) {
                return Err(SimError::Protocol("deviation report rejected".into()));
            }
            let seller_account = self.traders[seller_idx].account;
            self.ledger.flag_account(seller_account);
            self.ledger.record_event(Event::DeviationPenalized {
                round: self.round,
                account: seller_account,
                order: sell,
                fine: 0,
            });
            self.drop_order_and_free_trader(sell, false)?;
            return Ok(None);
        }
        if let Err(report) = check_opening(&params, &buyer_view, &buy_commitment, buy, sell) {
            if !verify_deviation(
                &params,
                &report,
                &self.traders[buyer_idx].keypair.public,
                &buy_commitment,
            ) {
                return Err(SimError::Protocol("deviation report rejected".into()));
            }
            let buyer_account = self.traders[buyer_idx].account;
            self.ledger.flag_account(buyer_account);
            let fine = self.order_meta[&buy].rate;
            self.ledger.record_event(Event::DeviationPenalized {
                round: self.round,
                account: buyer_account,
                order: buy,
                fine,
            });
            // A cheating buyer forfeits its escrow.
            self.drop_order_and_free_trader(buy, true)?;
            return Ok(None);
        }

        let buy_view = ExchangeView {
            rate: buy_meta.rate,
            blinding: buy_meta.rate_blinding,
            commitment: buy_commitment,
        };
        let sell_view = ExchangeView {
            rate: sell_meta.rate,
            blinding: sell_meta.rate_blinding,
            commitment: sell_commitment,
        };
        let seller_account = self.traders[seller_idx].account;
        let buyer_account = self.traders[buyer_idx].account;

        let cut = match self.config.settlement_scheme {
            SettlementScheme::Difference => {
                let (fee, proof) = prove_fee(&params, &buy_view, &sell_view, &mut self.crypto_rng);
                if !verify_fee(&params, &buy_commitment, &sell_commitment, fee, &proof) {
                    return Err(SimError::Protocol("fee proof rejected".into()));
                }
                self.ledger.consume_escrow(buy)?;
                self.ledger.credit_commitment(
                    seller_account,
                    &sell_commitment,
                    Some(TrackedOpening {
                        value: sell_meta.rate,
                        blinding: sell_meta.rate_blinding,
                    }),
                )?;
                let delta = params.scalar_sub(&buy_view.blinding, &sell_view.blinding);
                self.ledger.credit_marketplace(fee, &delta);
                self.ledger.record_event(Event::PairSettled {
                    round: self.round,
                    buy,
                    sell,
                    scheme: "difference".into(),
                    marketplace_cut: fee,
                });
                let t = &mut self.traders[seller_idx];
                t.balance += sell_meta.rate;
                t.blinding = params.scalar_add(&t.blinding, &sell_meta.rate_blinding);
                fee
            }
            SettlementScheme::Mean => {
                let m = settle_mean_values(buy_meta.rate, sell_meta.rate);
                let mc = mean_commitments(&params, &buy_view, &sell_view, m.remainder);
                self.ledger.consume_escrow(buy)?;
                self.ledger.credit_commitment(
                    seller_account,
                    &mc.settle,
                    Some(TrackedOpening { value: m.settle, blinding: mc.settle_blinding }),
                )?;
                self.ledger.credit_commitment(
                    buyer_account,
                    &mc.refund,
                    Some(TrackedOpening { value: m.buyer_refund, blinding: mc.refund_blinding }),
                )?;
                let zero = params.scalar_zero();
                self.ledger.credit_marketplace(m.remainder, &zero);
                self.ledger.record_event(Event::PairSettled {
                    round: self.round,
                    buy,
                    sell,
                    scheme: "mean".into(),
                    marketplace_cut: m.remainder,
                });
                // The buyer gets its excess back; the seller settles at the
                // mean rather than its own rate.
                let t = &mut self.traders[buyer_idx];
                t.balance += m.buyer_refund;
                t.blinding = params.scalar_add(&t.blinding, &mc.refund_blinding);
                let t = &mut self.traders[seller_idx];
                t.balance += m.settle;
                t.blinding = params.scalar_add(&t.blinding, &mc.settle_blinding);
                m.remainder
            }
        };

        for (id, trader_idx) in [(buy, buyer_idx), (sell, seller_idx)] {
            self.ledger.remove_order(id)?;
            self.traders[trader_idx].live_order = None;
        }
        Ok(Some(cut))
    }

    fn drop_order_and_free_trader(
        &mut self,
        id: OrderId,
        forfeit_escrow: bool,
    ) -> Result<(), SimError> {
        let meta = &self.order_meta[&id];
        let trader_idx = meta.trader;
        let side = meta.side;
        let rate = meta.rate;
        let rate_blinding = meta.rate_blinding;
        self.ledger.drop_order(id, forfeit_escrow)?;
        let t = &mut self.traders[trader_idx];
        if side == Side::Buy && !forfeit_escrow {
            t.balance += rate;
            t.blinding = self.params.scalar_add(&t.blinding, &rate_blinding);
        }
        t.live_order = None;
        Ok(())
    }

    // ---- shared round closing ----

    fn finish_round_common(
        &mut self,
        metrics: &mut RoundMetrics,
        matches: &MatchSet,
        fee: u64,
        top_k: Vec<u64>,
        trader_gain: Option<f64>,
    ) -> Result<(), SimError> {
        // Broker-side estimate from the top-K alone.
        if self.config.protocol.uses_brokers() && top_k.len() >= 2 {
            let view = LeakageView {
                top_k: top_k.iter().map(|&r| r as f64).collect(),
                total_orders: metrics.book_size as u64,
                own: None,
                histogram: None,
                bucket_width: None,
            };
            metrics.privacy_gain_broker_pct = estimate_params(&view)
                .ok()
                .and_then(|est| privacy_gain(&est, &self.config.true_rate_params()).ok());
            metrics.privacy_gain_trader_pct = trader_gain;
        }
        // Settled traders are freed before expiry runs.
        for &(b, s) in &matches.pairs {
            for id in [b, s] {
                let meta = &self.order_meta[&id];
                self.traders[meta.trader].live_order = None;
            }
        }
        self.finish_round_metrics(metrics, matches, fee, top_k)
    }

    fn finish_round_metrics(
        &mut self,
        metrics: &mut RoundMetrics,
        matches: &MatchSet,
        fee: u64,
        top_k: Vec<u64>,
    ) -> Result<(), SimError> {
        metrics.matched_pairs = matches.len();
        metrics.matched_pct = if metrics.book_size == 0 {
            0.0
        } else {
            200.0 * matches.len() as f64 / metrics.book_size as f64
        };
        metrics.fees = fee;
        metrics.settled_worth =
            matches.pairs.iter().map(|&(b, _)| self.order_meta[&b].rate).sum();
        metrics.fees_pct_of_worth = if metrics.settled_worth == 0 {
            0.0
        } else {
            100.0 * fee as f64 / metrics.settled_worth as f64
        };
        metrics.top_k_rates = top_k;
        metrics.matches = matches.pairs.clone();

        // Age the survivors and expel the stale.
        let expired = self.ledger.age_and_expire_orders(self.config.max_unmatched_rounds);
        metrics.expired_orders = expired.len();
        for id in expired {
            let meta = &self.order_meta[&id];
            let trader_idx = meta.trader;
            let side = meta.side;
            let rate = meta.rate;
            let rate_blinding = meta.rate_blinding;
            let t = &mut self.traders[trader_idx];
            if side == Side::Buy {
                t.balance += rate;
                t.blinding = self.params.scalar_add(&t.blinding, &rate_blinding);
            }
            t.live_order = None;
        }
        Ok(())
    }
}

/// Run the configured experiment end to end.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput, SimError> {
    let mut sim = Simulation::new(config.clone())?;
    sim.run_all_rounds()?;
    Ok(sim.into_output())
}

