//! Simulated append-only ledger with the marketplace contract semantics.
//!
//! Accounts are Pedersen commitments (or plain integers for the baseline
//! protocols that never hide them). Orders lock buy escrows on intake,
//! settlement moves value homomorphically, and the shuffle replaces the
//! participating account commitments wholesale. Every state change is an
//! event; events are batched into hash-chained blocks and can be dumped as
//! newline-delimited JSON for test oracles.
//!
//! Test mode additionally carries tracked openings next to each commitment
//! so conservation and multiset invariants stay assertable; protocol logic
//! never reads them.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::group::{verify_range, Commitment, GroupParams, RangeProof, Scalar};
use crate::matching::{MatchSet, OrderId, Side};
use crate::sharing::{reconstruct_commitment, Scheme};

pub type AccountId = u64;

/// The marketplace's own fee account.
pub const MARKETPLACE_ACCOUNT: AccountId = 0;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LedgerError {
    #[error("unknown account {0}")]
    UnknownAccount(AccountId),
    #[error("unknown order {0}")]
    UnknownOrder(OrderId),
    #[error("account {0} already has an order in this round")]
    DuplicateOrderInRound(AccountId),
    #[error("balance range proof rejected")]
    InvalidRangeProof,
    #[error("insufficient balance: have {have}, need {need}")]
    InsufficientBalance { have: u64, need: u64 },
    #[error("order lacks a rate representation the ledger can use")]
    MalformedOrder,
    #[error("aggregate settlement check failed")]
    SettlementCheckFailed,
    #[error("replacement list length {got} does not match participant count {expected}")]
    ReplacementLengthMismatch { expected: usize, got: usize },
    #[error("escrow for order {0} already consumed")]
    EscrowConsumed(OrderId),
}

/// What the ledger stores in the clear, per protocol family.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Visibility {
    pub public_balances: bool,
    pub public_rates: bool,
}

impl Visibility {
    pub const PLAIN: Visibility = Visibility { public_balances: true, public_rates: true };
    pub const SEMI_PRIVATE: Visibility =
        Visibility { public_balances: false, public_rates: true };
    pub const PRIVATE: Visibility =
        Visibility { public_balances: false, public_rates: false };
}

#[derive(Clone, Copy, Debug)]
pub struct TrackedOpening {
    pub value: u64,
    pub blinding: Scalar,
}

#[derive(Clone, Debug)]
pub struct Account {
    pub id: AccountId,
    pub commitment: Option<Commitment>,
    pub plain_balance: Option<u64>,
    tracked: Option<TrackedOpening>,
    pub flagged: bool,
}

#[derive(Clone, Debug)]
pub struct LedgerOrder {
    pub id: OrderId,
    pub side: Side,
    pub account: AccountId,
    pub share_commitments: Vec<Commitment>,
    pub rerand_commitments: Vec<Commitment>,
    pub rate_commitment: Option<Commitment>,
    pub public_rate: Option<u64>,
    pub bucket: Option<i64>,
    pub submitted_round: u64,
    pub rounds_unmatched: u64,
}

#[derive(Clone, Debug)]
struct Escrow {
    commitment: Option<Commitment>,
    plain_value: Option<u64>,
    tracked: Option<TrackedOpening>,
    consumed: bool,
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    AccountRegistered {
        account: AccountId,
        commitment: Option<String>,
        balance: Option<u64>,
    },
    OrderAccepted {
        round: u64,
        order: OrderId,
        account: AccountId,
        side: Side,
        share_commitments: Vec<String>,
        rate_commitment: Option<String>,
        rate: Option<u64>,
    },
    BucketGridChosen {
        round: u64,
        width: u64,
        offset: u64,
    },
    BucketDisclosed {
        round: u64,
        order: OrderId,
        bucket: i64,
    },
    BucketHistogram {
        round: u64,
        buckets: Vec<(i64, u64)>,
    },
    MatchRecorded {
        round: u64,
        pairs: Vec<(OrderId, OrderId)>,
    },
    SettlementRecorded {
        round: u64,
        fee: u64,
        fee_commitment: Option<String>,
        pairs: usize,
    },
    PairSettled {
        round: u64,
        buy: OrderId,
        sell: OrderId,
        scheme: String,
        marketplace_cut: u64,
    },
    DeviationPenalized {
        round: u64,
        account: AccountId,
        order: OrderId,
        fine: u64,
    },
    AccountsReplaced {
        round: u64,
        commitments: Vec<String>,
    },
    OrdersExpired {
        round: u64,
        orders: Vec<OrderId>,
    },
}

#[derive(Clone, Debug, Serialize)]
pub struct Block {
    pub height: u64,
    pub previous_hash: String,
    pub events: Vec<Event>,
    pub hash: String,
}

/// Order intake payload. The private pipeline supplies share commitments;
/// plain-rate modes supply the rate itself.
#[derive(Clone, Debug)]
pub struct OrderSubmission {
    pub account: AccountId,
    pub side: Side,
    pub share_commitments: Vec<Commitment>,
    pub rerand_commitments: Vec<Commitment>,
    pub public_rate: Option<u64>,
    pub balance_proof: Option<RangeProof>,
    /// Test oracle only: the true opening of the rate commitment.
    pub tracked_rate: Option<TrackedOpening>,
}

pub struct Ledger {
    pub params: GroupParams,
    scheme: Scheme,
    visibility: Visibility,
    n_bits: u32,
    tracking: bool,
    accounts: BTreeMap<AccountId, Account>,
    orders: BTreeMap<OrderId, LedgerOrder>,
    escrows: BTreeMap<OrderId, Escrow>,
    order_openings: BTreeMap<OrderId, TrackedOpening>,
    submitted_this_round: BTreeSet<AccountId>,
    next_account: AccountId,
    next_order: OrderId,
    round: u64,
    blocks: Vec<Block>,
    pending: Vec<Event>,
}

impl Ledger {
    pub fn new(
        params: GroupParams,
        scheme: Scheme,
        visibility: Visibility,
        n_bits: u32,
        tracking: bool,
    ) -> Self {
        let mut ledger = Ledger {
            params,
            scheme,
            visibility,
            n_bits,
            tracking,
            accounts: BTreeMap::new(),
            orders: BTreeMap::new(),
            escrows: BTreeMap::new(),
            order_openings: BTreeMap::new(),
            submitted_this_round: BTreeSet::new(),
            next_account: MARKETPLACE_ACCOUNT,
            next_order: 1,
            round: 0,
            blocks: Vec::new(),
            pending: Vec::new(),
        };
        // The marketplace fee account starts at zero.
        if visibility.public_balances {
            ledger.register_plain_account(0);
        } else {
            let zero = ledger.params.scalar_zero();
            let c = ledger.params.commit(&zero, &zero);
            ledger
                .register_committed_account(c, Some(TrackedOpening { value: 0, blinding: zero }));
        }
        ledger
    }

    pub fn visibility(&self) -> Visibility {
        self.visibility
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn begin_round(&mut self, round: u64) {
        self.round = round;
        self.submitted_this_round.clear();
    }

    // ---- accounts ----

    pub fn register_plain_account(&mut self, balance: u64) -> AccountId {
        let id = self.next_account;
        self.next_account += 1;
        self.accounts.insert(
            id,
            Account {
                id,
                commitment: None,
                plain_balance: Some(balance),
                tracked: None,
                flagged: false,
            },
        );
        self.pending.push(Event::AccountRegistered {
            account: id,
            commitment: None,
            balance: Some(balance),
        });
        id
    }

    pub fn register_committed_account(
        &mut self,
        commitment: Commitment,
        tracked: Option<TrackedOpening>,
    ) -> AccountId {
        let id = self.next_account;
        self.next_account += 1;
        self.accounts.insert(
            id,
            Account {
                id,
                commitment: Some(commitment),
                plain_balance: None,
                tracked: if self.tracking { tracked } else { None },
                flagged: false,
            },
        );
        self.pending.push(Event::AccountRegistered {
            account: id,
            commitment: Some(commitment.to_hex()),
            balance: None,
        });
        id
    }

    pub fn account(&self, id: AccountId) -> Option<&Account> {
        self.accounts.get(&id)
    }

    pub fn account_commitment(&self, id: AccountId) -> Option<Commitment> {
        self.accounts.get(&id).and_then(|a| a.commitment)
    }

    pub fn tracked_opening(&self, id: AccountId) -> Option<TrackedOpening> {
        self.accounts.get(&id).and_then(|a| a.tracked)
    }

    pub fn flag_account(&mut self, id: AccountId) {
        if let Some(a) = self.accounts.get_mut(&id) {
            a.flagged = true;
        }
    }

    // ---- order intake ----

    pub fn submit_order(&mut self, sub: OrderSubmission) -> Result<OrderId, LedgerError> {
        if !self.accounts.contains_key(&sub.account) {
            return Err(LedgerError::UnknownAccount(sub.account));
        }
        let already_active = self.orders.values().any(|o| o.account == sub.account);
        if self.submitted_this_round.contains(&sub.account) || already_active {
            return Err(LedgerError::DuplicateOrderInRound(sub.account));
        }

        let rate_commitment = if self.visibility.public_rates {
            let rate = sub.public_rate.ok_or(LedgerError::MalformedOrder)?;
            if self.visibility.public_balances {
                None
            } else {
                Some(self.params.commit_u64(rate, &self.params.scalar_zero()))
            }
        } else {
            if sub.share_commitments.is_empty() {
                return Err(LedgerError::MalformedOrder);
            }
            let indexed: Vec<(usize, Commitment)> = sub
                .share_commitments
                .iter()
                .enumerate()
                .map(|(i, c)| (i + 1, *c))
                .collect();
            Some(
                reconstruct_commitment(&self.params, self.scheme, &indexed)
                    .map_err(|_| LedgerError::MalformedOrder)?,
            )
        };

        // Buy orders lock their rate in escrow; the balance must cover it.
        if sub.side == Side::Buy {
            if self.visibility.public_balances {
                let rate = sub.public_rate.ok_or(LedgerError::MalformedOrder)?;
                let have = self.accounts[&sub.account].plain_balance.unwrap_or(0);
                if have < rate {
                    return Err(LedgerError::InsufficientBalance { have, need: rate });
                }
            } else {
                let balance = self.accounts[&sub.account]
                    .commitment
                    .ok_or(LedgerError::UnknownAccount(sub.account))?;
                let rate_c = rate_commitment.ok_or(LedgerError::MalformedOrder)?;
                let statement = Commitment(self.params.div(&balance.0, &rate_c.0));
                let proof =
                    sub.balance_proof.as_ref().ok_or(LedgerError::InvalidRangeProof)?;
                if !verify_range(&self.params, &statement, proof, self.n_bits) {
                    return Err(LedgerError::InvalidRangeProof);
                }
            }
        }

        let id = self.next_order;
        self.next_order += 1;
        self.submitted_this_round.insert(sub.account);

        if self.tracking {
            if let Some(t) = sub.tracked_rate {
                self.order_openings.insert(id, t);
            }
        }
        if sub.side == Side::Buy {
            self.lock_escrow(id, sub.account, &rate_commitment, sub.public_rate, &sub.tracked_rate);
        }

        self.pending.push(Event::OrderAccepted {
            round: self.round,
            order: id,
            account: sub.account,
            side: sub.side,
            share_commitments: sub.share_commitments.iter().map(|c| c.to_hex()).collect(),
            rate_commitment: rate_commitment.map(|c| c.to_hex()),
            rate: if self.visibility.public_rates { sub.public_rate } else { None },
        });
        self.orders.insert(
            id,
            LedgerOrder {
                id,
                side: sub.side,
                account: sub.account,
                share_commitments: sub.share_commitments,
                rerand_commitments: sub.rerand_commitments,
                rate_commitment,
                public_rate: sub.public_rate,
                bucket: None,
                submitted_round: self.round,
                rounds_unmatched: 0,
            },
        );
        Ok(id)
    }

    fn lock_escrow(
        &mut self,
        order: OrderId,
        account: AccountId,
        rate_commitment: &Option<Commitment>,
        public_rate: Option<u64>,
        tracked_rate: &Option<TrackedOpening>,
    ) {
        let params = self.params.clone();
        let acct = self.accounts.get_mut(&account).expect("checked");
        if let Some(balance) = acct.plain_balance.as_mut() {
            let rate = public_rate.expect("plain escrow needs a rate");
            *balance -= rate;
            self.escrows.insert(
                order,
                Escrow {
                    commitment: None,
                    plain_value: Some(rate),
                    tracked: None,
                    consumed: false,
                },
            );
            return;
        }
        let rate_c = rate_commitment.expect("committed escrow needs a commitment");
        let bal = acct.commitment.expect("committed account");
        acct.commitment = Some(Commitment(params.div(&bal.0, &rate_c.0)));
        let rate_open = tracked_rate.or_else(|| {
            public_rate.map(|v| TrackedOpening { value: v, blinding: params.scalar_zero() })
        });
        let escrow_tracked = if self.tracking {
            if let (Some(acct_open), Some(rate_open)) = (acct.tracked, rate_open) {
                acct.tracked = Some(TrackedOpening {
                    value: acct_open.value - rate_open.value,
                    blinding: params.scalar_sub(&acct_open.blinding, &rate_open.blinding),
                });
                Some(rate_open)
            } else {
                None
            }
        } else {
            None
        };
        self.escrows.insert(
            order,
            Escrow {
                commitment: Some(rate_c),
                plain_value: public_rate,
                tracked: escrow_tracked,
                consumed: false,
            },
        );
    }

    pub fn order(&self, id: OrderId) -> Option<&LedgerOrder> {
        self.orders.get(&id)
    }

    pub fn live_orders(&self) -> impl Iterator<Item = &LedgerOrder> {
        self.orders.values()
    }

    pub fn set_bucket(&mut self, order: OrderId, bucket: i64) -> Result<(), LedgerError> {
        let round = self.round;
        let o = self.orders.get_mut(&order).ok_or(LedgerError::UnknownOrder(order))?;
        o.bucket = Some(bucket);
        self.pending.push(Event::BucketDisclosed { round, order, bucket });
        Ok(())
    }

    /// Remove a settled order whose escrow the caller already consumed.
    pub fn remove_order(&mut self, order: OrderId) -> Result<(), LedgerError> {
        self.orders.remove(&order).ok_or(LedgerError::UnknownOrder(order))?;
        Ok(())
    }

    /// Drop an order without settling it (phase-two timeout, deviation
    /// unwind). Buy escrows are refunded unless forfeited.
    pub fn drop_order(&mut self, order: OrderId, forfeit_escrow: bool) -> Result<(), LedgerError> {
        let o = self.orders.remove(&order).ok_or(LedgerError::UnknownOrder(order))?;
        if o.side == Side::Buy {
            if forfeit_escrow {
                self.forfeit_escrow_to_marketplace(order);
            } else {
                self.refund_escrow(order, o.account);
            }
        }
        Ok(())
    }

    pub fn record_event(&mut self, event: Event) {
        self.pending.push(event);
    }

    pub fn record_match(&mut self, matches: &MatchSet) {
        self.pending.push(Event::MatchRecorded {
            round: self.round,
            pairs: matches.pairs.clone(),
        });
    }

    // ---- settlement ----

    /// Apply the aggregate-fee settlement: sellers are credited their own
    /// committed rates, buy escrows are consumed, and the marketplace
    /// account absorbs commit(fee, fee_blinding) once the on-ledger
    /// aggregate check passes.
    pub fn apply_settlement(
        &mut self,
        pairs: &[(OrderId, OrderId)],
        fee: u64,
        fee_blinding: &Scalar,
    ) -> Result<(), LedgerError> {
        if pairs.is_empty() {
            return Ok(());
        }

        if self.visibility.public_rates {
            let mut expect = 0u64;
            for &(buy, sell) in pairs {
                let b = self.orders.get(&buy).ok_or(LedgerError::UnknownOrder(buy))?;
                let s = self.orders.get(&sell).ok_or(LedgerError::UnknownOrder(sell))?;
                let (Some(br), Some(sr)) = (b.public_rate, s.public_rate) else {
                    return Err(LedgerError::MalformedOrder);
                };
                expect += br - sr;
            }
            if expect != fee {
                return Err(LedgerError::SettlementCheckFailed);
            }
        } else {
            // commit(F, R) must equal the product of C_buy / C_sell.
            let mut acc = self.params.identity();
            for &(buy, sell) in pairs {
                let b = self.orders.get(&buy).ok_or(LedgerError::UnknownOrder(buy))?;
                let s = self.orders.get(&sell).ok_or(LedgerError::UnknownOrder(sell))?;
                let (Some(bc), Some(sc)) = (b.rate_commitment, s.rate_commitment) else {
                    return Err(LedgerError::MalformedOrder);
                };
                acc = self.params.mul(&acc, &self.params.div(&bc.0, &sc.0));
            }
            if self.params.commit_u64(fee, fee_blinding).0 != acc {
                return Err(LedgerError::SettlementCheckFailed);
            }
        }

        let fee_commitment = (!self.visibility.public_balances)
            .then(|| self.params.commit_u64(fee, fee_blinding));

        for &(buy, sell) in pairs {
            let sell_order =
                self.orders.get(&sell).cloned().ok_or(LedgerError::UnknownOrder(sell))?;
            self.consume_escrow(buy)?;
            self.credit_rate(
                sell_order.account,
                &sell_order.rate_commitment,
                sell_order.public_rate,
                sell,
            )?;
            self.orders.remove(&buy);
            self.orders.remove(&sell);
        }

        self.credit_marketplace(fee, fee_blinding);

        self.pending.push(Event::SettlementRecorded {
            round: self.round,
            fee,
            fee_commitment: fee_commitment.map(|c| c.to_hex()),
            pairs: pairs.len(),
        });
        Ok(())
    }

    pub fn consume_escrow(&mut self, order: OrderId) -> Result<(), LedgerError> {
        let escrow = self.escrows.get_mut(&order).ok_or(LedgerError::UnknownOrder(order))?;
        if escrow.consumed {
            return Err(LedgerError::EscrowConsumed(order));
        }
        escrow.consumed = true;
        Ok(())
    }

    /// Credit an account with a committed amount, mirroring tracked state.
    pub fn credit_commitment(
        &mut self,
        account: AccountId,
        amount: &Commitment,
        tracked: Option<TrackedOpening>,
    ) -> Result<(), LedgerError> {
        let params = self.params.clone();
        let acct =
            self.accounts.get_mut(&account).ok_or(LedgerError::UnknownAccount(account))?;
        let bal = acct.commitment.ok_or(LedgerError::UnknownAccount(account))?;
        acct.commitment = Some(Commitment(params.mul(&bal.0, &amount.0)));
        if let (Some(t), Some(o)) = (acct.tracked, tracked) {
            acct.tracked = Some(TrackedOpening {
                value: t.value + o.value,
                blinding: params.scalar_add(&t.blinding, &o.blinding),
            });
        }
        Ok(())
    }

    fn credit_rate(
        &mut self,
        account: AccountId,
        rate_commitment: &Option<Commitment>,
        public_rate: Option<u64>,
        order: OrderId,
    ) -> Result<(), LedgerError> {
        let opening = self.order_openings.get(&order).copied().or_else(|| {
            public_rate.map(|v| TrackedOpening { value: v, blinding: self.params.scalar_zero() })
        });
        let acct_is_plain = self
            .accounts
            .get(&account)
            .ok_or(LedgerError::UnknownAccount(account))?
            .plain_balance
            .is_some();
        if acct_is_plain {
            let acct = self.accounts.get_mut(&account).expect("checked");
            *acct.plain_balance.as_mut().expect("plain") +=
                public_rate.ok_or(LedgerError::MalformedOrder)?;
            return Ok(());
        }
        let rate_c = rate_commitment.ok_or(LedgerError::MalformedOrder)?;
        self.credit_commitment(account, &rate_c, opening)
    }

    pub fn credit_marketplace(&mut self, fee: u64, fee_blinding: &Scalar) {
        let params = self.params.clone();
        let acct = self.accounts.get_mut(&MARKETPLACE_ACCOUNT).expect("marketplace exists");
        if let Some(balance) = acct.plain_balance.as_mut() {
            *balance += fee;
            return;
        }
        let fee_c = params.commit_u64(fee, fee_blinding);
        let bal = acct.commitment.expect("committed account");
        acct.commitment = Some(Commitment(params.mul(&bal.0, &fee_c.0)));
        if let Some(t) = acct.tracked {
            acct.tracked = Some(TrackedOpening {
                value: t.value + fee,
                blinding: params.scalar_add(&t.blinding, fee_blinding),
            });
        }
    }

    fn forfeit_escrow_to_marketplace(&mut self, order: OrderId) {
        let Some(escrow) = self.escrows.get_mut(&order) else { return };
        if escrow.consumed {
            return;
        }
        escrow.consumed = true;
        let escrow = escrow.clone();
        let params = self.params.clone();
        let acct = self.accounts.get_mut(&MARKETPLACE_ACCOUNT).expect("marketplace exists");
        if let (Some(balance), Some(v)) = (acct.plain_balance.as_mut(), escrow.plain_value) {
            *balance += v;
            return;
        }
        if let Some(c) = escrow.commitment {
            let bal = acct.commitment.expect("committed account");
            acct.commitment = Some(Commitment(params.mul(&bal.0, &c.0)));
            if let (Some(t), Some(o)) = (acct.tracked, escrow.tracked) {
                acct.tracked = Some(TrackedOpening {
                    value: t.value + o.value,
                    blinding: params.scalar_add(&t.blinding, &o.blinding),
                });
            }
        }
    }

    // ---- shuffle integration ----

    /// Replace the participating accounts with their shuffled, re-randomized
    /// commitments. The slice order is the public shuffled order; the prior
    /// account in each slot is the claim a trader makes after locating its
    /// own recomputed commitment. Returns the fresh ids in slot order.
    pub fn replace_accounts(
        &mut self,
        participants: &[AccountId],
        shuffled: &[(Commitment, Option<TrackedOpening>, AccountId)],
    ) -> Result<Vec<AccountId>, LedgerError> {
        if participants.len() != shuffled.len() {
            return Err(LedgerError::ReplacementLengthMismatch {
                expected: participants.len(),
                got: shuffled.len(),
            });
        }
        let participant_set: BTreeSet<AccountId> = participants.iter().copied().collect();
        if participant_set.len() != participants.len() {
            return Err(LedgerError::ReplacementLengthMismatch {
                expected: participant_set.len(),
                got: participants.len(),
            });
        }
        for id in &participant_set {
            if !self.accounts.contains_key(id) {
                return Err(LedgerError::UnknownAccount(*id));
            }
        }

        let mut new_ids = Vec::with_capacity(shuffled.len());
        let mut relink: BTreeMap<AccountId, AccountId> = BTreeMap::new();
        for (commitment, tracked, prior) in shuffled {
            if !participant_set.contains(prior) {
                return Err(LedgerError::UnknownAccount(*prior));
            }
            let flagged = self.accounts[prior].flagged;
            let id = self.next_account;
            self.next_account += 1;
            self.accounts.insert(
                id,
                Account {
                    id,
                    commitment: Some(*commitment),
                    plain_balance: None,
                    tracked: if self.tracking { *tracked } else { None },
                    flagged,
                },
            );
            relink.insert(*prior, id);
            new_ids.push(id);
        }
        for id in &participant_set {
            self.accounts.remove(id);
        }
        // Carried orders follow their account to its replacement.
        for order in self.orders.values_mut() {
            if let Some(new_id) = relink.get(&order.account) {
                order.account = *new_id;
            }
        }

        self.pending.push(Event::AccountsReplaced {
            round: self.round,
            commitments: shuffled.iter().map(|(c, _, _)| c.to_hex()).collect(),
        });
        Ok(new_ids)
    }

    // ---- expiry ----

    /// Close the round's book-keeping: bump the unmatched counters and expel
    /// orders past the cutoff, refunding their escrows.
    pub fn age_and_expire_orders(&mut self, max_rounds: u64) -> Vec<OrderId> {
        for order in self.orders.values_mut() {
            order.rounds_unmatched += 1;
        }
        self.expire_orders(max_rounds)
    }

    pub fn expire_orders(&mut self, max_rounds: u64) -> Vec<OrderId> {
        let expired: Vec<OrderId> = self
            .orders
            .values()
            .filter(|o| o.rounds_unmatched > max_rounds)
            .map(|o| o.id)
            .collect();
        for &id in &expired {
            let order = self.orders.remove(&id).expect("listed");
            if order.side == Side::Buy {
                self.refund_escrow(id, order.account);
            }
        }
        if !expired.is_empty() {
            self.pending
                .push(Event::OrdersExpired { round: self.round, orders: expired.clone() });
        }
        expired
    }

    fn refund_escrow(&mut self, order: OrderId, account: AccountId) {
        let params = self.params.clone();
        let Some(escrow) = self.escrows.get_mut(&order) else { return };
        if escrow.consumed {
            return;
        }
        escrow.consumed = true;
        let escrow = escrow.clone();
        let Some(acct) = self.accounts.get_mut(&account) else { return };
        if let (Some(balance), Some(v)) = (acct.plain_balance.as_mut(), escrow.plain_value) {
            *balance += v;
            return;
        }
        if let Some(c) = escrow.commitment {
            let bal = acct.commitment.expect("committed account");
            acct.commitment = Some(Commitment(params.mul(&bal.0, &c.0)));
            if let (Some(t), Some(o)) = (acct.tracked, escrow.tracked) {
                acct.tracked = Some(TrackedOpening {
                    value: t.value + o.value,
                    blinding: params.scalar_add(&t.blinding, &o.blinding),
                });
            }
        }
    }

    // ---- blocks ----

    pub fn seal_block(&mut self) -> String {
        let previous_hash = self
            .blocks
            .last()
            .map(|b| b.hash.clone())
            .unwrap_or_else(|| "00".repeat(32));
        let events = std::mem::take(&mut self.pending);
        let height = self.blocks.len() as u64;
        let hash = block_hash(height, &previous_hash, &events);
        self.blocks.push(Block { height, previous_hash, events, hash: hash.clone() });
        hash
    }

    pub fn latest_block_hash(&self) -> Option<&str> {
        self.blocks.last().map(|b| b.hash.as_str())
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn verify_chain(&self) -> bool {
        let mut prev = "00".repeat(32);
        for (i, block) in self.blocks.iter().enumerate() {
            if block.height != i as u64
                || block.previous_hash != prev
                || block_hash(block.height, &block.previous_hash, &block.events) != block.hash
            {
                return false;
            }
            prev = block.hash.clone();
        }
        true
    }

    /// One JSON object per line: every event of every sealed block.
    pub fn dump_events_jsonl(&self) -> String {
        let mut out = String::new();
        for block in &self.blocks {
            for (seq, event) in block.events.iter().enumerate() {
                #[derive(Serialize)]
                struct Line<'a> {
                    height: u64,
                    seq: usize,
                    #[serde(flatten)]
                    event: &'a Event,
                }
                out.push_str(
                    &serde_json::to_string(&Line { height: block.height, seq, event })
                        .expect("events serialize"),
                );
                out.push('\n');
            }
        }
        out
    }

    // ---- test oracles ----

    /// Total tracked value across accounts plus outstanding escrows.
    pub fn tracked_total(&self) -> Option<u64> {
        if !self.tracking {
            return None;
        }
        let mut total = 0u64;
        for a in self.accounts.values() {
            if let Some(balance) = a.plain_balance {
                total += balance;
            } else {
                total += a.tracked?.value;
            }
        }
        for e in self.escrows.values() {
            if !e.consumed {
                if let Some(t) = e.tracked {
                    total += t.value;
                } else {
                    total += e.plain_value?;
                }
            }
        }
        Some(total)
    }

    /// Multiset of tracked trader balances, for shuffle-invariance checks.
    pub fn tracked_balance_multiset(&self) -> Option<Vec<u64>> {
        if !self.tracking {
            return None;
        }
        let mut values = Vec::new();
        for a in self.accounts.values() {
            if a.id == MARKETPLACE_ACCOUNT {
                continue;
            }
            if let Some(balance) = a.plain_balance {
                values.push(balance);
            } else {
                values.push(a.tracked?.value);
            }
        }
        values.sort_unstable();
        Some(values)
    }

    /// Confirms every tracked opening actually opens its commitment.
    pub fn tracked_openings_consistent(&self) -> bool {
        self.accounts.values().all(|a| match (a.commitment, a.tracked) {
            (Some(c), Some(t)) => self.params.commit_u64(t.value, &t.blinding) == c,
            _ => true,
        })
    }

    pub fn order_opening(&self, id: OrderId) -> Option<TrackedOpening> {
        self.order_openings.get(&id).copied()
    }
}

fn block_hash(height: u64, previous_hash: &str, events: &[Event]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(height.to_be_bytes());
    hasher.update(previous_hash.as_bytes());
    for e in events {
        hasher.update(serde_json::to_string(e).expect("events serialize").as_bytes());
        hasher.update(b"\n");
    }
    crate::group::hex_encode(&hasher.finalize())
}
