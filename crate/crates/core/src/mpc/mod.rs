//! Broker actors and the secure-computation substrate.
//!
//! Brokers hold secret shares of order rates, blinding factors and
//! re-randomization factors. Share arithmetic (sums, differences) happens
//! locally per broker. Anything that must be opened (comparison outcomes
//! for sorting, the aggregate fee, the top-K rates, the shuffled commitment
//! list) travels as explicit frames to a sealed reconstruction gate that
//! performs the opening and writes the leakage log. The gate releases
//! nothing else: sorting yields only the permutation, settlement only the
//! aggregate, the shuffle only the final list.
//!
//! Input share validation follows the distributed Schnorr protocol with the
//! challenge computed inside the gate from the prover's nonces, exactly as
//! the validation computation defines it; the standalone proof objects in
//! [`crate::group`] use the conventional announcement-bound transcript
//! instead.

mod leakage;
mod transport;

pub use leakage::{LeakageEntry, LeakageLog, LeakageTag};
pub use transport::{Frame, FrameError, InProcessTransport, TcpLoopbackTransport, Transport, GATE};

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::group::{Commitment, Element, GroupParams, Scalar, Transcript};
use crate::ledger::AccountId;
use crate::matching::{MatchSet, OrderId};
use crate::sharing::{lagrange_coefficients, Scheme};
use crate::waksman::{sample_uniform_network, PermutationNetwork, SwapGate};

#[derive(Debug, Error)]
pub enum MpcError {
    #[error("broker {broker} holds no share for order {order}")]
    MissingShare { broker: usize, order: OrderId },
    #[error("only {valid} validated brokers, need {need}")]
    InsufficientValidBrokers { valid: usize, need: usize },
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("frame error: {0}")]
    Frame(#[from] FrameError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SecurityMode {
    /// Brokers follow the protocol and are trusted to use the shares they
    /// were dealt; input share validation is skipped.
    SemiHonest,
    /// A minority of brokers may substitute inputs; validation gates every
    /// reconstruction phase.
    MaliciousMinority,
}

/// A broker's view of one order.
#[derive(Clone, Debug)]
pub struct ShareBundle {
    pub order_id: OrderId,
    pub rate_share: Scalar,
    pub rate_blinding_share: Scalar,
    pub rerand_blinding_share: Scalar,
    pub account: AccountId,
    /// c_i = commit(rate share, blinding share), as published on the ledger.
    pub share_commitment: Commitment,
    /// h^(rho_i), as published on the ledger.
    pub rerand_commitment: Commitment,
}

/// Test hook: what a dishonest broker substitutes before the round runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tamper {
    RateShare { order: OrderId, delta: u64 },
    BlindingShare { order: OrderId, delta: u64 },
    RerandShare { order: OrderId, delta: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ValidationComponent {
    RateOpening,
    RerandOpening,
}

struct ValidationNonces {
    y: Scalar,
    s: Scalar,
}

pub struct Broker {
    pub index: usize,
    bundles: BTreeMap<OrderId, ShareBundle>,
    nonces: BTreeMap<(OrderId, ValidationComponent), ValidationNonces>,
    rng: ChaCha20Rng,
    pub tamper: Option<Tamper>,
    pub corrupt_shuffle_network: bool,
}

impl Broker {
    fn new(index: usize, seed: u64) -> Self {
        Broker {
            index,
            bundles: BTreeMap::new(),
            nonces: BTreeMap::new(),
            rng: ChaCha20Rng::seed_from_u64(broker_seed(seed, index)),
            tamper: None,
            corrupt_shuffle_network: false,
        }
    }

    /// Shamir evaluation point / party label.
    fn party(&self) -> usize {
        self.index + 1
    }

    fn receive_bundle(&mut self, params: &GroupParams, mut bundle: ShareBundle) {
        if let Some(t) = self.tamper {
            match t {
                Tamper::RateShare { order, delta } if order == bundle.order_id => {
                    bundle.rate_share = params
                        .scalar_add(&bundle.rate_share, &params.scalar_from_u64(delta));
                }
                Tamper::BlindingShare { order, delta } if order == bundle.order_id => {
                    bundle.rate_blinding_share = params
                        .scalar_add(&bundle.rate_blinding_share, &params.scalar_from_u64(delta));
                }
                Tamper::RerandShare { order, delta } if order == bundle.order_id => {
                    bundle.rerand_blinding_share = params
                        .scalar_add(&bundle.rerand_blinding_share, &params.scalar_from_u64(delta));
                }
                _ => {}
            }
        }
        self.bundles.insert(bundle.order_id, bundle);
    }

    fn bundle(&self, order: OrderId) -> Result<&ShareBundle, MpcError> {
        self.bundles
            .get(&order)
            .ok_or(MpcError::MissingShare { broker: self.index, order })
    }

    fn drop_bundle(&mut self, order: OrderId) {
        self.bundles.remove(&order);
        self.nonces.retain(|(o, _), _| *o != order);
    }
}

/// Deterministic per-broker RNG seed derivation.
pub fn broker_seed(engine_seed: u64, index: usize) -> u64 {
    engine_seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Ledger-side commitments one validation pass checks against.
#[derive(Clone, Debug)]
pub struct OrderCommitments {
    pub order: OrderId,
    /// Per-party c_i, index 0 holding party 1's commitment.
    pub share_commitments: Vec<Commitment>,
    /// Per-party h^(rho_i).
    pub rerand_commitments: Vec<Commitment>,
}

#[derive(Clone, Debug)]
pub struct ShuffleInput {
    pub account: AccountId,
    pub order: OrderId,
    pub commitment: Commitment,
}

// Frame tags.
const TAG_DIFF_SHARE: u8 = 1;
const TAG_FEE_SHARE: u8 = 2;
const TAG_RATE_SHARE: u8 = 3;
const TAG_RERAND_SHARE: u8 = 4;
const TAG_SHUFFLE_NET: u8 = 5;
const TAG_VALIDATION_INPUT: u8 = 6;
const TAG_VALIDATION_TRANSCRIPT: u8 = 7;

pub struct MpcEngine {
    params: GroupParams,
    scheme: Scheme,
    mode: SecurityMode,
    brokers: Vec<Broker>,
    transport: Box<dyn Transport + Send>,
    leakage: LeakageLog,
    h: Vec<bool>,
    round: u64,
}

impl MpcEngine {
    pub fn new(
        params: GroupParams,
        scheme: Scheme,
        mode: SecurityMode,
        broker_count: usize,
        seed: u64,
        transport: Box<dyn Transport + Send>,
    ) -> Self {
        assert!(broker_count >= 1, "need at least one broker");
        if let Scheme::Threshold { n, .. } = scheme {
            assert_eq!(n, broker_count, "threshold n must equal the broker count");
        }
        MpcEngine {
            params,
            scheme,
            mode,
            brokers: (0..broker_count).map(|i| Broker::new(i, seed)).collect(),
            transport,
            leakage: LeakageLog::new(),
            h: vec![true; broker_count],
            round: 0,
        }
    }

    pub fn params(&self) -> &GroupParams {
        &self.params
    }

    pub fn mode(&self) -> SecurityMode {
        self.mode
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn broker_count(&self) -> usize {
        self.brokers.len()
    }

    pub fn begin_round(&mut self, round: u64) {
        self.round = round;
    }

    pub fn leakage(&self) -> &LeakageLog {
        &self.leakage
    }

    pub fn validated(&self) -> &[bool] {
        &self.h
    }

    /// Test hook accessor.
    pub fn broker_mut(&mut self, index: usize) -> &mut Broker {
        &mut self.brokers[index]
    }

    /// Trader-to-broker share delivery.
    pub fn deliver_bundle(&mut self, broker: usize, bundle: ShareBundle) {
        let params = self.params.clone();
        self.brokers[broker].receive_bundle(&params, bundle);
    }

    /// Brokers forget a settled or expelled order.
    pub fn retire_order(&mut self, order: OrderId) {
        for b in &mut self.brokers {
            b.drop_bundle(order);
        }
    }

    fn quorum(&self) -> usize {
        self.scheme.quorum(self.brokers.len())
    }

    /// Parties whose shares reconstructions draw on: everyone for additive
    /// sharing, the first k validated parties for threshold.
    fn reconstruction_parties(&self) -> Result<Vec<usize>, MpcError> {
        let valid: Vec<usize> =
            (0..self.brokers.len()).filter(|&i| self.h[i]).collect();
        let need = self.quorum();
        if valid.len() < need
            || (matches!(self.scheme, Scheme::Additive) && valid.len() != self.brokers.len())
        {
            return Err(MpcError::InsufficientValidBrokers { valid: valid.len(), need });
        }
        Ok(match self.scheme {
            Scheme::Additive => valid,
            Scheme::Threshold { k, .. } => valid[..k].to_vec(),
        })
    }

    fn reconstruct_scalar(&self, shares: &[(usize, Scalar)]) -> Result<Scalar, MpcError> {
        match self.scheme {
            Scheme::Additive => {
                let mut acc = self.params.scalar_zero();
                for (_, s) in shares {
                    acc = self.params.scalar_add(&acc, s);
                }
                Ok(acc)
            }
            Scheme::Threshold { .. } => {
                let indices: Vec<usize> = shares.iter().map(|(p, _)| *p).collect();
                let coeffs = lagrange_coefficients(&self.params, &indices)
                    .map_err(|e| MpcError::ProtocolViolation(e.to_string()))?;
                let mut acc = self.params.scalar_zero();
                for ((_, s), l) in shares.iter().zip(&coeffs) {
                    acc = self.params.scalar_add(&acc, &self.params.scalar_mul(s, l));
                }
                Ok(acc)
            }
        }
    }

    fn combine_elements(&self, parts: &[(usize, Element)]) -> Result<Element, MpcError> {
        match self.scheme {
            Scheme::Additive => {
                let mut acc = self.params.identity();
                for (_, e) in parts {
                    acc = self.params.mul(&acc, e);
                }
                Ok(acc)
            }
            Scheme::Threshold { .. } => {
                let indices: Vec<usize> = parts.iter().map(|(p, _)| *p).collect();
                let coeffs = lagrange_coefficients(&self.params, &indices)
                    .map_err(|e| MpcError::ProtocolViolation(e.to_string()))?;
                let mut acc = self.params.identity();
                for ((_, e), l) in parts.iter().zip(&coeffs) {
                    acc = self.params.mul(&acc, &self.params.pow(e, l));
                }
                Ok(acc)
            }
        }
    }

    // ---- sorting ----

    /// Sort the book by reconstructed rate, ascending; ties fall back to
    /// (submission round, order id). Only comparison outcomes leave the
    /// gate; the log gains one sorted-permutation entry.
    pub fn sorting_mpc(
        &mut self,
        book: &[(OrderId, u64)],
    ) -> Result<Vec<OrderId>, MpcError> {
        if book.is_empty() {
            return Ok(Vec::new());
        }
        let parties = self.reconstruction_parties()?;
        for &p in &parties {
            for &(order, _) in book {
                self.brokers[p].bundle(order)?;
            }
        }

        let mut items: Vec<(OrderId, u64)> = book.to_vec();
        merge_sort_by(&mut items, &mut |a, b| self.compare_orders(a, b, &parties))?;

        let ids: Vec<OrderId> = items.iter().map(|&(id, _)| id).collect();
        self.leakage.record(
            self.round,
            LeakageTag::SortedPermutation,
            serde_json::json!({ "order_ids": ids }),
        );
        Ok(ids)
    }

    fn compare_orders(
        &mut self,
        a: &(OrderId, u64),
        b: &(OrderId, u64),
        parties: &[usize],
    ) -> Result<std::cmp::Ordering, MpcError> {
        let diff = self.open_difference(a.0, b.0, parties)?;
        Ok(match diff.cmp(&0) {
            std::cmp::Ordering::Equal => (a.1, a.0).cmp(&(b.1, b.0)),
            other => other,
        })
    }

    /// The comparison gate: every party opens its share of (rate_a -
    /// rate_b); only the sign survives.
    fn open_difference(
        &mut self,
        a: OrderId,
        b: OrderId,
        parties: &[usize],
    ) -> Result<i64, MpcError> {
        for &p in parties {
            let broker = &self.brokers[p];
            let sa = broker.bundle(a)?.rate_share;
            let sb = broker.bundle(b)?.rate_share;
            let share = self.params.scalar_sub(&sa, &sb);
            let mut payload = Vec::new();
            payload.extend_from_slice(&a.to_be_bytes());
            payload.extend_from_slice(&b.to_be_bytes());
            payload.extend_from_slice(&(broker.party() as u32).to_be_bytes());
            payload.extend_from_slice(&share.to_bytes());
            self.transport.send(Frame {
                tag: TAG_DIFF_SHARE,
                from: p as u32,
                to: GATE,
                payload,
            });
        }
        let frames = self.transport.drain();
        let mut shares = Vec::with_capacity(parties.len());
        for f in frames {
            if f.tag != TAG_DIFF_SHARE {
                return Err(MpcError::ProtocolViolation(format!(
                    "unexpected tag {} during comparison",
                    f.tag
                )));
            }
            let (oa, ob, party, share) = decode_diff_share(&self.params, &f.payload)?;
            if oa != a || ob != b {
                return Err(MpcError::ProtocolViolation("comparison id mismatch".into()));
            }
            shares.push((party, share));
        }
        if shares.len() != parties.len() {
            return Err(MpcError::ProtocolViolation("missing comparison shares".into()));
        }
        let diff = self.reconstruct_scalar(&shares)?;
        self.params
            .scalar_to_centered_i64(&diff)
            .map_err(|_| MpcError::ProtocolViolation("difference out of range".into()))
    }

    // ---- settlement ----

    /// Aggregate fee opening: each party sums its share of (buy - sell)
    /// over all matched pairs locally and the gate opens only the totals
    /// (F, R). Per-pair differences never leave the brokers.
    pub fn settlement_mpc(
        &mut self,
        pairs: &[(OrderId, OrderId)],
    ) -> Result<(u64, Scalar), MpcError> {
        if pairs.is_empty() {
            return Ok((0, self.params.scalar_zero()));
        }
        let parties = self.reconstruction_parties()?;
        for &p in &parties {
            let broker = &self.brokers[p];
            let mut fee = self.params.scalar_zero();
            let mut blinding = self.params.scalar_zero();
            for &(buy, sell) in pairs {
                let b = broker.bundle(buy)?;
                let s = broker.bundle(sell)?;
                fee = self.params.scalar_add(
                    &fee,
                    &self.params.scalar_sub(&b.rate_share, &s.rate_share),
                );
                blinding = self.params.scalar_add(
                    &blinding,
                    &self
                        .params
                        .scalar_sub(&b.rate_blinding_share, &s.rate_blinding_share),
                );
            }
            let mut payload = Vec::new();
            payload.extend_from_slice(&(broker.party() as u32).to_be_bytes());
            payload.extend_from_slice(&fee.to_bytes());
            payload.extend_from_slice(&blinding.to_bytes());
            self.transport.send(Frame { tag: TAG_FEE_SHARE, from: p as u32, to: GATE, payload });
        }
        let frames = self.transport.drain();
        let mut fee_shares = Vec::new();
        let mut blinding_shares = Vec::new();
        for f in frames {
            let (party, fee, blinding) = decode_fee_share(&self.params, &f.payload)?;
            fee_shares.push((party, fee));
            blinding_shares.push((party, blinding));
        }
        let fee = self.reconstruct_scalar(&fee_shares)?;
        let blinding = self.reconstruct_scalar(&blinding_shares)?;
        let fee_value = self
            .params
            .scalar_to_centered_i64(&fee)
            .map_err(|_| MpcError::ProtocolViolation("fee out of range".into()))?;
        if fee_value < 0 {
            return Err(MpcError::ProtocolViolation(format!(
                "negative aggregate fee {fee_value}"
            )));
        }
        self.leakage.record(
            self.round,
            LeakageTag::AggregateFees,
            serde_json::json!({
                "fee": fee_value,
                "blinding": blinding.to_hex(),
            }),
        );
        Ok((fee_value as u64, blinding))
    }

    // ---- price discovery ----

    /// Open the buy rates of the K highest matched buyers, descending.
    pub fn topk_reveal(
        &mut self,
        sorted: &[OrderId],
        matches: &MatchSet,
        k: usize,
    ) -> Result<Vec<u64>, MpcError> {
        if k == 0 || matches.is_empty() {
            return Ok(Vec::new());
        }
        let matched_buys: std::collections::HashSet<OrderId> =
            matches.pairs.iter().map(|&(b, _)| b).collect();
        let reveal: Vec<OrderId> = sorted
            .iter()
            .rev()
            .filter(|id| matched_buys.contains(id))
            .take(k)
            .copied()
            .collect();

        let parties = self.reconstruction_parties()?;
        let mut rates = Vec::with_capacity(reveal.len());
        for &order in &reveal {
            for &p in &parties {
                let broker = &self.brokers[p];
                let share = broker.bundle(order)?.rate_share;
                let mut payload = Vec::new();
                payload.extend_from_slice(&order.to_be_bytes());
                payload.extend_from_slice(&(broker.party() as u32).to_be_bytes());
                payload.extend_from_slice(&share.to_bytes());
                self.transport.send(Frame {
                    tag: TAG_RATE_SHARE,
                    from: p as u32,
                    to: GATE,
                    payload,
                });
            }
            let mut shares = Vec::new();
            for f in self.transport.drain() {
                let (o, party, share) = decode_rate_share(&self.params, &f.payload)?;
                if o != order {
                    return Err(MpcError::ProtocolViolation("reveal id mismatch".into()));
                }
                shares.push((party, share));
            }
            let rate = self.reconstruct_scalar(&shares)?;
            let rate = self
                .params
                .scalar_to_centered_i64(&rate)
                .map_err(|_| MpcError::ProtocolViolation("rate out of range".into()))?;
            if rate < 0 {
                return Err(MpcError::ProtocolViolation("negative revealed rate".into()));
            }
            rates.push(rate as u64);
        }
        self.leakage.record(
            self.round,
            LeakageTag::TopkRates,
            serde_json::json!({ "rates": rates }),
        );
        Ok(rates)
    }

    // ---- shuffle ----

    /// Re-randomize each account commitment with the trader-submitted
    /// blinding (reconstructed as a commitment of zero, never as a scalar)
    /// and pass the list through every valid broker's private permutation
    /// network. Only the final list leaves the gate.
    pub fn shuffle_mpc(
        &mut self,
        inputs: &[ShuffleInput],
    ) -> Result<Vec<Commitment>, MpcError> {
        if inputs.is_empty() {
            return Ok(Vec::new());
        }
        let parties = self.reconstruction_parties()?;

        // Commitment-of-zero shares, h^(rho_i), per account.
        let mut rerandomized = Vec::with_capacity(inputs.len());
        for input in inputs {
            for &p in &parties {
                let broker = &self.brokers[p];
                let bundle = broker.bundle(input.order)?;
                let share = self
                    .params
                    .commit_zero(&bundle.rerand_blinding_share)
                    .0;
                let mut payload = Vec::new();
                payload.extend_from_slice(&input.order.to_be_bytes());
                payload.extend_from_slice(&(broker.party() as u32).to_be_bytes());
                payload.extend_from_slice(&share.to_bytes());
                self.transport.send(Frame {
                    tag: TAG_RERAND_SHARE,
                    from: p as u32,
                    to: GATE,
                    payload,
                });
            }
            let mut parts = Vec::new();
            for f in self.transport.drain() {
                let (order, party, element) = decode_rerand_share(&self.params, &f.payload)?;
                if order != input.order {
                    return Err(MpcError::ProtocolViolation("rerand id mismatch".into()));
                }
                parts.push((party, element));
            }
            let zero_commitment = self.combine_elements(&parts)?;
            rerandomized
                .push(Commitment(self.params.mul(&input.commitment.0, &zero_commitment)));
        }

        // Each valid broker contributes a private uniform network.
        let n = inputs.len();
        let layer_parties: Vec<usize> =
            (0..self.brokers.len()).filter(|&i| self.h[i]).collect();
        for &p in &layer_parties {
            let broker = &mut self.brokers[p];
            let net = if broker.corrupt_shuffle_network {
                // Claims a wire outside the list.
                PermutationNetwork::from_gates(
                    n + 1,
                    vec![SwapGate { a: 0, b: n, cross: true }],
                )
                .expect("test network")
            } else {
                sample_uniform_network(n, &mut broker.rng)
            };
            let mut payload = Vec::new();
            payload.extend_from_slice(&(broker.party() as u32).to_be_bytes());
            payload.extend_from_slice(&(net.size() as u32).to_be_bytes());
            payload.extend_from_slice(&(net.gates().len() as u32).to_be_bytes());
            for g in net.gates() {
                payload.extend_from_slice(&(g.a as u32).to_be_bytes());
                payload.extend_from_slice(&(g.b as u32).to_be_bytes());
                payload.push(g.cross as u8);
            }
            self.transport.send(Frame {
                tag: TAG_SHUFFLE_NET,
                from: p as u32,
                to: GATE,
                payload,
            });
        }

        let mut current = rerandomized;
        for f in self.transport.drain() {
            let (party, size, gates) = decode_shuffle_net(&f.payload)?;
            let broker_index = party - 1;
            // Routing check: the claimed network must act on exactly this
            // list and realize a bijection on it.
            let usable = size == n
                && PermutationNetwork::from_gates(size, gates.clone())
                    .map(|net| {
                        let perm = net.permutation();
                        let mut seen = vec![false; n];
                        perm.iter().all(|&i| {
                            i < n && !std::mem::replace(&mut seen[i], true)
                        })
                    })
                    .unwrap_or(false);
            if !usable {
                self.h[broker_index] = false;
                continue;
            }
            let net = PermutationNetwork::from_gates(size, gates).expect("checked");
            current = net.apply(&current).expect("length checked");
        }

        self.leakage.record(
            self.round,
            LeakageTag::ShuffledCommitments,
            serde_json::json!({
                "commitments": current.iter().map(|c| c.to_hex()).collect::<Vec<_>>(),
            }),
        );
        Ok(current)
    }

    // ---- input share validation ----

    /// The three-phase validation: brokers publish announcements offline,
    /// the gate computes challenges and responses from their private
    /// inputs, and everyone checks the transcripts against the ledger
    /// commitments. `H[i]` = 1 iff every transcript of broker i verified.
    pub fn input_share_validation(
        &mut self,
        orders: &[OrderCommitments],
    ) -> Result<Vec<bool>, MpcError> {
        let m = self.brokers.len();
        let components =
            [ValidationComponent::RateOpening, ValidationComponent::RerandOpening];

        // Preparation phase: fresh (y, s) nonces and public announcements.
        let params = self.params.clone();
        let mut announcements: BTreeMap<(usize, OrderId, ValidationComponent), Element> =
            BTreeMap::new();
        for broker in &mut self.brokers {
            for oc in orders {
                broker.bundle(oc.order)?;
                for comp in components {
                    let y = params.random_scalar(&mut broker.rng);
                    let s = params.random_scalar(&mut broker.rng);
                    let announcement = params.commit(&y, &s).0;
                    announcements
                        .insert((broker.index, oc.order, comp), announcement);
                    broker.nonces.insert((oc.order, comp), ValidationNonces { y, s });
                }
            }
        }

        // Validation phase: private inputs flow to the gate, which emits
        // one transcript per (broker, order, component).
        for broker in &self.brokers {
            for oc in orders {
                let bundle = broker.bundle(oc.order)?;
                for comp in components {
                    let nonces = &broker.nonces[&(oc.order, comp)];
                    let (v, r) = match comp {
                        ValidationComponent::RateOpening => {
                            (bundle.rate_share, bundle.rate_blinding_share)
                        }
                        // h^rho opens as a commitment to zero.
                        ValidationComponent::RerandOpening => {
                            (params.scalar_zero(), bundle.rerand_blinding_share)
                        }
                    };
                    let mut payload = Vec::new();
                    payload.extend_from_slice(&(broker.party() as u32).to_be_bytes());
                    payload.extend_from_slice(&oc.order.to_be_bytes());
                    payload.push(comp as u8);
                    payload.extend_from_slice(&nonces.y.to_bytes());
                    payload.extend_from_slice(&nonces.s.to_bytes());
                    payload.extend_from_slice(&v.to_bytes());
                    payload.extend_from_slice(&r.to_bytes());
                    self.transport.send(Frame {
                        tag: TAG_VALIDATION_INPUT,
                        from: broker.index as u32,
                        to: GATE,
                        payload,
                    });
                }
            }
        }

        let mut transcripts: Vec<(usize, OrderId, ValidationComponent, Element, Scalar, Scalar, Scalar)> =
            Vec::new();
        for f in self.transport.drain() {
            let (party, order, comp, y, s, v, r) =
                decode_validation_input(&params, &f.payload)?;
            // e = Hash(g, h, y, s), as the validation computation defines it.
            let mut t = Transcript::new("rialto/share-validation");
            t.append_params(&params);
            t.append("y", &y.to_bytes());
            t.append("s", &s.to_bytes());
            let e = t.challenge_scalar(&params);
            let a = params.scalar_add(&y, &params.scalar_mul(&e, &v));
            let b = params.scalar_add(&s, &params.scalar_mul(&e, &r));
            let announcement = announcements[&(party - 1, order, comp)];
            transcripts.push((party, order, comp, announcement, e, a, b));
        }

        // Broadcast the transcripts to every broker over the wire.
        for &(party, order, comp, d, e, a, b) in &transcripts {
            for to in 0..m {
                let mut payload = Vec::new();
                payload.extend_from_slice(&(party as u32).to_be_bytes());
                payload.extend_from_slice(&order.to_be_bytes());
                payload.push(comp as u8);
                payload.extend_from_slice(&d.to_bytes());
                payload.extend_from_slice(&e.to_bytes());
                payload.extend_from_slice(&a.to_bytes());
                payload.extend_from_slice(&b.to_bytes());
                self.transport.send(Frame {
                    tag: TAG_VALIDATION_TRANSCRIPT,
                    from: GATE,
                    to: to as u32,
                    payload,
                });
            }
        }
        let broadcast = self.transport.drain();

        // Offline verification phase, identical at every broker: check
        // g^a h^b = d * c^e against the ledger commitment.
        let ledger: BTreeMap<OrderId, &OrderCommitments> =
            orders.iter().map(|oc| (oc.order, oc)).collect();
        let mut h = vec![true; m];
        for f in broadcast.iter().filter(|f| f.to == 0) {
            let (party, order, comp, d, e, a, b) =
                decode_validation_transcript(&params, &f.payload)?;
            let oc = ledger
                .get(&order)
                .ok_or_else(|| MpcError::ProtocolViolation("unknown order".into()))?;
            let commitment = match comp {
                ValidationComponent::RateOpening => oc.share_commitments[party - 1],
                ValidationComponent::RerandOpening => oc.rerand_commitments[party - 1],
            };
            let lhs = params.commit(&a, &b).0;
            let rhs = params.mul(&d, &params.pow(&commitment.0, &e));
            if lhs != rhs {
                h[party - 1] = false;
            }
        }
        self.h = h.clone();
        Ok(h)
    }
}

// ---- payload codecs ----

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], MpcError> {
        if self.pos + n > self.bytes.len() {
            return Err(MpcError::ProtocolViolation("short payload".into()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u64(&mut self) -> Result<u64, MpcError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, MpcError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8, MpcError> {
        Ok(self.take(1)?[0])
    }

    fn scalar(&mut self, params: &GroupParams) -> Result<Scalar, MpcError> {
        params
            .scalar_from_bytes(self.take(params.scalar_len())?)
            .map_err(|e| MpcError::ProtocolViolation(e.to_string()))
    }

    fn element(&mut self, params: &GroupParams) -> Result<Element, MpcError> {
        params
            .element_from_bytes(self.take(params.element_len())?)
            .map_err(|e| MpcError::ProtocolViolation(e.to_string()))
    }
}

fn decode_diff_share(
    params: &GroupParams,
    payload: &[u8],
) -> Result<(OrderId, OrderId, usize, Scalar), MpcError> {
    let mut r = Reader::new(payload);
    Ok((r.u64()?, r.u64()?, r.u32()? as usize, r.scalar(params)?))
}

fn decode_fee_share(
    params: &GroupParams,
    payload: &[u8],
) -> Result<(usize, Scalar, Scalar), MpcError> {
    let mut r = Reader::new(payload);
    Ok((r.u32()? as usize, r.scalar(params)?, r.scalar(params)?))
}

fn decode_rate_share(
    params: &GroupParams,
    payload: &[u8],
) -> Result<(OrderId, usize, Scalar), MpcError> {
    let mut r = Reader::new(payload);
    Ok((r.u64()?, r.u32()? as usize, r.scalar(params)?))
}

fn decode_rerand_share(
    params: &GroupParams,
    payload: &[u8],
) -> Result<(OrderId, usize, Element), MpcError> {
    let mut r = Reader::new(payload);
    Ok((r.u64()?, r.u32()? as usize, r.element(params)?))
}

fn decode_shuffle_net(payload: &[u8]) -> Result<(usize, usize, Vec<SwapGate>), MpcError> {
    let mut r = Reader::new(payload);
    let party = r.u32()? as usize;
    let size = r.u32()? as usize;
    let count = r.u32()? as usize;
    let mut gates = Vec::with_capacity(count);
    for _ in 0..count {
        let a = r.u32()? as usize;
        let b = r.u32()? as usize;
        let cross = r.u8()? != 0;
        gates.push(SwapGate { a, b, cross });
    }
    Ok((party, size, gates))
}

/// (party, order, component, y, s, v, r)
type ValidationInputParts = (usize, OrderId, ValidationComponent, Scalar, Scalar, Scalar, Scalar);

fn decode_validation_input(
    params: &GroupParams,
    payload: &[u8],
) -> Result<ValidationInputParts, MpcError> {
    let mut r = Reader::new(payload);
    let party = r.u32()? as usize;
    let order = r.u64()?;
    let comp = decode_component(r.u8()?)?;
    Ok((
        party,
        order,
        comp,
        r.scalar(params)?,
        r.scalar(params)?,
        r.scalar(params)?,
        r.scalar(params)?,
    ))
}

/// (party, order, component, d, e, a, b)
type TranscriptParts = (usize, OrderId, ValidationComponent, Element, Scalar, Scalar, Scalar);

fn decode_validation_transcript(
    params: &GroupParams,
    payload: &[u8],
) -> Result<TranscriptParts, MpcError> {
    let mut r = Reader::new(payload);
    let party = r.u32()? as usize;
    let order = r.u64()?;
    let comp = decode_component(r.u8()?)?;
    Ok((
        party,
        order,
        comp,
        r.element(params)?,
        r.scalar(params)?,
        r.scalar(params)?,
        r.scalar(params)?,
    ))
}

fn decode_component(byte: u8) -> Result<ValidationComponent, MpcError> {
    match byte {
        0 => Ok(ValidationComponent::RateOpening),
        1 => Ok(ValidationComponent::RerandOpening),
        other => Err(MpcError::ProtocolViolation(format!("unknown component {other}"))),
    }
}

/// Stable mergesort driving a fallible comparator; comparison order is a
/// pure function of the input length.
fn merge_sort_by<T: Clone, E>(
    items: &mut Vec<T>,
    cmp: &mut impl FnMut(&T, &T) -> Result<std::cmp::Ordering, E>,
) -> Result<(), E> {
    if items.len() <= 1 {
        return Ok(());
    }
    let mid = items.len() / 2;
    let mut right = items.split_off(mid);
    merge_sort_by(items, cmp)?;
    merge_sort_by(&mut right, cmp)?;
    let left = std::mem::take(items);
    let mut merged = Vec::with_capacity(left.len() + right.len());
    let (mut li, mut ri) = (0, 0);
    while li < left.len() && ri < right.len() {
        if cmp(&left[li], &right[ri])? == std::cmp::Ordering::Greater {
            merged.push(right[ri].clone());
            ri += 1;
        } else {
            merged.push(left[li].clone());
            li += 1;
        }
    }
    merged.extend_from_slice(&left[li..]);
    merged.extend_from_slice(&right[ri..]);
    *items = merged;
    Ok(())
}
