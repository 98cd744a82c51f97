//! Bucketized order disclosure and pairwise settlement.
//!
//! The baseline protocol runs submission in two phases: committed rates
//! first; then, once the marketplace has derived a randomized bucket grid
//! from the block hash, each trader discloses its bucket with a proof that
//! the committed rate lies inside. Matched counterparties exchange signed,
//! encrypted openings and settle pairwise, either at their own rates with
//! the difference as marketplace fee or at the mean of their rates.

use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::group::{
    prove_opening, prove_range, verify_opening, verify_range, Commitment, GroupParams,
    OpeningProof, RangeProof, RangeProofError, Scalar,
};
use crate::matching::OrderId;
use crate::pki::{encrypt, verify_signature, Ciphertext, Keypair, Signature};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BucketError {
    #[error("bucket width must be at least 1")]
    ZeroWidth,
    #[error("rate {rate} is not in bucket {bucket}")]
    RateOutsideBucket { rate: u64, bucket: i64 },
    #[error("range proof construction failed: {0}")]
    Proof(#[from] RangeProofError),
    #[error("exchange message is malformed")]
    MalformedExchange,
}

/// Equal-width buckets at a hash-derived random offset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BucketGrid {
    pub width: u64,
    pub offset: u64,
}

/// Derive the round's grid from the current block hash; deterministic for
/// everyone, unpredictable before the block is sealed.
pub fn choose_buckets(width: u64, block_hash: &str) -> Result<BucketGrid, BucketError> {
    if width == 0 {
        return Err(BucketError::ZeroWidth);
    }
    let bytes = crate::group::hex_decode(block_hash).unwrap_or_default();
    let mut take = [0u8; 8];
    for (i, b) in bytes.iter().take(8).enumerate() {
        take[i] = *b;
    }
    let offset = u64::from_be_bytes(take) % width;
    Ok(BucketGrid { width, offset })
}

impl BucketGrid {
    /// Index of the half-open bucket [floor, floor + width) holding `rate`.
    pub fn bucket_index(&self, rate: u64) -> i64 {
        (rate as i64 - self.offset as i64).div_euclid(self.width as i64)
    }

    pub fn floor(&self, index: i64) -> i64 {
        self.offset as i64 + index * self.width as i64
    }

    /// Exclusive upper edge, the value sellers match at.
    pub fn ceiling(&self, index: i64) -> i64 {
        self.floor(index) + self.width as i64
    }
}

/// Proof that a committed rate lies inside a public bucket: the distance to
/// the floor and the distance to the last contained value are both in
/// range.
#[derive(Clone, Debug)]
pub struct BucketMembershipProof {
    pub low: RangeProof,
    pub high: RangeProof,
}

pub fn prove_bucket_membership<R: RngCore + CryptoRng>(
    params: &GroupParams,
    rate: u64,
    blinding: &Scalar,
    index: i64,
    grid: &BucketGrid,
    n_bits: u32,
    rng: &mut R,
) -> Result<BucketMembershipProof, BucketError> {
    if grid.bucket_index(rate) != index {
        return Err(BucketError::RateOutsideBucket { rate, bucket: index });
    }
    let floor = grid.floor(index);
    let low_value = (rate as i64 - floor) as u64;
    let high_value = (grid.ceiling(index) - 1 - rate as i64) as u64;
    let low = prove_range(params, low_value, blinding, n_bits, rng)?;
    let high = prove_range(params, high_value, &params.scalar_neg(blinding), n_bits, rng)?;
    Ok(BucketMembershipProof { low, high })
}

pub fn verify_bucket_membership(
    params: &GroupParams,
    commitment: &Commitment,
    index: i64,
    grid: &BucketGrid,
    proof: &BucketMembershipProof,
    n_bits: u32,
) -> bool {
    let floor = params.scalar_from_i64(grid.floor(index));
    let top = params.scalar_from_i64(grid.ceiling(index) - 1);
    let g = params.generator_g();
    // C / g^floor opens to rate - floor.
    let low_stmt = Commitment(params.div(&commitment.0, &params.pow(&g, &floor)));
    // g^(ceiling-1) / C opens to ceiling - 1 - rate.
    let high_stmt = Commitment(params.div(&params.pow(&g, &top), &commitment.0));
    verify_range(params, &low_stmt, &proof.low, n_bits)
        && verify_range(params, &high_stmt, &proof.high, n_bits)
}

// ---- counterparty settlement exchange ----

/// Signed and encrypted rate opening sent to the matched counterparty. The
/// signature stays valid on its own, so a cheated party can hand it to the
/// marketplace as deviation proof.
#[derive(Clone, Debug)]
pub struct SealedExchange {
    pub ciphertext: Ciphertext,
}

/// Decrypted, signature-checked exchange content.
#[derive(Clone, Debug)]
pub struct ExchangeOpening {
    pub rate: u64,
    pub blinding: Scalar,
    pub signature: Signature,
}

/// Evidence that a counterparty signed values that do not open its
/// on-ledger commitment.
#[derive(Clone, Debug)]
pub struct DeviationReport {
    pub buy_order: OrderId,
    pub sell_order: OrderId,
    pub claimed_rate: u64,
    pub claimed_blinding: Scalar,
    pub signature: Signature,
}

fn exchange_context(buy_order: OrderId, sell_order: OrderId) -> Vec<u8> {
    let mut ctx = b"rialto/exchange".to_vec();
    ctx.extend_from_slice(&buy_order.to_be_bytes());
    ctx.extend_from_slice(&sell_order.to_be_bytes());
    ctx
}

fn exchange_message(context: &[u8], rate: u64, blinding: &Scalar) -> Vec<u8> {
    let mut m = context.to_vec();
    m.extend_from_slice(&rate.to_be_bytes());
    m.extend_from_slice(&blinding.to_bytes());
    m
}

#[allow(clippy::too_many_arguments)]
pub fn seal_exchange<R: RngCore + CryptoRng>(
    params: &GroupParams,
    sender: &Keypair,
    recipient_pk: &crate::group::Element,
    buy_order: OrderId,
    sell_order: OrderId,
    rate: u64,
    blinding: &Scalar,
    rng: &mut R,
) -> SealedExchange {
    let context = exchange_context(buy_order, sell_order);
    let signature = sender.sign(params, &exchange_message(&context, rate, blinding), rng);
    let mut plaintext = rate.to_be_bytes().to_vec();
    plaintext.extend_from_slice(&blinding.to_bytes());
    plaintext.extend_from_slice(&signature.nonce_point.to_bytes());
    plaintext.extend_from_slice(&signature.response.to_bytes());
    SealedExchange { ciphertext: encrypt(params, recipient_pk, &plaintext, rng) }
}

/// Decrypt a counterparty message and verify its signature. Commitment
/// consistency is checked separately so the caller can distinguish a
/// garbled message from a provable deviation.
pub fn open_exchange(
    params: &GroupParams,
    receiver: &Keypair,
    sender_pk: &crate::group::Element,
    buy_order: OrderId,
    sell_order: OrderId,
    sealed: &SealedExchange,
) -> Result<ExchangeOpening, BucketError> {
    let plain = receiver
        .decrypt(params, &sealed.ciphertext)
        .map_err(|_| BucketError::MalformedExchange)?;
    let s_len = params.scalar_len();
    let e_len = params.element_len();
    if plain.len() != 8 + s_len + e_len + s_len {
        return Err(BucketError::MalformedExchange);
    }
    let rate = u64::from_be_bytes(plain[..8].try_into().unwrap());
    let blinding = params
        .scalar_from_bytes(&plain[8..8 + s_len])
        .map_err(|_| BucketError::MalformedExchange)?;
    let nonce_point = params
        .element_from_bytes(&plain[8 + s_len..8 + s_len + e_len])
        .map_err(|_| BucketError::MalformedExchange)?;
    let response = params
        .scalar_from_bytes(&plain[8 + s_len + e_len..])
        .map_err(|_| BucketError::MalformedExchange)?;
    let signature = Signature { nonce_point, response };
    let context = exchange_context(buy_order, sell_order);
    if !verify_signature(
        params,
        sender_pk,
        &exchange_message(&context, rate, &blinding),
        &signature,
    ) {
        return Err(BucketError::MalformedExchange);
    }
    Ok(ExchangeOpening { rate, blinding, signature })
}

/// Check the exchanged opening against the counterparty's on-ledger
/// commitment; a mismatch yields the deviation report to submit.
#[allow(clippy::result_large_err)]
pub fn check_opening(
    params: &GroupParams,
    opening: &ExchangeOpening,
    commitment: &Commitment,
    buy_order: OrderId,
    sell_order: OrderId,
) -> Result<(), DeviationReport> {
    if params.commit_u64(opening.rate, &opening.blinding) == *commitment {
        Ok(())
    } else {
        Err(DeviationReport {
            buy_order,
            sell_order,
            claimed_rate: opening.rate,
            claimed_blinding: opening.blinding,
            signature: opening.signature.clone(),
        })
    }
}

/// The marketplace validates a deviation report by re-verifying the
/// signature and the mismatch.
pub fn verify_deviation(
    params: &GroupParams,
    report: &DeviationReport,
    cheater_pk: &crate::group::Element,
    commitment: &Commitment,
) -> bool {
    let context = exchange_context(report.buy_order, report.sell_order);
    let message = exchange_message(&context, report.claimed_rate, &report.claimed_blinding);
    verify_signature(params, cheater_pk, &message, &report.signature)
        && params.commit_u64(report.claimed_rate, &report.claimed_blinding) != *commitment
}

// ---- settlement schemes ----

pub const FEE_PROOF_CONTEXT: &[u8] = b"rialto/bucket-fee";

/// Difference scheme: fee = buy - sell, proven to open C_buy / C_sell.
pub fn prove_fee<R: RngCore + CryptoRng>(
    params: &GroupParams,
    buy: &ExchangeView,
    sell: &ExchangeView,
    rng: &mut R,
) -> (u64, OpeningProof) {
    let fee = buy.rate - sell.rate;
    let delta = params.scalar_sub(&buy.blinding, &sell.blinding);
    let statement = fee_statement(params, &buy.commitment, &sell.commitment, fee);
    let zero = params.scalar_zero();
    let proof = prove_opening(params, &zero, &delta, &statement, FEE_PROOF_CONTEXT, rng);
    (fee, proof)
}

pub fn verify_fee(
    params: &GroupParams,
    buy_commitment: &Commitment,
    sell_commitment: &Commitment,
    fee: u64,
    proof: &OpeningProof,
) -> bool {
    let statement = fee_statement(params, buy_commitment, sell_commitment, fee);
    verify_opening(params, &statement, proof, FEE_PROOF_CONTEXT)
}

/// C_buy / C_sell / g^fee, which opens to zero iff fee is the difference.
fn fee_statement(
    params: &GroupParams,
    buy: &Commitment,
    sell: &Commitment,
    fee: u64,
) -> Commitment {
    let quotient = params.div(&buy.0, &sell.0);
    let g_fee = params.pow(&params.generator_g(), &params.scalar_from_u64(fee));
    Commitment(params.div(&quotient, &g_fee))
}

/// One side of a matched pair after the exchange: both parties know all of
/// this; the contract knows only the commitment.
#[derive(Clone, Debug)]
pub struct ExchangeView {
    pub rate: u64,
    pub blinding: Scalar,
    pub commitment: Commitment,
}

/// Mean-scheme arithmetic: settle at floor((buy + sell) / 2); an odd sum
/// leaves one unit, which goes to the marketplace so conservation stays
/// exact.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MeanSettlement {
    pub settle: u64,
    pub remainder: u64,
    pub buyer_refund: u64,
}

pub fn settle_mean_values(buy: u64, sell: u64) -> MeanSettlement {
    let sum = buy + sell;
    let remainder = sum % 2;
    let settle = (sum - remainder) / 2;
    MeanSettlement { settle, remainder, buyer_refund: buy - settle - remainder }
}

/// Contract-side commitments for the mean scheme:
/// C_settle = ((C_buy * C_sell) / g^rem)^(1/2) and
/// C_refund = C_buy / C_settle / g^rem.
pub struct MeanCommitments {
    pub settle: Commitment,
    pub refund: Commitment,
    /// Blinding of C_settle, known to both parties: (r_b + r_s) / 2.
    pub settle_blinding: Scalar,
    /// Blinding of C_refund: r_b - settle_blinding.
    pub refund_blinding: Scalar,
}

pub fn mean_commitments(
    params: &GroupParams,
    buy: &ExchangeView,
    sell: &ExchangeView,
    remainder: u64,
) -> MeanCommitments {
    let two = params.scalar_from_u64(2);
    let half = params.scalar_invert(&two).expect("2 is invertible in a prime field");
    let g_rem = params.pow(&params.generator_g(), &params.scalar_from_u64(remainder));
    let product = params.mul(&buy.commitment.0, &sell.commitment.0);
    let settle = Commitment(params.pow(&params.div(&product, &g_rem), &half));
    let refund = Commitment(params.div(&params.div(&buy.commitment.0, &settle.0), &g_rem));
    let settle_blinding =
        params.scalar_mul(&params.scalar_add(&buy.blinding, &sell.blinding), &half);
    let refund_blinding = params.scalar_sub(&buy.blinding, &settle_blinding);
    MeanCommitments { settle, refund, settle_blinding, refund_blinding }
}
