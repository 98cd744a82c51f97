//! MPC engine outputs against plaintext oracles over many random rounds.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rialto_core::group::GroupParams;
use rialto_core::matching::MatchSet;
use rialto_core::mpc::{InProcessTransport, MpcEngine, SecurityMode, ShareBundle};
use rialto_core::sharing::{split_additive, Scheme};

/// Deal additive bundles for one order; commitments are not needed by the
/// sorting/settlement/reveal paths, so identity placeholders keep this
/// cheap enough for large sweeps.
fn deal(
    engine: &mut MpcEngine,
    params: &GroupParams,
    id: u64,
    rate: u64,
    parties: usize,
    rng: &mut ChaCha20Rng,
) {
    let values =
        split_additive(params, &params.scalar_from_u64(rate), parties, rng).unwrap();
    let blindings =
        split_additive(params, &params.random_scalar(rng), parties, rng).unwrap();
    let rhos = split_additive(params, &params.random_scalar(rng), parties, rng).unwrap();
    let identity = rialto_core::group::Commitment(params.identity());
    for i in 0..parties {
        engine.deliver_bundle(
            i,
            ShareBundle {
                order_id: id,
                rate_share: values.shares[i].1,
                rate_blinding_share: blindings.shares[i].1,
                rerand_blinding_share: rhos.shares[i].1,
                account: id,
                share_commitment: identity,
                rerand_commitment: identity,
            },
        );
    }
}

#[test]
fn sorting_settlement_and_reveal_match_plaintext_over_200_rounds() {
    let params = GroupParams::ristretto();
    let mut rng = ChaCha20Rng::seed_from_u64(211);
    for round in 0..200u64 {
        let n = rng.gen_range(2..=128);
        let parties = 3;
        let mut engine = MpcEngine::new(
            params.clone(),
            Scheme::Additive,
            SecurityMode::SemiHonest,
            parties,
            round,
            Box::new(InProcessTransport::new()),
        );
        engine.begin_round(round);

        let mut rates: Vec<(u64, u64)> = Vec::new();
        let mut book = Vec::new();
        for id in 1..=n as u64 {
            let rate = rng.next_u64() % 512;
            deal(&mut engine, &params, id, rate, parties, &mut rng);
            rates.push((id, rate));
            book.push((id, 1u64));
        }

        // Sorting oracle: ascending rate, ties by id.
        let sorted = engine.sorting_mpc(&book).unwrap();
        let mut expect = rates.clone();
        expect.sort_by_key(|&(id, rate)| (rate, id));
        assert_eq!(sorted, expect.iter().map(|&(id, _)| id).collect::<Vec<_>>());

        // Pair neighbors off the sorted list so buy >= sell by construction.
        let rate_of: std::collections::HashMap<u64, u64> = rates.iter().copied().collect();
        let mut pairs = Vec::new();
        for w in sorted.chunks(2) {
            if let [sell, buy] = w {
                pairs.push((*buy, *sell));
            }
        }
        let (fee, _) = engine.settlement_mpc(&pairs).unwrap();
        let expect_fee: u64 =
            pairs.iter().map(|&(b, s)| rate_of[&b] - rate_of[&s]).sum();
        assert_eq!(fee, expect_fee);

        // Top-K oracle.
        let k = rng.gen_range(0..6);
        let matches = MatchSet { pairs: pairs.clone() };
        let revealed = engine.topk_reveal(&sorted, &matches, k).unwrap();
        let matched_buys: std::collections::HashSet<u64> =
            pairs.iter().map(|&(b, _)| b).collect();
        let expect_reveal: Vec<u64> = sorted
            .iter()
            .rev()
            .filter(|id| matched_buys.contains(id))
            .take(k)
            .map(|id| rate_of[id])
            .collect();
        assert_eq!(revealed, expect_reveal);
    }
}
