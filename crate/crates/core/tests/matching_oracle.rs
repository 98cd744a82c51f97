//! Matching algorithms against the independent maximum-matching oracle.

mod common;

use common::{hopcroft_karp_max, positional_hk_max, sorted_book};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rialto_core::matching::{
    bucket_match, fair_swap, is_buyer_fair, is_pairing_monotone, match_orders, BookEntry,
    Side, SortedBook,
};

fn random_orders(rng: &mut ChaCha20Rng, n: usize, rates: u64) -> Vec<(u64, Side, u64)> {
    (0..n)
        .map(|i| {
            let side = if rng.gen_bool(0.5) { Side::Buy } else { Side::Sell };
            (i as u64, side, rng.gen_range(0..rates))
        })
        .collect()
}

#[test]
fn match_orders_is_maximum_on_random_books() {
    let mut rng = ChaCha20Rng::seed_from_u64(201);
    for _ in 0..100 {
        let n = rng.gen_range(1..=60);
        let book = sorted_book(&random_orders(&mut rng, n, 40));
        assert_eq!(match_orders(&book).len(), positional_hk_max(&book));
    }
}

#[test]
fn fair_swap_matches_top_buyers_exactly() {
    // Argrank form of fairness: the matched buyer positions are exactly the
    // top-|M| buyer positions, and the re-pairing is monotone.
    let mut rng = ChaCha20Rng::seed_from_u64(202);
    for _ in 0..100 {
        let n = rng.gen_range(1..=60);
        let book = sorted_book(&random_orders(&mut rng, n, 20));
        let matches = match_orders(&book);
        let fair = fair_swap(&matches, &book);
        assert_eq!(fair.len(), matches.len());
        assert!(is_buyer_fair(&fair, &book));
        assert!(is_pairing_monotone(&fair, &book));

        let buy_positions: Vec<usize> = book
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.side == Side::Buy)
            .map(|(i, _)| i)
            .collect();
        let matched: std::collections::BTreeSet<usize> = fair
            .pairs
            .iter()
            .map(|&(b, _)| book.entries.iter().position(|e| e.id == b).unwrap())
            .collect();
        let top: std::collections::BTreeSet<usize> = buy_positions
            .iter()
            .rev()
            .take(fair.len())
            .copied()
            .collect();
        assert_eq!(matched, top);
    }
}

#[test]
fn bucket_match_is_maximum_on_bucket_feasibility_graph() {
    let mut rng = ChaCha20Rng::seed_from_u64(203);
    for _ in 0..200 {
        let width = *[1u64, 2, 4, 8].get(rng.gen_range(0..4)).unwrap();
        let n = rng.gen_range(1..=40);
        // Orders carry bucket floors directly.
        let mut entries: Vec<(i64, u64, Side)> = (0..n)
            .map(|i| {
                let side = if rng.gen_bool(0.5) { Side::Buy } else { Side::Sell };
                let floor = rng.gen_range(0..10) * width as i64;
                (floor, i as u64, side)
            })
            .collect();
        entries.sort_unstable_by_key(|&(floor, id, _)| (floor, id));
        let book = SortedBook {
            entries: entries
                .iter()
                .map(|&(floor, id, side)| BookEntry { id, side, value: Some(floor) })
                .collect(),
        };
        let got = bucket_match(&book, width).len();

        let buys: Vec<i64> = entries
            .iter()
            .filter(|(_, _, s)| *s == Side::Buy)
            .map(|&(f, _, _)| f)
            .collect();
        let sells: Vec<i64> = entries
            .iter()
            .filter(|(_, _, s)| *s == Side::Sell)
            .map(|&(f, _, _)| f)
            .collect();
        let mut edges = Vec::new();
        for (bi, &bf) in buys.iter().enumerate() {
            for (si, &sf) in sells.iter().enumerate() {
                if bf >= sf + width as i64 {
                    edges.push((bi, si));
                }
            }
        }
        assert_eq!(got, hopcroft_karp_max(&edges, buys.len(), sells.len()));
    }
}

#[test]
fn bucket_width_one_equals_positional_matching_without_cross_ties() {
    // With buyer rates even and seller rates odd there are no cross-side
    // ties, and width-1 buckets carry the exact rates: the bucketized
    // matching coincides with the positional one pair for pair.
    let mut rng = ChaCha20Rng::seed_from_u64(204);
    for _ in 0..100 {
        let n = rng.gen_range(1..=40);
        let orders: Vec<(u64, Side, u64)> = (0..n)
            .map(|i| {
                if rng.gen_bool(0.5) {
                    (i as u64, Side::Buy, 2 * rng.gen_range(0..20))
                } else {
                    (i as u64, Side::Sell, 2 * rng.gen_range(0..20) + 1)
                }
            })
            .collect();
        let book = sorted_book(&orders);
        let positional = fair_swap(&match_orders(&book), &book);
        let bucketed = fair_swap(&bucket_match(&book, 1), &book);
        assert_eq!(positional, bucketed);
    }
}

#[test]
fn wider_buckets_never_match_more() {
    let mut rng = ChaCha20Rng::seed_from_u64(205);
    for _ in 0..100 {
        let n = rng.gen_range(2..=40);
        let orders = random_orders(&mut rng, n, 30);
        let book = sorted_book(&orders);
        let exact = match_orders(&book).len();
        for width in [2u64, 4, 8] {
            // Re-bucket the same orders.
            let mut entries: Vec<(i64, u64, Side)> = orders
                .iter()
                .map(|&(id, side, rate)| {
                    ((rate as i64).div_euclid(width as i64) * width as i64, id, side)
                })
                .collect();
            entries.sort_unstable_by_key(|&(floor, id, _)| (floor, id));
            let bucket_book = SortedBook {
                entries: entries
                    .iter()
                    .map(|&(floor, id, side)| BookEntry { id, side, value: Some(floor) })
                    .collect(),
            };
            assert!(bucket_match(&bucket_book, width).len() <= exact);
        }
    }
}
