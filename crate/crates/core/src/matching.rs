//! Marketplace matching algorithms.
//!
//! The private pipeline knows only the totally ordered book, so feasibility
//! is positional there: a buy can settle against any sell that precedes it
//! in ascending rate order. The two-pointer pass over the interleaved book
//! produces a maximum matching of that feasibility graph; the fairness swap
//! then moves matches to the most competitive buyers without changing the
//! cardinality. Plaintext baselines (price-time, bucket floors/ceilings)
//! compare values directly.

use serde::{Deserialize, Serialize};

pub type OrderId = u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Side {
    Buy,
    Sell,
}

/// One position of the sorted book. `value` carries the publicly known
/// comparison value in baseline modes and is absent in the private pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BookEntry {
    pub id: OrderId,
    pub side: Side,
    pub value: Option<i64>,
}

/// Order book sorted ascending by rate (ties resolved upstream).
#[derive(Clone, Debug, Default)]
pub struct SortedBook {
    pub entries: Vec<BookEntry>,
}

impl SortedBook {
    pub fn positions_of(&self, side: Side) -> Vec<usize> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.side == side)
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MatchSet {
    /// (buy id, sell id) pairs; every order id appears at most once.
    pub pairs: Vec<(OrderId, OrderId)>,
}

impl MatchSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains_order(&self, id: OrderId) -> bool {
        self.pairs.iter().any(|&(b, s)| b == id || s == id)
    }
}

/// Two-pointer matching over the sorted book: walk buys and sells in
/// ascending order, pairing whenever the buy sits above the sell, advancing
/// the buy pointer otherwise.
pub fn match_orders(book: &SortedBook) -> MatchSet {
    let buys = book.positions_of(Side::Buy);
    let sells = book.positions_of(Side::Sell);
    let mut pairs = Vec::new();
    let (mut bi, mut si) = (0, 0);
    while bi < buys.len() && si < sells.len() {
        if buys[bi] > sells[si] {
            pairs.push((book.entries[buys[bi]].id, book.entries[sells[si]].id));
            bi += 1;
            si += 1;
        } else {
            bi += 1;
        }
    }
    MatchSet { pairs }
}

/// Fairness swap: while an unmatched buyer outranks a matched one, promote
/// the highest unmatched buyer into the place of the highest matched buyer
/// below it. Afterwards matched buyers and sellers are re-paired in rank
/// order, which keeps every pair feasible and the buyer-to-seller
/// assignment monotone.
pub fn fair_swap(matches: &MatchSet, book: &SortedBook) -> MatchSet {
    if matches.is_empty() {
        return matches.clone();
    }
    let pos_of: std::collections::HashMap<OrderId, usize> = book
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| (e.id, i))
        .collect();

    let mut matched_buys: std::collections::BTreeSet<usize> =
        matches.pairs.iter().map(|&(b, _)| pos_of[&b]).collect();
    let mut unmatched_buys: std::collections::BTreeSet<usize> = book
        .entries
        .iter()
        .enumerate()
        .filter(|(_, e)| e.side == Side::Buy && !matches.contains_order(e.id))
        .map(|(i, _)| i)
        .collect();

    // Swap the highest unmatched buyer into the place of the highest
    // matched buyer below it; the displaced buyer rejoins the pool. Each
    // swap strictly raises the matched set, so this ends within |matches|
    // steps with the top buyers matched.
    while let Some(&candidate) = unmatched_buys.iter().next_back() {
        let Some(&displaced) = matched_buys.range(..candidate).next_back() else { break };
        matched_buys.remove(&displaced);
        matched_buys.insert(candidate);
        unmatched_buys.remove(&candidate);
        unmatched_buys.insert(displaced);
    }

    let mut matched_sells: Vec<usize> =
        matches.pairs.iter().map(|&(_, s)| pos_of[&s]).collect();
    matched_sells.sort_unstable();

    let pairs = matched_buys
        .iter()
        .zip(&matched_sells)
        .map(|(&b, &s)| (book.entries[b].id, book.entries[s].id))
        .collect();
    MatchSet { pairs }
}

/// True when higher-ranked buyers settle against sellers no lower than
/// those of lower-ranked buyers.
pub fn is_pairing_monotone(matches: &MatchSet, book: &SortedBook) -> bool {
    let pos_of: std::collections::HashMap<OrderId, usize> = book
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| (e.id, i))
        .collect();
    let mut pairs: Vec<(usize, usize)> = matches
        .pairs
        .iter()
        .map(|&(b, s)| (pos_of[&b], pos_of[&s]))
        .collect();
    pairs.sort_unstable();
    pairs.windows(2).all(|w| w[0].1 <= w[1].1)
}

/// Price-time baseline: most competitive heads first, halt at the first
/// infeasible pair. Ties go to the earlier timestamp.
pub fn price_time_match(
    buys: &[(OrderId, u64, u64)],
    sells: &[(OrderId, u64, u64)],
) -> MatchSet {
    let mut buys = buys.to_vec();
    let mut sells = sells.to_vec();
    // Buys descending by rate, sells ascending; earlier timestamp first.
    buys.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    sells.sort_by(|a, b| a.1.cmp(&b.1).then(a.2.cmp(&b.2)));
    let mut pairs = Vec::new();
    for ((bid, brate, _), (sid, srate, _)) in buys.iter().zip(&sells) {
        if brate < srate {
            break;
        }
        pairs.push((*bid, *sid));
    }
    MatchSet { pairs }
}

/// Matching over disclosed buckets: buyers count as their bucket floor,
/// sellers as their bucket ceiling (floor + width), so intra-bucket pairs
/// can never form. Input sorted ascending by bucket with the same tie rule
/// as the main book.
pub fn bucket_match(book: &SortedBook, width: u64) -> MatchSet {
    let buys = book.positions_of(Side::Buy);
    let sells = book.positions_of(Side::Sell);
    let floor = |p: usize| book.entries[p].value.expect("bucketized book carries values");
    let mut pairs = Vec::new();
    let (mut bi, mut si) = (0, 0);
    while bi < buys.len() && si < sells.len() {
        let buyer_floor = floor(buys[bi]);
        let seller_ceiling = floor(sells[si]) + width as i64;
        if buyer_floor >= seller_ceiling {
            pairs.push((book.entries[buys[bi]].id, book.entries[sells[si]].id));
            bi += 1;
            si += 1;
        } else {
            bi += 1;
        }
    }
    MatchSet { pairs }
}

/// Buyer fairness predicate: no unmatched buyer outranks a matched buyer.
pub fn is_buyer_fair(matches: &MatchSet, book: &SortedBook) -> bool {
    let matched: std::collections::HashSet<OrderId> =
        matches.pairs.iter().map(|&(b, _)| b).collect();
    let buy_positions = book.positions_of(Side::Buy);
    let mut seen_unmatched = false;
    // Walk buyers from the top; once an unmatched buyer appears, no matched
    // buyer may follow below it... i.e. scanning downward, matched buyers
    // must form a prefix.
    for &p in buy_positions.iter().rev() {
        let id = book.entries[p].id;
        if matched.contains(&id) {
            if seen_unmatched {
                return false;
            }
        } else {
            seen_unmatched = true;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn book(entries: &[(OrderId, Side)]) -> SortedBook {
        SortedBook {
            entries: entries
                .iter()
                .map(|&(id, side)| BookEntry { id, side, value: None })
                .collect(),
        }
    }

    #[test]
    fn single_crossing_pair_matches() {
        // sell at 5 sorts before buy at 10
        let b = book(&[(2, Side::Sell), (1, Side::Buy)]);
        assert_eq!(match_orders(&b).pairs, vec![(1, 2)]);
    }

    #[test]
    fn equal_rates_match_when_sell_sorts_first() {
        // Ties resolve by order id, so a sell submitted before a buy at the
        // same rate precedes it and the pair is feasible.
        let b = book(&[(1, Side::Sell), (2, Side::Buy)]);
        assert_eq!(match_orders(&b).pairs, vec![(2, 1)]);
    }

    #[test]
    fn disjoint_sides_do_not_match() {
        // All buys below all sells.
        let b = book(&[(1, Side::Buy), (2, Side::Buy), (3, Side::Sell)]);
        assert!(match_orders(&b).is_empty());
    }

    #[test]
    fn two_pointer_walks_over_infeasible_buys() {
        // buy(low) sell buy(high) sell: first buy infeasible for first sell;
        // second buy takes it, second sell stays.
        let b = book(&[(1, Side::Buy), (2, Side::Sell), (3, Side::Buy), (4, Side::Sell)]);
        assert_eq!(match_orders(&b).pairs, vec![(3, 2)]);
    }

    #[test]
    fn fair_swap_promotes_high_buyer() {
        // Two buyers, one sell below both; the pointer pass matches the low
        // buyer, the swap hands the match to the high one.
        let b = book(&[(1, Side::Sell), (2, Side::Buy), (3, Side::Buy)]);
        let m = match_orders(&b);
        assert_eq!(m.pairs, vec![(2, 1)]);
        let fair = fair_swap(&m, &b);
        assert_eq!(fair.pairs, vec![(3, 1)]);
        assert!(is_buyer_fair(&fair, &b));
    }

    #[test]
    fn fair_swap_is_fixed_point_on_fair_matching() {
        let b = book(&[(1, Side::Sell), (2, Side::Sell), (3, Side::Buy), (4, Side::Buy)]);
        let m = match_orders(&b);
        let fair = fair_swap(&m, &b);
        assert_eq!(fair, fair_swap(&fair, &b));
        assert_eq!(fair.len(), m.len());
    }

    #[test]
    fn fair_swap_keeps_cardinality_and_fairness_random_books() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(71);
        for _ in 0..100 {
            let n = rng.gen_range(1..40);
            let entries: Vec<(OrderId, Side)> = (0..n)
                .map(|i| (i as u64, if rng.gen_bool(0.5) { Side::Buy } else { Side::Sell }))
                .collect();
            let b = book(&entries);
            let m = match_orders(&b);
            let fair = fair_swap(&m, &b);
            assert_eq!(fair.len(), m.len());
            assert!(is_buyer_fair(&fair, &b));
            // Every pair stays positionally feasible.
            let pos: std::collections::HashMap<OrderId, usize> =
                b.entries.iter().enumerate().map(|(i, e)| (e.id, i)).collect();
            for &(buy, sell) in &fair.pairs {
                assert!(pos[&buy] > pos[&sell]);
            }
        }
    }

    #[test]
    fn price_time_matches_heads_until_halt() {
        // buys [10, 6], sells [5, 9]: (10,5) settles, then 6 < 9 halts.
        let buys = [(1, 10, 0), (2, 6, 1)];
        let sells = [(3, 5, 2), (4, 9, 3)];
        let m = price_time_match(&buys, &sells);
        assert_eq!(m.pairs, vec![(1, 3)]);
    }

    #[test]
    fn price_time_disjoint_and_equal_cases() {
        assert!(price_time_match(&[(1, 4, 0)], &[(2, 9, 1)]).is_empty());
        assert_eq!(price_time_match(&[(1, 7, 0)], &[(2, 7, 1)]).pairs, vec![(1, 2)]);
    }

    #[test]
    fn bucket_match_needs_strictly_lower_bucket() {
        // buyer bucket [8,12) vs seller bucket [0,4): floor 8 >= ceiling 4.
        let b = SortedBook {
            entries: vec![
                BookEntry { id: 1, side: Side::Sell, value: Some(0) },
                BookEntry { id: 2, side: Side::Buy, value: Some(8) },
            ],
        };
        assert_eq!(bucket_match(&b, 4).pairs, vec![(2, 1)]);

        // Same bucket: never matched.
        let same = SortedBook {
            entries: vec![
                BookEntry { id: 1, side: Side::Sell, value: Some(8) },
                BookEntry { id: 2, side: Side::Buy, value: Some(8) },
            ],
        };
        assert!(bucket_match(&same, 4).is_empty());
    }
}
