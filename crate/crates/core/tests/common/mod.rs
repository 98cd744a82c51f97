//! Shared test oracles, independent of the implementation paths they check.

use rialto_core::matching::{BookEntry, Side, SortedBook};

/// Hopcroft-Karp maximum bipartite matching over an explicit edge list
/// (left index, right index).
pub fn hopcroft_karp_max(edges: &[(usize, usize)], left: usize, right: usize) -> usize {
    if edges.is_empty() {
        return 0;
    }
    let mut adj = vec![Vec::new(); left];
    for &(u, v) in edges {
        adj[u].push(v);
    }
    let mut match_left = vec![usize::MAX; left];
    let mut match_right = vec![usize::MAX; right];
    let mut result = 0;
    loop {
        // BFS layering from free left vertices.
        let mut dist = vec![usize::MAX; left];
        let mut queue = std::collections::VecDeque::new();
        for u in 0..left {
            if match_left[u] == usize::MAX {
                dist[u] = 0;
                queue.push_back(u);
            }
        }
        let mut found_augmenting = false;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                match match_right[v] {
                    usize::MAX => found_augmenting = true,
                    w if dist[w] == usize::MAX => {
                        dist[w] = dist[u] + 1;
                        queue.push_back(w);
                    }
                    _ => {}
                }
            }
        }
        if !found_augmenting {
            break;
        }
        fn dfs(
            u: usize,
            adj: &[Vec<usize>],
            dist: &mut [usize],
            match_left: &mut [usize],
            match_right: &mut [usize],
        ) -> bool {
            for i in 0..adj[u].len() {
                let v = adj[u][i];
                let w = match_right[v];
                if w == usize::MAX
                    || (dist[w] == dist[u] + 1
                        && dfs(w, adj, dist, match_left, match_right))
                {
                    match_left[u] = v;
                    match_right[v] = u;
                    return true;
                }
            }
            dist[u] = usize::MAX;
            false
        }
        for u in 0..left {
            if match_left[u] == usize::MAX
                && dfs(u, &adj, &mut dist, &mut match_left, &mut match_right)
            {
                result += 1;
            }
        }
    }
    result
}

/// Maximum matching of the positional feasibility graph of a sorted book:
/// a buy is feasible against any sell earlier in the book.
pub fn positional_hk_max(book: &SortedBook) -> usize {
    let buys: Vec<usize> = book
        .entries
        .iter()
        .enumerate()
        .filter(|(_, e)| e.side == Side::Buy)
        .map(|(i, _)| i)
        .collect();
    let sells: Vec<usize> = book
        .entries
        .iter()
        .enumerate()
        .filter(|(_, e)| e.side == Side::Sell)
        .map(|(i, _)| i)
        .collect();
    let mut edges = Vec::new();
    for (bi, &bp) in buys.iter().enumerate() {
        for (si, &sp) in sells.iter().enumerate() {
            if bp > sp {
                edges.push((bi, si));
            }
        }
    }
    hopcroft_karp_max(&edges, buys.len(), sells.len())
}

/// Build a sorted book from (id, side, rate) orders using the canonical
/// ordering: ascending rate, ties by submission id.
pub fn sorted_book(orders: &[(u64, Side, u64)]) -> SortedBook {
    let mut sorted: Vec<(u64, u64, Side)> =
        orders.iter().map(|&(id, side, rate)| (rate, id, side)).collect();
    sorted.sort_unstable_by_key(|&(rate, id, _)| (rate, id));
    SortedBook {
        entries: sorted
            .into_iter()
            .map(|(rate, id, side)| BookEntry { id, side, value: Some(rate as i64) })
            .collect(),
    }
}
