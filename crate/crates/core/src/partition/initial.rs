//! Greedy graph growing on the coarsest graph.

use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::refine::{fm_refine, rebalance, Fm, WGraph, MAX_PASSES};

/// Best of several seeded growing trials, each rebalanced and refined,
/// ranked by (fits `cap`, edge cut, heaviest part).
pub(crate) fn initial_partition(g: &WGraph, nparts: usize, cap: u64, seed: u64) -> Vec<u32> {
    let trials = if g.len() <= 64 { 4 * g.len().max(8) } else { 8 };
    // the coarsest graph is small: passes may overshoot the cap by one vertex
    // so exactly balanced parts can swap, and may trade cut for balance
    let slack = g.vwgt.iter().copied().max().unwrap_or(0);
    let mut best: Option<((bool, u64, u64), Vec<u32>)> = None;
    for t in 0..trials as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ t.wrapping_mul(0x2545_f491_4f6c_dd1d));
        let mut a = grow(g, nparts, &mut rng);
        rebalance(g, &mut a, nparts, cap);
        fm_refine(g, &mut a, nparts, Fm::balance_first(cap, slack), MAX_PASSES);
        let mut pw = vec![0u64; nparts];
        for (v, &p) in a.iter().enumerate() {
            pw[p as usize] += g.vwgt[v];
        }
        let max = *pw.iter().max().unwrap();
        let key = (max > cap, g.cut(&a), max);
        if best.as_ref().is_none_or(|(k, _)| key < *k) {
            best = Some((key, a));
        }
    }
    best.unwrap().1
}

/// Grows parts one at a time from random seeds, always absorbing the
/// frontier vertex with the largest `2 * internal - total` edge weight that
/// does not overshoot the target. Every part gets at least one vertex; the
/// last takes the remainder.
fn grow(g: &WGraph, nparts: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
    const FREE: u32 = u32::MAX;
    let n = g.len();
    let degw: Vec<i64> = (0..n)
        .map(|v| g.edges(v).map(|(_, w)| w as i64).sum())
        .collect();
    let mut a = vec![FREE; n];
    let mut free = n;
    let mut remaining: u64 = g.total_weight();
    let mut conn = vec![0i64; n];
    let mut touched: Vec<usize> = Vec::new();
    for p in 0..nparts as u32 - 1 {
        let target = remaining / (nparts as u64 - p as u64);
        let reserve = nparts - p as usize - 1;
        for &v in &touched {
            conn[v] = 0;
        }
        touched.clear();
        let mut heap: BinaryHeap<(i64, u32, usize)> = BinaryHeap::new();
        let mut pw = 0u64;
        let mut size = 0usize;
        let mut skipped = false;
        while pw < target && free > reserve {
            let v = match pop_valid(&mut heap, &a, &conn, &degw) {
                Some(v) => v,
                None if !skipped => random_free(&a, rng),
                None => break,
            };
            let vw = g.vwgt[v];
            // overshooting is fine only when it lands strictly closer to the target
            if size > 0 && pw + vw > target && pw + vw - target >= target - pw {
                skipped = true;
                continue;
            }
            a[v] = p;
            pw += vw;
            size += 1;
            free -= 1;
            for (u, w) in g.edges(v) {
                if a[u] == FREE {
                    if conn[u] == 0 {
                        touched.push(u);
                    }
                    conn[u] += w as i64;
                    // random tie-break so trials from one seed vertex differ
                    heap.push((2 * conn[u] - degw[u], rng.gen(), u));
                }
            }
        }
        remaining -= pw;
    }
    let last = nparts as u32 - 1;
    for x in a.iter_mut().filter(|x| **x == FREE) {
        *x = last;
    }
    a
}

fn pop_valid(
    heap: &mut BinaryHeap<(i64, u32, usize)>,
    a: &[u32],
    conn: &[i64],
    degw: &[i64],
) -> Option<usize> {
    while let Some((gain, _, v)) = heap.pop() {
        if a[v] == u32::MAX && gain == 2 * conn[v] - degw[v] {
            return Some(v);
        }
    }
    None
}

fn random_free(a: &[u32], rng: &mut ChaCha8Rng) -> usize {
    let n = a.len();
    let start = rng.gen_range(0..n);
    (0..n)
        .map(|i| (start + i) % n)
        .find(|&v| a[v] == u32::MAX)
        .expect("a free vertex remains")
}
