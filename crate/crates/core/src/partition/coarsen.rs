//! Heavy-edge matching coarsening.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::refine::WGraph;

const STALL_RATIO: f64 = 0.95;

/// Coarsening hierarchy, finest first. Each entry carries the map from its
/// vertices to the next coarser level; the coarsest has `None`.
pub(crate) type Levels = Vec<(WGraph, Option<Vec<u32>>)>;

/// Coarsens until at most `target` vertices remain, matching stalls, or
/// another level would leave fewer than `nparts` vertices. With `labels`,
/// only vertices sharing a label are merged.
pub(crate) fn coarsen(
    fine: WGraph,
    target: usize,
    nparts: usize,
    seed: u64,
    labels: Option<&[u32]>,
) -> Levels {
    let total = fine.total_weight();
    let max_vw = fine.vwgt.iter().copied().max().unwrap_or(0);
    let limit = ((1.5 * total as f64 / target.max(1) as f64) as u64).max(max_vw);
    let mut labels: Option<Vec<u32>> = labels.map(<[u32]>::to_vec);
    let mut levels: Levels = vec![(fine, None)];
    let mut level = 0u64;
    loop {
        let g = &levels.last().unwrap().0;
        if g.len() <= target {
            break;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(level.wrapping_mul(0x9e37_79b9)));
        let (cmap, nc) = match_heavy_edges(g, limit, labels.as_deref(), &mut rng);
        if nc < nparts || nc as f64 > STALL_RATIO * g.len() as f64 {
            break;
        }
        let coarse = contract(g, &cmap, nc);
        if let Some(l) = &labels {
            let mut cl = vec![0u32; nc];
            for (v, &c) in cmap.iter().enumerate() {
                cl[c as usize] = l[v];
            }
            labels = Some(cl);
        }
        levels.last_mut().unwrap().1 = Some(cmap);
        levels.push((coarse, None));
        level += 1;
    }
    levels
}

/// Visits vertices in a shuffled order and pairs each unmatched vertex with
/// the unmatched neighbour across its heaviest edge (lowest index on ties).
/// Coarse ids follow fine index order.
fn match_heavy_edges(
    g: &WGraph,
    limit: u64,
    labels: Option<&[u32]>,
    rng: &mut ChaCha8Rng,
) -> (Vec<u32>, usize) {
    let n = g.len();
    const NONE: u32 = u32::MAX;
    let mut mate = vec![NONE; n];
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.shuffle(rng);
    for &v in &order {
        let v = v as usize;
        if mate[v] != NONE {
            continue;
        }
        let mut best: Option<(u64, usize)> = None;
        for (u, w) in g.edges(v) {
            if mate[u] != NONE || g.vwgt[u] + g.vwgt[v] > limit {
                continue;
            }
            if labels.is_some_and(|l| l[u] != l[v]) {
                continue;
            }
            if best.is_none_or(|(bw, bu)| w > bw || (w == bw && u < bu)) {
                best = Some((w, u));
            }
        }
        match best {
            Some((_, u)) => {
                mate[v] = u as u32;
                mate[u] = v as u32;
            }
            None => mate[v] = v as u32,
        }
    }
    let mut cmap = vec![NONE; n];
    let mut nc = 0u32;
    for v in 0..n {
        if cmap[v] == NONE {
            cmap[v] = nc;
            cmap[mate[v] as usize] = nc;
            nc += 1;
        }
    }
    (cmap, nc as usize)
}

fn contract(g: &WGraph, cmap: &[u32], nc: usize) -> WGraph {
    let mut members: Vec<[u32; 2]> = vec![[u32::MAX; 2]; nc];
    for (v, &c) in cmap.iter().enumerate() {
        let m = &mut members[c as usize];
        if m[0] == u32::MAX {
            m[0] = v as u32;
        } else {
            m[1] = v as u32;
        }
    }
    let mut xadj = Vec::with_capacity(nc + 1);
    xadj.push(0);
    let mut adj = Vec::with_capacity(g.adj.len());
    let mut ewgt = Vec::with_capacity(g.adj.len());
    let mut vwgt = Vec::with_capacity(nc);
    let mut slot = vec![usize::MAX; nc];
    for (c, m) in members.iter().enumerate() {
        let start = adj.len();
        let mut w = 0;
        for &v in m.iter().filter(|&&v| v != u32::MAX) {
            let v = v as usize;
            w += g.vwgt[v];
            for (u, ew) in g.edges(v) {
                let cu = cmap[u] as usize;
                if cu == c {
                    continue;
                }
                if slot[cu] == usize::MAX || slot[cu] < start {
                    slot[cu] = adj.len();
                    adj.push(cu as u32);
                    ewgt.push(ew);
                } else {
                    ewgt[slot[cu]] += ew;
                }
            }
        }
        vwgt.push(w);
        xadj.push(adj.len());
    }
    WGraph {
        xadj,
        adj,
        ewgt,
        vwgt,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::LatticeGraph;

    fn ring(n: usize) -> WGraph {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        let coords = (0..n as u32).map(|i| [i, 0, 0]).collect();
        WGraph::from_lattice(&LatticeGraph::from_edges(vec![1; n], coords, &edges).unwrap())
    }

    #[test]
    fn coarsening_preserves_weight_and_cut_structure() {
        let levels = coarsen(ring(64), 8, 2, 3, None);
        assert!(levels.len() > 1);
        for (g, cmap) in &levels {
            assert_eq!(g.total_weight(), 64);
            // symmetric adjacency, no self loops
            for v in 0..g.len() {
                for (u, w) in g.edges(v) {
                    assert_ne!(u, v);
                    assert!(g.edges(u).any(|(x, xw)| x == v && xw == w));
                }
            }
            if let Some(cmap) = cmap {
                assert_eq!(cmap.len(), g.len());
            }
        }
        // ring edge weight total is preserved minus contracted edges
        let coarsest = &levels.last().unwrap().0;
        assert!(coarsest.len() <= 16);
    }

    #[test]
    fn labels_are_respected() {
        let labels: Vec<u32> = (0..64).map(|i| (i / 16) as u32).collect();
        let levels = coarsen(ring(64), 4, 4, 1, Some(&labels));
        let mut lab = labels.clone();
        for (_, cmap) in &levels[..levels.len() - 1] {
            let cmap = cmap.as_ref().unwrap();
            let nc = cmap.iter().max().unwrap() + 1;
            let mut next = vec![u32::MAX; nc as usize];
            for (v, &c) in cmap.iter().enumerate() {
                assert!(next[c as usize] == u32::MAX || next[c as usize] == lab[v]);
                next[c as usize] = lab[v];
            }
            lab = next;
        }
        assert!(levels.last().unwrap().0.len() >= 4);
    }

    #[test]
    fn deterministic_for_seed() {
        let a = coarsen(ring(100), 10, 2, 9, None);
        let b = coarsen(ring(100), 10, 2, 9, None);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.1, y.1);
        }
    }
}
