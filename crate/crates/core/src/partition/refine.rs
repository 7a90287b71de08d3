//! Weighted working graph, k-way boundary FM refinement and rebalancing.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::graph::LatticeGraph;

pub(crate) const MAX_PASSES: usize = 10;

/// CSR graph with edge weights, used at every coarsening level.
#[derive(Debug, Clone)]
pub(crate) struct WGraph {
    pub xadj: Vec<usize>,
    pub adj: Vec<u32>,
    pub ewgt: Vec<u64>,
    pub vwgt: Vec<u64>,
}

impl WGraph {
    pub fn from_lattice(g: &LatticeGraph) -> Self {
        WGraph {
            xadj: g.offsets().to_vec(),
            adj: g.adjacency().to_vec(),
            ewgt: vec![1; g.adjacency().len()],
            vwgt: g.vertex_weights().to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.vwgt.len()
    }

    pub fn edges(&self, v: usize) -> impl Iterator<Item = (usize, u64)> + '_ {
        let r = self.xadj[v]..self.xadj[v + 1];
        self.adj[r.clone()]
            .iter()
            .zip(&self.ewgt[r])
            .map(|(&u, &w)| (u as usize, w))
    }

    pub fn total_weight(&self) -> u64 {
        self.vwgt.iter().sum()
    }

    pub fn cut(&self, a: &[u32]) -> u64 {
        let mut cut = 0;
        for v in 0..self.len() {
            for (u, w) in self.edges(v) {
                if u > v && a[u] != a[v] {
                    cut += w;
                }
            }
        }
        cut
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RefineStats {
    pub initial_cut: u64,
    pub final_cut: u64,
    pub moves: usize,
    pub passes: usize,
}

/// Sparse per-part connectivity of one vertex.
struct Conn {
    weight: Vec<u64>,
    touched: Vec<u32>,
}

impl Conn {
    fn new(nparts: usize) -> Self {
        Conn {
            weight: vec![0; nparts],
            touched: Vec::new(),
        }
    }

    fn load(&mut self, g: &WGraph, a: &[u32], v: usize) {
        for &p in &self.touched {
            self.weight[p as usize] = 0;
        }
        self.touched.clear();
        for (u, w) in g.edges(v) {
            let p = a[u];
            if self.weight[p as usize] == 0 {
                self.touched.push(p);
            }
            self.weight[p as usize] += w;
        }
    }

    /// Best feasible destination for `v` and the cut reduction of moving
    /// there; `None` for interior vertices or when nothing fits.
    fn best_move(&self, from: u32, vw: u64, pw: &[u64], limit: u64) -> Option<(i64, u32)> {
        let own = self.weight[from as usize] as i64;
        let mut best: Option<(i64, u32)> = None;
        for &q in &self.touched {
            if q == from || pw[q as usize] + vw > limit {
                continue;
            }
            let gain = self.weight[q as usize] as i64 - own;
            let better = match best {
                None => true,
                Some((bg, bq)) => {
                    gain > bg || (gain == bg && (pw[q as usize], q) < (pw[bq as usize], bq))
                }
            };
            if better {
                best = Some((gain, q));
            }
        }
        best
    }
}

fn loads(g: &WGraph, a: &[u32], nparts: usize) -> (Vec<u64>, Vec<usize>) {
    let mut pw = vec![0; nparts];
    let mut count = vec![0; nparts];
    for (v, &p) in a.iter().enumerate() {
        pw[p as usize] += g.vwgt[v];
        count[p as usize] += 1;
    }
    (pw, count)
}

/// Balance target and search freedom for [`fm_refine`].
#[derive(Debug, Clone, Copy)]
pub(crate) struct Fm {
    pub cap: u64,
    /// How far a destination may exceed the pass limit mid-pass.
    pub slack: u64,
    /// Rank prefixes by (load above `cap`, cut) instead of keeping the cut
    /// from ever increasing.
    pub balance_first: bool,
}

impl Fm {
    pub fn cut(cap: u64) -> Self {
        Fm {
            cap,
            slack: 0,
            balance_first: false,
        }
    }

    pub fn balance_first(cap: u64, slack: u64) -> Self {
        Fm {
            cap,
            slack,
            balance_first: true,
        }
    }
}

/// Boundary FM with negative-gain moves and rollback to the best prefix.
/// Within a pass a destination may exceed `limit = max(cap, heaviest part at
/// pass start)` by `slack`, which lets tightly balanced parts trade vertices.
/// By default only prefixes with every part within `limit` are kept, so the
/// heaviest part never grows and the cut never increases; with
/// `balance_first` the best prefix minimizes (load above `cap`, cut, heaviest
/// part). Sources always keep a vertex.
pub(crate) fn fm_refine(
    g: &WGraph,
    a: &mut [u32],
    nparts: usize,
    fm: Fm,
    max_passes: usize,
) -> RefineStats {
    let Fm {
        cap,
        slack,
        balance_first,
    } = fm;
    let n = g.len();
    let initial_cut = g.cut(a);
    let mut stats = RefineStats {
        initial_cut,
        final_cut: initial_cut,
        ..Default::default()
    };
    if nparts < 2 || n < 2 {
        return stats;
    }
    let (mut pw, mut count) = loads(g, a, nparts);
    let mut conn = Conn::new(nparts);
    let mut locked = vec![0usize; n];
    let mut queued = vec![i64::MIN; n];
    let stall_limit = (n / 20).clamp(25, 1000);
    let mut cut = initial_cut;

    for pass in 1..=max_passes {
        stats.passes = pass;
        let start_max = *pw.iter().max().unwrap();
        let limit = cap.max(start_max);
        let reach = limit + slack;
        let mut heap = BinaryHeap::new();
        for v in 0..n {
            conn.load(g, a, v);
            if let Some((gain, _)) = conn.best_move(a[v], g.vwgt[v], &pw, reach) {
                queued[v] = gain;
                heap.push((gain, Reverse(v)));
            } else {
                queued[v] = i64::MIN;
            }
        }
        let mut moves: Vec<(usize, u32)> = Vec::new();
        let score = |cut: u64, max_load: u64| {
            let excess = if balance_first {
                max_load.saturating_sub(cap)
            } else {
                0
            };
            (excess, cut, max_load)
        };
        let mut best = (score(cut, start_max), 0usize);
        let mut since_best = 0;
        while let Some((gain, Reverse(v))) = heap.pop() {
            if locked[v] == pass || queued[v] != gain {
                continue;
            }
            let from = a[v];
            if count[from as usize] <= 1 {
                queued[v] = i64::MIN;
                continue;
            }
            conn.load(g, a, v);
            let Some((g_now, to)) = conn.best_move(from, g.vwgt[v], &pw, reach) else {
                queued[v] = i64::MIN;
                continue;
            };
            if g_now != gain {
                queued[v] = g_now;
                heap.push((g_now, Reverse(v)));
                continue;
            }
            a[v] = to;
            pw[from as usize] -= g.vwgt[v];
            pw[to as usize] += g.vwgt[v];
            count[from as usize] -= 1;
            count[to as usize] += 1;
            locked[v] = pass;
            queued[v] = i64::MIN;
            cut = (cut as i64 - gain) as u64;
            moves.push((v, from));
            let max_load = *pw.iter().max().unwrap();
            let now = score(cut, max_load);
            if (balance_first || max_load <= limit) && now < best.0 {
                best = (now, moves.len());
                since_best = 0;
            } else {
                since_best += 1;
                if since_best > stall_limit {
                    break;
                }
            }
            for (u, _) in g.edges(v) {
                if locked[u] == pass {
                    continue;
                }
                conn.load(g, a, u);
                match conn.best_move(a[u], g.vwgt[u], &pw, reach) {
                    Some((gu, _)) if gu != queued[u] => {
                        queued[u] = gu;
                        heap.push((gu, Reverse(u)));
                    }
                    Some(_) => {}
                    None => queued[u] = i64::MIN,
                }
            }
        }
        for &(v, from) in moves[best.1..].iter().rev() {
            let to = a[v];
            a[v] = from;
            pw[to as usize] -= g.vwgt[v];
            pw[from as usize] += g.vwgt[v];
            count[to as usize] -= 1;
            count[from as usize] += 1;
        }
        stats.moves += best.1;
        cut = best.0 .1;
        if best.1 == 0 {
            break;
        }
    }
    stats.final_cut = cut;
    stats
}

/// Moves vertices out of parts heavier than `cap`, preferring boundary
/// vertices with the best cut gain toward a neighbouring part and falling
/// back to the lightest part. Best effort: stops when nothing fits.
pub(crate) fn rebalance(g: &WGraph, a: &mut [u32], nparts: usize, cap: u64) {
    let (mut pw, mut count) = loads(g, a, nparts);
    let mut conn = Conn::new(nparts);
    loop {
        let (heavy, &hw) = pw
            .iter()
            .enumerate()
            .max_by_key(|&(p, w)| (*w, Reverse(p)))
            .unwrap();
        if hw <= cap || count[heavy] <= 1 {
            return;
        }
        let heavy = heavy as u32;
        // boundary candidates toward neighbouring parts that can take them
        let mut cands: Vec<(i64, usize, u32)> = Vec::new();
        for v in 0..g.len() {
            if a[v] != heavy {
                continue;
            }
            conn.load(g, a, v);
            if let Some((gain, to)) = conn.best_move(heavy, g.vwgt[v], &pw, cap) {
                cands.push((gain, v, to));
            }
        }
        cands.sort_by_key(|&(gain, v, _)| (Reverse(gain), v));
        let mut moved = false;
        for (_, v, to) in cands {
            if pw[heavy as usize] <= cap || count[heavy as usize] <= 1 {
                break;
            }
            let vw = g.vwgt[v];
            if pw[to as usize] + vw > cap {
                continue;
            }
            move_vertex(a, &mut pw, &mut count, v, vw, to);
            moved = true;
        }
        if moved {
            continue;
        }
        // nothing on the boundary fits: ship the lightest-fitting vertex
        // to the lightest part
        let (light, &lw) = pw.iter().enumerate().min_by_key(|&(p, w)| (*w, p)).unwrap();
        let pick = (0..g.len())
            .filter(|&v| a[v] == heavy && lw + g.vwgt[v] <= cap)
            .max_by_key(|&v| {
                conn.load(g, a, v);
                (
                    conn.weight[light] as i64 - conn.weight[heavy as usize] as i64,
                    Reverse(v),
                )
            });
        match pick {
            Some(v) => move_vertex(a, &mut pw, &mut count, v, g.vwgt[v], light as u32),
            None => return,
        }
    }
}

fn move_vertex(a: &mut [u32], pw: &mut [u64], count: &mut [usize], v: usize, vw: u64, to: u32) {
    let from = a[v] as usize;
    a[v] = to;
    pw[from] -= vw;
    pw[to as usize] += vw;
    count[from] -= 1;
    count[to as usize] += 1;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(w: usize, h: usize) -> WGraph {
        let mut edges = vec![];
        for y in 0..h {
            for x in 0..w {
                let v = y * w + x;
                if x + 1 < w {
                    edges.push((v, v + 1));
                }
                if y + 1 < h {
                    edges.push((v, v + w));
                }
            }
        }
        let n = w * h;
        let coords = (0..n as u32).map(|i| [i, 0, 0]).collect();
        WGraph::from_lattice(&LatticeGraph::from_edges(vec![1; n], coords, &edges).unwrap())
    }

    #[test]
    fn refinement_never_increases_cut_or_max_load() {
        let g = grid(12, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let nparts = rng.gen_range(2..6);
            let mut a: Vec<u32> = (0..g.len())
                .map(|_| rng.gen_range(0..nparts as u32))
                .collect();
            let before = g.cut(&a);
            let (pw0, _) = loads(&g, &a, nparts);
            let cap = (1.05 * g.len() as f64 / nparts as f64) as u64;
            let stats = fm_refine(&g, &mut a, nparts, Fm::cut(cap), MAX_PASSES);
            let (pw1, count) = loads(&g, &a, nparts);
            assert_eq!(stats.initial_cut, before);
            assert_eq!(stats.final_cut, g.cut(&a));
            assert!(stats.final_cut <= before);
            assert!(pw1.iter().max() <= pw0.iter().max().max(Some(&cap)));
            assert!(count.iter().all(|&c| c > 0));
        }
    }

    #[test]
    fn refinement_repairs_swapped_vertices() {
        let g = grid(8, 8);
        let mut a: Vec<u32> = (0..64).map(|v| (v % 8 >= 4) as u32).collect();
        assert_eq!(g.cut(&a), 8);
        a.swap(3 * 8 + 3, 4 * 8 + 4);
        assert!(g.cut(&a) > 8);
        fm_refine(&g, &mut a, 2, Fm::cut(33), MAX_PASSES);
        assert_eq!(g.cut(&a), 8);
    }

    #[test]
    fn slack_lets_full_parts_swap() {
        // path 0-1-2-3-4-5 split {0,2,4} | {1,3,5}: cut 5, both parts at the
        // cap, so no single move is feasible
        let g = WGraph::from_lattice(
            &LatticeGraph::from_edges(
                vec![1; 6],
                vec![[0; 3]; 6],
                &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)],
            )
            .unwrap(),
        );
        let mut a = vec![0, 1, 0, 1, 0, 1];
        fm_refine(&g, &mut a, 2, Fm::cut(3), MAX_PASSES);
        assert_eq!(g.cut(&a), 5);
        let fm = Fm {
            slack: 1,
            ..Fm::cut(3)
        };
        let stats = fm_refine(&g, &mut a, 2, fm, MAX_PASSES);
        assert_eq!(stats.final_cut, g.cut(&a));
        assert!(g.cut(&a) < 5);
        assert_eq!(loads(&g, &a, 2).0, vec![3, 3]);
    }

    #[test]
    fn balance_first_restores_the_cap() {
        let g = grid(6, 6);
        let mut a: Vec<u32> = (0..36).map(|v| (v % 6 >= 2) as u32).collect();
        fm_refine(&g, &mut a, 2, Fm::balance_first(18, 1), MAX_PASSES);
        assert_eq!(loads(&g, &a, 2).0, vec![18, 18]);
        assert_eq!(g.cut(&a), 6);
    }

    #[test]
    fn rebalance_meets_reachable_cap() {
        let g = grid(10, 10);
        let mut a = vec![0u32; 100];
        a[99] = 1;
        a[98] = 2;
        a[89] = 3;
        rebalance(&g, &mut a, 4, 25);
        let (pw, count) = loads(&g, &a, 4);
        assert!(pw.iter().all(|&w| w <= 25), "{pw:?}");
        assert!(count.iter().all(|&c| c > 0));
    }
}
