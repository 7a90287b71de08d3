//! k-way partitioning of the site graph.
//!
//! Three variants: the block-seeded baseline, multilevel k-way (heavy-edge
//! coarsening, greedy graph growing, boundary FM refinement) and the
//! geometric variant that seeds from Morton-ordered segments before the same
//! multilevel refinement.

mod block;
mod coarsen;
mod initial;
mod refine;

pub use block::block_seed_partition;
pub use refine::RefineStats;

use std::io::Write;

use crate::graph::LatticeGraph;
use crate::sfc::morton_key;

pub const DEFAULT_TOLERANCE: f64 = 1.001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    BlockSeed,
    KWay,
    GeomKWay,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionConfig {
    pub nparts: usize,
    /// Permitted ratio of the heaviest part to the mean part weight.
    pub tolerance: f64,
    pub seed: u64,
    pub variant: Variant,
    /// Stop coarsening at this many vertices; defaults to `30 * nparts`.
    pub coarsen_target: Option<usize>,
}

impl PartitionConfig {
    pub fn new(nparts: usize, variant: Variant) -> Self {
        PartitionConfig {
            nparts,
            tolerance: DEFAULT_TOLERANCE,
            seed: 0,
            variant,
            coarsen_target: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn coarsen_target(&self) -> usize {
        self.coarsen_target
            .unwrap_or(30 * self.nparts)
            .max(self.nparts)
    }

    fn validate(&self, n: usize) -> Result<(), PartitionError> {
        if self.nparts == 0 {
            return Err(PartitionError::ZeroParts);
        }
        if !(self.tolerance > 1.0 && self.tolerance <= 2.0) {
            return Err(PartitionError::InvalidTolerance(self.tolerance));
        }
        if self.nparts > n {
            return Err(PartitionError::TooManyParts {
                nparts: self.nparts,
                vertices: n,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub assignment: Vec<u32>,
    pub nparts: usize,
    pub config: PartitionConfig,
    /// The heaviest part exceeds `tolerance * mean`: the tolerance could not
    /// be met (a vertex heavier than the cap, or integer granularity).
    pub balance_relaxed: bool,
}

impl Partition {
    pub fn part_weights(&self, weights: &[u64]) -> Vec<u64> {
        part_weights(&self.assignment, weights, self.nparts)
    }

    /// Writes `site_index,part` rows.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "site_index,part")?;
        for (i, p) in self.assignment.iter().enumerate() {
            writeln!(w, "{i},{p}")?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PartitionError {
    #[error("nparts must be at least 1")]
    ZeroParts,
    #[error("{nparts} parts requested for {vertices} vertices")]
    TooManyParts { nparts: usize, vertices: usize },
    #[error("tolerance {0} outside (1, 2]")]
    InvalidTolerance(f64),
    #[error("{nparts} parts requested but only {blocks} non-empty blocks")]
    InfeasibleSeed { nparts: usize, blocks: usize },
    #[error("weight vector has {got} entries for {expected} sites")]
    WeightLength { expected: usize, got: usize },
    #[error("variant {0:?} needs the geometry; use block_seed_partition")]
    NeedsGeometry(Variant),
}

pub fn part_weights(assignment: &[u32], weights: &[u64], nparts: usize) -> Vec<u64> {
    let mut pw = vec![0u64; nparts];
    for (&p, &w) in assignment.iter().zip(weights) {
        pw[p as usize] += w;
    }
    pw
}

#[cfg(test)]
/// Undirected edges whose endpoints lie in different parts.
pub(crate) fn cut_of(graph: &LatticeGraph, assignment: &[u32]) -> u64 {
    let mut cut = 0;
    for u in 0..graph.len() {
        for &v in graph.neighbours(u) {
            if (v as usize) > u && assignment[u] != assignment[v as usize] {
                cut += 1;
            }
        }
    }
    cut
}

/// Dispatches on `cfg.variant` for the graph-based variants.
pub fn partition_graph(
    graph: &LatticeGraph,
    cfg: &PartitionConfig,
) -> Result<Partition, PartitionError> {
    match cfg.variant {
        Variant::KWay => partition_kway(graph, cfg),
        Variant::GeomKWay => partition_geom_kway(graph, cfg),
        Variant::BlockSeed => Err(PartitionError::NeedsGeometry(Variant::BlockSeed)),
    }
}

fn trivial(n: usize, cfg: &PartitionConfig) -> Partition {
    Partition {
        assignment: vec![0; n],
        nparts: 1,
        config: *cfg,
        balance_relaxed: false,
    }
}

/// Multilevel k-way partition minimizing edge cut under the balance cap.
pub fn partition_kway(
    graph: &LatticeGraph,
    cfg: &PartitionConfig,
) -> Result<Partition, PartitionError> {
    cfg.validate(graph.len())?;
    if cfg.nparts == 1 {
        return Ok(trivial(graph.len(), cfg));
    }
    let fine = refine::WGraph::from_lattice(graph);
    let levels = coarsen::coarsen(fine, cfg.coarsen_target(), cfg.nparts, cfg.seed, None);
    let coarsest = &levels.last().unwrap().0;
    let caps = Caps::new(graph, cfg);
    let initial = initial::initial_partition(coarsest, cfg.nparts, caps.soft, cfg.seed);
    Ok(uncoarsen(graph, &levels, initial, cfg, caps))
}

/// Vertices ordered by Morton key of their coordinates and cut into
/// contiguous weight-balanced segments, then refined like [`partition_kway`].
pub fn partition_geom_kway(
    graph: &LatticeGraph,
    cfg: &PartitionConfig,
) -> Result<Partition, PartitionError> {
    cfg.validate(graph.len())?;
    if cfg.nparts == 1 {
        return Ok(trivial(graph.len(), cfg));
    }
    let seeded = morton_segments(graph, cfg.nparts);
    let fine = refine::WGraph::from_lattice(graph);
    let levels = coarsen::coarsen(
        fine,
        cfg.coarsen_target(),
        cfg.nparts,
        cfg.seed,
        Some(&seeded),
    );
    // every coarse vertex lies inside one segment, so the seed projects up
    let mut assignment = seeded;
    for (_, cmap) in &levels[..levels.len() - 1] {
        let cmap = cmap.as_ref().unwrap();
        let ncoarse = cmap.iter().map(|&c| c as usize + 1).max().unwrap_or(0);
        let mut coarse = vec![0u32; ncoarse];
        for (v, &c) in cmap.iter().enumerate() {
            coarse[c as usize] = assignment[v];
        }
        assignment = coarse;
    }
    let caps = Caps::new(graph, cfg);
    Ok(uncoarsen(graph, &levels, assignment, cfg, caps))
}

/// Contiguous segments of the Morton order: a vertex goes to the part in
/// which the midpoint of its weight interval falls.
pub(crate) fn morton_segments(graph: &LatticeGraph, nparts: usize) -> Vec<u32> {
    let mut order: Vec<usize> = (0..graph.len()).collect();
    order.sort_by_key(|&i| (morton_key(graph.coords()[i]), i));
    let weights: Vec<u64> = order.iter().map(|&i| graph.vertex_weights()[i]).collect();
    let parts = segment_parts(&weights, nparts);
    let mut assignment = vec![0u32; graph.len()];
    for (&v, p) in order.iter().zip(parts) {
        assignment[v] = p;
    }
    assignment
}

/// Splits a sequence of weights into `nparts` contiguous non-empty runs,
/// placing each item by the midpoint of its cumulative-weight interval.
pub(crate) fn segment_parts(weights: &[u64], nparts: usize) -> Vec<u32> {
    let total: u64 = weights.iter().sum();
    let n = weights.len();
    let mut out = Vec::with_capacity(n);
    let mut before = 0u64;
    let mut prev = 0usize;
    for (i, &w) in weights.iter().enumerate() {
        // midpoint * nparts / total, in integers: (2*before + w) * nparts / (2*total)
        let ideal =
            ((2 * before + w) as u128 * nparts as u128 / (2 * total.max(1)) as u128) as usize;
        let remaining = n - i;
        let lowest = nparts.saturating_sub(remaining);
        let (lo, hi) = if i == 0 { (0, 0) } else { (prev, prev + 1) };
        let p = ideal.clamp(lo.max(lowest), hi.min(nparts - 1));
        out.push(p as u32);
        prev = p;
        before += w;
    }
    out
}

#[derive(Debug, Clone, Copy)]
struct Caps {
    /// `floor(tolerance * total / nparts)`.
    soft: u64,
    /// `floor(tolerance * total / nparts + max vertex weight)`, always reachable.
    hard: u64,
    exact: f64,
}

impl Caps {
    fn new(graph: &LatticeGraph, cfg: &PartitionConfig) -> Self {
        let exact = cfg.tolerance * graph.total_weight() as f64 / cfg.nparts as f64;
        Caps {
            soft: exact.floor() as u64,
            hard: (exact + graph.max_vertex_weight() as f64).floor() as u64,
            exact,
        }
    }
}

fn uncoarsen(
    graph: &LatticeGraph,
    levels: &[(refine::WGraph, Option<Vec<u32>>)],
    coarse_assignment: Vec<u32>,
    cfg: &PartitionConfig,
    caps: Caps,
) -> Partition {
    let nparts = cfg.nparts;
    let mut assignment = coarse_assignment;
    for depth in (0..levels.len()).rev() {
        let (g, _) = &levels[depth];
        if depth + 1 < levels.len() {
            let cmap = levels[depth].1.as_ref().unwrap();
            assignment = cmap.iter().map(|&c| assignment[c as usize]).collect();
        }
        refine::rebalance(g, &mut assignment, nparts, caps.soft);
        refine::fm_refine(
            g,
            &mut assignment,
            nparts,
            refine::Fm::cut(caps.soft),
            refine::MAX_PASSES,
        );
    }
    let fine = &levels[0].0;
    refine::rebalance(fine, &mut assignment, nparts, caps.hard);
    let max = part_weights(&assignment, graph.vertex_weights(), nparts)
        .into_iter()
        .max()
        .unwrap_or(0);
    Partition {
        assignment,
        nparts,
        config: *cfg,
        balance_relaxed: max as f64 > caps.exact,
    }
}

/// One round of boundary FM refinement on an existing assignment under the
/// cap `floor(tolerance * total / nparts)`. Never increases the edge cut.
pub fn refine_partition(
    graph: &LatticeGraph,
    assignment: &mut [u32],
    nparts: usize,
    tolerance: f64,
) -> RefineStats {
    let g = refine::WGraph::from_lattice(graph);
    let cap = (tolerance * graph.total_weight() as f64 / nparts as f64).floor() as u64;
    refine::fm_refine(&g, assignment, nparts, refine::Fm::cut(cap), 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> LatticeGraph {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        let coords = (0..n as u32).map(|i| [i, 0, 0]).collect();
        LatticeGraph::from_edges(vec![1; n], coords, &edges).unwrap()
    }

    fn cliques(k: usize, size: usize) -> LatticeGraph {
        let mut edges = vec![];
        for c in 0..k {
            for i in 0..size {
                for j in i + 1..size {
                    edges.push((c * size + i, c * size + j));
                }
            }
        }
        let n = k * size;
        let coords = (0..n as u32).map(|i| [i, 0, 0]).collect();
        LatticeGraph::from_edges(vec![1; n], coords, &edges).unwrap()
    }

    #[test]
    fn disjoint_cliques_split_cleanly() {
        let g = cliques(8, 10);
        for variant in [Variant::KWay, Variant::GeomKWay] {
            let p = partition_graph(&g, &PartitionConfig::new(8, variant)).unwrap();
            assert_eq!(cut_of(&g, &p.assignment), 0, "{variant:?}");
            let pw = p.part_weights(g.vertex_weights());
            assert!(pw.iter().all(|&w| w == 10), "{pw:?}");
        }
    }

    #[test]
    fn single_part() {
        let g = path(5);
        let p = partition_kway(&g, &PartitionConfig::new(1, Variant::KWay)).unwrap();
        assert_eq!(p.assignment, vec![0; 5]);
        let p = partition_geom_kway(&g, &PartitionConfig::new(1, Variant::GeomKWay)).unwrap();
        assert_eq!(p.assignment, vec![0; 5]);
    }

    #[test]
    fn path_of_four_bisects_in_the_middle() {
        // exhaustive oracle over 2^4 assignments with parts of size 2
        let g = path(4);
        let mut best = u64::MAX;
        for mask in 0u32..16 {
            let a: Vec<u32> = (0..4).map(|i| (mask >> i) & 1).collect();
            if a.iter().sum::<u32>() == 2 {
                best = best.min(cut_of(&g, &a));
            }
        }
        assert_eq!(best, 1);
        let p = partition_kway(&g, &PartitionConfig::new(2, Variant::KWay)).unwrap();
        assert_eq!(cut_of(&g, &p.assignment), best);
        assert_eq!(p.part_weights(g.vertex_weights()), vec![2, 2]);
    }

    #[test]
    fn collinear_geometric_split_at_weight_median() {
        let g = path(10);
        let p = partition_geom_kway(&g, &PartitionConfig::new(2, Variant::GeomKWay)).unwrap();
        // prefix-sum oracle: first five vertices carry half the weight
        let first = p.assignment[0];
        for i in 0..10 {
            assert_eq!(p.assignment[i] == first, i < 5);
        }
    }

    #[test]
    fn segment_parts_oracle() {
        assert_eq!(segment_parts(&[1; 4], 2), vec![0, 0, 1, 1]);
        assert_eq!(segment_parts(&[1, 1, 1, 5], 2), vec![0, 0, 0, 1]);
        assert_eq!(segment_parts(&[9, 1, 1], 3), vec![0, 1, 2]);
        assert_eq!(segment_parts(&[1; 3], 3), vec![0, 1, 2]);
    }

    #[test]
    fn config_errors() {
        let g = path(3);
        assert_eq!(
            partition_kway(&g, &PartitionConfig::new(4, Variant::KWay)),
            Err(PartitionError::TooManyParts {
                nparts: 4,
                vertices: 3
            })
        );
        assert_eq!(
            partition_kway(&g, &PartitionConfig::new(0, Variant::KWay)),
            Err(PartitionError::ZeroParts)
        );
        assert!(matches!(
            partition_kway(
                &g,
                &PartitionConfig::new(2, Variant::KWay).with_tolerance(1.0)
            ),
            Err(PartitionError::InvalidTolerance(_))
        ));
    }

    #[test]
    fn heavy_vertex_relaxes_balance() {
        let edges: Vec<_> = (1..6).map(|i| (0, i)).collect();
        let coords = (0..6u32).map(|i| [i, 0, 0]).collect();
        let g = LatticeGraph::from_edges(vec![20, 1, 1, 1, 1, 1], coords, &edges).unwrap();
        let p = partition_kway(&g, &PartitionConfig::new(2, Variant::KWay)).unwrap();
        assert!(p.balance_relaxed);
        let pw = p.part_weights(g.vertex_weights());
        assert!(pw.iter().all(|&w| w > 0));
        assert!(*pw.iter().max().unwrap() as f64 <= 1.001 * 25.0 / 2.0 + 20.0);
    }

    #[test]
    fn partition_csv() {
        let g = path(3);
        let p = partition_kway(&g, &PartitionConfig::new(1, Variant::KWay)).unwrap();
        let mut buf = vec![];
        p.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "site_index,part\n0,0\n1,0\n2,0\n"
        );
    }
}
