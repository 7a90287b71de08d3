//! Decomposition scores: edge cut, weighted load imbalance, communication
//! profile and a bulk-synchronous step-time model.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::exec::{self, Exec};
use crate::geometry::{PerKind, SiteKind};
use crate::graph::LatticeGraph;
use crate::weights::{FittedCosts, BULK_COST};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("nparts must be at least 1")]
    ZeroParts,
    #[error("vertex {vertex} has part {part} but nparts is {nparts}")]
    PartOutOfRange {
        vertex: usize,
        part: u32,
        nparts: usize,
    },
    #[error("{what} has {got} entries, expected {expected}")]
    Length {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{0} must be non-negative and finite")]
    Negative(&'static str),
    #[error("csv: {0}")]
    Csv(String),
}

fn check_assignment(assignment: &[u32], n: usize, nparts: usize) -> Result<(), MetricsError> {
    if nparts == 0 {
        return Err(MetricsError::ZeroParts);
    }
    if assignment.len() != n {
        return Err(MetricsError::Length {
            what: "assignment",
            expected: n,
            got: assignment.len(),
        });
    }
    if let Some((vertex, &part)) = assignment
        .iter()
        .enumerate()
        .find(|(_, &p)| p as usize >= nparts)
    {
        return Err(MetricsError::PartOutOfRange {
            vertex,
            part,
            nparts,
        });
    }
    Ok(())
}

/// Undirected edges whose endpoints lie in different parts.
pub fn edge_cut(
    graph: &LatticeGraph,
    assignment: &[u32],
    nparts: usize,
) -> Result<u64, MetricsError> {
    edge_cut_with(graph, assignment, nparts, Exec::default())
}

pub fn edge_cut_with(
    graph: &LatticeGraph,
    assignment: &[u32],
    nparts: usize,
    exec: Exec,
) -> Result<u64, MetricsError> {
    check_assignment(assignment, graph.len(), nparts)?;
    Ok(exec::sum_range(exec, graph.len(), |u| {
        graph
            .neighbours(u)
            .iter()
            .filter(|&&v| v as usize > u && assignment[v as usize] != assignment[u])
            .count() as u64
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadImbalance {
    /// Heaviest part over the mean part load; 1.0 is perfect balance.
    pub value: f64,
    pub part_loads: Vec<f64>,
    /// Parts with no vertices; they count as zero load.
    pub empty_parts: usize,
}

/// Max over mean of the per-part sums of `weights`.
pub fn load_imbalance(
    assignment: &[u32],
    weights: &[f64],
    nparts: usize,
) -> Result<LoadImbalance, MetricsError> {
    check_assignment(assignment, weights.len(), nparts)?;
    if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(MetricsError::Negative("weight"));
    }
    let mut loads = vec![0.0; nparts];
    let mut sizes = vec![0usize; nparts];
    for (&p, &w) in assignment.iter().zip(weights) {
        loads[p as usize] += w;
        sizes[p as usize] += 1;
    }
    let total: f64 = loads.iter().sum();
    let max = loads.iter().copied().fold(0.0, f64::max);
    let value = if total > 0.0 {
        max * nparts as f64 / total
    } else {
        1.0
    };
    Ok(LoadImbalance {
        value,
        part_loads: loads,
        empty_parts: sizes.iter().filter(|&&s| s == 0).count(),
    })
}

/// Cut links incident to a part and the number of distinct parts across them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PartComm {
    pub volume: u64,
    pub partners: u32,
}

pub fn comm_profile(
    graph: &LatticeGraph,
    assignment: &[u32],
    nparts: usize,
) -> Result<Vec<PartComm>, MetricsError> {
    comm_profile_with(graph, assignment, nparts, Exec::default())
}

pub fn comm_profile_with(
    graph: &LatticeGraph,
    assignment: &[u32],
    nparts: usize,
    exec: Exec,
) -> Result<Vec<PartComm>, MetricsError> {
    check_assignment(assignment, graph.len(), nparts)?;
    // per vertex: cut links and the foreign parts they reach
    let local = exec::map_range(exec, graph.len(), |u| {
        let p = assignment[u];
        let mut foreign: Vec<u32> = graph
            .neighbours(u)
            .iter()
            .map(|&v| assignment[v as usize])
            .filter(|&q| q != p)
            .collect();
        let cut = foreign.len() as u64;
        foreign.sort_unstable();
        foreign.dedup();
        (cut, foreign)
    });
    let mut profile = vec![PartComm::default(); nparts];
    let mut seen: Vec<Vec<u32>> = vec![Vec::new(); nparts];
    for (u, (cut, foreign)) in local.into_iter().enumerate() {
        let p = assignment[u] as usize;
        profile[p].volume += cut;
        seen[p].extend(foreign);
    }
    for (prof, s) in profile.iter_mut().zip(&mut seen) {
        s.sort_unstable();
        s.dedup();
        prof.partners = s.len() as u32;
    }
    Ok(profile)
}

/// Latency/bandwidth model for one halo exchange.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommModel {
    /// Seconds per message.
    pub alpha: f64,
    /// Seconds per byte.
    pub beta: f64,
    pub bytes_per_link: u32,
}

impl Default for CommModel {
    fn default() -> Self {
        CommModel {
            alpha: 2.0e-6,
            beta: 1.0e-9,
            bytes_per_link: 8,
        }
    }
}

impl CommModel {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(MetricsError::Negative("alpha"));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(MetricsError::Negative("beta"));
        }
        Ok(())
    }

    pub fn time(&self, comm: PartComm) -> f64 {
        comm.partners as f64 * self.alpha
            + comm.volume as f64 * self.bytes_per_link as f64 * self.beta
    }
}

/// Compute and communication time of one part in the step model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartTime {
    pub compute: f64,
    pub comm: f64,
}

/// Per-part times: `compute = per_site_time * sum(cost / 10)` over the
/// part's sites, `comm = partners * alpha + volume * bytes * beta`.
pub fn part_times(
    part_counts: &[PerKind<u64>],
    profile: &[PartComm],
    costs: &FittedCosts,
    comm: &CommModel,
    per_site_time: f64,
) -> Result<Vec<PartTime>, MetricsError> {
    if part_counts.len() != profile.len() {
        return Err(MetricsError::Length {
            what: "comm profile",
            expected: part_counts.len(),
            got: profile.len(),
        });
    }
    comm.validate()?;
    if !(per_site_time >= 0.0 && per_site_time.is_finite()) {
        return Err(MetricsError::Negative("per-site time"));
    }
    if SiteKind::ALL.iter().any(|&k| !(costs.cost(k) >= 0.0)) {
        return Err(MetricsError::Negative("cost"));
    }
    Ok(part_counts
        .iter()
        .zip(profile)
        .map(|(counts, &pc)| {
            let units: f64 = SiteKind::ALL
                .iter()
                .map(|&k| counts[k] as f64 * costs.cost(k) / BULK_COST)
                .sum();
            PartTime {
                compute: per_site_time * units,
                comm: comm.time(pc),
            }
        })
        .collect())
}

/// Predicted time of one bulk-synchronous step: the slowest part's
/// compute plus communication.
pub fn simulate_timeline(
    part_counts: &[PerKind<u64>],
    profile: &[PartComm],
    costs: &FittedCosts,
    comm: &CommModel,
    per_site_time: f64,
) -> Result<f64, MetricsError> {
    Ok(
        part_times(part_counts, profile, costs, comm, per_site_time)?
            .iter()
            .map(|t| t.compute + t.comm)
            .fold(0.0, f64::max),
    )
}

/// Site-type counts per part.
pub fn part_kind_counts(
    kinds: &[SiteKind],
    assignment: &[u32],
    nparts: usize,
) -> Result<Vec<PerKind<u64>>, MetricsError> {
    check_assignment(assignment, kinds.len(), nparts)?;
    let mut counts = vec![PerKind::splat(0u64); nparts];
    for (&k, &p) in kinds.iter().zip(assignment) {
        counts[p as usize][k] += 1;
    }
    Ok(counts)
}

/// Percentage reduction of the excess imbalance `imbalance - 1`; zero when
/// the baseline is already balanced.
pub fn imbalance_reduction(baseline: f64, improved: f64) -> f64 {
    let excess = baseline - 1.0;
    if excess <= 0.0 {
        return 0.0;
    }
    100.0 * (excess - (improved - 1.0)) / excess
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionMetrics {
    pub edge_cut: u64,
    pub part_loads: Vec<f64>,
    pub load_imbalance: f64,
    pub empty_parts: usize,
    pub comm: Vec<PartComm>,
    pub predicted_step_time: f64,
}

impl DecompositionMetrics {
    pub fn max_comm_volume(&self) -> u64 {
        self.comm.iter().map(|c| c.volume).max().unwrap_or(0)
    }

    pub fn max_partners(&self) -> u32 {
        self.comm.iter().map(|c| c.partners).max().unwrap_or(0)
    }
}

/// All scores of one partition. Loads are the fitted costs of the sites.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    graph: &LatticeGraph,
    kinds: &[SiteKind],
    assignment: &[u32],
    nparts: usize,
    costs: &FittedCosts,
    comm: &CommModel,
    per_site_time: f64,
    exec: Exec,
) -> Result<DecompositionMetrics, MetricsError> {
    if kinds.len() != graph.len() {
        return Err(MetricsError::Length {
            what: "site kinds",
            expected: graph.len(),
            got: kinds.len(),
        });
    }
    let edge_cut = edge_cut_with(graph, assignment, nparts, exec)?;
    let loads: Vec<f64> = kinds.iter().map(|&k| costs.cost(k)).collect();
    let imb = load_imbalance(assignment, &loads, nparts)?;
    let profile = comm_profile_with(graph, assignment, nparts, exec)?;
    let counts = part_kind_counts(kinds, assignment, nparts)?;
    let predicted_step_time = simulate_timeline(&counts, &profile, costs, comm, per_site_time)?;
    Ok(DecompositionMetrics {
        edge_cut,
        part_loads: imb.part_loads,
        load_imbalance: imb.value,
        empty_parts: imb.empty_parts,
        comm: profile,
        predicted_step_time,
    })
}

/// One line of the metrics CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub variant: String,
    pub nparts: usize,
    pub seed: u64,
    pub edge_cut: u64,
    pub load_imbalance: f64,
    pub max_comm_volume: u64,
    pub max_partners: u32,
    pub predicted_step_time_s: f64,
}

impl MetricsRow {
    pub fn new(variant: &str, nparts: usize, seed: u64, m: &DecompositionMetrics) -> Self {
        MetricsRow {
            variant: variant.to_string(),
            nparts,
            seed,
            edge_cut: m.edge_cut,
            load_imbalance: m.load_imbalance,
            max_comm_volume: m.max_comm_volume(),
            max_partners: m.max_partners(),
            predicted_step_time_s: m.predicted_step_time,
        }
    }
}

pub const METRICS_HEADER: [&str; 8] = [
    "variant",
    "nparts",
    "seed",
    "edge_cut",
    "load_imbalance",
    "max_comm_volume",
    "max_partners",
    "predicted_step_time_s",
];

pub fn write_metrics(rows: &[MetricsRow], w: impl Write) -> Result<(), MetricsError> {
    let mut wr = csv::Writer::from_writer(w);
    if rows.is_empty() {
        wr.write_record(METRICS_HEADER)
            .map_err(|e| MetricsError::Csv(e.to_string()))?;
    }
    for r in rows {
        wr.serialize(r)
            .map_err(|e| MetricsError::Csv(e.to_string()))?;
    }
    wr.flush().map_err(|e| MetricsError::Csv(e.to_string()))
}

/// Reads a metrics CSV, rejecting files whose header differs from
/// [`METRICS_HEADER`].
pub fn read_metrics(r: impl std::io::Read) -> Result<Vec<MetricsRow>, MetricsError> {
    let mut rd = csv::Reader::from_reader(r);
    let header = rd.headers().map_err(|e| MetricsError::Csv(e.to_string()))?;
    if header.iter().ne(METRICS_HEADER) {
        return Err(MetricsError::Csv(format!(
            "unexpected header {:?}",
            header.iter().collect::<Vec<_>>()
        )));
    }
    rd.deserialize()
        .map(|r| r.map_err(|e| MetricsError::Csv(e.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn graph(n: usize, edges: &[(usize, usize)]) -> LatticeGraph {
        let coords = (0..n as u32).map(|i| [i, 0, 0]).collect();
        LatticeGraph::from_edges(vec![1; n], coords, edges).unwrap()
    }

    fn random_graph(n: usize, m: usize, seed: u64) -> LatticeGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = vec![];
        while edges.len() < m {
            let (u, v) = (rng.gen_range(0..n), rng.gen_range(0..n));
            if u != v {
                edges.push((u, v));
            }
        }
        graph(n, &edges)
    }

    #[test]
    fn cut_trivial_cases() {
        let g = graph(2, &[(0, 1)]);
        assert_eq!(edge_cut(&g, &[0, 0], 1).unwrap(), 0);
        assert_eq!(edge_cut(&g, &[0, 1], 2).unwrap(), 1);
        assert_eq!(
            edge_cut(&g, &[0, 2], 2),
            Err(MetricsError::PartOutOfRange {
                vertex: 1,
                part: 2,
                nparts: 2
            })
        );
    }

    #[test]
    fn cut_matches_double_loop() {
        let g = random_graph(50, 120, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a: Vec<u32> = (0..50).map(|_| rng.gen_range(0..4)).collect();
        let mut brute = 0;
        for u in 0..50 {
            for v in 0..50 {
                if u < v && g.neighbours(u).contains(&(v as u32)) && a[u] != a[v] {
                    brute += 1;
                }
            }
        }
        assert_eq!(edge_cut(&g, &a, 4).unwrap(), brute);
        assert_eq!(edge_cut_with(&g, &a, 4, Exec::Sequential).unwrap(), brute);
    }

    #[test]
    fn imbalance_examples() {
        let li = load_imbalance(&[0, 1, 2], &[5.0, 5.0, 5.0], 3).unwrap();
        assert_eq!(li.value, 1.0);
        let li = load_imbalance(&[0, 1, 2], &[40.0, 40.0, 48.0], 3).unwrap();
        assert!((li.value - 1.125).abs() < 1e-15);
        let li = load_imbalance(&[0], &[10.0], 2).unwrap();
        assert_eq!(li.value, 2.0);
        assert_eq!(li.empty_parts, 1);
        assert_eq!(load_imbalance(&[], &[], 0), Err(MetricsError::ZeroParts));
    }

    #[test]
    fn comm_examples() {
        // two parts joined by three links
        let g = graph(6, &[(0, 3), (1, 4), (2, 5), (0, 1)]);
        let p = comm_profile(&g, &[0, 0, 0, 1, 1, 1], 2).unwrap();
        assert_eq!(
            p,
            vec![
                PartComm {
                    volume: 3,
                    partners: 1
                };
                2
            ]
        );
        // ring of four parts
        let g = graph(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]);
        let p = comm_profile(&g, &[0, 1, 2, 3], 4).unwrap();
        assert!(p.iter().all(|c| c.partners == 2 && c.volume == 2));
        let p = comm_profile(&g, &[0; 4], 2).unwrap();
        assert!(p.iter().all(|c| *c == PartComm::default()));
    }

    #[test]
    fn timeline_examples() {
        let costs = FittedCosts::from_raw(PerKind([1.0, 2.0, 4.0, 4.0]));
        let comm = CommModel {
            alpha: 0.5,
            beta: 0.25,
            bytes_per_link: 8,
        };
        // one part: compute only = 2 * (4 * 1 + 2 * 2) = 16
        let one = [PerKind([4, 2, 0, 0])];
        let t = simulate_timeline(&one, &[PartComm::default()], &costs, &comm, 2.0).unwrap();
        assert_eq!(t, 16.0);
        // two equal parts, volumes (3,3): 16 + 0.5 + 3 * 8 * 0.25 = 22.5
        let prof = [PartComm {
            volume: 3,
            partners: 1,
        }; 2];
        let t = simulate_timeline(&[one[0], one[0]], &prof, &costs, &comm, 2.0).unwrap();
        assert_eq!(t, 22.5);
        // free communication leaves the heaviest compute
        let free = CommModel {
            alpha: 0.0,
            beta: 0.0,
            bytes_per_link: 8,
        };
        let t =
            simulate_timeline(&[one[0], PerKind([0, 0, 1, 0])], &prof, &costs, &free, 2.0).unwrap();
        assert_eq!(t, 16.0);
    }

    #[test]
    fn reduction_examples() {
        assert!((imbalance_reduction(1.40, 1.06) - 85.0).abs() < 1e-9);
        assert_eq!(imbalance_reduction(1.3, 1.3), 0.0);
        assert!((imbalance_reduction(1.20, 1.10) - 50.0).abs() < 1e-9);
        assert_eq!(imbalance_reduction(1.0, 1.0), 0.0);
    }

    #[test]
    fn metrics_csv_roundtrip_and_header_check() {
        let row = MetricsRow {
            variant: "weights+sfc".into(),
            nparts: 16,
            seed: 3,
            edge_cut: 120,
            load_imbalance: 1.0625,
            max_comm_volume: 40,
            max_partners: 5,
            predicted_step_time_s: 0.5,
        };
        let mut buf = vec![];
        write_metrics(std::slice::from_ref(&row), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "variant,nparts,seed,edge_cut,load_imbalance,max_comm_volume,max_partners,predicted_step_time_s\n"
        ));
        assert_eq!(read_metrics(&buf[..]).unwrap(), vec![row]);
        assert!(read_metrics("a,b\n1,2\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn cut_invariant_under_relabelling(seed in 0u64..1000, shift in 1u32..4) {
            let g = random_graph(30, 60, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a: Vec<u32> = (0..30).map(|_| rng.gen_range(0..4)).collect();
            let b: Vec<u32> = a.iter().map(|p| (p + shift) % 4).collect();
            prop_assert_eq!(edge_cut(&g, &a, 4).unwrap(), edge_cut(&g, &b, 4).unwrap());
            let prof = comm_profile(&g, &a, 4).unwrap();
            let total: u64 = prof.iter().map(|c| c.volume).sum();
            prop_assert_eq!(total, 2 * edge_cut(&g, &a, 4).unwrap());
        }

        #[test]
        fn imbalance_scale_invariant(w in proptest::collection::vec(0.1f64..10.0, 12), k in 0.01f64..100.0) {
            let a: Vec<u32> = (0..12).map(|i| (i % 3) as u32).collect();
            let scaled: Vec<f64> = w.iter().map(|x| x * k).collect();
            let x = load_imbalance(&a, &w, 3).unwrap().value;
            let y = load_imbalance(&a, &scaled, 3).unwrap().value;
            prop_assert!((x - y).abs() < 1e-12 * x);
            prop_assert!(x >= 1.0 - 1e-12);
        }
    }
}
