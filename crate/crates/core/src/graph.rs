//! Site adjacency graph over D3Q19 links.

use crate::exec::{self, Exec};
use crate::geometry::Geometry;
use crate::lattice::{link_velocity, LINKS};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GraphError {
    #[error("weight vector has {got} entries for {expected} sites")]
    WeightLength { expected: usize, got: usize },
    #[error("vertex weights must be positive (vertex {0})")]
    ZeroWeight(usize),
    #[error("edge ({0}, {1}) out of range or a self-loop")]
    BadEdge(usize, usize),
}

/// CSR adjacency with integer vertex weights and lattice coordinates. Edges
/// are undirected and stored in both directions; edge weights are 1.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeGraph {
    xadj: Vec<usize>,
    adjncy: Vec<u32>,
    vwgt: Vec<u64>,
    coords: Vec<[u32; 3]>,
}

impl LatticeGraph {
    /// Builds a graph from an undirected edge list; duplicates are merged.
    pub fn from_edges(
        weights: Vec<u64>,
        coords: Vec<[u32; 3]>,
        edges: &[(usize, usize)],
    ) -> Result<Self, GraphError> {
        let n = weights.len();
        if coords.len() != n {
            return Err(GraphError::WeightLength {
                expected: coords.len(),
                got: n,
            });
        }
        if let Some(i) = weights.iter().position(|&w| w == 0) {
            return Err(GraphError::ZeroWeight(i));
        }
        let mut lists = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u >= n || v >= n || u == v {
                return Err(GraphError::BadEdge(u, v));
            }
            lists[u].push(v as u32);
            lists[v].push(u as u32);
        }
        Ok(Self::from_lists(lists, weights, coords))
    }

    fn from_lists(mut lists: Vec<Vec<u32>>, vwgt: Vec<u64>, coords: Vec<[u32; 3]>) -> Self {
        let mut xadj = Vec::with_capacity(lists.len() + 1);
        xadj.push(0);
        let mut adjncy = Vec::new();
        for l in &mut lists {
            l.sort_unstable();
            l.dedup();
            adjncy.extend_from_slice(l);
            xadj.push(adjncy.len());
        }
        LatticeGraph {
            xadj,
            adjncy,
            vwgt,
            coords,
        }
    }

    pub fn len(&self) -> usize {
        self.vwgt.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vwgt.is_empty()
    }

    pub fn neighbours(&self, u: usize) -> &[u32] {
        &self.adjncy[self.xadj[u]..self.xadj[u + 1]]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.xadj[u + 1] - self.xadj[u]
    }

    pub fn offsets(&self) -> &[usize] {
        &self.xadj
    }

    pub fn adjacency(&self) -> &[u32] {
        &self.adjncy
    }

    pub fn vertex_weights(&self) -> &[u64] {
        &self.vwgt
    }

    pub fn coords(&self) -> &[[u32; 3]] {
        &self.coords
    }

    pub fn total_weight(&self) -> u64 {
        self.vwgt.iter().sum()
    }

    pub fn max_vertex_weight(&self) -> u64 {
        self.vwgt.iter().copied().max().unwrap_or(0)
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.adjncy.len() / 2
    }

    /// Same structure with different vertex weights.
    pub fn with_weights(&self, weights: Vec<u64>) -> Result<Self, GraphError> {
        if weights.len() != self.len() {
            return Err(GraphError::WeightLength {
                expected: self.len(),
                got: weights.len(),
            });
        }
        if let Some(i) = weights.iter().position(|&w| w == 0) {
            return Err(GraphError::ZeroWeight(i));
        }
        Ok(LatticeGraph {
            vwgt: weights,
            ..self.clone()
        })
    }
}

/// Graph over fluid sites with an edge for every D3Q19 link between two
/// fluid sites (periodic axes wrap). Vertex `i` is site `i`.
pub fn build_graph(g: &Geometry, weights: &[u64]) -> Result<LatticeGraph, GraphError> {
    build_graph_with(g, weights, Exec::default())
}

pub fn build_graph_with(
    g: &Geometry,
    weights: &[u64],
    exec: Exec,
) -> Result<LatticeGraph, GraphError> {
    if weights.len() != g.len() {
        return Err(GraphError::WeightLength {
            expected: g.len(),
            got: weights.len(),
        });
    }
    if let Some(i) = weights.iter().position(|&w| w == 0) {
        return Err(GraphError::ZeroWeight(i));
    }
    let index = g.index();
    let lists = exec::map_range(exec, g.len(), |i| {
        let c = g.sites()[i].coord;
        (0..LINKS)
            .filter_map(|k| index.neighbour(c, link_velocity(k)))
            .filter(|&j| j != i)
            .map(|j| j as u32)
            .collect::<Vec<u32>>()
    });
    let coords = g.sites().iter().map(|s| s.coord).collect();
    Ok(LatticeGraph::from_lists(lists, weights.to_vec(), coords))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate_bifurcation, generate_box, BifurcationSpec};

    #[test]
    fn pair_has_one_edge() {
        let g = Geometry::from_voxels([2, 1, 1], &[[0, 0, 0], [1, 0, 0]], [false; 3]).unwrap();
        let gr = build_graph(&g, &[1, 1]).unwrap();
        assert_eq!(gr.edge_count(), 1);
        assert_eq!(gr.neighbours(0), &[1]);
    }

    #[test]
    fn centre_of_cube_has_full_stencil() {
        let g = generate_box([3, 3, 3], [false; 3]).unwrap();
        let gr = build_graph(&g, &vec![1; 27]).unwrap();
        // oracle: offsets in {-1,0,1}^3 with one or two non-zero components
        let mut expect = 0;
        for dz in -1i32..=1 {
            for dy in -1i32..=1 {
                for dx in -1i32..=1 {
                    let nz = [dx, dy, dz].iter().filter(|c| **c != 0).count();
                    if nz == 1 || nz == 2 {
                        expect += 1;
                    }
                }
            }
        }
        assert_eq!(expect, 18);
        assert_eq!(gr.degree(13), expect);
        assert!((0..27).all(|u| gr.degree(u) <= 18));
    }

    #[test]
    fn isolated_site() {
        let g = Geometry::from_voxels([5, 5, 5], &[[0, 0, 0], [4, 4, 4]], [false; 3]).unwrap();
        let gr = build_graph(&g, &[1, 1]).unwrap();
        assert_eq!(gr.len(), 2);
        assert_eq!(gr.degree(0), 0);
    }

    #[test]
    fn weight_mismatch() {
        let g = generate_box([2, 2, 2], [false; 3]).unwrap();
        assert_eq!(
            build_graph(&g, &[1; 3]),
            Err(GraphError::WeightLength {
                expected: 8,
                got: 3
            })
        );
    }

    #[test]
    fn symmetric_without_self_loops() {
        let g = generate_bifurcation(&BifurcationSpec::default()).unwrap();
        let gr = build_graph(&g, &vec![1; g.len()]).unwrap();
        for u in 0..gr.len() {
            for &v in gr.neighbours(u) {
                assert_ne!(v as usize, u);
                assert!(gr.neighbours(v as usize).contains(&(u as u32)));
            }
        }
        let seq = build_graph_with(&g, &vec![1; g.len()], Exec::Sequential).unwrap();
        assert_eq!(seq, gr);
    }

    #[test]
    fn tiny_periodic_box_merges_wrapped_links() {
        let g = generate_box([2, 1, 1], [true, false, false]).unwrap();
        let gr = build_graph(&g, &[1, 1]).unwrap();
        assert_eq!(gr.edge_count(), 1);
    }
}
