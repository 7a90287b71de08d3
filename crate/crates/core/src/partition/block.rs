//! Baseline: contiguous runs of lattice blocks.

use super::{part_weights, Partition, PartitionConfig, PartitionError, Variant};
use crate::geometry::Geometry;

/// Assigns whole blocks (in raster order) to parts so that each part holds a
/// contiguous run of roughly equal weight. A block goes to the part in which
/// the midpoint of its cumulative weight falls, kept monotone so that no
/// part is skipped or left empty.
pub fn block_seed_partition(
    g: &Geometry,
    weights: &[u64],
    nparts: usize,
) -> Result<Partition, PartitionError> {
    if nparts == 0 {
        return Err(PartitionError::ZeroParts);
    }
    if weights.len() != g.len() {
        return Err(PartitionError::WeightLength {
            expected: g.len(),
            got: weights.len(),
        });
    }
    let blocks = g.blocks();
    if nparts > blocks.len() {
        return Err(PartitionError::InfeasibleSeed {
            nparts,
            blocks: blocks.len(),
        });
    }
    let bw: Vec<u64> = blocks
        .iter()
        .map(|(_, sites)| sites.iter().map(|&i| weights[i]).sum())
        .collect();
    let parts = super::segment_parts(&bw, nparts);
    let mut assignment = vec![0u32; g.len()];
    for ((_, sites), &p) in blocks.iter().zip(&parts) {
        for &i in sites {
            assignment[i] = p;
        }
    }
    let config = PartitionConfig::new(nparts, Variant::BlockSeed);
    let total: u64 = weights.iter().sum();
    let max = part_weights(&assignment, weights, nparts)
        .into_iter()
        .max()
        .unwrap_or(0);
    Ok(Partition {
        assignment,
        nparts,
        config,
        balance_relaxed: max as f64 > config.tolerance * total as f64 / nparts as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::generate_box;

    #[test]
    fn blocks_stay_whole_and_parts_nonempty() {
        let g = generate_box([16, 8, 8], [false; 3])
            .unwrap()
            .with_block_size(4)
            .unwrap();
        let w = vec![1u64; g.len()];
        let p = block_seed_partition(&g, &w, 3).unwrap();
        for (_, sites) in g.blocks() {
            assert!(sites
                .iter()
                .all(|&i| p.assignment[i] == p.assignment[sites[0]]));
        }
        let pw = p.part_weights(&w);
        assert!(pw.iter().all(|&x| x > 0));
        assert_eq!(pw.iter().sum::<u64>(), g.len() as u64);
    }

    #[test]
    fn four_equal_blocks_split_two_and_two() {
        let g = generate_box([32, 8, 8], [false; 3]).unwrap();
        let w = vec![1u64; g.len()];
        let p = block_seed_partition(&g, &w, 2).unwrap();
        let by_block: Vec<u32> = g.blocks().iter().map(|(_, s)| p.assignment[s[0]]).collect();
        assert_eq!(by_block, vec![0, 0, 1, 1]);
        let p = block_seed_partition(&g, &w, 1).unwrap();
        assert!(p.assignment.iter().all(|&x| x == 0));
    }

    #[test]
    fn too_many_parts() {
        let g = generate_box([4, 4, 4], [false; 3])
            .unwrap()
            .with_block_size(4)
            .unwrap();
        assert_eq!(
            block_seed_partition(&g, &vec![1; 64], 2),
            Err(PartitionError::InfeasibleSeed {
                nparts: 2,
                blocks: 1
            })
        );
    }
}
