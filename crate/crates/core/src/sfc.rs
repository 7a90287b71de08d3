//! Morton (Z-order) keys and site reordering.
//!
//! Bit `i` of x lands on key bit `3i`, y on `3i + 1`, z on `3i + 2`.

use crate::geometry::Geometry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct MortonKey(pub u128);

/// Mask selecting runs of `run` bits every `3 * run` bits within 96 bits.
const fn spread_mask(run: u32) -> u128 {
    let mut m = 0u128;
    let mut bit = 0;
    while bit < 96 {
        if bit % (3 * run) < run {
            m |= 1u128 << bit;
        }
        bit += 1;
    }
    m
}

const MASKS: [u128; 5] = [
    spread_mask(16),
    spread_mask(8),
    spread_mask(4),
    spread_mask(2),
    spread_mask(1),
];
const SHIFTS: [u32; 5] = [32, 16, 8, 4, 2];

#[inline]
fn spread(v: u32) -> u128 {
    let mut x = v as u128;
    for (mask, shift) in MASKS.iter().zip(SHIFTS) {
        x = (x | (x << shift)) & mask;
    }
    x
}

#[inline]
fn compact(k: u128) -> u32 {
    let mut x = k & MASKS[4];
    for i in (0..5).rev() {
        let wider = if i == 0 { 0xFFFF_FFFF } else { MASKS[i - 1] };
        x = (x | (x >> SHIFTS[i])) & wider;
    }
    x as u32
}

pub fn morton_encode(x: u32, y: u32, z: u32) -> MortonKey {
    MortonKey(spread(x) | (spread(y) << 1) | (spread(z) << 2))
}

pub fn morton_decode(k: MortonKey) -> (u32, u32, u32) {
    (compact(k.0), compact(k.0 >> 1), compact(k.0 >> 2))
}

pub fn morton_key(c: [u32; 3]) -> MortonKey {
    morton_encode(c[0], c[1], c[2])
}

/// Reorders sites by Morton key. Returns the sorted geometry and the
/// permutation mapping old site index to new index.
pub fn sort_by_morton(g: &Geometry) -> (Geometry, Vec<usize>) {
    let mut order: Vec<usize> = (0..g.len()).collect();
    order.sort_by_key(|&i| morton_key(g.sites()[i].coord));
    let mut perm = vec![0; g.len()];
    for (new, &old) in order.iter().enumerate() {
        perm[old] = new;
    }
    let sites = order.iter().map(|&i| g.sites()[i].clone()).collect();
    let sorted = Geometry::from_parts_unchecked(
        g.dims(),
        sites,
        g.block_size(),
        g.planes().to_vec(),
        g.periodic(),
    );
    (sorted, perm)
}
