//! D3Q19 velocity set shared by the geometry, graph and kernel modules.
//!
//! Index 0 is the rest velocity, 1..=6 the axis pairs (+x, -x, +y, -y, +z, -z),
//! 7..=18 the twelve face diagonals as opposite pairs (xy plane, then xz, then
//! yz). Every odd index `i >= 1` is followed by its opposite `i + 1`.

pub const Q: usize = 19;

/// Number of non-rest links per site.
pub const LINKS: usize = 18;

pub const VELOCITIES: [[i32; 3]; Q] = [
    [0, 0, 0],
    [1, 0, 0],
    [-1, 0, 0],
    [0, 1, 0],
    [0, -1, 0],
    [0, 0, 1],
    [0, 0, -1],
    [1, 1, 0],
    [-1, -1, 0],
    [1, -1, 0],
    [-1, 1, 0],
    [1, 0, 1],
    [-1, 0, -1],
    [1, 0, -1],
    [-1, 0, 1],
    [0, 1, 1],
    [0, -1, -1],
    [0, 1, -1],
    [0, -1, 1],
];

/// Velocity components as floats, one row per axis.
pub const COMPONENTS: [[f64; Q]; 3] = {
    let mut c = [[0.0; Q]; 3];
    let mut i = 0;
    while i < Q {
        c[0][i] = VELOCITIES[i][0] as f64;
        c[1][i] = VELOCITIES[i][1] as f64;
        c[2][i] = VELOCITIES[i][2] as f64;
        i += 1;
    }
    c
};

pub const WEIGHTS: [f64; Q] = {
    let mut w = [1.0 / 36.0; Q];
    w[0] = 1.0 / 3.0;
    let mut i = 1;
    while i <= 6 {
        w[i] = 1.0 / 18.0;
        i += 1;
    }
    w
};

/// Squared lattice speed of sound.
pub const CS2: f64 = 1.0 / 3.0;

#[inline]
pub const fn opposite(i: usize) -> usize {
    if i == 0 {
        0
    } else if i % 2 == 1 {
        i + 1
    } else {
        i - 1
    }
}

/// Velocity of non-rest link `k` (0..18), i.e. direction `k + 1`.
#[inline]
pub const fn link_velocity(k: usize) -> [i32; 3] {
    VELOCITIES[k + 1]
}
