//! Sparse voxel lattices: site types, validation, lookup and block structure.

mod classify;
mod generate;
mod io;

pub use classify::{classify_sites, crossed_plane};
pub use generate::{
    generate_bifurcation, generate_box, generate_channel, generate_cylinder, Axis, BifurcationSpec,
    ChannelSpec,
};
pub use io::{load_geometry, read_geometry, save_geometry, write_geometry, FORMAT_VERSION, MAGIC};

use std::collections::HashMap;
use std::ops::{Index, IndexMut};

use crate::lattice::LINKS;

pub const DEFAULT_BLOCK_SIZE: u32 = 8;

/// Site type without the in/outlet id; indexes per-type tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SiteKind {
    Bulk = 0,
    Wall = 1,
    InOutlet = 2,
    WallInOutlet = 3,
}

impl SiteKind {
    pub const ALL: [SiteKind; 4] = [
        SiteKind::Bulk,
        SiteKind::Wall,
        SiteKind::InOutlet,
        SiteKind::WallInOutlet,
    ];

    /// Short name used in weight files and CSV headers.
    pub fn name(self) -> &'static str {
        match self {
            SiteKind::Bulk => "bulk",
            SiteKind::Wall => "wall",
            SiteKind::InOutlet => "inout",
            SiteKind::WallInOutlet => "wallinout",
        }
    }

    pub fn from_name(s: &str) -> Option<SiteKind> {
        SiteKind::ALL.into_iter().find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SiteType {
    Bulk,
    Wall,
    InOutlet(u16),
    WallInOutlet(u16),
}

impl SiteType {
    pub fn kind(self) -> SiteKind {
        match self {
            SiteType::Bulk => SiteKind::Bulk,
            SiteType::Wall => SiteKind::Wall,
            SiteType::InOutlet(_) => SiteKind::InOutlet,
            SiteType::WallInOutlet(_) => SiteKind::WallInOutlet,
        }
    }

    pub fn boundary_id(self) -> Option<u16> {
        match self {
            SiteType::InOutlet(id) | SiteType::WallInOutlet(id) => Some(id),
            _ => None,
        }
    }
}

/// One value per [`SiteKind`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PerKind<T>(pub [T; 4]);

impl<T> Index<SiteKind> for PerKind<T> {
    type Output = T;
    fn index(&self, k: SiteKind) -> &T {
        &self.0[k as usize]
    }
}

impl<T> IndexMut<SiteKind> for PerKind<T> {
    fn index_mut(&mut self, k: SiteKind) -> &mut T {
        &mut self.0[k as usize]
    }
}

impl<T: Copy> PerKind<T> {
    pub fn splat(v: T) -> Self {
        PerKind([v; 4])
    }

    pub fn map<U>(self, f: impl Fn(T) -> U) -> PerKind<U> {
        PerKind(self.0.map(f))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Site {
    pub coord: [u32; 3],
    pub site_type: SiteType,
    /// Fraction along each non-rest link (direction `k + 1`) at which it
    /// crosses a wall; `1.0` when the link does not hit a wall.
    pub wall_distances: [f64; LINKS],
}

impl Site {
    pub fn kind(&self) -> SiteKind {
        self.site_type.kind()
    }
}

/// An inlet or outlet plane. The normal points out of the fluid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IoletPlane {
    pub point: [f64; 3],
    pub normal: [f64; 3],
    pub id: u16,
}

#[derive(Debug, thiserror::Error)]
pub enum GeometryError {
    #[error("invalid geometry parameters: {0}")]
    InvalidParameters(String),
    #[error("geometry has no fluid sites")]
    Empty,
    #[error("duplicate site coordinate {0:?}")]
    DuplicateCoord([u32; 3]),
    #[error("site coordinate {coord:?} outside bounding box {dims:?}")]
    OutOfBounds { coord: [u32; 3], dims: [u32; 3] },
    #[error("site {coord:?} references undeclared in/outlet id {id}")]
    UnknownBoundary { coord: [u32; 3], id: u16 },
    #[error("wall distance {q} out of [0, 1] at site {coord:?}")]
    InvalidWallDistance { coord: [u32; 3], q: f64 },
    #[error("in/outlet planes {0} and {1} overlap")]
    OverlappingPlanes(u16, u16),
    #[error("malformed geometry header: {0}")]
    MalformedHeader(String),
    #[error("invalid site record {index}: {reason}")]
    InvalidRecord { index: u64, reason: String },
    #[error("geometry file truncated")]
    Truncated,
    #[error("geometry file format cannot represent periodic axes")]
    PeriodicUnsupported,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Sparse voxel lattice of fluid sites.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    dims: [u32; 3],
    sites: Vec<Site>,
    block_size: u32,
    planes: Vec<IoletPlane>,
    periodic: [bool; 3],
}

impl Geometry {
    /// Builds and validates a geometry. Site types are kept as given; see
    /// [`classify_sites`] to derive them.
    pub fn new(
        dims: [u32; 3],
        sites: Vec<Site>,
        block_size: u32,
        planes: Vec<IoletPlane>,
    ) -> Result<Self, GeometryError> {
        Self::with_periodicity(dims, sites, block_size, planes, [false; 3])
    }

    pub fn with_periodicity(
        dims: [u32; 3],
        sites: Vec<Site>,
        block_size: u32,
        planes: Vec<IoletPlane>,
        periodic: [bool; 3],
    ) -> Result<Self, GeometryError> {
        let g = Geometry {
            dims,
            sites,
            block_size,
            planes,
            periodic,
        };
        g.validate()?;
        Ok(g)
    }

    /// Fluid sites at `coords` with every link to a missing neighbour treated
    /// as a wall halfway along the link. Types are classified.
    pub fn from_voxels(
        dims: [u32; 3],
        coords: &[[u32; 3]],
        periodic: [bool; 3],
    ) -> Result<Self, GeometryError> {
        let mut sorted = coords.to_vec();
        sorted.sort_by_key(|c| (c[2], c[1], c[0]));
        let sites = sorted
            .iter()
            .map(|&coord| Site {
                coord,
                site_type: SiteType::Bulk,
                wall_distances: [1.0; LINKS],
            })
            .collect();
        let mut g = Self::with_periodicity(dims, sites, DEFAULT_BLOCK_SIZE, vec![], periodic)?;
        let index = g.index();
        for site in &mut g.sites {
            for k in 0..LINKS {
                let v = crate::lattice::link_velocity(k);
                if index.neighbour(site.coord, v).is_none() {
                    site.wall_distances[k] = 0.5;
                }
            }
        }
        Ok(classify_sites(g))
    }

    pub(crate) fn from_parts_unchecked(
        dims: [u32; 3],
        sites: Vec<Site>,
        block_size: u32,
        planes: Vec<IoletPlane>,
        periodic: [bool; 3],
    ) -> Self {
        Geometry {
            dims,
            sites,
            block_size,
            planes,
            periodic,
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.sites.is_empty() {
            return Err(GeometryError::Empty);
        }
        if self.block_size == 0 {
            return Err(GeometryError::InvalidParameters("block size 0".into()));
        }
        let dims = self.dims;
        let mut seen = std::collections::HashSet::with_capacity(self.sites.len());
        for s in &self.sites {
            if (0..3).any(|d| s.coord[d] >= dims[d]) {
                return Err(GeometryError::OutOfBounds {
                    coord: s.coord,
                    dims,
                });
            }
            if !seen.insert(s.coord) {
                return Err(GeometryError::DuplicateCoord(s.coord));
            }
            if let Some(q) = s
                .wall_distances
                .iter()
                .copied()
                .find(|q| !(0.0..=1.0).contains(q))
            {
                return Err(GeometryError::InvalidWallDistance { coord: s.coord, q });
            }
            if let Some(id) = s.site_type.boundary_id() {
                if !self.planes.iter().any(|p| p.id == id) {
                    return Err(GeometryError::UnknownBoundary { coord: s.coord, id });
                }
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> [u32; 3] {
        self.dims
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn block_size(&self) -> u32 {
        self.block_size
    }

    pub fn planes(&self) -> &[IoletPlane] {
        &self.planes
    }

    pub fn periodic(&self) -> [bool; 3] {
        self.periodic
    }

    pub fn volume(&self) -> u64 {
        self.dims.iter().map(|&d| d as u64).product()
    }

    pub fn with_block_size(mut self, block_size: u32) -> Result<Self, GeometryError> {
        if block_size == 0 {
            return Err(GeometryError::InvalidParameters("block size 0".into()));
        }
        self.block_size = block_size;
        Ok(self)
    }

    pub fn kind_counts(&self) -> PerKind<u64> {
        let mut c = PerKind::splat(0u64);
        for s in &self.sites {
            c[s.kind()] += 1;
        }
        c
    }

    /// Coordinate lookup honouring periodic axes.
    pub fn index(&self) -> SiteIndex {
        SiteIndex::new(self)
    }

    /// Block coordinate of a site.
    pub fn block_of(&self, coord: [u32; 3]) -> [u32; 3] {
        coord.map(|c| c / self.block_size)
    }

    /// Non-empty blocks in raster order (x fastest), each with its site
    /// indices in site order.
    pub fn blocks(&self) -> Vec<([u32; 3], Vec<usize>)> {
        let mut map: HashMap<[u32; 3], Vec<usize>> = HashMap::new();
        for (i, s) in self.sites.iter().enumerate() {
            map.entry(self.block_of(s.coord)).or_default().push(i);
        }
        let mut blocks: Vec<_> = map.into_iter().collect();
        blocks.sort_by_key(|(b, _)| (b[2], b[1], b[0]));
        blocks
    }
}

/// Fluid sites divided by bounding-box volume.
pub fn fluid_fraction(g: &Geometry) -> f64 {
    g.len() as f64 / g.volume() as f64
}

const DENSE_LOOKUP_LIMIT: u64 = 1 << 27;

enum Lookup {
    Dense(Vec<u32>),
    Sparse(HashMap<[u32; 3], u32>),
}

/// Maps coordinates to site indices.
pub struct SiteIndex {
    dims: [u32; 3],
    periodic: [bool; 3],
    lookup: Lookup,
}

impl SiteIndex {
    fn new(g: &Geometry) -> Self {
        let dims = g.dims;
        let lookup = if g.volume() <= DENSE_LOOKUP_LIMIT {
            let mut dense = vec![u32::MAX; g.volume() as usize];
            for (i, s) in g.sites.iter().enumerate() {
                dense[Self::linear(dims, s.coord)] = i as u32;
            }
            Lookup::Dense(dense)
        } else {
            Lookup::Sparse(
                g.sites
                    .iter()
                    .enumerate()
                    .map(|(i, s)| (s.coord, i as u32))
                    .collect(),
            )
        };
        SiteIndex {
            dims,
            periodic: g.periodic,
            lookup,
        }
    }

    fn linear(dims: [u32; 3], c: [u32; 3]) -> usize {
        (c[0] as usize) + dims[0] as usize * (c[1] as usize + dims[1] as usize * c[2] as usize)
    }

    pub fn get(&self, c: [u32; 3]) -> Option<usize> {
        if (0..3).any(|d| c[d] >= self.dims[d]) {
            return None;
        }
        match &self.lookup {
            Lookup::Dense(v) => {
                let i = v[Self::linear(self.dims, c)];
                (i != u32::MAX).then_some(i as usize)
            }
            Lookup::Sparse(m) => m.get(&c).map(|&i| i as usize),
        }
    }

    /// Wrapped coordinate of `c + v`, or `None` if it leaves a non-periodic box.
    pub fn offset(&self, c: [u32; 3], v: [i32; 3]) -> Option<[u32; 3]> {
        let mut out = [0u32; 3];
        for d in 0..3 {
            let n = self.dims[d] as i64;
            let mut x = c[d] as i64 + v[d] as i64;
            if x < 0 || x >= n {
                if !self.periodic[d] {
                    return None;
                }
                x = x.rem_euclid(n);
            }
            out[d] = x as u32;
        }
        Some(out)
    }

    pub fn neighbour(&self, c: [u32; 3], v: [i32; 3]) -> Option<usize> {
        self.offset(c, v).and_then(|n| self.get(n))
    }
}
