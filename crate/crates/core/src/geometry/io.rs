//! Binary geometry files.
//!
//! Layout, all little-endian: magic `SLBG`, `u32` version, dims `3 x u32`,
//! block size `u32`, plane count `u32`, then per plane point `3 x f64`,
//! normal `3 x f64`, id `u16`; site count `u64`, then per site coord
//! `3 x u32`, type `u8`, boundary id `u16`, and 18 wall distances as `u16`
//! quantized by `round(q * 65535)`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Geometry, GeometryError, IoletPlane, Site, SiteType};
use crate::lattice::LINKS;

pub const MAGIC: &[u8; 4] = b"SLBG";
pub const FORMAT_VERSION: u32 = 1;

const Q_SCALE: f64 = 65535.0;

pub fn save_geometry(g: &Geometry, path: impl AsRef<Path>) -> Result<(), GeometryError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_geometry(g, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_geometry(path: impl AsRef<Path>) -> Result<Geometry, GeometryError> {
    read_geometry(BufReader::new(File::open(path)?))
}

pub fn write_geometry(g: &Geometry, mut w: impl Write) -> Result<(), GeometryError> {
    if g.periodic().contains(&true) {
        return Err(GeometryError::PeriodicUnsupported);
    }
    let mut buf = Vec::with_capacity(64 + g.len() * 51);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for d in g.dims() {
        buf.extend_from_slice(&d.to_le_bytes());
    }
    buf.extend_from_slice(&g.block_size().to_le_bytes());
    buf.extend_from_slice(&(g.planes().len() as u32).to_le_bytes());
    for p in g.planes() {
        for x in p.point.iter().chain(&p.normal) {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        buf.extend_from_slice(&p.id.to_le_bytes());
    }
    buf.extend_from_slice(&(g.len() as u64).to_le_bytes());
    for s in g.sites() {
        for c in s.coord {
            buf.extend_from_slice(&c.to_le_bytes());
        }
        let (code, id) = match s.site_type {
            SiteType::Bulk => (0u8, 0u16),
            SiteType::Wall => (1, 0),
            SiteType::InOutlet(id) => (2, id),
            SiteType::WallInOutlet(id) => (3, id),
        };
        buf.push(code);
        buf.extend_from_slice(&id.to_le_bytes());
        for q in s.wall_distances {
            let v = (q * Q_SCALE).round() as u16;
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], GeometryError> {
        let end = self.pos + N;
        let bytes = self
            .data
            .get(self.pos..end)
            .ok_or(GeometryError::Truncated)?;
        self.pos = end;
        Ok(bytes.try_into().unwrap())
    }
    fn u8(&mut self) -> Result<u8, GeometryError> {
        Ok(self.take::<1>()?[0])
    }
    fn u16(&mut self) -> Result<u16, GeometryError> {
        Ok(u16::from_le_bytes(self.take()?))
    }
    fn u32(&mut self) -> Result<u32, GeometryError> {
        Ok(u32::from_le_bytes(self.take()?))
    }
    fn u64(&mut self) -> Result<u64, GeometryError> {
        Ok(u64::from_le_bytes(self.take()?))
    }
    fn f64(&mut self) -> Result<f64, GeometryError> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

pub fn read_geometry(mut r: impl Read) -> Result<Geometry, GeometryError> {
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;
    let mut c = Cursor {
        data: &data,
        pos: 0,
    };
    let magic = c.take::<4>()?;
    if &magic != MAGIC {
        return Err(GeometryError::MalformedHeader(format!(
            "bad magic {magic:?}"
        )));
    }
    let version = c.u32()?;
    if version != FORMAT_VERSION {
        return Err(GeometryError::MalformedHeader(format!(
            "unsupported version {version}"
        )));
    }
    let dims = [c.u32()?, c.u32()?, c.u32()?];
    if dims.contains(&0) {
        return Err(GeometryError::MalformedHeader(format!("dims {dims:?}")));
    }
    let block_size = c.u32()?;
    if block_size == 0 {
        return Err(GeometryError::MalformedHeader("block size 0".into()));
    }
    let nplanes = c.u32()?;
    let mut planes = Vec::with_capacity(nplanes.min(1 << 16) as usize);
    for _ in 0..nplanes {
        let point = [c.f64()?, c.f64()?, c.f64()?];
        let normal = [c.f64()?, c.f64()?, c.f64()?];
        let id = c.u16()?;
        planes.push(IoletPlane { point, normal, id });
    }
    let nsites = c.u64()?;
    let record = 12 + 1 + 2 + 2 * LINKS as u64;
    if nsites.saturating_mul(record) > (data.len() - c.pos) as u64 {
        return Err(GeometryError::Truncated);
    }
    let mut sites = Vec::with_capacity(nsites as usize);
    for index in 0..nsites {
        let coord = [c.u32()?, c.u32()?, c.u32()?];
        let code = c.u8()?;
        let id = c.u16()?;
        let site_type = match code {
            0 => SiteType::Bulk,
            1 => SiteType::Wall,
            2 => SiteType::InOutlet(id),
            3 => SiteType::WallInOutlet(id),
            other => {
                return Err(GeometryError::InvalidRecord {
                    index,
                    reason: format!("site type code {other}"),
                })
            }
        };
        let mut wall_distances = [1.0; LINKS];
        for q in &mut wall_distances {
            *q = c.u16()? as f64 / Q_SCALE;
        }
        sites.push(Site {
            coord,
            site_type,
            wall_distances,
        });
    }
    if c.pos != data.len() {
        return Err(GeometryError::MalformedHeader(format!(
            "{} trailing bytes",
            data.len() - c.pos
        )));
    }
    Geometry::new(dims, sites, block_size, planes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate_bifurcation, generate_channel, BifurcationSpec, ChannelSpec};

    fn sample() -> Geometry {
        generate_bifurcation(&BifurcationSpec::default()).unwrap()
    }

    fn assert_same(a: &Geometry, b: &Geometry) {
        assert_eq!(a.dims(), b.dims());
        assert_eq!(a.block_size(), b.block_size());
        assert_eq!(a.planes(), b.planes());
        assert_eq!(a.len(), b.len());
        for (x, y) in a.sites().iter().zip(b.sites()) {
            assert_eq!(x.coord, y.coord);
            assert_eq!(x.site_type, y.site_type);
            for (p, q) in x.wall_distances.iter().zip(&y.wall_distances) {
                assert!((p - q).abs() <= 0.5 / Q_SCALE);
            }
        }
    }

    #[test]
    fn roundtrip() {
        let g = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.slbg");
        save_geometry(&g, &path).unwrap();
        let back = load_geometry(&path).unwrap();
        assert_same(&g, &back);
        // a second trip through the quantized values is bit-exact
        let mut buf = vec![];
        write_geometry(&back, &mut buf).unwrap();
        assert_eq!(read_geometry(&buf[..]).unwrap(), back);
    }

    #[test]
    fn header_layout() {
        let g = sample();
        let mut buf = vec![];
        write_geometry(&g, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"SLBG");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(
            u32::from_le_bytes(buf[8..12].try_into().unwrap()),
            g.dims()[0]
        );
        let header = 4 + 4 + 12 + 4 + 4 + 3 * 50 + 8;
        assert_eq!(buf.len(), header + g.len() * 51);
    }

    #[test]
    fn truncated_file() {
        let mut buf = vec![];
        write_geometry(&sample(), &mut buf).unwrap();
        buf.truncate(buf.len() - 7);
        assert!(matches!(
            read_geometry(&buf[..]),
            Err(GeometryError::Truncated)
        ));
        assert!(matches!(
            read_geometry(&buf[..10]),
            Err(GeometryError::Truncated)
        ));
    }

    #[test]
    fn bad_magic_and_version() {
        let mut buf = vec![];
        write_geometry(&sample(), &mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(
            read_geometry(&bad[..]),
            Err(GeometryError::MalformedHeader(_))
        ));
        let mut bad = buf.clone();
        bad[4] = 2;
        assert!(matches!(
            read_geometry(&bad[..]),
            Err(GeometryError::MalformedHeader(_))
        ));
    }

    fn site_offset(g: &Geometry, i: usize) -> usize {
        4 + 4 + 12 + 4 + 4 + g.planes().len() * 50 + 8 + i * 51
    }

    #[test]
    fn duplicate_coord_rejected() {
        let g = sample();
        let mut buf = vec![];
        write_geometry(&g, &mut buf).unwrap();
        let (a, b) = (site_offset(&g, 0), site_offset(&g, 1));
        let first: Vec<u8> = buf[a..a + 12].to_vec();
        buf[b..b + 12].copy_from_slice(&first);
        assert!(matches!(
            read_geometry(&buf[..]),
            Err(GeometryError::DuplicateCoord(_))
        ));
    }

    #[test]
    fn out_of_bounds_rejected() {
        let g = sample();
        let mut buf = vec![];
        write_geometry(&g, &mut buf).unwrap();
        let a = site_offset(&g, 3);
        buf[a..a + 4].copy_from_slice(&(g.dims()[0] + 5).to_le_bytes());
        assert!(matches!(
            read_geometry(&buf[..]),
            Err(GeometryError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn periodic_geometry_not_saved() {
        let g = generate_channel(&ChannelSpec {
            width: 3,
            length: 3,
            depth: 1,
            wall_q: 0.5,
        })
        .unwrap();
        assert!(matches!(
            write_geometry(&g, &mut vec![]),
            Err(GeometryError::PeriodicUnsupported)
        ));
    }
}
