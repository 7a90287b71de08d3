//! Synthetic geometries: cylinders, a Y-shaped bifurcation, and the channel and
//! box lattices used to validate the kernel.

use super::{
    classify_sites, Geometry, GeometryError, IoletPlane, Site, SiteType, DEFAULT_BLOCK_SIZE,
};
use crate::exec::{self, Exec};
use crate::lattice::{link_velocity, LINKS};

/// Largest stored wall distance; `1.0` is reserved for uncut links.
const Q_MAX: f64 = 65534.0 / 65535.0;

/// Axial extension of capped tubes beyond their in/outlet plane, so that the
/// wall surface continues past the cap and links leave through the plane.
const CAP_MARGIN: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

type V3 = [f64; 3];

fn add(a: V3, b: V3) -> V3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}
fn sub(a: V3, b: V3) -> V3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}
fn scale(a: V3, s: f64) -> V3 {
    [a[0] * s, a[1] * s, a[2] * s]
}
fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Open interval of `t` where `a t^2 + 2 b t + c < 0`.
fn quadratic_interval(a: f64, b: f64, c: f64) -> Option<(f64, f64)> {
    if a.abs() < 1e-14 {
        return (c < 0.0).then_some((f64::NEG_INFINITY, f64::INFINITY));
    }
    let disc = b * b - a * c;
    if disc <= 0.0 {
        return None;
    }
    let s = disc.sqrt();
    Some(((-b - s) / a, (-b + s) / a))
}

fn intersect(x: (f64, f64), y: (f64, f64)) -> Option<(f64, f64)> {
    let lo = x.0.max(y.0);
    let hi = x.1.min(y.1);
    (lo < hi).then_some((lo, hi))
}

#[derive(Debug, Clone)]
struct Tube {
    start: V3,
    dir: V3,
    len: f64,
    radius: f64,
    cap_start: Option<u16>,
    cap_end: Option<u16>,
}

impl Tube {
    fn axial(&self, p: V3) -> f64 {
        dot(sub(p, self.start), self.dir)
    }

    fn radial2(&self, p: V3) -> f64 {
        let w = sub(p, self.start);
        let along = dot(w, self.dir);
        let perp = sub(w, scale(self.dir, along));
        dot(perp, perp)
    }

    fn contains(&self, p: V3) -> bool {
        let s = self.axial(p);
        (0.0..=self.len).contains(&s) && self.radial2(p) < self.radius * self.radius
    }

    fn axial_range(&self) -> (f64, f64) {
        let lo = if self.cap_start.is_some() {
            -CAP_MARGIN
        } else {
            0.0
        };
        let hi = if self.cap_end.is_some() {
            self.len + CAP_MARGIN
        } else {
            self.len
        };
        (lo, hi)
    }

    /// Interval of `t` for which `p + t d` lies in the tube including the
    /// extensions past its caps.
    fn extended_interval(&self, p: V3, d: V3) -> Option<(f64, f64)> {
        let w = sub(p, self.start);
        let wp = sub(w, scale(self.dir, dot(w, self.dir)));
        let dp = sub(d, scale(self.dir, dot(d, self.dir)));
        let radial = quadratic_interval(
            dot(dp, dp),
            dot(wp, dp),
            dot(wp, wp) - self.radius * self.radius,
        )?;
        let s0 = dot(w, self.dir);
        let ds = dot(d, self.dir);
        let (lo, hi) = self.axial_range();
        let axial = if ds.abs() < 1e-14 {
            if (lo..=hi).contains(&s0) {
                (f64::NEG_INFINITY, f64::INFINITY)
            } else {
                return None;
            }
        } else {
            let a = (lo - s0) / ds;
            let b = (hi - s0) / ds;
            (a.min(b), a.max(b))
        };
        intersect(radial, axial)
    }

    fn planes(&self) -> Vec<(IoletPlane, f64)> {
        let mut out = vec![];
        if let Some(id) = self.cap_start {
            out.push((
                IoletPlane {
                    point: self.start,
                    normal: scale(self.dir, -1.0),
                    id,
                },
                self.radius,
            ));
        }
        if let Some(id) = self.cap_end {
            out.push((
                IoletPlane {
                    point: add(self.start, scale(self.dir, self.len)),
                    normal: self.dir,
                    id,
                },
                self.radius,
            ));
        }
        out
    }
}

#[derive(Debug, Clone)]
struct Ball {
    centre: V3,
    radius: f64,
}

impl Ball {
    fn contains(&self, p: V3) -> bool {
        let w = sub(p, self.centre);
        dot(w, w) < self.radius * self.radius
    }

    fn interval(&self, p: V3, d: V3) -> Option<(f64, f64)> {
        let w = sub(p, self.centre);
        quadratic_interval(dot(d, d), dot(w, d), dot(w, w) - self.radius * self.radius)
    }
}

/// Union of capped tubes and balls, clipped at the tube caps.
#[derive(Debug, Clone, Default)]
struct Shape {
    tubes: Vec<Tube>,
    balls: Vec<Ball>,
}

impl Shape {
    fn contains(&self, p: V3) -> bool {
        self.tubes.iter().any(|t| t.contains(p)) || self.balls.iter().any(|b| b.contains(p))
    }

    fn planes(&self) -> Vec<(IoletPlane, f64)> {
        let mut v: Vec<_> = self.tubes.iter().flat_map(|t| t.planes()).collect();
        v.sort_by_key(|(p, _)| p.id);
        v
    }

    /// Parameter at which `p + t d` first leaves the wall surface (the union
    /// of extended primitives). `p` must be inside.
    fn exit_param(&self, p: V3, d: V3) -> f64 {
        let intervals: Vec<(f64, f64)> = self
            .tubes
            .iter()
            .filter_map(|t| t.extended_interval(p, d))
            .chain(self.balls.iter().filter_map(|b| b.interval(p, d)))
            .collect();
        let mut cur = 0.0f64;
        loop {
            let next = intervals
                .iter()
                .filter(|(lo, hi)| *lo <= cur && *hi > cur)
                .map(|(_, hi)| *hi)
                .fold(cur, f64::max);
            if next <= cur {
                return cur;
            }
            cur = next;
        }
    }

    fn first_plane_hit(&self, planes: &[(IoletPlane, f64)], p: V3, d: V3) -> Option<f64> {
        let end = add(p, d);
        planes
            .iter()
            .filter_map(|(pl, r)| {
                let s0 = dot(sub(p, pl.point), pl.normal);
                let s1 = dot(sub(end, pl.point), pl.normal);
                if !(s0 < 0.0 && s1 >= 0.0) {
                    return None;
                }
                let t = s0 / (s0 - s1);
                let x = sub(add(p, scale(d, t)), pl.point);
                (dot(x, x) <= r * r).then_some(t)
            })
            .min_by(f64::total_cmp)
    }

    fn wall_distances(&self, planes: &[(IoletPlane, f64)], p: V3) -> [f64; LINKS] {
        let mut q = [1.0; LINKS];
        for (k, qk) in q.iter_mut().enumerate() {
            let v = link_velocity(k);
            let d = v.map(|c| c as f64);
            if self.contains(add(p, d)) {
                continue;
            }
            let exit = self.exit_param(p, d);
            match self.first_plane_hit(planes, p, d) {
                Some(tp) if tp <= exit => {}
                _ if exit <= 1.0 => *qk = exit.clamp(0.0, Q_MAX),
                _ => *qk = 0.5,
            }
        }
        q
    }

    /// Builds the classified geometry from integer voxels in `lo..=hi`
    /// (shape frame), padding the bounding box to `target_fraction` if given.
    fn build(
        &self,
        lo: [i64; 3],
        hi: [i64; 3],
        target_fraction: Option<f64>,
    ) -> Result<Geometry, GeometryError> {
        let exec = Exec::default();
        let nz = (hi[2] - lo[2] + 1).max(0) as usize;
        let slices = exec::map_range(exec, nz, |iz| {
            let z = lo[2] + iz as i64;
            let mut v = vec![];
            for y in lo[1]..=hi[1] {
                for x in lo[0]..=hi[0] {
                    if self.contains([x as f64, y as f64, z as f64]) {
                        v.push([x, y, z]);
                    }
                }
            }
            v
        });
        let voxels: Vec<[i64; 3]> = slices.into_iter().flatten().collect();
        if voxels.is_empty() {
            return Err(GeometryError::Empty);
        }
        let mut vmin = [i64::MAX; 3];
        let mut vmax = [i64::MIN; 3];
        for v in &voxels {
            for d in 0..3 {
                vmin[d] = vmin[d].min(v[d]);
                vmax[d] = vmax[d].max(v[d]);
            }
        }
        let tight = [0, 1, 2].map(|d| (vmax[d] - vmin[d] + 1) as u64);
        let mut dims = tight;
        if let Some(f) = target_fraction {
            let volume: u64 = tight.iter().product();
            let f0 = voxels.len() as f64 / volume as f64;
            if f < f0 {
                let s = (f0 / f).cbrt();
                dims = tight.map(|t| (t as f64 * s).round() as u64);
            }
        }
        let pad = [0, 1, 2].map(|d| ((dims[d] - tight[d]) / 2) as i64);
        let offset = [0, 1, 2].map(|d| vmin[d] - pad[d]);
        let planes = self.planes();
        let sites = exec::map_slice(exec, &voxels, |v| {
            let p = v.map(|c| c as f64);
            Site {
                coord: [0, 1, 2].map(|d| (v[d] - offset[d]) as u32),
                site_type: SiteType::Bulk,
                wall_distances: self.wall_distances(&planes, p),
            }
        });
        let planes = planes
            .into_iter()
            .map(|(pl, _)| IoletPlane {
                point: [0, 1, 2].map(|d| pl.point[d] - offset[d] as f64),
                ..pl
            })
            .collect();
        let dims = dims.map(|d| d as u32);
        let g = Geometry::new(dims, sites, DEFAULT_BLOCK_SIZE, planes)?;
        Ok(classify_sites(g))
    }
}

/// Straight cylinder of fluid voxels with squared in-plane distance below
/// `radius^2`, capped by an inlet (id 0) and outlet (id 1) half a lattice
/// spacing beyond the end layers.
pub fn generate_cylinder(radius: f64, length: u32, axis: Axis) -> Result<Geometry, GeometryError> {
    if !(radius >= 1.0) {
        return Err(GeometryError::InvalidParameters(format!(
            "cylinder radius {radius} < 1"
        )));
    }
    if length < 2 {
        return Err(GeometryError::InvalidParameters(format!(
            "cylinder length {length} < 2"
        )));
    }
    let half = radius.ceil() as i64 - 1;
    let a = axis.index();
    let mut start = [half as f64; 3];
    start[a] = -0.5;
    let mut dir = [0.0; 3];
    dir[a] = 1.0;
    let shape = Shape {
        tubes: vec![Tube {
            start,
            dir,
            len: length as f64,
            radius,
            cap_start: Some(0),
            cap_end: Some(1),
        }],
        balls: vec![],
    };
    let mut lo = [0i64; 3];
    let mut hi = [2 * half; 3];
    lo[a] = 0;
    hi[a] = length as i64 - 1;
    shape.build(lo, hi, None)
}

/// Y-shaped bifurcation: a trunk along +z splitting into two branches in the
/// x-z plane, each at `branch_angle_deg` from the trunk axis. The inlet is id 0,
/// the outlets ids 1 and 2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BifurcationSpec {
    pub trunk_radius: f64,
    pub branch_radius: f64,
    pub branch_angle_deg: f64,
    pub trunk_length: f64,
    pub branch_length: f64,
    /// Pad the bounding box down to this fluid fraction.
    pub fluid_fraction: Option<f64>,
}

impl Default for BifurcationSpec {
    fn default() -> Self {
        BifurcationSpec {
            trunk_radius: 3.0,
            branch_radius: 2.0,
            branch_angle_deg: 30.0,
            trunk_length: 24.0,
            branch_length: 24.0,
            fluid_fraction: None,
        }
    }
}

pub fn generate_bifurcation(spec: &BifurcationSpec) -> Result<Geometry, GeometryError> {
    let BifurcationSpec {
        trunk_radius,
        branch_radius,
        branch_angle_deg,
        trunk_length,
        branch_length,
        fluid_fraction,
    } = *spec;
    if !(trunk_radius >= 1.0 && branch_radius >= 1.0) {
        return Err(GeometryError::InvalidParameters(format!(
            "radii must be >= 1 (trunk {trunk_radius}, branch {branch_radius})"
        )));
    }
    if !(branch_angle_deg > 0.0 && branch_angle_deg < 90.0) {
        return Err(GeometryError::InvalidParameters(format!(
            "branch angle {branch_angle_deg} outside (0, 90)"
        )));
    }
    if !(trunk_length >= 1.0 && branch_length >= 1.0) {
        return Err(GeometryError::InvalidParameters(
            "lengths must be >= 1".into(),
        ));
    }
    if let Some(f) = fluid_fraction {
        if !(f > 0.0 && f <= 1.0) {
            return Err(GeometryError::InvalidParameters(format!(
                "fluid fraction {f} outside (0, 1]"
            )));
        }
    }
    let theta = branch_angle_deg.to_radians();
    let junction = [0.0, 0.0, trunk_length];
    let mut tubes = vec![Tube {
        start: [0.0, 0.0, 0.0],
        dir: [0.0, 0.0, 1.0],
        len: trunk_length,
        radius: trunk_radius,
        cap_start: Some(0),
        cap_end: None,
    }];
    for (sign, id) in [(-1.0, 1u16), (1.0, 2u16)] {
        tubes.push(Tube {
            start: junction,
            dir: [sign * theta.sin(), 0.0, theta.cos()],
            len: branch_length,
            radius: branch_radius,
            cap_start: None,
            cap_end: Some(id),
        });
    }
    let shape = Shape {
        tubes,
        balls: vec![Ball {
            centre: junction,
            radius: trunk_radius.max(branch_radius),
        }],
    };
    let planes = shape.planes();
    for (i, (a, ra)) in planes.iter().enumerate() {
        for (b, rb) in &planes[i + 1..] {
            let w = sub(a.point, b.point);
            if dot(w, w).sqrt() < ra + rb + 2.0 {
                return Err(GeometryError::OverlappingPlanes(a.id, b.id));
            }
        }
    }
    let reach = trunk_radius.max(branch_radius) + 1.0;
    let tip_x = branch_length * theta.sin();
    let top = trunk_length + branch_length * theta.cos();
    let lo = [
        (-tip_x - reach).floor() as i64,
        (-reach).floor() as i64,
        (-reach).floor() as i64,
    ];
    let hi = [
        (tip_x + reach).ceil() as i64,
        reach.ceil() as i64,
        (top + reach).ceil() as i64,
    ];
    shape.build(lo, hi, fluid_fraction)
}

/// Plane channel for kernel validation: flow along x between walls normal to
/// y, periodic in z. Inlet plane id 0 at `x = -1/2`, outlet id 1 at
/// `x = length - 1/2`; walls sit `wall_q` beyond the first and last rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSpec {
    pub width: u32,
    pub length: u32,
    pub depth: u32,
    pub wall_q: f64,
}

pub fn generate_channel(spec: &ChannelSpec) -> Result<Geometry, GeometryError> {
    let ChannelSpec {
        width,
        length,
        depth,
        wall_q,
    } = *spec;
    if width < 1 || length < 2 || depth < 1 {
        return Err(GeometryError::InvalidParameters(format!(
            "channel {width}x{length}x{depth} too small"
        )));
    }
    if !(wall_q > 0.0 && wall_q < 1.0) {
        return Err(GeometryError::InvalidParameters(format!(
            "wall distance {wall_q} outside (0, 1)"
        )));
    }
    let wall_q = wall_q.min(Q_MAX);
    let mut sites = Vec::with_capacity((width * length * depth) as usize);
    for z in 0..depth {
        for y in 0..width {
            for x in 0..length {
                let mut q = [1.0; LINKS];
                for (k, qk) in q.iter_mut().enumerate() {
                    let v = link_velocity(k);
                    let nx = x as i64 + v[0] as i64;
                    let ny = y as i64 + v[1] as i64;
                    let hits_wall = ny < 0 || ny >= width as i64;
                    let hits_plane = nx < 0 || nx >= length as i64;
                    if hits_wall && !(hits_plane && 0.5 <= wall_q) {
                        *qk = wall_q;
                    }
                }
                sites.push(Site {
                    coord: [x, y, z],
                    site_type: SiteType::Bulk,
                    wall_distances: q,
                });
            }
        }
    }
    let mid = [(width as f64 - 1.0) / 2.0, (depth as f64 - 1.0) / 2.0];
    let planes = vec![
        IoletPlane {
            point: [-0.5, mid[0], mid[1]],
            normal: [-1.0, 0.0, 0.0],
            id: 0,
        },
        IoletPlane {
            point: [length as f64 - 0.5, mid[0], mid[1]],
            normal: [1.0, 0.0, 0.0],
            id: 1,
        },
    ];
    let g = Geometry::with_periodicity(
        [length, width, depth],
        sites,
        DEFAULT_BLOCK_SIZE,
        planes,
        [false, false, true],
    )?;
    Ok(classify_sites(g))
}

/// Fully fluid box; non-periodic faces are walls halfway along the links.
pub fn generate_box(dims: [u32; 3], periodic: [bool; 3]) -> Result<Geometry, GeometryError> {
    if dims.contains(&0) {
        return Err(GeometryError::InvalidParameters(format!(
            "box dims {dims:?}"
        )));
    }
    let mut coords = Vec::with_capacity(dims.iter().map(|&d| d as usize).product());
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                coords.push([x, y, z]);
            }
        }
    }
    Geometry::from_voxels(dims, &coords, periodic)
}
