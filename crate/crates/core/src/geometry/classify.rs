use super::{Geometry, IoletPlane, SiteType};
use crate::exec::{self, Exec};
use crate::lattice::{link_velocity, LINKS};

/// Assigns a type to every site from its links.
///
/// A link to a missing neighbour with `q < 1` crosses a wall. A link to a
/// missing neighbour with `q == 1` crosses the in/outlet plane it intersects
/// (the one whose crossing point is nearest the plane's reference point); if
/// it intersects none it is treated as a wall. The function reads only
/// coordinates, wall distances and planes, so it is idempotent.
pub fn classify_sites(mut g: Geometry) -> Geometry {
    let index = g.index();
    let planes = g.planes.clone();
    let types = exec::map_slice(Exec::default(), &g.sites, |site| {
        let mut wall = false;
        let mut iolet: Option<u16> = None;
        for k in 0..LINKS {
            let v = link_velocity(k);
            if index.neighbour(site.coord, v).is_some() {
                continue;
            }
            if site.wall_distances[k] < 1.0 {
                wall = true;
                continue;
            }
            let from = site.coord.map(|c| c as f64);
            let to = [0, 1, 2].map(|d| from[d] + v[d] as f64);
            match crossed_plane(&planes, from, to) {
                Some(id) => {
                    iolet.get_or_insert(id);
                }
                None => wall = true,
            }
        }
        match (wall, iolet) {
            (false, None) => SiteType::Bulk,
            (true, None) => SiteType::Wall,
            (false, Some(id)) => SiteType::InOutlet(id),
            (true, Some(id)) => SiteType::WallInOutlet(id),
        }
    });
    for (site, t) in g.sites.iter_mut().zip(types) {
        site.site_type = t;
    }
    g
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Id of the plane crossed by the segment `from -> to` going outward, choosing
/// the plane whose reference point lies nearest the crossing.
pub fn crossed_plane(planes: &[IoletPlane], from: [f64; 3], to: [f64; 3]) -> Option<u16> {
    let mut best: Option<(f64, u16)> = None;
    for p in planes {
        let s0 = dot([0, 1, 2].map(|d| from[d] - p.point[d]), p.normal);
        let s1 = dot([0, 1, 2].map(|d| to[d] - p.point[d]), p.normal);
        if !(s0 < 0.0 && s1 >= 0.0) {
            continue;
        }
        let t = s0 / (s0 - s1);
        let x = [0, 1, 2].map(|d| from[d] + t * (to[d] - from[d]) - p.point[d]);
        let dist = dot(x, x);
        if best.is_none_or(|(b, _)| dist < b) {
            best = Some((dist, p.id));
        }
    }
    best.map(|(_, id)| id)
}
