//! D3Q19 LBGK solver with interpolated bounce-back walls and pressure
//! anti-bounce-back in/outlets.
//!
//! Each step collides every site into a scratch lattice, then pulls
//! populations back along the links. Sites are independent within a phase,
//! so the parallel and sequential paths give bit-identical results.

mod measure;

pub use measure::{
    calibration_cylinders, measure_site_costs, MeasureConfig, CALIBRATION_ASPECTS,
    CALIBRATION_RADII,
};

use std::collections::BTreeMap;
use std::io::Write;

use crate::exec::{self, Exec};
use crate::geometry::{crossed_plane, Geometry, SiteKind};
use crate::lattice::{opposite, COMPONENTS, LINKS, Q, VELOCITIES, WEIGHTS};

pub const DEFAULT_TAU: f64 = 0.8;

/// Speed above which the low-Mach expansion is no longer trustworthy.
pub const VELOCITY_WARNING: f64 = 0.1;

#[derive(Debug, thiserror::Error)]
pub enum LbError {
    #[error("relaxation time {0} must exceed 0.5")]
    InvalidTau(f64),
    #[error("density {rho} for in/outlet {id} must be positive")]
    InvalidDensity { id: u16, rho: f64 },
    #[error("no density given for in/outlet {0}")]
    MissingBoundary(u16),
    #[error("state has {got} sites, lattice has {expected}")]
    Shape { expected: usize, got: usize },
    #[error("numerical divergence at site {site} {coord:?} (step {step}, rho {rho})")]
    Divergence {
        site: usize,
        coord: [u32; 3],
        step: u64,
        rho: f64,
    },
    #[error(
        "measured {measured_s:.3e} s is below 100x the clock granularity {granularity_s:.3e} s"
    )]
    UnreliableMeasurement { measured_s: f64, granularity_s: f64 },
    #[error("measurement needs at least one step and one window")]
    InvalidMeasurement,
    #[error("{0}")]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Target density per in/outlet id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoundaryParams {
    pub densities: BTreeMap<u16, f64>,
}

impl BoundaryParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, id: u16, rho: f64) -> Self {
        self.densities.insert(id, rho);
        self
    }

    /// Every plane of `g` at density `rho`.
    pub fn uniform(g: &Geometry, rho: f64) -> Self {
        BoundaryParams {
            densities: g.planes().iter().map(|p| (p.id, rho)).collect(),
        }
    }
}

/// Distributions and moments. `rho` and `u` are the moments of `f` at the
/// start of the most recent step (or at initialization).
#[derive(Debug, Clone, PartialEq)]
pub struct LbState {
    pub f: Vec<[f64; Q]>,
    pub rho: Vec<f64>,
    pub u: Vec<[f64; 3]>,
    pub tau: f64,
    pub step: u64,
}

impl LbState {
    /// Every site at equilibrium with the given density and velocity.
    pub fn uniform(n: usize, tau: f64, rho: f64, u: [f64; 3]) -> Result<Self, LbError> {
        Self::from_fn(n, tau, |_| (rho, u))
    }

    pub fn from_fn(
        n: usize,
        tau: f64,
        init: impl Fn(usize) -> (f64, [f64; 3]),
    ) -> Result<Self, LbError> {
        if !(tau > 0.5) {
            return Err(LbError::InvalidTau(tau));
        }
        let (rho, u): (Vec<f64>, Vec<[f64; 3]>) = (0..n).map(&init).unzip();
        let f = rho
            .iter()
            .zip(&u)
            .map(|(&r, &v)| equilibrium(r, v))
            .collect();
        Ok(LbState {
            f,
            rho,
            u,
            tau,
            step: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.f.iter().map(|f| f.iter().sum::<f64>()).sum()
    }

    /// Recomputes `rho` and `u` from the current distributions.
    pub fn refresh_moments(&mut self) {
        for ((f, r), u) in self.f.iter().zip(&mut self.rho).zip(&mut self.u) {
            (*r, *u) = moments(f);
        }
    }

    pub fn max_speed(&self) -> f64 {
        self.u
            .iter()
            .map(|u| (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt())
            .fold(0.0, f64::max)
    }

    pub fn diagnostic(&self) -> Diagnostic {
        let mut s = self.clone();
        s.refresh_moments();
        Diagnostic {
            step: self.step,
            mass: self.mass(),
            max_u: s.max_speed(),
        }
    }
}

/// One row of the per-step diagnostics CSV.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Diagnostic {
    pub step: u64,
    pub mass: f64,
    pub max_u: f64,
}

pub fn write_diagnostics(rows: &[Diagnostic], w: impl Write) -> Result<(), LbError> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Second-order Maxwellian: `w_i rho (1 + 3 c.u + 9/2 (c.u)^2 - 3/2 u^2)`,
/// the `cs^2 = 1/3` form.
#[inline]
pub fn equilibrium(rho: f64, u: [f64; 3]) -> [f64; Q] {
    let [cx, cy, cz] = &COMPONENTS;
    let usq = 1.5 * (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
    let mut eq = [0.0; Q];
    for i in 0..Q {
        let cu = cx[i] * u[0] + cy[i] * u[1] + cz[i] * u[2];
        eq[i] = WEIGHTS[i] * rho * (1.0 + 3.0 * cu + 4.5 * cu * cu - usq);
    }
    eq
}

/// Density and velocity of one site.
#[inline]
pub fn moments(f: &[f64; Q]) -> (f64, [f64; 3]) {
    let [cx, cy, cz] = &COMPONENTS;
    let mut rho = 0.0;
    let mut m = [0.0; 3];
    for i in 0..Q {
        rho += f[i];
        m[0] += cx[i] * f[i];
        m[1] += cy[i] * f[i];
        m[2] += cz[i] * f[i];
    }
    let inv = 1.0 / rho;
    (rho, [m[0] * inv, m[1] * inv, m[2] * inv])
}

/// Linear interpolated bounce-back for a population leaving the site along a
/// link that meets a wall at fraction `q`. Returns the value streamed back
/// into the opposite direction.
///
/// * `out_here`: post-collision population along the link at the site;
/// * `out_behind`: same population at the fluid neighbour on the far side of
///   the site (`None` if there is none, which falls back to plain bounce-back);
/// * `back_here`: post-collision population in the opposite direction.
///
/// `q` must lie in `[0, 1)`.
pub fn apply_bfl(q: f64, out_here: f64, out_behind: Option<f64>, back_here: f64) -> f64 {
    debug_assert!((0.0..1.0).contains(&q), "q = {q} is not a wall link");
    if q < 0.5 {
        match out_behind {
            Some(b) => 2.0 * q * out_here + (1.0 - 2.0 * q) * b,
            None => out_here,
        }
    } else {
        out_here / (2.0 * q) + (2.0 * q - 1.0) / (2.0 * q) * back_here
    }
}

const NONE: u32 = u32::MAX;

/// How a site receives the population arriving from direction `j`.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Link {
    Neighbour(u32),
    /// Wall at fraction `q` along the outgoing link `opposite(j)`; `behind`
    /// is the fluid site in direction `j`.
    Wall {
        q: f64,
        behind: u32,
    },
    Pressure {
        rho: f64,
    },
    BounceBack,
}

/// Streaming tables for a geometry: neighbours for bulk sites and per-link
/// rules for every site with a boundary link.
#[derive(Debug, Clone)]
pub struct Kernel {
    coords: Vec<[u32; 3]>,
    /// Source site for each incoming direction `1..Q` (bulk sites only).
    sources: Vec<[u32; LINKS]>,
    /// `NONE` for bulk sites, otherwise an index into `boundary`.
    special: Vec<u32>,
    boundary: Vec<[Link; LINKS]>,
    /// Per boundary site: the fluid neighbour one step inward along the
    /// in/outlet normal, used to extrapolate the outflow velocity.
    inner: Vec<u32>,
    kinds: Vec<SiteKind>,
}

impl Kernel {
    pub fn new(g: &Geometry, params: &BoundaryParams) -> Result<Self, LbError> {
        for p in g.planes() {
            match params.densities.get(&p.id) {
                None => return Err(LbError::MissingBoundary(p.id)),
                Some(&rho) if !(rho > 0.0) => {
                    return Err(LbError::InvalidDensity { id: p.id, rho })
                }
                _ => {}
            }
        }
        let index = g.index();
        let n = g.len();
        let mut sources = vec![[NONE; LINKS]; n];
        let mut special = vec![NONE; n];
        let mut boundary = Vec::new();
        let mut inner = Vec::new();
        for (s, site) in g.sites().iter().enumerate() {
            let c = site.coord;
            let mut links = [Link::BounceBack; LINKS];
            let mut bulk = true;
            let mut inward = NONE;
            for j in 1..Q {
                let cj = VELOCITIES[j];
                let back = cj.map(|x| -x);
                let behind = index.neighbour(c, cj).map_or(NONE, |b| b as u32);
                links[j - 1] = match index.neighbour(c, back) {
                    Some(src) => {
                        sources[s][j - 1] = src as u32;
                        Link::Neighbour(src as u32)
                    }
                    None => {
                        bulk = false;
                        let out = opposite(j);
                        let q = site.wall_distances[out - 1];
                        let from = c.map(|x| x as f64);
                        let to = [0, 1, 2].map(|d| from[d] + back[d] as f64);
                        if q < 1.0 {
                            Link::Wall { q, behind }
                        } else if let Some(id) = crossed_plane(g.planes(), from, to) {
                            if inward == NONE {
                                let plane = g.planes().iter().find(|p| p.id == id).unwrap();
                                let d = inward_direction(plane.normal);
                                inward =
                                    index.neighbour(c, VELOCITIES[d]).map_or(NONE, |b| b as u32);
                            }
                            Link::Pressure {
                                rho: params.densities[&id],
                            }
                        } else {
                            Link::BounceBack
                        }
                    }
                };
            }
            if !bulk {
                special[s] = boundary.len() as u32;
                boundary.push(links);
                inner.push(inward);
            }
        }
        Ok(Kernel {
            coords: g.sites().iter().map(|s| s.coord).collect(),
            sources,
            special,
            boundary,
            inner,
            kinds: g.sites().iter().map(|s| s.kind()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn kinds(&self) -> &[SiteKind] {
        &self.kinds
    }

    /// Number of sites with at least one boundary link.
    pub fn boundary_sites(&self) -> usize {
        self.boundary.len()
    }

    /// Fresh state at rest with unit density.
    pub fn rest_state(&self, tau: f64) -> Result<LbState, LbError> {
        LbState::uniform(self.len(), tau, 1.0, [0.0; 3])
    }

    /// Advances `state` by one collide-and-stream step.
    pub fn step(
        &self,
        state: &mut LbState,
        scratch: &mut Scratch,
        exec: Exec,
    ) -> Result<(), LbError> {
        let n = self.len();
        if state.len() != n {
            return Err(LbError::Shape {
                expected: n,
                got: state.len(),
            });
        }
        scratch.post.resize(n, [0.0; Q]);
        let omega = 1.0 / state.tau;
        let f = &state.f;
        exec::for_each_zip3(
            exec,
            &mut scratch.post,
            &mut state.rho,
            &mut state.u,
            |s, post, rho, u| {
                let fs = &f[s];
                let (r, v) = moments(fs);
                *rho = r;
                *u = v;
                let eq = equilibrium(r, v);
                for i in 0..Q {
                    post[i] = fs[i] - omega * (fs[i] - eq[i]);
                }
            },
        );
        if let Some(site) = state.rho.iter().position(|r| !(*r > 0.0)) {
            return Err(LbError::Divergence {
                site,
                coord: self.coords[site],
                step: state.step,
                rho: state.rho[site],
            });
        }
        let post = &scratch.post;
        let u = &state.u;
        exec::for_each_mut(exec, &mut state.f, |s, out| {
            let b = self.special[s];
            if b == NONE {
                let src = &self.sources[s];
                out[0] = post[s][0];
                for j in 1..Q {
                    out[j] = post[src[j - 1] as usize][j];
                }
            } else {
                self.stream_boundary(s, b as usize, post, u, out);
            }
        });
        state.step += 1;
        Ok(())
    }

    fn stream_boundary(
        &self,
        s: usize,
        b: usize,
        post: &[[f64; Q]],
        u: &[[f64; 3]],
        out: &mut [f64; Q],
    ) {
        let links = &self.boundary[b];
        let here = &post[s];
        out[0] = here[0];
        // ghost equilibrium at (rho_b, u_w), rebuilt only if a site's links
        // cross planes held at different densities
        let mut ghost: Option<(f64, [f64; Q])> = None;
        for j in 1..Q {
            let i = opposite(j);
            out[j] = match links[j - 1] {
                Link::Neighbour(src) => post[src as usize][j],
                Link::Wall { q, behind } => {
                    let b = (behind != NONE).then(|| post[behind as usize][i]);
                    apply_bfl(q, here[i], b, here[j])
                }
                Link::Pressure { rho } => {
                    let eq = match ghost {
                        Some((r, eq)) if r == rho => eq,
                        _ => {
                            let eq = equilibrium(rho, wall_velocity(s, self.inner[b], u));
                            ghost = Some((rho, eq));
                            eq
                        }
                    };
                    // anti-bounce-back: -f*_i + 2 f^eq+_i(rho_b, u_w)
                    -here[i] + eq[i] + eq[j]
                }
                Link::BounceBack => here[i],
            };
        }
    }

    /// Runs `steps` steps, allocating the scratch lattice once.
    pub fn run(&self, state: &mut LbState, steps: u64, exec: Exec) -> Result<(), LbError> {
        let mut scratch = Scratch::default();
        for _ in 0..steps {
            self.step(state, &mut scratch, exec)?;
        }
        Ok(())
    }
}

/// Velocity half a link beyond the site, extrapolated linearly from the site
/// and its inner neighbour.
fn wall_velocity(s: usize, inner: u32, u: &[[f64; 3]]) -> [f64; 3] {
    let us = u[s];
    if inner == NONE {
        return us;
    }
    let ui = u[inner as usize];
    [0, 1, 2].map(|d| 1.5 * us[d] - 0.5 * ui[d])
}

/// Lattice direction most nearly opposite to `normal`.
fn inward_direction(normal: [f64; 3]) -> usize {
    (1..Q)
        .max_by(|&a, &b| {
            let score = |i: usize| {
                let c = VELOCITIES[i];
                let dot: f64 = (0..3).map(|d| -(c[d] as f64) * normal[d]).sum();
                dot / ((c[0] * c[0] + c[1] * c[1] + c[2] * c[2]) as f64).sqrt()
            };
            score(a).total_cmp(&score(b)).then(b.cmp(&a))
        })
        .unwrap()
}

/// Post-collision buffer reused across steps.
#[derive(Debug, Clone, Default)]
pub struct Scratch {
    post: Vec<[f64; Q]>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate_box, generate_channel, ChannelSpec};

    #[test]
    fn rest_equilibrium_is_weights() {
        let eq = equilibrium(1.0, [0.0; 3]);
        for i in 0..Q {
            assert_eq!(eq[i], WEIGHTS[i]);
        }
        assert!((eq[0] - 1.0 / 3.0).abs() < 1e-16);
        assert!((eq[1] - 1.0 / 18.0).abs() < 1e-16);
        assert!((eq[18] - 1.0 / 36.0).abs() < 1e-16);
    }

    #[test]
    fn equilibrium_moments() {
        for &(rho, u) in &[
            (1.0, [0.05, 0.0, 0.0]),
            (0.97, [0.01, -0.03, 0.02]),
            (1.2, [-0.08, 0.04, 0.06]),
        ] {
            let eq = equilibrium(rho, u);
            let (r, v) = moments(&eq);
            assert!((r - rho).abs() < 1e-14);
            for d in 0..3 {
                assert!((v[d] - u[d]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn equilibrium_matches_exact_rationals() {
        use num_rational::Ratio;
        type R = Ratio<i64>;
        let w = [R::new(1, 3), R::new(1, 18), R::new(1, 36)];
        let u = R::new(1, 20);
        let eq = equilibrium(1.0, [0.05, 0.0, 0.0]);
        for i in 0..Q {
            let c = VELOCITIES[i];
            let nz = c.iter().filter(|x| **x != 0).count();
            let cu = R::from(c[0] as i64) * u;
            let exact = w[nz]
                * (R::from(1) + R::from(3) * cu + R::new(9, 2) * cu * cu - R::new(3, 2) * u * u);
            let exact = *exact.numer() as f64 / *exact.denom() as f64;
            assert!((eq[i] - exact).abs() < 1e-16, "i={i}: {} vs {exact}", eq[i]);
        }
    }

    #[test]
    fn bfl_branches() {
        // midpoint is plain bounce-back from either branch
        assert_eq!(apply_bfl(0.5, 0.3, Some(0.9), 0.1), 0.3);
        assert_eq!(apply_bfl(0.5, 0.3, None, 0.1), 0.3);
        // continuity approaching 1/2 from below
        let below = apply_bfl(0.5 - 1e-12, 0.3, Some(0.9), 0.1);
        assert!((below - 0.3).abs() < 1e-10);
        // q -> 0 takes the population behind
        assert!((apply_bfl(1e-12, 0.3, Some(0.9), 0.1) - 0.9).abs() < 1e-10);
        let q = 0.75;
        assert!((apply_bfl(q, 0.3, None, 0.1) - (0.3 / 1.5 + 0.5 / 1.5 * 0.1)).abs() < 1e-16);
    }

    #[test]
    fn inward_direction_opposes_normal() {
        assert_eq!(VELOCITIES[inward_direction([1.0, 0.0, 0.0])], [-1, 0, 0]);
        assert_eq!(VELOCITIES[inward_direction([0.0, 0.0, -1.0])], [0, 0, 1]);
        let s = 0.5f64.sqrt();
        assert_eq!(VELOCITIES[inward_direction([s, s, 0.0])], [-1, -1, 0]);
    }

    #[test]
    fn uniform_periodic_box_is_fixed_point() {
        let g = generate_box([4, 3, 5], [true; 3]).unwrap();
        let k = Kernel::new(&g, &BoundaryParams::new()).unwrap();
        let mut st = LbState::uniform(g.len(), DEFAULT_TAU, 1.0, [0.02, -0.01, 0.03]).unwrap();
        let before = st.f.clone();
        k.run(&mut st, 5, Exec::Sequential).unwrap();
        for (a, b) in st.f.iter().zip(&before) {
            for i in 0..Q {
                assert!((a[i] - b[i]).abs() < 1e-15);
            }
        }
        assert_eq!(st.step, 5);
    }

    #[test]
    fn closed_box_conserves_mass() {
        let g = generate_box([6, 5, 4], [false; 3]).unwrap();
        let k = Kernel::new(&g, &BoundaryParams::new()).unwrap();
        let mut st = LbState::from_fn(g.len(), DEFAULT_TAU, |i| {
            let x = (i % 6) as f64;
            (1.0 + 0.01 * x, [0.02, 0.0, -0.01])
        })
        .unwrap();
        let m0 = st.mass();
        k.run(&mut st, 200, Exec::Sequential).unwrap();
        assert!(((st.mass() - m0) / m0).abs() < 1e-12);
    }

    #[test]
    fn parallel_matches_sequential() {
        let g = generate_channel(&ChannelSpec {
            width: 9,
            length: 12,
            depth: 3,
            wall_q: 0.3,
        })
        .unwrap();
        let bp = BoundaryParams::new().with(0, 1.002).with(1, 0.998);
        let k = Kernel::new(&g, &bp).unwrap();
        let mut a = k.rest_state(0.9).unwrap();
        let mut b = a.clone();
        k.run(&mut a, 30, Exec::Sequential).unwrap();
        k.run(&mut b, 30, Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn divergence_names_site() {
        let g = generate_box([3, 3, 3], [true; 3]).unwrap();
        let k = Kernel::new(&g, &BoundaryParams::new()).unwrap();
        let mut st = k.rest_state(DEFAULT_TAU).unwrap();
        st.f[13] = [f64::NAN; Q];
        match k.run(&mut st, 1, Exec::Sequential) {
            Err(LbError::Divergence { site, coord, .. }) => {
                assert_eq!(site, 13);
                assert_eq!(coord, [1, 1, 1]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn boundary_errors() {
        let g = generate_channel(&ChannelSpec {
            width: 4,
            length: 4,
            depth: 1,
            wall_q: 0.5,
        })
        .unwrap();
        assert!(matches!(
            Kernel::new(&g, &BoundaryParams::new().with(0, 1.0)),
            Err(LbError::MissingBoundary(1))
        ));
        assert!(matches!(
            Kernel::new(&g, &BoundaryParams::new().with(0, 1.0).with(1, 0.0)),
            Err(LbError::InvalidDensity { id: 1, .. })
        ));
        assert!(matches!(
            LbState::uniform(1, 0.5, 1.0, [0.0; 3]),
            Err(LbError::InvalidTau(_))
        ));
    }

    #[test]
    fn diagnostics_csv() {
        let rows = [Diagnostic {
            step: 3,
            mass: 2.5,
            max_u: 0.125,
        }];
        let mut buf = vec![];
        write_diagnostics(&rows, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "step,mass,max_u\n3,2.5,0.125\n"
        );
    }
}
