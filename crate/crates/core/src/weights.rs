//! Per-site-type costs fitted from benchmark runtimes, and the integer
//! vertex weights handed to the partitioner.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::geometry::{Geometry, PerKind, SiteKind};

/// Bulk cost after normalization.
pub const BULK_COST: f64 = 10.0;

/// Default integer weight of a bulk site.
pub const BULK_WEIGHT: u32 = 4;

/// Singular values below this fraction of the largest count as zero.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, thiserror::Error)]
pub enum WeightsError {
    #[error("underdetermined fit: {observations} observations for {unknowns} site types")]
    Underdetermined {
        observations: usize,
        unknowns: usize,
    },
    #[error("site count matrix is rank deficient; vary the cylinder aspect ratios")]
    RankDeficient,
    #[error("no bulk sites in any observation; cannot normalize")]
    NoBulk,
    #[error("invalid observation {index}: {reason}")]
    InvalidObservation { index: usize, reason: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Site counts of one benchmark run and its measured runtime.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkObservation {
    pub counts: PerKind<u64>,
    pub runtime_s: f64,
}

impl BenchmarkObservation {
    fn check(&self, index: usize) -> Result<(), WeightsError> {
        let bad = |reason: &str| WeightsError::InvalidObservation {
            index,
            reason: reason.into(),
        };
        if self.counts.0.iter().all(|&c| c == 0) {
            return Err(bad("all site counts are zero"));
        }
        if !(self.runtime_s > 0.0 && self.runtime_s.is_finite()) {
            return Err(bad("runtime must be positive"));
        }
        Ok(())
    }
}

/// Fitted per-type costs normalized so that bulk costs [`BULK_COST`].
#[derive(Debug, Clone, PartialEq)]
pub struct FittedCosts {
    pub costs: PerKind<f64>,
    /// Types whose unconstrained fit came out non-positive; their cost was
    /// clamped to a small floor and the rest refitted.
    pub degenerate: Vec<SiteKind>,
    /// Types absent from every observation; they carry the bulk cost.
    pub unfitted: Vec<SiteKind>,
    /// Root mean square of the relative runtime residuals.
    pub relative_rms_residual: f64,
}

impl FittedCosts {
    /// Builds normalized costs from raw per-type values (bulk must be > 0).
    pub fn from_raw(raw: PerKind<f64>) -> Self {
        let bulk = raw[SiteKind::Bulk];
        FittedCosts {
            costs: raw.map(|c| c / bulk * BULK_COST),
            degenerate: vec![],
            unfitted: vec![],
            relative_rms_residual: 0.0,
        }
    }

    pub fn uniform() -> Self {
        Self::from_raw(PerKind::splat(1.0))
    }

    pub fn cost(&self, kind: SiteKind) -> f64 {
        self.costs[kind]
    }
}

/// Least-squares fit of `runtime = sum_type count * cost`, normalized so bulk
/// costs 10. Types with no sites in any observation are not fitted.
pub fn fit_costs(observations: &[BenchmarkObservation]) -> Result<FittedCosts, WeightsError> {
    for (i, o) in observations.iter().enumerate() {
        o.check(i)?;
    }
    let present: Vec<SiteKind> = SiteKind::ALL
        .into_iter()
        .filter(|&k| observations.iter().any(|o| o.counts[k] > 0))
        .collect();
    if !present.contains(&SiteKind::Bulk) {
        return Err(WeightsError::NoBulk);
    }
    if observations.len() < present.len() {
        return Err(WeightsError::Underdetermined {
            observations: observations.len(),
            unknowns: present.len(),
        });
    }
    let total_sites: f64 = observations
        .iter()
        .map(|o| o.counts.0.iter().sum::<u64>() as f64)
        .sum();
    let total_time: f64 = observations.iter().map(|o| o.runtime_s).sum();
    let floor = 1e-3 * total_time / total_sites;

    let mut raw = PerKind::splat(f64::NAN);
    let mut active = present.clone();
    let mut degenerate = vec![];
    let mut rhs: Vec<f64> = observations.iter().map(|o| o.runtime_s).collect();
    loop {
        let solution = solve_least_squares(observations, &active, &rhs)?;
        let worst = active
            .iter()
            .zip(&solution)
            .filter(|(_, &c)| c <= 0.0)
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(&k, _)| k);
        match worst {
            Some(k) if active.len() > 1 => {
                degenerate.push(k);
                raw[k] = floor;
                for (r, o) in rhs.iter_mut().zip(observations) {
                    *r -= floor * o.counts[k] as f64;
                }
                active.retain(|&a| a != k);
            }
            _ => {
                for (&k, &c) in active.iter().zip(&solution) {
                    raw[k] = c.max(floor);
                }
                break;
            }
        }
    }
    let unfitted: Vec<SiteKind> = SiteKind::ALL
        .into_iter()
        .filter(|k| !present.contains(k))
        .collect();
    for &k in &unfitted {
        raw[k] = raw[SiteKind::Bulk];
    }
    let sq: f64 = observations
        .iter()
        .map(|o| {
            let predicted: f64 = SiteKind::ALL
                .iter()
                .map(|&k| o.counts[k] as f64 * raw[k])
                .sum();
            ((predicted - o.runtime_s) / o.runtime_s).powi(2)
        })
        .sum();
    let mut fitted = FittedCosts::from_raw(raw);
    degenerate.sort();
    fitted.degenerate = degenerate;
    fitted.unfitted = unfitted;
    fitted.relative_rms_residual = (sq / observations.len() as f64).sqrt();
    Ok(fitted)
}

/// SVD least squares over the `active` columns, with columns scaled to unit
/// norm so the rank test is independent of the site-count magnitudes.
fn solve_least_squares(
    observations: &[BenchmarkObservation],
    active: &[SiteKind],
    rhs: &[f64],
) -> Result<Vec<f64>, WeightsError> {
    let m = observations.len();
    let n = active.len();
    let mut a = DMatrix::from_fn(m, n, |i, j| observations[i].counts[active[j]] as f64);
    let norms: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    for (j, &s) in norms.iter().enumerate() {
        a.column_mut(j).scale_mut(1.0 / s);
    }
    let b = DVector::from_column_slice(rhs);
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= RANK_TOLERANCE * smax {
        return Err(WeightsError::RankDeficient);
    }
    let x = svd
        .solve(&b, 0.0)
        .map_err(|_| WeightsError::RankDeficient)?;
    Ok((0..n).map(|j| x[j] / norms[j]).collect())
}

/// Integer partitioning weight per site type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WeightTable(pub PerKind<u32>);

impl WeightTable {
    /// Every site weighs 1.
    pub fn unit() -> Self {
        WeightTable(PerKind::splat(1))
    }

    pub fn weight(&self, kind: SiteKind) -> u32 {
        self.0[kind]
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for k in SiteKind::ALL {
            let _ = writeln!(s, "{}={}", k.name(), self.0[k]);
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, WeightsError> {
        let values = parse_table(text)?;
        let mut w = PerKind::splat(0u32);
        for k in SiteKind::ALL {
            let v: u32 = values[k]
                .parse()
                .map_err(|_| WeightsError::Parse(format!("{}: not an integer", k.name())))?;
            if v == 0 {
                return Err(WeightsError::Parse(format!("{}: weight 0", k.name())));
            }
            w[k] = v;
        }
        Ok(WeightTable(w))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), WeightsError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, WeightsError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

impl FittedCosts {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for k in SiteKind::ALL {
            let _ = writeln!(s, "{}={:.6}", k.name(), self.costs[k]);
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, WeightsError> {
        let values = parse_table(text)?;
        let mut raw = PerKind::splat(0.0);
        for k in SiteKind::ALL {
            let v: f64 = values[k]
                .parse()
                .map_err(|_| WeightsError::Parse(format!("{}: not a number", k.name())))?;
            if !(v > 0.0 && v.is_finite()) {
                return Err(WeightsError::Parse(format!(
                    "{}: cost must be > 0",
                    k.name()
                )));
            }
            raw[k] = v;
        }
        Ok(FittedCosts::from_raw(raw))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), WeightsError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, WeightsError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// `type=value` lines, one per site type; `#` starts a comment.
fn parse_table(text: &str) -> Result<PerKind<String>, WeightsError> {
    let mut out: [Option<String>; 4] = Default::default();
    for line in text.lines() {
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| WeightsError::Parse(format!("expected type=value, got {line:?}")))?;
        let kind = SiteKind::from_name(key.trim())
            .ok_or_else(|| WeightsError::Parse(format!("unknown site type {key:?}")))?;
        if out[kind as usize]
            .replace(value.trim().to_string())
            .is_some()
        {
            return Err(WeightsError::Parse(format!("duplicate entry for {key}")));
        }
    }
    let mut values: [String; 4] = Default::default();
    for k in SiteKind::ALL {
        values[k as usize] = out[k as usize]
            .take()
            .ok_or_else(|| WeightsError::Parse(format!("missing entry for {}", k.name())))?;
    }
    Ok(PerKind(values))
}

fn nearest_power_of_two(x: f64) -> u32 {
    if !(x > 1.0) {
        return 1;
    }
    let mut lo = 1u32;
    while (lo as f64) * 2.0 <= x && lo < 1 << 30 {
        lo *= 2;
    }
    let hi = lo * 2;
    if x - (lo as f64) < hi as f64 - x {
        lo
    } else {
        hi
    }
}

/// Scales costs so bulk maps to `base` and rounds each to the nearest power
/// of two (at least 1). Wall-in/outlet sites take the in/outlet weight.
pub fn round_costs(c: &FittedCosts, base: u32) -> WeightTable {
    let bulk = c.costs[SiteKind::Bulk];
    let mut w = c
        .costs
        .map(|cost| nearest_power_of_two(cost / bulk * base as f64));
    w[SiteKind::WallInOutlet] = w[SiteKind::InOutlet];
    WeightTable(w)
}

/// Vertex weight of every site, in site order.
pub fn assign_weights(g: &Geometry, w: &WeightTable) -> Vec<u64> {
    g.sites()
        .iter()
        .map(|s| w.weight(s.kind()) as u64)
        .collect()
}

/// Fitted cost of every site, in site order.
pub fn site_costs(g: &Geometry, c: &FittedCosts) -> Vec<f64> {
    g.sites().iter().map(|s| c.cost(s.kind())).collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct ObservationRecord {
    bulk: u64,
    wall: u64,
    inout: u64,
    wallinout: u64,
    runtime_s: f64,
}

pub fn write_observations(
    observations: &[BenchmarkObservation],
    w: impl std::io::Write,
) -> Result<(), WeightsError> {
    let mut wtr = csv::Writer::from_writer(w);
    for o in observations {
        let c = o.counts.0;
        wtr.serialize(ObservationRecord {
            bulk: c[0],
            wall: c[1],
            inout: c[2],
            wallinout: c[3],
            runtime_s: o.runtime_s,
        })?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_observations(r: impl std::io::Read) -> Result<Vec<BenchmarkObservation>, WeightsError> {
    let mut rdr = csv::Reader::from_reader(r);
    let expected = ["bulk", "wall", "inout", "wallinout", "runtime_s"];
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(WeightsError::Parse(format!(
            "observation header must be {}",
            expected.join(",")
        )));
    }
    rdr.deserialize()
        .map(|r| {
            let r: ObservationRecord = r?;
            Ok(BenchmarkObservation {
                counts: PerKind([r.bulk, r.wall, r.inout, r.wallinout]),
                runtime_s: r.runtime_s,
            })
        })
        .collect()
}

/// Fitted values reported for the two benchmark machines (bulk, wall,
/// in/outlet, wall+in/outlet).
pub const INTEL_COSTS: [f64; 4] = [10.0, 18.708, 40.037, 22.700];
pub const AMD_COSTS: [f64; 4] = [10.0, 20.226, 37.398, 34.577];
