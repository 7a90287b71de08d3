//! Per-site-type cost micro-benchmarks on a suite of cylinders.

use std::time::{Duration, Instant};

use super::{BoundaryParams, Kernel, LbError, Scratch, DEFAULT_TAU};
use crate::exec::Exec;
use crate::geometry::{generate_cylinder, Axis, Geometry, PerKind, SiteKind};
use crate::weights::BenchmarkObservation;

/// Diameter-to-length ratios of the calibration cylinders, narrow to wide.
pub const CALIBRATION_ASPECTS: [f64; 6] = [0.125, 0.25, 0.5, 2.0, 4.0, 8.0];

/// Radius paired with each aspect ratio. Every cylinder stays small enough
/// for its distributions to remain cache resident (445 to 7400 sites), and
/// the unequal sizes keep the site-count matrix well conditioned; six
/// equal-volume cylinders leave the wall-and-in/outlet column nearly
/// dependent on the others.
pub const CALIBRATION_RADII: [f64; 6] = [5.25, 6.5, 8.25, 5.25, 14.5, 16.0];

/// The six calibration cylinders, narrow to wide.
pub fn calibration_cylinders() -> Result<Vec<Geometry>, LbError> {
    CALIBRATION_ASPECTS
        .iter()
        .zip(CALIBRATION_RADII)
        .map(|(&aspect, radius)| {
            let length = (2.0 * radius / aspect).round().max(2.0) as u32;
            Ok(generate_cylinder(radius, length, Axis::Z)?)
        })
        .collect()
}

/// Shortest timed window accepted, whatever the clock resolution; below this
/// scheduler and cache noise dominate.
pub const MIN_WINDOW_S: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasureConfig {
    /// Untimed steps per geometry before the first window.
    pub warmup: u64,
    /// Steps per timed window.
    pub steps: u64,
    /// Timed rounds; each round runs one window on every geometry.
    pub windows: usize,
    pub tau: f64,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        MeasureConfig {
            warmup: 10,
            steps: 8,
            windows: 30,
            tau: DEFAULT_TAU,
        }
    }
}

/// Times the single-threaded kernel on each geometry and pairs a per-step
/// time with the site-type counts. Each round times one window per geometry
/// back to back, each after one untimed step that reloads its caches. A
/// geometry's time is its median share of the round total, scaled by the
/// fastest round. Host-wide slowdowns then cancel, and only relative costs
/// matter downstream. The inlet (id 0) is held at density 1.001 and every
/// other plane at 0.999.
pub fn measure_site_costs(
    geometries: &[Geometry],
    cfg: &MeasureConfig,
) -> Result<Vec<BenchmarkObservation>, LbError> {
    if cfg.steps == 0 || cfg.windows == 0 {
        return Err(LbError::InvalidMeasurement);
    }
    let granularity = clock_granularity();
    let min_window = (100.0 * granularity.as_secs_f64()).max(MIN_WINDOW_S);
    let mut runs = Vec::with_capacity(geometries.len());
    for g in geometries {
        let mut params = BoundaryParams::uniform(g, 0.999);
        params.densities.insert(0, 1.001);
        let kernel = Kernel::new(g, &params)?;
        let mut state = kernel.rest_state(cfg.tau)?;
        let mut scratch = Scratch::default();
        for _ in 0..cfg.warmup {
            kernel.step(&mut state, &mut scratch, Exec::Sequential)?;
        }
        runs.push((kernel, state, scratch));
    }
    let mut rounds: Vec<Vec<f64>> = Vec::with_capacity(cfg.windows);
    for _ in 0..cfg.windows {
        let mut times = Vec::with_capacity(runs.len());
        for (kernel, state, scratch) in &mut runs {
            // the previous geometry evicted this one from cache; reload untimed
            kernel.step(state, scratch, Exec::Sequential)?;
            let t = Instant::now();
            for _ in 0..cfg.steps {
                kernel.step(state, scratch, Exec::Sequential)?;
            }
            let dt = t.elapsed();
            if dt.as_secs_f64() < min_window {
                return Err(LbError::UnreliableMeasurement {
                    measured_s: dt.as_secs_f64(),
                    granularity_s: granularity.as_secs_f64(),
                });
            }
            times.push(dt.as_secs_f64());
        }
        rounds.push(times);
    }
    let totals: Vec<f64> = rounds.iter().map(|r| r.iter().sum()).collect();
    let fastest = totals.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(runs
        .iter()
        .enumerate()
        .map(|(g, (kernel, _, _))| {
            let shares: Vec<f64> = rounds.iter().zip(&totals).map(|(r, t)| r[g] / t).collect();
            BenchmarkObservation {
                counts: count_kinds(kernel.kinds()),
                runtime_s: median(shares) * fastest / cfg.steps as f64,
            }
        })
        .collect())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn count_kinds(kinds: &[SiteKind]) -> PerKind<u64> {
    let mut c = PerKind::splat(0u64);
    for &k in kinds {
        c[k] += 1;
    }
    c
}

/// Smallest non-zero difference between consecutive clock readings.
fn clock_granularity() -> Duration {
    let mut best = Duration::MAX;
    for _ in 0..200 {
        let a = Instant::now();
        let mut b = Instant::now();
        while b == a {
            b = Instant::now();
        }
        best = best.min(b - a);
    }
    best
}
