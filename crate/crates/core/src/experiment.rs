//! Calibration and the decomposition experiment matrix.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::exec::{self, Exec};
use crate::geometry::{
    generate_bifurcation, generate_box, generate_channel, generate_cylinder, load_geometry, Axis,
    BifurcationSpec, ChannelSpec, Geometry, GeometryError, SiteKind,
};
use crate::graph::build_graph_with;
use crate::lbkernel::{calibration_cylinders, measure_site_costs, LbError, MeasureConfig};
use crate::metrics::{evaluate, imbalance_reduction, CommModel, MetricsRow};
use crate::partition::{partition_graph, Partition, PartitionConfig, Variant};
use crate::sfc::sort_by_morton;
use crate::weights::{
    assign_weights, fit_costs, round_costs, BenchmarkObservation, FittedCosts, WeightTable,
    WeightsError, BULK_WEIGHT, INTEL_COSTS,
};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("bad geometry spec '{spec}': {reason}")]
    GeometrySpec { spec: String, reason: String },
    #[error("unknown variant '{0}' (expected baseline, weights, sfc or weights+sfc)")]
    UnknownVariant(String),
    #[error("experiment needs at least one part count and one variant")]
    EmptyMatrix,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Kernel(#[from] LbError),
    #[error("{0}; vary the cylinder aspect ratios so every site type changes share")]
    RankDeficient(WeightsError),
    #[error(transparent)]
    Weights(WeightsError),
    #[error("{0}")]
    Schema(String),
}

impl From<WeightsError> for ExperimentError {
    fn from(e: WeightsError) -> Self {
        match e {
            WeightsError::RankDeficient | WeightsError::Underdetermined { .. } => {
                ExperimentError::RankDeficient(e)
            }
            e => ExperimentError::Weights(e),
        }
    }
}

/// Where the geometry comes from: a generator with parameters, or a file.
///
/// Generator syntax is `kind:key=value,...`, for example
/// `cylinder:radius=8,length=64,axis=z` or
/// `bifurcation:trunk_radius=12,branch_radius=6,fluid_fraction=0.1`.
#[derive(Debug, Clone, PartialEq)]
pub enum GeometrySource {
    Cylinder {
        radius: f64,
        length: u32,
        axis: Axis,
    },
    Bifurcation(BifurcationSpec),
    Channel(ChannelSpec),
    Box {
        dims: [u32; 3],
    },
    File(PathBuf),
}

impl GeometrySource {
    pub fn load(&self) -> Result<Geometry, ExperimentError> {
        Ok(match self {
            GeometrySource::Cylinder {
                radius,
                length,
                axis,
            } => generate_cylinder(*radius, *length, *axis)?,
            GeometrySource::Bifurcation(s) => generate_bifurcation(s)?,
            GeometrySource::Channel(s) => generate_channel(s)?,
            GeometrySource::Box { dims } => generate_box(*dims, [false; 3])?,
            GeometrySource::File(p) => load_geometry(p)?,
        })
    }
}

impl FromStr for GeometrySource {
    type Err = ExperimentError;

    fn from_str(spec: &str) -> Result<Self, Self::Err> {
        let Some((kind, params)) = spec.split_once(':') else {
            return Ok(GeometrySource::File(PathBuf::from(spec)));
        };
        let err = |reason: String| ExperimentError::GeometrySpec {
            spec: spec.to_string(),
            reason,
        };
        let mut kv: BTreeMap<&str, &str> = BTreeMap::new();
        for item in params.split(',').filter(|s| !s.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| err(format!("'{item}' is not key=value")))?;
            kv.insert(k.trim(), v.trim());
        }
        let mut take = |key: &str| kv.remove(key);
        let num = |v: Option<&str>, key: &str, default: f64| -> Result<f64, ExperimentError> {
            v.map_or(Ok(default), |s| {
                s.parse::<f64>()
                    .map_err(|_| err(format!("{key}={s} is not a number")))
            })
        };
        let int = |v: Option<&str>, key: &str, default: u32| -> Result<u32, ExperimentError> {
            v.map_or(Ok(default), |s| {
                s.parse::<u32>()
                    .map_err(|_| err(format!("{key}={s} is not a non-negative integer")))
            })
        };
        let source = match kind {
            "cylinder" => {
                let axis = match take("axis").unwrap_or("z") {
                    "x" => Axis::X,
                    "y" => Axis::Y,
                    "z" => Axis::Z,
                    a => return Err(err(format!("axis {a} is not x, y or z"))),
                };
                GeometrySource::Cylinder {
                    radius: num(take("radius"), "radius", 8.0)?,
                    length: int(take("length"), "length", 64)?,
                    axis,
                }
            }
            "bifurcation" => {
                let d = BifurcationSpec::default();
                let ff = take("fluid_fraction");
                GeometrySource::Bifurcation(BifurcationSpec {
                    trunk_radius: num(take("trunk_radius"), "trunk_radius", d.trunk_radius)?,
                    branch_radius: num(take("branch_radius"), "branch_radius", d.branch_radius)?,
                    branch_angle_deg: num(take("angle"), "angle", d.branch_angle_deg)?,
                    trunk_length: num(take("trunk_length"), "trunk_length", d.trunk_length)?,
                    branch_length: num(take("branch_length"), "branch_length", d.branch_length)?,
                    fluid_fraction: ff
                        .map(|v| num(Some(v), "fluid_fraction", 0.0))
                        .transpose()?,
                })
            }
            "channel" => GeometrySource::Channel(ChannelSpec {
                width: int(take("width"), "width", 32)?,
                length: int(take("length"), "length", 64)?,
                depth: int(take("depth"), "depth", 1)?,
                wall_q: num(take("wall_q"), "wall_q", 0.5)?,
            }),
            "box" => GeometrySource::Box {
                dims: [
                    int(take("nx"), "nx", 16)?,
                    int(take("ny"), "ny", 16)?,
                    int(take("nz"), "nz", 16)?,
                ],
            },
            other => return Err(err(format!("unknown generator '{other}'"))),
        };
        if let Some(k) = kv.keys().next() {
            return Err(err(format!("unknown parameter '{k}'")));
        }
        Ok(source)
    }
}

/// The four configurations compared by the experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExperimentVariant {
    /// Multilevel k-way with unit vertex weights.
    Baseline,
    /// Multilevel k-way with per-type weights.
    Weights,
    /// Morton-ordered sites, geometric k-way, unit weights.
    Sfc,
    /// Morton-ordered sites, geometric k-way, per-type weights.
    WeightsSfc,
}

impl ExperimentVariant {
    pub const ALL: [ExperimentVariant; 4] = [
        ExperimentVariant::Baseline,
        ExperimentVariant::Weights,
        ExperimentVariant::Sfc,
        ExperimentVariant::WeightsSfc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentVariant::Baseline => "baseline",
            ExperimentVariant::Weights => "weights",
            ExperimentVariant::Sfc => "sfc",
            ExperimentVariant::WeightsSfc => "weights+sfc",
        }
    }

    pub fn weighted(self) -> bool {
        matches!(
            self,
            ExperimentVariant::Weights | ExperimentVariant::WeightsSfc
        )
    }

    pub fn space_filling(self) -> bool {
        matches!(self, ExperimentVariant::Sfc | ExperimentVariant::WeightsSfc)
    }
}

impl FromStr for ExperimentVariant {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ExperimentVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| ExperimentError::UnknownVariant(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub nparts: Vec<usize>,
    pub variants: Vec<ExperimentVariant>,
    /// Vertex weights for the weighted variants.
    pub weights: WeightTable,
    /// Cost model under which every variant's load imbalance is measured.
    pub costs: FittedCosts,
    pub comm: CommModel,
    pub tolerance: f64,
    pub seed: u64,
    /// Seconds per bulk-site update in the step-time model.
    pub per_site_time: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            nparts: vec![16],
            variants: ExperimentVariant::ALL.to_vec(),
            weights: WeightTable(crate::geometry::PerKind([4, 8, 16, 16])),
            costs: FittedCosts::from_raw(crate::geometry::PerKind(INTEL_COSTS)),
            comm: CommModel::default(),
            tolerance: crate::partition::DEFAULT_TOLERANCE,
            seed: 0,
            per_site_time: 1.0e-7,
        }
    }
}

/// Outcome of one (variant, nparts) cell.
#[derive(Debug, Clone)]
pub struct RowOutcome {
    pub variant: ExperimentVariant,
    pub nparts: usize,
    /// Metrics row and the partition in original site order, or the reason
    /// the cell failed.
    pub result: Result<(MetricsRow, Partition), String>,
}

/// Runs every (variant, nparts) cell; cells run concurrently under `exec`
/// and come back in configuration order (variants outer, part counts inner).
pub fn run_experiment(
    cfg: &ExperimentConfig,
    geometry: &Geometry,
    exec: Exec,
) -> Result<Vec<RowOutcome>, ExperimentError> {
    if cfg.nparts.is_empty() || cfg.variants.is_empty() {
        return Err(ExperimentError::EmptyMatrix);
    }
    let (sorted, perm) = sort_by_morton(geometry);
    let cells: Vec<(ExperimentVariant, usize)> = cfg
        .variants
        .iter()
        .flat_map(|&v| cfg.nparts.iter().map(move |&n| (v, n)))
        .collect();
    Ok(exec::map_slice(exec, &cells, |&(variant, nparts)| {
        RowOutcome {
            variant,
            nparts,
            result: run_cell(cfg, geometry, &sorted, &perm, variant, nparts),
        }
    }))
}

fn run_cell(
    cfg: &ExperimentConfig,
    original: &Geometry,
    sorted: &Geometry,
    perm: &[usize],
    variant: ExperimentVariant,
    nparts: usize,
) -> Result<(MetricsRow, Partition), String> {
    let g = if variant.space_filling() {
        sorted
    } else {
        original
    };
    let weights = if variant.weighted() {
        assign_weights(g, &cfg.weights)
    } else {
        vec![BULK_WEIGHT as u64; g.len()]
    };
    let graph = build_graph_with(g, &weights, Exec::Sequential).map_err(|e| e.to_string())?;
    let pcfg = PartitionConfig {
        tolerance: cfg.tolerance,
        seed: cfg.seed,
        ..PartitionConfig::new(
            nparts,
            if variant.space_filling() {
                Variant::GeomKWay
            } else {
                Variant::KWay
            },
        )
    };
    let mut part = partition_graph(&graph, &pcfg).map_err(|e| e.to_string())?;
    let kinds: Vec<SiteKind> = g.sites().iter().map(|s| s.kind()).collect();
    let m = evaluate(
        &graph,
        &kinds,
        &part.assignment,
        nparts,
        &cfg.costs,
        &cfg.comm,
        cfg.per_site_time,
        Exec::Sequential,
    )
    .map_err(|e| e.to_string())?;
    if variant.space_filling() {
        // back to the caller's site order
        let mut original_order = vec![0u32; part.assignment.len()];
        for (old, &new) in perm.iter().enumerate() {
            original_order[old] = part.assignment[new];
        }
        part.assignment = original_order;
    }
    Ok((MetricsRow::new(variant.name(), nparts, cfg.seed, &m), part))
}

/// Per part count: each variant's imbalance and its reduction relative to
/// the baseline row (same part count and seed), when one is present.
pub fn summarize(rows: &[MetricsRow]) -> String {
    let mut out = String::new();
    let mut by_key: BTreeMap<(usize, u64), Vec<&MetricsRow>> = BTreeMap::new();
    for r in rows {
        by_key.entry((r.nparts, r.seed)).or_default().push(r);
    }
    for ((nparts, seed), group) in by_key {
        let base = group.iter().find(|r| r.variant == "baseline");
        let _ = writeln!(out, "nparts={nparts} seed={seed}");
        for r in &group {
            let red = base.map_or(String::from("-"), |b| {
                format!(
                    "{:.1}%",
                    imbalance_reduction(b.load_imbalance, r.load_imbalance)
                )
            });
            let _ = writeln!(
                out,
                "  {:<12} imbalance {:.4}  reduction {red}  edge cut {}",
                r.variant, r.load_imbalance, r.edge_cut
            );
        }
    }
    out
}

/// Aligned comparison table with a reduction column against the matching
/// baseline row.
pub fn report_table(rows: &[MetricsRow]) -> String {
    let header = [
        "variant",
        "nparts",
        "seed",
        "edge_cut",
        "imbalance",
        "reduction_%",
        "max_volume",
        "max_partners",
        "step_time_s",
    ];
    let mut cells: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for r in rows {
        let base = rows
            .iter()
            .find(|b| b.variant == "baseline" && b.nparts == r.nparts && b.seed == r.seed);
        let red = base.map_or(String::from("-"), |b| {
            format!(
                "{:.1}",
                imbalance_reduction(b.load_imbalance, r.load_imbalance)
            )
        });
        cells.push(vec![
            r.variant.clone(),
            r.nparts.to_string(),
            r.seed.to_string(),
            r.edge_cut.to_string(),
            format!("{:.4}", r.load_imbalance),
            red,
            r.max_comm_volume.to_string(),
            r.max_partners.to_string(),
            format!("{:.3e}", r.predicted_step_time_s),
        ]);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|c| cells.iter().map(|row| row[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &cells {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (s, w))| {
                if i == 0 {
                    format!("{s:<w$}")
                } else {
                    format!("{s:>w$}")
                }
            })
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationConfig {
    pub measure: MeasureConfig,
    /// Weight given to bulk sites in the rounded table.
    pub base: u32,
    /// Independent measurements per cylinder; the median runtime is fitted.
    pub repeats: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            measure: MeasureConfig::default(),
            base: BULK_WEIGHT,
            repeats: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Calibration {
    pub observations: Vec<BenchmarkObservation>,
    pub costs: FittedCosts,
    pub weights: WeightTable,
}

/// Times the six calibration cylinders `repeats` times, fits per-type costs
/// to the median runtimes and rounds them to a weight table.
pub fn run_calibration(cfg: &CalibrationConfig) -> Result<Calibration, ExperimentError> {
    if cfg.repeats == 0 {
        return Err(LbError::InvalidMeasurement.into());
    }
    let suite = calibration_cylinders()?;
    let runs = (0..cfg.repeats)
        .map(|_| measure_site_costs(&suite, &cfg.measure))
        .collect::<Result<Vec<_>, _>>()?;
    let mut observations = runs[0].clone();
    for (i, obs) in observations.iter_mut().enumerate() {
        let mut t: Vec<f64> = runs.iter().map(|r| r[i].runtime_s).collect();
        t.sort_by(f64::total_cmp);
        obs.runtime_s = t[t.len() / 2];
    }
    let costs = fit_costs(&observations)?;
    let weights = round_costs(&costs, cfg.base);
    Ok(Calibration {
        observations,
        costs,
        weights,
    })
}
