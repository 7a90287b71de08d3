//! Cost-weighted domain decomposition for sparse lattice-Boltzmann geometries.
//!
//! The crate covers the whole pipeline: synthetic geometries with classified
//! site types ([`geometry`]), Morton ordering ([`sfc`]), per-type cost fitting
//! and integer weights ([`weights`]), the D3Q19 site graph and a multilevel
//! k-way partitioner ([`graph`], [`partition`]), decomposition scores
//! ([`metrics`]), a serial D3Q19 LBGK kernel used for validation and
//! micro-benchmarks ([`lbkernel`]), and the batch experiment harness
//! ([`experiment`]).

pub mod exec;
pub mod experiment;
pub mod geometry;
pub mod graph;
pub mod lattice;
pub mod lbkernel;
pub mod metrics;
pub mod partition;
pub mod sfc;
pub mod weights;

pub use exec::Exec;
