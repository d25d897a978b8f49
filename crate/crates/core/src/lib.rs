//! Renewal population dynamics `f(n) = n + a_n` on the integers.
//!
//! Each integer `n` is born at time `n` and lives for `a_n` steps; the marks
//! `a_n` are i.i.d. positive integers. The crate simulates windows of marks,
//! the population process, the family forest with its successful and
//! ephemeral nodes, closed-form stationary quantities, and Palm estimators.

#![allow(clippy::needless_range_loop)]

pub mod analytic;
pub mod error;
pub mod marks;
pub mod population;
pub mod special;
pub mod stats;
pub mod tree;
pub mod verify;

pub use analytic::{
    geometric_moments, geometric_pgf, intensities, markov_row, population_mgf, renewal_sequence, GeometricMoments,
    IntensityReport, SeriesValue,
};
pub use error::{Error, Result};
pub use marks::{sample_mark, sample_marks, DistSpec, MarkDistribution, SeedSpec};
pub use population::{
    burn_in, original_ancestors, population_process, regeneration_cycles, regeneration_epochs, simulate_marks, Cycle,
    CycleSet, MarkWindow, PointLabel, PointSample, PopulationTrace, Provenance,
};
pub use stats::{Estimate, Method};
pub use tree::{build_forest, component_count, EphemeralTree, FamilyForest, Foil, NodeLabel};
