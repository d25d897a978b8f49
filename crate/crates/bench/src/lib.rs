//! Criterion benchmarks for the simulation and tree routines; see `benches/`.
