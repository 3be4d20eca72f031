//! Criterion benchmarks of the plant model; see `benches/plant.rs`.
