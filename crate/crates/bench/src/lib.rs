//! Criterion benchmarks for the rdff crates; the code lives under `benches/`.
