//! Criterion benchmarks for ncfair live under `benches/`.
