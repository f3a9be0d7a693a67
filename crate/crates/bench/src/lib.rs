//! Criterion benchmarks for ifslab kernels live under `benches/`.
