//! Benchmarks for the csl-turb kernels live in `benches/`.
