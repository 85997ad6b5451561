//! Criterion benchmarks for the metric, fusion and model kernels live in
//! `benches/`; this library target is intentionally empty.
