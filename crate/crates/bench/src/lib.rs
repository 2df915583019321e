//! Benchmarks for the sampler hot paths live in `benches/`.
