//! Benchmark harness for the fracgel kernels; see `benches/`.
