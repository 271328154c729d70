//! Empty on purpose: this package only carries the benchmarks in `benches/`.
