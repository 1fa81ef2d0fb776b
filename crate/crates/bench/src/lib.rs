//! Benchmarks of the simulator and learner hot paths; see `benches/`.
