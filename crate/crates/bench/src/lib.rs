//! Benchmark-only crate; see `benches/kernels.rs`.

/// Seed shared by the benchmark fixtures.
pub const BENCH_SEED: u64 = 0xbe7c;
