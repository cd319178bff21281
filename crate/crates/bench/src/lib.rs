// SPDX-License-Identifier: Apache-2.0

//! Benchmarks live in `benches/`; run them with `cargo bench -p mgsim-bench`.
