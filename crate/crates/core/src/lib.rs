//! Distributed finite-sum optimization with random reshuffling and unbiased
//! gradient compression: Q-RR, DIANA-RR, Q-NASTYA, DIANA-NASTYA and their
//! with-replacement and uncompressed baselines, simulated in one process.

pub mod objective;
pub mod rng;
pub mod compressors;
pub mod shuffling;
pub mod algorithms;
pub mod stepsizes;
pub mod diagnostics;
pub mod harness;
