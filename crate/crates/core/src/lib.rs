//! Desk-scale laboratory for typology-aware cross-lingual sharing experiments.
//!
//! The crate wires together a small reverse-mode autodiff engine, a
//! multi-language model whose per-language layer stacks are mixed by
//! learnable sharing weights, typology classifier heads that can expose the
//! model to typological features or adversarially blind it to them, a
//! WALS-style feature ingester, a synthetic-language generator with
//! controllable typology, similarity statistics, and an experiment harness
//! that runs condition grids and writes deterministic reports.

#![forbid(unsafe_code)]

pub mod autodiff;
pub mod harness;
pub mod model;
pub mod stats;
pub mod synth;
pub mod typology;
pub mod wals;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Deterministic RNG derived from a list of name parts. Streams depend only
/// on the parts, not on call order, so adding or removing other consumers
/// never perturbs an existing stream.
pub fn seeded_rng(parts: &[&str]) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update(p.as_bytes());
        hasher.update([0x1f]);
    }
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed)
}
