//! Fixtures shared by the benchmarks.

use pdte_core::pdte::{encode_for, Optimization, PdteConfig};
use pdte_core::sharing::derive_rng;
use pdte_core::sos::Backend;
use pdte_core::tree::{preset, random_features, sparse, EncodedTree};

/// Paillier modulus size for benchmarks; small enough for short runs.
pub const BENCH_PAILLIER_BITS: usize = 1024;

/// An encoded preset tree with a matching feature vector.
pub struct Fixture {
    pub cfg: PdteConfig,
    pub tree: EncodedTree,
    pub x: Vec<u64>,
}

pub fn preset_fixture(name: &str, backend: Backend, opt: Optimization, seed: u64) -> Fixture {
    let spec = preset(name).expect("known preset");
    let mut rng = derive_rng(seed, name);
    let t = sparse(spec.n, spec.d, spec.m, 16, &mut rng).expect("preset shape");
    let cfg = PdteConfig::new(16, backend).with_optimization(opt).with_paillier_bits(BENCH_PAILLIER_BITS);
    let tree = encode_for(&cfg, &t, &mut rng).expect("encodes");
    let x = random_features(spec.n, 16, &mut rng);
    Fixture { cfg, tree, x }
}
