//! Seed derivation. Every component draws from its own ChaCha stream: the
//! top-level seed keys the generator and the FNV-1a hash of the component
//! name, offset by an index (e.g. the chain id), selects the stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn fnv1a(name: &str) -> u64 {
    fnv1a_bytes(name.as_bytes())
}

pub fn fnv1a_bytes(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn component_rng(seed: u64, component: &str, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(component).wrapping_add(index));
    rng
}
