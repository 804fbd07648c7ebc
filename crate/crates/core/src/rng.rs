//! Seed derivation for independent random streams.
//!
//! Every consumer of randomness (weight init, data order, masks, augmentation)
//! draws from its own stream derived from the run seed, so changing how one
//! consumer uses randomness never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Named random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init,
    DataOrder,
    Mask,
    Augment,
    Assemble,
    Generate,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Init => 0x1a2b_3c4d,
            Stream::DataOrder => 0x5e6f_7081,
            Stream::Mask => 0x92a3_b4c5,
            Stream::Augment => 0xd6e7_f809,
            Stream::Assemble => 0x1b2c_3d4e,
            Stream::Generate => 0x5f60_7182,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a sequence of indices.
pub fn derive_seed(seed: u64, stream: Stream, path: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ splitmix64(stream.tag()));
    for &p in path {
        h = splitmix64(h ^ splitmix64(p.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    h
}

pub fn stream_rng(seed: u64, stream: Stream, path: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, stream, path))
}
