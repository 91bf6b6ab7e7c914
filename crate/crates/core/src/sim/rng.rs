use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::topology::NodeId;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent generator for one `(node, purpose)` pair under `seed`.
pub fn stream(seed: u64, node: NodeId, purpose: u32) -> ChaCha8Rng {
    let key = (u64::from(node.0) << 32) | u64::from(purpose);
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(key)))
}
