//! Seeded random streams.
//!
//! Everything random takes an explicit generator. Benchmarks derive one
//! independent stream per grid cell from a single master seed: the ChaCha
//! key comes from the master seed and the stream id from the cell label, so
//! adding or reordering cells never shifts the draws of existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable id for a cell labelled by a tag and a list of coordinates.
pub fn cell_id(tag: &str, coords: &[u64]) -> u64 {
    let mut h = tag.bytes().fold(0xCBF2_9CE4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01B3));
    for &c in coords {
        h = mix(h ^ mix(c));
    }
    h
}

/// Independent stream for one cell of a benchmark grid.
pub fn cell_rng(master: u64, cell: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(cell);
    rng
}
