//! Reproducible random streams.
//!
//! Every random draw is addressed by a [`StreamKey`] derived from a master
//! seed and a path of tags (subject, sample index, pipeline stage). Bulk
//! per-voxel draws use one ChaCha stream per z-slice, so results do not
//! depend on how slices are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable 64-bit FNV-1a hash, used to turn subject ids into stream tags.
pub fn hash_str(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey(u64);

impl StreamKey {
    pub fn new(seed: u64) -> Self {
        StreamKey(mix64(seed))
    }

    /// Independent key for a named sub-purpose.
    pub fn child(self, tag: u64) -> Self {
        StreamKey(mix64(self.0 ^ mix64(tag.wrapping_add(0x5851_F42D_4C95_7F2D))))
    }

    pub fn value(self) -> u64 {
        self.0
    }

    /// Sequential generator for this key.
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// Generator for the `index`-th parallel substream (e.g. a z-slice).
    pub fn substream(self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        rng.set_stream(index);
        rng
    }
}

/// Key of sample `index` of `subject` under `master_seed`.
pub fn sample_key(master_seed: u64, subject: &str, index: u64) -> StreamKey {
    StreamKey::new(master_seed).child(hash_str(subject)).child(index)
}
