//! Counter-based random-number streams.
//!
//! Every stochastic operation takes an explicit [`StreamTag`]; the tag is a
//! stable identifier (master seed, purpose string, noise level, replicate)
//! hashed with SHA-256 into a ChaCha12 seed. Equal tags always produce equal
//! draws, distinct tags produce statistically independent streams, and no
//! generator state is ever shared between concurrent callers.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq)]
pub struct StreamTag {
    pub master_seed: u64,
    pub purpose: String,
    /// Noise level the stream is bound to (0 when not applicable).
    pub n_bits: u64,
    pub replicate: u64,
}

impl StreamTag {
    pub fn new(master_seed: u64, purpose: &str) -> Self {
        StreamTag {
            master_seed,
            purpose: purpose.to_owned(),
            n_bits: 0,
            replicate: 0,
        }
    }

    pub fn with_n(mut self, n: f64) -> Self {
        self.n_bits = n.to_bits();
        self
    }

    pub fn with_replicate(mut self, replicate: u64) -> Self {
        self.replicate = replicate;
        self
    }

    /// Human-readable form, used as `seed_tag` in CSV output.
    pub fn label(&self) -> String {
        format!(
            "{}/{}/{}/{}",
            self.master_seed,
            self.purpose,
            f64::from_bits(self.n_bits),
            self.replicate
        )
    }

    pub fn rng(&self) -> ChaCha12Rng {
        let mut h = Sha256::new();
        h.update(self.master_seed.to_le_bytes());
        h.update([0xff]);
        h.update(self.purpose.as_bytes());
        h.update([0xff]);
        h.update(self.n_bits.to_le_bytes());
        h.update(self.replicate.to_le_bytes());
        let digest = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        ChaCha12Rng::from_seed(seed)
    }
}
