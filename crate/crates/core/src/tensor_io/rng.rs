use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::ParamVector;
use crate::error::{Error, Result};

pub type StreamRng = ChaCha8Rng;

/// Address of a reproducible random sequence.
///
/// The seed keys a ChaCha8 generator and `stream_id` selects one of its 2⁶⁴
/// counter-disjoint streams, so two streams sharing a seed never overlap.
/// [`RngStream::substream`] derives child addresses for splitting a
/// Monte-Carlo loop into chunks: chunk `i` always consumes the same
/// numbers no matter which worker thread runs it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Child stream `index` of this stream. Children of different parents use
    /// different keys, so nesting does not collide with sibling ids.
    pub fn substream(&self, index: u64) -> RngStream {
        RngStream {
            seed: splitmix64(self.seed ^ splitmix64(self.stream_id.wrapping_add(0x6a09_e667_f3bc_c909))),
            stream_id: index,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

pub(crate) fn standard_normals(rng: &mut StreamRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// `n` i.i.d. draws from N(mean, std²), read sequentially from `stream`.
pub fn gaussian_sample(stream: RngStream, n: usize, mean: f64, std: f64) -> Result<ParamVector> {
    if !(std >= 0.0) || !std.is_finite() {
        return Err(Error::arg(format!("std must be finite and >= 0, got {std}")));
    }
    if !mean.is_finite() {
        return Err(Error::arg("mean must be finite"));
    }
    if n == 0 {
        return Err(Error::arg("sample count must be >= 1"));
    }
    let mut rng = stream.rng();
    let values = standard_normals(&mut rng, n).into_iter().map(|z| mean + std * z).collect();
    Ok(ParamVector::from_raw(values))
}
