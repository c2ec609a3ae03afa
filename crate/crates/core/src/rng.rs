//! Reproducible random streams.
//!
//! A stream is identified by a 64-bit master seed plus a path of integer
//! labels (for example `[n_index, replicate]`). The path is folded through
//! SplitMix64 into a 256-bit ChaCha key, so streams with different paths
//! are independent for all practical purposes and a given path always
//! reproduces the same sequence on every platform.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN_GAMMA);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Clone, Debug)]
pub struct RngStream {
    inner: ChaCha12Rng,
}

impl RngStream {
    pub fn derive(master_seed: u64, labels: &[u64]) -> Self {
        let mut state = master_seed;
        let mut acc = splitmix64(&mut state);
        for (depth, &label) in labels.iter().enumerate() {
            // Mixing in the depth keeps [a] and [a, 0] apart.
            let mut s = acc ^ label.wrapping_mul(GOLDEN_GAMMA) ^ (depth as u64 + 1);
            acc = splitmix64(&mut s) ^ splitmix64(&mut state);
        }
        let mut key_state = acc ^ (labels.len() as u64).rotate_left(32);
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut key_state).to_le_bytes());
        }
        Self {
            inner: ChaCha12Rng::from_seed(seed),
        }
    }

    /// Stream for a sub-task, keyed by the current state of `self`.
    pub fn split(&mut self, label: u64) -> Self {
        let base = self.inner.next_u64();
        Self::derive(base, &[label])
    }
}

impl RngCore for RngStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn head(mut r: RngStream) -> Vec<u64> {
        (0..8).map(|_| r.next_u64()).collect()
    }

    #[test]
    fn same_path_same_stream() {
        assert_eq!(
            head(RngStream::derive(7, &[1, 2])),
            head(RngStream::derive(7, &[1, 2]))
        );
    }

    #[test]
    fn distinct_paths_differ() {
        let paths: [&[u64]; 6] = [&[], &[0], &[0, 0], &[1], &[0, 1], &[1, 0]];
        let heads: Vec<_> = paths.iter().map(|p| head(RngStream::derive(7, p))).collect();
        for i in 0..heads.len() {
            for j in i + 1..heads.len() {
                assert_ne!(heads[i], heads[j], "paths {:?} and {:?}", paths[i], paths[j]);
            }
        }
        assert_ne!(head(RngStream::derive(7, &[3])), head(RngStream::derive(8, &[3])));
    }

    #[test]
    fn uniform_mean_is_half() {
        let mut r = RngStream::derive(99, &[5]);
        let n = 200_000;
        let mean: f64 = (0..n).map(|_| r.random::<f64>()).sum::<f64>() / n as f64;
        // sd of the mean is sqrt(1/12/n) ~ 6.5e-4
        assert!((mean - 0.5).abs() < 3e-3, "{mean}");
    }

    #[test]
    fn neighbouring_streams_are_uncorrelated() {
        let n = 100_000;
        let mut a = RngStream::derive(1, &[0, 0]);
        let mut b = RngStream::derive(1, &[0, 1]);
        let (xs, ys): (Vec<f64>, Vec<f64>) =
            (0..n).map(|_| (a.random::<f64>() - 0.5, b.random::<f64>() - 0.5)).unzip();
        let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum::<f64>() / n as f64;
        let corr = cov * 12.0;
        assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "{corr}");
    }
}
