//! Counter-based random streams (Philox 4x64-10).
//!
//! Every `(master_seed, path_index, time_step)` triple owns an independent
//! stream: the generator is a pure function of its counter and key, so paths
//! can be generated on any number of workers, in any order, and still
//! reproduce bit-identical output. Within one step the stream is unbounded,
//! which lets rejection samplers and per-event mark draws consume as many
//! values as they need without shifting any other step's stream.

const PHILOX_M0: u64 = 0xD2E7_470E_E14C_6C93;
const PHILOX_M1: u64 = 0xCA5A_8263_9512_1157;
const PHILOX_W0: u64 = 0x9E37_79B9_7F4A_7C15;
const PHILOX_W1: u64 = 0xBB67_AE85_84CA_A73B;

const ROUNDS: usize = 10;

#[inline]
fn mul_wide(a: u64, b: u64) -> (u64, u64) {
    let p = (a as u128) * (b as u128);
    ((p >> 64) as u64, p as u64)
}

/// One Philox 4x64 block with the standard 10 rounds.
#[inline]
pub fn philox4x64(counter: [u64; 4], key: [u64; 2]) -> [u64; 4] {
    let mut c = counter;
    let mut k = key;
    for _ in 0..ROUNDS {
        let (hi0, lo0) = mul_wide(PHILOX_M0, c[0]);
        let (hi1, lo1) = mul_wide(PHILOX_M1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
        k[0] = k[0].wrapping_add(PHILOX_W0);
        k[1] = k[1].wrapping_add(PHILOX_W1);
    }
    c
}

#[inline]
fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream of draws for one `(master_seed, path_index, time_step)` key.
///
/// The 128-bit Philox key is derived from the master seed; the counter is
/// `[path_index, t, block, 0]` with `block` incrementing as draws are
/// consumed.
#[derive(Debug, Clone)]
pub struct StepRng {
    key: [u64; 2],
    prefix: [u64; 2],
    block: u64,
    buffer: [u64; 4],
    position: usize,
}

impl StepRng {
    pub fn new(master_seed: u64, path_index: u64, t: u64) -> Self {
        Self {
            key: [splitmix64(master_seed), splitmix64(master_seed ^ PHILOX_W0)],
            prefix: [path_index, t],
            block: 0,
            buffer: [0; 4],
            position: 4,
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        if self.position == 4 {
            self.buffer = philox4x64([self.prefix[0], self.prefix[1], self.block, 0], self.key);
            self.block += 1;
            self.position = 0;
        }
        let out = self.buffer[self.position];
        self.position += 1;
        out
    }

    /// Uniform draw strictly inside (0, 1).
    ///
    /// Uses the top 53 bits offset by half an ulp, so 0 and 1 are never
    /// returned and downstream `ln(u)` calls are safe.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Known-answer blocks cross-checked two ways: the zero block is the
    // Random123 reference vector, the rest is numpy.random.Philox raw output
    // (numpy advances the counter before each block, so its block k sits at
    // counter + k + 1).
    #[test]
    fn philox_known_answer_zero_key() {
        assert_eq!(
            philox4x64([0, 0, 0, 0], [0, 0]),
            [
                0x16554d9eca36314c,
                0xdb20fe9d672d0fdc,
                0xd7e772cee186176b,
                0x7e68b68aec7ba23b,
            ]
        );
        assert_eq!(
            philox4x64([1, 0, 0, 0], [0, 0]),
            [
                0x02f4ba6408e4d89b,
                0x3dd62b0b9ca8c5b2,
                0x1c8667a55d902e79,
                0x907d7a052fd5b4dc,
            ]
        );
    }

    #[test]
    fn philox_known_answer_mixed_key() {
        assert_eq!(
            philox4x64([2, 2, 3, 4], [0xdeadbeef12345678, 0x0f0e0d0c0b0a0908]),
            [
                0x05d7ca0c60135419,
                0x6c28806204212aa7,
                0x187ee25b026bcf12,
                0x42e71cff585035ed,
            ]
        );
        assert_eq!(
            philox4x64([0, 0, 0, 0], [u64::MAX; 2]),
            [
                0x44b7493d1acfc229,
                0x6636af8e997921dd,
                0x3f73e132b5b3780e,
                0x605644dde03b01b1,
            ]
        );
    }

    #[test]
    fn streams_are_reproducible_and_keyed() {
        let draws = |seed, path, t| {
            let mut rng = StepRng::new(seed, path, t);
            (0..6).map(|_| rng.next_u64()).collect::<Vec<_>>()
        };
        assert_eq!(draws(42, 3, 17), draws(42, 3, 17));
        assert_ne!(draws(42, 3, 17), draws(42, 3, 18));
        assert_ne!(draws(42, 3, 17), draws(42, 4, 17));
        assert_ne!(draws(42, 3, 17), draws(43, 3, 17));
    }

    #[test]
    fn uniforms_stay_inside_open_unit_interval() {
        let mut rng = StepRng::new(7, 0, 1);
        let mut mean = 0.0;
        let n = 100_000;
        for _ in 0..n {
            let u = rng.next_f64();
            assert!(u > 0.0 && u < 1.0);
            mean += u;
        }
        mean /= n as f64;
        // 4 standard errors of a U(0,1) mean
        assert!((mean - 0.5).abs() < 4.0 * (1.0 / 12.0f64).sqrt() / (n as f64).sqrt());
    }
}
