//! Counter-based random numbers.
//!
//! Every variate is a pure function of `(seed, stream, counter)`, so any
//! Brownian mode at any step can be regenerated in isolation and the result
//! never depends on thread count or evaluation order. The mixing function is
//! the SplitMix64 finalizer applied to a chained key.

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashes a key tuple into 64 well-mixed bits.
#[inline]
pub fn hash3(seed: u64, stream: u64, counter: u64) -> u64 {
    let a = splitmix64(seed ^ 0x5851_f42d_4c95_7f2d);
    let b = splitmix64(a ^ stream);
    splitmix64(b.wrapping_add(counter.wrapping_mul(GOLDEN)) ^ b.rotate_left(23))
}

/// Uniform on the open interval (0, 1), 53 bits.
#[inline]
fn open_unit(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal for the key `(seed, stream, counter)` via Box–Muller.
#[inline]
pub fn normal(seed: u64, stream: u64, counter: u64) -> f64 {
    let u1 = open_unit(hash3(seed, stream, counter.wrapping_mul(2)));
    let u2 = open_unit(hash3(seed, stream, counter.wrapping_mul(2).wrapping_add(1)));
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Uniform on (0, 1) for the key `(seed, stream, counter)`.
#[inline]
pub fn uniform(seed: u64, stream: u64, counter: u64) -> f64 {
    open_unit(hash3(seed, stream ^ 0xa076_1d64_78bd_642f, counter))
}

/// Derives an independent child seed, e.g. one per Monte Carlo realization.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    hash3(master, 0xe703_7ed1_a0b4_28db, index)
}
