//! Deterministic keyed randomness.
//!
//! Every random draw in this crate is a pure function of a `(seed, counter)`
//! pair, never a position in a sequential stream. Sampling a row therefore
//! gives the same uniform no matter which partition the row is processed in
//! or in which order, which is what makes partition merging, incremental
//! sample maintenance and nested multi-layer samples exact.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64 uniform bits for `(seed, counter)`.
#[inline]
pub fn hash64(seed: u64, counter: u64) -> u64 {
    mix(seed.wrapping_add(counter.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Uniform draw in `(0, 1)` for `(seed, counter)`.
///
/// The value is clamped away from zero by 2^-53 so that `1/u` stays finite.
#[inline]
pub fn unit_uniform(seed: u64, counter: u64) -> f64 {
    let u = (hash64(seed, counter) >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    u.max(1.0 / (1u64 << 53) as f64)
}

/// Derives an independent child seed, e.g. one per Monte-Carlo trial.
#[inline]
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    mix(mix(master ^ 0x6C62_272E_07BB_0142).wrapping_add(hash64(master, stream)))
}

/// Standard normal draw for `(seed, counter)` via Box-Muller.
#[inline]
pub fn standard_normal(seed: u64, counter: u64) -> f64 {
    let u1 = unit_uniform(seed, 2 * counter);
    let u2 = unit_uniform(seed, 2 * counter + 1);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
