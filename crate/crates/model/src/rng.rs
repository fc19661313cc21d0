use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent reproducible stream keyed by (seed, label, index).
///
/// All stochastic choices in training and sampling derive from streams like
/// `stream(seed, "vae-epoch", epoch)`, so resuming at an epoch boundary
/// replays exactly the randomness an uninterrupted run would have seen.
pub fn stream(seed: u64, label: &str, index: u64) -> ChaCha8Rng {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in label.as_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mixed = splitmix(seed ^ h).wrapping_add(splitmix(index.wrapping_mul(0x9e37_79b9_7f4a_7c15)));
    ChaCha8Rng::seed_from_u64(splitmix(mixed))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One standard normal draw via Box-Muller (two uniforms per value, so the
/// stream advances a fixed amount per call).
pub fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
