//! Small platform-stable hashing helpers for seeded decisions.
//!
//! Std's `DefaultHasher` is not guaranteed stable across releases, so seeded
//! corruption and acceptance decisions go through FNV-1a + splitmix64
//! finalization instead.

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    h
}

/// Uniform value in [0, 1) derived from a hash.
pub fn unit_interval(h: u64) -> f64 {
    // 53 high bits, the same construction rand uses for f64.
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Seeded decision value in [0, 1) for a (position, branch) pair.
pub fn position_unit(seed: u64, position: u64, branch: u32) -> f64 {
    let mixed = splitmix64(seed ^ splitmix64(position) ^ splitmix64(u64::from(branch) << 32));
    unit_interval(mixed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn position_unit_is_stable_and_uniform_ish() {
        assert_eq!(position_unit(1, 2, 0), position_unit(1, 2, 0));
        assert_ne!(position_unit(1, 2, 0), position_unit(1, 2, 1));
        let n = 100_000u64;
        let mean: f64 = (0..n).map(|i| position_unit(9, i, 0)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }
}
