//! Platform-independent pseudo-random generator for weights and fixtures.
//!
//! The generator is xorshift64* (Vigna, 2016): state update
//! `x ^= x >> 12; x ^= x << 25; x ^= x >> 27`, output `x * 0x2545F4914F6CDD1D`.
//! The user seed is first passed through one SplitMix64 step so that small
//! or zero seeds still give a well-mixed, non-zero state.

const XORSHIFT_MULTIPLIER: u64 = 0x2545_F491_4F6C_DD1D;
const SPLITMIX_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const FALLBACK_STATE: u64 = 0x853C_49E6_748F_EA9B;

fn splitmix64(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(SPLITMIX_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug)]
pub struct XorShift64Star {
    state: u64,
}

impl XorShift64Star {
    pub fn new(seed: u64) -> Self {
        let state = match splitmix64(seed) {
            0 => FALLBACK_STATE,
            s => s,
        };
        Self { state }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(XORSHIFT_MULTIPLIER)
    }

    /// Uniform in `[0, 1)` on a grid of 2^-24, exactly representable as `f32`.
    pub fn next_unit_f32(&mut self) -> f32 {
        (self.next_u64() >> 40) as f32 * (1.0 / (1u32 << 24) as f32)
    }

    /// Uniform in `[-0.5, 0.5)`.
    pub fn next_centered_f32(&mut self) -> f32 {
        self.next_unit_f32() - 0.5
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = XorShift64Star::new(42);
        let mut b = XorShift64Star::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        assert_ne!(XorShift64Star::new(1).next_u64(), XorShift64Star::new(2).next_u64());
    }

    #[test]
    fn first_outputs_are_frozen() {
        // Pinned so any change to the algorithm or constants is caught.
        let mut rng = XorShift64Star::new(0);
        let first: Vec<u64> = (0..3).map(|_| rng.next_u64()).collect();
        assert_eq!(first, FIRST_THREE_SEED0);
    }

    const FIRST_THREE_SEED0: [u64; 3] = [0x7bbc_b40d_5506_82d0, 0xde7f_e413_d00c_c9fd, 0xb3c6_3835_3c66_8c91];

    #[test]
    fn centered_values_stay_in_range() {
        let mut rng = XorShift64Star::new(7);
        for _ in 0..10_000 {
            let v = rng.next_centered_f32();
            assert!((-0.5..0.5).contains(&v));
        }
    }
}
