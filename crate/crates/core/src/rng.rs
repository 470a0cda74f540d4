//! Deterministic random streams for replicated simulation.
//!
//! Every replica draws from its own generator, seeded from the experiment's
//! master seed. The scheme below is a frozen contract: archived trajectory
//! files are only replayable as long as none of these pieces change.
//!
//! * Per-replica seed: `derive_seed(master, r) = mix64(master ^ (r+1)·GOLDEN)`
//!   where `GOLDEN = 0x9E3779B97F4A7C15` and `mix64` is the splitmix64
//!   finalizer. Replicas are numbered from 0; the `r+1` offset keeps replica 0
//!   from collapsing onto `mix64(master)`.
//! * Generator: xoshiro256++, state filled with four successive splitmix64
//!   outputs of the derived seed (the reference seeding procedure).
//! * Uniform variate: the top 53 bits of one `next_u64`, i.e.
//!   `(x >> 11) as f64 * 2^-53`, giving a value in `[0, 1)`.
//! * Bernoulli(p): `next_unit() < p`. Exactly one `u64` is consumed per draw,
//!   so stream positions can be computed by counting draws.
//!
//! The simulation layer draws one Bernoulli per urn per step, in urn index
//! order. A consequence worth knowing: two runs with the same seeds but
//! different horizons agree draw-for-draw on their common prefix.

/// 2^64 / golden ratio; the splitmix64 sequence increment.
pub const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 finalizer: a full-avalanche bijection on u64.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for replica `replica` of an experiment with the given master seed.
#[inline]
pub fn derive_seed(master: u64, replica: u64) -> u64 {
    mix64(master ^ replica.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA))
}

/// xoshiro256++ generator (Blackman & Vigna), period 2^256 - 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UrnRng {
    s: [u64; 4],
}

impl UrnRng {
    /// Builds a generator from a 64-bit seed by running splitmix64, exactly
    /// as the reference implementation recommends.
    pub fn from_seed(seed: u64) -> Self {
        let mut x = seed;
        let mut s = [0u64; 4];
        for word in &mut s {
            x = x.wrapping_add(GOLDEN_GAMMA);
            *word = mix64(x);
        }
        UrnRng { s }
    }

    /// Generator for one replica of an ensemble.
    pub fn for_replica(master: u64, replica: u64) -> Self {
        UrnRng::from_seed(derive_seed(master, replica))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.s;
        let result = s[0].wrapping_add(s[3]).rotate_left(23).wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform variate in `[0, 1)` built from the top 53 bits of one draw.
    #[inline]
    pub fn next_unit(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        (self.next_u64() >> 11) as f64 * SCALE
    }

    /// Bernoulli(p) trial; consumes exactly one `u64` from the stream.
    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_unit() < p
    }

    /// Uniform integer in `[0, bound)` by rejection-free modulo of a fresh
    /// draw; bias is below 2^-40 for the small bounds used in tests.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0);
        self.next_u64() % bound
    }
}
