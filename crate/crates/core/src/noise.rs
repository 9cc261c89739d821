//! Addressable random-number streams for reproducible simulation.
//!
//! Every (path, stage) pair maps to a fixed block of counter-based ChaCha12
//! output, so a draw can be regenerated in isolation: simulations replay
//! identically regardless of thread count, scheduling, or how often a path
//! segment is re-simulated. Gaussians come from the inverse normal CDF
//! applied to 53-bit uniforms.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Number of 32-bit ChaCha words reserved per stage: four u64 draws
/// (price shock, orthogonal shock, signal uniform, spare).
const WORDS_PER_STAGE: u128 = 8;

/// SplitMix64 step, used to expand a 64-bit seed into a cipher key.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Expands a 64-bit seed into a 256-bit ChaCha key.
pub fn chacha_key(seed: u64) -> [u8; 32] {
    let mut state = seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}

/// Maps a u64 to the open interval (0, 1) with 52-bit resolution; never
/// returns 0 or 1, so the inverse CDF stays finite. The half offset must
/// stay exactly representable next to 2^52 - 1, hence 52 bits, not 53.
pub fn uniform_from_u64(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / 4503599627370496.0)
}

/// The three per-stage draws used by the simulation engines.
#[derive(Clone, Copy, Debug)]
pub struct StageDraws {
    /// Standard normal shock driving the electricity price.
    pub eps_p: f64,
    /// Standard normal shock orthogonal to `eps_p`.
    pub eps_perp: f64,
    /// Uniform in (0, 1) used to realize a recommended action pair.
    pub signal: f64,
}

/// Seeded generator addressed by (path, stage). Identical seed and address
/// always produce identical draws.
pub struct NoiseStream {
    rng: ChaCha12Rng,
}

impl NoiseStream {
    pub fn new(seed: u64) -> Self {
        NoiseStream {
            rng: ChaCha12Rng::from_seed(chacha_key(seed)),
        }
    }

    /// Draws the stage block for one (path, stage) address.
    pub fn stage_draws(&mut self, path: u64, stage: usize) -> StageDraws {
        self.rng.set_stream(path);
        self.rng.set_word_pos(stage as u128 * WORDS_PER_STAGE);
        let u1 = uniform_from_u64(self.rng.next_u64());
        let u2 = uniform_from_u64(self.rng.next_u64());
        let u3 = uniform_from_u64(self.rng.next_u64());
        StageDraws {
            eps_p: inv_norm_cdf(u1),
            eps_perp: inv_norm_cdf(u2),
            signal: u3,
        }
    }

    /// Raw uniform draws for one address, for callers that need a sequence
    /// of plain uniforms (e.g. randomized stopping).
    pub fn uniforms(&mut self, path: u64, stage: usize, out: &mut [f64]) {
        assert!(out.len() <= 4, "a stage block holds four draws");
        self.rng.set_stream(path);
        self.rng.set_word_pos(stage as u128 * WORDS_PER_STAGE);
        for slot in out.iter_mut() {
            *slot = uniform_from_u64(self.rng.next_u64());
        }
    }
}

/// Inverse standard normal CDF, accurate to roughly 1e-15 in double
/// precision (rational minimax approximations on three branches).
pub fn inv_norm_cdf(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0, "inverse CDF needs p in (0, 1)");
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = ((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_812_8e4) * r
            + 6.726_577_092_700_870_1e4)
            * r
            + 4.592_195_393_154_987_1e4)
            * r
            + 1.373_169_376_550_946_1e4)
            * r
            + 1.971_590_950_306_551_3e3)
            * r
            + 1.331_416_678_917_843_8e2)
            * r
            + 3.387_132_872_796_366_608;
        let den = ((((((5.226_495_278_852_854_561e3 * r + 2.872_908_573_572_194_3e4) * r
            + 3.930_789_580_009_271e4)
            * r
            + 2.121_379_430_158_659_7e4)
            * r
            + 5.394_196_021_424_751_1e3)
            * r
            + 6.871_870_074_920_579e2)
            * r
            + 4.231_333_070_160_091e1)
            * r
            + 1.0;
        return q * num / den;
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let mut v = (-r.ln()).sqrt();
    let x = if v <= 5.0 {
        v -= 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * v + 2.272_384_498_926_918_4e-2) * v
            + 2.417_807_251_774_506e-1)
            * v
            + 1.270_458_252_452_368_4)
            * v
            + 3.647_848_324_763_204_5)
            * v
            + 5.769_497_221_460_691)
            * v
            + 4.630_337_846_156_546)
            * v
            + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_9e-9 * v + 5.475_938_084_995_345e-4) * v
            + 1.519_866_656_361_645_7e-2)
            * v
            + 1.481_039_764_274_800_8e-1)
            * v
            + 6.897_673_349_851e-1)
            * v
            + 1.676_384_830_183_803_8)
            * v
            + 2.053_191_626_637_758_9)
            * v
            + 1.0;
        num / den
    } else {
        v -= 5.0;
        let num = ((((((2.010_334_399_292_288_1e-7 * v + 2.711_555_568_743_487_6e-5) * v
            + 1.242_660_947_388_078_4e-3)
            * v
            + 2.653_218_952_657_612_4e-2)
            * v
            + 2.965_605_718_285_048_7e-1)
            * v
            + 1.784_826_539_917_291_3)
            * v
            + 5.463_784_911_164_114)
            * v
            + 6.657_904_643_501_103;
        let den = ((((((2.044_263_103_389_939_7e-15 * v + 1.421_511_758_316_446e-7) * v
            + 1.846_318_317_510_054_8e-5)
            * v
            + 7.868_691_311_456_133e-4)
            * v
            + 1.487_536_129_085_061_5e-2)
            * v
            + 1.369_298_809_227_358)
            * v
            + 5.998_322_065_558_88e-1)
            * v
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}
