//! Seeded random streams.
//!
//! Every stochastic routine takes a `(seed, counter)` pair and derives an
//! independent ChaCha stream from it, so a given event or run always sees the
//! same variates regardless of which thread executes it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

/// Stream dedicated to one `(seed, counter)` pair.
pub fn stream(seed: u64, counter: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(counter);
    rng
}

/// Mixes a seed with a label so that unrelated consumers of the same
/// user-facing seed draw from disjoint key spaces.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fills `out` with a uniform draw on the simplex (flat Dirichlet): unit
/// exponentials normalized by their sum.
pub fn uniform_simplex_into<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    let mut total = 0.0;
    for x in out.iter_mut() {
        let e: f64 = rng.sample(Exp1);
        *x = e;
        total += e;
    }
    for x in out.iter_mut() {
        *x /= total;
    }
}

pub fn uniform_simplex<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    uniform_simplex_into(rng, &mut v);
    v
}

/// Uniform variate in `[0, 1)`.
#[inline]
pub fn unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>()
}
