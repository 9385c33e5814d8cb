//! Seed derivation. Every random stream is keyed by
//! `(master seed, trial, purpose)` and the ChaCha stream id carries the
//! iteration, so trials and iterations never share state and reproduce
//! regardless of scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Population = 1,
    Instance = 2,
    Minibatch = 3,
    Dfo = 4,
    Oracle = 5,
    Check = 6,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, trial: u64, purpose: Purpose) -> u64 {
    let a = splitmix64(master);
    let b = splitmix64(a ^ trial.wrapping_mul(0xD1B5_4A32_D192_ED03));
    splitmix64(b ^ (purpose as u64).wrapping_mul(0xA24B_AED4_963E_E407))
}

pub fn keyed_rng(master: u64, trial: u64, purpose: Purpose, iteration: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(master, trial, purpose));
    rng.set_stream(iteration);
    rng
}
