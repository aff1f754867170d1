//! Per-(trial, user) random streams.
//!
//! Every trial gets its own ChaCha key derived from the master seed and the
//! trial index; every user within the trial reads from its own stream of that
//! key. Results are therefore independent of scheduling, and the first `K`
//! users of a trial are identical whether the scenario has `K` or more users.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

fn trial_key(master_seed: u64, trial: u64) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(b"ma-noma/trial");
    hasher.update(master_seed.to_le_bytes());
    hasher.update(trial.to_le_bytes());
    hasher.finalize().into()
}

/// Random stream dedicated to `user` within `trial`.
pub fn user_stream(master_seed: u64, trial: u64, user: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::from_seed(trial_key(master_seed, trial));
    rng.set_stream(user);
    rng
}

/// Auxiliary stream for a trial (e.g. Gaussian randomization), disjoint from
/// every user stream.
pub fn aux_stream(master_seed: u64, trial: u64) -> ChaCha12Rng {
    user_stream(master_seed, trial, u64::MAX)
}
