//! Counter-based random streams for reproducible Monte Carlo.
//!
//! Every draw is addressed by `(seed, realization, direction, step)`, so the
//! value does not depend on scheduling or thread count.

use rand::SeedableRng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::sawtooth::Direction;

/// Words reserved per step; a normal draw consumes far fewer.
const STEP_WORDS: u128 = 1 << 16;

fn stream_id(realization: u64, direction: Direction) -> u64 {
    realization * 2
        + match direction {
            Direction::Forward => 0,
            Direction::Backward => 1,
        }
}

/// Generator positioned at the start of one `(realization, direction, step)` cell.
pub fn cell_rng(seed: u64, realization: u64, direction: Direction, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(realization, direction));
    rng.set_word_pos(step as u128 * STEP_WORDS);
    rng
}

/// Standard normal deviate for one cell.
pub fn normal_at(seed: u64, realization: u64, direction: Direction, step: u64) -> f64 {
    cell_rng(seed, realization, direction, step).sample(StandardNormal)
}

/// Generator for auxiliary streams (phase states, shot noise) keyed by a label.
pub fn aux_rng(seed: u64, label: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    rng.set_stream(label);
    rng
}
