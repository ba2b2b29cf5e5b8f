//! Named random streams derived from a run seed.
//!
//! Every source of randomness in a run (environment resets, parameter
//! initialization, per-neuron firing) draws from its own ChaCha stream so that
//! evaluation order never changes what any consumer sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used for every stream.
pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Domain {
    Environment = 1,
    Init = 2,
    Firing = 3,
}

fn stream(run_seed: u64, domain: Domain, index: u64) -> StreamRng {
    debug_assert!(index < (1 << 48));
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
    rng.set_stream(((domain as u64) << 48) | index);
    rng
}

/// Stream feeding environment resets for one run.
pub fn environment_stream(run_seed: u64) -> StreamRng {
    stream(run_seed, Domain::Environment, 0)
}

/// Stream used once to draw the initial parameters of neuron `neuron_id`.
pub fn init_stream(run_seed: u64, neuron_id: usize) -> StreamRng {
    stream(run_seed, Domain::Init, neuron_id as u64)
}

/// Stream from which neuron `neuron_id` samples its firing decisions.
pub fn firing_stream(run_seed: u64, neuron_id: usize) -> StreamRng {
    stream(run_seed, Domain::Firing, neuron_id as u64)
}
