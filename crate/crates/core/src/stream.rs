//! Deterministic per-trial random streams.
//!
//! Every trial draws from its own counter-based stream, a pure function
//! of `(seed, trial index)`: ChaCha8 keyed by the seed with the trial
//! index as the stream counter. Results are therefore independent of
//! worker count and scheduling.
//!
//! Draw layout per trial is fixed so streams are skippable:
//!
//! - event-sequence trials ([`crate::bcsim`]): one prelude uniform for
//!   the once-per-trial contaminator, then exactly three uniforms per
//!   step (two for the scenario step, one for the coupling uniform),
//!   whether or not a given scenario or run consumes them;
//! - maxima trials ([`crate::smallmax`]): one uniform for the initial
//!   block, then one per checkpoint.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random stream for a single trial.
#[derive(Clone, Debug)]
pub struct TrialRng(ChaCha8Rng);

impl TrialRng {
    /// The stream for trial `trial` under `seed`.
    pub fn for_trial(seed: u64, trial: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial);
        TrialRng(rng)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn next_unit(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        (self.next_u64() >> 11) as f64 * SCALE
    }

    /// Uniform on the open interval `(0, 1)`: bin centers of the 2^53
    /// grid, so neither endpoint can occur.
    pub fn next_open01(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        ((self.next_u64() >> 11) as f64 + 0.5) * SCALE
    }
}
