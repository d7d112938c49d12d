//! Monte Carlo laboratory for contaminated event sequences and small
//! partial maxima.
//!
//! The crate is organized around five modules:
//!
//! - [`logspace`]: probabilities represented by their natural logarithm,
//!   the only probability currency used in numeric code.
//! - [`thinning`]: the dyadic bucket construction that thins weights
//!   `p_n` into `p'_n <= p_n` so that the weighted sum converges while
//!   the plain sum keeps diverging.
//! - [`scenarios`]: declarative generators of contaminated event
//!   sequences `(A_n, E_n, B_n = A_n \ E_n)` with exact analytic
//!   marginals.
//! - [`bcsim`]: the seeded, worker-count-independent trial engine,
//!   including the retention coupling `A'_n = A_n ∩ {U_n <= q_n}`.
//! - [`smallmax`]: the heavy-tail distribution `G`, its checkpoint
//!   schedule, and the block-maxima simulation that runs at index
//!   scales far beyond floating range by staying in `(s, t)`
//!   coordinates.

pub mod bcsim;
pub mod logspace;
pub mod scenarios;
pub mod smallmax;
pub mod stream;
pub mod thinning;

pub use bcsim::{TrialConfig, TrialSummary};
pub use logspace::LogProb;
pub use scenarios::{MarginSpec, Scenario};
pub use smallmax::{DistParams, MaximaConfig, MaximaSummary, ScheduleRow};
pub use thinning::{ThinningInput, ThinningPlan};
