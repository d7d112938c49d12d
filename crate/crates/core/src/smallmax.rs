//! Small partial maxima under a heavy-tailed distribution.
//!
//! The distribution `G` lives in `(s, t)` coordinates: `s = -ln(1 -
//! G(x))` is the tail exponent and `t = ln x` the log-observation, tied
//! together by `t = T0(s) = s / (ln ln s)^theta` on `s >= s_min`. Block
//! maxima at index scales like `m = e^167` are sampled and compared
//! entirely in these coordinates; the raw values `m_n` and `x_n = e^t`
//! are never materialized.
//!
//! The checkpoint schedule uses `s_n = 2 n ln ln sqrt(n)`, so the
//! indices `m_n = e^{s_n}` grow fast enough that the spacing
//! `sigma_n = s_n - s_{n-1}` diverges. Each row carries the midpoint
//! exponent `log m'_n = (s_n + s_{n-1})/2` (the integer floor on `m'_n`
//! would perturb this by less than `e^-80`, far below every tolerance,
//! and is dropped), the scaled tail mass `pi_n = e^{sigma_n/2}`, the
//! exact `ln P(B_n)` in fused form, and the `P(E_n)` bound
//! `e^{-sigma_n/2}`.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::logspace::{log1mexp, LogProb};
use crate::stream::TrialRng;

#[derive(Debug, Error, PartialEq)]
pub enum SmallmaxError {
    #[error("theta = {0} is outside (0, 1)")]
    InvalidTheta(f64),
    #[error("s_min = {0} must be at least 10")]
    InvalidSMin(f64),
    #[error("inversion tolerance {0} must be positive")]
    InvalidTolerance(f64),
    #[error("s = {0} must be positive")]
    NonPositiveS(f64),
    #[error("t = {0} must be positive")]
    NonPositiveT(f64),
    #[error("n_min = {given} is too small; the minimal admissible value is {minimal}")]
    NMinTooSmall { given: usize, minimal: usize },
    #[error("empty checkpoint range: n_min = {n_min} > n_max = {n_max}")]
    EmptyRange { n_min: usize, n_max: usize },
    #[error("log blocksize {0} must be finite and non-negative")]
    InvalidBlocksize(f64),
    #[error("uniform draw {0} must lie strictly inside (0, 1)")]
    UniformOutOfRange(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("failed to build worker pool: {0}")]
    WorkerPool(String),
}

/// Parameters of the distribution `G`.
///
/// `T0` is analytic on `s >= s_min` and extended linearly on
/// `(0, s_min]` with slope `T0(s_min)/s_min`, which keeps `G` a
/// continuous strictly increasing distribution function on the whole
/// positive axis. Schedules start where `s_n` has already cleared
/// `s_min`, so the extension only touches tiny observations inside the
/// earliest blocks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DistParams {
    theta: f64,
    s_min: f64,
    inversion_tol: f64,
    #[serde(skip)]
    ext_slope: f64,
}

pub const DEFAULT_THETA: f64 = 0.5;
pub const DEFAULT_S_MIN: f64 = 10.0;
pub const DEFAULT_INVERSION_TOL: f64 = 1e-10;

impl DistParams {
    pub fn new(theta: f64) -> Result<Self, SmallmaxError> {
        Self::with_options(theta, DEFAULT_S_MIN, DEFAULT_INVERSION_TOL)
    }

    pub fn with_options(theta: f64, s_min: f64, inversion_tol: f64) -> Result<Self, SmallmaxError> {
        if !theta.is_finite() || theta <= 0.0 || theta >= 1.0 {
            return Err(SmallmaxError::InvalidTheta(theta));
        }
        if !s_min.is_finite() || s_min < 10.0 {
            return Err(SmallmaxError::InvalidSMin(s_min));
        }
        if !inversion_tol.is_finite() || inversion_tol <= 0.0 {
            return Err(SmallmaxError::InvalidTolerance(inversion_tol));
        }
        let mut params = DistParams {
            theta,
            s_min,
            inversion_tol,
            ext_slope: 0.0,
        };
        params.ext_slope = params.t0_analytic(s_min) / s_min;
        Ok(params)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn s_min(&self) -> f64 {
        self.s_min
    }

    pub fn inversion_tol(&self) -> f64 {
        self.inversion_tol
    }

    fn t0_analytic(&self, s: f64) -> f64 {
        s / s.ln().ln().powf(self.theta)
    }

    /// `t = T0(s)`: analytic on `s >= s_min`, linear below. Strictly
    /// increasing and continuous on the positive axis.
    pub fn t0(&self, s: f64) -> Result<f64, SmallmaxError> {
        if s.is_nan() || s <= 0.0 {
            return Err(SmallmaxError::NonPositiveS(s));
        }
        Ok(if s >= self.s_min {
            self.t0_analytic(s)
        } else {
            s * self.ext_slope
        })
    }

    /// The unique `s` with `T0(s) = t`, to absolute tolerance
    /// `inversion_tol` on `s`.
    ///
    /// In the linear range the map inverts exactly. Above it the root
    /// is bracketed by doubling and narrowed by bisection; the
    /// derivative of `T0` is strictly positive there, so bracketing
    /// always succeeds. A final scan over the few neighbouring floats
    /// picks the representation whose forward image is closest to `t`
    /// (middle of ties), which is what keeps large-`s` round trips at
    /// ulp scale instead of inheriting the bisection residual.
    pub fn t0_inv(&self, t: f64) -> Result<f64, SmallmaxError> {
        if t.is_nan() || t <= 0.0 {
            return Err(SmallmaxError::NonPositiveT(t));
        }
        let t_seam = self.t0_analytic(self.s_min);
        if t <= t_seam {
            return Ok(t * (self.s_min / t_seam));
        }

        let mut lo = self.s_min;
        let mut hi = 2.0 * self.s_min;
        while self.t0_analytic(hi) < t {
            lo = hi;
            hi *= 2.0;
        }
        while hi - lo > self.inversion_tol {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.t0_analytic(mid) < t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(self.snap_to_preimage(0.5 * (lo + hi), t))
    }

    /// Scans the floats around `s_hat` for the ones whose forward image
    /// is closest to `t` and returns the middle of that plateau.
    fn snap_to_preimage(&self, s_hat: f64, t: f64) -> f64 {
        const WINDOW: usize = 8;
        let mut candidates = Vec::with_capacity(2 * WINDOW + 1);
        let mut x = s_hat;
        for _ in 0..WINDOW {
            x = x.next_down();
        }
        for _ in 0..(2 * WINDOW + 1) {
            if x >= self.s_min {
                candidates.push(x);
            }
            x = x.next_up();
        }
        if candidates.is_empty() {
            return s_hat;
        }
        let errs: Vec<f64> = candidates
            .iter()
            .map(|&c| (self.t0_analytic(c) - t).abs())
            .collect();
        let best = errs.iter().cloned().fold(f64::INFINITY, f64::min);
        let ties: Vec<usize> = (0..candidates.len()).filter(|&i| errs[i] == best).collect();
        candidates[ties[(ties.len() - 1) / 2]]
    }

    /// `log(1 - G(e^t)) = -T0^{-1}(t)`.
    pub fn log_tail(&self, t: f64) -> Result<LogProb, SmallmaxError> {
        let s = self.t0_inv(t)?;
        Ok(LogProb::from_log(-s).expect("tail exponent is positive"))
    }

    /// Tail exponent of the maximum of `e^{log_blocksize}` independent
    /// `G`-observations, by inverse transform: solves `G(e^t)^m = u` in
    /// `s`-coordinates.
    ///
    /// With `z = ln(u)/m`, the tail mass is `1 - u^{1/m} = -expm1(z)`;
    /// when `|z| < 1e-8` that cancels and the asymptotic form
    /// `s = log_blocksize - ln(-ln u)` takes over (second-order error
    /// below 5e-9 relative).
    pub fn sample_block_max_s(&self, log_blocksize: f64, u: f64) -> Result<f64, SmallmaxError> {
        if !log_blocksize.is_finite() || log_blocksize < 0.0 {
            return Err(SmallmaxError::InvalidBlocksize(log_blocksize));
        }
        if !(u > 0.0 && u < 1.0) {
            return Err(SmallmaxError::UniformOutOfRange(u));
        }
        let log_u = u.ln();
        let z = log_u * (-log_blocksize).exp();
        Ok(if z.abs() < 1e-8 {
            log_blocksize - (-log_u).ln()
        } else {
            -log1mexp(z)
        })
    }

    /// Same block maximum in `t`-coordinates.
    pub fn sample_block_max_t(&self, log_blocksize: f64, u: f64) -> Result<f64, SmallmaxError> {
        let s = self.sample_block_max_s(log_blocksize, u)?;
        self.t0(s)
    }

    /// Smallest admissible schedule start: the first `n` whose `s_n`
    /// has cleared `s_min`.
    pub fn minimal_n_min(&self) -> usize {
        let mut n = 9; // s_n > 0 needs ln sqrt(n) > 1, i.e. n > e^2
        while s_checkpoint(n) < self.s_min {
            n += 1;
        }
        n
    }

    /// Builds all checkpoint rows for `n` in `[n_min, n_max]`.
    pub fn schedule(&self, n_min: usize, n_max: usize) -> Result<Vec<ScheduleRow>, SmallmaxError> {
        let minimal = self.minimal_n_min();
        if n_min < minimal {
            return Err(SmallmaxError::NMinTooSmall {
                given: n_min,
                minimal,
            });
        }
        if n_max < n_min {
            return Err(SmallmaxError::EmptyRange { n_min, n_max });
        }
        let mut rows = Vec::with_capacity(n_max - n_min + 1);
        let mut s_prev = s_checkpoint(n_min - 1);
        for n in n_min..=n_max {
            let s = s_checkpoint(n);
            debug_assert!(s > s_prev);
            rows.push(ScheduleRow::build(self, n, s, s_prev)?);
            s_prev = s;
        }
        Ok(rows)
    }

    /// Runs one maxima trial over a prepared schedule, reporting the
    /// per-checkpoint indicators and the gap `t_M(n) - t_n`.
    pub fn run_maxima_trial(
        &self,
        schedule: &[ScheduleRow],
        rng: &mut TrialRng,
    ) -> Result<Vec<CheckpointRecord>, SmallmaxError> {
        let mut records = Vec::with_capacity(schedule.len());
        self.visit_maxima_trial(schedule, rng, |rec| records.push(rec))?;
        Ok(records)
    }

    /// Core of a maxima trial. The running maximum `t_M` is kept in
    /// `s`-coordinates (the monotone map `T0` commutes with `max`), so
    /// the identity `B_n = A_n and not E_n` holds exactly: all three
    /// indicators compare the same stored values.
    fn visit_maxima_trial(
        &self,
        schedule: &[ScheduleRow],
        rng: &mut TrialRng,
        mut visit: impl FnMut(CheckpointRecord),
    ) -> Result<(), SmallmaxError> {
        let first = match schedule.first() {
            Some(row) => row,
            None => return Ok(()),
        };
        // observations before the first checkpoint block
        let s_start = first.s - first.sigma;
        let mut s_max = self.sample_block_max_s(s_start, rng.next_open01())?;

        for row in schedule {
            // ln(m_n - m_{n-1}) = s_n + ln(1 - e^{-sigma_n})
            let block_log_size = row.s + log1mexp(-row.sigma);
            let s_block = self.sample_block_max_s(block_log_size, rng.next_open01())?;
            let a = s_block <= row.log_mprime;
            let e = s_max > row.log_mprime;
            s_max = s_max.max(s_block);
            let b = s_max <= row.log_mprime;
            debug_assert_eq!(b, a && !e);
            let below_scale = s_max <= row.s;
            let gap = self.t0(s_max)? - row.t;
            visit(CheckpointRecord {
                n: row.n,
                a,
                e,
                b,
                below_scale,
                gap,
            });
        }
        Ok(())
    }

    /// Runs seeded maxima trials and aggregates per-checkpoint
    /// statistics; deterministic for any worker count.
    pub fn run_maxima(&self, config: &MaximaConfig) -> Result<MaximaSummary, SmallmaxError> {
        if config.trials == 0 {
            return Err(SmallmaxError::InvalidConfig("trials must be >= 1".into()));
        }
        if config.workers == 0 {
            return Err(SmallmaxError::InvalidConfig("workers must be >= 1".into()));
        }
        let schedule = self.schedule(config.n_min, config.n_max)?;
        let cells = schedule.len();

        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| SmallmaxError::WorkerPool(e.to_string()))?;

        let trials = config.trials as u64;
        let seed = config.seed;

        let acc = pool.install(|| {
            (0..config.trials)
                .into_par_iter()
                .fold_chunks(
                    256,
                    || MaxAccum::new(cells),
                    |mut acc, trial| {
                        let mut rng = TrialRng::for_trial(seed, trial as u64);
                        let mut i = 0usize;
                        self.visit_maxima_trial(&schedule, &mut rng, |rec| {
                            acc.absorb(i, &rec);
                            i += 1;
                        })
                        .expect("schedule rows validated before the run");
                        acc
                    },
                )
                .reduce(|| MaxAccum::new(cells), MaxAccum::merge)
        });

        let tf = trials as f64;
        let mut rows = Vec::with_capacity(cells);
        let mut cum_mean_b = 0.0;
        let mut cum_analytic_pb = 0.0;
        for (i, row) in schedule.iter().enumerate() {
            let freq_b = acc.counts_b[i] as f64 / tf;
            cum_mean_b += freq_b;
            cum_analytic_pb += row.analytic_pb();
            let quantile = |p: f64| acc.gap_quantile(i, p, trials);
            rows.push(CheckpointStats {
                n: row.n,
                s: row.s,
                t: row.t,
                t_prime: row.t_prime,
                pe_bound: row.pe_bound,
                analytic_pa: row.analytic_pa(),
                analytic_pe: row.analytic_pe(),
                analytic_pb: row.analytic_pb(),
                freq_a: acc.counts_a[i] as f64 / tf,
                freq_e: acc.counts_e[i] as f64 / tf,
                freq_b,
                freq_below_scale: acc.counts_below[i] as f64 / tf,
                mean_gap: acc.gap_ticks[i] as f64 / GAP_TICK / tf,
                gap_p10: quantile(0.10),
                gap_p50: quantile(0.50),
                gap_p90: quantile(0.90),
                cum_mean_b,
                cum_analytic_pb,
            });
        }

        Ok(MaximaSummary {
            config: MaximaParams {
                n_min: config.n_min,
                n_max: config.n_max,
                trials: config.trials,
                seed: config.seed,
            },
            theta: self.theta,
            e1_reference: (-1.0f64).exp(),
            rows,
        })
    }
}

/// `s_n = 2 n ln ln sqrt(n)`.
pub fn s_checkpoint(n: usize) -> f64 {
    let nf = n as f64;
    2.0 * nf * (0.5 * nf.ln()).ln()
}

/// One checkpoint of the schedule, everything in log/exponent
/// coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScheduleRow {
    pub n: usize,
    /// `s_n = ln m_n`
    pub s: f64,
    /// `sigma_n = s_n - s_{n-1}`
    pub sigma: f64,
    /// `ln m'_n = (s_n + s_{n-1}) / 2`, floor dropped
    pub log_mprime: f64,
    /// `t_n = T0(s_n) = ln a(m_n)`
    pub t: f64,
    /// `t'_n = T0(ln m'_n) = ln x_n`
    pub t_prime: f64,
    /// `pi_n = m_n (1 - G(x_n)) = e^{sigma_n / 2}`
    pub pi: f64,
    /// `ln P(B_n) = m_n ln G(x_n)`, fused evaluation
    pub log_pb: LogProb,
    /// `P(E_n) <= m_{n-1} / m'_n = e^{-sigma_n / 2}`
    pub pe_bound: f64,
}

impl ScheduleRow {
    fn build(params: &DistParams, n: usize, s: f64, s_prev: f64) -> Result<Self, SmallmaxError> {
        // s_prev is within a factor two of s, so the difference is
        // exact; every derived exponent reuses it so the identity
        // pi = e^{sigma/2} holds to the last bit.
        let sigma = s - s_prev;
        let half_sigma = 0.5 * sigma;
        let log_mprime = s - half_sigma;
        let pi = half_sigma.exp();
        let pe_bound = (-half_sigma).exp();
        let t = params.t0(s)?;
        let t_prime = params.t0(log_mprime)?;
        debug_assert!(t_prime < t);
        let log_pb =
            LogProb::from_log(-pi * r_factor(log_mprime)).expect("fused exponent is non-positive");
        Ok(ScheduleRow {
            n,
            s,
            sigma,
            log_mprime,
            t,
            t_prime,
            pi,
            log_pb,
            pe_bound,
        })
    }

    /// `P(B_n)` from the fused log form.
    pub fn analytic_pb(&self) -> f64 {
        self.log_pb.prob()
    }

    /// `P(E_n) = 1 - G(x_n)^{m_{n-1}} = -expm1(-e^{-sigma/2} r)`.
    pub fn analytic_pe(&self) -> f64 {
        -(-self.pe_bound * r_factor(self.log_mprime)).exp_m1()
    }

    /// `P(A_n) = G(x_n)^{m_n - m_{n-1}} = exp(-(pi - e^{-sigma/2}) r)`.
    pub fn analytic_pa(&self) -> f64 {
        (-(self.pi - self.pe_bound) * r_factor(self.log_mprime)).exp()
    }
}

/// `r(s') = -e^{s'} ln(1 - e^{-s'}) = 1 + q/2 + q^2/3 + ...` with
/// `q = e^{-s'}`; the correction factor between `m (1 - G)` and
/// `-m ln G`.
fn r_factor(s_tail: f64) -> f64 {
    let q = (-s_tail).exp();
    if q > 1e-8 {
        -(-q).ln_1p() / q
    } else {
        1.0 + 0.5 * q
    }
}

/// `ln(p^m)` for `p = 1 - e^{-s_tail}` and `m = e^{m_log}`, evaluated
/// without forming `m`: `-e^{m_log - s_tail} r(s_tail)`.
pub fn fused_pow_log(m_log: f64, s_tail: f64) -> f64 {
    -(m_log - s_tail).exp() * r_factor(s_tail)
}

/// Per-checkpoint outcome of one trial.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CheckpointRecord {
    pub n: usize,
    /// every observation in block `n` stayed at or below `x_n`
    pub a: bool,
    /// some earlier observation exceeded `x_n`
    pub e: bool,
    /// no observation up to `m_n` exceeded `x_n`
    pub b: bool,
    /// `t_M(n) <= t_n`, the `e^{-1}`-law event
    pub below_scale: bool,
    /// `t_M(n) - t_n = ln(M_{m_n} / a(m_n))`
    pub gap: f64,
}

/// Run parameters for the maxima engine.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct MaximaConfig {
    pub n_min: usize,
    pub n_max: usize,
    pub trials: usize,
    pub seed: u64,
    /// worker threads; results do not depend on this
    pub workers: usize,
}

/// The semantic parameters echoed into the summary; worker count is an
/// execution detail and stays out.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct MaximaParams {
    pub n_min: usize,
    pub n_max: usize,
    pub trials: usize,
    pub seed: u64,
}

/// Aggregated per-checkpoint statistics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckpointStats {
    pub n: usize,
    pub s: f64,
    pub t: f64,
    pub t_prime: f64,
    pub pe_bound: f64,
    pub analytic_pa: f64,
    pub analytic_pe: f64,
    pub analytic_pb: f64,
    pub freq_a: f64,
    pub freq_e: f64,
    pub freq_b: f64,
    /// empirical `P(t_M(n) <= t_n)`; compare against `e^{-1}`
    pub freq_below_scale: f64,
    pub mean_gap: f64,
    pub gap_p10: f64,
    pub gap_p50: f64,
    pub gap_p90: f64,
    /// running sum of `freq_b`: mean cumulative `B`-count up to here
    pub cum_mean_b: f64,
    pub cum_analytic_pb: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MaximaSummary {
    pub config: MaximaParams,
    pub theta: f64,
    /// `e^{-1}`, the reference value for `freq_below_scale`
    pub e1_reference: f64,
    pub rows: Vec<CheckpointStats>,
}

const GAP_TICK: f64 = 4294967296.0; // 2^32
const GAP_HIST_BINS: usize = 256;
const GAP_HIST_LO: f64 = -8.0;
const GAP_HIST_HI: f64 = 8.0;

/// Exact-integer accumulator: merging is associative and commutative,
/// so reduction order cannot change the result. Gap means accumulate
/// in fixed-point ticks for the same reason.
struct MaxAccum {
    counts_a: Vec<u64>,
    counts_e: Vec<u64>,
    counts_b: Vec<u64>,
    counts_below: Vec<u64>,
    gap_ticks: Vec<i128>,
    gap_hist: Vec<u64>,
}

impl MaxAccum {
    fn new(cells: usize) -> Self {
        MaxAccum {
            counts_a: vec![0; cells],
            counts_e: vec![0; cells],
            counts_b: vec![0; cells],
            counts_below: vec![0; cells],
            gap_ticks: vec![0; cells],
            gap_hist: vec![0; cells * GAP_HIST_BINS],
        }
    }

    fn absorb(&mut self, i: usize, rec: &CheckpointRecord) {
        self.counts_a[i] += rec.a as u64;
        self.counts_e[i] += rec.e as u64;
        self.counts_b[i] += rec.b as u64;
        self.counts_below[i] += rec.below_scale as u64;
        self.gap_ticks[i] += (rec.gap * GAP_TICK).round() as i128;
        let width = (GAP_HIST_HI - GAP_HIST_LO) / GAP_HIST_BINS as f64;
        let bin = ((rec.gap - GAP_HIST_LO) / width).floor();
        let bin = (bin.max(0.0) as usize).min(GAP_HIST_BINS - 1);
        self.gap_hist[i * GAP_HIST_BINS + bin] += 1;
    }

    fn merge(mut self, other: MaxAccum) -> MaxAccum {
        for (d, s) in self.counts_a.iter_mut().zip(&other.counts_a) {
            *d += s;
        }
        for (d, s) in self.counts_e.iter_mut().zip(&other.counts_e) {
            *d += s;
        }
        for (d, s) in self.counts_b.iter_mut().zip(&other.counts_b) {
            *d += s;
        }
        for (d, s) in self.counts_below.iter_mut().zip(&other.counts_below) {
            *d += s;
        }
        for (d, s) in self.gap_ticks.iter_mut().zip(&other.gap_ticks) {
            *d += s;
        }
        for (d, s) in self.gap_hist.iter_mut().zip(&other.gap_hist) {
            *d += s;
        }
        self
    }

    /// Quantile from the per-checkpoint histogram, linearly
    /// interpolated within the bin.
    fn gap_quantile(&self, i: usize, p: f64, trials: u64) -> f64 {
        let hist = &self.gap_hist[i * GAP_HIST_BINS..(i + 1) * GAP_HIST_BINS];
        let width = (GAP_HIST_HI - GAP_HIST_LO) / GAP_HIST_BINS as f64;
        let target = p * trials as f64;
        let mut cum = 0u64;
        for (b, &c) in hist.iter().enumerate() {
            let next = cum + c;
            if (next as f64) >= target && c > 0 {
                let frac = (target - cum as f64) / c as f64;
                return GAP_HIST_LO + (b as f64 + frac.clamp(0.0, 1.0)) * width;
            }
            cum = next;
        }
        GAP_HIST_HI
    }
}
