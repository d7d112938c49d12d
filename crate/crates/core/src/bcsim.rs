//! Seeded Monte Carlo engine for contaminated event trials.
//!
//! Trials are independent work units; each one draws from its own
//! counter-based stream (see [`crate::stream`]), so a run is a pure
//! function of `(scenario, plan, config)` and the summary is
//! bit-identical for any worker count. Aggregation uses exact integer
//! counters per cell, which makes merge order irrelevant.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::scenarios::{Scenario, ScenarioError, StepLaw};
use crate::stream::TrialRng;
use crate::thinning::ThinningPlan;

/// Horizon above which per-index frequencies move to a geometric grid.
pub const DENSE_GRID_LIMIT: usize = 1_000_000;

/// Growth factor of the sparse index grid past 1000.
const GRID_FACTOR: f64 = 1.01;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("thinning plan covers {plan_len} indices but the horizon is {horizon}")]
    PlanTooShort { plan_len: usize, horizon: usize },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("failed to build worker pool: {0}")]
    WorkerPool(String),
}

/// Run parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct TrialConfig {
    /// number of indices per trial
    pub horizon: usize,
    /// number of trials
    pub trials: usize,
    pub seed: u64,
    /// worker threads; results do not depend on this
    pub workers: usize,
}

impl TrialConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.horizon == 0 {
            return Err(SimError::InvalidConfig("horizon must be >= 1".into()));
        }
        if self.trials == 0 {
            return Err(SimError::InvalidConfig("trials must be >= 1".into()));
        }
        if self.workers == 0 {
            return Err(SimError::InvalidConfig("workers must be >= 1".into()));
        }
        Ok(())
    }

    fn params(&self) -> RunParams {
        RunParams {
            horizon: self.horizon,
            trials: self.trials,
            seed: self.seed,
        }
    }
}

/// The semantic run parameters echoed into every summary. Worker count
/// is an execution detail with no effect on results, so it is not part
/// of the echo.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct RunParams {
    pub horizon: usize,
    pub trials: usize,
    pub seed: u64,
}

/// Indices at which per-`n` frequencies are recorded: dense up to
/// [`DENSE_GRID_LIMIT`], otherwise every `n <= 1000` plus rounded
/// powers of 1.01 (and the horizon itself).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexGrid {
    points: Vec<usize>,
}

impl IndexGrid {
    pub fn for_horizon(horizon: usize) -> Self {
        if horizon <= DENSE_GRID_LIMIT {
            IndexGrid {
                points: (1..=horizon).collect(),
            }
        } else {
            let mut points: Vec<usize> = (1..=1000).collect();
            let mut v = 1000.0f64;
            loop {
                v *= GRID_FACTOR;
                let n = v.round() as usize;
                if n >= horizon {
                    break;
                }
                if n > *points.last().unwrap() {
                    points.push(n);
                }
            }
            points.push(horizon);
            IndexGrid { points }
        }
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Whether every index up to the horizon has its own cell.
    pub fn is_dense(&self) -> bool {
        self.points.len() == *self.points.last().unwrap_or(&0)
    }
}

/// Per-trial outcome record.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct TrialRecord {
    /// cumulative count of `B_n` over the horizon
    pub b_count: u64,
    /// last index at which `A_n` occurred (0 when none did)
    pub last_a: u64,
    /// once-per-trial contaminator outcome, where the variant has one
    pub e_flag: Option<bool>,
    /// cumulative counts of the retained (primed) events
    pub a_primed: u64,
    pub d_primed: u64,
    pub b_primed: u64,
}

/// Distribution summary of an integer count across trials.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CountStats {
    pub mean: f64,
    /// sample variance (denominator `T - 1`; zero for a single trial)
    pub variance: f64,
    pub min: u64,
    pub max: u64,
    /// exact occupancy per count value, sorted by count
    pub histogram: Vec<(u64, u64)>,
}

impl CountStats {
    fn from_counts<I: Iterator<Item = u64> + Clone>(counts: I, t: u64) -> Self {
        let mut sum: u128 = 0;
        let mut sum_sq: u128 = 0;
        let mut min = u64::MAX;
        let mut max = 0u64;
        let mut histogram = std::collections::BTreeMap::new();
        for c in counts {
            sum += c as u128;
            sum_sq += (c as u128) * (c as u128);
            min = min.min(c);
            max = max.max(c);
            *histogram.entry(c).or_insert(0u64) += 1;
        }
        let tf = t as f64;
        let mean = sum as f64 / tf;
        let variance = if t > 1 {
            ((sum_sq as f64) - (sum as f64) * (sum as f64) / tf) / (tf - 1.0)
        } else {
            0.0
        };
        CountStats {
            mean,
            variance: variance.max(0.0),
            min: if t == 0 { 0 } else { min },
            max,
            histogram: histogram.into_iter().collect(),
        }
    }
}

/// `B`-count statistics split on the once-per-trial contaminator.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionalStats {
    pub trials_with_e: u64,
    pub mean_b_given_e: f64,
    pub max_b_given_e: u64,
    pub trials_without_e: u64,
    pub mean_b_given_not_e: f64,
}

/// Order statistics of the last `A`-occurrence index.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LastOccurrence {
    pub p50: u64,
    pub p99: u64,
    pub max: u64,
}

/// Frequencies and count means for the retained (primed) events.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrimedStats {
    pub freq_a_primed: Vec<f64>,
    pub freq_d_primed: Vec<f64>,
    pub freq_b_primed: Vec<f64>,
    pub counts_a_primed: CountStats,
    pub counts_d_primed: CountStats,
    pub counts_b_primed: CountStats,
}

/// Aggregated result of a run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialSummary {
    pub config: RunParams,
    /// indices carrying the per-`n` frequencies below
    pub grid: Vec<usize>,
    pub freq_a: Vec<f64>,
    pub freq_e: Vec<f64>,
    pub freq_b: Vec<f64>,
    /// present when the run used a coupling plan
    pub primed: Option<PrimedStats>,
    /// distribution of the per-trial `B`-count
    pub cumulative: CountStats,
    /// present for variants with a once-per-trial contaminator
    pub conditional: Option<ConditionalStats>,
    pub last_a: LastOccurrence,
    #[serde(skip)]
    pub per_trial: Vec<TrialRecord>,
}

struct Accum {
    counts_a: Vec<u64>,
    counts_e: Vec<u64>,
    counts_b: Vec<u64>,
    counts_ap: Vec<u64>,
    counts_dp: Vec<u64>,
    counts_bp: Vec<u64>,
    records: Vec<(u64, TrialRecord)>,
}

impl Accum {
    fn new(cells: usize, coupled: bool) -> Self {
        let primed_cells = if coupled { cells } else { 0 };
        Accum {
            counts_a: vec![0; cells],
            counts_e: vec![0; cells],
            counts_b: vec![0; cells],
            counts_ap: vec![0; primed_cells],
            counts_dp: vec![0; primed_cells],
            counts_bp: vec![0; primed_cells],
            records: Vec::new(),
        }
    }

    fn merge(mut self, other: Accum) -> Accum {
        fn add_into(dst: &mut [u64], src: &[u64]) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
        add_into(&mut self.counts_a, &other.counts_a);
        add_into(&mut self.counts_e, &other.counts_e);
        add_into(&mut self.counts_b, &other.counts_b);
        add_into(&mut self.counts_ap, &other.counts_ap);
        add_into(&mut self.counts_dp, &other.counts_dp);
        add_into(&mut self.counts_bp, &other.counts_bp);
        self.records.extend(other.records);
        self
    }
}

/// Runs `config.trials` independent trials of the scenario.
pub fn run(scenario: &Scenario, config: &TrialConfig) -> Result<TrialSummary, SimError> {
    run_impl(scenario, None, config)
}

/// Runs with the retention coupling `A'_n = A_n ∩ {U_n <= q_n}`, with
/// `q_n` taken from the plan. `D'_n = (E_n ∩ A_n) ∩ {U_n <= q_n}` and
/// `B'_n = B_n ∩ {U_n <= q_n}` are reported alongside the unprimed
/// events, which see exactly the same scenario randomness as [`run`].
pub fn run_with_coupling(
    scenario: &Scenario,
    plan: &ThinningPlan,
    config: &TrialConfig,
) -> Result<TrialSummary, SimError> {
    if plan.len() < config.horizon {
        return Err(SimError::PlanTooShort {
            plan_len: plan.len(),
            horizon: config.horizon,
        });
    }
    run_with_retention(scenario, plan.q(), config)
}

/// Same coupling with explicit retention ratios.
pub fn run_with_retention(
    scenario: &Scenario,
    q: &[f64],
    config: &TrialConfig,
) -> Result<TrialSummary, SimError> {
    if q.len() < config.horizon {
        return Err(SimError::PlanTooShort {
            plan_len: q.len(),
            horizon: config.horizon,
        });
    }
    run_impl(scenario, Some(&q[..config.horizon]), config)
}

fn run_impl(
    scenario: &Scenario,
    q: Option<&[f64]>,
    config: &TrialConfig,
) -> Result<TrialSummary, SimError> {
    config.validate()?;
    scenario.validate()?;

    let horizon = config.horizon;
    let laws: Vec<StepLaw> = (1..=horizon)
        .map(|n| scenario.law_at(n))
        .collect::<Result<_, _>>()?;

    let grid = IndexGrid::for_horizon(horizon);
    let cells = grid.len();
    let coupled = q.is_some();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| SimError::WorkerPool(e.to_string()))?;

    let trials = config.trials as u64;
    let seed = config.seed;
    let grid_points = grid.points();

    let mut acc = pool.install(|| {
        (0..config.trials)
            .into_par_iter()
            .fold_chunks(
                1024,
                || Accum::new(cells, coupled),
                |mut acc, trial| {
                    run_one_trial(
                        scenario,
                        &laws,
                        q,
                        grid_points,
                        seed,
                        trial as u64,
                        &mut acc,
                    );
                    acc
                },
            )
            .reduce(|| Accum::new(cells, coupled), Accum::merge)
    });

    acc.records.sort_unstable_by_key(|&(idx, _)| idx);
    let records: Vec<TrialRecord> = acc.records.into_iter().map(|(_, r)| r).collect();

    let tf = trials as f64;
    let freq = |counts: &[u64]| counts.iter().map(|&c| c as f64 / tf).collect::<Vec<f64>>();

    let primed = if coupled {
        Some(PrimedStats {
            freq_a_primed: freq(&acc.counts_ap),
            freq_d_primed: freq(&acc.counts_dp),
            freq_b_primed: freq(&acc.counts_bp),
            counts_a_primed: CountStats::from_counts(records.iter().map(|r| r.a_primed), trials),
            counts_d_primed: CountStats::from_counts(records.iter().map(|r| r.d_primed), trials),
            counts_b_primed: CountStats::from_counts(records.iter().map(|r| r.b_primed), trials),
        })
    } else {
        None
    };

    let conditional = if scenario.has_fixed_contaminator() {
        let with_e: Vec<&TrialRecord> = records.iter().filter(|r| r.e_flag == Some(true)).collect();
        let without_e: Vec<&TrialRecord> =
            records.iter().filter(|r| r.e_flag == Some(false)).collect();
        let mean_of = |rs: &[&TrialRecord]| {
            if rs.is_empty() {
                0.0
            } else {
                rs.iter().map(|r| r.b_count as u128).sum::<u128>() as f64 / rs.len() as f64
            }
        };
        Some(ConditionalStats {
            trials_with_e: with_e.len() as u64,
            mean_b_given_e: mean_of(&with_e),
            max_b_given_e: with_e.iter().map(|r| r.b_count).max().unwrap_or(0),
            trials_without_e: without_e.len() as u64,
            mean_b_given_not_e: mean_of(&without_e),
        })
    } else {
        None
    };

    let mut last_sorted: Vec<u64> = records.iter().map(|r| r.last_a).collect();
    last_sorted.sort_unstable();
    let rank = |p: f64| {
        let idx = ((p * trials as f64).ceil() as usize).clamp(1, trials as usize) - 1;
        last_sorted[idx]
    };
    let last_a = LastOccurrence {
        p50: rank(0.50),
        p99: rank(0.99),
        max: *last_sorted.last().unwrap(),
    };

    Ok(TrialSummary {
        config: config.params(),
        grid: grid_points.to_vec(),
        freq_a: freq(&acc.counts_a),
        freq_e: freq(&acc.counts_e),
        freq_b: freq(&acc.counts_b),
        primed,
        cumulative: CountStats::from_counts(records.iter().map(|r| r.b_count), trials),
        conditional,
        last_a,
        per_trial: records,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_one_trial(
    scenario: &Scenario,
    laws: &[StepLaw],
    q: Option<&[f64]>,
    grid: &[usize],
    seed: u64,
    trial: u64,
    acc: &mut Accum,
) {
    let mut rng = TrialRng::for_trial(seed, trial);
    let state = scenario.init_trial(&mut rng);

    let mut rec = TrialRecord {
        b_count: 0,
        last_a: 0,
        e_flag: state.fixed_e(),
        a_primed: 0,
        d_primed: 0,
        b_primed: 0,
    };

    // next grid slot to fill; grid points are ascending
    let mut gi = 0usize;
    let dense = grid.len() == laws.len();

    for (i, law) in laws.iter().enumerate() {
        let n = i + 1;
        let u1 = rng.next_unit();
        let u2 = rng.next_unit();
        // the coupling uniform is part of the fixed per-step budget
        // whether or not this run retains anything
        let u3 = rng.next_open01();

        let out = scenario.sample_with(law, &state, u1, u2);
        rec.b_count += out.b as u64;
        if out.a {
            rec.last_a = n as u64;
        }

        let cell = if dense {
            Some(i)
        } else if gi < grid.len() && grid[gi] == n {
            let c = gi;
            gi += 1;
            Some(c)
        } else {
            None
        };

        if let Some(c) = cell {
            acc.counts_a[c] += out.a as u64;
            acc.counts_e[c] += out.e as u64;
            acc.counts_b[c] += out.b as u64;
        }

        if let Some(q) = q {
            let retained = u3 <= q[i];
            let ap = out.a && retained;
            let dp = out.e && out.a && retained;
            let bp = out.b && retained;
            rec.a_primed += ap as u64;
            rec.d_primed += dp as u64;
            rec.b_primed += bp as u64;
            if let Some(c) = cell {
                acc.counts_ap[c] += ap as u64;
                acc.counts_dp[c] += dp as u64;
                acc.counts_bp[c] += bp as u64;
            }
        }
    }

    acc.records.push((trial, rec));
}
