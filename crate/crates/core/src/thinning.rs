//! Dyadic thinning of weight sequences.
//!
//! Given weights `p_n` in `[0, 1]` and non-negative coefficients `a_n`,
//! the construction rounds each `a_n` down to a dyadic level
//! `a'_n = 2^-k`, groups indices into buckets by level, and divides the
//! weights of every bucket whose total mass exceeds one by that mass.
//! The thinned weights satisfy `p'_n <= p_n`, every oversized bucket
//! sums to exactly one, and the weighted sum obeys
//! `sum p'_n a'_n <= sum_k 2^-k = 2` regardless of the input.
//!
//! The construction runs on a finite prefix; bucket masses are prefix
//! masses. A streaming variant (ratios fixed at emission time from the
//! mass seen so far) would change the constant in the bound and is
//! deliberately not provided.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// Dyadic level of a coefficient: `a' = 2^-k`, with level 0 covering
/// all `a >= 1` and the infinite level covering `a = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Level {
    Finite(u32),
    Infinite,
}

impl Level {
    /// The rounded coefficient `a' = 2^-k` (`0.0` at the infinite level).
    pub fn a_prime(self) -> f64 {
        match self {
            Level::Finite(k) => 2f64.powi(-(k as i32)),
            Level::Infinite => 0.0,
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Level::Finite(k) => write!(f, "{k}"),
            Level::Infinite => write!(f, "inf"),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ThinningError {
    #[error("p and a have different lengths ({p_len} vs {a_len})")]
    LengthMismatch { p_len: usize, a_len: usize },
    #[error("weight p[{index}] = {value} is not in [0, 1]")]
    InvalidWeight { index: usize, value: f64 },
    #[error("coefficient a[{index}] = {value} is negative or NaN")]
    InvalidCoefficient { index: usize, value: f64 },
}

/// Validated input pair for [`build_plan`].
#[derive(Clone, Debug)]
pub struct ThinningInput {
    p: Vec<f64>,
    a: Vec<f64>,
}

impl ThinningInput {
    pub fn new(p: Vec<f64>, a: Vec<f64>) -> Result<Self, ThinningError> {
        if p.len() != a.len() {
            return Err(ThinningError::LengthMismatch {
                p_len: p.len(),
                a_len: a.len(),
            });
        }
        for (i, &v) in p.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(ThinningError::InvalidWeight { index: i, value: v });
            }
        }
        for (i, &v) in a.iter().enumerate() {
            if v.is_nan() || v < 0.0 {
                return Err(ThinningError::InvalidCoefficient { index: i, value: v });
            }
        }
        Ok(ThinningInput { p, a })
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }
}

/// Output of the construction.
#[derive(Clone, Debug, PartialEq)]
pub struct ThinningPlan {
    levels: Vec<Level>,
    bucket_mass: BTreeMap<Level, f64>,
    p_thinned: Vec<f64>,
    q: Vec<f64>,
}

impl ThinningPlan {
    pub fn len(&self) -> usize {
        self.p_thinned.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_thinned.is_empty()
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    /// Prefix mass `P_k` per level.
    pub fn bucket_mass(&self) -> &BTreeMap<Level, f64> {
        &self.bucket_mass
    }

    pub fn p_thinned(&self) -> &[f64] {
        &self.p_thinned
    }

    /// Retention ratios `q_n = p'_n / p_n` (one where `p_n = 0`).
    pub fn q(&self) -> &[f64] {
        &self.q
    }

    /// The achieved weighted sum `sum p'_n a'_n`; at most 2 by
    /// construction.
    pub fn weighted_bound(&self) -> f64 {
        let mut sum = KahanSum::new();
        for (pt, lv) in self.p_thinned.iter().zip(&self.levels) {
            sum.add(pt * lv.a_prime());
        }
        sum.value()
    }
}

/// The unique level `k >= 1` with `a` in `[2^-k, 2^-k+1)` for
/// `0 < a < 1`; level 0 for `a >= 1`; the infinite level for `a = 0`.
///
/// The rounded value satisfies `a' <= a < 2 a'` for finite `k >= 1`.
/// Levels are read off the binary exponent, so dyadic boundaries land
/// exactly.
pub fn dyadic_level(a: f64) -> Result<Level, ThinningError> {
    if a.is_nan() || a < 0.0 {
        return Err(ThinningError::InvalidCoefficient { index: 0, value: a });
    }
    if a == 0.0 {
        return Ok(Level::Infinite);
    }
    if a >= 1.0 {
        return Ok(Level::Finite(0));
    }
    let bits = a.to_bits();
    let exp_bits = (bits >> 52) & 0x7ff;
    let floor_log2 = if exp_bits != 0 {
        exp_bits as i32 - 1023
    } else {
        // subnormal: value = mantissa * 2^-1074
        63 - bits.leading_zeros() as i32 - 1074
    };
    // 0 < a < 1 implies floor_log2 in [-1074, -1].
    Ok(Level::Finite((-floor_log2) as u32))
}

/// Runs the bucket construction on the full input prefix.
///
/// Deterministic: bucket masses accumulate left to right in index order
/// with compensated summation. The construction is applied
/// unconditionally; buckets with mass at most one are left untouched,
/// so convergent inputs come back unchanged. The infinite level (zero
/// coefficients) never thins regardless of its mass.
///
/// ```
/// use bclab::thinning::{build_plan, ThinningInput};
///
/// let input = ThinningInput::new(vec![0.5; 4], vec![0.6; 4]).unwrap();
/// let plan = build_plan(&input);
/// // one bucket of mass 2 at level 1: every weight drops to 1/4
/// assert_eq!(plan.p_thinned(), &[0.25; 4]);
/// assert!(plan.weighted_bound() <= 2.0);
/// ```
pub fn build_plan(input: &ThinningInput) -> ThinningPlan {
    let n = input.len();
    let mut levels = Vec::with_capacity(n);
    for &a in &input.a {
        // invalid coefficients were rejected at construction
        levels.push(dyadic_level(a).expect("validated input"));
    }

    let mut sums: BTreeMap<Level, KahanSum> = BTreeMap::new();
    for (&p, &lv) in input.p.iter().zip(&levels) {
        sums.entry(lv).or_default().add(p);
    }
    let bucket_mass: BTreeMap<Level, f64> = sums.iter().map(|(&lv, s)| (lv, s.value())).collect();

    let mut p_thinned = Vec::with_capacity(n);
    let mut q = Vec::with_capacity(n);
    for (&p, &lv) in input.p.iter().zip(&levels) {
        let mass = bucket_mass[&lv];
        let thin = lv != Level::Infinite && mass > 1.0;
        let pt = if thin { p / mass } else { p };
        p_thinned.push(pt);
        q.push(if p == 0.0 {
            1.0
        } else if thin {
            1.0 / mass
        } else {
            1.0
        });
    }

    ThinningPlan {
        levels,
        bucket_mass,
        p_thinned,
        q,
    }
}

/// Kahan compensated accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub(crate) fn new() -> Self {
        KahanSum::default()
    }

    pub(crate) fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum
    }
}
