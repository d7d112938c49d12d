//! Contaminated event scenarios.
//!
//! A [`Scenario`] describes the joint law of a sequence of event pairs
//! `(A_n, E_n)` and the derived `B_n = A_n \ E_n`. Four variants are
//! supported:
//!
//! - `IndependentContamination`: `A_n` independent across `n`, `E_n`
//!   independent of `A_n`;
//! - `FixedContaminator`: one event `E` drawn once per trial,
//!   independent of the `A_n`, with `E_n = E` for all `n`;
//! - `Absorbing`: `E_n = E ∩ A_n` for a once-per-trial `E`;
//! - `BoundedDependence`: per-step joint with prescribed intersection
//!   `min(1, C) · p_n · e_n`, clipped to the Fréchet bounds and realized
//!   through a single uniform.
//!
//! Index laws are deterministic functions of `n`; no marginal is ever
//! re-randomized.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stream::TrialRng;

/// Probability of the once-per-trial contaminator in the `Absorbing`
/// variant, which fixes no marginal of its own.
pub const ABSORBING_PE: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("margin index {n} is out of range for a table of {len} values")]
    TableIndexOutOfRange { n: usize, len: usize },
    #[error("margin index must be >= 1")]
    ZeroIndex,
    #[error("constant margin {0} is not a probability in [0, 1]")]
    InvalidConstant(f64),
    #[error("margin coefficient {0} must be finite and non-negative")]
    InvalidCoefficient(f64),
    #[error("table value {value} at position {index} is not in [0, 1]")]
    InvalidTableValue { index: usize, value: f64 },
    #[error("probability {0} is not in [0, 1]")]
    InvalidProbability(f64),
    #[error("dependence constant {0} must be finite and non-negative")]
    InvalidDependenceConstant(f64),
}

/// Deterministic index law for a marginal probability sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MarginSpec {
    /// `p_n = c`
    Constant { c: f64 },
    /// `p_n = min(1, c / n)`
    Harmonic { c: f64 },
    /// `p_n = min(1, c / ln(n + 2))`
    ReciprocalLog { c: f64 },
    /// explicit values, 1-indexed
    Table { values: Vec<f64> },
}

impl MarginSpec {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        match self {
            MarginSpec::Constant { c } => {
                if !(0.0..=1.0).contains(c) {
                    return Err(ScenarioError::InvalidConstant(*c));
                }
            }
            MarginSpec::Harmonic { c } | MarginSpec::ReciprocalLog { c } => {
                if !c.is_finite() || *c < 0.0 {
                    return Err(ScenarioError::InvalidCoefficient(*c));
                }
            }
            MarginSpec::Table { values } => {
                for (i, &v) in values.iter().enumerate() {
                    if !(0.0..=1.0).contains(&v) {
                        return Err(ScenarioError::InvalidTableValue { index: i, value: v });
                    }
                }
            }
        }
        Ok(())
    }

    /// The marginal at index `n >= 1`.
    pub fn value(&self, n: usize) -> Result<f64, ScenarioError> {
        if n == 0 {
            return Err(ScenarioError::ZeroIndex);
        }
        match self {
            MarginSpec::Constant { c } => Ok(*c),
            MarginSpec::Harmonic { c } => Ok((c / n as f64).min(1.0)),
            MarginSpec::ReciprocalLog { c } => Ok((c / (n as f64 + 2.0).ln()).min(1.0)),
            MarginSpec::Table { values } => {
                values
                    .get(n - 1)
                    .copied()
                    .ok_or(ScenarioError::TableIndexOutOfRange {
                        n,
                        len: values.len(),
                    })
            }
        }
    }
}

/// Joint law of a contaminated event sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scenario {
    IndependentContamination {
        p: MarginSpec,
        e: MarginSpec,
    },
    FixedContaminator {
        p: MarginSpec,
        #[serde(rename = "pE")]
        p_e: f64,
    },
    Absorbing {
        p: MarginSpec,
    },
    BoundedDependence {
        p: MarginSpec,
        e: MarginSpec,
        #[serde(rename = "C")]
        c: f64,
    },
}

/// Per-index law, precomputed once per run so the hot loop does no
/// index arithmetic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLaw {
    /// `P(A_n)`
    pub p: f64,
    /// marginal of the per-step contaminator (unused by the
    /// once-per-trial variants)
    pub e: f64,
    /// `P(E_n ∩ A_n)` prescribed by the joint construction
    pub joint: f64,
}

/// Once-per-trial state: the contaminator draw for the variants that
/// have one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialState {
    fixed_e: Option<bool>,
}

impl TrialState {
    /// Whether the once-per-trial `E` occurred, if the variant defines
    /// one.
    pub fn fixed_e(&self) -> Option<bool> {
        self.fixed_e
    }
}

/// One sampled step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepOutcome {
    pub a: bool,
    pub e: bool,
    pub b: bool,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        match self {
            Scenario::IndependentContamination { p, e } => {
                p.validate()?;
                e.validate()
            }
            Scenario::FixedContaminator { p, p_e } => {
                p.validate()?;
                if !(0.0..=1.0).contains(p_e) {
                    return Err(ScenarioError::InvalidProbability(*p_e));
                }
                Ok(())
            }
            Scenario::Absorbing { p } => p.validate(),
            Scenario::BoundedDependence { p, e, c } => {
                p.validate()?;
                e.validate()?;
                if !c.is_finite() || *c < 0.0 {
                    return Err(ScenarioError::InvalidDependenceConstant(*c));
                }
                Ok(())
            }
        }
    }

    /// True when the variant draws a single contaminator per trial.
    pub fn has_fixed_contaminator(&self) -> bool {
        matches!(
            self,
            Scenario::FixedContaminator { .. } | Scenario::Absorbing { .. }
        )
    }

    /// The law at index `n`, with the prescribed intersection already
    /// clipped to the Fréchet bounds where applicable.
    pub fn law_at(&self, n: usize) -> Result<StepLaw, ScenarioError> {
        match self {
            Scenario::IndependentContamination { p, e } => {
                let (p, e) = (p.value(n)?, e.value(n)?);
                Ok(StepLaw { p, e, joint: p * e })
            }
            Scenario::FixedContaminator { p, p_e } => {
                let p = p.value(n)?;
                Ok(StepLaw {
                    p,
                    e: *p_e,
                    joint: p * p_e,
                })
            }
            Scenario::Absorbing { p } => {
                let p = p.value(n)?;
                Ok(StepLaw {
                    p,
                    e: ABSORBING_PE * p,
                    joint: ABSORBING_PE * p,
                })
            }
            Scenario::BoundedDependence { p, e, c } => {
                let (p, e) = (p.value(n)?, e.value(n)?);
                let upper = p.min(e);
                // rounding in p + e - 1 can cross the upper bound by an
                // ulp when p or e is one; the true bounds never cross
                let lower = (p + e - 1.0).max(0.0).min(upper);
                let joint = (c.min(1.0) * p * e).clamp(lower, upper);
                Ok(StepLaw { p, e, joint })
            }
        }
    }

    /// Initializes per-trial state, always consuming exactly one
    /// uniform so the stream layout does not depend on the variant.
    pub fn init_trial(&self, rng: &mut TrialRng) -> TrialState {
        let u = rng.next_unit();
        let fixed_e = match self {
            Scenario::FixedContaminator { p_e, .. } => Some(u < *p_e),
            Scenario::Absorbing { .. } => Some(u < ABSORBING_PE),
            _ => None,
        };
        TrialState { fixed_e }
    }

    /// Samples one step from two unit uniforms.
    ///
    /// `b = a && !e` holds by construction in every variant. The
    /// independent variant spends both uniforms; the others spend the
    /// first and ignore the second, so each step costs exactly two
    /// draws regardless of variant.
    pub fn sample_with(&self, law: &StepLaw, state: &TrialState, u1: f64, u2: f64) -> StepOutcome {
        let (a, e) = match self {
            Scenario::IndependentContamination { .. } => (u1 < law.p, u2 < law.e),
            Scenario::FixedContaminator { .. } => {
                (u1 < law.p, state.fixed_e.expect("fixed-contaminator state"))
            }
            Scenario::Absorbing { .. } => {
                let a = u1 < law.p;
                (a, state.fixed_e.expect("absorbing state") && a)
            }
            Scenario::BoundedDependence { .. } => {
                let a = u1 < law.p;
                let e = u1 < law.joint || (u1 >= law.p && u1 < law.p + (law.e - law.joint));
                (a, e)
            }
        };
        StepOutcome { a, e, b: a && !e }
    }

    /// Samples one step, drawing exactly two uniforms from the stream.
    pub fn sample_step(
        &self,
        n: usize,
        state: &TrialState,
        rng: &mut TrialRng,
    ) -> Result<StepOutcome, ScenarioError> {
        let law = self.law_at(n)?;
        let u1 = rng.next_unit();
        let u2 = rng.next_unit();
        Ok(self.sample_with(&law, state, u1, u2))
    }

    /// Exact `P(A_n)`.
    pub fn analytic_pa(&self, n: usize) -> Result<f64, ScenarioError> {
        Ok(self.law_at(n)?.p)
    }

    /// Exact `P(E_n)` implied by the joint construction.
    pub fn analytic_pe(&self, n: usize) -> Result<f64, ScenarioError> {
        let law = self.law_at(n)?;
        Ok(match self {
            // E_n = E ∩ A_n, and E is independent of A_n
            Scenario::Absorbing { .. } => law.joint,
            _ => law.e,
        })
    }

    /// Exact `P(B_n) = P(A_n) - P(E_n ∩ A_n)`.
    pub fn analytic_pb(&self, n: usize) -> Result<f64, ScenarioError> {
        let law = self.law_at(n)?;
        Ok(law.p - law.joint)
    }

    /// Exact `P(E_n ∩ A_n)`.
    pub fn analytic_joint(&self, n: usize) -> Result<f64, ScenarioError> {
        Ok(self.law_at(n)?.joint)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn harmonic(c: f64) -> MarginSpec {
        MarginSpec::Harmonic { c }
    }

    #[test]
    fn margin_values() {
        assert_eq!(harmonic(1.0).value(4).unwrap(), 0.25);
        assert_eq!(
            MarginSpec::Constant { c: 0.3 }.value(1_000_000).unwrap(),
            0.3
        );
        let r = MarginSpec::ReciprocalLog { c: 1.0 }.value(1).unwrap();
        assert!((r - 0.910_239_226_626_837_4).abs() < 1e-12);
        // harmonic clamps at one
        assert_eq!(harmonic(3.0).value(2).unwrap(), 1.0);
    }

    #[test]
    fn margin_errors() {
        assert_eq!(
            harmonic(1.0).value(0).unwrap_err(),
            ScenarioError::ZeroIndex
        );
        let t = MarginSpec::Table {
            values: vec![0.1, 0.2],
        };
        assert_eq!(t.value(2).unwrap(), 0.2);
        assert_eq!(
            t.value(3).unwrap_err(),
            ScenarioError::TableIndexOutOfRange { n: 3, len: 2 }
        );
        assert!(MarginSpec::Constant { c: 1.2 }.validate().is_err());
        assert!(MarginSpec::Table {
            values: vec![0.5, -0.1]
        }
        .validate()
        .is_err());
    }

    #[test]
    fn analytic_pb_examples() {
        let s = Scenario::IndependentContamination {
            p: MarginSpec::Constant { c: 0.5 },
            e: MarginSpec::Constant { c: 0.2 },
        };
        assert!((s.analytic_pb(1).unwrap() - 0.4).abs() < 1e-15);

        let s = Scenario::BoundedDependence {
            p: MarginSpec::Constant { c: 0.5 },
            e: MarginSpec::Constant { c: 0.2 },
            c: 0.0,
        };
        // intersection clipped to the lower Fréchet bound 0
        assert!((s.analytic_pb(1).unwrap() - 0.5).abs() < 1e-15);

        let s = Scenario::FixedContaminator {
            p: MarginSpec::Constant { c: 0.5 },
            p_e: 0.3,
        };
        assert!((s.analytic_pb(1).unwrap() - 0.35).abs() < 1e-15);
    }

    #[test]
    fn frechet_clipping_binds_below() {
        let s = Scenario::BoundedDependence {
            p: MarginSpec::Constant { c: 0.9 },
            e: MarginSpec::Constant { c: 0.9 },
            c: 0.0,
        };
        // requested 0 is infeasible; lower bound is 0.8
        assert!((s.analytic_joint(5).unwrap() - 0.8).abs() < 1e-15);
        let law = s.law_at(5).unwrap();
        assert!(law.joint >= (law.p + law.e - 1.0).max(0.0) - 1e-15);
        assert!(law.joint <= law.p.min(law.e) + 1e-15);
    }

    #[test]
    fn bounded_dependence_copula_matches_law_exactly() {
        // integrate the single-uniform copula over a fine grid and
        // compare against the analytic marginals and intersection
        for &(p, e, c) in &[
            (0.5, 0.2, 1.0),
            (0.5, 0.2, 0.0),
            (0.9, 0.9, 0.0),
            (0.3, 0.7, 0.5),
            (0.1, 0.1, 25.0),
        ] {
            let s = Scenario::BoundedDependence {
                p: MarginSpec::Constant { c: p },
                e: MarginSpec::Constant { c: e },
                c,
            };
            let law = s.law_at(1).unwrap();
            let state = TrialState { fixed_e: None };
            let m = 1_000_000usize;
            let (mut ca, mut ce, mut cj) = (0usize, 0usize, 0usize);
            for i in 0..m {
                let u = (i as f64 + 0.5) / m as f64;
                let out = s.sample_with(&law, &state, u, 0.0);
                assert_eq!(out.b, out.a && !out.e);
                ca += out.a as usize;
                ce += out.e as usize;
                cj += (out.a && out.e) as usize;
            }
            let tol = 2.0 / m as f64;
            assert!((ca as f64 / m as f64 - law.p).abs() < tol);
            assert!((ce as f64 / m as f64 - law.e).abs() < tol);
            assert!((cj as f64 / m as f64 - law.joint).abs() < tol);
        }
    }

    #[test]
    fn absorbing_structure_is_exact() {
        let s = Scenario::Absorbing {
            p: MarginSpec::Constant { c: 0.7 },
        };
        let law = s.law_at(1).unwrap();
        // trial where E did not occur: e never fires, b == a
        let no_e = TrialState {
            fixed_e: Some(false),
        };
        // trial where E occurred: b never fires
        let with_e = TrialState {
            fixed_e: Some(true),
        };
        for i in 0..1000 {
            let u = (i as f64 + 0.5) / 1000.0;
            let out = s.sample_with(&law, &no_e, u, 0.0);
            assert!(!out.e);
            assert_eq!(out.b, out.a);
            let out = s.sample_with(&law, &with_e, u, 0.0);
            assert_eq!(out.e, out.a);
            assert!(!out.b);
        }
    }

    #[test]
    fn independent_product_law() {
        let s = Scenario::IndependentContamination {
            p: MarginSpec::Constant { c: 0.5 },
            e: MarginSpec::Constant { c: 0.5 },
        };
        let state = TrialState { fixed_e: None };
        let law = s.law_at(1).unwrap();
        let mut rng = TrialRng::for_trial(20240601, 0);
        let m = 100_000usize;
        let mut cb = 0usize;
        for _ in 0..m {
            let out = s.sample_with(&law, &state, rng.next_unit(), rng.next_unit());
            cb += out.b as usize;
        }
        let freq = cb as f64 / m as f64;
        // exact product law 0.25, three CLT sigmas
        let sigma = (0.25f64 * 0.75 / m as f64).sqrt();
        assert!((freq - 0.25).abs() < 3.0 * sigma, "freq={freq}");
    }

    #[test]
    fn scenario_json_round_trip() {
        let s = Scenario::BoundedDependence {
            p: MarginSpec::Harmonic { c: 1.0 },
            e: MarginSpec::ReciprocalLog { c: 1.0 },
            c: 2.0,
        };
        let js = serde_json::to_string(&s).unwrap();
        assert!(js.contains("\"variant\":\"bounded_dependence\""));
        assert!(js.contains("\"C\":2.0"));
        let back: Scenario = serde_json::from_str(&js).unwrap();
        assert_eq!(back, s);

        let fixed: Scenario = serde_json::from_str(
            r#"{"variant":"fixed_contaminator","p":{"kind":"constant","c":0.5},"pE":0.3}"#,
        )
        .unwrap();
        assert_eq!(
            fixed,
            Scenario::FixedContaminator {
                p: MarginSpec::Constant { c: 0.5 },
                p_e: 0.3
            }
        );
    }
}
