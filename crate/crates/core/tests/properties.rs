//! Property tests for the library invariants.

use proptest::prelude::*;

use bclab::bcsim::{self, TrialConfig};
use bclab::logspace::LogProb;
use bclab::scenarios::{MarginSpec, Scenario};
use bclab::stream::TrialRng;
use bclab::thinning::{build_plan, dyadic_level, Level, ThinningInput};

fn margin_strategy() -> impl Strategy<Value = MarginSpec> {
    prop_oneof![
        (0.0..=1.0f64).prop_map(|c| MarginSpec::Constant { c }),
        (0.0..=5.0f64).prop_map(|c| MarginSpec::Harmonic { c }),
        (0.0..=5.0f64).prop_map(|c| MarginSpec::ReciprocalLog { c }),
        prop::collection::vec(0.0..=1.0f64, 1..40).prop_map(|values| MarginSpec::Table { values }),
    ]
}

fn scenario_strategy() -> impl Strategy<Value = Scenario> {
    prop_oneof![
        (margin_strategy(), margin_strategy())
            .prop_map(|(p, e)| Scenario::IndependentContamination { p, e }),
        (margin_strategy(), 0.0..=1.0f64)
            .prop_map(|(p, p_e)| Scenario::FixedContaminator { p, p_e }),
        margin_strategy().prop_map(|p| Scenario::Absorbing { p }),
        (margin_strategy(), margin_strategy(), 0.0..=10.0f64)
            .prop_map(|(p, e, c)| Scenario::BoundedDependence { p, e, c }),
    ]
}

/// Weight/coefficient pairs for the thinning construction; the
/// coefficient families cover decaying, adversarial (above one), spiky
/// and deterministic slow-decay cases.
fn thinning_case() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..150).prop_flat_map(|len| {
        (
            prop::collection::vec(0.0..=1.0f64, len),
            prop_oneof![
                prop::collection::vec(0.0..=1.0f64, len),
                prop::collection::vec(0.0..=10.0f64, len),
                prop::collection::vec(1e-12..=1e-3f64, len),
                Just(
                    (1..=len)
                        .map(|n| 1.0 / (n as f64 + 2.0).ln())
                        .collect::<Vec<f64>>()
                ),
            ],
        )
    })
}

proptest! {
    #[test]
    fn logprob_round_trip(p in 0.0..=1.0f64) {
        let lp = LogProb::from_prob(p).unwrap();
        let back = lp.prob();
        let tol = p * 2.3e-16 * p.ln().abs().max(1.0);
        prop_assert!((back - p).abs() <= tol.max(0.0));
    }

    #[test]
    fn complement_involution(x in -40.0..=-1e-12f64) {
        let lp = LogProb::from_log(x).unwrap();
        let back = lp.complement().complement().log();
        prop_assert!((back - x).abs() < 1e-12, "x={x}, back={back}");
    }

    #[test]
    fn complement_is_antitone(x in -50.0..=0.0f64, y in -50.0..=0.0f64) {
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        let c_lo = LogProb::from_log(lo).unwrap().complement();
        let c_hi = LogProb::from_log(hi).unwrap().complement();
        prop_assert!(c_lo >= c_hi);
    }

    #[test]
    fn dyadic_rounding_brackets(a in 0.0..=4.0f64) {
        let lv = dyadic_level(a).unwrap();
        match lv {
            Level::Infinite => prop_assert_eq!(a, 0.0),
            Level::Finite(0) => prop_assert!(a >= 1.0),
            Level::Finite(_) => {
                let ap = lv.a_prime();
                prop_assert!(ap <= a && a < 2.0 * ap);
            }
        }
    }

    #[test]
    fn thinning_bound_and_dominance((p, a) in thinning_case()) {
        let input = ThinningInput::new(p.clone(), a.clone()).unwrap();
        let plan = build_plan(&input);

        // the bound of the construction
        prop_assert!(plan.weighted_bound() <= 2.0 + 1e-9);
        // derived bound in terms of the raw coefficients, capped at one
        let capped: f64 = plan
            .p_thinned()
            .iter()
            .zip(&a)
            .map(|(&pt, &an)| pt * an.min(1.0))
            .sum();
        prop_assert!(capped <= 4.0 + 1e-9);
        // pointwise dominance
        for (&pt, &pn) in plan.p_thinned().iter().zip(&p) {
            prop_assert!(pt <= pn + 1e-15);
        }
        // oversized buckets sum to one
        for (&lv, &mass) in plan.bucket_mass() {
            if lv != Level::Infinite && mass > 1.0 {
                let s: f64 = plan
                    .p_thinned()
                    .iter()
                    .zip(plan.levels())
                    .filter(|(_, &l)| l == lv)
                    .map(|(&pt, _)| pt)
                    .sum();
                prop_assert!((s - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn thinning_idempotent((p, a) in thinning_case()) {
        let input = ThinningInput::new(p, a.clone()).unwrap();
        let plan = build_plan(&input);
        let again = build_plan(&ThinningInput::new(plan.p_thinned().to_vec(), a).unwrap());
        // a re-normalized bucket can re-sum a rounding ulp above one
        // and re-thin by that ulp, so compare to float tolerance
        for (&pp, &pt) in again.p_thinned().iter().zip(plan.p_thinned()) {
            prop_assert!((pp - pt).abs() <= 1e-12 * pt.max(1e-300));
        }
    }

    #[test]
    fn step_identity_holds_everywhere(
        scenario in scenario_strategy(),
        n in 1usize..40,
        seed in any::<u64>(),
    ) {
        prop_assume!(scenario.validate().is_ok());
        let mut rng = TrialRng::for_trial(seed, 2);
        let state = scenario.init_trial(&mut rng);
        for _ in 0..32 {
            match scenario.sample_step(n, &state, &mut rng) {
                Ok(out) => prop_assert_eq!(out.b, out.a && !out.e),
                // table margins may not cover n; that is a legal error
                Err(_) => return Ok(()),
            }
        }
    }

    #[test]
    fn frechet_feasibility(
        p in 0.0..=1.0f64,
        e in 0.0..=1.0f64,
        c in 0.0..=20.0f64,
    ) {
        let s = Scenario::BoundedDependence {
            p: MarginSpec::Constant { c: p },
            e: MarginSpec::Constant { c: e },
            c,
        };
        let joint = s.analytic_joint(3).unwrap();
        prop_assert!(joint >= (p + e - 1.0).max(0.0) - 1e-15);
        prop_assert!(joint <= p.min(e) + 1e-15);
        // the requested intersection is honoured whenever feasible
        let requested = c.min(1.0) * p * e;
        if requested >= (p + e - 1.0).max(0.0) && requested <= p.min(e) {
            prop_assert!((joint - requested).abs() < 1e-15);
        }
        prop_assert!((s.analytic_pb(3).unwrap() - (p - joint)).abs() < 1e-15);
    }

    #[test]
    fn engine_deterministic(seed in any::<u64>()) {
        let s = Scenario::IndependentContamination {
            p: MarginSpec::Harmonic { c: 1.5 },
            e: MarginSpec::ReciprocalLog { c: 0.5 },
        };
        let a = bcsim::run(&s, &TrialConfig { horizon: 64, trials: 20, seed, workers: 1 }).unwrap();
        let b = bcsim::run(&s, &TrialConfig { horizon: 64, trials: 20, seed, workers: 3 }).unwrap();
        prop_assert_eq!(a, b);
    }
}
