use proptest::prelude::*;

use popcone::cli::instances::{example2, example3, EXAMPLE3_OPTIMUM};
use popcone::oracle::{sample_upper_bound, verify_bound, OracleError, FEAS_TOL};
use popcone::polynomial::{Constraint, Domain, Polynomial, PopProblem, Sense};

fn infeasible() -> PopProblem {
    let x = Polynomial::var(1, 0);
    PopProblem::new(1, Sense::Min, Domain::Orthant, x.clone(), vec![Constraint::le(x, -1.0)]).unwrap()
}

#[test]
fn example3_reaches_the_optimum() {
    let pop = example3();
    for seed in [1, 2] {
        let rep = sample_upper_bound(&pop, 100_000, seed);
        assert!(rep.feasible_found);
        assert!(rep.best_value <= -6.0 && rep.best_value >= EXAMPLE3_OPTIMUM - 1e-3, "{}", rep.best_value);
        assert!(pop.is_feasible(&rep.best_point, FEAS_TOL));
        assert_eq!(pop.objective_value(&rep.best_point), rep.best_value);
    }
}

#[test]
fn example2_reaches_the_optimum() {
    let rep = sample_upper_bound(&example2(3, 3), 100_000, 1);
    assert!((rep.best_value + 0.5).abs() <= 0.05, "{}", rep.best_value);
}

#[test]
fn infeasible_problem_reports_nothing() {
    let pop = infeasible();
    let rep = sample_upper_bound(&pop, 1000, 1);
    assert!(!rep.feasible_found);
    assert!(verify_bound(&pop, 1e9, &rep).unwrap());
}

#[test]
fn verify_bound_examples() {
    let pop = example3();
    let rep = sample_upper_bound(&pop, 100_000, 1);
    assert!(verify_bound(&pop, -12.83, &rep).unwrap());
    assert!(verify_bound(&pop, rep.best_value, &rep).unwrap());
    assert!(!verify_bound(&pop, -5.0, &rep).unwrap());
    assert_eq!(verify_bound(&infeasible(), -12.83, &rep), Err(OracleError::ProblemMismatch));

    let mut max = pop.clone();
    max.sense = Sense::Max;
    let rep = sample_upper_bound(&max, 20_000, 1);
    assert!(verify_bound(&max, rep.best_value + 1.0, &rep).unwrap());
    assert!(!verify_bound(&max, rep.best_value - 1.0, &rep).unwrap());
}

#[test]
fn sampling_is_deterministic() {
    let pop = example3();
    assert_eq!(sample_upper_bound(&pop, 5000, 9), sample_upper_bound(&pop, 5000, 9));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn larger_budget_never_hurts(seed in any::<u64>(), budget in 50usize..2000) {
        let pop = example3();
        let small = sample_upper_bound(&pop, budget, seed);
        let big = sample_upper_bound(&pop, 2 * budget, seed);
        prop_assert!(big.best_value <= small.best_value, "{} > {}", big.best_value, small.best_value);
    }
}
