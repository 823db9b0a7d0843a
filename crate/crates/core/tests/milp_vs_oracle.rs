use mixplan::milp::{solve_lp, solve_milp, MilpLimits, MilpModel, Sense, SolveStatus, VarKind};
use mixplan::oracle::{dense_simplex, enumerate_milp, random_milp, OracleStatus};
use proptest::prelude::*;

fn same_status(s: SolveStatus, o: OracleStatus) -> bool {
    matches!(
        (s, o),
        (SolveStatus::Optimal, OracleStatus::Optimal)
            | (SolveStatus::Infeasible, OracleStatus::Infeasible)
            | (SolveStatus::Unbounded, OracleStatus::Unbounded)
    )
}

fn relax(model: &MilpModel) -> MilpModel {
    let mut m = model.clone();
    for v in &mut m.variables {
        v.kind = VarKind::Continuous;
    }
    m
}

#[test]
fn seeded_milps_match_enumeration() {
    for seed in 0..300u64 {
        let model = random_milp(seed);
        let oracle = enumerate_milp(&model).unwrap();
        let ours = solve_milp(&model, &MilpLimits::default()).unwrap();
        if oracle.status == OracleStatus::Unbounded {
            // An unbounded continuous part makes the relaxation unbounded too.
            assert_eq!(ours.status, SolveStatus::Unbounded, "seed {seed}");
            continue;
        }
        assert!(
            same_status(ours.status, oracle.status),
            "seed {seed}: {:?} vs {:?}",
            ours.status,
            oracle.status
        );
        if ours.status == SolveStatus::Optimal {
            assert!(
                (ours.objective - oracle.objective).abs() <= 1e-6,
                "seed {seed}: {} vs {}",
                ours.objective,
                oracle.objective
            );
            assert!(model.max_violation(&ours.values) <= 1e-6, "seed {seed}");
            let recomputed = model.objective_value(&ours.values);
            assert!((recomputed - ours.objective).abs() <= 1e-9 * (1.0 + ours.objective.abs()));
            for (v, x) in model.variables.iter().zip(&ours.values) {
                if v.kind != VarKind::Continuous {
                    assert_eq!(x.fract(), 0.0, "seed {seed}: integer output {x}");
                }
            }
        }
    }
}

#[test]
fn seeded_lps_match_dense_tableau() {
    for seed in 1000..1300u64 {
        let model = relax(&random_milp(seed));
        let dense = dense_simplex(&model);
        let ours = solve_lp(&model).unwrap();
        assert!(
            same_status(ours.status, dense.status),
            "seed {seed}: {:?} vs {:?}",
            ours.status,
            dense.status
        );
        if ours.status == SolveStatus::Optimal {
            assert!(
                (ours.objective - dense.objective).abs() <= 1e-6,
                "seed {seed}"
            );
            assert!(model.max_violation(&ours.values) <= 1e-6, "seed {seed}");
        }
    }
}

#[test]
fn root_relaxation_bounds_the_integer_optimum() {
    for seed in 2000..2100u64 {
        let model = random_milp(seed);
        let lp = solve_lp(&model).unwrap();
        let ip = solve_milp(&model, &MilpLimits::default()).unwrap();
        if lp.status == SolveStatus::Optimal && ip.status == SolveStatus::Optimal {
            assert!(lp.objective >= ip.objective - 1e-9, "seed {seed}");
        }
    }
}

#[test]
fn resolving_is_bit_identical_and_thread_count_independent() {
    for seed in 0..40u64 {
        let model = random_milp(seed);
        let a = solve_milp(&model, &MilpLimits::default()).unwrap();
        let b = solve_milp(&model, &MilpLimits::default()).unwrap();
        let c = solve_milp(
            &model,
            &MilpLimits {
                jobs: 2,
                ..MilpLimits::default()
            },
        )
        .unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }
}

#[test]
fn node_limit_reports_feasible_with_gap_or_no_incumbent() {
    // Knapsack with many equal items: the root is fractional and one node
    // cannot close the gap.
    let mut m = MilpModel::new();
    let vars: Vec<_> = (0..12)
        .map(|j| m.binary(format!("b{j}"), 3.0 + (j % 3) as f64))
        .collect();
    m.add_constraint(
        "cap",
        vars.iter()
            .enumerate()
            .map(|(j, &v)| (v, 2.0 + (j % 4) as f64)),
        Sense::Le,
        13.5,
    );
    let limited = MilpLimits {
        max_nodes: 3,
        ..MilpLimits::default()
    };
    match solve_milp(&m, &limited) {
        Ok(s) => {
            assert_eq!(s.status, SolveStatus::Feasible);
            assert!(s.gap > 0.0);
        }
        Err(e) => assert!(matches!(
            e,
            mixplan::milp::MilpError::NoIncumbentAtLimit { .. }
        )),
    }
    let full = solve_milp(&m, &MilpLimits::default()).unwrap();
    assert_eq!(full.status, SolveStatus::Optimal);
}

fn model_strategy() -> impl Strategy<Value = u64> {
    any::<u64>()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn returned_points_pass_independent_residual_check(seed in model_strategy()) {
        let model = random_milp(seed);
        let s = solve_milp(&model, &MilpLimits::default()).unwrap();
        if matches!(s.status, SolveStatus::Optimal | SolveStatus::Feasible) {
            let mut worst: f64 = 0.0;
            for c in &model.constraints {
                let lhs: f64 = c.coeffs.iter().map(|&(v, a)| a * s.values[v.0]).sum();
                let r = match c.sense {
                    Sense::Le => lhs - c.rhs,
                    Sense::Ge => c.rhs - lhs,
                    Sense::Eq => (lhs - c.rhs).abs(),
                };
                worst = worst.max(r);
            }
            prop_assert!(worst <= 1e-6);
        }
    }

    #[test]
    fn lp_objective_matches_tableau(seed in model_strategy()) {
        let model = relax(&random_milp(seed));
        let d = dense_simplex(&model);
        let s = solve_lp(&model).unwrap();
        prop_assert!(same_status(s.status, d.status));
        if d.status == OracleStatus::Optimal {
            prop_assert!((s.objective - d.objective).abs() <= 1e-6);
        }
    }
}
