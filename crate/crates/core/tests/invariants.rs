use std::collections::BTreeMap;

use mixplan::domain::{MachineGroup, Scenario, Scheme, SchemeConfig};
use mixplan::metrics::EvaluationReport;
use mixplan::pipeline::{run_scheme, RunOutput};
use mixplan::scenario_io::{generate_case_scenario, GeneratorSpec};
use mixplan::scheduler::{verify_schedule, ViolationKind};
use proptest::prelude::*;

fn small_spec() -> impl Strategy<Value = GeneratorSpec> {
    (
        any::<u64>(),
        4usize..10,
        8usize..24,
        10u32..25,
        0.2f64..1.0,
        0.0f64..0.8,
        0.0f64..1.0,
    )
        .prop_map(|(seed, products, orders, horizon, load, clustering, acc)| {
            let mut spec = GeneratorSpec::desk(seed);
            spec.n_products = products;
            spec.n_orders = orders;
            spec.horizon_days = horizon;
            spec.load_factor = load;
            spec.due_clustering = clustering;
            spec.accessory_fraction = acc;
            spec
        })
}

fn greedy(spec: &GeneratorSpec) -> (Scenario, RunOutput) {
    let sc = generate_case_scenario(spec).unwrap();
    let out = run_scheme(&sc, &SchemeConfig::new(Scheme::GreedyNoPlan)).unwrap();
    (sc, out)
}

fn check_report(r: &EvaluationReport) -> Result<(), TestCaseError> {
    let unit = |x: f64| (-1e-12..=1.0 + 1e-9).contains(&x);
    prop_assert!(unit(r.otd), "otd {}", r.otd);
    prop_assert!(unit(r.sync_acc), "sync {}", r.sync_acc);
    for (m, u) in &r.utilization.per_machine {
        prop_assert!(unit(*u), "{m}: utilization {u}");
    }
    for (g, row) in &r.changeovers {
        prop_assert!(unit(row.loss_fraction), "{g:?}: loss {}", row.loss_fraction);
    }
    let e = &r.economics;
    prop_assert!((e.revenue - e.costs.total() - e.profit).abs() <= 1e-9 * (1.0 + e.revenue.abs()));
    let s = r.cost_shares;
    for share in [s.material, s.labor, s.outsourcing, s.delay_penalty] {
        prop_assert!(share >= 0.0);
    }
    if e.costs.total() > 0.0 {
        prop_assert!((s.total() - 1.0).abs() <= 1e-9);
    }
    prop_assert!(r.late_orders <= r.orders);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn greedy_schedules_verify_and_conserve_demand(spec in small_spec()) {
        let (sc, out) = greedy(&spec);
        prop_assert!(out.violations.is_empty(), "{:?}", out.violations);
        check_report(&out.report)?;

        let env = &out.envelopes[0];
        let mut handled: BTreeMap<_, f64> = BTreeMap::new();
        for ((o, _), &q) in &env.q {
            *handled.entry(o.clone()).or_default() += q;
        }
        for (o, &u) in &env.outsourced {
            *handled.entry(o.clone()).or_default() += u;
        }
        for order in sc.orders() {
            let got = handled.get(&order.id).copied().unwrap_or(0.0);
            prop_assert!(got <= order.quantity + 1e-6, "{}: {got} > {}", order.id, order.quantity);
        }
    }

    #[test]
    fn inflated_assignment_is_flagged(spec in small_spec(), pick in any::<prop::sample::Index>(), extra in 1.0f64..500.0) {
        let (sc, out) = greedy(&spec);
        prop_assume!(!out.schedule.z.is_empty());
        let mut s = out.schedule.clone();
        let key = s.z.keys().nth(pick.index(s.z.len())).unwrap().clone();
        *s.z.get_mut(&key).unwrap() += extra;
        let v = verify_schedule(&s, &out.envelopes, &sc);
        prop_assert!(v.iter().any(|v| v.kind == ViolationKind::Consistency), "{v:?}");
    }

    #[test]
    fn assignment_on_cnc_is_flagged(spec in small_spec(), pick in any::<prop::sample::Index>()) {
        let (sc, out) = greedy(&spec);
        prop_assume!(!out.schedule.z.is_empty());
        let cnc = sc.machines().iter().find(|m| m.group == MachineGroup::Cnc).unwrap().id.clone();
        let mut s = out.schedule.clone();
        let key = s.z.keys().nth(pick.index(s.z.len())).unwrap().clone();
        let units = s.z.remove(&key).unwrap();
        *s.z.entry((key.0, cnc, key.2)).or_default() += units;
        let v = verify_schedule(&s, &out.envelopes, &sc);
        prop_assert!(v.iter().any(|v| v.kind == ViolationKind::Compatibility), "{v:?}");
    }

    #[test]
    fn negative_units_are_flagged(spec in small_spec(), pick in any::<prop::sample::Index>()) {
        let (sc, out) = greedy(&spec);
        prop_assume!(!out.schedule.z.is_empty());
        let mut s = out.schedule.clone();
        let key = s.z.keys().nth(pick.index(s.z.len())).unwrap().clone();
        s.z.insert(key, -1.0);
        let v = verify_schedule(&s, &out.envelopes, &sc);
        prop_assert!(v.iter().any(|v| v.kind == ViolationKind::Negative), "{v:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn planned_schedules_verify_clean(spec in small_spec(), scheme in prop_oneof![Just(Scheme::A), Just(Scheme::B), Just(Scheme::C)]) {
        let sc = generate_case_scenario(&spec).unwrap();
        let mut config = SchemeConfig::new(scheme);
        config.solver_limits.max_nodes = 4;
        let out = run_scheme(&sc, &config).unwrap();
        prop_assert!(out.violations.is_empty(), "{:?}", out.violations);
        check_report(&out.report)?;
    }
}
