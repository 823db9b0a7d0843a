//! Evaluation metrics: delivery, accessory synchronization, utilization,
//! changeover losses and economics.

use std::collections::BTreeMap;

use crate::domain::{
    unit_time, Day, MachineGroup, MachineId, OrderId, ProductId, Scenario, Scheme,
};
use crate::planner::PlanEnvelope;
use crate::scheduler::Schedule;

/// Relative tolerance for deciding that an order is complete.
const COMPLETE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct LateOrder {
    pub order: OrderId,
    pub due: Day,
    /// Days past due; never-completed orders count to the end of the
    /// horizon plus one.
    pub lateness: Day,
    pub completed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Delivery {
    pub otd: f64,
    pub late: Vec<LateOrder>,
    pub mean_lateness: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroupUtilization {
    pub mean: f64,
    /// Population variance of member utilizations.
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Utilization {
    pub per_machine: BTreeMap<MachineId, f64>,
    pub per_group: BTreeMap<MachineGroup, GroupUtilization>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChangeoverRow {
    pub total: usize,
    pub avg_per_machine: f64,
    pub hours: f64,
    pub loss_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostComposition {
    pub material: f64,
    pub labor: f64,
    pub outsourcing: f64,
    pub delay_penalty: f64,
}

impl CostComposition {
    pub fn total(&self) -> f64 {
        self.material + self.labor + self.outsourcing + self.delay_penalty
    }

    /// Each term as a share of the total; all zero when nothing was spent.
    pub fn shares(&self) -> CostComposition {
        let total = self.total();
        if total <= 0.0 {
            return CostComposition::default();
        }
        CostComposition {
            material: self.material / total,
            labor: self.labor / total,
            outsourcing: self.outsourcing / total,
            delay_penalty: self.delay_penalty / total,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Economics {
    pub revenue: f64,
    pub costs: CostComposition,
    pub profit: f64,
    pub profit_rate: f64,
}

impl Economics {
    fn from_parts(revenue: f64, costs: CostComposition) -> Self {
        let profit = revenue - costs.total();
        let profit_rate = if revenue > 0.0 { profit / revenue } else { 0.0 };
        Economics {
            revenue,
            costs,
            profit,
            profit_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub scheme: Scheme,
    pub orders: usize,
    pub otd: f64,
    pub late_orders: usize,
    pub mean_lateness: f64,
    pub utilization: Utilization,
    pub changeovers: BTreeMap<MachineGroup, ChangeoverRow>,
    pub sync_acc: f64,
    pub economics: Economics,
    pub cost_shares: CostComposition,
    pub outsourced_units: f64,
    pub unassigned_units: f64,
}

fn outsourced_by_order(envelopes: &[PlanEnvelope]) -> BTreeMap<&OrderId, f64> {
    let mut out: BTreeMap<&OrderId, f64> = BTreeMap::new();
    for env in envelopes {
        for (o, &u) in &env.outsourced {
            *out.entry(o).or_default() += u;
        }
    }
    out
}

/// Delivery performance. Outsourced units count as delivered on the due day.
pub fn on_time_delivery(
    schedule: &Schedule,
    envelopes: &[PlanEnvelope],
    scenario: &Scenario,
) -> Delivery {
    let horizon = scenario.horizon_days();
    let outsourced = outsourced_by_order(envelopes);
    let mut daily: BTreeMap<&OrderId, BTreeMap<Day, f64>> = BTreeMap::new();
    for ((o, _, d), &units) in &schedule.z {
        *daily.entry(o).or_default().entry(*d).or_default() += units;
    }
    let mut late = Vec::new();
    for order in scenario.orders() {
        let need = order.quantity * (1.0 - COMPLETE_TOL);
        let u = outsourced.get(&order.id).copied().unwrap_or(0.0);
        let mut done = 0.0;
        let mut completion = None;
        let days = daily.get(&order.id).cloned().unwrap_or_default();
        for (&d, &units) in &days {
            done += units;
            let credit = if d >= order.due_day { u } else { 0.0 };
            if done + credit >= need {
                completion = Some(d);
                break;
            }
        }
        if completion.is_none() && done + u >= need {
            // Outsourcing closes the gap on the due day.
            completion = Some(order.due_day.max(days.keys().last().copied().unwrap_or(0)));
        }
        match completion {
            Some(d) if d <= order.due_day => {}
            Some(d) => late.push(LateOrder {
                order: order.id.clone(),
                due: order.due_day,
                lateness: d - order.due_day,
                completed: true,
            }),
            None => late.push(LateOrder {
                order: order.id.clone(),
                due: order.due_day,
                lateness: (horizon + 1).saturating_sub(order.due_day),
                completed: false,
            }),
        }
    }
    let total = scenario.orders().len();
    let otd = if total == 0 {
        1.0
    } else {
        1.0 - late.len() as f64 / total as f64
    };
    let mean_lateness = if late.is_empty() {
        0.0
    } else {
        late.iter().map(|l| f64::from(l.lateness)).sum::<f64>() / late.len() as f64
    };
    Delivery {
        otd,
        late,
        mean_lateness,
    }
}

/// Share of accessory need met from stock on hand each day. Stock is the
/// initial inventory plus recorded accessory production, drawn down as
/// shells ship.
pub fn sync_acc(schedule: &Schedule, envelopes: &[PlanEnvelope], scenario: &Scenario) -> f64 {
    let mut need: BTreeMap<(&ProductId, Day), f64> = BTreeMap::new();
    for ((o, _, d), &units) in &schedule.z {
        let Ok(order) = scenario.order(o) else {
            continue;
        };
        let Ok(product) = scenario.product(&order.product) else {
            continue;
        };
        if product.accessory_per_unit > 0.0 {
            *need.entry((&product.id, *d)).or_default() += product.accessory_per_unit * units;
        }
    }
    let mut made: BTreeMap<(&ProductId, Day), f64> = BTreeMap::new();
    for env in envelopes {
        for ((f, d), &p) in &env.p {
            *made.entry((f, *d)).or_default() += p;
        }
    }
    let mut total_need = 0.0;
    let mut credited = 0.0;
    for product in scenario.products() {
        let mut stock = scenario.initial_accessory_inventory(&product.id);
        for d in 1..=scenario.horizon_days() {
            stock += made.get(&(&product.id, d)).copied().unwrap_or(0.0);
            let n = need.get(&(&product.id, d)).copied().unwrap_or(0.0);
            let c = stock.min(n);
            stock -= c;
            total_need += n;
            credited += c;
        }
    }
    if total_need <= 0.0 {
        1.0
    } else {
        (credited / total_need).clamp(0.0, 1.0)
    }
}

/// Busy hours over available hours per machine. Molding machines are busy
/// while producing scheduled units; CNC machines share the accessory
/// workload in proportion to their hours.
pub fn utilization(schedule: &Schedule, scenario: &Scenario) -> Utilization {
    let days = f64::from(scenario.horizon_days());
    let mut busy: BTreeMap<&MachineId, f64> = BTreeMap::new();
    for ((o, m, _), &units) in &schedule.z {
        let (Ok(order), Ok(machine)) = (scenario.order(o), scenario.machine(m)) else {
            continue;
        };
        let Ok(product) = scenario.product(&order.product) else {
            continue;
        };
        *busy.entry(m).or_default() += units * unit_time(machine, product);
    }
    let acc_total: f64 = schedule.accessory_production.values().sum::<f64>() + 0.0;
    let cnc_fraction = if scenario.accessory_capacity_per_day() > 0.0 && days > 0.0 {
        acc_total / (scenario.accessory_capacity_per_day() * days)
    } else {
        0.0
    };

    let mut out = Utilization::default();
    for (group, members) in scenario.groups() {
        let mut values = Vec::with_capacity(members.len());
        for i in members {
            let m = &scenario.machines()[i];
            let available = m.day_hours * days;
            let u = if group == MachineGroup::Cnc {
                cnc_fraction
            } else if available > 0.0 {
                busy.get(&m.id).copied().unwrap_or(0.0) / available
            } else {
                0.0
            };
            out.per_machine.insert(m.id.clone(), u);
            values.push(u);
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n + 0.0;
        let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        out.per_group
            .insert(group, GroupUtilization { mean, variance });
    }
    out
}

pub fn changeover_report(
    schedule: &Schedule,
    scenario: &Scenario,
) -> BTreeMap<MachineGroup, ChangeoverRow> {
    let days = f64::from(scenario.horizon_days());
    let mut rows = BTreeMap::new();
    for (group, members) in scenario.groups() {
        let ids: Vec<&MachineId> = members
            .iter()
            .map(|&i| &scenario.machines()[i].id)
            .collect();
        let hours_available: f64 = members
            .iter()
            .map(|&i| scenario.machines()[i].day_hours * days)
            .sum();
        let events: Vec<_> = schedule
            .changeovers
            .iter()
            .filter(|c| ids.contains(&&c.machine))
            .collect();
        let hours = events.iter().map(|c| c.hours_lost).sum::<f64>() + 0.0;
        rows.insert(
            group,
            ChangeoverRow {
                total: events.len(),
                avg_per_machine: events.len() as f64 / ids.len() as f64,
                hours,
                loss_fraction: if hours_available > 0.0 {
                    hours / hours_available
                } else {
                    0.0
                },
            },
        );
    }
    rows
}

/// Realized economics of an executed schedule. Revenue is earned on
/// scheduled units only, and unplaced demand that was not outsourced is
/// penalized as delay.
pub fn economics(
    schedule: &Schedule,
    envelopes: &[PlanEnvelope],
    scenario: &Scenario,
) -> Economics {
    let labor_rate = scenario.effective_labor_rate();
    let outsourced = outsourced_by_order(envelopes);
    let mut revenue = 0.0;
    let mut costs = CostComposition::default();
    let mut placed: BTreeMap<&OrderId, f64> = BTreeMap::new();
    for ((o, _, _), &units) in &schedule.z {
        *placed.entry(o).or_default() += units;
    }
    for order in scenario.orders() {
        let z = placed.get(&order.id).copied().unwrap_or(0.0);
        let u = outsourced.get(&order.id).copied().unwrap_or(0.0);
        let product = scenario
            .product(&order.product)
            .expect("validated scenario");
        revenue += order.unit_revenue * z;
        costs.material += product.unit_cost * z;
        costs.labor += labor_rate * z;
        costs.outsourcing += order.unit_outsourcing_cost * u;
        costs.delay_penalty += order.unit_delay_penalty * (order.quantity - z - u).max(0.0);
    }
    for env in envelopes {
        for ((f, _), &p) in &env.p {
            if let Ok(product) = scenario.product(f) {
                costs.material += scenario.accessory_unit_cost(product) * p;
            }
        }
    }
    Economics::from_parts(revenue, costs)
}

/// Planned economics, read directly from the envelopes. Its profit equals
/// the sum of envelope objectives.
pub fn economics_of_envelopes(envelopes: &[PlanEnvelope], scenario: &Scenario) -> Economics {
    let labor_rate = scenario.effective_labor_rate();
    let mut revenue = 0.0;
    let mut costs = CostComposition::default();
    for env in envelopes {
        for ((o, _), &q) in &env.q {
            if let Ok(order) = scenario.order(o) {
                revenue += order.unit_revenue * q;
            }
        }
        for ((_, f, _), &y) in &env.y {
            if let Ok(product) = scenario.product(f) {
                costs.material += product.unit_cost * y;
                costs.labor += labor_rate * y;
            }
        }
        for ((f, _), &p) in &env.p {
            if let Ok(product) = scenario.product(f) {
                costs.material += scenario.accessory_unit_cost(product) * p;
            }
        }
        for (o, &u) in &env.outsourced {
            if let Ok(order) = scenario.order(o) {
                costs.outsourcing += order.unit_outsourcing_cost * u;
            }
        }
        for (o, &s) in &env.shortfall {
            if let Ok(order) = scenario.order(o) {
                costs.delay_penalty += order.unit_delay_penalty * s;
            }
        }
    }
    Economics::from_parts(revenue, costs)
}

pub fn evaluate(
    schedule: &Schedule,
    envelopes: &[PlanEnvelope],
    scenario: &Scenario,
    scheme: Scheme,
) -> EvaluationReport {
    let delivery = on_time_delivery(schedule, envelopes, scenario);
    let economics = economics(schedule, envelopes, scenario);
    EvaluationReport {
        scheme,
        orders: scenario.orders().len(),
        otd: delivery.otd,
        late_orders: delivery.late.len(),
        mean_lateness: delivery.mean_lateness,
        utilization: utilization(schedule, scenario),
        changeovers: changeover_report(schedule, scenario),
        sync_acc: sync_acc(schedule, envelopes, scenario),
        cost_shares: economics.costs.shares(),
        economics,
        outsourced_units: outsourced_by_order(envelopes).values().sum::<f64>() + 0.0,
        unassigned_units: schedule.total_unassigned() + 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Machine, Mold, MoldId, Order, Product, ScenarioData};
    use crate::milp::SolveStatus;
    use crate::planner::SolverInfo;
    use crate::scheduler::Changeover;

    fn id<T: From<String>>(s: &str) -> T {
        T::from(s.to_string())
    }

    fn scenario(
        n_machines: usize,
        orders: Vec<(f64, Day, Day)>,
        horizon: Day,
        acc: f64,
    ) -> Scenario {
        let machines: Vec<Machine> = (1..=n_machines)
            .map(|i| Machine {
                id: id(&format!("M{i}")),
                group: MachineGroup::G150,
                day_hours: 24.0,
                mold_change_hours: 5.0,
                unit_time_default: 0.01,
                initial_mold: None,
            })
            .collect();
        Scenario::new(ScenarioData {
            horizon_days: horizon,
            accessory_capacity_per_day: 3000.0,
            accessory_cost_ratio: 0.2,
            labor_rates: vec![0.1, 0.2, 0.3],
            material_lead_days: 0,
            initial_accessory_inventory: BTreeMap::new(),
            molds: vec![Mold {
                id: id("K1"),
                compatible_machines: machines.iter().map(|m| m.id.clone()).collect(),
                producible_products: [id("F1")].into(),
            }],
            machines,
            products: vec![Product {
                id: id("F1"),
                mold: id("K1"),
                unit_cost: 1.0,
                accessory_per_unit: acc,
                big_m_cap: None,
                unit_time_overrides: BTreeMap::new(),
            }],
            orders: orders
                .into_iter()
                .enumerate()
                .map(|(i, (q, r, l))| Order {
                    id: id(&format!("O{}", i + 1)),
                    product: id("F1"),
                    quantity: q,
                    release_day: r,
                    due_day: l,
                    unit_revenue: 3.0,
                    unit_delay_penalty: 2.0,
                    unit_outsourcing_cost: 1.5,
                })
                .collect(),
        })
        .unwrap()
    }

    fn envelope(window: (Day, Day)) -> PlanEnvelope {
        PlanEnvelope {
            scheme: Scheme::C,
            window,
            y: BTreeMap::new(),
            q: BTreeMap::new(),
            x: BTreeMap::new(),
            p: BTreeMap::new(),
            inventory: BTreeMap::new(),
            outsourced: BTreeMap::new(),
            shortfall: BTreeMap::new(),
            objective: 0.0,
            solver: SolverInfo {
                status: SolveStatus::Optimal,
                gap: 0.0,
                nodes: 1,
                objective: 0.0,
            },
        }
    }

    #[test]
    fn otd_counts_complete_and_late_orders() {
        let sc = scenario(1, vec![(10.0, 1, 2), (10.0, 1, 2), (10.0, 1, 3)], 5, 0.0);
        let mut s = Schedule::default();
        s.z.insert((id("O1"), id("M1"), 1), 10.0);
        s.z.insert((id("O2"), id("M1"), 2), 4.0);
        s.z.insert((id("O2"), id("M1"), 4), 6.0);
        let d = on_time_delivery(&s, &[], &sc);
        assert_eq!(d.late.len(), 2);
        assert!((d.otd - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(d.late[0].lateness, 2);
        assert!(d.late[0].completed);
        // Never-served order runs to horizon end plus one.
        assert_eq!(d.late[1].lateness, 3);
        assert!(!d.late[1].completed);
        assert!((d.mean_lateness - 2.5).abs() < 1e-12);
    }

    #[test]
    fn outsourcing_delivers_on_due_day() {
        let sc = scenario(1, vec![(10.0, 1, 2)], 3, 0.0);
        let mut s = Schedule::default();
        s.z.insert((id("O1"), id("M1"), 1), 6.0);
        let mut env = envelope((1, 3));
        env.outsourced.insert(id("O1"), 4.0);
        let d = on_time_delivery(&s, &[env], &sc);
        assert_eq!(d.otd, 1.0);
    }

    #[test]
    fn sync_acc_arithmetic() {
        let sc = scenario(1, vec![(20.0, 1, 2)], 2, 1.0);
        let mut s = Schedule::default();
        s.z.insert((id("O1"), id("M1"), 1), 10.0);
        s.z.insert((id("O1"), id("M1"), 2), 10.0);
        let mut env = envelope((1, 2));
        env.p.insert((id("F1"), 1), 10.0);
        env.p.insert((id("F1"), 2), 10.0);
        assert_eq!(sync_acc(&s, &[env.clone()], &sc), 1.0);
        env.p.insert((id("F1"), 1), 0.0);
        env.p.insert((id("F1"), 2), 20.0);
        assert!((sync_acc(&s, &[env], &sc) - 0.5).abs() < 1e-12);
        assert_eq!(sync_acc(&Schedule::default(), &[], &sc), 1.0);
    }

    #[test]
    fn utilization_full_and_idle() {
        let sc = scenario(2, vec![(4800.0, 1, 2)], 2, 0.0);
        let mut s = Schedule::default();
        s.z.insert((id("O1"), id("M1"), 1), 2400.0);
        s.z.insert((id("O1"), id("M1"), 2), 2400.0);
        let u = utilization(&s, &sc);
        assert!((u.per_machine[&id::<MachineId>("M1")] - 1.0).abs() < 1e-12);
        assert_eq!(u.per_machine[&id::<MachineId>("M2")], 0.0);
        let g = &u.per_group[&MachineGroup::G150];
        assert!((g.mean - 0.5).abs() < 1e-12);
        assert!((g.variance - 0.25).abs() < 1e-12);
        assert_eq!(
            utilization(&Schedule::default(), &sc).per_group[&MachineGroup::G150].mean,
            0.0
        );
    }

    #[test]
    fn changeover_loss_fraction() {
        let sc = scenario(2, vec![], 10, 0.0);
        let mut s = Schedule::default();
        for d in [1, 3, 5] {
            s.changeovers.push(Changeover {
                machine: id("M1"),
                day: d,
                from: None,
                to: id::<MoldId>("K1"),
                hours_lost: 5.0,
            });
        }
        let row = changeover_report(&s, &sc)[&MachineGroup::G150];
        assert_eq!(row.total, 3);
        assert_eq!(row.avg_per_machine, 1.5);
        assert_eq!(row.hours, 15.0);
        assert!((row.loss_fraction - 0.03125).abs() < 1e-12);
        let empty = changeover_report(&Schedule::default(), &sc)[&MachineGroup::G150];
        assert_eq!(empty, ChangeoverRow::default());
    }

    #[test]
    fn cost_shares_normalize() {
        let c = CostComposition {
            material: 100.0,
            labor: 50.0,
            outsourcing: 50.0,
            delay_penalty: 0.0,
        };
        let s = c.shares();
        assert_eq!(
            (s.material, s.labor, s.outsourcing, s.delay_penalty),
            (0.5, 0.25, 0.25, 0.0)
        );
        assert_eq!(
            CostComposition::default().shares(),
            CostComposition::default()
        );
    }

    #[test]
    fn schedule_economics_match_plan_when_fully_placed() {
        let sc = scenario(1, vec![(10.0, 1, 2), (5.0, 1, 2)], 2, 0.5);
        let mut env = envelope((1, 2));
        env.q.insert((id("O1"), 1), 10.0);
        env.y.insert((id("M1"), id("F1"), 1), 10.0);
        env.p.insert((id("F1"), 1), 5.0);
        env.outsourced.insert(id("O2"), 3.0);
        env.shortfall.insert(id("O2"), 2.0);
        env.objective = crate::planner::envelope_objective(&sc, &env);
        let mut s = Schedule::default();
        s.z.insert((id("O1"), id("M1"), 1), 10.0);
        let planned = economics_of_envelopes(&[env.clone()], &sc);
        let realized = economics(&s, &[env.clone()], &sc);
        assert!((planned.profit - env.objective).abs() < 1e-9);
        assert!((realized.profit - planned.profit).abs() < 1e-9);
        // 30 revenue; 10 + 0.2*5 material, 2 labor, 4.5 outsourcing, 4 delay.
        assert!((realized.revenue - 30.0).abs() < 1e-12);
        assert!((realized.costs.total() - 21.5).abs() < 1e-12);
        assert!((realized.profit_rate - 8.5 / 30.0).abs() < 1e-12);
    }
}
