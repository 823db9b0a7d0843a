//! Daily disaggregation of plan envelopes into machine allocations, the
//! independent schedule verifier and the plan-free dispatching baseline.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::domain::{
    effective_capacity, unit_time, Day, Machine, MachineId, MoldId, Order, OrderId, ProductId,
    Scenario, Scheme, SchemeConfig,
};
use crate::milp::SolveStatus;
use crate::planner::{envelope_objective, PlanEnvelope, SolverInfo};

/// Quantities at or below this are treated as zero.
const UNIT_EPS: f64 = 1e-9;
/// Tolerance of the verifier's equality and capacity checks.
pub const VERIFY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Changeover {
    pub machine: MachineId,
    pub day: Day,
    pub from: Option<MoldId>,
    pub to: MoldId,
    pub hours_lost: f64,
}

/// Machine-level allocation over a run of days.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Schedule {
    pub z: BTreeMap<(OrderId, MachineId, Day), f64>,
    /// Molds used per machine-day, in mounting order.
    pub mold_state: BTreeMap<(MachineId, Day), Vec<MoldId>>,
    pub changeovers: Vec<Changeover>,
    /// Planned shipments the heuristic could not place.
    pub unassigned: BTreeMap<(OrderId, Day), f64>,
    /// Accessory units machined per product and day.
    pub accessory_production: BTreeMap<(ProductId, Day), f64>,
}

impl Schedule {
    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
            && self.mold_state.is_empty()
            && self.changeovers.is_empty()
            && self.unassigned.is_empty()
    }

    /// Units of `order` placed on any machine on `day`.
    pub fn shipped(&self, order: &OrderId, day: Day) -> f64 {
        self.z
            .iter()
            .filter(|((o, _, d), _)| o == order && *d == day)
            .map(|(_, v)| v)
            .sum()
    }

    pub fn total_assigned(&self) -> f64 {
        self.z.values().sum::<f64>() + 0.0
    }

    pub fn total_unassigned(&self) -> f64 {
        self.unassigned.values().sum::<f64>() + 0.0
    }

    /// Hours lost to mold changes on a machine-day.
    pub fn lost_hours(&self, machine: &MachineId, day: Day) -> f64 {
        self.changeovers
            .iter()
            .filter(|c| &c.machine == machine && c.day == day)
            .map(|c| c.hours_lost)
            .sum::<f64>()
            + 0.0
    }

    fn merge(&mut self, other: Schedule) {
        self.z.extend(other.z);
        self.mold_state.extend(other.mold_state);
        self.changeovers.extend(other.changeovers);
        self.unassigned.extend(other.unassigned);
        self.accessory_production.extend(other.accessory_production);
    }
}

/// Dispatch key of an order on a day; smaller sorts first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderPriority {
    pub due: Day,
    pub slack: i64,
    pub penalty: f64,
}

impl Eq for OrderPriority {}

impl PartialOrd for OrderPriority {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrderPriority {
    fn cmp(&self, other: &Self) -> Ordering {
        self.due
            .cmp(&other.due)
            .then(self.slack.cmp(&other.slack))
            .then(self.penalty.total_cmp(&other.penalty))
    }
}

pub fn priority(order: &Order, day: Day) -> OrderPriority {
    OrderPriority {
        due: order.due_day,
        slack: i64::from(order.due_day) - i64::from(day),
        penalty: order.unit_delay_penalty,
    }
}

/// What a machine did on the previous day.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PrevDay {
    /// Molds in mounting order; the last one is still installed.
    pub molds: Vec<MoldId>,
    pub products: BTreeSet<ProductId>,
}

pub type PrevAssignment = BTreeMap<MachineId, PrevDay>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("no envelope covers day {0}")]
    EnvelopeDayMissing(Day),
}

/// Planned quantities of one day, gathered from whichever envelopes cover
/// it and the next day.
struct DayPlan<'a> {
    scheme: Scheme,
    q: Vec<(&'a OrderId, f64)>,
    y: BTreeMap<(&'a MachineId, &'a ProductId), f64>,
    molds: BTreeMap<&'a MachineId, &'a BTreeSet<MoldId>>,
    next_molds: BTreeMap<&'a MachineId, &'a BTreeSet<MoldId>>,
}

impl<'a> DayPlan<'a> {
    fn new(env: &'a PlanEnvelope, next: Option<&'a PlanEnvelope>, day: Day) -> Self {
        let q = env
            .q
            .iter()
            .filter(|((_, d), v)| *d == day && **v > UNIT_EPS)
            .map(|((o, _), v)| (o, *v))
            .collect();
        let y = env
            .y
            .iter()
            .filter(|((_, _, d), _)| *d == day)
            .map(|((m, f, _), v)| ((m, f), *v))
            .collect();
        let molds = env
            .x
            .iter()
            .filter(|((_, d), _)| *d == day)
            .map(|((m, _), ks)| (m, ks))
            .collect();
        let next_molds = next
            .map(|n| {
                n.x.iter()
                    .filter(|((_, d), _)| *d == day + 1)
                    .map(|((m, _), ks)| (m, ks))
                    .collect()
            })
            .unwrap_or_default();
        DayPlan {
            scheme: env.scheme,
            q,
            y,
            molds,
            next_molds,
        }
    }
}

/// Orders the molds of a machine-day: the mold left installed yesterday
/// runs first, a mold also needed tomorrow runs last, the rest by id.
fn mounting_order(
    set: &BTreeSet<MoldId>,
    prev_last: Option<&MoldId>,
    next: Option<&BTreeSet<MoldId>>,
) -> Vec<MoldId> {
    let mut rest: Vec<MoldId> = set.iter().cloned().collect();
    let mut first = None;
    if let Some(k) = prev_last {
        if let Some(pos) = rest.iter().position(|x| x == k) {
            first = Some(rest.remove(pos));
        }
    }
    let mut last = None;
    if let Some(next) = next {
        if let Some(pos) = rest.iter().position(|k| next.contains(k)) {
            last = Some(rest.remove(pos));
        }
    }
    first.into_iter().chain(rest).chain(last).collect()
}

/// Key under which planned production of machine `m` is recorded: the
/// group pseudo-machine for scheme A, the machine itself otherwise.
pub fn production_pool(scheme: Scheme, machine: &Machine) -> MachineId {
    match scheme {
        Scheme::A => MachineId::new(machine.group.name()),
        _ => machine.id.clone(),
    }
}

/// Changeover events implied by running `molds` in order after `prev_last`.
fn changeover_events(
    machine: &MachineId,
    day: Day,
    hours: f64,
    prev_last: Option<&MoldId>,
    molds: &[MoldId],
) -> Vec<Changeover> {
    let mut events = Vec::new();
    let mut current = prev_last.cloned();
    for k in molds {
        if current.as_ref() != Some(k) {
            events.push(Changeover {
                machine: machine.clone(),
                day,
                from: current.clone(),
                to: k.clone(),
                hours_lost: hours,
            });
        }
        current = Some(k.clone());
    }
    events
}

/// Number of mold changes on a machine-day, recounted from the schedule's
/// mold sequence. Day 1 compares against the machine's initial mold.
pub fn mold_change_count(
    schedule: &Schedule,
    scenario: &Scenario,
    machine: &MachineId,
    day: Day,
) -> u32 {
    let today = schedule
        .mold_state
        .get(&(machine.clone(), day))
        .map(Vec::as_slice)
        .unwrap_or(&[]);
    let prev_last = if day <= 1 {
        scenario
            .machine(machine)
            .ok()
            .and_then(|m| m.initial_mold.clone())
    } else {
        schedule
            .mold_state
            .get(&(machine.clone(), day - 1))
            .and_then(|ks| ks.last().cloned())
    };
    changeover_events(machine, day, 0.0, prev_last.as_ref(), today).len() as u32
}

/// Runs the daily heuristic for `day` of one envelope.
pub fn schedule_day(
    scenario: &Scenario,
    envelope: &PlanEnvelope,
    day: Day,
    prev: &PrevAssignment,
    config: &SchemeConfig,
) -> Result<Schedule, ScheduleError> {
    if !envelope.covers(day) {
        return Err(ScheduleError::EnvelopeDayMissing(day));
    }
    let plan = DayPlan::new(envelope, Some(envelope), day);
    Ok(run_day(scenario, &plan, day, prev, config))
}

fn run_day(
    scenario: &Scenario,
    plan: &DayPlan<'_>,
    day: Day,
    prev: &PrevAssignment,
    config: &SchemeConfig,
) -> Schedule {
    let mut out = Schedule::default();
    let machine_level = matches!(plan.scheme, Scheme::B | Scheme::C);

    // Mold sequences, changeovers and effective capacity per machine.
    let mut capacity: BTreeMap<&MachineId, f64> = BTreeMap::new();
    let mut mounted: BTreeMap<&MachineId, Vec<MoldId>> = BTreeMap::new();
    for m in scenario.machines() {
        let mut changes = 0;
        if machine_level {
            if let Some(set) = plan.molds.get(&m.id) {
                let prev_last = prev.get(&m.id).and_then(|p| p.molds.last());
                let order = mounting_order(set, prev_last, plan.next_molds.get(&m.id).copied());
                let events = changeover_events(&m.id, day, m.mold_change_hours, prev_last, &order);
                changes = events.len() as u32;
                out.changeovers.extend(events);
                if !order.is_empty() {
                    out.mold_state.insert((m.id.clone(), day), order.clone());
                }
                mounted.insert(&m.id, order);
            }
        }
        capacity.insert(&m.id, effective_capacity(m, changes));
    }

    let mut y_left: BTreeMap<(MachineId, &ProductId), f64> = plan
        .y
        .iter()
        .map(|(&(m, f), &v)| ((m.clone(), f), v))
        .collect();
    let pool_key: BTreeMap<&MachineId, MachineId> = scenario
        .machines()
        .iter()
        .map(|m| (&m.id, production_pool(plan.scheme, m)))
        .collect();
    let mut queue: Vec<(&OrderId, f64, OrderPriority)> = plan
        .q
        .iter()
        .filter_map(|&(o, q)| scenario.order(o).ok().map(|ord| (o, q, priority(ord, day))))
        .collect();
    queue.sort_by(|a, b| {
        let pa = if config.penalty_descending {
            OrderPriority {
                penalty: -a.2.penalty,
                ..a.2
            }
        } else {
            a.2
        };
        let pb = if config.penalty_descending {
            OrderPriority {
                penalty: -b.2.penalty,
                ..b.2
            }
        } else {
            b.2
        };
        pa.cmp(&pb).then(a.0.cmp(b.0))
    });

    for (o, q, _) in queue {
        let order = scenario.order(o).expect("checked");
        let product = scenario.product(&order.product).expect("validated");
        let mut left = q;
        let mut removed: BTreeSet<&MachineId> = BTreeSet::new();
        while left > UNIT_EPS {
            let mut pool: Vec<(&MachineId, bool)> = Vec::new();
            for m in scenario.machines() {
                if removed.contains(&m.id) || !scenario.product_fits_machine(product, &m.id) {
                    continue;
                }
                if machine_level
                    && !mounted
                        .get(&m.id)
                        .is_some_and(|ks| ks.contains(&product.mold))
                {
                    continue;
                }
                if y_left
                    .get(&(pool_key[&m.id].clone(), &product.id))
                    .copied()
                    .unwrap_or(0.0)
                    <= UNIT_EPS
                    || capacity[&m.id] <= UNIT_EPS
                {
                    continue;
                }
                let stable = prev
                    .get(&m.id)
                    .is_some_and(|p| p.products.contains(&product.id));
                pool.push((&m.id, stable));
            }
            let any_stable = pool.iter().any(|&(_, s)| s);
            let pick = pool
                .iter()
                .filter(|&&(_, s)| s || !any_stable)
                .map(|&(m, _)| m)
                .max_by(|a, b| capacity[a].total_cmp(&capacity[b]).then(b.cmp(a)));
            let Some(m) = pick else { break };
            let machine = scenario.machine(m).expect("validated");
            let t = unit_time(machine, product);
            let y = y_left
                .get_mut(&(pool_key[m].clone(), &product.id))
                .expect("candidate");
            let cap = capacity.get_mut(m).expect("known");
            let u = left.min(*y).min(*cap / t);
            if u <= 1e-12 {
                removed.insert(m);
                continue;
            }
            *out.z.entry((o.clone(), m.clone(), day)).or_insert(0.0) += u;
            left -= u;
            *y -= u;
            *cap = (*cap - u * t).max(0.0);
        }
        if left > UNIT_EPS {
            out.unassigned.insert((o.clone(), day), left);
        }
    }
    out
}

fn next_prev(
    scenario: &Scenario,
    day_schedule: &Schedule,
    day: Day,
    prev: &PrevAssignment,
) -> PrevAssignment {
    let mut next = PrevAssignment::new();
    for m in scenario.machines() {
        let molds = match day_schedule.mold_state.get(&(m.id.clone(), day)) {
            Some(ks) => ks.clone(),
            None => Vec::new(),
        };
        let products = day_schedule
            .z
            .keys()
            .filter(|(_, mm, _)| mm == &m.id)
            .filter_map(|(o, _, _)| scenario.order(o).ok().map(|o| o.product.clone()))
            .collect();
        next.insert(m.id.clone(), PrevDay { molds, products });
    }
    let _ = prev;
    next
}

/// Initial previous-day state: each machine's configured mold, no products.
pub fn initial_prev(scenario: &Scenario) -> PrevAssignment {
    scenario
        .machines()
        .iter()
        .map(|m| {
            (
                m.id.clone(),
                PrevDay {
                    molds: m.initial_mold.iter().cloned().collect(),
                    products: BTreeSet::new(),
                },
            )
        })
        .collect()
}

/// Chains the daily heuristic over the whole horizon.
pub fn schedule_horizon(
    envelopes: &[PlanEnvelope],
    scenario: &Scenario,
    config: &SchemeConfig,
) -> Result<Schedule, ScheduleError> {
    let find = |d: Day| envelopes.iter().find(|e| e.covers(d));
    let mut schedule = Schedule::default();
    let mut prev = initial_prev(scenario);
    for day in 1..=scenario.horizon_days() {
        let env = find(day).ok_or(ScheduleError::EnvelopeDayMissing(day))?;
        let plan = DayPlan::new(env, find(day + 1), day);
        let today = run_day(scenario, &plan, day, &prev, config);
        prev = next_prev(scenario, &today, day, &prev);
        schedule.merge(today);
        for ((f, d), v) in &env.p {
            if *d == day && *v > UNIT_EPS {
                schedule.accessory_production.insert((f.clone(), *d), *v);
            }
        }
    }
    Ok(schedule)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ViolationKind {
    /// Placed plus unassigned units differ from the planned shipment.
    Consistency,
    /// Allocation of a product on a machine-day exceeds planned production.
    Production,
    /// Machine-day workload exceeds effective capacity.
    Capacity,
    /// Units on a machine that cannot run the product or lacks its mold.
    Compatibility,
    /// Recorded changeovers disagree with the mold sequence.
    Changeover,
    /// More than one mold on a dedicated machine-day.
    Dedication,
    Negative,
}

impl ViolationKind {
    pub fn label(self) -> &'static str {
        match self {
            ViolationKind::Consistency => "consistency",
            ViolationKind::Production => "production",
            ViolationKind::Capacity => "capacity",
            ViolationKind::Compatibility => "compatibility",
            ViolationKind::Changeover => "changeover",
            ViolationKind::Dedication => "dedication",
            ViolationKind::Negative => "negative",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub order: Option<OrderId>,
    pub machine: Option<MachineId>,
    pub product: Option<ProductId>,
    pub day: Day,
    /// Amount by which the constraint is violated.
    pub residual: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} day={}", self.kind.label(), self.day)?;
        if let Some(o) = &self.order {
            write!(f, " order={o}")?;
        }
        if let Some(m) = &self.machine {
            write!(f, " machine={m}")?;
        }
        if let Some(p) = &self.product {
            write!(f, " product={p}")?;
        }
        write!(f, " residual={}", self.residual)
    }
}

/// Recomputes every schedule constraint from scratch. The result is empty
/// iff the schedule is feasible against the envelopes, with unassigned
/// units accounted for explicitly.
pub fn verify_schedule(
    schedule: &Schedule,
    envelopes: &[PlanEnvelope],
    scenario: &Scenario,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let v = |kind,
             order: Option<&OrderId>,
             machine: Option<&MachineId>,
             product: Option<&ProductId>,
             day,
             residual| Violation {
        kind,
        order: order.cloned(),
        machine: machine.cloned(),
        product: product.cloned(),
        day,
        residual,
    };

    for ((o, m, d), &units) in &schedule.z {
        if units < 0.0 {
            out.push(v(
                ViolationKind::Negative,
                Some(o),
                Some(m),
                None,
                *d,
                -units,
            ));
        }
    }
    for ((o, d), &units) in &schedule.unassigned {
        if units < 0.0 {
            out.push(v(ViolationKind::Negative, Some(o), None, None, *d, -units));
        }
    }

    // Planned shipments are met by placed plus unassigned units.
    let mut placed: BTreeMap<(&OrderId, Day), f64> = BTreeMap::new();
    for ((o, _, d), &units) in &schedule.z {
        *placed.entry((o, *d)).or_default() += units;
    }
    for ((o, d), &units) in &schedule.unassigned {
        *placed.entry((o, *d)).or_default() += units;
    }
    let mut planned: BTreeMap<(&OrderId, Day), f64> = BTreeMap::new();
    for env in envelopes {
        for ((o, d), &q) in &env.q {
            *planned.entry((o, *d)).or_default() += q;
        }
    }
    let keys: BTreeSet<(&OrderId, Day)> = placed.keys().chain(planned.keys()).copied().collect();
    for key in keys {
        let have = placed.get(&key).copied().unwrap_or(0.0);
        let want = planned.get(&key).copied().unwrap_or(0.0);
        if (have - want).abs() > VERIFY_TOL {
            out.push(v(
                ViolationKind::Consistency,
                Some(key.0),
                None,
                None,
                key.1,
                (have - want).abs(),
            ));
        }
    }

    // Allocation per product stays within planned production.
    let scheme_of = |d: Day| envelopes.iter().find(|e| e.covers(d)).map(|e| e.scheme);
    let mut made: BTreeMap<(MachineId, ProductId, Day), f64> = BTreeMap::new();
    for ((o, m, d), &units) in &schedule.z {
        if let (Ok(order), Ok(machine)) = (scenario.order(o), scenario.machine(m)) {
            let key = production_pool(scheme_of(*d).unwrap_or(Scheme::C), machine);
            *made.entry((key, order.product.clone(), *d)).or_default() += units;
        }
    }
    let mut y_plan: BTreeMap<(&MachineId, &ProductId, Day), f64> = BTreeMap::new();
    for env in envelopes {
        for ((m, f, d), &y) in &env.y {
            *y_plan.entry((m, f, *d)).or_default() += y;
        }
    }
    for ((m, f, d), &units) in &made {
        let cap = y_plan.get(&(m, f, *d)).copied().unwrap_or(0.0);
        if units > cap + VERIFY_TOL {
            out.push(v(
                ViolationKind::Production,
                None,
                Some(m),
                Some(f),
                *d,
                units - cap,
            ));
        }
    }

    // Compatibility with machine and mounted molds.
    let machine_level: BTreeSet<Day> = envelopes
        .iter()
        .filter(|e| matches!(e.scheme, Scheme::B | Scheme::C))
        .flat_map(|e| e.window.0..=e.window.1)
        .collect();
    for ((o, m, d), &units) in &schedule.z {
        if units <= 0.0 {
            continue;
        }
        let Ok(order) = scenario.order(o) else {
            out.push(v(
                ViolationKind::Compatibility,
                Some(o),
                Some(m),
                None,
                *d,
                units,
            ));
            continue;
        };
        let Ok(product) = scenario.product(&order.product) else {
            continue;
        };
        let fits = scenario.machine(m).is_ok() && scenario.product_fits_machine(product, m);
        let mounted = !machine_level.contains(d)
            || schedule
                .mold_state
                .get(&(m.clone(), *d))
                .is_some_and(|ks| ks.contains(&product.mold));
        if !fits || !mounted {
            out.push(v(
                ViolationKind::Compatibility,
                Some(o),
                Some(m),
                Some(&product.id),
                *d,
                units,
            ));
        }
    }

    // Changeover records follow from the mold sequence; capacity uses them.
    let dedicated: BTreeSet<Day> = envelopes
        .iter()
        .filter(|e| e.scheme == Scheme::C)
        .flat_map(|e| e.window.0..=e.window.1)
        .collect();
    let mut busy: BTreeMap<(&MachineId, Day), f64> = BTreeMap::new();
    for ((o, m, d), &units) in &schedule.z {
        let (Ok(order), Ok(machine)) = (scenario.order(o), scenario.machine(m)) else {
            continue;
        };
        let Ok(product) = scenario.product(&order.product) else {
            continue;
        };
        *busy.entry((m, *d)).or_default() += units * unit_time(machine, product);
    }
    let mut recorded: BTreeMap<(&MachineId, Day), usize> = BTreeMap::new();
    for c in &schedule.changeovers {
        *recorded.entry((&c.machine, c.day)).or_default() += 1;
    }
    let days: BTreeSet<Day> = schedule
        .mold_state
        .keys()
        .map(|k| k.1)
        .chain(schedule.z.keys().map(|k| k.2))
        .chain(schedule.changeovers.iter().map(|c| c.day))
        .collect();
    for m in scenario.machines() {
        for &d in &days {
            let expected = mold_change_count(schedule, scenario, &m.id, d) as usize;
            let have = recorded.get(&(&m.id, d)).copied().unwrap_or(0);
            if expected != have {
                out.push(v(
                    ViolationKind::Changeover,
                    None,
                    Some(&m.id),
                    None,
                    d,
                    expected.abs_diff(have) as f64,
                ));
            }
            let n_molds = schedule
                .mold_state
                .get(&(m.id.clone(), d))
                .map_or(0, Vec::len);
            if dedicated.contains(&d) && n_molds > 1 {
                out.push(v(
                    ViolationKind::Dedication,
                    None,
                    Some(&m.id),
                    None,
                    d,
                    (n_molds - 1) as f64,
                ));
            }
            let lost: f64 = schedule.lost_hours(&m.id, d);
            let cap = (m.day_hours - lost).max(0.0);
            let load = busy.get(&(&m.id, d)).copied().unwrap_or(0.0);
            if load > cap + VERIFY_TOL {
                out.push(v(
                    ViolationKind::Capacity,
                    None,
                    Some(&m.id),
                    None,
                    d,
                    load - cap,
                ));
            }
        }
    }
    out
}

/// Due-date dispatching without a plan: every open order asks for its whole
/// remaining quantity each day of its window, machines take the mold of the
/// first order that claims them, and accessories are machined the same day
/// up to the pooled CNC capacity. Returns the schedule and an envelope that
/// records what was done, so the same verifier and metrics apply.
pub fn greedy_noplan(scenario: &Scenario, config: &SchemeConfig) -> (Schedule, PlanEnvelope) {
    let mut schedule = Schedule::default();
    let horizon = scenario.horizon_days();
    let first_day = scenario.material_lead_days() + 1;
    let mut remaining: BTreeMap<&OrderId, f64> = scenario
        .orders()
        .iter()
        .map(|o| (&o.id, o.quantity))
        .collect();
    let mut inventory: BTreeMap<ProductId, f64> = scenario
        .products()
        .iter()
        .map(|p| (p.id.clone(), scenario.initial_accessory_inventory(&p.id)))
        .collect();
    let mut env_inventory = BTreeMap::new();
    let mut prev = initial_prev(scenario);

    for day in 1..=horizon {
        let mut claimed: BTreeMap<&MachineId, (MoldId, f64)> = BTreeMap::new();
        let mut today = Schedule::default();
        let mut dispatched: Vec<&ProductId> = Vec::new();
        if day >= first_day {
            let mut queue: Vec<&Order> = scenario
                .orders()
                .iter()
                .filter(|o| o.release_day <= day && day <= o.due_day && remaining[&o.id] > UNIT_EPS)
                .collect();
            queue.sort_by(|a, b| {
                let (mut pa, mut pb) = (priority(a, day), priority(b, day));
                if config.penalty_descending {
                    pa.penalty = -pa.penalty;
                    pb.penalty = -pb.penalty;
                }
                pa.cmp(&pb).then(a.id.cmp(&b.id))
            });
            for order in queue {
                let product = scenario.product(&order.product).expect("validated");
                let mut left = remaining[&order.id];
                let mut removed: BTreeSet<&MachineId> = BTreeSet::new();
                while left > UNIT_EPS {
                    let mut pool: Vec<(&MachineId, bool, f64)> = Vec::new();
                    for m in scenario.machines() {
                        if removed.contains(&m.id) || !scenario.product_fits_machine(product, &m.id)
                        {
                            continue;
                        }
                        let cap = match claimed.get(&m.id) {
                            Some((k, c)) if *k == product.mold => *c,
                            Some(_) => continue,
                            None => {
                                let installed = prev.get(&m.id).and_then(|p| p.molds.last());
                                let change = installed != Some(&product.mold);
                                effective_capacity(m, u32::from(change))
                            }
                        };
                        if cap <= UNIT_EPS {
                            continue;
                        }
                        let stable = prev
                            .get(&m.id)
                            .is_some_and(|p| p.products.contains(&product.id));
                        pool.push((&m.id, stable, cap));
                    }
                    let any_stable = pool.iter().any(|p| p.1);
                    let pick = pool
                        .iter()
                        .filter(|p| p.1 || !any_stable)
                        .max_by(|a, b| a.2.total_cmp(&b.2).then(b.0.cmp(a.0)))
                        .map(|p| (p.0, p.2));
                    let Some((m, cap)) = pick else { break };
                    let machine = scenario.machine(m).expect("validated");
                    let t = unit_time(machine, product);
                    let u = left.min(cap / t);
                    if u <= 1e-12 {
                        removed.insert(m);
                        continue;
                    }
                    let entry = claimed.entry(m).or_insert((product.mold.clone(), cap));
                    entry.1 = (entry.1 - u * t).max(0.0);
                    *today
                        .z
                        .entry((order.id.clone(), m.clone(), day))
                        .or_insert(0.0) += u;
                    left -= u;
                    if !dispatched.contains(&&product.id) {
                        dispatched.push(&product.id);
                    }
                }
                remaining.insert(&order.id, left);
            }
        }

        // Mold state: claimed machines run their mold, idle ones keep theirs.
        for m in scenario.machines() {
            let installed = prev.get(&m.id).and_then(|p| p.molds.last()).cloned();
            match claimed.get(&m.id) {
                Some((k, _)) => {
                    today.changeovers.extend(changeover_events(
                        &m.id,
                        day,
                        m.mold_change_hours,
                        installed.as_ref(),
                        std::slice::from_ref(k),
                    ));
                    today
                        .mold_state
                        .insert((m.id.clone(), day), vec![k.clone()]);
                }
                None => {
                    if let Some(k) = installed {
                        today.mold_state.insert((m.id.clone(), day), vec![k]);
                    }
                }
            }
        }

        // Same-day accessories, no look-ahead.
        let mut cnc_left = scenario.accessory_capacity_per_day();
        for f in dispatched {
            let product = scenario.product(f).expect("validated");
            if product.accessory_per_unit <= 0.0 {
                continue;
            }
            let shipped: f64 = today
                .z
                .iter()
                .filter(|((o, _, _), _)| {
                    scenario.order(o).map(|o| &o.product == f).unwrap_or(false)
                })
                .map(|(_, v)| v)
                .sum();
            let need = shipped * product.accessory_per_unit;
            let stock = inventory.get(f).copied().unwrap_or(0.0);
            let make = (need - stock).max(0.0).min(cnc_left);
            cnc_left -= make;
            if make > UNIT_EPS {
                today.accessory_production.insert((f.clone(), day), make);
            }
            let level = (stock + make - need).max(0.0);
            inventory.insert(f.clone(), level);
        }
        for p in scenario.products() {
            if p.accessory_per_unit > 0.0 {
                env_inventory.insert(
                    (p.id.clone(), day),
                    inventory.get(&p.id).copied().unwrap_or(0.0),
                );
            }
        }

        prev = next_prev(scenario, &today, day, &prev);
        schedule.merge(today);
    }

    let envelope = record_envelope(scenario, &schedule, env_inventory);
    (schedule, envelope)
}

fn record_envelope(
    scenario: &Scenario,
    schedule: &Schedule,
    inventory: BTreeMap<(ProductId, Day), f64>,
) -> PlanEnvelope {
    let mut env = PlanEnvelope {
        scheme: Scheme::GreedyNoPlan,
        window: (1, scenario.horizon_days()),
        y: BTreeMap::new(),
        q: BTreeMap::new(),
        x: BTreeMap::new(),
        p: schedule.accessory_production.clone(),
        inventory,
        outsourced: BTreeMap::new(),
        shortfall: BTreeMap::new(),
        objective: 0.0,
        solver: SolverInfo {
            status: SolveStatus::Feasible,
            gap: f64::INFINITY,
            nodes: 0,
            objective: 0.0,
        },
    };
    for ((o, m, d), &units) in &schedule.z {
        let product = scenario
            .order(o)
            .expect("scheduled orders exist")
            .product
            .clone();
        *env.q.entry((o.clone(), *d)).or_insert(0.0) += units;
        *env.y.entry((m.clone(), product, *d)).or_insert(0.0) += units;
    }
    for ((m, d), ks) in &schedule.mold_state {
        env.x.insert((m.clone(), *d), ks.iter().cloned().collect());
    }
    for o in scenario.orders() {
        let done: f64 = env
            .q
            .iter()
            .filter(|((oo, _), _)| oo == &o.id)
            .map(|(_, v)| v)
            .sum();
        env.outsourced.insert(o.id.clone(), 0.0);
        env.shortfall
            .insert(o.id.clone(), (o.quantity - done).max(0.0));
    }
    env.objective = envelope_objective(scenario, &env);
    env.solver.objective = env.objective;
    env
}
