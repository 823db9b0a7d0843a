//! Mid-term planning: the profit-maximizing MILP for one window and the
//! rolling-horizon loop that stitches windows into a full-horizon plan.
//!
//! Scheme A expects a group-aggregated scenario (see
//! [`Scenario::aggregate_by_group`]) and carries no mold variables.

use std::collections::{BTreeMap, BTreeSet};

use log::{debug, info};
use thiserror::Error;

use crate::domain::{
    unit_time, Day, MachineId, MoldId, OrderId, ProductId, Scenario, Scheme, SchemeConfig,
};
use crate::milp::{
    self, MilpError, MilpLimits, MilpModel, MilpSolution, Sense, SolveStatus, VarId, VarKind,
};

/// Objective weight on changeover indicators. Breaks ties in favour of
/// fewer mold changes and is excluded from reported objectives.
const CHANGEOVER_EPSILON: f64 = 1e-3;
const VALUE_EPS: f64 = 1e-9;

/// Summary of the MILP solve behind an envelope.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverInfo {
    pub status: SolveStatus,
    pub gap: f64,
    pub nodes: usize,
    /// Profit of the solver's point as the solver computed it, without the
    /// changeover tie-breaker.
    pub objective: f64,
}

/// Planning output for a block of consecutive days.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanEnvelope {
    pub scheme: Scheme,
    /// First and last day covered, inclusive.
    pub window: (Day, Day),
    pub y: BTreeMap<(MachineId, ProductId, Day), f64>,
    pub q: BTreeMap<(OrderId, Day), f64>,
    /// Molds installed per machine-day; absent means no mold.
    pub x: BTreeMap<(MachineId, Day), BTreeSet<MoldId>>,
    pub p: BTreeMap<(ProductId, Day), f64>,
    pub inventory: BTreeMap<(ProductId, Day), f64>,
    /// Outsourced units of orders whose due day falls inside `window`.
    pub outsourced: BTreeMap<OrderId, f64>,
    /// Planned shortfall of orders whose due day falls inside `window`.
    pub shortfall: BTreeMap<OrderId, f64>,
    pub objective: f64,
    pub solver: SolverInfo,
}

impl PlanEnvelope {
    pub fn covers(&self, day: Day) -> bool {
        self.window.0 <= day && day <= self.window.1
    }

    pub fn molds(&self, machine: &MachineId, day: Day) -> Option<&BTreeSet<MoldId>> {
        self.x.get(&(machine.clone(), day))
    }

    /// Restricts the envelope to `[window.0, last]`, dropping decisions on
    /// orders that close after `last`.
    pub fn truncate(&mut self, scenario: &Scenario, last: Day) {
        self.window.1 = last;
        self.y.retain(|k, _| k.2 <= last);
        self.q.retain(|k, _| k.1 <= last);
        self.x.retain(|k, _| k.1 <= last);
        self.p.retain(|k, _| k.1 <= last);
        self.inventory.retain(|k, _| k.1 <= last);
        let closes = |o: &OrderId| {
            scenario
                .order(o)
                .map(|o| o.due_day <= last)
                .unwrap_or(false)
        };
        self.outsourced.retain(|o, _| closes(o));
        self.shortfall.retain(|o, _| closes(o));
        self.objective = envelope_objective(scenario, self);
    }
}

/// Profit of the decisions recorded in `env`, computed from scenario data.
pub fn envelope_objective(scenario: &Scenario, env: &PlanEnvelope) -> f64 {
    let labor = scenario.effective_labor_rate();
    let mut z = 0.0;
    for ((o, _), v) in &env.q {
        if let Ok(order) = scenario.order(o) {
            z += order.unit_revenue * v;
        }
    }
    for ((_, f, _), v) in &env.y {
        if let Ok(p) = scenario.product(f) {
            z -= (p.unit_cost + labor) * v;
        }
    }
    for ((f, _), v) in &env.p {
        if let Ok(p) = scenario.product(f) {
            z -= scenario.accessory_unit_cost(p) * v;
        }
    }
    for (o, v) in &env.outsourced {
        if let Ok(order) = scenario.order(o) {
            z -= order.unit_outsourcing_cost * v;
        }
    }
    for (o, v) in &env.shortfall {
        if let Ok(order) = scenario.order(o) {
            z -= order.unit_delay_penalty * v;
        }
    }
    z
}

/// State handed from one rolling window to the next.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RollingState {
    pub carried_inventory: BTreeMap<ProductId, f64>,
    pub fulfilled_so_far: BTreeMap<OrderId, f64>,
    pub committed_outsourcing: BTreeMap<OrderId, f64>,
    /// Orders whose due day has passed in a frozen block.
    pub closed: BTreeSet<OrderId>,
    /// Molds installed on the last frozen day.
    pub last_molds: BTreeMap<MachineId, BTreeSet<MoldId>>,
}

impl RollingState {
    pub fn initial(scenario: &Scenario) -> Self {
        let mut s = RollingState::default();
        for p in scenario.products() {
            let inv = scenario.initial_accessory_inventory(&p.id);
            if inv > 0.0 {
                s.carried_inventory.insert(p.id.clone(), inv);
            }
        }
        for m in scenario.machines() {
            if let Some(k) = &m.initial_mold {
                s.last_molds.insert(m.id.clone(), [k.clone()].into());
            }
        }
        s
    }

    fn residual(&self, scenario: &Scenario, order: &OrderId) -> f64 {
        let q = scenario.order(order).map(|o| o.quantity).unwrap_or(0.0);
        let done = self.fulfilled_so_far.get(order).copied().unwrap_or(0.0)
            + self
                .committed_outsourcing
                .get(order)
                .copied()
                .unwrap_or(0.0);
        (q - done).max(0.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("window [{0}, {1}] is empty or outside the horizon")]
    EmptyWindow(Day, Day),
    #[error("inconsistent rolling state: {0}")]
    InconsistentState(String),
    #[error("solver failure: {0}")]
    SolverFailure(#[from] MilpError),
    #[error("solver reported {0} for a planning model that always admits the idle plan")]
    Internal(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Y { m: usize, f: usize, d: Day },
    Q { o: usize, d: Day },
    X { m: usize, k: usize, d: Day },
    Delta { m: usize, d: Day },
    P { f: usize, d: Day },
    I { f: usize, d: Day },
    U { o: usize },
    S { o: usize },
}

/// A planning MILP plus the map from its variables back to plan entities.
#[derive(Debug, Clone)]
pub struct PlanningModel {
    pub model: MilpModel,
    pub window: (Day, Day),
    pub scheme: Scheme,
    roles: Vec<Role>,
    carried: BTreeMap<ProductId, f64>,
    /// Residual quantity of each order with variables in the window.
    residual: BTreeMap<usize, f64>,
    /// Molds installed on each machine the day before the window.
    prior: BTreeMap<usize, BTreeSet<usize>>,
}

impl PlanningModel {
    pub fn num_binaries(&self) -> usize {
        self.model
            .variables
            .iter()
            .filter(|v| v.kind == VarKind::Binary)
            .count()
    }

    fn vars_with(&self, pred: impl Fn(&Role) -> bool) -> Vec<VarId> {
        self.roles
            .iter()
            .enumerate()
            .filter(|(_, r)| pred(r))
            .map(|(j, _)| VarId(j))
            .collect()
    }

    /// Variables holding `q` for `order` (by scenario index).
    pub fn q_vars(&self, order: usize) -> Vec<VarId> {
        self.vars_with(|r| matches!(r, Role::Q { o, .. } if *o == order))
    }

    pub fn outsourcing_var(&self, order: usize) -> Option<VarId> {
        self.vars_with(|r| matches!(r, Role::U { o } if *o == order))
            .first()
            .copied()
    }
}

struct Builder<'a> {
    sc: &'a Scenario,
    model: MilpModel,
    roles: Vec<Role>,
}

impl Builder<'_> {
    fn var(
        &mut self,
        role: Role,
        name: String,
        lower: f64,
        upper: f64,
        kind: VarKind,
        obj: f64,
    ) -> VarId {
        self.roles.push(role);
        self.model.add_var(name, lower, upper, kind, obj)
    }
}

/// Builds the planning MILP for `window` given the state carried in from
/// earlier windows.
pub fn build_planning_model(
    scenario: &Scenario,
    window: (Day, Day),
    state: &RollingState,
    config: &SchemeConfig,
) -> Result<PlanningModel, PlanError> {
    let (a, b) = window;
    if a < 1 || b < a || b > scenario.horizon_days() {
        return Err(PlanError::EmptyWindow(a, b));
    }
    if config.scheme == Scheme::GreedyNoPlan {
        return Err(PlanError::Config(
            "the greedy scheme has no planning model".into(),
        ));
    }
    for (o, v) in state
        .fulfilled_so_far
        .iter()
        .chain(&state.committed_outsourcing)
    {
        let order = scenario
            .order(o)
            .map_err(|e| PlanError::InconsistentState(e.to_string()))?;
        if *v < -VALUE_EPS || *v > order.quantity + 1e-6 {
            return Err(PlanError::InconsistentState(format!(
                "order '{o}' has {v} units recorded"
            )));
        }
    }
    for (f, v) in &state.carried_inventory {
        scenario
            .product(f)
            .map_err(|e| PlanError::InconsistentState(e.to_string()))?;
        if *v < -1e-6 {
            return Err(PlanError::InconsistentState(format!(
                "negative inventory {v} for '{f}'"
            )));
        }
    }

    let lead = scenario.material_lead_days();
    let labor = scenario.effective_labor_rate();
    let machine_level = matches!(config.scheme, Scheme::B | Scheme::C);
    let mut bld = Builder {
        sc: scenario,
        model: MilpModel::new(),
        roles: Vec::new(),
    };

    // Orders: shipping variables, make-or-buy and shortfall.
    let mut ships: BTreeMap<(usize, Day), Vec<(VarId, usize)>> = BTreeMap::new(); // (product, day) -> (q var, order)
    let mut day_demand: BTreeMap<(usize, Day), f64> = BTreeMap::new();
    let mut residuals: BTreeMap<usize, f64> = BTreeMap::new();
    for (oi, o) in scenario.orders().iter().enumerate() {
        if o.due_day < a || o.release_day > b || state.closed.contains(&o.id) {
            continue;
        }
        let residual = state.residual(scenario, &o.id);
        if residual <= VALUE_EPS {
            continue;
        }
        residuals.insert(oi, residual);
        let fi = scenario.product_index(&o.product).expect("validated");
        let first = o.release_day.max(a).max(lead + 1);
        let last = o.due_day.min(b);
        let mut row = Vec::new();
        for d in first..=last {
            let v = bld.var(
                Role::Q { o: oi, d },
                format!("q[{},{d}]", o.id),
                0.0,
                residual,
                VarKind::Continuous,
                o.unit_revenue,
            );
            ships.entry((fi, d)).or_default().push((v, oi));
            *day_demand.entry((fi, d)).or_default() += residual;
            row.push((v, 1.0));
        }
        if o.due_day <= b {
            let u = bld.var(
                Role::U { o: oi },
                format!("u[{}]", o.id),
                0.0,
                residual,
                VarKind::Continuous,
                -o.unit_outsourcing_cost,
            );
            let s = bld.var(
                Role::S { o: oi },
                format!("s[{}]", o.id),
                0.0,
                residual,
                VarKind::Continuous,
                -o.unit_delay_penalty,
            );
            row.push((u, 1.0));
            row.push((s, 1.0));
            bld.model
                .add_constraint(format!("fulfil[{}]", o.id), row, Sense::Eq, residual);
        } else if !row.is_empty() {
            bld.model
                .add_constraint(format!("cap_q[{}]", o.id), row, Sense::Le, residual);
        }
    }

    // Production.
    let mut y_of: BTreeMap<(usize, Day), Vec<(VarId, usize)>> = BTreeMap::new(); // (machine, day) -> (y, product)
    for (&(fi, d), shipped) in &ships {
        let product = &scenario.products()[fi];
        let u_f = scenario.big_m(product);
        let cost = product.unit_cost + labor;
        let mut row = Vec::new();
        for (mi, m) in scenario.machines().iter().enumerate() {
            if !scenario.product_fits_machine(product, &m.id) {
                continue;
            }
            let cap = u_f
                .min(m.day_hours / unit_time(m, product))
                .min(day_demand[&(fi, d)]);
            let y = bld.var(
                Role::Y { m: mi, f: fi, d },
                format!("y[{},{},{d}]", m.id, product.id),
                0.0,
                cap,
                VarKind::Continuous,
                -cost,
            );
            y_of.entry((mi, d)).or_default().push((y, fi));
            row.push((y, 1.0));
        }
        row.extend(shipped.iter().map(|&(q, _)| (q, -1.0)));
        bld.model
            .add_constraint(format!("produce[{},{d}]", product.id), row, Sense::Ge, 0.0);
    }

    if machine_level {
        build_mold_layer(&mut bld, window, state, config, &ships, &y_of);
    } else {
        for (&(mi, d), ys) in &y_of {
            let m = &scenario.machines()[mi];
            let row: Vec<(VarId, f64)> = ys
                .iter()
                .map(|&(y, fi)| (y, unit_time(m, &scenario.products()[fi])))
                .collect();
            bld.model.add_constraint(
                format!("capacity[{},{d}]", m.id),
                row,
                Sense::Le,
                m.day_hours,
            );
        }
    }

    // Accessories.
    let acc_products: BTreeSet<usize> = ships
        .keys()
        .map(|&(fi, _)| fi)
        .filter(|&fi| scenario.products()[fi].accessory_per_unit > 0.0)
        .collect();
    let mut p_of_day: BTreeMap<Day, Vec<VarId>> = BTreeMap::new();
    for &fi in &acc_products {
        let product = &scenario.products()[fi];
        let c_acc = scenario.accessory_unit_cost(product);
        let h = product.accessory_per_unit;
        let mut prev: Option<VarId> = None;
        let carried = state
            .carried_inventory
            .get(&product.id)
            .copied()
            .unwrap_or(0.0);
        for d in a..=b {
            let p = bld.var(
                Role::P { f: fi, d },
                format!("p[{},{d}]", product.id),
                0.0,
                scenario.accessory_capacity_per_day(),
                VarKind::Continuous,
                -c_acc,
            );
            let inv = bld.var(
                Role::I { f: fi, d },
                format!("I[{},{d}]", product.id),
                0.0,
                f64::INFINITY,
                VarKind::Continuous,
                0.0,
            );
            p_of_day.entry(d).or_default().push(p);
            let mut row = vec![(inv, 1.0), (p, -1.0)];
            if let Some(pv) = prev {
                row.push((pv, -1.0));
            }
            if let Some(shipped) = ships.get(&(fi, d)) {
                row.extend(shipped.iter().map(|&(q, _)| (q, h)));
            }
            let rhs = if prev.is_none() { carried } else { 0.0 };
            bld.model
                .add_constraint(format!("balance[{},{d}]", product.id), row, Sense::Eq, rhs);
            prev = Some(inv);
        }
    }
    for (d, ps) in p_of_day {
        bld.model.add_constraint(
            format!("cnc[{d}]"),
            ps.into_iter().map(|p| (p, 1.0)),
            Sense::Le,
            scenario.accessory_capacity_per_day(),
        );
    }

    let carried = state.carried_inventory.clone();
    let prior = scenario
        .machines()
        .iter()
        .enumerate()
        .filter_map(|(mi, m)| {
            let ks = state.last_molds.get(&m.id)?;
            Some((
                mi,
                ks.iter().filter_map(|k| scenario.mold_index(k)).collect(),
            ))
        })
        .collect();
    let Builder { model, roles, .. } = bld;
    debug!(
        "window [{a},{b}]: {} vars ({} binary), {} rows",
        model.num_vars(),
        model
            .variables
            .iter()
            .filter(|v| v.kind == VarKind::Binary)
            .count(),
        model.num_constraints()
    );
    Ok(PlanningModel {
        model,
        window,
        scheme: config.scheme,
        roles,
        carried,
        residual: residuals,
        prior,
    })
}

fn build_mold_layer(
    bld: &mut Builder<'_>,
    window: (Day, Day),
    state: &RollingState,
    config: &SchemeConfig,
    ships: &BTreeMap<(usize, Day), Vec<(VarId, usize)>>,
    y_of: &BTreeMap<(usize, Day), Vec<(VarId, usize)>>,
) {
    let sc = bld.sc;
    let (a, b) = window;
    let multi = config.scheme == Scheme::B;
    let active_products: BTreeSet<usize> = ships.keys().map(|&(f, _)| f).collect();

    for (mi, m) in sc.machines().iter().enumerate() {
        let prior: BTreeSet<usize> = state
            .last_molds
            .get(&m.id)
            .map(|ks| ks.iter().filter_map(|k| sc.mold_index(k)).collect())
            .unwrap_or_default();
        let mut molds: BTreeSet<usize> = prior.clone();
        for &fi in &active_products {
            let p = &sc.products()[fi];
            if sc.product_fits_machine(p, &m.id) {
                molds.insert(sc.mold_index(&p.mold).expect("validated"));
            }
        }
        if molds.is_empty() {
            continue;
        }
        let h = m.mold_change_hours;
        let mut prev_x: BTreeMap<usize, VarId> = BTreeMap::new();
        for d in a..=b {
            let mut xs: BTreeMap<usize, VarId> = BTreeMap::new();
            for &ki in &molds {
                let k = &sc.molds()[ki];
                let x = bld.var(
                    Role::X { m: mi, k: ki, d },
                    format!("x[{},{},{d}]", m.id, k.id),
                    0.0,
                    1.0,
                    VarKind::Binary,
                    0.0,
                );
                xs.insert(ki, x);
            }
            let delta = bld.var(
                Role::Delta { m: mi, d },
                format!("delta[{},{d}]", m.id),
                0.0,
                1.0,
                VarKind::Binary,
                -CHANGEOVER_EPSILON,
            );

            let limit = if multi {
                f64::from(config.max_molds_per_day)
            } else {
                1.0
            };
            bld.model.add_constraint(
                format!("molds[{},{d}]", m.id),
                xs.values().map(|&x| (x, 1.0)),
                Sense::Le,
                limit,
            );

            // delta >= x[k,d] - x[k,d-1]
            for (&ki, &x) in &xs {
                let mut row = vec![(delta, 1.0), (x, -1.0)];
                let rhs = if d == a {
                    if prior.contains(&ki) {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    row.push((prev_x[&ki], 1.0));
                    0.0
                };
                // With a prior of 1 the row reads delta >= x - 1, always slack.
                if d > a || rhs == 0.0 {
                    bld.model.add_constraint(
                        format!("change[{},{},{d}]", m.id, sc.molds()[ki].id),
                        row,
                        Sense::Ge,
                        -rhs,
                    );
                }
            }

            let ys = y_of.get(&(mi, d)).map(Vec::as_slice).unwrap_or(&[]);
            for &(y, fi) in ys {
                let p = &sc.products()[fi];
                let ki = sc.mold_index(&p.mold).expect("validated");
                let cap = bld.model.variables[y.0].upper;
                bld.model.add_constraint(
                    format!("bigm[{},{},{d}]", m.id, p.id),
                    [(y, 1.0), (xs[&ki], -cap)],
                    Sense::Le,
                    0.0,
                );
            }

            let mut row: Vec<(VarId, f64)> = ys
                .iter()
                .map(|&(y, fi)| (y, unit_time(m, &sc.products()[fi])))
                .collect();
            let mut rhs = m.day_hours;
            if h > 0.0 {
                row.push((delta, h));
                if multi {
                    row.extend(xs.values().map(|&x| (x, h)));
                    rhs += h;
                }
            }
            bld.model
                .add_constraint(format!("capacity[{},{d}]", m.id), row, Sense::Le, rhs);
            prev_x = xs;
        }
    }
}

fn snap(v: f64) -> f64 {
    if v.abs() <= VALUE_EPS {
        0.0
    } else {
        v
    }
}

type MoldVars = BTreeMap<(usize, Day), Vec<(usize, VarId)>>;

/// X variables of each machine-day and the changeover indicators.
fn mold_vars(pm: &PlanningModel) -> (MoldVars, BTreeMap<(usize, Day), VarId>) {
    let mut by_md: BTreeMap<(usize, Day), Vec<(usize, VarId)>> = BTreeMap::new();
    let mut delta_of = BTreeMap::new();
    for (j, role) in pm.roles.iter().enumerate() {
        match *role {
            Role::X { m, k, d } => by_md.entry((m, d)).or_default().push((k, VarId(j))),
            Role::Delta { m, d } => {
                delta_of.insert((m, d), VarId(j));
            }
            _ => {}
        }
    }
    (by_md, delta_of)
}

/// Builds an integer point by placing molds order by order. Each order
/// first uses machine-days that already hold its mold, then opens free
/// machine-days, preferring ones that add the fewest changeovers. Idle
/// machine-days keep the preceding mold. Orders left short are moved to the
/// front and the placement is repeated a few times; the best point wins.
fn campaign_start(pm: &PlanningModel, scenario: &Scenario) -> Option<Vec<f64>> {
    let mut ship_days: BTreeMap<usize, Vec<Day>> = BTreeMap::new();
    for role in &pm.roles {
        if let Role::Q { o, d } = *role {
            ship_days.entry(o).or_default().push(d);
        }
    }
    let mut edd: Vec<usize> = ship_days.keys().copied().collect();
    edd.sort_by_key(|&o| {
        let ord = &scenario.orders()[o];
        (ord.due_day, ord.release_day, o)
    });
    let mut best: Option<(f64, Vec<f64>)> = None;
    for rule in [
        PlaceRule {
            latest: false,
            knock_on: true,
        },
        PlaceRule {
            latest: false,
            knock_on: false,
        },
        PlaceRule {
            latest: true,
            knock_on: true,
        },
        PlaceRule {
            latest: true,
            knock_on: false,
        },
    ] {
        let mut order = edd.clone();
        let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
        for _ in 0..CAMPAIGN_ROUNDS {
            if !seen.insert(order.clone()) {
                break;
            }
            let chosen = place_campaigns(pm, scenario, &ship_days, &order, rule);
            let Some(point) = complete_with_molds(pm, &chosen) else {
                break;
            };
            let value = pm.model.objective_value(&point);
            let short: BTreeSet<usize> = pm
                .roles
                .iter()
                .enumerate()
                .filter_map(|(j, role)| match *role {
                    Role::U { o } | Role::S { o } if point[j] > 1e-6 => Some(o),
                    _ => None,
                })
                .collect();
            if best.as_ref().is_none_or(|(b, _)| value > *b + 1e-9) {
                best = Some((value, point));
            }
            if short.is_empty() {
                break;
            }
            let (front, back): (Vec<usize>, Vec<usize>) =
                order.iter().partition(|o| short.contains(o));
            order = front.into_iter().chain(back).collect();
        }
    }
    best.map(|(_, p)| p)
}

const CAMPAIGN_ROUNDS: usize = 6;

#[derive(Debug, Clone, Copy)]
struct PlaceRule {
    /// Open the latest free day of an order's window first.
    latest: bool,
    /// Charge the changeover an insertion forces on the next run.
    knock_on: bool,
}

fn place_campaigns(
    pm: &PlanningModel,
    scenario: &Scenario,
    ship_days: &BTreeMap<usize, Vec<Day>>,
    order: &[usize],
    rule: PlaceRule,
) -> BTreeMap<(usize, Day), BTreeSet<usize>> {
    let (by_md, _) = mold_vars(pm);
    let (a, b) = pm.window;
    let can_make: BTreeSet<(usize, usize, Day)> = pm
        .roles
        .iter()
        .filter_map(|role| match *role {
            Role::Y { m, f, d } => Some((m, f, d)),
            _ => None,
        })
        .collect();
    let prior_of = |m: usize| -> Option<usize> {
        let ks = pm.prior.get(&m)?;
        if ks.len() == 1 {
            ks.iter().next().copied()
        } else {
            None
        }
    };
    let has = |m: usize, d: Day, k: usize| {
        by_md
            .get(&(m, d))
            .is_some_and(|ks| ks.iter().any(|&(kk, _)| kk == k))
    };

    let mut mold: BTreeMap<(usize, Day), usize> = BTreeMap::new();
    let mut hours: BTreeMap<(usize, Day), f64> = BTreeMap::new();
    let n_machines = scenario.machines().len();
    for &o in order {
        let ord = &scenario.orders()[o];
        let fi = scenario.product_index(&ord.product).expect("validated");
        let product = &scenario.products()[fi];
        let ki = scenario.mold_index(&product.mold).expect("validated");
        let mut need = pm.residual[&o];
        let days = &ship_days[&o];
        let take = |need: &mut f64, m: usize, d: Day, hours: &mut BTreeMap<(usize, Day), f64>| {
            let t = unit_time(&scenario.machines()[m], product);
            let left = hours.get_mut(&(m, d)).expect("opened");
            let units = (*left / t).min(*need);
            *left -= units * t;
            *need -= units;
        };
        for &d in days {
            for m in 0..n_machines {
                if need <= VALUE_EPS {
                    break;
                }
                if mold.get(&(m, d)) == Some(&ki) && can_make.contains(&(m, fi, d)) {
                    take(&mut need, m, d, &mut hours);
                }
            }
        }
        while need > VALUE_EPS {
            // (new changeovers, day rank, machine), the day that gains a changeover
            let mut pick: Option<((u8, i64, usize), Option<Day>)> = None;
            for &d in days {
                for m in 0..n_machines {
                    if mold.contains_key(&(m, d))
                        || !can_make.contains(&(m, fi, d))
                        || !has(m, d, ki)
                    {
                        continue;
                    }
                    let before = mold
                        .range((m, a)..(m, d))
                        .next_back()
                        .map(|(_, &k)| k)
                        .or_else(|| prior_of(m));
                    let change_here = match before {
                        Some(k) => k != ki,
                        None => d == a,
                    };
                    let after = if d < b {
                        mold.range((m, d + 1)..=(m, b))
                            .next()
                            .map(|(&(_, d2), &j)| (d2, j))
                    } else {
                        None
                    };
                    let knock_on = after.filter(|_| rule.knock_on).and_then(|(d2, j)| {
                        let was_free = match before {
                            Some(k) => k == j,
                            None => d2 > a,
                        };
                        (j != ki && was_free).then_some(d2)
                    });
                    let machine = &scenario.machines()[m];
                    if let Some(d2) = knock_on {
                        if hours[&(m, d2)] < machine.mold_change_hours {
                            continue;
                        }
                    }
                    let rank = if rule.latest {
                        -i64::from(d)
                    } else {
                        i64::from(d)
                    };
                    let key = (
                        u8::from(change_here) + u8::from(knock_on.is_some()),
                        rank,
                        m,
                    );
                    if pick.as_ref().is_none_or(|(bk, _)| key < *bk) {
                        pick = Some((key, knock_on));
                    }
                }
            }
            let Some(((changes, rank, m), knock_on)) = pick else {
                break;
            };
            let d = rank.unsigned_abs() as Day;
            let machine = &scenario.machines()[m];
            let here = changes > u8::from(knock_on.is_some());
            let loss = if here { machine.mold_change_hours } else { 0.0 };
            if let Some(d2) = knock_on {
                *hours.get_mut(&(m, d2)).expect("opened") -= machine.mold_change_hours;
            }
            mold.insert((m, d), ki);
            hours.insert((m, d), (machine.day_hours - loss).max(0.0));
            take(&mut need, m, d, &mut hours);
        }
    }

    let mut chosen: BTreeMap<(usize, Day), BTreeSet<usize>> = BTreeMap::new();
    let machines: BTreeSet<usize> = by_md.keys().map(|&(m, _)| m).collect();
    for m in machines {
        let mut current = prior_of(m).filter(|&k| has(m, a, k));
        if current.is_none() {
            current = (a..=b).find_map(|d| mold.get(&(m, d)).copied());
        }
        for d in a..=b {
            if let Some(&k) = mold.get(&(m, d)) {
                current = Some(k);
            }
            let set: BTreeSet<usize> = current.filter(|&k| has(m, d, k)).into_iter().collect();
            chosen.insert((m, d), set);
        }
    }
    chosen
}

/// Fixes the mold variables to the given sets, derives the changeover
/// indicators and re-optimizes the continuous part.
fn complete_with_molds(
    pm: &PlanningModel,
    chosen: &BTreeMap<(usize, Day), BTreeSet<usize>>,
) -> Option<Vec<f64>> {
    let (by_md, delta_of) = mold_vars(pm);
    let mut fixed = pm.model.clone();
    let empty = BTreeSet::new();
    for (md, cands) in &by_md {
        let set = chosen.get(md).unwrap_or(&empty);
        for &(k, var) in cands {
            let on = if set.contains(&k) { 1.0 } else { 0.0 };
            fixed.variables[var.0].lower = on;
            fixed.variables[var.0].upper = on;
        }
    }
    for (&(m, d), &var) in &delta_of {
        if d == pm.window.0 {
            // The prior day is encoded in the rows; let the LP pick delta.
            continue;
        }
        let today = chosen.get(&(m, d)).unwrap_or(&empty);
        let yesterday = chosen.get(&(m, d - 1)).unwrap_or(&empty);
        let v = if today.difference(yesterday).next().is_some() {
            1.0
        } else {
            0.0
        };
        fixed.variables[var.0].lower = v;
        fixed.variables[var.0].upper = v;
    }
    for v in &mut fixed.variables {
        if v.kind == VarKind::Binary && v.lower != v.upper {
            v.kind = VarKind::Continuous;
        }
    }
    let sol = milp::solve_milp(
        &fixed,
        &MilpLimits {
            max_nodes: 50,
            ..MilpLimits::default()
        },
    )
    .ok()?;
    if !matches!(sol.status, SolveStatus::Optimal | SolveStatus::Feasible) {
        return None;
    }
    let mut point = sol.values;
    for (j, v) in pm.model.variables.iter().enumerate() {
        if v.kind == VarKind::Binary {
            point[j] = point[j].round();
        }
    }
    Some(point)
}

/// Solves one window and maps the solution back to plan entities.
pub fn solve_window(
    pm: &PlanningModel,
    scenario: &Scenario,
    limits: &MilpLimits,
) -> Result<PlanEnvelope, PlanError> {
    let has_binaries = pm
        .model
        .variables
        .iter()
        .any(|v| v.kind != VarKind::Continuous);
    let start = if has_binaries {
        campaign_start(pm, scenario)
    } else {
        None
    };
    let sol = match &start {
        Some(point) => milp::solve_milp_with_start(&pm.model, limits, point)?,
        None => milp::solve_milp(&pm.model, limits)?,
    };
    if !matches!(sol.status, SolveStatus::Optimal | SolveStatus::Feasible) {
        return Err(PlanError::Internal(sol.status.label().into()));
    }
    info!(
        "window [{}, {}]: {} after {} nodes, gap {:.2e}",
        pm.window.0,
        pm.window.1,
        sol.status.label(),
        sol.nodes_explored,
        sol.gap
    );
    Ok(map_solution(pm, scenario, &sol))
}

fn map_solution(pm: &PlanningModel, sc: &Scenario, sol: &MilpSolution) -> PlanEnvelope {
    let mut env = PlanEnvelope {
        scheme: pm.scheme,
        window: pm.window,
        y: BTreeMap::new(),
        q: BTreeMap::new(),
        x: BTreeMap::new(),
        p: BTreeMap::new(),
        inventory: BTreeMap::new(),
        outsourced: BTreeMap::new(),
        shortfall: BTreeMap::new(),
        objective: 0.0,
        solver: SolverInfo {
            status: sol.status,
            gap: sol.gap,
            nodes: sol.nodes_explored,
            objective: sol.objective,
        },
    };
    for (j, role) in pm.roles.iter().enumerate() {
        let v = snap(sol.values[j]).max(0.0);
        match *role {
            Role::Y { m, f, d } if v > 0.0 => {
                env.y.insert(
                    (sc.machines()[m].id.clone(), sc.products()[f].id.clone(), d),
                    v,
                );
            }
            Role::Q { o, d } if v > 0.0 => {
                env.q.insert((sc.orders()[o].id.clone(), d), v);
            }
            Role::X { m, k, d } if v > 0.5 => {
                env.x
                    .entry((sc.machines()[m].id.clone(), d))
                    .or_default()
                    .insert(sc.molds()[k].id.clone());
            }
            Role::P { f, d } if v > 0.0 => {
                env.p.insert((sc.products()[f].id.clone(), d), v);
            }
            Role::I { f, d } => {
                env.inventory.insert((sc.products()[f].id.clone(), d), v);
            }
            Role::U { o } => {
                env.outsourced.insert(sc.orders()[o].id.clone(), v);
            }
            Role::S { o } => {
                env.shortfall.insert(sc.orders()[o].id.clone(), v);
            }
            Role::Delta { .. } => {
                env.solver.objective += CHANGEOVER_EPSILON * sol.values[j];
            }
            _ => {}
        }
    }
    // Inventory rows are re-derived so the balance holds exactly on the
    // snapped values.
    let products: BTreeSet<ProductId> = env.inventory.keys().map(|k| k.0.clone()).collect();
    for f in products {
        let product = sc.product(&f).expect("known");
        let mut level = pm.carried.get(&f).copied().unwrap_or(0.0);
        for d in pm.window.0..=pm.window.1 {
            let made = env.p.get(&(f.clone(), d)).copied().unwrap_or(0.0);
            let used: f64 = env
                .q
                .iter()
                .filter(|((o, day), _)| {
                    *day == d && sc.order(o).map(|o| o.product == f).unwrap_or(false)
                })
                .map(|(_, v)| v)
                .sum::<f64>()
                * product.accessory_per_unit;
            level = level + made - used;
            env.inventory.insert((f.clone(), d), snap(level).max(0.0));
        }
    }
    env.objective = envelope_objective(sc, &env);
    env
}

/// Effective step and window for a horizon.
fn window_shape(config: &SchemeConfig, horizon: Day) -> (Day, Day) {
    let w = config.window_days.min(horizon).max(1);
    let s = config.step_days.min(w).max(1);
    (w, s)
}

/// Runs the rolling-horizon loop over the whole horizon. Returns one
/// envelope per frozen block; together they cover every day exactly once.
pub fn rolling_plan(
    scenario: &Scenario,
    config: &SchemeConfig,
) -> Result<(Vec<PlanEnvelope>, RollingState), PlanError> {
    config
        .validate(scenario.horizon_days())
        .map_err(PlanError::Config)?;
    let horizon = scenario.horizon_days();
    let (w, s) = window_shape(config, horizon);
    let mut state = RollingState::initial(scenario);
    let mut envelopes = Vec::new();
    let mut a = 1;
    while a <= horizon {
        let b = (a + w - 1).min(horizon);
        let frozen = if b == horizon {
            horizon
        } else {
            (a + s - 1).min(b)
        };
        let pm = build_planning_model(scenario, (a, b), &state, config)?;
        let mut env = solve_window(&pm, scenario, &config.solver_limits)?;
        if frozen < b {
            env.truncate(scenario, frozen);
        }
        advance_state(scenario, &mut state, &env);
        envelopes.push(env);
        a = frozen + 1;
    }
    Ok((envelopes, state))
}

fn advance_state(sc: &Scenario, state: &mut RollingState, env: &PlanEnvelope) {
    let last = env.window.1;
    for ((o, _), v) in &env.q {
        *state.fulfilled_so_far.entry(o.clone()).or_default() += v;
    }
    for (o, v) in &env.outsourced {
        if *v > 0.0 {
            *state.committed_outsourcing.entry(o.clone()).or_default() += v;
        }
    }
    for o in sc.orders() {
        if o.due_day <= last {
            state.closed.insert(o.id.clone());
        }
    }
    for ((f, d), v) in &env.inventory {
        if *d == last {
            state.carried_inventory.insert(f.clone(), *v);
        }
    }
    if env.scheme != Scheme::A {
        state.last_molds.clear();
        for ((m, d), ks) in &env.x {
            if *d == last {
                state.last_molds.insert(m.clone(), ks.clone());
            }
        }
    }
}

/// One constraint violated by a plan.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeViolation {
    pub constraint: String,
    pub residual: f64,
}

/// Result of an independent recomputation of every planning constraint.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnvelopeCheck {
    pub max_residual: f64,
    pub violations: Vec<EnvelopeViolation>,
}

impl EnvelopeCheck {
    fn record(&mut self, tol: f64, residual: f64, what: impl FnOnce() -> String) {
        if residual > self.max_residual {
            self.max_residual = residual;
        }
        if residual > tol {
            self.violations.push(EnvelopeViolation {
                constraint: what(),
                residual,
            });
        }
    }
}

/// Recomputes every planning constraint from scenario data for a sequence
/// of envelopes covering consecutive days from day 1. Residuals are
/// reported in the units of each constraint; anything above `tol` is a
/// violation.
pub fn check_envelopes(
    scenario: &Scenario,
    envelopes: &[PlanEnvelope],
    config: &SchemeConfig,
    tol: f64,
) -> EnvelopeCheck {
    let mut chk = EnvelopeCheck::default();
    let lead = scenario.material_lead_days();
    let machine_level = matches!(config.scheme, Scheme::B | Scheme::C);
    let mut inventory: BTreeMap<ProductId, f64> = scenario
        .products()
        .iter()
        .map(|p| (p.id.clone(), scenario.initial_accessory_inventory(&p.id)))
        .collect();
    let mut prev_molds: BTreeMap<MachineId, BTreeSet<MoldId>> =
        RollingState::initial(scenario).last_molds;
    let mut shipped: BTreeMap<OrderId, f64> = BTreeMap::new();
    let mut outsourced: BTreeMap<OrderId, f64> = BTreeMap::new();
    let mut expected_first = 1;

    for env in envelopes {
        let (a, b) = env.window;
        chk.record(tol, if a == expected_first { 0.0 } else { 1.0 }, || {
            format!("coverage: envelope starts at {a}, expected {expected_first}")
        });
        expected_first = b + 1;

        // Domains and signs.
        for ((o, d), v) in &env.q {
            chk.record(tol, (-v).max(0.0), || format!("q[{o},{d}] >= 0"));
            match scenario.order(o) {
                Ok(order) => {
                    let outside = *d < order.release_day
                        || *d > order.due_day
                        || *d <= lead
                        || *d < a
                        || *d > b;
                    chk.record(tol, if outside { v.abs() } else { 0.0 }, || {
                        format!("q[{o},{d}] outside delivery window")
                    });
                    *shipped.entry(o.clone()).or_default() += v;
                }
                Err(_) => chk.record(tol, v.abs(), || format!("q for unknown order {o}")),
            }
        }
        for ((m, f, d), v) in &env.y {
            chk.record(tol, (-v).max(0.0), || format!("y[{m},{f},{d}] >= 0"));
            let ok = scenario
                .product(f)
                .map(|p| scenario.product_fits_machine(p, m))
                .unwrap_or(false);
            chk.record(tol, if ok { 0.0 } else { v.abs() }, || {
                format!("y[{m},{f},{d}] on incompatible machine")
            });
            chk.record(tol, if *d <= lead { v.abs() } else { 0.0 }, || {
                format!("y[{m},{f},{d}] before material lead time")
            });
        }
        for (o, v) in &env.outsourced {
            chk.record(tol, (-v).max(0.0), || format!("u[{o}] >= 0"));
            *outsourced.entry(o.clone()).or_default() += v;
        }

        for d in a..=b {
            for m in scenario.machines() {
                let empty = BTreeSet::new();
                let today = env.x.get(&(m.id.clone(), d)).unwrap_or(&empty);
                let mut hours: f64 = 0.0;
                for ((mm, f, dd), v) in env.y.range((m.id.clone(), ProductId::new(""), d)..) {
                    if mm != &m.id {
                        break;
                    }
                    if *dd != d {
                        continue;
                    }
                    let Ok(p) = scenario.product(f) else { continue };
                    hours += v * unit_time(m, p);
                    // The product's mold must be installed.
                    if machine_level {
                        let present = today.contains(&p.mold);
                        chk.record(tol, if present { 0.0 } else { *v }, || {
                            format!("y[{},{f},{d}] without mold {}", m.id, p.mold)
                        });
                    }
                }
                if machine_level {
                    // Mold count and fit.
                    let limit = if config.scheme == Scheme::B {
                        config.max_molds_per_day as usize
                    } else {
                        1
                    };
                    chk.record(tol, today.len().saturating_sub(limit) as f64, || {
                        format!("x[{},{d}] holds {} molds", m.id, today.len())
                    });
                    for k in today {
                        let fits = scenario
                            .mold(k)
                            .map(|mk| mk.compatible_machines.contains(&m.id))
                            .unwrap_or(false);
                        chk.record(tol, if fits { 0.0 } else { 1.0 }, || {
                            format!("mold {k} does not fit {}", m.id)
                        });
                    }
                    // Capacity with changeover loss.
                    let prev = prev_molds.get(&m.id).cloned().unwrap_or_default();
                    let installs = today.iter().any(|k| !prev.contains(k));
                    let delta = if installs { 1.0 } else { 0.0 };
                    let loss = if config.scheme == Scheme::B && !today.is_empty() {
                        m.mold_change_hours * (today.len() as f64 - 1.0 + delta)
                    } else {
                        m.mold_change_hours * delta
                    };
                    chk.record(tol, hours + loss - m.day_hours, || {
                        format!("capacity[{},{d}]", m.id)
                    });
                    prev_molds.insert(m.id.clone(), today.clone());
                } else {
                    chk.record(tol, hours - m.day_hours, || {
                        format!("capacity[{},{d}]", m.id)
                    });
                }
            }

            // Accessory balance, pooled CNC capacity, production covering shipments.
            let mut cnc = 0.0;
            for p in scenario.products() {
                let ship: f64 = env
                    .q
                    .iter()
                    .filter(|((o, dd), _)| {
                        *dd == d
                            && scenario
                                .order(o)
                                .map(|o| o.product == p.id)
                                .unwrap_or(false)
                    })
                    .map(|(_, v)| v)
                    .sum();
                let made: f64 = env
                    .y
                    .iter()
                    .filter(|((_, f, dd), _)| *dd == d && f == &p.id)
                    .map(|(_, v)| v)
                    .sum();
                chk.record(tol, ship - made, || format!("produce[{},{d}]", p.id));
                if p.accessory_per_unit > 0.0 {
                    let pv = env.p.get(&(p.id.clone(), d)).copied().unwrap_or(0.0);
                    chk.record(tol, (-pv).max(0.0), || format!("p[{},{d}] >= 0", p.id));
                    cnc += pv;
                    let level = inventory.get(&p.id).copied().unwrap_or(0.0) + pv
                        - p.accessory_per_unit * ship;
                    chk.record(tol, -level, || {
                        format!("accessory inventory[{},{d}] >= 0", p.id)
                    });
                    if let Some(&reported) = env.inventory.get(&(p.id.clone(), d)) {
                        chk.record(tol, (reported - level).abs(), || {
                            format!("balance[{},{d}]", p.id)
                        });
                    }
                    inventory.insert(p.id.clone(), level);
                }
            }
            chk.record(tol, cnc - scenario.accessory_capacity_per_day(), || {
                format!("cnc[{d}]")
            });
        }
    }

    for o in scenario.orders() {
        let total = shipped.get(&o.id).copied().unwrap_or(0.0)
            + outsourced.get(&o.id).copied().unwrap_or(0.0);
        chk.record(tol, total - o.quantity, || {
            format!("fulfilment[{}] exceeds quantity", o.id)
        });
    }
    chk
}
