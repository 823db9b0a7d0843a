//! Problem data shared by every layer: machines, molds, products, orders and
//! the scenario that ties them together.
//!
//! A [`Scenario`] is validated once at construction and is immutable
//! afterwards. Compatibility between a product and a machine is never stored
//! directly; it is derived from the two membership sets of the product's mold.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::milp::MilpLimits;

/// Day index, 1-based.
pub type Day = u32;

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }

        impl std::borrow::Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }
    };
}

id_type!(MachineId);
id_type!(MoldId);
id_type!(ProductId);
id_type!(OrderId);

/// Machine family. Pooled capacity, utilization and changeover tables are
/// reported per group.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum MachineGroup {
    G150,
    G130,
    Cnc,
    Custom(String),
}

impl MachineGroup {
    pub fn name(&self) -> &str {
        match self {
            MachineGroup::G150 => "G150",
            MachineGroup::G130 => "G130",
            MachineGroup::Cnc => "CNC",
            MachineGroup::Custom(name) => name,
        }
    }
}

impl From<String> for MachineGroup {
    fn from(s: String) -> Self {
        match s.as_str() {
            "G150" => MachineGroup::G150,
            "G130" => MachineGroup::G130,
            "CNC" => MachineGroup::Cnc,
            _ => MachineGroup::Custom(s),
        }
    }
}

impl From<MachineGroup> for String {
    fn from(g: MachineGroup) -> Self {
        g.name().to_owned()
    }
}

impl fmt::Display for MachineGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn default_day_hours() -> f64 {
    24.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Machine {
    pub id: MachineId,
    pub group: MachineGroup,
    #[serde(default = "default_day_hours")]
    pub day_hours: f64,
    /// Downtime charged for every mold change.
    pub mold_change_hours: f64,
    /// Hours per unit for every compatible product without an override.
    pub unit_time_default: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_mold: Option<MoldId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mold {
    pub id: MoldId,
    pub compatible_machines: BTreeSet<MachineId>,
    pub producible_products: BTreeSet<ProductId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Product {
    pub id: ProductId,
    pub mold: MoldId,
    pub unit_cost: f64,
    /// Accessory units consumed per shell unit; zero when the product ships
    /// without accessories.
    #[serde(default)]
    pub accessory_per_unit: f64,
    /// Explicit big-M bound. Derived from demand and capacity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub big_m_cap: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub unit_time_overrides: BTreeMap<MachineId, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Order {
    pub id: OrderId,
    pub product: ProductId,
    pub quantity: f64,
    pub release_day: Day,
    pub due_day: Day,
    pub unit_revenue: f64,
    pub unit_delay_penalty: f64,
    pub unit_outsourcing_cost: f64,
}

fn default_lead_days() -> u32 {
    3
}

fn default_accessory_cost_ratio() -> f64 {
    0.2
}

/// Raw scenario content as read from or written to a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioData {
    pub horizon_days: u32,
    /// Pooled accessory (CNC) output in units per day.
    pub accessory_capacity_per_day: f64,
    /// Accessory unit cost as a fraction of the owning product's unit cost.
    #[serde(default = "default_accessory_cost_ratio")]
    pub accessory_cost_ratio: f64,
    /// Piece rates of the three shifts, currency per unit.
    pub labor_rates: Vec<f64>,
    #[serde(default = "default_lead_days")]
    pub material_lead_days: u32,
    #[serde(default)]
    pub initial_accessory_inventory: BTreeMap<ProductId, f64>,
    pub machines: Vec<Machine>,
    pub molds: Vec<Mold>,
    pub products: Vec<Product>,
    pub orders: Vec<Order>,
}

/// A field-level validation failure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationIssue {
    pub field: String,
    pub message: String,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("unknown {kind} id '{id}'")]
    UnknownId { kind: &'static str, id: String },
    #[error("product '{product}' cannot run on machine '{machine}'")]
    IncompatiblePair {
        machine: MachineId,
        product: ProductId,
    },
}

/// Validated, immutable problem instance.
#[derive(Debug, Clone)]
pub struct Scenario {
    data: ScenarioData,
    machine_index: HashMap<MachineId, usize>,
    mold_index: HashMap<MoldId, usize>,
    product_index: HashMap<ProductId, usize>,
    order_index: HashMap<OrderId, usize>,
}

impl PartialEq for Scenario {
    fn eq(&self, other: &Self) -> bool {
        self.data == other.data
    }
}

fn index_of<K>(
    keys: impl Iterator<Item = K>,
    kind: &str,
    issues: &mut Vec<ValidationIssue>,
) -> HashMap<K, usize>
where
    K: Clone + Eq + std::hash::Hash + fmt::Display,
{
    let mut map = HashMap::new();
    for (i, key) in keys.enumerate() {
        if map.insert(key.clone(), i).is_some() {
            issues.push(ValidationIssue {
                field: format!("{kind}s[{i}].id"),
                message: format!("duplicate {kind} id '{key}'"),
            });
        }
    }
    map
}

impl Scenario {
    /// Validates `data` and builds the lookup tables. Every problem found is
    /// reported, not just the first.
    pub fn new(data: ScenarioData) -> Result<Self, Vec<ValidationIssue>> {
        let mut issues = Vec::new();
        let machine_index = index_of(
            data.machines.iter().map(|m| m.id.clone()),
            "machine",
            &mut issues,
        );
        let mold_index = index_of(data.molds.iter().map(|m| m.id.clone()), "mold", &mut issues);
        let product_index = index_of(
            data.products.iter().map(|p| p.id.clone()),
            "product",
            &mut issues,
        );
        let order_index = index_of(
            data.orders.iter().map(|o| o.id.clone()),
            "order",
            &mut issues,
        );

        let mut issue =
            |field: String, message: String| issues.push(ValidationIssue { field, message });

        if data.horizon_days < 1 {
            issue("horizon_days".into(), "must be at least 1".into());
        }
        if data.labor_rates.len() != 3 {
            issue(
                "labor_rates".into(),
                format!(
                    "expected exactly 3 shift rates, found {}",
                    data.labor_rates.len()
                ),
            );
        }
        for (i, r) in data.labor_rates.iter().enumerate() {
            if !(r.is_finite() && *r >= 0.0) {
                issue(
                    format!("labor_rates[{i}]"),
                    "must be a non-negative number".into(),
                );
            }
        }
        if !(data.accessory_capacity_per_day.is_finite() && data.accessory_capacity_per_day >= 0.0)
        {
            issue(
                "accessory_capacity_per_day".into(),
                "must be non-negative".into(),
            );
        }
        if !(data.accessory_cost_ratio.is_finite() && data.accessory_cost_ratio >= 0.0) {
            issue("accessory_cost_ratio".into(), "must be non-negative".into());
        }

        for m in &data.machines {
            let at = |f: &str| format!("machine '{}'.{f}", m.id);
            if !(m.day_hours.is_finite() && m.day_hours > 0.0) {
                issue(at("day_hours"), "must be positive".into());
            }
            if !(m.mold_change_hours >= 0.0 && m.mold_change_hours < m.day_hours) {
                issue(at("mold_change_hours"), "must lie in [0, day_hours)".into());
            }
            if !(m.unit_time_default.is_finite() && m.unit_time_default > 0.0) {
                issue(at("unit_time_default"), "must be positive".into());
            }
            if let Some(k) = &m.initial_mold {
                match mold_index.get(k) {
                    None => issue(at("initial_mold"), format!("unknown mold '{k}'")),
                    Some(&ki) if !data.molds[ki].compatible_machines.contains(&m.id) => issue(
                        at("initial_mold"),
                        format!("mold '{k}' does not fit this machine"),
                    ),
                    _ => {}
                }
            }
        }

        for k in &data.molds {
            let at = |f: &str| format!("mold '{}'.{f}", k.id);
            if k.compatible_machines.is_empty() {
                issue(at("compatible_machines"), "must not be empty".into());
            }
            if k.producible_products.is_empty() {
                issue(at("producible_products"), "must not be empty".into());
            }
            for m in &k.compatible_machines {
                if !machine_index.contains_key(m) {
                    issue(at("compatible_machines"), format!("unknown machine '{m}'"));
                }
            }
            for p in &k.producible_products {
                if !product_index.contains_key(p) {
                    issue(at("producible_products"), format!("unknown product '{p}'"));
                }
            }
        }

        for p in &data.products {
            let at = |f: &str| format!("product '{}'.{f}", p.id);
            match mold_index.get(&p.mold) {
                None => issue(at("mold"), format!("unknown mold '{}'", p.mold)),
                Some(&ki) => {
                    if !data.molds[ki].producible_products.contains(&p.id) {
                        issue(
                            at("mold"),
                            format!("mold '{}' does not list this product", p.mold),
                        );
                    }
                }
            }
            if !(p.unit_cost.is_finite() && p.unit_cost >= 0.0) {
                issue(at("unit_cost"), "must be non-negative".into());
            }
            if !(p.accessory_per_unit.is_finite() && p.accessory_per_unit >= 0.0) {
                issue(at("accessory_per_unit"), "must be non-negative".into());
            }
            if let Some(u) = p.big_m_cap {
                if !(u.is_finite() && u > 0.0) {
                    issue(at("big_m_cap"), "must be positive".into());
                }
            }
            for (m, t) in &p.unit_time_overrides {
                if !machine_index.contains_key(m) {
                    issue(at("unit_time_overrides"), format!("unknown machine '{m}'"));
                }
                if !(t.is_finite() && *t > 0.0) {
                    issue(
                        at("unit_time_overrides"),
                        format!("unit time for '{m}' must be positive"),
                    );
                }
            }
        }

        for o in &data.orders {
            let at = |f: &str| format!("order '{}'.{f}", o.id);
            if !product_index.contains_key(&o.product) {
                issue(at("product"), format!("unknown product '{}'", o.product));
            }
            if !(o.quantity.is_finite() && o.quantity > 0.0) {
                issue(at("quantity"), "must be positive".into());
            }
            if o.release_day < 1 {
                issue(at("release_day"), "must be at least 1".into());
            }
            if o.release_day > o.due_day {
                issue(
                    at("due_day"),
                    format!(
                        "due day {} precedes release day {}",
                        o.due_day, o.release_day
                    ),
                );
            }
            if o.due_day > data.horizon_days {
                issue(
                    at("due_day"),
                    format!(
                        "due day {} exceeds horizon {}",
                        o.due_day, data.horizon_days
                    ),
                );
            }
            for (name, v) in [
                ("unit_revenue", o.unit_revenue),
                ("unit_delay_penalty", o.unit_delay_penalty),
                ("unit_outsourcing_cost", o.unit_outsourcing_cost),
            ] {
                if !(v.is_finite() && v >= 0.0) {
                    issue(at(name), "must be non-negative".into());
                }
            }
        }

        for (p, v) in &data.initial_accessory_inventory {
            if !product_index.contains_key(p) {
                issue(
                    "initial_accessory_inventory".into(),
                    format!("unknown product '{p}'"),
                );
            }
            if !(v.is_finite() && *v >= 0.0) {
                issue(
                    "initial_accessory_inventory".into(),
                    format!("inventory of '{p}' must be non-negative"),
                );
            }
        }

        if issues.is_empty() {
            Ok(Self {
                data,
                machine_index,
                mold_index,
                product_index,
                order_index,
            })
        } else {
            Err(issues)
        }
    }

    pub fn data(&self) -> &ScenarioData {
        &self.data
    }

    pub fn into_data(self) -> ScenarioData {
        self.data
    }

    pub fn horizon_days(&self) -> u32 {
        self.data.horizon_days
    }

    pub fn machines(&self) -> &[Machine] {
        &self.data.machines
    }

    pub fn molds(&self) -> &[Mold] {
        &self.data.molds
    }

    pub fn products(&self) -> &[Product] {
        &self.data.products
    }

    pub fn orders(&self) -> &[Order] {
        &self.data.orders
    }

    pub fn machine_index(&self, id: &MachineId) -> Option<usize> {
        self.machine_index.get(id).copied()
    }

    pub fn mold_index(&self, id: &MoldId) -> Option<usize> {
        self.mold_index.get(id).copied()
    }

    pub fn product_index(&self, id: &ProductId) -> Option<usize> {
        self.product_index.get(id).copied()
    }

    pub fn order_index(&self, id: &OrderId) -> Option<usize> {
        self.order_index.get(id).copied()
    }

    pub fn machine(&self, id: &MachineId) -> Result<&Machine, DomainError> {
        self.machine_index(id)
            .map(|i| &self.data.machines[i])
            .ok_or_else(|| DomainError::UnknownId {
                kind: "machine",
                id: id.to_string(),
            })
    }

    pub fn mold(&self, id: &MoldId) -> Result<&Mold, DomainError> {
        self.mold_index(id)
            .map(|i| &self.data.molds[i])
            .ok_or_else(|| DomainError::UnknownId {
                kind: "mold",
                id: id.to_string(),
            })
    }

    pub fn product(&self, id: &ProductId) -> Result<&Product, DomainError> {
        self.product_index(id)
            .map(|i| &self.data.products[i])
            .ok_or_else(|| DomainError::UnknownId {
                kind: "product",
                id: id.to_string(),
            })
    }

    pub fn order(&self, id: &OrderId) -> Result<&Order, DomainError> {
        self.order_index(id)
            .map(|i| &self.data.orders[i])
            .ok_or_else(|| DomainError::UnknownId {
                kind: "order",
                id: id.to_string(),
            })
    }

    /// Mean of the three shift piece rates; labor is charged per produced unit
    /// at this rate.
    pub fn effective_labor_rate(&self) -> f64 {
        let rates = &self.data.labor_rates;
        rates.iter().sum::<f64>() / rates.len() as f64
    }

    pub fn accessory_unit_cost(&self, product: &Product) -> f64 {
        self.data.accessory_cost_ratio * product.unit_cost
    }

    pub fn accessory_capacity_per_day(&self) -> f64 {
        self.data.accessory_capacity_per_day
    }

    pub fn material_lead_days(&self) -> u32 {
        self.data.material_lead_days
    }

    pub fn initial_accessory_inventory(&self, product: &ProductId) -> f64 {
        self.data
            .initial_accessory_inventory
            .get(product)
            .copied()
            .unwrap_or(0.0)
    }

    /// True iff `mold` lists `machine` and `product` (a·b = 1).
    pub fn mold_supports(&self, mold: &Mold, machine: &MachineId, product: &ProductId) -> bool {
        mold.compatible_machines.contains(machine) && mold.producible_products.contains(product)
    }

    /// Γ for a (product, machine) pair, collapsed through the product's mold.
    pub fn product_fits_machine(&self, product: &Product, machine: &MachineId) -> bool {
        self.mold(&product.mold)
            .map(|k| self.mold_supports(k, machine, &product.id))
            .unwrap_or(false)
    }

    /// Whether `order` may be processed on `machine`.
    pub fn is_compatible(&self, order: &OrderId, machine: &MachineId) -> Result<bool, DomainError> {
        let order = self.order(order)?;
        self.machine(machine)?;
        let product = self.product(&order.product)?;
        Ok(self.product_fits_machine(product, machine))
    }

    /// Processing time of one unit of `product` on `machine`.
    pub fn unit_time(&self, machine: &MachineId, product: &ProductId) -> Result<f64, DomainError> {
        let m = self.machine(machine)?;
        let p = self.product(product)?;
        if !self.product_fits_machine(p, machine) {
            return Err(DomainError::IncompatiblePair {
                machine: machine.clone(),
                product: product.clone(),
            });
        }
        Ok(unit_time(m, p))
    }

    /// Total ordered quantity of a product over the whole horizon.
    pub fn total_demand(&self, product: &ProductId) -> f64 {
        self.data
            .orders
            .iter()
            .filter(|o| &o.product == product)
            .map(|o| o.quantity)
            .sum()
    }

    /// Big-M bound U_f for `y[m,f,d]`: the smaller of the product's total
    /// demand and the whole-unit output of its fastest compatible machine
    /// over the horizon.
    pub fn big_m(&self, product: &Product) -> f64 {
        if let Some(u) = product.big_m_cap {
            return u;
        }
        let per_day = self
            .data
            .machines
            .iter()
            .filter(|m| self.product_fits_machine(product, &m.id))
            .map(|m| m.day_hours / unit_time(m, product))
            .fold(0.0_f64, f64::max);
        let per_horizon = (per_day + 1e-9).floor() * f64::from(self.data.horizon_days);
        self.total_demand(&product.id).min(per_horizon)
    }

    /// Largest ratio, over day intervals and machine compatibility classes,
    /// of the demand that must be produced inside the interval to the
    /// effective capacity of the interval. An order must be produced inside
    /// an interval when its release-to-due window, clipped to the first
    /// producible day, lies within it. A class is the machine set of one
    /// mold, or all molding machines. Each machine-day is charged one mold
    /// change.
    pub fn peak_load(&self) -> f64 {
        let first = self.data.material_lead_days + 1;
        let mut classes: BTreeSet<BTreeSet<usize>> = BTreeSet::new();
        let mut class_of: BTreeMap<&ProductId, BTreeSet<usize>> = BTreeMap::new();
        for p in &self.data.products {
            let set: BTreeSet<usize> = self
                .data
                .machines
                .iter()
                .enumerate()
                .filter(|(_, m)| self.product_fits_machine(p, &m.id))
                .map(|(i, _)| i)
                .collect();
            classes.insert(set.clone());
            class_of.insert(&p.id, set);
        }
        let all: BTreeSet<usize> = class_of.values().flatten().copied().collect();
        classes.insert(all);
        let mut peak = 0.0_f64;
        for class in &classes {
            let per_day: f64 = class
                .iter()
                .map(|&i| {
                    let m = &self.data.machines[i];
                    effective_capacity(m, 1) / m.unit_time_default
                })
                .sum();
            let orders: Vec<(Day, Day, f64)> = self
                .data
                .orders
                .iter()
                .filter(|o| class_of.get(&o.product).is_some_and(|c| c.is_subset(class)))
                .map(|o| (o.release_day.max(first), o.due_day, o.quantity))
                .collect();
            for d1 in first..=self.data.horizon_days {
                for d2 in d1..=self.data.horizon_days {
                    let due: f64 = orders
                        .iter()
                        .filter(|&&(r, l, _)| r >= d1 && l <= d2 || l < r && l >= d1 && l <= d2)
                        .map(|&(_, _, q)| q)
                        .sum();
                    if due <= 0.0 {
                        continue;
                    }
                    let cap = per_day * f64::from(d2 + 1 - d1);
                    peak = peak.max(if cap > 0.0 { due / cap } else { f64::INFINITY });
                }
            }
        }
        peak
    }

    /// Machines grouped by family, in first-appearance order of the group.
    pub fn groups(&self) -> Vec<(MachineGroup, Vec<usize>)> {
        let mut groups: Vec<(MachineGroup, Vec<usize>)> = Vec::new();
        for (i, m) in self.data.machines.iter().enumerate() {
            match groups.iter_mut().find(|(g, _)| g == &m.group) {
                Some((_, members)) => members.push(i),
                None => groups.push((m.group.clone(), vec![i])),
            }
        }
        groups
    }

    /// Collapses every machine group into one pseudo-machine with pooled
    /// hours and no changeover loss. Product unit times on a pseudo-machine
    /// are set so that its pooled hours yield exactly the summed unit
    /// capacity of the group's compatible members.
    pub fn aggregate_by_group(&self) -> Scenario {
        let groups = self.groups();
        let group_id = |g: &MachineGroup| MachineId::new(g.name());
        let mut machines = Vec::new();
        let mut member_of: HashMap<MachineId, MachineId> = HashMap::new();
        for (g, members) in &groups {
            let hours: f64 = members
                .iter()
                .map(|&i| self.data.machines[i].day_hours)
                .sum();
            let units: f64 = members
                .iter()
                .map(|&i| {
                    let m = &self.data.machines[i];
                    m.day_hours / m.unit_time_default
                })
                .sum();
            for &i in members {
                member_of.insert(self.data.machines[i].id.clone(), group_id(g));
            }
            machines.push(Machine {
                id: group_id(g),
                group: g.clone(),
                day_hours: hours,
                mold_change_hours: 0.0,
                unit_time_default: hours / units,
                initial_mold: None,
            });
        }
        let molds = self
            .data
            .molds
            .iter()
            .map(|k| Mold {
                id: k.id.clone(),
                compatible_machines: k
                    .compatible_machines
                    .iter()
                    .filter_map(|m| member_of.get(m).cloned())
                    .collect(),
                producible_products: k.producible_products.clone(),
            })
            .collect();
        let products = self
            .data
            .products
            .iter()
            .map(|p| {
                let mut overrides = BTreeMap::new();
                for (g, members) in &groups {
                    let compatible: Vec<&Machine> = members
                        .iter()
                        .map(|&i| &self.data.machines[i])
                        .filter(|m| self.product_fits_machine(p, &m.id))
                        .collect();
                    if compatible.is_empty() {
                        continue;
                    }
                    let hours: f64 = members
                        .iter()
                        .map(|&i| self.data.machines[i].day_hours)
                        .sum();
                    let units: f64 = compatible
                        .iter()
                        .map(|m| m.day_hours / unit_time(m, p))
                        .sum();
                    overrides.insert(group_id(g), hours / units);
                }
                Product {
                    unit_time_overrides: overrides,
                    big_m_cap: None,
                    ..p.clone()
                }
            })
            .collect();
        let data = ScenarioData {
            machines,
            molds,
            products,
            ..self.data.clone()
        };
        Scenario::new(data).expect("aggregation preserves validity")
    }
}

/// Remaining productive hours after `n_changeovers` mold changes.
pub fn effective_capacity(machine: &Machine, n_changeovers: u32) -> f64 {
    (machine.day_hours - f64::from(n_changeovers) * machine.mold_change_hours).max(0.0)
}

/// Hours per unit; the product override for this machine wins over the
/// machine default. Compatibility is not checked here.
pub fn unit_time(machine: &Machine, product: &Product) -> f64 {
    product
        .unit_time_overrides
        .get(&machine.id)
        .copied()
        .unwrap_or(machine.unit_time_default)
}

/// Execution scheme of the scheduling layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    /// Allocation at machine-group level, no changeovers.
    A,
    /// Machine level, several molds per day with explicit changeovers.
    B,
    /// Machine level, one dedicated mold per machine per day.
    C,
    /// No planning layer; due-date dispatching only.
    GreedyNoPlan,
}

impl Scheme {
    pub fn label(self) -> &'static str {
        match self {
            Scheme::A => "A",
            Scheme::B => "B",
            Scheme::C => "C",
            Scheme::GreedyNoPlan => "greedy",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" | "a" => Ok(Scheme::A),
            "B" | "b" => Ok(Scheme::B),
            "C" | "c" => Ok(Scheme::C),
            "greedy" | "Greedy" | "GreedyNoPlan" => Ok(Scheme::GreedyNoPlan),
            other => Err(format!(
                "unknown scheme '{other}' (expected A, B, C or greedy)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    /// Upper bound on molds per machine-day under scheme B.
    pub max_molds_per_day: u32,
    pub window_days: u32,
    pub step_days: u32,
    pub solver_limits: MilpLimits,
    /// Sort equal due dates by descending delay penalty instead of ascending.
    pub penalty_descending: bool,
}

impl SchemeConfig {
    pub fn new(scheme: Scheme) -> Self {
        Self {
            scheme,
            max_molds_per_day: 3,
            window_days: 30,
            step_days: 30,
            solver_limits: MilpLimits::planning_default(),
            penalty_descending: false,
        }
    }

    pub fn with_window(mut self, window_days: u32, step_days: u32) -> Self {
        self.window_days = window_days;
        self.step_days = step_days;
        self
    }

    /// Checks the configuration against a horizon. Window and step are
    /// clipped to the horizon first, so a 30-day default works on shorter
    /// scenarios.
    pub fn validate(&self, horizon: u32) -> Result<(), String> {
        if self.max_molds_per_day < 1 {
            return Err("max_molds_per_day must be at least 1".into());
        }
        let window = self.window_days.min(horizon);
        let step = self.step_days.min(window);
        if step < 1 || window < 1 {
            return Err("window_days and step_days must be at least 1".into());
        }
        if self.step_days > self.window_days {
            return Err(format!(
                "step_days {} exceeds window_days {}",
                self.step_days, self.window_days
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gt(id: &str, group: MachineGroup, daily_units: f64) -> Machine {
        Machine {
            id: id.into(),
            group,
            day_hours: 24.0,
            mold_change_hours: 5.0,
            unit_time_default: 24.0 / daily_units,
            initial_mold: None,
        }
    }

    fn tiny() -> ScenarioData {
        ScenarioData {
            horizon_days: 10,
            accessory_capacity_per_day: 3000.0,
            accessory_cost_ratio: 0.2,
            labor_rates: vec![0.10, 0.12, 0.15],
            material_lead_days: 3,
            initial_accessory_inventory: BTreeMap::new(),
            machines: vec![
                gt("M150", MachineGroup::G150, 4800.0),
                gt("M130", MachineGroup::G130, 3000.0),
            ],
            molds: vec![
                Mold {
                    id: "K-tpu".into(),
                    compatible_machines: ["M150".into(), "M130".into()].into(),
                    producible_products: ["TPU".into()].into(),
                },
                Mold {
                    id: "K-sil".into(),
                    compatible_machines: ["M150".into()].into(),
                    producible_products: ["SIL".into()].into(),
                },
            ],
            products: vec![
                Product {
                    id: "TPU".into(),
                    mold: "K-tpu".into(),
                    unit_cost: 0.1,
                    accessory_per_unit: 0.0,
                    big_m_cap: None,
                    unit_time_overrides: BTreeMap::new(),
                },
                Product {
                    id: "SIL".into(),
                    mold: "K-sil".into(),
                    unit_cost: 0.1,
                    accessory_per_unit: 1.0,
                    big_m_cap: None,
                    unit_time_overrides: [(MachineId::from("M150"), 0.01)].into(),
                },
            ],
            orders: vec![Order {
                id: "O1".into(),
                product: "TPU".into(),
                quantity: 100.0,
                release_day: 4,
                due_day: 8,
                unit_revenue: 1.0,
                unit_delay_penalty: 1.0,
                unit_outsourcing_cost: 0.5,
            }],
        }
    }

    #[test]
    fn effective_capacity_examples() {
        let m = gt("M", MachineGroup::G150, 4800.0);
        assert_eq!(effective_capacity(&m, 1), 19.0);
        assert_eq!(effective_capacity(&m, 0), 24.0);
        assert_eq!(effective_capacity(&m, 5), 0.0);
    }

    #[test]
    fn effective_capacity_is_monotone_and_non_negative() {
        let m = gt("M", MachineGroup::G150, 4800.0);
        let mut prev = f64::INFINITY;
        for n in 0..10 {
            let c = effective_capacity(&m, n);
            assert!(c >= 0.0 && c <= prev);
            prev = c;
        }
    }

    #[test]
    fn unit_time_from_daily_capacity_and_override() {
        let s = Scenario::new(tiny()).unwrap();
        let t150 = s.unit_time(&"M150".into(), &"TPU".into()).unwrap();
        let t130 = s.unit_time(&"M130".into(), &"TPU".into()).unwrap();
        assert!((t150 - 0.005).abs() < 1e-15);
        assert!((t130 - 0.008).abs() < 1e-15);
        assert_eq!(s.unit_time(&"M150".into(), &"SIL".into()).unwrap(), 0.01);
        assert_eq!(
            s.unit_time(&"M130".into(), &"SIL".into()),
            Err(DomainError::IncompatiblePair {
                machine: "M130".into(),
                product: "SIL".into()
            })
        );
    }

    #[test]
    fn compatibility_through_mold() {
        let s = Scenario::new(tiny()).unwrap();
        assert!(s.is_compatible(&"O1".into(), &"M130".into()).unwrap());
        assert!(s.is_compatible(&"O1".into(), &"M150".into()).unwrap());
        let mut d = tiny();
        d.orders[0].product = "SIL".into();
        let s = Scenario::new(d).unwrap();
        assert!(!s.is_compatible(&"O1".into(), &"M130".into()).unwrap());
        assert!(matches!(
            s.is_compatible(&"nope".into(), &"M130".into()),
            Err(DomainError::UnknownId { .. })
        ));
    }

    #[test]
    fn validation_reports_every_issue() {
        let mut d = tiny();
        d.orders[0].due_day = 11;
        d.products[0].mold = "missing".into();
        d.labor_rates.pop();
        let issues = Scenario::new(d).unwrap_err();
        let fields: Vec<_> = issues.iter().map(|i| i.field.as_str()).collect();
        assert!(fields.contains(&"order 'O1'.due_day"), "{fields:?}");
        assert!(fields.contains(&"product 'TPU'.mold"), "{fields:?}");
        assert!(fields.contains(&"labor_rates"), "{fields:?}");
    }

    #[test]
    fn big_m_is_min_of_demand_and_horizon_capacity() {
        let s = Scenario::new(tiny()).unwrap();
        assert_eq!(s.big_m(&s.products()[0]), 100.0);
        let mut d = tiny();
        d.orders[0].quantity = 1e6;
        let s = Scenario::new(d).unwrap();
        assert!((s.big_m(&s.products()[0]) - 48000.0).abs() < 1e-9);
    }

    #[test]
    fn aggregation_pools_groups() {
        let s = Scenario::new(tiny()).unwrap().aggregate_by_group();
        assert_eq!(s.machines().len(), 2);
        let g150 = s.machine(&"G150".into()).unwrap();
        assert_eq!(g150.mold_change_hours, 0.0);
        assert!(
            (g150.day_hours / s.unit_time(&"G150".into(), &"TPU".into()).unwrap() - 4800.0).abs()
                < 1e-9
        );
        assert!(s.is_compatible(&"O1".into(), &"G130".into()).unwrap());
    }

    #[test]
    fn scheme_config_window_rules() {
        let c = SchemeConfig::new(Scheme::C);
        assert!(c.validate(10).is_ok());
        assert!(c.clone().with_window(5, 6).validate(30).is_err());
        let mut b = SchemeConfig::new(Scheme::B);
        b.max_molds_per_day = 0;
        assert!(b.validate(30).is_err());
    }
}
