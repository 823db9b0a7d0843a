//! Scenario files, the seeded case-style generator, and the on-disk formats
//! for envelopes, schedules and reports. Format details are in
//! `docs/formats.md`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    Day, Machine, MachineGroup, MachineId, Mold, MoldId, Order, OrderId, Product, ProductId,
    Scenario, ScenarioData, Scheme, ValidationIssue,
};
use crate::metrics::{ChangeoverRow, CostComposition, Economics, EvaluationReport, Utilization};
use crate::milp::SolveStatus;
use crate::pipeline::RunInfo;
use crate::planner::{PlanEnvelope, SolverInfo};
use crate::scheduler::{Changeover, Schedule};

pub const SCENARIO_FORMAT_VERSION: u32 = 1;
pub const ENVELOPE_FORMAT_VERSION: u32 = 1;
pub const SCHEDULE_FORMAT_VERSION: u32 = 1;
pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{} validation error(s):\n{}", .0.len(), format_issues(.0))]
    Validation(Vec<ValidationIssue>),
    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_issues(issues: &[ValidationIssue]) -> String {
    issues
        .iter()
        .map(|i| format!("  {}: {}", i.field, i.message))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Line and column (both 1-based) of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before
        .rsplit('\n')
        .next()
        .map(|s| s.chars().count())
        .unwrap_or(0)
        + 1;
    (line, column)
}

fn toml_error(text: &str, err: toml::de::Error) -> IoError {
    let (line, column) = err
        .span()
        .map(|s| line_col(text, s.start))
        .unwrap_or((0, 0));
    IoError::Parse {
        line,
        column,
        message: err.message().to_string(),
    }
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: Option<u32>,
}

/// Parses and validates a scenario file.
pub fn parse_scenario(text: &str) -> Result<Scenario, IoError> {
    let probe: VersionProbe = toml::from_str(text).map_err(|e| toml_error(text, e))?;
    match probe.format_version {
        Some(SCENARIO_FORMAT_VERSION) => {}
        Some(found) => {
            return Err(IoError::VersionMismatch {
                found,
                expected: SCENARIO_FORMAT_VERSION,
            })
        }
        None => {
            return Err(IoError::Parse {
                line: 1,
                column: 1,
                message: "missing field `format_version`".into(),
            })
        }
    }
    let data: ScenarioData = toml::from_str(text).map_err(|e| toml_error(text, e))?;
    Scenario::new(data).map_err(IoError::Validation)
}

pub fn load_scenario(path: &Path) -> Result<Scenario, IoError> {
    parse_scenario(&std::fs::read_to_string(path)?)
}

pub fn scenario_to_string(data: &ScenarioData) -> String {
    let body = toml::to_string(data).expect("scenario data is always representable");
    format!("format_version = {SCENARIO_FORMAT_VERSION}\n{body}")
}

#[derive(Debug, Error, PartialEq)]
pub enum GeneratorError {
    #[error("infeasible generator spec: {0}")]
    InfeasibleSpec(String),
}

/// Parameters of the synthetic case-plant generator. `scale = 1.0` gives
/// the full fleet of 8 G150, 4 G130 and 2 CNC machines.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub seed: u64,
    pub scale: f64,
    pub n_products: usize,
    pub n_orders: usize,
    pub horizon_days: u32,
    /// Total ordered units. `None` uses `load_factor` of the molding
    /// capacity over the producible days.
    pub demand_total: Option<f64>,
    pub load_factor: f64,
    /// Share of orders whose due day is pulled to a month end.
    pub due_clustering: f64,
    /// Share of products that need one accessory per unit.
    pub accessory_fraction: f64,
    /// G150 machines fitted with GT130 adapters. `None` uses `round(2 * scale)`, at least one.
    pub adapters: Option<usize>,
    pub cnc_units_per_day: f64,
    pub min_window_days: u32,
    pub max_window_days: u32,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            scale: 1.0,
            n_products: 37,
            n_orders: 150,
            horizon_days: 240,
            demand_total: None,
            load_factor: 0.6,
            due_clustering: 0.3,
            accessory_fraction: 0.3,
            adapters: None,
            cnc_units_per_day: 3000.0,
            min_window_days: 3,
            max_window_days: 10,
        }
    }
}

impl GeneratorSpec {
    /// Desk-scale instance: a quarter of the fleet, 12 products, 30 orders
    /// over 30 days.
    pub fn desk(seed: u64) -> Self {
        Self {
            seed,
            scale: 0.25,
            n_products: 12,
            n_orders: 30,
            horizon_days: 30,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<(), GeneratorError> {
        let bad = |m: String| Err(GeneratorError::InfeasibleSpec(m));
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return bad(format!("scale must be positive, got {}", self.scale));
        }
        if self.n_products < 1 || self.n_orders < 1 {
            return bad("product and order counts must be at least 1".into());
        }
        for (name, v) in [
            ("due_clustering", self.due_clustering),
            ("accessory_fraction", self.accessory_fraction),
            ("load_factor", self.load_factor),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if let Some(d) = self.demand_total {
            if !(d.is_finite() && d >= self.n_orders as f64) {
                return bad(format!(
                    "demand_total {d} must give every order at least one unit"
                ));
            }
        }
        if self.min_window_days < 1 || self.min_window_days > self.max_window_days {
            return bad("window bounds must satisfy 1 <= min <= max".into());
        }
        if self.horizon_days < LEAD_DAYS + self.min_window_days {
            return bad(format!(
                "horizon {} leaves no delivery window after the {LEAD_DAYS}-day material lead time",
                self.horizon_days
            ));
        }
        if !(self.cnc_units_per_day.is_finite() && self.cnc_units_per_day > 0.0) {
            return bad("cnc_units_per_day must be positive".into());
        }
        Ok(())
    }
}

const LEAD_DAYS: u32 = 3;
const G150_UNITS: f64 = 4800.0;
const G130_UNITS: f64 = 3000.0;
const CHANGE_HOURS: f64 = 5.0;
const LABOR_RATES: [f64; 3] = [0.10, 0.12, 0.15];

fn machine(id: String, group: MachineGroup, units: f64, change: f64) -> Machine {
    Machine {
        id: id.into(),
        group,
        day_hours: 24.0,
        mold_change_hours: change,
        unit_time_default: 24.0 / units,
        initial_mold: None,
    }
}

fn round_count(n: f64) -> usize {
    n.round().max(0.0) as usize
}

/// Builds a case-style scenario. Monetary parameters are drawn so that
/// in-house production beats outsourcing, which in turn beats shortfall:
/// `c + labor < gamma < R - c`, `R > 2c + labor` and `pi > gamma`.
pub fn generate_case_scenario(spec: &GeneratorSpec) -> Result<Scenario, GeneratorError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n150 = round_count(8.0 * spec.scale);
    let n130 = round_count(4.0 * spec.scale);
    let ncnc = round_count(2.0 * spec.scale);
    if n150 == 0 {
        return Err(GeneratorError::InfeasibleSpec(format!(
            "scale {} leaves no G150 machines for silicone products",
            spec.scale
        )));
    }
    let adapters = spec
        .adapters
        .unwrap_or_else(|| round_count(2.0 * spec.scale).max(1))
        .min(n150);
    if n130 == 0 && adapters == 0 {
        return Err(GeneratorError::InfeasibleSpec(
            "no machine can run GT130 molds".into(),
        ));
    }

    let mut machines = Vec::new();
    let g150: Vec<MachineId> = (1..=n150)
        .map(|i| MachineId::new(format!("G150-{i:02}")))
        .collect();
    let g130: Vec<MachineId> = (1..=n130)
        .map(|i| MachineId::new(format!("G130-{i:02}")))
        .collect();
    for id in &g150 {
        machines.push(machine(
            id.to_string(),
            MachineGroup::G150,
            G150_UNITS,
            CHANGE_HOURS,
        ));
    }
    for id in &g130 {
        machines.push(machine(
            id.to_string(),
            MachineGroup::G130,
            G130_UNITS,
            CHANGE_HOURS,
        ));
    }
    for i in 1..=ncnc {
        machines.push(machine(
            format!("CNC-{i:02}"),
            MachineGroup::Cnc,
            spec.cnc_units_per_day,
            0.0,
        ));
    }

    // GT130 molds run on G130 machines and on adapter-fitted G150s.
    let cap150 = n150 as f64 * G150_UNITS;
    let cap130 = n130 as f64 * G130_UNITS;
    let tpu_share = (cap130 + adapters as f64 * G150_UNITS * 0.5) / (cap150 + cap130);
    let mut molds = Vec::new();
    let mut products = Vec::new();
    for i in 1..=spec.n_products {
        let pid = ProductId::new(format!("F{i:02}"));
        let kid = MoldId::new(format!("K{i:02}"));
        let tpu = if n130 == 0 && adapters == 0 {
            false
        } else {
            rng.gen_bool(tpu_share.clamp(0.0, 1.0))
        };
        let compatible: BTreeSet<MachineId> = if tpu {
            g130.iter()
                .chain(g150.iter().take(adapters))
                .cloned()
                .collect()
        } else {
            g150.iter().cloned().collect()
        };
        molds.push(Mold {
            id: kid.clone(),
            compatible_machines: compatible,
            producible_products: [pid.clone()].into(),
        });
        let unit_cost = (rng.gen_range(0.20..0.60_f64) * 100.0).round() / 100.0;
        let accessory = if rng.gen_bool(spec.accessory_fraction) {
            1.0
        } else {
            0.0
        };
        products.push(Product {
            id: pid,
            mold: kid,
            unit_cost,
            accessory_per_unit: accessory,
            big_m_cap: None,
            unit_time_overrides: BTreeMap::new(),
        });
    }

    let h = spec.horizon_days;
    let producible_days = f64::from(h - LEAD_DAYS);
    let demand_total = spec.demand_total.unwrap_or_else(|| {
        (spec.load_factor * (cap150 + cap130) * producible_days)
            .round()
            .max(spec.n_orders as f64)
    });

    let labor = LABOR_RATES.iter().sum::<f64>() / 3.0;
    let earliest_due = LEAD_DAYS + spec.min_window_days;
    let month_ends: Vec<u32> = (1..).map(|k| 30 * k).take_while(|&d| d <= h).collect();
    let mut weights = Vec::with_capacity(spec.n_orders);
    let mut orders = Vec::with_capacity(spec.n_orders);
    for i in 0..spec.n_orders {
        let product = if i < spec.n_products {
            i
        } else {
            rng.gen_range(0..spec.n_products)
        };
        let due = if !month_ends.is_empty() && rng.gen_bool(spec.due_clustering) {
            let end = month_ends[rng.gen_range(0..month_ends.len())];
            end.saturating_sub(rng.gen_range(0..3)).max(earliest_due)
        } else {
            rng.gen_range(earliest_due..=h)
        };
        let span = rng.gen_range(spec.min_window_days..=spec.max_window_days);
        let release = (due + 1).saturating_sub(span).max(1);
        let c = products[product].unit_cost;
        let revenue = round2(2.0 * c + labor + c * rng.gen_range(0.3..1.0));
        let margin = revenue - 2.0 * c - labor;
        let gamma = round2(c + labor + margin * rng.gen_range(0.15..0.85));
        let penalty = round2(gamma * rng.gen_range(1.1..1.6));
        weights.push(rng.gen_range(0.5..1.5_f64));
        orders.push(Order {
            id: format!("O{:03}", i + 1).into(),
            product: products[product].id.clone(),
            quantity: 0.0,
            release_day: release,
            due_day: due,
            unit_revenue: revenue,
            unit_delay_penalty: penalty,
            unit_outsourcing_cost: gamma,
        });
    }
    let wsum: f64 = weights.iter().sum();
    let mut assigned = 0.0;
    let last = orders.len() - 1;
    for (o, w) in orders.iter_mut().zip(&weights).take(last) {
        o.quantity = (demand_total * w / wsum).round().max(1.0);
        assigned += o.quantity;
    }
    orders[last].quantity = (demand_total - assigned).max(1.0);

    let data = ScenarioData {
        horizon_days: h,
        accessory_capacity_per_day: ncnc as f64 * spec.cnc_units_per_day,
        accessory_cost_ratio: 0.2,
        labor_rates: LABOR_RATES.to_vec(),
        material_lead_days: LEAD_DAYS,
        initial_accessory_inventory: BTreeMap::new(),
        machines,
        molds,
        products,
        orders,
    };
    Scenario::new(data).map_err(|issues| GeneratorError::InfeasibleSpec(format_issues(&issues)))
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

// ---------------------------------------------------------------------------
// Envelopes

#[derive(Serialize, Deserialize)]
struct EnvelopeFile {
    format_version: u32,
    envelopes: Vec<EnvelopeRecord>,
}

#[derive(Serialize, Deserialize)]
struct ProductionRow {
    machine: MachineId,
    product: ProductId,
    day: Day,
    units: f64,
}

#[derive(Serialize, Deserialize)]
struct ShipmentRow {
    order: OrderId,
    day: Day,
    units: f64,
}

#[derive(Serialize, Deserialize)]
struct MoldRow {
    machine: MachineId,
    day: Day,
    molds: Vec<MoldId>,
}

#[derive(Serialize, Deserialize)]
struct ProductDayRow {
    product: ProductId,
    day: Day,
    units: f64,
}

#[derive(Serialize, Deserialize)]
struct OrderRow {
    order: OrderId,
    units: f64,
}

#[derive(Serialize, Deserialize)]
struct SolverRecord {
    status: String,
    /// Absent when no bound was available.
    gap: Option<f64>,
    nodes: usize,
    objective: f64,
}

#[derive(Serialize, Deserialize)]
struct EnvelopeRecord {
    scheme: String,
    window: [Day; 2],
    objective: f64,
    solver: SolverRecord,
    y: Vec<ProductionRow>,
    q: Vec<ShipmentRow>,
    x: Vec<MoldRow>,
    p: Vec<ProductDayRow>,
    inventory: Vec<ProductDayRow>,
    outsourced: Vec<OrderRow>,
    shortfall: Vec<OrderRow>,
}

fn parse_status(s: &str) -> Result<SolveStatus, IoError> {
    [
        SolveStatus::Optimal,
        SolveStatus::Feasible,
        SolveStatus::Infeasible,
        SolveStatus::Unbounded,
    ]
    .into_iter()
    .find(|st| st.label() == s)
    .ok_or_else(|| IoError::Format(format!("unknown solver status '{s}'")))
}

fn product_days(map: &BTreeMap<(ProductId, Day), f64>) -> Vec<ProductDayRow> {
    map.iter()
        .map(|((f, d), &units)| ProductDayRow {
            product: f.clone(),
            day: *d,
            units,
        })
        .collect()
}

fn order_rows(map: &BTreeMap<OrderId, f64>) -> Vec<OrderRow> {
    map.iter()
        .map(|(o, &units)| OrderRow {
            order: o.clone(),
            units,
        })
        .collect()
}

impl From<&PlanEnvelope> for EnvelopeRecord {
    fn from(env: &PlanEnvelope) -> Self {
        EnvelopeRecord {
            scheme: env.scheme.label().to_string(),
            window: [env.window.0, env.window.1],
            objective: env.objective,
            solver: SolverRecord {
                status: env.solver.status.label().to_string(),
                gap: env.solver.gap.is_finite().then_some(env.solver.gap),
                nodes: env.solver.nodes,
                objective: env.solver.objective,
            },
            y: env
                .y
                .iter()
                .map(|((m, f, d), &units)| ProductionRow {
                    machine: m.clone(),
                    product: f.clone(),
                    day: *d,
                    units,
                })
                .collect(),
            q: env
                .q
                .iter()
                .map(|((o, d), &units)| ShipmentRow {
                    order: o.clone(),
                    day: *d,
                    units,
                })
                .collect(),
            x: env
                .x
                .iter()
                .map(|((m, d), ks)| MoldRow {
                    machine: m.clone(),
                    day: *d,
                    molds: ks.iter().cloned().collect(),
                })
                .collect(),
            p: product_days(&env.p),
            inventory: product_days(&env.inventory),
            outsourced: order_rows(&env.outsourced),
            shortfall: order_rows(&env.shortfall),
        }
    }
}

impl TryFrom<EnvelopeRecord> for PlanEnvelope {
    type Error = IoError;

    fn try_from(r: EnvelopeRecord) -> Result<Self, IoError> {
        let scheme: Scheme = r.scheme.parse().map_err(IoError::Format)?;
        Ok(PlanEnvelope {
            scheme,
            window: (r.window[0], r.window[1]),
            y: r.y
                .into_iter()
                .map(|p| ((p.machine, p.product, p.day), p.units))
                .collect(),
            q: r.q
                .into_iter()
                .map(|s| ((s.order, s.day), s.units))
                .collect(),
            x: r.x
                .into_iter()
                .map(|m| ((m.machine, m.day), m.molds.into_iter().collect()))
                .collect(),
            p: r.p
                .into_iter()
                .map(|p| ((p.product, p.day), p.units))
                .collect(),
            inventory: r
                .inventory
                .into_iter()
                .map(|p| ((p.product, p.day), p.units))
                .collect(),
            outsourced: r
                .outsourced
                .into_iter()
                .map(|o| (o.order, o.units))
                .collect(),
            shortfall: r
                .shortfall
                .into_iter()
                .map(|o| (o.order, o.units))
                .collect(),
            objective: r.objective,
            solver: SolverInfo {
                status: parse_status(&r.solver.status)?,
                gap: r.solver.gap.unwrap_or(f64::INFINITY),
                nodes: r.solver.nodes,
                objective: r.solver.objective,
            },
        })
    }
}

pub fn envelopes_to_string(envelopes: &[PlanEnvelope]) -> String {
    let file = EnvelopeFile {
        format_version: ENVELOPE_FORMAT_VERSION,
        envelopes: envelopes.iter().map(EnvelopeRecord::from).collect(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("envelopes are always representable");
    text.push('\n');
    text
}

pub fn parse_envelopes(text: &str) -> Result<Vec<PlanEnvelope>, IoError> {
    let json_error = |e: serde_json::Error| IoError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    };
    let probe: VersionProbe = serde_json::from_str(text).map_err(json_error)?;
    check_version(probe.format_version, ENVELOPE_FORMAT_VERSION)?;
    let file: EnvelopeFile = serde_json::from_str(text).map_err(json_error)?;
    file.envelopes
        .into_iter()
        .map(PlanEnvelope::try_from)
        .collect()
}

pub fn load_envelopes(path: &Path) -> Result<Vec<PlanEnvelope>, IoError> {
    parse_envelopes(&std::fs::read_to_string(path)?)
}

fn check_version(found: Option<u32>, expected: u32) -> Result<(), IoError> {
    match found {
        Some(v) if v == expected => Ok(()),
        Some(found) => Err(IoError::VersionMismatch { found, expected }),
        None => Err(IoError::Parse {
            line: 1,
            column: 1,
            message: "missing field `format_version`".into(),
        }),
    }
}

// ---------------------------------------------------------------------------
// Schedules

pub const SCHEDULE_FILE: &str = "schedule.csv";
pub const CHANGEOVERS_FILE: &str = "changeovers.csv";
pub const MOLDS_FILE: &str = "molds.csv";
pub const UNASSIGNED_FILE: &str = "unassigned.csv";
pub const ACCESSORIES_FILE: &str = "accessories.csv";

/// The CSV files that make up a schedule, keyed by file name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleFiles {
    pub files: Vec<(&'static str, String)>,
}

#[derive(Serialize, Deserialize)]
struct AssignmentCsv {
    order: OrderId,
    machine: MachineId,
    day: Day,
    units: f64,
}

#[derive(Serialize, Deserialize)]
struct ChangeoverCsv {
    machine: MachineId,
    day: Day,
    from: Option<MoldId>,
    to: MoldId,
    hours_lost: f64,
}

#[derive(Serialize, Deserialize)]
struct MoldCsv {
    machine: MachineId,
    day: Day,
    position: usize,
    mold: MoldId,
}

#[derive(Serialize, Deserialize)]
struct UnassignedCsv {
    order: OrderId,
    day: Day,
    units: f64,
}

#[derive(Serialize, Deserialize)]
struct AccessoryCsv {
    product: ProductId,
    day: Day,
    units: f64,
}

fn write_csv<T: Serialize>(rows: impl IntoIterator<Item = T>, header: &[&str]) -> String {
    let mut out = format!("# format_version={SCHEDULE_FORMAT_VERSION}\n");
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.serialize(row).expect("in-memory write");
    }
    out.push_str(
        &String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8 fields"),
    );
    out
}

fn read_csv<T: for<'de> Deserialize<'de>>(name: &str, text: &str) -> Result<Vec<T>, IoError> {
    let first = text.lines().next().unwrap_or("");
    let version = first
        .strip_prefix("# format_version=")
        .and_then(|v| v.trim().parse::<u32>().ok());
    check_version(version, SCHEDULE_FORMAT_VERSION).map_err(|e| match e {
        IoError::Parse {
            line,
            column,
            message,
        } => IoError::Parse {
            line,
            column,
            message: format!("{name}: {message}"),
        },
        other => other,
    })?;
    let body = text.split_once('\n').map_or("", |(_, rest)| rest);
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(body.as_bytes());
    r.deserialize()
        .map(|row| {
            row.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize + 1);
                IoError::Parse {
                    line,
                    column: 1,
                    message: format!("{name}: {e}"),
                }
            })
        })
        .collect()
}

pub fn schedule_to_files(schedule: &Schedule) -> ScheduleFiles {
    let assignments = schedule.z.iter().map(|((o, m, d), &units)| AssignmentCsv {
        order: o.clone(),
        machine: m.clone(),
        day: *d,
        units,
    });
    let changeovers = schedule.changeovers.iter().map(|c| ChangeoverCsv {
        machine: c.machine.clone(),
        day: c.day,
        from: c.from.clone(),
        to: c.to.clone(),
        hours_lost: c.hours_lost,
    });
    let molds = schedule.mold_state.iter().flat_map(|((m, d), ks)| {
        ks.iter().enumerate().map(move |(i, k)| MoldCsv {
            machine: m.clone(),
            day: *d,
            position: i + 1,
            mold: k.clone(),
        })
    });
    let unassigned = schedule
        .unassigned
        .iter()
        .map(|((o, d), &units)| UnassignedCsv {
            order: o.clone(),
            day: *d,
            units,
        });
    let accessories = schedule
        .accessory_production
        .iter()
        .map(|((f, d), &units)| AccessoryCsv {
            product: f.clone(),
            day: *d,
            units,
        });
    ScheduleFiles {
        files: vec![
            (
                SCHEDULE_FILE,
                write_csv(assignments, &["order", "machine", "day", "units"]),
            ),
            (
                CHANGEOVERS_FILE,
                write_csv(changeovers, &["machine", "day", "from", "to", "hours_lost"]),
            ),
            (
                MOLDS_FILE,
                write_csv(molds, &["machine", "day", "position", "mold"]),
            ),
            (
                UNASSIGNED_FILE,
                write_csv(unassigned, &["order", "day", "units"]),
            ),
            (
                ACCESSORIES_FILE,
                write_csv(accessories, &["product", "day", "units"]),
            ),
        ],
    }
}

/// Rebuilds a schedule from its files. Every file but the assignments is
/// optional and read as empty when absent.
pub fn schedule_from_files(files: &BTreeMap<&str, String>) -> Result<Schedule, IoError> {
    let mut schedule = Schedule::default();
    let text = files
        .get(SCHEDULE_FILE)
        .ok_or_else(|| IoError::Format(format!("missing {SCHEDULE_FILE}")))?;
    for row in read_csv::<AssignmentCsv>(SCHEDULE_FILE, text)? {
        *schedule
            .z
            .entry((row.order, row.machine, row.day))
            .or_insert(0.0) += row.units;
    }
    if let Some(text) = files.get(CHANGEOVERS_FILE) {
        for row in read_csv::<ChangeoverCsv>(CHANGEOVERS_FILE, text)? {
            schedule.changeovers.push(Changeover {
                machine: row.machine,
                day: row.day,
                from: row.from,
                to: row.to,
                hours_lost: row.hours_lost,
            });
        }
    }
    if let Some(text) = files.get(MOLDS_FILE) {
        let mut rows = read_csv::<MoldCsv>(MOLDS_FILE, text)?;
        rows.sort_by(|a, b| (&a.machine, a.day, a.position).cmp(&(&b.machine, b.day, b.position)));
        for row in rows {
            schedule
                .mold_state
                .entry((row.machine, row.day))
                .or_default()
                .push(row.mold);
        }
    }
    if let Some(text) = files.get(UNASSIGNED_FILE) {
        for row in read_csv::<UnassignedCsv>(UNASSIGNED_FILE, text)? {
            *schedule
                .unassigned
                .entry((row.order, row.day))
                .or_insert(0.0) += row.units;
        }
    }
    if let Some(text) = files.get(ACCESSORIES_FILE) {
        for row in read_csv::<AccessoryCsv>(ACCESSORIES_FILE, text)? {
            *schedule
                .accessory_production
                .entry((row.product, row.day))
                .or_insert(0.0) += row.units;
        }
    }
    Ok(schedule)
}

/// Loads a schedule given its directory or the path of its assignment
/// file; the other files are looked up next to it.
pub fn load_schedule(path: &Path) -> Result<Schedule, IoError> {
    let (dir, main) = if path.is_dir() {
        (path.to_path_buf(), path.join(SCHEDULE_FILE))
    } else {
        (
            path.parent().map(Path::to_path_buf).unwrap_or_default(),
            path.to_path_buf(),
        )
    };
    let mut files = BTreeMap::new();
    files.insert(SCHEDULE_FILE, std::fs::read_to_string(&main)?);
    for name in [
        CHANGEOVERS_FILE,
        MOLDS_FILE,
        UNASSIGNED_FILE,
        ACCESSORIES_FILE,
    ] {
        let p = dir.join(name);
        if p.is_file() {
            files.insert(name, std::fs::read_to_string(p)?);
        }
    }
    schedule_from_files(&files)
}

// ---------------------------------------------------------------------------
// Reports

fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        // Display gives the shortest text that parses back to the same value.
        format!("{}", v + 0.0)
    } else {
        "n/a".into()
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64, IoError> {
    if v == "n/a" {
        return Ok(f64::INFINITY);
    }
    v.parse()
        .map_err(|_| IoError::Format(format!("{key}: '{v}' is not a number")))
}

/// Machine-readable report: one `key=value` per line. Solver and timing
/// lines are present only when `info` is given.
pub fn report_to_kv(report: &EvaluationReport, info: Option<&RunInfo>) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k}={v}");
    };
    kv("format_version", REPORT_FORMAT_VERSION.to_string());
    kv("scheme", report.scheme.label().into());
    kv("orders", report.orders.to_string());
    kv("otd", fmt_f64(report.otd));
    kv("late_orders", report.late_orders.to_string());
    kv("mean_lateness", fmt_f64(report.mean_lateness));
    kv("sync_acc", fmt_f64(report.sync_acc));
    kv("outsourced_units", fmt_f64(report.outsourced_units));
    kv("unassigned_units", fmt_f64(report.unassigned_units));
    let e = &report.economics;
    kv("revenue", fmt_f64(e.revenue));
    kv("profit", fmt_f64(e.profit));
    kv("profit_rate", fmt_f64(e.profit_rate));
    for (prefix, c) in [("cost", &e.costs), ("share", &report.cost_shares)] {
        kv(&format!("{prefix}.material"), fmt_f64(c.material));
        kv(&format!("{prefix}.labor"), fmt_f64(c.labor));
        kv(&format!("{prefix}.outsourcing"), fmt_f64(c.outsourcing));
        kv(&format!("{prefix}.delay_penalty"), fmt_f64(c.delay_penalty));
    }
    for (g, u) in &report.utilization.per_group {
        kv(
            &format!("utilization.group.{}.mean", g.name()),
            fmt_f64(u.mean),
        );
        kv(
            &format!("utilization.group.{}.variance", g.name()),
            fmt_f64(u.variance),
        );
    }
    for (m, u) in &report.utilization.per_machine {
        kv(&format!("utilization.machine.{m}"), fmt_f64(*u));
    }
    for (g, row) in &report.changeovers {
        kv(
            &format!("changeover.{}.total", g.name()),
            row.total.to_string(),
        );
        kv(
            &format!("changeover.{}.avg_per_machine", g.name()),
            fmt_f64(row.avg_per_machine),
        );
        kv(
            &format!("changeover.{}.hours", g.name()),
            fmt_f64(row.hours),
        );
        kv(
            &format!("changeover.{}.loss_fraction", g.name()),
            fmt_f64(row.loss_fraction),
        );
    }
    if let Some(info) = info {
        kv("solver.windows", info.windows.to_string());
        kv("solver.status", info.status.label().into());
        kv("solver.gap", fmt_f64(info.gap));
        kv("solver.nodes", info.nodes.to_string());
        kv("time.plan_seconds", format!("{:.3}", info.plan_seconds));
        kv("time.total_seconds", format!("{:.3}", info.total_seconds));
    }
    s
}

pub fn parse_report_kv(text: &str) -> Result<(EvaluationReport, Option<RunInfo>), IoError> {
    let mut map: BTreeMap<&str, &str> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| IoError::Parse {
            line: i + 1,
            column: 1,
            message: "expected key=value".into(),
        })?;
        map.insert(k, v);
    }
    let version = map.get("format_version").and_then(|v| v.parse().ok());
    check_version(version, REPORT_FORMAT_VERSION)?;
    let get = |k: &str| {
        map.get(k)
            .copied()
            .ok_or_else(|| IoError::Format(format!("missing key {k}")))
    };
    let num = |k: &str| get(k).and_then(|v| parse_f64(k, v));
    let count = |k: &str| {
        get(k).and_then(|v| {
            v.parse::<usize>()
                .map_err(|_| IoError::Format(format!("{k}: '{v}' is not a count")))
        })
    };
    let costs = |prefix: &str| -> Result<CostComposition, IoError> {
        Ok(CostComposition {
            material: num(&format!("{prefix}.material"))?,
            labor: num(&format!("{prefix}.labor"))?,
            outsourcing: num(&format!("{prefix}.outsourcing"))?,
            delay_penalty: num(&format!("{prefix}.delay_penalty"))?,
        })
    };

    let mut utilization = Utilization::default();
    let mut changeovers: BTreeMap<MachineGroup, ChangeoverRow> = BTreeMap::new();
    for (k, v) in &map {
        if let Some(rest) = k.strip_prefix("utilization.machine.") {
            utilization
                .per_machine
                .insert(MachineId::new(rest), parse_f64(k, v)?);
        } else if let Some(rest) = k.strip_prefix("utilization.group.") {
            let (g, field) = rest
                .rsplit_once('.')
                .ok_or_else(|| IoError::Format(format!("bad key {k}")))?;
            let entry = utilization
                .per_group
                .entry(MachineGroup::from(g.to_string()))
                .or_default();
            match field {
                "mean" => entry.mean = parse_f64(k, v)?,
                "variance" => entry.variance = parse_f64(k, v)?,
                _ => return Err(IoError::Format(format!("unknown key {k}"))),
            }
        } else if let Some(rest) = k.strip_prefix("changeover.") {
            let (g, field) = rest
                .rsplit_once('.')
                .ok_or_else(|| IoError::Format(format!("bad key {k}")))?;
            let entry = changeovers
                .entry(MachineGroup::from(g.to_string()))
                .or_default();
            match field {
                "total" => {
                    entry.total = v
                        .parse()
                        .map_err(|_| IoError::Format(format!("{k}: bad count")))?
                }
                "avg_per_machine" => entry.avg_per_machine = parse_f64(k, v)?,
                "hours" => entry.hours = parse_f64(k, v)?,
                "loss_fraction" => entry.loss_fraction = parse_f64(k, v)?,
                _ => return Err(IoError::Format(format!("unknown key {k}"))),
            }
        }
    }

    let scheme: Scheme = get("scheme")?.parse().map_err(IoError::Format)?;
    let report = EvaluationReport {
        scheme,
        orders: count("orders")?,
        otd: num("otd")?,
        late_orders: count("late_orders")?,
        mean_lateness: num("mean_lateness")?,
        utilization,
        changeovers,
        sync_acc: num("sync_acc")?,
        economics: Economics {
            revenue: num("revenue")?,
            costs: costs("cost")?,
            profit: num("profit")?,
            profit_rate: num("profit_rate")?,
        },
        cost_shares: costs("share")?,
        outsourced_units: num("outsourced_units")?,
        unassigned_units: num("unassigned_units")?,
    };
    let info = if map.contains_key("solver.status") {
        Some(RunInfo {
            scheme,
            windows: count("solver.windows")?,
            status: parse_status(get("solver.status")?)?,
            gap: num("solver.gap")?,
            nodes: count("solver.nodes")?,
            plan_seconds: num("time.plan_seconds")?,
            total_seconds: num("time.total_seconds")?,
        })
    } else {
        None
    };
    Ok((report, info))
}

fn pct(v: f64) -> String {
    format!("{:.1}%", 100.0 * v)
}

/// Human-readable report with the delivery, utilization, changeover and
/// cost tables.
pub fn report_to_text(report: &EvaluationReport, info: Option<&RunInfo>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "scheme {}", report.scheme);
    if let Some(info) = info {
        let gap = if info.gap.is_finite() {
            format!("{:.2e}", info.gap)
        } else {
            "n/a".into()
        };
        let _ = writeln!(
            s,
            "solver: {} window(s), status {}, gap {gap}, {} node(s)",
            info.windows,
            info.status.label(),
            info.nodes
        );
        let _ = writeln!(
            s,
            "time: plan {:.3}s, total {:.3}s",
            info.plan_seconds, info.total_seconds
        );
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "delivery");
    let _ = writeln!(
        s,
        "  on-time          {} ({} of {} orders late)",
        pct(report.otd),
        report.late_orders,
        report.orders
    );
    let _ = writeln!(s, "  mean lateness    {:.2} days", report.mean_lateness);
    let _ = writeln!(s, "  outsourced       {:.0} units", report.outsourced_units);
    let _ = writeln!(s, "  unassigned       {:.0} units", report.unassigned_units);
    let _ = writeln!(s, "  accessory sync   {:.3}", report.sync_acc);
    let _ = writeln!(s);
    let _ = writeln!(s, "utilization");
    let _ = writeln!(s, "  {:<8} {:>8} {:>10}", "group", "mean", "variance");
    for (g, u) in &report.utilization.per_group {
        let _ = writeln!(
            s,
            "  {:<8} {:>8} {:>10.5}",
            g.name(),
            pct(u.mean),
            u.variance
        );
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "changeovers");
    let _ = writeln!(
        s,
        "  {:<8} {:>6} {:>8} {:>8} {:>7}",
        "group", "total", "avg", "hours", "loss"
    );
    for (g, row) in &report.changeovers {
        if report.scheme == Scheme::A {
            let _ = writeln!(
                s,
                "  {:<8} {:>6} {:>8} {:>8} {:>7}",
                g.name(),
                "n/a",
                "n/a",
                "n/a",
                "n/a"
            );
        } else {
            let _ = writeln!(
                s,
                "  {:<8} {:>6} {:>8.1} {:>8.1} {:>7}",
                g.name(),
                row.total,
                row.avg_per_machine,
                row.hours,
                pct(row.loss_fraction)
            );
        }
    }
    let _ = writeln!(s);
    let e = &report.economics;
    let sh = &report.cost_shares;
    let _ = writeln!(s, "economics");
    let _ = writeln!(s, "  revenue          {:.2}", e.revenue);
    let _ = writeln!(
        s,
        "  material         {:.2} ({})",
        e.costs.material,
        pct(sh.material)
    );
    let _ = writeln!(
        s,
        "  labor            {:.2} ({})",
        e.costs.labor,
        pct(sh.labor)
    );
    let _ = writeln!(
        s,
        "  outsourcing      {:.2} ({})",
        e.costs.outsourcing,
        pct(sh.outsourcing)
    );
    let _ = writeln!(
        s,
        "  delay penalty    {:.2} ({})",
        e.costs.delay_penalty,
        pct(sh.delay_penalty)
    );
    let _ = writeln!(s, "  profit           {:.2}", e.profit);
    let _ = writeln!(s, "  profit rate      {}", pct(e.profit_rate));
    s
}

/// The one-line run summary printed by the command-line tool.
pub fn summary_line(report: &EvaluationReport) -> String {
    format!(
        "OTD={:.3} late={} outsourced={:.0} profit_rate={:.4} syncacc={:.3}",
        report.otd,
        report.late_orders,
        report.outsourced_units + 0.0,
        report.economics.profit_rate,
        report.sync_acc
    )
}
