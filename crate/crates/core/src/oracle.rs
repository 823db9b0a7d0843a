//! Brute-force references for tests.
//!
//! Nothing here calls into the simplex, branch-and-bound or scheduler code;
//! only the plain `MilpModel` data type is shared. The routines are slow on
//! purpose and refuse inputs beyond small caps.

use thiserror::Error;

use crate::milp::{MilpModel, Sense, VarKind};

const EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub status: OracleStatus,
    pub objective: f64,
    pub values: Vec<f64>,
}

/// Dense two-phase tableau simplex with Bland's rule throughout.
/// Integrality is ignored.
pub fn dense_simplex(model: &MilpModel) -> OracleResult {
    let lower: Vec<f64> = model.variables.iter().map(|v| v.lower).collect();
    let upper: Vec<f64> = model.variables.iter().map(|v| v.upper).collect();
    dense_simplex_with_bounds(model, &lower, &upper)
}

// Original variable j is expressed through nonnegative tableau columns.
enum Shift {
    FromLower(usize, f64),
    FromUpper(usize, f64),
    Split(usize, usize),
}

fn dense_simplex_with_bounds(model: &MilpModel, lower: &[f64], upper: &[f64]) -> OracleResult {
    let n = model.variables.len();
    let infeasible = OracleResult {
        status: OracleStatus::Infeasible,
        objective: f64::NEG_INFINITY,
        values: vec![],
    };
    if lower.iter().zip(upper).any(|(l, u)| l > u) {
        return infeasible;
    }

    let mut ncols = 0;
    let mut shifts = Vec::with_capacity(n);
    for j in 0..n {
        let s = if lower[j].is_finite() {
            ncols += 1;
            Shift::FromLower(ncols - 1, lower[j])
        } else if upper[j].is_finite() {
            ncols += 1;
            Shift::FromUpper(ncols - 1, upper[j])
        } else {
            ncols += 2;
            Shift::Split(ncols - 2, ncols - 1)
        };
        shifts.push(s);
    }

    // Rows as (dense coefficients over structural columns, sense, rhs).
    let mut rows: Vec<(Vec<f64>, Sense, f64)> = Vec::new();
    for c in &model.constraints {
        let mut a = vec![0.0; ncols];
        let mut rhs = c.rhs;
        for &(v, coef) in &c.coeffs {
            match shifts[v.0] {
                Shift::FromLower(k, l) => {
                    a[k] += coef;
                    rhs -= coef * l;
                }
                Shift::FromUpper(k, u) => {
                    a[k] -= coef;
                    rhs -= coef * u;
                }
                Shift::Split(p, q) => {
                    a[p] += coef;
                    a[q] -= coef;
                }
            }
        }
        rows.push((a, c.sense, rhs));
    }
    for j in 0..n {
        if let Shift::FromLower(k, l) = shifts[j] {
            if upper[j].is_finite() {
                let mut a = vec![0.0; ncols];
                a[k] = 1.0;
                rows.push((a, Sense::Le, upper[j] - l));
            }
        }
    }
    let mut obj = vec![0.0; ncols];
    let mut obj_const = 0.0;
    for (j, v) in model.variables.iter().enumerate() {
        match shifts[j] {
            Shift::FromLower(k, l) => {
                obj[k] += v.objective;
                obj_const += v.objective * l;
            }
            Shift::FromUpper(k, u) => {
                obj[k] -= v.objective;
                obj_const += v.objective * u;
            }
            Shift::Split(p, q) => {
                obj[p] += v.objective;
                obj[q] -= v.objective;
            }
        }
    }

    for r in rows.iter_mut() {
        if r.2 < 0.0 {
            for a in r.0.iter_mut() {
                *a = -*a;
            }
            r.2 = -r.2;
            r.1 = match r.1 {
                Sense::Le => Sense::Ge,
                Sense::Ge => Sense::Le,
                Sense::Eq => Sense::Eq,
            };
        }
    }

    // Column layout: structurals | slacks/surpluses | artificials | rhs.
    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.1 != Sense::Eq).count();
    let n_art = rows.iter().filter(|r| r.1 != Sense::Le).count();
    let width = ncols + n_slack + n_art;
    let mut t = vec![vec![0.0; width + 1]; m];
    let mut basis = vec![0usize; m];
    let (mut si, mut ai) = (ncols, ncols + n_slack);
    for (i, (a, sense, rhs)) in rows.iter().enumerate() {
        t[i][..ncols].copy_from_slice(a);
        t[i][width] = *rhs;
        match sense {
            Sense::Le => {
                t[i][si] = 1.0;
                basis[i] = si;
                si += 1;
            }
            Sense::Ge => {
                t[i][si] = -1.0;
                si += 1;
                t[i][ai] = 1.0;
                basis[i] = ai;
                ai += 1;
            }
            Sense::Eq => {
                t[i][ai] = 1.0;
                basis[i] = ai;
                ai += 1;
            }
        }
    }
    let art_start = ncols + n_slack;

    // Phase 1: maximize -(sum of artificials).
    let mut c1 = vec![0.0; width];
    for c in c1.iter_mut().skip(art_start) {
        *c = -1.0;
    }
    if n_art > 0 {
        if tableau_max(&mut t, &mut basis, &c1, width, &[]) == Some(false) {
            unreachable!("phase 1 is bounded");
        }
        let infeas: f64 = basis
            .iter()
            .enumerate()
            .filter(|(_, &b)| b >= art_start)
            .map(|(i, _)| t[i][width])
            .sum();
        if infeas > 1e-7 {
            return infeasible;
        }
        // Drive zero-valued artificials out of the basis.
        let mut i = 0;
        while i < t.len() {
            if basis[i] >= art_start {
                match (0..art_start).find(|&j| t[i][j].abs() > EPS) {
                    Some(j) => pivot(&mut t, &mut basis, i, j, width),
                    None => {
                        t.remove(i);
                        basis.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }
    }

    let mut c2 = vec![0.0; width];
    c2[..ncols].copy_from_slice(&obj);
    let banned: Vec<usize> = (art_start..width).collect();
    if tableau_max(&mut t, &mut basis, &c2, width, &banned) == Some(false) {
        return OracleResult {
            status: OracleStatus::Unbounded,
            objective: f64::INFINITY,
            values: vec![],
        };
    }

    let mut col_val = vec![0.0; width];
    for (i, &b) in basis.iter().enumerate() {
        col_val[b] = t[i][width];
    }
    let values: Vec<f64> = shifts
        .iter()
        .map(|s| match *s {
            Shift::FromLower(k, l) => l + col_val[k],
            Shift::FromUpper(k, u) => u - col_val[k],
            Shift::Split(p, q) => col_val[p] - col_val[q],
        })
        .collect();
    let objective = obj_const + obj.iter().zip(&col_val).map(|(a, b)| a * b).sum::<f64>();
    OracleResult {
        status: OracleStatus::Optimal,
        objective,
        values,
    }
}

fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], r: usize, c: usize, width: usize) {
    let p = t[r][c];
    for v in t[r].iter_mut() {
        *v /= p;
    }
    let prow = t[r].clone();
    for (i, row) in t.iter_mut().enumerate() {
        if i != r {
            let f = row[c];
            if f != 0.0 {
                for j in 0..=width {
                    row[j] -= f * prow[j];
                }
            }
        }
    }
    basis[r] = c;
}

/// Maximizes `c` over the tableau. Returns Some(true) at optimum,
/// Some(false) if unbounded.
fn tableau_max(
    t: &mut [Vec<f64>],
    basis: &mut [usize],
    c: &[f64],
    width: usize,
    banned: &[usize],
) -> Option<bool> {
    loop {
        let mut entering = None;
        for j in 0..width {
            if banned.contains(&j) || basis.contains(&j) {
                continue;
            }
            let mut reduced = c[j];
            for (i, &b) in basis.iter().enumerate() {
                reduced -= c[b] * t[i][j];
            }
            if reduced > EPS {
                entering = Some(j);
                break;
            }
        }
        let Some(q) = entering else {
            return Some(true);
        };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..t.len() {
            if t[i][q] > EPS {
                let ratio = t[i][width] / t[i][q];
                let better = match leave {
                    None => true,
                    Some((li, lr)) => {
                        ratio < lr - EPS || (ratio <= lr + EPS && basis[i] < basis[li])
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let Some((r, _)) = leave else {
            return Some(false);
        };
        pivot(t, basis, r, q, width);
    }
}

/// Enumerates every assignment of the discrete variables and solves the
/// continuous remainder with [`dense_simplex`].
pub fn enumerate_milp(model: &MilpModel) -> Result<OracleResult, OracleError> {
    let discrete: Vec<usize> = model
        .variables
        .iter()
        .enumerate()
        .filter(|(_, v)| v.kind != VarKind::Continuous)
        .map(|(j, _)| j)
        .collect();
    if discrete.len() > 12 {
        return Err(OracleError::TooLarge(format!(
            "{} discrete variables (cap 12)",
            discrete.len()
        )));
    }
    let mut domains = Vec::new();
    for &j in &discrete {
        let v = &model.variables[j];
        let (lo, hi) = (v.lower.ceil(), v.upper.floor());
        if !lo.is_finite() || !hi.is_finite() || hi - lo + 1.0 > 4.0 {
            return Err(OracleError::TooLarge(format!(
                "variable {j} has more than 4 integer values"
            )));
        }
        if hi < lo {
            return Ok(OracleResult {
                status: OracleStatus::Infeasible,
                objective: f64::NEG_INFINITY,
                values: vec![],
            });
        }
        domains.push((lo, hi));
    }

    let any_continuous = discrete.len() < model.variables.len();
    let mut lower: Vec<f64> = model.variables.iter().map(|v| v.lower).collect();
    let mut upper: Vec<f64> = model.variables.iter().map(|v| v.upper).collect();
    let mut current: Vec<f64> = domains.iter().map(|d| d.0).collect();
    let mut best: Option<OracleResult> = None;

    loop {
        for (k, &j) in discrete.iter().enumerate() {
            lower[j] = current[k];
            upper[j] = current[k];
        }
        let candidate = if any_continuous {
            dense_simplex_with_bounds(model, &lower, &upper)
        } else {
            let values = current_point(model, &discrete, &current);
            let feasible = model.constraints.iter().all(|c| {
                let lhs: f64 = c.coeffs.iter().map(|&(v, a)| a * values[v.0]).sum();
                match c.sense {
                    Sense::Le => lhs <= c.rhs + 1e-9,
                    Sense::Ge => lhs >= c.rhs - 1e-9,
                    Sense::Eq => (lhs - c.rhs).abs() <= 1e-9,
                }
            });
            if feasible {
                let objective = model
                    .variables
                    .iter()
                    .zip(&values)
                    .map(|(v, x)| v.objective * x)
                    .sum();
                OracleResult {
                    status: OracleStatus::Optimal,
                    objective,
                    values,
                }
            } else {
                OracleResult {
                    status: OracleStatus::Infeasible,
                    objective: f64::NEG_INFINITY,
                    values: vec![],
                }
            }
        };
        match candidate.status {
            OracleStatus::Unbounded => return Ok(candidate),
            OracleStatus::Optimal => {
                if best
                    .as_ref()
                    .is_none_or(|b| candidate.objective > b.objective + 1e-9)
                {
                    best = Some(candidate);
                }
            }
            OracleStatus::Infeasible => {}
        }

        // Odometer step.
        let mut k = 0;
        loop {
            if k == current.len() {
                return Ok(best.unwrap_or(OracleResult {
                    status: OracleStatus::Infeasible,
                    objective: f64::NEG_INFINITY,
                    values: vec![],
                }));
            }
            if current[k] < domains[k].1 {
                current[k] += 1.0;
                break;
            }
            current[k] = domains[k].0;
            k += 1;
        }
    }
}

fn current_point(model: &MilpModel, discrete: &[usize], current: &[f64]) -> Vec<f64> {
    let mut values = vec![0.0; model.variables.len()];
    for (k, &j) in discrete.iter().enumerate() {
        values[j] = current[k];
    }
    values
}

/// Seeded random MILP within the enumeration caps: at most 10 variables,
/// 10 rows and 8 discrete variables with at most 4 values each.
pub fn random_milp(seed: u64) -> MilpModel {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=10usize);
    let n_discrete = rng.gen_range(0..=n.min(8));
    let m = rng.gen_range(1..=10usize);
    let mut model = MilpModel::new();
    let mut vars = Vec::new();
    for j in 0..n {
        let obj = f64::from(rng.gen_range(-3..=8i32));
        let v = if j < n_discrete {
            if rng.gen_bool(0.6) {
                model.binary(format!("b{j}"), obj)
            } else {
                let lo = f64::from(rng.gen_range(-1..=1i32));
                let width = f64::from(rng.gen_range(1..=3i32));
                model.add_var(format!("i{j}"), lo, lo + width, VarKind::Integer, obj)
            }
        } else {
            let hi = if rng.gen_bool(0.8) {
                f64::from(rng.gen_range(1..=10i32))
            } else {
                f64::INFINITY
            };
            model.continuous(format!("c{j}"), 0.0, hi, obj)
        };
        vars.push(v);
    }
    for i in 0..m {
        let mut coeffs = Vec::new();
        for &v in &vars {
            if rng.gen_bool(0.6) {
                coeffs.push((v, f64::from(rng.gen_range(-5..=5i32))));
            }
        }
        let sense = match rng.gen_range(0..10) {
            0..=6 => Sense::Le,
            7..=8 => Sense::Ge,
            _ => Sense::Eq,
        };
        let rhs = f64::from(match sense {
            Sense::Le => rng.gen_range(0..=20i32),
            Sense::Ge => rng.gen_range(-5..=6i32),
            Sense::Eq => rng.gen_range(0..=4i32),
        });
        model.add_constraint(format!("r{i}"), coeffs, sense, rhs);
    }
    // Keep most instances bounded: cap the sum of all variables.
    if rng.gen_bool(0.9) {
        let cap = f64::from(rng.gen_range(5..=30i32));
        model.add_constraint("total", vars.iter().map(|&v| (v, 1.0)), Sense::Le, cap);
    }
    model
}

/// One machine of a single-day assignment instance.
#[derive(Debug, Clone, PartialEq)]
pub struct DayMachine {
    /// Productive hours left after changeovers.
    pub capacity_hours: f64,
    /// Per product index: `Some((unit_time, planned_units))` when the
    /// product may run on this machine today.
    pub products: Vec<Option<(f64, u32)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DayOrder {
    pub product: usize,
    pub quantity: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DayInstance {
    pub orders: Vec<DayOrder>,
    pub machines: Vec<DayMachine>,
}

/// Largest number of whole units placeable in one day subject to order
/// targets, per-machine planned quantities, capacity and compatibility.
pub fn best_day_assignment(inst: &DayInstance) -> Result<u32, OracleError> {
    if inst.orders.len() > 3 || inst.machines.len() > 2 {
        return Err(OracleError::TooLarge(format!(
            "{} orders / {} machines (caps 3 / 2)",
            inst.orders.len(),
            inst.machines.len()
        )));
    }
    if inst.orders.iter().any(|o| o.quantity > 100) {
        return Err(OracleError::TooLarge("order quantity above 100".into()));
    }
    let Some((last, firsts)) = inst.machines.split_last() else {
        return Ok(0);
    };

    // Enumerate every split on all machines but the last, then fill the last
    // machine exactly (unit items, so shortest unit time first is optimal).
    let mut best = 0u32;
    let mut z: Vec<Vec<u32>> = vec![vec![0; inst.orders.len()]; firsts.len()];
    loop {
        if let Some(placed) = feasible_prefix(inst, firsts, &z) {
            let remaining: Vec<u32> = inst
                .orders
                .iter()
                .enumerate()
                .map(|(o, ord)| ord.quantity - z.iter().map(|row| row[o]).sum::<u32>())
                .collect();
            best = best.max(placed + fill_single(inst, last, &remaining));
        }
        if !advance(&mut z, inst) {
            return Ok(best);
        }
    }
}

fn feasible_prefix(inst: &DayInstance, machines: &[DayMachine], z: &[Vec<u32>]) -> Option<u32> {
    let mut total = 0;
    for (o, ord) in inst.orders.iter().enumerate() {
        if z.iter().map(|row| row[o]).sum::<u32>() > ord.quantity {
            return None;
        }
    }
    for (m, mach) in machines.iter().enumerate() {
        let mut hours = 0.0;
        let mut per_product = vec![0u32; mach.products.len()];
        for (o, ord) in inst.orders.iter().enumerate() {
            let units = z[m][o];
            if units == 0 {
                continue;
            }
            let (t, _) = mach.products[ord.product]?;
            hours += t * f64::from(units);
            per_product[ord.product] += units;
            total += units;
        }
        if hours > mach.capacity_hours + 1e-9 {
            return None;
        }
        for (f, &u) in per_product.iter().enumerate() {
            if u > 0 && u > mach.products[f].map_or(0, |p| p.1) {
                return None;
            }
        }
    }
    Some(total)
}

fn fill_single(inst: &DayInstance, mach: &DayMachine, remaining: &[u32]) -> u32 {
    let mut by_time: Vec<(f64, usize)> = mach
        .products
        .iter()
        .enumerate()
        .filter_map(|(f, p)| p.map(|(t, _)| (t, f)))
        .collect();
    by_time.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut hours = mach.capacity_hours;
    let mut placed = 0;
    for (t, f) in by_time {
        let demand: u32 = inst
            .orders
            .iter()
            .enumerate()
            .filter(|(_, o)| o.product == f)
            .map(|(i, _)| remaining[i])
            .sum();
        let mut take = demand.min(mach.products[f].map_or(0, |p| p.1));
        while take > 0 && t * f64::from(take) > hours + 1e-9 {
            take -= 1;
        }
        hours -= t * f64::from(take);
        placed += take;
    }
    placed
}

fn advance(z: &mut [Vec<u32>], inst: &DayInstance) -> bool {
    for row in z.iter_mut() {
        for (o, cell) in row.iter_mut().enumerate() {
            if *cell < inst.orders[o].quantity {
                *cell += 1;
                return true;
            }
            *cell = 0;
        }
    }
    false
}
