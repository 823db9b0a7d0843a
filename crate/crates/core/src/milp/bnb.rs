//! Best-bound branch-and-bound.
//!
//! Both children of a branched node are solved as soon as they are created,
//! so every open node carries its exact LP bound. Open nodes are ordered by
//! bound, then by depth (deeper first), then by creation order. Sibling
//! evaluation may run on two threads; results are merged in a fixed order,
//! so the search is identical for any thread count.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;
use std::time::Instant;

use super::simplex::{self, Basis, LpOutcome, StdLp};
use super::{MilpError, MilpLimits, MilpModel, MilpSolution, SolveStatus, VarKind};

/// Converts scaled simplex values back to model units, snapping values that
/// sit within rounding noise of a bound onto it.
pub(super) fn unscale(lp: &StdLp, model: &MilpModel, x: &[f64]) -> Vec<f64> {
    model
        .variables
        .iter()
        .enumerate()
        .map(|(j, v)| {
            let val = x[j] * lp.col_scale[j];
            let snap = 1e-9 * (1.0 + val.abs());
            if (val - v.lower).abs() <= snap {
                v.lower
            } else if (val - v.upper).abs() <= snap {
                v.upper
            } else {
                val
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
struct Node {
    id: usize,
    depth: usize,
    bound: f64,
    key: i64,
    /// Branching bound changes from the root, in model units.
    changes: Arc<Vec<(usize, f64, f64)>>,
    branch_var: usize,
    branch_value: f64,
    basis: Arc<Basis>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key
            .cmp(&other.key)
            .then(self.depth.cmp(&other.depth))
            .then(other.id.cmp(&self.id))
    }
}

fn bound_key(bound: f64) -> i64 {
    (bound * 1e6).round() as i64
}

enum Eval {
    Infeasible,
    Unbounded,
    Integral {
        objective: f64,
        values: Vec<f64>,
    },
    Fractional {
        bound: f64,
        var: usize,
        value: f64,
        basis: Basis,
    },
}

struct Search<'a> {
    model: &'a MilpModel,
    lp: StdLp,
    limits: &'a MilpLimits,
    root_lower: Vec<f64>,
    root_upper: Vec<f64>,
}

impl Search<'_> {
    fn bounds(&self, changes: &[(usize, f64, f64)]) -> (Vec<f64>, Vec<f64>) {
        let mut lower = self.root_lower.clone();
        let mut upper = self.root_upper.clone();
        for &(j, lo, hi) in changes {
            lower[j] = lo / self.lp.col_scale[j];
            upper[j] = hi / self.lp.col_scale[j];
        }
        (lower, upper)
    }

    fn run_lp(
        &self,
        lower: &[f64],
        upper: &[f64],
        basis: Option<&Basis>,
    ) -> Result<simplex::LpRun, MilpError> {
        match simplex::solve(&self.lp, lower, upper, basis) {
            Ok(run) => Ok(run),
            Err(_) if basis.is_some() => simplex::solve(&self.lp, lower, upper, None)
                .map_err(|e| MilpError::NumericalFailure { iterations: e.0 }),
            Err(e) => Err(MilpError::NumericalFailure { iterations: e.0 }),
        }
    }

    fn evaluate(
        &self,
        changes: &[(usize, f64, f64)],
        basis: Option<&Basis>,
    ) -> Result<Eval, MilpError> {
        let (lower, upper) = self.bounds(changes);
        let run = self.run_lp(&lower, &upper, basis)?;
        match run.outcome {
            LpOutcome::Infeasible => return Ok(Eval::Infeasible),
            LpOutcome::Unbounded => return Ok(Eval::Unbounded),
            LpOutcome::Optimal => {}
        }
        let values = unscale(&self.lp, self.model, &run.x);
        let bound = self.model.objective_value(&values);

        let tol = self.limits.integrality_tol;
        let mut pick: Option<(usize, f64, f64)> = None;
        for (j, v) in self.model.variables.iter().enumerate() {
            if v.kind == VarKind::Continuous {
                continue;
            }
            let x = values[j];
            let frac = x - x.floor();
            let dist = frac.min(1.0 - frac);
            if dist <= tol {
                continue;
            }
            // Most fractional; the strict comparison keeps the lowest id on ties.
            if pick.is_none_or(|(_, d, _)| dist > d) {
                pick = Some((j, dist, x));
            }
        }

        match pick {
            Some((var, _, value)) => Ok(Eval::Fractional {
                bound,
                var,
                value,
                basis: run.basis,
            }),
            None => Ok(self.polish(values, &lower, &upper, &run.basis)),
        }
    }

    /// Rounds integer variables, re-optimizes the continuous part with them
    /// fixed and checks the result against the original rows.
    fn polish(&self, mut values: Vec<f64>, lower: &[f64], upper: &[f64], basis: &Basis) -> Eval {
        let mut any_continuous = false;
        let mut lower = lower.to_vec();
        let mut upper = upper.to_vec();
        for (j, v) in self.model.variables.iter().enumerate() {
            if v.kind == VarKind::Continuous {
                any_continuous = true;
                continue;
            }
            let r = values[j].round();
            values[j] = r;
            lower[j] = r / self.lp.col_scale[j];
            upper[j] = r / self.lp.col_scale[j];
        }
        if any_continuous {
            if let Ok(run) = self.run_lp(&lower, &upper, Some(basis)) {
                if run.outcome == LpOutcome::Optimal {
                    let mut fixed = unscale(&self.lp, self.model, &run.x);
                    for (j, v) in self.model.variables.iter().enumerate() {
                        if v.kind != VarKind::Continuous {
                            fixed[j] = values[j];
                        }
                    }
                    if self.model.max_violation(&fixed)
                        <= self
                            .model
                            .max_violation(&values)
                            .max(self.limits.feasibility_tol)
                    {
                        values = fixed;
                    }
                }
            }
        }
        if self.model.max_violation(&values) > self.limits.feasibility_tol {
            return Eval::Infeasible;
        }
        Eval::Integral {
            objective: self.model.objective_value(&values),
            values,
        }
    }
}

impl Search<'_> {
    /// Up-diving: repeatedly fixes the discrete variables closest to their
    /// ceiling and re-solves, backtracking once per round by rounding the
    /// most confident one down instead.
    fn dive(&self, start: &Eval) -> Result<Option<(f64, Vec<f64>)>, MilpError> {
        let Eval::Fractional { basis, .. } = start else {
            return Ok(None);
        };
        let mut changes: Vec<(usize, f64, f64)> = Vec::new();
        let mut basis = basis.clone();
        let mut values = {
            let (lower, upper) = self.bounds(&changes);
            let run = self.run_lp(&lower, &upper, Some(&basis))?;
            unscale(&self.lp, self.model, &run.x)
        };
        let tol = self.limits.integrality_tol;
        for _ in 0..self.limits.dive_rounds {
            // Candidates ordered by how close they are to their ceiling.
            let mut frac: Vec<(f64, usize, f64)> = self
                .model
                .variables
                .iter()
                .enumerate()
                .filter(|(_, v)| v.kind != VarKind::Continuous)
                .filter_map(|(j, _)| {
                    let x = values[j];
                    let f = x - x.floor();
                    (f > tol && f < 1.0 - tol).then_some((1.0 - f, j, x.ceil()))
                })
                .collect();
            if frac.is_empty() {
                break;
            }
            frac.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut fix: Vec<(usize, f64)> = frac
                .iter()
                .take_while(|f| f.0 <= 0.1)
                .map(|f| (f.1, f.2))
                .collect();
            if fix.is_empty() {
                fix.push((frac[0].1, frac[0].2));
            }
            let attempt = |fix: &[(usize, f64)]| -> Result<Option<simplex::LpRun>, MilpError> {
                let mut trial = changes.clone();
                trial.extend(fix.iter().map(|&(j, r)| (j, r, r)));
                let (lower, upper) = self.bounds(&trial);
                let run = self.run_lp(&lower, &upper, Some(&basis))?;
                Ok((run.outcome == LpOutcome::Optimal).then_some(run))
            };
            let (applied, run) = match attempt(&fix)? {
                Some(run) => (fix, run),
                None => {
                    let (j, r) = fix[0];
                    let flipped = r - 1.0;
                    let lo = self.model.variables[j].lower.ceil();
                    let hi = self.model.variables[j].upper.floor();
                    if flipped < lo || flipped > hi {
                        return Ok(None);
                    }
                    match attempt(&[(j, flipped)])? {
                        Some(run) => (vec![(j, flipped)], run),
                        None => return Ok(None),
                    }
                }
            };
            changes.extend(applied.iter().map(|&(j, r)| (j, r, r)));
            values = unscale(&self.lp, self.model, &run.x);
            basis = run.basis;
        }
        let (lower, upper) = self.bounds(&changes);
        match self.polish(values, &lower, &upper, &basis) {
            Eval::Integral { objective, values } => Ok(Some((objective, values))),
            _ => Ok(None),
        }
    }
}

struct Incumbent {
    objective: f64,
    values: Vec<f64>,
}

fn offer(incumbent: &mut Option<Incumbent>, objective: f64, values: Vec<f64>) {
    let replace = match incumbent {
        None => true,
        Some(inc) => {
            let tie = 1e-9 * (1.0 + inc.objective.abs());
            objective > inc.objective + tie
                || (objective >= inc.objective - tie
                    && values.iter().partial_cmp(inc.values.iter()) == Some(Ordering::Less))
        }
    };
    if replace {
        *incumbent = Some(Incumbent { objective, values });
    }
}

fn rel_gap(bound: f64, incumbent: f64) -> f64 {
    ((bound - incumbent) / incumbent.abs().max(1.0)).max(0.0)
}

pub(super) fn branch_and_bound(
    model: &MilpModel,
    limits: &MilpLimits,
    start: Option<&[f64]>,
) -> Result<MilpSolution, MilpError> {
    let started = Instant::now();
    let lp = StdLp::from_model(model);
    let mut root_lower = lp.lower.clone();
    let mut root_upper = lp.upper.clone();
    for (j, v) in model.variables.iter().enumerate() {
        if v.kind != VarKind::Continuous {
            root_lower[j] = v.lower.ceil() / lp.col_scale[j];
            root_upper[j] = v.upper.floor() / lp.col_scale[j];
        }
    }
    let search = Search {
        model,
        lp,
        limits,
        root_lower,
        root_upper,
    };

    let mut nodes = 1usize;
    let mut incumbent: Option<Incumbent> = None;
    if let Some(point) = start {
        let integral = model
            .variables
            .iter()
            .zip(point)
            .all(|(v, x)| v.kind == VarKind::Continuous || x.fract() == 0.0);
        if point.len() == model.variables.len()
            && integral
            && model.max_violation(point) <= limits.feasibility_tol
        {
            offer(&mut incumbent, model.objective_value(point), point.to_vec());
        }
    }
    let mut open: BinaryHeap<Node> = BinaryHeap::new();
    let mut next_id = 1usize;

    let root = search.evaluate(&[], None)?;
    if limits.dive_rounds > 0 {
        if let Some((objective, values)) = search.dive(&root)? {
            offer(&mut incumbent, objective, values);
        }
    }
    match root {
        Eval::Infeasible => return Ok(MilpSolution::without_point(SolveStatus::Infeasible, nodes)),
        Eval::Unbounded => return Ok(MilpSolution::without_point(SolveStatus::Unbounded, nodes)),
        Eval::Integral { objective, values } => offer(&mut incumbent, objective, values),
        Eval::Fractional {
            bound,
            var,
            value,
            basis,
        } => open.push(Node {
            id: 0,
            depth: 0,
            bound,
            key: bound_key(bound),
            changes: Arc::new(Vec::new()),
            branch_var: var,
            branch_value: value,
            basis: Arc::new(basis),
        }),
    }

    let mut limit_hit = false;
    let mut closing_bound = f64::NEG_INFINITY;
    while let Some(node) = open.pop() {
        if let Some(inc) = &incumbent {
            let slack = limits.gap_tol * inc.objective.abs().max(1.0);
            if node.bound <= inc.objective + slack {
                // Best-first order: every remaining node is at least as bad.
                closing_bound = node.bound;
                open.clear();
                break;
            }
        }
        if nodes >= limits.max_nodes || started.elapsed().as_secs_f64() >= limits.time_limit_secs {
            open.push(node);
            limit_hit = true;
            break;
        }

        let j = node.branch_var;
        let (lo, hi) = {
            let (l, u) = search.bounds(&node.changes);
            (l[j] * search.lp.col_scale[j], u[j] * search.lp.col_scale[j])
        };
        let floor = node.branch_value.floor();
        let mut down = (*node.changes).clone();
        down.push((j, lo.round(), floor));
        let mut up = (*node.changes).clone();
        up.push((j, floor + 1.0, hi.round()));
        let children = [down, up];

        let evals: Vec<Result<Eval, MilpError>> = if limits.jobs > 1 {
            std::thread::scope(|s| {
                let handles: Vec<_> = children
                    .iter()
                    .map(|c| {
                        let search = &search;
                        let basis = &node.basis;
                        s.spawn(move || search.evaluate(c, Some(basis)))
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("node evaluation panicked"))
                    .collect()
            })
        } else {
            children
                .iter()
                .map(|c| search.evaluate(c, Some(&node.basis)))
                .collect()
        };
        nodes += 2;

        for (changes, eval) in children.into_iter().zip(evals) {
            match eval? {
                Eval::Infeasible | Eval::Unbounded => {}
                Eval::Integral { objective, values } => offer(&mut incumbent, objective, values),
                Eval::Fractional {
                    bound,
                    var,
                    value,
                    basis,
                } => {
                    if let Some(inc) = &incumbent {
                        if bound <= inc.objective + limits.gap_tol * inc.objective.abs().max(1.0) {
                            continue;
                        }
                    }
                    open.push(Node {
                        id: next_id,
                        depth: node.depth + 1,
                        bound,
                        key: bound_key(bound),
                        changes: Arc::new(changes),
                        branch_var: var,
                        branch_value: value,
                        basis: Arc::new(basis),
                    });
                    next_id += 1;
                }
            }
        }
    }

    let best_open = open.iter().map(|n| n.bound).fold(closing_bound, f64::max);
    match incumbent {
        None if limit_hit => Err(MilpError::NoIncumbentAtLimit { nodes }),
        None => Ok(MilpSolution::without_point(SolveStatus::Infeasible, nodes)),
        Some(inc) => {
            let gap = if best_open.is_finite() {
                rel_gap(best_open, inc.objective)
            } else {
                0.0
            };
            let status = if limit_hit && gap > limits.gap_tol {
                SolveStatus::Feasible
            } else {
                SolveStatus::Optimal
            };
            Ok(MilpSolution {
                status,
                values: inc.values,
                objective: inc.objective,
                gap,
                nodes_explored: nodes,
            })
        }
    }
}
