//! Exact MILP engine: bounded-variable revised simplex for LP relaxations
//! plus best-bound branch-and-bound over integer variables.
//!
//! Models are always maximized.

mod bnb;
mod lp_format;
mod lu;
mod simplex;

use std::fmt;

use thiserror::Error;

pub use lp_format::write_lp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarKind {
    Continuous,
    Binary,
    Integer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub kind: VarKind,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    /// Sorted by variable, no duplicates, no zeros.
    pub coeffs: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(v, a)| a * values[v.0]).sum()
    }

    /// Amount by which `values` violate this row; zero when satisfied.
    pub fn violation(&self, values: &[f64]) -> f64 {
        let lhs = self.activity(values);
        match self.sense {
            Sense::Le => (lhs - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - lhs).max(0.0),
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// A maximization MILP.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MilpModel {
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
}

impl MilpModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        lower: f64,
        upper: f64,
        kind: VarKind,
        objective: f64,
    ) -> VarId {
        let (lower, upper) = match kind {
            VarKind::Binary => (lower.max(0.0), upper.min(1.0)),
            _ => (lower, upper),
        };
        self.variables.push(Variable {
            name: name.into(),
            lower,
            upper,
            kind,
            objective,
        });
        VarId(self.variables.len() - 1)
    }

    pub fn continuous(
        &mut self,
        name: impl Into<String>,
        lower: f64,
        upper: f64,
        objective: f64,
    ) -> VarId {
        self.add_var(name, lower, upper, VarKind::Continuous, objective)
    }

    pub fn binary(&mut self, name: impl Into<String>, objective: f64) -> VarId {
        self.add_var(name, 0.0, 1.0, VarKind::Binary, objective)
    }

    /// Adds a row; repeated variables are merged and zero coefficients dropped.
    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        coeffs: impl IntoIterator<Item = (VarId, f64)>,
        sense: Sense,
        rhs: f64,
    ) -> usize {
        let mut c: Vec<(VarId, f64)> = coeffs.into_iter().collect();
        c.sort_by_key(|e| e.0);
        let mut merged: Vec<(VarId, f64)> = Vec::with_capacity(c.len());
        for (v, a) in c {
            match merged.last_mut() {
                Some(last) if last.0 == v => last.1 += a,
                _ => merged.push((v, a)),
            }
        }
        merged.retain(|e| e.1 != 0.0);
        self.constraints.push(Constraint {
            name: name.into(),
            coeffs: merged,
            sense,
            rhs,
        });
        self.constraints.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.variables
            .iter()
            .zip(values)
            .map(|(v, x)| v.objective * x)
            .sum()
    }

    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let rows = self.constraints.iter().map(|c| c.violation(values));
        let bounds = self
            .variables
            .iter()
            .zip(values)
            .map(|(v, &x)| (v.lower - x).max(x - v.upper).max(0.0));
        rows.chain(bounds).fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<(), MilpError> {
        for (j, v) in self.variables.iter().enumerate() {
            if v.lower.is_nan() || v.upper.is_nan() || !v.objective.is_finite() {
                return Err(MilpError::InvalidModel(format!(
                    "variable {j} ('{}') has a NaN field",
                    v.name
                )));
            }
            if v.lower > v.upper {
                return Err(MilpError::InvalidModel(format!(
                    "variable {j} ('{}') has lower {} above upper {}",
                    v.name, v.lower, v.upper
                )));
            }
            if v.kind == VarKind::Binary && (v.lower < 0.0 || v.upper > 1.0) {
                return Err(MilpError::InvalidModel(format!(
                    "binary variable {j} ('{}') has bounds outside [0,1]",
                    v.name
                )));
            }
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if !c.rhs.is_finite() {
                return Err(MilpError::InvalidModel(format!(
                    "constraint {i} ('{}') has a non-finite rhs",
                    c.name
                )));
            }
            for &(v, a) in &c.coeffs {
                if v.0 >= self.variables.len() {
                    return Err(MilpError::InvalidModel(format!(
                        "constraint {i} references unknown variable {v}"
                    )));
                }
                if a == 0.0 || !a.is_finite() {
                    return Err(MilpError::InvalidModel(format!(
                        "constraint {i} has coefficient {a} for {v}"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpLimits {
    pub max_nodes: usize,
    pub time_limit_secs: f64,
    pub feasibility_tol: f64,
    pub integrality_tol: f64,
    pub gap_tol: f64,
    /// Worker threads used to evaluate sibling nodes. Results never depend
    /// on this value.
    pub jobs: usize,
    /// LP re-solves spent diving from the root for an early incumbent.
    pub dive_rounds: usize,
}

impl Default for MilpLimits {
    fn default() -> Self {
        Self {
            max_nodes: 100_000,
            time_limit_secs: 300.0,
            feasibility_tol: 1e-6,
            integrality_tol: 1e-6,
            gap_tol: 1e-6,
            jobs: 1,
            dive_rounds: 200,
        }
    }
}

impl MilpLimits {
    /// Limits used by the planner for one rolling window.
    pub fn planning_default() -> Self {
        Self {
            max_nodes: 20,
            time_limit_secs: 120.0,
            gap_tol: 1e-4,
            dive_rounds: 0,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolveStatus {
    Optimal,
    /// A limit stopped the search; the incumbent is returned.
    Feasible,
    Infeasible,
    Unbounded,
}

impl SolveStatus {
    pub fn label(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Feasible => "feasible",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpSolution {
    pub status: SolveStatus,
    /// Indexed by `VarId`; empty unless a point was found.
    pub values: Vec<f64>,
    pub objective: f64,
    /// Relative distance between the best bound and the incumbent.
    pub gap: f64,
    pub nodes_explored: usize,
}

impl MilpSolution {
    pub fn value(&self, v: VarId) -> f64 {
        self.values[v.0]
    }

    fn without_point(status: SolveStatus, nodes: usize) -> Self {
        let objective = match status {
            SolveStatus::Unbounded => f64::INFINITY,
            _ => f64::NEG_INFINITY,
        };
        Self {
            status,
            values: Vec::new(),
            objective,
            gap: f64::INFINITY,
            nodes_explored: nodes,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MilpError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("simplex stalled after {iterations} iterations")]
    NumericalFailure { iterations: usize },
    #[error("search limits reached after {nodes} nodes without an integer-feasible point")]
    NoIncumbentAtLimit { nodes: usize },
}

/// Solves the LP relaxation of `model`, ignoring integrality.
pub fn solve_lp(model: &MilpModel) -> Result<MilpSolution, MilpError> {
    model.validate()?;
    let lp = simplex::StdLp::from_model(model);
    let run = simplex::solve(&lp, &lp.lower, &lp.upper, None)
        .map_err(|e| MilpError::NumericalFailure { iterations: e.0 })?;
    Ok(match run.outcome {
        simplex::LpOutcome::Optimal => {
            let values = bnb::unscale(&lp, model, &run.x);
            let objective = model.objective_value(&values);
            MilpSolution {
                status: SolveStatus::Optimal,
                values,
                objective,
                gap: 0.0,
                nodes_explored: 0,
            }
        }
        simplex::LpOutcome::Infeasible => MilpSolution::without_point(SolveStatus::Infeasible, 0),
        simplex::LpOutcome::Unbounded => MilpSolution::without_point(SolveStatus::Unbounded, 0),
    })
}

/// Best-bound branch-and-bound on the integer variables of `model`.
pub fn solve_milp(model: &MilpModel, limits: &MilpLimits) -> Result<MilpSolution, MilpError> {
    model.validate()?;
    bnb::branch_and_bound(model, limits, None)
}

/// Like [`solve_milp`], seeded with a known feasible point. A start that
/// violates a row, a bound or integrality is ignored.
pub fn solve_milp_with_start(
    model: &MilpModel,
    limits: &MilpLimits,
    start: &[f64],
) -> Result<MilpSolution, MilpError> {
    model.validate()?;
    bnb::branch_and_bound(model, limits, Some(start))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_attained_optimum() {
        let mut m = MilpModel::new();
        let x = m.continuous("x", 0.0, 3.0, 1.0);
        let s = solve_lp(&m).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert_eq!(s.objective, 3.0);
        assert_eq!(s.value(x), 3.0);
    }

    #[test]
    fn symmetric_face() {
        let mut m = MilpModel::new();
        let x = m.continuous("x", 0.0, 1.0, 1.0);
        let y = m.continuous("y", 0.0, 1.0, 1.0);
        m.add_constraint("c", [(x, 1.0), (y, 1.0)], Sense::Le, 1.0);
        let s = solve_lp(&m).unwrap();
        assert!((s.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn small_integer_program() {
        let mut m = MilpModel::new();
        let a = m.add_var("a", 0.0, 2.0, VarKind::Integer, 5.0);
        let b = m.add_var("b", 0.0, 2.0, VarKind::Integer, 4.0);
        m.add_constraint("cap", [(a, 6.0), (b, 4.0)], Sense::Le, 10.0);
        let s = solve_milp(&m, &MilpLimits::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.objective - 9.0).abs() < 1e-9);
        assert_eq!((s.value(a), s.value(b)), (1.0, 1.0));
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let mut m = MilpModel::new();
        let x = m.continuous("x", 0.0, 10.0, 1.0);
        m.add_constraint("lo", [(x, 1.0)], Sense::Ge, 1.0);
        m.add_constraint("hi", [(x, 1.0)], Sense::Le, 0.0);
        assert_eq!(solve_lp(&m).unwrap().status, SolveStatus::Infeasible);
        assert_eq!(
            solve_milp(&m, &MilpLimits::default()).unwrap().status,
            SolveStatus::Infeasible
        );
    }

    #[test]
    fn unbounded_ray() {
        let mut m = MilpModel::new();
        let x = m.continuous("x", 0.0, f64::INFINITY, 1.0);
        let y = m.continuous("y", 0.0, f64::INFINITY, 0.0);
        m.add_constraint("c", [(x, 1.0), (y, -1.0)], Sense::Le, 2.0);
        assert_eq!(solve_lp(&m).unwrap().status, SolveStatus::Unbounded);
    }

    #[test]
    fn continuous_model_matches_lp() {
        let mut m = MilpModel::new();
        let x = m.continuous("x", 0.0, 4.0, 3.0);
        let y = m.continuous("y", 0.0, 4.0, 2.0);
        m.add_constraint("a", [(x, 1.0), (y, 1.0)], Sense::Le, 5.0);
        m.add_constraint("b", [(x, 2.0), (y, 1.0)], Sense::Le, 8.0);
        let lp = solve_lp(&m).unwrap();
        let ip = solve_milp(&m, &MilpLimits::default()).unwrap();
        assert_eq!(lp.values, ip.values);
        assert_eq!(lp.objective, ip.objective);
        assert!((lp.objective - 13.0).abs() < 1e-9);
    }

    #[test]
    fn equality_rows_and_negative_lower_bounds() {
        let mut m = MilpModel::new();
        let x = m.continuous("x", -5.0, 5.0, 1.0);
        let y = m.continuous("y", -5.0, 5.0, -1.0);
        m.add_constraint("e", [(x, 1.0), (y, 1.0)], Sense::Eq, 1.0);
        let s = solve_lp(&m).unwrap();
        assert!((s.objective - 9.0).abs() < 1e-9, "{s:?}");
        assert!(m.max_violation(&s.values) < 1e-9);
    }

    #[test]
    fn duplicate_coefficients_are_merged() {
        let mut m = MilpModel::new();
        let x = m.continuous("x", 0.0, 1.0, 1.0);
        m.add_constraint("c", [(x, 1.0), (x, -1.0)], Sense::Le, 0.0);
        assert!(m.constraints[0].coeffs.is_empty());
        m.add_constraint("d", [(x, 2.0), (x, 1.0)], Sense::Le, 3.0);
        assert_eq!(m.constraints[1].coeffs, vec![(x, 3.0)]);
    }

    #[test]
    fn invalid_bounds_rejected() {
        let mut m = MilpModel::new();
        m.continuous("x", 2.0, 1.0, 1.0);
        assert!(matches!(solve_lp(&m), Err(MilpError::InvalidModel(_))));
    }
}
