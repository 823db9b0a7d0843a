//! Plan, schedule, verify and evaluate a scenario under one scheme.

use std::time::Instant;

use crate::domain::{Scenario, Scheme, SchemeConfig};
use crate::metrics::{evaluate, EvaluationReport};
use crate::milp::SolveStatus;
use crate::planner::{rolling_plan, PlanEnvelope, PlanError};
use crate::scheduler::{
    greedy_noplan, schedule_horizon, verify_schedule, Schedule, ScheduleError, Violation,
};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

/// Solver summary over all windows of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunInfo {
    pub scheme: Scheme,
    pub windows: usize,
    /// Weakest status over the windows.
    pub status: SolveStatus,
    /// Largest relative gap over the windows.
    pub gap: f64,
    pub nodes: usize,
    pub plan_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub envelopes: Vec<PlanEnvelope>,
    pub schedule: Schedule,
    pub violations: Vec<Violation>,
    pub report: EvaluationReport,
    pub info: RunInfo,
}

fn weaker(a: SolveStatus, b: SolveStatus) -> SolveStatus {
    let rank = |s| match s {
        SolveStatus::Optimal => 0,
        SolveStatus::Feasible => 1,
        SolveStatus::Unbounded => 2,
        SolveStatus::Infeasible => 3,
    };
    if rank(b) > rank(a) {
        b
    } else {
        a
    }
}

/// Scheme A is planned on group pseudo-machines and scheduled on the real
/// fleet; the other schemes plan and schedule on the scenario as given.
pub fn run_scheme(scenario: &Scenario, config: &SchemeConfig) -> Result<RunOutput, RunError> {
    let start = Instant::now();
    let (envelopes, schedule) = match config.scheme {
        Scheme::GreedyNoPlan => {
            let (schedule, envelope) = greedy_noplan(scenario, config);
            (vec![envelope], schedule)
        }
        Scheme::A => {
            let (envelopes, _) = rolling_plan(&scenario.aggregate_by_group(), config)?;
            let schedule = schedule_horizon(&envelopes, scenario, config)?;
            (envelopes, schedule)
        }
        Scheme::B | Scheme::C => {
            let (envelopes, _) = rolling_plan(scenario, config)?;
            let schedule = schedule_horizon(&envelopes, scenario, config)?;
            (envelopes, schedule)
        }
    };
    let plan_seconds = start.elapsed().as_secs_f64();
    let violations = verify_schedule(&schedule, &envelopes, scenario);
    let report = evaluate(&schedule, &envelopes, scenario, config.scheme);
    let mut info = RunInfo {
        scheme: config.scheme,
        windows: envelopes.len(),
        status: SolveStatus::Optimal,
        gap: 0.0,
        nodes: 0,
        plan_seconds,
        total_seconds: 0.0,
    };
    for env in &envelopes {
        info.status = weaker(info.status, env.solver.status);
        info.gap = info.gap.max(env.solver.gap);
        info.nodes += env.solver.nodes;
    }
    info.total_seconds = start.elapsed().as_secs_f64();
    log::info!(
        "{} run: {} window(s), status {}, {} violation(s), {:.2}s",
        config.scheme,
        info.windows,
        info.status.label(),
        violations.len(),
        info.total_seconds
    );
    Ok(RunOutput {
        envelopes,
        schedule,
        violations,
        report,
        info,
    })
}
