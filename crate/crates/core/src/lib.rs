//! Two-layer production planning and scheduling for injection-molding
//! shops: a profit-maximizing rolling-horizon MILP planner, a
//! due-date-driven daily scheduler, and the metrics used to compare
//! execution schemes.

pub mod domain;
pub mod metrics;
pub mod milp;
pub mod oracle;
pub mod pipeline;
pub mod planner;
pub mod scenario_io;
pub mod scheduler;
