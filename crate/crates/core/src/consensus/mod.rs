//! Round engines and convergence monitoring.

mod agent;
mod engine;
mod monitor;
mod training;

pub use agent::{lr_bound, AgentState, ForecastTask, LocalTask};
pub use engine::{ctl_round, dms_round, fedavg_round, Mixer, RoundMetrics, ServerState};
pub use monitor::{
    check_series, convergence_bound_check, BoundParams, BoundReport, CheckOptions,
    ConvergenceMonitor,
};
pub use training::{
    complexity_counters, disagreement, run_training, ComplexitySummary, Engine, RoundRecord,
    StageOrder, StopReason, StopRule, TrainingReport, TrainingSetup, DIVERGENCE_FACTOR,
};
