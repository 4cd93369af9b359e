//! Attacks against the training process: poisoned broadcasts, line
//! interception and gradient-leakage reconstruction.

mod dlg;
mod intercept;
mod leakage;
mod poison;
mod poisoning;

pub use dlg::{dlg_reconstruct, dlg_reconstruct_from, DlgOptions, ReconstructionResult};
pub use intercept::{infer_gradient, InterceptedTrace, Snapshot};
pub use leakage::{dlg_compare_topologies, AttackOutcome, DlgConfig, LeakageReport, SecureLeakage};
pub use poison::{poison_broadcast, PoisonMode, PoisonPolicy};
pub use poisoning::{run_poisoning_experiment, PoisoningConfig, PoisoningReport, StrategyOutcome};
