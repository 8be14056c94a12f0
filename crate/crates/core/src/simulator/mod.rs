//! Closed-loop scenarios around the planner: scripted targets, the
//! receding-horizon loop, behaviour labels and speed sweeps.

pub mod behavior;
pub mod classify;
pub mod presets;
pub mod run;
pub mod scenario;
pub mod sweep;

pub use behavior::{quintic_lateral, BehaviorScript, ScriptedTarget};
pub use classify::{classify_behavior, BehaviorLabel, Classification};
pub use run::{clearance, lead_target, run_scenario, SimLog, TickRecord, TickStatus};
pub use scenario::{ConfigError, ScenarioConfig, SweepConfig, TargetConfig, WeightMode};
pub use sweep::{speed_grid, summarize, sweep_speeds, switch_speed, LabelSummary, SweepRow};
