//! Adaptive simulation of pipe networks.
//!
//! The time horizon is split into equal windows. Each window is simulated,
//! its errors are estimated, and while the relative network error exceeds the
//! tolerance a refinement strategy upgrades models and meshes before the
//! window is simulated again from its starting state. Accepted windows are
//! then coarsened where the predicted error leaves enough headroom.

mod adaptive;
mod export;
mod solver;
mod topology;

pub use adaptive::{
    coarsen, estimate_errors, reference_settings, run_adaptive, run_fixed, run_reference,
    AdaptiveRun, ReferenceRun, WindowReport,
};
pub use export::{export_window_reports, write_fields, write_window_reports, WINDOW_HEADER};
pub use solver::{
    simulate_window, stationary_state, target_functional, NetworkState, PipeSetting, WindowOutcome,
};
pub use topology::{
    EndKind, GasDefaults, NetworkFile, NetworkTopology, Node, NodeKind, Pipe, PipeSpec, Profile,
    SimulationPlan, TargetFunctional,
};

/// The bundled twelve-pipe regression network.
pub const REGRESSION_NETWORK: &str = include_str!("../../data/regression_network.toml");
