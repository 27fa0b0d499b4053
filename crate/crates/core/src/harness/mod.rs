//! Monte Carlo experiment driver.
//!
//! Each trial derives its seeds from the master seed and its trial index, and
//! per-trial results are merged in trial order, so a run is bit-reproducible
//! for any thread count and for either [`ExecMode`].

mod results;
mod spec;
mod sweeps;

pub use results::{Curve, Point, ResultSet, Stats, CURVE_SCHEMA_VERSION};
pub use spec::{
    AlgorithmKind, AlgorithmSpec, ExperimentKind, ExperimentSpec, InitMode, ScenarioSpec,
    TimingSpec, TopologySpec,
};
pub use sweeps::{
    run_ber_sweep, run_mse_sweep, run_rate_table, run_simulation, SimulationOutput, BER_BATCH,
};

use crate::Result;
use std::ops::Range;

/// How trials are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    /// Rayon thread pool; falls back to sequential without the `parallel`
    /// feature.
    Parallel,
}

impl Default for ExecMode {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Self::Parallel
        } else {
            Self::Sequential
        }
    }
}

/// Maps `f` over `trials`, keeping results in trial order.
pub fn map_trials<T, F>(mode: ExecMode, trials: Range<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => {
            use rayon::prelude::*;
            trials.into_par_iter().map(f).collect()
        }
        _ => trials.map(f).collect(),
    }
}
