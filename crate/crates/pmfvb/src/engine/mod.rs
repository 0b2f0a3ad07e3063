//! Generic particle MFVB engine: particle clouds, LMC block updates,
//! lower-bound estimation, stopping rules, and the alternating-update
//! driver.

mod cloud;
mod lmc;
mod lower_bound;
mod run;
mod stopping;

pub use cloud::ParticleCloud;
pub use lmc::{lmc_block_update, subsample_indices, LmcConfig};
pub(crate) use lmc::clip_max_norm;
pub use lower_bound::estimate_lower_bound;
pub use run::{run_pmfvb, BlockKind, BlockSpec, FactorizedTarget, PmfvbRun};
pub use stopping::{check_stop, RunTrace, StopKind, StoppingRule, TraceRecord};
