//! Posterior sampling: Gibbs updates for atoms and labels, random-walk
//! Metropolis for the degrees of freedom and double Metropolis-Hastings for
//! the Potts hyperparameters.

mod chain;
mod config;
mod dmh;
mod state;
mod swap;
mod trace;
mod updates;

pub use chain::{initialize, run_chain, run_chain_until, run_from, snapshot_atoms};
pub use config::{AtomDof, FitConfig, RwScales};
pub use dmh::{aux_sweep, dmh_log_ratio, AuxChain, dmh_step, prior_label_swaps, propose_theta};
pub use state::{ClusterStats, ModelState, Prepared, M_RANGE, NU_RANGE};
pub use trace::{Acceptance, HyperSample, Snapshot, TraceMeta, TraceStore};
pub use updates::{atom_log_prior, data_log_lik, update_atoms, update_dof, update_labels};

