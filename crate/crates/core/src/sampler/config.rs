use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potts::SweepOrder;

/// Random-walk step sizes: log scale for `m`, `nu`, `alpha`, `beta`; logit
/// scale for `xi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RwScales {
    pub m: f64,
    pub nu: f64,
    pub alpha: f64,
    pub beta: f64,
    pub xi: f64,
}

impl Default for RwScales {
    fn default() -> Self {
        Self { m: 0.1, nu: 0.1, alpha: 0.1, beta: 0.1, xi: 0.1 }
    }
}

impl RwScales {
    fn all(&self) -> [f64; 5] {
        [self.m, self.nu, self.alpha, self.beta, self.xi]
    }
}

/// Which degrees of freedom the atom full conditional uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AtomDof {
    /// `n_k m + nu`, with `n_k` counting sites over all subjects.
    #[default]
    Conjugate,
    /// `N n_k m + nu`, the alternative printed form.
    Printed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    /// Number of mixture components.
    pub k: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub rw_scales: RwScales,
    /// Tune the random-walk scales during burn-in (frozen afterwards).
    pub adapt: bool,
    /// Gibbs sweeps used to draw the auxiliary labels in each double MH step.
    pub dmh_inner_sweeps: usize,
    /// Add column cluster updates and label swaps to each auxiliary sweep.
    /// This brings the double MH step much closer to exact, which moves the
    /// hyperparameter posterior; see the README before turning it on.
    pub dmh_block_moves: bool,
    /// Keep a label/atom snapshot every `thin` retained iterations.
    pub thin: usize,
    pub sweep_order: SweepOrder,
    pub atom_dof: AtomDof,
    /// Group-wise label-swap proposals per iteration, with atoms integrated
    /// out. Zero gives the plain single-site sampler.
    pub label_swaps: usize,
    /// Follow each label sweep with a Swendsen-Wang update of every group's
    /// uniform columns. Off by default: the label update is then the plain
    /// Gibbs sweep.
    pub column_updates: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            k: 10,
            iterations: 8000,
            burn_in: 3000,
            seed: 0,
            rw_scales: RwScales::default(),
            adapt: true,
            dmh_inner_sweeps: 5,
            dmh_block_moves: false,
            thin: 50,
            sweep_order: SweepOrder::default(),
            atom_dof: AtomDof::default(),
            label_swaps: 50,
            column_updates: false,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.k == 0 || self.k > crate::potts::MAX_K {
            return bad(format!("k must be in 1..={}, got {}", crate::potts::MAX_K, self.k));
        }
        if self.burn_in >= self.iterations {
            return bad(format!("burn_in ({}) must be less than iterations ({})", self.burn_in, self.iterations));
        }
        if self.rw_scales.all().iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return bad(format!("random-walk scales must be positive: {:?}", self.rw_scales));
        }
        if self.thin == 0 {
            return bad("thin must be at least 1".into());
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        self.iterations - self.burn_in
    }
}
