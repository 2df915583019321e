//! Double Metropolis-Hastings for the Potts hyperparameters.
//!
//! The label prior has an intractable normaliser `Z(theta)`. Each step
//! proposes `theta'`, draws auxiliary labels by a few sweeps under `theta'`
//! started from the current labels, and accepts with a ratio in which `Z`
//! cancels.
//!
//! Single-site Gibbs alone is not enough for the auxiliary chain. With
//! large `alpha` a subject label cannot move away from its group label one
//! site at a time, and with large `beta` a whole layer cannot be relabelled,
//! so the auxiliary draw stays near the current labels and biases the
//! hyperparameter posterior. Each auxiliary sweep therefore adds a
//! Swendsen-Wang update of each group's uniform columns and a lazy label
//! swap per group.

use rand::Rng;
use rand_distr::StandardNormal;

use super::config::RwScales;
use crate::lattice::Lattice;
use crate::potts::{
    column_cluster_update, gibbs_sweep_prior_ordered, EnergyStats, Group, Label, LabelField, NoLikelihood, PottsHyper,
    SweepOrder,
};

fn logit(x: f64) -> f64 {
    (x / (1.0 - x)).ln()
}

fn logistic(y: f64) -> f64 {
    1.0 / (1.0 + (-y).exp())
}

/// Joint random-walk proposal: log-normal on `alpha` and `beta`, normal on
/// the logit of `xi`.
pub fn propose_theta<R: Rng + ?Sized>(theta: &PottsHyper, scales: &RwScales, rng: &mut R) -> PottsHyper {
    let e: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
    PottsHyper {
        alpha: theta.alpha * (scales.alpha * e[0]).exp(),
        beta: theta.beta * (scales.beta * e[1]).exp(),
        xi: logistic(logit(theta.xi) + scales.xi * e[2]),
    }
}

/// Log of the proposal density ratio `q(theta | theta') / q(theta' | theta)`.
fn proposal_log_correction(from: &PottsHyper, to: &PottsHyper) -> f64 {
    let log_jac = |t: &PottsHyper| t.alpha.ln() + t.beta.ln() + (t.xi * (1.0 - t.xi)).ln();
    log_jac(to) - log_jac(from)
}

/// Log acceptance ratio of a double MH move from `theta` (labels `current`)
/// to `proposal` (auxiliary labels `aux`). The prior is uniform on its box,
/// so a proposal outside the box gives negative infinity.
pub fn dmh_log_ratio(
    lattice: &Lattice,
    current: &LabelField,
    aux: &LabelField,
    theta: &PottsHyper,
    proposal: &PottsHyper,
) -> f64 {
    if !proposal.in_prior_box() {
        return f64::NEG_INFINITY;
    }
    let cur = EnergyStats::of(lattice, current);
    let aux = EnergyStats::of(lattice, aux);
    aux.energy(theta) + cur.energy(proposal) - cur.energy(theta) - aux.energy(proposal)
        + proposal_log_correction(theta, proposal)
}

/// One Metropolis label swap per group under the label prior, with the
/// pair drawn independently so the move is lazy. Only the
/// offsets change: moving `n_a` sites from `a` to `b` and `n_b` back changes
/// the energy by `(n_b - n_a)(b^xi - a^xi)`.
pub fn prior_label_swaps<R: Rng + ?Sized>(labels: &mut LabelField, theta: &PottsHyper, rng: &mut R) {
    let k = labels.k();
    if k < 2 {
        return;
    }
    for group in Group::BOTH {
        // a == b is a no-op; without that chance an always-accepted swap
        // (a group with no subjects) would make the kernel periodic
        let a = rng.random_range(0..k);
        let b = rng.random_range(0..k);
        if a == b {
            continue;
        }
        let counts = labels.subject_counts(group);
        let offset = |l: usize| ((l + 1) as f64).powf(theta.xi);
        let log_r = (counts[b] as f64 - counts[a] as f64) * (offset(b) - offset(a));
        if log_r >= 0.0 || rng.random::<f64>().ln() < log_r {
            labels.swap_in_group(group, a as Label + 1, b as Label + 1);
        }
    }
}

/// How the auxiliary labels of a double MH step are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AuxChain {
    /// Sweeps started from the current labels.
    pub sweeps: usize,
    pub order: SweepOrder,
    /// Add column cluster updates and label swaps to each sweep.
    pub block_moves: bool,
}

/// One sweep of the auxiliary chain: single-site Gibbs, then, with block
/// moves, a column cluster update in each group and a label swap per group.
/// Each part leaves the label prior invariant.
pub fn aux_sweep<R: Rng + ?Sized>(
    lattice: &Lattice,
    labels: &mut LabelField,
    theta: &PottsHyper,
    aux: &AuxChain,
    rng: &mut R,
) {
    gibbs_sweep_prior_ordered(lattice, labels, theta, aux.order, rng);
    if aux.block_moves {
        for group in Group::BOTH {
            column_cluster_update(lattice, labels, group, theta, &NoLikelihood, rng);
        }
        prior_label_swaps(labels, theta, rng);
    }
}

/// One double MH step on `theta` given fixed labels. Returns the new value
/// and whether it was accepted.
pub fn dmh_step<R: Rng + ?Sized>(
    lattice: &Lattice,
    labels: &LabelField,
    theta: &PottsHyper,
    scales: &RwScales,
    aux_chain: &AuxChain,
    rng: &mut R,
) -> (PottsHyper, bool) {
    let proposal = propose_theta(theta, scales, rng);
    if !proposal.in_prior_box() {
        return (*theta, false);
    }
    let mut aux = labels.clone();
    for _ in 0..aux_chain.sweeps {
        aux_sweep(lattice, &mut aux, &proposal, aux_chain, rng);
    }
    let log_r = dmh_log_ratio(lattice, labels, &aux, theta, &proposal);
    if log_r >= 0.0 || rng.random::<f64>().ln() < log_r {
        (proposal, true)
    } else {
        (*theta, false)
    }
}
