//! The two-level weighted Potts model on subject labels `g` and group labels
//! `h`.
//!
//! Subject label full conditional:
//!
//! ```text
//! P(g_iv = k | .) ∝ exp[-k^xi + beta * #{u ∈ N_v : g_iu = k} + alpha * 1(h_{x_i v} = k)]
//! ```
//!
//! Group label full conditional (no offset term):
//!
//! ```text
//! P(h_xv = k | .) ∝ exp[beta * #{u ∈ N_v : h_xu = k} + alpha * #{j : x_j = x, g_jv = k}]
//! ```
//!
//! The joint energy attaches the offset once per site, which is the unique
//! placement consistent with both conditionals.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::rng;

/// Cluster label, 1-based (`1..=K`).
pub type Label = u16;

/// Maximum supported number of clusters.
pub const MAX_K: usize = Label::MAX as usize;

// Below this many label updates per sweep the layers are swept serially.
const PAR_MIN_WORK: usize = 8192;

/// Group indicator `x_i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Control,
    Treatment,
}

impl Group {
    pub const BOTH: [Group; 2] = [Group::Control, Group::Treatment];

    pub fn index(self) -> usize {
        match self {
            Group::Control => 0,
            Group::Treatment => 1,
        }
    }

    pub fn from_indicator(x: u8) -> Result<Self> {
        match x {
            0 => Ok(Group::Control),
            1 => Ok(Group::Treatment),
            _ => Err(Error::Format(format!("group indicator must be 0 or 1, got {x}"))),
        }
    }
}

/// Potts hyperparameters `theta = (alpha, beta, xi)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PottsHyper {
    /// Group-clustering strength.
    pub alpha: f64,
    /// Spatial coupling.
    pub beta: f64,
    /// Concentration of the offset `-k^xi`.
    pub xi: f64,
}

impl PottsHyper {
    pub const ALPHA_MAX: f64 = 20.0;
    pub const BETA_MAX: f64 = 20.0;
    pub const XI_MAX: f64 = 1.0;

    /// Checked constructor: the values must lie in the uniform prior box
    /// `[0, 20] x [0, 20] x [0, 1]`.
    pub fn new(alpha: f64, beta: f64, xi: f64) -> Result<Self> {
        let theta = Self { alpha, beta, xi };
        if !theta.in_prior_box() {
            return Err(Error::InvalidConfig(format!(
                "Potts hyperparameters outside [0,20]x[0,20]x[0,1]: {theta:?}"
            )));
        }
        Ok(theta)
    }

    pub fn zero() -> Self {
        Self { alpha: 0.0, beta: 0.0, xi: 0.0 }
    }

    pub fn in_prior_box(&self) -> bool {
        (0.0..=Self::ALPHA_MAX).contains(&self.alpha)
            && (0.0..=Self::BETA_MAX).contains(&self.beta)
            && (0.0..=Self::XI_MAX).contains(&self.xi)
    }

    /// Offsets `eta_k = -k^xi` for `k = 1..=K`, indexed from zero.
    pub fn offsets(&self, k: usize) -> Vec<f64> {
        (1..=k).map(|c| -(c as f64).powf(self.xi)).collect()
    }
}

/// Subject labels `g_iv` (one layer per subject) and group labels `h_xv`
/// (exactly two layers), indexed by active site.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelField {
    k: usize,
    n_sites: usize,
    group_of: Vec<Group>,
    g: Vec<Label>,
    h: Vec<Label>,
}

impl LabelField {
    /// Every label set to `label`.
    pub fn constant(k: usize, n_sites: usize, group_of: Vec<Group>, label: Label) -> Result<Self> {
        check_k(k)?;
        if label == 0 || label as usize > k {
            return Err(Error::InvalidConfig(format!("label {label} outside 1..={k}")));
        }
        let n_subj = group_of.len();
        Ok(Self { k, n_sites, group_of, g: vec![label; n_subj * n_sites], h: vec![label; 2 * n_sites] })
    }

    /// Independent uniform labels.
    pub fn random<R: Rng + ?Sized>(k: usize, n_sites: usize, group_of: Vec<Group>, rng: &mut R) -> Result<Self> {
        let mut field = Self::constant(k, n_sites, group_of, 1)?;
        for l in field.g.iter_mut().chain(field.h.iter_mut()) {
            *l = rng.random_range(1..=k as Label);
        }
        Ok(field)
    }

    pub fn from_layers(k: usize, group_of: Vec<Group>, g: Vec<Vec<Label>>, h: [Vec<Label>; 2]) -> Result<Self> {
        check_k(k)?;
        if g.len() != group_of.len() {
            return Err(Error::LengthMismatch(g.len(), group_of.len()));
        }
        let n_sites = h[0].len();
        if h[1].len() != n_sites {
            return Err(Error::LengthMismatch(h[1].len(), n_sites));
        }
        if let Some(bad) = g.iter().find(|l| l.len() != n_sites) {
            return Err(Error::LengthMismatch(bad.len(), n_sites));
        }
        let field = Self {
            k,
            n_sites,
            group_of,
            g: g.into_iter().flatten().collect(),
            h: h.into_iter().flatten().collect(),
        };
        if field.g.iter().chain(&field.h).any(|&l| l == 0 || l as usize > k) {
            return Err(Error::InvalidConfig(format!("labels must lie in 1..={k}")));
        }
        Ok(field)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn n_subjects(&self) -> usize {
        self.group_of.len()
    }

    pub fn group_of(&self, subject: usize) -> Group {
        self.group_of[subject]
    }

    pub fn groups(&self) -> &[Group] {
        &self.group_of
    }

    pub fn subjects_in(&self, group: Group) -> impl Iterator<Item = usize> + '_ {
        self.group_of.iter().enumerate().filter(move |(_, &x)| x == group).map(|(i, _)| i)
    }

    #[inline]
    pub fn g(&self, subject: usize, site: usize) -> Label {
        self.g[subject * self.n_sites + site]
    }

    #[inline]
    pub fn h(&self, group: Group, site: usize) -> Label {
        self.h[group.index() * self.n_sites + site]
    }

    pub fn set_g(&mut self, subject: usize, site: usize, label: Label) {
        assert!(label >= 1 && label as usize <= self.k);
        self.g[subject * self.n_sites + site] = label;
    }

    pub fn set_h(&mut self, group: Group, site: usize, label: Label) {
        assert!(label >= 1 && label as usize <= self.k);
        self.h[group.index() * self.n_sites + site] = label;
    }

    pub fn subject_layer(&self, subject: usize) -> &[Label] {
        &self.g[subject * self.n_sites..(subject + 1) * self.n_sites]
    }

    pub fn group_layer(&self, group: Group) -> &[Label] {
        let x = group.index();
        &self.h[x * self.n_sites..(x + 1) * self.n_sites]
    }

    /// Exchanges labels `a` and `b` in every subject layer of `group` and in
    /// its group layer.
    pub(crate) fn swap_in_group(&mut self, group: Group, a: Label, b: Label) {
        let swap = |l: &mut Label| {
            if *l == a {
                *l = b;
            } else if *l == b {
                *l = a;
            }
        };
        let n = self.n_sites;
        for i in 0..self.group_of.len() {
            if self.group_of[i] == group {
                self.g[i * n..(i + 1) * n].iter_mut().for_each(swap);
            }
        }
        let x = group.index();
        self.h[x * n..(x + 1) * n].iter_mut().for_each(swap);
    }

    /// Occurrences of each label in the subject layers of `group`.
    pub(crate) fn subject_counts(&self, group: Group) -> Vec<u64> {
        let mut counts = vec![0u64; self.k];
        for i in self.subjects_in(group) {
            for &l in self.subject_layer(i) {
                counts[l as usize - 1] += 1;
            }
        }
        counts
    }
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 || k > MAX_K {
        return Err(Error::InvalidConfig(format!("K must lie in 1..={MAX_K}, got {k}")));
    }
    Ok(())
}

/// Unnormalised log weights for `g_iv` (prior part only).
#[inline]
fn subject_log_weights(
    lat: &Lattice,
    layer: &[Label],
    h_label: Label,
    theta: &PottsHyper,
    offsets: &[f64],
    v: usize,
    out: &mut [f64],
) {
    out.copy_from_slice(offsets);
    for &u in lat.active_neighbors(v) {
        out[layer[u as usize] as usize - 1] += theta.beta;
    }
    out[h_label as usize - 1] += theta.alpha;
}

/// Unnormalised log weights for `h_xv`.
#[inline]
#[allow(clippy::too_many_arguments)]
fn group_log_weights(
    lat: &Lattice,
    layer: &[Label],
    g: &[Label],
    members: &[usize],
    n_sites: usize,
    theta: &PottsHyper,
    v: usize,
    out: &mut [f64],
) {
    out.fill(0.0);
    for &u in lat.active_neighbors(v) {
        out[layer[u as usize] as usize - 1] += theta.beta;
    }
    for &j in members {
        out[g[j * n_sites + v] as usize - 1] += theta.alpha;
    }
}

/// Normalises log weights in place into probabilities.
pub(crate) fn normalize_log_weights(w: &mut [f64]) {
    let max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in w.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in w.iter_mut() {
        *x /= total;
    }
}

/// Draws a 1-based label from unnormalised log weights. If every weight
/// underflows (or a weight is NaN) the arg-max label is returned.
#[inline]
pub(crate) fn sample_log_weights<R: Rng + ?Sized>(w: &mut [f64], rng: &mut R) -> Label {
    let mut max = f64::NEG_INFINITY;
    let mut arg = 0;
    for (k, &x) in w.iter().enumerate() {
        if x > max {
            max = x;
            arg = k;
        }
    }
    if !max.is_finite() {
        return arg as Label + 1;
    }
    let mut total = 0.0;
    for x in w.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    if !(total > 0.0) || !total.is_finite() {
        return arg as Label + 1;
    }
    let mut r = rng.random::<f64>() * total;
    for (k, &x) in w.iter().enumerate() {
        r -= x;
        if r < 0.0 {
            return k as Label + 1;
        }
    }
    // rounding: fall back to the last positive-weight label
    w.iter().rposition(|&x| x > 0.0).map_or(arg, |k| k) as Label + 1
}

/// Full conditional of `g_iv` given everything else (no data term).
/// `site` is an active index.
pub fn subject_label_conditional(
    lat: &Lattice,
    state: &LabelField,
    theta: &PottsHyper,
    subject: usize,
    site: usize,
) -> Vec<f64> {
    let offsets = theta.offsets(state.k);
    let mut w = vec![0.0; state.k];
    let h = state.h(state.group_of(subject), site);
    subject_log_weights(lat, state.subject_layer(subject), h, theta, &offsets, site, &mut w);
    normalize_log_weights(&mut w);
    w
}

/// Full conditional of `h_xv` given everything else.
pub fn group_label_conditional(
    lat: &Lattice,
    state: &LabelField,
    theta: &PottsHyper,
    group: Group,
    site: usize,
) -> Vec<f64> {
    let members: Vec<usize> = state.subjects_in(group).collect();
    let mut w = vec![0.0; state.k];
    group_log_weights(lat, state.group_layer(group), &state.g, &members, state.n_sites, theta, site, &mut w);
    normalize_log_weights(&mut w);
    w
}

/// Unnormalised joint log-PMF `U(g, h, theta)`, each undirected edge counted
/// once:
///
/// ```text
/// sum_{i,v} [alpha 1(g_iv = h_{x_i v}) - g_iv^xi]
///   + beta sum_x sum_{u~v} 1(h_xu = h_xv) + beta sum_i sum_{u~v} 1(g_iu = g_iv)
/// ```
pub fn joint_log_energy(lat: &Lattice, state: &LabelField, theta: &PottsHyper) -> f64 {
    let stats = EnergyStats::of(lat, state);
    stats.energy(theta)
}

/// Sufficient statistics of the joint energy; `U` is affine in `alpha` and
/// `beta` given these.
#[derive(Clone, Debug)]
pub(crate) struct EnergyStats {
    /// `sum_{i,v} 1(g_iv = h_{x_i v})`
    pub(crate) group_matches: f64,
    /// equal-label edges summed over all layers
    pub(crate) equal_edges: f64,
    /// how many subject labels take each value
    pub(crate) label_counts: Vec<u64>,
}

impl EnergyStats {
    pub(crate) fn of(lat: &Lattice, state: &LabelField) -> Self {
        let n = state.n_sites;
        let mut label_counts = vec![0u64; state.k];
        let mut group_matches = 0u64;
        for (i, layer) in state.g.chunks_exact(n).enumerate() {
            let h = state.group_layer(state.group_of[i]);
            for (v, &l) in layer.iter().enumerate() {
                label_counts[l as usize - 1] += 1;
                group_matches += (l == h[v]) as u64;
            }
        }
        let mut equal_edges = 0u64;
        for layer in state.g.chunks_exact(n).chain(state.h.chunks_exact(n)) {
            for (u, v) in lat.edges() {
                equal_edges += (layer[u] == layer[v]) as u64;
            }
        }
        Self { group_matches: group_matches as f64, equal_edges: equal_edges as f64, label_counts }
    }

    pub(crate) fn energy(&self, theta: &PottsHyper) -> f64 {
        let offset: f64 = self
            .label_counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(k, &c)| c as f64 * ((k + 1) as f64).powf(theta.xi))
            .sum();
        theta.alpha * self.group_matches + theta.beta * self.equal_edges - offset
    }
}

/// Site visiting order within one layer sweep.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepOrder {
    /// All sites of parity 0, then parity 1. Each colour class is
    /// conditionally independent, so this is the parallel-safe order.
    #[default]
    Checkerboard,
    /// Plain raster order.
    Raster,
    /// A fresh random permutation each sweep.
    RandomScan,
}

/// Adds a data log-likelihood to the label weights of subject sites.
pub trait SiteLikelihood: Sync {
    fn add_log_lik(&self, subject: usize, site: usize, out: &mut [f64]);
}

/// The prior-only sweep: no data term.
pub struct NoLikelihood;

impl SiteLikelihood for NoLikelihood {
    #[inline]
    fn add_log_lik(&self, _subject: usize, _site: usize, _out: &mut [f64]) {}
}

const TAG_SUBJECT: u64 = 0;
const TAG_GROUP: u64 = 1;

fn visit_sites<F: FnMut(usize, &mut rng::StreamRng)>(lat: &Lattice, order: SweepOrder, key: u64, tags: [u64; 2], mut f: F) {
    match order {
        SweepOrder::Checkerboard => {
            for color in 0..2u8 {
                let mut r = rng::stream(key, &[tags[0], tags[1], color as u64]);
                for &v in lat.sites_of_color(color) {
                    f(v as usize, &mut r);
                }
            }
        }
        SweepOrder::Raster => {
            let mut r = rng::stream(key, &[tags[0], tags[1], 0]);
            for v in 0..lat.len() {
                f(v, &mut r);
            }
        }
        SweepOrder::RandomScan => {
            let mut r = rng::stream(key, &[tags[0], tags[1], 0]);
            let mut sites: Vec<usize> = (0..lat.len()).collect();
            sites.shuffle(&mut r);
            for v in sites {
                f(v, &mut r);
            }
        }
    }
}

/// One systematic sweep: every subject layer, then both group layers. The
/// randomness of each (layer, colour) pair comes from its own stream derived
/// from `key`, so the result is independent of how layers are scheduled.
pub(crate) fn sweep_with<L: SiteLikelihood>(
    lat: &Lattice,
    state: &mut LabelField,
    theta: &PottsHyper,
    order: SweepOrder,
    lik: &L,
    key: u64,
) {
    let n = state.n_sites;
    let k = state.k;
    debug_assert_eq!(n, lat.len());
    let offsets = theta.offsets(k);
    let parallel = n * (state.group_of.len() + 2) >= PAR_MIN_WORK;

    {
        let LabelField { g, h, group_of, .. } = &mut *state;
        let h: &[Label] = h;
        let group_of: &[Group] = group_of;
        let update_subject = |(i, layer): (usize, &mut [Label])| {
            let x = group_of[i].index();
            let hl = &h[x * n..(x + 1) * n];
            let mut w = vec![0.0; k];
            visit_sites(lat, order, key, [TAG_SUBJECT, i as u64], |v, r| {
                subject_log_weights(lat, layer, hl[v], theta, &offsets, v, &mut w);
                lik.add_log_lik(i, v, &mut w);
                layer[v] = sample_log_weights(&mut w, r);
            });
        };
        if parallel {
            g.par_chunks_mut(n).enumerate().for_each(update_subject);
        } else {
            g.chunks_mut(n).enumerate().for_each(update_subject);
        }
    }

    {
        let members: [Vec<usize>; 2] = Group::BOTH.map(|x| state.subjects_in(x).collect());
        let LabelField { g, h, .. } = &mut *state;
        let g: &[Label] = g;
        let update_group = |(x, layer): (usize, &mut [Label])| {
            let mut w = vec![0.0; k];
            visit_sites(lat, order, key, [TAG_GROUP, x as u64], |v, r| {
                group_log_weights(lat, layer, g, &members[x], n, theta, v, &mut w);
                layer[v] = sample_log_weights(&mut w, r);
            });
        };
        if parallel {
            h.par_chunks_mut(n).enumerate().for_each(update_group);
        } else {
            h.chunks_mut(n).enumerate().for_each(update_group);
        }
    }
}

/// One Gibbs sweep of all labels from the label prior (no data).
pub fn gibbs_sweep_prior<R: Rng + ?Sized>(lat: &Lattice, state: &mut LabelField, theta: &PottsHyper, rng: &mut R) {
    gibbs_sweep_prior_ordered(lat, state, theta, SweepOrder::default(), rng);
}

pub fn gibbs_sweep_prior_ordered<R: Rng + ?Sized>(
    lat: &Lattice,
    state: &mut LabelField,
    theta: &PottsHyper,
    order: SweepOrder,
    rng: &mut R,
) {
    let key = rng.next_u64();
    sweep_with(lat, state, theta, order, &NoLikelihood, key);
}

fn find(parent: &mut [u32], mut a: u32) -> u32 {
    while parent[a as usize] != a {
        parent[a as usize] = parent[parent[a as usize] as usize];
        a = parent[a as usize];
    }
    a
}

/// Swendsen-Wang update of the uniform columns of `group`.
///
/// A column is site `v` across the group's subject layers and its group
/// layer. Holding the other columns fixed, the labels of the uniform ones
/// form a Potts field with coupling `beta * (N_x + 1)` in an external field
/// (edges into non-uniform neighbours, offsets, data), since the coupling
/// terms are the same for every uniform label. Neighbouring uniform columns
/// with equal labels are bonded with probability `1 - exp(-coupling)`, and
/// each bonded cluster draws a new label from its field alone. This is an
/// exact block Gibbs update; it moves whole regions that single-site updates
/// cannot once `alpha` and `beta` are large.
pub fn column_cluster_update<L: SiteLikelihood, R: Rng + ?Sized>(
    lat: &Lattice,
    state: &mut LabelField,
    group: Group,
    theta: &PottsHyper,
    lik: &L,
    rng: &mut R,
) {
    let (k, n) = (state.k, state.n_sites);
    if k < 2 {
        return;
    }
    let members: Vec<usize> = state.subjects_in(group).collect();
    let x = group.index();
    let column = |st: &LabelField, v: usize| {
        let c = st.h[x * n + v];
        members.iter().all(|&i| st.g[i * n + v] == c).then_some(c)
    };
    let uniform: Vec<Option<Label>> = (0..n).map(|v| column(state, v)).collect();

    let bond = 1.0 - (-theta.beta * (members.len() + 1) as f64).exp();
    let mut parent: Vec<u32> = (0..n as u32).collect();
    for (u, v) in lat.edges() {
        if let (Some(a), Some(b)) = (uniform[u], uniform[v]) {
            if a == b && rng.random::<f64>() < bond {
                let (ru, rv) = (find(&mut parent, u as u32), find(&mut parent, v as u32));
                parent[ru as usize] = rv;
            }
        }
    }

    let offsets = theta.offsets(k);
    let mut cluster_of = vec![u32::MAX; n];
    let mut weights: Vec<f64> = Vec::new();
    let mut site_w = vec![0.0; k];
    for v in (0..n).filter(|&v| uniform[v].is_some()) {
        let root = find(&mut parent, v as u32) as usize;
        if cluster_of[root] == u32::MAX {
            cluster_of[root] = (weights.len() / k) as u32;
            weights.resize(weights.len() + k, 0.0);
        }
        cluster_of[v] = cluster_of[root];
        site_w.iter_mut().zip(&offsets).for_each(|(w, o)| *w = members.len() as f64 * o);
        for &u in lat.active_neighbors(v) {
            let u = u as usize;
            if uniform[u].is_some() {
                continue;
            }
            for l in members.iter().map(|&i| state.g[i * n + u]).chain(std::iter::once(state.h[x * n + u])) {
                site_w[l as usize - 1] += theta.beta;
            }
        }
        for &i in &members {
            lik.add_log_lik(i, v, &mut site_w);
        }
        let c = cluster_of[v] as usize;
        weights[c * k..(c + 1) * k].iter_mut().zip(&site_w).for_each(|(w, s)| *w += s);
    }

    let labels: Vec<Label> = weights.chunks_exact_mut(k).map(|w| sample_log_weights(w, rng)).collect();
    for v in (0..n).filter(|&v| uniform[v].is_some()) {
        let l = labels[cluster_of[v] as usize];
        for &i in &members {
            state.g[i * n + v] = l;
        }
        state.h[x * n + v] = l;
    }
}
