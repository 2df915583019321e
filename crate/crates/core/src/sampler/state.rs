use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::potts::{Group, LabelField, PottsHyper};
use crate::spd::{cholesky_packed, packed_len, trace_weights_packed, SpdMatrix};
use crate::tensor::Dataset;

pub const M_RANGE: (f64, f64) = (5.0, 50.0);
pub const NU_RANGE: (f64, f64) = (4.0, 50.0);

/// Everything the sampler updates, plus the fixed hyper-mean `sigma`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub atoms: Vec<SpdMatrix>,
    pub labels: LabelField,
    /// Data degrees of freedom.
    pub m: f64,
    /// Atom-prior degrees of freedom.
    pub nu: f64,
    pub theta: PottsHyper,
    pub sigma: SpdMatrix,
}

/// Per-observation quantities that never change during a run: the inverse
/// of every tensor (packed, off-diagonals doubled so a dot product with a
/// packed matrix gives a trace) and the total log-determinant.
pub struct Prepared {
    pub(crate) dim: usize,
    pub(crate) n_sites: usize,
    pub(crate) n_subjects: usize,
    pub(crate) inv_weights: Vec<f64>,
    pub(crate) log_dets: Vec<f64>,
    pub(crate) sum_log_det: f64,
}

impl Prepared {
    pub fn new(data: &Dataset) -> Result<Self> {
        let p = data.dim();
        let q = packed_len(p);
        let per_subject: Vec<(Vec<f64>, Vec<f64>)> = data
            .fields()
            .par_iter()
            .map(|f| -> Result<_> {
                let mut w = Vec::with_capacity(f.len() * q);
                let mut ld = Vec::with_capacity(f.len());
                for a in 0..f.len() {
                    let l = cholesky_packed(p, f.packed(a))?;
                    ld.push(l.log_det());
                    w.extend_from_slice(&trace_weights_packed(p, l.spd_inverse().upper()));
                }
                Ok((w, ld))
            })
            .collect::<Result<_>>()?;
        let mut inv_weights = Vec::with_capacity(data.n_subjects() * data.n_sites() * q);
        let mut log_dets = Vec::with_capacity(data.n_subjects() * data.n_sites());
        for (w, ld) in per_subject {
            inv_weights.extend(w);
            log_dets.extend(ld);
        }
        let sum_log_det = log_dets.iter().sum();
        Ok(Self {
            dim: p,
            n_sites: data.n_sites(),
            n_subjects: data.n_subjects(),
            inv_weights,
            log_dets,
            sum_log_det,
        })
    }

    #[inline]
    pub(crate) fn inv_weight(&self, subject: usize, site: usize) -> &[f64] {
        let q = packed_len(self.dim);
        let o = (subject * self.n_sites + site) * q;
        &self.inv_weights[o..o + q]
    }

    pub fn n_observations(&self) -> usize {
        self.n_subjects * self.n_sites
    }
}

/// Per-cluster sufficient statistics: counts `n_k` and scatter sums
/// `S_k = sum_{g_iv = k} A_iv^{-1}` (packed, off-diagonals doubled).
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterStats {
    pub(crate) counts: Vec<u64>,
    pub(crate) scatter: Vec<f64>,
}

impl ClusterStats {
    /// Accumulates per subject in parallel, then reduces in subject order so
    /// the floating-point result does not depend on scheduling.
    pub fn compute(prep: &Prepared, labels: &LabelField) -> Self {
        Self::compute_subjects(prep, labels, |_| true)
    }

    /// Statistics of one group's subjects only.
    pub(crate) fn compute_group(prep: &Prepared, labels: &LabelField, group: Group) -> Self {
        Self::compute_subjects(prep, labels, |i| labels.group_of(i) == group)
    }

    fn compute_subjects(prep: &Prepared, labels: &LabelField, keep: impl Fn(usize) -> bool + Sync) -> Self {
        let k = labels.k();
        let q = packed_len(prep.dim);
        let partial: Vec<(Vec<u64>, Vec<f64>)> = (0..prep.n_subjects)
            .into_par_iter()
            .filter(|&i| keep(i))
            .map(|i| {
                let mut counts = vec![0u64; k];
                let mut scatter = vec![0.0; k * q];
                for (v, &l) in labels.subject_layer(i).iter().enumerate() {
                    let c = l as usize - 1;
                    counts[c] += 1;
                    for (s, w) in scatter[c * q..(c + 1) * q].iter_mut().zip(prep.inv_weight(i, v)) {
                        *s += w;
                    }
                }
                (counts, scatter)
            })
            .collect();
        let mut counts = vec![0u64; k];
        let mut scatter = vec![0.0; k * q];
        for (c, s) in partial {
            counts.iter_mut().zip(c).for_each(|(a, b)| *a += b);
            scatter.iter_mut().zip(s).for_each(|(a, b)| *a += b);
        }
        Self { counts, scatter }
    }

    pub(crate) fn sum(&self, other: &Self) -> Self {
        Self {
            counts: self.counts.iter().zip(&other.counts).map(|(a, b)| a + b).collect(),
            scatter: self.scatter.iter().zip(&other.scatter).map(|(a, b)| a + b).collect(),
        }
    }

    pub(crate) fn swap(&mut self, a: usize, b: usize, q: usize) {
        self.counts.swap(a, b);
        let (lo, hi) = (a.min(b), a.max(b));
        let (left, right) = self.scatter.split_at_mut(hi * q);
        left[lo * q..(lo + 1) * q].swap_with_slice(&mut right[..q]);
    }

    pub fn count(&self, k: usize) -> u64 {
        self.counts[k]
    }

    /// `S_k` as weights: `tr(V S_k) = dot(V.upper(), weights)`.
    pub(crate) fn scatter_weights(&self, k: usize, q: usize) -> &[f64] {
        &self.scatter[k * q..(k + 1) * q]
    }
}

pub(crate) fn check_state(state: &ModelState, prep: &Prepared) -> Result<()> {
    if state.atoms.len() != state.labels.k() {
        return Err(Error::LengthMismatch(state.atoms.len(), state.labels.k()));
    }
    if state.labels.n_sites() != prep.n_sites || state.labels.n_subjects() != prep.n_subjects {
        return Err(Error::LatticeMismatch("label field does not match the data".into()));
    }
    if state.atoms.iter().chain([&state.sigma]).any(|a| a.dim() != prep.dim) {
        return Err(Error::DimensionMismatch { expected: prep.dim, found: state.sigma.dim() });
    }
    Ok(())
}
