use serde::{Deserialize, Serialize};

use super::config::{FitConfig, RwScales};
use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::potts::{Group, Label};

/// Run description stored alongside the samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub config: FitConfig,
    pub dim: usize,
    pub dims: Vec<usize>,
    pub n_sites: usize,
    pub groups: Vec<Group>,
    pub subject_ids: Vec<String>,
    /// Packed upper triangle of the fixed hyper-mean.
    pub sigma: Vec<f64>,
}

/// One retained draw of the scalar parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperSample {
    pub alpha: f64,
    pub beta: f64,
    pub xi: f64,
    pub m: f64,
    pub nu: f64,
}

impl HyperSample {
    pub const NAMES: [&'static str; 5] = ["alpha", "beta", "xi", "m", "nu"];

    pub fn as_array(&self) -> [f64; 5] {
        [self.alpha, self.beta, self.xi, self.m, self.nu]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self { alpha: a[0], beta: a[1], xi: a[2], m: a[3], nu: a[4] }
    }
}

/// Thinned copy of labels and atoms.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub iteration: u32,
    /// Packed atoms, `K * p(p+1)/2` values.
    pub atoms: Vec<f64>,
    /// Subject labels, subject-major.
    pub g: Vec<Label>,
    /// Group labels, control layer then treatment layer.
    pub h: Vec<Label>,
}

/// Post-burn-in acceptance rates and the frozen step sizes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Acceptance {
    pub m: f64,
    pub nu: f64,
    pub theta: f64,
    pub scales: RwScales,
}

/// Output of a chain: retained hyperparameter draws, the per-voxel
/// group-label agreement indicators `1(h_0v = h_1v)` (bit-packed, one row per
/// retained iteration) and thinned snapshots.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceStore {
    pub meta: TraceMeta,
    pub mask: Vec<bool>,
    pub samples: Vec<HyperSample>,
    agreement: Vec<u8>,
    pub snapshots: Vec<Snapshot>,
    pub acceptance: Acceptance,
    pub interrupted: bool,
}

impl TraceStore {
    pub fn new(meta: TraceMeta, mask: Vec<bool>) -> Self {
        Self {
            meta,
            mask,
            samples: Vec::new(),
            agreement: Vec::new(),
            snapshots: Vec::new(),
            acceptance: Acceptance::default(),
            interrupted: false,
        }
    }

    pub(crate) fn from_parts(
        meta: TraceMeta,
        mask: Vec<bool>,
        samples: Vec<HyperSample>,
        agreement: Vec<u8>,
        snapshots: Vec<Snapshot>,
        acceptance: Acceptance,
        interrupted: bool,
    ) -> Result<Self> {
        let row = meta.n_sites.div_ceil(8);
        if agreement.len() != row * samples.len() {
            return Err(Error::Format("agreement bit rows do not match the sample count".into()));
        }
        Ok(Self { meta, mask, samples, agreement, snapshots, acceptance, interrupted })
    }

    pub fn row_bytes(&self) -> usize {
        self.meta.n_sites.div_ceil(8)
    }

    pub fn n_retained(&self) -> usize {
        self.samples.len()
    }

    pub fn n_sites(&self) -> usize {
        self.meta.n_sites
    }

    pub fn lattice(&self) -> Result<Lattice> {
        Lattice::with_mask(&self.meta.dims, self.mask.clone())
    }

    /// Records one retained iteration.
    pub fn push(&mut self, sample: HyperSample, h0: &[Label], h1: &[Label]) {
        debug_assert_eq!(h0.len(), self.meta.n_sites);
        let start = self.agreement.len();
        self.agreement.resize(start + self.row_bytes(), 0);
        let row = &mut self.agreement[start..];
        for (v, (a, b)) in h0.iter().zip(h1).enumerate() {
            if a == b {
                row[v / 8] |= 1 << (v % 8);
            }
        }
        self.samples.push(sample);
    }

    pub fn agrees(&self, iteration: usize, site: usize) -> bool {
        self.agreement[iteration * self.row_bytes() + site / 8] >> (site % 8) & 1 == 1
    }

    pub(crate) fn agreement_bytes(&self) -> &[u8] {
        &self.agreement
    }

    /// Per-site count of retained iterations with `h_0v != h_1v`.
    pub fn difference_counts(&self) -> Vec<u64> {
        let n = self.meta.n_sites;
        let mut counts = vec![0u64; n];
        for row in self.agreement.chunks_exact(self.row_bytes()) {
            for (v, c) in counts.iter_mut().enumerate() {
                *c += (row[v / 8] >> (v % 8) & 1 == 0) as u64;
            }
        }
        counts
    }

    /// Chain of one named hyperparameter (see [`HyperSample::NAMES`]).
    pub fn chain(&self, index: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.as_array()[index]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn agreement_bits_round_trip() {
        let meta = TraceMeta {
            config: FitConfig::default(),
            dim: 3,
            dims: vec![11],
            n_sites: 11,
            groups: vec![],
            subject_ids: vec![],
            sigma: vec![],
        };
        let mut t = TraceStore::new(meta, vec![true; 11]);
        let h0: Vec<Label> = (0..11).map(|v| (v % 3 + 1) as Label).collect();
        let h1: Vec<Label> = (0..11).map(|v| if v == 9 || v == 2 { 7 } else { (v % 3 + 1) as Label }).collect();
        let s = HyperSample::from_array([1.0, 2.0, 0.5, 7.0, 8.0]);
        t.push(s, &h0, &h1);
        t.push(s, &h0, &h0);
        assert!(!t.agrees(0, 9) && !t.agrees(0, 2) && t.agrees(0, 10) && t.agrees(1, 9));
        let c = t.difference_counts();
        assert_eq!(c.iter().sum::<u64>(), 2);
        assert_eq!(c[9], 1);
        assert_eq!(t.chain(3), vec![7.0, 7.0]);
    }
}
