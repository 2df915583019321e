//! Synthetic datasets: fields simulated from the model prior, the
//! rectangular-partition mixture scenario, and the spatial Cholesky process.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::potts::{gibbs_sweep_prior, Group, Label, LabelField, PottsHyper};
use crate::rng;
use crate::spd::{LowerTriangular, SpdMatrix};
use crate::tensor::TensorField;
use crate::wishart::{invwishart_sample, wishart_sample, InvWishartParams, WishartParams};

/// Voxels where the two groups' label processes differ.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundTruth {
    pub dims: Vec<usize>,
    /// One flag per active site.
    pub difference_mask: Vec<bool>,
}

impl GroundTruth {
    pub fn count(&self) -> usize {
        self.difference_mask.iter().filter(|&&b| b).count()
    }
}

/// A generated dataset: control subjects first, then treatment subjects.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub fields: Vec<TensorField>,
    pub truth: GroundTruth,
    /// Generating labels, where the scenario has them.
    pub labels: Option<LabelField>,
}

fn subject_ids(per_group: usize) -> Vec<(String, Group)> {
    let mut ids = Vec::with_capacity(2 * per_group);
    for (name, g) in [("control", Group::Control), ("treatment", Group::Treatment)] {
        for i in 0..per_group {
            ids.push((format!("{name}-{:02}", i + 1), g));
        }
    }
    ids
}

/// Square block of side `side / 4` starting at column `col_start`, centred
/// vertically.
fn block(side: usize, col_start: usize) -> impl Fn(usize, usize) -> bool {
    let w = side / 4;
    let row_start = (side - w) / 2;
    move |r, c| (row_start..row_start + w).contains(&r) && (col_start..col_start + w).contains(&c)
}

/// The rectangular-partition mixture scenario on a `side x side` grid.
///
/// Columns are split into four bands of width `side / 4`, numbered 1..4 from
/// the right. Every subject's labels equal its band number, except that
/// treatment subjects carry label 5 on a centred square block inside band 2.
/// Atom means are `Sigma_k ~ W_3((k+1) I, 30)` for `k = 1..4` and
/// `Sigma_5 ~ W_3(1.5 I, 30)`, drawn once; tensors are `IW_3(Sigma_g, 5)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixtureScenario {
    pub side: usize,
    pub subjects_per_group: usize,
}

impl MixtureScenario {
    pub const DATA_DOF: f64 = 5.0;
    pub const ATOM_DOF: f64 = 30.0;

    /// 40 x 40 grid, 5 subjects per group.
    pub fn paper() -> Self {
        Self { side: 40, subjects_per_group: 5 }
    }

    /// 20 x 20 grid, 3 subjects per group.
    pub fn desk() -> Self {
        Self { side: 20, subjects_per_group: 3 }
    }

    fn check(&self) -> Result<()> {
        if self.side < 4 || !self.side.is_multiple_of(4) || self.subjects_per_group == 0 {
            return Err(Error::InvalidConfig(format!(
                "mixture scenario needs a side divisible by 4 and at least one subject per group, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Band number (1..=4) of a 0-based column.
    pub fn band(&self, col: usize) -> Label {
        let w = self.side / 4;
        ((self.side - (col + 1)) / w + 1) as Label
    }

    fn in_block(&self) -> impl Fn(usize, usize) -> bool {
        let w = self.side / 4;
        block(self.side, self.side - 2 * w)
    }

    pub fn generate(&self, seed: u64) -> Result<Scenario> {
        self.check()?;
        let lattice = Arc::new(Lattice::grid(&[self.side, self.side])?);
        let n = lattice.len();
        let in_block = self.in_block();
        let control: Vec<Label> = (0..n).map(|a| self.band(lattice.coords(a)[1])).collect();
        let treatment: Vec<Label> = (0..n)
            .map(|a| {
                let [r, c, _] = lattice.coords(a);
                if in_block(r, c) { 5 } else { control[a] }
            })
            .collect();
        let truth = GroundTruth {
            dims: lattice.dims().to_vec(),
            difference_mask: control.iter().zip(&treatment).map(|(a, b)| a != b).collect(),
        };

        let mut atom_rng = rng::stream(seed, &[0]);
        let atoms: Vec<InvWishartParams> = (1..=5)
            .map(|k| {
                let mean = if k <= 4 { (k + 1) as f64 } else { 1.5 };
                let params = WishartParams::new(SpdMatrix::scaled_identity(3, mean), Self::ATOM_DOF)?;
                InvWishartParams::new(wishart_sample(&params, &mut atom_rng), Self::DATA_DOF)
            })
            .collect::<Result<_>>()?;

        let ids = subject_ids(self.subjects_per_group);
        let fields = ids
            .par_iter()
            .enumerate()
            .map(|(i, (id, group))| {
                let mut r = rng::stream(seed, &[1, i as u64]);
                let labels = if *group == Group::Control { &control } else { &treatment };
                let tensors: Vec<SpdMatrix> =
                    labels.iter().map(|&l| invwishart_sample(&atoms[l as usize - 1], &mut r)).collect();
                TensorField::new(lattice.clone(), id.clone(), *group, &tensors)
            })
            .collect::<Result<Vec<_>>>()?;

        let groups = ids.iter().map(|(_, g)| *g).collect();
        let g = ids.iter().map(|(_, x)| if *x == Group::Control { control.clone() } else { treatment.clone() }).collect();
        let labels = LabelField::from_layers(5, groups, g, [control.clone(), treatment.clone()])?;
        Ok(Scenario { fields, truth, labels: Some(labels) })
    }
}

/// The spatial Cholesky process on a `side x side` grid.
///
/// Six independent Gaussian processes per subject (variance `tau^2`,
/// correlation `exp(-d / range)`) fill a lower-triangular `L` whose diagonal
/// is exponentiated; the tensor is `L L^T`. Components 1-3 are the log
/// diagonal, 4-6 the off-diagonal entries `(1,0), (2,0), (2,1)`. Treatment
/// subjects get a mean shift on a centred square block of side `side / 4`:
/// 0.5 on the diagonal components and 0.25 on the off-diagonal ones.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CholeskyScenario {
    pub side: usize,
    pub subjects_per_group: usize,
    pub tau2: f64,
    pub range: f64,
}

impl CholeskyScenario {
    pub const SHIFT: [f64; 6] = [0.5, 0.5, 0.5, 0.25, 0.25, 0.25];

    /// 40 x 40 grid, 10 subjects per group.
    pub fn paper() -> Self {
        Self { side: 40, subjects_per_group: 10, tau2: 0.1, range: 2.0 }
    }

    /// 20 x 20 grid, 5 subjects per group.
    pub fn desk() -> Self {
        Self { side: 20, subjects_per_group: 5, ..Self::paper() }
    }

    pub fn generate(&self, seed: u64) -> Result<Scenario> {
        if self.side < 4 || self.subjects_per_group == 0 || !(self.tau2 >= 0.0) || !(self.range > 0.0) {
            return Err(Error::InvalidConfig(format!("invalid Cholesky scenario {self:?}")));
        }
        let lattice = Arc::new(Lattice::grid(&[self.side, self.side])?);
        let n = lattice.len();
        let in_block = block(self.side, (self.side - self.side / 4) / 2);
        let shifted: Vec<bool> = (0..n)
            .map(|a| {
                let [r, c, _] = lattice.coords(a);
                in_block(r, c)
            })
            .collect();
        let gp = GaussianField::exponential(&lattice, self.tau2, self.range)?;

        let ids = subject_ids(self.subjects_per_group);
        let fields = ids
            .par_iter()
            .enumerate()
            .map(|(i, (id, group))| {
                let mut r = rng::stream(seed, &[1, i as u64]);
                let mut comps: Vec<Vec<f64>> = (0..6).map(|_| gp.sample(&mut r)).collect();
                if *group == Group::Treatment {
                    for (comp, shift) in comps.iter_mut().zip(Self::SHIFT) {
                        for (u, _) in comp.iter_mut().zip(&shifted).filter(|(_, s)| **s) {
                            *u += shift;
                        }
                    }
                }
                let tensors: Vec<SpdMatrix> = (0..n)
                    .map(|v| {
                        let u: [f64; 6] = std::array::from_fn(|k| comps[k][v]);
                        cholesky_tensor(&u)
                    })
                    .collect::<Result<_>>()?;
                TensorField::new(lattice.clone(), id.clone(), *group, &tensors)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Scenario {
            fields,
            truth: GroundTruth { dims: lattice.dims().to_vec(), difference_mask: shifted },
            labels: None,
        })
    }
}

/// `L L^T` with `L = [[e^u0, 0, 0], [u3, e^u1, 0], [u4, u5, e^u2]]`.
fn cholesky_tensor(u: &[f64; 6]) -> Result<SpdMatrix> {
    let l = LowerTriangular::from_lower(3, &[u[0].exp(), u[3], u[1].exp(), u[4], u[5], u[2].exp()])?;
    Ok(l.gram())
}

/// Zero-mean Gaussian field on the active sites of a lattice, sampled with a
/// dense Cholesky factor of its covariance (computed once).
pub struct GaussianField {
    factor: Option<DMatrix<f64>>,
    n: usize,
}

impl GaussianField {
    /// Covariance `tau2 * exp(-d / range)` between sites at Euclidean distance `d`.
    pub fn exponential(lattice: &Lattice, tau2: f64, range: f64) -> Result<Self> {
        let n = lattice.len();
        if tau2 == 0.0 {
            return Ok(Self { factor: None, n });
        }
        let cov = DMatrix::from_fn(n, n, |a, b| tau2 * (-(lattice.dist_sq(a, b) as f64).sqrt() / range).exp());
        let chol = cov
            .cholesky()
            .ok_or(Error::NotPositiveDefinite { row: 0, pivot: f64::NAN })?;
        Ok(Self { factor: Some(chol.unpack()), n })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z = DVector::from_fn(self.n, |_, _| rng.sample(StandardNormal));
        match &self.factor {
            Some(l) => (l * z).iter().copied().collect(),
            None => vec![0.0; self.n],
        }
    }
}

/// Parameters for simulating fields from the model prior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorScenario {
    pub dims: Vec<usize>,
    pub subjects_per_group: usize,
    pub k: usize,
    pub theta: PottsHyper,
    pub m: f64,
    pub nu: f64,
    /// Packed upper triangle of the atom hyper-mean (p = 3 if `None`: identity).
    pub sigma: Option<Vec<f64>>,
    pub sweeps: usize,
}

impl Default for PriorScenario {
    fn default() -> Self {
        Self {
            dims: vec![40, 40],
            subjects_per_group: 1,
            k: 5,
            theta: PottsHyper { alpha: 1.0, beta: 1.0, xi: 0.0 },
            m: 10.0,
            nu: 30.0,
            sigma: None,
            sweeps: 500,
        }
    }
}

impl PriorScenario {
    pub fn generate(&self, seed: u64) -> Result<Scenario> {
        let lattice = Arc::new(Lattice::grid(&self.dims)?);
        let sigma = match &self.sigma {
            Some(s) => {
                let p = ((((8 * s.len() + 1) as f64).sqrt() - 1.0) / 2.0).round() as usize;
                SpdMatrix::from_upper(p, s)?
            }
            None => SpdMatrix::identity(3),
        };
        let groups: Vec<Group> = subject_ids(self.subjects_per_group).into_iter().map(|(_, g)| g).collect();
        let mut r = rng::seeded(seed);
        let (fields, labels) =
            generate_prior_dataset(&lattice, &groups, self.k, &self.theta, self.m, self.nu, &sigma, self.sweeps, &mut r)?;
        let fields = fields
            .into_iter()
            .zip(subject_ids(self.subjects_per_group))
            .map(|(f, (id, g))| TensorField::from_packed(lattice.clone(), f.dim(), id, g, f.values().to_vec(), false))
            .collect::<Result<_>>()?;
        let truth = GroundTruth {
            dims: self.dims.clone(),
            difference_mask: (0..lattice.len())
                .map(|v| labels.h(Group::Control, v) != labels.h(Group::Treatment, v))
                .collect(),
        };
        Ok(Scenario { fields, truth, labels: Some(labels) })
    }
}

/// Simulates subjects from the full prior: labels by `sweeps` Gibbs sweeps
/// from a uniform random start, atoms `V_k ~ W_p(Sigma, nu)`, tensors
/// `A_iv ~ IW_p(V_{g_iv}, m)`.
#[allow(clippy::too_many_arguments)]
pub fn generate_prior_dataset<R: Rng + ?Sized>(
    lattice: &Arc<Lattice>,
    groups: &[Group],
    k: usize,
    theta: &PottsHyper,
    m: f64,
    nu: f64,
    sigma: &SpdMatrix,
    sweeps: usize,
    rng: &mut R,
) -> Result<(Vec<TensorField>, LabelField)> {
    let p = sigma.dim();
    // fail early on invalid dof, before spending the sweeps
    InvWishartParams::new(sigma.clone(), m)?;
    let atom_prior = WishartParams::new(sigma.clone(), nu)?;
    let mut labels = LabelField::random(k, lattice.len(), groups.to_vec(), rng)?;
    for _ in 0..sweeps {
        gibbs_sweep_prior(lattice, &mut labels, theta, rng);
    }
    let atoms: Vec<InvWishartParams> = (0..k)
        .map(|_| InvWishartParams::new(wishart_sample(&atom_prior, rng), m))
        .collect::<Result<_>>()?;
    let key = rng.next_u64();
    let fields = (0..groups.len())
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(key, &[i as u64]);
            let tensors: Vec<SpdMatrix> = labels
                .subject_layer(i)
                .iter()
                .map(|&l| invwishart_sample(&atoms[l as usize - 1], &mut r))
                .collect();
            debug_assert!(tensors.iter().all(|t| t.dim() == p));
            TensorField::new(lattice.clone(), format!("subject-{:02}", i + 1), groups[i], &tensors)
        })
        .collect::<Result<_>>()?;
    Ok((fields, labels))
}

/// A single-subject prior field. The subject is not coupled to a group
/// layer (`alpha` is set to zero).
#[allow(clippy::too_many_arguments)]
pub fn generate_prior_field<R: Rng + ?Sized>(
    lattice: &Arc<Lattice>,
    k: usize,
    theta: &PottsHyper,
    m: f64,
    nu: f64,
    sigma: &SpdMatrix,
    sweeps: usize,
    rng: &mut R,
) -> Result<(TensorField, LabelField)> {
    let theta = PottsHyper { alpha: 0.0, ..*theta };
    let (mut fields, labels) = generate_prior_dataset(lattice, &[Group::Control], k, &theta, m, nu, sigma, sweeps, rng)?;
    Ok((fields.remove(0), labels))
}

/// True positive, false positive and false discovery rates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionRates {
    pub tpr: f64,
    pub fpr: f64,
    pub fdr: f64,
}

/// Compares a predicted difference mask with the truth. Rates with a zero
/// denominator are reported as 0.
pub fn eval_detection(predicted: &[bool], truth: &GroundTruth) -> Result<DetectionRates> {
    if predicted.len() != truth.difference_mask.len() {
        return Err(Error::LatticeMismatch(format!(
            "prediction has {} sites, truth has {}",
            predicted.len(),
            truth.difference_mask.len()
        )));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &t) in predicted.iter().zip(&truth.difference_mask) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(DetectionRates { tpr: ratio(tp, tp + fn_), fpr: ratio(fp, fp + tn), fdr: ratio(fp, tp + fp) })
}
