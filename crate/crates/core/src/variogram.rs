//! Matrix-variate variograms: the empirical estimator, the closed-form
//! non-spatial term, Monte Carlo estimates of the spatial term, and their
//! product.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::potts::{gibbs_sweep_prior, Group, LabelField, PottsHyper};
use crate::rng;
use crate::spd::{frobenius_sq_diff_packed, SpdMatrix};
use crate::tensor::TensorField;

/// A curve over exact inter-site distances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariogramCurve {
    pub distances: Vec<f64>,
    pub values: Vec<f64>,
    /// Pairs contributing to each distance.
    pub pair_counts: Vec<u64>,
    /// Monte Carlo standard errors, when the curve is an estimate over
    /// independent replications.
    pub std_errors: Option<Vec<f64>>,
}

impl VariogramCurve {
    pub fn len(&self) -> usize {
        self.distances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distances.is_empty()
    }

    /// `distance,value,pair_count[,std_error]`, one row per distance.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        match &self.std_errors {
            Some(se) => {
                writeln!(w, "distance,value,pair_count,std_error")?;
                for (((d, v), c), s) in self.distances.iter().zip(&self.values).zip(&self.pair_counts).zip(se) {
                    writeln!(w, "{d},{v},{c},{s}")?;
                }
            }
            None => {
                writeln!(w, "distance,value,pair_count")?;
                for ((d, v), c) in self.distances.iter().zip(&self.values).zip(&self.pair_counts) {
                    writeln!(w, "{d},{v},{c}")?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmpiricalOptions {
    pub max_dist: f64,
    /// Bins with more ordered pairs than this are subsampled uniformly.
    pub pair_cap: u64,
    pub seed: u64,
}

impl EmpiricalOptions {
    pub fn new(max_dist: f64) -> Self {
        Self { max_dist, pair_cap: 1_000_000, seed: 0 }
    }
}

/// Mean squared Frobenius difference `||A_iu - A_jv||^2` over all ordered
/// site pairs at each exact distance up to `max_dist`. With `i == j` this is
/// the individual variogram and distance zero is skipped.
pub fn empirical_variogram(fi: &TensorField, fj: &TensorField, opts: &EmpiricalOptions) -> Result<VariogramCurve> {
    let lat = fi.lattice();
    if **lat != **fj.lattice() {
        return Err(Error::LatticeMismatch("variogram fields live on different lattices".into()));
    }
    if fi.dim() != fj.dim() {
        return Err(Error::DimensionMismatch { expected: fi.dim(), found: fj.dim() });
    }
    if !(opts.max_dist >= 0.0) {
        return Err(Error::InvalidConfig(format!("max_dist must be non-negative, got {}", opts.max_dist)));
    }
    let same = std::ptr::eq(fi, fj) || (fi.subject_id() == fj.subject_id() && fi.values() == fj.values());
    let offsets = offsets_within(lat.ndims(), opts.max_dist, !same);
    let p = fi.dim();

    let pairs_of = |o: &[i64; 3]| -> Vec<(usize, usize)> {
        (0..lat.len())
            .filter_map(|a| {
                let c = lat.coords(a);
                let mut t = [0usize; 3];
                for ax in 0..lat.ndims() {
                    let x = c[ax] as i64 + o[ax];
                    if x < 0 {
                        return None;
                    }
                    t[ax] = x as usize;
                }
                let b = lat.active_index(lat.grid_index_of(&t[..lat.ndims()])?)?;
                Some((a, b))
            })
            .collect()
    };

    let mut totals: BTreeMap<i64, u64> = BTreeMap::new();
    let per_offset_counts: Vec<u64> = offsets.par_iter().map(|o| pairs_of(o).len() as u64).collect();
    for (o, c) in offsets.iter().zip(&per_offset_counts) {
        *totals.entry(sq_norm(o)).or_default() += c;
    }

    let partial: Vec<(i64, f64, u64)> = offsets
        .par_iter()
        .enumerate()
        .map(|(idx, o)| {
            let key = sq_norm(o);
            let keep = (opts.pair_cap as f64 / totals[&key] as f64).min(1.0);
            let mut r = rng::stream(opts.seed, &[idx as u64]);
            let (mut sum, mut n) = (0.0, 0u64);
            for (a, b) in pairs_of(o) {
                if keep < 1.0 && r.random::<f64>() >= keep {
                    continue;
                }
                sum += frobenius_sq_diff_packed(p, fi.packed(a), fj.packed(b));
                n += 1;
            }
            (key, sum, n)
        })
        .collect();

    let mut bins: BTreeMap<i64, (f64, u64)> = BTreeMap::new();
    for (key, sum, n) in partial {
        let e = bins.entry(key).or_default();
        e.0 += sum;
        e.1 += n;
    }
    let bins: Vec<_> = bins.into_iter().filter(|(_, (_, n))| *n > 0).collect();
    Ok(VariogramCurve {
        distances: bins.iter().map(|(k, _)| (*k as f64).sqrt()).collect(),
        values: bins.iter().map(|(_, (s, n))| s / *n as f64).collect(),
        pair_counts: bins.iter().map(|(_, (_, n))| *n).collect(),
        std_errors: None,
    })
}

fn sq_norm(o: &[i64; 3]) -> i64 {
    o.iter().map(|x| x * x).sum()
}

fn offsets_within(ndims: usize, max_dist: f64, include_zero: bool) -> Vec<[i64; 3]> {
    let r = max_dist.floor() as i64;
    let r2 = max_dist * max_dist;
    let span = |ax: usize| if ax < ndims { -r..=r } else { 0..=0 };
    let mut out = Vec::new();
    for x in span(0) {
        for y in span(1) {
            for z in span(2) {
                let o = [x, y, z];
                let s = sq_norm(&o);
                if (s == 0 && !include_zero) || s as f64 > r2 {
                    continue;
                }
                out.push(o);
            }
        }
    }
    out
}

struct Moments {
    /// `E tr(A A)` for one observation.
    obs: f64,
    /// `E tr(M M)` for one atom.
    atom: f64,
    /// `tr(Sigma Sigma)`.
    centre: f64,
}

fn moments(m: f64, nu: f64, sigma: &SpdMatrix) -> Result<Moments> {
    let p = sigma.dim();
    let pf = p as f64;
    if !(m > pf + 3.0) {
        return Err(Error::InvalidDof { dof: m, dim: p, bound: pf + 3.0 });
    }
    if !(nu > pf - 1.0) {
        return Err(Error::InvalidDof { dof: nu, dim: p, bound: pf - 1.0 });
    }
    // sums of eigenvalues and of their squares, via traces
    let tr = sigma.trace();
    let tr2 = sigma.frobenius_sq();
    let c2 = 1.0 / ((m - pf) * (m - pf - 1.0) * (m - pf - 3.0));
    let c1 = (m - pf - 2.0) * c2;
    let mm = (nu + 1.0) / nu * tr2 + tr * tr / nu;
    let tm = 2.0 / nu * tr2 + tr * tr;
    let obs = ((c1 + c2) * mm + c2 * tm) * (m - pf - 1.0).powi(2);
    Ok(Moments { obs, atom: mm, centre: tr2 })
}

/// Non-spatial term: `E ||A_u - A_v||_F^2` for two observations whose
/// labels differ, so their atoms are independent draws from the prior.
pub fn gamma_nonspatial(m: f64, nu: f64, sigma: &SpdMatrix) -> Result<f64> {
    let mo = moments(m, nu, sigma)?;
    Ok(2.0 * (mo.obs - mo.centre))
}

/// `E ||A_u - A_v||_F^2` for two observations sharing an atom. The
/// separable form `gamma * P` treats this as zero; it is not, because the
/// observations are independent draws around the shared atom.
pub fn nugget(m: f64, nu: f64, sigma: &SpdMatrix) -> Result<f64> {
    let mo = moments(m, nu, sigma)?;
    Ok(2.0 * (mo.obs - mo.atom))
}

/// `gamma(m, nu, sigma) * P` elementwise.
pub fn model_variogram(m: f64, nu: f64, sigma: &SpdMatrix, spatial: &VariogramCurve) -> Result<VariogramCurve> {
    let gamma = gamma_nonspatial(m, nu, sigma)?;
    scale_curve(spatial, 0.0, gamma)
}

/// `nugget + (gamma - nugget) * P`: the expected squared difference with
/// the within-component term kept.
pub fn model_variogram_with_nugget(
    m: f64,
    nu: f64,
    sigma: &SpdMatrix,
    spatial: &VariogramCurve,
) -> Result<VariogramCurve> {
    let gamma = gamma_nonspatial(m, nu, sigma)?;
    let delta = nugget(m, nu, sigma)?;
    scale_curve(spatial, delta, gamma - delta)
}

fn scale_curve(spatial: &VariogramCurve, shift: f64, slope: f64) -> Result<VariogramCurve> {
    if let Some(v) = spatial.values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidConfig(format!("spatial term must lie in [0, 1], got {v}")));
    }
    Ok(VariogramCurve {
        distances: spatial.distances.clone(),
        values: spatial.values.iter().map(|p| shift + slope * p).collect(),
        pair_counts: spatial.pair_counts.clone(),
        std_errors: spatial.std_errors.as_ref().map(|se| se.iter().map(|s| s * slope.abs()).collect()),
    })
}

/// Which two label layers a spatial term compares.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairRole {
    /// `g_iu` vs `g_iv`.
    SameSubject,
    /// Two subjects of the same group.
    SameGroup,
    /// A control subject vs a treatment subject.
    BetweenGroups,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McOptions {
    pub burn_in: usize,
    pub sweeps: usize,
    pub replications: usize,
    pub seed: u64,
}

impl Default for McOptions {
    fn default() -> Self {
        Self { burn_in: 500, sweeps: 2000, replications: 20, seed: 0 }
    }
}

/// Monte Carlo estimate of `P(g_iu != g_jv)` under the label prior, grouped
/// by exact distance. `n_subjects` are split into control (first half,
/// rounded up) and treatment. Pairs are active-site indices.
pub fn spatial_term_mc(
    lattice: &Lattice,
    theta: &PottsHyper,
    k: usize,
    n_subjects: usize,
    role: PairRole,
    pairs: &[(usize, usize)],
    opts: &McOptions,
) -> Result<VariogramCurve> {
    let n_control = n_subjects.div_ceil(2);
    let groups: Vec<Group> =
        (0..n_subjects).map(|i| if i < n_control { Group::Control } else { Group::Treatment }).collect();
    let (i, j) = match role {
        PairRole::SameSubject if n_subjects >= 1 => (0, 0),
        PairRole::SameGroup if n_control >= 2 => (0, 1),
        PairRole::BetweenGroups if n_subjects >= 2 => (0, n_control),
        _ => {
            return Err(Error::InvalidConfig(format!("{n_subjects} subjects cannot supply a {role:?} pair")));
        }
    };
    if opts.sweeps == 0 || opts.replications == 0 {
        return Err(Error::InvalidConfig("Monte Carlo needs at least one sweep and one replication".into()));
    }
    if let Some(&(a, b)) = pairs.iter().find(|(a, b)| *a >= lattice.len() || *b >= lattice.len()) {
        return Err(Error::InactiveSite(a.max(b)));
    }

    let mut keys: Vec<usize> = pairs.iter().map(|&(a, b)| lattice.dist_sq(a, b)).collect();
    keys.sort_unstable();
    keys.dedup();
    let bin_of: Vec<usize> = pairs.iter().map(|&(a, b)| keys.binary_search(&lattice.dist_sq(a, b)).unwrap()).collect();
    let mut pair_counts = vec![0u64; keys.len()];
    for &b in &bin_of {
        pair_counts[b] += 1;
    }

    let per_rep: Vec<Vec<f64>> = (0..opts.replications)
        .into_par_iter()
        .map(|rep| -> Result<Vec<f64>> {
            let mut r = rng::stream(opts.seed, &[rep as u64]);
            let mut labels = LabelField::random(k, lattice.len(), groups.clone(), &mut r)?;
            for _ in 0..opts.burn_in {
                gibbs_sweep_prior(lattice, &mut labels, theta, &mut r);
            }
            let mut differ = vec![0u64; keys.len()];
            for _ in 0..opts.sweeps {
                gibbs_sweep_prior(lattice, &mut labels, theta, &mut r);
                for (&(a, b), &bin) in pairs.iter().zip(&bin_of) {
                    differ[bin] += (labels.g(i, a) != labels.g(j, b)) as u64;
                }
            }
            Ok(differ.iter().zip(&pair_counts).map(|(&d, &n)| d as f64 / (n * opts.sweeps as u64) as f64).collect())
        })
        .collect::<Result<_>>()?;

    let reps = opts.replications as f64;
    let values: Vec<f64> = (0..keys.len()).map(|b| per_rep.iter().map(|r| r[b]).sum::<f64>() / reps).collect();
    let std_errors = (opts.replications > 1).then(|| {
        (0..keys.len())
            .map(|b| {
                let ss: f64 = per_rep.iter().map(|r| (r[b] - values[b]).powi(2)).sum();
                (ss / (reps - 1.0) / reps).sqrt()
            })
            .collect()
    });
    Ok(VariogramCurve {
        distances: keys.iter().map(|&s| (s as f64).sqrt()).collect(),
        values,
        pair_counts,
        std_errors,
    })
}

/// Every unordered pair of distinct active sites no further apart than
/// `max_dist`.
pub fn pairs_within(lattice: &Lattice, max_dist: f64) -> Vec<(usize, usize)> {
    let r2 = max_dist * max_dist;
    (0..lattice.len())
        .flat_map(|a| ((a + 1)..lattice.len()).map(move |b| (a, b)))
        .filter(|&(a, b)| lattice.dist_sq(a, b) as f64 <= r2)
        .collect()
}
