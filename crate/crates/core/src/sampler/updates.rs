//! The Gibbs and Metropolis steps for atoms, labels and degrees of freedom.

use std::f64::consts::LN_2;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::config::AtomDof;
use super::state::{ClusterStats, ModelState, Prepared, M_RANGE, NU_RANGE};
use crate::error::Result;
use crate::potts::{column_cluster_update, sweep_with, Group, SiteLikelihood, SweepOrder};
use crate::rng;
use crate::spd::{packed_len, upper_index, SpdMatrix};
use crate::wishart::{ln_mvgamma, sample_wishart_standard, wishart_logpdf, WishartParams};

/// Redraws every atom from its full conditional
/// `W_p((nu Sigma^{-1} + (m-p-1) S_k)^{-1} n, n)` with `n = n_k m + nu`.
/// An empty cluster gets `S_k = 0`, `n = nu`, which is the prior `W_p(Sigma, nu)`.
pub fn update_atoms<R: Rng + ?Sized>(
    state: &mut ModelState,
    prep: &Prepared,
    stats: &ClusterStats,
    dof_form: AtomDof,
    rng: &mut R,
) -> Result<()> {
    let p = prep.dim;
    let q = packed_len(p);
    let c = state.m - p as f64 - 1.0;
    let sigma_inv = state.sigma.inverse()?;
    let key = rng.next_u64();
    let subjects = prep.n_subjects as f64;
    let (m, nu) = (state.m, state.nu);
    let atoms: Vec<SpdMatrix> = (0..state.atoms.len())
        .into_par_iter()
        .map(|k| -> Result<SpdMatrix> {
            let w = stats.scatter_weights(k, q);
            let mut precision: Vec<f64> = sigma_inv.upper().iter().map(|x| nu * x).collect();
            for i in 0..p {
                for j in i..p {
                    let idx = upper_index(p, i, j);
                    let s = if i == j { w[idx] } else { 0.5 * w[idx] };
                    precision[idx] += c * s;
                }
            }
            let n_k = stats.count(k) as f64;
            let dof = match dof_form {
                AtomDof::Conjugate => n_k * m + nu,
                AtomDof::Printed => subjects * n_k * m + nu,
            };
            let scale_chol = SpdMatrix::from_upper(p, &precision)?.inverse()?.cholesky()?;
            let mut r = rng::stream(key, &[k as u64]);
            Ok(sample_wishart_standard(&scale_chol, dof, &mut r))
        })
        .collect::<Result<_>>()?;
    state.atoms = atoms;
    Ok(())
}

/// Inverse-Wishart log-likelihood of each observation under every atom,
/// keeping only the terms that depend on the atom.
pub(crate) struct IwLikelihood<'a> {
    prep: &'a Prepared,
    q: usize,
    consts: Vec<f64>,
    coefs: Vec<f64>,
}

impl<'a> IwLikelihood<'a> {
    pub(crate) fn new(prep: &'a Prepared, atoms: &[SpdMatrix], m: f64) -> Result<Self> {
        let p = prep.dim;
        let q = packed_len(p);
        let half_c = 0.5 * (m - p as f64 - 1.0);
        let mut consts = Vec::with_capacity(atoms.len());
        let mut coefs = Vec::with_capacity(atoms.len() * q);
        for v in atoms {
            consts.push(0.5 * m * v.log_det()?);
            coefs.extend(v.upper().iter().map(|x| -half_c * x));
        }
        Ok(Self { prep, q, consts, coefs })
    }
}

impl SiteLikelihood for IwLikelihood<'_> {
    #[inline]
    fn add_log_lik(&self, subject: usize, site: usize, out: &mut [f64]) {
        let w = self.prep.inv_weight(subject, site);
        for (k, o) in out.iter_mut().enumerate() {
            let b = &self.coefs[k * self.q..(k + 1) * self.q];
            *o += self.consts[k] + b.iter().zip(w).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

/// One sweep over all labels: subject labels from their likelihood-weighted
/// conditionals, then group labels, then (if `column_updates`) a
/// Swendsen-Wang update of each group's uniform columns.
pub fn update_labels<R: Rng + ?Sized>(
    state: &mut ModelState,
    prep: &Prepared,
    lattice: &crate::lattice::Lattice,
    order: SweepOrder,
    column_updates: bool,
    rng: &mut R,
) -> Result<()> {
    let lik = IwLikelihood::new(prep, &state.atoms, state.m)?;
    let key = rng.next_u64();
    sweep_with(lattice, &mut state.labels, &state.theta, order, &lik, key);
    if column_updates {
        for group in Group::BOTH {
            column_cluster_update(lattice, &mut state.labels, group, &state.theta, &lik, rng);
        }
    }
    Ok(())
}

/// `sum_{i,v} log IW(A_iv | V_{g_iv}, m)` from sufficient statistics.
pub fn data_log_lik(m: f64, atoms: &[SpdMatrix], prep: &Prepared, stats: &ClusterStats) -> Result<f64> {
    let p = prep.dim as f64;
    let q = packed_len(prep.dim);
    let c = m - p - 1.0;
    let n_tot = prep.n_observations() as f64;
    let mut per_atom = 0.0;
    for (k, v) in atoms.iter().enumerate() {
        let n_k = stats.count(k);
        if n_k == 0 {
            continue;
        }
        let tr: f64 = v.upper().iter().zip(stats.scatter_weights(k, q)).map(|(a, b)| a * b).sum();
        per_atom += 0.5 * m * n_k as f64 * v.log_det()? - 0.5 * c * tr;
    }
    Ok(n_tot * (-0.5 * m * p * LN_2 - ln_mvgamma(prep.dim, 0.5 * m) + 0.5 * m * p * c.ln())
        - 0.5 * (m + p + 1.0) * prep.sum_log_det
        + per_atom)
}

/// `sum_k log W(V_k | Sigma, nu)`.
pub fn atom_log_prior(nu: f64, atoms: &[SpdMatrix], sigma: &SpdMatrix) -> Result<f64> {
    let params = WishartParams::new(sigma.clone(), nu)?;
    atoms.iter().map(|v| wishart_logpdf(v, &params)).sum()
}

/// Log-normal random-walk Metropolis step on a positive scalar restricted to
/// `range`. Returns the new value and whether the move was accepted.
fn lognormal_step<R: Rng + ?Sized>(
    current: f64,
    scale: f64,
    range: (f64, f64),
    log_target: impl Fn(f64) -> Result<f64>,
    rng: &mut R,
) -> Result<(f64, bool)> {
    let eps: f64 = rng.sample(StandardNormal);
    let proposal = current * (scale * eps).exp();
    if !(range.0..=range.1).contains(&proposal) {
        return Ok((current, false));
    }
    // the log-normal proposal density ratio contributes proposal / current
    let log_r = log_target(proposal)? - log_target(current)? + proposal.ln() - current.ln();
    if log_r >= 0.0 || rng.random::<f64>().ln() < log_r {
        Ok((proposal, true))
    } else {
        Ok((current, false))
    }
}

/// Metropolis updates of `m` then `nu`. Returns `[m accepted, nu accepted]`.
pub fn update_dof<R: Rng + ?Sized>(
    state: &mut ModelState,
    prep: &Prepared,
    stats: &ClusterStats,
    scales: (f64, f64),
    rng: &mut R,
) -> Result<[bool; 2]> {
    let (m, acc_m) = lognormal_step(state.m, scales.0, M_RANGE, |m| data_log_lik(m, &state.atoms, prep, stats), rng)?;
    state.m = m;
    let (nu, acc_nu) =
        lognormal_step(state.nu, scales.1, NU_RANGE, |nu| atom_log_prior(nu, &state.atoms, &state.sigma), rng)?;
    state.nu = nu;
    Ok([acc_m, acc_nu])
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use rand::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::lattice::Lattice;
    use crate::potts::{gibbs_sweep_prior_ordered, Group, LabelField, NoLikelihood, PottsHyper};
    use crate::tensor::{Dataset, TensorField};
    use crate::wishart::{invwishart_logpdf, invwishart_sample, InvWishartParams};

    fn random_dataset(rng: &mut ChaCha8Rng, dims: &[usize], subjects: usize, p: usize) -> Dataset {
        let lat = Arc::new(Lattice::grid(dims).unwrap());
        let params = InvWishartParams::new(SpdMatrix::identity(p), 8.0).unwrap();
        let fields = (0..subjects)
            .map(|i| {
                let ts: Vec<SpdMatrix> = (0..lat.len()).map(|_| invwishart_sample(&params, rng)).collect();
                let g = if i % 2 == 0 { Group::Control } else { Group::Treatment };
                TensorField::new(lat.clone(), format!("s{i}"), g, &ts).unwrap()
            })
            .collect();
        Dataset::new(fields).unwrap()
    }

    fn state_for(data: &Dataset, k: usize, rng: &mut ChaCha8Rng) -> ModelState {
        let p = data.dim();
        let labels = LabelField::random(k, data.n_sites(), data.groups(), rng).unwrap();
        let params = WishartParams::new(SpdMatrix::identity(p), 10.0).unwrap();
        ModelState {
            atoms: (0..k).map(|_| crate::wishart::wishart_sample(&params, rng)).collect(),
            labels,
            m: 9.0,
            nu: 12.0,
            theta: PottsHyper { alpha: 0.7, beta: 0.6, xi: 0.4 },
            sigma: SpdMatrix::identity(p),
        }
    }

    #[test]
    fn sufficient_statistic_likelihood_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data = random_dataset(&mut rng, &[4, 3], 3, 3);
        let prep = Prepared::new(&data).unwrap();
        let state = state_for(&data, 4, &mut rng);
        let stats = ClusterStats::compute(&prep, &state.labels);
        for m in [5.5, 9.0, 31.0] {
            let mut direct = 0.0;
            for (i, f) in data.fields().iter().enumerate() {
                for v in 0..f.len() {
                    let atom = &state.atoms[state.labels.g(i, v) as usize - 1];
                    direct += invwishart_logpdf(&f.get(v), &InvWishartParams::new(atom.clone(), m).unwrap()).unwrap();
                }
            }
            let fast = data_log_lik(m, &state.atoms, &prep, &stats).unwrap();
            assert!((fast - direct).abs() < 1e-9 * direct.abs(), "{fast} vs {direct}");
        }
    }

    #[test]
    fn site_weights_are_loglik_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data = random_dataset(&mut rng, &[2, 2], 2, 3);
        let prep = Prepared::new(&data).unwrap();
        let state = state_for(&data, 3, &mut rng);
        let lik = IwLikelihood::new(&prep, &state.atoms, state.m).unwrap();
        let mut w = vec![0.0; 3];
        lik.add_log_lik(1, 2, &mut w);
        let x = data.fields()[1].get(2);
        let direct: Vec<f64> = state
            .atoms
            .iter()
            .map(|a| invwishart_logpdf(&x, &InvWishartParams::new(a.clone(), state.m).unwrap()).unwrap())
            .collect();
        for k in 1..3 {
            assert!(((w[k] - w[0]) - (direct[k] - direct[0])).abs() < 1e-10);
        }
    }

    #[test]
    fn well_separated_atoms_pick_the_matching_label() {
        let lat = Arc::new(Lattice::grid(&[1]).unwrap());
        let f = TensorField::new(lat, "s", Group::Control, &[SpdMatrix::identity(3)]).unwrap();
        let data = Dataset::new(vec![f]).unwrap();
        let prep = Prepared::new(&data).unwrap();
        let atoms = vec![SpdMatrix::identity(3), SpdMatrix::scaled_identity(3, 100.0)];
        let lik = IwLikelihood::new(&prep, &atoms, 40.0).unwrap();
        let mut w = vec![0.0; 2];
        lik.add_log_lik(0, 0, &mut w);
        crate::potts::normalize_log_weights(&mut w);
        assert!(w[0] > 0.999);
    }

    #[test]
    fn single_cluster_labels_stay_put() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = random_dataset(&mut rng, &[3, 3], 2, 3);
        let prep = Prepared::new(&data).unwrap();
        let mut state = state_for(&data, 1, &mut rng);
        update_labels(&mut state, &prep, data.lattice(), SweepOrder::Checkerboard, false, &mut rng).unwrap();
        assert!(state.labels.subject_layer(0).iter().all(|&l| l == 1));
        assert!(state.labels.group_layer(Group::Treatment).iter().all(|&l| l == 1));
    }

    #[test]
    fn sweep_without_likelihood_is_the_prior_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let data = random_dataset(&mut rng, &[4, 4], 3, 3);
        let state = state_for(&data, 4, &mut rng);
        for order in [SweepOrder::Checkerboard, SweepOrder::Raster, SweepOrder::RandomScan] {
            let mut a = state.labels.clone();
            let mut b = state.labels.clone();
            let mut r1 = ChaCha8Rng::seed_from_u64(77);
            let mut r2 = r1.clone();
            let key = r1.next_u64();
            sweep_with(data.lattice(), &mut a, &state.theta, order, &NoLikelihood, key);
            gibbs_sweep_prior_ordered(data.lattice(), &mut b, &state.theta, order, &mut r2);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn empty_clusters_draw_from_the_prior() {
        // Every label is 1, so atom 2 has no data; its draws should average Sigma.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let data = random_dataset(&mut rng, &[2], 1, 2);
        let prep = Prepared::new(&data).unwrap();
        let mut state = state_for(&data, 2, &mut rng);
        state.labels = LabelField::constant(2, 2, data.groups(), 1).unwrap();
        state.sigma = SpdMatrix::from_upper(2, &[2.0, 0.5, 1.0]).unwrap();
        state.nu = 6.0;
        let stats = ClusterStats::compute(&prep, &state.labels);
        let n = 20000;
        let mut mean = [0.0; 3];
        let mut sq = [0.0; 3];
        for _ in 0..n {
            update_atoms(&mut state, &prep, &stats, AtomDof::Conjugate, &mut rng).unwrap();
            for (j, x) in state.atoms[1].upper().iter().enumerate() {
                mean[j] += x / n as f64;
                sq[j] += x * x / n as f64;
            }
        }
        for (j, target) in [2.0, 0.5, 1.0].iter().enumerate() {
            let se = ((sq[j] - mean[j] * mean[j]) / n as f64).sqrt();
            assert!((mean[j] - target).abs() < 4.0 * se, "{j}: {} vs {target}", mean[j]);
        }
    }

    #[test]
    fn scalar_atom_conditional_matches_quadrature() {
        // p = 1: the conditional of V given data is Gamma(shape n/2, rate P/2).
        // Compare sample mean and variance with moments from numerical
        // integration of prior x likelihood.
        let lat = Arc::new(Lattice::grid(&[3]).unwrap());
        let xs = [0.7, 1.9, 1.1];
        let ts: Vec<SpdMatrix> = xs.iter().map(|&x| SpdMatrix::diag(&[x]).unwrap()).collect();
        let data = Dataset::new(vec![TensorField::new(lat, "s", Group::Control, &ts).unwrap()]).unwrap();
        let prep = Prepared::new(&data).unwrap();
        let (m, nu, sigma) = (6.0, 5.0, 1.3);
        let mut state = ModelState {
            atoms: vec![SpdMatrix::identity(1)],
            labels: LabelField::constant(1, 3, data.groups(), 1).unwrap(),
            m,
            nu,
            theta: PottsHyper::zero(),
            sigma: SpdMatrix::diag(&[sigma]).unwrap(),
        };
        let log_post = |v: f64| {
            let vm = SpdMatrix::diag(&[v]).unwrap();
            let prior = wishart_logpdf(&vm, &WishartParams::new(state.sigma.clone(), nu).unwrap()).unwrap();
            let lik: f64 = ts
                .iter()
                .map(|t| invwishart_logpdf(t, &InvWishartParams::new(vm.clone(), m).unwrap()).unwrap())
                .sum();
            prior + lik
        };
        let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
        let h = 1e-4;
        let mut v = h / 2.0;
        while v < 30.0 {
            let w = log_post(v).exp();
            z += w;
            m1 += w * v;
            m2 += w * v * v;
            v += h;
        }
        let (qm, qv) = (m1 / z, m2 / z - (m1 / z).powi(2));

        let stats = ClusterStats::compute(&prep, &state.labels);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 40000;
        let draws: Vec<f64> = (0..n)
            .map(|_| {
                update_atoms(&mut state, &prep, &stats, AtomDof::Conjugate, &mut rng).unwrap();
                state.atoms[0].get(0, 0)
            })
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((mean - qm).abs() < 4.0 * (qv / n as f64).sqrt(), "{mean} vs {qm}");
        assert!((var / qv - 1.0).abs() < 0.05, "{var} vs {qv}");
    }

    #[test]
    fn dof_moves_respect_the_prior_box() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data = random_dataset(&mut rng, &[3, 3], 2, 3);
        let prep = Prepared::new(&data).unwrap();
        let mut state = state_for(&data, 3, &mut rng);
        let stats = ClusterStats::compute(&prep, &state.labels);
        for _ in 0..300 {
            update_dof(&mut state, &prep, &stats, (3.0, 3.0), &mut rng).unwrap();
            assert!((5.0..=50.0).contains(&state.m));
            assert!((4.0..=50.0).contains(&state.nu));
        }
        let before = (state.m, state.nu);
        let acc = update_dof(&mut state, &prep, &stats, (1e-300, 1e-300), &mut rng).unwrap();
        assert_eq!(acc, [true, true]);
        assert_eq!((state.m, state.nu), before);
    }

    #[test]
    fn atom_dof_forms_differ_only_with_several_subjects() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data = random_dataset(&mut rng, &[3], 1, 2);
        let prep = Prepared::new(&data).unwrap();
        let state = state_for(&data, 2, &mut rng);
        let stats = ClusterStats::compute(&prep, &state.labels);
        let mut a = state.clone();
        let mut b = state.clone();
        update_atoms(&mut a, &prep, &stats, AtomDof::Conjugate, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        update_atoms(&mut b, &prep, &stats, AtomDof::Printed, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a.atoms, b.atoms);
    }
}
