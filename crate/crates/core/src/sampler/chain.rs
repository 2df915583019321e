use std::sync::atomic::{AtomicBool, Ordering};

use rand::Rng;

use super::config::{FitConfig, RwScales};
use super::dmh::{dmh_step, AuxChain};
use super::state::{check_state, ClusterStats, ModelState, Prepared};
use super::swap::{label_swaps, GroupStats};
use super::trace::{Acceptance, HyperSample, Snapshot, TraceMeta, TraceStore};
use super::updates::{update_atoms, update_dof, update_labels};
use crate::error::Result;
use crate::lattice::Lattice;
use crate::potts::{Group, Label, LabelField, PottsHyper};
use crate::rng;
use crate::spd::SpdMatrix;
use crate::tensor::{estimate_sigma, Dataset};

const ADAPT_BATCH: usize = 50;
const TARGET_ACCEPT: (f64, f64) = (0.2, 0.5);

/// Data-driven starting state: subject labels by quantile bins of
/// `log |A_iv|`, group labels as the per-site modal subject label of the
/// group (smallest label on ties), `m = nu = 10`, `theta = (1, 1, 0.5)`, and
/// atoms drawn from their conditional given those labels.
pub fn initialize<R: Rng + ?Sized>(
    data: &Dataset,
    prep: &Prepared,
    config: &FitConfig,
    rng: &mut R,
) -> Result<ModelState> {
    let k = config.k;
    let n = prep.n_sites;
    let mut order: Vec<usize> = (0..prep.log_dets.len()).collect();
    order.sort_by(|&a, &b| prep.log_dets[a].total_cmp(&prep.log_dets[b]).then(a.cmp(&b)));
    let total = order.len();
    let mut flat = vec![1 as Label; total];
    for (rank, &obs) in order.iter().enumerate() {
        flat[obs] = (rank * k / total) as Label + 1;
    }
    let groups = data.groups();
    let g: Vec<Vec<Label>> = flat.chunks(n).map(<[Label]>::to_vec).collect();
    let h = Group::BOTH.map(|x| {
        let members: Vec<usize> = (0..groups.len()).filter(|&i| groups[i] == x).collect();
        (0..n)
            .map(|v| {
                let mut counts = vec![0usize; k];
                for &i in &members {
                    counts[g[i][v] as usize - 1] += 1;
                }
                // max_by_key keeps the last maximum; scan in reverse for the smallest label
                counts.iter().enumerate().rev().max_by_key(|(_, &c)| c).map_or(1, |(l, _)| l as Label + 1)
            })
            .collect::<Vec<Label>>()
    });
    let labels = LabelField::from_layers(k, groups, g, h)?;
    let sigma = estimate_sigma(data.fields())?;
    let mut state = ModelState {
        atoms: vec![sigma.clone(); k],
        labels,
        m: 10.0,
        nu: 10.0,
        theta: PottsHyper { alpha: 1.0, beta: 1.0, xi: 0.5 },
        sigma,
    };
    let stats = ClusterStats::compute(prep, &state.labels);
    update_atoms(&mut state, prep, &stats, config.atom_dof, rng)?;
    Ok(state)
}

/// Runs the sampler to completion.
pub fn run_chain(data: &Dataset, config: &FitConfig) -> Result<TraceStore> {
    run_chain_until(data, config, None)
}

/// Runs the sampler, stopping early (with `interrupted` set on the returned
/// trace) once `stop` becomes true.
pub fn run_chain_until(data: &Dataset, config: &FitConfig, stop: Option<&AtomicBool>) -> Result<TraceStore> {
    config.validate()?;
    let prep = Prepared::new(data)?;
    let mut rng = rng::seeded(config.seed);
    let state = initialize(data, &prep, config, &mut rng)?;
    run_from(data, &prep, config, state, &mut rng, stop)
}

/// Runs the sampler from a given state.
pub fn run_from(
    data: &Dataset,
    prep: &Prepared,
    config: &FitConfig,
    mut state: ModelState,
    rng: &mut rng::StreamRng,
    stop: Option<&AtomicBool>,
) -> Result<TraceStore> {
    config.validate()?;
    check_state(&state, prep)?;
    let lattice: &Lattice = data.lattice();
    let meta = TraceMeta {
        config: config.clone(),
        dim: prep.dim,
        dims: lattice.dims().to_vec(),
        n_sites: prep.n_sites,
        groups: data.groups(),
        subject_ids: data.fields().iter().map(|f| f.subject_id().to_string()).collect(),
        sigma: state.sigma.upper().to_vec(),
    };
    let mut trace = TraceStore::new(meta, lattice.mask().to_vec());
    let mut scales = config.rw_scales;
    let aux_chain =
        AuxChain { sweeps: config.dmh_inner_sweeps, order: config.sweep_order, block_moves: config.dmh_block_moves };
    let mut batch = [0usize; 3];
    let mut retained_accepts = [0usize; 3];

    for iter in 0..config.iterations {
        if stop.is_some_and(|s| s.load(Ordering::Relaxed)) {
            trace.interrupted = true;
            break;
        }
        update_labels(&mut state, prep, lattice, config.sweep_order, config.column_updates, rng)?;
        let stats = if config.label_swaps > 0 {
            let mut by_group = GroupStats::compute(prep, &state);
            label_swaps(&mut state, prep, &mut by_group, config.label_swaps, rng)?;
            by_group.total()
        } else {
            ClusterStats::compute(prep, &state.labels)
        };
        update_atoms(&mut state, prep, &stats, config.atom_dof, rng)?;
        let [acc_m, acc_nu] = update_dof(&mut state, prep, &stats, (scales.m, scales.nu), rng)?;
        let (theta, acc_theta) = dmh_step(lattice, &state.labels, &state.theta, &scales, &aux_chain, rng);
        state.theta = theta;
        let accepted = [acc_m, acc_nu, acc_theta];

        if iter < config.burn_in {
            if config.adapt {
                for (b, a) in batch.iter_mut().zip(accepted) {
                    *b += a as usize;
                }
                if (iter + 1) % ADAPT_BATCH == 0 {
                    adapt(&mut scales, &batch);
                    batch = [0; 3];
                }
            }
            continue;
        }

        for (r, a) in retained_accepts.iter_mut().zip(accepted) {
            *r += a as usize;
        }
        let sample = HyperSample {
            alpha: state.theta.alpha,
            beta: state.theta.beta,
            xi: state.theta.xi,
            m: state.m,
            nu: state.nu,
        };
        let labels = &state.labels;
        trace.push(sample, labels.group_layer(Group::Control), labels.group_layer(Group::Treatment));
        let retained = iter - config.burn_in;
        if retained.is_multiple_of(config.thin) {
            trace.snapshots.push(snapshot(iter, &state));
        }
    }

    let n = trace.n_retained().max(1) as f64;
    trace.acceptance = Acceptance {
        m: retained_accepts[0] as f64 / n,
        nu: retained_accepts[1] as f64 / n,
        theta: retained_accepts[2] as f64 / n,
        scales,
    };
    Ok(trace)
}

fn adapt(scales: &mut RwScales, accepted: &[usize; 3]) {
    let factor = |count: usize| {
        let rate = count as f64 / ADAPT_BATCH as f64;
        if rate < TARGET_ACCEPT.0 {
            0.7
        } else if rate > TARGET_ACCEPT.1 {
            1.3
        } else {
            1.0
        }
    };
    scales.m *= factor(accepted[0]);
    scales.nu *= factor(accepted[1]);
    let f = factor(accepted[2]);
    scales.alpha *= f;
    scales.beta *= f;
    scales.xi *= f;
}

fn snapshot(iteration: usize, state: &ModelState) -> Snapshot {
    let labels = &state.labels;
    Snapshot {
        iteration: iteration as u32,
        atoms: state.atoms.iter().flat_map(|a| a.upper().iter().copied()).collect(),
        g: (0..labels.n_subjects()).flat_map(|i| labels.subject_layer(i).iter().copied()).collect(),
        h: Group::BOTH.iter().flat_map(|&x| labels.group_layer(x).iter().copied()).collect(),
    }
}

/// Atoms of a snapshot as matrices.
pub fn snapshot_atoms(snap: &Snapshot, dim: usize) -> Result<Vec<SpdMatrix>> {
    snap.atoms.chunks(crate::spd::packed_len(dim)).map(|c| SpdMatrix::from_upper(dim, c)).collect()
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use rand::SeedableRng;

    use super::*;
    use crate::tensor::TensorField;
    use crate::wishart::{invwishart_sample, InvWishartParams};

    fn small_data(seed: u64) -> Dataset {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let lat = Arc::new(Lattice::grid(&[5, 5]).unwrap());
        let a = InvWishartParams::new(SpdMatrix::identity(3), 10.0).unwrap();
        let b = InvWishartParams::new(SpdMatrix::scaled_identity(3, 4.0), 10.0).unwrap();
        let fields = (0..4)
            .map(|i| {
                let ts: Vec<SpdMatrix> = (0..25)
                    .map(|v| invwishart_sample(if v % 5 < 2 { &a } else { &b }, &mut r))
                    .collect();
                let g = if i < 2 { Group::Control } else { Group::Treatment };
                TensorField::new(lat.clone(), format!("s{i}"), g, &ts).unwrap()
            })
            .collect();
        Dataset::new(fields).unwrap()
    }

    fn quick_config(k: usize) -> FitConfig {
        FitConfig { k, iterations: 60, burn_in: 20, seed: 42, thin: 10, ..Default::default() }
    }

    #[test]
    fn same_seed_same_trace() {
        let data = small_data(1);
        let a = run_chain(&data, &quick_config(4)).unwrap();
        let b = run_chain(&data, &quick_config(4)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_retained(), 40);
        assert_eq!(a.snapshots.len(), 4);
    }

    #[test]
    fn thread_count_does_not_change_the_trace() {
        let data = small_data(2);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_chain(&data, &quick_config(3)).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn single_cluster_never_differs() {
        let data = small_data(3);
        let t = run_chain(&data, &quick_config(1)).unwrap();
        assert!(t.difference_counts().iter().all(|&c| c == 0));
    }

    #[test]
    fn stop_flag_interrupts() {
        let data = small_data(4);
        let stop = AtomicBool::new(true);
        let t = run_chain_until(&data, &quick_config(3), Some(&stop)).unwrap();
        assert!(t.interrupted);
        assert_eq!(t.n_retained(), 0);
    }

    #[test]
    fn initial_labels_follow_log_determinant_quantiles() {
        let data = small_data(5);
        let prep = Prepared::new(&data).unwrap();
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let st = initialize(&data, &prep, &quick_config(4), &mut r).unwrap();
        let mut per_label = vec![Vec::new(); 4];
        for i in 0..4 {
            for v in 0..25 {
                per_label[st.labels.g(i, v) as usize - 1].push(prep.log_dets[i * 25 + v]);
            }
        }
        assert!(per_label.iter().all(|l| l.len() == 25));
        for w in per_label.windows(2) {
            let hi = w[0].iter().copied().fold(f64::MIN, f64::max);
            let lo = w[1].iter().copied().fold(f64::MAX, f64::min);
            assert!(hi <= lo);
        }
        for v in 0..25 {
            let (a, b) = (st.labels.g(0, v), st.labels.g(1, v));
            assert_eq!(st.labels.h(Group::Control, v), a.min(b));
        }
    }

    #[test]
    fn adaptation_moves_scales_toward_target() {
        let mut s = RwScales::default();
        adapt(&mut s, &[0, 49, 15]);
        assert!((s.m - 0.07).abs() < 1e-12);
        assert!((s.nu - 0.13).abs() < 1e-12);
        assert_eq!(s.beta, 0.1);
    }
}
