use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spdmix::io::{
    load_dataset, load_mask, load_trace, read_tensor_csv, save_mask, save_tensor_field, save_trace, write_tensor_csv,
    MaskFile,
};
use spdmix::sampler::run_chain;
use spdmix::synth::{generate_prior_field, MixtureScenario};
use spdmix::variogram::{empirical_variogram, model_variogram_with_nugget, EmpiricalOptions, VariogramCurve};
use spdmix::{Dataset, FitConfig, Lattice, PottsHyper, SpdMatrix};

#[test]
fn simulate_save_fit_and_reload() {
    let dir = tempfile::tempdir().unwrap();
    let s = MixtureScenario { side: 8, subjects_per_group: 2 }.generate(3).unwrap();
    let paths: Vec<_> = s
        .fields
        .iter()
        .map(|f| {
            let p = dir.path().join(format!("{}.spdf", f.subject_id()));
            save_tensor_field(&p, f).unwrap();
            p
        })
        .collect();
    let data = load_dataset(&paths, true).unwrap();
    assert_eq!(data.fields(), &s.fields[..]);
    // all subjects share one lattice after loading
    assert!(data.fields().iter().all(|f| Arc::ptr_eq(f.lattice(), data.lattice())));

    let mask = MaskFile::from_active(data.lattice(), &s.truth.difference_mask).unwrap();
    save_mask(dir.path().join("truth.spdm"), &mask).unwrap();
    let back = load_mask(dir.path().join("truth.spdm")).unwrap();
    assert_eq!(back.to_active(data.lattice()).unwrap(), s.truth.difference_mask);

    let cfg = FitConfig { k: 5, iterations: 60, burn_in: 20, thin: 10, ..Default::default() };
    let trace = run_chain(&data, &cfg).unwrap();
    save_trace(dir.path().join("fit.spdt"), &trace).unwrap();
    assert_eq!(load_trace(dir.path().join("fit.spdt")).unwrap(), trace);
}

#[test]
fn csv_export_and_import_are_lossless() {
    let s = MixtureScenario { side: 4, subjects_per_group: 1 }.generate(0).unwrap();
    let field = &s.fields[1];
    let mut buf = Vec::new();
    write_tensor_csv(&mut buf, field).unwrap();
    let back = read_tensor_csv(&buf[..], field.lattice().dims(), field.subject_id(), field.group(), true).unwrap();
    assert_eq!(back.values(), field.values());
}

fn mean_curve(curves: &[VariogramCurve]) -> (Vec<f64>, Vec<f64>) {
    let n = curves.len() as f64;
    let len = curves[0].len();
    let mean: Vec<f64> = (0..len).map(|d| curves.iter().map(|c| c.values[d]).sum::<f64>() / n).collect();
    let se = (0..len)
        .map(|d| {
            let var = curves.iter().map(|c| (c.values[d] - mean[d]).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        })
        .collect();
    (mean, se)
}

#[test]
fn empirical_variogram_of_prior_fields_matches_the_model() {
    // beta = 0: labels at distinct sites are independent, so the spatial
    // term is exactly 1 - 1/K at every distance
    let lat = Arc::new(Lattice::grid(&[12, 12]).unwrap());
    let (k, m, nu) = (3, 20.0, 30.0);
    let sigma = SpdMatrix::identity(3);
    let theta = PottsHyper { alpha: 0.0, beta: 0.0, xi: 0.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let curves: Vec<VariogramCurve> = (0..60)
        .map(|_| {
            let (field, _) = generate_prior_field(&lat, k, &theta, m, nu, &sigma, 1, &mut rng).unwrap();
            empirical_variogram(&field, &field, &EmpiricalOptions::new(3.0)).unwrap()
        })
        .collect();
    let (mean, se) = mean_curve(&curves);
    let spatial = VariogramCurve {
        distances: curves[0].distances.clone(),
        values: vec![1.0 - 1.0 / k as f64; curves[0].len()],
        pair_counts: curves[0].pair_counts.clone(),
        std_errors: None,
    };
    let model = model_variogram_with_nugget(m, nu, &sigma, &spatial).unwrap();
    for d in 0..mean.len() {
        let z = (mean[d] - model.values[d]) / se[d];
        assert!(z.abs() < 4.0, "distance {}: {} vs {} (z = {z:.2})", model.distances[d], mean[d], model.values[d]);
    }
}

#[test]
fn datasets_must_share_a_lattice() {
    let a = MixtureScenario { side: 4, subjects_per_group: 1 }.generate(0).unwrap();
    let b = MixtureScenario { side: 8, subjects_per_group: 1 }.generate(0).unwrap();
    assert!(Dataset::new(vec![a.fields[0].clone(), b.fields[1].clone()]).is_err());
}
