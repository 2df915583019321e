use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use spdmix::inference::{difference_map, rand_index, summarize, FitSummary};
use spdmix::io::{self, MaskFile};
use spdmix::sampler::{run_chain_until, HyperSample};
use spdmix::synth::{eval_detection, CholeskyScenario, DetectionRates, GroundTruth, MixtureScenario, PriorScenario};
use spdmix::variogram::{
    empirical_variogram, model_variogram, model_variogram_with_nugget, pairs_within, spatial_term_mc,
    EmpiricalOptions, McOptions, PairRole,
};
use spdmix::{Dataset, FitConfig, Group, Lattice, PottsHyper, SpdMatrix, TraceStore, VariogramCurve};

use crate::args::*;
use crate::error::{with_path, CliError, CliResult};

fn create_writer(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

/// Writes through `body`, then flushes, reporting failures against `path`.
fn write_with<F>(path: &Path, body: F) -> CliResult<()>
where
    F: FnOnce(&mut BufWriter<File>) -> spdmix::Result<()>,
{
    let mut w = create_writer(path)?;
    body(&mut w).map_err(with_path(path))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut w = create_writer(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Data(e.to_string()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("plain data serializes")
}

#[derive(Debug, Serialize)]
struct FileRecord {
    path: String,
    bytes: u64,
    sha256: String,
}

fn file_record(path: &Path, relative_to: Option<&Path>) -> CliResult<FileRecord> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let shown = relative_to.and_then(|base| path.strip_prefix(base).ok()).unwrap_or(path);
    Ok(FileRecord {
        path: shown.display().to_string(),
        bytes: bytes.len() as u64,
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

fn check_threshold(t: f64) -> CliResult<()> {
    if !(0.0..1.0).contains(&t) {
        return Err(CliError::Usage(format!("--threshold must lie in [0, 1), got {t}")));
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct SimulateManifest {
    scenario: String,
    scale: String,
    seed: u64,
    n_subjects: usize,
    dims: Vec<usize>,
    truth_sites: usize,
    files: Vec<FileRecord>,
}

pub fn simulate(a: &SimulateArgs) -> CliResult<()> {
    let desk = a.scale == Scale::Desk;
    let scenario = match a.scenario {
        Scenario::Mixture => if desk { MixtureScenario::desk() } else { MixtureScenario::paper() }.generate(a.seed),
        Scenario::Cholesky => if desk { CholeskyScenario::desk() } else { CholeskyScenario::paper() }.generate(a.seed),
        Scenario::Prior => {
            let side = if desk { 20 } else { 40 };
            PriorScenario { dims: vec![side, side], ..Default::default() }.generate(a.seed)
        }
    }?;
    fs::create_dir_all(&a.out).map_err(|e| CliError::io(&a.out, e))?;

    let mut written = Vec::new();
    for f in &scenario.fields {
        let path = a.out.join(format!("{}.spdf", f.subject_id()));
        write_with(&path, |w| io::write_tensor_field(w, f))?;
        written.push(path);
    }
    let lattice = scenario.fields[0].lattice();
    let mask = MaskFile::from_active(lattice, &scenario.truth.difference_mask)?;
    let truth_path = a.out.join("truth.spdm");
    write_with(&truth_path, |w| io::write_mask(w, &mask))?;
    written.push(truth_path);

    let manifest = SimulateManifest {
        scenario: format!("{:?}", a.scenario).to_lowercase(),
        scale: format!("{:?}", a.scale).to_lowercase(),
        seed: a.seed,
        n_subjects: scenario.fields.len(),
        dims: lattice.dims().to_vec(),
        truth_sites: scenario.truth.count(),
        files: written.iter().map(|p| file_record(p, Some(&a.out))).collect::<CliResult<_>>()?,
    };
    write_json(&a.out.join("manifest.json"), &manifest)?;
    println!("{}", to_json(&manifest));
    Ok(())
}

/// Run configuration file. Paths are relative to the file's directory.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub inputs: Vec<PathBuf>,
    pub trace: Option<PathBuf>,
    pub summary: Option<PathBuf>,
    /// Skip the positive-definiteness check on load.
    pub lenient: bool,
    /// Decision threshold used for the difference count in the summary.
    pub threshold: Option<f64>,
    pub sampler: FitConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.inputs.iter_mut().for_each(resolve);
        cfg.trace.iter_mut().for_each(resolve);
        cfg.summary.iter_mut().for_each(resolve);
        Ok(cfg)
    }
}

#[derive(Debug, Serialize)]
struct FitReport {
    #[serde(flatten)]
    summary: FitSummary,
    seed: u64,
    k: usize,
    inputs: Vec<FileRecord>,
    trace: FileRecord,
}

static STOP: AtomicBool = AtomicBool::new(false);

fn load_inputs(paths: &[PathBuf], strict: bool) -> CliResult<Dataset> {
    if paths.is_empty() {
        return Err(CliError::Usage("no input tensor files given".into()));
    }
    for p in paths {
        if !p.is_file() {
            return Err(CliError::io(p, std::io::Error::new(std::io::ErrorKind::NotFound, "no such file")));
        }
    }
    let fields = paths
        .iter()
        .map(|p| io::load_tensor_field(p, strict).map_err(with_path(p)))
        .collect::<CliResult<Vec<_>>>()?;
    Ok(Dataset::new(fields)?)
}

pub fn fit(a: &FitArgs) -> CliResult<()> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if !a.inputs.is_empty() {
        cfg.inputs = a.inputs.clone();
    }
    cfg.lenient |= a.lenient;
    let s = &mut cfg.sampler;
    if let Some(k) = a.k {
        s.k = k;
    }
    if let Some(n) = a.iterations {
        s.iterations = n;
    }
    if let Some(n) = a.burn_in {
        s.burn_in = n;
    }
    if let Some(seed) = a.seed {
        s.seed = seed;
    }
    let trace_path = a
        .out
        .clone()
        .or(cfg.trace.clone())
        .ok_or_else(|| CliError::Usage("no trace output given (--out or \"trace\" in the config)".into()))?;
    let summary_path =
        a.summary.clone().or(cfg.summary.clone()).unwrap_or_else(|| trace_path.with_extension("json"));
    let threshold = cfg.threshold.unwrap_or(0.5);
    check_threshold(threshold)?;
    cfg.sampler.validate()?;

    let data = load_inputs(&cfg.inputs, !cfg.lenient)?;
    // a second handler cannot be installed; the first one serves every fit in this process
    let _ = ctrlc::set_handler(|| STOP.store(true, Ordering::SeqCst));
    let trace = run_chain_until(&data, &cfg.sampler, Some(&STOP))?;
    write_with(&trace_path, |w| io::write_trace(w, &trace))?;
    if trace.interrupted {
        eprintln!("interrupted: wrote {} retained iterations to {}", trace.n_retained(), trace_path.display());
    }
    if trace.n_retained() == 0 {
        eprintln!("no retained iterations; summary skipped");
        return Ok(());
    }
    let report = FitReport {
        summary: summarize(&trace, threshold)?,
        seed: cfg.sampler.seed,
        k: cfg.sampler.k,
        inputs: cfg.inputs.iter().map(|p| file_record(p, None)).collect::<CliResult<_>>()?,
        trace: file_record(&trace_path, None)?,
    };
    write_json(&summary_path, &report)?;
    println!("{}", to_json(&report));
    Ok(())
}

fn load_trace(path: &Path) -> CliResult<TraceStore> {
    io::load_trace(path).map_err(with_path(path))
}

#[derive(Debug, Serialize)]
struct TestReport {
    threshold: f64,
    n_sites: usize,
    n_differences: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    rates: Option<DetectionRates>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rand_index: Option<f64>,
    files: Vec<FileRecord>,
}

pub fn test(a: &TestArgs) -> CliResult<()> {
    check_threshold(a.threshold)?;
    let trace = load_trace(&a.trace)?;
    let lattice = trace.lattice()?;
    let map = difference_map(&trace, a.threshold)?;

    let rates = match &a.truth {
        Some(p) => {
            let mask = io::load_mask(p).map_err(with_path(p))?;
            let truth = GroundTruth { dims: mask.dims.clone(), difference_mask: mask.to_active(&lattice)? };
            Some(eval_detection(&map.decision, &truth)?)
        }
        None => None,
    };
    let rand_index = match &a.compare {
        Some(p) => {
            let other = load_trace(p)?;
            if other.meta.dims != trace.meta.dims || other.mask != trace.mask {
                return Err(CliError::Data(format!("{} was fitted on a different lattice", p.display())));
            }
            let other_map = difference_map(&other, a.threshold)?;
            Some(rand_index(&map.decision, &other_map.decision)?)
        }
        None => None,
    };

    fs::create_dir_all(&a.out).map_err(|e| CliError::io(&a.out, e))?;
    let csv_path = a.out.join("difference.csv");
    write_with(&csv_path, |w| map.write_csv(w))?;
    let mask_path = a.out.join("difference.spdm");
    let mask = MaskFile::from_active(&lattice, &map.decision)?;
    write_with(&mask_path, |w| io::write_mask(w, &mask))?;
    let report = TestReport {
        threshold: a.threshold,
        n_sites: lattice.len(),
        n_differences: map.n_differences(),
        rates,
        rand_index,
        files: [&csv_path, &mask_path].iter().map(|p| file_record(p, Some(&a.out))).collect::<CliResult<_>>()?,
    };
    write_json(&a.out.join("report.json"), &report)?;
    println!("{}", to_json(&report));
    Ok(())
}

/// Pools curves over subject pairs, weighting each distance by its pair count.
fn pool_curves(curves: &[VariogramCurve]) -> VariogramCurve {
    let mut bins: BTreeMap<u64, (f64, u64)> = BTreeMap::new();
    for c in curves {
        for ((d, v), n) in c.distances.iter().zip(&c.values).zip(&c.pair_counts) {
            let e = bins.entry(d.to_bits()).or_default();
            e.0 += v * *n as f64;
            e.1 += n;
        }
    }
    let mut rows: Vec<(f64, f64, u64)> =
        bins.into_iter().map(|(d, (s, n))| (f64::from_bits(d), s / n.max(1) as f64, n)).collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    VariogramCurve {
        distances: rows.iter().map(|r| r.0).collect(),
        values: rows.iter().map(|r| r.1).collect(),
        pair_counts: rows.iter().map(|r| r.2).collect(),
        std_errors: None,
    }
}

pub fn variogram(cmd: &VariogramCommand) -> CliResult<()> {
    match cmd {
        VariogramCommand::Empirical(a) => empirical(a),
        VariogramCommand::McSpatial(a) => {
            let curve = spatial_curve(&a.spatial)?;
            write_with(&a.out, |w| curve.write_csv(w))
        }
        VariogramCommand::Model(a) => {
            let sigma = match &a.sigma {
                Some(v) => {
                    let p = (1..=8)
                        .find(|&p| spdmix::spd::packed_len(p) == v.len())
                        .ok_or_else(|| CliError::Usage(format!("--sigma needs p(p+1)/2 values, got {}", v.len())))?;
                    SpdMatrix::from_upper(p, v)?
                }
                None => SpdMatrix::identity(3),
            };
            let spatial = spatial_curve(&a.spatial)?;
            let curve = if a.separable {
                model_variogram(a.m, a.nu, &sigma, &spatial)?
            } else {
                model_variogram_with_nugget(a.m, a.nu, &sigma, &spatial)?
            };
            write_with(&a.out, |w| curve.write_csv(w))
        }
    }
}

fn spatial_curve(a: &SpatialArgs) -> CliResult<VariogramCurve> {
    let lattice = Lattice::grid(&a.dims).map_err(|e| CliError::Usage(format!("--dims: {e}")))?;
    let theta = PottsHyper { alpha: a.alpha, beta: a.beta, xi: a.xi };
    let role = match a.role {
        Role::SameSubject => PairRole::SameSubject,
        Role::SameGroup => PairRole::SameGroup,
        Role::BetweenGroups => PairRole::BetweenGroups,
    };
    let pairs = pairs_within(&lattice, a.max_dist);
    let opts = McOptions { burn_in: a.burn_in, sweeps: a.sweeps, replications: a.replications, seed: a.seed };
    spatial_term_mc(&lattice, &theta, a.k, a.subjects, role, &pairs, &opts).map_err(|e| match e {
        spdmix::Error::InvalidConfig(msg) => CliError::Usage(msg),
        other => other.into(),
    })
}

fn empirical(a: &EmpiricalArgs) -> CliResult<()> {
    let data = load_inputs(&a.inputs, !a.lenient)?;
    let fields = data.fields();
    let of = |g: Group| (0..fields.len()).filter(move |&i| fields[i].group() == g);
    let pairs: Vec<(usize, usize)> = match a.pair {
        PairKind::Individual => match &a.subject {
            Some(id) => {
                let i = fields
                    .iter()
                    .position(|f| f.subject_id() == id)
                    .ok_or_else(|| CliError::Usage(format!("no subject with id {id:?}")))?;
                vec![(i, i)]
            }
            None => (0..fields.len()).map(|i| (i, i)).collect(),
        },
        PairKind::Within => Group::BOTH
            .iter()
            .flat_map(|&g| {
                let members: Vec<usize> = of(g).collect();
                let mut v = Vec::new();
                for (x, &i) in members.iter().enumerate() {
                    for &j in &members[x + 1..] {
                        v.push((i, j));
                    }
                }
                v
            })
            .collect(),
        PairKind::Between => of(Group::Control).flat_map(|i| of(Group::Treatment).map(move |j| (i, j))).collect(),
    };
    if pairs.is_empty() {
        return Err(CliError::Usage(format!("the inputs contain no {:?} subject pairs", a.pair)));
    }
    if a.subject.is_some() && a.pair != PairKind::Individual {
        return Err(CliError::Usage("--subject only applies to --pair individual".into()));
    }
    let opts = EmpiricalOptions { max_dist: a.max_dist, pair_cap: a.pair_cap, seed: a.seed };
    let curves = pairs
        .iter()
        .map(|&(i, j)| empirical_variogram(&fields[i], &fields[j], &opts))
        .collect::<spdmix::Result<Vec<_>>>()?;
    let curve = pool_curves(&curves);
    write_with(&a.out, |w| curve.write_csv(w))
}

pub fn diagnose(a: &DiagnoseArgs) -> CliResult<()> {
    check_threshold(a.threshold)?;
    let trace = load_trace(&a.trace)?;
    let summary = summarize(&trace, a.threshold)?;
    if let Some(path) = &a.chains {
        let mut w = create_writer(path)?;
        let mut body = format!("iteration,{}\n", HyperSample::NAMES.join(","));
        let first = trace.meta.config.burn_in;
        for (i, s) in trace.samples.iter().enumerate() {
            let row: Vec<String> = s.as_array().iter().map(|v| format!("{v:?}")).collect();
            body.push_str(&format!("{},{}\n", first + i, row.join(",")));
        }
        w.write_all(body.as_bytes()).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))?;
    }
    match &a.out {
        Some(path) => write_json(path, &summary)?,
        None => println!("{}", to_json(&summary)),
    }
    Ok(())
}

pub fn import_csv(a: &ImportCsvArgs) -> CliResult<()> {
    let group = match a.group {
        GroupArg::Control => Group::Control,
        GroupArg::Treatment => Group::Treatment,
    };
    let file = File::open(&a.csv).map_err(|e| CliError::io(&a.csv, e))?;
    let field =
        io::read_tensor_csv(std::io::BufReader::new(file), &a.dims, &a.id, group, !a.lenient).map_err(with_path(&a.csv))?;
    write_with(&a.out, |w| io::write_tensor_field(w, &field))?;
    println!("{}", to_json(&file_record(&a.out, None)?));
    Ok(())
}

pub fn export_csv(a: &ExportCsvArgs) -> CliResult<()> {
    let field = io::load_tensor_field(&a.input, !a.lenient).map_err(with_path(&a.input))?;
    write_with(&a.out, |w| io::write_tensor_csv(w, &field))
}
