use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use mhsl_core::datagen::{make_benchmark, uniform_times, Dataset, DatasetHeader, Split};
use mhsl_core::eval::{evaluate_model, node_error, singular_spectrum, training_snapshots, Space};
use mhsl_core::mesh::{load_mesh, save_mesh, Mesh};
use mhsl_core::nn::ParamStore;
use mhsl_core::sampling::{Hierarchy, HierarchyOptions};
use mhsl_core::surrogate::{predict as predict_traj, Normalizer, Surrogate, SurrogateArch, TrainConfig, TrainingSet};
use mhsl_core::transfer::{lift_to_full, refine as refine_model, ModelMeta};
use mhsl_core::{surrogate, Error};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Coarsen, Evaluate, GenData, Inspect, Predict, Refine, Spectrum, Train};

#[derive(Debug)]
pub enum CliError {
    /// Arguments that are well-formed but do not fit together.
    Usage(String),
    Data(Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Data(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.into())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(CliError::Usage(msg.into()))
}

pub fn gen_data(a: GenData) -> Result<()> {
    if a.sims == 0 {
        return usage("--sims must be at least 1");
    }
    let (mesh, ds) = make_benchmark(a.seed, a.sims)?;
    ds.write(&a.out)?;
    if let Some(p) = &a.mesh {
        save_mesh(&mesh, p)?;
    }
    println!(
        "wrote {} simulations x {} times x {} nodes to {}",
        ds.n_sims(),
        ds.times().len(),
        ds.n_nodes(),
        a.out.display()
    );
    Ok(())
}

pub fn coarsen(a: Coarsen) -> Result<()> {
    if !(a.pair_distance >= 0.0) {
        return usage("--pair-distance must be >= 0");
    }
    let mesh = load_mesh(&a.mesh)?;
    let opts = HierarchyOptions {
        pair_distance: a.pair_distance,
        ..HierarchyOptions::default()
    };
    let h = Hierarchy::build(&mesh, &a.levels, opts)?;
    let manifest = h.save(&a.out)?;
    println!("levels: {:?}", h.node_counts());
    println!("manifest: {}", manifest.display());
    Ok(())
}

fn manifest_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("manifest.json")
    } else {
        p.to_path_buf()
    }
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<TrainConfig> {
    let mut cfg = match path {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn full_resolution(ds: &Dataset) -> Result<()> {
    if ds.level() != 0 {
        return usage(format!("expected a full-resolution dataset, got level {}", ds.level()));
    }
    Ok(())
}

fn fit_and_save(
    model: &Surrogate,
    store: &mut ParamStore,
    set: &TrainingSet,
    cfg: &TrainConfig,
    meta: &ModelMeta,
    out: &Path,
    history: Option<&Path>,
) -> Result<()> {
    let hist = surrogate::train(model, store, set, cfg)?;
    store.save(out)?;
    meta.save(&ModelMeta::sidecar(out))?;
    if let Some(p) = history {
        hist.save_csv(p)?;
    }
    let best = hist.best();
    println!(
        "level {}: loss {:e} -> {:e} (best epoch {} of {})",
        model.level(),
        hist.initial.total,
        best.total,
        hist.best_epoch + 1,
        hist.epochs.len()
    );
    Ok(())
}

pub fn train(a: Train) -> Result<()> {
    let ds = Dataset::read(&a.dataset)?;
    full_resolution(&ds)?;
    let manifest = manifest_path(&a.hierarchy);
    let h = Hierarchy::load(&manifest)?;
    let level = a.level.unwrap_or(h.n_levels() - 1);
    if level >= h.n_levels() {
        return usage(format!("level {level} outside the hierarchy's 0..{}", h.n_levels()));
    }
    if h.level(0)?.n_nodes() != ds.n_nodes() {
        return usage("dataset and hierarchy disagree on the full mesh");
    }
    let cfg = load_config(a.config.as_deref(), a.seed)?;
    let arch: SurrogateArch = match &a.arch {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?).map_err(Error::from)?,
        None => SurrogateArch::default(),
    };
    arch.validate()?;
    if arch.n_inputs != ds.n_params() + 1 || arch.state_channels() != ds.channels() {
        return usage("architecture does not fit the dataset's parameters or channels");
    }
    let norm = Normalizer::fit(&ds)?;
    let mut store = ParamStore::new();
    norm.write_to_store(&mut store)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let lap = Arc::clone(&h.level(level)?.scaled_laplacian);
    let model = Surrogate::new_base(level, &lap, &arch, &mut store, &mut rng)?;
    let set = TrainingSet::from_dataset(&ds.downsample(&h, level)?, &ds.train_indices(), &norm)?;
    let meta = ModelMeta {
        arch,
        levels: vec![level],
        sparse_theta: cfg.sparse_theta,
        hierarchy: std::path::absolute(&manifest)?,
    };
    fit_and_save(&model, &mut store, &set, &cfg, &meta, &a.out, a.history.as_deref())
}

/// Checkpoint, its metadata, the hierarchy it refers to and the rebuilt chain.
fn load_model(checkpoint: &Path) -> Result<(ParamStore, ModelMeta, Hierarchy, Surrogate)> {
    let meta = ModelMeta::load(&ModelMeta::sidecar(checkpoint))?;
    let h = Hierarchy::load(&meta.hierarchy)?;
    let store = ParamStore::load(checkpoint)?;
    let model = meta.build(&h)?;
    Ok((store, meta, h, model))
}

pub fn refine(a: Refine) -> Result<()> {
    let (mut store, meta, h, coarse) = load_model(&a.checkpoint)?;
    let ds = Dataset::read(&a.dataset)?;
    full_resolution(&ds)?;
    if coarse.level() == 0 {
        return usage("the checkpoint already predicts the full mesh");
    }
    let level = a.level.unwrap_or(coarse.level() - 1);
    if level >= coarse.level() {
        return usage(format!("can only refine to levels below {}", coarse.level()));
    }
    let cfg = load_config(a.config.as_deref(), a.seed)?;
    if meta.levels.len() > 1 && meta.sparse_theta != cfg.sparse_theta {
        return usage("sparse_theta must match the upsamplers already in the chain");
    }
    let norm = Normalizer::from_store(&store)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let model = refine_model(coarse, &h, level, &mut store, &mut rng, cfg.sparse_theta)?;
    let set = TrainingSet::from_dataset(&ds.downsample(&h, level)?, &ds.train_indices(), &norm)?;
    let mut levels = meta.levels.clone();
    levels.push(level);
    let meta = ModelMeta {
        levels,
        sparse_theta: cfg.sparse_theta,
        ..meta
    };
    fit_and_save(&model, &mut store, &set, &cfg, &meta, &a.out, a.history.as_deref())
}

fn chain_member(model: &Surrogate, level: Option<usize>) -> Result<&Surrogate> {
    match level {
        None => Ok(model),
        Some(l) => model
            .at_level(l)
            .or_else(|_| usage(format!("no surrogate for level {l}; chain is {:?}", model.levels()))),
    }
}

pub fn predict(a: Predict) -> Result<()> {
    let (store, _, h, model) = load_model(&a.checkpoint)?;
    let m = chain_member(&model, a.level)?;
    if a.mu.len() + 1 != m.arch().n_inputs {
        return usage(format!("--mu needs {} values", m.arch().n_inputs - 1));
    }
    if a.times == 0 {
        return usage("--times must be at least 1");
    }
    let norm = Normalizer::from_store(&store)?;
    let times = uniform_times(a.times);
    let mut traj = predict_traj(m, &store, &norm, &a.mu, &times)?;
    let mut level = m.level();
    if a.lift {
        traj = lift_to_full(&traj, &h, level)?;
        level = 0;
    }
    if a.out.extension().is_some_and(|e| e == "mhsd") {
        let ds = Dataset::new(
            level as u32,
            traj.nodes(),
            traj.channels(),
            times,
            vec![a.mu.clone()],
            vec![traj],
            vec![Split::Test],
        )?;
        ds.write(&a.out)?;
    } else {
        std::fs::create_dir_all(&a.out)?;
        let rest = &h.level(level)?.mesh;
        for k in 0..traj.times() {
            let nodes = rest
                .nodes()
                .iter()
                .zip(traj.frame(k).chunks_exact(3))
                .map(|(p, d)| [p[0] + d[0], p[1] + d[1], p[2] + d[2]])
                .collect();
            let frame = Mesh::new(nodes, rest.faces().to_vec())?;
            save_mesh(&frame, &a.out.join(format!("frame_{k:04}.obj")))?;
        }
    }
    println!("level {level}: {} times x {} nodes -> {}", a.times, h.level(level)?.n_nodes(), a.out.display());
    Ok(())
}

pub fn evaluate(a: Evaluate) -> Result<()> {
    let reference = Dataset::read(&a.dataset)?;
    let report = if let Some(approx_path) = &a.approx {
        let approx = Dataset::read(approx_path)?;
        if approx.n_sims() != reference.n_sims() {
            return usage(format!(
                "{} reference simulations, {} approximate",
                reference.n_sims(),
                approx.n_sims()
            ));
        }
        let refs: Vec<_> = (0..reference.n_sims()).map(|s| reference.states(s).clone()).collect();
        let apps: Vec<_> = (0..approx.n_sims()).map(|s| approx.states(s).clone()).collect();
        node_error(&refs, &apps)?
    } else {
        let checkpoint = a.checkpoint.as_deref().expect("required unless --approx");
        full_resolution(&reference)?;
        let (store, _, h, model) = load_model(checkpoint)?;
        let m = chain_member(&model, a.level)?;
        let norm = Normalizer::from_store(&store)?;
        let sims = reference.test_indices();
        if sims.is_empty() {
            return usage("the dataset has no test simulations");
        }
        let space = if a.native { Space::Native } else { Space::Full };
        evaluate_model(m, m.level(), &store, &norm, &reference, &h, &sims, space)?
    };
    report.save_csv(&a.out)?;
    println!("mean error: {:e}", report.mean);
    Ok(())
}

pub fn spectrum(a: Spectrum) -> Result<()> {
    let ds = Dataset::read(&a.dataset)?;
    let (snapshots, dim) = training_snapshots(&ds);
    let report = singular_spectrum(&snapshots, dim)?;
    report.save_csv(&a.out)?;
    println!("{} singular values -> {}", report.values.len(), a.out.display());
    Ok(())
}

pub fn inspect(a: Inspect) -> Result<()> {
    let mut magic = [0u8; 4];
    std::fs::File::open(&a.path)?.read_exact(&mut magic)?;
    match &magic {
        b"MHSD" => {
            let h = DatasetHeader::read(&a.path)?;
            println!("format: MHSD v{}", h.version);
            println!("level: {}", h.level);
            println!("simulations: {}", h.n_sims);
            println!("times: {}", h.n_times);
            println!("nodes: {}", h.n_nodes);
            println!("channels: {}", h.channels);
            println!("scenario parameters: {}", h.n_params);
        }
        b"MHW1" => {
            let store = ParamStore::load(&a.path)?;
            println!("format: MHW1");
            let mut total = 0;
            for (name, t) in store.iter() {
                println!("{name} {:?}", t.shape());
                if !Normalizer::is_statistic(name) {
                    total += t.len();
                }
            }
            let sidecar = ModelMeta::sidecar(&a.path);
            if sidecar.exists() {
                let meta = ModelMeta::load(&sidecar)?;
                println!("levels: {:?}", meta.levels);
            }
            println!("parameters: {total}");
        }
        other => return Err(Error::Format(format!("unrecognized file magic {other:?}")).into()),
    }
    Ok(())
}
