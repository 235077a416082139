//! The plate benchmark end to end: data, hierarchy, a trained surrogate per
//! level and a POD baseline, all scored on the full mesh.

use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{evaluate_model, Space};
use crate::datagen::make_benchmark;
use crate::error::Result;
use crate::nn::ParamStore;
use crate::sampling::{Hierarchy, HierarchyOptions};
use crate::surrogate::{
    pod_fit, train, LossParts, Normalizer, PodSurrogate, Surrogate, SurrogateArch, TrainConfig, TrainingSet,
};
use crate::transfer::refine;

#[derive(Debug, Clone)]
pub struct BenchmarkConfig {
    pub n_sims: usize,
    /// Node counts of levels 1.., finest first; one surrogate per level.
    pub level_sizes: Vec<usize>,
    pub arch: SurrogateArch,
    pub train: TrainConfig,
    pub pod_rank: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            n_sims: 80,
            level_sizes: vec![64, 24, 8],
            arch: SurrogateArch {
                channels: vec![3, 6, 12],
                ..SurrogateArch::default()
            },
            train: TrainConfig {
                epochs: 300,
                ..TrainConfig::default()
            },
            pod_rank: 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LevelOutcome {
    pub level: usize,
    pub n_nodes: usize,
    /// Training loss before the first step.
    pub initial: LossParts,
    pub best: LossParts,
    pub best_epoch: usize,
    /// Largest gradient seen on a frozen parameter over all epochs.
    pub frozen_grad_max: f64,
    /// Mean test error on the full mesh.
    pub test_error: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct BenchmarkOutcome {
    pub seed: u64,
    /// Coarsest first.
    pub levels: Vec<LevelOutcome>,
    pub pod_error: f64,
    pub pod_seconds: f64,
    pub seconds: f64,
}

impl BenchmarkOutcome {
    /// Test errors never increase from one level to the next finer one.
    pub fn monotone(&self) -> bool {
        self.levels.windows(2).all(|w| w[1].test_error <= w[0].test_error)
    }

    pub fn finest_beats_pod(&self) -> bool {
        self.levels.last().is_some_and(|l| l.test_error < self.pod_error)
    }

    /// Every refined level ends no worse than it started.
    pub fn refinements_improve(&self) -> bool {
        self.levels[1..].iter().all(|l| l.best.total <= l.initial.total)
    }
}

pub fn run_benchmark(seed: u64, cfg: &BenchmarkConfig) -> Result<BenchmarkOutcome> {
    let start = Instant::now();
    let (mesh, ds) = make_benchmark(seed, cfg.n_sims)?;
    let h = Hierarchy::build(&mesh, &cfg.level_sizes, HierarchyOptions::default())?;
    let norm = Normalizer::fit(&ds)?;
    let train_cfg = TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    let train_sims = ds.train_indices();
    let test_sims = ds.test_indices();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let coarsest = cfg.level_sizes.len();
    let mut model: Option<Surrogate> = None;
    let mut levels = Vec::new();
    for level in (1..=coarsest).rev() {
        let t0 = Instant::now();
        let m = match model.take() {
            None => {
                let lap = Arc::clone(&h.level(level)?.scaled_laplacian);
                Surrogate::new_base(level, &lap, &cfg.arch, &mut store, &mut rng)?
            }
            Some(coarse) => refine(coarse, &h, level, &mut store, &mut rng, cfg.train.sparse_theta)?,
        };
        let set = TrainingSet::from_dataset(&ds.downsample(&h, level)?, &train_sims, &norm)?;
        let hist = train(&m, &mut store, &set, &train_cfg)?;
        let report = evaluate_model(&m, level, &store, &norm, &ds, &h, &test_sims, Space::Full)?;
        levels.push(LevelOutcome {
            level,
            n_nodes: h.level(level)?.n_nodes(),
            initial: hist.initial,
            best: hist.best(),
            best_epoch: hist.best_epoch,
            frozen_grad_max: hist.frozen_grad_max.iter().copied().fold(0.0, f64::max),
            test_error: report.mean,
            seconds: t0.elapsed().as_secs_f64(),
        });
        model = Some(m);
    }

    let set = TrainingSet::from_dataset(&ds, &train_sims, &norm)?;
    let snapshots: Vec<f64> = (0..set.len()).flat_map(|i| set.state(i).iter().copied()).collect();
    let basis = pod_fit(&snapshots, set.sample_len(), cfg.pod_rank)?;
    let pod = PodSurrogate::new(
        "pod",
        ds.n_nodes(),
        ds.channels(),
        cfg.pod_rank,
        set.n_inputs(),
        &cfg.arch.mlp_hidden,
    );
    let mut pod_store = ParamStore::new();
    pod.init(&basis, &mut pod_store, &mut rng)?;
    // the fixed autoencoder makes the reconstruction term a constant
    let pod_cfg = TrainConfig {
        gamma_rec: 0.0,
        ..train_cfg.clone()
    };
    let t0 = Instant::now();
    train(&pod, &mut pod_store, &set, &pod_cfg)?;
    let pod_seconds = t0.elapsed().as_secs_f64();
    let pod_error = evaluate_model(&pod, 0, &pod_store, &norm, &ds, &h, &test_sims, Space::Full)?.mean;

    Ok(BenchmarkOutcome {
        seed,
        levels,
        pod_error,
        pod_seconds,
        seconds: start.elapsed().as_secs_f64(),
    })
}
