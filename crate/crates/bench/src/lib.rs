//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use mhsl_core::datagen::{make_benchmark, Dataset};
use mhsl_core::mesh::Mesh;
use mhsl_core::nn::ParamStore;
use mhsl_core::sampling::{Hierarchy, HierarchyOptions};
use mhsl_core::surrogate::{Normalizer, Surrogate, SurrogateArch, TrainingSet};
use mhsl_core::transfer::refine;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const LEVELS: [usize; 3] = [64, 24, 8];

pub fn bench_arch() -> SurrogateArch {
    SurrogateArch {
        channels: vec![3, 6, 12],
        ..SurrogateArch::default()
    }
}

/// The benchmark plate, its dataset and hierarchy.
pub struct Plate {
    pub mesh: Mesh,
    pub data: Dataset,
    pub hierarchy: Hierarchy,
    pub norm: Normalizer,
}

impl Plate {
    pub fn new() -> Self {
        let (mesh, data) = make_benchmark(1, 80).expect("benchmark data");
        let hierarchy = Hierarchy::build(&mesh, &LEVELS, HierarchyOptions::default()).expect("hierarchy");
        let norm = Normalizer::fit(&data).expect("normalizer");
        Self {
            mesh,
            data,
            hierarchy,
            norm,
        }
    }

    /// Untrained chain from the coarsest level down to `finest`.
    pub fn chain(&self, finest: usize) -> (Surrogate, ParamStore) {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let coarsest = LEVELS.len();
        let lap = Arc::clone(&self.hierarchy.level(coarsest).expect("level").scaled_laplacian);
        let mut m = Surrogate::new_base(coarsest, &lap, &bench_arch(), &mut store, &mut rng).expect("base");
        for level in (finest..coarsest).rev() {
            m = refine(m, &self.hierarchy, level, &mut store, &mut rng, false).expect("refine");
        }
        (m, store)
    }

    pub fn training_set(&self, level: usize) -> TrainingSet {
        let ds = self.data.downsample(&self.hierarchy, level).expect("downsample");
        TrainingSet::from_dataset(&ds, &ds.train_indices(), &self.norm).expect("training set")
    }
}

impl Default for Plate {
    fn default() -> Self {
        Self::new()
    }
}
