use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::nn::{ParamStore, Tensor};

/// Per-channel z-scoring of node states and min-max scaling of the
/// `(mu, t)` inputs, fitted on training simulations.
///
/// Because the state transform is the same affine map at every node, it
/// commutes with any node operator whose rows sum to one; statistics fitted
/// at one level are therefore valid at every level of a hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    state_mean: Vec<f64>,
    state_scale: Vec<f64>,
    input_min: Vec<f64>,
    input_max: Vec<f64>,
}

const NAMES: [&str; 4] = [
    "norm.state_mean",
    "norm.state_scale",
    "norm.input_min",
    "norm.input_max",
];

impl Normalizer {
    pub fn new(state_mean: Vec<f64>, state_scale: Vec<f64>, input_min: Vec<f64>, input_max: Vec<f64>) -> Result<Self> {
        if state_mean.len() != state_scale.len() || input_min.len() != input_max.len() {
            return Err(Error::Shape("normalizer statistics have inconsistent lengths".into()));
        }
        if state_scale.iter().any(|&s| !(s > 0.0)) || input_min.iter().zip(&input_max).any(|(a, b)| !(b > a)) {
            return Err(Error::Argument("normalizer scales must be positive".into()));
        }
        Ok(Self {
            state_mean,
            state_scale,
            input_min,
            input_max,
        })
    }

    /// Statistics over the training simulations of `ds`. Constant channels
    /// or inputs get unit scale.
    pub fn fit(ds: &Dataset) -> Result<Self> {
        let train = ds.train_indices();
        if train.is_empty() {
            return Err(Error::Argument("no training simulations to fit normalization".into()));
        }
        let c = ds.channels();
        let mut sum = vec![0.0; c];
        let mut count = 0usize;
        for &s in &train {
            for node in ds.states(s).data().chunks_exact(c) {
                sum.iter_mut().zip(node).for_each(|(a, v)| *a += v);
                count += 1;
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut var = vec![0.0; c];
        for &s in &train {
            for node in ds.states(s).data().chunks_exact(c) {
                for ((a, v), m) in var.iter_mut().zip(node).zip(&mean) {
                    *a += (v - m) * (v - m);
                }
            }
        }
        let scale = var
            .iter()
            .map(|v| {
                let sd = (v / count as f64).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        let n_in = ds.n_params() + 1;
        let mut lo = vec![f64::INFINITY; n_in];
        let mut hi = vec![f64::NEG_INFINITY; n_in];
        for &s in &train {
            for (j, &v) in ds.params(s).iter().enumerate() {
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        for &t in ds.times() {
            lo[n_in - 1] = lo[n_in - 1].min(t);
            hi[n_in - 1] = hi[n_in - 1].max(t);
        }
        for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
            if !(*b > *a) {
                *b = *a + 1.0;
            }
        }
        Self::new(mean, scale, lo, hi)
    }

    pub fn channels(&self) -> usize {
        self.state_mean.len()
    }

    pub fn n_inputs(&self) -> usize {
        self.input_min.len()
    }

    /// Scales `[mu..., t]` to the unit box of the training data (values
    /// outside the training range map outside `[0, 1]`; no clamping).
    pub fn normalize_input(&self, mu: &[f64], t: f64) -> Result<Vec<f64>> {
        if mu.len() + 1 != self.n_inputs() {
            return Err(Error::Shape(format!(
                "expected {} scenario parameters, got {}",
                self.n_inputs() - 1,
                mu.len()
            )));
        }
        Ok(mu
            .iter()
            .chain(std::iter::once(&t))
            .zip(self.input_min.iter().zip(&self.input_max))
            .map(|(v, (lo, hi))| (v - lo) / (hi - lo))
            .collect())
    }

    /// In place, over interleaved `node x channel` data.
    pub fn normalize_states(&self, data: &mut [f64]) -> Result<()> {
        self.check(data)?;
        for node in data.chunks_exact_mut(self.channels()) {
            for ((v, m), s) in node.iter_mut().zip(&self.state_mean).zip(&self.state_scale) {
                *v = (*v - m) / s;
            }
        }
        Ok(())
    }

    pub fn denormalize_states(&self, data: &mut [f64]) -> Result<()> {
        self.check(data)?;
        for node in data.chunks_exact_mut(self.channels()) {
            for ((v, m), s) in node.iter_mut().zip(&self.state_mean).zip(&self.state_scale) {
                *v = *v * s + m;
            }
        }
        Ok(())
    }

    fn check(&self, data: &[f64]) -> Result<()> {
        if data.len() % self.channels() != 0 {
            return Err(Error::Shape(format!(
                "{} values are not a whole number of {}-channel nodes",
                data.len(),
                self.channels()
            )));
        }
        Ok(())
    }

    /// Stores the statistics as frozen `norm.*` entries.
    pub fn write_to_store(&self, store: &mut ParamStore) -> Result<()> {
        let values = [&self.state_mean, &self.state_scale, &self.input_min, &self.input_max];
        for (name, v) in NAMES.iter().zip(values) {
            store.insert(*name, Tensor::vector(v.clone())?)?;
            store.freeze(name)?;
        }
        Ok(())
    }

    pub fn from_store(store: &ParamStore) -> Result<Self> {
        let get = |n: &str| store.get(n).map(|t| t.data().to_vec());
        Self::new(get(NAMES[0])?, get(NAMES[1])?, get(NAMES[2])?, get(NAMES[3])?)
    }

    /// Whether a parameter name holds normalization statistics.
    pub fn is_statistic(name: &str) -> bool {
        name.starts_with("norm.")
    }
}
