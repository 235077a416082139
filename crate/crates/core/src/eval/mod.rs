//! Error metrics, snapshot spectra, prediction timing and CSV reports.

mod benchmark;

pub use benchmark::{run_benchmark, BenchmarkConfig, BenchmarkOutcome, LevelOutcome};

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::field::Trajectory;
use crate::nn::ParamStore;
use crate::sampling::Hierarchy;
use crate::surrogate::{predict, LatentModel, Normalizer};

/// Mean per-node Euclidean distance, per simulation and time step.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub label: String,
    pub level: usize,
    /// `per_time[s][k]`: error of simulation `s` at time step `k`.
    pub per_time: Vec<Vec<f64>>,
    /// Time mean of each simulation.
    pub per_sim: Vec<f64>,
    /// Mean of `per_sim`.
    pub mean: f64,
}

impl ErrorReport {
    pub fn from_per_time(label: impl Into<String>, level: usize, per_time: Vec<Vec<f64>>) -> Result<Self> {
        if per_time.is_empty() || per_time.iter().any(Vec::is_empty) {
            return Err(Error::Argument("error report needs at least one simulation and time".into()));
        }
        let per_sim: Vec<f64> = per_time.iter().map(|e| e.iter().sum::<f64>() / e.len() as f64).collect();
        let mean = per_sim.iter().sum::<f64>() / per_sim.len() as f64;
        Ok(Self {
            label: label.into(),
            level,
            per_time,
            per_sim,
            mean,
        })
    }

    /// Long format: `sim,time,error` for every step, then one `sim,mean,..`
    /// row per simulation and a final `mean,mean,..` row.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        write!(w, "sim,time,error\r\n")?;
        for (s, errs) in self.per_time.iter().enumerate() {
            for (k, e) in errs.iter().enumerate() {
                write!(w, "{s},{k},{e:e}\r\n")?;
            }
        }
        for (s, e) in self.per_sim.iter().enumerate() {
            write!(w, "{s},mean,{e:e}\r\n")?;
        }
        write!(w, "mean,mean,{:e}\r\n", self.mean)?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        save_with(path, |w| self.write_csv(w))
    }
}

/// Per-time-step mean node distance `(1/n) sum_p |q_p - q'_p|`.
pub fn node_distances(reference: &Trajectory, approx: &Trajectory) -> Result<Vec<f64>> {
    let dims = |t: &Trajectory| (t.times(), t.nodes(), t.channels());
    if dims(reference) != dims(approx) {
        return Err(Error::Shape(format!(
            "reference is {:?}, approximation {:?}",
            dims(reference),
            dims(approx)
        )));
    }
    let c = reference.channels();
    Ok((0..reference.times())
        .map(|k| {
            let total: f64 = reference
                .frame(k)
                .chunks_exact(c)
                .zip(approx.frame(k).chunks_exact(c))
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
                .sum();
            total / reference.nodes().max(1) as f64
        })
        .collect())
}

/// Error report over paired simulations.
pub fn node_error(reference: &[Trajectory], approx: &[Trajectory]) -> Result<ErrorReport> {
    if reference.len() != approx.len() {
        return Err(Error::Shape(format!(
            "{} reference trajectories, {} approximations",
            reference.len(),
            approx.len()
        )));
    }
    let per_time = reference
        .iter()
        .zip(approx)
        .map(|(r, a)| node_distances(r, a))
        .collect::<Result<Vec<_>>>()?;
    ErrorReport::from_per_time("", 0, per_time)
}

/// Where predictions are compared with the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    /// On the full mesh, after the static lift.
    Full,
    /// At the model's own level, against downsampled references.
    Native,
}

/// Predicts every simulation in `sims` at the model's resolution.
pub fn predict_sims<M: LatentModel + ?Sized>(
    model: &M,
    store: &ParamStore,
    norm: &Normalizer,
    ds: &Dataset,
    sims: &[usize],
) -> Result<Vec<Trajectory>> {
    sims.iter()
        .map(|&s| {
            if s >= ds.n_sims() {
                return Err(Error::IndexOutOfRange {
                    index: s,
                    size: ds.n_sims(),
                });
            }
            predict(model, store, norm, ds.params(s), ds.times())
        })
        .collect()
}

/// Errors of a level-`level` model on the simulations `sims` of the
/// full-resolution dataset `ds`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_model<M: LatentModel + ?Sized>(
    model: &M,
    level: usize,
    store: &ParamStore,
    norm: &Normalizer,
    ds: &Dataset,
    h: &Hierarchy,
    sims: &[usize],
    space: Space,
) -> Result<ErrorReport> {
    if ds.level() != 0 {
        return Err(Error::Argument("evaluation needs the full-resolution dataset".into()));
    }
    let n_level = h.level(level)?.n_nodes();
    if model.n_nodes() != n_level {
        return Err(Error::Shape(format!(
            "model has {} nodes, level {level} has {n_level}",
            model.n_nodes()
        )));
    }
    let preds = predict_sims(model, store, norm, ds, sims)?;
    let mut per_time = Vec::with_capacity(sims.len());
    let lift = h.lift_to_0(level)?;
    let select = h.selection_from_0(level)?;
    for (&s, p) in sims.iter().zip(&preds) {
        let e = match space {
            Space::Full => node_distances(ds.states(s), &p.map_nodes(lift)?)?,
            Space::Native => node_distances(&ds.states(s).select_nodes(select.kept())?, p)?,
        };
        per_time.push(e);
    }
    let label = match space {
        Space::Full => "full",
        Space::Native => "native",
    };
    ErrorReport::from_per_time(label, level, per_time)
}

/// Leading normalized singular values of a snapshot matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    /// `sigma_i / sigma_1`, non-increasing.
    pub values: Vec<f64>,
}

impl SpectrumReport {
    pub const MAX_VALUES: usize = 50;

    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        write!(w, "index,normalized_singular_value\r\n")?;
        for (i, v) in self.values.iter().enumerate() {
            write!(w, "{},{v:e}\r\n", i + 1)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        save_with(path, |w| self.write_csv(w))
    }
}

/// Singular values of the uncentred snapshot matrix (`snapshots` holds one
/// snapshot of length `dim` per row), normalized by the largest and
/// truncated to [`SpectrumReport::MAX_VALUES`].
pub fn singular_spectrum(snapshots: &[f64], dim: usize) -> Result<SpectrumReport> {
    if dim == 0 || snapshots.len() % dim != 0 {
        return Err(Error::Shape("snapshots do not divide into rows of the given size".into()));
    }
    let n = snapshots.len() / dim;
    if n < 2 {
        return Err(Error::Argument(format!("spectrum needs at least 2 snapshots, got {n}")));
    }
    // Gram matrix on the smaller side; its eigenvalues are sigma^2
    let x = DMatrix::from_row_slice(n, dim, snapshots);
    let gram = if n <= dim { &x * x.transpose() } else { x.transpose() * &x };
    let mut ev: Vec<f64> = SymmetricEigen::new(gram).eigenvalues.iter().map(|v| v.max(0.0).sqrt()).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    let top = ev[0];
    if !(top > 0.0) {
        return Err(Error::Argument("snapshot matrix is all zeros".into()));
    }
    ev.truncate(SpectrumReport::MAX_VALUES);
    Ok(SpectrumReport {
        values: ev.iter().map(|v| (v / top).min(1.0)).collect(),
    })
}

/// Stacks every time step of the training simulations of `ds` as rows.
pub fn training_snapshots(ds: &Dataset) -> (Vec<f64>, usize) {
    let dim = ds.n_nodes() * ds.channels();
    let data = ds.train_indices().iter().flat_map(|&s| ds.states(s).data().iter().copied()).collect();
    (data, dim)
}

/// Mean wall-clock milliseconds per predicted trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingReport {
    pub predictions: usize,
    /// At the model's own resolution.
    pub native_ms: f64,
    /// Including the static lift to the full mesh.
    pub lifted_ms: f64,
}

/// Times `repetitions` passes over the simulations `sims`.
#[allow(clippy::too_many_arguments)]
pub fn time_predictions<M: LatentModel + ?Sized>(
    model: &M,
    level: usize,
    store: &ParamStore,
    norm: &Normalizer,
    ds: &Dataset,
    h: &Hierarchy,
    sims: &[usize],
    repetitions: usize,
) -> Result<TimingReport> {
    if repetitions == 0 || sims.is_empty() {
        return Err(Error::Argument("timing needs at least one repetition and simulation".into()));
    }
    let lift = h.lift_to_0(level)?;
    let count = repetitions * sims.len();
    let mut native = 0.0;
    let mut lifted = 0.0;
    for _ in 0..repetitions {
        for &s in sims {
            let start = Instant::now();
            let p = predict_sims(model, store, norm, ds, &[s])?.pop().expect("one sim");
            let mid = Instant::now();
            let full = p.map_nodes(lift)?;
            let end = Instant::now();
            std::hint::black_box(&full);
            native += (mid - start).as_secs_f64();
            lifted += (end - start).as_secs_f64();
        }
    }
    Ok(TimingReport {
        predictions: count,
        native_ms: native * 1e3 / count as f64,
        lifted_ms: lifted * 1e3 / count as f64,
    })
}

fn save_with(path: &Path, write: impl FnOnce(&mut std::io::BufWriter<std::fs::File>) -> Result<()>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write(&mut f)?;
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::symmetric_eigen;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn traj(times: usize, nodes: usize, data: Vec<f64>) -> Trajectory {
        Trajectory::new(times, nodes, 3, data).unwrap()
    }

    #[test]
    fn three_four_five() {
        let r = node_error(&[traj(1, 1, vec![0.0; 3])], &[traj(1, 1, vec![3.0, 4.0, 0.0])]).unwrap();
        assert_eq!(r.mean, 5.0);
        assert_eq!(r.per_time, vec![vec![5.0]]);
    }

    #[test]
    fn two_nodes_average() {
        let a = traj(1, 2, vec![0.0; 6]);
        let b = traj(1, 2, vec![1.0, 0.0, 0.0, 0.0, 0.0, 3.0]);
        assert_eq!(node_error(&[a], &[b]).unwrap().mean, 2.0);
    }

    #[test]
    fn identical_is_zero_and_mismatch_errors() {
        let a = traj(2, 2, (0..12).map(f64::from).collect());
        let r = node_error(std::slice::from_ref(&a), std::slice::from_ref(&a)).unwrap();
        assert!(r.per_time[0].iter().all(|&e| e == 0.0) && r.mean == 0.0);
        assert!(node_error(&[a.clone()], &[traj(1, 2, vec![0.0; 6])]).is_err());
        assert!(node_error(&[a.clone()], &[]).is_err());
    }

    #[test]
    fn aggregation_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let per_time: Vec<Vec<f64>> = (0..4).map(|s| (0..3 + s).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let r = ErrorReport::from_per_time("x", 1, per_time.clone()).unwrap();
        let sims: Vec<f64> = per_time.iter().map(|e| e.iter().sum::<f64>() / e.len() as f64).collect();
        assert!((r.mean - sims.iter().sum::<f64>() / 4.0).abs() < 1e-14);
        let mut csv = Vec::new();
        r.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("sim,time,error\r\n0,0,"));
        assert!(text.ends_with(&format!("mean,mean,{:e}\r\n", r.mean)));
    }

    #[test]
    fn spectrum_hand_cases() {
        let id = singular_spectrum(&[1.0, 0.0, 0.0, 1.0], 2).unwrap();
        assert!(id.values.iter().all(|v| (v - 1.0).abs() < 1e-15));
        // rank one: every row a multiple of (1, 2, 2)
        let r1: Vec<f64> = (1..=3).flat_map(|k| [k as f64, 2.0 * k as f64, 2.0 * k as f64]).collect();
        let s = singular_spectrum(&r1, 3).unwrap();
        assert_eq!(s.values[0], 1.0);
        assert!(s.values[1..].iter().all(|&v| v < 1e-7));
        assert!(singular_spectrum(&[0.0; 6], 3).is_err());
        assert!(singular_spectrum(&[1.0; 3], 3).is_err());
    }

    #[test]
    fn spectrum_matches_brute_force_gram() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for (n, dim) in [(10, 7), (6, 15), (20, 20)] {
            let x: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g: Vec<Vec<f64>> = (0..n)
                .map(|a| (0..n).map(|b| (0..dim).map(|i| x[a * dim + i] * x[b * dim + i]).sum()).collect())
                .collect();
            let mut sv: Vec<f64> = symmetric_eigen(&g).unwrap().values.iter().map(|v| v.max(0.0).sqrt()).collect();
            sv.sort_by(|a, b| b.total_cmp(a));
            let s = singular_spectrum(&x, dim).unwrap();
            assert_eq!(s.values.len(), n.min(dim));
            for (got, want) in s.values.iter().zip(&sv) {
                assert!((got - want / sv[0]).abs() < 1e-8);
            }
        }
    }
}
