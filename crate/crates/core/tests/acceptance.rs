//! One line per acceptance criterion; the test fails if any line does.
//!
//! Run with `--nocapture` to see the lines.

use std::sync::Arc;
use std::time::Instant;

use mhsl_core::datagen::{make_benchmark, Dataset};
use mhsl_core::eval::{node_error, run_benchmark, singular_spectrum, BenchmarkConfig, BenchmarkOutcome};
use mhsl_core::field::Trajectory;
use mhsl_core::linalg::symmetric_eigen;
use mhsl_core::mesh::{estimate_lambda_max, icosphere, normalized_laplacian, plate, scaled_laplacian, Graph};
use mhsl_core::nn::{
    count_params, grad_check, spectral_oracle, ChebConvLayer, Dense, ParamStore, Tape, Tensor,
};
use mhsl_core::sampling::{Hierarchy, HierarchyOptions, SelectionMatrix};
use mhsl_core::sparse::CsrMatrix;
use mhsl_core::surrogate::{
    batch_loss, pod_params, predict, reconstruct, LatentModel, Mlp, Normalizer, Surrogate, SurrogateArch, SurrogateLevel,
    TrainConfig, TrainingSet,
};
use mhsl_core::transfer::refine;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(f64::MIN_POSITIVE)
}

fn random_connected(rng: &mut ChaCha8Rng, max_n: usize) -> (usize, Vec<(usize, usize)>) {
    let n = rng.random_range(2..=max_n);
    let mut edges: Vec<(usize, usize)> = (1..n).map(|i| (i, rng.random_range(0..i))).collect();
    for _ in 0..rng.random_range(0..2 * n) {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        if a != b {
            edges.push((a, b));
        }
    }
    (n, edges)
}

fn spectral_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (n, edges) = random_connected(&mut rng, 12);
        let l = normalized_laplacian(&Graph::from_edges(n, &edges).map_err(|e| e.to_string())?);
        let lmax = estimate_lambda_max(&l).map_err(|e| e.to_string())?;
        let lap = Arc::new(scaled_laplacian(&l, lmax).map_err(|e| e.to_string())?);
        let order = rng.random_range(1..=4);
        let coeffs: Vec<f64> = (0..order).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();

        let mut store = ParamStore::new();
        for (k, &c) in coeffs.iter().enumerate() {
            store.insert(format!("t{k}"), Tensor::matrix(1, 1, vec![c]).unwrap()).unwrap();
        }
        let mut t = Tape::inference();
        let xv = t.constant(n, 1, x.clone()).unwrap();
        let thetas: Vec<_> = (0..order).map(|k| t.param(&store, &format!("t{k}")).unwrap()).collect();
        let y = t.cheb_conv(xv, &lap, &thetas, None).map_err(|e| e.to_string())?;
        let oracle = spectral_oracle(&x, &coeffs, &lap.to_dense()).map_err(|e| e.to_string())?;
        worst = worst.max(rel_err(t.value(y), &oracle));
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst < 1e-10 && secs < 10.0,
        format!("100 graphs, worst relative error {worst:.2e}, {secs:.2}s"),
    )
}

fn small_lap(nx: usize, ny: usize) -> Arc<CsrMatrix> {
    let l = normalized_laplacian(&mhsl_core::mesh::build_graph(&plate(nx, ny, 1.0)));
    let lmax = estimate_lambda_max(&l).unwrap();
    Arc::new(scaled_laplacian(&l, lmax).unwrap())
}

fn small_arch() -> SurrogateArch {
    SurrogateArch {
        channels: vec![3, 4, 5],
        mlp_hidden: vec![8, 8],
        latent: 3,
        ..SurrogateArch::default()
    }
}

fn uniform(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn perturb_trainable(store: &mut ParamStore, rng: &mut ChaCha8Rng) {
    for name in store.names().to_vec() {
        if !store.is_frozen(&name) {
            let t = store.get_mut(&name).unwrap();
            let moved: Vec<f64> = t.data().iter().map(|v| v + rng.random_range(-0.2..0.2)).collect();
            t.assign(&moved).unwrap();
        }
    }
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let eps = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut results: Vec<(&str, f64)> = Vec::new();
    let err = |e: mhsl_core::Error| e.to_string();

    // dense
    let mut s = ParamStore::new();
    let d = Dense::new("fc", 4, 3, true);
    d.init(&mut s, &mut rng).map_err(err)?;
    let (x, target) = (uniform(&mut rng, 20), uniform(&mut rng, 15));
    let r = grad_check(&s, eps, |t, s| {
        let xv = t.constant(5, 4, x.clone())?;
        let y = d.forward(t, s, xv)?;
        t.mse(y, &target)
    })
    .map_err(err)?;
    results.push(("dense", r.max_rel_error));

    // ELU on inputs of both signs
    let r = grad_check(&s, eps, |t, s| {
        let xv = t.constant(5, 4, x.iter().map(|v| 3.0 * v).collect())?;
        let y = d.forward(t, s, xv)?;
        let y = t.elu(y);
        t.mse(y, &target)
    })
    .map_err(err)?;
    results.push(("elu", r.max_rel_error));

    // Chebyshev convolution, three coefficients, input gradient included
    let lap = small_lap(4, 3);
    let n = lap.rows();
    let conv = ChebConvLayer::new("c", 3, 2, 3, true, Arc::clone(&lap)).map_err(err)?;
    let mut s = ParamStore::new();
    conv.init(&mut s, &mut rng).map_err(err)?;
    s.insert("x", Tensor::matrix(2 * n, 2, uniform(&mut rng, 4 * n)).unwrap()).map_err(err)?;
    let target = uniform(&mut rng, 6 * n);
    let r = grad_check(&s, eps, |t, s| {
        let xv = t.param(s, "x")?;
        let y = conv.forward(t, s, xv)?;
        t.mse(y, &target)
    })
    .map_err(err)?;
    results.push(("cheb_conv K=3", r.max_rel_error));

    // graph autoencoder
    let arch = small_arch();
    let gae = SurrogateLevel::new("g", 0, &lap, &arch, 4).map_err(err)?;
    let mut s = ParamStore::new();
    gae.init(&mut s, &mut rng, false).map_err(err)?;
    let states = uniform(&mut rng, 2 * n * 3);
    let r = grad_check(&s, eps, |t, s| {
        let xv = t.constant(2 * n, 3, states.clone())?;
        let y = reconstruct(t, &gae, s, xv)?;
        t.mse(y, &states)
    })
    .map_err(err)?;
    results.push(("graph autoencoder", r.max_rel_error));

    // composite loss on the base model
    let inputs = uniform(&mut rng, 8);
    let r = grad_check(&s, eps, |t, s| Ok(batch_loss(t, &gae, s, &inputs, &states, 0.7, 0.3)?.0)).map_err(err)?;
    results.push(("composite loss", r.max_rel_error));

    // refined model: each path separately, away from the zero residual init
    let h = Hierarchy::build(&plate(6, 5, 1.0), &[16, 8], HierarchyOptions::default()).map_err(err)?;
    let mut s = ParamStore::new();
    let coarse_lap = Arc::clone(&h.level(2).map_err(err)?.scaled_laplacian);
    let base = Surrogate::new_base(2, &coarse_lap, &arch, &mut s, &mut rng).map_err(err)?;
    let fine = refine(base, &h, 1, &mut s, &mut rng, true).map_err(err)?;
    perturb_trainable(&mut s, &mut rng);
    let n1 = h.level(1).map_err(err)?.n_nodes();
    let states = uniform(&mut rng, 2 * n1 * 3);
    let latent_target = uniform(&mut rng, 2 * arch.latent);
    let inputs = uniform(&mut rng, 8);
    let r = grad_check(&s, eps, |t, s| {
        let xv = t.constant(2 * n1, 3, states.clone())?;
        let z = fine.encode(t, s, xv)?;
        t.mse(z, &latent_target)
    })
    .map_err(err)?;
    results.push(("refined encoder", r.max_rel_error));
    let r = grad_check(&s, eps, |t, s| {
        let z = t.constant(2, arch.latent, latent_target.clone())?;
        let y = fine.decode(t, s, z)?;
        t.mse(y, &states)
    })
    .map_err(err)?;
    results.push(("refined decoder", r.max_rel_error));
    let r = grad_check(&s, eps, |t, s| {
        let u = t.constant(2, 4, inputs.clone())?;
        let z = fine.mlp(t, s, u)?;
        t.mse(z, &latent_target)
    })
    .map_err(err)?;
    results.push(("refined mlp", r.max_rel_error));
    let r = grad_check(&s, eps, |t, s| Ok(batch_loss(t, &fine, s, &inputs, &states, 1.0, 1.0)?.0)).map_err(err)?;
    results.push(("refined composite loss", r.max_rel_error));

    let secs = start.elapsed().as_secs_f64();
    let worst = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let detail = results.iter().map(|(k, e)| format!("{k} {e:.1e}")).collect::<Vec<_>>().join(", ");
    check(worst < 1e-6 && secs < 60.0, format!("{detail}; {secs:.2}s"))
}

fn selection_rows_one_hot(sel: &SelectionMatrix) -> bool {
    let m = sel.to_csr();
    (0..m.rows()).all(|r| {
        let (cols, vals) = m.row(r);
        cols.len() == 1 && vals[0] == 1.0 && cols[0] == sel.kept()[r]
    })
}

fn hierarchy_invariants(h: &Hierarchy, rng: &mut ChaCha8Rng) -> std::result::Result<(), String> {
    let err = |e: mhsl_core::Error| e.to_string();
    for l in 0..h.n_levels() - 1 {
        let tr = h.transition(l).map_err(err)?;
        if !selection_rows_one_hot(&tr.selection) {
            return Err(format!("selection {l} not one-hot"));
        }
        let u = tr.upsampling.matrix();
        for r in 0..u.rows() {
            let (cols, vals) = u.row(r);
            if cols.len() > 3 || (vals.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(format!("upsampling {l} row {r}: {vals:?}"));
            }
        }
        let x = uniform(rng, u.cols());
        let ux = u.matvec(&x);
        let back: Vec<f64> = tr.selection.kept().iter().map(|&p| ux[p]).collect();
        if back.iter().zip(&x).any(|(a, b)| (a - b).abs() > 1e-12) {
            return Err(format!("D(Ux) != x at transition {l}"));
        }
    }
    for l in 1..h.n_levels() {
        let mut composed = CsrMatrix::identity(h.level(0).map_err(err)?.n_nodes());
        for k in 0..l {
            composed = composed.matmul(h.transition(k).map_err(err)?.upsampling.matrix()).map_err(err)?;
        }
        let lift = h.lift_to_0(l).map_err(err)?;
        let diff = lift.add_scaled(1.0, &composed, -1.0).map_err(err)?;
        if diff.triplets().any(|(_, _, v)| v.abs() > 1e-12) {
            return Err(format!("lift to level {l} differs from the composed upsamplers"));
        }
    }
    Ok(())
}

fn sampling_invariants() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let sphere = Hierarchy::build(&icosphere(2), &[42], HierarchyOptions::default()).map_err(|e| e.to_string())?;
    let board = Hierarchy::build(&plate(30, 20, 1.0), &[150, 40], HierarchyOptions::default())
        .map_err(|e| e.to_string())?;
    hierarchy_invariants(&sphere, &mut rng)?;
    hierarchy_invariants(&board, &mut rng)?;
    let secs = start.elapsed().as_secs_f64();
    check(
        sphere.node_counts() == [162, 42] && board.node_counts() == [600, 150, 40] && secs < 10.0,
        format!("icosphere {:?}, plate {:?}, {secs:.2}s", sphere.node_counts(), board.node_counts()),
    )
}

fn parameter_counts() -> Outcome {
    let pod = pod_params(27942, 4);
    let mlp = count_params(&Mlp::new("m", 4, &[64, 64, 64], 4).specs());
    let arch = SurrogateArch::default();
    let within = |got: usize, want: usize| (got as f64 - want as f64).abs() / want as f64 <= 1e-3;
    let gcn: Vec<(usize, usize)> =
        [(1165, 253_987), (292, 65_419), (73, 18_115)].iter().map(|&(n, want)| (arch.autoencoder_params(n), want)).collect();
    check(
        pod == 111_768 && mlp == 8900 && gcn.iter().all(|&(g, w)| within(g, w)),
        format!("POD {pod}, MLP {mlp}, GCN stacks {gcn:?} (got, target)"),
    )
}

fn warm_start_transfer() -> Outcome {
    let err = |e: mhsl_core::Error| e.to_string();
    let (mesh, ds) = make_benchmark(5, 10).map_err(err)?;
    let h = Hierarchy::build(&mesh, &[64, 24, 8], HierarchyOptions::default()).map_err(err)?;
    let norm = Normalizer::fit(&ds).map_err(err)?;
    let arch = SurrogateArch {
        channels: vec![3, 6, 12],
        ..SurrogateArch::default()
    };
    let cfg = TrainConfig {
        epochs: 3,
        ..TrainConfig::default()
    };
    let train_sims = ds.train_indices();
    let set_at = |level: usize| -> std::result::Result<TrainingSet, String> {
        let d: Dataset = ds.downsample(&h, level).map_err(err)?;
        TrainingSet::from_dataset(&d, &train_sims, &norm).map_err(err)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut store = ParamStore::new();
    let lap = Arc::clone(&h.level(3).map_err(err)?.scaled_laplacian);
    let base = Surrogate::new_base(3, &lap, &arch, &mut store, &mut rng).map_err(err)?;
    mhsl_core::surrogate::train(&base, &mut store, &set_at(3)?, &cfg).map_err(err)?;

    let fine = refine(base.clone(), &h, 2, &mut store, &mut rng, false).map_err(err)?;
    let u = h.transition(2).map_err(err)?.upsampling.matrix();
    let ranges: Vec<(f64, f64)> = (0..ds.n_params())
        .map(|j| {
            let v = (0..ds.n_sims()).map(|s| ds.params(s)[j]);
            (v.clone().fold(f64::INFINITY, f64::min), v.fold(f64::NEG_INFINITY, f64::max))
        })
        .collect();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let mu: Vec<f64> = ranges.iter().map(|&(a, b)| rng.random_range(a..=b)).collect();
        let t = [rng.random_range(0.0..=1.0)];
        let coarse = predict(&base, &store, &norm, &mu, &t).map_err(err)?.map_nodes(u).map_err(err)?;
        let refined = predict(&fine, &store, &norm, &mu, &t).map_err(err)?;
        let d = refined.data().iter().zip(coarse.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(d);
    }
    let hist = mhsl_core::surrogate::train(&fine, &mut store, &set_at(2)?, &cfg).map_err(err)?;
    let frozen = hist.frozen_grad_max.iter().copied().fold(0.0, f64::max);
    check(
        worst <= 1e-12 && frozen == 0.0 && hist.frozen_grad_max.len() == cfg.epochs,
        format!(
            "100 (mu, t): max |refined - lifted coarse| {worst:.1e}; frozen gradient max {frozen:e} over {} epochs",
            hist.frozen_grad_max.len()
        ),
    )
}

fn describe(o: &BenchmarkOutcome) -> String {
    let errs: Vec<String> = o.levels.iter().map(|l| format!("L{} {:.4}", l.level, l.test_error)).collect();
    format!(
        "seed {}: {} vs POD {:.4} ({:.0}s; monotone {}, beats POD {}, refinements improve {})",
        o.seed,
        errs.join(" > "),
        o.pod_error,
        o.seconds,
        o.monotone(),
        o.finest_beats_pod(),
        o.refinements_improve()
    )
}

fn hierarchy_benchmark() -> Outcome {
    let start = Instant::now();
    let cfg = BenchmarkConfig::default();
    // independent seeds side by side, but never more threads than cores:
    // oversubscribing a core makes the whole run slower than sequential
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut outcomes = Vec::new();
    for seeds in [1u64, 2, 3].chunks(cores) {
        std::thread::scope(|s| {
            let cfg = &cfg;
            let jobs: Vec<_> = seeds.iter().map(|&seed| s.spawn(move || run_benchmark(seed, cfg))).collect();
            outcomes.extend(jobs.into_iter().map(|j| j.join().expect("benchmark thread")));
        });
    }
    let outcomes = outcomes.into_iter().collect::<mhsl_core::Result<Vec<_>>>().map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    for o in &outcomes {
        println!("    {}", describe(o));
    }
    let monotone = outcomes.iter().filter(|o| o.monotone()).count();
    let beats = outcomes.iter().all(|o| o.finest_beats_pod());
    let improve = outcomes.iter().all(|o| o.refinements_improve());
    check(
        2 * monotone > outcomes.len() && beats && improve && secs < 1800.0,
        format!(
            "(a) monotone in {monotone}/3 seeds, (b) beats POD in all: {beats}, (c) refinements improve in all: {improve}; total {secs:.0}s"
        ),
    )
}

fn metric_and_spectrum_oracles() -> Outcome {
    let err = |e: mhsl_core::Error| e.to_string();
    let reference = Trajectory::new(1, 1, 3, vec![0.0, 0.0, 0.0]).map_err(err)?;
    let approx = Trajectory::new(1, 1, 3, vec![3.0, 4.0, 0.0]).map_err(err)?;
    let e345 = node_error(&[reference], &[approx]).map_err(err)?.mean;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for &(snaps, dim) in &[(20, 7), (12, 30), (5, 5), (20, 20), (2, 9)] {
        let a = uniform(&mut rng, snaps * dim);
        let got = singular_spectrum(&a, dim).map_err(err)?.values;
        // brute force: eigenvalues of the dim x dim Gram matrix
        let gram: Vec<Vec<f64>> = (0..dim)
            .map(|i| (0..dim).map(|j| (0..snaps).map(|s| a[s * dim + i] * a[s * dim + j]).sum()).collect())
            .collect();
        let mut ev = symmetric_eigen(&gram).map_err(err)?.values;
        ev.sort_by(|x, y| y.total_cmp(x));
        let sv: Vec<f64> = ev.iter().take(snaps.min(dim)).map(|v| v.max(0.0).sqrt()).collect();
        let want: Vec<f64> = sv.iter().map(|v| v / sv[0]).collect();
        if got.len() != want.len() {
            return Err(format!("{snaps}x{dim}: {} values, expected {}", got.len(), want.len()));
        }
        worst = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
    }
    check(
        e345 == 5.0 && worst < 1e-8,
        format!("3-4-5 error {e345}; spectrum worst deviation {worst:.1e}"),
    )
}

fn format_round_trips() -> Outcome {
    let err = |e: mhsl_core::Error| e.to_string();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (mesh, ds) = make_benchmark(4, 5).map_err(err)?;

    let path = dir.path().join("d.mhsd");
    ds.write(&path).map_err(err)?;
    let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
    let back = Dataset::read(&path).map_err(err)?;
    let mut again = Vec::new();
    back.write_to(&mut again).map_err(err)?;
    let dataset_ok = back == ds && again == bytes;

    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let h = Hierarchy::build(&mesh, &[150, 40], HierarchyOptions::default()).map_err(err)?;
    let lap = Arc::clone(&h.level(2).map_err(err)?.scaled_laplacian);
    let base = Surrogate::new_base(2, &lap, &small_arch(), &mut store, &mut rng).map_err(err)?;
    refine(base, &h, 1, &mut store, &mut rng, true).map_err(err)?;
    let path = dir.path().join("w.mhw");
    store.save(&path).map_err(err)?;
    let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
    let loaded = ParamStore::load(&path).map_err(err)?;
    let mut again = Vec::new();
    loaded.write_to(&mut again).map_err(err)?;
    let bit_exact = |a: &ParamStore, b: &ParamStore| {
        a.names() == b.names()
            && (0..a.len()).all(|i| {
                a.tensor(i).shape() == b.tensor(i).shape()
                    && a.tensor(i).data().iter().map(|v| v.to_bits()).eq(b.tensor(i).data().iter().map(|v| v.to_bits()))
            })
    };
    // freezing is training state, not part of the file
    let weights_ok = bit_exact(&loaded, &store) && again == bytes;

    let mut operators_ok = true;
    for l in 0..2 {
        let tr = h.transition(l).map_err(err)?;
        for (name, m) in [("d", tr.selection.to_csr()), ("u", tr.upsampling.matrix().clone())] {
            let p = dir.path().join(format!("{name}{l}.mtx"));
            m.write_matrix_market(&p).map_err(err)?;
            let r = CsrMatrix::read_matrix_market(&p).map_err(err)?;
            operators_ok &= r == m;
        }
    }
    let manifest = h.save(&dir.path().join("h")).map_err(err)?;
    let reloaded = Hierarchy::load(&manifest).map_err(err)?;
    for l in 0..2 {
        let (a, b) = (h.transition(l).map_err(err)?, reloaded.transition(l).map_err(err)?);
        operators_ok &= a.selection == b.selection && a.upsampling == b.upsampling;
    }
    check(
        dataset_ok && weights_ok && operators_ok,
        format!("MHSD {dataset_ok}, MHW1 {weights_ok}, Matrix Market operators {operators_ok}"),
    )
}

#[test]
fn acceptance_criteria() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("spectral-oracle equivalence", spectral_oracle_equivalence),
        ("gradient correctness", gradient_correctness),
        ("sampling-operator invariants", sampling_invariants),
        ("parameter counts", parameter_counts),
        ("warm-start transfer", warm_start_transfer),
        ("hierarchy benchmark", hierarchy_benchmark),
        ("metric and spectrum oracles", metric_and_spectrum_oracles),
        ("format round trips", format_round_trips),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("criterion {id} PASS {name}: {detail}"),
            Err(detail) => {
                println!("criterion {id} FAIL {name}: {detail}");
                failed.push(id);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
