use std::sync::Arc;

use mhsl_core::datagen::{halton_sample, simulate, uniform_times, Dataset, ScenarioParams, Split};
use mhsl_core::eval::{node_error, singular_spectrum, ErrorReport};
use mhsl_core::field::Trajectory;
use mhsl_core::linalg::symmetric_eigen;
use mhsl_core::mesh::{build_graph, estimate_lambda_max, normalized_laplacian, plate, scaled_laplacian, Graph, Mesh};
use mhsl_core::nn::{chebyshev_basis, spectral_oracle, ParamStore, Tape, Tensor};
use mhsl_core::sampling::{build_upsampler, simplify, Hierarchy, HierarchyOptions, SimplifyOptions};
use mhsl_core::sparse::CsrMatrix;
use mhsl_core::surrogate::{pod_fit, LossParts};
use proptest::prelude::*;

/// Connected graph: a random tree plus extra edges.
fn connected_graph(max_n: usize) -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (2..=max_n).prop_flat_map(|n| {
        let parents: Vec<_> = (1..n).map(|i| 0..i).collect();
        let extra = proptest::collection::vec((0..n, 0..n), 0..2 * n);
        (Just(n), parents, extra).prop_map(|(n, parents, extra)| {
            let mut edges: Vec<(usize, usize)> = parents.into_iter().enumerate().map(|(i, p)| (i + 1, p)).collect();
            edges.extend(extra.into_iter().filter(|(a, b)| a != b));
            (n, edges)
        })
    })
}

fn scaled(n: usize, edges: &[(usize, usize)]) -> CsrMatrix {
    let l = normalized_laplacian(&Graph::from_edges(n, edges).unwrap());
    let lmax = estimate_lambda_max(&l).unwrap();
    scaled_laplacian(&l, lmax).unwrap()
}

fn cheb_forward(lap: &Arc<CsrMatrix>, x: &[f64], c_in: usize, coeffs: &[Vec<f64>], c_out: usize) -> Vec<f64> {
    let mut store = ParamStore::new();
    for (k, c) in coeffs.iter().enumerate() {
        store.insert(format!("t{k}"), Tensor::matrix(c_in, c_out, c.clone()).unwrap()).unwrap();
    }
    let mut t = Tape::inference();
    let xv = t.constant(x.len() / c_in, c_in, x.to_vec()).unwrap();
    let thetas: Vec<_> = (0..coeffs.len()).map(|k| t.param(&store, &format!("t{k}")).unwrap()).collect();
    let y = t.cheb_conv(xv, lap, &thetas, None).unwrap();
    t.value(y).to_vec()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn laplacian_symmetric_and_positive_semidefinite(
        (n, edges) in connected_graph(15),
        xs in proptest::collection::vec(-1.0f64..1.0, 15),
    ) {
        let l = normalized_laplacian(&Graph::from_edges(n, &edges).unwrap());
        for (r, c, v) in l.triplets() {
            prop_assert_eq!(l.get(c, r), v);
        }
        let x = &xs[..n];
        let q: f64 = l.matvec(x).iter().zip(x).map(|(a, b)| a * b).sum();
        prop_assert!(q >= -1e-12);
    }

    #[test]
    fn scaled_laplacian_spectrum_within_unit_interval((n, edges) in connected_graph(20)) {
        let lap = scaled(n, &edges);
        let ev = symmetric_eigen(&lap.to_dense()).unwrap().values;
        prop_assert!(ev.iter().all(|v| v.abs() <= 1.0 + 1e-6), "{:?}", ev);
    }

    #[test]
    fn graph_ignores_face_order(seed in any::<u64>()) {
        let mesh = plate(5, 4, 1.0);
        let mut faces = mesh.faces().to_vec();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(&mut faces[..], &mut rng);
        let shuffled = Mesh::new(mesh.nodes().to_vec(), faces).unwrap();
        let (a, b) = (build_graph(&mesh), build_graph(&shuffled));
        prop_assert_eq!(a.adjacency(), b.adjacency());
    }

    #[test]
    fn cheb_conv_matches_spectral_filter(
        (n, edges) in connected_graph(12),
        coeffs in proptest::collection::vec(-1.0f64..1.0, 1..=4),
        xs in proptest::collection::vec(-1.0f64..1.0, 12),
    ) {
        let lap = Arc::new(scaled(n, &edges));
        let x = &xs[..n];
        let want = spectral_oracle(x, &coeffs, &lap.to_dense()).unwrap();
        let per_k: Vec<Vec<f64>> = coeffs.iter().map(|&c| vec![c]).collect();
        let got = cheb_forward(&lap, x, 1, &per_k, 1);
        let scale = want.iter().fold(1e-300f64, |m, v| m.max(v.abs()));
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() / scale < 1e-10, "{} vs {}", g, w);
        }
    }

    #[test]
    fn cheb_conv_is_linear(
        (n, edges) in connected_graph(10),
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let lap = Arc::new(scaled(n, &edges));
        let (c_in, c_out, batch) = (2, 3, 2);
        let coeffs: Vec<Vec<f64>> = (0..3).map(|_| (0..c_in * c_out).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let x1: Vec<f64> = (0..batch * n * c_in).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x2: Vec<f64> = (0..batch * n * c_in).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mix: Vec<f64> = x1.iter().zip(&x2).map(|(p, q)| a * p + b * q).collect();
        let y1 = cheb_forward(&lap, &x1, c_in, &coeffs, c_out);
        let y2 = cheb_forward(&lap, &x2, c_in, &coeffs, c_out);
        let ym = cheb_forward(&lap, &mix, c_in, &coeffs, c_out);
        for ((m, p), q) in ym.iter().zip(&y1).zip(&y2) {
            prop_assert!((m - (a * p + b * q)).abs() < 1e-12);
        }
    }

    #[test]
    fn chebyshev_recursion_matches_cosine_form(a in -1.0f64..=1.0, k in 0usize..=6) {
        let one = CsrMatrix::from_triplets(1, 1, vec![(0, 0, a)]).unwrap();
        let basis = chebyshev_basis(&one, &[1.0], 1, k + 1);
        prop_assert!((basis[k][0] - (k as f64 * a.acos()).cos()).abs() < 1e-12);
    }

    #[test]
    fn loss_parts_combine_exactly(a in 0.0f64..10.0, r in 0.0f64..10.0, ga in 0.0f64..5.0, gr in 0.0f64..5.0) {
        let p = LossParts::combine(a, r, ga, gr);
        prop_assert_eq!(p.total, ga * a + gr * r);
        prop_assert_eq!((p.approx, p.rec), (a, r));
    }

    #[test]
    fn spectrum_is_normalized_and_non_increasing(
        rows in 2usize..8,
        dim in 1usize..8,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..rows * dim).map(|_| rng.random_range(-3.0..3.0)).collect();
        let s = singular_spectrum(&x, dim).unwrap();
        prop_assert_eq!(s.values[0], 1.0);
        prop_assert!(s.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert!(s.values.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn error_report_aggregates_exactly(per_time in proptest::collection::vec(proptest::collection::vec(0.0f64..5.0, 1..6), 1..6)) {
        let r = ErrorReport::from_per_time("p", 0, per_time.clone()).unwrap();
        let sims: Vec<f64> = per_time.iter().map(|e| e.iter().sum::<f64>() / e.len() as f64).collect();
        let grand = sims.iter().sum::<f64>() / sims.len() as f64;
        prop_assert!((r.mean - grand).abs() <= 1e-14);
        prop_assert!(r.per_sim.iter().chain(std::iter::once(&r.mean)).all(|&v| v >= 0.0));
    }

    #[test]
    fn node_error_of_a_uniform_shift_is_its_length(dx in -3.0f64..3.0, dy in -3.0f64..3.0, dz in -3.0f64..3.0) {
        let a = Trajectory::zeros(2, 4, 3);
        let b = Trajectory::new(2, 4, 3, [dx, dy, dz].repeat(8)).unwrap();
        let r = node_error(&[a], &[b]).unwrap();
        prop_assert!((r.mean - (dx * dx + dy * dy + dz * dz).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn simulate_is_translation_consistent(
        mu in (5.0f64..35.0, -0.78f64..0.78, 168.0f64..758.0),
        shift in (-50.0f64..50.0, -50.0f64..50.0),
    ) {
        let mesh = plate(6, 4, 1.0);
        let moved = Mesh::new(
            mesh.nodes().iter().map(|p| [p[0] + shift.0, p[1] + shift.1, 0.0]).collect(),
            mesh.faces().to_vec(),
        ).unwrap();
        let params = ScenarioParams::new(mu.0, mu.1, mu.2).unwrap();
        let times = uniform_times(6);
        let a = simulate(&mesh, params, &times).unwrap();
        let b = simulate(&moved, params, &times).unwrap();
        for (p, q) in a.data().iter().zip(b.data()) {
            prop_assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn in_plane_displacement_grows_in_time(mu in (0.0f64..35.0, -0.78f64..0.78, 168.0f64..758.0)) {
        let mesh = plate(6, 4, 1.0);
        let traj = simulate(&mesh, ScenarioParams::new(mu.0, mu.1, mu.2).unwrap(), &uniform_times(11)).unwrap();
        for p in 0..mesh.n_nodes() {
            let mags: Vec<f64> = (0..11).map(|k| {
                let d = &traj.frame(k)[3 * p..3 * p + 3];
                d[0].hypot(d[1])
            }).collect();
            prop_assert!(mags.windows(2).all(|w| w[1] >= w[0]), "{:?}", mags);
        }
    }

    #[test]
    fn pod_modes_orthonormal(rows in 3usize..12, dim in 3usize..12, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..rows * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rank = 2;
        let b = pod_fit(&x, dim, rank).unwrap();
        for p in 0..rank {
            for q in 0..rank {
                let d: f64 = (0..dim).map(|i| b.modes[i * rank + p] * b.modes[i * rank + q]).sum();
                let expect = if p == q { 1.0 } else { 0.0 };
                prop_assert!((d - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn dataset_round_trip_is_bit_exact(
        sims in 0usize..4,
        n_times in 1usize..4,
        nodes in 1usize..5,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut any_f64 = || f64::from_bits(rng.random::<u64>() & !(0x7ff << 52) | (rng.random_range(1..0x7fe) << 52));
        let params: Vec<Vec<f64>> = (0..sims).map(|_| (0..3).map(|_| any_f64()).collect()).collect();
        let states: Vec<Trajectory> = (0..sims)
            .map(|_| Trajectory::new(n_times, nodes, 3, (0..n_times * nodes * 3).map(|_| any_f64()).collect()).unwrap())
            .collect();
        let splits = (0..sims).map(|s| if s % 2 == 0 { Split::Train } else { Split::Test }).collect();
        let times: Vec<f64> = (0..n_times).map(|k| k as f64 * 0.25).collect();
        let ds = Dataset::new(2, nodes, 3, times, params, states, splits).unwrap();
        let mut bytes = Vec::new();
        ds.write_to(&mut bytes).unwrap();
        let back = Dataset::read_from(&mut bytes.as_slice()).unwrap();
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        prop_assert_eq!(bytes, again);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact(shapes in proptest::collection::vec(proptest::collection::vec(1usize..4, 1..3), 0..5), seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        for (i, shape) in shapes.iter().enumerate() {
            let len = shape.iter().product();
            let data = (0..len).map(|_| f64::from_bits(rng.random::<u64>() >> 2)).collect();
            store.insert(format!("p{i}.w"), Tensor::new(shape.clone(), data).unwrap()).unwrap();
        }
        let mut bytes = Vec::new();
        store.write_to(&mut bytes).unwrap();
        let back = ParamStore::read_from(&mut bytes.as_slice()).unwrap();
        prop_assert_eq!(back.names(), store.names());
        for ((_, a), (_, b)) in back.iter().zip(store.iter()) {
            prop_assert_eq!(a.shape(), b.shape());
            prop_assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn halton_samples_are_deterministic_and_in_range(n in 1usize..40) {
        let ranges = [(5.0, 35.0), (-1.0, 1.0)];
        let a = halton_sample(n, &ranges).unwrap();
        prop_assert_eq!(&a, &halton_sample(n, &ranges).unwrap());
        prop_assert!(a.iter().all(|p| (5.0..35.0).contains(&p[0]) && (-1.0..1.0).contains(&p[1])));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn upsampling_operators_are_consistent(nx in 4usize..9, ny in 3usize..7, frac in 0.3f64..0.8, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mesh = plate(nx, ny, 1.0);
        let target = ((mesh.n_nodes() as f64 * frac) as usize).max(3);
        let s = simplify(&mesh, target, SimplifyOptions::default()).unwrap();
        let again = simplify(&mesh, target, SimplifyOptions::default()).unwrap();
        prop_assert_eq!(s.selection.kept(), again.selection.kept());
        let u = build_upsampler(&mesh, &s.coarse, &s.selection).unwrap();
        for r in 0..u.matrix().rows() {
            let (cols, vals) = u.matrix().row(r);
            prop_assert!(cols.len() <= 3);
            prop_assert!((vals.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        // D(U x) = x
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..s.coarse.n_nodes()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fine = u.matrix().matvec(&x);
        for (j, &p) in s.selection.kept().iter().enumerate() {
            prop_assert_eq!(fine[p], x[j]);
        }
    }

    #[test]
    fn lift_composes_transitions(seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let h = Hierarchy::build(&plate(8, 6, 1.0), &[30, 14, 6], HierarchyOptions::default()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for l in 1..h.n_levels() {
            let x: Vec<f64> = (0..h.level(l).unwrap().n_nodes()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let direct = h.lift_to_0(l).unwrap().matvec(&x);
            let mut stepwise = x.clone();
            for k in (1..=l).rev() {
                stepwise = h.transition(k - 1).unwrap().upsampling.matrix().matvec(&stepwise);
            }
            for (a, b) in direct.iter().zip(&stepwise) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
