//! Closed-form parametric plate dynamics, Halton parameter sampling and the
//! dataset container.

mod dataset;

pub use dataset::{Dataset, DatasetHeader, Split};

use crate::error::{Error, Result};
use crate::field::Trajectory;
use crate::mesh::{plate, Mesh};

/// Stiffness scale of the in-plane response.
pub const STIFFNESS_SCALE: f64 = 400.0;
/// Out-of-plane buckling amplitude relative to the plate extent.
pub const BUCKLING_AMPLITUDE: f64 = 0.15;

/// Radical inverse of a 1-based `index` in a prime `base`.
pub fn halton(index: u64, base: u32) -> Result<f64> {
    if !is_prime(base) {
        return Err(Error::Argument(format!("Halton base {base} is not prime")));
    }
    let b = base as u64;
    let (mut i, mut f, mut r) = (index, 1.0, 0.0);
    while i > 0 {
        f /= b as f64;
        r += f * (i % b) as f64;
        i /= b;
    }
    Ok(r)
}

fn is_prime(n: u32) -> bool {
    n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| n % d != 0)
}

fn first_primes(k: usize) -> Vec<u32> {
    (2..).filter(|&n| is_prime(n)).take(k).collect()
}

/// `n_s` Halton points (indices `start..start + n_s`, bases 2, 3, 5, ..),
/// mapped affinely onto `ranges`.
pub fn halton_sample_from(start: u64, n_s: usize, ranges: &[(f64, f64)]) -> Result<Vec<Vec<f64>>> {
    for &(lo, hi) in ranges {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Argument(format!("invalid range [{lo}, {hi}]")));
        }
    }
    let bases = first_primes(ranges.len());
    (0..n_s as u64)
        .map(|i| {
            ranges
                .iter()
                .zip(&bases)
                .map(|(&(lo, hi), &b)| Ok(lo + (hi - lo) * halton(start + i, b)?))
                .collect()
        })
        .collect()
}

/// `n_s` Halton points starting at index 1.
pub fn halton_sample(n_s: usize, ranges: &[(f64, f64)]) -> Result<Vec<Vec<f64>>> {
    halton_sample_from(1, n_s, ranges)
}

/// Impact scenario: speed, in-plane angle and stiffness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioParams {
    pub speed: f64,
    pub angle: f64,
    pub stiffness: f64,
}

impl ScenarioParams {
    pub fn new(speed: f64, angle: f64, stiffness: f64) -> Result<Self> {
        let quarter = std::f64::consts::FRAC_PI_4;
        if !(speed >= 0.0 && speed.is_finite()) {
            return Err(Error::Argument(format!("impact speed must be >= 0, got {speed}")));
        }
        if !(-quarter..=quarter).contains(&angle) {
            return Err(Error::Argument(format!("impact angle {angle} outside [-pi/4, pi/4]")));
        }
        if !(stiffness > 0.0 && stiffness.is_finite()) {
            return Err(Error::Argument(format!("stiffness must be > 0, got {stiffness}")));
        }
        Ok(Self { speed, angle, stiffness })
    }

    pub fn from_slice(mu: &[f64]) -> Result<Self> {
        match *mu {
            [s, a, k] => Self::new(s, a, k),
            _ => Err(Error::Shape(format!("expected 3 scenario parameters, got {}", mu.len()))),
        }
    }

    pub fn to_vec(self) -> Vec<f64> {
        vec![self.speed, self.angle, self.stiffness]
    }
}

fn ramp(u: f64) -> f64 {
    if u > 0.0 {
        u - u.tanh()
    } else {
        0.0
    }
}

/// Displacement trajectory of a flat plate hit along the direction
/// `(cos angle, sin angle, 0)`.
///
/// A crush front enters at the leading edge and travels at the impact
/// speed; behind it nodes are pushed back by a saturating ramp scaled by
/// `STIFFNESS_SCALE / stiffness` and buckle out of plane with a half-sine
/// profile along the impact direction.
pub fn simulate(mesh: &Mesh, params: ScenarioParams, times: &[f64]) -> Result<Trajectory> {
    if let Some(p) = mesh.nodes().iter().position(|p| p[2] != 0.0) {
        return Err(Error::Argument(format!("node {p} is off the z = 0 plane; only flat plates are supported")));
    }
    let d = [params.angle.cos(), params.angle.sin()];
    let phi: Vec<f64> = mesh.nodes().iter().map(|p| p[0] * d[0] + p[1] * d[1]).collect();
    let phi_min = phi.iter().copied().fold(f64::INFINITY, f64::min);
    let phi_max = phi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let extent = phi_max - phi_min;
    let push = STIFFNESS_SCALE / params.stiffness;
    let n = mesh.n_nodes();
    let mut out = Trajectory::zeros(times.len(), n, 3);
    for (k, &t) in times.iter().enumerate() {
        let frame = out.frame_mut(k);
        for (p, &ph) in phi.iter().enumerate() {
            let depth = ph - phi_min;
            let h = ramp(params.speed * t - depth);
            let v = &mut frame[3 * p..3 * p + 3];
            v[0] = -d[0] * push * h;
            v[1] = -d[1] * push * h;
            v[2] = if extent > 0.0 {
                BUCKLING_AMPLITUDE * extent * (h / extent).tanh() * (std::f64::consts::PI * depth / extent).sin()
            } else {
                0.0
            };
        }
    }
    Ok(out)
}

/// Parameter ranges of the benchmark: speed, angle, stiffness.
pub const BENCHMARK_RANGES: [(f64, f64); 3] = [
    (5.0, 35.0),
    (-std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_4),
    (168.0, 758.0),
];
pub const BENCHMARK_TIMES: usize = 51;
pub const BENCHMARK_PLATE: (usize, usize) = (30, 20);

/// `count` uniformly spaced times on `[0, 1]`.
pub fn uniform_times(count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..count).map(|k| k as f64 / (count - 1) as f64).collect(),
    }
}

/// Benchmark dataset on the 30 x 20 unit-spaced plate.
///
/// Parameters are the Halton points with indices `1 + seed * n_s ..`, so
/// different seeds draw disjoint stretches of the same sequence. The first
/// 80 % of simulations are tagged train, the rest test.
pub fn make_benchmark(seed: u64, n_s: usize) -> Result<(Mesh, Dataset)> {
    let mesh = plate(BENCHMARK_PLATE.0, BENCHMARK_PLATE.1, 1.0);
    let params = halton_sample_from(1 + seed * n_s as u64, n_s, &BENCHMARK_RANGES)?;
    let times = uniform_times(BENCHMARK_TIMES);
    let n_train = (n_s * 4).div_ceil(5);
    let states = params
        .iter()
        .map(|mu| simulate(&mesh, ScenarioParams::from_slice(mu)?, &times))
        .collect::<Result<Vec<_>>>()?;
    let splits = (0..n_s)
        .map(|i| if i < n_train { Split::Train } else { Split::Test })
        .collect();
    let ds = Dataset::new(0, mesh.n_nodes(), 3, times, params, states, splits)?;
    Ok((mesh, ds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Mesh;

    #[test]
    fn radical_inverse_hand_values() {
        let b2: Vec<f64> = (1..=4).map(|i| halton(i, 2).unwrap()).collect();
        assert_eq!(b2, vec![0.5, 0.25, 0.75, 0.125]);
        assert!((halton(1, 3).unwrap() - 1.0 / 3.0).abs() < 1e-16);
        assert!(halton(1, 4).is_err());
        assert!(halton(1, 1).is_err());
    }

    #[test]
    fn sample_maps_to_ranges() {
        let s = halton_sample(1, &[(5.0, 35.0)]).unwrap();
        assert_eq!(s, vec![vec![20.0]]);
        assert!(halton_sample(2, &[(1.0, 1.0)]).is_err());
        let s = halton_sample(50, &BENCHMARK_RANGES).unwrap();
        for mu in s {
            for (v, (lo, hi)) in mu.iter().zip(BENCHMARK_RANGES) {
                assert!(*v > lo && *v < hi);
            }
        }
    }

    #[test]
    fn zero_time_and_zero_speed_are_at_rest() {
        let m = plate(5, 4, 1.0);
        let p = ScenarioParams::new(10.0, 0.3, 300.0).unwrap();
        let tr = simulate(&m, p, &[0.0, 0.5]).unwrap();
        assert!(tr.frame(0).iter().all(|&v| v == 0.0));
        let still = ScenarioParams::new(0.0, 0.3, 300.0).unwrap();
        let tr = simulate(&m, still, &uniform_times(5)).unwrap();
        assert!(tr.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn leading_node_hand_value() {
        let m = plate(3, 3, 1.0);
        let p = ScenarioParams::new(10.0, 0.0, 400.0).unwrap();
        let tr = simulate(&m, p, &[1.0]).unwrap();
        // node 0 sits on the leading edge: u = 10, h = 10 - tanh 10
        let h = 10.0 - 10f64.tanh();
        assert!((tr.frame(0)[0] + h).abs() < 1e-12);
        assert!((tr.frame(0)[0] + 9.0).abs() < 1e-3);
        assert_eq!(tr.frame(0)[1], 0.0);
        // the leading edge does not buckle (sin 0)
        assert_eq!(tr.frame(0)[2], 0.0);
    }

    #[test]
    fn non_plate_rejected_and_params_validated() {
        let m = Mesh::new(vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.5]], vec![[0, 1, 2]]).unwrap();
        let p = ScenarioParams::new(1.0, 0.0, 1.0).unwrap();
        assert!(simulate(&m, p, &[0.0]).is_err());
        assert!(ScenarioParams::new(-1.0, 0.0, 1.0).is_err());
        assert!(ScenarioParams::new(1.0, 1.0, 1.0).is_err());
        assert!(ScenarioParams::new(1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn benchmark_layout() {
        let (mesh, ds) = make_benchmark(0, 10).unwrap();
        assert_eq!(mesh.n_nodes(), 600);
        assert_eq!(ds.n_sims(), 10);
        assert_eq!(ds.train_indices().len(), 8);
        assert_eq!(ds.times().len(), 51);
        assert_eq!(ds.times()[50], 1.0);
        assert_eq!(64 * BENCHMARK_TIMES, 3264);
    }
}
