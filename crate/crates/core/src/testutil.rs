//! Deterministic pseudo-random helpers shared by tests, benches, and the
//! integrator's rank-inflation noise. Not part of the public API surface.

use crate::C64;
use ndarray::Array2;

/// SplitMix64: tiny deterministic generator, good enough for noise padding
/// and test fixtures; bitwise reproducible across platforms.
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform in [-1, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 52) as f64 - 1.0
    }

    pub fn next_c64(&mut self) -> C64 {
        let re = self.next_f64();
        let im = self.next_f64();
        C64::new(re, im)
    }
}

pub fn random_c64_matrix(m: usize, n: usize, seed: u64) -> Array2<C64> {
    let mut rng = SplitMix64::new(seed);
    Array2::from_shape_fn((m, n), |_| rng.next_c64())
}

pub fn random_c64_vec(n: usize, seed: u64) -> Vec<C64> {
    let mut rng = SplitMix64::new(seed);
    (0..n).map(|_| rng.next_c64()).collect()
}

/// Exact propagator series of the isolated two-level system,
/// U(t_i) = exp(−i⟨L⟩·t_i): the closed-form oracle behind the ξ = 0
/// limits used across the test suite.
pub fn two_level_series(
    epsilon: f64,
    gamma_c: f64,
    dt: f64,
    n: usize,
) -> crate::tfd::PropagatorSeries {
    let mut p = crate::model::SpinBosonParams::benchmark(1).unwrap();
    p.epsilon = epsilon;
    p.gamma_c = gamma_c;
    let l = crate::model::projected_liouvillian(&p).matrix;
    let step = crate::linalg::expm(&l.mapv(|z| z * C64::new(0.0, -dt))).unwrap();
    let mut u = Array2::<C64>::eye(4);
    let mut data = Vec::with_capacity(n * 16);
    for _ in 0..n {
        data.extend(u.iter().cloned());
        u = step.dot(&u);
    }
    crate::tfd::PropagatorSeries {
        dt,
        data,
        backend: crate::tfd::Backend::Dense,
        tt_rank: 0,
        n_fock: 0,
        epsilon,
        gamma_c,
        model: String::new(),
    }
}
