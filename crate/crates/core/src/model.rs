//! Spin-boson model construction: Ohmic bath discretization, thermal
//! Bogoliubov angles, and the projected electronic Liouvillian.
//!
//! Units: energies in units of the electronic coupling, times and inverse
//! temperature in units of its inverse, ħ = 1. The electronic basis is
//! (donor, acceptor) = (0, 1) and Liouville-space indices are ordered
//! (DD, DA, AD, AA).

use crate::{C64, Error, Result};
use ndarray::Array2;

pub const DONOR: usize = 0;
pub const ACCEPTOR: usize = 1;
pub const N_LIOUVILLE: usize = 4;
pub const LIOUVILLE_LABELS: [&str; 4] = ["DD", "DA", "AD", "AA"];

/// Flat Liouville index of the electronic pair |j⟩⟨k|.
#[inline]
pub fn liouville_index(j: usize, k: usize) -> usize {
    2 * j + k
}

/// Physical and numerical parameters of one spin-boson realization.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinBosonParams {
    /// Energy bias ε between donor and acceptor.
    pub epsilon: f64,
    /// Electronic coupling Γ (1 in reduced units; 0 selects pure dephasing).
    pub gamma_c: f64,
    /// Inverse temperature β.
    pub beta: f64,
    /// Kondo parameter ξ of the Ohmic spectral density.
    pub xi: f64,
    /// Cutoff frequency ω_c.
    pub omega_c: f64,
    /// Sampling cutoff ω_max for the discretized modes.
    pub omega_max: f64,
    /// Number of discretized bath modes.
    pub n_modes: usize,
    /// Propagation time step Δt.
    pub dt: f64,
    /// Final propagation time.
    pub t_final: f64,
    /// Per-mode harmonic basis size.
    pub n_fock: usize,
}

impl SpinBosonParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParams(msg.to_string()));
        if !(self.beta > 0.0) {
            return bad("beta must be > 0");
        }
        if self.xi < 0.0 {
            return bad("xi must be >= 0");
        }
        if !(self.omega_c > 0.0) {
            return bad("omega_c must be > 0");
        }
        if !(self.omega_max > 0.0) {
            return bad("omega_max must be > 0");
        }
        if self.n_modes == 0 {
            return bad("n_modes must be >= 1");
        }
        if !(self.dt > 0.0) {
            return bad("dt must be > 0");
        }
        if self.n_fock < 2 {
            return bad("n_fock must be >= 2");
        }
        if self.gamma_c < 0.0 {
            return bad("gamma must be >= 0");
        }
        if !(self.t_final > 0.0) {
            return bad("t_final must be > 0");
        }
        Ok(())
    }

    /// Parameter sets of the standard benchmark realizations (models 1, 2,
    /// 3, 4 and 6 of the quoted literature series), with the common time
    /// step and default truncations.
    pub fn benchmark(index: usize) -> Option<Self> {
        let (epsilon, xi, omega_c, omega_max) = match index {
            1 => (1.0, 0.1, 1.0, 5.0),
            2 => (1.0, 0.1, 2.0, 10.0),
            3 => (1.0, 0.1, 7.5, 36.0),
            4 => (1.0, 0.4, 2.0, 10.0),
            6 => (0.0, 0.2, 2.5, 12.0),
            _ => return None,
        };
        Some(Self {
            epsilon,
            gamma_c: 1.0,
            beta: 5.0,
            xi,
            omega_c,
            omega_max,
            n_modes: 60,
            dt: 1.50083e-3,
            t_final: 15.0,
            n_fock: 10,
        })
    }

    /// Number of grid points of the propagation time grid, including t = 0.
    pub fn n_grid(&self) -> usize {
        (self.t_final / self.dt).round() as usize + 1
    }

    /// Canonical key=value rendering used for fingerprinting.
    pub fn canonical_string(&self) -> String {
        format!(
            "beta={:e};dt={:e};epsilon={:e};gamma={:e};n_fock={};n_modes={};omega_c={:e};omega_max={:e};t_final={:e};xi={:e}",
            self.beta,
            self.dt,
            self.epsilon,
            self.gamma_c,
            self.n_fock,
            self.n_modes,
            self.omega_c,
            self.omega_max,
            self.t_final,
            self.xi,
        )
    }
}

/// Discretized harmonic bath: frequencies, couplings and Bogoliubov angles.
#[derive(Clone, Debug)]
pub struct DiscretizedBath {
    pub omegas: Vec<f64>,
    pub couplings: Vec<f64>,
    pub thetas: Vec<f64>,
}

/// Ohmic spectral density with exponential cutoff,
/// J(ω) = (π/2)·ξ·ω·exp(−ω/ω_c).
pub fn spectral_density(xi: f64, omega_c: f64, omega: f64) -> f64 {
    std::f64::consts::FRAC_PI_2 * xi * omega * (-omega / omega_c).exp()
}

/// Deterministic density-of-frequencies discretization of the Ohmic bath.
///
/// Mode k sits at the (k − 1/2)/N quantile of the normalized density
/// ρ(ω) ∝ exp(−ω/ω_c) on (0, ω_max], and carries c_k² = (2/π)·J(ω_k)·ω_k/ρ(ω_k)
/// so the discrete spectral density reproduces J(ω) as N → ∞.
pub fn discretize_bath(params: &SpinBosonParams) -> Result<DiscretizedBath> {
    params.validate()?;
    let n = params.n_modes;
    let wc = params.omega_c;
    let span = 1.0 - (-params.omega_max / wc).exp();
    let mut omegas = Vec::with_capacity(n);
    let mut couplings = Vec::with_capacity(n);
    for k in 1..=n {
        let quantile = (k as f64 - 0.5) / n as f64;
        let omega = -wc * (1.0 - quantile * span).ln();
        let c2 = params.xi * omega * omega * wc * span / n as f64;
        omegas.push(omega);
        couplings.push(c2.sqrt());
    }
    let thetas = bogoliubov_angles(&omegas, params.beta)?;
    Ok(DiscretizedBath { omegas, couplings, thetas })
}

/// Thermal Bogoliubov angles θ_k = arctanh(exp(−β·ω_k/2)).
pub fn bogoliubov_angles(omegas: &[f64], beta: f64) -> Result<Vec<f64>> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParams("beta must be > 0".into()));
    }
    omegas
        .iter()
        .map(|&w| {
            if w <= 0.0 {
                Err(Error::InvalidParams(format!(
                    "bogoliubov_angles: omega must be > 0, got {w}"
                )))
            } else {
                Ok((-beta * w / 2.0).exp().atanh())
            }
        })
        .collect()
}

/// The 4×4 projected Liouvillian ⟨L⟩, i.e. the commutator superoperator of
/// the electronic Hamiltonian ε·σ_z + Γ·σ_x after the bath-linear coupling
/// averages to zero over the free-bath thermal state.
#[derive(Clone, Debug)]
pub struct ElectronicLiouvillian {
    /// Matrix in (DD, DA, AD, AA) ordering.
    pub matrix: Array2<C64>,
}

impl ElectronicLiouvillian {
    /// Restriction to a Liouville-index subset (rows and columns).
    pub fn restrict(&self, subset: &[usize]) -> Array2<C64> {
        let n = subset.len();
        Array2::from_shape_fn((n, n), |(a, b)| self.matrix[[subset[a], subset[b]]])
    }
}

/// Projected Liouvillian of the Condon spin-boson model. The population
/// rows and columns of the diagonal-diagonal block vanish identically.
pub fn projected_liouvillian(params: &SpinBosonParams) -> ElectronicLiouvillian {
    let e = params.epsilon;
    let g = params.gamma_c;
    let rows: [[f64; 4]; 4] = [
        [0.0, -g, g, 0.0],
        [-g, 2.0 * e, 0.0, g],
        [g, 0.0, -2.0 * e, -g],
        [0.0, g, -g, 0.0],
    ];
    let matrix = Array2::from_shape_fn((4, 4), |(i, j)| C64::from(rows[i][j]));
    ElectronicLiouvillian { matrix }
}

/// A fully constructed model: parameters plus the discretized bath.
#[derive(Clone, Debug)]
pub struct SpinBosonModel {
    pub params: SpinBosonParams,
    pub bath: DiscretizedBath,
}

impl SpinBosonModel {
    pub fn new(params: SpinBosonParams) -> Result<Self> {
        let bath = discretize_bath(&params)?;
        Ok(Self { params, bath })
    }

    pub fn liouvillian(&self) -> ElectronicLiouvillian {
        projected_liouvillian(&self.params)
    }

    /// Hex digest identifying the model configuration.
    pub fn fingerprint(&self) -> String {
        crate::io::fingerprint_bytes(self.params.canonical_string().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model1() -> SpinBosonParams {
        SpinBosonParams::benchmark(1).unwrap()
    }

    /// Brute-force superoperator of the commutator with a 2×2 Hermitian
    /// matrix, built entry by entry from Tr{(|j⟩⟨k|)† [H, |l⟩⟨m|]}.
    fn commutator_superop(h: &Array2<C64>) -> Array2<C64> {
        let mut l = Array2::<C64>::zeros((4, 4));
        for j in 0..2 {
            for k in 0..2 {
                for lm_l in 0..2 {
                    for lm_m in 0..2 {
                        // [H, |l⟩⟨m|] = H|l⟩⟨m| − |l⟩⟨m|H
                        let mut comm = Array2::<C64>::zeros((2, 2));
                        for a in 0..2 {
                            for b in 0..2 {
                                let mut v = C64::new(0.0, 0.0);
                                if b == lm_m {
                                    v += h[[a, lm_l]];
                                }
                                if a == lm_l {
                                    v -= h[[lm_m, b]];
                                }
                                comm[[a, b]] = v;
                            }
                        }
                        // Tr{(|j⟩⟨k|)† C} = C[j, k]
                        l[[liouville_index(j, k), liouville_index(lm_l, lm_m)]] = comm[[j, k]];
                    }
                }
            }
        }
        l
    }

    #[test]
    fn bath_modes_within_range_model1() {
        let bath = discretize_bath(&model1()).unwrap();
        assert_eq!(bath.omegas.len(), 60);
        for &w in &bath.omegas {
            assert!(w > 0.0 && w <= 5.0, "omega {w} out of (0, 5]");
        }
        for &c in &bath.couplings {
            assert!(c.is_finite() && c > 0.0);
        }
    }

    #[test]
    fn bath_single_mode() {
        let mut p = model1();
        p.n_modes = 1;
        let bath = discretize_bath(&p).unwrap();
        assert_eq!(bath.omegas.len(), 1);
        assert!(bath.omegas[0] > 0.0 && bath.omegas[0] < p.omega_max);
        assert!(bath.couplings[0].is_finite());
    }

    #[test]
    fn bath_rejects_degenerate_params() {
        let mut p = model1();
        p.n_modes = 0;
        assert!(discretize_bath(&p).is_err());
        let mut p = model1();
        p.omega_max = 0.0;
        assert!(discretize_bath(&p).is_err());
    }

    #[test]
    fn bath_histogram_reconstructs_spectral_density() {
        let mut p = model1();
        p.n_modes = 400;
        let bath = discretize_bath(&p).unwrap();
        // Bin Σ_k (π/2)(c_k²/ω_k) δ(ω − ω_k) into 50 equal-probability bins
        // (8 modes each, so no boundary-count noise) and compare the binned
        // density with the direct bin average of J.
        let n_bins = 50usize;
        let span = 1.0 - (-p.omega_max / p.omega_c).exp();
        let edge = |m: usize| -> f64 {
            -p.omega_c * (1.0 - (m as f64 / n_bins as f64) * span).ln()
        };
        let mut hist = vec![0.0; n_bins];
        for (w, c) in bath.omegas.iter().zip(&bath.couplings) {
            let bin = (0..n_bins)
                .find(|&m| *w <= edge(m + 1) + 1e-12)
                .expect("mode inside (0, omega_max]");
            hist[bin] += std::f64::consts::FRAC_PI_2 * c * c / w;
        }
        // Oracle: ∫_bin J dω by Simpson with many nodes.
        let bin_integral = |lo: f64, hi: f64| -> f64 {
            let n = 64;
            let h = (hi - lo) / n as f64;
            let mut acc = spectral_density(p.xi, p.omega_c, lo)
                + spectral_density(p.xi, p.omega_c, hi);
            for i in 1..n {
                let w = lo + i as f64 * h;
                acc += if i % 2 == 1 { 4.0 } else { 2.0 }
                    * spectral_density(p.xi, p.omega_c, w);
            }
            acc * h / 3.0
        };
        let j_max = spectral_density(p.xi, p.omega_c, p.omega_c); // max at ω = ω_c
        for b in 0..n_bins {
            let (lo, hi) = (edge(b), edge(b + 1));
            let dw = hi - lo;
            let j_avg = bin_integral(lo, hi) / dw;
            if j_avg > 0.05 * j_max {
                let rel = (hist[b] / dw - j_avg).abs() / j_avg;
                assert!(rel < 0.05, "bin {b}: {} vs J {} (rel {rel})", hist[b] / dw, j_avg);
            }
        }
    }

    #[test]
    fn bath_reorganization_energy_matches_quadrature() {
        let mut p = model1();
        p.n_modes = 400;
        let bath = discretize_bath(&p).unwrap();
        let discrete: f64 = bath
            .omegas
            .iter()
            .zip(&bath.couplings)
            .map(|(w, c)| c * c / (2.0 * w * w))
            .sum();
        // (1/π) ∫ J(ω)/ω dω by Simpson quadrature.
        let n = 20000;
        let h = p.omega_max / n as f64;
        let f = |w: f64| {
            if w == 0.0 {
                // J(ω)/ω → (π/2)ξ as ω → 0
                std::f64::consts::FRAC_PI_2 * p.xi
            } else {
                spectral_density(p.xi, p.omega_c, w) / w
            }
        };
        let mut acc = f(0.0) + f(p.omega_max);
        for i in 1..n {
            let w = i as f64 * h;
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(w);
        }
        let integral = acc * h / 3.0 / std::f64::consts::PI;
        let rel = (discrete - integral).abs() / integral;
        assert!(rel < 0.02, "reorganization energy rel err {rel}");
    }

    #[test]
    fn bath_deterministic_and_scale_consistent() {
        let p = model1();
        let a = discretize_bath(&p).unwrap();
        let b = discretize_bath(&p).unwrap();
        assert_eq!(a.omegas, b.omegas);
        assert_eq!(a.couplings, b.couplings);
        // Doubling the mode count must not move the binned reconstruction
        // beyond discretization noise: check the reorganization sum.
        let lam = |bath: &DiscretizedBath| -> f64 {
            bath.omegas
                .iter()
                .zip(&bath.couplings)
                .map(|(w, c)| c * c / (2.0 * w * w))
                .sum()
        };
        let mut p2 = p.clone();
        p2.n_modes *= 2;
        let doubled = discretize_bath(&p2).unwrap();
        let rel = (lam(&a) - lam(&doubled)).abs() / lam(&a);
        assert!(rel < 1e-12, "reorganization sum is exact for this scheme: {rel}");
    }

    #[test]
    fn theta_reference_value() {
        // arctanh(exp(−5·1/2)), frozen from a 30-digit evaluation.
        let th = bogoliubov_angles(&[1.0], 5.0).unwrap()[0];
        assert!((th - 0.082_270_109_017_2939).abs() < 1e-15);
    }

    #[test]
    fn theta_zero_temperature_limit() {
        let th = bogoliubov_angles(&[0.5, 1.0, 2.0], 1e6).unwrap();
        for t in th {
            assert!(t.abs() < 1e-12);
        }
    }

    #[test]
    fn theta_monotone_decreasing_in_omega() {
        let omegas: Vec<f64> = (1..40).map(|i| 0.1 * i as f64).collect();
        let th = bogoliubov_angles(&omegas, 5.0).unwrap();
        for w in th.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn theta_rejects_nonpositive_omega() {
        assert!(bogoliubov_angles(&[0.0], 5.0).is_err());
        assert!(bogoliubov_angles(&[-1.0], 5.0).is_err());
    }

    #[test]
    fn liouvillian_population_block_vanishes() {
        let l = projected_liouvillian(&model1());
        for &jj in &[0usize, 3] {
            for &kk in &[0usize, 3] {
                assert_eq!(l.matrix[[jj, kk]], C64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn liouvillian_matches_brute_force() {
        for (e, g) in [(1.0f64, 1.0f64), (0.3, 0.0), (0.0, 2.0), (-0.7, 1.3)] {
            let mut p = model1();
            p.epsilon = e;
            p.gamma_c = g.max(0.0);
            let l = projected_liouvillian(&p);
            let mut h = Array2::<C64>::zeros((2, 2));
            h[[0, 0]] = C64::from(p.epsilon);
            h[[1, 1]] = C64::from(-p.epsilon);
            h[[0, 1]] = C64::from(p.gamma_c);
            h[[1, 0]] = C64::from(p.gamma_c);
            let want = commutator_superop(&h);
            for i in 0..4 {
                for j in 0..4 {
                    assert!(
                        (l.matrix[[i, j]] - want[[i, j]]).norm() < 1e-14,
                        "entry ({i},{j}) for eps={e}, gamma={g}"
                    );
                }
            }
        }
    }

    #[test]
    fn liouvillian_examples() {
        let l = projected_liouvillian(&model1());
        assert_eq!(l.matrix[[0, 1]], C64::from(-1.0)); // ⟨L_DD,DA⟩ = −Γ
        assert_eq!(l.matrix[[0, 2]], C64::from(1.0)); // ⟨L_DD,AD⟩ = +Γ
        let mut p = model1();
        p.gamma_c = 0.0;
        let l0 = projected_liouvillian(&p);
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert_eq!(l0.matrix[[i, j]], C64::new(0.0, 0.0));
                }
            }
        }
        assert_eq!(l0.matrix[[1, 1]], C64::from(2.0));
        assert_eq!(l0.matrix[[2, 2]], C64::from(-2.0));
    }

    #[test]
    fn liouvillian_donor_acceptor_exchange_symmetry() {
        // Relabeling D↔A while flipping the bias leaves ⟨L⟩ invariant:
        // ⟨L⟩(ε) = P·⟨L⟩(−ε)·P with P the relabeling permutation. The bias
        // block alone is antisymmetric under the exchange (its diagonal
        // flips sign with ε), which the Γ = 0 case below isolates.
        let perm = [3usize, 2, 1, 0];
        let check = |p: &SpinBosonParams| {
            let l = projected_liouvillian(p);
            let mut p_flip = p.clone();
            p_flip.epsilon = -p.epsilon;
            let lf = projected_liouvillian(&p_flip);
            for j in 0..4 {
                for k in 0..4 {
                    let want = lf.matrix[[perm[j], perm[k]]];
                    assert!((l.matrix[[j, k]] - want).norm() < 1e-14);
                }
            }
        };
        check(&model1());
        let mut bias_only = model1();
        bias_only.gamma_c = 0.0;
        check(&bias_only);
        // Bias-term antisymmetry: with Γ = 0, ⟨L⟩(ε) = −⟨L⟩(−ε) entrywise.
        let l = projected_liouvillian(&bias_only);
        let mut flipped = bias_only.clone();
        flipped.epsilon = -bias_only.epsilon;
        let lf = projected_liouvillian(&flipped);
        for j in 0..4 {
            for k in 0..4 {
                assert!((l.matrix[[j, k]] + lf.matrix[[j, k]]).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn initial_nuclear_state_shift_cancellation() {
        // (Ĥ_D + Ĥ_A)/2 equals the free bath Hamiltonian: the ±ε constants
        // and the ∓c_k R_k shifts cancel exactly. Checked on dense
        // single-mode matrices in the harmonic basis.
        let n = 8;
        let omega = 0.9;
        let c = 0.33;
        let eps = 1.4;
        // R = (a + a†)/√(2ω), H_free = ω(a†a + 1/2)
        let mut h_free = Array2::<f64>::zeros((n, n));
        let mut r = Array2::<f64>::zeros((n, n));
        for m in 0..n {
            h_free[[m, m]] = omega * (m as f64 + 0.5);
            if m + 1 < n {
                r[[m, m + 1]] = ((m + 1) as f64).sqrt() / (2.0 * omega).sqrt();
                r[[m + 1, m]] = r[[m, m + 1]];
            }
        }
        let h_d = &h_free - &(&r * c);
        let h_a = &h_free + &(&r * c);
        for i in 0..n {
            for j in 0..n {
                let avg = 0.5 * ((h_d[[i, j]] + eps * f64::from(i == j)) + (h_a[[i, j]] - eps * f64::from(i == j)));
                assert!((avg - h_free[[i, j]]).abs() < 1e-15);
            }
        }
    }
}
