//! Exact small-system reference backend: matrix-free dense propagation of
//! the rotated double-space Hamiltonian, analytic closed-form limits, and
//! cross-product extraction of propagator columns.
//!
//! State vectors are indexed with the electronic level slowest, then the
//! physical and tilde levels of mode 1, mode 2, …, matching the dense
//! reconstruction order of the tensor-train backend.

use crate::linalg::{lanczos_expv, lanczos_expv_two_pass};
use crate::model::SpinBosonModel;
use crate::tfd::{InitialElectronic, RawColumns};
use crate::{par, C64, Error, Result};
use ndarray::Array2;

/// Default cap on dense state-vector length.
pub const DENSE_LIMIT_DEFAULT: usize = 2_000_000;

/// Above this length the Krylov basis is regenerated instead of stored.
const TWO_PASS_THRESHOLD: usize = 500_000;

const KRYLOV_TOL: f64 = 1e-12;
const KRYLOV_MAX: usize = 64;

/// Matrix-free rotated double-space Hamiltonian.
pub struct DenseHamiltonian {
    pub dim: usize,
    n_fock: usize,
    el_stride: usize,
    diag: Vec<f64>,
    gamma_c: f64,
    /// Per nuclear chain site: stride and the −κ·cosh θ (physical) or
    /// −κ·sinh θ (tilde) displacement coefficient.
    site_terms: Vec<(usize, f64)>,
}

impl DenseHamiltonian {
    pub fn new(model: &SpinBosonModel, limit: usize) -> Result<Self> {
        let p = &model.params;
        let n = p.n_fock;
        let n_sites = 2 * p.n_modes;
        let mut el_stride: usize = 1;
        for _ in 0..n_sites {
            el_stride = el_stride
                .checked_mul(n)
                .ok_or(Error::DenseLimitExceeded { dim: usize::MAX, limit })?;
        }
        let dim = 2 * el_stride;
        if dim > limit {
            return Err(Error::DenseLimitExceeded { dim, limit });
        }

        let mut site_terms = Vec::with_capacity(n_sites);
        for k in 0..p.n_modes {
            let omega = model.bath.omegas[k];
            let kappa = model.bath.couplings[k] / (2.0 * omega).sqrt();
            let th = model.bath.thetas[k];
            for tilde in [false, true] {
                let site = 2 * k + tilde as usize; // nuclear chain position
                let stride = el_stride / n.pow(site as u32 + 1);
                let coef = -kappa * if tilde { th.sinh() } else { th.cosh() };
                site_terms.push((stride, coef));
            }
        }

        let mut diag = vec![0.0f64; dim];
        for (i, d) in diag.iter_mut().enumerate() {
            let e = i / el_stride;
            let mut acc = if e == 0 { p.epsilon } else { -p.epsilon };
            let mut rest = i % el_stride;
            for (site, &(stride, _)) in site_terms.iter().enumerate() {
                let level = rest / stride;
                rest %= stride;
                let k = site / 2;
                let sign = if site % 2 == 0 { 1.0 } else { -1.0 };
                acc += sign * model.bath.omegas[k] * level as f64;
            }
            *d = acc;
        }

        Ok(Self { dim, n_fock: n, el_stride, diag, gamma_c: p.gamma_c, site_terms })
    }

    /// y = H·x.
    pub fn apply(&self, x: &[C64], y: &mut [C64]) {
        let n = self.n_fock;
        let es = self.el_stride;
        for i in 0..self.dim {
            y[i] = C64::from(self.diag[i]) * x[i];
        }
        if self.gamma_c != 0.0 {
            let g = C64::from(self.gamma_c);
            for i in 0..es {
                let a = x[i + es];
                let b = x[i];
                y[i] += g * a;
                y[i + es] += g * b;
            }
        }
        for &(stride, coef) in &self.site_terms {
            if coef == 0.0 {
                continue;
            }
            // −σ_z κ̃ (a + a†): raising/lowering on this site, signed by the
            // electronic level.
            let blocks = self.dim / (n * stride);
            for blk in 0..blocks {
                let base = blk * n * stride;
                let e = base / es;
                let sz = if e == 0 { 1.0 } else { -1.0 };
                let c = C64::from(coef * sz);
                for level in 0..n {
                    let row = base + level * stride;
                    if level + 1 < n {
                        let f = c * C64::from(((level + 1) as f64).sqrt());
                        let up = base + (level + 1) * stride;
                        for s in 0..stride {
                            y[row + s] += f * x[up + s];
                        }
                    }
                    if level > 0 {
                        let f = c * C64::from((level as f64).sqrt());
                        let down = base + (level - 1) * stride;
                        for s in 0..stride {
                            y[row + s] += f * x[down + s];
                        }
                    }
                }
            }
        }
    }

    /// One propagation step exp(−i·dt·H)·x.
    pub fn step(&self, x: &[C64], dt: f64) -> Result<Vec<C64>> {
        let apply = |v: &[C64], out: &mut [C64]| self.apply(v, out);
        if self.dim > TWO_PASS_THRESHOLD {
            lanczos_expv_two_pass(&apply, x, C64::new(0.0, -dt), KRYLOV_TOL, KRYLOV_MAX)
        } else {
            lanczos_expv(&apply, x, C64::new(0.0, -dt), KRYLOV_TOL, KRYLOV_MAX)
        }
    }

    /// ⟨x|H|x⟩ for conservation checks.
    pub fn energy(&self, x: &[C64]) -> f64 {
        let mut y = vec![C64::new(0.0, 0.0); self.dim];
        self.apply(x, &mut y);
        x.iter().zip(&y).map(|(a, b)| (a.conj() * b).re).sum()
    }
}

/// Vacuum-bath initial state with the given electronic amplitudes.
pub fn dense_initial_state(h: &DenseHamiltonian, gamma: InitialElectronic) -> Vec<C64> {
    let v = gamma.vector();
    let mut psi = vec![C64::new(0.0, 0.0); h.dim];
    psi[0] = v[0];
    psi[h.el_stride] = v[1];
    psi
}

/// Electronic reduced density matrix ρ[j,k] = Σ_rest ψ[j,rest]·ψ*[k,rest].
pub fn dense_electronic_rdm(h: &DenseHamiltonian, psi: &[C64]) -> [C64; 4] {
    let es = h.el_stride;
    let mut rho = [C64::new(0.0, 0.0); 4];
    for r in 0..es {
        let d = psi[r];
        let a = psi[es + r];
        rho[0] += d * d.conj();
        rho[1] += d * a.conj();
        rho[2] += a * d.conj();
        rho[3] += a * a.conj();
    }
    rho
}

/// Propagate the four pure initial states with the dense backend and
/// record the electronic expectation columns on the full grid.
pub fn dense_raw_columns(model: &SpinBosonModel, limit: usize) -> Result<RawColumns> {
    let p = &model.params;
    let h = DenseHamiltonian::new(model, limit)?;
    let n_steps = p.n_grid() - 1;
    let states = vec![
        InitialElectronic::Donor,
        InitialElectronic::Acceptor,
        InitialElectronic::PlusReal,
        InitialElectronic::PlusImag,
    ];
    let columns: Vec<Result<Vec<[C64; 4]>>> = par::map(states, |gamma| {
        let mut psi = dense_initial_state(&h, gamma);
        let mut rows = Vec::with_capacity(n_steps + 1);
        rows.push(dense_electronic_rdm(&h, &psi));
        for _ in 0..n_steps {
            psi = h.step(&psi, p.dt)?;
            rows.push(dense_electronic_rdm(&h, &psi));
        }
        Ok(rows)
    });
    let mut per_state = Vec::with_capacity(4);
    for c in columns {
        per_state.push(c?);
    }
    Ok(RawColumns { dt: p.dt, per_state })
}

/// Propagator column U_{jk,lm}(t) for an off-diagonal initial electronic
/// matrix |l⟩⟨m|, computed directly from two pure-state propagations as
/// the cross overlap ⟨ψ_m|(|k⟩⟨j|⊗1)|ψ_l⟩. Independent of the
/// linear-combination assembly route.
pub fn offdiagonal_column_direct(
    model: &SpinBosonModel,
    l: usize,
    m: usize,
    limit: usize,
) -> Result<Vec<[C64; 4]>> {
    let p = &model.params;
    let h = DenseHamiltonian::new(model, limit)?;
    let to_state = |e: usize| {
        if e == 0 {
            InitialElectronic::Donor
        } else {
            InitialElectronic::Acceptor
        }
    };
    let mut psi_l = dense_initial_state(&h, to_state(l));
    let mut psi_m = dense_initial_state(&h, to_state(m));
    let n_steps = p.n_grid() - 1;
    let es = h.el_stride;
    let cross = |pl: &[C64], pm: &[C64]| -> [C64; 4] {
        let mut u = [C64::new(0.0, 0.0); 4];
        for r in 0..es {
            // U_{jk,lm} = Σ_rest ψ_l[j,rest]·ψ_m*[k,rest], rows (jk) in
            // (DD, DA, AD, AA) order.
            u[0] += pl[r] * pm[r].conj();
            u[1] += pl[r] * pm[es + r].conj();
            u[2] += pl[es + r] * pm[r].conj();
            u[3] += pl[es + r] * pm[es + r].conj();
        }
        u
    };
    let mut rows = Vec::with_capacity(n_steps + 1);
    rows.push(cross(&psi_l, &psi_m));
    for _ in 0..n_steps {
        psi_l = h.step(&psi_l, p.dt)?;
        psi_m = h.step(&psi_m, p.dt)?;
        rows.push(cross(&psi_l, &psi_m));
    }
    Ok(rows)
}

/// Closed-form population difference of the isolated two-level system,
/// σ_z(t) = (ε² + Γ²·cos(2Ωt))/Ω² with Ω = √(ε² + Γ²), for a donor start.
pub fn rabi_series(epsilon: f64, gamma_c: f64, dt: f64, n_steps: usize) -> Vec<f64> {
    let om2 = epsilon * epsilon + gamma_c * gamma_c;
    (0..=n_steps)
        .map(|i| {
            let t = i as f64 * dt;
            if om2 == 0.0 {
                1.0
            } else {
                (epsilon * epsilon + gamma_c * gamma_c * (2.0 * om2.sqrt() * t).cos()) / om2
            }
        })
        .collect()
}

/// Electronic density matrix series of the pure-dephasing model (Γ = 0),
/// starting from the maximally coherent state (|D⟩+|A⟩)/√2. The oracle is
/// the dense propagation itself, not a typed-in formula.
pub fn dephasing_reference(model: &SpinBosonModel, limit: usize) -> Result<Vec<Array2<C64>>> {
    if model.params.gamma_c != 0.0 {
        return Err(Error::InvalidParams(
            "dephasing_reference requires gamma = 0".into(),
        ));
    }
    let p = &model.params;
    let h = DenseHamiltonian::new(model, limit)?;
    let mut psi = dense_initial_state(&h, InitialElectronic::PlusReal);
    let n_steps = p.n_grid() - 1;
    let mut out = Vec::with_capacity(n_steps + 1);
    let pack = |r: [C64; 4]| Array2::from_shape_vec((2, 2), r.to_vec()).unwrap();
    out.push(pack(dense_electronic_rdm(&h, &psi)));
    for _ in 0..n_steps {
        psi = h.step(&psi, p.dt)?;
        out.push(pack(dense_electronic_rdm(&h, &psi)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SpinBosonParams;

    fn small_model(n_modes: usize, n_fock: usize, t_final: f64) -> SpinBosonModel {
        let mut p = SpinBosonParams::benchmark(1).unwrap();
        p.n_modes = n_modes;
        p.n_fock = n_fock;
        p.t_final = t_final;
        SpinBosonModel::new(p).unwrap()
    }

    #[test]
    fn rejects_over_limit() {
        let model = small_model(2, 10, 1.0);
        assert!(matches!(
            DenseHamiltonian::new(&model, 1000),
            Err(Error::DenseLimitExceeded { .. })
        ));
    }

    #[test]
    fn hermitian_action() {
        let model = small_model(2, 3, 1.0);
        let h = DenseHamiltonian::new(&model, DENSE_LIMIT_DEFAULT).unwrap();
        let x = crate::testutil::random_c64_vec(h.dim, 5);
        let z = crate::testutil::random_c64_vec(h.dim, 6);
        let mut hx = vec![C64::new(0.0, 0.0); h.dim];
        let mut hz = vec![C64::new(0.0, 0.0); h.dim];
        h.apply(&x, &mut hx);
        h.apply(&z, &mut hz);
        let a: C64 = z.iter().zip(&hx).map(|(p, q)| p.conj() * q).sum();
        let b: C64 = hz.iter().zip(&x).map(|(p, q)| p.conj() * q).sum();
        assert!((a - b).norm() < 1e-10 * a.norm().max(1.0));
    }

    #[test]
    fn norm_and_energy_conserved() {
        let model = small_model(2, 4, 1.0);
        let h = DenseHamiltonian::new(&model, DENSE_LIMIT_DEFAULT).unwrap();
        let mut psi = dense_initial_state(&h, InitialElectronic::Donor);
        let e0 = h.energy(&psi);
        for _ in 0..200 {
            psi = h.step(&psi, 5e-3).unwrap();
        }
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        let e1 = h.energy(&psi);
        assert!((e1 - e0).abs() < 1e-10 * e0.abs().max(1.0));
    }

    #[test]
    fn rabi_values() {
        let s = rabi_series(0.0, 1.0, 0.1, 10);
        for (i, v) in s.iter().enumerate() {
            let t = 0.1 * i as f64;
            assert!((v - (2.0 * t).cos()).abs() < 1e-14);
        }
        assert!((rabi_series(1.0, 1.0, 1.0, 0)[0] - 1.0).abs() < 1e-15);
        // ε = Γ = 1 at t = π/(2√2): the cosine sits at π, σ_z = 0.
        let t_star = std::f64::consts::PI / (2.0 * 2.0f64.sqrt());
        let s = rabi_series(1.0, 1.0, t_star, 1);
        assert!(s[1].abs() < 1e-14);
    }

    #[test]
    fn rabi_matches_two_level_dense_propagation() {
        // ξ = 0 keeps the electronic system closed; the dense backend must
        // reproduce the closed form.
        let mut p = SpinBosonParams::benchmark(1).unwrap();
        p.n_modes = 1;
        p.n_fock = 2;
        p.xi = 0.0;
        p.t_final = 2.0;
        p.dt = 1e-2;
        let model = SpinBosonModel::new(p).unwrap();
        let h = DenseHamiltonian::new(&model, DENSE_LIMIT_DEFAULT).unwrap();
        let mut psi = dense_initial_state(&h, InitialElectronic::Donor);
        let n_steps = model.params.n_grid() - 1;
        let want = rabi_series(1.0, 1.0, model.params.dt, n_steps);
        for i in 0..=n_steps {
            let rho = dense_electronic_rdm(&h, &psi);
            let sz = (rho[0] - rho[3]).re;
            assert!((sz - want[i]).abs() < 1e-10, "step {i}: {sz} vs {}", want[i]);
            if i < n_steps {
                psi = h.step(&psi, model.params.dt).unwrap();
            }
        }
    }

    #[test]
    fn dephasing_populations_frozen() {
        let mut p = SpinBosonParams::benchmark(1).unwrap();
        p.n_modes = 2;
        p.n_fock = 5;
        p.gamma_c = 0.0;
        p.t_final = 1.0;
        p.dt = 1e-2;
        let model = SpinBosonModel::new(p).unwrap();
        let series = dephasing_reference(&model, DENSE_LIMIT_DEFAULT).unwrap();
        let p0 = series[0][[0, 0]].re;
        let c0 = series[0][[0, 1]].norm();
        for rho in &series {
            assert!((rho[[0, 0]].re - p0).abs() < 1e-12, "population moved");
            assert!(rho[[0, 1]].norm() <= c0 + 1e-12, "coherence grew");
        }
        // Coherence actually decays at finite temperature and coupling.
        let c_end = series.last().unwrap()[[0, 1]].norm();
        assert!(c_end < c0);
    }

    #[test]
    fn dephasing_requires_zero_gamma() {
        let model = small_model(1, 3, 1.0);
        assert!(dephasing_reference(&model, DENSE_LIMIT_DEFAULT).is_err());
    }
}
