//! Thermo-field double-space propagation: the rotated Hamiltonian as a
//! tensor-train operator, rank-1 initial states, and extraction of the
//! electronic propagator superoperator series U(t).
//!
//! The double-space chain is ordered (electronic, physical 1, tilde 1,
//! physical 2, tilde 2, …), keeping each physical/tilde pair adjacent so
//! the cosh/sinh coupling pair stays short ranged on the chain.

use crate::ksl::{KslConfig, KslIntegrator};
use crate::model::{liouville_index, SpinBosonModel};
use crate::tt::{TtOperator, TtVector};
use crate::{dense, par, C64, Error, Result};
use ndarray::{Array1, Array2, Array4};

/// Which backend produced a propagator series.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backend {
    Tt,
    Dense,
}

impl Backend {
    pub fn as_str(&self) -> &'static str {
        match self {
            Backend::Tt => "tt",
            Backend::Dense => "dense",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tt" => Ok(Backend::Tt),
            "dense" => Ok(Backend::Dense),
            other => Err(Error::Parse(format!("unknown backend '{other}'"))),
        }
    }
}

/// Time series of the 4×4 electronic propagator superoperator on the
/// uniform grid t_i = i·dt, flattened row-major as (jk, lm) with the
/// (DD, DA, AD, AA) ordering on both indices.
#[derive(Clone, Debug)]
pub struct PropagatorSeries {
    pub dt: f64,
    /// n·16 entries; row i holds U(t_i).
    pub data: Vec<C64>,
    pub backend: Backend,
    pub tt_rank: usize,
    pub n_fock: usize,
    pub epsilon: f64,
    pub gamma_c: f64,
    /// Fingerprint of the model configuration.
    pub model: String,
}

impl PropagatorSeries {
    pub fn n(&self) -> usize {
        self.data.len() / 16
    }

    #[inline]
    pub fn at(&self, i: usize) -> &[C64] {
        &self.data[i * 16..(i + 1) * 16]
    }

    #[inline]
    pub fn u(&self, i: usize, jk: usize, lm: usize) -> C64 {
        self.data[i * 16 + jk * 4 + lm]
    }

    /// Population difference σ_DD − σ_AA for a donor-populated start, read
    /// directly off the propagator columns.
    pub fn direct_sigma_z(&self) -> Vec<f64> {
        let dd = liouville_index(0, 0);
        let aa = liouville_index(1, 1);
        (0..self.n())
            .map(|i| (self.u(i, dd, dd) - self.u(i, aa, dd)).re)
            .collect()
    }
}

/// Initial electronic states used to assemble all sixteen U columns from
/// pure-state propagations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitialElectronic {
    Donor,
    Acceptor,
    /// (|D⟩ + |A⟩)/√2
    PlusReal,
    /// (|D⟩ + i|A⟩)/√2
    PlusImag,
}

impl InitialElectronic {
    pub fn vector(&self) -> Array1<C64> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let (d, a) = match self {
            InitialElectronic::Donor => (C64::from(1.0), C64::from(0.0)),
            InitialElectronic::Acceptor => (C64::from(0.0), C64::from(1.0)),
            InitialElectronic::PlusReal => (C64::from(s), C64::from(s)),
            InitialElectronic::PlusImag => (C64::from(s), C64::new(0.0, s)),
        };
        Array1::from_vec(vec![d, a])
    }
}

/// Rotated double-space Hamiltonian as a bond-dimension-3 operator train:
/// electronic terms on the first core, one number term per nuclear core,
/// and the σ_z-conditioned displacement couplings scaled by cosh θ on
/// physical modes and sinh θ on tilde modes (tilde number terms carry a
/// minus sign).
pub fn build_theta_hamiltonian(model: &SpinBosonModel) -> TtOperator {
    let p = &model.params;
    let n = p.n_fock;
    let n_modes = p.n_modes;
    let d = 1 + 2 * n_modes;

    // Electronic operators.
    let mut c0 = Array2::<C64>::zeros((2, 2));
    c0[[0, 0]] = C64::from(p.epsilon);
    c0[[1, 1]] = C64::from(-p.epsilon);
    c0[[0, 1]] = C64::from(p.gamma_c);
    c0[[1, 0]] = C64::from(p.gamma_c);
    let mut a0 = Array2::<C64>::zeros((2, 2));
    a0[[0, 0]] = C64::from(-1.0); // −σ_z
    a0[[1, 1]] = C64::from(1.0);

    // Mode operators in the truncated harmonic basis.
    let mut pos = Array2::<C64>::zeros((n, n)); // a + a†
    let mut num = Array2::<C64>::zeros((n, n));
    for m in 0..n {
        num[[m, m]] = C64::from(m as f64);
        if m + 1 < n {
            pos[[m, m + 1]] = C64::from(((m + 1) as f64).sqrt());
            pos[[m + 1, m]] = C64::from(((m + 1) as f64).sqrt());
        }
    }

    // Finite-state assembly: bond index 0 carries completed terms, 1 waits
    // for the displacement partner of −σ_z, 2 has placed nothing yet.
    let mut cores = Vec::with_capacity(d);
    let mut w0 = Array4::<C64>::zeros((1, 2, 2, 3));
    for i in 0..2 {
        for j in 0..2 {
            w0[[0, i, j, 0]] = c0[[i, j]];
            w0[[0, i, j, 1]] = a0[[i, j]];
            w0[[0, i, j, 2]] = if i == j { C64::from(1.0) } else { C64::from(0.0) };
        }
    }
    cores.push(w0);

    for k in 0..n_modes {
        let omega = model.bath.omegas[k];
        let kappa = model.bath.couplings[k] / (2.0 * omega).sqrt();
        let theta = model.bath.thetas[k];
        for tilde in [false, true] {
            let site = 1 + 2 * k + tilde as usize;
            let x = pos.mapv(|z| z * C64::from(kappa * if tilde { theta.sinh() } else { theta.cosh() }));
            let y = num.mapv(|z| z * C64::from(if tilde { -omega } else { omega }));
            if site == d - 1 {
                let mut w = Array4::<C64>::zeros((3, n, n, 1));
                for i in 0..n {
                    for j in 0..n {
                        w[[0, i, j, 0]] = if i == j { C64::from(1.0) } else { C64::from(0.0) };
                        w[[1, i, j, 0]] = x[[i, j]];
                        w[[2, i, j, 0]] = y[[i, j]];
                    }
                }
                cores.push(w);
            } else {
                let mut w = Array4::<C64>::zeros((3, n, n, 3));
                for i in 0..n {
                    for j in 0..n {
                        let id = if i == j { C64::from(1.0) } else { C64::from(0.0) };
                        w[[0, i, j, 0]] = id;
                        w[[1, i, j, 0]] = x[[i, j]];
                        w[[1, i, j, 1]] = id;
                        w[[2, i, j, 0]] = y[[i, j]];
                        w[[2, i, j, 2]] = id;
                    }
                }
                cores.push(w);
            }
        }
    }
    TtOperator::from_cores(cores).expect("theta hamiltonian cores are consistent")
}

/// Rank-1 initial state |γ⟩ ⊗ |0, 0̃, …⟩.
pub fn initial_state(model: &SpinBosonModel, gamma: InitialElectronic) -> TtVector {
    let n = model.params.n_fock;
    let mut vectors = vec![gamma.vector()];
    let mut vac = Array1::<C64>::zeros(n);
    vac[0] = C64::from(1.0);
    for _ in 0..2 * model.params.n_modes {
        vectors.push(vac.clone());
    }
    TtVector::from_product(&vectors).expect("vacuum factors are nonzero")
}

/// Reduced electronic density matrix ρ[j,k] = Σ_rest ψ[j,rest]·ψ*[k,rest]
/// of a double-space tensor train. Does not assume canonical form.
pub fn electronic_rdm(psi: &TtVector) -> Array2<C64> {
    let d = psi.len();
    // env[ket bond, bra bond], swept from the right.
    let mut env = Array2::<C64>::ones((1, 1));
    for i in (1..d).rev() {
        let core = psi.core(i);
        let (rl, n, rr) = core.dim();
        let c2 = core.view().into_shape_with_order((rl * n, rr)).unwrap();
        let t = c2.dot(&env); // (rl·n, bra_r)
        let t = t.into_shape_with_order((rl, n * env.ncols())).unwrap();
        let cb = core
            .view()
            .into_shape_with_order((rl, n * rr))
            .unwrap()
            .mapv(|z| z.conj());
        env = t.dot(&cb.t()); // (ket_l, bra_l)
    }
    let c0 = psi.core(0);
    let (_, ne, r) = c0.dim();
    let mut rho = Array2::<C64>::zeros((ne, ne));
    for j in 0..ne {
        for k in 0..ne {
            let mut acc = C64::new(0.0, 0.0);
            for a in 0..r {
                for b in 0..r {
                    acc += c0[[0, j, a]] * env[[a, b]] * c0[[0, k, b]].conj();
                }
            }
            rho[[j, k]] = acc;
        }
    }
    rho
}

/// Raw per-initial-state expectation columns e_jk(t) = ⟨ψ(t)|(|k⟩⟨j|⊗1)|ψ(t)⟩,
/// ordered like [`InitialElectronic`]: donor, acceptor, plus, plus-i.
pub struct RawColumns {
    pub dt: f64,
    pub per_state: Vec<Vec<[C64; 4]>>,
}

fn rdm_to_row(rho: &Array2<C64>) -> [C64; 4] {
    [rho[[0, 0]], rho[[0, 1]], rho[[1, 0]], rho[[1, 1]]]
}

/// Propagate the four pure initial states with the tensor-train backend
/// and record the electronic expectation columns on the full grid.
pub fn tt_raw_columns(model: &SpinBosonModel, rank: usize) -> Result<RawColumns> {
    let p = &model.params;
    let n_steps = p.n_grid() - 1;
    let op = build_theta_hamiltonian(model);
    let states = vec![
        InitialElectronic::Donor,
        InitialElectronic::Acceptor,
        InitialElectronic::PlusReal,
        InitialElectronic::PlusImag,
    ];
    let columns: Vec<Result<Vec<[C64; 4]>>> = par::map(states, |gamma| {
        let psi0 = initial_state(model, gamma);
        let cfg = KslConfig::new(p.dt, rank);
        let mut integ = KslIntegrator::new(&psi0, &op, cfg)?;
        let mut rows = Vec::with_capacity(n_steps + 1);
        rows.push(rdm_to_row(&electronic_rdm(integ.state())));
        for _ in 0..n_steps {
            integ.step()?;
            rows.push(rdm_to_row(&electronic_rdm(integ.state())));
        }
        Ok(rows)
    });
    let mut per_state = Vec::with_capacity(4);
    for c in columns {
        per_state.push(c?);
    }
    Ok(RawColumns { dt: p.dt, per_state })
}

/// Compute the full U(t) series with the requested backend.
///
/// Four propagations feed the sixteen matrix elements: the two pure
/// populations give the DD and AA columns directly, and the two
/// superposition states combine linearly into the DA and AD columns (see
/// [`crate::pfi::assemble_offdiagonal_initial`]).
pub fn compute_u_series(
    model: &SpinBosonModel,
    backend: Backend,
    rank: usize,
    dense_limit: usize,
) -> Result<PropagatorSeries> {
    let raw = match backend {
        Backend::Tt => tt_raw_columns(model, rank)?,
        Backend::Dense => dense::dense_raw_columns(model, dense_limit)?,
    };
    let mut series = crate::pfi::assemble_offdiagonal_initial(&raw)?;
    series.backend = backend;
    series.tt_rank = if backend == Backend::Tt { rank } else { 0 };
    series.n_fock = model.params.n_fock;
    series.epsilon = model.params.epsilon;
    series.gamma_c = model.params.gamma_c;
    series.model = model.fingerprint();
    for z in &series.data {
        if !z.re.is_finite() || !z.im.is_finite() {
            return Err(Error::NonFinite("propagator series".into()));
        }
    }
    Ok(series)
}
