//! Projection-free inputs F(τ), Ḟ(τ), Z(t) from a propagator series:
//! assembly of off-diagonal initial-condition columns out of pure-state
//! propagations, and second-order finite differencing of U(τ).

use crate::model::{liouville_index, ElectronicLiouvillian};
use crate::tfd::{Backend, PropagatorSeries, RawColumns};
use crate::{C64, Error, Result};

/// Time series of the projection-free inputs. F and Ḟ are stored like the
/// propagator (n·16, row-major (jk, lm)); Z is derived data, not stored:
/// Z_jk(t) = −i·F_{jk,γγ}(t) for a pure initial electronic state |γ⟩⟨γ|.
#[derive(Clone, Debug)]
pub struct PfiSeries {
    pub dt: f64,
    pub f: Vec<C64>,
    pub fdot: Vec<C64>,
    /// Electronic index of the initial state behind Z (0 = donor).
    pub gamma: usize,
    pub epsilon: f64,
    pub gamma_c: f64,
    pub model: String,
    /// Fingerprint of the propagator artifact this was derived from.
    pub input: String,
}

impl PfiSeries {
    pub fn n(&self) -> usize {
        self.f.len() / 16
    }

    #[inline]
    pub fn f_at(&self, i: usize) -> &[C64] {
        &self.f[i * 16..(i + 1) * 16]
    }

    #[inline]
    pub fn fdot_at(&self, i: usize) -> &[C64] {
        &self.fdot[i * 16..(i + 1) * 16]
    }

    /// Z_jk(t_i) = −i·F_{jk,γγ}(t_i); same data as F by construction.
    pub fn z_at(&self, i: usize) -> [C64; 4] {
        let gg = liouville_index(self.gamma, self.gamma);
        let mi = C64::new(0.0, -1.0);
        [
            mi * self.f[i * 16 + gg],
            mi * self.f[i * 16 + 4 + gg],
            mi * self.f[i * 16 + 8 + gg],
            mi * self.f[i * 16 + 12 + gg],
        ]
    }
}

/// Assemble the full 16-element U(t) series from the four pure-state
/// expectation columns.
///
/// With |+⟩ = (|l⟩+|m⟩)/√2 and |y⟩ = (|l⟩+i|m⟩)/√2,
/// |l⟩⟨m| = |+⟩⟨+| + i|y⟩⟨y| − ((1+i)/2)(|l⟩⟨l| + |m⟩⟨m|),
/// and the (m,l) column follows by flipping the sign of the imaginary
/// combination.
pub fn assemble_offdiagonal_initial(raw: &RawColumns) -> Result<PropagatorSeries> {
    if raw.per_state.len() != 4 {
        return Err(Error::DimensionMismatch(format!(
            "assemble: need 4 pure-state propagations, got {}",
            raw.per_state.len()
        )));
    }
    let n = raw.per_state[0].len();
    for cols in &raw.per_state {
        if cols.len() != n {
            return Err(Error::DimensionMismatch(
                "assemble: pure-state series lengths differ".into(),
            ));
        }
    }
    let (dd, aa) = (0, 1); // positions in RawColumns::per_state
    let (plus, plus_i) = (2, 3);
    let half = C64::new(0.5, 0.5); // (1+i)/2
    let half_c = C64::new(0.5, -0.5);
    let i_unit = C64::new(0.0, 1.0);
    let mut data = vec![C64::new(0.0, 0.0); n * 16];
    for t in 0..n {
        let ed = &raw.per_state[dd][t];
        let ea = &raw.per_state[aa][t];
        let ep = &raw.per_state[plus][t];
        let ey = &raw.per_state[plus_i][t];
        for jk in 0..4 {
            let col_da = ep[jk] + i_unit * ey[jk] - half * (ed[jk] + ea[jk]);
            let col_ad = ep[jk] - i_unit * ey[jk] - half_c * (ed[jk] + ea[jk]);
            data[t * 16 + jk * 4 + liouville_index(0, 0)] = ed[jk];
            data[t * 16 + jk * 4 + liouville_index(0, 1)] = col_da;
            data[t * 16 + jk * 4 + liouville_index(1, 0)] = col_ad;
            data[t * 16 + jk * 4 + liouville_index(1, 1)] = ea[jk];
        }
    }
    Ok(PropagatorSeries {
        dt: raw.dt,
        data,
        backend: Backend::Tt,
        tt_rank: 0,
        n_fock: 0,
        epsilon: 0.0,
        gamma_c: 0.0,
        model: String::new(),
    })
}

/// Differentiate a propagator series into projection-free inputs:
/// F = i·dU/dτ and Ḟ = i·d²U/dτ² by second-order central differences at
/// interior points and one-sided second-order stencils at the ends.
///
/// When the projected Liouvillian is supplied, F(0) is set to its analytic
/// value ⟨L⟩ instead of the boundary stencil (the two agree to O(Δt²)).
pub fn differentiate(
    u: &PropagatorSeries,
    liouvillian: Option<&ElectronicLiouvillian>,
) -> Result<PfiSeries> {
    let n = u.n();
    if n < 4 {
        return Err(Error::GridTooShort { need: 4, got: n });
    }
    let dt = u.dt;
    let i_unit = C64::new(0.0, 1.0);
    let mut f = vec![C64::new(0.0, 0.0); n * 16];
    let mut fdot = vec![C64::new(0.0, 0.0); n * 16];
    let at = |t: usize, e: usize| u.data[t * 16 + e];
    for e in 0..16 {
        // First derivative.
        f[e] = i_unit * (-3.0 * at(0, e) + 4.0 * at(1, e) - at(2, e)) / C64::from(2.0 * dt);
        for t in 1..n - 1 {
            f[t * 16 + e] = i_unit * (at(t + 1, e) - at(t - 1, e)) / C64::from(2.0 * dt);
        }
        f[(n - 1) * 16 + e] =
            i_unit * (3.0 * at(n - 1, e) - 4.0 * at(n - 2, e) + at(n - 3, e)) / C64::from(2.0 * dt);
        // Second derivative.
        let dt2 = C64::from(dt * dt);
        fdot[e] =
            i_unit * (2.0 * at(0, e) - 5.0 * at(1, e) + 4.0 * at(2, e) - at(3, e)) / dt2;
        for t in 1..n - 1 {
            fdot[t * 16 + e] =
                i_unit * (at(t + 1, e) - 2.0 * at(t, e) + at(t - 1, e)) / dt2;
        }
        fdot[(n - 1) * 16 + e] = i_unit
            * (2.0 * at(n - 1, e) - 5.0 * at(n - 2, e) + 4.0 * at(n - 3, e) - at(n - 4, e))
            / dt2;
    }
    if let Some(l) = liouvillian {
        for jk in 0..4 {
            for lm in 0..4 {
                f[jk * 4 + lm] = l.matrix[[jk, lm]];
            }
        }
    }
    Ok(PfiSeries {
        dt,
        f,
        fdot,
        gamma: 0,
        epsilon: u.epsilon,
        gamma_c: u.gamma_c,
        model: u.model.clone(),
        input: String::new(),
    })
}
