//! Fixed-rank time stepping of the tensor-train Schrödinger equation
//! dψ/dt = −i·H·ψ by the projector-splitting (KSL) integrator.
//!
//! One step sweeps the chain, alternating forward one-site evolutions with
//! backward zero-site (bond) evolutions; QR factorizations move the
//! orthogonality center without ever truncating, so the ranks set at
//! construction are preserved exactly. The default order-2 scheme runs a
//! left-to-right half sweep followed by its right-to-left mirror. Local
//! evolutions use Lanczos exponentials.

use crate::linalg::{lanczos_expv, qr_thin};
use crate::testutil::SplitMix64;
use crate::tt::{TtOperator, TtVector};
use crate::{C64, Error, Result};
use ndarray::{Array2, Array3, Array4};

/// Integrator configuration.
#[derive(Clone, Debug)]
pub struct KslConfig {
    /// Step size.
    pub dt: f64,
    /// Fixed manifold rank (clamped per bond to what the mode dimensions
    /// allow).
    pub rank: usize,
    /// Splitting order, 1 or 2.
    pub order: u8,
    /// Tolerance of the local Lanczos exponentials.
    pub krylov_tol: f64,
    /// Krylov dimension cap.
    pub krylov_max: usize,
}

impl KslConfig {
    pub fn new(dt: f64, rank: usize) -> Self {
        Self { dt, rank, order: 2, krylov_tol: 1e-12, krylov_max: 48 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::InvalidParams("ksl: dt must be > 0".into()));
        }
        if self.rank == 0 {
            return Err(Error::InvalidParams("ksl: rank must be >= 1".into()));
        }
        if self.order != 1 && self.order != 2 {
            return Err(Error::InvalidParams("ksl: order must be 1 or 2".into()));
        }
        Ok(())
    }
}

/// Largest representable bond ranks for the given mode dimensions, capped
/// at `rank`. Entry i is the rank of the bond left of site i (so entries 0
/// and d are always 1).
pub fn clamped_ranks(dims: &[usize], rank: usize) -> Vec<usize> {
    let d = dims.len();
    let mut left = vec![1usize; d + 1];
    for i in 0..d {
        left[i + 1] = left[i].saturating_mul(dims[i]).min(1 << 40);
    }
    let mut right = vec![1usize; d + 1];
    for i in (0..d).rev() {
        right[i] = right[i + 1].saturating_mul(dims[i]).min(1 << 40);
    }
    (0..=d)
        .map(|i| rank.min(left[i]).min(right[i]).max(1))
        .collect()
}

/// Pad a state to the target bond ranks with tiny deterministic noise in
/// the new blocks, so the first QR factorizations are well conditioned.
/// The represented vector changes by O(1e-12) relative.
pub fn inflate_to_ranks(psi: &TtVector, targets: &[usize]) -> Result<TtVector> {
    let d = psi.len();
    if targets.len() != d + 1 {
        return Err(Error::DimensionMismatch("inflate: target length".into()));
    }
    let ranks = psi.ranks();
    for (have, want) in ranks.iter().zip(targets) {
        if have > want {
            return Err(Error::RankMismatch { expected: targets.to_vec(), got: ranks.clone() });
        }
    }
    let norm_in = psi.norm();
    let mut rng = SplitMix64::new(0x7474_6b73_6c00_0001);
    let mut cores = Vec::with_capacity(d);
    for i in 0..d {
        let core = psi.core(i);
        let (rl, n, rr) = core.dim();
        let (tl, tr) = (targets[i], targets[i + 1]);
        let scale = core.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300) * 1e-12;
        let mut padded = Array3::<C64>::from_shape_fn((tl, n, tr), |_| rng.next_c64() * scale);
        for a in 0..rl {
            for j in 0..n {
                for b in 0..rr {
                    padded[[a, j, b]] = core[[a, j, b]];
                }
            }
        }
        cores.push(padded);
    }
    let mut out = TtVector::from_cores(cores)?;
    out.right_canonicalize();
    let norm_out = out.norm();
    if norm_out > 0.0 && norm_in > 0.0 {
        out = out.scale(C64::from(norm_in / norm_out));
    }
    Ok(out)
}

fn ones_env() -> Array3<C64> {
    Array3::from_elem((1, 1, 1), C64::new(1.0, 0.0))
}

/// Expectation value ⟨v|op|v⟩ by environment contraction; cost polynomial
/// in the ranks, no intermediate rank growth.
pub fn mpo_expectation(op: &TtOperator, v: &TtVector) -> Result<C64> {
    if op.mode_dims() != v.mode_dims() {
        return Err(Error::DimensionMismatch("mpo_expectation: mode dims differ".into()));
    }
    let mut env = ones_env();
    for i in 0..v.len() {
        env = update_left(&env, v.core(i), op.core(i));
    }
    Ok(env[[0, 0, 0]])
}

/// Environment update absorbing one site from the left.
/// Index convention for environments: (bra bond, operator bond, ket bond).
fn update_left(l: &Array3<C64>, core: &Array3<C64>, w: &Array4<C64>) -> Array3<C64> {
    let (bl, wl, kl) = l.dim();
    let (_, n, kr) = core.dim();
    let (_, m, _, wr) = w.dim();
    let l2 = l.view().into_shape_with_order((bl * wl, kl)).unwrap();
    let c2 = core.view().into_shape_with_order((kl, n * kr)).unwrap();
    let t1 = l2.dot(&c2); // (bl·wl, n·kr)
    let t1 = t1.into_shape_with_order((bl, wl, n, kr)).unwrap();
    let t1 = t1.permuted_axes([0, 3, 1, 2]); // (bl, kr, wl, n)
    let t1 = t1
        .as_standard_layout()
        .to_owned()
        .into_shape_with_order((bl * kr, wl * n))
        .unwrap();
    let wp = w.view().permuted_axes([0, 2, 1, 3]); // (wl, n, m, wr)
    let wp = wp
        .as_standard_layout()
        .to_owned()
        .into_shape_with_order((wl * n, m * wr))
        .unwrap();
    let t2 = t1.dot(&wp); // (bl·kr, m·wr)
    let t2 = t2.into_shape_with_order((bl, kr, m, wr)).unwrap();
    let t2 = t2.permuted_axes([0, 2, 3, 1]); // (bl, m, wr, kr)
    let t2 = t2
        .as_standard_layout()
        .to_owned()
        .into_shape_with_order((bl * m, wr * kr))
        .unwrap();
    let bra = core.view().into_shape_with_order((bl * m, kr)).unwrap();
    let out = bra.mapv(|z| z.conj()).t().dot(&t2); // (kr_bra, wr·kr)
    out.into_shape_with_order((kr, wr, kr)).unwrap()
}

/// Environment update absorbing one site from the right.
fn update_right(r: &Array3<C64>, core: &Array3<C64>, w: &Array4<C64>) -> Array3<C64> {
    let (br, wr, kr) = r.dim();
    let (kl, n, _) = core.dim();
    let (wl, m, _, _) = w.dim();
    let rp = r.view().permuted_axes([2, 1, 0]); // (kr, wr, br)
    let rp = rp
        .as_standard_layout()
        .to_owned()
        .into_shape_with_order((kr, wr * br))
        .unwrap();
    let c2 = core.view().into_shape_with_order((kl * n, kr)).unwrap();
    let t1 = c2.dot(&rp); // (kl·n, wr·br)
    let t1 = t1.into_shape_with_order((kl, n, wr, br)).unwrap();
    let t1 = t1.permuted_axes([0, 3, 1, 2]); // (kl, br, n, wr)
    let t1 = t1
        .as_standard_layout()
        .to_owned()
        .into_shape_with_order((kl * br, n * wr))
        .unwrap();
    let wp = w.view().permuted_axes([2, 3, 1, 0]); // (n, wr, m, wl)
    let wp = wp
        .as_standard_layout()
        .to_owned()
        .into_shape_with_order((n * wr, m * wl))
        .unwrap();
    let t2 = t1.dot(&wp); // (kl·br, m·wl)
    let t2 = t2.into_shape_with_order((kl, br, m, wl)).unwrap();
    let t2 = t2.permuted_axes([2, 1, 0, 3]); // (m, br, kl, wl)
    let t2 = t2
        .as_standard_layout()
        .to_owned()
        .into_shape_with_order((m * br, kl * wl))
        .unwrap();
    let bra = core.view().into_shape_with_order((kl, m * br)).unwrap();
    let out = bra.mapv(|z| z.conj()).dot(&t2); // (bl_bra, kl·wl)
    let out = out.into_shape_with_order((kl, kl, wl)).unwrap();
    let out = out.permuted_axes([0, 2, 1]); // (bra, op, ket)
    out.as_standard_layout().to_owned()
}

/// One-site effective Hamiltonian action on a flattened core.
fn h_eff_apply(
    left: &Array3<C64>,
    right: &Array3<C64>,
    w: &Array4<C64>,
    x: &[C64],
    y: &mut [C64],
) {
    let (bl, wl, kl) = left.dim();
    let (br, wr, kr) = right.dim();
    let (_, m, n, _) = w.dim();
    let xv = ndarray::ArrayView3::from_shape((kl, n, kr), x).unwrap();
    let x2 = xv.into_shape_with_order((kl * n, kr)).unwrap();
    let rp = right.view().permuted_axes([2, 1, 0]); // (kr, wr, br)
    let rp = rp
        .as_standard_layout()
        .to_owned()
        .into_shape_with_order((kr, wr * br))
        .unwrap();
    let t1 = x2.dot(&rp); // (kl·n, wr·br)
    let t1 = t1.into_shape_with_order((kl, n, wr, br)).unwrap();
    let t1 = t1.permuted_axes([1, 2, 0, 3]); // (n, wr, kl, br)
    let t1 = t1
        .as_standard_layout()
        .to_owned()
        .into_shape_with_order((n * wr, kl * br))
        .unwrap();
    let wp = w.view().permuted_axes([1, 0, 2, 3]); // (m, wl, n, wr)
    let wp = wp
        .as_standard_layout()
        .to_owned()
        .into_shape_with_order((m * wl, n * wr))
        .unwrap();
    let u = wp.dot(&t1); // (m·wl, kl·br)
    let u = u.into_shape_with_order((m, wl, kl, br)).unwrap();
    let u = u.permuted_axes([1, 2, 0, 3]); // (wl, kl, m, br)
    let u = u
        .as_standard_layout()
        .to_owned()
        .into_shape_with_order((wl * kl, m * br))
        .unwrap();
    let l2 = left.view().into_shape_with_order((bl, wl * kl)).unwrap();
    let out = l2.dot(&u); // (bl, m·br)
    y.copy_from_slice(out.as_slice().unwrap());
}

/// Zero-site (bond) effective Hamiltonian action on a flattened bond matrix.
fn k_eff_apply(left: &Array3<C64>, right: &Array3<C64>, s: &[C64], y: &mut [C64]) {
    let (bl, a, kl) = left.dim();
    let (br, _, kr) = right.dim();
    let sv = ndarray::ArrayView2::from_shape((kl, kr), s).unwrap();
    let l2 = left.view().into_shape_with_order((bl * a, kl)).unwrap();
    let t = l2.dot(&sv); // (bl·a, kr)
    let t = t.into_shape_with_order((bl, a * kr)).unwrap();
    let r2 = right.view().into_shape_with_order((br, a * kr)).unwrap();
    let out = t.dot(&r2.t()); // (bl, br)
    y.copy_from_slice(out.as_slice().unwrap());
}

/// Stateful projector-splitting integrator. Between steps the state is kept
/// right-canonical with fresh right environments.
pub struct KslIntegrator {
    op: TtOperator,
    state: TtVector,
    left: Vec<Array3<C64>>,
    right: Vec<Array3<C64>>,
    cfg: KslConfig,
}

impl KslIntegrator {
    pub fn new(psi0: &TtVector, op: &TtOperator, cfg: KslConfig) -> Result<Self> {
        cfg.validate()?;
        if psi0.mode_dims() != op.mode_dims() {
            return Err(Error::DimensionMismatch(
                "ksl: state and operator mode dims differ".into(),
            ));
        }
        let targets = clamped_ranks(&psi0.mode_dims(), cfg.rank);
        let mut state = inflate_to_ranks(psi0, &targets)?;
        state.right_canonicalize();
        let d = state.len();
        let mut right = vec![ones_env(); d];
        for i in (1..d).rev() {
            let env = update_right(&right[i], state.core(i), op.core(i));
            right[i - 1] = env;
        }
        let left = vec![ones_env(); d];
        Ok(Self { op: op.clone(), state, left, right, cfg })
    }

    pub fn state(&self) -> &TtVector {
        &self.state
    }

    fn evolve_site(&mut self, i: usize, h: f64) -> Result<()> {
        let core = self.state.core(i);
        let dims = core.dim();
        let x: Vec<C64> = core.iter().cloned().collect();
        let (lenv, renv, w) = (&self.left[i], &self.right[i], self.op.core(i));
        let apply = move |v: &[C64], out: &mut [C64]| h_eff_apply(lenv, renv, w, v, out);
        let y = lanczos_expv(
            &apply,
            &x,
            C64::new(0.0, -h),
            self.cfg.krylov_tol,
            self.cfg.krylov_max,
        )?;
        let new_core = Array3::from_shape_vec(dims, y).unwrap();
        self.state.set_core(i, new_core);
        Ok(())
    }

    /// Left-to-right half sweep with step `h`; `h == 0` only shifts the
    /// orthogonality center (used by the order-1 scheme).
    fn sweep_lr(&mut self, h: f64) -> Result<()> {
        let d = self.state.len();
        for i in 0..d {
            if h != 0.0 {
                self.evolve_site(i, h)?;
            }
            if i + 1 == d {
                break;
            }
            let (rl, n, rr) = self.state.core(i).dim();
            let mat = self
                .state
                .core(i)
                .view()
                .into_shape_with_order((rl * n, rr))
                .unwrap()
                .to_owned();
            let (q, s) = qr_thin(&mat);
            debug_assert_eq!(q.ncols(), rr, "clamped ranks keep QR square");
            self.state
                .set_core(i, q.into_shape_with_order((rl, n, rr)).unwrap());
            let new_left = update_left(&self.left[i], self.state.core(i), self.op.core(i));
            self.left[i + 1] = new_left;
            let s_next = if h != 0.0 {
                let s_flat: Vec<C64> = s.iter().cloned().collect();
                let (lenv, renv) = (&self.left[i + 1], &self.right[i]);
                let apply = move |v: &[C64], out: &mut [C64]| k_eff_apply(lenv, renv, v, out);
                let y = lanczos_expv(
                    &apply,
                    &s_flat,
                    C64::new(0.0, h),
                    self.cfg.krylov_tol,
                    self.cfg.krylov_max,
                )?;
                Array2::from_shape_vec(s.dim(), y).unwrap()
            } else {
                s
            };
            let (nl, nn, nr) = self.state.core(i + 1).dim();
            let next = self
                .state
                .core(i + 1)
                .view()
                .into_shape_with_order((nl, nn * nr))
                .unwrap()
                .to_owned();
            let absorbed = s_next.dot(&next);
            self.state.set_core(
                i + 1,
                absorbed.into_shape_with_order((nl, nn, nr)).unwrap(),
            );
        }
        Ok(())
    }

    /// Right-to-left half sweep, mirror of [`Self::sweep_lr`].
    fn sweep_rl(&mut self, h: f64) -> Result<()> {
        let d = self.state.len();
        for i in (0..d).rev() {
            if h != 0.0 {
                self.evolve_site(i, h)?;
            }
            if i == 0 {
                break;
            }
            let (rl, n, rr) = self.state.core(i).dim();
            // X = S·Q with Q row-orthonormal, via QR of Xᴴ.
            let mat = self
                .state
                .core(i)
                .view()
                .into_shape_with_order((rl, n * rr))
                .unwrap()
                .to_owned();
            let mat_h = mat.t().mapv(|z| z.conj());
            let (qh, rh) = qr_thin(&mat_h);
            debug_assert_eq!(qh.ncols(), rl);
            let q = qh.t().mapv(|z| z.conj()); // (rl, n·rr)
            let q = q.as_standard_layout().to_owned();
            let s = rh.t().mapv(|z| z.conj()); // (rl, rl)
            self.state
                .set_core(i, q.into_shape_with_order((rl, n, rr)).unwrap());
            let new_right = update_right(&self.right[i], self.state.core(i), self.op.core(i));
            self.right[i - 1] = new_right;
            let s_next = if h != 0.0 {
                let s_flat: Vec<C64> = s.iter().cloned().collect();
                let (lenv, renv) = (&self.left[i], &self.right[i - 1]);
                let apply = move |v: &[C64], out: &mut [C64]| k_eff_apply(lenv, renv, v, out);
                let y = lanczos_expv(
                    &apply,
                    &s_flat,
                    C64::new(0.0, h),
                    self.cfg.krylov_tol,
                    self.cfg.krylov_max,
                )?;
                Array2::from_shape_vec(s.dim(), y).unwrap()
            } else {
                s
            };
            let (pl, pn, pr) = self.state.core(i - 1).dim();
            debug_assert_eq!(pr, rl);
            let prev = self
                .state
                .core(i - 1)
                .view()
                .into_shape_with_order((pl * pn, pr))
                .unwrap()
                .to_owned();
            let absorbed = prev.dot(&s_next);
            self.state.set_core(
                i - 1,
                absorbed.into_shape_with_order((pl, pn, rl)).unwrap(),
            );
        }
        Ok(())
    }

    /// Advance by one time step.
    pub fn step(&mut self) -> Result<()> {
        match self.cfg.order {
            1 => {
                self.sweep_lr(self.cfg.dt)?;
                self.sweep_rl(0.0)?;
            }
            _ => {
                let h = self.cfg.dt / 2.0;
                self.sweep_lr(h)?;
                self.sweep_rl(h)?;
            }
        }
        let probe = self.state.core(0).iter().map(|z| z.norm_sqr()).sum::<f64>();
        if !probe.is_finite() {
            return Err(Error::NonFinite("ksl step".into()));
        }
        Ok(())
    }
}

/// Single step on a state whose ranks already sit on the fixed-rank
/// manifold for this configuration.
pub fn ksl_step(psi: &TtVector, op: &TtOperator, cfg: &KslConfig) -> Result<TtVector> {
    let targets = clamped_ranks(&psi.mode_dims(), cfg.rank);
    if psi.ranks() != targets {
        return Err(Error::RankMismatch { expected: targets, got: psi.ranks() });
    }
    let mut integ = KslIntegrator::new(psi, op, cfg.clone())?;
    integ.step()?;
    Ok(integ.state().clone())
}

/// Propagate `n_steps` steps, invoking the observer after each with the
/// number of completed steps and the current state. Inflates the initial
/// ranks to the manifold if necessary.
pub fn propagate<F>(
    psi0: &TtVector,
    op: &TtOperator,
    cfg: &KslConfig,
    n_steps: usize,
    mut observer: F,
) -> Result<TtVector>
where
    F: FnMut(usize, &TtVector),
{
    if n_steps == 0 {
        return Ok(psi0.clone());
    }
    let mut integ = KslIntegrator::new(psi0, op, cfg.clone())?;
    for step in 1..=n_steps {
        integ.step()?;
        observer(step, integ.state());
    }
    Ok(integ.state().clone())
}
