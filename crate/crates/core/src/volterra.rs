//! Iterative solution of the Volterra integral equations for the memory
//! kernel and the inhomogeneous term of each GQME variant.
//!
//! K(τ) = i·Ḟ(τ) − F(τ)·⟨L⟩ + i·∫₀^τ F(τ−τ′)·K(τ′) dτ′ restricted to the
//! retained Liouville subset, with the ⟨L⟩ term present only for the full
//! kernel (it vanishes identically on population blocks). Quadrature is
//! trapezoidal; each fixed-point iteration sweeps the whole grid forward
//! in time with already-updated values and an exact solve of the implicit
//! newest node, then certifies the iterate by a plain-quadrature plug-back
//! residual. The reported residual is the certified one.

use crate::model::ElectronicLiouvillian;
use crate::pfi::PfiSeries;
use crate::{par, C64, Error, Result};
use ndarray::Array2;

/// Which subset of electronic density-matrix elements a GQME retains.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GqmeType {
    Full,
    PopulationsOnly,
    DonorOnly,
    AcceptorOnly,
}

impl GqmeType {
    /// Liouville indices of the retained elements, in (DD, DA, AD, AA)
    /// ordering.
    pub fn subset(&self) -> &'static [usize] {
        match self {
            GqmeType::Full => &[0, 1, 2, 3],
            GqmeType::PopulationsOnly => &[0, 3],
            GqmeType::DonorOnly => &[0],
            GqmeType::AcceptorOnly => &[3],
        }
    }

    pub fn n_set(&self) -> usize {
        self.subset().len()
    }

    /// An inhomogeneous term is needed exactly when the initial electronic
    /// projector |γ⟩⟨γ| lies outside the retained subset.
    pub fn needs_inhom(&self, gamma: usize) -> bool {
        let gg = crate::model::liouville_index(gamma, gamma);
        !self.subset().contains(&gg)
    }

    /// The projected-Liouvillian term enters the kernel equation only for
    /// the full set; on the population blocks it is identically zero.
    pub fn includes_liouvillian(&self) -> bool {
        matches!(self, GqmeType::Full)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            GqmeType::Full => "full",
            GqmeType::PopulationsOnly => "pop",
            GqmeType::DonorOnly => "donor",
            GqmeType::AcceptorOnly => "acceptor",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(GqmeType::Full),
            "pop" | "populations" => Ok(GqmeType::PopulationsOnly),
            "donor" => Ok(GqmeType::DonorOnly),
            "acceptor" => Ok(GqmeType::AcceptorOnly),
            other => Err(Error::Parse(format!("unknown gqme type '{other}'"))),
        }
    }
}

/// Converged memory kernel on the time grid, N_set×N_set per point.
#[derive(Clone, Debug)]
pub struct KernelSeries {
    pub dt: f64,
    pub gtype: GqmeType,
    /// n·N_set² entries, row-major within each grid point.
    pub data: Vec<C64>,
    pub iterations_used: usize,
    pub residual: f64,
    pub epsilon: f64,
    pub gamma_c: f64,
    pub model: String,
    pub input: String,
}

impl KernelSeries {
    pub fn n(&self) -> usize {
        let s = self.gtype.n_set();
        self.data.len() / (s * s)
    }

    #[inline]
    pub fn at(&self, i: usize) -> &[C64] {
        let s2 = self.gtype.n_set() * self.gtype.n_set();
        &self.data[i * s2..(i + 1) * s2]
    }
}

/// Converged inhomogeneous term (acceptor single-population GQME).
#[derive(Clone, Debug)]
pub struct InhomSeries {
    pub dt: f64,
    pub data: Vec<C64>,
    pub iterations_used: usize,
    pub residual: f64,
    pub model: String,
    pub input: String,
}

#[derive(Clone, Copy, Debug)]
pub struct VolterraOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for VolterraOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 50 }
    }
}

/// out += scale · a · b for flat n×n row-major matrices.
#[inline]
fn mat_mul_acc(out: &mut [C64], a: &[C64], b: &[C64], n: usize, scale: C64) {
    for r in 0..n {
        for k in 0..n {
            let f = scale * a[r * n + k];
            if f.norm_sqr() == 0.0 {
                continue;
            }
            for c in 0..n {
                out[r * n + c] += f * b[k * n + c];
            }
        }
    }
}

fn sup_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (*x - *y).norm())
        .fold(0.0, f64::max)
}

/// Restrict the 16-column PFI rows to a Liouville subset.
fn restrict(series: &[C64], n_rows: usize, subset: &[usize]) -> Vec<C64> {
    let s = subset.len();
    let mut out = vec![C64::new(0.0, 0.0); n_rows * s * s];
    for t in 0..n_rows {
        for (a, &ja) in subset.iter().enumerate() {
            for (b, &jb) in subset.iter().enumerate() {
                out[t * s * s + a * s + b] = series[t * 16 + ja * 4 + jb];
            }
        }
    }
    out
}

/// Evaluate the Volterra right-hand side on the whole grid with the plain
/// trapezoid, out(τ_i) = base_i + i·trapz_j F(τ_i−τ_j)·K(τ_j). Used for
/// residual certification and as the reference form of the fixed point.
fn kernel_rhs(base: &[C64], f: &[C64], k: &[C64], n: usize, s: usize, dt: f64) -> Vec<C64> {
    let s2 = s * s;
    let i_dt = C64::new(0.0, dt);
    let mut out = vec![C64::new(0.0, 0.0); n * s2];
    par::fill_chunks(&mut out, s2, |start, chunk| {
        let i = start / s2;
        chunk.copy_from_slice(&base[i * s2..(i + 1) * s2]);
        if i == 0 {
            return; // zero-length integral
        }
        for j in 0..=i {
            let w = if j == 0 || j == i { 0.5 } else { 1.0 };
            mat_mul_acc(
                chunk,
                &f[(i - j) * s2..(i - j + 1) * s2],
                &k[j * s2..(j + 1) * s2],
                s,
                i_dt * C64::from(w),
            );
        }
    });
    out
}

/// Inverse of a small matrix, via Gaussian elimination.
fn invert_small(m: &Array2<C64>) -> Result<Array2<C64>> {
    let eye = Array2::<C64>::eye(m.nrows());
    crate::linalg::solve(m, &eye)
}

/// One grid sweep that marches forward in time, using already-updated
/// kernel values behind the current point and solving the implicit
/// diagonal (the newest trapezoid node) exactly. Because the discretized
/// Volterra system is lower triangular in time, a single sweep lands on
/// the exact discrete solution; the second sweep certifies it.
fn kernel_sweep_marching(
    base: &[C64],
    f: &[C64],
    prev: &[C64],
    n: usize,
    s: usize,
    dt: f64,
) -> Vec<C64> {
    let s2 = s * s;
    let i_dt = C64::new(0.0, dt);
    // M = 1 − i·(dt/2)·F(0), shared by every grid point.
    let mut m = Array2::<C64>::eye(s);
    for r in 0..s {
        for c in 0..s {
            m[[r, c]] -= i_dt * C64::from(0.5) * f[r * s + c];
        }
    }
    let m_inv = invert_small(&m).expect("trapezoid diagonal block is invertible at small dt");
    let _ = prev; // the marching sweep is independent of the previous iterate
    let mut out = vec![C64::new(0.0, 0.0); n * s2];
    out[..s2].copy_from_slice(&base[..s2]);
    for i in 1..n {
        let mut partial = base[i * s2..(i + 1) * s2].to_vec();
        // j = 0 end of the trapezoid (K(0) is fixed by the base term).
        mat_mul_acc(&mut partial, &f[i * s2..(i + 1) * s2], &out[..s2], s, i_dt * C64::from(0.5));
        for j in 1..i {
            mat_mul_acc(
                &mut partial,
                &f[(i - j) * s2..(i - j + 1) * s2],
                &out[j * s2..(j + 1) * s2],
                s,
                i_dt,
            );
        }
        // Implicit newest node: K_i = M⁻¹·partial.
        let out_i = &mut out[i * s2..(i + 1) * s2];
        for r in 0..s {
            for col in 0..s {
                let mut acc = C64::new(0.0, 0.0);
                for c in 0..s {
                    acc += m_inv[[r, c]] * partial[c * s + col];
                }
                out_i[r * s + col] = acc;
            }
        }
    }
    out
}

/// Solve the kernel Volterra equation for the requested GQME type.
pub fn solve_kernel(
    pfi: &PfiSeries,
    gtype: GqmeType,
    liouvillian: &ElectronicLiouvillian,
    opts: &VolterraOptions,
) -> Result<KernelSeries> {
    let n = pfi.n();
    if n == 0 {
        return Err(Error::GridTooShort { need: 1, got: 0 });
    }
    let subset = gtype.subset();
    let s = subset.len();
    let s2 = s * s;
    let f = restrict(&pfi.f, n, subset);
    let fdot = restrict(&pfi.fdot, n, subset);
    let i_unit = C64::new(0.0, 1.0);

    let mut base = vec![C64::new(0.0, 0.0); n * s2];
    for t in 0..n {
        for e in 0..s2 {
            base[t * s2 + e] = i_unit * fdot[t * s2 + e];
        }
        if gtype.includes_liouvillian() {
            let l: Array2<C64> = liouvillian.restrict(subset);
            let l_flat: Vec<C64> = l.iter().cloned().collect();
            mat_mul_acc(
                &mut base[t * s2..(t + 1) * s2],
                &f[t * s2..(t + 1) * s2],
                &l_flat,
                s,
                C64::from(-1.0),
            );
        }
    }

    let mut prev = base.clone();
    let mut last_residual = f64::INFINITY;
    for iter in 1..=opts.max_iter {
        let cur = kernel_sweep_marching(&base, &f, &prev, n, s, pfi.dt);
        // Certify against the plain-quadrature fixed-point form.
        let rhs = kernel_rhs(&base, &f, &cur, n, s, pfi.dt);
        let residual = sup_diff(&rhs, &cur);
        last_residual = residual;
        if residual < opts.tol {
            return Ok(KernelSeries {
                dt: pfi.dt,
                gtype,
                data: cur,
                iterations_used: iter,
                residual,
                epsilon: pfi.epsilon,
                gamma_c: pfi.gamma_c,
                model: pfi.model.clone(),
                input: pfi.input.clone(),
            });
        }
        prev = cur;
    }
    Err(Error::Convergence {
        what: format!("{} kernel", gtype.as_str()),
        max_iter: opts.max_iter,
        residual: last_residual,
    })
}

/// Plug-back residual of a kernel against its Volterra equation, using the
/// solver's quadrature.
pub fn kernel_residual(
    kernel: &KernelSeries,
    pfi: &PfiSeries,
    liouvillian: &ElectronicLiouvillian,
) -> f64 {
    let n = kernel.n();
    let subset = kernel.gtype.subset();
    let s = subset.len();
    let s2 = s * s;
    let f = restrict(&pfi.f, n, subset);
    let fdot = restrict(&pfi.fdot, n, subset);
    let i_unit = C64::new(0.0, 1.0);
    let mut base = vec![C64::new(0.0, 0.0); n * s2];
    for t in 0..n {
        for e in 0..s2 {
            base[t * s2 + e] = i_unit * fdot[t * s2 + e];
        }
        if kernel.gtype.includes_liouvillian() {
            let l = liouvillian.restrict(subset);
            let l_flat: Vec<C64> = l.iter().cloned().collect();
            mat_mul_acc(
                &mut base[t * s2..(t + 1) * s2],
                &f[t * s2..(t + 1) * s2],
                &l_flat,
                s,
                C64::from(-1.0),
            );
        }
    }
    let rhs = kernel_rhs(&base, &f, &kernel.data, n, s, kernel.dt);
    sup_diff(&rhs, &kernel.data)
}

/// Solve the Volterra equation of the acceptor single-population
/// inhomogeneous term, I(t) = −i·F_{AA,DD}(t) + i∫₀ᵗ F_{AA,AA}(t−τ)I(τ)dτ,
/// for a donor-populated initial state.
pub fn solve_inhomogeneous(pfi: &PfiSeries, opts: &VolterraOptions) -> Result<InhomSeries> {
    if pfi.gamma != 0 {
        return Err(Error::InvalidParams(
            "inhomogeneous term assumes a donor-populated initial state".into(),
        ));
    }
    let n = pfi.n();
    let aa_dd = 3 * 4; // row AA, column DD
    let aa_aa = 3 * 4 + 3;
    let i_unit = C64::new(0.0, 1.0);
    let base: Vec<C64> = (0..n).map(|t| -i_unit * pfi.f[t * 16 + aa_dd]).collect();
    let f_aa: Vec<C64> = (0..n).map(|t| pfi.f[t * 16 + aa_aa]).collect();
    let i_dt = i_unit * C64::from(pfi.dt);
    // Scalar marching sweep with the implicit newest node.
    let diag = C64::from(1.0) - i_dt * C64::from(0.5) * f_aa[0];
    let sweep = |_prev: &[C64]| -> Vec<C64> {
        let mut out = base.clone();
        for i in 1..n {
            let mut acc = C64::from(0.5) * f_aa[i] * out[0];
            for j in 1..i {
                acc += f_aa[i - j] * out[j];
            }
            out[i] = (base[i] + i_dt * acc) / diag;
        }
        out
    };
    let residual_of = |cand: &[C64]| -> f64 {
        let mut rhs = base.clone();
        for i in 1..n {
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..=i {
                let w = if j == 0 || j == i { 0.5 } else { 1.0 };
                acc += C64::from(w) * f_aa[i - j] * cand[j];
            }
            rhs[i] += i_dt * acc;
        }
        sup_diff(&rhs, cand)
    };
    let mut prev = base.clone();
    let mut last_residual = f64::INFINITY;
    for iter in 1..=opts.max_iter {
        let cur = sweep(&prev);
        let residual = residual_of(&cur);
        last_residual = residual;
        if residual < opts.tol {
            return Ok(InhomSeries {
                dt: pfi.dt,
                data: cur,
                iterations_used: iter,
                residual,
                model: pfi.model.clone(),
                input: pfi.input.clone(),
            });
        }
        prev = cur;
    }
    Err(Error::Convergence {
        what: "inhomogeneous term".into(),
        max_iter: opts.max_iter,
        residual: last_residual,
    })
}

/// Plug-back residual of the inhomogeneous term.
pub fn inhom_residual(inhom: &InhomSeries, pfi: &PfiSeries) -> f64 {
    let n = inhom.data.len();
    let i_unit = C64::new(0.0, 1.0);
    let mut rhs: Vec<C64> = (0..n)
        .map(|t| -i_unit * pfi.f[t * 16 + 12])
        .collect();
    for i in 1..n {
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..=i {
            let w = if j == 0 || j == i { 0.5 } else { 1.0 };
            acc += C64::from(w) * pfi.f[(i - j) * 16 + 15] * inhom.data[j];
        }
        rhs[i] += i_unit * C64::from(inhom.dt) * acc;
    }
    sup_diff(&rhs, &inhom.data)
}

/// Result of the controlled error-cancellation experiment: the same
/// relative perturbation applied with opposite signs to F_{DD,DD} and
/// F_{DD,AA} moves the populations-only kernel less than the donor-only
/// kernel, because the two convolution terms partially cancel.
#[derive(Clone, Debug, PartialEq)]
pub struct CancellationReport {
    pub delta: f64,
    pub pop_change: f64,
    pub donor_change: f64,
}

pub fn error_cancellation_report(
    pfi: &PfiSeries,
    delta: f64,
    liouvillian: &ElectronicLiouvillian,
    opts: &VolterraOptions,
) -> Result<CancellationReport> {
    let base_pop = solve_kernel(pfi, GqmeType::PopulationsOnly, liouvillian, opts)?;
    let base_donor = solve_kernel(pfi, GqmeType::DonorOnly, liouvillian, opts)?;
    let mut perturbed = pfi.clone();
    let n = pfi.n();
    for t in 0..n {
        perturbed.f[t * 16] *= C64::from(1.0 + delta); // F_{DD,DD}
        perturbed.f[t * 16 + 3] *= C64::from(1.0 - delta); // F_{DD,AA}
    }
    let pert_pop = solve_kernel(&perturbed, GqmeType::PopulationsOnly, liouvillian, opts)?;
    let pert_donor = solve_kernel(&perturbed, GqmeType::DonorOnly, liouvillian, opts)?;
    // Compare the shared element K_{DD,DD}.
    let n_rows = base_pop.n().min(pert_pop.n());
    let mut pop_change = 0.0f64;
    for t in 0..n_rows {
        pop_change = pop_change.max((pert_pop.at(t)[0] - base_pop.at(t)[0]).norm());
    }
    let mut donor_change = 0.0f64;
    for t in 0..base_donor.n() {
        donor_change = donor_change.max((pert_donor.at(t)[0] - base_donor.at(t)[0]).norm());
    }
    Ok(CancellationReport { delta, pop_change, donor_change })
}
