//! RK4 propagation of the GQME variants with memory-time truncation,
//! dσ/dt = −i⟨L⟩σ(t) − ∫₀^min(t,t_mem) K(τ)σ(t−τ)dτ + I(t),
//! and the backward search for the shortest converged memory time.
//!
//! The history convolution is trapezoidal on the kernel grid; RK4 stage
//! values at mid-step average the two bracketing grid convolutions, with
//! the current stage estimate standing in at the newest grid point. The
//! integration step equals the kernel grid step, so the kernel is never
//! interpolated.

use crate::model::ElectronicLiouvillian;
use crate::volterra::{GqmeType, InhomSeries, KernelSeries};
use crate::{par, C64, Error, Result};

/// Propagated reduced-density-matrix elements of one GQME run.
#[derive(Clone, Debug)]
pub struct GqmeResult {
    pub dt: f64,
    pub gtype: GqmeType,
    /// n·N_set entries.
    pub sigma: Vec<C64>,
    pub memory_time: f64,
    pub kernel_fp: String,
    pub model: String,
}

impl GqmeResult {
    pub fn n(&self) -> usize {
        self.sigma.len() / self.gtype.n_set()
    }

    #[inline]
    pub fn at(&self, i: usize) -> &[C64] {
        let s = self.gtype.n_set();
        &self.sigma[i * s..(i + 1) * s]
    }

    /// σ_z(t) = σ_DD − σ_AA where both populations are retained.
    pub fn sigma_z(&self) -> Option<Vec<f64>> {
        let (idx_dd, idx_aa) = match self.gtype {
            GqmeType::Full => (0usize, 3usize),
            GqmeType::PopulationsOnly => (0, 1),
            _ => return None,
        };
        let s = self.gtype.n_set();
        Some(
            (0..self.n())
                .map(|i| (self.sigma[i * s + idx_dd] - self.sigma[i * s + idx_aa]).re)
                .collect(),
        )
    }
}

/// Initial condition per GQME type for a donor-populated start.
pub fn default_initial_sigma(gtype: GqmeType) -> Vec<C64> {
    match gtype {
        GqmeType::Full => vec![
            C64::from(1.0),
            C64::from(0.0),
            C64::from(0.0),
            C64::from(0.0),
        ],
        GqmeType::PopulationsOnly => vec![C64::from(1.0), C64::from(0.0)],
        GqmeType::DonorOnly => vec![C64::from(1.0)],
        GqmeType::AcceptorOnly => vec![C64::from(0.0)],
    }
}

#[inline]
fn mat_vec(out: &mut [C64], m: &[C64], v: &[C64], n: usize, scale: C64) {
    for r in 0..n {
        let mut acc = C64::new(0.0, 0.0);
        for c in 0..n {
            acc += m[r * n + c] * v[c];
        }
        out[r] += scale * acc;
    }
}

struct GqmeStepper<'a> {
    kernel: &'a KernelSeries,
    inhom: Option<&'a [C64]>,
    l_sub: Option<Vec<C64>>,
    s: usize,
    n_mem: usize,
    dt: f64,
}

impl<'a> GqmeStepper<'a> {
    /// History-only part of the trapezoid convolution at grid point
    /// `i_next` (the j = 0 newest-point term is excluded).
    fn history(&self, sigma: &[C64], i_next: usize) -> Vec<C64> {
        let s = self.s;
        let jmax = i_next.min(self.n_mem);
        let mut h = vec![C64::new(0.0, 0.0); s];
        for j in 1..=jmax {
            let w = if j == jmax { 0.5 } else { 1.0 };
            mat_vec(
                &mut h,
                self.kernel.at(j),
                &sigma[(i_next - j) * s..(i_next - j + 1) * s],
                s,
                C64::from(w * self.dt),
            );
        }
        h
    }

    fn w0(&self, i: usize) -> f64 {
        if i.min(self.n_mem) == 0 {
            0.0
        } else {
            0.5 * self.dt
        }
    }

    /// RHS with the convolution supplied as (history, newest weight, newest σ).
    fn rhs(&self, y: &[C64], conv: &[C64], w0: f64, newest: &[C64], i_t: usize) -> Vec<C64> {
        let s = self.s;
        let mut f = vec![C64::new(0.0, 0.0); s];
        if let Some(l) = &self.l_sub {
            mat_vec(&mut f, l, y, s, C64::new(0.0, -1.0));
        }
        for r in 0..s {
            f[r] -= conv[r];
        }
        if w0 != 0.0 {
            mat_vec(&mut f, self.kernel.at(0), newest, s, C64::from(-w0));
        }
        if let Some(inh) = self.inhom {
            for r in 0..s {
                f[r] += inh[i_t * s + r];
            }
        }
        f
    }
}

/// Integrate one GQME with RK4 up to `t_final`, truncating the memory
/// integral at `memory_time`.
pub fn propagate_gqme(
    kernel: &KernelSeries,
    inhom: Option<&InhomSeries>,
    liouvillian: &ElectronicLiouvillian,
    sigma0: &[C64],
    t_final: f64,
    memory_time: f64,
) -> Result<GqmeResult> {
    let gtype = kernel.gtype;
    let s = gtype.n_set();
    if sigma0.len() != s {
        return Err(Error::DimensionMismatch(format!(
            "sigma0 length {} vs subset size {s}",
            sigma0.len()
        )));
    }
    let dt = kernel.dt;
    let n_out = (t_final / dt).round() as usize;
    let n_mem = (memory_time / dt).round() as usize;
    if n_mem + 1 > kernel.n() {
        return Err(Error::GridTooShort { need: n_mem + 1, got: kernel.n() });
    }
    if gtype.needs_inhom(0) && inhom.is_none() {
        return Err(Error::InvalidParams(format!(
            "{} GQME requires the inhomogeneous term",
            gtype.as_str()
        )));
    }
    if let Some(inh) = inhom {
        if inh.data.len() < n_out + 1 {
            return Err(Error::GridTooShort { need: n_out + 1, got: inh.data.len() });
        }
    }
    let l_sub = if gtype.includes_liouvillian() {
        Some(liouvillian.restrict(gtype.subset()).iter().cloned().collect())
    } else {
        None
    };
    let stepper = GqmeStepper {
        kernel,
        inhom: inhom.map(|i| i.data.as_slice()),
        l_sub,
        s,
        n_mem,
        dt,
    };

    let mut sigma = Vec::with_capacity((n_out + 1) * s);
    sigma.extend_from_slice(sigma0);
    let mut h_cur = stepper.history(&sigma, 0); // zero
    for i in 0..n_out {
        let y_i: Vec<C64> = sigma[i * s..(i + 1) * s].to_vec();
        let h_next = stepper.history(&sigma, i + 1);
        let (w0_i, w0_n) = (stepper.w0(i), stepper.w0(i + 1));

        // Convolution at t_i is fully known.
        let mut conv_i = h_cur.clone();
        if w0_i != 0.0 {
            mat_vec(&mut conv_i, kernel.at(0), &y_i, s, C64::from(w0_i));
        }
        let zero = vec![C64::new(0.0, 0.0); s];

        let k1 = stepper.rhs(&y_i, &conv_i, 0.0, &zero, i);

        let mid_conv = |stage: &[C64]| -> (Vec<C64>, f64, Vec<C64>) {
            // ½(C_i + C_{i+1}) with the stage estimate at the newest point.
            let mut c = vec![C64::new(0.0, 0.0); s];
            for r in 0..s {
                c[r] = 0.5 * (conv_i[r] + h_next[r]);
            }
            (c, 0.5 * w0_n, stage.to_vec())
        };

        let y2: Vec<C64> = (0..s).map(|r| y_i[r] + C64::from(0.5 * dt) * k1[r]).collect();
        let (c2, w2, nw2) = mid_conv(&y2);
        let mut k2 = stepper.rhs(&y2, &c2, w2, &nw2, i);
        let inh_mid = stepper.inhom.map(|inh| {
            (0..s)
                .map(|r| 0.5 * (inh[i * s + r] + inh[(i + 1) * s + r]))
                .collect::<Vec<C64>>()
        });
        if let Some(im) = &inh_mid {
            // rhs() already added I(t_i); shift to the midpoint average.
            for r in 0..s {
                k2[r] += im[r] - stepper.inhom.unwrap()[i * s + r];
            }
        }

        let y3: Vec<C64> = (0..s).map(|r| y_i[r] + C64::from(0.5 * dt) * k2[r]).collect();
        let (c3, w3, nw3) = mid_conv(&y3);
        let mut k3 = stepper.rhs(&y3, &c3, w3, &nw3, i);
        if let Some(im) = &inh_mid {
            for r in 0..s {
                k3[r] += im[r] - stepper.inhom.unwrap()[i * s + r];
            }
        }

        let y4: Vec<C64> = (0..s).map(|r| y_i[r] + C64::from(dt) * k3[r]).collect();
        let k4 = stepper.rhs(&y4, &h_next, w0_n, &y4, i + 1);

        for r in 0..s {
            let incr = (k1[r] + 2.0 * k2[r] + 2.0 * k3[r] + k4[r]) * C64::from(dt / 6.0);
            let v = y_i[r] + incr;
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(Error::NonFinite(format!("gqme step {i}")));
            }
            sigma.push(v);
        }
        h_cur = h_next;
    }
    Ok(GqmeResult {
        dt,
        gtype,
        sigma,
        memory_time,
        kernel_fp: kernel.input.clone(),
        model: kernel.model.clone(),
    })
}

/// Backward memory-time search: propagate once at `t_mem_max` as the
/// reference, then shrink the memory time in grid-aligned strides until
/// some element at some step deviates by more than `conv_param`; the
/// shortest passing truncation wins. The dynamics horizon is the full
/// kernel grid.
pub fn memory_time_search(
    kernel: &KernelSeries,
    inhom: Option<&InhomSeries>,
    liouvillian: &ElectronicLiouvillian,
    sigma0: &[C64],
    conv_param: f64,
    t_mem_max: f64,
    stride_steps: usize,
) -> Result<(f64, GqmeResult)> {
    let dt = kernel.dt;
    let n_mem_max = (t_mem_max / dt).round() as usize;
    if n_mem_max + 1 > kernel.n() {
        return Err(Error::GridTooShort { need: n_mem_max + 1, got: kernel.n() });
    }
    let stride = stride_steps.max(1);
    let t_hor = (kernel.n() - 1) as f64 * dt;
    let reference = propagate_gqme(kernel, inhom, liouvillian, sigma0, t_hor, t_mem_max)?;

    let deviation = |cand: &GqmeResult| -> f64 {
        cand.sigma
            .iter()
            .zip(&reference.sigma)
            .map(|(a, b)| (*a - *b).norm())
            .fold(0.0, f64::max)
    };

    let mut candidates: Vec<usize> = Vec::new();
    let mut m = n_mem_max;
    while m > stride {
        m -= stride;
        candidates.push(m);
    }
    candidates.push(0);

    let mut best: Option<(usize, GqmeResult)> = None;
    for chunk in candidates.chunks(4) {
        let runs: Vec<Result<GqmeResult>> = par::map(chunk.to_vec(), |mm| {
            propagate_gqme(kernel, inhom, liouvillian, sigma0, t_hor, mm as f64 * dt)
        });
        let mut failed = false;
        for run in runs {
            let run = run?;
            if deviation(&run) < conv_param {
                let mm = (run.memory_time / dt).round() as usize;
                best = Some((mm, run));
            } else {
                failed = true;
                break;
            }
        }
        if failed {
            break;
        }
    }
    match best {
        Some((_, run)) => {
            let t_mem = run.memory_time;
            Ok((t_mem, run))
        }
        None => Ok((t_mem_max, reference)),
    }
}
