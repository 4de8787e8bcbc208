//! Small dense complex linear algebra used by the tensor-train and
//! propagation layers: Householder QR, one-sided Jacobi SVD, Padé matrix
//! exponentials, and Lanczos time stepping for Hermitian operators.
//!
//! All routines target the small matrices that arise from tensor-train
//! cores and Krylov subspaces (dimensions up to a few hundred); none of
//! them is meant for large dense problems.

use crate::{C64, Error, Result};
use ndarray::{Array1, Array2};

/// Thin QR factorization `a = q·r` with `q` of shape (m, k), `r` of shape
/// (k, n), k = min(m, n). Householder reflections, unitary `q`.
pub fn qr_thin(a: &Array2<C64>) -> (Array2<C64>, Array2<C64>) {
    let (m, n) = a.dim();
    let k = m.min(n);
    let mut r = a.clone();
    // Householder vectors, stored per reflection.
    let mut vs: Vec<Array1<C64>> = Vec::with_capacity(k);
    for j in 0..k {
        let mut v = Array1::<C64>::zeros(m - j);
        for i in j..m {
            v[i - j] = r[[i, j]];
        }
        let norm_x = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm_x == 0.0 {
            vs.push(v);
            continue;
        }
        let x0 = v[0];
        let sign = if x0.norm() > 0.0 { x0 / x0.norm() } else { C64::new(1.0, 0.0) };
        v[0] += sign * norm_x;
        let vnorm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if vnorm > 0.0 {
            v.mapv_inplace(|z| z / vnorm);
        }
        // Apply H = I - 2 v v† to the trailing block of r.
        for c in j..n {
            let mut dot = C64::new(0.0, 0.0);
            for i in j..m {
                dot += v[i - j].conj() * r[[i, c]];
            }
            let f = 2.0 * dot;
            for i in j..m {
                let upd = f * v[i - j];
                r[[i, c]] -= upd;
            }
        }
        vs.push(v);
    }
    // Accumulate q = H_0 · … · H_{k-1} applied to the first k identity columns.
    let mut q = Array2::<C64>::zeros((m, k));
    for c in 0..k {
        q[[c, c]] = C64::new(1.0, 0.0);
    }
    for j in (0..k).rev() {
        let v = &vs[j];
        if v.iter().all(|z| z.norm_sqr() == 0.0) {
            continue;
        }
        for c in 0..k {
            let mut dot = C64::new(0.0, 0.0);
            for i in j..m {
                dot += v[i - j].conj() * q[[i, c]];
            }
            let f = 2.0 * dot;
            for i in j..m {
                let upd = f * v[i - j];
                q[[i, c]] -= upd;
            }
        }
    }
    let mut r_out = Array2::<C64>::zeros((k, n));
    for i in 0..k {
        for c in i..n {
            r_out[[i, c]] = r[[i, c]];
        }
    }
    (q, r_out)
}

/// Singular value decomposition `a = u·diag(s)·v†` with `u` (m, k),
/// `s` (k), `v` (n, k), k = min(m, n), singular values sorted descending.
///
/// One-sided Jacobi on the columns; accurate for the small unfoldings that
/// show up in tensor-train rounding.
pub fn svd(a: &Array2<C64>) -> (Array2<C64>, Vec<f64>, Array2<C64>) {
    let (m, n) = a.dim();
    if m < n {
        // A† = U S V†  =>  A = V S U†.
        let at = a.t().mapv(|z| z.conj());
        let (u, s, v) = svd(&at);
        return (v, s, u);
    }
    let mut w = a.clone();
    let mut v = Array2::<C64>::eye(n);
    let eps = 1e-15_f64;
    let max_sweeps = 60;
    for _ in 0..max_sweeps {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let mut app = 0.0;
                let mut aqq = 0.0;
                let mut apq = C64::new(0.0, 0.0);
                for i in 0..m {
                    app += w[[i, p]].norm_sqr();
                    aqq += w[[i, q]].norm_sqr();
                    apq += w[[i, p]].conj() * w[[i, q]];
                }
                if apq.norm() <= eps * (app * aqq).sqrt() || apq.norm() == 0.0 {
                    continue;
                }
                rotated = true;
                // Phase so the 2x2 Gram block becomes real, then a real
                // Jacobi rotation that annihilates it.
                let phase = apq / apq.norm();
                let tau = (aqq - app) / (2.0 * apq.norm());
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for i in 0..m {
                    let cp = w[[i, p]];
                    let cq = w[[i, q]] * phase.conj();
                    w[[i, p]] = cs * cp - sn * cq;
                    w[[i, q]] = (sn * cp + cs * cq) * phase;
                }
                for i in 0..n {
                    let vp = v[[i, p]];
                    let vq = v[[i, q]] * phase.conj();
                    v[[i, p]] = cs * vp - sn * vq;
                    v[[i, q]] = (sn * vp + cs * vq) * phase;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let k = n; // m >= n
    let mut s: Vec<f64> = (0..k)
        .map(|j| (0..m).map(|i| w[[i, j]].norm_sqr()).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| s[j].partial_cmp(&s[i]).unwrap());
    let mut u = Array2::<C64>::zeros((m, k));
    let mut v_sorted = Array2::<C64>::zeros((n, k));
    let mut s_sorted = vec![0.0; k];
    for (new_j, &old_j) in order.iter().enumerate() {
        s_sorted[new_j] = s[old_j];
        if s[old_j] > 0.0 {
            for i in 0..m {
                u[[i, new_j]] = w[[i, old_j]] / s[old_j];
            }
        }
        for i in 0..n {
            v_sorted[[i, new_j]] = v[[i, old_j]];
        }
    }
    s = s_sorted;
    (u, s, v_sorted)
}

/// Solve `a·x = b` for square complex `a` by Gaussian elimination with
/// partial pivoting. `b` may hold multiple right-hand sides as columns.
pub fn solve(a: &Array2<C64>, b: &Array2<C64>) -> Result<Array2<C64>> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "solve: a is {:?}, b is {:?}",
            a.dim(),
            b.dim()
        )));
    }
    let nrhs = b.ncols();
    let mut lu = a.clone();
    let mut x = b.clone();
    for col in 0..n {
        let mut piv = col;
        let mut best = lu[[col, col]].norm();
        for row in (col + 1)..n {
            let mag = lu[[row, col]].norm();
            if mag > best {
                best = mag;
                piv = row;
            }
        }
        if best == 0.0 {
            return Err(Error::NonFinite("singular matrix in solve".into()));
        }
        if piv != col {
            for c in 0..n {
                lu.swap([col, c], [piv, c]);
            }
            for c in 0..nrhs {
                x.swap([col, c], [piv, c]);
            }
        }
        let d = lu[[col, col]];
        for row in (col + 1)..n {
            let f = lu[[row, col]] / d;
            if f.norm_sqr() == 0.0 {
                continue;
            }
            for c in col..n {
                let upd = f * lu[[col, c]];
                lu[[row, c]] -= upd;
            }
            for c in 0..nrhs {
                let upd = f * x[[col, c]];
                x[[row, c]] -= upd;
            }
        }
    }
    for col in (0..n).rev() {
        let d = lu[[col, col]];
        for c in 0..nrhs {
            let mut acc = x[[col, c]];
            for k in (col + 1)..n {
                acc -= lu[[col, k]] * x[[k, c]];
            }
            x[[col, c]] = acc / d;
        }
    }
    Ok(x)
}

/// Matrix exponential of a square complex matrix by degree-13 Padé
/// approximation with scaling and squaring.
pub fn expm(a: &Array2<C64>) -> Result<Array2<C64>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    // 1-norm for the scaling decision.
    let norm1 = (0..n)
        .map(|j| (0..n).map(|i| a[[i, j]].norm()).sum::<f64>())
        .fold(0.0_f64, f64::max);
    let theta13 = 5.371920351148152;
    let mut s = 0u32;
    if norm1 > theta13 {
        s = (norm1 / theta13).log2().ceil() as u32;
    }
    let scale = C64::new(0.5f64.powi(s as i32), 0.0);
    let a1 = a.mapv(|z| z * scale);

    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    let eye = Array2::<C64>::eye(n);
    let a2 = a1.dot(&a1);
    let a4 = a2.dot(&a2);
    let a6 = a2.dot(&a4);
    let u_inner = &a6 * C64::from(B[13]) + &a4 * C64::from(B[11]) + &a2 * C64::from(B[9]);
    let u = a1.dot(&(a6.dot(&u_inner) + &a6 * C64::from(B[7]) + &a4 * C64::from(B[5]) + &a2 * C64::from(B[3]) + &eye * C64::from(B[1])));
    let v_inner = &a6 * C64::from(B[12]) + &a4 * C64::from(B[10]) + &a2 * C64::from(B[8]);
    let v = a6.dot(&v_inner) + &a6 * C64::from(B[6]) + &a4 * C64::from(B[4]) + &a2 * C64::from(B[2]) + &eye * C64::from(B[0]);

    let lhs = &v - &u;
    let rhs = &v + &u;
    let mut f = solve(&lhs, &rhs)?;
    for _ in 0..s {
        f = f.dot(&f);
    }
    Ok(f)
}

fn c_axpy(y: &mut [C64], a: C64, x: &[C64]) {
    for (yi, xi) in y.iter_mut().zip(x.iter()) {
        *yi += a * *xi;
    }
}

fn c_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn c_dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * *y).sum()
}

/// Tridiagonal Krylov matrix from Lanczos coefficients, exponentiated with
/// the given scalar factor; returns the first column.
fn krylov_first_column(alphas: &[f64], betas: &[f64], factor: C64) -> Result<Vec<C64>> {
    let m = alphas.len();
    let mut t = Array2::<C64>::zeros((m, m));
    for i in 0..m {
        t[[i, i]] = factor * C64::from(alphas[i]);
        if i + 1 < m {
            t[[i, i + 1]] = factor * C64::from(betas[i]);
            t[[i + 1, i]] = factor * C64::from(betas[i]);
        }
    }
    let e = expm(&t)?;
    Ok((0..m).map(|i| e[[i, 0]]).collect())
}

/// Computes `exp(factor·H)·v` for a Hermitian operator given through its
/// action `apply(x, y)` (writes `H x` into `y`), using a Lanczos subspace
/// grown until the standard a-posteriori error estimate drops below
/// `tol·‖v‖`. The Krylov basis is kept in memory.
pub fn lanczos_expv<F>(apply: &F, v: &[C64], factor: C64, tol: f64, m_max: usize) -> Result<Vec<C64>>
where
    F: Fn(&[C64], &mut [C64]) + ?Sized,
{
    let beta0 = c_norm(v);
    if beta0 == 0.0 {
        return Ok(vec![C64::new(0.0, 0.0); v.len()]);
    }
    let dim = v.len();
    let mut basis: Vec<Vec<C64>> = Vec::with_capacity(m_max + 1);
    basis.push(v.iter().map(|z| z / beta0).collect());
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut w = vec![C64::new(0.0, 0.0); dim];
    let mut coeffs: Vec<C64> = Vec::new();
    let breakdown = 1e-14 * beta0.max(1.0);
    for j in 0..m_max {
        apply(&basis[j], &mut w);
        let alpha = c_dot(&basis[j], &w).re;
        alphas.push(alpha);
        c_axpy(&mut w, C64::from(-alpha), &basis[j]);
        if j > 0 {
            c_axpy(&mut w, C64::from(-betas[j - 1]), &basis[j - 1]);
        }
        let beta = c_norm(&w);
        coeffs = krylov_first_column(&alphas, &betas, factor)?;
        let err = beta * coeffs[j].norm();
        if err <= tol || beta < breakdown {
            break;
        }
        betas.push(beta);
        basis.push(w.iter().map(|z| z / beta).collect());
    }
    let mut out = vec![C64::new(0.0, 0.0); dim];
    for (c, b) in coeffs.iter().zip(basis.iter()) {
        c_axpy(&mut out, C64::from(beta0) * *c, b);
    }
    if out.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("lanczos_expv".into()));
    }
    Ok(out)
}

/// Memory-lean variant of [`lanczos_expv`] that regenerates the Krylov
/// basis in a second pass instead of storing it; keeps three work vectors.
pub fn lanczos_expv_two_pass<F>(
    apply: &F,
    v: &[C64],
    factor: C64,
    tol: f64,
    m_max: usize,
) -> Result<Vec<C64>>
where
    F: Fn(&[C64], &mut [C64]) + ?Sized,
{
    let beta0 = c_norm(v);
    if beta0 == 0.0 {
        return Ok(vec![C64::new(0.0, 0.0); v.len()]);
    }
    let dim = v.len();
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let breakdown = 1e-14 * beta0.max(1.0);

    // Pass 1: coefficients only.
    let mut prev = vec![C64::new(0.0, 0.0); dim];
    let mut cur: Vec<C64> = v.iter().map(|z| z / beta0).collect();
    let mut w = vec![C64::new(0.0, 0.0); dim];
    let mut coeffs: Vec<C64> = Vec::new();
    for j in 0..m_max {
        apply(&cur, &mut w);
        let alpha = c_dot(&cur, &w).re;
        alphas.push(alpha);
        c_axpy(&mut w, C64::from(-alpha), &cur);
        if j > 0 {
            c_axpy(&mut w, C64::from(-betas[j - 1]), &prev);
        }
        let beta = c_norm(&w);
        coeffs = krylov_first_column(&alphas, &betas, factor)?;
        let err = beta * coeffs[j].norm();
        if err <= tol || beta < breakdown {
            break;
        }
        betas.push(beta);
        std::mem::swap(&mut prev, &mut cur);
        for (c, wi) in cur.iter_mut().zip(w.iter()) {
            *c = wi / beta;
        }
    }

    // Pass 2: regenerate the identical basis and accumulate.
    let m = coeffs.len();
    let mut out = vec![C64::new(0.0, 0.0); dim];
    prev.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
    for (c, vi) in cur.iter_mut().zip(v.iter()) {
        *c = vi / beta0;
    }
    for j in 0..m {
        c_axpy(&mut out, C64::from(beta0) * coeffs[j], &cur);
        if j + 1 == m {
            break;
        }
        apply(&cur, &mut w);
        c_axpy(&mut w, C64::from(-alphas[j]), &cur);
        if j > 0 {
            c_axpy(&mut w, C64::from(-betas[j - 1]), &prev);
        }
        std::mem::swap(&mut prev, &mut cur);
        for (c, wi) in cur.iter_mut().zip(w.iter()) {
            *c = wi / betas[j];
        }
    }
    if out.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("lanczos_expv_two_pass".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::random_c64_matrix;

    fn max_abs(a: &Array2<C64>) -> f64 {
        a.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn qr_reconstructs_and_is_unitary() {
        for (m, n, seed) in [(5, 3, 1u64), (3, 5, 2), (4, 4, 3), (6, 2, 4)] {
            let a = random_c64_matrix(m, n, seed);
            let (q, r) = qr_thin(&a);
            let qr = q.dot(&r);
            assert!(max_abs(&(&qr - &a)) < 1e-12, "qr reconstruction ({m},{n})");
            let qtq = q.t().mapv(|z| z.conj()).dot(&q);
            let eye = Array2::<C64>::eye(q.ncols());
            assert!(max_abs(&(&qtq - &eye)) < 1e-12, "q orthonormal ({m},{n})");
        }
    }

    #[test]
    fn svd_reconstructs() {
        for (m, n, seed) in [(6, 4, 11u64), (4, 6, 12), (5, 5, 13)] {
            let a = random_c64_matrix(m, n, seed);
            let (u, s, v) = svd(&a);
            let k = m.min(n);
            let mut us = u.clone();
            for j in 0..k {
                for i in 0..m {
                    us[[i, j]] *= C64::from(s[j]);
                }
            }
            let rec = us.dot(&v.t().mapv(|z| z.conj()));
            assert!(max_abs(&(&rec - &a)) < 1e-11, "svd reconstruction ({m},{n})");
            for j in 1..k {
                assert!(s[j] <= s[j - 1] + 1e-14, "singular values sorted");
            }
        }
    }

    #[test]
    fn expm_matches_rotation() {
        // exp(i θ σ_x) = cos θ · I + i sin θ · σ_x
        let theta = 0.7;
        let mut a = Array2::<C64>::zeros((2, 2));
        a[[0, 1]] = C64::new(0.0, theta);
        a[[1, 0]] = C64::new(0.0, theta);
        let e = expm(&a).unwrap();
        assert!((e[[0, 0]] - C64::from(theta.cos())).norm() < 1e-14);
        assert!((e[[0, 1]] - C64::new(0.0, theta.sin())).norm() < 1e-14);
    }

    #[test]
    fn expm_large_norm_scaling() {
        let mut a = Array2::<C64>::zeros((2, 2));
        a[[0, 1]] = C64::new(0.0, 40.0);
        a[[1, 0]] = C64::new(0.0, 40.0);
        let e = expm(&a).unwrap();
        assert!((e[[0, 0]] - C64::from(40.0f64.cos())).norm() < 1e-11);
    }

    #[test]
    fn lanczos_matches_dense_expm() {
        let n = 12;
        let raw = random_c64_matrix(n, n, 21);
        let h = &raw + &raw.t().mapv(|z| z.conj()); // Hermitian
        let v = random_c64_matrix(n, 1, 22).column(0).to_vec();
        let factor = C64::new(0.0, -0.37);
        let apply = |x: &[C64], y: &mut [C64]| {
            for i in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                for j in 0..n {
                    acc += h[[i, j]] * x[j];
                }
                y[i] = acc;
            }
        };
        let got = lanczos_expv(&apply, &v, factor, 1e-12, 40).unwrap();
        let got2 = lanczos_expv_two_pass(&apply, &v, factor, 1e-12, 40).unwrap();
        let e = expm(&h.mapv(|z| z * factor)).unwrap();
        for i in 0..n {
            let mut want = C64::new(0.0, 0.0);
            for j in 0..n {
                want += e[[i, j]] * v[j];
            }
            assert!((got[i] - want).norm() < 1e-10);
            assert!((got2[i] - want).norm() < 1e-10);
        }
    }

    #[test]
    fn solve_roundtrip() {
        let a = random_c64_matrix(7, 7, 31);
        let b = random_c64_matrix(7, 2, 32);
        let x = solve(&a, &b).unwrap();
        let ax = a.dot(&x);
        assert!(max_abs(&(&ax - &b)) < 1e-11);
    }
}
