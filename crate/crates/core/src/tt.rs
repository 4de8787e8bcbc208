//! Tensor-train vectors and operators over the electronic ⊗ double-nuclear
//! Hilbert space: construction, element access, arithmetic, inner products,
//! operator application, and SVD-based rounding.
//!
//! A vector core has shape (r_{i−1}, n_i, r_i) with r_0 = r_d = 1; an
//! operator core has shape (R_{i−1}, n_i, n_i, R_i). Dense reconstructions
//! order the mode indices with the first core slowest, matching the layout
//! of the dense backend.

use crate::linalg::{qr_thin, svd};
use crate::{C64, Error, Result};
use ndarray::{Array1, Array2, Array3, Array4};

/// Tensor-train (matrix product state) vector.
#[derive(Clone, Debug)]
pub struct TtVector {
    pub(crate) cores: Vec<Array3<C64>>,
}

/// Tensor-train (matrix product operator) with equal row and column mode
/// dimensions.
#[derive(Clone, Debug)]
pub struct TtOperator {
    pub(crate) cores: Vec<Array4<C64>>,
}

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

impl TtVector {
    pub fn from_cores(cores: Vec<Array3<C64>>) -> Result<Self> {
        if cores.is_empty() {
            return Err(Error::DimensionMismatch("empty tensor train".into()));
        }
        if cores[0].dim().0 != 1 || cores[cores.len() - 1].dim().2 != 1 {
            return Err(Error::DimensionMismatch("boundary ranks must be 1".into()));
        }
        for w in cores.windows(2) {
            if w[0].dim().2 != w[1].dim().0 {
                return Err(Error::DimensionMismatch(format!(
                    "adjacent ranks disagree: {} vs {}",
                    w[0].dim().2,
                    w[1].dim().0
                )));
            }
        }
        Ok(Self { cores })
    }

    /// Rank-1 product state from per-mode vectors.
    pub fn from_product(vectors: &[Array1<C64>]) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::DimensionMismatch("from_product: no factors".into()));
        }
        let mut cores = Vec::with_capacity(vectors.len());
        for v in vectors {
            if v.is_empty() || v.iter().all(|z| z.norm_sqr() == 0.0) {
                return Err(Error::DimensionMismatch(
                    "from_product: zero or empty factor".into(),
                ));
            }
            let n = v.len();
            let mut core = Array3::<C64>::zeros((1, n, 1));
            for (i, &z) in v.iter().enumerate() {
                core[[0, i, 0]] = z;
            }
            cores.push(core);
        }
        Ok(Self { cores })
    }

    pub fn len(&self) -> usize {
        self.cores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cores.is_empty()
    }

    pub fn core(&self, i: usize) -> &Array3<C64> {
        &self.cores[i]
    }

    pub(crate) fn set_core(&mut self, i: usize, core: Array3<C64>) {
        self.cores[i] = core;
    }

    pub fn mode_dims(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.dim().1).collect()
    }

    /// Bond ranks (r_0, …, r_d), boundaries included.
    pub fn ranks(&self) -> Vec<usize> {
        let mut r: Vec<usize> = self.cores.iter().map(|c| c.dim().0).collect();
        r.push(1);
        r
    }

    /// Element at a full multi-index, by multiplying core slices.
    pub fn element(&self, idx: &[usize]) -> C64 {
        assert_eq!(idx.len(), self.cores.len());
        let mut row: Vec<C64> = vec![C64::new(1.0, 0.0)];
        for (core, &j) in self.cores.iter().zip(idx) {
            let (rl, _, rr) = core.dim();
            let mut next = vec![zero(); rr];
            for b in 0..rr {
                let mut acc = zero();
                for a in 0..rl {
                    acc += row[a] * core[[a, j, b]];
                }
                next[b] = acc;
            }
            row = next;
        }
        row[0]
    }

    /// Dense reconstruction with the first mode slowest.
    pub fn to_dense(&self) -> Array1<C64> {
        // acc has shape (prod_of_modes_so_far, r_i)
        let mut acc = Array2::<C64>::ones((1, 1));
        for core in &self.cores {
            let (rl, n, rr) = core.dim();
            let rows = acc.nrows();
            let mut next = Array2::<C64>::zeros((rows * n, rr));
            for p in 0..rows {
                for j in 0..n {
                    for b in 0..rr {
                        let mut s = zero();
                        for a in 0..rl {
                            s += acc[[p, a]] * core[[a, j, b]];
                        }
                        next[[p * n + j, b]] = s;
                    }
                }
            }
            acc = next;
        }
        Array1::from_iter(acc.column(0).iter().cloned())
    }

    /// Inner product ⟨self|other⟩ with conjugation on `self`.
    pub fn inner(&self, other: &TtVector) -> Result<C64> {
        if self.mode_dims() != other.mode_dims() {
            return Err(Error::DimensionMismatch("inner: mode dims differ".into()));
        }
        // m[a_bra, a_ket], contracted left to right.
        let mut m = Array2::<C64>::ones((1, 1));
        for (bra, ket) in self.cores.iter().zip(&other.cores) {
            let (bl, n, br) = bra.dim();
            let (kl, _, kr) = ket.dim();
            // t[a_bra, j, b_ket] = Σ_{a_ket} m[a_bra, a_ket]·ket[a_ket, j, b_ket]
            let ket_mat = ket.view().into_shape_with_order((kl, n * kr)).unwrap();
            let t = m.dot(&ket_mat); // (bl_old, n·kr) with bl_old == bra left rank
            // m'[b_bra, b_ket] = Σ_{a_bra, j} conj(bra[a_bra, j, b_bra])·t[a_bra, j, b_ket]
            let t = t.into_shape_with_order((bl * n, kr)).unwrap();
            let bra_mat = bra.view().into_shape_with_order((bl * n, br)).unwrap();
            m = bra_mat.mapv(|z| z.conj()).t().dot(&t);
        }
        Ok(m[[0, 0]])
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).map(|z| z.re.max(0.0).sqrt()).unwrap_or(0.0)
    }

    /// Exact TT sum; ranks add.
    pub fn add(&self, other: &TtVector) -> Result<TtVector> {
        if self.mode_dims() != other.mode_dims() {
            return Err(Error::DimensionMismatch("add: mode dims differ".into()));
        }
        let d = self.cores.len();
        if d == 1 {
            return TtVector::from_cores(vec![&self.cores[0] + &other.cores[0]]);
        }
        let mut cores = Vec::with_capacity(d);
        for i in 0..d {
            let a = &self.cores[i];
            let b = &other.cores[i];
            let (al, n, ar) = a.dim();
            let (bl, _, br) = b.dim();
            let core = if i == 0 {
                let mut c = Array3::<C64>::zeros((1, n, ar + br));
                for j in 0..n {
                    for r in 0..ar {
                        c[[0, j, r]] = a[[0, j, r]];
                    }
                    for r in 0..br {
                        c[[0, j, ar + r]] = b[[0, j, r]];
                    }
                }
                c
            } else if i == d - 1 {
                let mut c = Array3::<C64>::zeros((al + bl, n, 1));
                for j in 0..n {
                    for l in 0..al {
                        c[[l, j, 0]] = a[[l, j, 0]];
                    }
                    for l in 0..bl {
                        c[[al + l, j, 0]] = b[[l, j, 0]];
                    }
                }
                c
            } else {
                let mut c = Array3::<C64>::zeros((al + bl, n, ar + br));
                for j in 0..n {
                    for l in 0..al {
                        for r in 0..ar {
                            c[[l, j, r]] = a[[l, j, r]];
                        }
                    }
                    for l in 0..bl {
                        for r in 0..br {
                            c[[al + l, j, ar + r]] = b[[l, j, r]];
                        }
                    }
                }
                c
            };
            cores.push(core);
        }
        TtVector::from_cores(cores)
    }

    pub fn scale(&self, s: C64) -> TtVector {
        let mut cores = self.cores.clone();
        cores[0].mapv_inplace(|z| z * s);
        TtVector { cores }
    }

    /// Apply a one-site operator to the given core; rank preserving.
    pub fn apply_one_site(&self, site: usize, op: &Array2<C64>) -> Result<TtVector> {
        let (rl, n, rr) = self.cores[site].dim();
        if op.dim() != (n, n) {
            return Err(Error::DimensionMismatch(format!(
                "apply_one_site: operator {:?} vs mode dim {n}",
                op.dim()
            )));
        }
        let mut cores = self.cores.clone();
        let mut new_core = Array3::<C64>::zeros((rl, n, rr));
        for a in 0..rl {
            for b in 0..rr {
                for m in 0..n {
                    let mut acc = zero();
                    for j in 0..n {
                        acc += op[[m, j]] * self.cores[site][[a, j, b]];
                    }
                    new_core[[a, m, b]] = acc;
                }
            }
        }
        cores[site] = new_core;
        Ok(TtVector { cores })
    }

    /// Right-to-left orthogonalization by QR; afterwards every core except
    /// the first has orthonormal rows in its (left | mode·right) unfolding,
    /// and the squared norm is carried entirely by the first core.
    pub fn right_canonicalize(&mut self) {
        let d = self.cores.len();
        for i in (1..d).rev() {
            let (rl, n, rr) = self.cores[i].dim();
            let mat = self.cores[i]
                .view()
                .into_shape_with_order((rl, n * rr))
                .unwrap()
                .to_owned();
            // mat = s·q with q rows orthonormal: QR of matᴴ.
            let mat_h = mat.t().mapv(|z| z.conj());
            let (qh, rh) = qr_thin(&mat_h);
            let q = qh.t().mapv(|z| z.conj()); // (k, n·rr), orthonormal rows
            let q = q.as_standard_layout().to_owned();
            let s = rh.t().mapv(|z| z.conj()); // (rl, k)
            let k = q.nrows();
            self.cores[i] = q.into_shape_with_order((k, n, rr)).unwrap();
            // Absorb s into the left neighbor.
            let (pl, pn, _) = self.cores[i - 1].dim();
            let prev = self.cores[i - 1]
                .view()
                .into_shape_with_order((pl * pn, rl))
                .unwrap()
                .to_owned();
            self.cores[i - 1] = prev.dot(&s).into_shape_with_order((pl, pn, k)).unwrap();
        }
    }

    /// SVD rounding with relative tolerance `tol` and an optional rank cap.
    ///
    /// The per-bond truncation budget is tol·‖v‖/√(d−1), so the dense
    /// reconstruction error stays below tol·‖v‖·√(d−1) overall. Cores come
    /// out left-orthogonalized, the last carrying the norm.
    pub fn round(&self, tol: f64, max_rank: Option<usize>) -> TtVector {
        let mut out = self.clone();
        let d = out.cores.len();
        if d == 1 {
            return out;
        }
        out.right_canonicalize();
        let norm = out.cores[0].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let delta = if d > 1 {
            tol * norm / ((d - 1) as f64).sqrt()
        } else {
            0.0
        };
        for i in 0..d - 1 {
            let (rl, n, rr) = out.cores[i].dim();
            let mat = out.cores[i]
                .view()
                .into_shape_with_order((rl * n, rr))
                .unwrap()
                .to_owned();
            let (u, s, v) = svd(&mat);
            let full = s.len();
            let mut keep = full;
            let mut tail = 0.0;
            while keep > 1 {
                let next_tail = tail + s[keep - 1] * s[keep - 1];
                if next_tail.sqrt() <= delta {
                    tail = next_tail;
                    keep -= 1;
                } else {
                    break;
                }
            }
            if let Some(cap) = max_rank {
                keep = keep.min(cap.max(1));
            }
            let mut u_k = Array2::<C64>::zeros((rl * n, keep));
            for c in 0..keep {
                for r in 0..rl * n {
                    u_k[[r, c]] = u[[r, c]];
                }
            }
            out.cores[i] = u_k.into_shape_with_order((rl, n, keep)).unwrap();
            // carry = diag(s)·v† restricted to the kept block
            let (nl, nn, nr) = out.cores[i + 1].dim();
            let mut carry = Array2::<C64>::zeros((keep, rr));
            for r in 0..keep {
                for c in 0..rr {
                    carry[[r, c]] = C64::from(s[r]) * v[[c, r]].conj();
                }
            }
            let next = out.cores[i + 1]
                .view()
                .into_shape_with_order((nl, nn * nr))
                .unwrap()
                .to_owned();
            out.cores[i + 1] = carry
                .dot(&next)
                .into_shape_with_order((keep, nn, nr))
                .unwrap();
        }
        out
    }
}

impl TtOperator {
    pub fn from_cores(cores: Vec<Array4<C64>>) -> Result<Self> {
        if cores.is_empty() {
            return Err(Error::DimensionMismatch("empty tensor-train operator".into()));
        }
        if cores[0].dim().0 != 1 || cores[cores.len() - 1].dim().3 != 1 {
            return Err(Error::DimensionMismatch("boundary ranks must be 1".into()));
        }
        for w in cores.windows(2) {
            if w[0].dim().3 != w[1].dim().0 {
                return Err(Error::DimensionMismatch("adjacent operator ranks disagree".into()));
            }
        }
        Ok(Self { cores })
    }

    pub fn identity(mode_dims: &[usize]) -> Self {
        let cores = mode_dims
            .iter()
            .map(|&n| {
                let mut c = Array4::<C64>::zeros((1, n, n, 1));
                for j in 0..n {
                    c[[0, j, j, 0]] = C64::new(1.0, 0.0);
                }
                c
            })
            .collect();
        Self { cores }
    }

    pub fn len(&self) -> usize {
        self.cores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cores.is_empty()
    }

    pub fn core(&self, i: usize) -> &Array4<C64> {
        &self.cores[i]
    }

    pub fn mode_dims(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.dim().1).collect()
    }

    pub fn ranks(&self) -> Vec<usize> {
        let mut r: Vec<usize> = self.cores.iter().map(|c| c.dim().0).collect();
        r.push(1);
        r
    }

    /// Exact operator action; output ranks are products of the inputs'.
    pub fn apply(&self, v: &TtVector) -> Result<TtVector> {
        if self.mode_dims() != v.mode_dims() {
            return Err(Error::DimensionMismatch("apply: mode dims differ".into()));
        }
        let mut cores = Vec::with_capacity(v.cores.len());
        for (w, x) in self.cores.iter().zip(&v.cores) {
            let (wl, m, n, wr) = w.dim();
            let (xl, _, xr) = x.dim();
            let mut c = Array3::<C64>::zeros((wl * xl, m, wr * xr));
            for a in 0..wl {
                for l in 0..xl {
                    for mm in 0..m {
                        for b in 0..wr {
                            for r in 0..xr {
                                let mut acc = zero();
                                for j in 0..n {
                                    acc += w[[a, mm, j, b]] * x[[l, j, r]];
                                }
                                c[[a * xl + l, mm, b * xr + r]] = acc;
                            }
                        }
                    }
                }
            }
            cores.push(c);
        }
        TtVector::from_cores(cores)
    }

    /// Dense matrix reconstruction, first mode slowest on rows and columns.
    pub fn to_dense(&self) -> Array2<C64> {
        // acc[row, col, a] over the running bond index a.
        let mut acc: Vec<Vec<Vec<C64>>> = vec![vec![vec![C64::new(1.0, 0.0)]]];
        let mut rows = 1usize;
        let mut cols = 1usize;
        for w in &self.cores {
            let (wl, m, n, wr) = w.dim();
            let mut next = vec![vec![vec![zero(); wr]; cols * n]; rows * m];
            for i in 0..rows {
                for j in 0..cols {
                    for mi in 0..m {
                        for nj in 0..n {
                            for b in 0..wr {
                                let mut acc_v = zero();
                                for a in 0..wl {
                                    acc_v += acc[i][j][a] * w[[a, mi, nj, b]];
                                }
                                next[i * m + mi][j * n + nj][b] = acc_v;
                            }
                        }
                    }
                }
            }
            acc = next;
            rows *= m;
            cols *= n;
        }
        Array2::from_shape_fn((rows, cols), |(i, j)| acc[i][j][0])
    }
}
