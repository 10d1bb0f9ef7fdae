//! Three-way tensors in dense and tensor-train (TT) form.
//!
//! A TT tensor stores `X(i₁, i₂, i₃) = G₁[i₁] · G₂[i₂] · G₃[i₃]` where core
//! `Gₖ` has shape `(rₖ₋₁, nₖ, rₖ)` and the boundary ranks `r₀ = r₃ = 1`.
//!
//! Storage is column-major throughout. Dense element `(i, j, k)` lives at
//! `i + n₁·(j + n₂·k)`, so the dense buffer is also the mode-1 unfolding and
//! each frontal slice (one image) is a contiguous `n₁ × n₂` block. Core
//! element `(a, i, b)` lives at `a + rₖ₋₁·(i + nₖ·b)`, which makes the left
//! unfolding `(rₖ₋₁·nₖ) × rₖ` and the right unfolding `rₖ₋₁ × (nₖ·rₖ)` plain
//! reinterpretations of one buffer.

use nalgebra::{DMatrix, DMatrixView};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense `n_fr × n_fc × n` array of `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseTensor3 {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl DenseTensor3 {
    pub fn zeros(dims: [usize; 3]) -> Result<Self> {
        check_dims(dims)?;
        Ok(Self {
            dims,
            data: vec![0.0; dims.iter().product()],
        })
    }

    pub fn from_vec(dims: [usize; 3], data: Vec<f64>) -> Result<Self> {
        check_dims(dims)?;
        let expected: usize = dims.iter().product();
        if data.len() != expected {
            return Err(Error::shape(format!(
                "{} elements supplied for dims {:?} ({} expected)",
                data.len(),
                dims,
                expected
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        check_dims(dims)?;
        let mut data = Vec::with_capacity(dims.iter().product());
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    data.push(f(i, j, k));
                }
            }
        }
        Ok(Self { dims, data })
    }

    /// Builds a tensor whose `k`-th frontal slice is `slices[k]`.
    pub fn from_slices(slices: &[DMatrix<f64>]) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::invalid("cannot stack an empty list of slices"))?;
        let (rows, cols) = first.shape();
        let mut data = Vec::with_capacity(rows * cols * slices.len());
        for (k, s) in slices.iter().enumerate() {
            if s.shape() != (rows, cols) {
                return Err(Error::shape(format!(
                    "slice {k} has shape {:?}, expected {:?}",
                    s.shape(),
                    (rows, cols)
                )));
            }
            data.extend_from_slice(s.as_slice());
        }
        Self::from_vec([rows, cols, slices.len()], data)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.offset(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f64) {
        let o = self.offset(i, j, k);
        self.data[o] = value;
    }

    /// Frontal slice `k` as an `n_fr × n_fc` matrix.
    pub fn slice(&self, k: usize) -> DMatrix<f64> {
        let m = self.dims[0] * self.dims[1];
        DMatrix::from_column_slice(self.dims[0], self.dims[1], &self.data[k * m..(k + 1) * m])
    }

    pub fn slices(&self) -> Vec<DMatrix<f64>> {
        (0..self.dims[2]).map(|k| self.slice(k)).collect()
    }

    /// The mode-1 unfolding `n_fr × (n_fc·n)`.
    pub fn mode1_unfolding(&self) -> DMatrixView<'_, f64> {
        DMatrixView::from_slice(&self.data, self.dims[0], self.dims[1] * self.dims[2])
    }

    /// Selects frontal slices by index, in the given order.
    pub fn select_slices(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::invalid("no slices selected"));
        }
        let m = self.dims[0] * self.dims[1];
        let mut data = Vec::with_capacity(m * indices.len());
        for &k in indices {
            if k >= self.dims[2] {
                return Err(Error::invalid(format!("slice {k} out of range")));
            }
            data.extend_from_slice(&self.data[k * m..(k + 1) * m]);
        }
        Self::from_vec([self.dims[0], self.dims[1], indices.len()], data)
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.check_same_dims(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            dims: self.dims,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_dims(other)?;
        Ok(Self {
            dims: self.dims,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|x| c * x)
    }

    /// `result[i,:,:] = Σ_p K[i,p]·self[p,:,:]`.
    pub fn mode1_product(&self, k: &DMatrix<f64>) -> Result<Self> {
        if k.ncols() != self.dims[0] {
            return Err(Error::shape(format!(
                "mode-1 product: operator has {} columns, tensor has {} rows",
                k.ncols(),
                self.dims[0]
            )));
        }
        let out = k * self.mode1_unfolding();
        Self::from_vec([k.nrows(), self.dims[1], self.dims[2]], out.as_slice().to_vec())
    }

    fn check_same_dims(&self, other: &Self) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::shape(format!("dims {:?} vs {:?}", self.dims, other.dims)));
        }
        Ok(())
    }
}

fn check_dims(dims: [usize; 3]) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::invalid(format!("tensor dims must be positive, got {dims:?}")));
    }
    Ok(())
}

/// Relative tolerance and rank cap for TT-SVD and TT rounding.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoundingRequest {
    pub tolerance: f64,
    pub max_rank: usize,
}

impl RoundingRequest {
    pub fn new(tolerance: f64, max_rank: usize) -> Result<Self> {
        let req = Self { tolerance, max_rank };
        req.validate()?;
        Ok(req)
    }

    /// Machine-precision tolerance with no effective rank cap.
    pub fn exact() -> Self {
        Self {
            tolerance: 1e-14,
            max_rank: usize::MAX,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tolerance.is_nan() || self.tolerance < 0.0 {
            return Err(Error::invalid(format!(
                "tolerance must be >= 0, got {}",
                self.tolerance
            )));
        }
        if self.max_rank == 0 {
            return Err(Error::invalid("max_rank must be >= 1"));
        }
        Ok(())
    }
}

/// One TT core of shape `(r_left, n, r_right)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TtCore {
    r_left: usize,
    n: usize,
    r_right: usize,
    data: Vec<f64>,
}

impl TtCore {
    pub fn new(r_left: usize, n: usize, r_right: usize, data: Vec<f64>) -> Result<Self> {
        if r_left == 0 || n == 0 || r_right == 0 {
            return Err(Error::invalid("core dimensions must be positive"));
        }
        if data.len() != r_left * n * r_right {
            return Err(Error::shape(format!(
                "core ({r_left}, {n}, {r_right}) needs {} entries, got {}",
                r_left * n * r_right,
                data.len()
            )));
        }
        Ok(Self {
            r_left,
            n,
            r_right,
            data,
        })
    }

    fn from_left(r_left: usize, n: usize, m: &DMatrix<f64>) -> Self {
        debug_assert_eq!(m.nrows(), r_left * n);
        Self {
            r_left,
            n,
            r_right: m.ncols(),
            data: m.as_slice().to_vec(),
        }
    }

    fn from_right(n: usize, r_right: usize, m: &DMatrix<f64>) -> Self {
        debug_assert_eq!(m.ncols(), n * r_right);
        Self {
            r_left: m.nrows(),
            n,
            r_right,
            data: m.as_slice().to_vec(),
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.r_left, self.n, self.r_right)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, a: usize, i: usize, b: usize) -> f64 {
        self.data[a + self.r_left * (i + self.n * b)]
    }

    fn left(&self) -> DMatrixView<'_, f64> {
        DMatrixView::from_slice(&self.data, self.r_left * self.n, self.r_right)
    }

    fn right(&self) -> DMatrixView<'_, f64> {
        DMatrixView::from_slice(&self.data, self.r_left, self.n * self.r_right)
    }

    /// The `r_left × r_right` matrix `G[:, i, :]`.
    fn matrix_at(&self, i: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.r_left, self.r_right, |a, b| self.get(a, i, b))
    }
}

/// Tensor-train representation of a three-way tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TtTensor {
    cores: [TtCore; 3],
}

impl TtTensor {
    pub fn from_cores(cores: [TtCore; 3]) -> Result<Self> {
        if cores[0].r_left != 1 || cores[2].r_right != 1 {
            return Err(Error::invalid("boundary TT ranks must be 1"));
        }
        for k in 0..2 {
            if cores[k].r_right != cores[k + 1].r_left {
                return Err(Error::shape(format!(
                    "core {k} right rank {} does not match core {} left rank {}",
                    cores[k].r_right,
                    k + 1,
                    cores[k + 1].r_left
                )));
            }
        }
        Ok(Self { cores })
    }

    pub fn zeros(dims: [usize; 3]) -> Result<Self> {
        check_dims(dims)?;
        Ok(Self {
            cores: dims.map(|n| TtCore {
                r_left: 1,
                n,
                r_right: 1,
                data: vec![0.0; n],
            }),
        })
    }

    /// The rank-1 tensor with every entry equal to one.
    pub fn ones(dims: [usize; 3]) -> Result<Self> {
        check_dims(dims)?;
        Ok(Self {
            cores: dims.map(|n| TtCore {
                r_left: 1,
                n,
                r_right: 1,
                data: vec![1.0; n],
            }),
        })
    }

    pub fn cores(&self) -> &[TtCore; 3] {
        &self.cores
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.cores[0].n, self.cores[1].n, self.cores[2].n]
    }

    /// Full rank vector `(1, r₁, r₂, 1)`.
    pub fn rank_vector(&self) -> [usize; 4] {
        [1, self.cores[0].r_right, self.cores[1].r_right, 1]
    }

    /// Interior ranks `(r₁, r₂)`.
    pub fn ranks(&self) -> [usize; 2] {
        [self.cores[0].r_right, self.cores[1].r_right]
    }

    /// The largest interior rank; this is the per-layer "width" recorded in
    /// rank profiles and the quantity a scalar rank cap bounds.
    pub fn max_rank(&self) -> usize {
        self.ranks().into_iter().max().unwrap_or(1)
    }
}

/// Thin SVD with singular values sorted in decreasing order and a fixed sign
/// convention: the largest-magnitude entry of every left singular vector is
/// positive (first such entry on ties).
pub(crate) struct SortedSvd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub vt: DMatrix<f64>,
}

pub(crate) fn sorted_svd(m: &DMatrix<f64>) -> SortedSvd {
    let (u, s, vt) = raw_svd(m);
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| {
        s[b].partial_cmp(&s[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let k = order.len();
    let mut u_sorted = DMatrix::zeros(u.nrows(), k);
    let mut vt_sorted = DMatrix::zeros(k, vt.ncols());
    let mut s_sorted = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        let col = u.column(src);
        let mut pivot = 0;
        for i in 1..col.len() {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        u_sorted.set_column(dst, &(col * sign));
        vt_sorted.set_row(dst, &(vt.row(src) * sign));
        s_sorted.push(s[src]);
    }
    SortedSvd {
        u: u_sorted,
        s: s_sorted,
        vt: vt_sorted,
    }
}

/// Thin SVD from faer. nalgebra's bidiagonal SVD loses up to 1e-3 relative
/// accuracy on wide matrices with a tiny noise floor, which breaks the
/// rounding bound at small tolerances; it is kept only as a fallback.
fn raw_svd(m: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let a = faer::Mat::<f64>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
    match a.thin_svd() {
        Ok(svd) => {
            let (u, v) = (svd.U(), svd.V());
            let s = svd.S().column_vector();
            (
                DMatrix::from_fn(u.nrows(), u.ncols(), |i, j| u[(i, j)]),
                (0..s.nrows()).map(|i| s[i]).collect(),
                DMatrix::from_fn(v.ncols(), v.nrows(), |i, j| v[(j, i)]),
            )
        }
        Err(_) => {
            let svd = m.clone().svd(true, true);
            (
                svd.u.expect("U requested"),
                svd.singular_values.iter().copied().collect(),
                svd.v_t.expect("V^T requested"),
            )
        }
    }
}

/// Smallest rank `r ≥ 1` whose discarded tail `sqrt(Σ_{k≥r} s_k²)` is at most
/// `delta`, clipped to `max_rank`.
pub(crate) fn select_rank(s: &[f64], delta: f64, max_rank: usize) -> usize {
    let mut tail = 0.0;
    let mut r = s.len();
    while r > 1 {
        let next = tail + s[r - 1] * s[r - 1];
        if next.sqrt() > delta {
            break;
        }
        tail = next;
        r -= 1;
    }
    r.clamp(1, max_rank.max(1))
}

fn per_unfolding_threshold(tolerance: f64, norm: f64) -> f64 {
    // The total error budget is split evenly over the d-1 = 2 unfoldings.
    let delta = tolerance / std::f64::consts::SQRT_2 * norm;
    if delta.is_nan() {
        f64::INFINITY
    } else {
        delta
    }
}

/// Truncates `svd` to rank `r`, returning `(U_r, diag(s_r)·Vᵀ_r)`.
fn split_svd(svd: &SortedSvd, r: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let u = svd.u.columns(0, r).into_owned();
    let mut sv = svd.vt.rows(0, r).into_owned();
    for (i, mut row) in sv.row_iter_mut().enumerate() {
        row *= svd.s[i];
    }
    (u, sv)
}

/// TT-SVD: sequential truncated SVDs of the left unfoldings.
pub fn tt_from_dense(t: &DenseTensor3, req: RoundingRequest) -> Result<TtTensor> {
    req.validate()?;
    let [n1, n2, n3] = t.dims();
    let norm = t.norm();
    if norm == 0.0 {
        return TtTensor::zeros(t.dims());
    }
    let delta = per_unfolding_threshold(req.tolerance, norm);

    let a1 = DMatrix::from_column_slice(n1, n2 * n3, t.as_slice());
    let svd1 = sorted_svd(&a1);
    let r1 = select_rank(&svd1.s, delta, req.max_rank);
    let (u1, rest) = split_svd(&svd1, r1);

    // rest is r1 × (n2·n3); reinterpreted column-major it is (r1·n2) × n3.
    let a2 = DMatrix::from_column_slice(r1 * n2, n3, rest.as_slice());
    let svd2 = sorted_svd(&a2);
    let r2 = select_rank(&svd2.s, delta, req.max_rank);
    let (u2, last) = split_svd(&svd2, r2);

    TtTensor::from_cores([
        TtCore::from_left(1, n1, &u1),
        TtCore::from_left(r1, n2, &u2),
        TtCore::from_right(n3, 1, &last),
    ])
}

/// Exact contraction of the cores.
pub fn tt_to_dense(t: &TtTensor) -> DenseTensor3 {
    let [c1, c2, c3] = &t.cores;
    let [n1, n2, n3] = t.dims();
    let first = c1.left().into_owned(); // n1 × r1
    let ab = &first * c2.right(); // n1 × (n2·r2)
    let ab = DMatrix::from_column_slice(n1 * n2, c2.r_right, ab.as_slice());
    let full = ab * c3.right(); // (n1·n2) × n3
    DenseTensor3::from_vec([n1, n2, n3], full.as_slice().to_vec()).expect("consistent core shapes")
}

/// TT rounding: right-to-left orthogonalisation, then left-to-right
/// truncated SVDs. Interior ranks never increase.
pub fn tt_round(t: &TtTensor, req: RoundingRequest) -> Result<TtTensor> {
    req.validate()?;
    let [n1, n2, n3] = t.dims();
    let [c1, c2, c3] = t.cores.clone();

    // Right-orthogonalise core 3 and core 2.
    let (q3, r3) = lq(&c3.right().into_owned());
    let c2_left = c2.left() * r3; // (r1·n2) × r2'
    let c2 = TtCore::from_left(c2.r_left, n2, &c2_left);
    let c3 = TtCore::from_right(n3, 1, &q3);

    let (q2, r2) = lq(&c2.right().into_owned());
    let c1_left = c1.left() * r2; // n1 × r1'
    let c2 = TtCore::from_right(n2, c2.r_right, &q2);

    let norm = c1_left.norm();
    if norm == 0.0 {
        return TtTensor::zeros(t.dims());
    }
    let delta = per_unfolding_threshold(req.tolerance, norm);

    let svd1 = sorted_svd(&c1_left);
    let rank1 = select_rank(&svd1.s, delta, req.max_rank);
    let (u1, sv1) = split_svd(&svd1, rank1);
    let c2_right = sv1 * c2.right(); // rank1 × (n2·r2)
    let c2 = TtCore::from_right(n2, c2.r_right, &c2_right);

    let svd2 = sorted_svd(&c2.left().into_owned());
    let rank2 = select_rank(&svd2.s, delta, req.max_rank);
    let (u2, sv2) = split_svd(&svd2, rank2);
    let c3_right = sv2 * c3.right();

    TtTensor::from_cores([
        TtCore::from_left(1, n1, &u1),
        TtCore::from_left(rank1, n2, &u2),
        TtCore::from_right(n3, 1, &c3_right),
    ])
}

/// `M = L·Q` with orthonormal rows in `Q`, computed from the QR factorisation
/// of `Mᵀ`. Returns `(Q, L)`.
fn lq(m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let qr = m.transpose().qr();
    (qr.q().transpose(), qr.r().transpose())
}

fn check_same_dims(a: &TtTensor, b: &TtTensor) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::invalid(format!("TT dims {:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

/// Exact sum by block-diagonal core concatenation; interior ranks add.
pub fn tt_add(a: &TtTensor, b: &TtTensor) -> Result<TtTensor> {
    check_same_dims(a, b)?;
    let mut cores = Vec::with_capacity(3);
    for k in 0..3 {
        let (ca, cb) = (&a.cores[k], &b.cores[k]);
        let n = ca.n;
        let rl = if k == 0 { 1 } else { ca.r_left + cb.r_left };
        let rr = if k == 2 { 1 } else { ca.r_right + cb.r_right };
        let mut data = vec![0.0; rl * n * rr];
        // Offsets of b's block inside the combined core.
        let (la, lb) = if k == 0 { (0, 0) } else { (0, ca.r_left) };
        let (ra, rb) = if k == 2 { (0, 0) } else { (0, ca.r_right) };
        for i in 0..n {
            for bb in 0..ca.r_right {
                for aa in 0..ca.r_left {
                    data[(aa + la) + rl * (i + n * (bb + ra))] = ca.get(aa, i, bb);
                }
            }
            for bb in 0..cb.r_right {
                for aa in 0..cb.r_left {
                    data[(aa + lb) + rl * (i + n * (bb + rb))] = cb.get(aa, i, bb);
                }
            }
        }
        cores.push(TtCore {
            r_left: rl,
            n,
            r_right: rr,
            data,
        });
    }
    let cores: [TtCore; 3] = cores.try_into().expect("three cores");
    TtTensor::from_cores(cores)
}

pub fn tt_scale(a: &TtTensor, c: f64) -> TtTensor {
    let mut out = a.clone();
    out.cores[0].data.iter_mut().for_each(|x| *x *= c);
    out
}

/// Mode-1 product with an `m × n_fr` matrix; only the first core changes.
pub fn tt_mode1_matmul(k: &DMatrix<f64>, a: &TtTensor) -> Result<TtTensor> {
    let n1 = a.dims()[0];
    if k.ncols() != n1 {
        return Err(Error::invalid(format!(
            "mode-1 product: operator has {} columns, tensor has {} rows",
            k.ncols(),
            n1
        )));
    }
    let first = k * a.cores[0].left();
    let mut out = a.clone();
    out.cores[0] = TtCore::from_left(1, k.nrows(), &first);
    Ok(out)
}

/// Adds `b` to every entry.
pub fn tt_add_scalar(a: &TtTensor, b: f64) -> Result<TtTensor> {
    if b == 0.0 {
        return Ok(a.clone());
    }
    tt_add(a, &tt_scale(&TtTensor::ones(a.dims())?, b))
}

/// Frobenius inner product by left-to-right contraction.
pub fn tt_inner(a: &TtTensor, b: &TtTensor) -> Result<f64> {
    check_same_dims(a, b)?;
    let mut w = DMatrix::from_element(1, 1, 1.0);
    for k in 0..3 {
        let (ca, cb) = (&a.cores[k], &b.cores[k]);
        let mut next = DMatrix::zeros(ca.r_right, cb.r_right);
        for i in 0..ca.n {
            next += ca.matrix_at(i).transpose() * &w * cb.matrix_at(i);
        }
        w = next;
    }
    Ok(w[(0, 0)])
}

pub fn tt_norm(a: &TtTensor) -> f64 {
    tt_inner(a, a).map(|v| v.max(0.0).sqrt()).unwrap_or(0.0)
}

/// Bytes occupied by the cores, `Σ rₖ₋₁·nₖ·rₖ · bytes_per_element`.
pub fn tt_storage_bytes(a: &TtTensor, bytes_per_element: usize) -> usize {
    a.cores.iter().map(|c| c.data.len()).sum::<usize>() * bytes_per_element
}

pub fn tt_rank(a: &TtTensor) -> [usize; 2] {
    a.ranks()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dense(dims: [usize; 3], seed: u64) -> DenseTensor3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseTensor3::from_fn(dims, |_, _, _| rng.random_range(-1.0..1.0)).unwrap()
    }

    fn rel_err(a: &DenseTensor3, b: &DenseTensor3) -> f64 {
        a.sub(b).unwrap().norm() / a.norm()
    }

    fn outer(a: &[f64], b: &[f64], c: &[f64]) -> DenseTensor3 {
        DenseTensor3::from_fn([a.len(), b.len(), c.len()], |i, j, k| a[i] * b[j] * c[k]).unwrap()
    }

    /// Rank of a matrix from an independent SVD, counting singular values
    /// above a relative threshold.
    fn numerical_rank(m: &DMatrix<f64>) -> usize {
        let s = m.clone().singular_values();
        let top = s.max();
        s.iter().filter(|&&x| x > 1e-12 * top).count()
    }

    #[test]
    fn zero_tensor_has_unit_ranks() {
        let t = DenseTensor3::zeros([4, 4, 4]).unwrap();
        let tt = tt_from_dense(&t, RoundingRequest::exact()).unwrap();
        assert_eq!(tt.ranks(), [1, 1]);
        assert!(tt.cores().iter().all(|c| c.as_slice().iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn outer_product_is_rank_one() {
        let t = outer(&[1.0, -2.0, 0.5], &[0.3, 0.7, 1.1, -0.4], &[2.0, 1.0]);
        let tt = tt_from_dense(&t, RoundingRequest::new(1e-12, 42).unwrap()).unwrap();
        assert_eq!(tt.ranks(), [1, 1]);
        assert!(rel_err(&t, &tt_to_dense(&tt)) < 1e-10);
    }

    #[test]
    fn random_round_trip_at_machine_tolerance() {
        let t = random_dense([5, 6, 7], 1);
        let tt = tt_from_dense(&t, RoundingRequest::new(1e-14, 42).unwrap()).unwrap();
        assert!(rel_err(&t, &tt_to_dense(&tt)) <= 1e-12);
    }

    #[test]
    fn zero_dims_rejected() {
        assert!(DenseTensor3::zeros([0, 3, 3]).is_err());
        assert!(TtTensor::zeros([3, 0, 3]).is_err());
    }

    #[test]
    fn ones_tt_densifies_to_ones() {
        let d = tt_to_dense(&TtTensor::ones([3, 2, 4]).unwrap());
        assert!(d.as_slice().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn round_leaves_rank_one_unchanged() {
        let t = outer(&[1.0, 2.0], &[3.0, -1.0, 0.5], &[0.2, 0.4, 0.6, 0.8]);
        let tt = tt_from_dense(&t, RoundingRequest::exact()).unwrap();
        for eps in [0.0, 0.1, 0.5] {
            let r = tt_round(&tt, RoundingRequest::new(eps, 10).unwrap()).unwrap();
            assert_eq!(r.ranks(), [1, 1]);
            assert!(rel_err(&t, &tt_to_dense(&r)) < 1e-12);
        }
    }

    #[test]
    fn round_meets_tolerance_against_dense() {
        let t = random_dense([8, 8, 8], 2);
        let tt = tt_from_dense(&t, RoundingRequest::exact()).unwrap();
        let r = tt_round(&tt, RoundingRequest::new(0.1, usize::MAX).unwrap()).unwrap();
        assert!(rel_err(&t, &tt_to_dense(&r)) <= 0.1);
        assert!(r.ranks()[0] <= tt.ranks()[0] && r.ranks()[1] <= tt.ranks()[1]);
    }

    #[test]
    fn rank_one_cap_matches_sequential_svd_oracle() {
        let t = random_dense([5, 4, 6], 3);
        let tt = tt_from_dense(&t, RoundingRequest::exact()).unwrap();
        let r = tt_round(&tt, RoundingRequest::new(0.0, 1).unwrap()).unwrap();
        assert_eq!(r.ranks(), [1, 1]);

        // Oracle: best rank-1 of the mode-1 unfolding, then best rank-1 of
        // the remainder reshaped over (n2, n3).
        let a1 = DMatrix::from_column_slice(5, 24, t.as_slice());
        let svd = a1.clone().svd(true, true);
        let i = svd.singular_values.imax();
        let u = svd.u.as_ref().unwrap().column(i).into_owned();
        let rest = u.transpose() * &a1; // 1 × 24
        let a2 = DMatrix::from_column_slice(4, 6, rest.as_slice());
        let svd2 = a2.svd(true, true);
        let j = svd2.singular_values.imax();
        let approx2 = svd2.u.as_ref().unwrap().column(j) * svd2.singular_values[j] * svd2.v_t.as_ref().unwrap().row(j);
        let oracle = DenseTensor3::from_fn([5, 4, 6], |a, b, c| u[a] * approx2[(b, c)]).unwrap();
        let err_tt = t.sub(&tt_to_dense(&r)).unwrap().norm();
        let err_oracle = t.sub(&oracle).unwrap().norm();
        assert!((err_tt - err_oracle).abs() < 1e-10, "{err_tt} vs {err_oracle}");
    }

    #[test]
    fn add_matches_dense_sum() {
        let a = random_dense([4, 4, 4], 4);
        let b = random_dense([4, 4, 4], 5);
        let ta = tt_from_dense(&a, RoundingRequest::exact()).unwrap();
        let tb = tt_from_dense(&b, RoundingRequest::exact()).unwrap();
        let s = tt_add(&ta, &tb).unwrap();
        assert_eq!(
            s.ranks(),
            [ta.ranks()[0] + tb.ranks()[0], ta.ranks()[1] + tb.ranks()[1]]
        );
        let expected = a.add(&b).unwrap();
        assert!(expected.sub(&tt_to_dense(&s)).unwrap().norm() < 1e-12);

        let zero = TtTensor::zeros([4, 4, 4]).unwrap();
        assert!(a.sub(&tt_to_dense(&tt_add(&ta, &zero).unwrap())).unwrap().norm() < 1e-12);
        let cancel = tt_to_dense(&tt_add(&ta, &tt_scale(&ta, -1.0)).unwrap());
        assert!(cancel.as_slice().iter().all(|x| x.abs() < 1e-12));
        assert!(tt_add(&ta, &TtTensor::zeros([4, 4, 3]).unwrap()).is_err());
    }

    #[test]
    fn scale_matches_dense() {
        let a = random_dense([3, 5, 4], 6);
        let ta = tt_from_dense(&a, RoundingRequest::exact()).unwrap();
        assert!(a.sub(&tt_to_dense(&tt_scale(&ta, 1.0))).unwrap().norm() < 1e-12);
        assert!(tt_to_dense(&tt_scale(&ta, 0.0)).norm() == 0.0);
        let s = tt_scale(&ta, -2.5);
        assert_eq!(s.ranks(), ta.ranks());
        assert!(a.scale(-2.5).sub(&tt_to_dense(&s)).unwrap().norm() < 1e-12);
    }

    #[test]
    fn mode1_matches_dense_product() {
        let a = random_dense([4, 3, 5], 7);
        let ta = tt_from_dense(&a, RoundingRequest::exact()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let k = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
        let got = tt_to_dense(&tt_mode1_matmul(&k, &ta).unwrap());
        let want =
            DenseTensor3::from_fn([4, 3, 5], |i, j, l| (0..4).map(|p| k[(i, p)] * a.get(p, j, l)).sum()).unwrap();
        assert!(want.sub(&got).unwrap().norm() < 1e-12);

        let id = tt_to_dense(&tt_mode1_matmul(&DMatrix::identity(4, 4), &ta).unwrap());
        assert!(a.sub(&id).unwrap().norm() < 1e-12);
        assert_eq!(
            tt_to_dense(&tt_mode1_matmul(&DMatrix::zeros(4, 4), &ta).unwrap()).norm(),
            0.0
        );
        assert!(tt_mode1_matmul(&DMatrix::zeros(4, 3), &ta).is_err());
    }

    #[test]
    fn add_scalar_matches_dense() {
        let a = random_dense([3, 4, 2], 9);
        let ta = tt_from_dense(&a, RoundingRequest::exact()).unwrap();
        assert!(a.sub(&tt_to_dense(&tt_add_scalar(&ta, 0.0).unwrap())).unwrap().norm() < 1e-12);
        let shifted = tt_to_dense(&tt_add_scalar(&ta, 0.7).unwrap());
        assert!(a.map(|x| x + 0.7).sub(&shifted).unwrap().norm() < 1e-12);
        let threes = tt_to_dense(&tt_add_scalar(&TtTensor::zeros([2, 2, 2]).unwrap(), 3.0).unwrap());
        assert!(threes.as_slice().iter().all(|&x| (x - 3.0).abs() < 1e-15));
    }

    #[test]
    fn inner_and_norm_match_dense() {
        let ones = TtTensor::ones([2, 2, 2]).unwrap();
        assert_eq!(tt_inner(&ones, &ones).unwrap(), 8.0);
        assert!((tt_norm(&ones) - 8f64.sqrt()).abs() < 1e-15);
        assert_eq!(tt_norm(&TtTensor::zeros([3, 3, 3]).unwrap()), 0.0);
        assert_eq!(tt_inner(&ones, &TtTensor::zeros([2, 2, 2]).unwrap()).unwrap(), 0.0);

        let a = random_dense([4, 5, 3], 10);
        let b = random_dense([4, 5, 3], 11);
        let ta = tt_from_dense(&a, RoundingRequest::exact()).unwrap();
        let tb = tt_from_dense(&b, RoundingRequest::exact()).unwrap();
        let want = a.dot(&b).unwrap();
        assert!((tt_inner(&ta, &tb).unwrap() - want).abs() <= 1e-10 * want.abs().max(1.0));
        assert!((tt_norm(&ta) - a.norm()).abs() <= 1e-10 * a.norm());
    }

    #[test]
    fn storage_accounting() {
        let tt = TtTensor::ones([28, 28, 20]).unwrap();
        assert_eq!(tt_storage_bytes(&tt, 8), 608);
        assert_eq!(28 * 28 * 20 * 8, 125_440);

        let t = random_dense([6, 6, 6], 12);
        let tt = tt_from_dense(&t, RoundingRequest::new(0.6, usize::MAX).unwrap()).unwrap();
        assert!(tt.ranks()[0] < 6 && tt.ranks()[1] < 6);
        assert!(tt_storage_bytes(&tt, 8) < t.len() * 8);
    }

    #[test]
    fn ranks_match_unfolding_ranks() {
        let t = random_dense([6, 6, 6], 13);
        let tt = tt_from_dense(&t, RoundingRequest::new(1e-14, usize::MAX).unwrap()).unwrap();
        let a1 = DMatrix::from_column_slice(6, 36, t.as_slice());
        let a2 = DMatrix::from_column_slice(36, 6, t.as_slice());
        assert_eq!(tt_rank(&tt), [numerical_rank(&a1), numerical_rank(&a2)]);

        let capped = tt_round(&tt, RoundingRequest::new(0.0, 3).unwrap()).unwrap();
        assert!(tt_rank(&capped).iter().all(|&r| r <= 3));

        // A low-rank tensor: sum of two outer products.
        let p = outer(&[1.0, 0.0, 2.0, 1.0], &[1.0, 1.0, 0.0], &[0.5, 1.0]);
        let q = outer(&[0.0, 1.0, -1.0, 3.0], &[2.0, -1.0, 1.0], &[1.0, -0.5]);
        let sum = p.add(&q).unwrap();
        let tt = tt_from_dense(&sum, RoundingRequest::exact()).unwrap();
        assert_eq!(tt_rank(&tt), [2, 2]);
    }

    #[test]
    fn svd_signs_are_canonical() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -3.0, 0.5, 0.2, -1.0]);
        let svd = sorted_svd(&m);
        for j in 0..svd.s.len() {
            let col = svd.u.column(j);
            let pivot = col
                .iter()
                .cloned()
                .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
            assert!(pivot > 0.0);
        }
        assert!(svd.s.windows(2).all(|w| w[0] >= w[1]));
        let recon = &svd.u * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(svd.s.clone())) * &svd.vt;
        assert!((recon - m).norm() < 1e-12);
    }

    #[test]
    fn select_rank_respects_cap_and_tail() {
        let s = [4.0, 3.0, 0.1, 0.01];
        assert_eq!(select_rank(&s, 0.2, 10), 2);
        assert_eq!(select_rank(&s, 0.0, 10), 4);
        assert_eq!(select_rank(&s, 0.0, 1), 1);
        assert_eq!(select_rank(&s, 100.0, 10), 1);
        assert_eq!(select_rank(&s, f64::INFINITY, 10), 1);
    }
}
