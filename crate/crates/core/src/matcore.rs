//! Dense complex matrix kernel: Hermitian matrices, tensor products, partial
//! traces, eigenvalue bounds and PSD tests.
//!
//! Everything here is sized for desk-scale problems (dimensions well below
//! ~200), so all algorithms are dense. An exact-rational mirror of the small
//! set of operations needed by the bundled generators lives in [`RatMatrix`].

use nalgebra::DMatrix;
use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Zero};
use thiserror::Error;

/// Complex scalar used throughout the crate.
pub type C64 = num::complex::Complex<f64>;

/// Maximum tolerated asymmetry when constructing a [`HermitianMatrix`].
pub const HERMITIAN_ASYM_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MatError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix asymmetry {asym:.3e} exceeds Hermitian tolerance {tol:.3e}")]
    NotHermitian { asym: f64, tol: f64 },
    #[error("dimension mismatch: product of factors {product} != matrix dimension {dim}")]
    DimMismatch { product: usize, dim: usize },
    #[error("keep-set is empty or references factor {index} out of {count}")]
    BadKeepSet { index: usize, count: usize },
    #[error("non-finite entry at ({row},{col})")]
    NonFinite { row: usize, col: usize },
}

/// Dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        CMatrix { rows, cols, data: vec![C64::new(0.0, 0.0); rows * cols] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = CMatrix::zeros(dim, dim);
        for i in 0..dim {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = CMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Build from row-major complex entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Self {
        assert_eq!(data.len(), rows * cols, "entry count must be rows*cols");
        CMatrix { rows, cols, data }
    }

    /// Build from row-major `[re, im]` pairs.
    pub fn from_pairs(rows: usize, cols: usize, pairs: &[(f64, f64)]) -> Self {
        let data = pairs.iter().map(|&(re, im)| C64::new(re, im)).collect();
        CMatrix::from_vec(rows, cols, data)
    }

    /// Real diagonal matrix.
    pub fn diag(entries: &[f64]) -> Self {
        let mut m = CMatrix::zeros(entries.len(), entries.len());
        for (i, &e) in entries.iter().enumerate() {
            m[(i, i)] = C64::new(e, 0.0);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[C64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn transpose(&self) -> CMatrix {
        CMatrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> CMatrix {
        CMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z.conj()).collect() }
    }

    pub fn adjoint(&self) -> CMatrix {
        CMatrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, s: C64) -> CMatrix {
        CMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn add(&self, other: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn matmul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, other.rows, "inner dimensions must agree");
        let mut out = CMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn trace(&self) -> C64 {
        assert_eq!(self.rows, self.cols);
        (0..self.rows).map(|i| self[(i, i)]).sum()
    }

    /// Largest entrywise modulus.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entrywise modulus of the difference.
    pub fn max_abs_diff(&self, other: &CMatrix) -> f64 {
        self.sub(other).max_abs()
    }

    /// Deviation from the conjugate transpose.
    pub fn asymmetry(&self) -> f64 {
        self.max_abs_diff(&self.adjoint())
    }
}

impl std::ops::Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Standard Kronecker product.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac, br, bc) = (a.rows, a.cols, b.rows, b.cols);
    let mut out = CMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let v = a[(i, j)];
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = v * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Kronecker product of a sequence of factors, left to right.
pub fn kron_all(factors: &[&CMatrix]) -> CMatrix {
    assert!(!factors.is_empty());
    let mut acc = factors[0].clone();
    for f in &factors[1..] {
        acc = kron(&acc, f);
    }
    acc
}

/// Local dimensions of a tensor-product space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DimVector {
    factors: Vec<usize>,
}

impl DimVector {
    pub fn new(factors: Vec<usize>) -> Self {
        assert!(!factors.is_empty() && factors.iter().all(|&d| d > 0));
        DimVector { factors }
    }

    pub fn factors(&self) -> &[usize] {
        &self.factors
    }

    pub fn product(&self) -> usize {
        self.factors.iter().product()
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }
}

fn combine_index(dims: &[usize], keep: &[usize], kept_idx: usize, traced: &[usize], traced_idx: usize) -> usize {
    // Decompose kept_idx/traced_idx into per-factor digits, then flatten.
    let mut digits = vec![0usize; dims.len()];
    let mut rem = kept_idx;
    for &f in keep.iter().rev() {
        digits[f] = rem % dims[f];
        rem /= dims[f];
    }
    let mut rem = traced_idx;
    for &f in traced.iter().rev() {
        digits[f] = rem % dims[f];
        rem /= dims[f];
    }
    let mut flat = 0usize;
    for (f, &d) in dims.iter().enumerate() {
        flat = flat * d + digits[f];
    }
    flat
}

/// Partial trace of a square matrix over all factors *not* in `keep`.
///
/// `keep` holds 0-based factor indices; the surviving factors retain their
/// original relative order. Tracing over nothing is the identity operation.
pub fn partial_trace(m: &CMatrix, dims: &DimVector, keep: &[usize]) -> Result<CMatrix, MatError> {
    if m.rows != m.cols {
        return Err(MatError::NotSquare { rows: m.rows, cols: m.cols });
    }
    if dims.product() != m.rows {
        return Err(MatError::DimMismatch { product: dims.product(), dim: m.rows });
    }
    if keep.is_empty() {
        return Err(MatError::BadKeepSet { index: 0, count: dims.len() });
    }
    for &k in keep {
        if k >= dims.len() {
            return Err(MatError::BadKeepSet { index: k, count: dims.len() });
        }
    }
    let mut keep_sorted: Vec<usize> = keep.to_vec();
    keep_sorted.sort_unstable();
    keep_sorted.dedup();
    let traced: Vec<usize> = (0..dims.len()).filter(|f| !keep_sorted.contains(f)).collect();
    let dk: usize = keep_sorted.iter().map(|&f| dims.factors()[f]).product();
    let dt: usize = traced.iter().map(|&f| dims.factors()[f]).product();

    let mut out = CMatrix::zeros(dk, dk);
    for r in 0..dk {
        for c in 0..dk {
            let mut acc = C64::new(0.0, 0.0);
            for e in 0..dt {
                let row = combine_index(dims.factors(), &keep_sorted, r, &traced, e);
                let col = combine_index(dims.factors(), &keep_sorted, c, &traced, e);
                acc += m[(row, col)];
            }
            out[(r, c)] = acc;
        }
    }
    Ok(out)
}

/// A square matrix certified Hermitian at construction.
///
/// Construction symmetrises via `(M + M†)/2` and rejects inputs whose
/// asymmetry exceeds [`HERMITIAN_ASYM_TOL`].
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    dim: usize,
    mat: CMatrix,
}

impl HermitianMatrix {
    pub fn new(m: CMatrix) -> Result<Self, MatError> {
        if m.rows != m.cols {
            return Err(MatError::NotSquare { rows: m.rows, cols: m.cols });
        }
        for i in 0..m.rows {
            for j in 0..m.cols {
                let z = m[(i, j)];
                if !z.re.is_finite() || !z.im.is_finite() {
                    return Err(MatError::NonFinite { row: i, col: j });
                }
            }
        }
        let asym = m.asymmetry();
        if asym > HERMITIAN_ASYM_TOL {
            return Err(MatError::NotHermitian { asym, tol: HERMITIAN_ASYM_TOL });
        }
        let sym = m.add(&m.adjoint()).scale(C64::new(0.5, 0.0));
        Ok(HermitianMatrix { dim: sym.rows, mat: sym })
    }

    /// Symmetrise without an asymmetry bound. For internal sums whose
    /// asymmetry is pure round-off by construction.
    pub fn symmetrize(m: CMatrix) -> Result<Self, MatError> {
        if m.rows != m.cols {
            return Err(MatError::NotSquare { rows: m.rows, cols: m.cols });
        }
        let sym = m.add(&m.adjoint()).scale(C64::new(0.5, 0.0));
        Ok(HermitianMatrix { dim: sym.rows, mat: sym })
    }

    pub fn zeros(dim: usize) -> Self {
        HermitianMatrix { dim, mat: CMatrix::zeros(dim, dim) }
    }

    pub fn identity(dim: usize) -> Self {
        HermitianMatrix { dim, mat: CMatrix::identity(dim) }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> CMatrix {
        self.mat
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace().re
    }

    pub fn scale(&self, s: f64) -> HermitianMatrix {
        HermitianMatrix { dim: self.dim, mat: self.mat.scale(C64::new(s, 0.0)) }
    }

    pub fn add(&self, other: &HermitianMatrix) -> HermitianMatrix {
        HermitianMatrix { dim: self.dim, mat: self.mat.add(&other.mat) }
    }

    pub fn sub(&self, other: &HermitianMatrix) -> HermitianMatrix {
        HermitianMatrix { dim: self.dim, mat: self.mat.sub(&other.mat) }
    }
}

/// Real-symmetric embedding `[[Re H, -Im H], [Im H, Re H]]` of a complex
/// square matrix. Doubles every eigenvalue's multiplicity for Hermitian input.
pub fn real_embedding(m: &CMatrix) -> DMatrix<f64> {
    let d = m.rows();
    assert_eq!(m.rows(), m.cols());
    let mut out = DMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        for j in 0..d {
            let z = m[(i, j)];
            out[(i, j)] = z.re;
            out[(i, j + d)] = -z.im;
            out[(i + d, j)] = z.im;
            out[(i + d, j + d)] = z.re;
        }
    }
    out
}

/// All eigenvalues of a Hermitian matrix, ascending, to ~1e-10 absolute.
///
/// Computed on the real-symmetric embedding; the doubled multiplicities are
/// collapsed back by taking every other value of the sorted 2d-spectrum.
pub fn eigenvalues(h: &HermitianMatrix) -> Vec<f64> {
    let emb = real_embedding(h.matrix());
    let mut eigs: Vec<f64> = emb.symmetric_eigenvalues().iter().copied().collect();
    eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    eigs.into_iter().step_by(2).collect()
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(h: &HermitianMatrix) -> f64 {
    *eigenvalues(h).first().expect("nonempty spectrum")
}

/// Smallest eigenvalue of the symmetrised part of an arbitrary square matrix.
pub fn min_eigenvalue_raw(m: &CMatrix) -> f64 {
    let h = HermitianMatrix::symmetrize(m.clone()).expect("square");
    min_eigenvalue(&h)
}

/// PSD test: true iff the smallest eigenvalue is `>= -tol`.
pub fn is_psd(h: &HermitianMatrix, tol: f64) -> bool {
    assert!(tol >= 0.0, "tolerance must be nonnegative");
    min_eigenvalue(h) >= -tol
}

// ---------------------------------------------------------------------------
// Exact rational arithmetic
// ---------------------------------------------------------------------------

/// Complex number with exact rational components.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CRational {
    pub re: BigRational,
    pub im: BigRational,
}

impl CRational {
    pub fn zero() -> Self {
        CRational { re: BigRational::zero(), im: BigRational::zero() }
    }

    pub fn one() -> Self {
        CRational { re: BigRational::one(), im: BigRational::zero() }
    }

    pub fn from_i64(re_num: i64, re_den: i64, im_num: i64, im_den: i64) -> Self {
        CRational {
            re: BigRational::new(BigInt::from(re_num), BigInt::from(re_den)),
            im: BigRational::new(BigInt::from(im_num), BigInt::from(im_den)),
        }
    }

    pub fn real_i64(num: i64, den: i64) -> Self {
        Self::from_i64(num, den, 0, 1)
    }

    pub fn conj(&self) -> Self {
        CRational { re: self.re.clone(), im: -self.im.clone() }
    }

    pub fn add(&self, o: &Self) -> Self {
        CRational { re: &self.re + &o.re, im: &self.im + &o.im }
    }

    pub fn sub(&self, o: &Self) -> Self {
        CRational { re: &self.re - &o.re, im: &self.im - &o.im }
    }

    pub fn mul(&self, o: &Self) -> Self {
        CRational {
            re: &self.re * &o.re - &self.im * &o.im,
            im: &self.re * &o.im + &self.im * &o.re,
        }
    }

    pub fn div_rational(&self, d: &BigRational) -> Self {
        CRational { re: &self.re / d, im: &self.im / d }
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn to_c64(&self) -> C64 {
        C64::new(rational_to_f64(&self.re), rational_to_f64(&self.im))
    }
}

/// Nearest-f64 conversion of a big rational.
pub fn rational_to_f64(r: &BigRational) -> f64 {
    // Scale so the integer division keeps ~19 significant digits.
    use num::ToPrimitive;
    if r.is_zero() {
        return 0.0;
    }
    if let (Some(n), Some(d)) = (r.numer().to_f64(), r.denom().to_f64()) {
        if n.is_finite() && d.is_finite() && d != 0.0 {
            return n / d;
        }
    }
    let scale = BigInt::from(10u8).pow(19);
    let scaled = (r.numer() * &scale) / r.denom();
    scaled.to_f64().unwrap_or(f64::NAN) / 1e19
}

/// Dense matrix over exact complex rationals. Mirrors the handful of
/// [`CMatrix`] operations the generators need for bit-exact fixtures.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatMatrix {
    rows: usize,
    cols: usize,
    data: Vec<CRational>,
}

impl RatMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RatMatrix { rows, cols, data: vec![CRational::zero(); rows * cols] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = RatMatrix::zeros(dim, dim);
        for i in 0..dim {
            m[(i, i)] = CRational::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<CRational>) -> Self {
        assert_eq!(data.len(), rows * cols);
        RatMatrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[CRational] {
        &self.data
    }

    pub fn adjoint(&self) -> RatMatrix {
        let mut out = RatMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn transpose(&self) -> RatMatrix {
        let mut out = RatMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)].clone();
            }
        }
        out
    }

    pub fn add(&self, o: &RatMatrix) -> RatMatrix {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols));
        RatMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&o.data).map(|(a, b)| a.add(b)).collect(),
        }
    }

    pub fn sub(&self, o: &RatMatrix) -> RatMatrix {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols));
        RatMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&o.data).map(|(a, b)| a.sub(b)).collect(),
        }
    }

    pub fn scale(&self, s: &CRational) -> RatMatrix {
        RatMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.mul(s)).collect(),
        }
    }

    pub fn matmul(&self, o: &RatMatrix) -> RatMatrix {
        assert_eq!(self.cols, o.rows);
        let mut out = RatMatrix::zeros(self.rows, o.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = &self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                for j in 0..o.cols {
                    let prod = a.mul(&o[(k, j)]);
                    out[(i, j)] = out[(i, j)].add(&prod);
                }
            }
        }
        out
    }

    pub fn trace(&self) -> CRational {
        assert_eq!(self.rows, self.cols);
        let mut acc = CRational::zero();
        for i in 0..self.rows {
            acc = acc.add(&self[(i, i)]);
        }
        acc
    }

    pub fn kron(&self, o: &RatMatrix) -> RatMatrix {
        let mut out = RatMatrix::zeros(self.rows * o.rows, self.cols * o.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let v = &self[(i, j)];
                if v.is_zero() {
                    continue;
                }
                for k in 0..o.rows {
                    for l in 0..o.cols {
                        out[(i * o.rows + k, j * o.cols + l)] = v.mul(&o[(k, l)]);
                    }
                }
            }
        }
        out
    }

    pub fn partial_trace(&self, dims: &DimVector, keep: &[usize]) -> RatMatrix {
        assert_eq!(self.rows, self.cols);
        assert_eq!(dims.product(), self.rows);
        let mut keep_sorted: Vec<usize> = keep.to_vec();
        keep_sorted.sort_unstable();
        keep_sorted.dedup();
        let traced: Vec<usize> = (0..dims.len()).filter(|f| !keep_sorted.contains(f)).collect();
        let dk: usize = keep_sorted.iter().map(|&f| dims.factors()[f]).product();
        let dt: usize = traced.iter().map(|&f| dims.factors()[f]).product();
        let mut out = RatMatrix::zeros(dk, dk);
        for r in 0..dk {
            for c in 0..dk {
                let mut acc = CRational::zero();
                for e in 0..dt {
                    let row = combine_index(dims.factors(), &keep_sorted, r, &traced, e);
                    let col = combine_index(dims.factors(), &keep_sorted, c, &traced, e);
                    acc = acc.add(&self[(row, col)]);
                }
                out[(r, c)] = acc;
            }
        }
        out
    }

    pub fn to_cmatrix(&self) -> CMatrix {
        CMatrix::from_vec(self.rows, self.cols, self.data.iter().map(|z| z.to_c64()).collect())
    }
}

impl std::ops::Index<(usize, usize)> for RatMatrix {
    type Output = CRational;
    fn index(&self, (i, j): (usize, usize)) -> &CRational {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for RatMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut CRational {
        &mut self.data[i * self.cols + j]
    }
}

/// Parse an exact rational from "p/q" or integer "p" form.
pub fn parse_rational(s: &str) -> Option<BigRational> {
    let s = s.trim();
    if let Some((p, q)) = s.split_once('/') {
        let num: BigInt = p.trim().parse().ok()?;
        let den: BigInt = q.trim().parse().ok()?;
        if den.is_zero() {
            return None;
        }
        Some(BigRational::new(num, den))
    } else {
        let num: BigInt = s.parse().ok()?;
        Some(BigRational::from_integer(num))
    }
}

/// Render an exact rational in "p/q" form (or "p" when integral).
pub fn format_rational(r: &BigRational) -> String {
    if r.denom().is_one() {
        format!("{}", r.numer())
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}
