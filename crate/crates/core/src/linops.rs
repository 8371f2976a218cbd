//! Dense complex matrices, superoperators and the metrics built on them.
//!
//! Everything here is sized for few-level systems: a qubit density matrix is
//! 2×2 and its superoperators are 4×4, so storage is inline up to 16 entries.
//! Superoperators act on column-stacked matrices, `vec(ρ)[i + j·d] = ρ[i, j]`,
//! which turns `ρ ↦ AρB` into `Bᵀ ⊗ A`.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use nalgebra::DMatrix;
use num_complex::Complex64;
use smallvec::SmallVec;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

const HERMITIAN_TOL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-10;
const POSITIVITY_TOL: f64 = -1e-8;

/// Square complex matrix stored row-major.
#[derive(Clone, PartialEq)]
pub struct CMat {
    dim: usize,
    data: SmallVec<[C64; 16]>,
}

impl CMat {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: SmallVec::from_elem(ZERO, dim * dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = SmallVec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self { dim, data }
    }

    /// Builds a matrix from row-major entries; the length must be a square.
    pub fn from_row_major(entries: &[C64]) -> Result<Self> {
        let dim = (entries.len() as f64).sqrt().round() as usize;
        if dim * dim != entries.len() || dim == 0 {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: entries.len(),
            });
        }
        Ok(Self {
            dim,
            data: SmallVec::from_slice(entries),
        })
    }

    /// 2×2 matrix `[[a, b], [c, d]]`.
    pub fn qubit(a: C64, b: C64, c: C64, d: C64) -> Self {
        Self {
            dim: 2,
            data: SmallVec::from_slice(&[a, b, c, d]),
        }
    }

    pub fn diag(entries: &[C64]) -> Self {
        let mut m = Self::zeros(entries.len());
        for (i, &e) in entries.iter().enumerate() {
            m[(i, i)] = e;
        }
        m
    }

    /// `|psi⟩⟨psi|` for an (unnormalized) vector.
    pub fn outer(psi: &[C64]) -> Self {
        Self::from_fn(psi.len(), |i, j| psi[i] * psi[j].conj())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)])
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&x| x * s).collect(),
        }
    }

    pub fn scale_re(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&x| x * s).collect(),
        }
    }

    /// `self += s * other`
    pub fn add_scaled(&mut self, s: C64, other: &CMat) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, &b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += s * b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Largest entrywise modulus.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Induced 1-norm (largest absolute column sum).
    pub fn norm_one(&self) -> f64 {
        (0..self.dim)
            .map(|j| (0..self.dim).map(|i| self[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Largest entrywise deviation from Hermiticity.
    pub fn hermitian_residual(&self) -> f64 {
        let mut r: f64 = 0.0;
        for i in 0..self.dim {
            for j in i..self.dim {
                r = r.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        r
    }

    pub fn hermitian_part(&self) -> Self {
        Self::from_fn(self.dim, |i, j| (self[(i, j)] + self[(j, i)].conj()) * 0.5)
    }

    /// `A B − B A`
    pub fn commutator(a: &CMat, b: &CMat) -> CMat {
        &(a * b) - &(b * a)
    }

    /// `A B + B A`
    pub fn anticommutator(a: &CMat, b: &CMat) -> CMat {
        &(a * b) + &(b * a)
    }

    /// `A ρ A†`
    pub fn sandwich(a: &CMat, rho: &CMat) -> CMat {
        &(a * rho) * &a.adjoint()
    }

    /// Kronecker product `a ⊗ b`.
    pub fn kron(a: &CMat, b: &CMat) -> CMat {
        let (da, db) = (a.dim, b.dim);
        CMat::from_fn(da * db, |r, c| a[(r / db, c / db)] * b[(r % db, c % db)])
    }

    /// Column-stacked vectorization.
    pub fn vectorize(&self) -> Vec<C64> {
        let d = self.dim;
        let mut v = vec![ZERO; d * d];
        for j in 0..d {
            for i in 0..d {
                v[i + j * d] = self[(i, j)];
            }
        }
        v
    }

    pub fn unvectorize(v: &[C64]) -> Result<Self> {
        let d = (v.len() as f64).sqrt().round() as usize;
        if d * d != v.len() {
            return Err(Error::DimensionMismatch {
                expected: d * d,
                found: v.len(),
            });
        }
        Ok(CMat::from_fn(d, |i, j| v[i + j * d]))
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self[(i, j)])
    }
}

impl fmt::Debug for CMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMat({}×{})", self.dim, self.dim)?;
        for i in 0..self.dim {
            let row: Vec<String> = (0..self.dim)
                .map(|j| {
                    let z = self[(i, j)];
                    format!("{:+.6}{:+.6}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for CMat {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for CMat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.dim + j]
    }
}

impl Mul for &CMat {
    type Output = CMat;
    fn mul(self, rhs: &CMat) -> CMat {
        assert_eq!(self.dim, rhs.dim, "matrix dimensions differ");
        let d = self.dim;
        let mut out = CMat::zeros(d);
        for i in 0..d {
            for k in 0..d {
                let a = self.data[i * d + k];
                if a == ZERO {
                    continue;
                }
                for j in 0..d {
                    out.data[i * d + j] += a * rhs.data[k * d + j];
                }
            }
        }
        out
    }
}

impl Add for &CMat {
    type Output = CMat;
    fn add(self, rhs: &CMat) -> CMat {
        assert_eq!(self.dim, rhs.dim, "matrix dimensions differ");
        CMat {
            dim: self.dim,
            data: self.data.iter().zip(rhs.data.iter()).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &CMat {
    type Output = CMat;
    fn sub(self, rhs: &CMat) -> CMat {
        assert_eq!(self.dim, rhs.dim, "matrix dimensions differ");
        CMat {
            dim: self.dim,
            data: self.data.iter().zip(rhs.data.iter()).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Neg for &CMat {
    type Output = CMat;
    fn neg(self) -> CMat {
        self.scale_re(-1.0)
    }
}

impl AddAssign<&CMat> for CMat {
    fn add_assign(&mut self, rhs: &CMat) {
        assert_eq!(self.dim, rhs.dim, "matrix dimensions differ");
        for (a, b) in self.data.iter_mut().zip(rhs.data.iter()) {
            *a += b;
        }
    }
}

impl SubAssign<&CMat> for CMat {
    fn sub_assign(&mut self, rhs: &CMat) {
        assert_eq!(self.dim, rhs.dim, "matrix dimensions differ");
        for (a, b) in self.data.iter_mut().zip(rhs.data.iter()) {
            *a -= b;
        }
    }
}

/// Matrix exponential by scaling and squaring with a truncated Taylor series.
pub fn mat_exp(a: &CMat) -> Result<CMat> {
    if !a.is_finite() {
        return Err(Error::NonFinite);
    }
    let d = a.dim();
    let norm = a.norm_one();
    if norm == 0.0 {
        return Ok(CMat::identity(d));
    }
    if d == 2 && norm <= 32.0 {
        return Ok(exp_2x2(a));
    }
    taylor_exp(a, norm)
}

fn taylor_exp(a: &CMat, norm: f64) -> Result<CMat> {
    let d = a.dim();
    // scale so that the series argument has 1-norm at most 1/2
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scaled = a.scale_re(0.5f64.powi(squarings as i32));

    let mut sum = CMat::identity(d);
    let mut term = CMat::identity(d);
    for k in 1..40 {
        term = (&term * &scaled).scale_re(1.0 / k as f64);
        sum += &term;
        if term.norm_one() <= 1e-17 * sum.norm_one() {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    if !sum.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(sum)
}

/// `e^{m}(cosh q·I + sinh q/q·N)` with `m = tr/2`, `N = A − m·I`, `N² = q²·I`.
fn exp_2x2(a: &CMat) -> CMat {
    let (p, b, c, d) = (a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]);
    let m = 0.5 * (p + d);
    let half_diff = 0.5 * (p - d);
    let q2 = half_diff * half_diff + b * c;
    let q = q2.sqrt();
    let (cosh, sinhc) = if q.norm() < 1e-4 {
        // series to fourth order in q
        (ONE + q2 * (0.5 + q2 / 24.0), ONE + q2 * (1.0 / 6.0 + q2 / 120.0))
    } else {
        (q.cosh(), q.sinh() / q)
    };
    let em = m.exp();
    CMat::qubit(
        em * (cosh + sinhc * half_diff),
        em * sinhc * b,
        em * sinhc * c,
        em * (cosh - sinhc * half_diff),
    )
}

/// Eigenvalues of the Hermitian part of `m`, ascending.
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    let h = m.hermitian_part();
    match h.dim() {
        1 => vec![h[(0, 0)].re],
        2 => {
            let a = h[(0, 0)].re;
            let d = h[(1, 1)].re;
            let b = h[(0, 1)].norm();
            let mean = 0.5 * (a + d);
            let radius = (0.25 * (a - d) * (a - d) + b * b).sqrt();
            vec![mean - radius, mean + radius]
        }
        _ => {
            let eig = nalgebra::SymmetricEigen::new(h.to_nalgebra());
            let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
            vals.sort_by(|x, y| x.total_cmp(y));
            vals
        }
    }
}

/// Half the trace norm of `a − b`, after symmetrizing away non-Hermitian residue.
pub fn trace_norm_distance(a: &CMat, b: &CMat) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let diff = a - b;
    Ok(0.5 * hermitian_eigenvalues(&diff).iter().map(|l| l.abs()).sum::<f64>())
}

/// Trace distance `½‖ρ − σ‖₁` between two states.
pub fn trace_distance(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    trace_norm_distance(rho.mat(), sigma.mat())
}

/// Validated quantum state: Hermitian, unit trace, positive semidefinite.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(CMat);

impl DensityMatrix {
    pub fn new(mat: CMat) -> Result<Self> {
        if !mat.is_finite() {
            return Err(Error::NonFinite);
        }
        let herm = mat.hermitian_residual();
        if herm > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("not Hermitian (residual {herm:e})")));
        }
        let tr = mat.trace();
        if (tr - ONE).norm() > TRACE_TOL {
            return Err(Error::InvalidState(format!(
                "trace {} + {}i differs from 1",
                tr.re, tr.im
            )));
        }
        let min_eig = hermitian_eigenvalues(&mat)[0];
        if min_eig < POSITIVITY_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min_eig:e}")));
        }
        Ok(Self(mat))
    }

    /// Symmetrizes and rescales to unit trace, then validates.
    pub fn normalize(mat: &CMat) -> Result<Self> {
        let h = mat.hermitian_part();
        let tr = h.trace().re;
        if !(tr.is_finite() && tr > 0.0) {
            return Err(Error::InvalidState(format!("trace {tr} is not positive")));
        }
        Self::new(h.scale_re(1.0 / tr))
    }

    /// Like [`normalize`](Self::normalize), but clips negative eigenvalues
    /// (projection onto the state space) when positivity is violated.
    pub fn project(mat: &CMat) -> Result<Self> {
        let h = mat.hermitian_part();
        if !h.is_finite() {
            return Err(Error::NonFinite);
        }
        if hermitian_eigenvalues(&h)[0] >= 0.0 {
            return Self::normalize(&h);
        }
        let eig = nalgebra::SymmetricEigen::new(h.to_nalgebra());
        let d = h.dim();
        let mut out = CMat::zeros(d);
        for (k, &l) in eig.eigenvalues.iter().enumerate() {
            if l > 0.0 {
                let col = eig.eigenvectors.column(k);
                let v: Vec<C64> = col.iter().copied().collect();
                out.add_scaled(C64::new(l, 0.0), &CMat::outer(&v));
            }
        }
        Self::normalize(&out)
    }

    /// Pure state `|psi⟩⟨psi|`, normalizing `psi`.
    pub fn pure(psi: &[C64]) -> Result<Self> {
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::InvalidState("zero state vector".into()));
        }
        let unit: Vec<C64> = psi.iter().map(|z| z / norm).collect();
        Self::new(CMat::outer(&unit))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self(CMat::identity(dim).scale_re(1.0 / dim as f64))
    }

    pub fn mat(&self) -> &CMat {
        &self.0
    }

    pub fn into_mat(self) -> CMat {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    /// `Tr(ρ X)`
    pub fn expect(&self, x: &CMat) -> C64 {
        let d = self.dim();
        let mut acc = ZERO;
        for i in 0..d {
            for j in 0..d {
                acc += self.0[(i, j)] * x[(j, i)];
            }
        }
        acc
    }

    /// `Tr ρ²`
    pub fn purity(&self) -> f64 {
        self.expect(&self.0).re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigenvalues(&self.0)[0]
    }
}

/// Linear map on `dim×dim` matrices, stored as a `dim²×dim²` matrix acting on
/// column-stacked vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct SuperOp {
    dim: usize,
    mat: CMat,
}

impl SuperOp {
    pub fn from_matrix(dim: usize, mat: CMat) -> Result<Self> {
        if mat.dim() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: mat.dim(),
            });
        }
        Ok(Self { dim, mat })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            mat: CMat::identity(dim * dim),
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            mat: CMat::zeros(dim * dim),
        }
    }

    /// `ρ ↦ A ρ B`
    pub fn sandwich(a: &CMat, b: &CMat) -> Self {
        Self {
            dim: a.dim(),
            mat: CMat::kron(&b.transpose(), a),
        }
    }

    /// `ρ ↦ A ρ`
    pub fn left(a: &CMat) -> Self {
        Self::sandwich(a, &CMat::identity(a.dim()))
    }

    /// `ρ ↦ ρ B`
    pub fn right(b: &CMat) -> Self {
        Self::sandwich(&CMat::identity(b.dim()), b)
    }

    /// `ρ ↦ A ρ A†`
    pub fn conjugation(a: &CMat) -> Self {
        Self::sandwich(a, &a.adjoint())
    }

    /// `ρ ↦ −i[H, ρ]`
    pub fn hamiltonian(h: &CMat) -> Self {
        let mut s = Self::left(h).scale(-I);
        s.add_assign(&Self::right(h).scale(I));
        s
    }

    /// `ρ ↦ VρV† − ½{V†V, ρ}`
    pub fn dissipator(v: &CMat) -> Self {
        let vdv = &v.adjoint() * v;
        let mut s = Self::conjugation(v);
        s.add_assign(&Self::left(&vdv).scale_re(-0.5));
        s.add_assign(&Self::right(&vdv).scale_re(-0.5));
        s
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn apply(&self, rho: &CMat) -> Result<CMat> {
        if rho.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: rho.dim(),
            });
        }
        let v = rho.vectorize();
        let n = v.len();
        let mut out = vec![ZERO; n];
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.mat.as_slice()[r * n..(r + 1) * n];
            *o = row.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
        }
        CMat::unvectorize(&out)
    }

    /// `self ∘ other`
    pub fn compose(&self, other: &SuperOp) -> SuperOp {
        SuperOp {
            dim: self.dim,
            mat: &self.mat * &other.mat,
        }
    }

    pub fn scale(&self, s: C64) -> SuperOp {
        SuperOp {
            dim: self.dim,
            mat: self.mat.scale(s),
        }
    }

    pub fn scale_re(&self, s: f64) -> SuperOp {
        SuperOp {
            dim: self.dim,
            mat: self.mat.scale_re(s),
        }
    }

    pub fn add_assign(&mut self, other: &SuperOp) {
        self.mat += &other.mat;
    }

    pub fn add(&self, other: &SuperOp) -> SuperOp {
        SuperOp {
            dim: self.dim,
            mat: &self.mat + &other.mat,
        }
    }

    pub fn sub(&self, other: &SuperOp) -> SuperOp {
        SuperOp {
            dim: self.dim,
            mat: &self.mat - &other.mat,
        }
    }

    /// Hilbert–Schmidt dual: `Tr(X† S(ρ)) = Tr(S*(X)† ρ)`.
    pub fn dual(&self) -> SuperOp {
        SuperOp {
            dim: self.dim,
            mat: self.mat.adjoint(),
        }
    }

    pub fn max_abs_diff(&self, other: &SuperOp) -> f64 {
        (&self.mat - &other.mat).max_abs()
    }
}

/// `exp(t L)` for `t ≥ 0`.
pub fn superop_exp(l: &SuperOp, t: f64) -> Result<SuperOp> {
    if !(t >= 0.0) {
        return Err(Error::NegativeTime(t));
    }
    Ok(SuperOp {
        dim: l.dim,
        mat: mat_exp(&l.mat.scale_re(t))?,
    })
}

/// Dyson terms of `exp(t(L₀ + J))` ordered by the number of `J` insertions:
/// `E_n = ∫_{0<s_1<…<s_n<t} e^{(t−s_n)L₀} J ⋯ J e^{s_1 L₀}`, for `n ≤ max`.
/// Read off the first block column of the exponential of the block
/// bidiagonal matrix with `L₀` on the diagonal and `J` below it.
pub fn dyson_blocks(l0: &SuperOp, jump: &SuperOp, t: f64, max: usize) -> Result<Vec<SuperOp>> {
    if !(t >= 0.0) {
        return Err(Error::NegativeTime(t));
    }
    if l0.dim != jump.dim {
        return Err(Error::DimensionMismatch {
            expected: l0.dim,
            found: jump.dim,
        });
    }
    let n = l0.mat.dim();
    let blocks = max + 1;
    let mut big = CMat::zeros(n * blocks);
    for b in 0..blocks {
        for r in 0..n {
            for c in 0..n {
                big[(n * b + r, n * b + c)] = l0.mat[(r, c)] * t;
                if b > 0 {
                    big[(n * b + r, n * (b - 1) + c)] = jump.mat[(r, c)] * t;
                }
            }
        }
    }
    let e = mat_exp(&big)?;
    Ok((0..blocks)
        .map(|b| SuperOp {
            dim: l0.dim,
            mat: CMat::from_fn(n, |r, c| e[(n * b + r, c)]),
        })
        .collect())
}

/// `exp(tG) = Σ_k e^{tλ_k} P_k` with precomputed Frobenius covariants `P_k`.
///
/// Only built when the eigenvalues of `G` are simple and the reconstruction
/// `Σ λ_k P_k = G` checks out; callers fall back to [`mat_exp`] otherwise.
#[derive(Clone, Debug)]
pub struct SpectralExp {
    eigenvalues: Vec<C64>,
    covariants: Vec<CMat>,
}

impl SpectralExp {
    pub fn new(g: &CMat) -> Option<Self> {
        let n = g.dim();
        let schur = nalgebra::Schur::try_new(g.to_nalgebra(), 1e-15, 10_000)?;
        let (_, t) = schur.unpack();
        let eigenvalues: Vec<C64> = (0..n).map(|i| t[(i, i)]).collect();
        let scale = g.max_abs().max(1.0);
        for a in 0..n {
            for b in (a + 1)..n {
                if (eigenvalues[a] - eigenvalues[b]).norm() < 1e-6 * scale {
                    return None;
                }
            }
        }
        let id = CMat::identity(n);
        let mut covariants = Vec::with_capacity(n);
        for k in 0..n {
            let mut p = id.clone();
            for j in 0..n {
                if j != k {
                    let factor = (g - &id.scale(eigenvalues[j])).scale(ONE / (eigenvalues[k] - eigenvalues[j]));
                    p = &p * &factor;
                }
            }
            covariants.push(p);
        }
        let mut recon = CMat::zeros(n);
        for (l, p) in eigenvalues.iter().zip(&covariants) {
            recon.add_scaled(*l, p);
        }
        if (&recon - g).max_abs() > 1e-10 * scale {
            return None;
        }
        Some(Self {
            eigenvalues,
            covariants,
        })
    }

    pub fn eigenvalues(&self) -> &[C64] {
        &self.eigenvalues
    }

    /// Frobenius covariants `P_k`, one per eigenvalue.
    pub fn covariants(&self) -> &[CMat] {
        &self.covariants
    }

    pub fn exp(&self, t: f64) -> CMat {
        let n = self.covariants[0].dim();
        let mut out = CMat::zeros(n);
        for (l, p) in self.eigenvalues.iter().zip(&self.covariants) {
            out.add_scaled((l * t).exp(), p);
        }
        out
    }
}

/// Standard two-level operators in the basis `{|e⟩, |g⟩}` (index 0 excited).
pub mod qubit {
    use super::*;

    /// Lowering operator `|g⟩⟨e|`.
    pub fn lowering() -> CMat {
        CMat::qubit(ZERO, ZERO, ONE, ZERO)
    }

    pub fn sigma_x() -> CMat {
        CMat::qubit(ZERO, ONE, ONE, ZERO)
    }

    pub fn sigma_y() -> CMat {
        CMat::qubit(ZERO, -I, I, ZERO)
    }

    pub fn sigma_z() -> CMat {
        CMat::qubit(ONE, ZERO, ZERO, -ONE)
    }

    pub fn excited() -> DensityMatrix {
        DensityMatrix(CMat::diag(&[ONE, ZERO]))
    }

    pub fn ground() -> DensityMatrix {
        DensityMatrix(CMat::diag(&[ZERO, ONE]))
    }

    /// `(|e⟩ + |g⟩)/√2`
    pub fn plus() -> DensityMatrix {
        DensityMatrix(CMat::qubit(
            C64::new(0.5, 0.0),
            C64::new(0.5, 0.0),
            C64::new(0.5, 0.0),
            C64::new(0.5, 0.0),
        ))
    }

    /// `(|e⟩ + i|g⟩)/√2`
    pub fn plus_y() -> DensityMatrix {
        DensityMatrix(CMat::qubit(
            C64::new(0.5, 0.0),
            C64::new(0.0, -0.5),
            C64::new(0.0, 0.5),
            C64::new(0.5, 0.0),
        ))
    }

    /// Pure state with Bloch angles `(theta, phi)` measured from `|e⟩`.
    pub fn bloch(theta: f64, phi: f64) -> DensityMatrix {
        let psi = [
            C64::new((0.5 * theta).cos(), 0.0),
            C64::from_polar((0.5 * theta).sin(), phi),
        ];
        DensityMatrix(CMat::outer(&psi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let e = mat_exp(&CMat::zeros(3)).unwrap();
        assert_eq!(e, CMat::identity(3));
    }

    #[test]
    fn exp_of_nilpotent_truncates() {
        let v = qubit::lowering();
        let e = mat_exp(&v).unwrap();
        let expected = &CMat::identity(2) + &v;
        assert!((&e - &expected).max_abs() < 1e-15);
    }

    #[test]
    fn exp_of_diagonal() {
        let e = mat_exp(&CMat::diag(&[c(-1.0, 0.0), c(-2.0, 0.0)])).unwrap();
        assert_abs_diff_eq!(e[(0, 0)].re, (-1.0f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(e[(1, 1)].re, (-2.0f64).exp(), epsilon = 1e-15);
        assert_eq!(e[(0, 1)], ZERO);
    }

    #[test]
    fn exp_large_norm_relative_accuracy() {
        // rotation generator with norm 40: exp is unitary with known entries
        let a = qubit::sigma_y().scale(c(0.0, 40.0));
        let e = mat_exp(&a).unwrap();
        assert!((e[(0, 0)].re - 40f64.cos()).abs() < 1e-12);
        assert!((e[(1, 0)].re + 40f64.sin()).abs() < 1e-12);
    }

    #[test]
    fn closed_form_2x2_matches_series() {
        let cases = [
            CMat::qubit(c(0.3, -1.2), c(0.7, 0.1), c(-2.0, 0.4), c(-0.5, 0.9)),
            CMat::qubit(c(1e-6, 0.0), c(1e-7, 0.0), c(0.0, 0.0), c(-1e-6, 0.0)),
            CMat::qubit(c(-5.0, 0.0), c(3.0, 0.0), c(0.0, 0.0), c(-5.0, 0.0)),
            CMat::qubit(c(0.0, 0.0), c(-7.5, 2.0), c(1.0, 3.0), c(4.0, 0.0)),
        ];
        for a in &cases {
            let closed = exp_2x2(a);
            let series = taylor_exp(a, a.norm_one()).unwrap();
            let scale = series.max_abs().max(1.0);
            assert!((&closed - &series).max_abs() < 1e-12 * scale, "{a:?}");
        }
    }

    #[test]
    fn projection_clips_negative_eigenvalues() {
        // Bloch vector of length 1.2 along x
        let m = CMat::qubit(c(0.5, 0.0), c(0.6, 0.0), c(0.6, 0.0), c(0.5, 0.0));
        let p = DensityMatrix::project(&m).unwrap();
        assert!((p.purity() - 1.0).abs() < 1e-12);
        assert!((p.mat()[(0, 1)].re - 0.5).abs() < 1e-12);
        let ok = DensityMatrix::maximally_mixed(2);
        assert_eq!(DensityMatrix::project(ok.mat()).unwrap(), ok);
    }

    #[test]
    fn exp_rejects_nan() {
        let mut a = CMat::zeros(2);
        a[(0, 1)] = c(f64::NAN, 0.0);
        assert_eq!(mat_exp(&a), Err(Error::NonFinite));
    }

    #[test]
    fn superop_exp_at_zero_is_identity() {
        let l = SuperOp::dissipator(&qubit::lowering());
        assert_eq!(superop_exp(&l, 0.0).unwrap(), SuperOp::identity(2));
        assert!(matches!(superop_exp(&l, -1.0), Err(Error::NegativeTime(_))));
    }

    #[test]
    fn decay_of_excited_population() {
        let l = SuperOp::dissipator(&qubit::lowering());
        for &t in &[0.3, 1.0, 4.0] {
            let rho = superop_exp(&l, t).unwrap().apply(qubit::excited().mat()).unwrap();
            assert_abs_diff_eq!(rho[(0, 0)].re, (-t).exp(), epsilon = 1e-12);
            assert_abs_diff_eq!(rho[(1, 1)].re, 1.0 - (-t).exp(), epsilon = 1e-12);
        }
    }

    #[test]
    fn superop_semigroup_law() {
        let mut l = SuperOp::dissipator(&qubit::lowering());
        l.add_assign(&SuperOp::hamiltonian(&qubit::sigma_x().scale_re(0.7)));
        let a = superop_exp(&l, 1.0).unwrap();
        let b = superop_exp(&l, 2.0).unwrap();
        let ab = superop_exp(&l, 3.0).unwrap();
        assert!(a.compose(&b).max_abs_diff(&ab) < 1e-9);
    }

    #[test]
    fn sandwich_matches_direct_product() {
        let a = CMat::qubit(c(1.0, 2.0), c(0.5, 0.0), c(0.0, -1.0), c(3.0, 0.1));
        let b = CMat::qubit(c(0.2, 0.0), c(-1.0, 1.0), c(0.4, 0.3), c(0.0, 2.0));
        let rho = CMat::qubit(c(0.6, 0.0), c(0.1, 0.2), c(0.1, -0.2), c(0.4, 0.0));
        let direct = &(&a * &rho) * &b;
        let via = SuperOp::sandwich(&a, &b).apply(&rho).unwrap();
        assert!((&direct - &via).max_abs() < 1e-14);
    }

    #[test]
    fn dual_pairs_with_trace() {
        let l = SuperOp::dissipator(&qubit::lowering().scale(c(0.3, 0.4)));
        let rho = qubit::plus_y().into_mat();
        let x = CMat::qubit(c(0.2, 0.0), c(0.5, -0.1), c(0.5, 0.1), c(-0.7, 0.0));
        let lhs = DensityMatrix(l.apply(&rho).unwrap()).expect(&x.adjoint());
        let dual_x = l.dual().apply(&x).unwrap();
        let rhs = DensityMatrix(rho).expect(&dual_x.adjoint());
        assert!((lhs - rhs).norm() < 1e-14);
    }

    #[test]
    fn trace_distance_examples() {
        let e = qubit::excited();
        let g = qubit::ground();
        let mixed = DensityMatrix::maximally_mixed(2);
        assert_abs_diff_eq!(trace_distance(&e, &e).unwrap(), 0.0);
        assert_abs_diff_eq!(trace_distance(&e, &g).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(trace_distance(&mixed, &e).unwrap(), 0.5, epsilon = 1e-15);
        let three = DensityMatrix::maximally_mixed(3);
        assert!(matches!(
            trace_distance(&three, &e),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn density_matrix_validation() {
        assert!(DensityMatrix::new(CMat::diag(&[c(0.5, 0.0), c(0.6, 0.0)])).is_err());
        assert!(DensityMatrix::new(CMat::diag(&[c(1.2, 0.0), c(-0.2, 0.0)])).is_err());
        let not_herm = CMat::qubit(c(0.5, 0.0), c(0.1, 0.0), c(0.2, 0.0), c(0.5, 0.0));
        assert!(DensityMatrix::new(not_herm).is_err());
        assert!(DensityMatrix::pure(&[c(1.0, 0.0), c(0.0, 1.0)]).is_ok());
    }

    #[test]
    fn spectral_exp_matches_taylor() {
        let mut l = SuperOp::dissipator(&qubit::lowering());
        l.add_assign(&SuperOp::hamiltonian(&qubit::sigma_x().scale_re(0.5)));
        let spec = SpectralExp::new(l.matrix()).expect("simple spectrum");
        for &t in &[0.0, 0.1, 1.0, 7.5] {
            let a = spec.exp(t);
            let b = mat_exp(&l.matrix().scale_re(t)).unwrap();
            assert!((&a - &b).max_abs() < 1e-11, "t = {t}");
        }
    }

    #[test]
    fn hermitian_eigenvalues_three_level() {
        let m = CMat::diag(&[c(0.2, 0.0), c(-1.0, 0.0), c(3.0, 0.0)]);
        let ev = hermitian_eigenvalues(&m);
        assert_abs_diff_eq!(ev[0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ev[2], 3.0, epsilon = 1e-12);
    }
}
