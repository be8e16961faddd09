//! Dense complex linear algebra shared by every other module.
//!
//! Vectors and matrices are plain `nalgebra` dynamic types over `Complex<f64>`.
//! Hermitian-ness and positive semidefiniteness are checked at the entry of the
//! operations that need them rather than carried in the type.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CVec = DVector<C64>;
pub type CMat = DMatrix<C64>;

/// Elementwise Hermitian tolerance, relative to the largest entry.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Eigenvalues above `-PSD_CLAMP_TOL * max_eig` are roundoff and get clamped to zero.
pub const PSD_CLAMP_TOL: f64 = 1e-9;

/// Eigen-decomposition of a Hermitian matrix, eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct EigPair {
    pub eigenvalues: Vec<f64>,
    /// Columns are the eigenvectors matching `eigenvalues`.
    pub basis: CMat,
}

impl EigPair {
    pub fn reconstruct(&self) -> CMat {
        let n = self.eigenvalues.len();
        let mut scaled = self.basis.clone();
        for (j, &lam) in self.eigenvalues.iter().enumerate() {
            scaled.column_mut(j).scale_mut(lam);
        }
        let mut out = CMat::zeros(n, n);
        out.gemm(C64::new(1.0, 0.0), &scaled, &self.basis.adjoint(), C64::new(0.0, 0.0));
        out
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }
}

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Largest elementwise deviation from Hermitian symmetry.
pub fn hermitian_defect(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

pub fn check_hermitian(m: &CMat) -> Result<()> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch { expected: m.nrows(), got: m.ncols() });
    }
    let defect = hermitian_defect(m);
    if defect > HERMITIAN_TOL * max_abs(m).max(1.0) {
        return Err(Error::NotHermitian(defect));
    }
    Ok(())
}

/// `(m + m^H) / 2`.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

pub fn herm_eig(m: &CMat) -> Result<EigPair> {
    check_hermitian(m)?;
    Ok(herm_eig_unchecked(m))
}

/// Eigen-decomposition of the Hermitian part of `m`, skipping the symmetry check.
pub(crate) fn herm_eig_unchecked(m: &CMat) -> EigPair {
    let n = m.nrows();
    if n == 0 {
        return EigPair { eigenvalues: Vec::new(), basis: CMat::zeros(0, 0) };
    }
    let eig = hermitian_part(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut basis = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        basis.set_column(dst, &eig.eigenvectors.column(src));
    }
    EigPair { eigenvalues, basis }
}

/// Rebuilds `Q f(Λ) Q^H` from an eigen-decomposition.
pub fn spectral_map(eig: &EigPair, f: impl Fn(f64) -> f64) -> CMat {
    EigPair { eigenvalues: eig.eigenvalues.iter().map(|&l| f(l)).collect(), basis: eig.basis.clone() }
        .reconstruct()
}

/// Eigenvalues clamped at zero, or `NotPsd` when a negative one exceeds roundoff.
fn clamped_spectrum(m: &CMat) -> Result<EigPair> {
    let mut eig = herm_eig(m)?;
    let top = eig.max().max(0.0);
    let bottom = eig.min();
    if bottom < -PSD_CLAMP_TOL * top || (top == 0.0 && bottom < -PSD_CLAMP_TOL) {
        return Err(Error::NotPsd { min: bottom, max: top });
    }
    let floor = f64::EPSILON * top * m.nrows() as f64;
    for lam in &mut eig.eigenvalues {
        if *lam <= floor {
            *lam = 0.0;
        }
    }
    Ok(eig)
}

pub fn psd_sqrt(m: &CMat) -> Result<CMat> {
    let eig = clamped_spectrum(m)?;
    Ok(spectral_map(&eig, f64::sqrt))
}

/// Projects a nearly-PSD Hermitian matrix onto the PSD cone (negative eigenvalues dropped).
pub fn psd_part(m: &CMat) -> CMat {
    let eig = herm_eig_unchecked(m);
    spectral_map(&eig, |l| l.max(0.0))
}

/// One draw of a circularly-symmetric standard complex normal, real and imaginary parts N(0, 1/2).
pub fn std_complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn std_complex_normal_vec<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CVec {
    CVec::from_fn(n, |_, _| std_complex_normal(rng))
}

/// Draws from CN(0, cov) by colouring standard normals with the PSD square root.
///
/// Build once and reuse when many draws share a covariance.
#[derive(Debug, Clone)]
pub struct CnSampler {
    root: CMat,
}

impl CnSampler {
    pub fn new(cov: &CMat) -> Result<Self> {
        Ok(Self { root: psd_sqrt(cov)? })
    }

    pub fn dim(&self) -> usize {
        self.root.nrows()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> CVec {
        let white = std_complex_normal_vec(self.dim(), rng);
        &self.root * white
    }
}

pub fn sample_cn<R: Rng + ?Sized>(cov: &CMat, rng: &mut R) -> Result<CVec> {
    Ok(CnSampler::new(cov)?.sample(rng))
}

/// Kronecker product of vectors: entry `c * |b| + l` is `a[c] * b[l]`.
pub fn kron(a: &CVec, b: &CVec) -> CVec {
    let nb = b.len();
    CVec::from_fn(a.len() * nb, |idx, _| a[idx / nb] * b[idx % nb])
}

pub fn hadamard(a: &CVec, b: &CVec) -> Result<CVec> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    Ok(a.component_mul(b))
}

/// Column-stacking vectorization, `vec(V)[c * rows + l] = V[(l, c)]`.
pub fn vec_columns(m: &CMat) -> CVec {
    CVec::from_column_slice(m.as_slice())
}

/// Inverse of [`vec_columns`].
pub fn unvec_columns(v: &CVec, rows: usize) -> CMat {
    CMat::from_column_slice(rows, v.len() / rows.max(1), v.as_slice())
}

pub fn outer(v: &CVec) -> CMat {
    v * v.adjoint()
}

/// Real trace inner product `Re tr(F^H X)`, written `F • X`.
pub fn inner(f: &CMat, x: &CMat) -> f64 {
    f.iter().zip(x.iter()).map(|(a, b)| a.re * b.re + a.im * b.im).sum()
}

/// `Re(v^H M v)`.
pub fn quad_form(m: &CMat, v: &CVec) -> f64 {
    let mv = m * v;
    v.iter().zip(mv.iter()).map(|(a, b)| a.re * b.re + a.im * b.im).sum()
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn real_diag(values: &[f64]) -> CMat {
    let n = values.len();
    let mut m = CMat::zeros(n, n);
    for (i, &v) in values.iter().enumerate() {
        m[(i, i)] = C64::new(v, 0.0);
    }
    m
}

/// Entrywise conjugate.
pub fn conj_mat(m: &CMat) -> CMat {
    m.map(|z| z.conj())
}

pub fn conj_vec(v: &CVec) -> CVec {
    v.map(|z| z.conj())
}

/// Kronecker product of matrices.
pub fn kron_mat(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}
