//! Dense Hermitian operators and the Hilbert–Schmidt geometry used by every
//! other module.
//!
//! Norms follow the normalized Frobenius convention `‖X‖ = sqrt(tr(X†X)/D)`,
//! so the identity has unit norm in every dimension. Matrix exponentials are
//! never formed by series; everything that needs `e^{-iθX}` goes through the
//! Hermitian eigendecomposition in [`SpectralDecomposition`].

use std::fmt;
use std::ops::{Add, Mul, Neg, Range, Sub};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Asymmetry above which construction fails instead of symmetrizing.
pub const HERMITIAN_TOL: f64 = 1e-8;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Clone, PartialEq)]
pub struct HermitianOperator {
    mat: DMatrix<Complex64>,
}

impl HermitianOperator {
    /// Builds an operator from a square complex matrix. The input is
    /// symmetrized as `(a + a†)/2`; an asymmetry above [`HERMITIAN_TOL`] is an
    /// error.
    pub fn new(mat: DMatrix<Complex64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::Dimension { left: mat.nrows(), right: mat.ncols() });
        }
        if mat.nrows() == 0 {
            return Err(Error::InvalidInput("operator dimension must be at least 1".into()));
        }
        let asymmetry = max_asymmetry(&mat);
        if asymmetry > HERMITIAN_TOL {
            return Err(Error::NotHermitian { asymmetry });
        }
        Ok(Self::symmetrized(mat))
    }

    /// Symmetrizes without checking. Used for results that are Hermitian by
    /// construction and only carry rounding noise.
    pub(crate) fn symmetrized(mat: DMatrix<Complex64>) -> Self {
        let adj = mat.adjoint();
        Self { mat: (mat + adj).scale(0.5) }
    }

    pub fn from_real(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        let mut m = DMatrix::zeros(d, d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::Dimension { left: d, right: row.len() });
            }
            for (j, &v) in row.iter().enumerate() {
                m[(i, j)] = Complex64::new(v, 0.0);
            }
        }
        Self::new(m)
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let d = diag.len();
        let mut m = DMatrix::zeros(d, d);
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = Complex64::new(v, 0.0);
        }
        Self { mat: m }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { mat: DMatrix::zeros(dim, dim) }
    }

    pub fn identity(dim: usize) -> Self {
        Self { mat: DMatrix::identity(dim, dim) }
    }

    /// The projector `|ψ⟩⟨ψ|` for a (not necessarily normalized) vector.
    pub fn projector(psi: &[Complex64]) -> Self {
        let d = psi.len();
        let mut m = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                m[(i, j)] = psi[i] * psi[j].conj();
            }
        }
        Self::symmetrized(m)
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.mat
    }

    pub fn trace(&self) -> f64 {
        self.mat.diagonal().iter().map(|z| z.re).sum()
    }

    /// `tr[a·b]`, real for Hermitian arguments.
    pub fn hs_inner(&self, other: &Self) -> Result<f64> {
        check_dims(self, other)?;
        Ok(self.hs_inner_unchecked(other))
    }

    pub(crate) fn hs_inner_unchecked(&self, other: &Self) -> f64 {
        // tr[AB] = Σ_ij A_ij B_ji = Σ_ij A_ij conj(B_ij) for Hermitian B
        let mut re = 0.0;
        let mut im = 0.0;
        for (a, b) in self.mat.iter().zip(other.mat.iter()) {
            re += a.re * b.re + a.im * b.im;
            im += a.im * b.re - a.re * b.im;
        }
        debug_assert!(im.abs() <= 1e-10 * (1.0 + re.abs()), "tr[ab] has imaginary part {im}");
        re
    }

    /// Normalized Frobenius norm `sqrt(tr(a†a)/D)`.
    pub fn frob_norm(&self) -> f64 {
        (self.mat.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.dim() as f64).sqrt()
    }

    /// `−i[a, b]`, which is Hermitian whenever `a` and `b` are.
    pub fn comm_i(&self, other: &Self) -> Result<Self> {
        check_dims(self, other)?;
        Ok(self.comm_i_unchecked(other))
    }

    pub(crate) fn comm_i_unchecked(&self, other: &Self) -> Self {
        let c = &self.mat * &other.mat - &other.mat * &self.mat;
        Self::symmetrized(c * (-I))
    }

    /// Plain commutator `[a, b]`. The result is anti-Hermitian, so it is
    /// returned as a raw matrix.
    pub fn commutator(&self, other: &Self) -> DMatrix<Complex64> {
        &self.mat * &other.mat - &other.mat * &self.mat
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { mat: self.mat.scale(s) }
    }

    /// Rescales to unit normalized Frobenius norm; `None` for the zero operator.
    pub fn normalized(&self) -> Option<Self> {
        let n = self.frob_norm();
        (n > 0.0).then(|| self.scaled(1.0 / n))
    }

    /// `self + s·other`
    pub fn axpy(&self, s: f64, other: &Self) -> Self {
        Self { mat: &self.mat + other.mat.scale(s) }
    }

    /// Largest entrywise deviation from `other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.mat
            .iter()
            .zip(other.mat.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn spectral_radius(&self) -> Result<f64> {
        let spec = spectral(self, 0.0)?;
        Ok(spec.values.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
    }

    /// `e^{-iθ·self}` as a dense unitary.
    pub fn unitary(&self, theta: f64) -> Result<DMatrix<Complex64>> {
        let spec = spectral(self, default_degeneracy_tol_unchecked(self))?;
        Ok(spec.unitary(theta))
    }

    /// Tensor product `self ⊗ other`.
    pub fn kron(&self, other: &Self) -> Self {
        Self::symmetrized(self.mat.kronecker(&other.mat))
    }

    /// `u · self · u†` for an arbitrary unitary `u`.
    pub fn conjugated(&self, u: &DMatrix<Complex64>) -> Self {
        Self::symmetrized(u * &self.mat * u.adjoint())
    }
}

fn max_asymmetry(m: &DMatrix<Complex64>) -> f64 {
    let d = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..d {
        for j in i..d {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

fn check_dims(a: &HermitianOperator, b: &HermitianOperator) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension { left: a.dim(), right: b.dim() });
    }
    Ok(())
}

impl fmt::Debug for HermitianOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HermitianOperator(dim={}) {}", self.dim(), self.mat)
    }
}

impl Add for &HermitianOperator {
    type Output = HermitianOperator;
    fn add(self, rhs: Self) -> HermitianOperator {
        HermitianOperator { mat: &self.mat + &rhs.mat }
    }
}

impl Sub for &HermitianOperator {
    type Output = HermitianOperator;
    fn sub(self, rhs: Self) -> HermitianOperator {
        HermitianOperator { mat: &self.mat - &rhs.mat }
    }
}

impl Mul<f64> for &HermitianOperator {
    type Output = HermitianOperator;
    fn mul(self, rhs: f64) -> HermitianOperator {
        self.scaled(rhs)
    }
}

impl Neg for &HermitianOperator {
    type Output = HermitianOperator;
    fn neg(self) -> HermitianOperator {
        self.scaled(-1.0)
    }
}

pub fn hs_inner(a: &HermitianOperator, b: &HermitianOperator) -> Result<f64> {
    a.hs_inner(b)
}

pub fn frob_norm(a: &HermitianOperator) -> f64 {
    a.frob_norm()
}

pub fn comm_i(a: &HermitianOperator, b: &HermitianOperator) -> Result<HermitianOperator> {
    a.comm_i(b)
}

/// Checks that `rho` is a density matrix: unit trace and no eigenvalue below
/// `-1e-10`, both within `1e-10`.
pub fn check_density_matrix(rho: &HermitianOperator) -> Result<()> {
    let tr = rho.trace();
    if (tr - 1.0).abs() > 1e-10 {
        return Err(Error::NotDensityMatrix(format!("trace is {tr}")));
    }
    let spec = spectral(rho, 0.0)?;
    let min = spec.values[0];
    if min < -1e-10 {
        return Err(Error::NotDensityMatrix(format!("negative eigenvalue {min:.3e}")));
    }
    Ok(())
}

/// Eigendecomposition with eigenvalues grouped into degenerate clusters.
///
/// Eigenvalues inside one cluster are snapped to the cluster mean, so any
/// formula that depends on eigenvalue differences sees an exact zero within a
/// cluster and a gap of at least the clustering tolerance between clusters.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    values: Vec<f64>,
    vectors: DMatrix<Complex64>,
    clusters: Vec<Range<usize>>,
}

/// `1e-9 · max(1, spectral radius)`.
pub fn default_degeneracy_tol(a: &HermitianOperator) -> Result<f64> {
    Ok(1e-9 * a.spectral_radius()?.max(1.0))
}

// The max-abs entry bounds the spectral radius up to a factor D, which is
// good enough for a clustering threshold and avoids a second diagonalization.
fn default_degeneracy_tol_unchecked(a: &HermitianOperator) -> f64 {
    let bound: f64 = (0..a.dim())
        .map(|i| a.mat.row(i).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    1e-9 * bound.max(1.0)
}

pub fn spectral(a: &HermitianOperator, degeneracy_tol: f64) -> Result<SpectralDecomposition> {
    let d = a.dim();
    let eig = SymmetricEigen::try_new(a.mat.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numerical(format!("eigensolver failed on a {d}x{d} operator")))?;
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite eigenvalue".into()));
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let mut values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(d, d, |r, c| eig.eigenvectors[(r, order[c])]);

    let mut clusters = Vec::new();
    let mut start = 0;
    for k in 1..=d {
        if k == d || values[k] - values[k - 1] > degeneracy_tol {
            clusters.push(start..k);
            start = k;
        }
    }
    for range in &clusters {
        let mean = values[range.clone()].iter().sum::<f64>() / range.len() as f64;
        values[range.clone()].iter_mut().for_each(|v| *v = mean);
    }
    Ok(SpectralDecomposition { values, vectors, clusters })
}

impl SpectralDecomposition {
    /// Distinct (clustered) eigenvalues, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.clusters.iter().map(|r| self.values[r.start]).collect()
    }

    /// One eigenvalue per eigenvector, ascending, snapped to cluster means.
    pub fn eigenvalues_with_multiplicity(&self) -> &[f64] {
        &self.values
    }

    pub fn eigenvectors(&self) -> &DMatrix<Complex64> {
        &self.vectors
    }

    /// Orthogonal projectors onto each cluster's eigenspace.
    pub fn projectors(&self) -> Vec<HermitianOperator> {
        self.clusters
            .iter()
            .map(|r| {
                let v = self.vectors.columns(r.start, r.len());
                HermitianOperator::symmetrized(v * v.adjoint())
            })
            .collect()
    }

    pub fn reconstruct(&self) -> HermitianOperator {
        let d = self.values.len();
        let diag = DMatrix::from_fn(d, d, |i, j| {
            if i == j {
                Complex64::new(self.values[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        HermitianOperator::symmetrized(&self.vectors * diag * self.vectors.adjoint())
    }

    /// `V (w ∘ V†ZV) V†` where `w_jk = weight(x_j − x_k)`. With the weight
    /// satisfying `weight(−d) = conj(weight(d))` the result is Hermitian.
    pub fn block_weighted(
        &self,
        z: &HermitianOperator,
        weight: impl Fn(f64) -> Complex64,
    ) -> HermitianOperator {
        let v = &self.vectors;
        let mut zb = v.adjoint() * z.matrix() * v;
        let d = self.values.len();
        for j in 0..d {
            for k in 0..d {
                zb[(j, k)] *= weight(self.values[j] - self.values[k]);
            }
        }
        HermitianOperator::symmetrized(v * zb * v.adjoint())
    }

    /// `e^{-iθX} z e^{+iθX}`
    pub fn conjugate(&self, theta: f64, z: &HermitianOperator) -> HermitianOperator {
        self.block_weighted(z, |gap| Complex64::from_polar(1.0, -theta * gap))
    }

    /// `∫_0^{τ} e^{-iθX} z e^{+iθX} dθ`: diagonal blocks scale by `τ`,
    /// off-diagonal blocks by `(e^{-iτΔ} − 1)/(−iΔ)`.
    pub fn phase_integral(&self, tau: f64, z: &HermitianOperator) -> HermitianOperator {
        self.block_weighted(z, |gap| {
            if gap == 0.0 {
                Complex64::new(tau, 0.0)
            } else {
                (Complex64::from_polar(1.0, -tau * gap) - 1.0) / (-I * gap)
            }
        })
    }

    /// `e^{-iθX}`
    pub fn unitary(&self, theta: f64) -> DMatrix<Complex64> {
        let v = &self.vectors;
        let d = self.values.len();
        let phases = DMatrix::from_fn(d, d, |i, j| {
            if i == j {
                Complex64::from_polar(1.0, -theta * self.values[i])
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        v * phases * v.adjoint()
    }
}

/// `e^{-iθx} z e^{+iθx}`, evaluated through the eigendecomposition of `x`.
pub fn conjugate_by_exp(
    x: &HermitianOperator,
    theta: f64,
    z: &HermitianOperator,
) -> Result<HermitianOperator> {
    check_dims(x, z)?;
    let spec = spectral(x, default_degeneracy_tol_unchecked(x))?;
    Ok(spec.conjugate(theta, z))
}

/// Eigendecomposition with the default clustering tolerance.
pub fn spectral_default(x: &HermitianOperator) -> Result<SpectralDecomposition> {
    spectral(x, default_degeneracy_tol_unchecked(x))
}

#[derive(Serialize, Deserialize)]
struct OperatorJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
    re: Vec<Vec<f64>>,
    /// Missing means a real matrix.
    #[serde(default)]
    im: Vec<Vec<f64>>,
}

impl TryFrom<OperatorJson> for HermitianOperator {
    type Error = Error;

    fn try_from(j: OperatorJson) -> Result<Self> {
        let d = j.dim.unwrap_or(j.re.len());
        if d == 0 {
            return Err(Error::InvalidInput("operator field `dim` must be positive".into()));
        }
        let real = j.im.is_empty();
        if j.re.len() != d || (!real && j.im.len() != d) {
            return Err(Error::InvalidInput(format!("operator fields `re`/`im` must have {d} rows")));
        }
        let mut m = DMatrix::zeros(d, d);
        for i in 0..d {
            if j.re[i].len() != d || (!real && j.im[i].len() != d) {
                return Err(Error::InvalidInput(format!(
                    "operator row {i} of `re`/`im` must have {d} entries"
                )));
            }
            for k in 0..d {
                let im = if real { 0.0 } else { j.im[i][k] };
                m[(i, k)] = Complex64::new(j.re[i][k], im);
            }
        }
        HermitianOperator::new(m)
    }
}

impl Serialize for HermitianOperator {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let d = self.dim();
        let repr = OperatorJson {
            dim: Some(d),
            re: (0..d).map(|i| (0..d).map(|k| self.mat[(i, k)].re).collect()).collect(),
            im: (0..d).map(|i| (0..d).map(|k| self.mat[(i, k)].im).collect()).collect(),
        };
        repr.serialize(s)
    }
}

impl<'de> Deserialize<'de> for HermitianOperator {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = OperatorJson::deserialize(d)?;
        HermitianOperator::try_from(repr).map_err(serde::de::Error::custom)
    }
}

/// Pauli matrices, handy for builders and tests.
pub mod pauli {
    use super::*;

    pub fn x() -> HermitianOperator {
        HermitianOperator::from_real(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
    }

    pub fn y() -> HermitianOperator {
        let mut m = DMatrix::zeros(2, 2);
        m[(0, 1)] = -I;
        m[(1, 0)] = I;
        HermitianOperator { mat: m }
    }

    pub fn z() -> HermitianOperator {
        HermitianOperator::from_diagonal(&[1.0, -1.0])
    }
}
