//! Controllable operator subspaces and the optimization instance built on
//! them.
//!
//! A [`ControlAlgebra`] is stored with a Hilbert–Schmidt orthogonal basis whose
//! elements share one normalization `tr[Λ_j²] = c`. Projection onto the span is
//! then `Σ_j tr[xΛ_j]/c · Λ_j`, and closure under `−i[·,·]` is verified when the
//! algebra is built.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{check_density_matrix, HermitianOperator};

/// Relative tolerance for span membership and closure checks.
pub const SPAN_TOL: f64 = 1e-9;
const RANK_TOL: f64 = 1e-10;

#[derive(Clone, Debug, Serialize)]
pub struct ControlAlgebra {
    basis: Vec<HermitianOperator>,
    gram_norm: f64,
    label: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClosureReport {
    pub closed: bool,
    pub worst_residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CentralizerReport {
    pub commutes: bool,
    pub worst_residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StandardAlgebra {
    /// `span{σ_α/2}` on a single qubit.
    Su2SpinHalf,
    /// All traceless Hermitian operators, `su(D)`.
    FullTraceless(usize),
    /// All Hermitian operators, `u(D)`.
    FullHermitian(usize),
    /// The three total-spin components on `N` spin-1/2 sites.
    HeisenbergTotalSpin(usize),
}

/// Largest `N` for which total-spin operators are built densely.
pub const MAX_SPIN_SITES: usize = 12;

impl ControlAlgebra {
    /// Orthonormalizes `basis` and verifies closure under `−i[·,·]`.
    pub fn from_basis(basis: Vec<HermitianOperator>, label: impl Into<String>) -> Result<Self> {
        let algebra = orthonormalize(&basis)?.with_label(label);
        let report = algebra.closure();
        if !report.closed {
            return Err(Error::InvalidInput(format!(
                "basis is not closed under the commutator (residual {:.3e})",
                report.worst_residual
            )));
        }
        Ok(algebra)
    }

    pub fn standard(kind: StandardAlgebra) -> Result<Self> {
        build_standard(kind)
    }

    fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn basis(&self) -> &[HermitianOperator] {
        &self.basis
    }

    /// Common value of `tr[Λ_j²]`.
    pub fn gram_norm(&self) -> f64 {
        self.gram_norm
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    /// Hilbert-space dimension `D` the basis acts on.
    pub fn dim(&self) -> usize {
        self.basis[0].dim()
    }

    /// Expansion coefficients `tr[xΛ_j]/c`.
    pub fn coords(&self, x: &HermitianOperator) -> Result<Vec<f64>> {
        if x.dim() != self.dim() {
            return Err(Error::Dimension { left: x.dim(), right: self.dim() });
        }
        Ok(self.coords_unchecked(x))
    }

    pub(crate) fn coords_unchecked(&self, x: &HermitianOperator) -> Vec<f64> {
        self.basis.iter().map(|b| x.hs_inner_unchecked(b) / self.gram_norm).collect()
    }

    pub fn from_coords(&self, coords: &[f64]) -> HermitianOperator {
        assert_eq!(coords.len(), self.basis.len(), "coordinate count mismatch");
        let mut m = DMatrix::<Complex64>::zeros(self.dim(), self.dim());
        for (c, b) in coords.iter().zip(&self.basis) {
            m += b.matrix().scale(*c);
        }
        HermitianOperator::symmetrized(m)
    }

    pub fn project(&self, x: &HermitianOperator) -> Result<HermitianOperator> {
        Ok(self.from_coords(&self.coords(x)?))
    }

    pub(crate) fn project_unchecked(&self, x: &HermitianOperator) -> HermitianOperator {
        self.from_coords(&self.coords_unchecked(x))
    }

    /// Normalized Frobenius norm of `x − project(x)`.
    pub fn residual(&self, x: &HermitianOperator) -> Result<f64> {
        Ok((x - &self.project(x)?).frob_norm())
    }

    /// Errors with `NotInAlgebra` unless `x` lies in the span within
    /// `SPAN_TOL · max(1, ‖x‖)`.
    pub fn ensure_contains(&self, x: &HermitianOperator) -> Result<()> {
        let residual = self.residual(x)?;
        if residual > SPAN_TOL * x.frob_norm().max(1.0) {
            return Err(Error::NotInAlgebra { residual });
        }
        Ok(())
    }

    pub fn closure(&self) -> ClosureReport {
        let mut worst = 0.0_f64;
        let mut closed = true;
        for (j, a) in self.basis.iter().enumerate() {
            for b in &self.basis[j + 1..] {
                let c = a.comm_i_unchecked(b);
                let r = (&c - &self.project_unchecked(&c)).frob_norm();
                worst = worst.max(r);
                if r > SPAN_TOL * c.frob_norm().max(1.0) {
                    closed = false;
                }
            }
        }
        ClosureReport { closed, worst_residual: worst }
    }

    /// Whether `h_u` commutes with every basis element within `1e-9`.
    pub fn centralizer(&self, h_u: &HermitianOperator) -> Result<CentralizerReport> {
        if h_u.dim() != self.dim() {
            return Err(Error::Dimension { left: h_u.dim(), right: self.dim() });
        }
        let worst = self
            .basis
            .iter()
            .map(|b| b.comm_i_unchecked(h_u).frob_norm())
            .fold(0.0, f64::max);
        Ok(CentralizerReport { commutes: worst <= SPAN_TOL, worst_residual: worst })
    }

    pub fn contains_identity(&self) -> bool {
        let id = HermitianOperator::identity(self.dim());
        (&id - &self.project_unchecked(&id)).frob_norm() <= SPAN_TOL
    }
}

pub fn project_onto(algebra: &ControlAlgebra, x: &HermitianOperator) -> Result<HermitianOperator> {
    algebra.project(x)
}

/// Closure test for an arbitrary (possibly non-orthogonal) spanning set.
/// A rank-deficient set is reduced to an independent subset first.
pub fn verify_closure(basis: &[HermitianOperator]) -> ClosureReport {
    let independent = independent_subset(basis);
    match orthonormalize(&independent) {
        Ok(algebra) => algebra.closure(),
        Err(_) => ClosureReport { closed: false, worst_residual: f64::INFINITY },
    }
}

pub fn verify_centralizer(algebra: &ControlAlgebra, h_u: &HermitianOperator) -> Result<CentralizerReport> {
    algebra.centralizer(h_u)
}

fn independent_subset(basis: &[HermitianOperator]) -> Vec<HermitianOperator> {
    let mut kept: Vec<HermitianOperator> = Vec::new();
    let mut ortho: Vec<HermitianOperator> = Vec::new();
    for b in basis {
        let mut r = b.clone();
        for q in &ortho {
            r = r.axpy(-r.hs_inner_unchecked(q) / q.hs_inner_unchecked(q), q);
        }
        if r.frob_norm() > RANK_TOL * b.frob_norm().max(f64::MIN_POSITIVE) {
            ortho.push(r);
            kept.push(b.clone());
        }
    }
    kept
}

/// Modified Gram–Schmidt in the Hilbert–Schmidt inner product. All outputs
/// are rescaled to the squared norm `tr[b_0²]` of the first input.
pub fn orthonormalize(basis: &[HermitianOperator]) -> Result<ControlAlgebra> {
    let first = basis.first().ok_or_else(|| Error::InvalidInput("empty basis".into()))?;
    let d = first.dim();
    let gram_norm = first.hs_inner_unchecked(first);
    if gram_norm <= 0.0 {
        return Err(Error::RankDeficient { index: 0 });
    }
    let mut out: Vec<HermitianOperator> = Vec::with_capacity(basis.len());
    for (index, b) in basis.iter().enumerate() {
        if b.dim() != d {
            return Err(Error::Dimension { left: b.dim(), right: d });
        }
        let mut r = b.clone();
        for q in &out {
            r = r.axpy(-r.hs_inner_unchecked(q) / gram_norm, q);
        }
        let norm_sq = r.hs_inner_unchecked(&r);
        let original = b.hs_inner_unchecked(b);
        if original <= 0.0 || norm_sq <= (RANK_TOL * RANK_TOL) * original {
            return Err(Error::RankDeficient { index });
        }
        out.push(r.scaled((gram_norm / norm_sq).sqrt()));
    }
    Ok(ControlAlgebra { basis: out, gram_norm, label: String::from("custom") })
}

fn elementary(d: usize, i: usize, j: usize, value: Complex64) -> DMatrix<Complex64> {
    let mut m = DMatrix::zeros(d, d);
    m[(i, j)] = value;
    m
}

/// Generalized Gell-Mann matrices, each with `tr[Λ²] = 2`.
pub fn gell_mann(d: usize) -> Vec<HermitianOperator> {
    let one = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    let mut out = Vec::with_capacity(d * d - 1);
    for j in 0..d {
        for k in j + 1..d {
            let sym = elementary(d, j, k, one) + elementary(d, k, j, one);
            let asym = elementary(d, j, k, -i) + elementary(d, k, j, i);
            out.push(HermitianOperator::symmetrized(sym));
            out.push(HermitianOperator::symmetrized(asym));
        }
    }
    for l in 1..d {
        let scale = (2.0 / (l * (l + 1)) as f64).sqrt();
        let mut diag = vec![0.0; d];
        diag[..l].iter_mut().for_each(|v| *v = scale);
        diag[l] = -(l as f64) * scale;
        out.push(HermitianOperator::from_diagonal(&diag));
    }
    out
}

/// Single-site spin-1/2 operator `σ/2` embedded at `site` of `n_sites`.
fn site_spin(component: usize, site: usize, n_sites: usize) -> DMatrix<Complex64> {
    let half = 0.5;
    let s: DMatrix<Complex64> = match component {
        0 => DMatrix::from_row_slice(2, 2, &[0.0.into(), half.into(), half.into(), 0.0.into()]),
        1 => DMatrix::from_row_slice(
            2,
            2,
            &[0.0.into(), Complex64::new(0.0, -half), Complex64::new(0.0, half), 0.0.into()],
        ),
        _ => DMatrix::from_row_slice(2, 2, &[half.into(), 0.0.into(), 0.0.into(), (-half).into()]),
    };
    let id = DMatrix::<Complex64>::identity(2, 2);
    let mut out = DMatrix::<Complex64>::identity(1, 1);
    for x in 0..n_sites {
        out = out.kronecker(if x == site { &s } else { &id });
    }
    out
}

/// Total spin components `S_α = Σ_x s_α^{(x)}` on `n_sites` spin-1/2 sites.
pub fn total_spin(n_sites: usize) -> Result<[HermitianOperator; 3]> {
    if n_sites == 0 {
        return Err(Error::InvalidInput("n_sites must be positive".into()));
    }
    if n_sites > MAX_SPIN_SITES {
        return Err(Error::TooLarge(format!("{n_sites} sites exceeds the dense limit {MAX_SPIN_SITES}")));
    }
    let d = 1 << n_sites;
    let build = |a: usize| {
        let mut m = DMatrix::<Complex64>::zeros(d, d);
        for x in 0..n_sites {
            m += site_spin(a, x, n_sites);
        }
        HermitianOperator::symmetrized(m)
    };
    Ok([build(0), build(1), build(2)])
}

/// Single-site spin operators `s_α^{(x)}`, for building couplings.
pub fn site_spins(n_sites: usize) -> Result<Vec<[HermitianOperator; 3]>> {
    if n_sites == 0 || n_sites > MAX_SPIN_SITES {
        return Err(Error::TooLarge(format!("{n_sites} sites")));
    }
    Ok((0..n_sites)
        .map(|x| {
            [0, 1, 2].map(|a| HermitianOperator::symmetrized(site_spin(a, x, n_sites)))
        })
        .collect())
}

pub fn build_standard(kind: StandardAlgebra) -> Result<ControlAlgebra> {
    let (basis, label) = match kind {
        StandardAlgebra::Su2SpinHalf => {
            let s = total_spin(1)?;
            (s.to_vec(), "su2_spin_half".to_string())
        }
        StandardAlgebra::FullTraceless(d) => {
            if d < 2 {
                return Err(Error::InvalidInput("full_traceless needs D >= 2".into()));
            }
            (gell_mann(d), format!("full_traceless({d})"))
        }
        StandardAlgebra::FullHermitian(d) => {
            if d < 1 {
                return Err(Error::InvalidInput("full_hermitian needs D >= 1".into()));
            }
            // identity scaled to the Gell-Mann normalization tr[Λ²] = 2
            let mut basis = vec![HermitianOperator::identity(d).scaled((2.0 / d as f64).sqrt())];
            basis.extend(gell_mann(d));
            (basis, format!("full_hermitian({d})"))
        }
        StandardAlgebra::HeisenbergTotalSpin(n) => {
            (total_spin(n)?.to_vec(), format!("heisenberg_total_spin({n})"))
        }
    };
    ControlAlgebra::from_basis(basis, label)
}

/// Provenance of a scenario built from full operators: the norms of the
/// components discarded by projection onto the algebra.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub discarded_rho_u_norm: Option<f64>,
    pub discarded_h_u_norm: Option<f64>,
}

/// One optimization instance: the controllable final Hamiltonian, the
/// projected initial state and the norm bound.
#[derive(Clone, Debug, Serialize)]
pub struct Scenario {
    algebra: ControlAlgebra,
    h_f_c: HermitianOperator,
    rho_i_c: HermitianOperator,
    omega: f64,
    #[serde(skip)]
    provenance: Provenance,
}

impl Scenario {
    /// Both operators must already lie in the algebra.
    pub fn new(
        algebra: ControlAlgebra,
        h_f_c: HermitianOperator,
        rho_i_c: HermitianOperator,
        omega: f64,
    ) -> Result<Self> {
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::InvalidInput(format!("omega must be positive, got {omega}")));
        }
        algebra.ensure_contains(&h_f_c)?;
        algebra.ensure_contains(&rho_i_c)?;
        Ok(Self { algebra, h_f_c, rho_i_c, omega, provenance: Provenance::default() })
    }

    /// Builds a scenario from a full final Hamiltonian and a density matrix,
    /// projecting both onto the algebra.
    pub fn from_density(
        algebra: ControlAlgebra,
        h_f: &HermitianOperator,
        rho_i: &HermitianOperator,
        omega: f64,
    ) -> Result<Self> {
        check_density_matrix(rho_i)?;
        let h_f_c = algebra.project(h_f)?;
        let rho_i_c = algebra.project(rho_i)?;
        let provenance = Provenance {
            discarded_rho_u_norm: Some((rho_i - &rho_i_c).frob_norm()),
            discarded_h_u_norm: Some((h_f - &h_f_c).frob_norm()),
        };
        let mut s = Self::new(algebra, h_f_c, rho_i_c, omega)?;
        s.provenance = provenance;
        Ok(s)
    }

    pub fn algebra(&self) -> &ControlAlgebra {
        &self.algebra
    }

    pub fn h_f_c(&self) -> &HermitianOperator {
        &self.h_f_c
    }

    pub fn rho_i_c(&self) -> &HermitianOperator {
        &self.rho_i_c
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn dim(&self) -> usize {
        self.h_f_c.dim()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn with_omega(&self, omega: f64) -> Result<Self> {
        let mut s = self.clone();
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::InvalidInput(format!("omega must be positive, got {omega}")));
        }
        s.omega = omega;
        Ok(s)
    }

    /// `tr[H_c^f ρ_c^i]`, the work offset that makes `W_c(I) = 0`.
    pub fn initial_energy(&self) -> f64 {
        self.h_f_c.hs_inner_unchecked(&self.rho_i_c)
    }

    /// Cauchy–Schwarz bound `D‖H_c^f‖‖ρ_c^i‖ + tr[H_c^f ρ_c^i]` on `W_c`.
    pub fn work_upper_bound(&self) -> f64 {
        self.dim() as f64 * self.h_f_c.frob_norm() * self.rho_i_c.frob_norm() + self.initial_energy()
    }

    /// Upper bound `2√D‖H_c^f‖‖ρ_c^i‖` on `‖F(X)‖`, hence on `C`. Used as the
    /// natural scale for `C` and residual tolerances.
    pub fn c_scale(&self) -> f64 {
        2.0 * (self.dim() as f64).sqrt() * self.h_f_c.frob_norm() * self.rho_i_c.frob_norm()
    }

    /// `W_c` for an arbitrary unitary acting on the controllable part.
    pub fn work_for_unitary(&self, u: &DMatrix<Complex64>) -> f64 {
        let evolved = self.rho_i_c.conjugated(u);
        -self.h_f_c.hs_inner_unchecked(&evolved) + self.initial_energy()
    }
}

/// `W_c(e^{−iT·generator}) = −tr[H_c^f U ρ_c^i U†] + tr[H_c^f ρ_c^i]`.
pub fn work_of_unitary(scenario: &Scenario, generator: &HermitianOperator, t: f64) -> Result<f64> {
    scenario.algebra.ensure_contains(generator)?;
    let u = generator.unitary(t)?;
    Ok(scenario.work_for_unitary(&u))
}
