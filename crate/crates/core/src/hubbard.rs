//! SU(n)-Hubbard flavor control in the standard representation.
//!
//! With global flavor fields `H_c = Σ u_αβ E_αβ`, `E_αβ = Σ_x c†_{xα} c_{xβ}`,
//! the controllable problem on the `binom(nV, N)`-dimensional Fock space maps
//! onto an `n`-dimensional one. Inner products scale by
//! `C = V·binom(nV−2, N−1)` and norms by `κ = (nC/D)^{−1/2}`. The full Fock
//! build here is only for validation at small sizes.

use std::collections::HashMap;

use nalgebra::DMatrix;
use num_bigint::BigUint;
use num_complex::Complex64;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::algebra::{build_standard, gell_mann, ControlAlgebra, Scenario, StandardAlgebra};
use crate::error::{Error, Result};
use crate::operator::HermitianOperator;
use crate::solver::{solve, Solution, SolverConfig};

/// Dimension limit for [`build_full_fock`].
pub const MAX_FOCK_DIM: usize = 5000;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HubbardSpec {
    pub n: usize,
    #[serde(rename = "V")]
    pub sites: usize,
    #[serde(rename = "N")]
    pub particles: usize,
    pub occupations: Vec<usize>,
    pub u_f: HermitianOperator,
    pub omega: f64,
}

impl HubbardSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.n < 2 {
            return bad(format!("`n` must be at least 2, got {}", self.n));
        }
        if self.sites == 0 {
            return bad("`V` must be positive".into());
        }
        let modes = self.n * self.sites;
        if self.particles == 0 || self.particles >= modes {
            // a completely filled lattice has C = 0: the flavor algebra acts trivially
            return bad(format!("`N` must lie in [1, nV − 1] = [1, {}], got {}", modes - 1, self.particles));
        }
        if self.occupations.len() != self.n {
            return bad(format!("`occupations` must have {} entries", self.n));
        }
        if self.occupations.iter().sum::<usize>() != self.particles {
            return bad("`occupations` must sum to `N`".into());
        }
        if self.occupations.iter().any(|&o| o > self.sites) {
            return bad("each entry of `occupations` must be at most `V`".into());
        }
        if self.u_f.dim() != self.n {
            return bad(format!("`u_f` must be {}x{}", self.n, self.n));
        }
        if self.u_f.trace().abs() > 1e-12 * self.u_f.frob_norm().max(1.0) {
            return bad(format!("`u_f` must be traceless, trace = {:.3e}", self.u_f.trace()));
        }
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return bad("`omega` must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReductionConstants {
    /// `D = binom(nV, N)`.
    pub dim_full: BigUint,
    /// `C = V·binom(nV − 2, N − 1) = tr[E_αβ E_βα]` for `α ≠ β`.
    pub c_vn: BigUint,
    pub kappa: f64,
}

impl ReductionConstants {
    pub fn c_vn_f64(&self) -> f64 {
        self.c_vn.to_f64().unwrap_or(f64::INFINITY)
    }

    pub fn dim_full_f64(&self) -> f64 {
        self.dim_full.to_f64().unwrap_or(f64::INFINITY)
    }
}

pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

pub fn constants(spec: &HubbardSpec) -> Result<ReductionConstants> {
    spec.validate()?;
    let modes = (spec.n * spec.sites) as u64;
    let big_n = spec.particles as u64;
    let dim_full = binomial(modes, big_n);
    let c_vn = BigUint::from(spec.sites) * binomial(modes - 2, big_n - 1);
    // κ² = D/(nC) = (nV − 1)/(N(nV − N)) after cancelling the binomials
    let kappa = ((modes - 1) as f64 / (big_n * (modes - big_n)) as f64).sqrt();
    Ok(ReductionConstants { dim_full, c_vn, kappa })
}

/// Reduced problem in dimension `n`: `π(H_c^f) = u_f`,
/// `π(ρ_c^i) = diag(N_α − N/n)/C`, norm bound `κω`. Reported work must be
/// multiplied by `C`.
pub fn reduced_scenario(spec: &HubbardSpec) -> Result<(Scenario, ReductionConstants)> {
    let k = constants(spec)?;
    let c = k.c_vn_f64();
    let mean = spec.particles as f64 / spec.n as f64;
    let diag: Vec<f64> = spec.occupations.iter().map(|&o| (o as f64 - mean) / c).collect();
    let algebra = build_standard(StandardAlgebra::FullTraceless(spec.n))?;
    let rho = HermitianOperator::from_diagonal(&diag);
    let scenario = Scenario::new(algebra, spec.u_f.clone(), rho, k.kappa * spec.omega)?;
    Ok((scenario, k))
}

#[derive(Clone, Debug, Serialize)]
pub struct ReducedSolution {
    /// Solution of the `n`-dimensional problem with bound `κω`.
    pub reduced: Solution,
    pub constants: ReductionConstants,
    /// Full-space controllable work, `C` times the reduced work.
    pub work: f64,
    /// Full-space `C` value, `C_π/κ`.
    pub c_value: f64,
    /// Coefficients `u_αβ` of the optimal constant field `Σ u_αβ E_αβ`.
    pub lifted: HermitianOperator,
}

pub fn solve_reduced(spec: &HubbardSpec, t: f64, config: &SolverConfig) -> Result<ReducedSolution> {
    solve_reduced_from(spec, t, config, None)
}

/// As [`solve_reduced`], warm-started from a previous reduced generator.
pub fn solve_reduced_from(
    spec: &HubbardSpec,
    t: f64,
    config: &SolverConfig,
    guess: Option<&HermitianOperator>,
) -> Result<ReducedSolution> {
    let (scenario, k) = reduced_scenario(spec)?;
    let reduced = if scenario.rho_i_c().frob_norm() == 0.0 {
        idle_solution(&scenario, t)?
    } else {
        solve(&scenario, t, config, guess)?
    };
    Ok(lift(reduced, k, scenario.omega()))
}

pub(crate) fn lift(reduced: Solution, constants: ReductionConstants, omega_pi: f64) -> ReducedSolution {
    ReducedSolution {
        work: constants.c_vn_f64() * reduced.work,
        c_value: reduced.c_value / constants.kappa,
        lifted: reduced.generator.scaled(omega_pi),
        reduced,
        constants,
    }
}

/// With no controllable state component every generator is optimal and
/// extracts nothing.
fn idle_solution(scenario: &Scenario, t: f64) -> Result<Solution> {
    if t.is_nan() || t <= 0.0 {
        return Err(Error::InvalidInput(format!("T must be positive, got {t}")));
    }
    let generator = scenario
        .h_f_c()
        .normalized()
        .or_else(|| scenario.algebra().basis()[0].normalized())
        .ok_or(Error::ZeroOperator("algebra basis"))?;
    Ok(Solution {
        t,
        generator,
        c_value: 0.0,
        residual: 0.0,
        f_norm: 0.0,
        work: 0.0,
        iterations: 0,
        restarts_used: 0,
    })
}

/// Occupation-number basis and flavor bilinears on the full Fock space.
#[derive(Clone, Debug)]
pub struct FockBuild {
    pub n: usize,
    pub sites: usize,
    /// Basis states as occupied-mode bitmasks, mode index `x·n + α`,
    /// in lexicographic order of the sorted occupied-mode lists.
    pub states: Vec<u64>,
    index: HashMap<u64, usize>,
    /// `E_αβ` at position `α·n + β`.
    e: Vec<DMatrix<Complex64>>,
    c_vn: f64,
}

fn combinations(modes: usize, k: usize) -> Vec<u64> {
    fn rec(start: usize, modes: usize, k: usize, acc: u64, out: &mut Vec<u64>) {
        if k == 0 {
            out.push(acc);
            return;
        }
        for m in start..=modes - k {
            rec(m + 1, modes, k - 1, acc | (1 << m), out);
        }
    }
    let mut out = Vec::new();
    rec(0, modes, k, 0, &mut out);
    out
}

/// Sign and image of `c†_p c_q` on a bitmask state, with creation operators
/// ordered by ascending mode index.
fn hop(state: u64, p: usize, q: usize) -> Option<(f64, u64)> {
    if state & (1 << q) == 0 {
        return None;
    }
    let below = |s: u64, m: usize| (s & ((1u64 << m) - 1)).count_ones();
    let mut sign = if below(state, q) % 2 == 0 { 1.0 } else { -1.0 };
    let s = state & !(1 << q);
    if s & (1 << p) != 0 {
        return None;
    }
    if below(s, p) % 2 == 1 {
        sign = -sign;
    }
    Some((sign, s | (1 << p)))
}

pub fn build_full_fock(spec: &HubbardSpec) -> Result<FockBuild> {
    let k = constants(spec)?;
    let modes = spec.n * spec.sites;
    if modes > 63 {
        return Err(Error::TooLarge(format!("{modes} modes")));
    }
    let d = k.dim_full.to_usize().filter(|&d| d <= MAX_FOCK_DIM).ok_or_else(|| {
        Error::TooLarge(format!("Fock dimension {} exceeds {MAX_FOCK_DIM}", k.dim_full))
    })?;
    let states = combinations(modes, spec.particles);
    debug_assert_eq!(states.len(), d);
    let index: HashMap<u64, usize> = states.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let mut build = FockBuild {
        n: spec.n,
        sites: spec.sites,
        states,
        index,
        e: Vec::with_capacity(spec.n * spec.n),
        c_vn: k.c_vn_f64(),
    };
    for a in 0..spec.n {
        for b in 0..spec.n {
            let mut m = DMatrix::zeros(d, d);
            for x in 0..spec.sites {
                m += build.bilinear(x * spec.n + a, x * spec.n + b);
            }
            build.e.push(m);
        }
    }
    Ok(build)
}

impl FockBuild {
    pub fn dim(&self) -> usize {
        self.states.len()
    }

    /// Matrix of `c†_p c_q`.
    pub fn bilinear(&self, p: usize, q: usize) -> DMatrix<Complex64> {
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        for (j, &s) in self.states.iter().enumerate() {
            if let Some((sign, t)) = hop(s, p, q) {
                m[(self.index[&t], j)] += Complex64::new(sign, 0.0);
            }
        }
        m
    }

    pub fn e(&self, a: usize, b: usize) -> &DMatrix<Complex64> {
        &self.e[a * self.n + b]
    }

    /// `Σ_αβ m_αβ E_αβ`.
    pub fn lift(&self, m: &HermitianOperator) -> Result<HermitianOperator> {
        if m.dim() != self.n {
            return Err(Error::Dimension { left: m.dim(), right: self.n });
        }
        let d = self.dim();
        let mut out = DMatrix::zeros(d, d);
        for a in 0..self.n {
            for b in 0..self.n {
                out += self.e(a, b) * m.matrix()[(a, b)];
            }
        }
        Ok(HermitianOperator::symmetrized(out))
    }

    /// Traceless part of `(tr[E_βα X]/C)_αβ`.
    pub fn pi(&self, x: &HermitianOperator) -> Result<HermitianOperator> {
        if x.dim() != self.dim() {
            return Err(Error::Dimension { left: x.dim(), right: self.dim() });
        }
        let n = self.n;
        let mut m = DMatrix::from_fn(n, n, |a, b| (self.e(b, a) * x.matrix()).trace() / self.c_vn);
        let mean = m.trace() / n as f64;
        for a in 0..n {
            m[(a, a)] -= mean;
        }
        Ok(HermitianOperator::symmetrized(m))
    }

    /// The full-space control algebra `span{lift(Λ)}` over the traceless
    /// flavor matrices.
    pub fn algebra(&self) -> Result<ControlAlgebra> {
        let basis = gell_mann(self.n).iter().map(|g| self.lift(g)).collect::<Result<Vec<_>>>()?;
        ControlAlgebra::from_basis(basis, format!("su({}) flavor", self.n))
    }

    /// Fock state filling flavor `α` on sites `0..N_α`.
    pub fn reference_state(&self, occupations: &[usize]) -> Result<HermitianOperator> {
        let mut mask = 0u64;
        for (a, &o) in occupations.iter().enumerate() {
            for x in 0..o {
                mask |= 1 << (x * self.n + a);
            }
        }
        let j = *self
            .index
            .get(&mask)
            .ok_or_else(|| Error::InvalidInput("occupations do not match this Fock build".into()))?;
        let mut diag = vec![0.0; self.dim()];
        diag[j] = 1.0;
        Ok(HermitianOperator::from_diagonal(&diag))
    }

    /// Nearest-neighbour hopping on an open chain, flavor conserving.
    pub fn hopping(&self, amplitude: f64) -> HermitianOperator {
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        for x in 0..self.sites.saturating_sub(1) {
            for a in 0..self.n {
                let (p, q) = (x * self.n + a, (x + 1) * self.n + a);
                m += (self.bilinear(p, q) + self.bilinear(q, p)) * Complex64::new(-amplitude, 0.0);
            }
        }
        HermitianOperator::symmetrized(m)
    }

    /// `U Σ_x n_x(n_x − 1)/2` with `n_x` the total site occupation.
    pub fn interaction(&self, u: f64) -> HermitianOperator {
        let diag: Vec<f64> = self
            .states
            .iter()
            .map(|&s| {
                (0..self.sites)
                    .map(|x| {
                        let nx = ((s >> (x * self.n)) & ((1u64 << self.n) - 1)).count_ones() as f64;
                        nx * (nx - 1.0) / 2.0
                    })
                    .sum::<f64>()
                    * u
            })
            .collect();
        HermitianOperator::from_diagonal(&diag)
    }

    /// Full-space scenario for the reference Fock state: validation path.
    pub fn full_scenario(&self, spec: &HubbardSpec) -> Result<Scenario> {
        let h = self.lift(&spec.u_f)?;
        let rho = self.reference_state(&spec.occupations)?;
        Scenario::from_density(self.algebra()?, &h, &rho, spec.omega)
    }
}
