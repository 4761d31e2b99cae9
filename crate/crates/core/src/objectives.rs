//! Maximizing the final expectation of an observable `A` by treating `−A`
//! as the Hamiltonian, and the closed-form optimal fidelity for a qubit.

use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::algebra::{build_standard, Scenario, StandardAlgebra};
use crate::error::{Error, Result};
use crate::operator::{check_density_matrix, HermitianOperator};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlKind {
    FullHermitian,
    FullTraceless,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSpec {
    pub observable: HermitianOperator,
    pub rho_i: HermitianOperator,
    pub control_kind: ControlKind,
    pub omega: f64,
}

impl ObjectiveSpec {
    pub fn validate(&self) -> Result<()> {
        check_density_matrix(&self.rho_i)?;
        if self.observable.dim() != self.rho_i.dim() {
            return Err(Error::Dimension { left: self.observable.dim(), right: self.rho_i.dim() });
        }
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(Error::InvalidInput(format!("omega must be positive, got {}", self.omega)));
        }
        Ok(())
    }

    /// `ψ` if the observable is a rank-one projector `|ψ⟩⟨ψ|`.
    pub fn target_state(&self) -> Option<Vec<Complex64>> {
        let eig = SymmetricEigen::new(self.observable.matrix().clone());
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let top = order[0];
        let rank_one = (eig.eigenvalues[top] - 1.0).abs() < 1e-10
            && order[1..].iter().all(|&k| eig.eigenvalues[k].abs() < 1e-10);
        rank_one.then(|| eig.eigenvectors.column(top).iter().copied().collect())
    }
}

/// A scenario whose work is the gain in `⟨A⟩`, with the bookkeeping to
/// report the objective itself.
#[derive(Clone, Debug)]
pub struct ObjectiveScenario {
    pub scenario: Scenario,
    /// `tr[Aρ] − tr[A_c ρ_c]`, carried by the parts no control can move.
    pub offset: f64,
    /// `tr[Aρ]` at the initial time.
    pub initial_value: f64,
}

impl ObjectiveScenario {
    /// Final-time `⟨A⟩` reached by a protocol that extracts `work`.
    pub fn objective_value(&self, work: f64) -> f64 {
        self.initial_value + work
    }
}

pub fn to_scenario(spec: &ObjectiveSpec) -> Result<ObjectiveScenario> {
    spec.validate()?;
    let d = spec.rho_i.dim();
    let kind = match spec.control_kind {
        ControlKind::FullHermitian => StandardAlgebra::FullHermitian(d),
        ControlKind::FullTraceless => StandardAlgebra::FullTraceless(d),
    };
    let algebra = build_standard(kind)?;
    let scenario = Scenario::from_density(algebra, &spec.observable.scaled(-1.0), &spec.rho_i, spec.omega)?;
    let initial_value = spec.observable.hs_inner_unchecked(&spec.rho_i);
    let controllable = -scenario.h_f_c().hs_inner_unchecked(scenario.rho_i_c());
    Ok(ObjectiveScenario { scenario, offset: initial_value - controllable, initial_value })
}

struct QubitFidelity {
    /// `sqrt(2 tr ρ² − 1)`, the Bloch radius.
    radius: f64,
    overlap: f64,
}

fn qubit_fidelity(rho_i: &HermitianOperator, psi_t: &[Complex64]) -> Result<QubitFidelity> {
    if rho_i.dim() != 2 {
        return Err(Error::Dimension { left: rho_i.dim(), right: 2 });
    }
    if psi_t.len() != 2 {
        return Err(Error::Dimension { left: psi_t.len(), right: 2 });
    }
    check_density_matrix(rho_i)?;
    let norm: f64 = psi_t.iter().map(|z| z.norm_sqr()).sum();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidInput(format!("target state has norm² {norm}, expected 1")));
    }
    let purity = rho_i.hs_inner_unchecked(rho_i);
    let m = rho_i.matrix();
    let overlap = (0..2)
        .flat_map(|i| (0..2).map(move |j| (i, j)))
        .map(|(i, j)| psi_t[i].conj() * m[(i, j)] * psi_t[j])
        .sum::<Complex64>()
        .re;
    Ok(QubitFidelity { radius: (2.0 * purity - 1.0).max(0.0).sqrt(), overlap })
}

fn cos_argument(q: &QubitFidelity) -> f64 {
    ((2.0 * q.overlap - 1.0) / q.radius).clamp(-1.0, 1.0)
}

/// Minimum time to reach the optimal fidelity with `|ψ_t⟩` from `ρ`.
pub fn fidelity_t_star(rho_i: &HermitianOperator, psi_t: &[Complex64], omega: f64) -> Result<f64> {
    let q = qubit_fidelity(rho_i, psi_t)?;
    if q.radius == 0.0 {
        return Err(Error::DegenerateState);
    }
    Ok(cos_argument(&q).acos() / (2.0 * omega))
}

/// Optimal fidelity `⟨ψ_t|ρ(T)|ψ_t⟩` under full su(2) control at rate `ω`,
/// held at its maximum beyond the minimum time.
pub fn fidelity_curve_two_level(rho_i: &HermitianOperator, psi_t: &[Complex64], omega: f64, t: f64) -> Result<f64> {
    let q = qubit_fidelity(rho_i, psi_t)?;
    if q.radius == 0.0 {
        return Ok(0.5);
    }
    let phi = PI - cos_argument(&q).acos();
    let angle = (2.0 * omega * t + phi).min(PI);
    Ok((0.5 - 0.5 * q.radius * angle.cos()).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{solve, SolverConfig};
    use crate::su2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_state(rng: &mut ChaCha8Rng, d: usize) -> Vec<Complex64> {
        let v: Vec<Complex64> =
            (0..d).map(|_| Complex64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))).collect();
        let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        v.into_iter().map(|z| z / n).collect()
    }

    fn mixed(rng: &mut ChaCha8Rng, d: usize, p: f64) -> HermitianOperator {
        let pure = HermitianOperator::projector(&random_state(rng, d));
        &pure.scaled(p) + &HermitianOperator::identity(d).scaled((1.0 - p) / d as f64)
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn mapping_full_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rho = mixed(&mut rng, 3, 0.6);
        let a = HermitianOperator::projector(&random_state(&mut rng, 3));
        let spec = ObjectiveSpec { observable: a.clone(), rho_i: rho.clone(), control_kind: ControlKind::FullHermitian, omega: 1.0 };
        let o = to_scenario(&spec).unwrap();
        assert!(o.scenario.h_f_c().max_abs_diff(&a.scaled(-1.0)) < 1e-12);
        assert!(o.scenario.rho_i_c().max_abs_diff(&rho) < 1e-12);
        assert!(o.offset.abs() < 1e-12);
    }

    #[test]
    fn mapping_traceless_projector() {
        let psi = vec![c(0.6, 0.0), c(0.0, 0.8)];
        let a = HermitianOperator::projector(&psi);
        let rho = HermitianOperator::from_diagonal(&[0.9, 0.1]);
        let spec = ObjectiveSpec { observable: a.clone(), rho_i: rho.clone(), control_kind: ControlKind::FullTraceless, omega: 1.0 };
        let o = to_scenario(&spec).unwrap();
        let a_c = &a - &HermitianOperator::identity(2).scaled(0.5);
        assert!(o.scenario.h_f_c().max_abs_diff(&a_c.scaled(-1.0)) < 1e-12);
        let rho_c = &rho - &HermitianOperator::identity(2).scaled(0.5);
        assert!(o.scenario.rho_i_c().max_abs_diff(&rho_c) < 1e-12);
        // the uncontrollable part contributes tr[A]/D = 1/2
        assert!((o.offset - 0.5).abs() < 1e-12);
        let t = spec.target_state().unwrap();
        let overlap = t[0].conj() * psi[0] + t[1].conj() * psi[1];
        assert!((overlap.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn traceless_observable_unchanged() {
        let spec = ObjectiveSpec {
            observable: crate::operator::pauli::y(),
            rho_i: HermitianOperator::from_diagonal(&[0.7, 0.3]),
            control_kind: ControlKind::FullTraceless,
            omega: 2.0,
        };
        let o = to_scenario(&spec).unwrap();
        assert!(o.scenario.h_f_c().max_abs_diff(&crate::operator::pauli::y().scaled(-1.0)) < 1e-15);
        assert!(spec.target_state().is_none());
    }

    #[test]
    fn fidelity_endpoints() {
        let up = vec![c(1.0, 0.0), c(0.0, 0.0)];
        let down = HermitianOperator::from_diagonal(&[0.0, 1.0]);
        assert!(fidelity_curve_two_level(&down, &up, 1.0, 0.0).unwrap().abs() < 1e-15);
        assert!((fidelity_t_star(&down, &up, 1.0).unwrap() - PI / 2.0).abs() < 1e-15);
        assert!((fidelity_curve_two_level(&down, &up, 1.0, PI / 2.0).unwrap() - 1.0).abs() < 1e-15);
        let same = HermitianOperator::from_diagonal(&[1.0, 0.0]);
        assert_eq!(fidelity_t_star(&same, &up, 1.0).unwrap(), 0.0);
        let center = HermitianOperator::identity(2).scaled(0.5);
        for t in [0.0, 0.3, 5.0] {
            assert_eq!(fidelity_curve_two_level(&center, &up, 1.0, t).unwrap(), 0.5);
        }
        assert!(matches!(fidelity_t_star(&center, &up, 1.0), Err(Error::DegenerateState)));
        let three = HermitianOperator::identity(3).scaled(1.0 / 3.0);
        assert!(matches!(fidelity_t_star(&three, &up, 1.0), Err(Error::Dimension { .. })));
    }

    #[test]
    fn pure_pairs_match_overlap_angle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let psi_i = random_state(&mut rng, 2);
            let psi_t = random_state(&mut rng, 2);
            let rho = HermitianOperator::projector(&psi_i);
            let overlap = (psi_t[0].conj() * psi_i[0] + psi_t[1].conj() * psi_i[1]).norm();
            let omega = 1.7;
            let t_star = fidelity_t_star(&rho, &psi_t, omega).unwrap();
            assert!((t_star - overlap.min(1.0).acos() / omega).abs() < 1e-10);
            assert!((fidelity_curve_two_level(&rho, &psi_t, omega, t_star).unwrap() - 1.0).abs() < 1e-12);
            assert!((fidelity_curve_two_level(&rho, &psi_t, omega, 2.0 * t_star + 1.0).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn solver_reproduces_qubit_fidelity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let config = SolverConfig::default();
        for _ in 0..5 {
            let rho = mixed(&mut rng, 2, 0.8);
            let psi_t = random_state(&mut rng, 2);
            let spec = ObjectiveSpec {
                observable: HermitianOperator::projector(&psi_t),
                rho_i: rho.clone(),
                control_kind: ControlKind::FullTraceless,
                omega: 1.0,
            };
            let o = to_scenario(&spec).unwrap();
            let t_star = fidelity_t_star(&rho, &psi_t, 1.0).unwrap();
            for frac in [0.2, 0.5, 0.9] {
                let t = frac * t_star;
                let sol = solve(&o.scenario, t, &config, None).unwrap();
                let closed = fidelity_curve_two_level(&rho, &psi_t, 1.0, t).unwrap();
                assert!((o.objective_value(sol.work) - closed).abs() < 1e-8);
                // generator solves C𝖧 = i[A_c, ρ_c(T)]
                let rho_t = o.scenario.rho_i_c().conjugated(&sol.generator.unitary(o.scenario.omega() * t).unwrap());
                let a_c = o.scenario.h_f_c().scaled(-1.0);
                let rhs = a_c.comm_i(&rho_t).unwrap().scaled(-1.0);
                assert!((&sol.generator.scaled(sol.c_value) - &rhs).frob_norm() < 1e-8);
            }
            let s = su2::t_star_w_star(&o.scenario).unwrap();
            assert!((s.0 - t_star).abs() < 1e-10);
        }
    }

    #[test]
    fn three_level_gain_nondecreasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rho = mixed(&mut rng, 3, 0.7);
        let a = HermitianOperator::projector(&random_state(&mut rng, 3));
        let spec = ObjectiveSpec { observable: a, rho_i: rho, control_kind: ControlKind::FullTraceless, omega: 1.0 };
        let o = to_scenario(&spec).unwrap();
        let grid: Vec<f64> = (1..=30).map(|k| 0.05 * k as f64).collect();
        let curve = crate::metrics::sweep(&o.scenario, &grid, &SolverConfig::default(), crate::metrics::Backend::Numeric).unwrap();
        for w in curve.samples.windows(2) {
            assert!(w[1].work >= w[0].work - 1e-9);
        }
        assert!(curve.samples.iter().all(|s| o.objective_value(s.work) <= 1.0 + 1e-9));
    }

    #[test]
    fn spec_json_roundtrip() {
        let text = r#"{"observable":{"re":[[1,0],[0,0]]},"rho_i":{"re":[[0,0],[0,1]]},"control_kind":"full_traceless","omega":1.0}"#;
        let spec: ObjectiveSpec = serde_json::from_str(text).unwrap();
        assert_eq!(spec.control_kind, ControlKind::FullTraceless);
        assert!(spec.validate().is_ok());
        assert!(serde_json::from_str::<ObjectiveSpec>(&text.replace("observable", "h_f_c")).is_err());
    }
}
