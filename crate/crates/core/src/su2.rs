//! Closed-form optimum for su(2) control.
//!
//! For a three-dimensional algebra with `−i[S_a, S_b] = μ ε_abc S_c`, the
//! optimal generator rotates the state in the plane spanned by `H_c^f` and
//! `ρ_c^i`. The rotation rate is `ω/c` with `c = ‖S‖/|μ|`, so the work follows
//! a cosine until the state is anti-aligned with the Hamiltonian.

use std::f64::consts::PI;

use serde::Serialize;

use crate::algebra::{ControlAlgebra, Scenario, StandardAlgebra};
use crate::error::{Error, Result};
use crate::operator::HermitianOperator;

#[derive(Clone, Debug, Serialize)]
pub struct Su2Solution {
    pub generator: HermitianOperator,
    /// Angle between `H_c^f` and `ρ_c^i`, in `[0, π]`.
    pub phi: f64,
    pub t_star: f64,
    pub w_star: f64,
    /// `c = ‖S_α‖` for the basis normalized to unit structure constants.
    pub s_norm: f64,
}

/// Verifies the `ε_abc` pattern and returns `c = ‖Λ‖/|μ|`.
pub fn structure_norm(algebra: &ControlAlgebra) -> Result<f64> {
    if algebra.len() != 3 {
        return Err(Error::NotSu2 { deviation: f64::INFINITY });
    }
    let basis = algebra.basis();
    let mut mus = [0.0; 3];
    let mut deviation = 0.0_f64;
    for (k, (a, b, c)) in [(0, 1, 2), (1, 2, 0), (2, 0, 1)].into_iter().enumerate() {
        let comm = basis[a].comm_i_unchecked(&basis[b]);
        let coords = algebra.coords_unchecked(&comm);
        mus[k] = coords[c];
        let off = coords[a].hypot(coords[b]);
        let outside = (&comm - &algebra.project_unchecked(&comm)).frob_norm() / basis[0].frob_norm();
        deviation = deviation.max(off).max(outside);
    }
    let mu = mus[0];
    if mu.abs() <= 1e-12 {
        return Err(Error::NotSu2 { deviation: 1.0 });
    }
    let spread = mus.iter().map(|m| (m - mu).abs()).fold(0.0, f64::max);
    let deviation = deviation.max(spread) / mu.abs();
    if deviation > 1e-8 {
        return Err(Error::NotSu2 { deviation });
    }
    Ok(basis[0].frob_norm() / mu.abs())
}

/// `arccos(tr[Hρ]/√(tr H² tr ρ²))`, clamped to `[0, π]`.
pub fn phi_angle(scenario: &Scenario) -> Result<f64> {
    let h = scenario.h_f_c();
    let rho = scenario.rho_i_c();
    let hh = h.hs_inner_unchecked(h);
    let rr = rho.hs_inner_unchecked(rho);
    if hh == 0.0 {
        return Err(Error::ZeroOperator("final Hamiltonian"));
    }
    if rr == 0.0 {
        return Err(Error::ZeroOperator("controllable state"));
    }
    Ok((h.hs_inner_unchecked(rho) / (hh * rr).sqrt()).clamp(-1.0, 1.0).acos())
}

/// Unit generator orthogonal to `h` inside the algebra: the highest-index
/// basis element with a component orthogonal to `h`, Gram–Schmidt reduced.
fn orthogonal_direction(algebra: &ControlAlgebra, h: &HermitianOperator) -> Result<HermitianOperator> {
    let hh = h.hs_inner_unchecked(h);
    for b in algebra.basis().iter().rev() {
        let r = b.axpy(-b.hs_inner_unchecked(h) / hh, h);
        if r.frob_norm() > 1e-8 * b.frob_norm() {
            return r.normalized().ok_or(Error::ZeroOperator("orthogonal direction"));
        }
    }
    Err(Error::NotSu2 { deviation: f64::INFINITY })
}

pub fn optimal_generator(scenario: &Scenario) -> Result<Su2Solution> {
    let s_norm = structure_norm(scenario.algebra())?;
    let phi = phi_angle(scenario)?;
    let h = scenario.h_f_c();
    let rho = scenario.rho_i_c();
    let comm = h.comm_i_unchecked(rho);
    let generator = if comm.frob_norm() > 1e-12 * scenario.c_scale() {
        comm.normalized().ok_or(Error::ZeroOperator("commutator"))?
    } else {
        orthogonal_direction(scenario.algebra(), h)?
    };
    let (t_star, w_star) = star(scenario, s_norm, phi);
    Ok(Su2Solution { generator, phi, t_star, w_star, s_norm })
}

fn amplitude(scenario: &Scenario) -> f64 {
    scenario.dim() as f64 * scenario.h_f_c().frob_norm() * scenario.rho_i_c().frob_norm()
}

fn star(scenario: &Scenario, s_norm: f64, phi: f64) -> (f64, f64) {
    let t_star = s_norm * (PI - phi) / scenario.omega();
    (t_star, amplitude(scenario) + scenario.initial_energy())
}

/// `(T_c*, W_c*)`.
pub fn t_star_w_star(scenario: &Scenario) -> Result<(f64, f64)> {
    let s_norm = structure_norm(scenario.algebra())?;
    Ok(star(scenario, s_norm, phi_angle(scenario)?))
}

/// Optimal controllable work: a cosine up to `T_c*`, then constant.
pub fn work_curve_su2(scenario: &Scenario, t: f64) -> Result<f64> {
    if t.is_nan() || t < 0.0 {
        return Err(Error::InvalidInput(format!("T must be nonnegative, got {t}")));
    }
    let s_norm = structure_norm(scenario.algebra())?;
    let phi = phi_angle(scenario)?;
    let (t_star, w_star) = star(scenario, s_norm, phi);
    if t >= t_star {
        return Ok(w_star);
    }
    Ok(-amplitude(scenario) * (scenario.omega() * t / s_norm + phi).cos() + scenario.initial_energy())
}

/// `C(T) = ‖H‖‖ρ‖ sin(ωT/c + φ)/c` up to `T_c*`, zero afterwards.
pub fn c_curve_su2(scenario: &Scenario, t: f64) -> Result<f64> {
    let s_norm = structure_norm(scenario.algebra())?;
    let phi = phi_angle(scenario)?;
    let (t_star, _) = star(scenario, s_norm, phi);
    if t >= t_star {
        return Ok(0.0);
    }
    let hr = scenario.h_f_c().frob_norm() * scenario.rho_i_c().frob_norm();
    Ok(hr * (scenario.omega() * t / s_norm + phi).sin() / s_norm)
}

/// Generalized inverse of [`work_curve_su2`]: the least `T` reaching `w`.
pub fn invert_work_su2(scenario: &Scenario, w: f64) -> Result<f64> {
    let s_norm = structure_norm(scenario.algebra())?;
    let phi = phi_angle(scenario)?;
    let (_, w_star) = star(scenario, s_norm, phi);
    if w > w_star + 1e-12 * w_star.abs().max(1.0) {
        return Err(Error::Unreachable { target: w, max: w_star });
    }
    if w <= 0.0 {
        return Ok(0.0);
    }
    let arg = (phi.cos() - w / amplitude(scenario)).clamp(-1.0, 1.0);
    Ok(s_norm * (arg.acos() - phi) / scenario.omega())
}

/// Scenario for total-spin control with final field `b_f`, `H_c^f = B·S`
/// and `S = Σ_x σ^{(x)}/2`. `rho_i` is projected onto the algebra.
pub fn heisenberg_scenario(
    b_f: [f64; 3],
    rho_i: &HermitianOperator,
    omega: f64,
    n_sites: usize,
) -> Result<Scenario> {
    let algebra = ControlAlgebra::standard(StandardAlgebra::HeisenbergTotalSpin(n_sites))?;
    let spin = crate::algebra::total_spin(n_sites)?;
    let mut h = HermitianOperator::zeros(spin[0].dim());
    for (b, s) in b_f.iter().zip(&spin) {
        h = h.axpy(*b, s);
    }
    Scenario::from_density(algebra, &h, rho_i, omega)
}

/// `⟨S⟩ = tr[S ρ]` for a state on `n_sites` spins.
pub fn spin_expectation(rho: &HermitianOperator, n_sites: usize) -> Result<[f64; 3]> {
    let spin = crate::algebra::total_spin(n_sites)?;
    Ok([0, 1, 2].map(|a| spin[a].hs_inner_unchecked(rho)))
}

/// Product state with every spin pointing along the unit vector `n`.
pub fn product_state(direction: [f64; 3], n_sites: usize) -> Result<HermitianOperator> {
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::InvalidInput("direction must be nonzero".into()));
    }
    let [x, y, z] = direction.map(|v| v / norm);
    let single = HermitianOperator::new(nalgebra::DMatrix::from_row_slice(
        2,
        2,
        &[
            num_complex::Complex64::new((1.0 + z) / 2.0, 0.0),
            num_complex::Complex64::new(x / 2.0, -y / 2.0),
            num_complex::Complex64::new(x / 2.0, y / 2.0),
            num_complex::Complex64::new((1.0 - z) / 2.0, 0.0),
        ],
    ))?;
    let mut out = nalgebra::DMatrix::<num_complex::Complex64>::identity(1, 1);
    for _ in 0..n_sites {
        out = out.kronecker(single.matrix());
    }
    HermitianOperator::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::work_of_unitary;
    use crate::operator::pauli;
    use crate::solver::{residual_map_f, solve, SolverConfig};

    fn su2() -> ControlAlgebra {
        ControlAlgebra::standard(StandardAlgebra::Su2SpinHalf).unwrap()
    }

    fn tilted(phi: f64) -> Scenario {
        let rho = &pauli::z().scaled(0.5 * phi.cos()) + &pauli::x().scaled(0.5 * phi.sin());
        Scenario::new(su2(), pauli::z(), rho, 1.0).unwrap()
    }

    #[test]
    fn structure_norms() {
        assert!((structure_norm(&su2()).unwrap() - 0.5).abs() < 1e-15);
        let h3 = ControlAlgebra::standard(StandardAlgebra::HeisenbergTotalSpin(3)).unwrap();
        assert!((structure_norm(&h3).unwrap() - 3f64.sqrt() / 2.0).abs() < 1e-14);
        let su3 = ControlAlgebra::standard(StandardAlgebra::FullTraceless(3)).unwrap();
        assert!(matches!(structure_norm(&su3), Err(Error::NotSu2 { .. })));
        // an abelian 3-dimensional algebra of diagonal matrices
        let diag = ControlAlgebra::from_basis(
            vec![
                HermitianOperator::from_diagonal(&[1.0, -1.0, 0.0, 0.0]),
                HermitianOperator::from_diagonal(&[0.0, 0.0, 1.0, -1.0]),
                HermitianOperator::from_diagonal(&[1.0, 1.0, -1.0, -1.0]),
            ],
            "diag",
        )
        .unwrap();
        assert!(matches!(structure_norm(&diag), Err(Error::NotSu2 { .. })));
    }

    #[test]
    fn phi_cases() {
        let aligned = Scenario::new(su2(), pauli::z(), pauli::z().scaled(0.3), 1.0).unwrap();
        assert_eq!(phi_angle(&aligned).unwrap(), 0.0);
        let anti = Scenario::new(su2(), pauli::z(), pauli::z().scaled(-0.3), 1.0).unwrap();
        assert!((phi_angle(&anti).unwrap() - PI).abs() < 1e-15);
        assert!((phi_angle(&tilted(PI / 2.0)).unwrap() - PI / 2.0).abs() < 1e-15);
        let zero = Scenario::new(su2(), pauli::z(), HermitianOperator::zeros(2), 1.0).unwrap();
        assert!(matches!(phi_angle(&zero), Err(Error::ZeroOperator(_))));
    }

    #[test]
    fn generator_for_tilted_state() {
        let phi = PI / 3.0;
        let s = tilted(phi);
        let sol = optimal_generator(&s).unwrap();
        assert!(sol.generator.max_abs_diff(&pauli::y()) < 1e-14);
        assert!(sol.generator.hs_inner(s.h_f_c()).unwrap().abs() < 1e-14);
        assert!(sol.generator.hs_inner(s.rho_i_c()).unwrap().abs() < 1e-14);
        assert!((sol.t_star - 0.5 * (PI - phi)).abs() < 1e-15);
    }

    #[test]
    fn commuting_generator_is_deterministic() {
        let s = Scenario::new(su2(), pauli::z(), pauli::z().scaled(0.5), 1.0).unwrap();
        let a = optimal_generator(&s).unwrap();
        let b = optimal_generator(&s).unwrap();
        assert_eq!(a.generator.max_abs_diff(&b.generator), 0.0);
        assert!(a.generator.hs_inner(&pauli::z()).unwrap().abs() < 1e-15);
        assert!((a.generator.frob_norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn spin_flip_curve() {
        let rho = HermitianOperator::from_diagonal(&[1.0, 0.0]);
        let s = Scenario::from_density(su2(), &pauli::z(), &rho, 1.0).unwrap();
        for t in [0.0, 0.2, 0.9, 1.3] {
            let w = work_curve_su2(&s, t).unwrap();
            assert!((w - (1.0 - (2.0 * t).cos())).abs() < 1e-14);
        }
        assert!((work_curve_su2(&s, PI / 2.0).unwrap() - 2.0).abs() < 1e-14);
        assert_eq!(work_curve_su2(&s, 5.0).unwrap(), 2.0);
        let (t_star, w_star) = t_star_w_star(&s).unwrap();
        assert!((t_star - PI / 2.0).abs() < 1e-15);
        assert!((w_star - 2.0).abs() < 1e-15);
    }

    #[test]
    fn anti_aligned_is_already_optimal() {
        let s = Scenario::new(su2(), pauli::z(), pauli::z().scaled(-0.5), 1.0).unwrap();
        let (t_star, w_star) = t_star_w_star(&s).unwrap();
        assert!(t_star.abs() < 1e-15);
        assert!(w_star.abs() < 1e-15);
    }

    #[test]
    fn closed_form_matches_generator_evolution() {
        let phi = 0.8;
        let s = tilted(phi);
        let sol = optimal_generator(&s).unwrap();
        for t in [0.1, 0.7, sol.t_star] {
            let direct = work_of_unitary(&s, &sol.generator.scaled(s.omega()), t).unwrap();
            assert!((direct - work_curve_su2(&s, t).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn plus_branch_beats_minus_branch() {
        let phi = 0.5;
        let s = tilted(phi);
        let sol = optimal_generator(&s).unwrap();
        let minus = sol.generator.scaled(-1.0);
        // ωT/c inside (φ, π − φ): both signs solve the equation with C ≥ 0
        for theta in [0.7, 1.2, 2.4] {
            let t = theta * sol.s_norm / s.omega();
            let f = residual_map_f(&s, &minus, t).unwrap();
            let c = minus.hs_inner(&f).unwrap() / 2.0;
            assert!(c > 0.0);
            assert!(f.axpy(-c, &minus).frob_norm() < 1e-14);
            let w_plus = work_of_unitary(&s, &sol.generator, t).unwrap();
            let w_minus = work_of_unitary(&s, &minus, t).unwrap();
            assert!(w_plus > w_minus);
        }
    }

    #[test]
    fn c_curve_matches_solver() {
        let s = tilted(0.3);
        let sol = solve(&s, 0.6, &SolverConfig::default(), None).unwrap();
        assert!((sol.c_value - c_curve_su2(&s, 0.6).unwrap()).abs() < 1e-12);
        let (t_star, _) = t_star_w_star(&s).unwrap();
        assert!(c_curve_su2(&s, t_star).unwrap().abs() < 1e-15);
    }

    #[test]
    fn inversion_round_trip() {
        let s = tilted(0.4);
        let (t_star, w_star) = t_star_w_star(&s).unwrap();
        for t in [0.1, 0.5, 1.0, t_star] {
            let w = work_curve_su2(&s, t).unwrap();
            assert!((invert_work_su2(&s, w).unwrap() - t).abs() < 1e-7);
        }
        assert_eq!(invert_work_su2(&s, 0.0).unwrap(), 0.0);
        assert!(matches!(invert_work_su2(&s, w_star + 1.0), Err(Error::Unreachable { .. })));
    }

    #[test]
    fn heisenberg_three_sites() {
        let rho = product_state([1.0, 0.0, 0.0], 3).unwrap();
        let s = heisenberg_scenario([0.0, 0.0, 1.0], &rho, 1.0, 3).unwrap();
        let spin = spin_expectation(&rho, 3).unwrap();
        assert!((spin[0] - 1.5).abs() < 1e-14);
        assert!((phi_angle(&s).unwrap() - PI / 2.0).abs() < 1e-12);
        let c = 3f64.sqrt() / 2.0;
        for t in [0.2, 0.9, 1.3] {
            let w = work_curve_su2(&s, t).unwrap();
            assert!((w - 1.5 * (t / c).sin()).abs() < 1e-12);
        }
        let (_, w_star) = t_star_w_star(&s).unwrap();
        assert!((w_star - 1.5).abs() < 1e-12);
    }

    #[test]
    fn heisenberg_generator_is_cross_product() {
        // B = ẑ, ⟨S⟩ along x̂: (ẑ × x̂)·S = S_y
        let rho = product_state([1.0, 0.0, 0.0], 2).unwrap();
        let s = heisenberg_scenario([0.0, 0.0, 1.0], &rho, 1.0, 2).unwrap();
        let sol = optimal_generator(&s).unwrap();
        let sy = crate::algebra::total_spin(2).unwrap()[1].normalized().unwrap();
        assert!(sol.generator.max_abs_diff(&sy) < 1e-13);
    }

    #[test]
    fn heisenberg_random_field_formula() {
        let b = [0.3, -0.8, 0.5];
        let rho = product_state([0.2, 0.9, -0.4], 2).unwrap();
        let s = heisenberg_scenario(b, &rho, 1.7, 2).unwrap();
        let spin = spin_expectation(&rho, 2).unwrap();
        let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        let sn = spin.iter().map(|v| v * v).sum::<f64>().sqrt();
        let phi = (b.iter().zip(&spin).map(|(x, y)| x * y).sum::<f64>() / (bn * sn)).acos();
        let c = 2f64.sqrt() / 2.0;
        let (t_star, _) = t_star_w_star(&s).unwrap();
        for t in [0.2 * t_star, 0.6 * t_star, t_star] {
            let expect = bn * sn * (phi.cos() - (1.7 * t / c + phi).cos());
            assert!((work_curve_su2(&s, t).unwrap() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn heisenberg_extensivity() {
        // ω ∝ √V keeps T_c* fixed while W_c* doubles with the site count
        let w = |n: usize| {
            let rho = product_state([1.0, 0.0, 0.0], n).unwrap();
            let s = heisenberg_scenario([0.0, 0.0, 1.0], &rho, (n as f64).sqrt(), n).unwrap();
            t_star_w_star(&s).unwrap()
        };
        let (t2, w2) = w(2);
        let (t4, w4) = w(4);
        assert!((w4 - 2.0 * w2).abs() < 1e-12);
        assert!((t4 - t2).abs() < 1e-12);
    }

    #[test]
    fn single_site_reduces_to_two_level() {
        let rho = HermitianOperator::from_diagonal(&[1.0, 0.0]);
        let s = heisenberg_scenario([0.0, 0.0, 2.0], &rho, 1.0, 1).unwrap();
        // H = 2·σ_z/2 = σ_z
        assert!(s.h_f_c().max_abs_diff(&pauli::z()) < 1e-15);
        assert!((t_star_w_star(&s).unwrap().1 - 2.0).abs() < 1e-14);
    }
}
