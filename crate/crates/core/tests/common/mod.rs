#![allow(dead_code)]

use ergoflow::algebra::{build_standard, ControlAlgebra, Scenario, StandardAlgebra};
use ergoflow::hubbard::{build_full_fock, HubbardSpec};
use ergoflow::metrics::{sweep, Backend};
use ergoflow::operator::{pauli, HermitianOperator};
use ergoflow::solver::SolverConfig;
use ergoflow::su2;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn random_state(rng: &mut ChaCha8Rng, d: usize) -> Vec<Complex64> {
    let v: Vec<Complex64> = (0..d).map(|_| Complex64::new(normal(rng), normal(rng))).collect();
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / n).collect()
}

/// Random full-rank density matrix: a random pure state mixed with noise.
pub fn random_density(rng: &mut ChaCha8Rng, d: usize) -> HermitianOperator {
    let p: f64 = rng.random_range(0.3..0.95);
    let pure = HermitianOperator::projector(&random_state(rng, d));
    &pure.scaled(p) + &HermitianOperator::identity(d).scaled((1.0 - p) / d as f64)
}

pub fn random_in(rng: &mut ChaCha8Rng, algebra: &ControlAlgebra) -> HermitianOperator {
    let coords: Vec<f64> = (0..algebra.len()).map(|_| normal(rng)).collect();
    algebra.from_coords(&coords)
}

pub fn random_traceless(rng: &mut ChaCha8Rng, d: usize) -> HermitianOperator {
    let a = build_standard(StandardAlgebra::FullTraceless(d)).unwrap();
    random_in(rng, &a)
}

/// Qubit with `ρ` at Bloch radius `r` and angle `φ` from the field.
pub fn qubit(phi: f64, r: f64) -> (Scenario, HermitianOperator, HermitianOperator) {
    let a = build_standard(StandardAlgebra::Su2SpinHalf).unwrap();
    let h = pauli::z().scaled(0.5);
    let rho = &HermitianOperator::identity(2).scaled(0.5)
        + &(&pauli::z().scaled(0.5 * r * phi.cos()) + &pauli::x().scaled(0.5 * r * phi.sin()));
    (Scenario::from_density(a, &h, &rho, 1.0).unwrap(), rho, h)
}

pub fn random_su2(rng: &mut ChaCha8Rng) -> (Scenario, HermitianOperator, HermitianOperator) {
    let a = build_standard(StandardAlgebra::Su2SpinHalf).unwrap();
    let h = random_in(rng, &a);
    let rho = random_density(rng, 2);
    let omega = rng.random_range(0.5..2.0);
    (Scenario::from_density(a, &h, &rho, omega).unwrap(), rho, h)
}

pub fn random_full(rng: &mut ChaCha8Rng, d: usize) -> (Scenario, HermitianOperator, HermitianOperator) {
    let a = build_standard(StandardAlgebra::FullTraceless(d)).unwrap();
    let h = random_in(rng, &a);
    let rho = random_density(rng, d);
    (Scenario::from_density(a, &h, &rho, 1.0).unwrap(), rho, h)
}

pub fn hubbard_spec(rng: &mut ChaCha8Rng) -> HubbardSpec {
    HubbardSpec { n: 2, sites: 2, particles: 2, occupations: vec![2, 0], u_f: random_traceless(rng, 2), omega: 1.0 }
}

pub struct Regression {
    pub name: &'static str,
    pub scenario: Scenario,
    /// Full initial state and a final Hamiltonian whose part outside the
    /// algebra is zero, for ergotropy comparisons.
    pub rho: HermitianOperator,
    pub h: HermitianOperator,
    pub is_su2: bool,
}

/// Fixed set of scenarios shared by the property suites.
pub fn regression_scenarios() -> Vec<Regression> {
    let mut out = Vec::new();
    let mut push = |name, (scenario, rho, h): (Scenario, HermitianOperator, HermitianOperator), is_su2| {
        let h_c = scenario.algebra().project(&h).unwrap();
        out.push(Regression { name, scenario, rho, h: h_c, is_su2 })
    };
    push("qubit φ=0", qubit(0.0, 0.9), true);
    push("qubit φ=0.7", qubit(0.7, 0.8), true);
    push("qubit φ=2.0", qubit(2.0, 1.0), true);
    let mut r = rng(17);
    push("random su(2)", random_su2(&mut r), true);
    push("su(3) a", random_full(&mut r, 3), false);
    push("su(3) b", random_full(&mut r, 3), false);
    push("su(4)", random_full(&mut r, 4), false);

    let rho = &su2::product_state([0.6, 0.0, 0.8], 2).unwrap().scaled(0.9) + &HermitianOperator::identity(4).scaled(0.025);
    let s = su2::heisenberg_scenario([0.3, -0.2, 1.0], &rho, 1.0, 2).unwrap();
    let h = s.h_f_c().clone();
    push("heisenberg 2 sites", (s, rho, h), true);

    let spec = hubbard_spec(&mut r);
    let fock = build_full_fock(&spec).unwrap();
    let s = fock.full_scenario(&spec).unwrap();
    let rho = fock.reference_state(&spec.occupations).unwrap();
    let h = s.h_f_c().clone();
    push("hubbard fock", (s, rho, h), false);

    let sub = ControlAlgebra::from_basis(
        [pauli::x(), pauli::y(), pauli::z()]
            .iter()
            .map(|p| p.kron(&HermitianOperator::identity(2)).scaled(0.5))
            .collect(),
        "su(2) on first qubit",
    )
    .unwrap();
    let rho = random_density(&mut r, 4);
    let h = random_in(&mut r, &sub);
    push("qubit in pair", (Scenario::from_density(sub, &h, &rho, 1.0).unwrap(), rho, h), true);
    out
}

/// `F(X) = −i[H, e^{−iωTX} ρ e^{iωTX}]` and `C = tr[XF]/D`, evaluated from
/// dense matrices independently of the solver.
pub fn certificate(scenario: &Scenario, x: &HermitianOperator, t: f64) -> (f64, f64, f64) {
    let d = scenario.dim();
    let u = dense_exp(x, scenario.omega() * t);
    let rho_t = &u * scenario.rho_i_c().matrix() * u.adjoint();
    let h = scenario.h_f_c().matrix();
    let f: DMatrix<Complex64> = (h * &rho_t - &rho_t * h) * Complex64::new(0.0, -1.0);
    let c = (x.matrix() * &f).trace().re / d as f64;
    let r = x.matrix() * Complex64::new(c, 0.0) - &f;
    let norm = |m: &DMatrix<Complex64>| ((m.adjoint() * m).trace().re / d as f64).sqrt();
    (c, norm(&r), norm(&f))
}

/// `e^{−iθX}` by scaling and squaring of a Taylor series.
pub fn dense_exp(x: &HermitianOperator, theta: f64) -> DMatrix<Complex64> {
    let d = x.dim();
    let a = x.matrix() * Complex64::new(0.0, -theta);
    let norm: f64 = a.iter().map(|z| z.norm()).sum();
    let squarings = (norm.max(1.0).log2().ceil() as i32 + 4).max(0);
    let a = a / Complex64::new(2f64.powi(squarings), 0.0);
    let mut term = DMatrix::<Complex64>::identity(d, d);
    let mut sum = term.clone();
    for k in 1..30 {
        term = &term * &a / Complex64::new(k as f64, 0.0);
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Onset of the plateau, from a numeric sweep over `[0, 2π/ω]`.
pub fn plateau_time(scenario: &Scenario, config: &SolverConfig, points: usize) -> Result<f64, String> {
    let t_max = 2.0 * std::f64::consts::PI / scenario.omega();
    let grid: Vec<f64> = (0..points).map(|k| t_max * k as f64 / (points - 1) as f64).collect();
    let curve = sweep(scenario, &grid, config, Backend::Numeric).map_err(|e| e.to_string())?;
    Ok(curve.plateau.map_or(t_max, |p| p.t_star))
}
