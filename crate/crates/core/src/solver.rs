//! Steepest-descent solver for the self-consistent equation
//! `C·X = −i[H, e^{−iωTX} ρ e^{+iωTX}]` on the unit sphere of the control
//! algebra.
//!
//! The cost is `g(X) = ‖F(X) − s⁺X‖²` with `s = tr[XF(X)]/D`, evaluated
//! directly so that it stays accurate down to round-off. Its gradient is
//! assembled from the adjoints of the linearized evolution maps.

use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::Scenario;
use crate::error::{Error, Result};
use crate::operator::{spectral_default, HermitianOperator, SpectralDecomposition};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Smallest step the line search tries before declaring a stall.
const MIN_STEP: f64 = 1e-18;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Stationarity test: stop when the tangent gradient norm falls below
    /// `grad_tol · c_scale · √g`. Near a root the gradient shrinks like `√g`,
    /// so this only fires at spurious stationary points.
    pub grad_tol: f64,
    /// Converged when `g ≤ cost_tol · (‖F‖ + C)²`.
    pub cost_tol: f64,
    pub armijo_c: f64,
    pub backtrack_factor: f64,
    pub restart_budget: usize,
    pub rng_seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            grad_tol: 1e-10,
            cost_tol: 1e-20,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            restart_budget: 32,
            rng_seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.grad_tol) || !positive(self.cost_tol) {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return Err(Error::InvalidInput("armijo_c must lie in (0, 1)".into()));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::InvalidInput("backtrack_factor must lie in (0, 1)".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidInput("max_iters must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Solution {
    pub t: f64,
    /// Unit-norm optimal generator.
    pub generator: HermitianOperator,
    pub c_value: f64,
    /// `‖C·X − F(X)‖`.
    pub residual: f64,
    /// `‖F(X)‖`, the scale the residual is certified against.
    pub f_norm: f64,
    pub work: f64,
    pub iterations: usize,
    pub restarts_used: usize,
}

impl Solution {
    /// `‖C·X − F‖ ≤ 1e-8 (1 + ‖F‖)` and `|‖X‖ − 1| ≤ 1e-10`.
    pub fn is_certified(&self) -> bool {
        certified(self.residual, self.f_norm) && (self.generator.frob_norm() - 1.0).abs() <= 1e-10
    }
}

fn certified(residual: f64, f_norm: f64) -> bool {
    residual <= 1e-8 * (1.0 + f_norm)
}

/// Outcome of one descent run.
#[derive(Clone, Debug, Serialize)]
pub struct Candidate {
    pub restart: usize,
    pub converged: bool,
    pub cost: f64,
    pub residual: f64,
    pub c_value: f64,
    pub work: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct Diagnostics {
    pub t: f64,
    pub candidates: Vec<Candidate>,
}

impl Diagnostics {
    pub fn best_residual(&self) -> f64 {
        self.candidates.iter().map(|c| c.residual).fold(f64::INFINITY, f64::min)
    }
}

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} attempts at T = {}, best residual {:.3e}",
            self.candidates.len(),
            self.t,
            self.best_residual()
        )
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceRecord {
    Iteration { restart: usize, iter: usize, g: f64, grad_norm: f64, step: f64 },
    Restart { restart: usize, converged: bool, g: f64, work: f64 },
}

pub trait TraceSink {
    fn record(&mut self, record: &TraceRecord);
}

/// Writes one JSON object per line. Write errors are logged and otherwise
/// ignored so that tracing never aborts a solve.
pub struct JsonLinesTrace<W: Write> {
    out: W,
}

impl<W: Write> JsonLinesTrace<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> TraceSink for JsonLinesTrace<W> {
    fn record(&mut self, record: &TraceRecord) {
        let line = serde_json::to_string(record).expect("trace records serialize");
        if let Err(e) = writeln!(self.out, "{line}") {
            log::warn!("trace write failed: {e}");
        }
    }
}

/// Everything derived from one evaluation of `F` at a point.
struct Eval {
    spec: SpectralDecomposition,
    rho_t: HermitianOperator,
    f: HermitianOperator,
    s: f64,
    g: f64,
}

fn evaluate(scenario: &Scenario, x: &HermitianOperator, t: f64) -> Result<Eval> {
    let spec = spectral_default(x)?;
    let rho_t = spec.conjugate(scenario.omega() * t, scenario.rho_i_c());
    let f = scenario.h_f_c().comm_i_unchecked(&rho_t);
    let s = x.hs_inner_unchecked(&f) / x.dim() as f64;
    let r = f.axpy(-s.max(0.0), x);
    let g = r.frob_norm().powi(2);
    Ok(Eval { spec, rho_t, f, s, g })
}

fn check_args(scenario: &Scenario, x: &HermitianOperator) -> Result<()> {
    if x.dim() != scenario.dim() {
        return Err(Error::Dimension { left: x.dim(), right: scenario.dim() });
    }
    scenario.algebra().ensure_contains(x)
}

/// `F(X) = −i[H_c^f, e^{−iωTX} ρ_c^i e^{+iωTX}]`.
pub fn residual_map_f(scenario: &Scenario, x: &HermitianOperator, t: f64) -> Result<HermitianOperator> {
    check_args(scenario, x)?;
    Ok(evaluate(scenario, x, t)?.f)
}

/// `g(X) = ‖F(X) − s⁺X‖²` with `s = tr[XF(X)]/D`.
pub fn cost_g(scenario: &Scenario, x: &HermitianOperator, t: f64) -> Result<f64> {
    check_args(scenario, x)?;
    Ok(evaluate(scenario, x, t)?.g)
}

/// `K(Z) = ∫_0^{ωT} e^{−iθX} Z e^{+iθX} dθ`.
pub fn kappa_map(x: &HermitianOperator, omega_t: f64, z: &HermitianOperator) -> Result<HermitianOperator> {
    if x.dim() != z.dim() {
        return Err(Error::Dimension { left: x.dim(), right: z.dim() });
    }
    Ok(spectral_default(x)?.phase_integral(omega_t, z))
}

/// Hilbert–Schmidt adjoint of `K`, i.e. `K` built from `−X`.
fn kappa_adjoint(spec: &SpectralDecomposition, tau: f64, z: &HermitianOperator) -> HermitianOperator {
    spec.block_weighted(z, |gap| {
        if gap == 0.0 {
            Complex64::new(tau, 0.0)
        } else {
            (Complex64::from_polar(1.0, tau * gap) - 1.0) / (I * gap)
        }
    })
}

/// `[A, B]` for Hermitian inputs given as raw matrices.
fn bracket(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    a * b - b * a
}

/// `J(Z) = [H, [ρ(T), Z]]`, where `ρ(T)` is the state evolved under `x`.
pub fn j_map(scenario: &Scenario, x: &HermitianOperator, t: f64, z: &HermitianOperator) -> Result<HermitianOperator> {
    check_args(scenario, x)?;
    if z.dim() != x.dim() {
        return Err(Error::Dimension { left: z.dim(), right: x.dim() });
    }
    let rho_t = spectral_default(x)?.conjugate(scenario.omega() * t, scenario.rho_i_c());
    Ok(j_apply(scenario.h_f_c(), &rho_t, z))
}

fn j_apply(h: &HermitianOperator, rho_t: &HermitianOperator, z: &HermitianOperator) -> HermitianOperator {
    let inner = bracket(rho_t.matrix(), z.matrix());
    HermitianOperator::symmetrized(bracket(h.matrix(), &inner))
}

/// Adjoint of `J`: `A ↦ [ρ(T), [H, A]]`.
fn j_adjoint(h: &HermitianOperator, rho_t: &HermitianOperator, a: &HermitianOperator) -> HermitianOperator {
    let inner = bracket(h.matrix(), a.matrix());
    HermitianOperator::symmetrized(bracket(rho_t.matrix(), &inner))
}

/// Euclidean gradient of `g` in the trace pairing (`dg = tr[G dX]`), before
/// projection onto the algebra.
fn ambient_gradient(scenario: &Scenario, x: &HermitianOperator, t: f64, e: &Eval) -> HermitianOperator {
    let d = x.dim() as f64;
    let n2 = x.frob_norm().powi(2);
    let (m, s2) = if e.s > 0.0 { (e.s * (2.0 - n2), e.s * e.s) } else { (0.0, 0.0) };
    let a = e.f.axpy(-m, x);
    let back = kappa_adjoint(&e.spec, scenario.omega() * t, &j_adjoint(scenario.h_f_c(), &e.rho_t, &a));
    back.axpy(-m, &e.f).axpy(s2, x).scaled(2.0 / d)
}

/// Gradient of `cost_g` with respect to `x`, projected onto the algebra.
/// Pairs with perturbations through the plain trace: `dg = tr[grad · dX]`.
pub fn grad_g(scenario: &Scenario, x: &HermitianOperator, t: f64) -> Result<HermitianOperator> {
    check_args(scenario, x)?;
    let e = evaluate(scenario, x, t)?;
    Ok(scenario.algebra().project_unchecked(&ambient_gradient(scenario, x, t, &e)))
}

/// `C = max(0, tr[X F(X)]/D)` for a unit-norm generator.
pub fn c_of_solution(scenario: &Scenario, sol: &Solution, t: f64) -> Result<f64> {
    check_args(scenario, &sol.generator)?;
    Ok(evaluate(scenario, &sol.generator, t)?.s.max(0.0))
}

fn work_from(scenario: &Scenario, rho_t: &HermitianOperator) -> f64 {
    -scenario.h_f_c().hs_inner_unchecked(rho_t) + scenario.initial_energy()
}

/// Starting point for a solve. A previous solution is reused verbatim;
/// otherwise `−i[H, ρ]` when it is nonzero, and in the commuting case the
/// top eigenvector of `Z ↦ [H, [ρ, Z]]` on the algebra. Degenerate top
/// eigenspaces are resolved by a random combination drawn from `config.rng_seed`.
pub fn initial_guess(
    scenario: &Scenario,
    _t: f64,
    prev: Option<&Solution>,
    config: &SolverConfig,
) -> Result<HermitianOperator> {
    if let Some(p) = prev {
        return Ok(p.generator.clone());
    }
    let h = scenario.h_f_c();
    let rho = scenario.rho_i_c();
    let comm = h.comm_i_unchecked(rho);
    if comm.frob_norm() > 1e-10 {
        return comm.normalized().ok_or(Error::ZeroOperator("commutator"));
    }

    let algebra = scenario.algebra();
    let n = algebra.len();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for (k, b) in algebra.basis().iter().enumerate() {
        let image = j_apply(h, rho, b);
        for (j, v) in algebra.coords_unchecked(&image).into_iter().enumerate() {
            m[(j, k)] = v;
        }
    }
    let m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m);
    let top = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top <= 1e-12 {
        return Err(Error::DegenerateScenario(format!(
            "largest second-order gain {top:.3e} is not positive"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let cut = top - 1e-9 * top.abs().max(1.0);
    let mut coords = vec![0.0; n];
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda >= cut {
            let w: f64 = StandardNormal.sample(&mut rng);
            for (j, c) in coords.iter_mut().enumerate() {
                *c += w * eig.eigenvectors[(j, k)];
            }
        }
    }
    algebra
        .from_coords(&coords)
        .normalized()
        .ok_or_else(|| Error::Numerical("degenerate eigenspace combination vanished".into()))
}

/// Random unit vector in the algebra, orthogonal to `H_c^f` and `ρ_c^i`
/// whenever the algebra leaves room for it. Stream `seed + index`.
pub fn restart_guess(scenario: &Scenario, seed: u64, index: usize) -> Result<HermitianOperator> {
    let algebra = scenario.algebra();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(index as u64));
    let coords: Vec<f64> = (0..algebra.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let raw = algebra.from_coords(&coords);

    let mut frame: Vec<HermitianOperator> = Vec::new();
    for v in [scenario.h_f_c(), scenario.rho_i_c()] {
        let mut r = v.clone();
        for q in &frame {
            r = r.axpy(-r.hs_inner_unchecked(q) / q.hs_inner_unchecked(q), q);
        }
        if r.frob_norm() > 1e-12 * v.frob_norm().max(1e-300) {
            frame.push(r);
        }
    }
    let mut x = raw.clone();
    for q in &frame {
        x = x.axpy(-x.hs_inner_unchecked(q) / q.hs_inner_unchecked(q), q);
    }
    x.normalized()
        .or_else(|| raw.normalized())
        .ok_or_else(|| Error::Numerical("random restart vector vanished".into()))
}

struct Run {
    x: HermitianOperator,
    eval: Eval,
    iterations: usize,
    converged: bool,
}

fn descend(
    scenario: &Scenario,
    t: f64,
    config: &SolverConfig,
    start: HermitianOperator,
    restart: usize,
    trace: &mut Option<&mut dyn TraceSink>,
) -> Result<Run> {
    let algebra = scenario.algebra();
    let d = scenario.dim() as f64;
    let c_scale = scenario.c_scale();
    let mut x = algebra.project_unchecked(&start).normalized().ok_or(Error::ZeroOperator("initial guess"))?;
    let mut e = evaluate(scenario, &x, t)?;
    let mut iterations = 0;
    let mut prev: Option<(HermitianOperator, HermitianOperator)> = None;

    let done = |e: &Eval| {
        let c = e.s.max(0.0);
        let scale = e.f.frob_norm() + c;
        e.g <= config.cost_tol * scale * scale || e.g <= (1e-15 * c_scale).powi(2)
    };

    while iterations < config.max_iters {
        if done(&e) {
            return Ok(Run { x, eval: e, iterations, converged: true });
        }
        let grad = algebra.project_unchecked(&ambient_gradient(scenario, &x, t, &e));
        let radial = grad.hs_inner_unchecked(&x) / x.hs_inner_unchecked(&x);
        let tangent = grad.axpy(-radial, &x);
        let grad_norm = tangent.frob_norm();
        if grad_norm <= config.grad_tol * c_scale * e.g.sqrt() {
            break;
        }
        let dir = tangent.scaled(1.0 / grad_norm);
        let slope = d * grad_norm;

        // Barzilai–Borwein trial step, capped at 1
        let mut step = 1.0;
        if let Some((px, pg)) = &prev {
            let dx = &x - px;
            let sy = dx.hs_inner_unchecked(&(&tangent - pg));
            if sy > 0.0 {
                step = (dx.hs_inner_unchecked(&dx) / sy * grad_norm).clamp(MIN_STEP, 1.0);
            }
        }
        prev = Some((x.clone(), tangent.clone()));
        let mut accepted = None;
        while step >= MIN_STEP {
            let trial = algebra.project_unchecked(&x.axpy(-step, &dir));
            if let Some(trial) = trial.normalized() {
                let te = evaluate(scenario, &trial, t)?;
                if te.g <= e.g - config.armijo_c * step * slope {
                    accepted = Some((trial, te));
                    break;
                }
            }
            step *= config.backtrack_factor;
        }
        iterations += 1;
        let Some((nx, ne)) = accepted else {
            break;
        };
        debug_assert!(ne.g <= e.g);
        if let Some(sink) = trace.as_deref_mut() {
            sink.record(&TraceRecord::Iteration { restart, iter: iterations, g: ne.g, grad_norm, step });
        }
        x = nx;
        e = ne;
    }
    let converged = done(&e) || certified(e.g.sqrt(), e.f.frob_norm());
    Ok(Run { x, eval: e, iterations, converged })
}

fn to_solution(scenario: &Scenario, t: f64, run: Run, restarts_used: usize) -> Solution {
    let c_value = run.eval.s.max(0.0);
    let residual = run.eval.f.axpy(-c_value, &run.x).frob_norm();
    Solution {
        t,
        work: work_from(scenario, &run.eval.rho_t),
        f_norm: run.eval.f.frob_norm(),
        generator: run.x,
        c_value,
        residual,
        iterations: run.iterations,
        restarts_used,
    }
}

fn candidate(restart: usize, sol: &Solution, converged: bool) -> Candidate {
    Candidate {
        restart,
        converged,
        cost: sol.residual * sol.residual,
        residual: sol.residual,
        c_value: sol.c_value,
        work: sol.work,
        iterations: sol.iterations,
    }
}

fn check_t(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidInput(format!("T must be positive, got {t}")));
    }
    Ok(())
}

/// Solves at time `t`, starting from `guess` or the default initial guess.
/// On a stall, restarts from random directions up to `restart_budget` times
/// and returns the first certified solution.
pub fn solve(
    scenario: &Scenario,
    t: f64,
    config: &SolverConfig,
    guess: Option<&HermitianOperator>,
) -> Result<Solution> {
    solve_traced(scenario, t, config, guess, None)
}

pub fn solve_traced(
    scenario: &Scenario,
    t: f64,
    config: &SolverConfig,
    guess: Option<&HermitianOperator>,
    mut trace: Option<&mut dyn TraceSink>,
) -> Result<Solution> {
    config.validate()?;
    check_t(t)?;
    let first = match guess {
        Some(g) => {
            check_args(scenario, g)?;
            g.clone()
        }
        None => initial_guess(scenario, t, None, config)?,
    };
    let mut diagnostics = Diagnostics { t, candidates: Vec::new() };
    for restart in 0..=config.restart_budget {
        let start = if restart == 0 { first.clone() } else { restart_guess(scenario, config.rng_seed, restart)? };
        let run = descend(scenario, t, config, start, restart, &mut trace)?;
        let converged = run.converged;
        let sol = to_solution(scenario, t, run, restart);
        let ok = converged && sol.is_certified();
        if let Some(sink) = trace.as_deref_mut() {
            sink.record(&TraceRecord::Restart { restart, converged: ok, g: sol.residual.powi(2), work: sol.work });
        }
        diagnostics.candidates.push(candidate(restart, &sol, ok));
        if ok {
            return Ok(sol);
        }
        log::debug!("restart {restart} at T = {t} stalled with residual {:.3e}", sol.residual);
    }
    Err(Error::NoConvergence(Box::new(diagnostics)))
}

/// Landscape exploration: `attempts` independent descents (attempt 0 from
/// `guess` or the default initial guess, the rest from random restarts with
/// stream `rng_seed + index`). Returns every certified solution ordered by
/// attempt index, together with diagnostics for all attempts. Attempts run
/// on the rayon pool; the result does not depend on the pool size.
pub fn explore(
    scenario: &Scenario,
    t: f64,
    config: &SolverConfig,
    guess: Option<&HermitianOperator>,
    attempts: usize,
) -> Result<(Vec<Solution>, Diagnostics)> {
    config.validate()?;
    check_t(t)?;
    let first = match guess {
        Some(g) => Some(g.clone()),
        None => initial_guess(scenario, t, None, config).ok(),
    };
    let runs: Vec<Result<(Solution, bool)>> = (0..attempts)
        .into_par_iter()
        .map(|k| {
            let start = match (k, &first) {
                (0, Some(g)) => g.clone(),
                _ => restart_guess(scenario, config.rng_seed, k)?,
            };
            let run = descend(scenario, t, config, start, k, &mut None)?;
            let converged = run.converged;
            let sol = to_solution(scenario, t, run, k);
            let ok = converged && sol.is_certified();
            Ok((sol, ok))
        })
        .collect();
    let mut diagnostics = Diagnostics { t, candidates: Vec::with_capacity(attempts) };
    let mut solutions = Vec::new();
    for (k, r) in runs.into_iter().enumerate() {
        let (sol, ok) = r?;
        diagnostics.candidates.push(candidate(k, &sol, ok));
        if ok {
            solutions.push(sol);
        }
    }
    Ok((solutions, diagnostics))
}

/// The maximum-work certified solution from [`explore`].
pub fn solve_best(
    scenario: &Scenario,
    t: f64,
    config: &SolverConfig,
    guess: Option<&HermitianOperator>,
    attempts: usize,
) -> Result<Solution> {
    let (solutions, diagnostics) = explore(scenario, t, config, guess, attempts)?;
    solutions
        .into_iter()
        .reduce(|best, s| if s.work > best.work { s } else { best })
        .ok_or_else(|| Error::NoConvergence(Box::new(diagnostics)))
}
