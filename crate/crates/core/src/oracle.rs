//! Brute-force check on the self-consistent solution: direct optimization
//! over piecewise-constant protocols with the same norm budget.
//!
//! The oracle only produces lower bounds on the optimal work. A protocol
//! beating the solver by more than tolerance points at a solver bug.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::Scenario;
use crate::error::{Error, Result};
use crate::operator::{check_density_matrix, spectral_default, HermitianOperator, SpectralDecomposition};

const NORM_SLACK: f64 = 1e-10;

/// Equal-duration segments `H_c(t) = segments[k]` on `[kT/M, (k+1)T/M)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PiecewiseProtocol {
    pub segments: Vec<HermitianOperator>,
    #[serde(rename = "T")]
    pub t: f64,
}

impl PiecewiseProtocol {
    pub fn constant(generator: &HermitianOperator, t: f64, m: usize) -> Self {
        Self { segments: vec![generator.clone(); m], t }
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn validate(&self, scenario: &Scenario) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::InvalidInput("protocol has no segments".into()));
        }
        if !(self.t.is_finite() && self.t >= 0.0) {
            return Err(Error::InvalidInput(format!("protocol duration must be nonnegative, got {}", self.t)));
        }
        for (k, seg) in self.segments.iter().enumerate() {
            scenario.algebra().ensure_contains(seg)?;
            let norm = seg.frob_norm();
            if norm > scenario.omega() + NORM_SLACK {
                return Err(Error::InvalidInput(format!(
                    "segment {k} has norm {norm} above the budget {}",
                    scenario.omega()
                )));
            }
        }
        Ok(())
    }

    /// `U_M ⋯ U_1` with `U_k = e^{−i(T/M)·segment_k}`.
    pub fn unitary(&self) -> Result<DMatrix<Complex64>> {
        let tau = self.t / self.segments.len() as f64;
        let d = self.segments.first().map_or(0, HermitianOperator::dim);
        let mut u = DMatrix::identity(d, d);
        for seg in &self.segments {
            u = seg.unitary(tau)? * u;
        }
        Ok(u)
    }
}

/// Parts of the Hamiltonian outside the control algebra.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Uncontrolled {
    /// Time-independent Hamiltonian acting alongside the control.
    pub h_u: HermitianOperator,
    /// Uncontrollable part of the final Hamiltonian.
    pub h_u_final: HermitianOperator,
    /// Full initial state.
    pub rho_i: HermitianOperator,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Evaluation {
    pub w_c: f64,
    /// Work of the full system when the uncontrolled parts are supplied.
    pub w_total: Option<f64>,
}

pub fn evaluate(protocol: &PiecewiseProtocol, scenario: &Scenario, uncontrolled: Option<&Uncontrolled>) -> Result<Evaluation> {
    protocol.validate(scenario)?;
    let u_c = protocol.unitary()?;
    let w_c = scenario.work_for_unitary(&u_c);
    let Some(unc) = uncontrolled else {
        return Ok(Evaluation { w_c, w_total: None });
    };
    let algebra = scenario.algebra();
    for h in [&unc.h_u, &unc.h_u_final] {
        let report = algebra.centralizer(h)?;
        if !report.commutes {
            return Err(Error::CentralizerViolation { residual: report.worst_residual });
        }
    }
    check_density_matrix(&unc.rho_i)?;
    let projected = algebra.project(&unc.rho_i)?;
    let mismatch = (&projected - scenario.rho_i_c()).frob_norm();
    if mismatch > 1e-9 * (1.0 + scenario.rho_i_c().frob_norm()) {
        return Err(Error::InvalidInput(format!(
            "full initial state does not project onto the scenario state (mismatch {mismatch:.3e})"
        )));
    }
    let h_f = scenario.h_f_c() + &unc.h_u_final;
    let u = &u_c * unc.h_u.unitary(protocol.t)?;
    let final_energy = h_f.hs_inner_unchecked(&unc.rho_i.conjugated(&u));
    let w_total = h_f.hs_inner_unchecked(&unc.rho_i) - final_energy;
    Ok(Evaluation { w_c, w_total: Some(w_total) })
}

/// Work of the protocol and its gradient with respect to each segment, in
/// the pairing `dW = Σ_k tr[G_k dX_k]`.
pub(crate) fn work_and_gradient(scenario: &Scenario, segments: &[HermitianOperator], t: f64) -> Result<(f64, Vec<HermitianOperator>)> {
    let tau = t / segments.len() as f64;
    let specs: Vec<SpectralDecomposition> = segments.iter().map(spectral_default).collect::<Result<_>>()?;
    let h = scenario.h_f_c();
    let mut states = Vec::with_capacity(segments.len() + 1);
    states.push(scenario.rho_i_c().clone());
    for spec in &specs {
        let next = spec.conjugate(tau, states.last().unwrap());
        states.push(next);
    }
    let work = h.hs_inner_unchecked(scenario.rho_i_c()) - h.hs_inner_unchecked(states.last().unwrap());

    let mut grads = vec![HermitianOperator::zeros(scenario.dim()); segments.len()];
    let mut observable = h.clone();
    for k in (0..segments.len()).rev() {
        // the observable seen just before segment k
        observable = specs[k].conjugate(-tau, &observable);
        let sigma = states[k].matrix();
        let o = observable.matrix();
        let g0 = HermitianOperator::symmetrized((sigma * o - o * sigma) * Complex64::new(0.0, 1.0));
        grads[k] = specs[k].phase_integral(tau, &g0);
    }
    Ok((work, grads))
}

/// Margin by which an oracle protocol may exceed the solver before the
/// solver is considered wrong: `1e-6·D‖H_c^f‖‖ρ_c^i‖`.
pub fn violation_tolerance(scenario: &Scenario) -> f64 {
    1e-6 * scenario.dim() as f64 * scenario.h_f_c().frob_norm() * scenario.rho_i_c().frob_norm()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub max_iters: usize,
    /// Stop once an accepted step improves the work by less than this,
    /// relative to the scenario's work bound.
    pub rel_improvement_tol: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { max_iters: 4000, rel_improvement_tol: 1e-14 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleResult {
    pub protocol: PiecewiseProtocol,
    pub w_c: f64,
    /// Final work of every attempt, by attempt index.
    pub attempt_work: Vec<f64>,
}

/// Best protocol found by projected gradient ascent from `attempts` random
/// starts. Attempt `k` draws from the stream seeded with `rng_seed + k`.
pub fn optimize_piecewise(
    scenario: &Scenario,
    t: f64,
    m: usize,
    attempts: usize,
    rng_seed: u64,
) -> Result<OracleResult> {
    optimize_piecewise_with(scenario, t, m, attempts, rng_seed, &OracleConfig::default())
}

pub fn optimize_piecewise_with(
    scenario: &Scenario,
    t: f64,
    m: usize,
    attempts: usize,
    rng_seed: u64,
    config: &OracleConfig,
) -> Result<OracleResult> {
    if m == 0 || attempts == 0 {
        return Err(Error::InvalidInput("segment count and attempts must be positive".into()));
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidInput(format!("T must be nonnegative, got {t}")));
    }
    let runs: Vec<Result<(PiecewiseProtocol, f64)>> = (0..attempts)
        .into_par_iter()
        .map(|k| ascend(scenario, t, m, rng_seed.wrapping_add(k as u64), config))
        .collect();
    let mut attempt_work = Vec::with_capacity(attempts);
    let mut best: Option<(PiecewiseProtocol, f64)> = None;
    for run in runs {
        let (protocol, w) = run?;
        attempt_work.push(w);
        if best.as_ref().is_none_or(|(_, b)| w > *b) {
            best = Some((protocol, w));
        }
    }
    let (protocol, w_c) = best.expect("at least one attempt");
    Ok(OracleResult { protocol, w_c, attempt_work })
}

fn clip(x: HermitianOperator, radius: f64) -> HermitianOperator {
    let n = x.frob_norm();
    if n > radius {
        x.scaled(radius / n)
    } else {
        x
    }
}

fn ascend(scenario: &Scenario, t: f64, m: usize, seed: u64, config: &OracleConfig) -> Result<(PiecewiseProtocol, f64)> {
    let algebra = scenario.algebra();
    let omega = scenario.omega();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut segs: Vec<HermitianOperator> = (0..m)
        .map(|_| {
            let coords: Vec<f64> = (0..algebra.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
            let x = algebra.from_coords(&coords);
            let n = x.frob_norm();
            x.scaled(omega / n)
        })
        .collect();
    let (mut work, mut grads) = work_and_gradient(scenario, &segs, t)?;
    let scale = scenario.work_upper_bound().max(f64::MIN_POSITIVE);
    let mut step = omega / (scale.max(1.0) * t.max(1.0));
    for _ in 0..config.max_iters {
        let projected: Vec<HermitianOperator> =
            grads.iter().map(|g| algebra.project_unchecked(g)).collect();
        let mut accepted = false;
        while step > 1e-16 {
            let trial: Vec<HermitianOperator> = segs
                .iter()
                .zip(&projected)
                .map(|(x, g)| clip(x.axpy(step, g), omega))
                .collect();
            let (w, g) = work_and_gradient(scenario, &trial, t)?;
            if w > work {
                let gain = w - work;
                segs = trial;
                work = w;
                grads = g;
                step *= 2.0;
                accepted = true;
                if gain <= config.rel_improvement_tol * scale {
                    return Ok((PiecewiseProtocol { segments: segs, t }, work));
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok((PiecewiseProtocol { segments: segs, t }, work))
}
