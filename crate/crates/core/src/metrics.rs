//! Work curves over a time grid and the quantities read off them: power,
//! the minimal-time inverse `T(W)`, the power peak and the envelope relation
//! `dW/dT = DωC`.

use std::io::Write;

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::algebra::Scenario;
use crate::error::{Error, Result};
use crate::hubbard::{reduced_scenario, HubbardSpec};
use crate::operator::{check_density_matrix, HermitianOperator};
use crate::solver::{initial_guess, solve, solve_best, Solution, SolverConfig};
use crate::su2;

/// Plateau threshold on `C`, relative to the scenario's `c_scale`.
pub const PLATEAU_C_TOL: f64 = 1e-6;

/// `tr[Hρ] − Σ_n q_n E_n` with populations sorted down and energies up.
pub fn ergotropy(rho_i: &HermitianOperator, h_f: &HermitianOperator) -> Result<f64> {
    check_density_matrix(rho_i)?;
    if rho_i.dim() != h_f.dim() {
        return Err(Error::Dimension { left: rho_i.dim(), right: h_f.dim() });
    }
    let sorted = |m: &HermitianOperator| {
        let mut v: Vec<f64> = SymmetricEigen::new(m.matrix().clone()).eigenvalues.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    };
    let q = sorted(rho_i);
    let e = sorted(h_f);
    let passive: f64 = q.iter().rev().zip(&e).map(|(q, e)| q * e).sum();
    Ok((h_f.hs_inner_unchecked(rho_i) - passive).max(0.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Numeric,
    Su2Analytic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleFlag {
    /// Past the plateau: the optimal protocol finishes early and idles.
    Idle,
    /// `T = 0`; power is reported as 0.
    ZeroTime,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    #[serde(rename = "T")]
    pub t: f64,
    pub work: f64,
    pub c_value: f64,
    pub power: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag: Option<SampleFlag>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub t_star: f64,
    pub w_star: f64,
    /// `C` of the solution that established the plateau.
    pub c_value: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WorkCurve {
    pub samples: Vec<Sample>,
    pub scenario_hash: String,
    /// `Dω`, the factor in `dW/dT = DωC`.
    pub d_omega: f64,
    /// Scale for `C` (upper bound on `‖F‖`).
    pub c_scale: f64,
    #[serde(default)]
    pub plateau: Option<Plateau>,
    /// Solver generator per sample, used to warm-start refinements.
    #[serde(skip)]
    pub(crate) generators: Vec<Option<HermitianOperator>>,
}

impl WorkCurve {
    fn new(scenario_hash: String, d_omega: f64, c_scale: f64) -> Self {
        Self { samples: Vec::new(), scenario_hash, d_omega, c_scale, plateau: None, generators: Vec::new() }
    }

    fn push(&mut self, t: f64, work: f64, c_value: f64, flag: Option<SampleFlag>, generator: Option<HermitianOperator>) {
        let power = if t > 0.0 { work / t } else { 0.0 };
        self.samples.push(Sample { t, work, c_value, power, flag });
        self.generators.push(generator);
    }

    pub fn max_work(&self) -> f64 {
        self.samples.iter().map(|s| s.work).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Whether the plateau was reached with `C ≤ 1e-6·c_scale`.
    pub fn plateau_reached(&self) -> bool {
        self.plateau.is_some_and(|p| p.c_value <= PLATEAU_C_TOL * self.c_scale)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::InvalidInput(format!("csv output failed: {e}"));
        w.write_record(["T", "work", "c_value", "power"]).map_err(io)?;
        for s in &self.samples {
            w.write_record([s.t, s.work, s.c_value, s.power].map(|v| format!("{v:.16e}"))).map_err(io)?;
        }
        w.flush().map_err(|e| Error::InvalidInput(format!("csv output failed: {e}")))?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Hex SHA-256 of the canonical JSON rendering of `value`.
pub fn digest<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("time grid is empty".into()));
    }
    if grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::InvalidInput("time grid entries must be finite and nonnegative".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("time grid must be strictly increasing".into()));
    }
    Ok(())
}

fn work_tol(w: f64) -> f64 {
    1e-9 * w.abs().max(1.0)
}

/// Optimal controllable work on a time grid.
///
/// The numeric backend warm-starts each point from the previous generator.
/// When that loses work it falls back to a multi-start search. Once `C`
/// drops below `1e-6·c_scale` with the work at its running maximum, the
/// plateau is located by bisection and later samples idle at `W_c*`.
pub fn sweep(scenario: &Scenario, grid: &[f64], config: &SolverConfig, backend: Backend) -> Result<WorkCurve> {
    check_grid(grid)?;
    config.validate()?;
    let hash = digest(&(scenario, config, backend))?;
    let d_omega = scenario.dim() as f64 * scenario.omega();
    let mut curve = WorkCurve::new(hash, d_omega, scenario.c_scale());
    match backend {
        Backend::Su2Analytic => sweep_su2(scenario, grid, &mut curve)?,
        Backend::Numeric => sweep_numeric(scenario, grid, config, &mut curve)?,
    }
    Ok(curve)
}

fn sweep_su2(scenario: &Scenario, grid: &[f64], curve: &mut WorkCurve) -> Result<()> {
    let sol = su2::optimal_generator(scenario)?;
    curve.plateau = Some(Plateau { t_star: sol.t_star, w_star: sol.w_star, c_value: 0.0 });
    for &t in grid {
        let work = su2::work_curve_su2(scenario, t)?;
        let c = su2::c_curve_su2(scenario, t)?;
        let flag = if t == 0.0 {
            Some(SampleFlag::ZeroTime)
        } else if t >= sol.t_star {
            Some(SampleFlag::Idle)
        } else {
            None
        };
        curve.push(t, work, c, flag, Some(sol.generator.clone()));
    }
    Ok(())
}

/// Tries the warm start, then a multi-start search, keeping only solutions
/// that do not lose work relative to `floor`.
fn advance(
    scenario: &Scenario,
    t: f64,
    config: &SolverConfig,
    guess: Option<&HermitianOperator>,
    floor: f64,
) -> Result<Solution> {
    let first = solve(scenario, t, config, guess);
    if let Ok(sol) = &first {
        if sol.work >= floor - work_tol(floor) {
            return first;
        }
        log::debug!("warm start at T = {t} lost work ({} < {floor}); exploring", sol.work);
    }
    let attempts = config.restart_budget.max(1);
    let best = solve_best(scenario, t, config, guess, attempts)?;
    if best.work >= floor - work_tol(floor) {
        Ok(best)
    } else {
        first.and(Err(Error::PlateauNotReached))
    }
}

fn sweep_numeric(scenario: &Scenario, grid: &[f64], config: &SolverConfig, curve: &mut WorkCurve) -> Result<()> {
    let c_tol = PLATEAU_C_TOL * scenario.c_scale();
    let zero_c = scenario.h_f_c().comm_i_unchecked(scenario.rho_i_c()).frob_norm();
    let start = match initial_guess(scenario, grid[0].max(f64::MIN_POSITIVE), None, config) {
        Ok(x) => x,
        Err(Error::DegenerateScenario(_)) => {
            // nothing to extract: a flat curve with its plateau at T = 0
            curve.plateau = Some(Plateau { t_star: 0.0, w_star: 0.0, c_value: 0.0 });
            for &t in grid {
                let flag = if t == 0.0 { SampleFlag::ZeroTime } else { SampleFlag::Idle };
                curve.push(t, 0.0, 0.0, Some(flag), None);
            }
            return Ok(());
        }
        Err(e) => return Err(e),
    };

    let mut last: Option<Solution> = None;
    for &t in grid {
        if let Some(p) = curve.plateau {
            curve.push(t, p.w_star, 0.0, Some(SampleFlag::Idle), None);
            continue;
        }
        if t == 0.0 {
            curve.push(0.0, 0.0, zero_c, Some(SampleFlag::ZeroTime), Some(start.clone()));
            continue;
        }
        let floor = last.as_ref().map_or(0.0, |s| s.work);
        let guess = last.as_ref().map_or(&start, |s| &s.generator).clone();
        match advance(scenario, t, config, Some(&guess), floor) {
            Ok(sol) => {
                let plateau_here = sol.c_value <= c_tol;
                if plateau_here {
                    let lo = last.clone().filter(|lo| lo.c_value > c_tol).or_else(|| foothold(scenario, t, config, &start));
                    let plateau = match lo {
                        Some(lo) => locate_plateau(scenario, config, lo, t, Some(sol.clone())),
                        None => Ok(Plateau { t_star: t, w_star: sol.work, c_value: sol.c_value }),
                    };
                    match plateau {
                        Ok(p) => curve.plateau = Some(p),
                        Err(cause) => return Err(partial(curve, cause)),
                    }
                }
                curve.push(t, sol.work, sol.c_value, None, Some(sol.generator.clone()));
                last = Some(sol);
            }
            Err(cause) => {
                let Some(lo) = last.clone().or_else(|| foothold(scenario, t, config, &start)) else {
                    return Err(partial(curve, cause));
                };
                match locate_plateau(scenario, config, lo, t, None) {
                    Ok(p) => {
                        curve.plateau = Some(p);
                        curve.push(t, p.w_star, 0.0, Some(SampleFlag::Idle), None);
                    }
                    Err(_) => return Err(partial(curve, cause)),
                }
            }
        }
    }
    Ok(())
}

/// A solution at some `t·2^{−k}`, for when the first grid point already
/// lies past the plateau onset.
fn foothold(scenario: &Scenario, t: f64, config: &SolverConfig, start: &HermitianOperator) -> Option<Solution> {
    let c_tol = PLATEAU_C_TOL * scenario.c_scale();
    (1..=40)
        .map(|k| t * 0.5f64.powi(k))
        .find_map(|tt| solve(scenario, tt, config, Some(start)).ok().filter(|s| s.c_value > c_tol))
}

fn partial(curve: &WorkCurve, cause: Error) -> Error {
    Error::PartialCurve { curve: Box::new(curve.clone()), cause: Box::new(cause) }
}

/// Bisection for the first time at which `C` vanishes, between a
/// pre-plateau solution `lo` and `t_hi`. Probes skip random restarts and are
/// retried from the plateau side on failure. Close to the onset the descent
/// converges too slowly to certify; if both probes fail, the onset is
/// estimated by linear extrapolation of `C` from the last two pre-plateau
/// solutions, clamped to the bracket.
fn locate_plateau(
    scenario: &Scenario,
    config: &SolverConfig,
    mut lo: Solution,
    mut t_hi: f64,
    mut hi: Option<Solution>,
) -> Result<Plateau> {
    // Bisect on a threshold well below the detection tolerance so the
    // bracket closes on the zero of C rather than on its crossing of the
    // tolerance.
    let c_tol = 1e-3 * PLATEAU_C_TOL * scenario.c_scale();
    let probe = SolverConfig { restart_budget: 0, ..config.clone() };
    let accept = |s: &Solution, floor: f64| s.work >= floor - work_tol(floor);
    let mut prev_lo: Option<(f64, f64)> = None;
    let mut stalled = false;
    for _ in 0..80 {
        if t_hi - lo.t <= 1e-13 * t_hi {
            break;
        }
        let mid = 0.5 * (lo.t + t_hi);
        let mut found = solve(scenario, mid, &probe, Some(&lo.generator)).ok().filter(|s| accept(s, lo.work));
        if found.is_none() {
            if let Some(h) = &hi {
                found = solve(scenario, mid, &probe, Some(&h.generator)).ok().filter(|s| accept(s, lo.work));
            }
        }
        match found {
            Some(s) if s.c_value <= c_tol => {
                t_hi = mid;
                hi = Some(s);
            }
            Some(s) => {
                prev_lo = Some((lo.t, lo.c_value));
                lo = s;
            }
            None if hi.is_some() => {
                stalled = true;
                break;
            }
            None => t_hi = mid,
        }
    }
    if let Some(h) = hi {
        let mut t_star = h.t;
        if stalled {
            if let Some((t0, c0)) = prev_lo.filter(|&(_, c0)| c0 > lo.c_value) {
                let t_zero = lo.t + lo.c_value * (lo.t - t0) / (c0 - lo.c_value);
                log::debug!("plateau onset extrapolated to {t_zero} within [{}, {t_hi}]", lo.t);
                t_star = t_zero.clamp(lo.t, t_hi);
            }
        }
        return Ok(Plateau { t_star, w_star: h.work.max(lo.work), c_value: h.c_value });
    }
    if lo.c_value <= PLATEAU_C_TOL * scenario.c_scale() {
        return Ok(Plateau { t_star: lo.t, w_star: lo.work, c_value: lo.c_value });
    }
    Err(Error::PlateauNotReached)
}

/// Sweep of an SU(n)-Hubbard instance through its reduced representation,
/// reported in full-space units: work times `C`, `C`-values divided by `κ`.
pub fn sweep_reduced(spec: &HubbardSpec, grid: &[f64], config: &SolverConfig) -> Result<WorkCurve> {
    let (scenario, k) = reduced_scenario(spec)?;
    let c = k.c_vn_f64();
    let mut curve = match sweep(&scenario, grid, config, Backend::Numeric) {
        Ok(curve) => curve,
        Err(Error::PartialCurve { mut curve, cause }) => {
            rescale(&mut curve, c, k.kappa, spec.n);
            return Err(Error::PartialCurve { curve, cause });
        }
        Err(e) => return Err(e),
    };
    rescale(&mut curve, c, k.kappa, spec.n);
    curve.scenario_hash = digest(&(spec, config))?;
    Ok(curve)
}

fn rescale(curve: &mut WorkCurve, c_vn: f64, kappa: f64, n: usize) {
    for s in &mut curve.samples {
        s.work *= c_vn;
        s.power *= c_vn;
        s.c_value /= kappa;
    }
    // dW/dT = C·nκω·C_π = (C·nκ²ω)·(C_π/κ)
    let omega_pi = curve.d_omega / n as f64;
    curve.d_omega = c_vn * n as f64 * kappa * omega_pi;
    curve.c_scale /= kappa;
    if let Some(p) = &mut curve.plateau {
        p.w_star *= c_vn;
        p.c_value /= kappa;
    }
}

/// Generalized inverse `T(W) = inf{T : W(T) ≥ w}` by linear interpolation
/// between bracketing samples. The curve is taken to start at `(0, 0)`.
pub fn invert_time(curve: &WorkCurve, w_target: f64) -> Result<f64> {
    Ok(bracket(curve, w_target)?.interpolated)
}

struct Bracket {
    lo: (f64, f64),
    hi: (f64, f64),
    lo_index: Option<usize>,
    interpolated: f64,
}

fn bracket(curve: &WorkCurve, w: f64) -> Result<Bracket> {
    let max = curve.max_work();
    if curve.samples.is_empty() || w > max + work_tol(max) {
        return Err(Error::Unreachable { target: w, max });
    }
    if w <= 0.0 {
        return Ok(Bracket { lo: (0.0, 0.0), hi: (0.0, 0.0), lo_index: None, interpolated: 0.0 });
    }
    let k = curve.samples.iter().position(|s| s.work >= w).unwrap_or(curve.samples.len() - 1);
    let s = &curve.samples[k];
    let mut hi = (s.t, s.work);
    if s.flag == Some(SampleFlag::Idle) {
        if let Some(p) = curve.plateau {
            hi = (p.t_star, p.w_star);
        }
    }
    let (lo, lo_index) = if k == 0 { ((0.0, 0.0), None) } else { ((curve.samples[k - 1].t, curve.samples[k - 1].work), Some(k - 1)) };
    let interpolated = if hi.1 > lo.1 {
        lo.0 + (hi.0 - lo.0) * ((w - lo.1) / (hi.1 - lo.1)).clamp(0.0, 1.0)
    } else {
        hi.0
    };
    Ok(Bracket { lo, hi, lo_index, interpolated })
}

/// [`invert_time`] followed by bisection on the bracket with `solve_at`
/// until the bracket is narrower than `t_tol`. `solve_at(t, guess)` returns
/// the optimal work at `t` and the generator to warm-start from.
pub fn invert_time_with<F>(curve: &WorkCurve, w_target: f64, t_tol: f64, mut solve_at: F) -> Result<f64>
where
    F: FnMut(f64, Option<&HermitianOperator>) -> Result<(f64, HermitianOperator)>,
{
    let b = bracket(curve, w_target)?;
    if w_target <= 0.0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (b.lo.0, b.hi.0);
    let mut guess = b.lo_index.and_then(|k| curve.generators.get(k).cloned().flatten());
    while hi - lo > t_tol {
        let mid = 0.5 * (lo + hi);
        if mid <= 0.0 {
            break;
        }
        let (w, g) = solve_at(mid, guess.as_ref())?;
        if w >= w_target {
            hi = mid;
        } else {
            lo = mid;
            guess = Some(g);
        }
    }
    Ok(hi)
}

/// Refined inversion for a curve swept with the numeric backend.
pub fn invert_time_refined(
    curve: &WorkCurve,
    w_target: f64,
    scenario: &Scenario,
    config: &SolverConfig,
) -> Result<f64> {
    invert_time_with(curve, w_target, 1e-6, |t, guess| {
        let s = solve(scenario, t, config, guess)?;
        Ok((s.work, s.generator))
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TradeoffReport {
    pub t_peak_power: f64,
    pub t_star: f64,
    /// Largest grid spacing.
    pub grid_step: f64,
    pub strict: bool,
}

/// Location of the power maximum relative to the plateau onset.
pub fn tradeoff_report(curve: &WorkCurve) -> Result<TradeoffReport> {
    let plateau = curve.plateau.filter(|_| curve.plateau_reached()).ok_or(Error::PlateauNotReached)?;
    let s = &curve.samples;
    if s.len() < 3 {
        return Err(Error::PlateauNotReached);
    }
    let k = (0..s.len())
        .filter(|&k| s[k].t > 0.0)
        .max_by(|&a, &b| s[a].power.total_cmp(&s[b].power))
        .ok_or(Error::PlateauNotReached)?;
    let mut t_peak = s[k].t;
    if k > 0 && k + 1 < s.len() && s[k - 1].t > 0.0 {
        // vertex of the parabola through the three bracketing samples
        let (x0, x1, x2) = (s[k - 1].t, s[k].t, s[k + 1].t);
        let (y0, y1, y2) = (s[k - 1].power, s[k].power, s[k + 1].power);
        let num = (x1 - x0).powi(2) * (y1 - y2) - (x1 - x2).powi(2) * (y1 - y0);
        let den = (x1 - x0) * (y1 - y2) - (x1 - x2) * (y1 - y0);
        if den != 0.0 {
            let v = x1 - 0.5 * num / den;
            if v > x0 && v < x2 {
                t_peak = v;
            }
        }
    }
    let grid_step = s.windows(2).map(|w| w[1].t - w[0].t).fold(0.0, f64::max);
    Ok(TradeoffReport {
        t_peak_power: t_peak,
        t_star: plateau.t_star,
        grid_step,
        strict: t_peak < plateau.t_star - grid_step,
    })
}

/// Largest `|W(T_k) − W(T_0) − Dω ∫_{T_0}^{T_k} C|` over the samples, with
/// the integral by the trapezoid rule.
pub fn envelope_check(curve: &WorkCurve) -> f64 {
    let s = &curve.samples;
    let Some(first) = s.first() else {
        return 0.0;
    };
    let mut integral = 0.0;
    let mut worst = 0.0_f64;
    for w in s.windows(2) {
        integral += 0.5 * (w[0].c_value + w[1].c_value) * (w[1].t - w[0].t);
        let dev = (w[1].work - first.work - curve.d_omega * integral).abs();
        worst = worst.max(dev);
    }
    worst
}
