use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use ergoflow::error::Error;
use ergoflow::hubbard::{build_full_fock, HubbardSpec};
use ergoflow::io::{load_scenario, parse_json, read_to_string};
use ergoflow::metrics::{digest, sweep, sweep_reduced, Backend, WorkCurve};
use ergoflow::objectives::{fidelity_curve_two_level, fidelity_t_star, to_scenario, ObjectiveSpec};
use ergoflow::oracle::{optimize_piecewise, violation_tolerance};
use ergoflow::solver::{solve_best, solve_traced, JsonLinesTrace, SolverConfig, TraceSink};
use ergoflow::su2;
use serde::Serialize;
use serde_json::{json, Value};

use crate::manifest::{manifest_path, RunManifest};
use crate::{BackendArg, Common, Failure, Format, GridArgs, EXIT_CONVERGENCE, EXIT_ORACLE};

pub struct Context {
    common: Common,
    config: SolverConfig,
    started: Instant,
}

impl Context {
    pub fn new(common: &Common) -> Result<Self, Failure> {
        let mut config = match &common.config {
            Some(path) => parse_json::<SolverConfig>(&read_to_string(path)?)
                .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?,
            None => SolverConfig::default(),
        };
        if let Some(seed) = common.seed {
            config.rng_seed = seed;
        }
        config.validate()?;
        Ok(Self { common: common.clone(), config, started: Instant::now() })
    }

    fn time(&self, value: f64, omega: f64) -> f64 {
        if self.common.absolute_time {
            value
        } else {
            value / omega
        }
    }

    fn grid(&self, g: &GridArgs, omega: f64) -> Result<Vec<f64>, Failure> {
        if !(g.t_min.is_finite() && g.t_max.is_finite() && g.t_min >= 0.0 && g.t_min < g.t_max) {
            return Err(Failure::input(format!("need 0 <= t-min < t-max, got {} and {}", g.t_min, g.t_max)));
        }
        if g.points < 2 {
            return Err(Failure::input(format!("need at least 2 points, got {}", g.points)));
        }
        let step = (g.t_max - g.t_min) / (g.points - 1) as f64;
        Ok((0..g.points)
            .map(|k| {
                let v = if k + 1 == g.points { g.t_max } else { g.t_min + step * k as f64 };
                self.time(v, omega)
            })
            .collect())
    }

    /// Writes the rendered output and, when it went to a file, the manifest.
    fn emit(&self, command: &str, inputs: &[&Path], params: Value, body: &str) -> Result<(), Failure> {
        match &self.common.out {
            None => {
                let mut stdout = std::io::stdout().lock();
                stdout.write_all(body.as_bytes()).map_err(|e| Failure::input(format!("cannot write output: {e}")))?;
            }
            Some(path) => {
                write_file(path, body)?;
                let contents: Vec<String> = inputs.iter().map(|p| read_to_string(p)).collect::<Result<_, _>>()?;
                let input_digest = digest(&json!({
                    "command": command,
                    "inputs": contents,
                    "params": params,
                    "config": self.config,
                }))?;
                let manifest = RunManifest {
                    command: command.to_string(),
                    input_digest,
                    config: self.config.clone(),
                    outputs: vec![path.display().to_string()],
                    wall_time: self.started.elapsed().as_secs_f64(),
                    version: env!("CARGO_PKG_VERSION").to_string(),
                };
                let text = serde_json::to_string_pretty(&manifest).map_err(Error::from)? + "\n";
                write_file(&manifest_path(path), &text)?;
            }
        }
        Ok(())
    }

    fn render_curve(&self, curve: &WorkCurve) -> Result<String, Failure> {
        match self.common.format.unwrap_or(Format::Csv) {
            Format::Csv => {
                let mut buf = Vec::new();
                curve.write_csv(&mut buf)?;
                Ok(String::from_utf8(buf).expect("csv output is utf-8"))
            }
            Format::Json => Ok(curve.to_json()? + "\n"),
        }
    }

    pub fn solve(&self, path: &Path, t_arg: f64, trace: Option<&Path>) -> Result<(), Failure> {
        let scenario = load_scenario(path)?;
        let t = self.time(t_arg, scenario.omega());
        if !(t.is_finite() && t > 0.0) {
            return Err(Failure::input(format!("protocol time must be positive, got {t_arg}")));
        }
        let mut sink = match trace {
            Some(p) => Some(JsonLinesTrace::new(BufWriter::new(
                File::create(p).map_err(|e| Failure::input(format!("cannot create {}: {e}", p.display())))?,
            ))),
            None => None,
        };
        let result = solve_traced(&scenario, t, &self.config, None, sink.as_mut().map(|s| s as &mut dyn TraceSink));
        if let Some(s) = sink {
            s.into_inner().flush().map_err(|e| Failure::input(format!("cannot write trace: {e}")))?;
        }
        let sol = result?;
        let body = to_json(&sol)?;
        self.emit("solve", &[path], json!({ "T": t }), &body)
    }

    pub fn curve(&self, path: &Path, grid: &GridArgs, backend: BackendArg) -> Result<(), Failure> {
        let scenario = load_scenario(path)?;
        let times = self.grid(grid, scenario.omega())?;
        let backend = match backend {
            BackendArg::Numeric => Backend::Numeric,
            BackendArg::Su2Analytic => Backend::Su2Analytic,
        };
        let params = json!({ "grid": times, "backend": backend });
        self.emit_sweep("curve", path, params, sweep(&scenario, &times, &self.config, backend))
    }

    fn emit_sweep(
        &self,
        command: &str,
        path: &Path,
        params: Value,
        result: ergoflow::error::Result<WorkCurve>,
    ) -> Result<(), Failure> {
        match result {
            Ok(curve) => self.emit(command, &[path], params, &self.render_curve(&curve)?),
            Err(Error::PartialCurve { curve, cause }) => {
                self.emit(command, &[path], params, &self.render_curve(&curve)?)?;
                Err(Failure {
                    code: EXIT_CONVERGENCE,
                    message: format!("sweep stopped after {} samples: {cause}", curve.samples.len()),
                })
            }
            Err(e) => Err(e.into()),
        }
    }

    pub fn hubbard(&self, path: &Path, grid: &GridArgs, validate_full: bool) -> Result<(), Failure> {
        let spec: HubbardSpec = parse_json(&read_to_string(path)?)?;
        spec.validate()?;
        let times = self.grid(grid, spec.omega)?;
        let params = json!({ "grid": times, "validate_full": validate_full });
        let reduced = sweep_reduced(&spec, &times, &self.config);
        if !validate_full {
            return self.emit_sweep("hubbard", path, params, reduced);
        }
        let reduced = reduced?;
        let full_scenario = build_full_fock(&spec)?.full_scenario(&spec)?;
        let full = sweep(&full_scenario, &times, &self.config, Backend::Numeric)?;
        let deviation = reduced
            .samples
            .iter()
            .zip(&full.samples)
            .map(|(a, b)| (a.work - b.work).abs())
            .fold(0.0, f64::max);
        let scale = full.max_work().abs().max(1.0);
        let report = json!({ "max_work_deviation": deviation, "full_dim": full_scenario.dim() });
        eprintln!("{report}");
        self.emit("hubbard", &[path], params, &self.render_curve(&reduced)?)?;
        if deviation > 1e-8 * scale {
            return Err(Failure {
                code: EXIT_CONVERGENCE,
                message: format!("reduced and full-space work differ by {deviation:.3e}"),
            });
        }
        Ok(())
    }

    pub fn fidelity(&self, path: &Path, grid: &GridArgs) -> Result<(), Failure> {
        let spec: ObjectiveSpec = parse_json(&read_to_string(path)?)?;
        let objective = to_scenario(&spec)?;
        let times = self.grid(grid, spec.omega)?;
        let curve = sweep(&objective.scenario, &times, &self.config, Backend::Numeric)?;
        let target = spec.target_state().filter(|_| spec.rho_i.dim() == 2);
        let t_star = match &target {
            Some(psi) => match fidelity_t_star(&spec.rho_i, psi, spec.omega) {
                Ok(t) => Some(t),
                Err(Error::DegenerateState) => None,
                Err(e) => return Err(e.into()),
            },
            None => None,
        };
        let mut rows = Vec::with_capacity(curve.samples.len());
        for s in &curve.samples {
            let closed = match &target {
                Some(psi) => Some(fidelity_curve_two_level(&spec.rho_i, psi, spec.omega, s.t)?),
                None => None,
            };
            rows.push((s.t, objective.objective_value(s.work), closed));
        }
        let body = match self.common.format.unwrap_or(Format::Json) {
            Format::Json => {
                let samples: Vec<Value> = rows
                    .iter()
                    .map(|(t, f, c)| json!({ "T": t, "objective": f, "closed_form": c }))
                    .collect();
                to_json(&json!({ "t_star": t_star, "offset": objective.offset, "samples": samples }))?
            }
            Format::Csv => {
                let mut text = String::from(if target.is_some() { "T,objective,closed_form\n" } else { "T,objective\n" });
                for (t, f, c) in &rows {
                    text += &format!("{t:.16e},{f:.16e}");
                    if let Some(c) = c {
                        text += &format!(",{c:.16e}");
                    }
                    text.push('\n');
                }
                text
            }
        };
        self.emit("fidelity", &[path], json!({ "grid": times }), &body)
    }

    pub fn oracle(&self, path: &Path, t_arg: f64, segments: usize, attempts: usize) -> Result<(), Failure> {
        let scenario = load_scenario(path)?;
        let t = self.time(t_arg, scenario.omega());
        if !(t.is_finite() && t > 0.0) {
            return Err(Failure::input(format!("protocol time must be positive, got {t_arg}")));
        }
        if segments == 0 || attempts == 0 {
            return Err(Failure::input("segments and attempts must be positive"));
        }
        let sol = solve_best(&scenario, t, &self.config, None, self.config.restart_budget.max(1))?;
        let found = optimize_piecewise(&scenario, t, segments, attempts, self.config.rng_seed)?;
        let tolerance = violation_tolerance(&scenario);
        let violation = found.w_c > sol.work + tolerance;
        let report = OracleReport {
            t,
            segments,
            attempts,
            solver_work: sol.work,
            oracle_work: found.w_c,
            ratio: ratio(found.w_c, sol.work),
            tolerance,
            violation,
            protocol: &found.protocol,
        };
        self.emit("oracle", &[path], json!({ "T": t, "segments": segments, "attempts": attempts }), &to_json(&report)?)?;
        if violation {
            return Err(Failure {
                code: EXIT_ORACLE,
                message: format!("piecewise protocol reached {} above solver optimum {}", found.w_c, sol.work),
            });
        }
        Ok(())
    }

    pub fn analytic(&self, path: &Path, t_arg: Option<f64>) -> Result<(), Failure> {
        let scenario = load_scenario(path)?;
        let sol = su2::optimal_generator(&scenario)?;
        let mut report = json!({
            "phi": sol.phi,
            "t_star": sol.t_star,
            "w_star": sol.w_star,
            "s_norm": sol.s_norm,
            "generator": sol.generator,
        });
        if let Some(v) = t_arg {
            let t = self.time(v, scenario.omega());
            if !(t.is_finite() && t >= 0.0) {
                return Err(Failure::input(format!("time must be nonnegative, got {v}")));
            }
            report["T"] = json!(t);
            report["work"] = json!(su2::work_curve_su2(&scenario, t)?);
            report["c_value"] = json!(su2::c_curve_su2(&scenario, t)?);
        }
        self.emit("analytic", &[path], json!({ "T": t_arg }), &to_json(&report)?)
    }
}

#[derive(Serialize)]
struct OracleReport<'a> {
    #[serde(rename = "T")]
    t: f64,
    segments: usize,
    attempts: usize,
    solver_work: f64,
    oracle_work: f64,
    ratio: f64,
    tolerance: f64,
    violation: bool,
    protocol: &'a ergoflow::oracle::PiecewiseProtocol,
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        if a == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        a / b
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String, Failure> {
    Ok(serde_json::to_string_pretty(value).map_err(Error::from)? + "\n")
}

fn write_file(path: &Path, body: &str) -> Result<(), Failure> {
    std::fs::write(path, body).map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display())))
}
