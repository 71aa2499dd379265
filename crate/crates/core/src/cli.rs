//! Experiment runner behind the `bohmtau` binary: configuration, presets,
//! the five run modes, and file emission.
//!
//! Every CSV value is in solver units (length δ₀, time `2mδ₀²/ħ`); the
//! manifest records the scales needed to convert back.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analytic::{
    bohmian_trajectories_analytic, classical_trajectory, free_spreading_width, integrate_width_with,
    quantum_force_at, stationary_width_residual, GaussonState, WidthIntegrator,
};
use crate::bohmian::{advance_ensemble, sample_initial_positions, velocity_field_with, Scheme, TrajectoryEnsemble};
use crate::diagnostics::{compare_runs, evolve_with_diagnostics, DiagnosticsRecord, RunSeries};
use crate::error::{Error, Result};
use crate::model::{
    bohmian_time_constant, bohmian_time_constant_approx, gausson_kappa, nondimensionalize, DimensionlessParams,
    KappaMode, PhysicalParams, Scales, ELECTRON_MASS, ELECTRON_WIDTH, HBAR, REPORTED_ELECTRON_TAU_B_MAX,
};
use crate::pde::{Grid, Solver, SolverOptions, Spectral};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Analytic,
    Evolve,
    Trajectories,
    Sweep,
    Validate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub n: usize,
    pub scheme: Scheme,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        Self { n: 9, scheme: Scheme::Quantile }
    }
}

/// Snapshots every `interval` from the start to `t_end`, solver units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotSchedule {
    pub t_end: f64,
    pub interval: f64,
}

impl Default for SnapshotSchedule {
    fn default() -> Self {
        Self { t_end: 3.0, interval: 0.01 }
    }
}

impl SnapshotSchedule {
    fn times(&self) -> Result<Vec<f64>> {
        if !(self.t_end > 0.0 && self.interval > 0.0 && self.interval <= self.t_end) {
            return Err(Error::validation("snapshots", "need 0 < interval <= t_end"));
        }
        let n = (self.t_end / self.interval).round();
        if ((self.t_end / self.interval) - n).abs() > 1e-6 {
            return Err(Error::validation("snapshots", "t_end must be a multiple of interval"));
        }
        Ok((0..=n as usize).map(|k| k as f64 * self.interval).collect())
    }
}

/// Either an explicit list or `steps` evenly spaced points from `start` to
/// `stop` inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RangeSpec {
    Values(Vec<f64>),
    Linear { start: f64, stop: f64, steps: usize },
}

impl RangeSpec {
    pub fn points(&self, field: &str) -> Result<Vec<f64>> {
        let pts = match self {
            RangeSpec::Values(v) => v.clone(),
            RangeSpec::Linear { start, stop, steps } => match steps {
                0 => vec![],
                1 => vec![*start],
                n => (0..*n).map(|i| start + (stop - start) * i as f64 / (*n - 1) as f64).collect(),
            },
        };
        if pts.is_empty() {
            return Err(Error::Config(format!("sweep range `{field}` is empty")));
        }
        if pts.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::validation(field, "values must be finite and >= 0"));
        }
        Ok(pts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Ignored when `kappa_mode` is `gausson`.
    pub kappa_t: Option<RangeSpec>,
    pub nu_t: Option<RangeSpec>,
    /// Initial widths relative to the configured δ₀.
    pub delta0_t: Option<RangeSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub width_rel: f64,
    pub trajectory_abs: f64,
    /// Relative tolerance on the fitted ⟨p⟩ exponent against −ν̃.
    pub p_decay_rel: f64,
    /// Used instead of `p_decay_rel` when ν̃ = 0.
    pub p_decay_abs: f64,
    pub norm_drift_per_time: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            width_rel: 1e-3,
            trajectory_abs: 1e-3,
            p_decay_rel: 1e-2,
            p_decay_abs: 1e-4,
            norm_drift_per_time: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub physical: Option<PhysicalParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimensionless: Option<DimensionlessParams>,
    #[serde(default)]
    pub kappa_mode: KappaMode,
    #[serde(default)]
    pub grid: Grid,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub ensemble: EnsembleSpec,
    #[serde(default)]
    pub snapshots: SnapshotSchedule,
    /// RK4 step of the width equation, solver units.
    #[serde(default = "default_width_step")]
    pub width_step: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn default_width_step() -> f64 {
    WidthIntegrator::default().step
}

/// Parameters after resolving κ and the unit system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Resolved {
    pub physical: PhysicalParams,
    pub dimensionless: DimensionlessParams,
    pub scales: Scales,
    /// The run's parameters in solver units.
    pub solver: PhysicalParams,
}

impl ExperimentConfig {
    fn base(mode: Mode, d: DimensionlessParams) -> Self {
        Self {
            mode,
            physical: None,
            dimensionless: Some(d),
            kappa_mode: KappaMode::Gausson,
            grid: Grid::default(),
            solver: SolverOptions::default(),
            ensemble: EnsembleSpec::default(),
            snapshots: SnapshotSchedule::default(),
            width_step: default_width_step(),
            output_dir: None,
            sweep: None,
            tolerances: Tolerances::default(),
        }
    }

    pub const PRESETS: [&'static str; 8] = [
        "electron",
        "gausson-nu0",
        "gausson-friction",
        "free",
        "under-resolved",
        "trajectories",
        "small-friction-sweep",
        "regime-sweep",
    ];

    pub fn preset(name: &str) -> Result<Self> {
        let d = |nu_t, kappa_t, v0_t| DimensionlessParams { nu_t, kappa_t, x0_t: 0.0, v0_t, deltadot0_t: 0.0 };
        let wide = Grid { x_min: -48.0, x_max: 48.0, n_points: 2048, dt: 1e-3 };
        Ok(match name {
            "electron" => Self {
                physical: Some(PhysicalParams::electron()),
                dimensionless: None,
                ..Self::base(Mode::Analytic, d(0.0, 0.0, 0.0))
            },
            "gausson-nu0" => Self::base(Mode::Validate, d(0.0, 0.0, 0.5)),
            "gausson-friction" => Self::base(Mode::Validate, d(1.5, 0.0, 0.5)),
            "free" => Self {
                kappa_mode: KappaMode::Explicit,
                grid: wide,
                ..Self::base(Mode::Validate, d(0.0, 0.0, 0.5))
            },
            "under-resolved" => Self {
                kappa_mode: KappaMode::Explicit,
                grid: wide,
                ..Self::base(Mode::Validate, d(0.2, 0.5, 0.5))
            },
            "trajectories" => Self::base(Mode::Trajectories, d(0.0, 0.0, 0.0)),
            "small-friction-sweep" => Self {
                sweep: Some(SweepSpec {
                    nu_t: Some(RangeSpec::Values(vec![0.0, 0.02, 0.05, 0.1, 0.2, 0.4])),
                    ..Default::default()
                }),
                ..Self::base(Mode::Sweep, d(0.0, 0.0, 0.0))
            },
            "regime-sweep" => Self {
                kappa_mode: KappaMode::Explicit,
                sweep: Some(SweepSpec {
                    kappa_t: Some(RangeSpec::Linear { start: 0.0, stop: 2.0, steps: 9 }),
                    nu_t: Some(RangeSpec::Values(vec![0.0, 0.5, 1.5])),
                    ..Default::default()
                }),
                ..Self::base(Mode::Sweep, d(0.0, 0.0, 0.0))
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown preset `{other}`; available: {}",
                    Self::PRESETS.join(", ")
                )))
            }
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.resolve()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks every invariant and fixes κ and the scales.
    pub fn resolve(&self) -> Result<Resolved> {
        let (mut physical, mut dimensionless, scales) = match (&self.physical, &self.dimensionless) {
            (Some(p), None) => {
                let (d, s) = nondimensionalize(p)?;
                (*p, d, s)
            }
            (None, Some(d)) => {
                d.validate()?;
                let sp = d.to_solver_params();
                (sp, *d, Scales::of(&sp))
            }
            _ => {
                return Err(Error::Config(
                    "exactly one of `physical` and `dimensionless` must be given".into(),
                ))
            }
        };
        if self.kappa_mode == KappaMode::Gausson {
            physical = physical.with_gausson_kappa();
            dimensionless.kappa_t = physical.kappa * scales.time_scale;
        }
        self.grid.validate()?;
        self.solver.validate()?;
        if self.ensemble.n == 0 {
            return Err(Error::validation("ensemble.n", "must be >= 1"));
        }
        self.snapshots.times()?;
        if !(self.width_step > 0.0) {
            return Err(Error::validation("width_step", "must be > 0"));
        }
        if self.mode == Mode::Sweep {
            let sweep = self
                .sweep
                .as_ref()
                .ok_or_else(|| Error::Config("sweep mode needs a `sweep` block".into()))?;
            for (name, r) in [("sweep.kappa_t", &sweep.kappa_t), ("sweep.nu_t", &sweep.nu_t), ("sweep.delta0_t", &sweep.delta0_t)] {
                if let Some(r) = r {
                    r.points(name)?;
                }
            }
            if let Some(r) = &sweep.delta0_t {
                if r.points("sweep.delta0_t")?.contains(&0.0) {
                    return Err(Error::validation("sweep.delta0_t", "widths must be > 0"));
                }
            }
        }
        Ok(Resolved {
            physical,
            dimensionless,
            scales,
            solver: dimensionless.to_solver_params(),
        })
    }
}

/// Outcome of a run: files written and, in validate mode, whether every
/// check passed.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    pub passed: bool,
    pub messages: Vec<String>,
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_csv(dir: &Path, name: &str, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<PathBuf> {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    let path = dir.join(name);
    fs::write(&path, out)?;
    Ok(path)
}

fn numeric_rows(rows: &[Vec<f64>]) -> impl Iterator<Item = Vec<String>> + '_ {
    rows.iter().map(|r| r.iter().map(|v| fmt(*v)).collect())
}

fn particle_header(n: usize, lead: &str) -> Vec<String> {
    std::iter::once(lead.to_string()).chain((0..n).map(|i| format!("x{i}"))).collect()
}

fn ensemble_rows(e: &TrajectoryEnsemble) -> Vec<Vec<f64>> {
    e.times
        .iter()
        .zip(&e.positions)
        .map(|(t, row)| std::iter::once(*t).chain(row.iter().copied()).collect())
        .collect()
}

/// Comparison of the computed electron τ_B with the printed upper limit.
pub fn electron_comparison(tau_b: f64) -> Value {
    let ratio = tau_b / REPORTED_ELECTRON_TAU_B_MAX;
    let log10 = ratio.log10();
    json!({
        "computed_tau_b_s": tau_b,
        "reported_tau_b_max_s": REPORTED_ELECTRON_TAU_B_MAX,
        "ratio": ratio,
        "log10_ratio": log10,
        "order_of_magnitude_discrepancy": log10.abs() >= 1.0,
        "note": format!(
            "2 m delta0^2 / hbar = {tau_b:.4e} s differs from the reported {REPORTED_ELECTRON_TAU_B_MAX:e} s by a factor {ratio:.2}"
        ),
    })
}

fn is_electron(p: &PhysicalParams) -> bool {
    p.mass == ELECTRON_MASS && p.delta0 == ELECTRON_WIDTH && p.hbar == HBAR
}

fn derived_block(r: &Resolved) -> Value {
    let p = &r.physical;
    let tau = bohmian_time_constant(p.kappa).ok();
    let approx = bohmian_time_constant_approx(p).ok();
    json!({
        "kappa": p.kappa,
        "kappa_t": r.dimensionless.kappa_t,
        "gausson_kappa": gausson_kappa(p),
        "tau_b": tau,
        "tau_b_t": tau.map(|t| t / r.scales.time_scale),
        "tau_b_approx": approx,
        "tau_b_approx_t": approx.map(|t| t / r.scales.time_scale),
        "stationary_width_residual": stationary_width_residual(p, p.delta0),
    })
}

struct Manifest {
    root: Value,
}

impl Manifest {
    fn new(cfg: &ExperimentConfig, r: &Resolved) -> Self {
        let mut root = json!({
            "library": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "units": "CSV values are in solver units: length delta0, time 2*mass*delta0^2/hbar",
            "config": cfg,
            "resolved": {
                "physical": r.physical,
                "dimensionless": r.dimensionless,
                "scales": r.scales,
                "solver_params": r.solver,
            },
            "derived": derived_block(r),
            "constants": { "electron_mass_kg": ELECTRON_MASS, "hbar_js": HBAR, "electron_width_m": ELECTRON_WIDTH },
        });
        if is_electron(&r.physical) {
            if let Ok(tau) = bohmian_time_constant(r.physical.kappa) {
                root["electron_tau_b_comparison"] = electron_comparison(tau);
            }
        }
        Self { root }
    }

    fn set(&mut self, key: &str, v: Value) {
        self.root[key] = v;
    }

    fn write(&mut self, dir: &Path, files: &[PathBuf]) -> Result<PathBuf> {
        let names: Vec<String> = files
            .iter()
            .filter_map(|f| f.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect();
        self.root["files"] = json!(names);
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&self.root).map_err(|e| Error::Io(e.to_string()))?;
        fs::write(&path, text + "\n")?;
        Ok(path)
    }
}

fn width_series(r: &Resolved, cfg: &ExperimentConfig, times: &[f64]) -> Result<crate::analytic::WidthSeries> {
    let opts = WidthIntegrator { step: cfg.width_step, ..Default::default() };
    integrate_width_with(&r.solver, &GaussonState::initial(&r.solver), times, &opts)
}

fn closed_form_width(p: &PhysicalParams, t: f64) -> f64 {
    if p.kappa == 0.0 && p.nu == 0.0 && p.deltadot0 == 0.0 {
        free_spreading_width(p, t)
    } else if p.deltadot0 == 0.0 && (p.kappa - gausson_kappa(p)).abs() <= 1e-12 * p.kappa {
        p.delta0
    } else {
        f64::NAN
    }
}

fn initial_positions(cfg: &ExperimentConfig, r: &Resolved) -> Result<Vec<f64>> {
    sample_initial_positions(1.0, cfg.ensemble.n, cfg.ensemble.scheme)
        .map(|v| v.into_iter().map(|a| a + r.solver.x0).collect())
}

fn run_analytic(cfg: &ExperimentConfig, r: &Resolved, dir: &Path, m: &mut Manifest) -> Result<Vec<PathBuf>> {
    let p = &r.solver;
    let times = cfg.snapshots.times()?;
    let w = width_series(r, cfg, &times)?;
    let mut files = Vec::new();
    let rows: Vec<Vec<f64>> = (0..w.len())
        .map(|k| vec![w.times[k], w.deltas[k], w.delta_dots[k], closed_form_width(p, w.times[k])])
        .collect();
    let header = ["t", "delta", "delta_dot", "delta_analytic"].map(String::from);
    files.push(write_csv(dir, "width.csv", &header, numeric_rows(&rows))?);

    let x0 = initial_positions(cfg, r)?;
    let offsets: Vec<f64> = x0.iter().map(|x| x - p.x0).collect();
    let e = bohmian_trajectories_analytic(p, &offsets, &w, &times)?;
    files.push(write_csv(dir, "trajectories.csv", &particle_header(x0.len(), "t"), numeric_rows(&ensemble_rows(&e)))?);

    let forces: Vec<Vec<f64>> = (0..w.len())
        .map(|k| {
            let t = w.times[k];
            let (xbar, xbar_dot) = classical_trajectory(p, t);
            let st = GaussonState { t, xbar, xbar_dot, delta: w.deltas[k], delta_dot: w.delta_dots[k] };
            std::iter::once(t).chain(e.positions[k].iter().map(|x| quantum_force_at(p, &st, *x))).collect()
        })
        .collect();
    let header: Vec<String> = std::iter::once("t".to_string()).chain((0..x0.len()).map(|i| format!("f{i}"))).collect();
    files.push(write_csv(dir, "forces.csv", &header, numeric_rows(&forces))?);
    m.set("ensemble_x0", json!(x0));
    Ok(files)
}

struct PdeRun {
    states: Vec<crate::pde::WavepacketState>,
    records: Vec<DiagnosticsRecord>,
}

fn run_pde(cfg: &ExperimentConfig, r: &Resolved) -> Result<(Solver, PdeRun)> {
    let solver = Solver::new(cfg.grid, r.solver, cfg.solver)?;
    let s0 = solver.init_gaussian(&GaussonState::initial(&r.solver))?;
    let times = cfg.snapshots.times()?;
    let (states, records) = evolve_with_diagnostics(&solver, &s0, cfg.snapshots.t_end, &times)?;
    Ok((solver, PdeRun { states, records }))
}

fn write_pde_outputs(cfg: &ExperimentConfig, r: &Resolved, run: &PdeRun, dir: &Path) -> Result<Vec<PathBuf>> {
    let header = DiagnosticsRecord::COLUMNS.map(String::from);
    let rows: Vec<Vec<f64>> = run.records.iter().map(|rec| rec.values().to_vec()).collect();
    let mut files = vec![write_csv(dir, "diagnostics.csv", &header, numeric_rows(&rows))?];

    let times: Vec<f64> = run.records.iter().map(|r| r.t).collect();
    let w = width_series(r, cfg, &times)?;
    let widths: Vec<f64> = run.records.iter().map(|r| r.width).collect();
    let n = widths.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            let rate = if n < 2 {
                0.0
            } else if k == 0 {
                (widths[1] - widths[0]) / (times[1] - times[0])
            } else if k == n - 1 {
                (widths[k] - widths[k - 1]) / (times[k] - times[k - 1])
            } else {
                (widths[k + 1] - widths[k - 1]) / (times[k + 1] - times[k - 1])
            };
            vec![times[k], widths[k], rate, w.deltas[k]]
        })
        .collect();
    let header = ["t", "delta", "delta_dot", "delta_analytic"].map(String::from);
    files.push(write_csv(dir, "width.csv", &header, numeric_rows(&rows))?);
    Ok(files)
}

fn numeric_trajectories(cfg: &ExperimentConfig, r: &Resolved, run: &PdeRun) -> Result<TrajectoryEnsemble> {
    let x0 = initial_positions(cfg, r)?;
    advance_ensemble(&x0, &run.states, &cfg.grid, &r.solver)
}

fn analytic_trajectories(cfg: &ExperimentConfig, r: &Resolved, times: &[f64]) -> Result<TrajectoryEnsemble> {
    let x0 = initial_positions(cfg, r)?;
    let offsets: Vec<f64> = x0.iter().map(|x| x - r.solver.x0).collect();
    let w = width_series(r, cfg, times)?;
    bohmian_trajectories_analytic(&r.solver, &offsets, &w, times)
}

fn run_trajectories(cfg: &ExperimentConfig, r: &Resolved, dir: &Path, m: &mut Manifest) -> Result<Vec<PathBuf>> {
    let (solver, run) = run_pde(cfg, r)?;
    let mut files = write_pde_outputs(cfg, r, &run, dir)?;
    let e = numeric_trajectories(cfg, r, &run)?;
    let n = e.x0.len();
    files.push(write_csv(dir, "trajectories.csv", &particle_header(n, "t"), numeric_rows(&ensemble_rows(&e)))?);
    let a = analytic_trajectories(cfg, r, &e.times)?;
    files.push(write_csv(
        dir,
        "trajectories_analytic.csv",
        &particle_header(n, "t"),
        numeric_rows(&ensemble_rows(&a)),
    )?);

    // particle velocities, to expose any asymmetry between mirrored pairs
    let spectral = Spectral::new(solver.grid());
    let rows: Vec<Vec<f64>> = run
        .states
        .iter()
        .zip(&e.positions)
        .map(|(s, xs)| {
            let v = velocity_field_with(&spectral, solver.grid(), s, &r.solver);
            let g = solver.grid();
            std::iter::once(s.t)
                .chain(xs.iter().map(|x| {
                    let u = (x - g.x_min) / g.dx();
                    let i = (u.floor() as usize).min(v.len() - 2);
                    let f = u - i as f64;
                    (1.0 - f) * v[i] + f * v[i + 1]
                }))
                .collect()
        })
        .collect();
    let header: Vec<String> = std::iter::once("t".to_string()).chain((0..n).map(|i| format!("v{i}"))).collect();
    files.push(write_csv(dir, "velocities.csv", &header, numeric_rows(&rows))?);
    m.set("ensemble_x0", json!(e.x0));
    m.set("flagged_particles", json!(e.flagged));
    m.set("non_crossing", json!(e.is_non_crossing()));
    Ok(files)
}

/// One row of the parameter sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub kappa_t: f64,
    pub nu_t: f64,
    pub tau_b_exact: f64,
    pub tau_b_approx: f64,
    pub residual: f64,
    pub regime: &'static str,
    pub delta0_t: f64,
}

/// Probe time and threshold of the regime label.
const REGIME_PROBE: f64 = 0.1;
const REGIME_TOL: f64 = 1e-9;

fn sweep_row(kappa_t: Option<f64>, nu_t: f64, delta0_t: f64, width_step: f64) -> Result<SweepRow> {
    let mut p = DimensionlessParams { nu_t, kappa_t: 0.0, x0_t: 0.0, v0_t: 0.0, deltadot0_t: 0.0 }.to_solver_params();
    p.delta0 = delta0_t;
    p.kappa = kappa_t.unwrap_or_else(|| gausson_kappa(&p));
    let tau_b_exact = bohmian_time_constant(p.kappa).unwrap_or(f64::NAN);
    let tau_b_approx = bohmian_time_constant_approx(&p).unwrap_or(f64::NAN);
    let opts = WidthIntegrator { step: width_step, ..Default::default() };
    let probe = integrate_width_with(&p, &GaussonState::initial(&p), &[REGIME_PROBE], &opts)?;
    let rate = probe.delta_dots[0] / delta0_t;
    let regime = if rate > REGIME_TOL {
        "spreading"
    } else if rate < -REGIME_TOL {
        "contracting"
    } else {
        "stationary"
    };
    Ok(SweepRow {
        kappa_t: p.kappa,
        nu_t,
        tau_b_exact,
        tau_b_approx,
        residual: stationary_width_residual(&p, delta0_t),
        regime,
        delta0_t,
    })
}

/// Evaluates the sweep grid. Rows are ordered by κ̃, then ν̃, then δ̃₀ (with
/// κ̃ derived per row in Gausson mode, the order is ν̃ then δ̃₀).
pub fn sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    let spec = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("sweep mode needs a `sweep` block".into()))?;
    let r = cfg.resolve()?;
    let kappas: Vec<Option<f64>> = match (cfg.kappa_mode, &spec.kappa_t) {
        (KappaMode::Gausson, _) => vec![None],
        (KappaMode::Explicit, Some(k)) => k.points("sweep.kappa_t")?.into_iter().map(Some).collect(),
        (KappaMode::Explicit, None) => vec![Some(r.dimensionless.kappa_t)],
    };
    let nus = match &spec.nu_t {
        Some(n) => n.points("sweep.nu_t")?,
        None => vec![r.dimensionless.nu_t],
    };
    let deltas = match &spec.delta0_t {
        Some(d) => d.points("sweep.delta0_t")?,
        None => vec![1.0],
    };
    let mut grid = Vec::new();
    for k in &kappas {
        for n in &nus {
            for d in &deltas {
                grid.push((*k, *n, *d));
            }
        }
    }
    let mut rows = grid
        .par_iter()
        .map(|&(k, n, d)| sweep_row(k, n, d, cfg.width_step))
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| {
        a.kappa_t
            .total_cmp(&b.kappa_t)
            .then(a.nu_t.total_cmp(&b.nu_t))
            .then(a.delta0_t.total_cmp(&b.delta0_t))
    });
    Ok(rows)
}

fn run_sweep(cfg: &ExperimentConfig, dir: &Path, m: &mut Manifest) -> Result<Vec<PathBuf>> {
    let rows = sweep(cfg)?;
    let header = ["kappa_t", "nu_t", "tau_b_exact", "tau_b_approx", "residual", "regime", "delta0_t"].map(String::from);
    let lines = rows.iter().map(|r| {
        vec![
            fmt(r.kappa_t),
            fmt(r.nu_t),
            fmt(r.tau_b_exact),
            fmt(r.tau_b_approx),
            fmt(r.residual),
            r.regime.to_string(),
            fmt(r.delta0_t),
        ]
    });
    m.set("sweep_regime_probe", json!({ "t": REGIME_PROBE, "tolerance": REGIME_TOL }));
    Ok(vec![write_csv(dir, "sweep.csv", &header, lines)?])
}

/// Checks of one validation run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationCheck {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

fn run_validate(cfg: &ExperimentConfig, r: &Resolved, dir: &Path, m: &mut Manifest) -> Result<(Vec<PathBuf>, Vec<ValidationCheck>)> {
    let (_, run) = run_pde(cfg, r)?;
    let mut files = write_pde_outputs(cfg, r, &run, dir)?;
    let numeric = numeric_trajectories(cfg, r, &run)?;
    files.push(write_csv(
        dir,
        "trajectories.csv",
        &particle_header(numeric.x0.len(), "t"),
        numeric_rows(&ensemble_rows(&numeric)),
    )?);
    let times: Vec<f64> = run.records.iter().map(|r| r.t).collect();
    let w = width_series(r, cfg, &times)?;
    let analytic = analytic_trajectories(cfg, r, &times)?;
    let mut pde = RunSeries::from_records(&run.records);
    pde.trajectories = Some(numeric.clone());
    let reference = RunSeries {
        times: times.clone(),
        widths: w.deltas.clone(),
        mean_p: times.iter().map(|t| classical_trajectory(&r.solver, *t).1 * r.solver.mass).collect(),
        trajectories: Some(analytic),
    };
    let report = compare_runs(&pde, &reference)?;
    let tol = &cfg.tolerances;
    let mut checks = vec![
        ValidationCheck {
            name: "width_rel_error".into(),
            value: report.max_width_rel_error,
            limit: tol.width_rel,
            passed: report.max_width_rel_error <= tol.width_rel,
        },
        ValidationCheck {
            name: "trajectory_abs_error".into(),
            value: report.trajectory_max_abs_error.unwrap_or(f64::NAN),
            limit: tol.trajectory_abs,
            passed: report.trajectory_max_abs_error.is_some_and(|e| e <= tol.trajectory_abs),
        },
    ];
    let nu = r.solver.nu;
    if let Some(exp) = report.p_decay_exponent {
        let (value, limit) = if nu == 0.0 {
            (exp.abs(), tol.p_decay_abs)
        } else {
            (((exp + nu) / nu).abs(), tol.p_decay_rel)
        };
        checks.push(ValidationCheck { name: "p_decay_exponent".into(), value, limit, passed: value <= limit });
    }
    let span = cfg.snapshots.t_end;
    let drift = run.records.iter().map(|rec| (rec.norm - 1.0).abs()).fold(0.0, f64::max) / span;
    checks.push(ValidationCheck {
        name: "norm_drift_per_time".into(),
        value: drift,
        limit: tol.norm_drift_per_time,
        passed: drift <= tol.norm_drift_per_time,
    });
    checks.push(ValidationCheck {
        name: "non_crossing".into(),
        value: if numeric.is_non_crossing() { 1.0 } else { 0.0 },
        limit: 1.0,
        passed: numeric.is_non_crossing(),
    });
    let path = dir.join("report.json");
    let text = serde_json::to_string_pretty(&json!({ "comparison": report, "checks": checks }))
        .map_err(|e| Error::Io(e.to_string()))?;
    fs::write(&path, text + "\n")?;
    files.push(path);
    m.set("validation", json!(checks));
    Ok((files, checks))
}

/// Runs `cfg`, writing all outputs into `dir`.
pub fn run(cfg: &ExperimentConfig, dir: &Path) -> Result<RunSummary> {
    let r = cfg.resolve()?;
    fs::create_dir_all(dir)?;
    let mut manifest = Manifest::new(cfg, &r);
    let mut passed = true;
    let mut messages = Vec::new();
    let mut files = match cfg.mode {
        Mode::Analytic => run_analytic(cfg, &r, dir, &mut manifest)?,
        Mode::Evolve => {
            let (_, run) = run_pde(cfg, &r)?;
            write_pde_outputs(cfg, &r, &run, dir)?
        }
        Mode::Trajectories => run_trajectories(cfg, &r, dir, &mut manifest)?,
        Mode::Sweep => run_sweep(cfg, dir, &mut manifest)?,
        Mode::Validate => {
            let (files, checks) = run_validate(cfg, &r, dir, &mut manifest)?;
            for c in &checks {
                let mut line = String::new();
                let _ = write!(
                    line,
                    "{} {}: {:e} (limit {:e})",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.limit
                );
                messages.push(line);
                passed &= c.passed;
            }
            files
        }
    };
    if let Some(cmp) = manifest.root.get("electron_tau_b_comparison") {
        messages.push(format!("electron tau_B: {}", cmp["note"].as_str().unwrap_or_default()));
    }
    let mpath = manifest.write(dir, &files)?;
    files.insert(0, mpath);
    Ok(RunSummary { files, passed, messages })
}
