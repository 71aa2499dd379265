//! Observables of sampled wavefunctions, the continuity-equation residual, and
//! PDE-versus-reduction comparison reports.

use std::str::FromStr;

use num_complex::Complex64;
use serde::Serialize;

use crate::bohmian::TrajectoryEnsemble;
use crate::error::{Error, Result};
use crate::model::PhysicalParams;
use crate::pde::{unwrap_phase, Grid, Solver, Spectral, WavepacketState, DENSITY_FLOOR};

/// Window of the ⟨p⟩ decay regression, in solver time units.
pub const DECAY_FIT_WINDOW: (f64, f64) = (0.0, 2.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservableKind {
    Position,
    Momentum,
    KineticEnergy,
    LnRho,
    PhaseS,
}

impl FromStr for ObservableKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "position" => Self::Position,
            "momentum" => Self::Momentum,
            "kinetic_energy" => Self::KineticEnergy,
            "ln_rho" => Self::LnRho,
            "phase_S" | "phase_s" => Self::PhaseS,
            other => return Err(Error::Config(format!("unknown observable `{other}`"))),
        })
    }
}

/// `∫ψ* A ψ dx` by the periodic trapezoid rule; derivatives are spectral.
pub fn expectation(
    state: &WavepacketState,
    grid: &Grid,
    p: &PhysicalParams,
    kind: ObservableKind,
) -> Result<f64> {
    expectation_with(&Spectral::new(grid), state, grid, p, kind)
}

pub fn expectation_with(
    spectral: &Spectral,
    state: &WavepacketState,
    grid: &Grid,
    p: &PhysicalParams,
    kind: ObservableKind,
) -> Result<f64> {
    let dx = grid.dx();
    let psi = &state.amplitudes;
    let rho = state.density();
    Ok(match kind {
        ObservableKind::Position => {
            grid.positions().iter().zip(&rho).map(|(x, r)| x * r).sum::<f64>() * dx
        }
        ObservableKind::Momentum => {
            let d = spectral.derivative(psi, 1);
            p.hbar * psi.iter().zip(&d).map(|(z, dz)| (z.conj() * dz).im).sum::<f64>() * dx
        }
        ObservableKind::KineticEnergy => {
            let d = spectral.derivative(psi, 1);
            p.hbar * p.hbar / (2.0 * p.mass) * d.iter().map(|z| z.norm_sqr()).sum::<f64>() * dx
        }
        ObservableKind::LnRho => {
            rho.iter().map(|r| r * r.max(DENSITY_FLOOR).ln()).sum::<f64>() * dx
        }
        ObservableKind::PhaseS => {
            let th = unwrap_phase(state)?;
            p.hbar * th.iter().zip(&rho).map(|(t, r)| t * r).sum::<f64>() * dx
        }
    })
}

fn central_moments(x: &[f64], rho: &[f64]) -> (f64, f64, f64) {
    let total: f64 = rho.iter().sum();
    let mean = x.iter().zip(rho).map(|(x, r)| x * r).sum::<f64>() / total;
    let (mut m2, mut m4) = (0.0, 0.0);
    for (xi, r) in x.iter().zip(rho) {
        let d2 = (xi - mean).powi(2);
        m2 += r * d2;
        m4 += r * d2 * d2;
    }
    (mean, m2 / total, m4 / total)
}

/// Square root of the second central moment of `|ψ|²`.
pub fn measured_width(state: &WavepacketState, grid: &Grid) -> f64 {
    let (_, m2, _) = central_moments(&grid.positions(), &state.density());
    m2.sqrt()
}

/// `m₄/m₂² − 3` of `|ψ|²`; zero for a Gaussian.
pub fn excess_kurtosis(state: &WavepacketState, grid: &Grid) -> f64 {
    let (_, m2, m4) = central_moments(&grid.positions(), &state.density());
    m4 / (m2 * m2) - 3.0
}

fn current(spectral: &Spectral, psi: &[Complex64], p: &PhysicalParams) -> Vec<f64> {
    let d = spectral.derivative(psi, 1);
    psi.iter().zip(&d).map(|(z, dz)| p.hbar / p.mass * (z.conj() * dz).im).collect()
}

fn sink(rho: &[f64], kappa: f64) -> Vec<f64> {
    let ln: Vec<f64> = rho.iter().map(|r| r.max(DENSITY_FLOOR).ln()).collect();
    let mean = rho.iter().zip(&ln).map(|(r, l)| r * l).sum::<f64>() / rho.iter().sum::<f64>();
    rho.iter().zip(&ln).map(|(r, l)| 2.0 * kappa * (l - mean) * r).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuityResidual {
    /// Residual at the midpoint time, per grid node.
    pub field: Vec<f64>,
    /// `sqrt(Σρ r² / Σρ)` with ρ at the midpoint.
    pub norm: f64,
}

/// Residual of `ρ_t + ∂ₓ(ρv) + 2κ(ln ρ − ⟨ln ρ⟩)ρ = 0` centered between two
/// consecutive snapshots.
///
/// The sink coefficient is 2κ: W_c enters ψ linearly, so ρ = |ψ|² picks it up
/// twice.
pub fn continuity_residual(
    prev: &WavepacketState,
    next: &WavepacketState,
    grid: &Grid,
    p: &PhysicalParams,
) -> Result<ContinuityResidual> {
    continuity_residual_with(&Spectral::new(grid), prev, next, grid, p)
}

pub fn continuity_residual_with(
    spectral: &Spectral,
    prev: &WavepacketState,
    next: &WavepacketState,
    grid: &Grid,
    p: &PhysicalParams,
) -> Result<ContinuityResidual> {
    let dt = next.t - prev.t;
    if !(dt > 0.0) {
        return Err(Error::Alignment(format!(
            "residual needs increasing times, got {} then {}",
            prev.t, next.t
        )));
    }
    if prev.amplitudes.len() != grid.n_points || next.amplitudes.len() != grid.n_points {
        return Err(Error::Alignment("snapshot length differs from the grid".into()));
    }
    let (r0, r1) = (prev.density(), next.density());
    let (j0, j1) = (current(spectral, &prev.amplitudes, p), current(spectral, &next.amplitudes, p));
    let jm: Vec<Complex64> = j0.iter().zip(&j1).map(|(a, b)| Complex64::new(0.5 * (a + b), 0.0)).collect();
    let dj = spectral.derivative(&jm, 1);
    let (s0, s1) = (sink(&r0, p.kappa), sink(&r1, p.kappa));
    let mut num = 0.0;
    let mut den = 0.0;
    let field: Vec<f64> = (0..r0.len())
        .map(|i| {
            let r = (r1[i] - r0[i]) / dt + dj[i].re + 0.5 * (s0[i] + s1[i]);
            let rho = 0.5 * (r0[i] + r1[i]);
            num += rho * r * r;
            den += rho;
            r
        })
        .collect();
    Ok(ContinuityResidual {
        field,
        norm: (num / den).sqrt(),
    })
}

/// Observables of one snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub norm: f64,
    pub mean_x: f64,
    pub mean_p: f64,
    pub width: f64,
    pub mean_ln_rho: f64,
    #[serde(rename = "mean_S")]
    pub mean_s: f64,
    /// Kinetic energy; there is no external potential.
    pub energy: f64,
    /// Residual norm over the step that starts at `t`.
    pub continuity_residual: f64,
    pub gaussianity: f64,
}

impl DiagnosticsRecord {
    pub const COLUMNS: [&'static str; 10] = [
        "t",
        "norm",
        "mean_x",
        "mean_p",
        "width",
        "mean_ln_rho",
        "mean_S",
        "energy",
        "continuity_residual",
        "gaussianity",
    ];

    /// Record for `state`, with the residual taken over the step to `next`.
    pub fn from_pair(
        spectral: &Spectral,
        state: &WavepacketState,
        next: &WavepacketState,
        grid: &Grid,
        p: &PhysicalParams,
    ) -> Result<Self> {
        let e = |k| expectation_with(spectral, state, grid, p, k);
        let norm = state.norm(grid.dx());
        Ok(Self {
            t: state.t,
            norm,
            mean_x: e(ObservableKind::Position)? / norm,
            mean_p: e(ObservableKind::Momentum)? / norm,
            width: measured_width(state, grid),
            mean_ln_rho: e(ObservableKind::LnRho)? / norm,
            mean_s: e(ObservableKind::PhaseS)? / norm,
            energy: e(ObservableKind::KineticEnergy)?,
            continuity_residual: continuity_residual_with(spectral, state, next, grid, p)?.norm,
            gaussianity: excess_kurtosis(state, grid),
        })
    }

    pub fn values(&self) -> [f64; 10] {
        [
            self.t,
            self.norm,
            self.mean_x,
            self.mean_p,
            self.width,
            self.mean_ln_rho,
            self.mean_s,
            self.energy,
            self.continuity_residual,
            self.gaussianity,
        ]
    }
}

/// Slope of `ln|y|` against `t` by least squares over the points with `t` in
/// `window`.
pub fn fit_decay_exponent(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<f64> {
    if times.len() != values.len() {
        return Err(Error::Alignment("times and values differ in length".into()));
    }
    let eps = 1e-9 * window.1.abs().max(1.0);
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= window.0 - eps && **t <= window.1 + eps)
        .map(|(t, v)| (*t, v.abs().ln()))
        .collect();
    if pts.len() < 2 || pts.iter().any(|(_, l)| !l.is_finite()) {
        return Err(Error::Domain(
            "decay fit needs at least two nonzero values inside the window".into(),
        ));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(t, l)| (t - mt) * (l - ml)).sum();
    let sxx: f64 = pts.iter().map(|(t, _)| (t - mt) * (t - mt)).sum();
    Ok(sxy / sxx)
}

/// Width and momentum history of one run, plus optional trajectories.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSeries {
    pub times: Vec<f64>,
    pub widths: Vec<f64>,
    pub mean_p: Vec<f64>,
    pub trajectories: Option<TrajectoryEnsemble>,
}

impl RunSeries {
    pub fn from_records(records: &[DiagnosticsRecord]) -> Self {
        Self {
            times: records.iter().map(|r| r.t).collect(),
            widths: records.iter().map(|r| r.width).collect(),
            mean_p: records.iter().map(|r| r.mean_p).collect(),
            trajectories: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub times: Vec<f64>,
    pub width_rel_error: Vec<f64>,
    pub max_width_rel_error: f64,
    /// Largest absolute position gap over all particles and times.
    pub trajectory_max_abs_error: Option<f64>,
    /// Fitted exponent of |⟨p⟩| for the first series, when ⟨p⟩ is nonzero.
    pub p_decay_exponent: Option<f64>,
    /// Same fit on the second series.
    pub p_decay_exponent_reference: Option<f64>,
}

fn aligned(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-9 * x.abs().max(1.0))
}

/// Compares a PDE run with its reduction (or any two runs) stamp by stamp.
pub fn compare_runs(pde: &RunSeries, reference: &RunSeries) -> Result<ComparisonReport> {
    if !aligned(&pde.times, &reference.times) {
        return Err(Error::Alignment(format!(
            "series have {} and {} stamps or differing times",
            pde.times.len(),
            reference.times.len()
        )));
    }
    if pde.widths.len() != pde.times.len() || reference.widths.len() != reference.times.len() {
        return Err(Error::Alignment("width column length differs from times".into()));
    }
    let width_rel_error: Vec<f64> = pde
        .widths
        .iter()
        .zip(&reference.widths)
        .map(|(a, b)| ((a - b) / b).abs())
        .collect();
    let max_width_rel_error = width_rel_error.iter().copied().fold(0.0, f64::max);

    let trajectory_max_abs_error = match (&pde.trajectories, &reference.trajectories) {
        (Some(a), Some(b)) => {
            if !aligned(&a.times, &b.times) || a.x0.len() != b.x0.len() {
                return Err(Error::Alignment("trajectory ensembles differ in shape".into()));
            }
            let mut worst: f64 = 0.0;
            for (ra, rb) in a.positions.iter().zip(&b.positions) {
                for (xa, xb) in ra.iter().zip(rb) {
                    worst = worst.max((xa - xb).abs());
                }
            }
            Some(worst)
        }
        _ => None,
    };

    let fit = |s: &RunSeries| {
        if s.mean_p.len() == s.times.len() && s.mean_p.iter().all(|p| p.abs() > 1e-12) {
            fit_decay_exponent(&s.times, &s.mean_p, DECAY_FIT_WINDOW).ok()
        } else {
            None
        }
    };
    Ok(ComparisonReport {
        times: pde.times.clone(),
        width_rel_error,
        max_width_rel_error,
        trajectory_max_abs_error,
        p_decay_exponent: fit(pde),
        p_decay_exponent_reference: fit(reference),
    })
}

/// Evolves `start` to `t_end`, keeping the states at `snapshot_times` (and
/// the start) together with their diagnostics. Each record's residual uses
/// the step that follows it, so one step beyond `t_end` is taken.
pub fn evolve_with_diagnostics(
    solver: &Solver,
    start: &WavepacketState,
    t_end: f64,
    snapshot_times: &[f64],
) -> Result<(Vec<WavepacketState>, Vec<DiagnosticsRecord>)> {
    let dt = solver.grid().dt;
    let t0 = start.t;
    let mut marks = vec![0usize];
    for &ts in snapshot_times {
        let k = solver.steps_for(ts - t0)?;
        if k > *marks.last().unwrap() {
            marks.push(k);
        } else if k != 0 || marks.len() > 1 {
            return Err(Error::validation("snapshots", "must be strictly increasing"));
        }
    }
    let total = solver.steps_for(t_end - t0)?;
    if *marks.last().unwrap() > total {
        return Err(Error::validation("snapshots", "extend past t_end"));
    }
    let (grid, p) = (solver.grid(), solver.params());
    let spectral = solver.spectral();
    let mut states = Vec::with_capacity(marks.len());
    let mut records = Vec::with_capacity(marks.len());
    let mut cur = start.clone();
    let mut done = 0usize;
    for k in marks {
        if k > done {
            solver.advance(&mut cur, k - done - 1)?;
            solver.step(&mut cur)?;
            cur.t = t0 + k as f64 * dt;
        }
        let mut next = cur.clone();
        solver.step(&mut next)?;
        next.t = t0 + (k + 1) as f64 * dt;
        records.push(DiagnosticsRecord::from_pair(spectral, &cur, &next, grid, p)?);
        states.push(cur.clone());
        cur = next;
        done = k + 1;
    }
    Ok((states, records))
}
