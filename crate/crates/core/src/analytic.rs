//! Exact Gaussian reduction of the wave equation.
//!
//! Under the Gaussian ansatz the full PDE collapses to two decoupled pieces:
//! the packet center obeys damped free motion `x̄'' + ν x̄' = 0`, and the
//! width obeys the Ermakov-type equation
//!
//! ```text
//! δ'' + (ν − 2κ) δ' + (κ² − κν) δ = ħ² / (4 m² δ³)
//! ```
//!
//! The Bohmian velocity field is linear in `x − x̄`, so individual
//! trajectories follow in closed form once δ(t) is known.

use serde::Serialize;

use crate::bohmian::TrajectoryEnsemble;
use crate::error::{Error, Result};
use crate::model::PhysicalParams;
use crate::ode::{rk4_step, substeps};

/// The four dynamical variables of the reduction at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussonState {
    pub t: f64,
    pub xbar: f64,
    pub xbar_dot: f64,
    pub delta: f64,
    pub delta_dot: f64,
}

impl GaussonState {
    /// State at `t = 0` taken from the initial conditions in `p`.
    pub fn initial(p: &PhysicalParams) -> Self {
        Self {
            t: 0.0,
            xbar: p.x0,
            xbar_dot: p.v0,
            delta: p.delta0,
            delta_dot: p.deltadot0,
        }
    }
}

/// Width trace of the ODE on a caller-chosen time grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WidthSeries {
    pub times: Vec<f64>,
    pub deltas: Vec<f64>,
    pub delta_dots: Vec<f64>,
}

impl WidthSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// δ and δ̇ at `t`, by cubic Hermite interpolation between stamps.
    pub fn at(&self, t: f64) -> Result<(f64, f64)> {
        let (start, end) = match (self.times.first(), self.times.last()) {
            (Some(&a), Some(&b)) => (a, b),
            _ => return Err(Error::Range { t, start: f64::NAN, end: f64::NAN }),
        };
        let slack = 1e-12 * (end - start).abs().max(end.abs()).max(1e-300);
        if t < start - slack || t > end + slack {
            return Err(Error::Range { t, start, end });
        }
        let i = match self.times.binary_search_by(|s| s.total_cmp(&t)) {
            Ok(i) => return Ok((self.deltas[i], self.delta_dots[i])),
            Err(i) => i.clamp(1, self.times.len().max(2) - 1),
        };
        if self.times.len() == 1 {
            return Ok((self.deltas[0], self.delta_dots[0]));
        }
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let h = t1 - t0;
        let s = ((t - t0) / h).clamp(0.0, 1.0);
        let (y0, y1) = (self.deltas[i - 1], self.deltas[i]);
        let (m0, m1) = (self.delta_dots[i - 1] * h, self.delta_dots[i] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        let y = (2.0 * s3 - 3.0 * s2 + 1.0) * y0
            + (s3 - 2.0 * s2 + s) * m0
            + (-2.0 * s3 + 3.0 * s2) * y1
            + (s3 - s2) * m1;
        let dy = ((6.0 * s2 - 6.0 * s) * y0
            + (3.0 * s2 - 4.0 * s + 1.0) * m0
            + (-6.0 * s2 + 6.0 * s) * y1
            + (3.0 * s2 - 2.0 * s) * m1)
            / h;
        Ok((y, dy))
    }
}

/// Step size and collapse floor of the width integrator, in units of the
/// time scale `2mδ₀²/ħ` and of δ₀ respectively.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WidthIntegrator {
    pub step: f64,
    pub delta_floor: f64,
}

impl Default for WidthIntegrator {
    fn default() -> Self {
        Self {
            step: 1e-3,
            delta_floor: 1e-6,
        }
    }
}

/// Packet center and velocity from the closed-form solution of
/// `x̄'' + ν x̄' = 0`.
pub fn classical_trajectory(p: &PhysicalParams, t: f64) -> (f64, f64) {
    let decay = (-p.nu * t).exp();
    // (1 − e^{−νt})/ν written with expm1 so that ν → 0 is continuous
    let travel = if p.nu == 0.0 {
        t
    } else {
        -(-p.nu * t).exp_m1() / p.nu
    };
    (p.x0 + p.v0 * travel, p.v0 * decay)
}

/// Right-hand side of the width ODE as a first-order system `(δ, δ̇)`.
pub fn width_rhs(p: &PhysicalParams, delta: f64, delta_dot: f64) -> [f64; 2] {
    let q = p.hbar / (2.0 * p.mass);
    let accel = -(p.nu - 2.0 * p.kappa) * delta_dot
        - (p.kappa * p.kappa - p.kappa * p.nu) * delta
        + q * q / (delta * delta * delta);
    [delta_dot, accel]
}

/// Integrates the width ODE with fixed-step RK4, default options.
pub fn integrate_width(
    p: &PhysicalParams,
    initial: &GaussonState,
    t_grid: &[f64],
) -> Result<WidthSeries> {
    integrate_width_with(p, initial, t_grid, &WidthIntegrator::default())
}

/// Integrates the width ODE with fixed-step RK4 and records δ, δ̇ at every
/// point of `t_grid`. Each grid interval is split into equal substeps no
/// longer than `opts.step` time-scale units, so grid points are hit exactly.
pub fn integrate_width_with(
    p: &PhysicalParams,
    initial: &GaussonState,
    t_grid: &[f64],
    opts: &WidthIntegrator,
) -> Result<WidthSeries> {
    p.validate()?;
    if !(initial.delta > 0.0) {
        return Err(Error::validation("initial.delta", "must be > 0"));
    }
    if !(opts.step > 0.0) {
        return Err(Error::validation("width step", "must be > 0"));
    }
    let mut prev = initial.t;
    for (i, &t) in t_grid.iter().enumerate() {
        let ok = if i == 0 { t >= initial.t } else { t > prev };
        if !ok || !t.is_finite() {
            return Err(Error::validation(
                "t_grid",
                "must be strictly increasing and start at or after the initial time",
            ));
        }
        prev = t;
    }

    let time_scale = 2.0 * p.mass * p.delta0 * p.delta0 / p.hbar;
    let max_step = opts.step * time_scale;
    let floor = opts.delta_floor * p.delta0;

    let mut rhs = |_t: f64, y: &[f64; 2]| width_rhs(p, y[0], y[1]);
    let mut out = WidthSeries {
        times: Vec::with_capacity(t_grid.len()),
        deltas: Vec::with_capacity(t_grid.len()),
        delta_dots: Vec::with_capacity(t_grid.len()),
    };
    let mut t = initial.t;
    let mut y = [initial.delta, initial.delta_dot];
    for &target in t_grid {
        let span = target - t;
        if span > 0.0 {
            let n = substeps(span, max_step);
            let h = span / n as f64;
            for k in 0..n {
                let tk = t + k as f64 * h;
                y = rk4_step(&mut rhs, tk, y, h);
                if !(y[0] > floor) {
                    return Err(Error::Collapse { t: tk + h, floor });
                }
            }
            t = target;
        }
        out.times.push(target);
        out.deltas.push(y[0]);
        out.delta_dots.push(y[1]);
    }
    Ok(out)
}

/// Free spreading law `δ₀ sqrt(1 + (ħt/2mδ₀²)²)` for κ = ν = 0 and δ̇₀ = 0.
pub fn free_spreading_width(p: &PhysicalParams, t: f64) -> f64 {
    p.delta0 * (1.0 + (p.spreading_rate() * t).powi(2)).sqrt()
}

/// `(κ² − κν) δ − ħ²/(4m²δ³)`: zero exactly when κ is the Gausson value for
/// width δ.
pub fn stationary_width_residual(p: &PhysicalParams, delta: f64) -> f64 {
    let q = p.hbar / (2.0 * p.mass);
    (p.kappa * p.kappa - p.kappa * p.nu) * delta - q * q / (delta * delta * delta)
}

/// Closed-form Bohmian ensemble `xᵢ(t) = x̄(t) + x₀ᵢ (δ(t)/δ₀) e^{−κt}`.
///
/// `offsets` are initial positions relative to the packet center. With a
/// stationary width this is `x̄(t) + x₀ᵢ e^{−t/τ_B}`.
pub fn bohmian_trajectories_analytic(
    p: &PhysicalParams,
    offsets: &[f64],
    width: &WidthSeries,
    t_grid: &[f64],
) -> Result<TrajectoryEnsemble> {
    let t_start = t_grid.first().copied().unwrap_or(0.0);
    let (xbar0, _) = classical_trajectory(p, t_start);
    let (delta_start, _) = width.at(t_start)?;
    let mut positions = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let (delta, _) = width.at(t)?;
        let (xbar, _) = classical_trajectory(p, t);
        let factor = (delta / delta_start) * (-p.kappa * (t - t_start)).exp();
        positions.push(offsets.iter().map(|a| xbar + a * factor).collect());
    }
    Ok(TrajectoryEnsemble {
        x0: offsets.iter().map(|a| xbar0 + a).collect(),
        times: t_grid.to_vec(),
        positions,
        flagged: vec![None; offsets.len()],
    })
}

/// Bohmian velocity `(δ̇/δ − κ)(x − x̄) + x̄̇`.
pub fn velocity_field_analytic(state: &GaussonState, kappa: f64, x: f64) -> f64 {
    (state.delta_dot / state.delta - kappa) * (x - state.xbar) + state.xbar_dot
}

/// Quantum potential of the Gaussian amplitude,
/// `−ħ²/(8mδ⁴)(x − x̄)² + ħ²/(4mδ²)`.
///
/// Uses the instantaneous width δ(t); for a stationary packet δ = δ₀ and this
/// is the textbook Gausson expression.
pub fn quantum_potential_gausson(p: &PhysicalParams, state: &GaussonState, x: f64) -> f64 {
    let d2 = state.delta * state.delta;
    let y = x - state.xbar;
    let h2m = p.hbar * p.hbar / p.mass;
    -h2m / (8.0 * d2 * d2) * y * y + h2m / (4.0 * d2)
}

/// Quantum force on particle `i` of a stationary Gausson,
/// `ħ²/(4mδ₀⁴) x₀ᵢ e^{−t/τ_B}`.
pub fn quantum_force_gausson(p: &PhysicalParams, x0i: f64, t: f64, tau_b: f64) -> f64 {
    let d4 = p.delta0.powi(4);
    p.hbar * p.hbar / (4.0 * p.mass * d4) * x0i * (-t / tau_b).exp()
}

/// Quantum force `−∂V_qu/∂x = ħ²(x − x̄)/(4mδ⁴)` at a general instant.
pub fn quantum_force_at(p: &PhysicalParams, state: &GaussonState, x: f64) -> f64 {
    let d4 = state.delta.powi(4);
    p.hbar * p.hbar / (4.0 * p.mass * d4) * (x - state.xbar)
}

/// Gaussian probability density with the state's center and width.
pub fn density_gausson(state: &GaussonState, x: f64) -> f64 {
    let d2 = state.delta * state.delta;
    let y = x - state.xbar;
    (-(y * y) / (2.0 * d2)).exp() / (2.0 * std::f64::consts::PI * d2).sqrt()
}
