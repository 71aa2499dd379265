//! Split-step Fourier solver for the wave equation with measurement and
//! friction nonlinearities,
//!
//! ```text
//! iħ ψ_t = −(ħ²/2m) ψ_xx + iħ (W_c + W_f) ψ
//! W_c = −κ (ln ρ − ⟨ln ρ⟩)
//! W_f = −iν (S − ⟨S⟩)/ħ
//! ```
//!
//! on a periodic grid. The friction term carries the Kostin sign, which damps
//! the mean momentum as `e^{−νt}`.
//!
//! Each step is a Strang composition: a nonlinear half step, an exact kinetic
//! step in Fourier space, then another nonlinear half step. Under the
//! nonlinear flow alone `ln ρ` and `S` relax linearly toward their means, so
//! that sub-flow is integrated exactly rather than with a frozen exponential.
//!
//! The packet tails are linearly unstable under the measurement term: a small
//! perturbation at distance `y` from the center grows at rate `κ(y²/δ² − 1)/2`.
//! Without care, FFT round-off in the far field grows until it swamps the
//! packet after a few time units. After every kinetic step the far field
//! (density below a fraction of the peak) is therefore rebuilt as the
//! log-quadratic continuation of the core, which is exact for Gaussian data.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::analytic::GaussonState;
use crate::error::{Error, Result};
use crate::model::PhysicalParams;

/// Absolute density floor used inside `ln ρ`.
pub const DENSITY_FLOOR: f64 = 1e-30;

// Relative density above which nodes count as part of the packet for the
// contiguity and phase-resolution checks.
const SIGNIFICANT_DENSITY: f64 = 1e-10;
const RESOLVED_DENSITY: f64 = 1e-6;

/// Periodic 1-D grid and time step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
    pub dt: f64,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            x_min: -12.0,
            x_max: 12.0,
            n_points: 512,
            dt: 1e-3,
        }
    }
}

impl Grid {
    pub fn validate(&self) -> Result<()> {
        if !(self.x_min.is_finite() && self.x_max.is_finite() && self.x_max > self.x_min) {
            return Err(Error::validation("grid", "need finite x_max > x_min"));
        }
        if self.n_points < 64 || !self.n_points.is_power_of_two() {
            return Err(Error::validation(
                "grid.n_points",
                format!("must be a power of two >= 64, got {}", self.n_points),
            ));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::validation("grid.dt", format!("must be > 0, got {}", self.dt)));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_points as f64
    }

    pub fn positions(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.n_points).map(|i| self.x_min + i as f64 * dx).collect()
    }

    /// Angular wavenumbers in FFT order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let n = self.n_points;
        let dk = 2.0 * PI / (self.x_max - self.x_min);
        (0..n)
            .map(|i| if i < n / 2 { i as f64 } else { i as f64 - n as f64 } * dk)
            .collect()
    }

    /// Same domain with `factor` times the points and `1/factor` the step.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            n_points: self.n_points * factor,
            dt: self.dt / factor as f64,
            ..*self
        }
    }
}

/// ψ on the grid at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct WavepacketState {
    pub t: f64,
    pub amplitudes: Vec<Complex64>,
}

impl WavepacketState {
    pub fn density(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|z| z.norm_sqr()).collect()
    }

    /// Trapezoid (periodic) rule `Σ|ψ|² dx`.
    pub fn norm(&self, dx: f64) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>() * dx
    }
}

/// FFT plans plus the wavenumber table of one grid.
#[derive(Clone)]
pub struct Spectral {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    k: Vec<f64>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("n", &self.k.len()).finish()
    }
}

impl Spectral {
    pub fn new(grid: &Grid) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            fwd: planner.plan_fft_forward(grid.n_points),
            inv: planner.plan_fft_inverse(grid.n_points),
            k: grid.wavenumbers(),
        }
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.k
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.fwd.process(buf);
    }

    /// Inverse transform including the `1/n` normalization.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.inv.process(buf);
        let s = 1.0 / buf.len() as f64;
        buf.iter_mut().for_each(|z| *z *= s);
    }

    /// `∂ⁿψ/∂xⁿ` by multiplication with `(ik)ⁿ`.
    pub fn derivative(&self, psi: &[Complex64], order: u32) -> Vec<Complex64> {
        let mut buf = psi.to_vec();
        self.forward(&mut buf);
        let n = buf.len();
        for (i, (z, &k)) in buf.iter_mut().zip(&self.k).enumerate() {
            // the Nyquist mode has no sign; drop it for odd derivatives
            if order % 2 == 1 && i == n / 2 {
                *z = Complex64::new(0.0, 0.0);
            } else {
                *z *= Complex64::new(0.0, k).powu(order);
            }
        }
        self.inverse(&mut buf);
        buf
    }
}

/// Far-field rebuild applied after each kinetic step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FarFieldClosure {
    /// Nodes with `ρ < threshold · ρ_max` outside the core are rebuilt.
    pub threshold: f64,
    /// Number of core edge nodes used for each quadratic fit.
    pub band: usize,
}

impl Default for FarFieldClosure {
    fn default() -> Self {
        Self {
            threshold: 1e-2,
            band: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    pub density_floor: f64,
    /// `None` runs the bare split-step scheme.
    pub closure: Option<FarFieldClosure>,
    /// Largest norm change tolerated across one kinetic step.
    pub norm_tolerance: f64,
    /// Largest density tolerated in the outermost cell on either side.
    pub boundary_limit: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            density_floor: DENSITY_FLOOR,
            closure: Some(FarFieldClosure::default()),
            norm_tolerance: 1e-6,
            boundary_limit: 1e-10,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.density_floor > 0.0 && self.density_floor < 1e-6) {
            return Err(Error::validation("solver.density_floor", "must lie in (0, 1e-6)"));
        }
        if let Some(c) = self.closure {
            if !(c.threshold > 0.0 && c.threshold < 1.0) {
                return Err(Error::validation("solver.closure.threshold", "must lie in (0, 1)"));
            }
            if c.band < 3 {
                return Err(Error::validation("solver.closure.band", "needs at least 3 nodes"));
            }
        }
        if !(self.norm_tolerance > 0.0) || !(self.boundary_limit > 0.0) {
            return Err(Error::validation("solver", "tolerances must be > 0"));
        }
        Ok(())
    }
}

/// Gaussian packet with the amplitude and phase of the exact reduction:
/// width δ, center x̄, and phase `S = (m/2)(δ̇/δ − κ)(x − x̄)² + m x̄̇ (x − x̄)`.
pub fn init_gaussian(
    grid: &Grid,
    p: &PhysicalParams,
    initial: &GaussonState,
) -> Result<WavepacketState> {
    grid.validate()?;
    p.validate()?;
    if !(initial.delta > 0.0) {
        return Err(Error::validation("initial.delta", "must be > 0"));
    }
    let reach = 6.0 * initial.delta;
    if initial.xbar - reach < grid.x_min || initial.xbar + reach > grid.x_max {
        return Err(Error::Config(format!(
            "packet at {} with width {} does not fit inside [{}, {}] with 6-width margins; \
             enlarge the domain",
            initial.xbar, initial.delta, grid.x_min, grid.x_max
        )));
    }
    let d2 = initial.delta * initial.delta;
    let amp = (2.0 * PI * d2).powf(-0.25);
    let chirp = p.mass / (2.0 * p.hbar) * (initial.delta_dot / initial.delta - p.kappa);
    let tilt = p.mass * initial.xbar_dot / p.hbar;
    let amplitudes = grid
        .positions()
        .into_iter()
        .map(|x| {
            let y = x - initial.xbar;
            Complex64::from_polar(amp * (-y * y / (4.0 * d2)).exp(), chirp * y * y + tilt * y)
        })
        .collect();
    Ok(WavepacketState {
        t: initial.t,
        amplitudes,
    })
}

fn weighted_mean(rho: &[f64], f: &[f64]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (r, v) in rho.iter().zip(f) {
        num += r * v;
        den += r;
    }
    num / den
}

fn peak_index(rho: &[f64]) -> usize {
    rho.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

/// Maximal run `[l, r]` around `center` with `rho >= cut`, without wrapping.
fn contiguous_run(rho: &[f64], center: usize, cut: f64) -> (usize, usize) {
    let mut l = center;
    while l > 0 && rho[l - 1] >= cut {
        l -= 1;
    }
    let mut r = center;
    while r + 1 < rho.len() && rho[r + 1] >= cut {
        r += 1;
    }
    (l, r)
}

fn principal(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

/// Phase along `[l, r]` continued by principal differences from `anchor`,
/// where it equals `arg ψ`.
fn unwrap_run(psi: &[Complex64], l: usize, r: usize, anchor: usize) -> Vec<f64> {
    let mut th = vec![0.0; r - l + 1];
    th[anchor - l] = psi[anchor].arg();
    for i in anchor + 1..=r {
        th[i - l] = th[i - l - 1] + principal(psi[i].arg() - psi[i - 1].arg());
    }
    for i in (l..anchor).rev() {
        th[i - l] = th[i - l + 1] + principal(psi[i].arg() - psi[i + 1].arg());
    }
    th
}

/// Continuous phase `S/ħ` of ψ, in radians.
///
/// The phase is unwrapped over the contiguous region around the density peak
/// where `ρ > floor`, anchored to `arg ψ` at the peak, and held constant
/// outside that region (whose density weight is negligible).
pub fn unwrap_phase_with(state: &WavepacketState, floor: f64) -> Result<Vec<f64>> {
    let psi = &state.amplitudes;
    let rho = state.density();
    let i0 = peak_index(&rho);
    let rmax = rho[i0];
    if !(rmax > floor) || !rmax.is_finite() {
        return Err(Error::Unwrap(format!("peak density {rmax:e} is not above the floor")));
    }
    let (l, r) = contiguous_run(&rho, i0, floor.max(f64::MIN_POSITIVE));
    let significant = SIGNIFICANT_DENSITY * rmax;
    if let Some(j) = (0..l).chain(r + 1..rho.len()).find(|&j| rho[j] > significant) {
        return Err(Error::Unwrap(format!(
            "density {:e} at node {j} is detached from the packet; only a single packet is supported",
            rho[j]
        )));
    }
    let resolved = RESOLVED_DENSITY * rmax;
    for i in l..r {
        if rho[i] > resolved && rho[i + 1] > resolved {
            let jump = principal(psi[i + 1].arg() - psi[i].arg());
            if jump.abs() > 0.5 * PI {
                return Err(Error::Unwrap(format!(
                    "phase changes by {jump:.3} rad between nodes {i} and {}; refine the grid",
                    i + 1
                )));
            }
        }
    }
    let core = unwrap_run(psi, l, r, i0);
    let mut out = vec![0.0; psi.len()];
    out[..l].fill(core[0]);
    out[l..=r].copy_from_slice(&core);
    out[r + 1..].fill(core[core.len() - 1]);
    Ok(out)
}

pub fn unwrap_phase(state: &WavepacketState) -> Result<Vec<f64>> {
    unwrap_phase_with(state, DENSITY_FLOOR)
}

/// Measurement field `W_c = −κ(ln ρ − ⟨ln ρ⟩)` with `ρ` floored at
/// [`DENSITY_FLOOR`].
pub fn compute_wc(state: &WavepacketState, kappa: f64) -> Vec<f64> {
    let rho = state.density();
    let ln: Vec<f64> = rho.iter().map(|r| r.max(DENSITY_FLOOR).ln()).collect();
    let mean = weighted_mean(&rho, &ln);
    ln.iter().map(|l| -kappa * (l - mean)).collect()
}

/// Friction field. `W_f` is purely imaginary; the returned values are its
/// imaginary part, `−ν(S − ⟨S⟩)/ħ`.
pub fn compute_wf(state: &WavepacketState, nu: f64) -> Result<Vec<f64>> {
    let rho = state.density();
    let th = unwrap_phase(state)?;
    let mean = weighted_mean(&rho, &th);
    Ok(th.iter().map(|t| -nu * (t - mean)).collect())
}

/// Least-squares `c0 + c1 s + c2 s²` through `(s, y)`.
fn fit_quadratic(s: &[f64], y: &[f64]) -> Option<[f64; 3]> {
    let mut m = [[0.0f64; 4]; 3];
    for (&si, &yi) in s.iter().zip(y) {
        let pw = [1.0, si, si * si];
        for a in 0..3 {
            for b in 0..3 {
                m[a][b] += pw[a] * pw[b];
            }
            m[a][3] += pw[a] * yi;
        }
    }
    // Gaussian elimination with partial pivoting on the 3×4 augmented matrix
    for c in 0..3 {
        let piv = (c..3).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs()))?;
        m.swap(c, piv);
        if m[c][c].abs() < 1e-300 {
            return None;
        }
        for rr in 0..3 {
            if rr != c {
                let f = m[rr][c] / m[c][c];
                let pivot_row = m[c];
                for (x, y) in m[rr].iter_mut().zip(pivot_row).skip(c) {
                    *x -= f * y;
                }
            }
        }
    }
    Some([m[0][3] / m[0][0], m[1][3] / m[1][1], m[2][3] / m[2][2]])
}

fn close_far_field(psi: &mut [Complex64], closure: &FarFieldClosure, t: f64) -> Result<()> {
    let rho: Vec<f64> = psi.iter().map(|z| z.norm_sqr()).collect();
    let i0 = peak_index(&rho);
    let (l, r) = contiguous_run(&rho, i0, closure.threshold * rho[i0]);
    let band = closure.band;
    if r + 1 - l < band {
        return Err(Error::Instability {
            t,
            reason: format!("packet core spans {} nodes, fewer than the closure band {band}", r + 1 - l),
        });
    }
    let theta = unwrap_run(psi, l, r, i0);
    let n = psi.len();
    // (edge node, band start, outward direction)
    let sides: [(usize, usize, isize); 2] = [(r, r + 1 - band, 1), (l, l, -1)];
    for (edge, start, dir) in sides {
        let outside = if dir > 0 { n - 1 - r } else { l };
        if outside == 0 {
            continue;
        }
        let s: Vec<f64> = (start..start + band).map(|i| i as f64 - edge as f64).collect();
        let amp: Vec<f64> = (start..start + band).map(|i| 0.5 * rho[i].max(1e-300).ln()).collect();
        let ph: Vec<f64> = (start..start + band).map(|i| theta[i - l]).collect();
        let (ca, ct) = match (fit_quadratic(&s, &amp), fit_quadratic(&s, &ph)) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(Error::Instability { t, reason: "far-field fit is singular".into() })
            }
        };
        if !(ca[2] < 0.0) {
            return Err(Error::Instability {
                t,
                reason: "packet edge is not Gaussian-decaying; far-field closure cannot continue it"
                    .into(),
            });
        }
        for step in 1..=outside {
            let i = (edge as isize + dir * step as isize) as usize;
            let sv = (dir * step as isize) as f64;
            let a = ca[0] + sv * (ca[1] + sv * ca[2]);
            let th = ct[0] + sv * (ct[1] + sv * ct[2]);
            psi[i] = if a < -700.0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::from_polar(a.exp(), th)
            };
        }
    }
    Ok(())
}

/// Split-step evolution of one parameter set on one grid.
#[derive(Debug, Clone)]
pub struct Solver {
    grid: Grid,
    params: PhysicalParams,
    opts: SolverOptions,
    spectral: Spectral,
    kinetic: Vec<Complex64>,
}

impl Solver {
    pub fn new(grid: Grid, params: PhysicalParams, opts: SolverOptions) -> Result<Self> {
        grid.validate()?;
        params.validate()?;
        opts.validate()?;
        let spectral = Spectral::new(&grid);
        let c = params.hbar * grid.dt / (2.0 * params.mass);
        let kinetic = spectral
            .wavenumbers()
            .iter()
            .map(|k| Complex64::from_polar(1.0, -c * k * k))
            .collect();
        Ok(Self {
            grid,
            params,
            opts,
            spectral,
            kinetic,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn params(&self) -> &PhysicalParams {
        &self.params
    }

    pub fn options(&self) -> &SolverOptions {
        &self.opts
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }

    pub fn init_gaussian(&self, initial: &GaussonState) -> Result<WavepacketState> {
        init_gaussian(&self.grid, &self.params, initial)
    }

    /// Exact flow of `ψ_t = (W_c + W_f)ψ` over time `h`, renormalized.
    fn nonlinear(&self, psi: &mut [Complex64], h: f64, t: f64) -> Result<()> {
        let (kappa, nu) = (self.params.kappa, self.params.nu);
        if kappa == 0.0 && nu == 0.0 {
            return Ok(());
        }
        let dx = self.grid.dx();
        let floor = self.opts.density_floor;
        let rho: Vec<f64> = psi.iter().map(|z| z.norm_sqr()).collect();

        // ln ρ relaxes as ln ρ − ⟨ln ρ⟩ ∝ e^{−2κh}; the constant is fixed by
        // the norm, so ρ → ρ^α / C with α = e^{−2κh}.
        let alpha = (-2.0 * kappa * h).exp();
        let ln: Vec<f64> = rho.iter().map(|r| r.max(floor).ln()).collect();
        let mut log_gain: Vec<f64> = ln.iter().map(|l| 0.5 * (alpha - 1.0) * l).collect();
        let c: f64 = rho
            .iter()
            .zip(&log_gain)
            .map(|(r, g)| r * (2.0 * g).exp())
            .sum::<f64>()
            * dx;
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Instability { t, reason: "density lost its normalization".into() });
        }
        let shift = -0.5 * c.ln();
        log_gain.iter_mut().for_each(|g| *g += shift);

        let phase_factor = (-nu * h).exp_m1();
        let theta = if nu > 0.0 {
            let st = WavepacketState { t, amplitudes: psi.to_vec() };
            let th = unwrap_phase_with(&st, floor)?;
            let mean = weighted_mean(&rho, &th);
            Some((th, mean))
        } else {
            None
        };
        for (i, z) in psi.iter_mut().enumerate() {
            let rot = match &theta {
                Some((th, mean)) => phase_factor * (th[i] - mean),
                None => 0.0,
            };
            *z *= Complex64::from_polar(log_gain[i].exp(), rot);
        }
        Ok(())
    }

    /// Advances `state` by one time step.
    pub fn step(&self, state: &mut WavepacketState) -> Result<()> {
        let t = state.t;
        let dx = self.grid.dx();
        let half = 0.5 * self.grid.dt;
        let psi = &mut state.amplitudes;
        if psi.len() != self.grid.n_points {
            return Err(Error::validation("state", "length does not match the grid"));
        }
        self.nonlinear(psi, half, t)?;
        let before: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>() * dx;
        self.spectral.forward(psi);
        for (z, k) in psi.iter_mut().zip(&self.kinetic) {
            *z *= k;
        }
        self.spectral.inverse(psi);
        if let Some(closure) = &self.opts.closure {
            close_far_field(psi, closure, t)?;
        }
        let after: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>() * dx;
        let drift = (after - before).abs() / before;
        if !(drift <= self.opts.norm_tolerance) {
            return Err(Error::Instability {
                t,
                reason: format!("norm changed by {drift:e} in one step"),
            });
        }
        self.nonlinear(psi, half, t + half)?;
        state.t = t + self.grid.dt;

        let n = psi.len();
        let edge = psi[0].norm_sqr().max(psi[n - 1].norm_sqr());
        if edge > self.opts.boundary_limit {
            return Err(Error::Boundary {
                t: state.t,
                density: edge,
                limit: self.opts.boundary_limit,
            });
        }
        Ok(())
    }

    /// `n` steps, with the time stamp set to `t₀ + n·dt` at the end so that
    /// round-off does not accumulate in `t`.
    pub fn advance(&self, state: &mut WavepacketState, n: usize) -> Result<()> {
        let t0 = state.t;
        for _ in 0..n {
            self.step(state)?;
        }
        state.t = t0 + n as f64 * self.grid.dt;
        Ok(())
    }

    /// Number of whole steps spanning `span`, or an error if `span` is not a
    /// multiple of `dt`.
    pub fn steps_for(&self, span: f64) -> Result<usize> {
        let n = span / self.grid.dt;
        let k = n.round();
        if !(k >= 0.0) || (n - k).abs() > 1e-6 {
            return Err(Error::validation(
                "time",
                format!("span {span} is not a multiple of dt = {}", self.grid.dt),
            ));
        }
        Ok(k as usize)
    }

    /// Evolves a copy of `state` to `t_end`. The returned sequence starts with
    /// the initial state and then holds one snapshot per entry of
    /// `snapshot_times` later than `state.t`.
    pub fn evolve(
        &self,
        state: &WavepacketState,
        t_end: f64,
        snapshot_times: &[f64],
    ) -> Result<Vec<WavepacketState>> {
        let total = self.steps_for(t_end - state.t)?;
        let mut marks = Vec::with_capacity(snapshot_times.len());
        let mut last = 0usize;
        for &ts in snapshot_times {
            if ts > t_end + 1e-9 * self.grid.dt || ts < state.t - 1e-9 * self.grid.dt {
                return Err(Error::validation("snapshots", format!("{ts} outside [t0, t_end]")));
            }
            let k = self.steps_for(ts - state.t)?;
            if k == 0 {
                continue;
            }
            if k <= last {
                return Err(Error::validation("snapshots", "must be strictly increasing"));
            }
            marks.push(k);
            last = k;
        }
        let mut out = vec![state.clone()];
        let mut cur = state.clone();
        let mut done = 0;
        for k in marks {
            self.advance(&mut cur, k - done)?;
            cur.t = state.t + k as f64 * self.grid.dt;
            out.push(cur.clone());
            done = k;
        }
        if done < total {
            self.advance(&mut cur, total - done)?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{density_gausson, integrate_width};
    use crate::model::DimensionlessParams;

    fn solver_params(nu_t: f64, kappa_t: f64) -> PhysicalParams {
        DimensionlessParams { nu_t, kappa_t, x0_t: 0.0, v0_t: 0.0, deltadot0_t: 0.0 }
            .to_solver_params()
    }

    fn width(state: &WavepacketState) -> f64 {
        let rho = state.density();
        let x = Grid::default().positions();
        let m = weighted_mean(&rho, &x);
        let v: Vec<f64> = x.iter().map(|xi| (xi - m).powi(2)).collect();
        weighted_mean(&rho, &v).sqrt()
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::default().validate().is_ok());
        assert!(Grid { n_points: 500, ..Grid::default() }.validate().is_err());
        assert!(Grid { n_points: 32, ..Grid::default() }.validate().is_err());
        assert!(Grid { x_max: -20.0, ..Grid::default() }.validate().is_err());
        assert!(Grid { dt: 0.0, ..Grid::default() }.validate().is_err());
        assert_eq!(Grid::default().dx(), 24.0 / 512.0);
    }

    #[test]
    fn init_matches_density_and_norm() {
        let g = Grid::default();
        let p = solver_params(0.0, 1.0);
        let s = init_gaussian(&g, &p, &GaussonState::initial(&p)).unwrap();
        let st = GaussonState::initial(&p);
        for (x, r) in g.positions().iter().zip(s.density()) {
            assert!((r - density_gausson(&st, *x)).abs() < 1e-15);
        }
        assert!((s.norm(g.dx()) - 1.0).abs() < 1e-13);
        assert!((width(&s) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn init_phase_gradient_matches_velocity_field() {
        let g = Grid::default();
        let mut p = solver_params(0.0, 1.3);
        p.v0 = 0.4;
        p.deltadot0 = 0.25;
        let init = GaussonState::initial(&p);
        let s = init_gaussian(&g, &p, &init).unwrap();
        let th = unwrap_phase(&s).unwrap();
        let x = g.positions();
        let dx = g.dx();
        for i in 200..312 {
            // v = (ħ/m) ∂θ/∂x by central difference; θ is quadratic so this is exact
            let v = (p.hbar / p.mass) * (th[i + 1] - th[i - 1]) / (2.0 * dx);
            let expect = (0.25 - 1.3) * x[i] + 0.4;
            assert!((v - expect).abs() < 1e-8, "{v} {expect}");
        }
    }

    #[test]
    fn init_real_when_unforced() {
        let p = solver_params(0.0, 0.0);
        let s = init_gaussian(&Grid::default(), &p, &GaussonState::initial(&p)).unwrap();
        assert!(s.amplitudes.iter().all(|z| z.im == 0.0 && z.re >= 0.0));
    }

    #[test]
    fn init_support_check() {
        let p = solver_params(0.0, 1.0);
        let mut init = GaussonState::initial(&p);
        init.xbar = 7.0;
        assert!(matches!(init_gaussian(&Grid::default(), &p, &init), Err(Error::Config(_))));
    }

    #[test]
    fn wc_examples() {
        let p = solver_params(0.0, 1.0);
        let s = init_gaussian(&Grid::default(), &p, &GaussonState::initial(&p)).unwrap();
        let wc = compute_wc(&s, 1.0);
        let i0 = 256;
        assert!((wc[i0] + 0.5).abs() < 1e-10, "{}", wc[i0]);
        assert!(weighted_mean(&s.density(), &wc).abs() < 1e-10);
        assert!(compute_wc(&s, 0.0).iter().all(|w| *w == 0.0));
        let flat = WavepacketState { t: 0.0, amplitudes: vec![Complex64::new(0.2, 0.0); 64] };
        assert!(compute_wc(&flat, 3.0).iter().all(|w| w.abs() < 1e-14));
    }

    #[test]
    fn wf_examples() {
        let g = Grid::default();
        let p = solver_params(0.0, 0.0);
        let real = init_gaussian(&g, &p, &GaussonState::initial(&p)).unwrap();
        assert!(compute_wf(&real, 0.7).unwrap().iter().all(|w| w.abs() < 1e-14));

        let mut p = solver_params(0.0, 0.0);
        p.v0 = 1.2; // θ = p₀ x with p₀ = m v₀/ħ = 0.6
        let tilted = init_gaussian(&g, &p, &GaussonState::initial(&p)).unwrap();
        assert!(compute_wf(&tilted, 0.0).unwrap().iter().all(|w| *w == 0.0));
        let wf = compute_wf(&tilted, 0.5).unwrap();
        let rho = tilted.density();
        assert!(weighted_mean(&rho, &wf).abs() < 1e-10);
        let x = g.positions();
        let mx = weighted_mean(&rho, &x);
        for i in 100..412 {
            assert!((wf[i] + 0.5 * 0.6 * (x[i] - mx)).abs() < 1e-10);
        }
    }

    #[test]
    fn unwrap_examples() {
        let g = Grid::default();
        let x = g.positions();
        let gauss = |xi: f64| (-xi * xi / 4.0).exp();
        let real = WavepacketState {
            t: 0.0,
            amplitudes: x.iter().map(|&xi| Complex64::new(gauss(xi), 0.0)).collect(),
        };
        assert!(unwrap_phase(&real).unwrap().iter().all(|v| *v == 0.0));

        // quadratic phase −κ y²/4 (m = 1/2, ħ = 1): recover the coefficient
        let kappa = 1.7;
        let chirp = WavepacketState {
            t: 0.0,
            amplitudes: x
                .iter()
                .map(|&xi| Complex64::from_polar(gauss(xi), -kappa * xi * xi / 4.0))
                .collect(),
        };
        let th = unwrap_phase(&chirp).unwrap();
        let s: Vec<f64> = x[156..356].to_vec();
        let c = fit_quadratic(&s, &th[156..356]).unwrap();
        assert!((c[2] + kappa / 4.0).abs() < 1e-6);

        // fast linear phase wraps many times across the packet
        let p0 = 20.0;
        let lin = WavepacketState {
            t: 0.0,
            amplitudes: x.iter().map(|&xi| Complex64::from_polar(gauss(xi), p0 * xi)).collect(),
        };
        let th = unwrap_phase(&lin).unwrap();
        let slope = (th[356] - th[156]) / (x[356] - x[156]);
        assert!((slope - p0).abs() < 1e-8);
    }

    #[test]
    fn unwrap_rejects_two_packets() {
        let x = Grid::default().positions();
        let two = WavepacketState {
            t: 0.0,
            amplitudes: x
                .iter()
                .map(|&xi| {
                    Complex64::new((-(xi - 6.0).powi(2)).exp() + (-(xi + 6.0).powi(2)).exp(), 0.0)
                })
                .collect(),
        };
        assert!(matches!(unwrap_phase(&two), Err(Error::Unwrap(_))));
    }

    #[test]
    fn unwrap_rejects_unresolved_phase() {
        let x = Grid::default().positions();
        let fast = WavepacketState {
            t: 0.0,
            amplitudes: x
                .iter()
                .map(|&xi| Complex64::from_polar((-xi * xi / 4.0).exp(), 50.0 * xi))
                .collect(),
        };
        assert!(matches!(unwrap_phase(&fast), Err(Error::Unwrap(_))));
    }

    #[test]
    fn quadratic_fit_is_exact_on_quadratics() {
        let s: Vec<f64> = (-7..=0).map(f64::from).collect();
        let y: Vec<f64> = s.iter().map(|v| 1.5 - 0.25 * v + 0.125 * v * v).collect();
        let c = fit_quadratic(&s, &y).unwrap();
        assert!((c[0] - 1.5).abs() < 1e-12 && (c[1] + 0.25).abs() < 1e-12 && (c[2] - 0.125).abs() < 1e-12);
    }

    #[test]
    fn closure_is_exact_on_gaussians() {
        let g = Grid::default();
        let mut p = solver_params(0.0, 1.0);
        p.v0 = 0.5;
        let s = init_gaussian(&g, &p, &GaussonState::initial(&p)).unwrap();
        let mut psi = s.amplitudes.clone();
        close_far_field(&mut psi, &FarFieldClosure::default(), 0.0).unwrap();
        for (a, b) in psi.iter().zip(&s.amplitudes) {
            assert!((a - b).norm() <= 1e-10 * b.norm().max(1e-12));
        }
    }

    #[test]
    fn free_width_at_one() {
        let g = Grid::default();
        let p = solver_params(0.0, 0.0);
        let solver = Solver::new(g, p, SolverOptions::default()).unwrap();
        let s0 = solver.init_gaussian(&GaussonState::initial(&p)).unwrap();
        let out = solver.evolve(&s0, 1.0, &[1.0]).unwrap();
        assert_eq!(out.len(), 2);
        assert!((out[1].t - 1.0).abs() < 1e-15);
        assert!((width(&out[1]) - 2f64.sqrt()).abs() < 1e-4 * 2f64.sqrt());
    }

    #[test]
    fn gausson_is_a_fixed_point_per_step() {
        // the per-step density change is the O(dt³) splitting error alone
        let change = |nu: f64, kappa: f64, dt: f64, closure: Option<FarFieldClosure>| {
            let p = solver_params(nu, kappa);
            let opts = SolverOptions { closure, ..Default::default() };
            let solver = Solver::new(Grid { dt, ..Grid::default() }, p, opts).unwrap();
            let mut s = solver.init_gaussian(&GaussonState::initial(&p)).unwrap();
            let before = s.density();
            solver.step(&mut s).unwrap();
            before.iter().zip(s.density()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        let on = Some(FarFieldClosure::default());
        for (nu, kappa) in [(0.0, 1.0), (1.5, 2.0)] {
            let coarse = change(nu, kappa, 1e-3, on);
            let fine = change(nu, kappa, 5e-4, on);
            assert!((coarse / fine - 8.0).abs() < 0.2, "{coarse:e} {fine:e}");
            assert!(fine < 1e-10, "{fine:e}");
            assert!(coarse < 1.5e-10, "{coarse:e}");
            // the closure does not contribute
            assert!((change(nu, kappa, 1e-3, None) - coarse).abs() < 1e-14);
        }
    }

    #[test]
    fn local_error_is_third_order() {
        // one step of dt vs two of dt/2, for dt and dt/2
        let p = solver_params(0.2, 0.5);
        let diff = |dt: f64| {
            let g = Grid { dt, ..Grid::default() };
            let big = Solver::new(g, p, SolverOptions::default()).unwrap();
            let small = Solver::new(Grid { dt: dt / 2.0, ..g }, p, SolverOptions::default()).unwrap();
            let s0 = big.init_gaussian(&GaussonState::initial(&p)).unwrap();
            let mut a = s0.clone();
            big.step(&mut a).unwrap();
            let mut b = s0;
            small.advance(&mut b, 2).unwrap();
            // the two runs may differ by a global phase, which is not physical
            let overlap: Complex64 = a.amplitudes.iter().zip(&b.amplitudes).map(|(u, v)| u.conj() * v).sum();
            let rot = Complex64::from_polar(1.0, -overlap.arg());
            a.amplitudes.iter().zip(&b.amplitudes).map(|(u, v)| (u - v * rot).norm_sqr()).sum::<f64>().sqrt()
        };
        let ratio = diff(0.02) / diff(0.01);
        assert!(ratio > 7.0 && ratio < 9.0, "{ratio}");
    }

    #[test]
    fn evolve_bookkeeping() {
        let p = solver_params(0.0, 1.0);
        let solver = Solver::new(Grid::default(), p, SolverOptions::default()).unwrap();
        let s0 = solver.init_gaussian(&GaussonState::initial(&p)).unwrap();
        let only = solver.evolve(&s0, 0.0, &[]).unwrap();
        assert_eq!(only, vec![s0.clone()]);
        let a = solver.evolve(&s0, 0.05, &[0.0, 0.01, 0.05]).unwrap();
        let b = solver.evolve(&s0, 0.05, &[0.0, 0.01, 0.05]).unwrap();
        assert_eq!(a.len(), 3);
        assert_eq!(a, b);
        assert!(solver.evolve(&s0, 0.05, &[0.0105]).is_err());
        assert!(solver.evolve(&s0, 0.05, &[0.02, 0.01]).is_err());
    }

    #[test]
    fn boundary_monitor_fires() {
        let p = solver_params(0.0, 0.0);
        let g = Grid { x_min: -6.0, x_max: 6.0, n_points: 256, dt: 1e-2 };
        let solver = Solver::new(g, p, SolverOptions::default()).unwrap();
        let mut s = solver.init_gaussian(&GaussonState::initial(&p)).unwrap();
        let err = solver.advance(&mut s, 300).unwrap_err();
        assert!(matches!(err, Error::Boundary { .. }), "{err:?}");
    }

    #[test]
    fn bare_scheme_loses_the_gausson() {
        // documents why the far-field closure exists
        let p = solver_params(0.0, 1.0);
        let opts = SolverOptions { closure: None, norm_tolerance: 1.0, boundary_limit: 1.0, ..Default::default() };
        let solver = Solver::new(Grid::default(), p, opts).unwrap();
        let s0 = solver.init_gaussian(&GaussonState::initial(&p)).unwrap();
        let out = solver.evolve(&s0, 3.0, &[3.0]);
        let bad = match out {
            Ok(v) => (width(&v[1]) - 1.0).abs() > 1e-2,
            Err(_) => true,
        };
        assert!(bad);
    }

    #[test]
    fn width_tracks_ode_briefly() {
        let p = solver_params(0.2, 0.5);
        let solver = Solver::new(Grid::default(), p, SolverOptions::default()).unwrap();
        let s0 = solver.init_gaussian(&GaussonState::initial(&p)).unwrap();
        let out = solver.evolve(&s0, 1.0, &[1.0]).unwrap();
        let ode = integrate_width(&p, &GaussonState::initial(&p), &[0.0, 1.0]).unwrap();
        assert!((width(&out[1]) / ode.deltas[1] - 1.0).abs() < 1e-5);
    }
}
