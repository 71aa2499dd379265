//! Bohmian velocity field of a sampled wavefunction and particle ensembles
//! carried by it.

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::model::PhysicalParams;
use crate::pde::{Grid, Spectral, WavepacketState};

// Nodes with ρ below this fraction of the peak get an extrapolated velocity;
// there the current j and ρ are both dominated by round-off.
const VELOCITY_DENSITY: f64 = 1e-8;
// Particles outside the region where ρ exceeds this fraction of the peak are
// flagged and frozen.
const TRACK_DENSITY: f64 = 1e-12;
const EXTRAPOLATION_BAND: usize = 16;

/// Particle positions over a sequence of snapshot times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryEnsemble {
    pub x0: Vec<f64>,
    pub times: Vec<f64>,
    /// `positions[k][i]` is particle `i` at `times[k]`.
    pub positions: Vec<Vec<f64>>,
    /// Time at which a particle left the tracked region, if it did. Flagged
    /// particles keep their last position from then on.
    pub flagged: Vec<Option<f64>>,
}

impl TrajectoryEnsemble {
    pub fn particle(&self, i: usize) -> Vec<f64> {
        self.positions.iter().map(|row| row[i]).collect()
    }

    /// True when particles ordered at the start stay strictly ordered at
    /// every stored time.
    pub fn is_non_crossing(&self) -> bool {
        let mut order: Vec<usize> = (0..self.x0.len()).collect();
        order.sort_by(|&a, &b| self.x0[a].total_cmp(&self.x0[b]));
        self.positions.iter().all(|row| {
            order.windows(2).all(|w| {
                let (a, b) = (w[0], w[1]);
                self.x0[a] == self.x0[b] || row[a] < row[b]
            })
        })
    }
}

/// How initial positions are laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Gaussian quantiles at probabilities `(i − ½)/n`.
    Quantile,
    /// Offsets `±δ₀/2, ±δ₀, ±3δ₀/2, …`, plus the center when `n` is odd.
    Symmetric,
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quantile" => Ok(Scheme::Quantile),
            "symmetric" => Ok(Scheme::Symmetric),
            other => Err(Error::Config(format!(
                "unknown sampling scheme `{other}` (expected quantile or symmetric)"
            ))),
        }
    }
}

/// Deterministic initial offsets from the packet center, in ascending order.
pub fn sample_initial_positions(delta0: f64, n: usize, scheme: Scheme) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::validation("ensemble.n", "must be >= 1"));
    }
    if !(delta0 > 0.0) {
        return Err(Error::validation("delta0", "must be > 0"));
    }
    Ok(match scheme {
        Scheme::Quantile => {
            let normal = Normal::new(0.0, delta0).expect("positive width");
            (1..=n)
                .map(|i| {
                    let q = normal.inverse_cdf((i as f64 - 0.5) / n as f64);
                    // the median is exactly the center
                    if 2 * i == n + 1 {
                        0.0
                    } else {
                        q
                    }
                })
                .collect()
        }
        Scheme::Symmetric => {
            let half = n / 2;
            let mut out: Vec<f64> = (1..=half).rev().map(|k| -(k as f64) * delta0 / 2.0).collect();
            if n % 2 == 1 {
                out.push(0.0);
            }
            out.extend((1..=half).map(|k| k as f64 * delta0 / 2.0));
            out
        }
    })
}

fn line_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - slope * mx, slope)
}

/// Largest run around the density peak with `ρ ≥ frac · ρ_max`.
fn dense_run(rho: &[f64], frac: f64) -> (usize, usize) {
    let (i0, rmax) = rho
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
    let cut = frac * rmax;
    let (mut l, mut r) = (i0, i0);
    while l > 0 && rho[l - 1] >= cut {
        l -= 1;
    }
    while r + 1 < rho.len() && rho[r + 1] >= cut {
        r += 1;
    }
    (l, r)
}

/// `v = j/ρ` with `j = (ħ/m) Im(ψ* ∂ψ/∂x)`, the derivative taken spectrally.
pub fn velocity_field_with(spectral: &Spectral, grid: &Grid, state: &WavepacketState, p: &PhysicalParams) -> Vec<f64> {
    let psi = &state.amplitudes;
    let dpsi = spectral.derivative(psi, 1);
    let rho = state.density();
    let c = p.hbar / p.mass;
    let mut v: Vec<f64> = psi
        .iter()
        .zip(&dpsi)
        .zip(&rho)
        .map(|((z, dz), r)| if *r > 0.0 { c * (z.conj() * dz).im / r } else { 0.0 })
        .collect();

    let (l, r) = dense_run(&rho, VELOCITY_DENSITY);
    let x = grid.positions();
    let n = v.len();
    let band = EXTRAPOLATION_BAND.min(r + 1 - l);
    if band >= 2 {
        let (a, b) = line_fit(&x[r + 1 - band..=r], &v[r + 1 - band..=r]);
        for i in r + 1..n {
            v[i] = a + b * x[i];
        }
        let (a, b) = line_fit(&x[l..l + band], &v[l..l + band]);
        for i in 0..l {
            v[i] = a + b * x[i];
        }
    }
    v
}

/// Bohmian velocity field of one snapshot.
pub fn velocity_field_numeric(state: &WavepacketState, grid: &Grid, p: &PhysicalParams) -> Vec<f64> {
    velocity_field_with(&Spectral::new(grid), grid, state, p)
}

/// Four-point Lagrange interpolation of nodal values at `x`.
fn cubic_at(field: &[f64], x_min: f64, dx: f64, x: f64) -> f64 {
    let n = field.len();
    let s = (x - x_min) / dx;
    let i = (s.floor() as isize).clamp(1, n as isize - 3) as usize;
    let u = s - i as f64;
    let (f0, f1, f2, f3) = (field[i - 1], field[i], field[i + 1], field[i + 2]);
    -u * (u - 1.0) * (u - 2.0) / 6.0 * f0 + (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0 * f1
        - (u + 1.0) * u * (u - 2.0) / 2.0 * f2
        + (u + 1.0) * u * (u - 1.0) / 6.0 * f3
}

/// Integrates `ẋ = v(x, t)` for every particle through the snapshot
/// sequence with one RK4 step per snapshot interval. The field is linear in
/// time between snapshots and cubic in space.
///
/// `x0` holds absolute initial positions at `snapshots[0].t`.
pub fn advance_ensemble(
    x0: &[f64],
    snapshots: &[WavepacketState],
    grid: &Grid,
    p: &PhysicalParams,
) -> Result<TrajectoryEnsemble> {
    if snapshots.is_empty() {
        return Err(Error::validation("snapshots", "need at least one"));
    }
    if snapshots.windows(2).any(|w| !(w[1].t > w[0].t)) {
        return Err(Error::validation("snapshots", "times must increase"));
    }
    let spectral = Spectral::new(grid);
    let fields: Vec<Vec<f64>> = snapshots
        .par_iter()
        .map(|s| velocity_field_with(&spectral, grid, s, p))
        .collect();
    let regions: Vec<(f64, f64)> = snapshots
        .iter()
        .map(|s| {
            let (l, r) = dense_run(&s.density(), TRACK_DENSITY);
            let dx = grid.dx();
            let lo = (grid.x_min + l as f64 * dx).max(grid.x_min + 2.0 * dx);
            let hi = (grid.x_min + r as f64 * dx).min(grid.x_max - 3.0 * dx);
            (lo, hi)
        })
        .collect();
    let (x_min, dx) = (grid.x_min, grid.dx());
    let times: Vec<f64> = snapshots.iter().map(|s| s.t).collect();

    let tracks: Vec<(Vec<f64>, Option<f64>)> = x0
        .par_iter()
        .map(|&start| {
            let mut path = Vec::with_capacity(times.len());
            let mut x = start;
            let mut flag = None;
            path.push(x);
            if x < regions[0].0 || x > regions[0].1 {
                flag = Some(times[0]);
            }
            for k in 0..times.len() - 1 {
                if flag.is_none() {
                    let h = times[k + 1] - times[k];
                    let (f0, f1) = (&fields[k], &fields[k + 1]);
                    let v = |x: f64, w: f64| {
                        (1.0 - w) * cubic_at(f0, x_min, dx, x) + w * cubic_at(f1, x_min, dx, x)
                    };
                    let k1 = v(x, 0.0);
                    let k2 = v(x + 0.5 * h * k1, 0.5);
                    let k3 = v(x + 0.5 * h * k2, 0.5);
                    let k4 = v(x + h * k3, 1.0);
                    let next = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                    let (lo, hi) = regions[k + 1];
                    if next.is_finite() && next >= lo && next <= hi {
                        x = next;
                    } else {
                        flag = Some(times[k + 1]);
                    }
                }
                path.push(x);
            }
            (path, flag)
        })
        .collect();

    let positions = (0..times.len())
        .map(|k| tracks.iter().map(|(path, _)| path[k]).collect())
        .collect();
    Ok(TrajectoryEnsemble {
        x0: x0.to_vec(),
        times,
        positions,
        flagged: tracks.into_iter().map(|(_, f)| f).collect(),
    })
}
