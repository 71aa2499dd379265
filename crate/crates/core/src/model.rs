//! Physical parameters, unit scales and the closed-form scalar quantities of
//! the Gausson reduction: the resolution rate that keeps the packet width
//! stationary, and the Bohmian time constant `τ_B = 1/κ`.
//!
//! All numerics downstream run in *solver units*: length in units of the
//! initial width δ₀ and time in units of `2mδ₀²/ħ`. In those units
//! `ħ = 1`, `m = 1/2`, `δ₀ = 1`, and the free spreading rate `ħ/(2mδ₀²)`
//! is exactly one. [`DimensionlessParams::to_solver_params`] produces a
//! [`PhysicalParams`] expressed in solver units, so every formula in this
//! crate accepts either representation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// CODATA 2018 electron mass, kg.
pub const ELECTRON_MASS: f64 = 9.109_383_701_5e-31;
/// CODATA 2018 reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Approximate electron size used as the initial packet width, m.
pub const ELECTRON_WIDTH: f64 = 2.8e-15;
/// Upper limit of the Bohmian time constant for an electron as printed in
/// the literature this model comes from, s.
pub const REPORTED_ELECTRON_TAU_B_MAX: f64 = 1e-26;

/// Parameters of the dissipative, continuously measured free particle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalParams {
    /// Particle mass.
    pub mass: f64,
    pub hbar: f64,
    /// Friction coefficient ν, 1/s.
    pub nu: f64,
    /// Measurement resolution κ, 1/s.
    pub kappa: f64,
    /// Initial packet width δ₀.
    pub delta0: f64,
    /// Initial packet center x̄(0).
    #[serde(default)]
    pub x0: f64,
    /// Initial center velocity x̄̇(0).
    #[serde(default)]
    pub v0: f64,
    /// Initial width rate δ̇(0).
    #[serde(default)]
    pub deltadot0: f64,
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        check_positive("mass", self.mass)?;
        check_positive("hbar", self.hbar)?;
        check_positive("delta0", self.delta0)?;
        check_non_negative("nu", self.nu)?;
        check_non_negative("kappa", self.kappa)?;
        check_finite("x0", self.x0)?;
        check_finite("v0", self.v0)?;
        check_finite("deltadot0", self.deltadot0)?;
        Ok(())
    }

    /// `ħ/(2mδ₀²)`, the relative spreading rate of a free packet of width δ₀.
    pub fn spreading_rate(&self) -> f64 {
        self.hbar / (2.0 * self.mass * self.delta0 * self.delta0)
    }

    /// Copy with κ replaced by the Gausson value for the current ν and δ₀.
    pub fn with_gausson_kappa(self) -> Self {
        Self {
            kappa: gausson_kappa(&self),
            ..self
        }
    }

    /// Electron with δ₀ = 2.8 fm, no friction, κ at the Gausson value.
    pub fn electron() -> Self {
        Self {
            mass: ELECTRON_MASS,
            hbar: HBAR,
            nu: 0.0,
            kappa: 0.0,
            delta0: ELECTRON_WIDTH,
            x0: 0.0,
            v0: 0.0,
            deltadot0: 0.0,
        }
        .with_gausson_kappa()
    }
}

/// Length and time units of the solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scales {
    /// Equal to δ₀.
    pub length_scale: f64,
    /// Equal to `2mδ₀²/ħ`.
    pub time_scale: f64,
    /// `length_scale / time_scale`.
    pub velocity_scale: f64,
}

impl Scales {
    pub fn of(p: &PhysicalParams) -> Self {
        let length_scale = p.delta0;
        let time_scale = 2.0 * p.mass * p.delta0 * p.delta0 / p.hbar;
        Self {
            length_scale,
            time_scale,
            velocity_scale: length_scale / time_scale,
        }
    }
}

/// Parameters in solver units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimensionlessParams {
    pub nu_t: f64,
    pub kappa_t: f64,
    #[serde(default)]
    pub x0_t: f64,
    #[serde(default)]
    pub v0_t: f64,
    #[serde(default)]
    pub deltadot0_t: f64,
}

impl DimensionlessParams {
    pub fn validate(&self) -> Result<()> {
        check_non_negative("nu_t", self.nu_t)?;
        check_non_negative("kappa_t", self.kappa_t)?;
        check_finite("x0_t", self.x0_t)?;
        check_finite("v0_t", self.v0_t)?;
        check_finite("deltadot0_t", self.deltadot0_t)?;
        Ok(())
    }

    /// The same system written as physical parameters with `ħ = 1`,
    /// `m = 1/2`, `δ₀ = 1`.
    pub fn to_solver_params(&self) -> PhysicalParams {
        PhysicalParams {
            mass: 0.5,
            hbar: 1.0,
            nu: self.nu_t,
            kappa: self.kappa_t,
            delta0: 1.0,
            x0: self.x0_t,
            v0: self.v0_t,
            deltadot0: self.deltadot0_t,
        }
    }

    /// Solver-unit parameters with κ̃ set from the Gausson condition.
    pub fn gausson(nu_t: f64) -> Self {
        Self {
            nu_t,
            kappa_t: 0.0,
            x0_t: 0.0,
            v0_t: 0.0,
            deltadot0_t: 0.0,
        }
        .with_gausson_kappa()
    }

    pub fn with_gausson_kappa(self) -> Self {
        Self {
            kappa_t: gausson_kappa(&self.to_solver_params()),
            ..self
        }
    }
}

pub fn nondimensionalize(p: &PhysicalParams) -> Result<(DimensionlessParams, Scales)> {
    p.validate()?;
    let s = Scales::of(p);
    let d = DimensionlessParams {
        nu_t: p.nu * s.time_scale,
        kappa_t: p.kappa * s.time_scale,
        x0_t: p.x0 / s.length_scale,
        v0_t: p.v0 / s.velocity_scale,
        deltadot0_t: p.deltadot0 / s.velocity_scale,
    };
    Ok((d, s))
}

/// Inverse of [`nondimensionalize`]. `mass` is needed because the scales fix
/// only the ratio `m/ħ`.
pub fn redimensionalize(d: &DimensionlessParams, s: &Scales, mass: f64) -> PhysicalParams {
    PhysicalParams {
        mass,
        hbar: 2.0 * mass * s.length_scale * s.length_scale / s.time_scale,
        nu: d.nu_t / s.time_scale,
        kappa: d.kappa_t / s.time_scale,
        delta0: s.length_scale,
        x0: d.x0_t * s.length_scale,
        v0: d.v0_t * s.velocity_scale,
        deltadot0: d.deltadot0_t * s.velocity_scale,
    }
}

/// Measurement resolution at which a packet of width δ₀ neither spreads nor
/// contracts: `κ = ν/2 + sqrt(ν²/4 + ħ²/(4m²δ₀⁴))`.
pub fn gausson_kappa(p: &PhysicalParams) -> f64 {
    let c = p.spreading_rate();
    let half_nu = 0.5 * p.nu;
    half_nu + half_nu.hypot(c)
}

/// `τ_B = 1/κ`.
pub fn bohmian_time_constant(kappa: f64) -> Result<f64> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::Domain(format!(
            "Bohmian time constant needs kappa > 0 (got {kappa}); without \
             measurement there is no quantum-classical transition"
        )));
    }
    Ok(1.0 / kappa)
}

/// First-order small-friction form `τ_B ≈ (2mδ₀²/ħ)(1 − νmδ₀²/ħ)`, valid for
/// `ν < ħ/(mδ₀²)`.
pub fn bohmian_time_constant_approx(p: &PhysicalParams) -> Result<f64> {
    let md2_over_hbar = p.mass * p.delta0 * p.delta0 / p.hbar;
    let limit = 1.0 / md2_over_hbar;
    if !(p.nu < limit) {
        return Err(Error::Domain(format!(
            "small-friction condition nu < hbar/(m delta0^2) = {limit:e} violated (nu = {:e})",
            p.nu
        )));
    }
    Ok(2.0 * md2_over_hbar * (1.0 - p.nu * md2_over_hbar))
}

/// How κ enters a run: taken as given, or derived from the Gausson condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KappaMode {
    #[default]
    Explicit,
    Gausson,
}

fn check_positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::validation(field, format!("must be finite and > 0, got {v}")))
    }
}

fn check_non_negative(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::validation(field, format!("must be finite and >= 0, got {v}")))
    }
}

fn check_finite(field: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(field, format!("must be finite, got {v}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn solver(nu_t: f64, kappa_t: f64) -> PhysicalParams {
        DimensionlessParams {
            nu_t,
            kappa_t,
            x0_t: 0.0,
            v0_t: 0.0,
            deltadot0_t: 0.0,
        }
        .to_solver_params()
    }

    #[test]
    fn electron_time_scale() {
        // 2 m δ₀² / ħ evaluated by hand with the rounded constants.
        let p = PhysicalParams {
            mass: 9.1094e-31,
            hbar: 1.0546e-34,
            ..PhysicalParams::electron()
        };
        let (_, s) = nondimensionalize(&p).unwrap();
        let by_hand = 2.0 * 9.1094e-31 * 2.8e-15 * 2.8e-15 / 1.0546e-34;
        assert_relative_eq!(s.time_scale, by_hand, max_relative = 1e-14);
        assert!((s.time_scale - 1.354e-25).abs() < 0.001e-25);
    }

    #[test]
    fn natural_units_time_scale_is_two() {
        let p = PhysicalParams {
            mass: 1.0,
            hbar: 1.0,
            nu: 0.0,
            kappa: 0.3,
            delta0: 1.0,
            x0: 0.0,
            v0: 0.0,
            deltadot0: 0.0,
        };
        let (d, s) = nondimensionalize(&p).unwrap();
        assert_eq!(s.time_scale, 2.0);
        assert_eq!(d.nu_t, 0.0);
        assert_relative_eq!(d.kappa_t, 0.6);
        assert_relative_eq!(s.time_scale * p.hbar, 2.0 * p.mass * s.length_scale.powi(2));
    }

    #[test]
    fn rejects_bad_params() {
        let mut p = PhysicalParams::electron();
        p.mass = -1.0;
        match nondimensionalize(&p) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "mass"),
            other => panic!("unexpected {other:?}"),
        }
        p = PhysicalParams::electron();
        p.delta0 = 0.0;
        assert!(nondimensionalize(&p).is_err());
        p = PhysicalParams::electron();
        p.nu = -0.1;
        assert!(p.validate().is_err());
    }

    #[test]
    fn gausson_kappa_examples() {
        assert_eq!(gausson_kappa(&solver(0.0, 0.0)), 1.0);
        assert_eq!(gausson_kappa(&solver(1.5, 0.0)), 2.0);
        let e = PhysicalParams::electron();
        assert_relative_eq!(e.kappa, 1.0 / Scales::of(&e).time_scale, max_relative = 1e-14);
        assert!((e.kappa - 7.39e24).abs() < 0.01e24);
    }

    #[test]
    fn time_constant() {
        assert_eq!(bohmian_time_constant(1.0).unwrap(), 1.0);
        assert_eq!(bohmian_time_constant(2.0).unwrap(), 0.5);
        assert!(matches!(bohmian_time_constant(0.0), Err(Error::Domain(_))));
        assert!(bohmian_time_constant(-1.0).is_err());
        let e = PhysicalParams::electron();
        let tau = bohmian_time_constant(e.kappa).unwrap();
        assert!((tau - 1.3544e-25).abs() < 0.0001e-25, "{tau:e}");
    }

    #[test]
    fn approx_time_constant() {
        assert_eq!(bohmian_time_constant_approx(&solver(0.0, 1.0)).unwrap(), 1.0);
        let e = PhysicalParams::electron();
        assert_relative_eq!(
            bohmian_time_constant_approx(&e).unwrap(),
            Scales::of(&e).time_scale,
            max_relative = 1e-15
        );

        // exact values: 1/(ν/2 + sqrt(ν²/4 + 1))
        let p = solver(0.1, 0.0);
        assert_relative_eq!(bohmian_time_constant_approx(&p).unwrap(), 0.95, max_relative = 1e-15);
        let exact = bohmian_time_constant(gausson_kappa(&p)).unwrap();
        assert!((exact - 0.951249).abs() < 1e-6);

        let p = solver(0.5, 0.0);
        assert_relative_eq!(bohmian_time_constant_approx(&p).unwrap(), 0.75, max_relative = 1e-15);
        let exact = bohmian_time_constant(gausson_kappa(&p)).unwrap();
        assert!((exact - 0.78078).abs() < 1e-5);

        let err = bohmian_time_constant_approx(&solver(2.0, 0.0)).unwrap_err();
        assert!(err.to_string().contains("small-friction"));
    }

    #[test]
    fn approx_gap_is_second_order() {
        // gap / ν̃² approaches 1/8 from the expansion 1 − ν/2 + ν²/8
        let mut c_max: f64 = 0.0;
        for i in 1..=100 {
            let nu = 0.001 * i as f64;
            let p = solver(nu, 0.0);
            let gap = (bohmian_time_constant_approx(&p).unwrap()
                - 1.0 / gausson_kappa(&p))
            .abs();
            c_max = c_max.max(gap / (nu * nu));
        }
        assert!(c_max < 0.13 && c_max > 0.12, "{c_max}");
    }

    proptest! {
        #[test]
        fn gausson_kappa_satisfies_condition(nu in 0.0f64..10.0, d0 in 0.1f64..10.0, m in 0.1f64..10.0) {
            let p = PhysicalParams { mass: m, hbar: 1.0, nu, kappa: 0.0, delta0: d0, x0: 0.0, v0: 0.0, deltadot0: 0.0 };
            let k = gausson_kappa(&p);
            let rhs = 1.0 / (4.0 * m * m * d0.powi(4));
            prop_assert!(((k * k - k * nu) - rhs).abs() <= 1e-12 * rhs.max(k * k));
        }

        #[test]
        fn gausson_kappa_monotone_in_nu(nu in 0.0f64..10.0, dnu in 1e-6f64..1.0) {
            prop_assert!(gausson_kappa(&solver(nu + dnu, 0.0)) > gausson_kappa(&solver(nu, 0.0)));
        }

        #[test]
        fn round_trip(m in 1e-31f64..1e-25, d0 in 1e-16f64..1e-8, nu in 0.0f64..1e20,
                      kappa in 0.0f64..1e20, x0 in -1e-10f64..1e-10, v0 in -1e3f64..1e3) {
            let p = PhysicalParams { mass: m, hbar: HBAR, nu, kappa, delta0: d0, x0, v0, deltadot0: v0 * 0.5 };
            let (d, s) = nondimensionalize(&p).unwrap();
            let q = redimensionalize(&d, &s, m);
            for (a, b) in [(p.hbar, q.hbar), (p.nu, q.nu), (p.kappa, q.kappa), (p.delta0, q.delta0),
                           (p.x0, q.x0), (p.v0, q.v0), (p.deltadot0, q.deltadot0)] {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(f64::MIN_POSITIVE));
            }
        }
    }

    #[test]
    fn gausson_identity_at_zero_friction() {
        for d0 in [1e-15, 1e-9, 1.0, 3.0] {
            let p = PhysicalParams {
                mass: 2.0,
                hbar: 0.7,
                nu: 0.0,
                kappa: 0.0,
                delta0: d0,
                x0: 0.0,
                v0: 0.0,
                deltadot0: 0.0,
            };
            assert_relative_eq!(
                gausson_kappa(&p) * 2.0 * p.mass * d0 * d0 / p.hbar,
                1.0,
                max_relative = 1e-15
            );
        }
    }
}
