//! C ABI over the bohmtau solver.
//!
//! Every function returns a [`BtStatus`]. On failure the message is kept in a
//! thread-local buffer readable with [`bt_last_error_message`]. Solvers are
//! opaque handles created by [`bt_solver_new`] and released by
//! [`bt_solver_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use bohmtau::analytic::{integrate_width, GaussonState};
use bohmtau::diagnostics::measured_width;
use bohmtau::model::{bohmian_time_constant, gausson_kappa, PhysicalParams};
use bohmtau::pde::{Grid, Solver, SolverOptions, WavepacketState};
use bohmtau::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    Domain = 4,
    Panic = 5,
}

/// Physical parameters in any consistent unit system.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct BtParams {
    pub mass: f64,
    pub hbar: f64,
    pub nu: f64,
    pub kappa: f64,
    pub delta0: f64,
    pub x0: f64,
    pub v0: f64,
    pub deltadot0: f64,
}

/// Periodic grid `[x_min, x_max)` with `n_points` nodes and time step `dt`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct BtGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
    pub dt: f64,
}

/// Opaque solver handle holding the current wave packet.
pub struct BtSolver {
    solver: Solver,
    state: WavepacketState,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> BtStatus {
    match err {
        Error::Domain(_) => BtStatus::Domain,
        Error::Validation { .. } | Error::Config(_) | Error::Io(_) | Error::Range { .. } => BtStatus::InvalidArgument,
        Error::Collapse { .. }
        | Error::Instability { .. }
        | Error::Boundary { .. }
        | Error::Unwrap(_)
        | Error::Alignment(_)
        | Error::Tolerance(_) => BtStatus::Numerical,
    }
}

/// Runs `f`, recording any error or panic in the thread-local slot.
fn guard(f: impl FnOnce() -> Result<(), BtStatus>) -> BtStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BtStatus::Ok,
        Ok(Err(s)) => s,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            BtStatus::Panic
        }
    }
}

fn fail(err: Error) -> BtStatus {
    let s = status_of(&err);
    set_error(err.to_string());
    s
}

fn null(name: &str) -> BtStatus {
    set_error(format!("`{name}` is null"));
    BtStatus::NullPointer
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, BtStatus> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn deref_mut<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, BtStatus> {
    p.as_mut().ok_or_else(|| null(name))
}

impl From<BtParams> for PhysicalParams {
    fn from(p: BtParams) -> Self {
        PhysicalParams {
            mass: p.mass,
            hbar: p.hbar,
            nu: p.nu,
            kappa: p.kappa,
            delta0: p.delta0,
            x0: p.x0,
            v0: p.v0,
            deltadot0: p.deltadot0,
        }
    }
}

impl From<BtGrid> for Grid {
    fn from(g: BtGrid) -> Self {
        Grid { x_min: g.x_min, x_max: g.x_max, n_points: g.n_points, dt: g.dt }
    }
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn bt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Measurement resolution that keeps a packet of width `delta0` stationary.
///
/// # Safety
/// `params` and `out` must be valid pointers or null.
#[no_mangle]
pub unsafe extern "C" fn bt_gausson_kappa(params: *const BtParams, out: *mut f64) -> BtStatus {
    guard(|| {
        let p: PhysicalParams = (*deref(params, "params")?).into();
        let out = deref_mut(out, "out")?;
        p.validate().map_err(fail)?;
        *out = gausson_kappa(&p);
        Ok(())
    })
}

/// Time constant of the quantum-to-classical transition, `1/kappa`.
///
/// # Safety
/// `out` must be a valid pointer or null.
#[no_mangle]
pub unsafe extern "C" fn bt_bohmian_time_constant(kappa: f64, out: *mut f64) -> BtStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        *out = bohmian_time_constant(kappa).map_err(fail)?;
        Ok(())
    })
}

/// Integrates the width equation and writes δ at each of the `n` increasing
/// `times` (the first is the initial time) into `out`.
///
/// # Safety
/// `times` and `out` must each point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn bt_integrate_width(
    params: *const BtParams,
    times: *const f64,
    n: usize,
    out: *mut f64,
) -> BtStatus {
    guard(|| {
        let p: PhysicalParams = (*deref(params, "params")?).into();
        if n == 0 {
            return Ok(());
        }
        if times.is_null() {
            return Err(null("times"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let times = std::slice::from_raw_parts(times, n);
        let series = integrate_width(&p, &GaussonState::initial(&p), times).map_err(fail)?;
        std::slice::from_raw_parts_mut(out, n).copy_from_slice(&series.deltas);
        Ok(())
    })
}

/// Creates a solver with default options and the initial Gaussian packet.
/// Parameters are taken in solver units (ħ = 1, m = 1/2, δ₀ = 1 for the
/// standard scaling).
///
/// # Safety
/// `params`, `grid` and `out` must be valid pointers or null. On success
/// `*out` owns a handle that must be released with `bt_solver_free`.
#[no_mangle]
pub unsafe extern "C" fn bt_solver_new(
    params: *const BtParams,
    grid: *const BtGrid,
    out: *mut *mut BtSolver,
) -> BtStatus {
    guard(|| {
        let p: PhysicalParams = (*deref(params, "params")?).into();
        let g: Grid = (*deref(grid, "grid")?).into();
        let out = deref_mut(out, "out")?;
        *out = ptr::null_mut();
        let solver = Solver::new(g, p, SolverOptions::default()).map_err(fail)?;
        let state = solver.init_gaussian(&GaussonState::initial(&p)).map_err(fail)?;
        *out = Box::into_raw(Box::new(BtSolver { solver, state }));
        Ok(())
    })
}

/// Releases a solver. Null is accepted.
///
/// # Safety
/// `solver` must come from `bt_solver_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bt_solver_free(solver: *mut BtSolver) {
    if !solver.is_null() {
        drop(Box::from_raw(solver));
    }
}

/// Advances the packet by `steps` time steps. On failure the packet keeps
/// its state from before the call.
///
/// # Safety
/// `solver` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn bt_solver_step(solver: *mut BtSolver, steps: usize) -> BtStatus {
    guard(|| {
        let s = deref_mut(solver, "solver")?;
        let mut next = s.state.clone();
        s.solver.advance(&mut next, steps).map_err(fail)?;
        s.state = next;
        Ok(())
    })
}

/// Current time of the packet.
///
/// # Safety
/// `solver` and `out` must be valid pointers or null.
#[no_mangle]
pub unsafe extern "C" fn bt_solver_time(solver: *const BtSolver, out: *mut f64) -> BtStatus {
    guard(|| {
        *deref_mut(out, "out")? = deref(solver, "solver")?.state.t;
        Ok(())
    })
}

/// Width `sqrt(<x²> − <x>²)` of the current density.
///
/// # Safety
/// `solver` and `out` must be valid pointers or null.
#[no_mangle]
pub unsafe extern "C" fn bt_solver_width(solver: *const BtSolver, out: *mut f64) -> BtStatus {
    guard(|| {
        let s = deref(solver, "solver")?;
        *deref_mut(out, "out")? = measured_width(&s.state, s.solver.grid());
        Ok(())
    })
}

/// Number of grid points.
///
/// # Safety
/// `solver` and `out` must be valid pointers or null.
#[no_mangle]
pub unsafe extern "C" fn bt_solver_len(solver: *const BtSolver, out: *mut usize) -> BtStatus {
    guard(|| {
        *deref_mut(out, "out")? = deref(solver, "solver")?.solver.grid().n_points;
        Ok(())
    })
}

/// Copies the density |ψ|² into `out`, which holds `len` doubles and must
/// match the grid size.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn bt_solver_density(solver: *const BtSolver, out: *mut f64, len: usize) -> BtStatus {
    guard(|| {
        let s = deref(solver, "solver")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let rho = s.state.density();
        if len != rho.len() {
            set_error(format!("buffer holds {len} values, grid has {}", rho.len()));
            return Err(BtStatus::InvalidArgument);
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(&rho);
        Ok(())
    })
}
