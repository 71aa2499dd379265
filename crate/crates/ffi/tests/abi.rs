use std::ffi::CStr;
use std::process::Command;
use std::ptr;

use bohmtau_ffi::*;

fn gausson() -> BtParams {
    BtParams { mass: 0.5, hbar: 1.0, nu: 0.0, kappa: 1.0, delta0: 1.0, x0: 0.0, v0: 0.0, deltadot0: 0.0 }
}

fn grid() -> BtGrid {
    BtGrid { x_min: -12.0, x_max: 12.0, n_points: 512, dt: 1e-3 }
}

fn last_error() -> String {
    let p = bt_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn scalar_helpers() {
    let mut k = 0.0;
    let p = BtParams { kappa: 0.0, ..gausson() };
    assert_eq!(unsafe { bt_gausson_kappa(&p, &mut k) }, BtStatus::Ok);
    assert!((k - 1.0).abs() < 1e-15);
    assert!(bt_last_error_message().is_null());

    let mut tau = 0.0;
    assert_eq!(unsafe { bt_bohmian_time_constant(4.0, &mut tau) }, BtStatus::Ok);
    assert_eq!(tau, 0.25);
    assert_eq!(unsafe { bt_bohmian_time_constant(0.0, &mut tau) }, BtStatus::Domain);
    assert!(last_error().contains("kappa"));

    let bad = BtParams { mass: -1.0, ..gausson() };
    assert_eq!(unsafe { bt_gausson_kappa(&bad, &mut k) }, BtStatus::InvalidArgument);
    assert_eq!(unsafe { bt_gausson_kappa(ptr::null(), &mut k) }, BtStatus::NullPointer);
    assert!(last_error().contains("params"));
}

#[test]
fn width_integration_matches_free_spreading() {
    let free = BtParams { kappa: 0.0, ..gausson() };
    let times = [0.0, 0.5, 1.0];
    let mut out = [0.0; 3];
    assert_eq!(unsafe { bt_integrate_width(&free, times.as_ptr(), 3, out.as_mut_ptr()) }, BtStatus::Ok);
    for (t, d) in times.iter().zip(out) {
        assert!((d - (1.0 + t * t).sqrt()).abs() < 1e-10, "{t}: {d}");
    }
    assert_eq!(unsafe { bt_integrate_width(&free, ptr::null(), 3, out.as_mut_ptr()) }, BtStatus::NullPointer);
}

#[test]
fn solver_lifecycle() {
    let mut s: *mut BtSolver = ptr::null_mut();
    unsafe {
        assert_eq!(bt_solver_new(&gausson(), &grid(), &mut s), BtStatus::Ok);
        assert_eq!(bt_solver_step(s, 500), BtStatus::Ok);
        let (mut t, mut w, mut n) = (0.0, 0.0, 0usize);
        assert_eq!(bt_solver_time(s, &mut t), BtStatus::Ok);
        assert_eq!(bt_solver_width(s, &mut w), BtStatus::Ok);
        assert_eq!(bt_solver_len(s, &mut n), BtStatus::Ok);
        assert!((t - 0.5).abs() < 1e-12);
        assert!((w - 1.0).abs() < 1e-5, "{w}");
        let mut rho = vec![0.0; n];
        assert_eq!(bt_solver_density(s, rho.as_mut_ptr(), n), BtStatus::Ok);
        let mass: f64 = rho.iter().sum::<f64>() * 24.0 / n as f64;
        assert!((mass - 1.0).abs() < 1e-10);
        assert_eq!(bt_solver_density(s, rho.as_mut_ptr(), n - 1), BtStatus::InvalidArgument);
        bt_solver_free(s);
        bt_solver_free(ptr::null_mut());
    }
}

#[test]
fn solver_failures_leave_state_untouched() {
    let mut s: *mut BtSolver = ptr::null_mut();
    unsafe {
        // a packet that does not fit the domain
        let tiny = BtGrid { x_min: -2.0, x_max: 2.0, ..grid() };
        assert_eq!(bt_solver_new(&gausson(), &tiny, &mut s), BtStatus::InvalidArgument);
        assert!(s.is_null());

        // free spreading runs into the boundary
        let free = BtParams { kappa: 0.0, ..gausson() };
        assert_eq!(bt_solver_new(&free, &grid(), &mut s), BtStatus::Ok);
        assert_eq!(bt_solver_step(s, 20_000), BtStatus::Numerical);
        assert!(last_error().contains("boundary"));
        let mut t = 1.0;
        assert_eq!(bt_solver_time(s, &mut t), BtStatus::Ok);
        assert_eq!(t, 0.0);
        bt_solver_free(s);
        assert_eq!(bt_solver_step(ptr::null_mut(), 1), BtStatus::NullPointer);
    }
}

#[test]
fn header_declares_the_api_and_compiles() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/bohmtau.h")).unwrap();
    for name in ["bt_solver_new", "bt_solver_free", "bt_last_error_message", "BT_STATUS_PANIC", "BtSolver"] {
        assert!(header.contains(name), "header lacks {name}");
    }
    // syntax-check with a C compiler when one is installed
    if let Ok(out) = Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include/bohmtau.h"))
        .output()
    {
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
}
