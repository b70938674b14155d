use std::ffi::{CStr, CString};
use std::ptr;

use cmpp_ffi::*;

fn last_error() -> String {
    let p = cmpp_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn grid(controller: CmppController, mode: CmppMode) -> *mut CmppSimulation {
    let mut sim = ptr::null_mut();
    let status = unsafe { cmpp_simulation_from_grid(2, 2, 0.6, controller, mode, 7, &mut sim) };
    assert_eq!(status, CmppStatus::Ok);
    assert!(!sim.is_null());
    sim
}

#[test]
fn token_run_conserves_vehicles() {
    let sim = grid(CmppController::CmppGreedy, CmppMode::Token);
    unsafe {
        assert_eq!(cmpp_simulation_step(sim, 300), CmppStatus::Ok);
        let mut totals = CmppTotals::default();
        assert_eq!(cmpp_simulation_totals(sim, &mut totals), CmppStatus::Ok);
        assert_eq!(totals.time, 300);
        assert!(totals.entered > 0.0);
        assert_eq!(totals.entered, totals.in_network + totals.exited);
        assert_eq!(totals.completed as f64, totals.exited);
        assert!(totals.mean_travel_steps > 0.0);
        cmpp_simulation_free(sim);
    }
}

#[test]
fn buffers_report_required_length() {
    let sim = grid(CmppController::MaxPressure, CmppMode::Fluid);
    unsafe {
        let (mut intersections, mut movements) = (0usize, 0usize);
        assert_eq!(cmpp_simulation_dimensions(sim, &mut intersections, &mut movements), CmppStatus::Ok);
        assert_eq!(intersections, 4);
        assert_eq!(cmpp_simulation_step(sim, 20), CmppStatus::Ok);

        let mut len = 1usize;
        let mut small = [0.0f64; 1];
        assert_eq!(cmpp_simulation_queues(sim, small.as_mut_ptr(), &mut len), CmppStatus::BufferTooSmall);
        assert_eq!(len, movements);
        assert!(last_error().contains("need"));

        let mut queues = vec![-1.0f64; len];
        assert_eq!(cmpp_simulation_queues(sim, queues.as_mut_ptr(), &mut len), CmppStatus::Ok);
        assert!(queues.iter().all(|&q| q >= 0.0));
        assert!(cmpp_last_error().is_null());

        let mut phases = vec![u32::MAX; intersections];
        let mut len = phases.len();
        assert_eq!(cmpp_simulation_phases(sim, phases.as_mut_ptr(), &mut len), CmppStatus::Ok);
        assert!(phases.iter().all(|&p| p < 8));
        cmpp_simulation_free(sim);
    }
}

#[test]
fn scenario_selects_controller_by_label() {
    let toml = CString::new(
        r#"
        name = "abi"
        horizon = 10
        mode = "fluid"
        [network.grid]
        rows = 1
        cols = 2
        [demand]
        load = 0.5
        [[controllers]]
        kind = "mp"
        [[controllers]]
        kind = "cmpp"
        "#,
    )
    .unwrap();
    let label = CString::new("cmpp-greedy").unwrap();
    let missing = CString::new("nope").unwrap();
    unsafe {
        let mut sim = ptr::null_mut();
        let status = cmpp_simulation_from_scenario(toml.as_ptr(), ptr::null(), label.as_ptr(), 1, &mut sim);
        assert_eq!(status, CmppStatus::Ok, "{}", last_error());
        assert_eq!(cmpp_simulation_step(sim, 5), CmppStatus::Ok);
        cmpp_simulation_free(sim);

        let mut other = ptr::null_mut();
        let status = cmpp_simulation_from_scenario(toml.as_ptr(), ptr::null(), missing.as_ptr(), 1, &mut other);
        assert_eq!(status, CmppStatus::InvalidArgument);
        assert!(other.is_null());
    }
}

#[test]
fn errors_are_reported_not_raised() {
    let bad = CString::new("name = \"x\"\nhorizon = 0\n").unwrap();
    unsafe {
        let mut sim = ptr::null_mut();
        assert_eq!(
            cmpp_simulation_from_scenario(bad.as_ptr(), ptr::null(), ptr::null(), 1, &mut sim),
            CmppStatus::Validation
        );
        assert!(!last_error().is_empty());
        assert_eq!(cmpp_simulation_step(ptr::null_mut(), 1), CmppStatus::NullPointer);
        assert_eq!(
            cmpp_simulation_from_grid(0, 2, 0.5, CmppController::MaxPressure, CmppMode::Fluid, 1, &mut sim),
            CmppStatus::Validation
        );
        cmpp_simulation_free(ptr::null_mut());
    }
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/cmpp.h")).unwrap();
    for name in [
        "cmpp_version",
        "cmpp_last_error",
        "cmpp_simulation_from_grid",
        "cmpp_simulation_from_scenario",
        "cmpp_simulation_step",
        "cmpp_simulation_free",
        "CMPP_STATUS_BUFFER_TOO_SMALL",
        "typedef struct CmppSimulation CmppSimulation",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
    let version = unsafe { CStr::from_ptr(cmpp_version()) }.to_str().unwrap();
    assert_eq!(version, env!("CARGO_PKG_VERSION"));
}
