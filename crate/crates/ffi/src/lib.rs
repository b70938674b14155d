//! C ABI over `cmpp-core`.
//!
//! A [`CmppSimulation`] is an opaque handle owning a network, its demand,
//! one controller and the queue state. Every function returns a
//! [`CmppStatus`]; on failure [`cmpp_last_error`] describes what went wrong
//! on the calling thread. Handles are freed with [`cmpp_simulation_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use cmpp_core::consensus::Algorithm;
use cmpp_core::controllers::{make_controller, Controller, ControllerConfig, ControllerKind, Observation};
use cmpp_core::dynamics::{step_fluid, ControlAction, Demand, QueueState, TokenSimulator};
use cmpp_core::network::Network;
use cmpp_core::scenario::{grid_scenario, Mode, ResolvedScenario, Scenario};

#[repr(C)]
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum CmppStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// The scenario or controller configuration was rejected.
    Validation = 3,
    /// The simulation failed while running.
    Runtime = 4,
    /// A buffer was too small; the required length was written back.
    BufferTooSmall = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum CmppController {
    FixedTime = 0,
    MaxPressure = 1,
    CapacityAwareBackpressure = 2,
    CmppGreedy = 3,
    CmppAdmm = 4,
}

#[repr(C)]
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum CmppMode {
    Fluid = 0,
    Token = 1,
}

/// Running totals after the last step.
#[repr(C)]
#[derive(Copy, Clone, Debug, Default, PartialEq)]
pub struct CmppTotals {
    pub time: u64,
    pub entered: f64,
    pub exited: f64,
    pub in_network: f64,
    pub total_queue: f64,
    /// Token mode only; zero in fluid mode.
    pub completed: u64,
    pub mean_travel_steps: f64,
}

enum Engine {
    Fluid(QueueState),
    Token(Box<TokenSimulator>),
}

pub struct CmppSimulation {
    net: Arc<Network>,
    demand: Demand,
    controller: Box<dyn Controller>,
    engine: Engine,
    last_phases: Vec<usize>,
    completed: u64,
    travel_steps: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn guarded(f: impl FnOnce() -> Result<(), (CmppStatus, String)>) -> CmppStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CmppStatus::Ok
        }
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CmppStatus::Panic
        }
    }
}

fn null(what: &str) -> (CmppStatus, String) {
    (CmppStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `s` must be null or a valid NUL-terminated string.
unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, (CmppStatus, String)> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| (CmppStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

impl CmppSimulation {
    fn new(resolved: &ResolvedScenario, config: &ControllerConfig, seed: u64) -> Result<Self, (CmppStatus, String)> {
        let net = resolved.net.clone();
        let controller = make_controller(config, &net).map_err(|e| (CmppStatus::Validation, e.to_string()))?;
        let history = config.penalty.history.max(config.history_needed());
        let engine = match resolved.scenario.mode {
            Mode::Fluid => Engine::Fluid(QueueState::empty(&net, history)),
            Mode::Token => Engine::Token(Box::new(
                TokenSimulator::new(net.clone(), resolved.demand.process, Some(seed), history)
                    .map_err(|e| (CmppStatus::Validation, e.to_string()))?,
            )),
        };
        Ok(CmppSimulation {
            last_phases: vec![0; net.intersection_count()],
            demand: resolved.demand.clone(),
            net,
            controller,
            engine,
            completed: 0,
            travel_steps: 0,
        })
    }

    fn state(&self) -> QueueState {
        match &self.engine {
            Engine::Fluid(s) => s.clone(),
            Engine::Token(sim) => sim.observe(),
        }
    }

    fn step(&mut self) -> Result<(), (CmppStatus, String)> {
        let runtime = |e: &dyn std::fmt::Display| (CmppStatus::Runtime, e.to_string());
        let state = self.state();
        let rates = self.demand.rates_at(state.t);
        let obs = Observation { net: &self.net, state: &state, arrivals: &rates };
        let action: ControlAction = self.controller.decide(&obs).map_err(|e| runtime(&e))?.action;
        match &mut self.engine {
            Engine::Fluid(s) => *s = step_fluid(&self.net, s, &action, &rates).map_err(|e| runtime(&e))?,
            Engine::Token(sim) => {
                for v in sim.step(&action, &rates).map_err(|e| runtime(&e))? {
                    self.completed += 1;
                    self.travel_steps += v.travel_steps() as u64;
                }
            }
        }
        self.last_phases = action.phases;
        Ok(())
    }
}

fn controller_config(kind: CmppController) -> ControllerConfig {
    match kind {
        CmppController::FixedTime => ControllerConfig::new(ControllerKind::FixedTime),
        CmppController::MaxPressure => ControllerConfig::new(ControllerKind::Mp),
        CmppController::CapacityAwareBackpressure => ControllerConfig::new(ControllerKind::Cabp),
        CmppController::CmppGreedy => ControllerConfig::cmpp(Algorithm::Greedy),
        CmppController::CmppAdmm => ControllerConfig::cmpp(Algorithm::Admm),
    }
}

/// NUL-terminated crate version. Static; do not free.
#[no_mangle]
pub extern "C" fn cmpp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or null after a
/// successful one. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn cmpp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Grid with the default geometry and Poisson demand at `load`
/// times the busiest intersection's service capacity.
///
/// # Safety
/// `out` must be a valid pointer to write the handle to.
#[no_mangle]
pub unsafe extern "C" fn cmpp_simulation_from_grid(
    rows: u32,
    cols: u32,
    load: f64,
    controller: CmppController,
    mode: CmppMode,
    seed: u64,
    out: *mut *mut CmppSimulation,
) -> CmppStatus {
    guarded(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let mut scenario = grid_scenario(rows as usize, cols as usize, load, 1, vec![seed]);
        scenario.mode = match mode {
            CmppMode::Fluid => Mode::Fluid,
            CmppMode::Token => Mode::Token,
        };
        let config = controller_config(controller);
        scenario.controllers = vec![config.clone()];
        let resolved = scenario.resolve(Path::new(".")).map_err(|e| (CmppStatus::Validation, e.to_string()))?;
        let sim = CmppSimulation::new(&resolved, &config, seed)?;
        *out = Box::into_raw(Box::new(sim));
        Ok(())
    })
}

/// Builds a simulation from scenario TOML. `base_dir` anchors relative file
/// references and may be null (current directory). `controller_label`
/// selects one of the scenario's controllers by label; null takes the first.
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cmpp_simulation_from_scenario(
    scenario_toml: *const c_char,
    base_dir: *const c_char,
    controller_label: *const c_char,
    seed: u64,
    out: *mut *mut CmppSimulation,
) -> CmppStatus {
    guarded(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = read_str(scenario_toml, "scenario_toml")?;
        let base = if base_dir.is_null() { "." } else { read_str(base_dir, "base_dir")? };
        let scenario = Scenario::from_toml(text).map_err(|e| (CmppStatus::Validation, e.to_string()))?;
        let resolved = scenario.resolve(Path::new(base)).map_err(|e| (CmppStatus::Validation, e.to_string()))?;
        let controllers = &resolved.scenario.controllers;
        let config = if controller_label.is_null() {
            controllers.first()
        } else {
            let label = read_str(controller_label, "controller_label")?;
            controllers.iter().find(|c| c.label() == label)
        }
        .ok_or_else(|| (CmppStatus::InvalidArgument, "no matching controller in the scenario".to_string()))?
        .clone();
        let sim = CmppSimulation::new(&resolved, &config, seed)?;
        *out = Box::into_raw(Box::new(sim));
        Ok(())
    })
}

/// # Safety
/// `sim` must come from a constructor above and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cmpp_simulation_free(sim: *mut CmppSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Advances `steps` decision steps.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cmpp_simulation_step(sim: *mut CmppSimulation, steps: u64) -> CmppStatus {
    guarded(|| {
        let sim = sim.as_mut().ok_or_else(|| null("sim"))?;
        for _ in 0..steps {
            sim.step()?;
        }
        Ok(())
    })
}

/// # Safety
/// `sim` must be a live handle and `intersections`/`movements` valid or null.
#[no_mangle]
pub unsafe extern "C" fn cmpp_simulation_dimensions(
    sim: *const CmppSimulation,
    intersections: *mut usize,
    movements: *mut usize,
) -> CmppStatus {
    guarded(|| {
        let sim = sim.as_ref().ok_or_else(|| null("sim"))?;
        if let Some(i) = intersections.as_mut() {
            *i = sim.net.intersection_count();
        }
        if let Some(m) = movements.as_mut() {
            *m = sim.net.movements().len();
        }
        Ok(())
    })
}

/// # Safety
/// `sim` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn cmpp_simulation_totals(sim: *const CmppSimulation, out: *mut CmppTotals) -> CmppStatus {
    guarded(|| {
        let sim = sim.as_ref().ok_or_else(|| null("sim"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let state = sim.state();
        *out = CmppTotals {
            time: state.t as u64,
            entered: state.entered,
            exited: state.exited,
            in_network: state.vehicles_in_network(),
            total_queue: state.total_queue(),
            completed: sim.completed,
            mean_travel_steps: if sim.completed == 0 {
                0.0
            } else {
                sim.travel_steps as f64 / sim.completed as f64
            },
        };
        Ok(())
    })
}

/// Copies one queue length per movement into `buf`. `len` holds the buffer
/// capacity on entry and the movement count on return.
///
/// # Safety
/// `sim` must be a live handle, `len` valid, `buf` valid for `*len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cmpp_simulation_queues(sim: *const CmppSimulation, buf: *mut f64, len: *mut usize) -> CmppStatus {
    guarded(|| {
        let sim = sim.as_ref().ok_or_else(|| null("sim"))?;
        let queues = sim.state().queues;
        copy_out(&queues, buf, len)
    })
}

/// Phase index per intersection chosen at the last step (zeros before the
/// first step). Same buffer protocol as [`cmpp_simulation_queues`].
///
/// # Safety
/// As for [`cmpp_simulation_queues`].
#[no_mangle]
pub unsafe extern "C" fn cmpp_simulation_phases(sim: *const CmppSimulation, buf: *mut u32, len: *mut usize) -> CmppStatus {
    guarded(|| {
        let sim = sim.as_ref().ok_or_else(|| null("sim"))?;
        let phases: Vec<u32> = sim.last_phases.iter().map(|&p| p as u32).collect();
        copy_out(&phases, buf, len)
    })
}

unsafe fn copy_out<T: Copy>(values: &[T], buf: *mut T, len: *mut usize) -> Result<(), (CmppStatus, String)> {
    let len = len.as_mut().ok_or_else(|| null("len"))?;
    let capacity = *len;
    *len = values.len();
    if capacity < values.len() {
        return Err((
            CmppStatus::BufferTooSmall,
            format!("buffer holds {capacity}, need {}", values.len()),
        ));
    }
    if buf.is_null() {
        return Err(null("buf"));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
    Ok(())
}
