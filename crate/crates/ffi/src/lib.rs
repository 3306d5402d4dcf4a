//! C ABI over the planner and simulator.
//!
//! Objects cross the boundary as opaque handles, created by calls such as
//! `lp_model_zoo` or `lp_plan_partition` and released by the matching
//! `lp_*_free`. Every fallible
//! call returns an [`LpStatus`]; on failure `lp_last_error()` describes the
//! most recent error on the calling thread. Strings returned to the caller
//! are released with `lp_string_free`.

use layerpar::commcost::Parallelism;
use layerpar::netspec::{infer_shapes, parse_model, LayerShapes, NetworkModel};
use layerpar::planner::{hierarchical_partition, HierarchyMode, PlanMatrix};
use layerpar::simarray::{simulate_training, HardwareConfig, SimReport, Topology, TopologyKind};
use layerpar::{zoo, Error};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    InvalidModel = 4,
    InvalidPlan = 5,
    InvalidHardware = 6,
    Capacity = 7,
    OutOfRange = 8,
    UnknownNetwork = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpMode {
    PaperLiteral = 0,
    ShapePropagating = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpParallelism {
    Dp = 0,
    Mp = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpTopology {
    HTree = 0,
    Torus = 1,
}

/// A validated network and its shapes.
pub struct LpModel {
    model: NetworkModel,
    shapes: LayerShapes,
}

/// A parallelism matrix with its traffic total.
pub struct LpPlan {
    plan: PlanMatrix,
}

/// Simulation results.
pub struct LpReport {
    report: SimReport,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("no interior NUL"));
}

fn status_of(err: &Error) -> LpStatus {
    match err {
        Error::Parse(_) => LpStatus::Parse,
        Error::PlanLength { .. } | Error::LevelMismatch { .. } | Error::TooManyLayers { .. } => {
            LpStatus::InvalidPlan
        }
        Error::Hardware(_) | Error::PrecisionMismatch { .. } => LpStatus::InvalidHardware,
        Error::CapacityOverflow { .. } => LpStatus::Capacity,
        Error::LayerOutOfRange { .. } | Error::ZeroSteps => LpStatus::OutOfRange,
        Error::UnknownNetwork { .. } => LpStatus::UnknownNetwork,
        _ => LpStatus::InvalidModel,
    }
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), (LpStatus, String)>) -> LpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            LpStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            LpStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (LpStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (LpStatus, String) {
    (LpStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `p` must be null or a valid NUL-terminated string.
unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (LpStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| (LpStatus::InvalidUtf8, format!("{what}: {e}")))
}

/// # Safety
/// `out` must be null or valid for writes.
unsafe fn emit<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

fn emit_string(out: *mut *mut c_char, s: String) -> Result<(), (LpStatus, String)> {
    let c = CString::new(s).map_err(|e| (LpStatus::Panic, e.to_string()))?;
    // SAFETY: callers check `out` for null first.
    unsafe { *out = c.into_raw() };
    Ok(())
}

fn wrap(model: NetworkModel) -> Result<LpModel, (LpStatus, String)> {
    let shapes = infer_shapes(&model).map_err(lib_err)?;
    Ok(LpModel { model, shapes })
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn lp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parses model-file text.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lp_model_parse(text: *const c_char, out: *mut *mut LpModel) -> LpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = read_str(text, "text")?;
        let model = wrap(parse_model(text).map_err(lib_err)?)?;
        emit(out, model);
        Ok(())
    })
}

/// Loads a built-in network by name.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lp_model_zoo(name: *const c_char, out: *mut *mut LpModel) -> LpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let name = read_str(name, "name")?;
        let model = wrap(zoo::get(name).map_err(lib_err)?)?;
        emit(out, model);
        Ok(())
    })
}

/// Changes the batch size in place.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn lp_model_set_batch(model: *mut LpModel, batch: u64) -> LpStatus {
    guard(|| {
        let m = model.as_mut().ok_or_else(|| null("model"))?;
        *m = wrap(m.model.with_batch(batch).map_err(lib_err)?)?;
        Ok(())
    })
}

/// Number of weighted layers, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lp_model_layer_count(model: *const LpModel) -> usize {
    model.as_ref().map_or(0, |m| m.shapes.len())
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lp_model_free(model: *mut LpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

fn mode_of(mode: LpMode) -> HierarchyMode {
    match mode {
        LpMode::PaperLiteral => HierarchyMode::PaperLiteral,
        LpMode::ShapePropagating => HierarchyMode::ShapePropagating,
    }
}

/// Optimized plan for a `2^levels` array.
///
/// # Safety
/// `model` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lp_plan_partition(
    model: *const LpModel,
    levels: u32,
    mode: LpMode,
    out: *mut *mut LpPlan,
) -> LpStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let plan =
            hierarchical_partition(&m.shapes, levels as usize, mode_of(mode)).map_err(lib_err)?;
        emit(out, LpPlan { plan });
        Ok(())
    })
}

/// The same parallelism for every layer at every level.
///
/// # Safety
/// `model` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lp_plan_uniform(
    model: *const LpModel,
    levels: u32,
    parallelism: LpParallelism,
    mode: LpMode,
    out: *mut *mut LpPlan,
) -> LpStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let p = match parallelism {
            LpParallelism::Dp => Parallelism::Dp,
            LpParallelism::Mp => Parallelism::Mp,
        };
        let plan =
            PlanMatrix::uniform(&m.shapes, levels as usize, p, mode_of(mode)).map_err(lib_err)?;
        emit(out, LpPlan { plan });
        Ok(())
    })
}

/// Number of hierarchy levels, or 0 for a null handle.
///
/// # Safety
/// `plan` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lp_plan_levels(plan: *const LpPlan) -> usize {
    plan.as_ref().map_or(0, |p| p.plan.levels())
}

/// Parallelism of `layer` at `level` (0 = top).
///
/// # Safety
/// `plan` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lp_plan_get(
    plan: *const LpPlan,
    level: usize,
    layer: usize,
    out: *mut LpParallelism,
) -> LpStatus {
    guard(|| {
        let p = plan.as_ref().ok_or_else(|| null("plan"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let row = p.plan.rows.get(level).ok_or_else(|| {
            (
                LpStatus::OutOfRange,
                format!("level {level} of {}", p.plan.levels()),
            )
        })?;
        let choice = row.get(layer).ok_or_else(|| {
            (
                LpStatus::OutOfRange,
                format!("layer {layer} of {}", row.len()),
            )
        })?;
        *out = match choice {
            Parallelism::Dp => LpParallelism::Dp,
            Parallelism::Mp => LpParallelism::Mp,
        };
        Ok(())
    })
}

/// Total inter-accelerator bytes of one step under the plan.
///
/// # Safety
/// `plan` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lp_plan_total_bytes(plan: *const LpPlan) -> u64 {
    plan.as_ref().map_or(0, |p| p.plan.total.bytes)
}

/// Plan as JSON; release with `lp_string_free`.
///
/// # Safety
/// `plan` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lp_plan_to_json(plan: *const LpPlan, out: *mut *mut c_char) -> LpStatus {
    guard(|| {
        let p = plan.as_ref().ok_or_else(|| null("plan"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let text = serde_json::to_string(&p.plan.to_file())
            .map_err(|e| (LpStatus::Panic, e.to_string()))?;
        emit_string(out, text)
    })
}

/// # Safety
/// `plan` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lp_plan_free(plan: *mut LpPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

/// Simulates `steps` training steps. `hw_json` may be null for the default
/// hardware, or a JSON object overriding some of its fields.
///
/// # Safety
/// Handles must be live; `hw_json` must be null or NUL-terminated; `out`
/// must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lp_simulate(
    model: *const LpModel,
    plan: *const LpPlan,
    topology: LpTopology,
    hw_json: *const c_char,
    steps: u64,
    out: *mut *mut LpReport,
) -> LpStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let p = plan.as_ref().ok_or_else(|| null("plan"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let hw = if hw_json.is_null() {
            HardwareConfig::default()
        } else {
            HardwareConfig::from_json(read_str(hw_json, "hw_json")?).map_err(lib_err)?
        };
        let topo = Topology {
            kind: match topology {
                LpTopology::HTree => TopologyKind::HTree,
                LpTopology::Torus => TopologyKind::Torus,
            },
            levels: p.plan.levels(),
        };
        let report = simulate_training(&m.model, &p.plan, &hw, &topo, steps).map_err(lib_err)?;
        emit(out, LpReport { report });
        Ok(())
    })
}

/// Seconds for one step, or NaN for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lp_report_step_time(report: *const LpReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.report.step_time_s)
}

/// Joules over all simulated steps, or NaN for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lp_report_energy(report: *const LpReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.report.energy_j)
}

/// Inter-accelerator bytes over all simulated steps.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lp_report_comm_bytes(report: *const LpReport) -> u64 {
    report.as_ref().map_or(0, |r| r.report.comm_bytes)
}

/// Full report as JSON; release with `lp_string_free`.
///
/// # Safety
/// `report` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lp_report_to_json(
    report: *const LpReport,
    out: *mut *mut c_char,
) -> LpStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        emit_string(out, r.report.to_json())
    })
}

/// # Safety
/// `report` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lp_report_free(report: *mut LpReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
