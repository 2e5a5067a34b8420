//! C interface to the simulator.
//!
//! Every fallible function returns an [`RsStatus`]. On failure the message is
//! kept per thread and can be read with [`rs_last_error_message`]. Handles
//! and strings returned by this library must be released with the matching
//! `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rampsim::demand::{DesignChoice, ScenarioCode};
use rampsim::engine::RunResult;
use rampsim::experiment::{records, run_one, write_records, SweepSpec};
use rampsim::network::{build_design, storage_capacity, DesignVariant, GeometryParams, IntersectionDesign, LaneRole};
use rampsim::Error;

/// Result of a call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RsStatus {
    Ok = 0,
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Bad design name, scenario code, geometry or configuration.
    InvalidConfig = 3,
    /// Lane index out of range.
    OutOfRange = 4,
    /// The simulation itself failed.
    Runtime = 5,
    /// A Rust panic was caught at the boundary.
    Panic = 6,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RsLaneRole {
    Left = 0,
    Middle = 1,
    Short = 2,
    Diverge = 3,
    Generic = 4,
}

impl From<LaneRole> for RsLaneRole {
    fn from(r: LaneRole) -> Self {
        match r {
            LaneRole::Left => RsLaneRole::Left,
            LaneRole::Middle => RsLaneRole::Middle,
            LaneRole::Short => RsLaneRole::Short,
            LaneRole::Diverge => RsLaneRole::Diverge,
            LaneRole::Generic => RsLaneRole::Generic,
        }
    }
}

/// Metrics for one northwest lane of a run.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RsLaneMetrics {
    pub role: RsLaneRole,
    pub n_vehicles: u64,
    pub mean_delay_s: f64,
    pub max_queue_ft: f64,
}

/// Vehicle counts at the end of a run.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RsCounts {
    pub arrived: u64,
    pub injected: u64,
    pub discharged: u64,
    pub in_network: u64,
    pub deferred: u64,
}

/// Opaque intersection design.
pub struct RsDesign(IntersectionDesign);

/// Opaque result of one simulation run.
pub struct RsRunResult(RunResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(RsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = if e.is_config_error() {
            RsStatus::InvalidConfig
        } else {
            RsStatus::Runtime
        };
        Failure(status, e.to_string())
    }
}

fn set_error(message: String) {
    // interior NULs would truncate the C string, so drop them
    let c = CString::new(message.replace('\0', "")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            RsStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("panic inside rampsim".into());
            RsStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(RsStatus::NullArgument, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(RsStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

fn to_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(RsStatus::Runtime, "output contains a NUL byte".into()))
}

/// Message of the last failed call on this thread, or NULL after a
/// successful call. The pointer stays valid until the next call into this
/// library on the same thread.
#[no_mangle]
pub extern "C" fn rs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn rs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Frees a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn rs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Number of vehicles that fit in `length_ft` at `jam_spacing_ft`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rs_storage_capacity(length_ft: f64, jam_spacing_ft: f64, out: *mut u64) -> RsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = storage_capacity(length_ft, jam_spacing_ft)? as u64;
        Ok(())
    })
}

/// Builds a design with default geometry. `variant` is one of `BASELINE`,
/// `EXTENDED_SHORT`, `RIGHT_TURN_ONLY` or `ADDED_DIVERGE`.
///
/// # Safety
/// `variant` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rs_design_build(variant: *const c_char, out: *mut *mut RsDesign) -> RsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let name = str_arg(variant, "variant")?;
        let v = DesignVariant::parse(name)
            .ok_or_else(|| Failure(RsStatus::InvalidConfig, format!("unknown design variant `{name}`")))?;
        let design = build_design(v, &GeometryParams::default())?;
        *out = Box::into_raw(Box::new(RsDesign(design)));
        Ok(())
    })
}

/// Frees a design. NULL is ignored.
///
/// # Safety
/// `design` must come from [`rs_design_build`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn rs_design_free(design: *mut RsDesign) {
    if !design.is_null() {
        drop(Box::from_raw(design));
    }
}

/// Number of lane segments in the design.
///
/// # Safety
/// `design` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rs_design_lane_count(design: *const RsDesign, out: *mut u64) -> RsStatus {
    guard(|| {
        let d = handle(design, "design")?;
        *out_arg(out, "out")? = d.0.lanes.len() as u64;
        Ok(())
    })
}

/// Storage capacity of the northwest lane with the given role, an
/// [`RsLaneRole`] value. Taken as an integer so that stray values from C are
/// reported instead of being undefined behaviour.
///
/// # Safety
/// `design` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rs_design_nw_capacity(design: *const RsDesign, role: u32, out: *mut u64) -> RsStatus {
    guard(|| {
        let d = handle(design, "design")?;
        let out = out_arg(out, "out")?;
        let role = match role {
            0 => LaneRole::Left,
            1 => LaneRole::Middle,
            2 => LaneRole::Short,
            3 => LaneRole::Diverge,
            4 => LaneRole::Generic,
            _ => return Err(Failure(RsStatus::OutOfRange, format!("unknown lane role {role}"))),
        };
        let lane =
            d.0.nw_lane(role)
                .ok_or_else(|| Failure(RsStatus::OutOfRange, format!("design has no northwest {role} lane")))?;
        *out = lane.storage_capacity as u64;
        Ok(())
    })
}

/// Serializes the design as JSON. Free the string with [`rs_string_free`].
///
/// # Safety
/// `design` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rs_design_to_json(design: *const RsDesign, out: *mut *mut c_char) -> RsStatus {
    guard(|| {
        let d = handle(design, "design")?;
        let out = out_arg(out, "out")?;
        *out = to_c_string(d.0.to_json()?)?;
        Ok(())
    })
}

/// Simulates one design, scenario code and seed.
///
/// `design` takes the command-line names (`baseline`, `extended`, `rto-i`,
/// `rto-ii`, `diverge`). `spec_json` may be NULL for the default sweep
/// settings; otherwise its `sim`, `geometry`, `controller` and `controlled`
/// fields apply and its design, code and seed lists are ignored.
///
/// # Safety
/// String arguments must be NUL-terminated and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rs_run(
    design: *const c_char,
    code: *const c_char,
    seed: u64,
    spec_json: *const c_char,
    out: *mut *mut RsRunResult,
) -> RsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let name = str_arg(design, "design")?;
        let choice = DesignChoice::from_cli_name(name)
            .ok_or_else(|| Failure(RsStatus::InvalidConfig, format!("unknown design `{name}`")))?;
        let code: ScenarioCode = str_arg(code, "code")?.parse()?;
        let spec = if spec_json.is_null() {
            SweepSpec::default()
        } else {
            SweepSpec::from_json(str_arg(spec_json, "spec_json")?)?
        };
        spec.validate()?;
        let result = run_one(&spec, choice, code, seed)?;
        *out = Box::into_raw(Box::new(RsRunResult(result)));
        Ok(())
    })
}

/// Frees a run result. NULL is ignored.
///
/// # Safety
/// `result` must come from [`rs_run`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn rs_result_free(result: *mut RsRunResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Number of northwest lanes reported in the result.
///
/// # Safety
/// `result` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rs_result_lane_count(result: *const RsRunResult, out: *mut u64) -> RsStatus {
    guard(|| {
        let r = handle(result, "result")?;
        *out_arg(out, "out")? = r.0.lanes.len() as u64;
        Ok(())
    })
}

/// Metrics of the `index`-th reported lane.
///
/// # Safety
/// `result` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rs_result_lane(result: *const RsRunResult, index: u64, out: *mut RsLaneMetrics) -> RsStatus {
    guard(|| {
        let r = handle(result, "result")?;
        let out = out_arg(out, "out")?;
        let lane = usize::try_from(index)
            .ok()
            .and_then(|i| r.0.lanes.get(i))
            .ok_or_else(|| {
                Failure(
                    RsStatus::OutOfRange,
                    format!("lane index {index} out of range ({} lanes)", r.0.lanes.len()),
                )
            })?;
        *out = RsLaneMetrics {
            role: lane.role.into(),
            n_vehicles: lane.n_vehicles as u64,
            mean_delay_s: lane.mean_delay_s,
            max_queue_ft: lane.max_queue_ft,
        };
        Ok(())
    })
}

/// Vehicle counts at the end of the run.
///
/// # Safety
/// `result` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rs_result_counts(result: *const RsRunResult, out: *mut RsCounts) -> RsStatus {
    guard(|| {
        let r = &handle(result, "result")?.0;
        *out_arg(out, "out")? = RsCounts {
            arrived: r.arrived as u64,
            injected: r.injected as u64,
            discharged: r.discharged as u64,
            in_network: r.in_network as u64,
            deferred: r.deferred as u64,
        };
        Ok(())
    })
}

/// The result as CSV rows in the sweep output format, header included.
/// Free the string with [`rs_string_free`].
///
/// # Safety
/// `result` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rs_result_to_csv(result: *const RsRunResult, out: *mut *mut c_char) -> RsStatus {
    guard(|| {
        let r = handle(result, "result")?;
        let out = out_arg(out, "out")?;
        let mut buf = Vec::new();
        write_records(&records(std::slice::from_ref(&r.0)), &mut buf)
            .map_err(|e| Failure(RsStatus::Runtime, e.to_string()))?;
        let text = String::from_utf8(buf).map_err(|e| Failure(RsStatus::Runtime, e.to_string()))?;
        *out = to_c_string(text)?;
        Ok(())
    })
}
