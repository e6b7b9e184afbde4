//! C ABI over the planner core.
//!
//! Objects cross the boundary as opaque handles created by `tp_*_parse`,
//! `tp_task_ground` and `tp_plan`, and released by the matching `*_free`.
//! Every fallible call returns a [`TpStatus`]; on failure the message is
//! available from [`tp_last_error_message`] on the same thread. Strings
//! returned through `char **` out-parameters are owned by the caller and
//! released with [`tp_string_free`].
#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use teamplan::ground::{ground, GroundTask};
use teamplan::pddl::{parse_domain, parse_problem, Domain, Problem};
use teamplan::search::{self, parse_plan_text, HeuristicKind, Mode, Plan, SearchConfig, SearchError};
use teamplan::validate::validate_calls;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TpStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    GroundError = 4,
    Unsolvable = 5,
    ResourceLimit = 6,
    InvalidConfig = 7,
    InvalidPlan = 8,
    Panic = 9,
}

pub const TP_MODE_SATISFICING: u32 = 0;
pub const TP_MODE_OPTIMAL: u32 = 1;
pub const TP_HEURISTIC_ADD: u32 = 0;
pub const TP_HEURISTIC_MAX: u32 = 1;
pub const TP_HEURISTIC_FF: u32 = 2;

pub struct TpDomain(Domain);

pub struct TpProblem(Problem);

pub struct TpTask(GroundTask);

pub struct TpPlan {
    plan: Plan,
    text: String,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let bytes: Vec<u8> = msg.into().into_bytes().into_iter().filter(|b| *b != 0).collect();
    let c = CString::new(bytes).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

type Outcome = Result<(), (TpStatus, String)>;

fn guard(f: impl FnOnce() -> Outcome) -> TpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            TpStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            TpStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, (TpStatus, String)> {
    if p.is_null() {
        return Err((TpStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|e| (TpStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, (TpStatus, String)> {
    p.as_ref().ok_or_else(|| (TpStatus::NullArgument, format!("{what} is null")))
}

fn out_ptr<T>(out: *mut *mut T) -> Result<(), (TpStatus, String)> {
    if out.is_null() {
        Err((TpStatus::NullArgument, "output pointer is null".into()))
    } else {
        Ok(())
    }
}

fn c_string(s: &str) -> *mut c_char {
    CString::new(s.replace('\0', "")).expect("nul bytes removed").into_raw()
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn tp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub unsafe extern "C" fn tp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[no_mangle]
pub unsafe extern "C" fn tp_domain_parse(source: *const c_char, out: *mut *mut TpDomain) -> TpStatus {
    guard(|| {
        out_ptr(out)?;
        let src = text(source, "source")?;
        let parsed = parse_domain(src).map_err(|d| (TpStatus::ParseError, d.to_string()))?;
        *out = Box::into_raw(Box::new(TpDomain(parsed.value)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn tp_domain_free(domain: *mut TpDomain) {
    if !domain.is_null() {
        drop(Box::from_raw(domain));
    }
}

#[no_mangle]
pub unsafe extern "C" fn tp_problem_parse(domain: *const TpDomain, source: *const c_char, out: *mut *mut TpProblem) -> TpStatus {
    guard(|| {
        out_ptr(out)?;
        let d = handle(domain, "domain")?;
        let src = text(source, "source")?;
        let parsed = parse_problem(src, &d.0).map_err(|e| (TpStatus::ParseError, e.to_string()))?;
        *out = Box::into_raw(Box::new(TpProblem(parsed.value)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn tp_problem_free(problem: *mut TpProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

#[no_mangle]
pub unsafe extern "C" fn tp_task_ground(domain: *const TpDomain, problem: *const TpProblem, out: *mut *mut TpTask) -> TpStatus {
    guard(|| {
        out_ptr(out)?;
        let d = handle(domain, "domain")?;
        let p = handle(problem, "problem")?;
        let task = ground(&d.0, &p.0).map_err(|e| (TpStatus::GroundError, e.to_string()))?;
        *out = Box::into_raw(Box::new(TpTask(task)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn tp_task_free(task: *mut TpTask) {
    if !task.is_null() {
        drop(Box::from_raw(task));
    }
}

/// Number of ground actions, 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn tp_task_num_actions(task: *const TpTask) -> usize {
    task.as_ref().map_or(0, |t| t.0.actions().len())
}

/// Number of ground atoms, 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn tp_task_num_atoms(task: *const TpTask) -> usize {
    task.as_ref().map_or(0, |t| t.0.num_atoms())
}

fn config(mode: u32, heuristic: u32, max_expansions: usize) -> Result<SearchConfig, (TpStatus, String)> {
    let mode = match mode {
        TP_MODE_SATISFICING => Mode::Satisficing,
        TP_MODE_OPTIMAL => Mode::Optimal,
        m => return Err((TpStatus::InvalidConfig, format!("unknown mode {m}"))),
    };
    let heuristic = match heuristic {
        TP_HEURISTIC_ADD => HeuristicKind::HAdd,
        TP_HEURISTIC_MAX => HeuristicKind::HMax,
        TP_HEURISTIC_FF => HeuristicKind::HFf,
        h => return Err((TpStatus::InvalidConfig, format!("unknown heuristic {h}"))),
    };
    if max_expansions == 0 {
        return Err((TpStatus::InvalidConfig, "expansion limit must be positive".into()));
    }
    let c = SearchConfig { mode, heuristic, max_expansions, ..SearchConfig::default() };
    c.check().map_err(|e| (TpStatus::InvalidConfig, e.to_string()))?;
    Ok(c)
}

/// Searches for a plan. `mode` is a `TP_MODE_*` value and `heuristic` a
/// `TP_HEURISTIC_*` value; optimal mode requires `TP_HEURISTIC_MAX`.
#[no_mangle]
pub unsafe extern "C" fn tp_plan(
    task: *const TpTask,
    mode: u32,
    heuristic: u32,
    max_expansions: usize,
    out: *mut *mut TpPlan,
) -> TpStatus {
    guard(|| {
        out_ptr(out)?;
        let t = handle(task, "task")?;
        let cfg = config(mode, heuristic, max_expansions)?;
        let plan = search::plan(&t.0, &cfg).map_err(|e| match e {
            SearchError::Unsolvable => (TpStatus::Unsolvable, e.to_string()),
            SearchError::ResourceLimit { .. } => (TpStatus::ResourceLimit, e.to_string()),
            SearchError::InadmissibleHeuristic(_) => (TpStatus::InvalidConfig, e.to_string()),
        })?;
        let text = plan.render(&t.0);
        *out = Box::into_raw(Box::new(TpPlan { plan, text }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn tp_plan_len(plan: *const TpPlan) -> usize {
    plan.as_ref().map_or(0, |p| p.plan.len())
}

/// Plan cost; NaN for a null handle.
#[no_mangle]
pub unsafe extern "C" fn tp_plan_cost(plan: *const TpPlan) -> f64 {
    plan.as_ref().map_or(f64::NAN, |p| p.plan.cost)
}

/// Plan text, one `<index>: (<Action> <args...>)` line per step and a
/// final `; cost = N` line. Free the result with [`tp_string_free`].
#[no_mangle]
pub unsafe extern "C" fn tp_plan_render(plan: *const TpPlan, out: *mut *mut c_char) -> TpStatus {
    guard(|| {
        out_ptr(out)?;
        let p = handle(plan, "plan")?;
        *out = c_string(&p.text);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn tp_plan_free(plan: *mut TpPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

/// Validates plan text against a task. Sets `*valid` to 1 or 0 and, when
/// `report` is non-null, stores a human-readable report there. An
/// unparseable plan returns `TpStatus::InvalidPlan`.
#[no_mangle]
pub unsafe extern "C" fn tp_validate_plan_text(
    task: *const TpTask,
    plan_text: *const c_char,
    valid: *mut c_int,
    report: *mut *mut c_char,
) -> TpStatus {
    guard(|| {
        if valid.is_null() {
            return Err((TpStatus::NullArgument, "valid is null".into()));
        }
        let t = handle(task, "task")?;
        let src = text(plan_text, "plan_text")?;
        let calls = parse_plan_text(src).map_err(|e| (TpStatus::InvalidPlan, e.to_string()))?;
        let r = validate_calls(&t.0, &calls);
        *valid = c_int::from(r.is_valid());
        if !report.is_null() {
            *report = c_string(&r.render(calls.len()));
        }
        Ok(())
    })
}
