use std::ffi::{c_char, c_int, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use teamplan_ffi::*;

const DOMAIN: &str = include_str!("../../core/data/domains/robot2.pddl");
const PROBLEM: &str = include_str!("../../core/data/listings/prepare_plate_with_egg.pddl");

fn last_error() -> String {
    unsafe { CStr::from_ptr(tp_last_error_message()) }.to_string_lossy().into_owned()
}

fn take(s: *mut c_char) -> String {
    let out = unsafe { CStr::from_ptr(s) }.to_string_lossy().into_owned();
    unsafe { tp_string_free(s) };
    out
}

struct Loaded {
    domain: *mut TpDomain,
    problem: *mut TpProblem,
    task: *mut TpTask,
}

impl Drop for Loaded {
    fn drop(&mut self) {
        unsafe {
            tp_task_free(self.task);
            tp_problem_free(self.problem);
            tp_domain_free(self.domain);
        }
    }
}

fn load(domain: &str, problem: &str) -> Loaded {
    let d = CString::new(domain).unwrap();
    let p = CString::new(problem).unwrap();
    let mut l = Loaded { domain: ptr::null_mut(), problem: ptr::null_mut(), task: ptr::null_mut() };
    unsafe {
        assert_eq!(tp_domain_parse(d.as_ptr(), &mut l.domain), TpStatus::Ok, "{}", last_error());
        assert_eq!(tp_problem_parse(l.domain, p.as_ptr(), &mut l.problem), TpStatus::Ok, "{}", last_error());
        assert_eq!(tp_task_ground(l.domain, l.problem, &mut l.task), TpStatus::Ok, "{}", last_error());
    }
    l
}

#[test]
fn plan_render_and_validate() {
    let l = load(DOMAIN, PROBLEM);
    unsafe {
        assert!(tp_task_num_actions(l.task) > 0);
        assert!(tp_task_num_atoms(l.task) > 0);
        let mut plan = ptr::null_mut();
        assert_eq!(tp_plan(l.task, TP_MODE_OPTIMAL, TP_HEURISTIC_MAX, 10_000, &mut plan), TpStatus::Ok);
        assert_eq!(tp_plan_len(plan), 4);
        assert_eq!(tp_plan_cost(plan), 4.0);
        let mut text = ptr::null_mut();
        assert_eq!(tp_plan_render(plan, &mut text), TpStatus::Ok);
        let text = take(text);
        assert!(text.ends_with("; cost = 4\n") || text.ends_with("; cost = 4"), "{text}");
        tp_plan_free(plan);

        let c = CString::new(text.clone()).unwrap();
        let mut valid: c_int = -1;
        let mut report = ptr::null_mut();
        assert_eq!(tp_validate_plan_text(l.task, c.as_ptr(), &mut valid, &mut report), TpStatus::Ok);
        assert_eq!(valid, 1);
        assert!(take(report).starts_with("Plan valid"));

        let steps: Vec<&str> = text.lines().filter(|l| !l.starts_with(';')).collect();
        let reordered = CString::new(format!("{}\n{}\n", steps[3], steps[2])).unwrap();
        assert_eq!(tp_validate_plan_text(l.task, reordered.as_ptr(), &mut valid, ptr::null_mut()), TpStatus::Ok);
        assert_eq!(valid, 0);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut d = ptr::null_mut();
        assert_eq!(tp_domain_parse(ptr::null(), &mut d), TpStatus::NullArgument);
        assert!(d.is_null());
        let broken = CString::new("(define (domain d) (:predicates").unwrap();
        assert_eq!(tp_domain_parse(broken.as_ptr(), &mut d), TpStatus::ParseError);
        assert!(!last_error().is_empty());
        let bad_utf8 = [0xffu8, 0xfe, 0];
        assert_eq!(tp_domain_parse(bad_utf8.as_ptr().cast(), &mut d), TpStatus::InvalidUtf8);

        let l = load(DOMAIN, PROBLEM);
        let mut plan = ptr::null_mut();
        assert_eq!(tp_plan(l.task, TP_MODE_OPTIMAL, TP_HEURISTIC_FF, 100, &mut plan), TpStatus::InvalidConfig);
        assert_eq!(tp_plan(l.task, 7, TP_HEURISTIC_MAX, 100, &mut plan), TpStatus::InvalidConfig);
        assert_eq!(tp_plan(l.task, TP_MODE_SATISFICING, TP_HEURISTIC_FF, 0, &mut plan), TpStatus::InvalidConfig);
        assert!(plan.is_null());
        let garbage = CString::new("0: (unterminated").unwrap();
        let mut valid = 0;
        assert_eq!(tp_validate_plan_text(l.task, garbage.as_ptr(), &mut valid, ptr::null_mut()), TpStatus::InvalidPlan);

        assert_eq!(tp_plan_len(ptr::null()), 0);
        assert!(tp_plan_cost(ptr::null()).is_nan());
        tp_plan_free(ptr::null_mut());
        tp_string_free(ptr::null_mut());
    }
}

#[test]
fn unsolvable_and_limits() {
    let stuck = "(define (problem stuck) (:domain robot2) (:objects R - robot Egg Plate - object) (:init) (:goal (and (holding R Egg))))";
    let l = load(DOMAIN, stuck);
    let mut plan = ptr::null_mut();
    unsafe {
        assert_eq!(tp_plan(l.task, TP_MODE_SATISFICING, TP_HEURISTIC_ADD, 1000, &mut plan), TpStatus::Unsolvable);
        assert!(last_error().contains("no plan exists"));
        let big = load(DOMAIN, PROBLEM);
        assert_eq!(tp_plan(big.task, TP_MODE_OPTIMAL, TP_HEURISTIC_MAX, 1, &mut plan), TpStatus::ResourceLimit);
    }
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/teamplan.h")
}

#[test]
fn header_declares_every_export() {
    let h = std::fs::read_to_string(header()).unwrap();
    let src = include_str!("../src/lib.rs");
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 15);
    for f in exports {
        assert!(h.contains(&format!("{f}(")), "header lacks {f}");
    }
    assert!(h.contains("typedef struct TpTask TpTask;"));
    assert!(h.contains("TP_STATUS_OK = 0"));
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "teamplan.h"

int main(int argc, char **argv) {
    (void)argc;
    FILE *f;
    static char dom[1 << 16], prob[1 << 16];
    f = fopen(argv[1], "rb"); dom[fread(dom, 1, sizeof dom - 1, f)] = 0; fclose(f);
    f = fopen(argv[2], "rb"); prob[fread(prob, 1, sizeof prob - 1, f)] = 0; fclose(f);
    TpDomain *d = NULL; TpProblem *p = NULL; TpTask *t = NULL; TpPlan *plan = NULL;
    if (tp_domain_parse(dom, &d) != TP_STATUS_OK) return 10;
    if (tp_problem_parse(d, prob, &p) != TP_STATUS_OK) return 11;
    if (tp_task_ground(d, p, &t) != TP_STATUS_OK) return 12;
    if (tp_plan(t, TP_MODE_SATISFICING, TP_HEURISTIC_FF, 100000, &plan) != TP_STATUS_OK) return 13;
    char *text = NULL;
    tp_plan_render(plan, &text);
    int valid = 0;
    if (tp_validate_plan_text(t, text, &valid, NULL) != TP_STATUS_OK || !valid) return 14;
    printf("%zu %s", tp_plan_len(plan), text);
    tp_string_free(text);
    tp_plan_free(plan); tp_task_free(t); tp_problem_free(p); tp_domain_free(d);
    return 0;
}
"#;

#[test]
fn c_program_links_against_staticlib() {
    let target = Path::new(env!("CARGO_TARGET_TMPDIR")).parent().unwrap().join(if cfg!(debug_assertions) { "debug" } else { "release" });
    let lib = target.join("libteamplan_ffi.a");
    if !lib.is_file() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or static library at {}", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let exe = dir.path().join("main");
    let include = header();
    let cc = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(include.parent().unwrap())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(cc.status.success(), "{}", String::from_utf8_lossy(&cc.stderr));
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data");
    let run = Command::new(&exe).arg(data.join("domains/robot2.pddl")).arg(data.join("listings/prepare_plate_with_egg.pddl")).output().unwrap();
    assert_eq!(run.status.code(), Some(0));
    let out = String::from_utf8_lossy(&run.stdout);
    assert!(out.contains(" 0: (") && out.contains("; cost = "), "{out}");
}
