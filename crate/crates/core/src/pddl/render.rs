use std::fmt::Write;

use super::ast::{Domain, Literal, Problem, TypedParam};

fn params(ps: &[TypedParam]) -> String {
    ps.iter().map(|p| format!("?{} - {}", p.var, p.ty)).collect::<Vec<_>>().join(" ")
}

fn conjunction(out: &mut String, lits: &[Literal], indent: &str) {
    if lits.is_empty() {
        out.push_str("(and)");
        return;
    }
    out.push_str("(and\n");
    for l in lits {
        let _ = writeln!(out, "{indent}  {l}");
    }
    let _ = write!(out, "{indent})");
}

pub fn render_domain(d: &Domain) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "(define (domain {})", d.name);
    if !d.requirements.is_empty() {
        let reqs: Vec<String> = d.requirements.iter().map(|r| r.to_string()).collect();
        let _ = writeln!(out, "  (:requirements {})", reqs.join(" "));
    }
    let types: Vec<String> = d.types.iter().map(|t| t.to_string()).collect();
    let _ = writeln!(out, "  (:types {})", types.join(" "));
    if !d.predicates.is_empty() {
        out.push_str("  (:predicates\n");
        for p in &d.predicates {
            if p.params.is_empty() {
                let _ = writeln!(out, "    ({})", p.name);
            } else {
                let _ = writeln!(out, "    ({} {})", p.name, params(&p.params));
            }
        }
        out.push_str("  )\n");
    }
    for a in &d.actions {
        let _ = writeln!(out, "  (:action {}", a.name);
        let _ = writeln!(out, "    :parameters ({})", params(&a.params));
        out.push_str("    :precondition ");
        conjunction(&mut out, &a.precondition, "    ");
        out.push_str("\n    :effect ");
        conjunction(&mut out, &a.effect, "    ");
        out.push_str("\n  )\n");
    }
    out.push_str(")\n");
    out
}

pub fn render_problem(p: &Problem) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "(define (problem {})", p.name);
    let _ = writeln!(out, "  (:domain {})", p.domain_name);
    out.push_str("  (:objects\n");
    for o in &p.objects {
        let _ = writeln!(out, "    {} - {}", o.name, o.ty);
    }
    out.push_str("  )\n  (:init\n");
    for a in &p.init {
        let _ = write!(out, "    ({}", a.predicate);
        for arg in &a.args {
            let _ = write!(out, " {arg}");
        }
        out.push_str(")\n");
    }
    out.push_str("  )\n");
    if p.goal.is_empty() {
        out.push_str("  (:goal (and))\n");
    } else {
        out.push_str("  (:goal (and\n");
        for g in &p.goal {
            let _ = writeln!(out, "    {g}");
        }
        out.push_str("  ))\n");
    }
    out.push_str(")\n");
    out
}
