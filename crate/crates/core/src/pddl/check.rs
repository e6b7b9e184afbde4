//! Well-formedness rules for domains and problems.
//!
//! Findings carry element paths; the parser maps those paths back onto
//! source positions when it has them.

use std::collections::{HashMap, HashSet};

use super::ast::{Domain, GroundAtom, Literal, Problem, Term, TypedParam};
use super::diag::{Diagnostic, Diagnostics, Location, Pos, Severity};
use super::Name;

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct Finding {
    pub severity: Severity,
    pub path: String,
    pub message: String,
}

impl Finding {
    fn error(path: String, message: String) -> Self {
        Finding { severity: Severity::Error, path, message }
    }

    fn warning(path: String, message: String) -> Self {
        Finding { severity: Severity::Warning, path, message }
    }
}

pub(crate) fn locate(findings: Vec<Finding>, spans: Option<&HashMap<String, Pos>>) -> Diagnostics {
    let mut out = Diagnostics::new();
    for f in findings {
        let location = match spans.and_then(|s| lookup_span(s, &f.path)) {
            Some(pos) => Location::Span(pos),
            None => Location::Path(f.path),
        };
        out.push(Diagnostic { severity: f.severity, location, message: f.message });
    }
    out
}

// Falls back to enclosing elements when the exact path was not recorded.
fn lookup_span(spans: &HashMap<String, Pos>, path: &str) -> Option<Pos> {
    let mut p = path;
    loop {
        if let Some(pos) = spans.get(p) {
            return Some(*pos);
        }
        let cut = p.rfind('.')?;
        p = &p[..cut];
    }
}

pub(crate) fn domain_findings(d: &Domain) -> Vec<Finding> {
    let mut out = Vec::new();

    let mut seen = HashSet::new();
    for (i, t) in d.types.iter().enumerate() {
        if !seen.insert(t) {
            out.push(Finding::error(format!("types[{i}]"), format!("duplicate type {t}")));
        }
    }

    let mut seen = HashSet::new();
    for (i, p) in d.predicates.iter().enumerate() {
        if !seen.insert(&p.name) {
            out.push(Finding::error(format!("predicates[{i}]"), format!("duplicate predicate {}", p.name)));
        }
        check_params(d, &p.params, &format!("predicates[{i}]"), &mut out);
    }

    let mut seen = HashSet::new();
    for (i, a) in d.actions.iter().enumerate() {
        let base = format!("actions[{i}]");
        if !seen.insert(&a.name) {
            out.push(Finding::error(base.clone(), format!("duplicate action {}", a.name)));
        }
        if a.cost.is_nan() || a.cost < 0.0 {
            out.push(Finding::error(base.clone(), format!("action {} has a negative cost", a.name)));
        }
        check_params(d, &a.params, &base, &mut out);
        for (k, lit) in a.precondition.iter().enumerate() {
            check_lifted(d, &a.params, lit, &format!("{base}.precondition[{k}]"), &mut out);
        }
        for (k, lit) in a.effect.iter().enumerate() {
            check_lifted(d, &a.params, lit, &format!("{base}.effect[{k}]"), &mut out);
        }
        for (k, lit) in a.effect.iter().enumerate() {
            let clash = a.effect[..k].iter().any(|o| o.positive != lit.positive && o.same_atom(lit));
            if clash {
                out.push(Finding::error(
                    format!("{base}.effect[{k}]"),
                    format!("atom ({} ...) appears both positively and negatively in the effect of {}", lit.predicate, a.name),
                ));
            }
        }
    }
    out
}

fn check_params(d: &Domain, params: &[TypedParam], base: &str, out: &mut Vec<Finding>) {
    let mut seen = HashSet::new();
    for (j, p) in params.iter().enumerate() {
        if !seen.insert(&p.var) {
            out.push(Finding::error(format!("{base}.params[{j}]"), format!("duplicate parameter ?{}", p.var)));
        }
        if !d.has_type(&p.ty) {
            out.push(Finding::error(format!("{base}.params[{j}]"), format!("undeclared type {}", p.ty)));
        }
    }
}

fn check_lifted(d: &Domain, params: &[TypedParam], lit: &Literal, path: &str, out: &mut Vec<Finding>) {
    let Some(decl) = d.predicate(&lit.predicate) else {
        out.push(Finding::error(path.to_string(), format!("undeclared predicate {}", lit.predicate)));
        return;
    };
    if decl.params.len() != lit.args.len() {
        out.push(Finding::error(
            path.to_string(),
            format!("arity mismatch: {} expects {} arguments, got {}", decl.name, decl.params.len(), lit.args.len()),
        ));
        return;
    }
    for (j, (arg, slot)) in lit.args.iter().zip(&decl.params).enumerate() {
        let apath = format!("{path}.args[{j}]");
        match arg {
            Term::Var(v) => match params.iter().find(|p| &p.var == v) {
                None => out.push(Finding::error(apath, format!("unbound variable ?{v}"))),
                Some(p) if p.ty != slot.ty => out.push(Finding::error(
                    apath,
                    format!("type mismatch: ?{v} is {} but {} expects {}", p.ty, decl.name, slot.ty),
                )),
                Some(_) => {}
            },
            Term::Object(o) => out.push(Finding::error(apath, format!("unknown term {o}: action bodies may only use parameters"))),
        }
    }
}

pub(crate) fn problem_findings(d: &Domain, p: &Problem) -> Vec<Finding> {
    let mut out = Vec::new();
    if p.domain_name != d.name {
        out.push(Finding::error(
            "domain".into(),
            format!("domain name mismatch: problem names {}, domain is {}", p.domain_name, d.name),
        ));
    }
    let mut types: HashMap<&Name, &Name> = HashMap::new();
    for (i, o) in p.objects.iter().enumerate() {
        if types.insert(&o.name, &o.ty).is_some() {
            out.push(Finding::error(format!("objects[{i}]"), format!("duplicate object {}", o.name)));
        }
        if !d.has_type(&o.ty) {
            out.push(Finding::error(format!("objects[{i}].type"), format!("undeclared type {}", o.ty)));
        }
    }
    for (i, atom) in p.init.iter().enumerate() {
        check_ground(d, &types, atom, &format!("init[{i}]"), true, &mut out);
    }
    for (i, lit) in p.goal.iter().enumerate() {
        check_ground(d, &types, &lit.atom, &format!("goal[{i}]"), false, &mut out);
    }
    out
}

fn check_ground(
    d: &Domain,
    types: &HashMap<&Name, &Name>,
    atom: &GroundAtom,
    path: &str,
    in_init: bool,
    out: &mut Vec<Finding>,
) {
    let Some(decl) = d.predicate(&atom.predicate) else {
        out.push(Finding::error(path.to_string(), format!("undeclared predicate {}", atom.predicate)));
        return;
    };
    if decl.params.len() != atom.args.len() {
        out.push(Finding::error(
            path.to_string(),
            format!("arity mismatch: {} expects {} arguments, got {}", decl.name, decl.params.len(), atom.args.len()),
        ));
        return;
    }
    for (j, (arg, slot)) in atom.args.iter().zip(&decl.params).enumerate() {
        let apath = format!("{path}.args[{j}]");
        match types.get(arg) {
            None if in_init => out.push(Finding::warning(
                apath,
                format!("undeclared object {arg} in init; kept as an implicit constant"),
            )),
            None => out.push(Finding::error(apath, format!("undeclared object {arg}"))),
            Some(ty) if **ty != slot.ty => out.push(Finding::error(
                apath,
                format!("type mismatch: {arg} is {ty} but {} expects {}", decl.name, slot.ty),
            )),
            Some(_) => {}
        }
    }
}

/// Checks a domain/problem pair against every declaration, type and arity
/// rule. Empty error set iff the pair is well-formed.
pub fn check_well_formed(domain: &Domain, problem: &Problem) -> Diagnostics {
    let mut f = domain_findings(domain);
    f.extend(problem_findings(domain, problem));
    locate(f, None)
}
