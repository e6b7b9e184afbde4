use std::collections::HashMap;

use super::ast::{
    ActionSchema, Domain, GroundAtom, GroundLiteral, Literal, PredicateDecl, Problem, Term, TypedObject,
    TypedParam,
};
use super::check::{domain_findings, locate, problem_findings};
use super::diag::{Diagnostic, Diagnostics, Pos};
use super::sexpr::{self, SExpr};
use super::Name;

pub const SUPPORTED_REQUIREMENTS: [&str; 3] = [":strips", ":typing", ":negative-preconditions"];

const UNSUPPORTED_CONNECTIVES: [&str; 9] = ["or", "imply", "forall", "exists", "when", "=", "increase", "decrease", "assign"];

/// A successfully parsed object together with any warnings raised on the way.
#[derive(Clone, Debug, PartialEq)]
pub struct Parsed<T> {
    pub value: T,
    pub warnings: Diagnostics,
}

struct Ctx {
    diags: Diagnostics,
    spans: HashMap<String, Pos>,
}

impl Ctx {
    fn new() -> Self {
        Ctx { diags: Diagnostics::new(), spans: HashMap::new() }
    }

    fn error(&mut self, pos: Pos, msg: impl Into<String>) {
        self.diags.push(Diagnostic::error_at(pos, msg));
    }

    fn span(&mut self, path: String, pos: Pos) {
        self.spans.entry(path).or_insert(pos);
    }
}

fn is_keyword(s: &str, kw: &str) -> bool {
    s.eq_ignore_ascii_case(kw)
}

/// Splits `(define (<kind> NAME) sections...)` and returns the name and sections.
fn define_header<'a>(expr: &'a SExpr, kind: &str, ctx: &mut Ctx) -> Option<(Name, Pos, &'a [SExpr])> {
    let Some(items) = expr.list() else {
        ctx.error(expr.pos(), "expected (define ...)");
        return None;
    };
    if !items.first().and_then(SExpr::symbol).is_some_and(|s| is_keyword(s, "define")) {
        ctx.error(expr.pos(), "expected (define ...)");
        return None;
    }
    let header = items.get(1);
    let name = header.and_then(SExpr::list).and_then(|h| match h {
        [SExpr::Symbol { text: k, .. }, SExpr::Symbol { text: n, pos }] if is_keyword(k, kind) => {
            Some((Name::from(n.as_str()), *pos))
        }
        _ => None,
    });
    match name {
        Some((n, pos)) => Some((n, pos, &items[2..])),
        None => {
            ctx.error(header.map_or(expr.pos(), SExpr::pos), format!("expected ({kind} <name>)"));
            None
        }
    }
}

fn parse_requirements(items: &[SExpr], ctx: &mut Ctx) -> Vec<Name> {
    let mut out = Vec::new();
    for it in items {
        match it.symbol() {
            Some(s) if SUPPORTED_REQUIREMENTS.iter().any(|r| is_keyword(s, r)) => out.push(Name::from(s)),
            Some(s) => ctx.error(it.pos(), format!("unsupported requirement {s}")),
            None => ctx.error(it.pos(), "expected a requirement flag"),
        }
    }
    out
}

/// `?a ?b - t ?c` style list. Untyped entries default to `object`.
fn parse_typed_list(items: &[SExpr], vars: bool, ctx: &mut Ctx) -> Vec<(Name, Name, Pos, Pos)> {
    let mut out: Vec<(Name, Name, Pos, Pos)> = Vec::new();
    let mut pending: Vec<(Name, Pos)> = Vec::new();
    let mut i = 0;
    while i < items.len() {
        let it = &items[i];
        let Some(s) = it.symbol() else {
            ctx.error(it.pos(), "unexpected list in typed list");
            i += 1;
            continue;
        };
        if s == "-" {
            match items.get(i + 1).and_then(SExpr::symbol) {
                Some(ty) if !ty.starts_with('?') => {
                    let tpos = items[i + 1].pos();
                    for (n, p) in pending.drain(..) {
                        out.push((n, Name::from(ty), p, tpos));
                    }
                }
                _ => ctx.error(it.pos(), "expected a type name after '-'"),
            }
            i += 2;
            continue;
        }
        match (vars, s.strip_prefix('?')) {
            (true, Some(v)) if !v.is_empty() => pending.push((Name::from(v), it.pos())),
            (true, _) => ctx.error(it.pos(), format!("expected a variable, found {s}")),
            (false, Some(_)) => ctx.error(it.pos(), format!("expected an object name, found {s}")),
            (false, None) => pending.push((Name::from(s), it.pos())),
        }
        i += 1;
    }
    for (n, p) in pending {
        out.push((n, Name::from("object"), p, p));
    }
    out
}

fn parse_term(expr: &SExpr, ctx: &mut Ctx) -> Option<(Term, Pos)> {
    match expr.symbol() {
        Some(s) => match s.strip_prefix('?') {
            Some(v) if !v.is_empty() => Some((Term::Var(Name::from(v)), expr.pos())),
            Some(_) => {
                ctx.error(expr.pos(), "empty variable name");
                None
            }
            None => Some((Term::Object(Name::from(s)), expr.pos())),
        },
        None => {
            ctx.error(expr.pos(), "nested expression where a term was expected");
            None
        }
    }
}

struct RawLiteral {
    lit: Literal,
    head: Pos,
    arg_pos: Vec<Pos>,
}

fn parse_literal(expr: &SExpr, ctx: &mut Ctx) -> Option<RawLiteral> {
    let Some(items) = expr.list() else {
        ctx.error(expr.pos(), "expected a literal");
        return None;
    };
    let Some(head) = items.first().and_then(SExpr::symbol) else {
        ctx.error(expr.pos(), "expected a predicate name");
        return None;
    };
    if is_keyword(head, "not") {
        if items.len() != 2 {
            ctx.error(expr.pos(), "(not ...) takes exactly one atom");
            return None;
        }
        let mut inner = parse_literal(&items[1], ctx)?;
        if !inner.lit.positive {
            ctx.error(items[1].pos(), "double negation is not supported");
            return None;
        }
        inner.lit.positive = false;
        return Some(inner);
    }
    if is_keyword(head, "and") {
        ctx.error(expr.pos(), "nested (and ...) is not supported");
        return None;
    }
    if UNSUPPORTED_CONNECTIVES.iter().any(|c| is_keyword(head, c)) {
        ctx.error(expr.pos(), format!("unsupported construct ({head} ...)"));
        return None;
    }
    let mut args = Vec::new();
    let mut arg_pos = Vec::new();
    for a in &items[1..] {
        let (t, p) = parse_term(a, ctx)?;
        args.push(t);
        arg_pos.push(p);
    }
    Some(RawLiteral {
        lit: Literal { predicate: Name::from(head), args, positive: true },
        head: items[0].pos(),
        arg_pos,
    })
}

fn parse_conjunction(expr: &SExpr, ctx: &mut Ctx) -> Vec<RawLiteral> {
    match expr.list() {
        Some([]) => Vec::new(),
        Some(items) if expr.head().is_some_and(|h| is_keyword(h, "and")) => {
            items[1..].iter().filter_map(|e| parse_literal(e, ctx)).collect()
        }
        _ => parse_literal(expr, ctx).into_iter().collect(),
    }
}

fn record_literals(raw: Vec<RawLiteral>, base: &str, ctx: &mut Ctx) -> Vec<Literal> {
    raw.into_iter()
        .enumerate()
        .map(|(k, r)| {
            let path = format!("{base}[{k}]");
            for (j, p) in r.arg_pos.iter().enumerate() {
                ctx.span(format!("{path}.args[{j}]"), *p);
            }
            ctx.span(path, r.head);
            r.lit
        })
        .collect()
}

fn parse_action(items: &[SExpr], index: usize, pos: Pos, ctx: &mut Ctx) -> Option<ActionSchema> {
    let Some(name) = items.get(1).and_then(SExpr::symbol) else {
        ctx.error(pos, "expected an action name");
        return None;
    };
    let base = format!("actions[{index}]");
    ctx.span(base.clone(), items[1].pos());
    let mut params = Vec::new();
    let mut pre = Vec::new();
    let mut eff = Vec::new();
    let mut i = 2;
    while i < items.len() {
        let key = items[i].symbol().unwrap_or("");
        let Some(value) = items.get(i + 1) else {
            ctx.error(items[i].pos(), format!("missing value for {key}"));
            break;
        };
        if is_keyword(key, ":parameters") {
            let Some(list) = value.list() else {
                ctx.error(value.pos(), "expected a parameter list");
                i += 2;
                continue;
            };
            for (j, (v, ty, p, _)) in parse_typed_list(list, true, ctx).into_iter().enumerate() {
                ctx.span(format!("{base}.params[{j}]"), p);
                params.push(TypedParam { var: v, ty });
            }
        } else if is_keyword(key, ":precondition") {
            let raw = parse_conjunction(value, ctx);
            pre = record_literals(raw, &format!("{base}.precondition"), ctx);
        } else if is_keyword(key, ":effect") {
            let raw = parse_conjunction(value, ctx);
            eff = record_literals(raw, &format!("{base}.effect"), ctx);
        } else {
            ctx.error(items[i].pos(), format!("unsupported action field {key}"));
        }
        i += 2;
    }
    Some(ActionSchema { name: Name::from(name), params, precondition: pre, effect: eff, cost: 1.0 })
}

pub fn parse_domain(text: &str) -> Result<Parsed<Domain>, Diagnostics> {
    let mut ctx = Ctx::new();
    let expr = sexpr::read(text).map_err(|d| Diagnostics(vec![d]))?;
    let Some((name, _, sections)) = define_header(&expr, "domain", &mut ctx) else {
        return Err(ctx.diags);
    };
    let mut domain = Domain { name, requirements: Vec::new(), types: Vec::new(), predicates: Vec::new(), actions: Vec::new() };
    let mut seen_sections: Vec<String> = Vec::new();
    for sec in sections {
        let Some(items) = sec.list() else {
            ctx.error(sec.pos(), "expected a section");
            continue;
        };
        let head = sec.head().unwrap_or("").to_ascii_lowercase();
        if head != ":action" {
            if seen_sections.contains(&head) {
                ctx.error(sec.pos(), format!("duplicate section {head}"));
                continue;
            }
            seen_sections.push(head.clone());
        }
        match head.as_str() {
            ":requirements" => domain.requirements = parse_requirements(&items[1..], &mut ctx),
            ":types" => {
                for it in &items[1..] {
                    match it.symbol() {
                        Some("-") => ctx.error(it.pos(), "type hierarchies are not supported"),
                        Some(s) => {
                            ctx.span(format!("types[{}]", domain.types.len()), it.pos());
                            domain.types.push(Name::from(s));
                        }
                        None => ctx.error(it.pos(), "expected a type name"),
                    }
                }
            }
            ":predicates" => {
                for p in &items[1..] {
                    let Some(pitems) = p.list() else {
                        ctx.error(p.pos(), "expected a predicate declaration");
                        continue;
                    };
                    let Some(pname) = p.head() else {
                        ctx.error(p.pos(), "expected a predicate name");
                        continue;
                    };
                    let idx = domain.predicates.len();
                    ctx.span(format!("predicates[{idx}]"), pitems[0].pos());
                    let params = parse_typed_list(&pitems[1..], true, &mut ctx)
                        .into_iter()
                        .enumerate()
                        .map(|(j, (v, ty, pos, _))| {
                            ctx.span(format!("predicates[{idx}].params[{j}]"), pos);
                            TypedParam { var: v, ty }
                        })
                        .collect();
                    domain.predicates.push(PredicateDecl { name: Name::from(pname), params });
                }
            }
            ":action" => {
                if let Some(a) = parse_action(items, domain.actions.len(), sec.pos(), &mut ctx) {
                    domain.actions.push(a);
                }
            }
            other => ctx.error(sec.pos(), format!("unsupported section {other}")),
        }
    }
    let findings = domain_findings(&domain);
    ctx.diags.extend(locate(findings, Some(&ctx.spans)));
    finish(domain, ctx.diags)
}

fn finish<T>(value: T, diags: Diagnostics) -> Result<Parsed<T>, Diagnostics> {
    if diags.has_errors() {
        Err(diags)
    } else {
        Ok(Parsed { value, warnings: diags })
    }
}

fn ground_literal(raw: RawLiteral, ctx: &mut Ctx) -> Option<(GroundLiteral, Pos, Vec<Pos>)> {
    let mut args = Vec::new();
    for (t, p) in raw.lit.args.into_iter().zip(&raw.arg_pos) {
        match t {
            Term::Object(o) => args.push(o),
            Term::Var(v) => {
                ctx.error(*p, format!("variable ?{v} is not allowed in a problem"));
                return None;
            }
        }
    }
    Some((
        GroundLiteral { atom: GroundAtom { predicate: raw.lit.predicate, args }, positive: raw.lit.positive },
        raw.head,
        raw.arg_pos,
    ))
}

/// Parses a problem and type-checks it against `domain`.
pub fn parse_problem(text: &str, domain: &Domain) -> Result<Parsed<Problem>, Diagnostics> {
    let mut ctx = Ctx::new();
    let expr = sexpr::read(text).map_err(|d| Diagnostics(vec![d]))?;
    let Some((name, _, sections)) = define_header(&expr, "problem", &mut ctx) else {
        return Err(ctx.diags);
    };
    let mut problem = Problem { name, domain_name: Name::from(""), objects: Vec::new(), init: Vec::new(), goal: Vec::new() };
    let mut seen_sections: Vec<String> = Vec::new();
    let mut have_domain = false;
    let mut have_goal = false;
    for sec in sections {
        let Some(items) = sec.list() else {
            ctx.error(sec.pos(), "expected a section");
            continue;
        };
        let head = sec.head().unwrap_or("").to_ascii_lowercase();
        if seen_sections.contains(&head) {
            ctx.error(sec.pos(), format!("duplicate section {head}"));
            continue;
        }
        seen_sections.push(head.clone());
        match head.as_str() {
            ":domain" => match items.get(1).and_then(SExpr::symbol) {
                Some(d) if items.len() == 2 => {
                    ctx.span("domain".into(), items[1].pos());
                    problem.domain_name = Name::from(d);
                    have_domain = true;
                }
                _ => ctx.error(sec.pos(), "expected (:domain <name>)"),
            },
            ":requirements" => {
                parse_requirements(&items[1..], &mut ctx);
            }
            ":objects" => {
                for (n, ty, p, tp) in parse_typed_list(&items[1..], false, &mut ctx) {
                    let i = problem.objects.len();
                    ctx.span(format!("objects[{i}]"), p);
                    ctx.span(format!("objects[{i}].type"), tp);
                    problem.objects.push(TypedObject { name: n, ty });
                }
            }
            ":init" => {
                for it in &items[1..] {
                    let Some(raw) = parse_literal(it, &mut ctx) else { continue };
                    let Some((lit, head, arg_pos)) = ground_literal(raw, &mut ctx) else { continue };
                    if !lit.positive {
                        ctx.diags.push(Diagnostic::warning_at(
                            it.pos(),
                            format!("negative literal {lit} in init dropped: absent atoms are already false"),
                        ));
                        continue;
                    }
                    let i = problem.init.len();
                    for (j, p) in arg_pos.iter().enumerate() {
                        ctx.span(format!("init[{i}].args[{j}]"), *p);
                    }
                    ctx.span(format!("init[{i}]"), head);
                    problem.init.push(lit.atom);
                }
            }
            ":goal" => {
                have_goal = true;
                if items.len() != 2 {
                    ctx.error(sec.pos(), "expected (:goal <condition>)");
                    continue;
                }
                let raw = parse_conjunction(&items[1], &mut ctx);
                for r in raw {
                    let Some((lit, head, arg_pos)) = ground_literal(r, &mut ctx) else { continue };
                    let i = problem.goal.len();
                    for (j, p) in arg_pos.iter().enumerate() {
                        ctx.span(format!("goal[{i}].args[{j}]"), *p);
                    }
                    ctx.span(format!("goal[{i}]"), head);
                    problem.goal.push(lit);
                }
            }
            other => ctx.error(sec.pos(), format!("unsupported section {other}")),
        }
    }
    if !have_domain {
        ctx.error(expr.pos(), "missing (:domain ...)");
    }
    if !have_goal {
        ctx.error(expr.pos(), "missing (:goal ...)");
    }
    if !ctx.diags.has_errors() {
        let findings = problem_findings(domain, &problem);
        ctx.diags.extend(locate(findings, Some(&ctx.spans)));
    }
    finish(problem, ctx.diags)
}
