//! PDDL front-end for the STRIPS + typing + negative-preconditions subset.
//!
//! Identifiers match case-insensitively and print as written. Negative
//! literals in `:init` are dropped with a warning.

mod ast;
mod check;
mod diag;
mod name;
mod parse;
mod render;
pub mod sexpr;

pub use ast::{
    ActionSchema, Domain, GroundAtom, GroundLiteral, Literal, PredicateDecl, Problem, Term, TypedObject,
    TypedParam,
};
pub use check::check_well_formed;
pub use diag::{Diagnostic, Diagnostics, Location, Pos, Severity};
pub use name::Name;
pub use parse::{parse_domain, parse_problem, Parsed, SUPPORTED_REQUIREMENTS};
pub use render::{render_domain, render_problem};

/// Domain and problem sources shipped with the crate.
pub mod bundled {
    pub const HOUSEHOLD_DOMAIN: &str = include_str!("../../data/domains/household.pddl");
    pub const ROBOT2_DOMAIN: &str = include_str!("../../data/domains/robot2.pddl");
    pub const PICKUP_LISTING_DOMAIN: &str = include_str!("../../data/listings/pickup_object.pddl");
    pub const EGG_PROBLEM: &str = include_str!("../../data/listings/prepare_plate_with_egg.pddl");

    /// Looks up a bundled domain source by name.
    pub fn domain_source(name: &str) -> Option<&'static str> {
        match name.to_ascii_lowercase().as_str() {
            "household" => Some(HOUSEHOLD_DOMAIN),
            "robot2" => Some(ROBOT2_DOMAIN),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pos_of(d: &Diagnostic) -> Pos {
        match d.location {
            Location::Span(p) => p,
            Location::Path(_) => panic!("expected a source position"),
        }
    }

    #[test]
    fn pickup_listing_parses_verbatim() {
        let d = parse_domain(bundled::PICKUP_LISTING_DOMAIN).unwrap().value;
        assert_eq!(d.actions.len(), 1);
        let a = &d.actions[0];
        assert_eq!(a.name.as_str(), "PickupObject");
        let vars: Vec<&str> = a.params.iter().map(|p| p.var.as_str()).collect();
        assert_eq!(vars, ["robot", "object", "location"]);
        let pre: Vec<String> = a.precondition.iter().map(|l| l.to_string()).collect();
        assert_eq!(pre, ["(at-location ?object ?location)", "(at ?robot ?location)", "(not (inaction ?robot))"]);
        let eff: Vec<String> = a.effect.iter().map(|l| l.to_string()).collect();
        assert_eq!(eff, ["(holding ?robot ?object)", "(not (inaction ?robot))"]);
        assert_eq!(a.cost, 1.0);
    }

    #[test]
    fn minimal_domain() {
        let d = parse_domain("(define (domain d) (:types robot object))").unwrap().value;
        assert_eq!(d.name.as_str(), "d");
        assert_eq!(d.types.len(), 2);
        assert!(d.predicates.is_empty() && d.actions.is_empty());
    }

    #[test]
    fn undeclared_predicate_located_at_token() {
        let src = "(define (domain d) (:types robot object)\n  (:predicates (holding ?r - robot))\n  (:action A :parameters (?r - robot)\n    :precondition (holding2 ?r) :effect (holding ?r)))";
        let err = parse_domain(src).unwrap_err();
        let e = err.errors().next().unwrap();
        assert_eq!(e.message, "undeclared predicate holding2");
        assert_eq!(pos_of(e), Pos { line: 4, col: 20 });
    }

    #[test]
    fn unbound_and_undeclared_type() {
        let src = "(define (domain d) (:types robot)
          (:predicates (p ?r - robot))
          (:action A :parameters (?r - robot ?x - thing) :precondition (p ?z) :effect (p ?r)))";
        let err = parse_domain(src).unwrap_err();
        let msgs: Vec<&str> = err.errors().map(|d| d.message.as_str()).collect();
        assert!(msgs.contains(&"undeclared type thing"), "{msgs:?}");
        assert!(msgs.contains(&"unbound variable ?z"), "{msgs:?}");
    }

    #[test]
    fn contradictory_effect_rejected() {
        let src = "(define (domain d) (:types robot)
          (:predicates (p ?r - robot))
          (:action A :parameters (?r - robot) :precondition (and) :effect (and (p ?r) (not (p ?r)))))";
        assert!(parse_domain(src).is_err());
    }

    #[test]
    fn unsupported_constructs_rejected() {
        for src in [
            "(define (domain d) (:requirements :adl) (:types robot))",
            "(define (domain d) (:types robot) (:functions (f)))",
            "(define (domain d) (:types robot) (:predicates (p ?r - robot)) (:action A :parameters (?r - robot) :precondition (or (p ?r) (p ?r)) :effect (p ?r)))",
            "(define (domain d) (:types a - b))",
        ] {
            assert!(parse_domain(src).is_err(), "{src}");
        }
    }

    #[test]
    fn egg_problem_parses_with_warning() {
        let d = parse_domain(bundled::ROBOT2_DOMAIN).unwrap().value;
        let parsed = parse_problem(bundled::EGG_PROBLEM, &d).unwrap();
        let p = parsed.value;
        assert_eq!(p.objects.len(), 5);
        assert_eq!(p.init.len(), 3);
        assert_eq!(p.goal.len(), 3);
        assert_eq!(p.goal[0].to_string(), "(at-location Egg Plate)");
        assert!(p.goal[0].positive && !p.goal[1].positive && !p.goal[2].positive);
        let warnings: Vec<&str> = parsed.warnings.warnings().map(|w| w.message.as_str()).collect();
        assert!(warnings.iter().any(|w| w.contains("negative literal (not (inaction Robot2))")));
        assert!(warnings.iter().any(|w| w.contains("InitLoaction")));
        assert!(!check_well_formed(&d, &p).has_errors());
    }

    #[test]
    fn empty_goal() {
        let d = parse_domain(bundled::ROBOT2_DOMAIN).unwrap().value;
        let src = "(define (problem p) (:domain robot2) (:objects R - robot) (:init) (:goal (and)))";
        let p = parse_problem(src, &d).unwrap().value;
        assert!(p.goal.is_empty());
        assert!(render_problem(&p).contains("(:goal (and))"));
    }

    #[test]
    fn problem_errors() {
        let d = parse_domain(bundled::ROBOT2_DOMAIN).unwrap().value;
        let bad_type = "(define (problem p) (:domain robot2) (:objects Egg - food) (:init) (:goal (and)))";
        let err = parse_problem(bad_type, &d).unwrap_err();
        assert!(err.errors().any(|e| e.message == "undeclared type food"));

        let mismatch = "(define (problem p) (:domain kitchen) (:objects) (:init) (:goal (and)))";
        assert!(parse_problem(mismatch, &d).unwrap_err().errors().any(|e| e.message.starts_with("domain name mismatch")));

        let arity = "(define (problem p) (:domain robot2) (:objects R - robot E - object) (:init (holding R)) (:goal (and)))";
        assert!(parse_problem(arity, &d).unwrap_err().errors().any(|e| e.message.starts_with("arity mismatch")));

        let typed = "(define (problem p) (:domain robot2) (:objects R - robot E - object) (:init (holding E R)) (:goal (and)))";
        assert!(parse_problem(typed, &d).unwrap_err().errors().any(|e| e.message.starts_with("type mismatch")));
    }

    #[test]
    fn goal_with_undeclared_object() {
        let d = parse_domain(bundled::ROBOT2_DOMAIN).unwrap().value;
        let mut p = parse_problem(bundled::EGG_PROBLEM, &d).unwrap().value;
        p.goal.push(GroundLiteral { atom: GroundAtom::new("holding", &["Robot2", "Knife"]), positive: true });
        let diags = check_well_formed(&d, &p);
        let e = diags.errors().next().unwrap();
        assert_eq!(e.message, "undeclared object Knife");
        assert_eq!(e.location, Location::Path("goal[3].args[1]".into()));
    }

    #[test]
    fn case_insensitive_matching() {
        let d = parse_domain(bundled::ROBOT2_DOMAIN).unwrap().value;
        let src = "(DEFINE (PROBLEM p) (:DOMAIN ROBOT2) (:OBJECTS r - ROBOT e - OBJECT) (:INIT (AT R E)) (:GOAL (HOLDING R e)))";
        let p = parse_problem(src, &d).unwrap().value;
        assert_eq!(p.goal[0].atom.args[0].as_str(), "R");
    }

    #[test]
    fn render_round_trips_bundled() {
        for src in [bundled::HOUSEHOLD_DOMAIN, bundled::ROBOT2_DOMAIN, bundled::PICKUP_LISTING_DOMAIN] {
            let d = parse_domain(src).unwrap().value;
            let again = parse_domain(&render_domain(&d)).unwrap().value;
            assert_eq!(d, again);
            assert_eq!(render_domain(&d), render_domain(&again));
        }
        let d = parse_domain(bundled::ROBOT2_DOMAIN).unwrap().value;
        let p = parse_problem(bundled::EGG_PROBLEM, &d).unwrap().value;
        assert_eq!(parse_problem(&render_problem(&p), &d).unwrap().value, p);
    }

    #[test]
    fn deterministic() {
        let a = parse_domain(bundled::HOUSEHOLD_DOMAIN).unwrap().value;
        let b = parse_domain(bundled::HOUSEHOLD_DOMAIN).unwrap().value;
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }
}
