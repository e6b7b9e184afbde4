//! Symbolic plan execution against ground action semantics.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::ground::{ActionCall, AtomId, GroundAction, GroundTask, State};
use crate::pddl::GroundLiteral;
use crate::search::Plan;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
#[error("unmet precondition on atom {atom:?} (required {})", if *.positive { "true" } else { "false" })]
pub struct UnmetPrecondition {
    pub atom: AtomId,
    /// Polarity the precondition required.
    pub positive: bool,
}

/// Applies one action: deletes first, then adds.
pub fn apply(state: &State, action: &GroundAction) -> Result<State, UnmetPrecondition> {
    if let Some(p) = action.pre_pos.iter().find(|p| !state.contains(**p)) {
        return Err(UnmetPrecondition { atom: *p, positive: true });
    }
    if let Some(n) = action.pre_neg.iter().find(|n| state.contains(**n)) {
        return Err(UnmetPrecondition { atom: *n, positive: false });
    }
    let mut next = state.clone();
    for d in &action.del {
        next.remove(*d);
    }
    for a in &action.add {
        next.insert(*a);
    }
    Ok(next)
}

pub fn goal_satisfied(state: &State, goal_pos: &[AtomId], goal_neg: &[AtomId]) -> bool {
    goal_pos.iter().all(|g| state.contains(*g)) && !goal_neg.iter().any(|g| state.contains(*g))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Valid,
    Invalid,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum FailureReason {
    UnmetPrecondition(GroundLiteral),
    GoalUnsatisfied(Vec<GroundLiteral>),
    UnknownAction(ActionCall),
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FailureReason::UnmetPrecondition(l) => write!(f, "unmet precondition {l}"),
            FailureReason::GoalUnsatisfied(ls) => {
                let s: Vec<String> = ls.iter().map(|l| l.to_string()).collect();
                write!(f, "goal not satisfied, missing {}", s.join(" "))
            }
            FailureReason::UnknownAction(c) => write!(f, "unknown action {}", c.to_sexpr()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub verdict: Verdict,
    pub failing_step: Option<usize>,
    pub reason: Option<FailureReason>,
    /// Number of steps applied successfully.
    pub executed: usize,
    pub final_state: State,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.verdict == Verdict::Valid
    }

    pub fn render(&self, plan_len: usize) -> String {
        match (&self.verdict, self.failing_step, &self.reason) {
            (Verdict::Valid, ..) => format!("Plan valid: {plan_len} steps executed, goal satisfied\n"),
            (Verdict::Invalid, Some(i), Some(r)) => format!("Plan invalid at step {i}: {r}\n"),
            (Verdict::Invalid, None, Some(r)) => format!("Plan invalid after {} steps: {r}\n", self.executed),
            (Verdict::Invalid, _, None) => "Plan invalid\n".to_string(),
        }
    }

    /// Machine-readable report with atoms rendered by name.
    pub fn to_json(&self, task: &GroundTask) -> serde_json::Value {
        serde_json::json!({
            "verdict": self.verdict,
            "failing_step": self.failing_step,
            "reason": self.reason.as_ref().map(|r| r.to_string()),
            "executed": self.executed,
            "final_state": self.final_state.iter().map(|a| task.atom(a).to_string()).collect::<Vec<_>>(),
        })
    }
}

fn literal(task: &GroundTask, atom: AtomId, positive: bool) -> GroundLiteral {
    GroundLiteral { atom: task.atom(atom).clone(), positive }
}

fn missing_goals(task: &GroundTask, state: &State) -> Vec<GroundLiteral> {
    let pos = task.goal_pos().iter().filter(|g| !state.contains(**g)).map(|g| literal(task, *g, true));
    let neg = task.goal_neg().iter().filter(|g| state.contains(**g)).map(|g| literal(task, *g, false));
    pos.chain(neg).collect()
}

fn fold<I>(task: &GroundTask, steps: I) -> ValidationReport
where
    I: IntoIterator<Item = Result<usize, ActionCall>>,
{
    let mut state = task.init().clone();
    let mut executed = 0;
    for (i, step) in steps.into_iter().enumerate() {
        let reason = match step {
            Ok(idx) => match task.actions().get(idx) {
                Some(action) => match apply(&state, action) {
                    Ok(next) => {
                        state = next;
                        executed += 1;
                        continue;
                    }
                    Err(e) => FailureReason::UnmetPrecondition(literal(task, e.atom, e.positive)),
                },
                None => FailureReason::UnknownAction(ActionCall::new(&format!("#{idx}"), &[])),
            },
            Err(call) => FailureReason::UnknownAction(call),
        };
        return ValidationReport {
            verdict: Verdict::Invalid,
            failing_step: Some(i),
            reason: Some(reason),
            executed,
            final_state: state,
        };
    }
    let missing = missing_goals(task, &state);
    let (verdict, reason) = if missing.is_empty() {
        (Verdict::Valid, None)
    } else {
        (Verdict::Invalid, Some(FailureReason::GoalUnsatisfied(missing)))
    };
    ValidationReport { verdict, failing_step: None, reason, executed, final_state: state }
}

/// Runs `plan` from the task's initial state.
pub fn validate_plan(task: &GroundTask, plan: &Plan) -> ValidationReport {
    fold(task, plan.steps.iter().map(|a| Ok(a.index())))
}

/// Like [`validate_plan`] for plans given by action name; names that do
/// not resolve in the task are reported as unknown actions.
pub fn validate_calls(task: &GroundTask, calls: &[ActionCall]) -> ValidationReport {
    fold(task, calls.iter().map(|c| task.find_action(c).map(|a| a.index()).ok_or_else(|| c.clone())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ground::{ground, ActionId};
    use crate::pddl::{bundled, parse_domain, parse_problem, GroundAtom};
    use crate::search::resolve_calls;

    fn egg() -> GroundTask {
        let d = parse_domain(bundled::ROBOT2_DOMAIN).unwrap().value;
        let p = parse_problem(bundled::EGG_PROBLEM, &d).unwrap().value;
        ground(&d, &p).unwrap()
    }

    fn calls() -> Vec<ActionCall> {
        vec![
            ActionCall::new("GoToObject", &["Robot2", "Location1"]),
            ActionCall::new("PickupObject", &["Robot2", "Egg", "Location1"]),
            ActionCall::new("GoToObject", &["Robot2", "Plate"]),
            ActionCall::new("PutObject", &["Robot2", "Egg", "Plate"]),
        ]
    }

    #[test]
    fn egg_plan_valid() {
        let t = egg();
        let r = validate_plan(&t, &resolve_calls(&t, &calls()).unwrap());
        assert!(r.is_valid());
        assert_eq!(r.executed, 4);
        assert!(r.final_state.contains(t.atom_id(&GroundAtom::new("at-location", &["Egg", "Plate"])).unwrap()));
    }

    #[test]
    fn swapped_first_steps_fail_at_zero() {
        let t = egg();
        let mut c = calls();
        c.swap(0, 1);
        let r = validate_calls(&t, &c);
        assert_eq!(r.verdict, Verdict::Invalid);
        assert_eq!(r.failing_step, Some(0));
        let want = GroundLiteral { atom: GroundAtom::new("at", &["Robot2", "Location1"]), positive: true };
        assert_eq!(r.reason, Some(FailureReason::UnmetPrecondition(want)));
        assert_eq!(r.render(4), "Plan invalid at step 0: unmet precondition (at Robot2 Location1)\n");
    }

    #[test]
    fn empty_plan_reports_missing_goal() {
        let t = egg();
        let r = validate_calls(&t, &[]);
        assert_eq!(r.failing_step, None);
        match r.reason {
            Some(FailureReason::GoalUnsatisfied(m)) => assert_eq!(m.len(), 1),
            other => panic!("{other:?}"),
        }
        let trivial = t.with_goal(vec![], vec![]);
        assert!(validate_calls(&trivial, &[]).is_valid());
    }

    #[test]
    fn unknown_actions() {
        let t = egg();
        let r = validate_calls(&t, &[ActionCall::new("Fly", &["Robot2"])]);
        assert_eq!(r.reason, Some(FailureReason::UnknownAction(ActionCall::new("Fly", &["Robot2"]))));
        let r = validate_plan(&t, &Plan { steps: vec![ActionId(99_999)], cost: 1.0 });
        assert_eq!(r.failing_step, Some(0));
    }

    #[test]
    fn goal_checks_polarity() {
        let t = egg();
        let s = t.init().clone();
        assert!(goal_satisfied(&s, &[], &[]));
        let a = s.iter().next().unwrap();
        assert!(goal_satisfied(&s, &[a], &[]));
        assert!(!goal_satisfied(&s, &[], &[a]));
    }

    #[test]
    fn add_wins_over_delete() {
        let t = egg();
        let a = AtomId(0);
        let act = GroundAction::new(ActionCall::new("noop", &[]), vec![], vec![], vec![a], vec![a], 1.0);
        let out = apply(&t.empty_state(), &act).unwrap();
        assert!(out.contains(a));
    }
}
