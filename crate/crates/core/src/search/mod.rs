//! Forward state-space search over a [`GroundTask`].
//!
//! Satisficing mode runs greedy best-first search, optimal mode runs A* with
//! `h_max`. Both keep a closed set over full states and break ties by
//! insertion order.

mod heuristic;

use std::cmp::Reverse;
use std::collections::hash_map::Entry;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ground::{relaxed_reachability, ActionCall, ActionId, GroundTask, State};
use crate::validate::apply;

pub use heuristic::{extract_relaxed_plan, h_add, h_max, HeuristicValue, RelaxedUnreachable, Relaxation};

pub const DEFAULT_EXPANSION_LIMIT: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Satisficing,
    Optimal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeuristicKind {
    HAdd,
    HMax,
    HFf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostModel {
    /// Every action costs 1.
    Unit,
    /// Use the cost stored on each ground action.
    Action,
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "satisficing" => Ok(Mode::Satisficing),
            "optimal" => Ok(Mode::Optimal),
            _ => Err(format!("unknown mode {s}")),
        }
    }
}

impl FromStr for HeuristicKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "h_add" | "hadd" | "add" => Ok(HeuristicKind::HAdd),
            "h_max" | "hmax" | "max" => Ok(HeuristicKind::HMax),
            "h_ff" | "hff" | "ff" => Ok(HeuristicKind::HFf),
            _ => Err(format!("unknown heuristic {s}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub mode: Mode,
    pub heuristic: HeuristicKind,
    pub max_expansions: usize,
    pub cost_model: CostModel,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            mode: Mode::Satisficing,
            heuristic: HeuristicKind::HFf,
            max_expansions: DEFAULT_EXPANSION_LIMIT,
            cost_model: CostModel::Unit,
        }
    }
}

impl SearchConfig {
    pub fn optimal() -> Self {
        SearchConfig { mode: Mode::Optimal, heuristic: HeuristicKind::HMax, ..Default::default() }
    }

    pub fn with_limit(mut self, max_expansions: usize) -> Self {
        self.max_expansions = max_expansions;
        self
    }

    pub fn check(&self) -> Result<(), SearchError> {
        if self.mode == Mode::Optimal && self.heuristic != HeuristicKind::HMax {
            return Err(SearchError::InadmissibleHeuristic(self.heuristic));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum SearchError {
    #[error("no plan exists: the reachable state space was exhausted")]
    Unsolvable,
    #[error("expansion limit of {limit} reached")]
    ResourceLimit { limit: usize },
    #[error("optimal mode needs an admissible heuristic, got {0:?}")]
    InadmissibleHeuristic(HeuristicKind),
}

/// A totally ordered plan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub steps: Vec<ActionId>,
    pub cost: f64,
}

impl Plan {
    pub fn from_steps(task: &GroundTask, steps: Vec<ActionId>) -> Self {
        let cost = steps.iter().map(|a| task.action(*a).cost).sum();
        Plan { steps, cost }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn calls(&self, task: &GroundTask) -> Vec<ActionCall> {
        self.steps.iter().map(|a| task.action(*a).call.clone()).collect()
    }

    /// One `<index>: (<Action> <args>)` line per step, then `; cost = N`.
    pub fn render(&self, task: &GroundTask) -> String {
        render_calls(&self.calls(task), self.cost)
    }
}

pub fn render_calls(calls: &[ActionCall], cost: f64) -> String {
    let mut out = String::new();
    for (i, c) in calls.iter().enumerate() {
        out.push_str(&format!("{i}: {}\n", c.to_sexpr()));
    }
    out.push_str(&format!("; cost = {cost}\n"));
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("plan line {line}: {message}")]
pub struct PlanParseError {
    pub line: usize,
    pub message: String,
}

/// Reads plan text. Accepts indexed lines, bare s-expressions and the
/// `Name(a, b)` form; `;` starts a comment.
pub fn parse_plan_text(text: &str) -> Result<Vec<ActionCall>, PlanParseError> {
    let mut calls = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split(';').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let body = match line.split_once(':') {
            Some((idx, rest)) if idx.trim().chars().all(|c| c.is_ascii_digit()) => rest.trim(),
            _ => line,
        };
        let call = body
            .parse::<ActionCall>()
            .map_err(|e| PlanParseError { line: n + 1, message: e.to_string() })?;
        calls.push(call);
    }
    Ok(calls)
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("plan step {step} does not resolve: unknown action {call}")]
pub struct UnresolvedCall {
    pub step: usize,
    pub call: String,
}

/// Resolves named calls to action ids, as needed for [`crate::validate::validate_plan`].
pub fn resolve_calls(task: &GroundTask, calls: &[ActionCall]) -> Result<Plan, UnresolvedCall> {
    let steps = calls
        .iter()
        .enumerate()
        .map(|(i, c)| task.find_action(c).ok_or_else(|| UnresolvedCall { step: i, call: c.to_sexpr() }))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Plan::from_steps(task, steps))
}

struct Node {
    state: State,
    parent: Option<(usize, ActionId)>,
    g: f64,
}

fn trace(nodes: &[Node], mut at: usize) -> Vec<ActionId> {
    let mut steps = Vec::new();
    while let Some((p, a)) = nodes[at].parent {
        steps.push(a);
        at = p;
    }
    steps.reverse();
    steps
}

fn is_goal(task: &GroundTask, s: &State) -> bool {
    crate::validate::goal_satisfied(s, task.goal_pos(), task.goal_neg())
}

/// Finds a plan for `task` under `config`.
pub fn plan(task: &GroundTask, config: &SearchConfig) -> Result<Plan, SearchError> {
    config.check()?;
    let costed;
    let task = match config.cost_model {
        CostModel::Action => task,
        CostModel::Unit => {
            costed = unit_costs(task);
            &costed
        }
    };
    if !relaxed_reachability(task).goal_reachable(task) {
        return Err(SearchError::Unsolvable);
    }
    let relax = Relaxation::new(task);
    let eval = |s: &State| match config.heuristic {
        HeuristicKind::HAdd => relax.h_add(s),
        HeuristicKind::HMax => relax.h_max(s),
        HeuristicKind::HFf => relax.h_ff(s),
    };
    let steps = match config.mode {
        Mode::Satisficing => gbfs(task, config.max_expansions, eval)?,
        Mode::Optimal => astar(task, config.max_expansions, eval)?,
    };
    Ok(Plan::from_steps(task, steps))
}

fn unit_costs(task: &GroundTask) -> GroundTask {
    if task.actions().iter().all(|a| a.cost == 1.0) {
        return task.clone();
    }
    let mut t = task.clone();
    t.set_unit_costs();
    t
}

fn successors<'t>(task: &'t GroundTask, s: &'t State) -> impl Iterator<Item = (ActionId, State)> + 't {
    task.actions()
        .iter()
        .enumerate()
        .filter_map(move |(i, a)| apply(s, a).ok().map(|n| (ActionId(i as u32), n)))
}

fn gbfs(task: &GroundTask, limit: usize, eval: impl Fn(&State) -> HeuristicValue) -> Result<Vec<ActionId>, SearchError> {
    let init = task.init().clone();
    if eval(&init).is_infinite() {
        return Err(SearchError::Unsolvable);
    }
    let mut nodes = vec![Node { state: init.clone(), parent: None, g: 0.0 }];
    let mut seen: HashMap<State, ()> = HashMap::from([(init, ())]);
    let mut open = BinaryHeap::new();
    open.push(Reverse((HeuristicValue::ZERO, 0usize)));
    let mut expansions = 0;
    while let Some(Reverse((_, id))) = open.pop() {
        if is_goal(task, &nodes[id].state) {
            return Ok(trace(&nodes, id));
        }
        if expansions >= limit {
            return Err(SearchError::ResourceLimit { limit });
        }
        expansions += 1;
        let state = nodes[id].state.clone();
        for (a, next) in successors(task, &state) {
            if seen.insert(next.clone(), ()).is_some() {
                continue;
            }
            let h = eval(&next);
            if h.is_infinite() {
                continue;
            }
            let g = nodes[id].g + task.action(a).cost;
            nodes.push(Node { state: next, parent: Some((id, a)), g });
            // node ids grow monotonically, giving FIFO among equal h
            open.push(Reverse((h, nodes.len() - 1)));
        }
    }
    Err(SearchError::Unsolvable)
}

fn astar(task: &GroundTask, limit: usize, eval: impl Fn(&State) -> HeuristicValue) -> Result<Vec<ActionId>, SearchError> {
    let init = task.init().clone();
    let h0 = eval(&init);
    if h0.is_infinite() {
        return Err(SearchError::Unsolvable);
    }
    let mut nodes = vec![Node { state: init.clone(), parent: None, g: 0.0 }];
    let mut best: HashMap<State, f64> = HashMap::from([(init.clone(), 0.0)]);
    let mut hcache: HashMap<State, HeuristicValue> = HashMap::from([(init, h0)]);
    let mut open = BinaryHeap::new();
    open.push(Reverse((h0, 0usize)));
    let mut expansions = 0;
    while let Some(Reverse((_, id))) = open.pop() {
        let g = nodes[id].g;
        if best.get(&nodes[id].state).is_some_and(|b| *b < g) {
            continue;
        }
        if is_goal(task, &nodes[id].state) {
            return Ok(trace(&nodes, id));
        }
        if expansions >= limit {
            return Err(SearchError::ResourceLimit { limit });
        }
        expansions += 1;
        let state = nodes[id].state.clone();
        for (a, next) in successors(task, &state) {
            let g2 = g + task.action(a).cost;
            match best.entry(next.clone()) {
                Entry::Occupied(mut e) => {
                    if *e.get() <= g2 {
                        continue;
                    }
                    e.insert(g2);
                }
                Entry::Vacant(e) => {
                    e.insert(g2);
                }
            }
            let h = *hcache.entry(next.clone()).or_insert_with(|| eval(&next));
            if h.is_infinite() {
                continue;
            }
            nodes.push(Node { state: next, parent: Some((id, a)), g: g2 });
            open.push(Reverse((HeuristicValue(g2 + h.value()), nodes.len() - 1)));
        }
    }
    Err(SearchError::Unsolvable)
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("sketch step {step}: cannot resolve {symbol}")]
pub struct SketchError {
    pub step: usize,
    pub symbol: String,
}

/// Scores an action sequence under delete-relaxed semantics: the sum of
/// its costs if every step is relaxed-applicable in turn and the goal
/// holds at the end, INFINITY otherwise.
pub fn sketch_cost(sketch: &[ActionCall], task: &GroundTask) -> Result<HeuristicValue, SketchError> {
    let ids = sketch
        .iter()
        .enumerate()
        .map(|(i, c)| task.find_action(c).ok_or_else(|| SketchError { step: i, symbol: unresolved_symbol(task, c) }))
        .collect::<Result<Vec<_>, _>>()?;
    let mut reached = task.init().clone();
    let mut deleted = task.empty_state();
    let mut total = 0.0;
    for id in ids {
        let a = task.action(id);
        if !a.pre_pos.iter().all(|p| reached.contains(*p)) {
            return Ok(HeuristicValue::INFINITY);
        }
        for x in &a.add {
            reached.insert(*x);
        }
        for x in &a.del {
            deleted.insert(*x);
        }
        total += a.cost;
    }
    let pos_ok = task.goal_pos().iter().all(|g| reached.contains(*g));
    let neg_ok = task.goal_neg().iter().all(|g| !task.init().contains(*g) || deleted.contains(*g));
    Ok(if pos_ok && neg_ok { HeuristicValue(total) } else { HeuristicValue::INFINITY })
}

fn unresolved_symbol(task: &GroundTask, call: &ActionCall) -> String {
    let same_name: Vec<&ActionCall> = task.actions().iter().map(|a| &a.call).filter(|c| c.name == call.name).collect();
    if same_name.is_empty() {
        return call.name.to_string();
    }
    if !same_name.iter().any(|c| c.args.len() == call.args.len()) {
        return call.to_sexpr();
    }
    for (i, arg) in call.args.iter().enumerate() {
        if !same_name.iter().any(|c| c.args.get(i) == Some(arg)) {
            return arg.to_string();
        }
    }
    call.to_sexpr()
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Satisficing => "satisficing",
            Mode::Optimal => "optimal",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ground::{ground, AtomId, GroundAction};
    use crate::pddl::{bundled, parse_domain, parse_problem, GroundAtom};

    fn abc() -> GroundTask {
        let atoms = ["p", "q", "r"].iter().map(|n| GroundAtom::new(n, &[])).collect();
        let act = |n: &str, pre: Vec<u32>, add: u32| {
            GroundAction::new(ActionCall::new(n, &[]), pre.into_iter().map(AtomId).collect(), vec![], vec![AtomId(add)], vec![], 1.0)
        };
        let actions = vec![act("a", vec![], 0), act("b", vec![0], 1), act("c", vec![0], 2)];
        GroundTask::new(atoms, actions, &[], vec![AtomId(1), AtomId(2)], vec![]).unwrap()
    }

    fn egg() -> GroundTask {
        let d = parse_domain(bundled::ROBOT2_DOMAIN).unwrap().value;
        let p = parse_problem(bundled::EGG_PROBLEM, &d).unwrap().value;
        ground(&d, &p).unwrap()
    }

    fn egg_plan() -> Vec<ActionCall> {
        vec![
            ActionCall::new("GoToObject", &["Robot2", "Location1"]),
            ActionCall::new("PickupObject", &["Robot2", "Egg", "Location1"]),
            ActionCall::new("GoToObject", &["Robot2", "Plate"]),
            ActionCall::new("PutObject", &["Robot2", "Egg", "Plate"]),
        ]
    }

    #[test]
    fn abc_heuristics() {
        let t = abc();
        let s = t.empty_state();
        assert_eq!(h_max(&s, &t), HeuristicValue(2.0));
        assert_eq!(h_add(&s, &t), HeuristicValue(4.0));
        let (rp, cost) = extract_relaxed_plan(&s, &t).unwrap();
        assert_eq!(rp, vec![ActionId(0), ActionId(1), ActionId(2)]);
        assert_eq!(cost, 3.0);
    }

    #[test]
    fn unreachable_goal_is_infinite() {
        let t = abc().with_goal(vec![AtomId(1)], vec![]);
        let t = GroundTask::new(t.atoms().to_vec(), t.actions()[1..].to_vec(), &[], vec![AtomId(1)], vec![]).unwrap();
        assert!(h_max(&t.empty_state(), &t).is_infinite());
        assert_eq!(extract_relaxed_plan(&t.empty_state(), &t), Err(RelaxedUnreachable));
        assert_eq!(plan(&t, &SearchConfig::default()), Err(SearchError::Unsolvable));
    }

    #[test]
    fn goal_in_state_is_zero() {
        let t = abc();
        let s = t.state_from(&[AtomId(1), AtomId(2)]);
        assert_eq!(h_max(&s, &t), HeuristicValue::ZERO);
        assert_eq!(extract_relaxed_plan(&s, &t).unwrap(), (vec![], 0.0));
    }

    #[test]
    fn egg_optimal_plan() {
        let t = egg();
        let p = plan(&t, &SearchConfig::optimal()).unwrap();
        assert_eq!(p.cost, 4.0);
        assert!(crate::validate::validate_plan(&t, &p).is_valid());
        let (_, rc) = extract_relaxed_plan(t.init(), &t).unwrap();
        assert_eq!(rc, 4.0);
    }

    #[test]
    fn egg_satisficing_and_limit() {
        let t = egg();
        let p = plan(&t, &SearchConfig::default()).unwrap();
        assert!(crate::validate::validate_plan(&t, &p).is_valid());
        assert_eq!(
            plan(&t, &SearchConfig::default().with_limit(1)),
            Err(SearchError::ResourceLimit { limit: 1 })
        );
    }

    #[test]
    fn optimal_requires_h_max() {
        let cfg = SearchConfig { heuristic: HeuristicKind::HFf, ..SearchConfig::optimal() };
        assert!(matches!(plan(&abc(), &cfg), Err(SearchError::InadmissibleHeuristic(_))));
    }

    #[test]
    fn plan_text_round_trip() {
        let t = egg();
        let p = resolve_calls(&t, &egg_plan()).unwrap();
        let text = p.render(&t);
        assert!(text.starts_with("0: (GoToObject Robot2 Location1)\n"));
        assert!(text.ends_with("; cost = 4\n"));
        assert_eq!(parse_plan_text(&text).unwrap(), egg_plan());
    }

    #[test]
    fn sketch_scoring() {
        let t = egg();
        assert_eq!(sketch_cost(&egg_plan(), &t).unwrap(), HeuristicValue(4.0));
        assert!(sketch_cost(&egg_plan()[..3], &t).unwrap().is_infinite());
        let mut bad = egg_plan();
        bad[1] = ActionCall::new("PickupObject", &["Robot2", "Knife", "Location1"]);
        assert_eq!(sketch_cost(&bad, &t), Err(SketchError { step: 1, symbol: "Knife".into() }));
        let done = t.with_goal(vec![], vec![]);
        assert_eq!(sketch_cost(&[], &done).unwrap(), HeuristicValue::ZERO);
    }
}
