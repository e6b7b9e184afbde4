//! Merging per-robot sub-plans into one timed multi-robot schedule.
//!
//! Every action takes one timestep. Steps of different robots that touch
//! the same object are serialized, lower subtask id and step index first.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decompose::{Allocation, Endpoint};
use crate::ground::ActionCall;
use crate::pddl::Name;

/// A validated plan for one robot's part of one subtask.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartPlan {
    pub subtask: u32,
    pub robot: Name,
    pub calls: Vec<ActionCall>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub subtask: u32,
    pub robot: Name,
    pub step: usize,
    pub call: ActionCall,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Sequence,
    Allocation,
    Robot,
    Conflict,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyGraph {
    pub nodes: Vec<Node>,
    /// `(from, to)` node indices with the rule that produced them.
    pub edges: BTreeMap<(usize, usize), EdgeKind>,
    /// Per robot, its nodes in execution order.
    pub robot_order: BTreeMap<Name, Vec<usize>>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CombineError {
    #[error("dependency cycle through steps {0:?}")]
    CyclicDependency(Vec<String>),
    #[error("step {0} must belong to exactly one robot sequence")]
    Unowned(String),
    #[error("no plan for subtask {subtask} on {robot}")]
    MissingPlan { subtask: u32, robot: Name },
}

impl DependencyGraph {
    pub fn preds(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.keys().filter(move |(_, b)| *b == v).map(|(a, _)| *a)
    }

    pub fn succs(&self, u: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.range((u, 0)..(u + 1, 0)).map(|((_, b), _)| *b)
    }

    pub fn reaches(&self, from: usize, to: usize) -> bool {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![from];
        while let Some(x) = stack.pop() {
            if x == to {
                return true;
            }
            if std::mem::replace(&mut seen[x], true) {
                continue;
            }
            stack.extend(self.succs(x));
        }
        false
    }

    /// A topological order, or the nodes left on a cycle.
    pub fn topological(&self) -> Result<Vec<usize>, Vec<usize>> {
        let n = self.nodes.len();
        let mut indeg = vec![0usize; n];
        for (_, b) in self.edges.keys() {
            indeg[*b] += 1;
        }
        let mut ready: BTreeSet<usize> = (0..n).filter(|v| indeg[*v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for w in self.succs(v).collect::<Vec<_>>() {
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    ready.insert(w);
                }
            }
        }
        if order.len() == n {
            Ok(order)
        } else {
            Err((0..n).filter(|v| indeg[*v] > 0).collect())
        }
    }

    fn label(&self, v: usize) -> String {
        let n = &self.nodes[v];
        format!("{}.{}#{} {}", n.subtask, n.robot, n.step, n.call)
    }
}

/// Object arguments of a call, robots excluded.
fn resources(call: &ActionCall, robots: &BTreeSet<Name>) -> BTreeSet<Name> {
    call.args.iter().filter(|a| !robots.contains(*a)).cloned().collect()
}

fn subtask_order(alloc: &Allocation) -> Vec<u32> {
    let ids: Vec<u32> = alloc.assignments.keys().copied().collect();
    let deps: Vec<(u32, u32)> = alloc
        .dependencies
        .iter()
        .filter(|d| d.from.subtask != d.to.subtask)
        .map(|d| (d.from.subtask, d.to.subtask))
        .collect();
    let mut done: Vec<u32> = Vec::new();
    while done.len() < ids.len() {
        let next = ids
            .iter()
            .find(|i| !done.contains(i) && deps.iter().all(|(a, b)| b != *i || done.contains(a) || !ids.contains(a)))
            .or_else(|| ids.iter().find(|i| !done.contains(i)))
            .copied()
            .expect("ids remain");
        done.push(next);
    }
    done
}

/// Builds the step graph: sub-plan order, allocation dependencies, each
/// robot's sequence across its parts, and conflict serialization.
pub fn build_dependency_graph(alloc: &Allocation, plans: &[PartPlan]) -> Result<DependencyGraph, CombineError> {
    let mut g = DependencyGraph::default();
    let robots: BTreeSet<Name> = plans.iter().map(|p| p.robot.clone()).chain(alloc.parts().map(|(_, a)| a.robot.clone())).collect();
    let mut part_nodes: BTreeMap<(u32, Name), Vec<usize>> = BTreeMap::new();
    for (subtask, a) in alloc.parts() {
        let plan = plans
            .iter()
            .find(|p| p.subtask == subtask && p.robot == a.robot)
            .ok_or_else(|| CombineError::MissingPlan { subtask, robot: a.robot.clone() })?;
        let ids: Vec<usize> = plan
            .calls
            .iter()
            .enumerate()
            .map(|(step, call)| {
                g.nodes.push(Node { subtask, robot: a.robot.clone(), step, call: call.clone() });
                g.nodes.len() - 1
            })
            .collect();
        for w in ids.windows(2) {
            g.edges.insert((w[0], w[1]), EdgeKind::Sequence);
        }
        part_nodes.insert((subtask, a.robot.clone()), ids);
    }

    let matching = |e: &Endpoint, last: bool| -> Vec<usize> {
        let parts: Vec<&Vec<usize>> = part_nodes
            .iter()
            .filter(|((s, r), ids)| *s == e.subtask && e.robot.as_ref().is_none_or(|x| x == r) && !ids.is_empty())
            .map(|(_, ids)| ids)
            .collect();
        parts
            .into_iter()
            .map(|ids| {
                let hit = |v: &&usize| e.action.as_ref().is_some_and(|c| &g.nodes[**v].call == c);
                let found = if last { ids.iter().rev().find(hit) } else { ids.iter().find(hit) };
                *found.unwrap_or(if last { ids.last().expect("non-empty") } else { &ids[0] })
            })
            .collect()
    };
    let mut alloc_edges = Vec::new();
    for d in &alloc.dependencies {
        for u in matching(&d.from, true) {
            for v in matching(&d.to, false) {
                if u != v {
                    alloc_edges.push((u, v));
                }
            }
        }
    }
    for e in alloc_edges {
        g.edges.entry(e).or_insert(EdgeKind::Allocation);
    }

    let order = subtask_order(alloc);
    for r in &robots {
        let mut seq: Vec<usize> = Vec::new();
        for s in &order {
            if let Some(ids) = part_nodes.get(&(*s, r.clone())) {
                if let (Some(prev), Some(first)) = (seq.last(), ids.first()) {
                    g.edges.entry((*prev, *first)).or_insert(EdgeKind::Robot);
                }
                seq.extend(ids);
            }
        }
        if !seq.is_empty() {
            g.robot_order.insert(r.clone(), seq);
        }
    }

    if let Err(cycle) = g.topological() {
        return Err(CombineError::CyclicDependency(cycle.iter().map(|v| g.label(*v)).collect()));
    }

    let res: Vec<BTreeSet<Name>> = g.nodes.iter().map(|n| resources(&n.call, &robots)).collect();
    let part_rank: BTreeMap<(u32, Name), usize> = part_nodes.keys().enumerate().map(|(i, k)| (k.clone(), i)).collect();
    let key = |v: usize| {
        let n = &g.nodes[v];
        (n.subtask, n.step, part_rank[&(n.subtask, n.robot.clone())])
    };
    let mut ranked: Vec<usize> = (0..g.nodes.len()).collect();
    ranked.sort_by_key(|v| key(*v));
    for (i, &u) in ranked.iter().enumerate() {
        for &v in &ranked[i + 1..] {
            if g.nodes[u].robot == g.nodes[v].robot || res[u].is_disjoint(&res[v]) {
                continue;
            }
            if !g.reaches(u, v) && !g.reaches(v, u) {
                g.edges.insert((u, v), EdgeKind::Conflict);
            }
        }
    }
    Ok(g)
}

/// Start timestep of every node under greedy list scheduling: at each
/// step each robot, in id order, starts its next step if all its
/// predecessors have finished.
pub fn schedule_nodes(g: &DependencyGraph) -> Result<Vec<u32>, CombineError> {
    if let Err(cycle) = g.topological() {
        return Err(CombineError::CyclicDependency(cycle.iter().map(|v| g.label(*v)).collect()));
    }
    let n = g.nodes.len();
    let preds: Vec<Vec<usize>> = (0..n).map(|v| g.preds(v).collect()).collect();
    let mut start: Vec<Option<u32>> = vec![None; n];
    let mut cursor: BTreeMap<&Name, usize> = g.robot_order.keys().map(|r| (r, 0)).collect();
    let mut owned = vec![0u8; n];
    for v in g.robot_order.values().flatten() {
        owned[*v] += 1;
    }
    if let Some(v) = owned.iter().position(|c| *c != 1) {
        return Err(CombineError::Unowned(g.label(v)));
    }
    let mut placed = 0;
    let mut t = 0u32;
    let mut idle = 0;
    while placed < n {
        let before = placed;
        for (r, seq) in &g.robot_order {
            let c = cursor.get_mut(r).expect("robot present");
            let Some(&v) = seq.get(*c) else { continue };
            if preds[v].iter().all(|p| start[*p].is_some_and(|s| s < t)) {
                start[v] = Some(t);
                *c += 1;
                placed += 1;
            }
        }
        t += 1;
        idle = if placed == before { idle + 1 } else { 0 };
        if idle > 1 {
            let heads = g.robot_order.iter().filter_map(|(r, seq)| seq.get(cursor[r])).map(|v| g.label(*v)).collect();
            return Err(CombineError::CyclicDependency(heads));
        }
    }
    Ok(start.into_iter().map(|s| s.expect("all placed")).collect())
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Row {
    pub start: u32,
    pub robot: Name,
    pub call: ActionCall,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    /// Sorted by `(start, robot)`.
    pub rows: Vec<Row>,
}

impl Schedule {
    pub fn new(mut rows: Vec<Row>) -> Self {
        rows.sort_by(|a, b| (a.start, &a.robot).cmp(&(b.start, &b.robot)));
        Schedule { rows }
    }

    pub fn makespan(&self) -> u32 {
        self.rows.iter().map(|r| r.start + 1).max().unwrap_or(0)
    }

    pub fn calls(&self) -> impl Iterator<Item = &ActionCall> {
        self.rows.iter().map(|r| &r.call)
    }
}

pub fn schedule(g: &DependencyGraph) -> Result<Schedule, CombineError> {
    let starts = schedule_nodes(g)?;
    Ok(Schedule::new(
        g.nodes
            .iter()
            .zip(starts)
            .map(|(n, start)| Row { start, robot: n.robot.clone(), call: n.call.clone() })
            .collect(),
    ))
}

/// Text form of a schedule, one `t=<step> <robot> <Action>(<args,...>)`
/// record per row.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExecutionTrace(pub Schedule);

impl fmt::Display for ExecutionTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.0.rows {
            let args: Vec<&str> = r.call.args.iter().map(Name::as_str).collect();
            writeln!(f, "t={} {} {}({})", r.start, r.robot, r.call.name, args.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("trace line {line}: {message}")]
pub struct TraceParseError {
    pub line: usize,
    pub message: String,
}

fn symbol_ok(s: &str) -> bool {
    !s.is_empty() && !s.contains(|c: char| c.is_whitespace() || "(),=".contains(c))
}

impl FromStr for ExecutionTrace {
    type Err = TraceParseError;

    fn from_str(text: &str) -> Result<Self, TraceParseError> {
        let mut rows = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: &str| TraceParseError { line: i + 1, message: format!("{m}: {line:?}") };
            let rest = line.strip_prefix("t=").ok_or_else(|| err("expected t=<step>"))?;
            let (t, rest) = rest.split_once(' ').ok_or_else(|| err("missing robot"))?;
            let start: u32 = t.parse().map_err(|_| err("bad timestep"))?;
            let (robot, action) = rest.trim_start().split_once(' ').ok_or_else(|| err("missing action"))?;
            let (name, args) = action.trim().strip_suffix(')').and_then(|a| a.split_once('(')).ok_or_else(|| err("expected Action(args)"))?;
            let args: Vec<&str> = if args.is_empty() { vec![] } else { args.split(',').collect() };
            if !symbol_ok(robot) || !symbol_ok(name) || !args.iter().all(|a| symbol_ok(a)) {
                return Err(err("bad symbol"));
            }
            rows.push(Row { start, robot: Name::from(robot), call: ActionCall::new(name, &args) });
        }
        Ok(ExecutionTrace(Schedule::new(rows)))
    }
}

pub fn to_trace(s: &Schedule) -> ExecutionTrace {
    ExecutionTrace(s.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decompose::{AllocationSource, Assignment, Dependency};

    fn call(s: &str) -> ActionCall {
        s.parse().unwrap()
    }

    fn part(subtask: u32, robot: &str, calls: &[&str]) -> PartPlan {
        PartPlan { subtask, robot: Name::from(robot), calls: calls.iter().map(|c| call(c)).collect() }
    }

    fn alloc(parts: &[(u32, &str)], deps: Vec<Dependency>) -> Allocation {
        let mut assignments: BTreeMap<u32, Vec<Assignment>> = BTreeMap::new();
        for (s, r) in parts {
            assignments.entry(*s).or_default().push(Assignment { robot: Name::from(*r), skills: vec![], steps: vec![] });
        }
        Allocation { assignments, dependencies: deps, source: AllocationSource::Greedy }
    }

    #[test]
    fn desk_conflict_delays_third_robot() {
        let plans = vec![
            part(1, "Robot1", &["GoToObject(Robot1, LightSwitch)", "SwitchOff(Robot1, LightSwitch)"]),
            part(2, "Robot2", &["GoToObject(Robot2, Desk)", "PickupObject(Robot2, Phone, Desk)", "GoToObject(Robot2, Bed)", "PutObject(Robot2, Phone, Bed)"]),
            part(3, "Robot3", &["GoToObject(Robot3, Desk)", "PickupObject(Robot3, Book, Desk)", "GoToObject(Robot3, Shelf)", "PutObject(Robot3, Book, Shelf)"]),
        ];
        let a = alloc(&[(1, "Robot1"), (2, "Robot2"), (3, "Robot3")], vec![]);
        let g = build_dependency_graph(&a, &plans).unwrap();
        let s = schedule(&g).unwrap();
        let first = |r: &str| s.rows.iter().filter(|x| x.robot.eq_str(r)).map(|x| x.start).min().unwrap();
        assert_eq!(first("Robot1"), 0);
        assert_eq!(first("Robot2"), 0);
        assert_eq!(first("Robot3"), 2);
        assert_eq!(s.makespan(), 6);
    }

    #[test]
    fn independent_parts_run_in_parallel() {
        let plans = vec![
            part(1, "A", &["m(A, x1)", "m(A, x2)", "m(A, x3)", "m(A, x4)", "m(A, x5)"]),
            part(2, "B", &["m(B, y1)", "m(B, y2)", "m(B, y3)"]),
            part(3, "C", &["m(C, z1)", "m(C, z2)", "m(C, z3)", "m(C, z4)"]),
        ];
        let g = build_dependency_graph(&alloc(&[(1, "A"), (2, "B"), (3, "C")], vec![]), &plans).unwrap();
        assert!(g.edges.values().all(|k| *k == EdgeKind::Sequence));
        assert_eq!(schedule(&g).unwrap().makespan(), 5);
    }

    #[test]
    fn allocation_edge_maps_to_matching_steps() {
        let plans = vec![
            part(1, "Robot1", &["GoToObject(Robot1, Drawer)", "OpenObject(Robot1, Drawer)"]),
            part(1, "Robot2", &["GoToObject(Robot2, Table)", "PickupObject(Robot2, Keys, Table)", "GoToObject(Robot2, Drawer2)", "PutObject(Robot2, Keys, Drawer)"]),
        ];
        let dep = Dependency {
            from: Endpoint { subtask: 1, robot: Some(Name::from("Robot1")), action: Some(call("OpenObject(Robot1, Drawer)")) },
            to: Endpoint { subtask: 1, robot: Some(Name::from("Robot2")), action: Some(call("PutObject(Robot2, Keys, Drawer)")) },
        };
        let g = build_dependency_graph(&alloc(&[(1, "Robot2"), (1, "Robot1")], vec![dep]), &plans).unwrap();
        let s = schedule_nodes(&g).unwrap();
        let open = g.nodes.iter().position(|n| n.call.name.eq_str("OpenObject")).unwrap();
        let put = g.nodes.iter().position(|n| n.call.name.eq_str("PutObject")).unwrap();
        assert_eq!(g.edges.get(&(open, put)), Some(&EdgeKind::Allocation));
        assert!(s[put] > s[open]);
    }

    #[test]
    fn contradictory_dependencies_are_cyclic() {
        let plans = vec![part(1, "A", &["m(A, x)"]), part(2, "B", &["m(B, y)"])];
        let e = |a: u32, b: u32| Dependency {
            from: Endpoint { subtask: a, robot: None, action: None },
            to: Endpoint { subtask: b, robot: None, action: None },
        };
        let r = build_dependency_graph(&alloc(&[(1, "A"), (2, "B")], vec![e(1, 2), e(2, 1)]), &plans);
        assert!(matches!(r, Err(CombineError::CyclicDependency(_))));
    }

    #[test]
    fn trace_round_trip() {
        assert_eq!(to_trace(&Schedule::default()).to_string(), "");
        let s = Schedule::new(vec![
            Row { start: 1, robot: Name::from("Robot2"), call: call("PickupObject(Robot2, Egg, Location1)") },
            Row { start: 0, robot: Name::from("Robot2"), call: call("GoToObject(Robot2, Location1)") },
        ]);
        let text = to_trace(&s).to_string();
        assert_eq!(text, "t=0 Robot2 GoToObject(Robot2,Location1)\nt=1 Robot2 PickupObject(Robot2,Egg,Location1)\n");
        assert_eq!(text.parse::<ExecutionTrace>().unwrap().0, s);
        assert!("t=x R A()".parse::<ExecutionTrace>().is_err());
    }
}
