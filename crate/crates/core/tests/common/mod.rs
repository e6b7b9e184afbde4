//! Random task generators and independent reference implementations used
//! as oracles by the integration tests.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;

use teamplan::combine::{DependencyGraph, Node};
use teamplan::ground::{ActionCall, ActionId, AtomId, GroundAction, GroundTask};
use teamplan::pddl::{GroundAtom, Name};

pub type Facts = BTreeSet<u32>;

fn pick<R: Rng>(rng: &mut R, n: usize, lo: usize, hi: usize) -> Vec<AtomId> {
    let k = rng.gen_range(lo..=hi.min(n));
    let mut ids: Vec<u32> = (0..n as u32).collect();
    ids.shuffle(rng);
    ids.truncate(k);
    ids.into_iter().map(AtomId).collect()
}

/// A small random STRIPS task with negative preconditions and goals.
pub fn random_task<R: Rng>(rng: &mut R, max_atoms: usize, max_actions: usize) -> GroundTask {
    let n = rng.gen_range(2..=max_atoms);
    let m = rng.gen_range(1..=max_actions);
    let atoms: Vec<GroundAtom> = (0..n).map(|i| GroundAtom::new(&format!("p{i}"), &[])).collect();
    let actions = (0..m)
        .map(|j| {
            let pre = pick(rng, n, 0, 2);
            let neg: Vec<AtomId> = pick(rng, n, 0, 1).into_iter().filter(|a| !pre.contains(a)).collect();
            GroundAction::new(ActionCall::new(&format!("a{j}"), &[]), pre, neg, pick(rng, n, 1, 2), pick(rng, n, 0, 2), 1.0)
        })
        .collect();
    let init = pick(rng, n, 0, n / 2);
    let goal = pick(rng, n, 1, 3);
    let goal_neg: Vec<AtomId> =
        if rng.gen_bool(0.3) { pick(rng, n, 1, 1).into_iter().filter(|a| !goal.contains(a)).collect() } else { vec![] };
    GroundTask::new(atoms, actions, &init, goal, goal_neg).expect("ids in range")
}

pub fn facts_of(task: &GroundTask, s: &teamplan::ground::State) -> Facts {
    (0..task.num_atoms() as u32).filter(|i| s.contains(AtomId(*i))).collect()
}

pub fn to_state(task: &GroundTask, f: &Facts) -> teamplan::ground::State {
    let ids: Vec<AtomId> = f.iter().map(|i| AtomId(*i)).collect();
    task.state_from(&ids)
}

pub fn applicable(a: &GroundAction, s: &Facts) -> bool {
    a.pre_pos.iter().all(|p| s.contains(&p.0)) && !a.pre_neg.iter().any(|p| s.contains(&p.0))
}

/// Applies an action with plain set operations.
pub fn successor(a: &GroundAction, s: &Facts) -> Facts {
    let mut out: Facts = s.iter().filter(|x| !a.del.iter().any(|d| d.0 == **x)).copied().collect();
    out.extend(a.add.iter().map(|x| x.0));
    out
}

pub fn is_goal(task: &GroundTask, s: &Facts) -> bool {
    task.goal_pos().iter().all(|g| s.contains(&g.0)) && !task.goal_neg().iter().any(|g| s.contains(&g.0))
}

/// Outcome of the naive simulator: the failing step if any, the state
/// reached, and whether the goal holds at the end.
#[derive(Debug, PartialEq, Eq)]
pub struct SimOutcome {
    pub failing_step: Option<usize>,
    pub final_state: Facts,
    pub goal: bool,
}

pub fn simulate(task: &GroundTask, seq: &[usize]) -> SimOutcome {
    let mut s: Facts = facts_of(task, task.init());
    for (i, &a) in seq.iter().enumerate() {
        let act = &task.actions()[a];
        if !applicable(act, &s) {
            return SimOutcome { failing_step: Some(i), final_state: s, goal: false };
        }
        s = successor(act, &s);
    }
    let goal = is_goal(task, &s);
    SimOutcome { failing_step: None, final_state: s, goal }
}

/// Unit-cost distance to the goal from `start` by breadth-first search.
pub fn bfs_distance(task: &GroundTask, start: &Facts) -> Option<usize> {
    let mut seen: BTreeSet<Facts> = BTreeSet::new();
    let mut queue = VecDeque::from([(start.clone(), 0usize)]);
    seen.insert(start.clone());
    while let Some((s, d)) = queue.pop_front() {
        if is_goal(task, &s) {
            return Some(d);
        }
        for a in task.actions() {
            if applicable(a, &s) {
                let t = successor(a, &s);
                if seen.insert(t.clone()) {
                    queue.push_back((t, d + 1));
                }
            }
        }
    }
    None
}

/// Every state reachable from the initial state.
pub fn reachable_states(task: &GroundTask) -> Vec<Facts> {
    let init = facts_of(task, task.init());
    let mut seen = BTreeSet::from([init.clone()]);
    let mut stack = vec![init];
    while let Some(s) = stack.pop() {
        for a in task.actions() {
            if applicable(a, &s) {
                let t = successor(a, &s);
                if seen.insert(t.clone()) {
                    stack.push(t);
                }
            }
        }
    }
    seen.into_iter().collect()
}

/// h_max and h_add by iterating the relaxed cost equations to a fixpoint.
/// Negative goals are extra facts, true when the atom is absent and
/// achieved by any action deleting it.
pub fn relaxed_fixpoint(task: &GroundTask, s: &Facts) -> (f64, f64) {
    let n = task.num_atoms();
    let negs: Vec<u32> = task.goal_neg().iter().map(|g| g.0).collect();
    let solve = |sum: bool| {
        let mut cost = vec![f64::INFINITY; n + negs.len()];
        for f in s {
            cost[*f as usize] = 0.0;
        }
        for (k, g) in negs.iter().enumerate() {
            if !s.contains(g) {
                cost[n + k] = 0.0;
            }
        }
        loop {
            let mut changed = false;
            for a in task.actions() {
                let pre = a.pre_pos.iter().map(|p| cost[p.index()]);
                let base = if sum { pre.sum::<f64>() } else { pre.fold(0.0, f64::max) };
                if base.is_infinite() {
                    continue;
                }
                let v = base + a.cost;
                let mut effs: Vec<usize> = a.add.iter().map(|x| x.index()).collect();
                effs.extend(negs.iter().enumerate().filter(|(_, g)| a.del.iter().any(|d| d.0 == **g)).map(|(k, _)| n + k));
                for e in effs {
                    if v < cost[e] {
                        cost[e] = v;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let goals = task.goal_pos().iter().map(|g| cost[g.index()]).chain((0..negs.len()).map(|k| cost[n + k]));
        if sum {
            goals.sum::<f64>()
        } else {
            goals.fold(0.0, f64::max)
        }
    };
    (solve(false), solve(true))
}

/// Checks that `steps` is a relaxed plan: applicable in order ignoring
/// deletes and negative preconditions, and reaching the goal.
pub fn is_relaxed_plan(task: &GroundTask, s: &Facts, steps: &[ActionId]) -> bool {
    let mut reached = s.clone();
    let mut deleted: BTreeSet<u32> = BTreeSet::new();
    for a in steps {
        let act = task.action(*a);
        if !act.pre_pos.iter().all(|p| reached.contains(&p.0)) {
            return false;
        }
        reached.extend(act.add.iter().map(|x| x.0));
        deleted.extend(act.del.iter().map(|x| x.0));
    }
    task.goal_pos().iter().all(|g| reached.contains(&g.0))
        && task.goal_neg().iter().all(|g| !s.contains(&g.0) || deleted.contains(&g.0))
}

/// A random DAG whose nodes are spread over `robots` robots. Each robot's
/// nodes form a chain in index order; extra edges always point forward.
pub fn random_dag<R: Rng>(rng: &mut R, max_nodes: usize, robots: usize, chain_edges: bool) -> DependencyGraph {
    let n = rng.gen_range(1..=max_nodes);
    let mut g = DependencyGraph::default();
    let names: Vec<Name> = (0..robots).map(|r| Name::from(format!("Robot{}", r + 1).as_str())).collect();
    for v in 0..n {
        let r = rng.gen_range(0..robots);
        g.nodes.push(Node { subtask: 1, robot: names[r].clone(), step: v, call: ActionCall::new("Step", &[&format!("o{v}")]) });
        g.robot_order.entry(names[r].clone()).or_default().push(v);
    }
    if chain_edges {
        for seq in g.robot_order.values() {
            for w in seq.windows(2) {
                g.edges.insert((w[0], w[1]), teamplan::combine::EdgeKind::Sequence);
            }
        }
    }
    for _ in 0..rng.gen_range(0..=n * 2) {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a < b {
            g.edges.insert((a, b), teamplan::combine::EdgeKind::Allocation);
        }
    }
    g
}

/// Longest path in nodes (unit durations) over the explicit edges.
pub fn critical_path(g: &DependencyGraph) -> u32 {
    let n = g.nodes.len();
    let mut memo: BTreeMap<usize, u32> = BTreeMap::new();
    fn depth(v: usize, g: &DependencyGraph, memo: &mut BTreeMap<usize, u32>) -> u32 {
        if let Some(d) = memo.get(&v) {
            return *d;
        }
        let d = 1 + g.edges.keys().filter(|(a, _)| *a == v).map(|(_, b)| depth(*b, g, memo)).max().unwrap_or(0);
        memo.insert(v, d);
        d
    }
    (0..n).map(|v| depth(v, g, &mut memo)).max().unwrap_or(0)
}
