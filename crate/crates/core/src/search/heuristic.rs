//! Delete-relaxation heuristics.
//!
//! Positive preconditions must be reached; negative preconditions are free.
//! A negative goal `(not p)` becomes an extra fact that holds when `p` is
//! false in the evaluated state and is achieved by any action deleting `p`.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ground::{ActionId, GroundTask, State};

/// Nonnegative cost estimate, possibly infinite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeuristicValue(pub f64);

impl HeuristicValue {
    pub const INFINITY: HeuristicValue = HeuristicValue(f64::INFINITY);
    pub const ZERO: HeuristicValue = HeuristicValue(0.0);

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Eq for HeuristicValue {}

impl PartialOrd for HeuristicValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeuristicValue {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Display for HeuristicValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Combine {
    Max,
    Sum,
}

/// Precomputed relaxed view of a task, reusable across evaluations.
pub struct Relaxation<'a> {
    task: &'a GroundTask,
    num_atoms: usize,
    // goal_neg[k] is represented by fact num_atoms + k
    pre: Vec<Vec<usize>>,
    eff: Vec<Vec<usize>>,
    consumers: Vec<Vec<usize>>,
    free_actions: Vec<usize>,
    goal_facts: Vec<usize>,
}

pub(crate) struct Evaluation {
    pub cost: Vec<f64>,
    pub supporter: Vec<Option<usize>>,
    pub initial: Vec<bool>,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("goal is unreachable under the delete relaxation")]
pub struct RelaxedUnreachable;

impl<'a> Relaxation<'a> {
    pub fn new(task: &'a GroundTask) -> Self {
        let n = task.num_atoms();
        let neg: HashMap<usize, usize> = task.goal_neg().iter().enumerate().map(|(k, a)| (a.index(), n + k)).collect();
        let num_facts = n + neg.len();
        let mut pre = Vec::with_capacity(task.actions().len());
        let mut eff = Vec::with_capacity(task.actions().len());
        let mut consumers = vec![Vec::new(); num_facts];
        let mut free_actions = Vec::new();
        for (i, a) in task.actions().iter().enumerate() {
            let p: Vec<usize> = a.pre_pos.iter().map(|x| x.index()).collect();
            for f in &p {
                consumers[*f].push(i);
            }
            if p.is_empty() {
                free_actions.push(i);
            }
            let mut e: Vec<usize> = a.add.iter().map(|x| x.index()).collect();
            e.extend(a.del.iter().filter_map(|d| neg.get(&d.index()).copied()));
            pre.push(p);
            eff.push(e);
        }
        let mut goal_facts: Vec<usize> = task.goal_pos().iter().map(|g| g.index()).collect();
        goal_facts.extend(n..num_facts);
        Relaxation { task, num_atoms: n, pre, eff, consumers, free_actions, goal_facts }
    }

    fn num_facts(&self) -> usize {
        self.consumers.len()
    }

    fn initial_facts(&self, state: &State) -> Vec<bool> {
        let mut init = vec![false; self.num_facts()];
        for a in state.iter() {
            init[a.index()] = true;
        }
        for (k, g) in self.task.goal_neg().iter().enumerate() {
            init[self.num_atoms + k] = !state.contains(*g);
        }
        init
    }

    /// Generalised Dijkstra over facts; action values combine their
    /// preconditions with `max` or `+`.
    pub(crate) fn evaluate(&self, state: &State, combine: Combine) -> Evaluation {
        let nf = self.num_facts();
        let initial = self.initial_facts(state);
        let mut cost = vec![f64::INFINITY; nf];
        let mut supporter = vec![None; nf];
        let mut heap: BinaryHeap<Reverse<(HeuristicValue, usize)>> = BinaryHeap::new();
        for f in 0..nf {
            if initial[f] {
                cost[f] = 0.0;
                heap.push(Reverse((HeuristicValue(0.0), f)));
            }
        }
        let mut waiting: Vec<usize> = self.pre.iter().map(Vec::len).collect();
        let mut acc = vec![0.0f64; self.pre.len()];
        let actions = self.task.actions();

        let fire = |a: usize, base: f64, cost: &mut Vec<f64>, sup: &mut Vec<Option<usize>>, heap: &mut BinaryHeap<_>| {
            let v = base + actions[a].cost;
            for &e in &self.eff[a] {
                if v < cost[e] {
                    cost[e] = v;
                    sup[e] = Some(a);
                    heap.push(Reverse((HeuristicValue(v), e)));
                }
            }
        };
        for &a in &self.free_actions {
            fire(a, 0.0, &mut cost, &mut supporter, &mut heap);
        }
        let mut done = vec![false; nf];
        while let Some(Reverse((HeuristicValue(c), f))) = heap.pop() {
            if done[f] || c > cost[f] {
                continue;
            }
            done[f] = true;
            for &a in &self.consumers[f] {
                acc[a] = match combine {
                    Combine::Max => acc[a].max(c),
                    Combine::Sum => acc[a] + c,
                };
                waiting[a] -= 1;
                if waiting[a] == 0 {
                    fire(a, acc[a], &mut cost, &mut supporter, &mut heap);
                }
            }
        }
        Evaluation { cost, supporter, initial }
    }

    fn aggregate(&self, ev: &Evaluation, combine: Combine) -> HeuristicValue {
        let mut total = 0.0f64;
        for &g in &self.goal_facts {
            let c = ev.cost[g];
            if c.is_infinite() {
                return HeuristicValue::INFINITY;
            }
            total = match combine {
                Combine::Max => total.max(c),
                Combine::Sum => total + c,
            };
        }
        HeuristicValue(total)
    }

    pub fn h_max(&self, state: &State) -> HeuristicValue {
        self.aggregate(&self.evaluate(state, Combine::Max), Combine::Max)
    }

    pub fn h_add(&self, state: &State) -> HeuristicValue {
        self.aggregate(&self.evaluate(state, Combine::Sum), Combine::Sum)
    }

    /// FF-style relaxed plan from h_add best supporters, ordered so that
    /// each action's positive preconditions are achieved before it.
    pub fn relaxed_plan(&self, state: &State) -> Result<(Vec<ActionId>, f64), RelaxedUnreachable> {
        let ev = self.evaluate(state, Combine::Sum);
        if self.goal_facts.iter().any(|g| ev.cost[*g].is_infinite()) {
            return Err(RelaxedUnreachable);
        }
        let mut chosen = vec![false; self.pre.len()];
        let mut marked = vec![false; self.num_facts()];
        let mut stack: Vec<usize> = Vec::new();
        for &g in &self.goal_facts {
            if !ev.initial[g] && !marked[g] {
                marked[g] = true;
                stack.push(g);
            }
        }
        while let Some(f) = stack.pop() {
            let a = ev.supporter[f].expect("finite non-initial facts have a supporter");
            if chosen[a] {
                continue;
            }
            chosen[a] = true;
            for &p in &self.pre[a] {
                if !ev.initial[p] && !marked[p] {
                    marked[p] = true;
                    stack.push(p);
                }
            }
        }
        // order by relaxed applicability
        let mut reached = ev.initial.clone();
        let mut remaining: Vec<usize> = (0..chosen.len()).filter(|a| chosen[*a]).collect();
        let mut ordered = Vec::with_capacity(remaining.len());
        while !remaining.is_empty() {
            let pos = remaining
                .iter()
                .position(|a| self.pre[*a].iter().all(|p| reached[*p]))
                .expect("supporters form a relaxed-applicable set");
            let a = remaining.remove(pos);
            for &e in &self.eff[a] {
                reached[e] = true;
            }
            ordered.push(ActionId(a as u32));
        }
        let cost = ordered.iter().map(|a| self.task.action(*a).cost).sum();
        Ok((ordered, cost))
    }

    pub fn h_ff(&self, state: &State) -> HeuristicValue {
        match self.relaxed_plan(state) {
            Ok((_, c)) => HeuristicValue(c),
            Err(_) => HeuristicValue::INFINITY,
        }
    }
}

pub fn h_max(state: &State, task: &GroundTask) -> HeuristicValue {
    Relaxation::new(task).h_max(state)
}

pub fn h_add(state: &State, task: &GroundTask) -> HeuristicValue {
    Relaxation::new(task).h_add(state)
}

/// Relaxed plan and its cost; the cost never exceeds `h_add` of the state.
pub fn extract_relaxed_plan(state: &State, task: &GroundTask) -> Result<(Vec<ActionId>, f64), RelaxedUnreachable> {
    Relaxation::new(task).relaxed_plan(state)
}
