//! Grounding: lifted schemas to ground actions over a dense atom table.

mod state;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pddl::{check_well_formed, ActionSchema, Diagnostics, Domain, GroundAtom, Name, Problem, Term};

pub use state::State;

pub const DEFAULT_GROUND_LIMIT: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AtomId(pub u32);

impl AtomId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActionId(pub u32);

impl ActionId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A named action invocation, `PickupObject(Robot2, Egg, Location1)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActionCall {
    pub name: Name,
    pub args: Vec<Name>,
}

impl ActionCall {
    pub fn new(name: &str, args: &[&str]) -> Self {
        ActionCall { name: Name::from(name), args: args.iter().map(|a| Name::from(*a)).collect() }
    }

    /// `(PickupObject Robot2 Egg Location1)`
    pub fn to_sexpr(&self) -> String {
        let mut s = format!("({}", self.name);
        for a in &self.args {
            s.push(' ');
            s.push_str(a.as_str());
        }
        s.push(')');
        s
    }
}

impl fmt::Display for ActionCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.name)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("cannot parse action call {0:?}")]
pub struct ActionCallParseError(pub String);

/// Accepts both `(Name a b)` and `Name(a, b)`.
impl FromStr for ActionCall {
    type Err = ActionCallParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let err = || ActionCallParseError(s.to_string());
        let (name, rest): (&str, Vec<&str>) = if let Some(inner) = t.strip_prefix('(') {
            let inner = inner.strip_suffix(')').ok_or_else(err)?;
            let mut parts = inner.split_whitespace();
            let name = parts.next().ok_or_else(err)?;
            (name, parts.collect())
        } else {
            let open = t.find('(').ok_or_else(err)?;
            let inner = t[open + 1..].strip_suffix(')').ok_or_else(err)?;
            let args = inner.split(',').map(str::trim).filter(|a| !a.is_empty()).collect();
            (t[..open].trim(), args)
        };
        let valid = |x: &str| !x.is_empty() && !x.contains(['(', ')', ',']) && !x.contains(char::is_whitespace);
        if !valid(name) || !rest.iter().all(|a| valid(a)) {
            return Err(err());
        }
        Ok(ActionCall { name: Name::from(name), args: rest.into_iter().map(Name::from).collect() })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundAction {
    pub call: ActionCall,
    pub pre_pos: Vec<AtomId>,
    pub pre_neg: Vec<AtomId>,
    pub add: Vec<AtomId>,
    pub del: Vec<AtomId>,
    pub cost: f64,
}

impl GroundAction {
    pub fn new(
        call: ActionCall,
        pre_pos: Vec<AtomId>,
        pre_neg: Vec<AtomId>,
        add: Vec<AtomId>,
        del: Vec<AtomId>,
        cost: f64,
    ) -> Self {
        let norm = |mut v: Vec<AtomId>| {
            v.sort();
            v.dedup();
            v
        };
        let add = norm(add);
        let del = norm(del).into_iter().filter(|d| add.binary_search(d).is_err()).collect();
        GroundAction { call, pre_pos: norm(pre_pos), pre_neg: norm(pre_neg), add, del, cost }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundingStats {
    /// Σ over schemas of Π over parameters of compatible object counts.
    pub instantiated: u64,
    /// Instances dropped because a static precondition is false in init.
    pub static_pruned: u64,
}

#[derive(Debug, Error)]
pub enum GroundError {
    #[error("problem is not well-formed:\n{0}")]
    IllFormed(Diagnostics),
    #[error("grounding would produce {count} actions, above the limit of {limit}")]
    TooManyActions { count: u64, limit: u64 },
    #[error("atom id {0} is outside the atom table")]
    BadAtomId(u32),
}

/// A fully instantiated planning task.
#[derive(Clone, Debug)]
pub struct GroundTask {
    atoms: Vec<GroundAtom>,
    atom_index: HashMap<GroundAtom, AtomId>,
    actions: Vec<GroundAction>,
    action_index: HashMap<ActionCall, ActionId>,
    init: State,
    goal_pos: Vec<AtomId>,
    goal_neg: Vec<AtomId>,
    stats: GroundingStats,
}

impl GroundTask {
    pub fn new(
        atoms: Vec<GroundAtom>,
        actions: Vec<GroundAction>,
        init: &[AtomId],
        goal_pos: Vec<AtomId>,
        goal_neg: Vec<AtomId>,
    ) -> Result<Self, GroundError> {
        let n = atoms.len();
        let check = |ids: &[AtomId]| match ids.iter().find(|a| a.index() >= n) {
            Some(bad) => Err(GroundError::BadAtomId(bad.0)),
            None => Ok(()),
        };
        check(init)?;
        check(&goal_pos)?;
        check(&goal_neg)?;
        for a in &actions {
            check(&a.pre_pos)?;
            check(&a.pre_neg)?;
            check(&a.add)?;
            check(&a.del)?;
        }
        let atom_index = atoms.iter().enumerate().map(|(i, a)| (a.clone(), AtomId(i as u32))).collect();
        let mut action_index = HashMap::new();
        for (i, a) in actions.iter().enumerate() {
            action_index.entry(a.call.clone()).or_insert(ActionId(i as u32));
        }
        let mut state = State::empty(n);
        for a in init {
            state.insert(*a);
        }
        let norm = |mut v: Vec<AtomId>| {
            v.sort();
            v.dedup();
            v
        };
        Ok(GroundTask {
            atoms,
            atom_index,
            actions,
            action_index,
            init: state,
            goal_pos: norm(goal_pos),
            goal_neg: norm(goal_neg),
            stats: GroundingStats::default(),
        })
    }

    pub fn atoms(&self) -> &[GroundAtom] {
        &self.atoms
    }

    pub fn atom(&self, id: AtomId) -> &GroundAtom {
        &self.atoms[id.index()]
    }

    pub fn atom_id(&self, atom: &GroundAtom) -> Option<AtomId> {
        self.atom_index.get(atom).copied()
    }

    pub fn num_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn actions(&self) -> &[GroundAction] {
        &self.actions
    }

    pub fn action(&self, id: ActionId) -> &GroundAction {
        &self.actions[id.index()]
    }

    pub fn find_action(&self, call: &ActionCall) -> Option<ActionId> {
        self.action_index.get(call).copied()
    }

    pub fn init(&self) -> &State {
        &self.init
    }

    pub fn goal_pos(&self) -> &[AtomId] {
        &self.goal_pos
    }

    pub fn goal_neg(&self) -> &[AtomId] {
        &self.goal_neg
    }

    pub fn stats(&self) -> GroundingStats {
        self.stats
    }

    pub fn empty_state(&self) -> State {
        State::empty(self.atoms.len())
    }

    pub fn state_from(&self, atoms: &[AtomId]) -> State {
        let mut s = self.empty_state();
        for a in atoms {
            s.insert(*a);
        }
        s
    }

    /// A copy with a different goal; used when the same world is asked
    /// for several targets.
    pub fn with_goal(&self, goal_pos: Vec<AtomId>, goal_neg: Vec<AtomId>) -> Self {
        let mut t = self.clone();
        t.goal_pos = goal_pos;
        t.goal_neg = goal_neg;
        t
    }

    /// Resets every action cost to 1.
    pub fn set_unit_costs(&mut self) {
        for a in &mut self.actions {
            a.cost = 1.0;
        }
    }

    /// One line per action: `Name(args) pre: ... neg: ... add: ... del: ...`.
    pub fn dump(&self) -> String {
        let names = |ids: &[AtomId]| ids.iter().map(|i| self.atom(*i).to_string()).collect::<Vec<_>>().join(" ");
        let mut out = String::new();
        for a in &self.actions {
            out.push_str(&format!(
                "{} pre: [{}] neg: [{}] add: [{}] del: [{}] cost: {}\n",
                a.call,
                names(&a.pre_pos),
                names(&a.pre_neg),
                names(&a.add),
                names(&a.del),
                a.cost
            ));
        }
        out
    }
}

fn objects_by_type(problem: &Problem) -> BTreeMap<Name, Vec<Name>> {
    let mut out: BTreeMap<Name, Vec<Name>> = BTreeMap::new();
    for o in &problem.objects {
        out.entry(o.ty.clone()).or_default().push(o.name.clone());
    }
    out
}

fn instance_count(schema: &ActionSchema, by_type: &BTreeMap<Name, Vec<Name>>) -> u64 {
    schema
        .params
        .iter()
        .map(|p| by_type.get(&p.ty).map_or(0, |v| v.len() as u64))
        .fold(1u64, |acc, n| acc.saturating_mul(n))
}

// Last position fastest; false once every combination was produced.
fn advance(odometer: &mut [usize], pools: &[&[Name]]) -> bool {
    for k in (0..odometer.len()).rev() {
        odometer[k] += 1;
        if odometer[k] < pools[k].len() {
            return true;
        }
        odometer[k] = 0;
    }
    false
}

fn bind(args: &[Term], binding: &HashMap<&Name, &Name>) -> Vec<Name> {
    args.iter()
        .map(|t| match t {
            Term::Var(v) => (*binding.get(v).expect("variables are bound after the well-formedness check")).clone(),
            Term::Object(o) => o.clone(),
        })
        .collect()
}

struct Instance {
    call: ActionCall,
    pre_pos: Vec<GroundAtom>,
    pre_neg: Vec<GroundAtom>,
    add: Vec<GroundAtom>,
    del: Vec<GroundAtom>,
    cost: f64,
}

/// A ground atom with its polarity.
pub type SignedAtom = (GroundAtom, bool);

/// Instantiates one schema with concrete arguments. No type checking.
pub fn instantiate(schema: &ActionSchema, args: &[Name]) -> Option<(Vec<SignedAtom>, Vec<SignedAtom>)> {
    if schema.params.len() != args.len() {
        return None;
    }
    let binding: HashMap<&Name, &Name> = schema.params.iter().map(|p| &p.var).zip(args).collect();
    let lits = |ls: &[crate::pddl::Literal]| {
        ls.iter()
            .map(|l| (GroundAtom { predicate: l.predicate.clone(), args: bind(&l.args, &binding) }, l.positive))
            .collect::<Vec<_>>()
    };
    Some((lits(&schema.precondition), lits(&schema.effect)))
}

pub fn ground(domain: &Domain, problem: &Problem) -> Result<GroundTask, GroundError> {
    ground_with_limit(domain, problem, DEFAULT_GROUND_LIMIT)
}

pub fn ground_with_limit(domain: &Domain, problem: &Problem, limit: u64) -> Result<GroundTask, GroundError> {
    let diags = check_well_formed(domain, problem);
    if diags.has_errors() {
        return Err(GroundError::IllFormed(diags));
    }
    let by_type = objects_by_type(problem);
    let total: u64 = domain.actions.iter().map(|a| instance_count(a, &by_type)).fold(0u64, u64::saturating_add);
    if total > limit {
        return Err(GroundError::TooManyActions { count: total, limit });
    }

    let fluent: HashSet<&Name> = domain.actions.iter().flat_map(|a| a.effect.iter().map(|l| &l.predicate)).collect();
    let init: HashSet<&GroundAtom> = problem.init.iter().collect();

    let mut instances = Vec::new();
    let mut pruned = 0u64;
    for schema in &domain.actions {
        let pools: Vec<&[Name]> =
            schema.params.iter().map(|p| by_type.get(&p.ty).map_or(&[][..], |v| v.as_slice())).collect();
        if pools.iter().any(|p| p.is_empty()) {
            continue;
        }
        let mut odometer = vec![0usize; pools.len()];
        loop {
            let args: Vec<Name> = odometer.iter().zip(&pools).map(|(i, p)| p[*i].clone()).collect();
            let (pre, eff) = instantiate(schema, &args).expect("arity matches");
            let mut inst = Instance {
                call: ActionCall { name: schema.name.clone(), args },
                pre_pos: Vec::new(),
                pre_neg: Vec::new(),
                add: Vec::new(),
                del: Vec::new(),
                cost: schema.cost,
            };
            let mut dead = false;
            for (atom, positive) in pre {
                if !fluent.contains(&atom.predicate) {
                    if init.contains(&atom) != positive {
                        dead = true;
                        break;
                    }
                    continue;
                }
                if positive {
                    inst.pre_pos.push(atom);
                } else {
                    inst.pre_neg.push(atom);
                }
            }
            if dead {
                pruned += 1;
            } else {
                for (atom, positive) in eff {
                    if positive {
                        inst.add.push(atom);
                    } else {
                        inst.del.push(atom);
                    }
                }
                instances.push(inst);
            }
            if !advance(&mut odometer, &pools) {
                break;
            }
        }
    }

    let mut table: BTreeSet<GroundAtom> = problem.init.iter().cloned().collect();
    table.extend(problem.goal.iter().map(|g| g.atom.clone()));
    for inst in &instances {
        for a in inst.pre_pos.iter().chain(&inst.pre_neg).chain(&inst.add).chain(&inst.del) {
            table.insert(a.clone());
        }
    }
    let atoms: Vec<GroundAtom> = table.into_iter().collect();
    let index: HashMap<&GroundAtom, AtomId> = atoms.iter().enumerate().map(|(i, a)| (a, AtomId(i as u32))).collect();
    let ids = |v: &[GroundAtom]| v.iter().map(|a| index[a]).collect::<Vec<_>>();

    let actions = instances
        .iter()
        .map(|i| GroundAction::new(i.call.clone(), ids(&i.pre_pos), ids(&i.pre_neg), ids(&i.add), ids(&i.del), i.cost))
        .collect();
    let init_ids = ids(&problem.init);
    let goal_pos = problem.goal.iter().filter(|g| g.positive).map(|g| index[&g.atom]).collect();
    let goal_neg = problem.goal.iter().filter(|g| !g.positive).map(|g| index[&g.atom]).collect();
    drop(index);
    let mut task = GroundTask::new(atoms, actions, &init_ids, goal_pos, goal_neg)?;
    task.stats = GroundingStats { instantiated: total, static_pruned: pruned };
    Ok(task)
}

/// Result of the delete-relaxed reachability fixpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct Reachability {
    pub atoms: State,
    pub actions: Vec<ActionId>,
    /// Number of sweeps until nothing changed (the final, unchanged sweep excluded).
    pub iterations: usize,
}

impl Reachability {
    pub fn goal_reachable(&self, task: &GroundTask) -> bool {
        task.goal_pos().iter().all(|g| self.atoms.contains(*g))
    }
}

/// Least fixpoint of "init plus adds of actions whose positive preconditions
/// are reachable". Negative preconditions are ignored.
pub fn relaxed_reachability(task: &GroundTask) -> Reachability {
    relaxed_reachability_from(task, task.init())
}

pub fn relaxed_reachability_from(task: &GroundTask, start: &State) -> Reachability {
    let mut reached = start.clone();
    let mut applicable = vec![false; task.actions().len()];
    let mut iterations = 0;
    loop {
        let mut changed = false;
        for (i, a) in task.actions().iter().enumerate() {
            if applicable[i] || !a.pre_pos.iter().all(|p| reached.contains(*p)) {
                continue;
            }
            applicable[i] = true;
            for add in &a.add {
                changed |= reached.insert(*add);
            }
        }
        if !changed {
            break;
        }
        iterations += 1;
    }
    let actions = applicable
        .iter()
        .enumerate()
        .filter(|(_, ok)| **ok)
        .map(|(i, _)| ActionId(i as u32))
        .collect();
    Reachability { atoms: reached, actions, iterations }
}
