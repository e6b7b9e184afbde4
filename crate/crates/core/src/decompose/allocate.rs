use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::model::{Decomposition, RobotProfile, Scene, Subtask};
use super::provider::ProviderError;
use super::{Stage, StageContext};
use crate::ground::ActionCall;
use crate::pddl::Name;

/// One robot's share of a subtask.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub robot: Name,
    /// Required skills this robot contributes.
    pub skills: Vec<Name>,
    /// Indices into the subtask's sketch steps, in order.
    pub steps: Vec<usize>,
}

/// A dependency endpoint: a whole subtask, one robot's part of it, or a
/// specific action of that part.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Endpoint {
    pub subtask: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robot: Option<Name>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<ActionCall>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Dependency {
    pub from: Endpoint,
    pub to: Endpoint,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AllocationSource {
    Provider,
    Greedy,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    pub assignments: BTreeMap<u32, Vec<Assignment>>,
    pub dependencies: Vec<Dependency>,
    pub source: AllocationSource,
}

impl Allocation {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("allocation serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// `(subtask, robot)` pairs in subtask order.
    pub fn parts(&self) -> impl Iterator<Item = (u32, &Assignment)> {
        self.assignments.iter().flat_map(|(s, v)| v.iter().map(move |a| (*s, a)))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AllocateError {
    #[error("subtask {subtask} needs skill {skill}, which no robot has")]
    UnallocatableSubtask { subtask: u32, skill: Name },
    #[error("dependency names unknown subtask {0}")]
    UnknownSubtask(u32),
    #[error("cyclic subtask dependencies: {0:?}")]
    CyclicDependency(Vec<u32>),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

fn required(s: &Subtask) -> Vec<Name> {
    let mut out: Vec<Name> = s.skills.clone();
    for st in &s.steps {
        if !out.contains(&st.skill) {
            out.push(st.skill.clone());
        }
    }
    out
}

/// Minimal robot set covering `skills`, greedily by descending coverage,
/// ties to the smaller robot id.
pub fn greedy_cover(subtask: u32, skills: &[Name], robots: &[RobotProfile]) -> Result<Vec<usize>, AllocateError> {
    if let Some(s) = skills.iter().find(|s| !robots.iter().any(|r| r.has_skill(s))) {
        return Err(AllocateError::UnallocatableSubtask { subtask, skill: s.clone() });
    }
    let mut uncovered: Vec<&Name> = skills.iter().collect();
    let mut chosen = Vec::new();
    while !uncovered.is_empty() {
        let best = (0..robots.len())
            .filter(|i| !chosen.contains(i))
            .map(|i| (uncovered.iter().filter(|s| robots[i].has_skill(s)).count(), i))
            .max_by(|(ca, ia), (cb, ib)| ca.cmp(cb).then_with(|| robots[*ib].id.cmp(&robots[*ia].id)))
            .map(|(_, i)| i)
            .expect("coverage checked above");
        uncovered.retain(|s| !robots[best].has_skill(s));
        chosen.push(best);
    }
    Ok(chosen)
}

/// Assigns sketch steps to `chosen` robots, last step first: a step stays
/// with the robot of the following step when it can, else goes to the
/// first chosen robot with the skill.
fn split_steps(s: &Subtask, chosen: &[usize], robots: &[RobotProfile]) -> Result<Vec<usize>, AllocateError> {
    let mut owner = vec![0usize; s.steps.len()];
    let mut next: Option<usize> = None;
    for i in (0..s.steps.len()).rev() {
        let skill = &s.steps[i].skill;
        let r = match next.filter(|r| robots[*r].has_skill(skill)) {
            Some(r) => r,
            None => *chosen
                .iter()
                .find(|r| robots[**r].has_skill(skill))
                .ok_or_else(|| AllocateError::UnallocatableSubtask { subtask: s.id, skill: skill.clone() })?,
        };
        owner[i] = r;
        next = Some(r);
    }
    Ok(owner)
}

/// Builds assignments and cross-robot edges for one subtask. An edge joins
/// steps of different robots when an effect of the earlier step is a
/// precondition of the later one.
fn assign(s: &Subtask, chosen: &[usize], robots: &[RobotProfile], scene: &Scene) -> Result<(Vec<Assignment>, Vec<Dependency>), AllocateError> {
    let req = required(s);
    if s.steps.is_empty() {
        let parts = chosen
            .iter()
            .map(|r| Assignment {
                robot: robots[*r].id.clone(),
                skills: req.iter().filter(|k| robots[*r].has_skill(k)).cloned().collect(),
                steps: vec![],
            })
            .collect();
        return Ok((parts, vec![]));
    }
    let owner = split_steps(s, chosen, robots)?;
    let mut parts = Vec::new();
    for r in chosen {
        let steps: Vec<usize> = (0..owner.len()).filter(|i| owner[*i] == *r).collect();
        if steps.is_empty() {
            continue;
        }
        let mut skills: Vec<Name> = Vec::new();
        for i in &steps {
            if !skills.contains(&s.steps[*i].skill) {
                skills.push(s.steps[*i].skill.clone());
            }
        }
        parts.push(Assignment { robot: robots[*r].id.clone(), skills, steps });
    }
    let mut edges = BTreeSet::new();
    let grounded: Vec<Option<(ActionCall, Vec<_>, Vec<_>)>> = (0..s.steps.len())
        .map(|i| {
            let r = &robots[owner[i]];
            let st = &s.steps[i];
            let schema = r.schema(&st.skill)?;
            let (pre, eff) = st.ground_schema(schema, &r.id, scene)?;
            Some((st.call(&r.id, scene)?, pre, eff))
        })
        .collect();
    for i in 0..s.steps.len() {
        for j in i + 1..s.steps.len() {
            if owner[i] == owner[j] {
                continue;
            }
            let (Some((ci, _, eff)), Some((cj, pre, _))) = (&grounded[i], &grounded[j]) else {
                continue;
            };
            if eff.iter().any(|e| pre.contains(e)) {
                edges.insert(Dependency {
                    from: Endpoint { subtask: s.id, robot: Some(robots[owner[i]].id.clone()), action: Some(ci.clone()) },
                    to: Endpoint { subtask: s.id, robot: Some(robots[owner[j]].id.clone()), action: Some(cj.clone()) },
                });
            }
        }
    }
    Ok((parts, edges.into_iter().collect()))
}

fn subtask_edges(d: &Decomposition) -> Result<Vec<Dependency>, AllocateError> {
    let ids: BTreeSet<u32> = d.subtasks.iter().map(|s| s.id).collect();
    for (a, b) in &d.dependencies {
        for x in [a, b] {
            if !ids.contains(x) {
                return Err(AllocateError::UnknownSubtask(*x));
            }
        }
    }
    // Kahn's algorithm; leftovers lie on or behind a cycle
    let mut indeg: BTreeMap<u32, usize> = ids.iter().map(|i| (*i, 0)).collect();
    for (_, b) in &d.dependencies {
        *indeg.get_mut(b).expect("checked") += 1;
    }
    let mut ready: Vec<u32> = indeg.iter().filter(|(_, n)| **n == 0).map(|(i, _)| *i).collect();
    let mut seen = 0;
    while let Some(x) = ready.pop() {
        seen += 1;
        for (_, b) in d.dependencies.iter().filter(|(a, _)| *a == x) {
            let n = indeg.get_mut(b).expect("checked");
            *n -= 1;
            if *n == 0 {
                ready.push(*b);
            }
        }
    }
    if seen < ids.len() {
        return Err(AllocateError::CyclicDependency(indeg.into_iter().filter(|(_, n)| *n > 0).map(|(i, _)| i).collect()));
    }
    Ok(d.dependencies
        .iter()
        .map(|(a, b)| Dependency {
            from: Endpoint { subtask: *a, robot: None, action: None },
            to: Endpoint { subtask: *b, robot: None, action: None },
        })
        .collect())
}

/// Parses `Subtask N -> Robot1, Robot2` lines; other lines are ignored.
pub fn parse_allocation_response(text: &str) -> BTreeMap<u32, Vec<Name>> {
    let mut out = BTreeMap::new();
    for line in text.lines() {
        let line = line.trim();
        let Some((lhs, rhs)) = line.split_once("->") else { continue };
        let lhs = lhs.trim();
        if !lhs.to_ascii_lowercase().starts_with("subtask") {
            continue;
        }
        let Ok(id) = lhs[7..].trim().trim_end_matches(':').parse::<u32>() else { continue };
        let robots = rhs.split(',').map(str::trim).filter(|x| !x.is_empty()).map(Name::from).collect();
        out.insert(id, robots);
    }
    out
}

/// Checks a proposal and turns it into robot indices per subtask.
fn check_proposal(
    d: &Decomposition,
    robots: &[RobotProfile],
    proposal: &BTreeMap<u32, Vec<Name>>,
) -> Result<BTreeMap<u32, Vec<usize>>, String> {
    let mut out = BTreeMap::new();
    for s in &d.subtasks {
        let names = proposal.get(&s.id).ok_or_else(|| format!("subtask {} is not assigned", s.id))?;
        let mut idx = Vec::new();
        for n in names {
            let i = robots.iter().position(|r| &r.id == n).ok_or_else(|| format!("unknown robot {n}"))?;
            if !idx.contains(&i) {
                idx.push(i);
            }
        }
        if let Some(k) = required(s).iter().find(|k| !idx.iter().any(|i| robots[*i].has_skill(k))) {
            return Err(format!("subtask {}: assigned robots lack skill {k}", s.id));
        }
        out.insert(s.id, idx);
    }
    Ok(out)
}

fn allocation_prompt(d: &Decomposition, robots: &[RobotProfile], feedback: Option<&str>) -> String {
    let mut p = String::from("Robots and their skills:\n");
    for r in robots {
        let skills: Vec<&str> = r.skills().map(Name::as_str).collect();
        p.push_str(&format!("{}: {}\n", r.id, skills.join(", ")));
    }
    p.push_str("\nSubtasks:\n");
    for s in &d.subtasks {
        let skills: Vec<String> = required(s).iter().map(|k| k.to_string()).collect();
        p.push_str(&format!("Subtask {}: {} (skills required: {})\n", s.id, s.description, skills.join(", ")));
    }
    p.push_str("\nAnswer with one line per subtask: `Subtask N -> RobotA, RobotB`.\n");
    if let Some(f) = feedback {
        p.push_str(&format!("\nYour previous answer was rejected: {f}\n"));
    }
    p
}

const ALLOCATION_SYSTEM: &str = "You assign subtasks to robots. Every subtask must be given robots whose combined skills include all of its required skills. Prefer a single robot when one suffices and spread independent subtasks across robots.";

/// Proposes an allocation through the provider, enforcing skill coverage.
/// After `max_retries` rejected answers the greedy split is used instead.
pub fn allocate(d: &Decomposition, robots: &[RobotProfile], scene: &Scene, ctx: &StageContext<'_>) -> Result<Allocation, AllocateError> {
    let deps = subtask_edges(d)?;
    for s in &d.subtasks {
        greedy_cover(s.id, &required(s), robots)?;
    }
    let mut feedback: Option<String> = None;
    let mut accepted = None;
    for turn in 0..ctx.max_retries {
        let prompt = allocation_prompt(d, robots, feedback.as_deref());
        let text = ctx.ask(Stage::Allocation, turn, ALLOCATION_SYSTEM, prompt)?;
        match check_proposal(d, robots, &parse_allocation_response(&text)) {
            Ok(p) => {
                accepted = Some(p);
                break;
            }
            Err(reason) => feedback = Some(reason),
        }
    }
    let (chosen, source) = match accepted {
        Some(p) => (p, AllocationSource::Provider),
        None => {
            let mut p = BTreeMap::new();
            for s in &d.subtasks {
                p.insert(s.id, greedy_cover(s.id, &required(s), robots)?);
            }
            (p, AllocationSource::Greedy)
        }
    };
    build(d, robots, scene, &chosen, deps, source)
}

/// Deterministic allocation without a provider.
pub fn allocate_greedy(d: &Decomposition, robots: &[RobotProfile], scene: &Scene) -> Result<Allocation, AllocateError> {
    let deps = subtask_edges(d)?;
    let mut p = BTreeMap::new();
    for s in &d.subtasks {
        p.insert(s.id, greedy_cover(s.id, &required(s), robots)?);
    }
    build(d, robots, scene, &p, deps, AllocationSource::Greedy)
}

fn build(
    d: &Decomposition,
    robots: &[RobotProfile],
    scene: &Scene,
    chosen: &BTreeMap<u32, Vec<usize>>,
    mut deps: Vec<Dependency>,
    source: AllocationSource,
) -> Result<Allocation, AllocateError> {
    let mut assignments = BTreeMap::new();
    for s in &d.subtasks {
        let (parts, edges) = assign(s, &chosen[&s.id], robots, scene)?;
        assignments.insert(s.id, parts);
        deps.extend(edges);
    }
    Ok(Allocation { assignments, dependencies: deps, source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decompose::model::parse_decomposition;
    use crate::decompose::provider::FixtureProvider;
    use crate::pddl::{bundled, parse_domain};

    fn robots(specs: &[(&str, &[&str])]) -> Vec<RobotProfile> {
        let base = parse_domain(bundled::HOUSEHOLD_DOMAIN).unwrap().value;
        specs
            .iter()
            .map(|(id, sk)| {
                let sk: Vec<String> = sk.iter().map(|s| s.to_string()).collect();
                RobotProfile::from_domain(id, &base, &sk, "Start").unwrap()
            })
            .collect()
    }

    fn scene() -> Scene {
        Scene::from_toml(
            "init = [\"(closed Drawer)\"]\n[[object]]\nname = \"Start\"\n[[object]]\nname = \"Drawer\"\n[[object]]\nname = \"Table\"\n[[object]]\nname = \"Keys\"\nlocation = \"Table\"\n",
        )
        .unwrap()
    }

    const DRAWER: &str = "Subtask 1: Put keys in the drawer. (skills required: GoToObject, OpenObject, PickupObject, PutObject)
GoToObject: go to drawer
- Parameters: ?robot, Drawer
OpenObject: open it
- Parameters: ?robot, Drawer
GoToObject: go to table
- Parameters: ?robot, Table
PickupObject: take keys
- Parameters: ?robot, Keys, Table
GoToObject: back to drawer
- Parameters: ?robot, Drawer
PutObject: drop keys
- Parameters: ?robot, Keys, Drawer
";

    #[test]
    fn drawer_split_has_open_before_put() {
        let rs = robots(&[
            ("Robot1", &["GoToObject", "OpenObject", "CloseObject"]),
            ("Robot2", &["GoToObject", "PickupObject", "PutObject"]),
        ]);
        let d = parse_decomposition(DRAWER).unwrap();
        let a = allocate_greedy(&d, &rs, &scene()).unwrap();
        let parts = &a.assignments[&1];
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0].robot.as_str(), "Robot2");
        assert_eq!(parts[0].steps, vec![2, 3, 4, 5]);
        assert_eq!(parts[1].steps, vec![0, 1]);
        assert_eq!(a.dependencies.len(), 1);
        let e = &a.dependencies[0];
        assert_eq!(e.from.action.as_ref().unwrap().to_string(), "OpenObject(Robot1, Drawer)");
        assert_eq!(e.to.action.as_ref().unwrap().to_string(), "PutObject(Robot2, Keys, Drawer)");
        assert_eq!(Allocation::from_json(&a.to_json()).unwrap(), a);
    }

    #[test]
    fn unallocatable_skill() {
        let rs = robots(&[("Robot1", &["GoToObject"])]);
        let d = parse_decomposition("Subtask 1: slice (skills required: SliceObject)").unwrap();
        assert_eq!(
            allocate_greedy(&d, &rs, &scene()),
            Err(AllocateError::UnallocatableSubtask { subtask: 1, skill: Name::from("SliceObject") })
        );
    }

    #[test]
    fn cyclic_dependencies_rejected() {
        let rs = robots(&[("Robot1", &["GoToObject"])]);
        let d = parse_decomposition("Subtask 1: a\nSubtask 2: b\nDependencies: 2 after 1, 1 after 2").unwrap();
        assert!(matches!(allocate_greedy(&d, &rs, &scene()), Err(AllocateError::CyclicDependency(_))));
    }

    #[test]
    fn provider_proposal_reprompted_then_accepted() {
        let rs = robots(&[
            ("Robot1", &["GoToObject", "OpenObject", "CloseObject"]),
            ("Robot2", &["GoToObject", "PickupObject", "PutObject"]),
        ]);
        let d = parse_decomposition(DRAWER).unwrap();
        let fx = FixtureProvider::from_toml("[t.allocation]\n0 = \"Subtask 1 -> Robot2\"\n1 = \"Summary\\nSubtask 1 -> Robot2, Robot1\"\n").unwrap();
        let ctx = StageContext::new("t", &fx);
        let a = allocate(&d, &rs, &scene(), &ctx).unwrap();
        assert_eq!(a.source, AllocationSource::Provider);
        assert_eq!(a.assignments[&1].len(), 2);
    }

    #[test]
    fn greedy_fallback_after_retries() {
        let rs = robots(&[("Robot1", &["GoToObject"]), ("Robot2", &["GoToObject"])]);
        let d = parse_decomposition("Subtask 1: a (skills required: GoToObject)").unwrap();
        let fx = FixtureProvider::from_toml("[t.allocation]\n0 = \"x\"\n1 = \"y\"\n2 = \"Subtask 1 -> Robot9\"\n").unwrap();
        let a = allocate(&d, &rs, &scene(), &StageContext::new("t", &fx)).unwrap();
        assert_eq!(a.source, AllocationSource::Greedy);
        assert_eq!(a.assignments[&1][0].robot.as_str(), "Robot1");
    }
}
