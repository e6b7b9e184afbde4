use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ground::ActionCall;
use crate::pddl::sexpr::{self, SExpr};
use crate::pddl::{
    bundled, parse_domain, ActionSchema, Domain, GroundAtom, GroundLiteral, Literal, Name, Problem, Term, TypedObject,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub name: Name,
    #[serde(default = "default_type", rename = "type")]
    pub ty: Name,
    /// Receptacle or furniture the object starts on, if any.
    #[serde(default)]
    pub location: Option<Name>,
}

fn default_type() -> Name {
    Name::from("object")
}

/// The environment: objects plus the atoms true at the start.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    #[serde(default, rename = "object")]
    pub objects: Vec<SceneObject>,
    /// Extra initial atoms in PDDL syntax, e.g. `"(closed Fridge)"`.
    #[serde(default)]
    pub init: Vec<String>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SceneError {
    #[error("scene: {0}")]
    Format(String),
    #[error("scene object {object} is located at undeclared object {location}")]
    UnknownLocation { object: String, location: String },
    #[error("scene init atom {0} is not a ground positive atom")]
    BadAtom(String),
    #[error("scene init atom {atom} names undeclared object {object}")]
    UnknownObject { atom: String, object: String },
}

impl Scene {
    pub fn from_toml(text: &str) -> Result<Self, SceneError> {
        let s: Scene = toml::from_str(text).map_err(|e| SceneError::Format(e.to_string()))?;
        s.check()?;
        Ok(s)
    }

    pub fn check(&self) -> Result<(), SceneError> {
        for o in &self.objects {
            if let Some(l) = &o.location {
                if self.object(l.as_str()).is_none() {
                    return Err(SceneError::UnknownLocation { object: o.name.to_string(), location: l.to_string() });
                }
            }
        }
        self.extra_atoms().map(|_| ())
    }

    pub fn object(&self, name: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.name.eq_str(name))
    }

    fn extra_atoms(&self) -> Result<Vec<GroundAtom>, SceneError> {
        let mut out = Vec::new();
        for text in &self.init {
            let lits = parse_literals(text).map_err(|_| SceneError::BadAtom(text.clone()))?;
            for l in lits {
                let atom = ground_literal(&l).filter(|g| g.positive).ok_or_else(|| SceneError::BadAtom(text.clone()))?;
                if let Some(bad) = atom.atom.args.iter().find(|a| self.object(a.as_str()).is_none()) {
                    return Err(SceneError::UnknownObject { atom: text.clone(), object: bad.to_string() });
                }
                out.push(atom.atom);
            }
        }
        Ok(out)
    }

    /// `(at-location o l)` for every located object, then the listed atoms.
    pub fn atoms(&self) -> Vec<GroundAtom> {
        let mut out: Vec<GroundAtom> = self
            .objects
            .iter()
            .filter_map(|o| {
                o.location.as_ref().map(|l| GroundAtom { predicate: Name::from("at-location"), args: vec![o.name.clone(), l.clone()] })
            })
            .collect();
        out.extend(self.extra_atoms().unwrap_or_default());
        out
    }
}

/// Robot description as written in scenario files.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RobotSpec {
    pub id: String,
    pub skills: Vec<String>,
    pub location: String,
    /// Bundled domain name or a path to a domain file.
    #[serde(default = "default_domain")]
    pub domain: String,
}

fn default_domain() -> String {
    "household".into()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RobotProfile {
    pub id: Name,
    /// The base domain restricted to this robot's skills.
    pub domain: Domain,
    pub location: Name,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProfileError {
    #[error("robot {robot}: cannot load domain {domain}: {message}")]
    Domain { robot: String, domain: String, message: String },
    #[error("robot {robot}: skill {skill} is not an action of domain {domain}")]
    UnknownSkill { robot: String, skill: String, domain: String },
    #[error("robot {robot}: duplicate skill {skill}")]
    DuplicateSkill { robot: String, skill: String },
}

impl RobotProfile {
    pub fn from_spec(spec: &RobotSpec) -> Result<Self, ProfileError> {
        let derr = |message: String| ProfileError::Domain { robot: spec.id.clone(), domain: spec.domain.clone(), message };
        let text = match bundled::domain_source(&spec.domain) {
            Some(t) => t.to_string(),
            None => std::fs::read_to_string(&spec.domain).map_err(|e| derr(e.to_string()))?,
        };
        let base = parse_domain(&text).map_err(|d| derr(d.to_string()))?.value;
        Self::from_domain(&spec.id, &base, &spec.skills, &spec.location)
    }

    pub fn from_domain(id: &str, base: &Domain, skills: &[String], location: &str) -> Result<Self, ProfileError> {
        let mut names: Vec<Name> = Vec::new();
        for s in skills {
            let n = Name::from(s.as_str());
            if base.action(s).is_none() {
                return Err(ProfileError::UnknownSkill { robot: id.into(), skill: s.clone(), domain: base.name.to_string() });
            }
            if names.contains(&n) {
                return Err(ProfileError::DuplicateSkill { robot: id.into(), skill: s.clone() });
            }
            names.push(n);
        }
        Ok(RobotProfile {
            id: Name::from(id),
            domain: base.restricted(base.name.as_str(), &names),
            location: Name::from(location),
        })
    }

    pub fn skills(&self) -> impl Iterator<Item = &Name> {
        self.domain.actions.iter().map(|a| &a.name)
    }

    pub fn has_skill(&self, skill: &Name) -> bool {
        self.domain.actions.iter().any(|a| &a.name == skill)
    }

    pub fn schema(&self, skill: &Name) -> Option<&ActionSchema> {
        self.domain.actions.iter().find(|a| &a.name == skill)
    }
}

/// Domain holding every skill of the team.
pub fn team_domain(robots: &[RobotProfile]) -> Option<Domain> {
    let first = robots.first()?;
    let mut d = first.domain.clone();
    for r in &robots[1..] {
        for a in &r.domain.actions {
            if d.action(a.name.as_str()).is_none() {
                d.actions.push(a.clone());
            }
        }
    }
    Some(d)
}

/// Whole-team planning problem: every robot and scene object, the scene
/// atoms plus each robot's starting position.
pub fn team_problem(name: &str, domain: &Domain, scene: &Scene, robots: &[RobotProfile], goal: Vec<GroundLiteral>) -> Problem {
    let mut objects: Vec<TypedObject> =
        robots.iter().map(|r| TypedObject { name: r.id.clone(), ty: Name::from("robot") }).collect();
    objects.extend(scene.objects.iter().map(|o| TypedObject { name: o.name.clone(), ty: o.ty.clone() }));
    let mut init: Vec<GroundAtom> =
        robots.iter().map(|r| GroundAtom { predicate: Name::from("at"), args: vec![r.id.clone(), r.location.clone()] }).collect();
    init.extend(scene.atoms());
    Problem { name: Name::from(name), domain_name: domain.name.clone(), objects, init, goal }
}

/// One proposed step: a skill, its argument symbols and the simplified
/// precondition/effect lists.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionSketch {
    pub skill: Name,
    pub description: String,
    pub params: Vec<Term>,
    pub pre: Vec<Literal>,
    pub eff: Vec<Literal>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Subtask {
    pub id: u32,
    pub description: String,
    pub skills: Vec<Name>,
    pub goal: Vec<GroundLiteral>,
    pub steps: Vec<ActionSketch>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub subtasks: Vec<Subtask>,
    /// `(before, after)` pairs of subtask ids.
    pub dependencies: Vec<(u32, u32)>,
}

impl Decomposition {
    pub fn subtask(&self, id: u32) -> Option<&Subtask> {
        self.subtasks.iter().find(|s| s.id == id)
    }

    pub fn goal(&self) -> Vec<GroundLiteral> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for g in self.subtasks.iter().flat_map(|s| &s.goal) {
            if seen.insert(g.to_string()) {
                out.push(g.clone());
            }
        }
        out
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct FormatError {
    pub line: usize,
    pub message: String,
}

fn to_term(s: &str) -> Term {
    match s.strip_prefix('?') {
        Some(v) => Term::Var(Name::from(v)),
        None => Term::Object(Name::from(s)),
    }
}

fn to_literal(e: &SExpr) -> Result<Literal, String> {
    let items = e.list().ok_or_else(|| format!("expected a literal, found {}", e.symbol().unwrap_or("?")))?;
    if e.head().is_some_and(|h| h.eq_ignore_ascii_case("not")) {
        if items.len() != 2 {
            return Err("malformed negation".into());
        }
        let inner = to_literal(&items[1])?;
        if !inner.positive {
            return Err("double negation".into());
        }
        return Ok(Literal { positive: false, ..inner });
    }
    let predicate = e.head().ok_or("literal without a predicate name")?;
    let args = items[1..]
        .iter()
        .map(|a| a.symbol().map(to_term).ok_or_else(|| "nested term".to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Literal { predicate: Name::from(predicate), args, positive: true })
}

/// Parses zero or more literals, optionally comma separated or wrapped in
/// `(and ...)`. `none` and the empty string yield no literals.
pub fn parse_literals(text: &str) -> Result<Vec<Literal>, String> {
    let t = text.trim().trim_end_matches('.');
    if t.is_empty() || t.eq_ignore_ascii_case("none") {
        return Ok(Vec::new());
    }
    let wrapped = format!("(and {})", t.replace(',', " "));
    let e = sexpr::read(&wrapped).map_err(|d| d.message)?;
    let mut out = Vec::new();
    let mut stack: Vec<&SExpr> = e.list().unwrap_or(&[])[1..].iter().rev().collect();
    while let Some(x) = stack.pop() {
        if x.head().is_some_and(|h| h.eq_ignore_ascii_case("and")) {
            stack.extend(x.list().unwrap_or(&[])[1..].iter().rev());
        } else {
            out.push(to_literal(x)?);
        }
    }
    Ok(out)
}

pub fn ground_literal(l: &Literal) -> Option<GroundLiteral> {
    let args = l
        .args
        .iter()
        .map(|t| match t {
            Term::Object(o) => Some(o.clone()),
            Term::Var(_) => None,
        })
        .collect::<Option<Vec<_>>>()?;
    Some(GroundLiteral { atom: GroundAtom { predicate: l.predicate.clone(), args }, positive: l.positive })
}

fn split_list(s: &str) -> Vec<String> {
    s.split(|c: char| c == ',' || c.is_whitespace()).filter(|x| !x.is_empty()).map(str::to_string).collect()
}

fn step_header(line: &str) -> Option<(&str, &str)> {
    let (head, rest) = line.split_once(':')?;
    let head = head.trim();
    let ok = !head.is_empty() && head.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    ok.then_some((head, rest.trim()))
}

/// Reads the pinned decomposition layout:
///
/// ```text
/// Subtask 1: Put the egg in the fridge. (skills required: GoToObject, OpenObject)
/// Goal: (at-location Egg Fridge)
/// GoToObject: Robot goes to the fridge.
/// - Parameters: ?robot, Fridge
/// - Preconditions: (not (inaction ?robot))
/// - Effects: (at ?robot Fridge)
/// Dependencies: 2 after 1
/// ```
///
/// A repeated `Subtask N:` header continues the existing subtask, so a
/// summary list followed by per-subtask detail sections is accepted.
pub fn parse_decomposition(text: &str) -> Result<Decomposition, FormatError> {
    let mut d = Decomposition::default();
    let mut cur: Option<usize> = None;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let err = |message: String| FormatError { line: n + 1, message };
        if line.is_empty() || line == "..." {
            continue;
        }
        let lower = line.to_ascii_lowercase();
        if let Some(rest) = lower.strip_prefix("subtask ") {
            let (num, _) = rest.split_once(':').ok_or_else(|| err("subtask header needs `Subtask N:`".into()))?;
            let id: u32 = num.trim().parse().map_err(|_| err(format!("bad subtask number {num:?}")))?;
            let body = line.split_once(':').map(|x| x.1).unwrap_or("").trim();
            let (desc, skills) = match body.to_ascii_lowercase().find("(skills required:") {
                Some(at) => {
                    let inner = &body[at + "(skills required:".len()..];
                    let inner = inner.trim_end().trim_end_matches(')');
                    (body[..at].trim(), Some(split_list(inner)))
                }
                None => (body, None),
            };
            let idx = match d.subtasks.iter().position(|s| s.id == id) {
                Some(i) => i,
                None => {
                    d.subtasks.push(Subtask { id, description: String::new(), skills: vec![], goal: vec![], steps: vec![] });
                    d.subtasks.len() - 1
                }
            };
            let s = &mut d.subtasks[idx];
            if s.description.is_empty() {
                s.description = desc.trim_end_matches('.').to_string();
            }
            if let Some(sk) = skills {
                s.skills = sk.iter().map(|x| Name::from(x.as_str())).collect();
            }
            cur = Some(idx);
        } else if let Some(rest) = lower.strip_prefix("dependencies:") {
            let rest = rest.trim();
            if rest.is_empty() || rest == "none" {
                continue;
            }
            for part in rest.split(',') {
                let (a, b) = part.split_once("after").ok_or_else(|| err(format!("dependency {part:?} needs `B after A`")))?;
                let after: u32 = a.trim().parse().map_err(|_| err(format!("bad subtask id in {part:?}")))?;
                let before: u32 = b.trim().parse().map_err(|_| err(format!("bad subtask id in {part:?}")))?;
                d.dependencies.push((before, after));
            }
        } else if let Some(rest) = line.strip_prefix("- ").or_else(|| line.strip_prefix("-")) {
            let s = cur.map(|i| &mut d.subtasks[i]).ok_or_else(|| err("field outside a subtask".into()))?;
            let step = s.steps.last_mut().ok_or_else(|| err("field before any step".into()))?;
            let (key, value) = rest.split_once(':').ok_or_else(|| err(format!("expected `key: value`, found {rest:?}")))?;
            match key.trim().to_ascii_lowercase().as_str() {
                "parameters" => step.params = split_list(value).iter().map(|p| to_term(p)).collect(),
                "preconditions" => step.pre = parse_literals(value).map_err(err)?,
                "effects" => step.eff = parse_literals(value).map_err(err)?,
                other => return Err(err(format!("unknown field {other:?}"))),
            }
        } else if lower.starts_with("goal:") {
            let s = cur.map(|i| &mut d.subtasks[i]).ok_or_else(|| err("goal outside a subtask".into()))?;
            let lits = parse_literals(line.split_once(':').map(|x| x.1).unwrap_or("")).map_err(err)?;
            for l in lits {
                let g = ground_literal(&l).ok_or_else(|| err(format!("goal literal {l} has a variable")))?;
                s.goal.push(g);
            }
        } else if let Some((skill, desc)) = step_header(line) {
            let s = cur.map(|i| &mut d.subtasks[i]).ok_or_else(|| err("step outside a subtask".into()))?;
            s.steps.push(ActionSketch {
                skill: Name::from(skill),
                description: desc.to_string(),
                params: vec![],
                pre: vec![],
                eff: vec![],
            });
        } else {
            return Err(err(format!("unrecognized line {line:?}")));
        }
    }
    if d.subtasks.is_empty() {
        return Err(FormatError { line: 0, message: "no subtasks".into() });
    }
    Ok(d)
}

fn join<T: std::fmt::Display>(xs: &[T], sep: &str) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(sep)
}

/// Inverse of [`parse_decomposition`].
pub fn render_decomposition(d: &Decomposition) -> String {
    let mut out = String::new();
    for s in &d.subtasks {
        let _ = writeln!(out, "Subtask {}: {}. (skills required: {})", s.id, s.description, join(&s.skills, ", "));
        if !s.goal.is_empty() {
            let _ = writeln!(out, "Goal: {}", join(&s.goal, " "));
        }
        for st in &s.steps {
            let _ = writeln!(out, "{}: {}", st.skill, st.description);
            let _ = writeln!(out, "- Parameters: {}", join(&st.params, ", "));
            let pre = if st.pre.is_empty() { "none".to_string() } else { join(&st.pre, ", ") };
            let eff = if st.eff.is_empty() { "none".to_string() } else { join(&st.eff, ", ") };
            let _ = writeln!(out, "- Preconditions: {pre}");
            let _ = writeln!(out, "- Effects: {eff}");
        }
        out.push('\n');
    }
    if !d.dependencies.is_empty() {
        let deps: Vec<String> = d.dependencies.iter().map(|(a, b)| format!("{b} after {a}")).collect();
        let _ = writeln!(out, "Dependencies: {}", deps.join(", "));
    }
    out
}

/// Resolves a sketch term: `?robot` to the executing robot, other
/// variables to the scene object of the same name, objects to themselves.
pub fn resolve_term(t: &Term, robot: Option<&Name>, scene: &Scene) -> Option<Name> {
    match t {
        Term::Var(v) if v.eq_str("robot") => robot.cloned(),
        Term::Var(v) | Term::Object(v) => scene.object(v.as_str()).map(|o| o.name.clone()),
    }
}

impl ActionSketch {
    pub fn call(&self, robot: &Name, scene: &Scene) -> Option<ActionCall> {
        let args = self.params.iter().map(|p| resolve_term(p, Some(robot), scene)).collect::<Option<Vec<_>>>()?;
        Some(ActionCall { name: self.skill.clone(), args })
    }

    /// Schema preconditions and effects under this sketch's arguments,
    /// ground for `robot`.
    pub fn ground_schema(&self, schema: &ActionSchema, robot: &Name, scene: &Scene) -> Option<(Vec<GroundLiteral>, Vec<GroundLiteral>)> {
        if schema.params.len() != self.params.len() {
            return None;
        }
        let args = self.params.iter().map(|p| resolve_term(p, Some(robot), scene)).collect::<Option<Vec<_>>>()?;
        let ground = |ls: &[Literal]| {
            ls.iter()
                .map(|l| {
                    let args = l
                        .args
                        .iter()
                        .map(|t| match t {
                            Term::Var(v) => schema.params.iter().position(|p| &p.var == v).map(|i| args[i].clone()),
                            Term::Object(o) => Some(o.clone()),
                        })
                        .collect::<Option<Vec<_>>>()?;
                    Some(GroundLiteral { atom: GroundAtom { predicate: l.predicate.clone(), args }, positive: l.positive })
                })
                .collect::<Option<Vec<_>>>()
        };
        Some((ground(&schema.precondition)?, ground(&schema.effect)?))
    }

    /// Schema literals with schema variables renamed to this sketch's terms.
    pub fn substitute(&self, schema: &ActionSchema, lits: &[Literal]) -> Vec<Literal> {
        lits.iter()
            .map(|l| Literal {
                predicate: l.predicate.clone(),
                positive: l.positive,
                args: l
                    .args
                    .iter()
                    .map(|t| match t {
                        Term::Var(v) => schema
                            .params
                            .iter()
                            .position(|p| &p.var == v)
                            .and_then(|i| self.params.get(i).cloned())
                            .unwrap_or_else(|| t.clone()),
                        other => other.clone(),
                    })
                    .collect(),
            })
            .collect()
    }
}
