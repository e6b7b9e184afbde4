//! Language-model driven stages: decomposition into subtasks, allocation
//! to robots, per-robot problem generation, and the plan fallback loop.
//!
//! Every model call goes through [`LmProvider`]; the fixture provider makes
//! the whole front half deterministic.

mod allocate;
mod model;
mod provider;

use std::fmt;

use thiserror::Error;

use crate::ground::GroundTask;
use crate::pddl::{
    parse_problem, render_domain, Diagnostic, Diagnostics, GroundAtom, Literal, Location, Name, Parsed, Problem,
    Severity, Term,
};
use crate::search::{self, parse_plan_text, resolve_calls, Plan, SearchConfig, SearchError};
use crate::validate::validate_plan;

pub use allocate::{
    allocate, allocate_greedy, greedy_cover, parse_allocation_response, AllocateError, Allocation, AllocationSource,
    Assignment, Dependency, Endpoint,
};
pub use model::{
    ground_literal, parse_decomposition, parse_literals, render_decomposition, resolve_term, team_domain, team_problem,
    ActionSketch, Decomposition, FormatError, ProfileError, RobotProfile, RobotSpec, Scene, SceneError, SceneObject,
    Subtask,
};
pub use provider::{
    FixtureMap, FixtureProvider, HttpProvider, LmProvider, LmRequest, ProviderError, Recorder, ReplayProvider,
    API_KEY_VAR,
};

pub const DEFAULT_RETRIES: u32 = 3;

/// Pipeline stage, rendered as the provider role tag.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Stage {
    Precondition,
    Allocation,
    Problem { subtask: u32, robot: Name },
    Replan { subtask: u32, robot: Name },
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage::Precondition => f.write_str("precondition"),
            Stage::Allocation => f.write_str("allocation"),
            Stage::Problem { subtask, robot } => write!(f, "problem/{subtask}/{robot}"),
            Stage::Replan { subtask, robot } => write!(f, "replan/{subtask}/{robot}"),
        }
    }
}

/// Scenario id, provider and retry budget shared by all stages of a run.
pub struct StageContext<'a> {
    pub scenario: String,
    pub lm: &'a dyn LmProvider,
    pub max_retries: u32,
}

impl<'a> StageContext<'a> {
    pub fn new(scenario: impl Into<String>, lm: &'a dyn LmProvider) -> Self {
        StageContext { scenario: scenario.into(), lm, max_retries: DEFAULT_RETRIES }
    }

    pub fn ask(&self, stage: Stage, turn: u32, system: &str, prompt: String) -> Result<String, ProviderError> {
        self.lm.request(&LmRequest {
            scenario: self.scenario.clone(),
            role: stage.to_string(),
            turn,
            system: system.to_string(),
            prompt,
        })
    }
}

#[derive(Debug, Error)]
pub enum DecomposeError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("{stage}: no usable response after {attempts} attempts; last problem: {last}")]
    Unparseable { stage: String, attempts: u32, last: String },
    #[error("unknown skills: {}", .0.iter().map(|n| n.as_str()).collect::<Vec<_>>().join(", "))]
    UnknownSkills(Vec<Name>),
    #[error("decomposition rejected:\n{0}")]
    Invalid(Diagnostics),
    #[error("problem for subtask {subtask} on {robot} still malformed after retries:\n{diagnostics}")]
    ProblemRejected { subtask: u32, robot: Name, diagnostics: Diagnostics },
    #[error("no valid plan for subtask {subtask} on {robot}: {}", .reasons.join("; "))]
    PlanningFailed { subtask: u32, robot: Name, reasons: Vec<String> },
    #[error(transparent)]
    Allocate(#[from] AllocateError),
}

const PRECONDITION_SYSTEM: &str = "You plan household work for a team of robots. Split the instruction into numbered subtasks. For each subtask list the skills it needs, its goal literals, and each step with its parameters and the preconditions and effects that matter.";

const PROBLEM_SYSTEM: &str = "You write PDDL problem files. Reply with a single (define (problem ...)) form for the given domain, objects, initial state and goal, and nothing else.";

const REPLAN_SYSTEM: &str = "You write plans for one robot. Reply with one action per line in the form `<index>: (<Action> <args>)`.";

fn skill_list(robots: &[RobotProfile]) -> String {
    robots
        .iter()
        .map(|r| format!("{}: {}", r.id, r.skills().map(Name::as_str).collect::<Vec<_>>().join(", ")))
        .collect::<Vec<_>>()
        .join("\n")
}

fn scene_summary(scene: &Scene) -> String {
    let mut s = String::new();
    for o in &scene.objects {
        match &o.location {
            Some(l) => s.push_str(&format!("{} ({}) at {}\n", o.name, o.ty, l)),
            None => s.push_str(&format!("{} ({})\n", o.name, o.ty)),
        }
    }
    for a in &scene.init {
        s.push_str(&format!("{a}\n"));
    }
    s
}

fn skill_known(robots: &[RobotProfile], skill: &Name) -> bool {
    robots.iter().any(|r| r.has_skill(skill))
}

/// Asks the provider for a decomposition of `instruction`. Malformed
/// answers are re-requested up to the retry limit.
pub fn identify_preconditions(
    instruction: &str,
    scene: &Scene,
    robots: &[RobotProfile],
    ctx: &StageContext<'_>,
) -> Result<Decomposition, DecomposeError> {
    let mut last = String::new();
    for turn in 0..ctx.max_retries {
        let mut prompt = format!("Instruction: {instruction}\n\nRobots:\n{}\n\nObjects:\n{}", skill_list(robots), scene_summary(scene));
        if !last.is_empty() {
            prompt.push_str(&format!("\nYour previous answer could not be read: {last}\n"));
        }
        let text = ctx.ask(Stage::Precondition, turn, PRECONDITION_SYSTEM, prompt)?;
        let d = match parse_decomposition(&text) {
            Ok(d) => d,
            Err(e) => {
                last = e.to_string();
                continue;
            }
        };
        let mut unknown: Vec<Name> = Vec::new();
        for s in &d.subtasks {
            for k in s.skills.iter().chain(s.steps.iter().map(|st| &st.skill)) {
                if !skill_known(robots, k) && !unknown.contains(k) {
                    unknown.push(k.clone());
                }
            }
        }
        if !unknown.is_empty() {
            return Err(DecomposeError::UnknownSkills(unknown));
        }
        let diags = validate_decomposition(&d, scene, robots);
        if diags.has_errors() {
            return Err(DecomposeError::Invalid(diags));
        }
        return Ok(d);
    }
    Err(DecomposeError::Unparseable { stage: Stage::Precondition.to_string(), attempts: ctx.max_retries, last })
}

fn error(path: String, message: String) -> Diagnostic {
    Diagnostic { severity: Severity::Error, location: Location::Path(path), message }
}

/// Variables naming a scene object become that object, so `?egg` and `Egg`
/// compare equal.
fn normalize(lits: &[Literal], scene: &Scene) -> Vec<Literal> {
    lits.iter()
        .map(|l| Literal {
            args: l
                .args
                .iter()
                .map(|t| match t {
                    Term::Var(v) if !v.eq_str("robot") => match scene.object(v.as_str()) {
                        Some(o) => Term::Object(o.name.clone()),
                        None => t.clone(),
                    },
                    Term::Object(o) => Term::Object(scene.object(o.as_str()).map(|x| x.name.clone()).unwrap_or_else(|| o.clone())),
                    _ => t.clone(),
                })
                .collect(),
            ..l.clone()
        })
        .collect()
}

/// Checks sketches against their schemas and the scene, and goal literals
/// against the team's predicates.
pub fn validate_decomposition(d: &Decomposition, scene: &Scene, robots: &[RobotProfile]) -> Diagnostics {
    let mut out = Diagnostics::new();
    for (si, s) in d.subtasks.iter().enumerate() {
        let base = format!("subtasks[{si}]");
        if !s.steps.is_empty() {
            for k in &s.skills {
                if !s.steps.iter().any(|st| &st.skill == k) {
                    out.push(error(format!("{base}.skills"), format!("required skill {k} has no step")));
                }
            }
        }
        for (ji, st) in s.steps.iter().enumerate() {
            let path = format!("{base}.steps[{ji}]");
            let Some(schema) = robots.iter().find_map(|r| r.schema(&st.skill)) else {
                out.push(error(path, format!("unknown skill {}", st.skill)));
                continue;
            };
            if schema.params.len() != st.params.len() {
                out.push(error(
                    format!("{path}.params"),
                    format!("arity mismatch for {}: expected {}, got {}", st.skill, schema.params.len(), st.params.len()),
                ));
                continue;
            }
            for (pi, p) in st.params.iter().enumerate() {
                if resolve_term(p, Some(&Name::from("robot")), scene).is_none() {
                    out.push(error(format!("{path}.params[{pi}]"), format!("unknown object {p}")));
                }
            }
            let pre = normalize(&st.substitute(schema, &schema.precondition), scene);
            for (li, l) in normalize(&st.pre, scene).iter().enumerate() {
                if !pre.contains(l) {
                    out.push(error(format!("{path}.pre[{li}]"), format!("precondition {l} is not declared by {}", st.skill)));
                }
            }
            let eff = normalize(&st.substitute(schema, &schema.effect), scene);
            for (li, l) in normalize(&st.eff, scene).iter().enumerate() {
                if !eff.contains(l) {
                    out.push(error(format!("{path}.eff[{li}]"), format!("effect {l} is not declared by {}", st.skill)));
                }
            }
        }
        for (gi, g) in s.goal.iter().enumerate() {
            let decl = robots.iter().find_map(|r| r.domain.predicate(&g.atom.predicate));
            let arity_ok = decl.is_some_and(|p| p.params.len() == g.atom.args.len());
            let objects_ok =
                g.atom.args.iter().all(|a| scene.object(a.as_str()).is_some() || robots.iter().any(|r| &r.id == a));
            if !arity_ok || !objects_ok {
                out.push(error(format!("{base}.goal[{gi}]"), format!("ungroundable goal {g}")));
            }
        }
    }
    out
}

/// Goal of `robot`'s part of a subtask: the subtask goal literals achieved
/// by an effect of one of its steps; the whole goal for an unsplit subtask.
pub fn part_goal(subtask: &Subtask, part: &Assignment, robot: &RobotProfile, scene: &Scene, split: bool) -> Vec<crate::pddl::GroundLiteral> {
    if !split {
        return subtask.goal.clone();
    }
    let mut effects = Vec::new();
    for i in &part.steps {
        let st = &subtask.steps[*i];
        if let Some((_, eff)) = robot.schema(&st.skill).and_then(|sc| st.ground_schema(sc, &robot.id, scene)) {
            effects.extend(eff);
        }
    }
    subtask.goal.iter().filter(|g| effects.contains(g)).cloned().collect()
}

fn problem_prompt(subtask: &Subtask, scene: &Scene, robot: &RobotProfile, init: &[GroundAtom], feedback: Option<&Diagnostics>) -> String {
    let mut p = format!("Domain:\n{}\nRobot: {}\nSubtask {}: {}\n", render_domain(&robot.domain), robot.id, subtask.id, subtask.description);
    let goal: Vec<String> = subtask.goal.iter().map(|g| g.to_string()).collect();
    p.push_str(&format!("Goal: {}\nObjects:\n{}", goal.join(" "), scene_summary(scene)));
    let atoms: Vec<String> = init.iter().map(|a| a.to_string()).collect();
    p.push_str(&format!("Initial atoms: {}\n", atoms.join("; ")));
    for st in &subtask.steps {
        let params: Vec<String> = st.params.iter().map(|t| t.to_string()).collect();
        p.push_str(&format!("Step {}({})\n", st.skill, params.join(", ")));
    }
    if let Some(d) = feedback {
        p.push_str(&format!("\nThe previous problem was rejected:\n{d}"));
    }
    p
}

/// Requests the PDDL problem for `robot`'s part of `subtask` and checks it
/// against the robot's domain, re-prompting with the diagnostics.
pub fn generate_problem(
    subtask: &Subtask,
    scene: &Scene,
    robot: &RobotProfile,
    init: &[GroundAtom],
    ctx: &StageContext<'_>,
) -> Result<Parsed<Problem>, DecomposeError> {
    let stage = Stage::Problem { subtask: subtask.id, robot: robot.id.clone() };
    let mut last: Option<Diagnostics> = None;
    for turn in 0..ctx.max_retries {
        let prompt = problem_prompt(subtask, scene, robot, init, last.as_ref());
        let text = ctx.ask(stage.clone(), turn, PROBLEM_SYSTEM, prompt)?;
        match parse_problem(&text, &robot.domain) {
            Ok(mut parsed) => {
                if parsed.value.goal.is_empty() {
                    parsed.warnings.push(Diagnostic {
                        severity: Severity::Warning,
                        location: Location::Path("goal".into()),
                        message: "empty goal".into(),
                    });
                }
                return Ok(parsed);
            }
            Err(d) => last = Some(d),
        }
    }
    Err(DecomposeError::ProblemRejected { subtask: subtask.id, robot: robot.id.clone(), diagnostics: last.unwrap_or_default() })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlanSource {
    Search,
    /// Accepted from the provider at this turn.
    Provider(u32),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanOutcome {
    pub plan: Plan,
    pub source: PlanSource,
    pub provider_calls: u32,
}

/// Plans with search first; when search gives up, asks the provider for
/// a plan and accepts the first one that validates.
pub fn replan_loop(
    task: &GroundTask,
    subtask: &Subtask,
    robot: &Name,
    ctx: &StageContext<'_>,
    config: &SearchConfig,
) -> Result<PlanOutcome, DecomposeError> {
    let mut reasons = Vec::new();
    match search::plan(task, config) {
        Ok(p) => {
            let report = validate_plan(task, &p);
            if report.is_valid() {
                return Ok(PlanOutcome { plan: p, source: PlanSource::Search, provider_calls: 0 });
            }
            reasons.push(format!("search plan invalid: {}", report.render(p.len()).trim()));
        }
        Err(e @ SearchError::InadmissibleHeuristic(_)) => {
            return Err(DecomposeError::PlanningFailed { subtask: subtask.id, robot: robot.clone(), reasons: vec![e.to_string()] })
        }
        Err(e) => reasons.push(format!("search: {e}")),
    }
    let stage = Stage::Replan { subtask: subtask.id, robot: robot.clone() };
    for turn in 0..ctx.max_retries {
        let mut prompt = format!("Subtask {}: {}\nRobot: {robot}\nSteps proposed earlier:\n", subtask.id, subtask.description);
        for st in &subtask.steps {
            let params: Vec<String> = st.params.iter().map(|t| t.to_string()).collect();
            prompt.push_str(&format!("{}({})\n", st.skill, params.join(", ")));
        }
        if let Some(r) = reasons.last() {
            prompt.push_str(&format!("\nLast failure: {r}\n"));
        }
        let text = match ctx.ask(stage.clone(), turn, REPLAN_SYSTEM, prompt) {
            Ok(t) => t,
            Err(e) => {
                reasons.push(format!("provider: {e}"));
                break;
            }
        };
        let plan = match parse_plan_text(&text).map_err(|e| e.to_string()).and_then(|c| resolve_calls(task, &c).map_err(|e| e.to_string())) {
            Ok(p) => p,
            Err(e) => {
                reasons.push(format!("turn {turn}: {e}"));
                continue;
            }
        };
        let report = validate_plan(task, &plan);
        if report.is_valid() {
            return Ok(PlanOutcome { plan, source: PlanSource::Provider(turn), provider_calls: turn + 1 });
        }
        reasons.push(format!("turn {turn}: {}", report.render(plan.len()).trim()));
    }
    Err(DecomposeError::PlanningFailed { subtask: subtask.id, robot: robot.clone(), reasons })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ground::ground;
    use crate::pddl::{bundled, parse_domain};

    fn household(id: &str, skills: &[&str]) -> RobotProfile {
        let base = parse_domain(bundled::HOUSEHOLD_DOMAIN).unwrap().value;
        let sk: Vec<String> = skills.iter().map(|s| s.to_string()).collect();
        RobotProfile::from_domain(id, &base, &sk, "Start").unwrap()
    }

    fn scene() -> Scene {
        Scene::from_toml("[[object]]\nname = \"Start\"\n[[object]]\nname = \"Apple\"\n").unwrap()
    }

    const GO_APPLE: &str = "Subtask 1: Go to the apple. (skills required: GoToObject)
GoToObject: Robot goes to the apple.
- Parameters: ?robot, ?apple
- Preconditions: (not (inaction ?robot))
- Effects: (at ?robot ?apple)
";

    #[test]
    fn single_subtask_decomposition() {
        let fx = FixtureProvider::from_toml(&format!("[go.precondition]\n0 = '''\n{GO_APPLE}'''\n")).unwrap();
        let robots = [household("Robot1", &["GoToObject"])];
        let d = identify_preconditions("go to the apple", &scene(), &robots, &StageContext::new("go", &fx)).unwrap();
        assert_eq!(d.subtasks.len(), 1);
        assert_eq!(d.subtasks[0].steps.len(), 1);
        assert_eq!(d.subtasks[0].steps[0].pre[0].to_string(), "(not (inaction ?robot))");
    }

    #[test]
    fn unknown_skill_reported() {
        let text = "Subtask 1: fly (skills required: FlyToObject)";
        let fx = FixtureProvider::from_toml(&format!("[f.precondition]\n0 = '''{text}'''\n")).unwrap();
        let robots = [household("Robot1", &["GoToObject"])];
        match identify_preconditions("fly", &scene(), &robots, &StageContext::new("f", &fx)) {
            Err(DecomposeError::UnknownSkills(s)) => assert_eq!(s, vec![Name::from("FlyToObject")]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_until_retries_exhausted() {
        let fx = FixtureProvider::from_toml("[m.precondition]\n0 = 'nope'\n1 = 'still no'\n2 = 'no'\n").unwrap();
        let robots = [household("Robot1", &["GoToObject"])];
        let r = identify_preconditions("x", &scene(), &robots, &StageContext::new("m", &fx));
        assert!(matches!(r, Err(DecomposeError::Unparseable { attempts: 3, .. })), "{r:?}");
    }

    #[test]
    fn subset_and_goal_checks() {
        let robots = [household("Robot1", &["GoToObject"])];
        let mut d = parse_decomposition(GO_APPLE).unwrap();
        assert!(validate_decomposition(&d, &scene(), &robots).is_empty());
        d.subtasks[0].steps[0].pre = parse_literals("(holding ?robot ?apple)").unwrap();
        d.subtasks[0].goal = vec![ground_literal(&parse_literals("(sliced Banana)").unwrap()[0]).unwrap()];
        let diags = validate_decomposition(&d, &scene(), &robots);
        let msgs: Vec<&str> = diags.iter().map(|x| x.message.as_str()).collect();
        assert!(msgs.contains(&"precondition (holding ?robot Apple) is not declared by GoToObject"), "{msgs:?}");
        assert!(msgs.contains(&"ungroundable goal (sliced Banana)"), "{msgs:?}");
    }

    fn egg_task() -> GroundTask {
        let d = parse_domain(bundled::ROBOT2_DOMAIN).unwrap().value;
        let p = parse_problem(bundled::EGG_PROBLEM, &d).unwrap().value;
        ground(&d, &p).unwrap()
    }

    const EGG_PLAN: &str = "0: (GoToObject Robot2 Location1)\n1: (PickupObject Robot2 Egg Location1)\n2: (GoToObject Robot2 Plate)\n3: (PutObject Robot2 Egg Plate)\n";

    #[test]
    fn replan_prefers_search() {
        let fx = FixtureProvider::default();
        let sub = parse_decomposition("Subtask 1: egg").unwrap().subtasks.remove(0);
        let out = replan_loop(&egg_task(), &sub, &Name::from("Robot2"), &StageContext::new("e", &fx), &SearchConfig::default()).unwrap();
        assert_eq!(out.source, PlanSource::Search);
        assert_eq!(out.provider_calls, 0);
    }

    #[test]
    fn replan_falls_back_to_provider() {
        let fx = FixtureProvider::from_toml(&format!("[e.\"replan/1/Robot2\"]\n0 = '''{EGG_PLAN}'''\n")).unwrap();
        let sub = parse_decomposition("Subtask 1: egg").unwrap().subtasks.remove(0);
        let cfg = SearchConfig::default().with_limit(1);
        let out = replan_loop(&egg_task(), &sub, &Name::from("Robot2"), &StageContext::new("e", &fx), &cfg).unwrap();
        assert_eq!(out.source, PlanSource::Provider(0));
        assert_eq!(out.plan.cost, 4.0);
    }

    #[test]
    fn replan_gives_up() {
        let bad = "0: (PutObject Robot2 Egg Plate)";
        let fx = FixtureProvider::from_toml(&format!("[e.\"replan/1/Robot2\"]\n0 = '{bad}'\n1 = '{bad}'\n2 = '{bad}'\n")).unwrap();
        let sub = parse_decomposition("Subtask 1: egg").unwrap().subtasks.remove(0);
        let cfg = SearchConfig::default().with_limit(1);
        match replan_loop(&egg_task(), &sub, &Name::from("Robot2"), &StageContext::new("e", &fx), &cfg) {
            Err(DecomposeError::PlanningFailed { reasons, .. }) => assert_eq!(reasons.len(), 4),
            other => panic!("{other:?}"),
        }
    }
}
