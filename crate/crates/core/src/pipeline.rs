//! End-to-end run: decompose, allocate, generate problems, plan, combine,
//! then execute the trace symbolically against the whole team's task.
//!
//! With a run directory every intermediate artifact is persisted:
//! `decomposition.txt`, `allocation.json`, `problems/<robot>_<subtask>.pddl`,
//! `plans/<robot>_<subtask>.plan`, `schedule.trace`, `metrics.record`, the
//! provider `transcript.toml` and a `meta.json` holding the only
//! non-deterministic content (a timestamp).

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::bench::{RunRecord, TaskSpec};
use crate::combine::{build_dependency_graph, schedule, to_trace, PartPlan, Schedule};
use crate::decompose::{
    allocate, generate_problem, ground_literal, identify_preconditions, parse_literals, render_decomposition, replan_loop,
    team_domain, team_problem, AllocateError, Allocation, DecomposeError, Decomposition, LmProvider, Recorder,
    RobotProfile, StageContext, DEFAULT_RETRIES,
};
use crate::ground::{ground, GroundTask, State};
use crate::pddl::{render_problem, GroundLiteral, Name, Problem};
use crate::search::SearchConfig;
use crate::validate::apply;

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub search: SearchConfig,
    pub max_retries: u32,
    pub run_dir: Option<PathBuf>,
    /// Stop after problem generation.
    pub dry_run: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig { search: SearchConfig::default(), max_retries: DEFAULT_RETRIES, run_dir: None, dry_run: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FailureKind {
    /// Bad input files, fixtures or provider availability.
    Input,
    /// A stage ran but could not produce a valid result.
    Planning,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageFailure {
    pub stage: &'static str,
    pub kind: FailureKind,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Execution {
    pub executed: u32,
    pub executable: u32,
    pub final_state: Vec<String>,
    pub missing_goals: Vec<String>,
}

#[derive(Clone, Debug, Default)]
pub struct PipelineOutcome {
    pub goal: Vec<GroundLiteral>,
    pub decomposition: Option<Decomposition>,
    pub allocation: Option<Allocation>,
    pub problems: Vec<(u32, Name, Problem)>,
    pub plans: Vec<PartPlan>,
    pub schedule: Option<Schedule>,
    pub execution: Option<Execution>,
    pub failure: Option<StageFailure>,
    /// Goals still missing in the initial state; used when a stage fails.
    initially_missing: Vec<String>,
}

impl PipelineOutcome {
    pub fn success(&self) -> bool {
        self.failure.is_none() && self.execution.as_ref().is_some_and(|e| e.missing_goals.is_empty())
    }

    /// 0 success, 1 planning or validation failure, 2 input or fixture error.
    pub fn exit_code(&self) -> i32 {
        match &self.failure {
            Some(f) if f.kind == FailureKind::Input => 2,
            Some(_) => 1,
            None if self.execution.is_none() || self.success() => 0,
            None => 1,
        }
    }

    pub fn record(&self, task: &TaskSpec) -> RunRecord {
        let (executed, executable, final_state, missing) = match &self.execution {
            Some(e) => (e.executed, e.executable, e.final_state.clone(), e.missing_goals.clone()),
            None => (0, 0, vec![], self.initially_missing.clone()),
        };
        RunRecord {
            task: task.id.clone(),
            category: task.category,
            executed,
            executable,
            final_state,
            goal_count: self.goal.len() as u32,
            missing_goals: missing,
            timesteps: self.schedule.as_ref().map(Schedule::makespan).unwrap_or(0),
            transitions: executable,
            gt_steps: task.gt_steps,
            gt_transitions: task.gt_transitions,
            success: self.success() && self.execution.is_some(),
            error: self.failure.as_ref().map(|f| format!("{}: {}", f.stage, f.message)),
        }
    }
}

/// Single writer for a run directory.
struct RunWriter {
    dir: Option<PathBuf>,
}

impl RunWriter {
    /// Prepares `dir`, clearing an earlier run. Refuses a non-empty
    /// directory that holds no previous run.
    fn open(dir: Option<&Path>) -> io::Result<Self> {
        if let Some(d) = dir {
            if d.exists() {
                let empty = fs::read_dir(d)?.next().is_none();
                if !empty && !d.join("meta.json").exists() {
                    return Err(io::Error::new(io::ErrorKind::AlreadyExists, format!("{} is not empty and holds no earlier run", d.display())));
                }
                if !empty {
                    fs::remove_dir_all(d)?;
                }
            }
            fs::create_dir_all(d)?;
        }
        Ok(RunWriter { dir: dir.map(Path::to_path_buf) })
    }

    fn write(&self, rel: &str, content: &str) -> io::Result<()> {
        let Some(d) = &self.dir else { return Ok(()) };
        let path = d.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, content)
    }
}

fn fail(stage: &'static str, kind: FailureKind, message: impl ToString) -> StageFailure {
    StageFailure { stage, kind, message: message.to_string() }
}

fn decompose_kind(e: &DecomposeError) -> FailureKind {
    match e {
        DecomposeError::Provider(_) | DecomposeError::Allocate(AllocateError::Provider(_)) => FailureKind::Input,
        _ => FailureKind::Planning,
    }
}

fn missing_in(task: &GroundTask, state: &State) -> Vec<String> {
    let pos = task.goal_pos().iter().filter(|g| !state.contains(**g)).map(|g| format!("({})", atom_sexpr(task, *g)));
    let neg = task.goal_neg().iter().filter(|g| state.contains(**g)).map(|g| format!("(not ({}))", atom_sexpr(task, *g)));
    pos.chain(neg).collect()
}

fn atom_sexpr(task: &GroundTask, id: crate::ground::AtomId) -> String {
    let a = task.atom(id);
    std::iter::once(a.predicate.as_str()).chain(a.args.iter().map(Name::as_str)).collect::<Vec<_>>().join(" ")
}

/// Replays schedule rows in `(t, robot)` order; rows whose preconditions
/// fail are counted and skipped.
pub fn execute_schedule(task: &GroundTask, s: &Schedule) -> Execution {
    let mut state = task.init().clone();
    let mut executable = 0;
    for call in s.calls() {
        if let Some(next) = task.find_action(call).and_then(|a| apply(&state, task.action(a)).ok()) {
            state = next;
            executable += 1;
        }
    }
    Execution {
        executed: s.rows.len() as u32,
        executable,
        final_state: state.iter().map(|a| format!("({})", atom_sexpr(task, a))).collect(),
        missing_goals: missing_in(task, &state),
    }
}

fn parse_goal(lits: &[String]) -> Result<Vec<GroundLiteral>, String> {
    let mut out = Vec::new();
    for g in lits {
        let ls = parse_literals(g)?;
        for l in ls {
            out.push(ground_literal(&l).ok_or_else(|| format!("goal {g} is not ground"))?);
        }
    }
    Ok(out)
}

pub fn run_pipeline(task: &TaskSpec, lm: &dyn LmProvider, cfg: &PipelineConfig) -> PipelineOutcome {
    let mut out = PipelineOutcome::default();
    let writer = match RunWriter::open(cfg.run_dir.as_deref()) {
        Ok(w) => w,
        Err(e) => {
            out.failure = Some(fail("input", FailureKind::Input, e));
            return out;
        }
    };
    let recorder = Recorder::new(lm);
    let ctx = StageContext { scenario: task.id.clone(), lm: &recorder, max_retries: cfg.max_retries };
    if let Err(f) = stages(task, &ctx, cfg, &writer, &mut out) {
        out.failure = Some(f);
    }
    let mut io_err = writer.write("transcript.toml", &recorder.to_toml()).err();
    if let Some(e) = &io_err {
        out.failure.get_or_insert_with(|| fail("persist", FailureKind::Input, e));
    }
    if out.execution.is_some() || out.failure.is_some() {
        let rec = out.record(task);
        let json = serde_json::to_string_pretty(&rec).expect("record serializes") + "\n";
        io_err = writer.write("metrics.record", &json).err();
    }
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let meta = serde_json::json!({ "scenario": task.id, "timestamp": stamp, "version": env!("CARGO_PKG_VERSION") });
    io_err = io_err.or(writer.write("meta.json", &(meta.to_string() + "\n")).err());
    if let Some(e) = io_err {
        out.failure.get_or_insert_with(|| fail("persist", FailureKind::Input, e));
    }
    out
}

fn stages(task: &TaskSpec, ctx: &StageContext<'_>, cfg: &PipelineConfig, w: &RunWriter, out: &mut PipelineOutcome) -> Result<(), StageFailure> {
    let io = |e: io::Error| fail("persist", FailureKind::Input, e);
    let input = |m: String| fail("input", FailureKind::Input, m);

    let robots = task
        .robots
        .iter()
        .map(RobotProfile::from_spec)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| input(e.to_string()))?;
    if let Some(r) = robots.iter().find(|r| task.scene.object(r.location.as_str()).is_none()) {
        return Err(input(format!("robot {} starts at undeclared object {}", r.id, r.location)));
    }
    let domain = team_domain(&robots).ok_or_else(|| input("no robots".into()))?;
    out.goal = parse_goal(&task.goal).map_err(input)?;
    let team = team_problem(&task.id, &domain, &task.scene, &robots, out.goal.clone());
    let team_task = ground(&domain, &team).map_err(|e| input(e.to_string()))?;
    out.initially_missing = missing_in(&team_task, team_task.init());

    let d = identify_preconditions(&task.instruction, &task.scene, &robots, ctx)
        .map_err(|e| fail("decompose", decompose_kind(&e), e))?;
    w.write("decomposition.txt", &render_decomposition(&d)).map_err(io)?;
    if out.goal.is_empty() {
        out.goal = d.goal();
    }
    out.decomposition = Some(d.clone());

    let alloc = allocate(&d, &robots, &task.scene, ctx).map_err(|e| {
        let kind = if matches!(e, AllocateError::Provider(_)) { FailureKind::Input } else { FailureKind::Planning };
        fail("allocate", kind, e)
    })?;
    w.write("allocation.json", &alloc.to_json()).map_err(io)?;
    out.allocation = Some(alloc.clone());

    for (sid, part) in alloc.parts() {
        let robot = robots.iter().find(|r| r.id == part.robot).expect("allocated robots exist");
        let sub = d.subtask(sid).expect("allocated subtasks exist");
        let parsed = generate_problem(sub, &task.scene, robot, &team.init, ctx).map_err(|e| fail("generate", decompose_kind(&e), e))?;
        w.write(&format!("problems/{}_{}.pddl", robot.id, sid), &render_problem(&parsed.value)).map_err(io)?;
        out.problems.push((sid, robot.id.clone(), parsed.value));
    }
    if cfg.dry_run {
        return Ok(());
    }

    for (sid, robot_id, problem) in &out.problems {
        let robot = robots.iter().find(|r| &r.id == robot_id).expect("robot exists");
        let sub = d.subtask(*sid).expect("subtask exists");
        let gt = ground(&robot.domain, problem).map_err(|e| fail("plan", FailureKind::Planning, e))?;
        let outcome = replan_loop(&gt, sub, robot_id, ctx, &cfg.search).map_err(|e| fail("plan", decompose_kind(&e), e))?;
        w.write(&format!("plans/{}_{}.plan", robot_id, sid), &outcome.plan.render(&gt)).map_err(io)?;
        out.plans.push(PartPlan { subtask: *sid, robot: robot_id.clone(), calls: outcome.plan.calls(&gt) });
    }

    let graph = build_dependency_graph(&alloc, &out.plans).map_err(|e| fail("combine", FailureKind::Planning, e))?;
    let sched = schedule(&graph).map_err(|e| fail("combine", FailureKind::Planning, e))?;
    w.write("schedule.trace", &to_trace(&sched).to_string()).map_err(io)?;
    out.execution = Some(execute_schedule(&team_task, &sched));
    out.schedule = Some(sched);
    Ok(())
}
