use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use teamplan::bench::{
    aggregate_improvement, compute_metrics, load_task_suite, published_results, render_gains, run_suite, CategoryTable,
    RunRecord, Suite, TaskSpec, BUNDLED_FIXTURES,
};
use teamplan::combine::{build_dependency_graph, schedule, to_trace, PartPlan};
use teamplan::decompose::{
    allocate, identify_preconditions, render_decomposition, Allocation, FixtureProvider, HttpProvider, LmProvider,
    RobotProfile, StageContext,
};
use teamplan::ground::ground;
use teamplan::pddl::{parse_domain, parse_problem, Diagnostics, Domain, Name, Problem};
use teamplan::pipeline::{run_pipeline, PipelineConfig};
use teamplan::search::{self, parse_plan_text, resolve_calls, HeuristicKind, Mode, SearchConfig, SearchError};
use teamplan::validate::validate_plan;

#[derive(Parser)]
#[command(name = "teamplan", version, about = "Multi-robot task planner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and check a domain, and optionally a problem against it.
    Parse { domain: PathBuf, problem: Option<PathBuf> },
    /// Ground a task and print its size.
    Ground {
        domain: PathBuf,
        problem: PathBuf,
        /// Print every ground action with its pre, add and del atoms.
        #[arg(long)]
        dump: bool,
    },
    /// Search for a plan.
    Plan {
        domain: PathBuf,
        problem: PathBuf,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Check a plan file against a task.
    Validate {
        domain: PathBuf,
        problem: PathBuf,
        plan: PathBuf,
        /// Print a JSON report instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Decompose and allocate a scenario without planning.
    Decompose {
        scenario: PathBuf,
        #[command(flatten)]
        select: TaskSelect,
        #[command(flatten)]
        provider: ProviderArgs,
    },
    /// Merge per-robot plans into a timed trace.
    Combine {
        allocation: PathBuf,
        /// Plan files named `<robot>_<subtask>.plan`.
        #[arg(required = true)]
        plans: Vec<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run every stage on one scenario.
    Pipeline {
        scenario: PathBuf,
        #[command(flatten)]
        select: TaskSelect,
        #[command(flatten)]
        provider: ProviderArgs,
        #[command(flatten)]
        search: SearchArgs,
        /// Run directory for intermediate artifacts.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Stop after problem generation.
        #[arg(long)]
        dry_run: bool,
        #[arg(long, default_value_t = teamplan::decompose::DEFAULT_RETRIES)]
        retries: u32,
    },
    /// Run a task suite, tabulate metrics, or compare result sets.
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Run a task suite and write `records.json`.
    Run {
        suite: PathBuf,
        #[command(flatten)]
        provider: ProviderArgs,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Tabulate a records file.
    Metrics { records: PathBuf },
    /// Compare two result sets. Each is a records file or `published:<label>`.
    Compare {
        candidate: String,
        baseline: String,
        #[arg(long, value_delimiter = ',', default_values_t = [30.0, 20.0, 20.0])]
        weights: Vec<f64>,
    },
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long, default_value = "satisficing")]
    mode: Mode,
    /// Defaults to h_ff, or h_max in optimal mode.
    #[arg(long)]
    heuristic: Option<HeuristicKind>,
    #[arg(long, default_value_t = search::DEFAULT_EXPANSION_LIMIT)]
    limit: usize,
}

impl SearchArgs {
    fn config(&self) -> SearchConfig {
        let base = if self.mode == Mode::Optimal { SearchConfig::optimal() } else { SearchConfig::default() };
        SearchConfig { heuristic: self.heuristic.unwrap_or(base.heuristic), ..base }.with_limit(self.limit)
    }
}

#[derive(Args)]
struct TaskSelect {
    /// Task id inside the scenario file; required when it holds several.
    #[arg(long)]
    task: Option<String>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProviderKind {
    Mock,
    Replay,
    Live,
}

#[derive(Args)]
struct ProviderArgs {
    #[arg(long, value_enum, default_value = "mock")]
    provider: ProviderKind,
    /// Fixture file or directory; the mock provider falls back to the bundled fixtures.
    #[arg(long)]
    fixtures: Option<PathBuf>,
    #[arg(long, default_value = "https://api.openai.com/v1/chat/completions")]
    endpoint: String,
    #[arg(long, default_value = "gpt-4o")]
    model: String,
}

impl ProviderArgs {
    fn build(&self) -> Result<Box<dyn LmProvider>, Failure> {
        match (self.provider, &self.fixtures) {
            (ProviderKind::Live, _) => Ok(Box::new(HttpProvider::from_env(&self.endpoint, &self.model).map_err(Failure::input)?)),
            (_, Some(p)) => Ok(Box::new(FixtureProvider::load(p).map_err(Failure::input)?)),
            (ProviderKind::Mock, None) => Ok(Box::new(FixtureProvider::from_toml(BUNDLED_FIXTURES).map_err(Failure::input)?)),
            (ProviderKind::Replay, None) => Err(Failure::input("the replay provider needs --fixtures")),
        }
    }
}

/// Writes to stdout; a closed pipe ends the process quietly.
fn out(text: String) {
    let mut stdout = std::io::stdout().lock();
    if let Err(e) = stdout.write_all(text.as_bytes()) {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error: {e}");
        std::process::exit(2);
    }
}

macro_rules! outp {
    ($($t:tt)*) => { out(format!($($t)*)) };
}

macro_rules! outln {
    ($($t:tt)*) => { out(format!($($t)*) + "\n") };
}

/// Message and exit code of a failed command.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(e: impl ToString) -> Self {
        Failure { code: 2, message: e.to_string() }
    }

    fn planning(e: impl ToString) -> Self {
        Failure { code: 1, message: e.to_string() }
    }
}

type CmdResult = Result<u8, Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn print_warnings(path: &Path, d: &Diagnostics) {
    for w in d.iter() {
        eprintln!("{}: {w}", path.display());
    }
}

fn load_domain(path: &Path) -> Result<Domain, Failure> {
    match parse_domain(&read(path)?) {
        Ok(p) => {
            print_warnings(path, &p.warnings);
            Ok(p.value)
        }
        Err(d) => Err(Failure::input(d.iter().map(|x| format!("{}: {x}", path.display())).collect::<Vec<_>>().join("\n"))),
    }
}

fn load_problem(path: &Path, domain: &Domain) -> Result<Problem, Failure> {
    match parse_problem(&read(path)?, domain) {
        Ok(p) => {
            print_warnings(path, &p.warnings);
            Ok(p.value)
        }
        Err(d) => Err(Failure::input(d.iter().map(|x| format!("{}: {x}", path.display())).collect::<Vec<_>>().join("\n"))),
    }
}

fn load_task(path: &Path, select: &TaskSelect) -> Result<TaskSpec, Failure> {
    let suite: Suite = load_task_suite(path).map_err(Failure::input)?;
    match &select.task {
        Some(id) => suite.task(id).cloned().ok_or_else(|| Failure::input(format!("no task {id} in {}", path.display()))),
        None if suite.tasks.len() == 1 => Ok(suite.tasks[0].clone()),
        None => Err(Failure::input(format!("{} holds {} tasks; pick one with --task", path.display(), suite.tasks.len()))),
    }
}

fn cmd_parse(domain: &Path, problem: Option<&Path>) -> CmdResult {
    let d = load_domain(domain)?;
    outln!("domain {}: {} types, {} predicates, {} actions", d.name, d.types.len(), d.predicates.len(), d.actions.len());
    if let Some(p) = problem {
        let p = load_problem(p, &d)?;
        outln!("problem {}: {} objects, {} init atoms, {} goal literals", p.name, p.objects.len(), p.init.len(), p.goal.len());
    }
    Ok(0)
}

fn cmd_ground(domain: &Path, problem: &Path, dump: bool) -> CmdResult {
    let d = load_domain(domain)?;
    let p = load_problem(problem, &d)?;
    let task = ground(&d, &p).map_err(Failure::input)?;
    if dump {
        outp!("{}", task.dump());
    }
    outln!("{} atoms, {} actions", task.num_atoms(), task.actions().len());
    Ok(0)
}

fn cmd_plan(domain: &Path, problem: &Path, args: &SearchArgs) -> CmdResult {
    let config = args.config();
    config.check().map_err(Failure::input)?;
    let d = load_domain(domain)?;
    let p = load_problem(problem, &d)?;
    let task = ground(&d, &p).map_err(Failure::input)?;
    match search::plan(&task, &config) {
        Ok(plan) => {
            outp!("{}", plan.render(&task));
            Ok(0)
        }
        Err(e @ SearchError::InadmissibleHeuristic(_)) => Err(Failure::input(e)),
        Err(e) => Err(Failure::planning(e)),
    }
}

fn cmd_validate(domain: &Path, problem: &Path, plan: &Path, json: bool) -> CmdResult {
    let d = load_domain(domain)?;
    let p = load_problem(problem, &d)?;
    let task = ground(&d, &p).map_err(Failure::input)?;
    let calls = parse_plan_text(&read(plan)?).map_err(Failure::input)?;
    let report = match resolve_calls(&task, &calls) {
        Ok(plan) => validate_plan(&task, &plan),
        Err(_) => teamplan::validate::validate_calls(&task, &calls),
    };
    if json {
        outln!("{}", serde_json::to_string_pretty(&report.to_json(&task)).expect("report serializes"));
    } else {
        outp!("{}", report.render(calls.len()));
    }
    Ok(if report.is_valid() { 0 } else { 1 })
}

fn cmd_decompose(scenario: &Path, select: &TaskSelect, provider: &ProviderArgs) -> CmdResult {
    let task = load_task(scenario, select)?;
    let lm = provider.build()?;
    let robots =
        task.robots.iter().map(RobotProfile::from_spec).collect::<Result<Vec<_>, _>>().map_err(Failure::input)?;
    let ctx = StageContext::new(task.id.clone(), lm.as_ref());
    let d = identify_preconditions(&task.instruction, &task.scene, &robots, &ctx).map_err(Failure::planning)?;
    outp!("{}", render_decomposition(&d));
    let a = allocate(&d, &robots, &task.scene, &ctx).map_err(Failure::planning)?;
    outln!("\n{}", a.to_json());
    Ok(0)
}

/// Splits `<robot>_<subtask>.plan` into its robot and subtask id.
fn plan_owner(path: &Path) -> Option<(Name, u32)> {
    let stem = path.file_stem()?.to_str()?;
    let (robot, sub) = stem.rsplit_once('_')?;
    Some((Name::from(robot), sub.parse().ok()?))
}

fn cmd_combine(allocation: &Path, plans: &[PathBuf], output: Option<&Path>) -> CmdResult {
    let alloc = Allocation::from_json(&read(allocation)?).map_err(Failure::input)?;
    let mut parts = Vec::new();
    for p in plans {
        let (robot, subtask) = plan_owner(p)
            .ok_or_else(|| Failure::input(format!("{}: expected a file named <robot>_<subtask>.plan", p.display())))?;
        let calls = parse_plan_text(&read(p)?).map_err(|e| Failure::input(format!("{}: {e}", p.display())))?;
        parts.push(PartPlan { subtask, robot, calls });
    }
    let g = build_dependency_graph(&alloc, &parts).map_err(Failure::planning)?;
    let trace = to_trace(&schedule(&g).map_err(Failure::planning)?).to_string();
    match output {
        Some(o) => fs::write(o, trace).map_err(|e| Failure::input(format!("{}: {e}", o.display())))?,
        None => outp!("{trace}"),
    }
    Ok(0)
}

fn cmd_pipeline(
    scenario: &Path,
    select: &TaskSelect,
    provider: &ProviderArgs,
    search: &SearchArgs,
    out: Option<PathBuf>,
    dry_run: bool,
    retries: u32,
) -> CmdResult {
    if retries == 0 {
        return Err(Failure::input("--retries must be positive"));
    }
    let task = load_task(scenario, select)?;
    let lm = provider.build()?;
    let config = PipelineConfig { search: search.config(), max_retries: retries, run_dir: out, dry_run };
    config.search.check().map_err(Failure::input)?;
    let outcome = run_pipeline(&task, lm.as_ref(), &config);
    if let Some(f) = &outcome.failure {
        eprintln!("stage {} failed: {}", f.stage, f.message);
    }
    if let Some(s) = &outcome.schedule {
        outp!("{}", to_trace(s));
    }
    if let Some(e) = &outcome.execution {
        outln!("; executed {}/{}, makespan {}", e.executable, e.executed, outcome.schedule.as_ref().map_or(0, |s| s.makespan()));
        for m in &e.missing_goals {
            outln!("; missing {m}");
        }
    }
    if dry_run && outcome.failure.is_none() {
        for (sid, robot, _) in &outcome.problems {
            outln!("problem {robot}_{sid}");
        }
    }
    Ok(outcome.exit_code() as u8)
}

fn load_records(path: &Path) -> Result<Vec<RunRecord>, Failure> {
    serde_json::from_str(&read(path)?).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn load_table(spec: &str) -> Result<CategoryTable, Failure> {
    if let Some(label) = spec.strip_prefix("published:") {
        let all = published_results();
        return all.get(label).cloned().ok_or_else(|| {
            Failure::input(format!("no published row {label}; known: {}", all.keys().cloned().collect::<Vec<_>>().join(", ")))
        });
    }
    Ok(CategoryTable::from(&compute_metrics(&load_records(Path::new(spec))?)))
}

fn cmd_bench(cmd: &BenchCommand) -> CmdResult {
    match cmd {
        BenchCommand::Run { suite, provider, out, search } => {
            let s = load_task_suite(suite).map_err(Failure::input)?;
            for w in &s.warnings {
                eprintln!("{}: warning: {w}", suite.display());
            }
            let lm = provider.build()?;
            let config = PipelineConfig { search: search.config(), run_dir: Some(out.clone()), ..Default::default() };
            let records = run_suite(&s, lm.as_ref(), &config);
            let json = serde_json::to_string_pretty(&records).expect("records serialize") + "\n";
            fs::write(out.join("records.json"), json).map_err(|e| Failure::input(format!("{}: {e}", out.display())))?;
            outp!("{}", compute_metrics(&records).render());
            Ok(0)
        }
        BenchCommand::Metrics { records } => {
            outp!("{}", compute_metrics(&load_records(records)?).render());
            Ok(0)
        }
        BenchCommand::Compare { candidate, baseline, weights } => {
            let w: [f64; 3] = weights.as_slice().try_into().map_err(|_| Failure::input("--weights takes three values"))?;
            if w.iter().any(|x| *x < 0.0) || w.iter().sum::<f64>() <= 0.0 {
                return Err(Failure::input("weights must be non-negative with a positive sum"));
            }
            outp!("{}", render_gains(&aggregate_improvement(&load_table(candidate)?, &load_table(baseline)?, w)));
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Parse { domain, problem } => cmd_parse(domain, problem.as_deref()),
        Command::Ground { domain, problem, dump } => cmd_ground(domain, problem, *dump),
        Command::Plan { domain, problem, search } => cmd_plan(domain, problem, search),
        Command::Validate { domain, problem, plan, json } => cmd_validate(domain, problem, plan, *json),
        Command::Decompose { scenario, select, provider } => cmd_decompose(scenario, select, provider),
        Command::Combine { allocation, plans, output } => cmd_combine(allocation, plans, output.as_deref()),
        Command::Pipeline { scenario, select, provider, search, out, dry_run, retries } => {
            cmd_pipeline(scenario, select, provider, search, out.clone(), *dry_run, *retries)
        }
        Command::Bench(b) => cmd_bench(b),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
