//! Task suites, end-to-end suite runs, and the five evaluation metrics.

mod metrics;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decompose::{LmProvider, RobotSpec, Scene};
use crate::pipeline::{run_pipeline, PipelineConfig};

pub use metrics::{
    aggregate_improvement, compute_metrics, exe_of, gcr_of, metrics_of, render_gains, CategoryTable, Gain, Metrics,
    MetricsReport, RunRecord, METRIC_NAMES,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Compound,
    Complex,
    Vague,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Compound, Category::Complex, Category::Vague];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Compound => "compound",
            Category::Complex => "complex",
            Category::Vague => "vague",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Category::ALL.into_iter().find(|c| c.as_str().eq_ignore_ascii_case(s)).ok_or_else(|| format!("unknown category {s}"))
    }
}

/// One benchmark task with its ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub id: String,
    pub category: Category,
    pub instruction: String,
    pub scene: Scene,
    #[serde(rename = "robot")]
    pub robots: Vec<RobotSpec>,
    /// Goal conditions in PDDL literal syntax.
    pub goal: Vec<String>,
    pub gt_steps: u32,
    pub gt_transitions: u32,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SuiteError {
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("cannot read {0}")]
    Io(String),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Suite {
    pub tasks: Vec<TaskSpec>,
    pub warnings: Vec<String>,
}

impl Suite {
    pub fn counts(&self) -> BTreeMap<Category, usize> {
        let mut out: BTreeMap<Category, usize> = Category::ALL.iter().map(|c| (*c, 0)).collect();
        for t in &self.tasks {
            *out.entry(t.category).or_default() += 1;
        }
        out
    }

    pub fn task(&self, id: &str) -> Option<&TaskSpec> {
        self.tasks.iter().find(|t| t.id == id)
    }
}

fn schema(path: String, message: impl Into<String>) -> SuiteError {
    SuiteError::Schema { path, message: message.into() }
}

/// Parses a suite: a TOML document with a `[[task]]` array.
pub fn parse_task_suite(text: &str) -> Result<Suite, SuiteError> {
    let doc: toml::Table = text.parse().map_err(|e: toml::de::Error| schema("<root>".into(), e.message()))?;
    if let Some(k) = doc.keys().find(|k| k.as_str() != "task") {
        return Err(schema(k.clone(), "unknown key"));
    }
    let Some(items) = doc.get("task") else {
        return Ok(Suite { tasks: vec![], warnings: vec!["suite has no tasks".into()] });
    };
    let items = items.as_array().ok_or_else(|| schema("task".into(), "expected an array of tables"))?;
    let mut tasks: Vec<TaskSpec> = Vec::new();
    for (i, item) in items.iter().enumerate() {
        let base = format!("task[{i}]");
        let t: TaskSpec = item.clone().try_into().map_err(|e: toml::de::Error| schema(base.clone(), e.message()))?;
        if t.gt_steps < 1 {
            return Err(schema(format!("{base}.gt_steps"), "must be at least 1"));
        }
        if t.gt_transitions < 1 {
            return Err(schema(format!("{base}.gt_transitions"), "must be at least 1"));
        }
        if t.robots.is_empty() {
            return Err(schema(format!("{base}.robot"), "at least one robot is required"));
        }
        t.scene.check().map_err(|e| schema(format!("{base}.scene"), e.to_string()))?;
        for (j, g) in t.goal.iter().enumerate() {
            let ok = crate::decompose::parse_literals(g)
                .ok()
                .is_some_and(|ls| ls.len() == 1 && crate::decompose::ground_literal(&ls[0]).is_some());
            if !ok {
                return Err(schema(format!("{base}.goal[{j}]"), format!("not a ground literal: {g}")));
            }
        }
        if tasks.iter().any(|x| x.id == t.id) {
            return Err(schema(format!("{base}.id"), format!("duplicate task id {}", t.id)));
        }
        tasks.push(t);
    }
    let mut warnings = Vec::new();
    if tasks.is_empty() {
        warnings.push("suite has no tasks".into());
    }
    Ok(Suite { tasks, warnings })
}

pub fn load_task_suite(path: &Path) -> Result<Suite, SuiteError> {
    let text = std::fs::read_to_string(path).map_err(|e| SuiteError::Io(format!("{}: {e}", path.display())))?;
    parse_task_suite(&text)
}

pub const BUNDLED_SUITE: &str = include_str!("../../data/scenarios/suite.toml");
pub const BUNDLED_FIXTURES: &str = include_str!("../../data/fixtures/suite.toml");
const PUBLISHED: &str = include_str!("../../data/reference/published_results.toml");

/// Published per-category results keyed by method label.
pub fn published_results() -> BTreeMap<String, CategoryTable> {
    toml::from_str(PUBLISHED).expect("bundled results parse")
}

/// Runs every task; failures become unsuccessful records.
pub fn run_suite(suite: &Suite, lm: &dyn LmProvider, config: &PipelineConfig) -> Vec<RunRecord> {
    suite
        .tasks
        .iter()
        .map(|t| {
            let mut cfg = config.clone();
            cfg.run_dir = config.run_dir.as_ref().map(|d| d.join(&t.id));
            let outcome = run_pipeline(t, lm, &cfg);
            outcome.record(t)
        })
        .collect()
}
