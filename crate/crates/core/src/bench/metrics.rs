use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::Category;

/// Outcome of one task run, as measured by symbolic execution of its trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub task: String,
    pub category: Category,
    /// Actions attempted.
    pub executed: u32,
    /// Attempted actions whose preconditions held.
    pub executable: u32,
    pub final_state: Vec<String>,
    pub goal_count: u32,
    pub missing_goals: Vec<String>,
    /// Schedule makespan in timesteps.
    pub timesteps: u32,
    /// State transitions actually applied.
    pub transitions: u32,
    pub gt_steps: u32,
    pub gt_transitions: u32,
    pub success: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// The five metrics for one group of records.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub sr: f64,
    pub exe: f64,
    pub gcr: f64,
    pub ru: f64,
    pub eff: f64,
    pub tasks: usize,
    pub successes: usize,
    /// RU and Eff have no successful run to average over.
    pub undefined: bool,
}

impl Metrics {
    pub fn values(&self) -> [f64; 5] {
        [self.sr, self.exe, self.gcr, self.ru, self.eff]
    }
}

pub const METRIC_NAMES: [&str; 5] = ["SR", "Exe", "GCR", "RU", "Eff"];

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Per-task Exe. With nothing executed it is 1 when the task still
/// succeeded and 0 otherwise.
pub fn exe_of(r: &RunRecord) -> f64 {
    if r.executed == 0 {
        return if r.success { 1.0 } else { 0.0 };
    }
    r.executable as f64 / r.executed as f64
}

pub fn gcr_of(r: &RunRecord) -> f64 {
    if r.goal_count == 0 {
        return 1.0;
    }
    1.0 - r.missing_goals.len() as f64 / r.goal_count as f64
}

/// SR, Exe and GCR average over all records; RU and Eff are
/// ground-truth over achieved totals on successful records only.
pub fn metrics_of(records: &[&RunRecord]) -> Metrics {
    let n = records.len();
    let succ: Vec<&&RunRecord> = records.iter().filter(|r| r.success).collect();
    let mean = |f: &dyn Fn(&RunRecord) -> f64| ratio(records.iter().map(|r| f(r)).sum(), n as f64);
    let gt_t: u32 = succ.iter().map(|r| r.gt_transitions).sum();
    let got_t: u32 = succ.iter().map(|r| r.transitions).sum();
    let gt_s: u32 = succ.iter().map(|r| r.gt_steps).sum();
    let got_s: u32 = succ.iter().map(|r| r.timesteps).sum();
    Metrics {
        sr: ratio(succ.len() as f64, n as f64),
        exe: mean(&exe_of),
        gcr: mean(&gcr_of),
        ru: ratio(gt_t as f64, got_t as f64),
        eff: ratio(gt_s as f64, got_s as f64),
        tasks: n,
        successes: succ.len(),
        undefined: succ.is_empty(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub categories: BTreeMap<Category, Metrics>,
    pub overall: Metrics,
}

pub fn compute_metrics(records: &[RunRecord]) -> MetricsReport {
    let mut categories = BTreeMap::new();
    for c in Category::ALL {
        let group: Vec<&RunRecord> = records.iter().filter(|r| r.category == c).collect();
        if !group.is_empty() {
            categories.insert(c, metrics_of(&group));
        }
    }
    let all: Vec<&RunRecord> = records.iter().collect();
    MetricsReport { categories, overall: metrics_of(&all) }
}

impl MetricsReport {
    /// Aligned table, one row per category then `overall`.
    pub fn render(&self) -> String {
        let mut out = format!("{:<10}{:>6}", "category", "tasks");
        for m in METRIC_NAMES {
            let _ = write!(out, "{m:>7}");
        }
        out.push('\n');
        let mut row = |name: &str, m: &Metrics| {
            let _ = write!(out, "{name:<10}{:>6}", m.tasks);
            for (i, v) in m.values().iter().enumerate() {
                if m.undefined && i >= 3 {
                    let _ = write!(out, "{:>7}", "n/a");
                } else {
                    let _ = write!(out, "{v:>7.2}");
                }
            }
            out.push('\n');
        };
        for (c, m) in &self.categories {
            row(c.as_str(), m);
        }
        row("overall", &self.overall);
        out
    }
}

/// Per-category metric vectors in SR, Exe, GCR, RU, Eff order.
pub type CategoryTable = BTreeMap<Category, [f64; 5]>;

impl From<&MetricsReport> for CategoryTable {
    fn from(r: &MetricsReport) -> Self {
        r.categories.iter().map(|(c, m)| (*c, m.values())).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gain {
    pub candidate: f64,
    pub baseline: f64,
    /// `(candidate - baseline) / baseline`; `None` when the baseline is 0.
    pub relative: Option<f64>,
}

/// Weighted category averages of each metric and their relative gains.
/// `weights` are indexed like [`Category::ALL`]; missing categories are
/// skipped in both tables.
pub fn aggregate_improvement(candidate: &CategoryTable, baseline: &CategoryTable, weights: [f64; 3]) -> [Gain; 5] {
    let avg = |t: &CategoryTable, k: usize| {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, c) in Category::ALL.iter().enumerate() {
            if let (Some(a), Some(_)) = (t.get(c), candidate.get(c).and(baseline.get(c))) {
                num += weights[i] * a[k];
                den += weights[i];
            }
        }
        ratio(num, den)
    };
    std::array::from_fn(|k| {
        let o = avg(candidate, k);
        let b = avg(baseline, k);
        let relative = if b == 0.0 {
            if o == 0.0 {
                Some(0.0)
            } else {
                None
            }
        } else {
            Some((o - b) / b)
        };
        Gain { candidate: o, baseline: b, relative }
    })
}

pub fn render_gains(gains: &[Gain; 5]) -> String {
    let mut out = format!("{:<7}{:>10}{:>10}{:>9}\n", "metric", "candidate", "baseline", "gain");
    for (name, g) in METRIC_NAMES.iter().zip(gains) {
        let gain = match g.relative {
            Some(x) => format!("{:+.1}%", x * 100.0),
            None => "unbounded".into(),
        };
        let _ = writeln!(out, "{name:<7}{:>10.4}{:>10.4}{gain:>9}", g.candidate, g.baseline);
    }
    out
}
