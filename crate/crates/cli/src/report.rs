//! Result summaries and the two report tables: LOOCV accuracy per subject
//! (Table I layout) and pseudo-online TPR/FPR/FNR (Table II layout).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use biodecode::eval::{mean_se, metrics, welch_t_keyed, ConfusionCounts, FoldResult, Rates, Task};
use biodecode::recording::{Session, Transition};
use serde::{Deserialize, Serialize};

pub const LOOCV_SUMMARY: &str = "loocv_summary.json";
pub const STREAM_SUMMARY: &str = "stream_summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoocvSummary {
    pub subject: String,
    pub session: Session,
    pub transition: Transition,
    pub task: Task,
    pub mean: Option<f64>,
    pub se: Option<f64>,
    pub n_flagged: usize,
    pub dropped_trials: Vec<usize>,
    pub folds: Vec<FoldResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSummary {
    pub subject: String,
    pub session: Session,
    pub transition: Transition,
    pub n_windows: usize,
    pub counts: ConfusionCounts,
    pub rates: Rates,
    pub per_trial: Vec<ConfusionCounts>,
    pub switch_windows: Vec<Option<usize>>,
}

/// Short transition tags used as column heads.
pub fn tag(t: Transition) -> &'static str {
    match t {
        Transition::SitToStand => "sit:std",
        Transition::StandToSit => "std:sit",
        Transition::None => "none",
    }
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{:.2}", 100.0 * x))
}

const TRANSITIONS: [Transition; 2] = [Transition::SitToStand, Transition::StandToSit];
const TASKS: [Task; 3] = [Task::RvsAo, Task::AoVsMi, Task::AoVsMrcp];

/// Accuracy table: one row per subject, two columns (sit:std, std:sit) per
/// task, then mean +- SE across subjects and the Welch test between
/// transitions per task.
pub fn table_i(rows: &[LoocvSummary]) -> String {
    let mut by: BTreeMap<(String, Task, Transition), Option<f64>> = BTreeMap::new();
    for r in rows {
        by.insert((r.subject.clone(), r.task, r.transition), r.mean);
    }
    let subjects: Vec<String> = {
        let mut s: Vec<String> = rows.iter().map(|r| r.subject.clone()).collect();
        s.sort();
        s.dedup();
        s
    };
    let mut out = String::from("Table I. LOOCV accuracy (%)\n");
    let _ = write!(out, "{:<10}", "subject");
    for task in TASKS {
        for t in TRANSITIONS {
            let _ = write!(out, " {:>16}", format!("{}:{}", task, tag(t)));
        }
    }
    out.push('\n');
    for s in &subjects {
        let _ = write!(out, "{s:<10}");
        for task in TASKS {
            for t in TRANSITIONS {
                let v = by.get(&(s.clone(), task, t)).copied().flatten();
                let _ = write!(out, " {:>16}", pct(v));
            }
        }
        out.push('\n');
    }
    let _ = write!(out, "{:<10}", "mean+-SE");
    for task in TASKS {
        for t in TRANSITIONS {
            let vals: Vec<f64> = subjects.iter().filter_map(|s| by.get(&(s.clone(), task, t)).copied().flatten()).collect();
            let cell = match mean_se(&vals) {
                (Some(m), Some(se)) => format!("{:.2}+-{:.2}", 100.0 * m, 100.0 * se),
                (Some(m), None) => format!("{:.2}", 100.0 * m),
                _ => "-".to_string(),
            };
            let _ = write!(out, " {cell:>16}");
        }
    }
    out.push('\n');
    for task in TASKS {
        let side = |t: Transition| -> Vec<(String, f64)> {
            subjects.iter().filter_map(|s| by.get(&(s.clone(), task, t)).copied().flatten().map(|v| (s.clone(), v))).collect()
        };
        let line = match welch_t_keyed(&side(Transition::SitToStand), &side(Transition::StandToSit)) {
            Ok(w) => format!("t = {:.3}, df = {:.2}, p = {:.4}", w.t, w.df, w.p),
            Err(e) => format!("not computed ({e})"),
        };
        let _ = writeln!(out, "Welch {task} sit:std vs std:sit: {line}");
    }
    out
}

/// Detection-rate table: TPR, FPR and FNR for MI and ME per transition, one
/// row per subject plus pooled means.
pub fn table_ii(rows: &[StreamSummary]) -> String {
    let mut by: BTreeMap<(String, Transition, Session), Rates> = BTreeMap::new();
    for r in rows {
        by.insert((r.subject.clone(), r.transition, r.session), r.rates);
    }
    let mut subjects: Vec<String> = rows.iter().map(|r| r.subject.clone()).collect();
    subjects.sort();
    subjects.dedup();
    let sessions = [Session::Mi, Session::Me];
    let mut out = String::from("Table II. Pseudo-online detection rates (%)\n");
    let _ = write!(out, "{:<10}", "subject");
    for t in TRANSITIONS {
        for metric in ["TPR", "FPR", "FNR"] {
            for s in sessions {
                let _ = write!(out, " {:>14}", format!("{}:{metric}:{s}", tag(t)));
            }
        }
    }
    out.push('\n');
    let cell = |r: Option<&Rates>, metric: usize| -> Option<f64> {
        r.and_then(|r| [r.tpr, r.fpr, r.fnr][metric].value())
    };
    for subj in &subjects {
        let _ = write!(out, "{subj:<10}");
        for t in TRANSITIONS {
            for metric in 0..3 {
                for s in sessions {
                    let _ = write!(out, " {:>14}", pct(cell(by.get(&(subj.clone(), t, s)), metric)));
                }
            }
        }
        out.push('\n');
    }
    let _ = write!(out, "{:<10}", "mean");
    for t in TRANSITIONS {
        for metric in 0..3 {
            for s in sessions {
                let vals: Vec<f64> = subjects.iter().filter_map(|subj| cell(by.get(&(subj.clone(), t, s)), metric)).collect();
                let _ = write!(out, " {:>14}", pct(mean_se(&vals).0));
            }
        }
    }
    out.push('\n');
    out
}

/// Pools confusion counts and recomputes rates.
pub fn pooled(counts: &[ConfusionCounts]) -> (ConfusionCounts, Rates) {
    let mut total = ConfusionCounts::default();
    counts.iter().for_each(|c| total.merge(c));
    (total, metrics(&total))
}
