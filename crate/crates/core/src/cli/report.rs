use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::run::{write_atomic, MetricsReport, Reliability, METRICS_FILE, RELIABILITY_FILE};
use crate::error::{Error, Result};
use crate::protocol::{area_metrics, CurveMeta, DegradationCurve};

/// Largest disagreement tolerated between stored and recomputed metrics.
pub const AUDIT_TOLERANCE: f64 = 1e-12;

pub const SUMMARY_HEADER: &str = "section,operator,label,n,aoc_mean,aoc_std,abc_mean,abc_std,auc_mean,auc_std";

/// Mean and population std of a metric across domains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    fn of(v: &[f64]) -> Self {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        Self { mean, std: (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: String,
    pub n: usize,
    pub aoc: MeanStd,
    pub abc: MeanStd,
    pub auc: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorTable {
    pub operator: String,
    pub methods: Vec<MethodRow>,
    /// Method with the highest mean ABC.
    pub most_faithful: Option<String>,
    /// Random-attribution ABC averaged over domains.
    pub random_bias: Option<MeanStd>,
    /// Mean MoRF–LeRF Spearman ρ averaged over domains.
    pub consistency: Option<MeanStd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub task: String,
    pub tables: Vec<OperatorTable>,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::NotFound(path.to_path_buf()));
    }
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Builds the summary from a run directory, recomputing every curve metric
/// from the CSV files and rejecting any disagreement with `metrics.json`.
pub fn summarize(run: &Path) -> Result<Summary> {
    if !run.is_dir() {
        return Err(Error::NotFound(run.to_path_buf()));
    }
    let metrics: MetricsReport = read_json(&run.join(METRICS_FILE))?;
    let reliability: Reliability = read_json(&run.join(RELIABILITY_FILE))?;
    let mut operators: Vec<String> = vec![];
    for c in &metrics.curves {
        if !operators.contains(&c.operator) {
            operators.push(c.operator.clone());
        }
    }
    for r in &reliability.random_bias {
        if !operators.contains(&r.operator) {
            operators.push(r.operator.clone());
        }
    }
    let mut recomputed = vec![];
    for c in &metrics.curves {
        let path = run.join(&c.file);
        if !path.exists() {
            return Err(Error::NotFound(path));
        }
        let meta = CurveMeta { method: c.method.clone(), operator: c.operator.clone(), domain: c.domain.name().into(), ..Default::default() };
        let curve = DegradationCurve::read_csv(std::io::BufReader::new(std::fs::File::open(&path)?), c.acc0, c.acc_full, meta)?;
        let fresh = area_metrics(&curve).ok();
        match (fresh, c.metrics) {
            (None, None) => {}
            (Some(a), Some(b)) if (a.aoc - b.aoc).abs() <= AUDIT_TOLERANCE && (a.abc - b.abc).abs() <= AUDIT_TOLERANCE && (a.auc - b.auc).abs() <= AUDIT_TOLERANCE => {}
            _ => return Err(Error::Config(format!("{}: stored metrics disagree with the curve", c.file))),
        }
        recomputed.push((c, fresh));
    }
    let tables = operators
        .iter()
        .map(|op| {
            let mut labels: Vec<&str> = vec![];
            for (c, _) in recomputed.iter().filter(|(c, _)| &c.operator == op) {
                if !labels.contains(&c.method.as_str()) {
                    labels.push(&c.method);
                }
            }
            let methods: Vec<MethodRow> = labels
                .iter()
                .filter_map(|&label| {
                    let vals: Vec<_> = recomputed.iter().filter(|(c, _)| &c.operator == op && c.method == label).filter_map(|(_, m)| *m).collect();
                    (!vals.is_empty()).then(|| MethodRow {
                        method: label.to_string(),
                        n: vals.len(),
                        aoc: MeanStd::of(&vals.iter().map(|m| m.aoc).collect::<Vec<_>>()),
                        abc: MeanStd::of(&vals.iter().map(|m| m.abc).collect::<Vec<_>>()),
                        auc: MeanStd::of(&vals.iter().map(|m| m.auc).collect::<Vec<_>>()),
                    })
                })
                .collect();
            let most_faithful = methods
                .iter()
                .fold(None::<&MethodRow>, |best, m| match best {
                    Some(b) if b.abc.mean >= m.abc.mean => Some(b),
                    _ => Some(m),
                })
                .map(|m| m.method.clone());
            let rb: Vec<f64> = reliability.random_bias.iter().filter(|r| &r.operator == op).map(|r| r.bias.mean).collect();
            let rho: Vec<f64> = reliability.consistency.iter().filter(|r| &r.operator == op).map(|r| r.result.mean).collect();
            OperatorTable {
                operator: op.clone(),
                methods,
                most_faithful,
                random_bias: (!rb.is_empty()).then(|| MeanStd::of(&rb)),
                consistency: (!rho.is_empty()).then(|| MeanStd::of(&rho)),
            }
        })
        .collect();
    Ok(Summary { task: metrics.task, tables })
}

pub fn summary_csv(s: &Summary) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    let ms = |m: &MeanStd| format!("{},{}", m.mean, m.std);
    for t in &s.tables {
        for m in &t.methods {
            let _ = writeln!(out, "method,{},{},{},{},{},{}", t.operator, m.method, m.n, ms(&m.aoc), ms(&m.abc), ms(&m.auc));
        }
        if let Some(best) = &t.most_faithful {
            let m = t.methods.iter().find(|m| &m.method == best).expect("listed method");
            let _ = writeln!(out, "most_faithful,{},{},{},,,{},,,", t.operator, best, m.n, m.abc.mean);
        }
        if let Some(rb) = &t.random_bias {
            let _ = writeln!(out, "random_bias,{},RANDOM,,,,{},,,", t.operator, ms(rb));
        }
        if let Some(c) = &t.consistency {
            let _ = writeln!(out, "consistency,{},rho,,,,{},,,", t.operator, ms(c));
        }
    }
    out
}

pub fn summary_text(s: &Summary) -> String {
    let mut out = format!("task: {}\n", s.task);
    let ms = |m: &MeanStd| format!("{:>7.4} ± {:.4}", m.mean, m.std);
    for t in &s.tables {
        let _ = writeln!(out, "\n[{}]", t.operator);
        let _ = writeln!(out, "{:<8} {:>3} {:>18} {:>18} {:>18}", "method", "n", "AOC", "ABC", "AUC");
        for m in &t.methods {
            let _ = writeln!(out, "{:<8} {:>3} {:>18} {:>18} {:>18}", m.method, m.n, ms(&m.aoc), ms(&m.abc), ms(&m.auc));
        }
        let _ = writeln!(out, "most faithful (ABC): {}", t.most_faithful.as_deref().unwrap_or("-"));
        let _ = writeln!(out, "random-attribution ABC: {}", t.random_bias.as_ref().map_or("-".into(), ms));
        let _ = writeln!(out, "MoRF-LeRF consistency rho: {}", t.consistency.as_ref().map_or("-".into(), ms));
    }
    out
}

/// `report`: writes `summary.csv` and `summary.txt` to `out` (default: the
/// run directory).
pub fn cmd_report(run: &Path, out: Option<&Path>) -> Result<(Summary, PathBuf)> {
    let s = summarize(run)?;
    let dir = out.unwrap_or(run).to_path_buf();
    write_atomic(&dir.join("summary.csv"), summary_csv(&s).as_bytes())?;
    write_atomic(&dir.join("summary.txt"), summary_text(&s).as_bytes())?;
    Ok((s, dir))
}
