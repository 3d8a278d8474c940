use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{EpsilonChoice, MethodSpec, RunConfig};
use crate::data::{Dataset, Layout, Sample};
use crate::domains::Domain;
use crate::error::{Error, Result};
use crate::masking::{calibrate_epsilon, geometric_grid, Calibration, MaskingOperator};
use crate::model::{accuracy, train, Model};
use crate::protocol::{
    area_metrics, indicator_scores, random_bias, ranking_consistency, stability_metrics, AreaMetrics,
    ConsistencyResult, CurveMeta, DegradationCurve, Evaluator, MethodScorer, RandomBias, Scorer,
};
use crate::rng;
use crate::tasks::{oracle_attribution, save_dataset, TaskSpec};

pub const MANIFEST_FORMAT: &str = "aimeval-manifest";
pub const MODEL_FILE: &str = "model.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const RELIABILITY_FILE: &str = "reliability.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CURVE_DIR: &str = "curves";

/// Seeds of each stage, all derived from the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSeeds {
    pub run: u64,
    pub data: Option<u64>,
    pub model_init: u64,
    pub train: u64,
    pub attribution: u64,
    pub adversarial: u64,
    pub masking: u64,
    pub random_bias: u64,
}

impl StageSeeds {
    pub fn of(cfg: &RunConfig, data: Option<u64>) -> Self {
        Self {
            run: cfg.seed,
            data,
            model_init: rng::derive(cfg.seed, &[0x4d4f44454c]),
            train: cfg.train_config().seed,
            attribution: cfg.attribution(crate::attribution::Method::Gradient, false).seed,
            adversarial: cfg.adversarial(1.0).seed,
            masking: rng::derive(cfg.seed, &[0x4d41534b]),
            random_bias: rng::derive(cfg.seed, &[0x52424941]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub tool_version: String,
    pub command: String,
    pub config: RunConfig,
    pub seeds: StageSeeds,
    pub files: Vec<FileEntry>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::NotFound(path.to_path_buf()));
        }
        let m: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if m.format != MANIFEST_FORMAT {
            return Err(Error::Config(format!("{} is not a run manifest", path.display())));
        }
        m.config.validate()?;
        Ok(m)
    }

    /// Files whose current checksum differs from the recorded one.
    pub fn verify(&self, dir: &Path) -> Result<Vec<String>> {
        let mut bad = vec![];
        for f in &self.files {
            let p = dir.join(&f.path);
            if !p.exists() || sha256_file(&p)? != f.sha256 {
                bad.push(f.path.clone());
            }
        }
        Ok(bad)
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("partial");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

fn inventory(dir: &Path, rel: &[String]) -> Result<Vec<FileEntry>> {
    rel.iter()
        .map(|r| {
            let p = dir.join(r);
            Ok(FileEntry { path: r.clone(), sha256: sha256_file(&p)?, bytes: std::fs::metadata(&p)?.len() })
        })
        .collect()
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.out.clone().ok_or_else(|| Error::Config("no output directory: set `out` in the config or pass --out".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub task: String,
    pub architecture: Vec<String>,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub model_sha256: String,
}

pub struct Trained {
    pub spec: TaskSpec,
    pub train: Dataset,
    pub test: Dataset,
    pub model: Model,
    pub summary: TrainSummary,
}

/// Loads or generates the task and trains (or loads) its model.
pub fn prepare(cfg: &RunConfig) -> Result<Trained> {
    let (spec, train_set, test_set) = cfg.load_task()?;
    let model = match &cfg.model.weights {
        Some(p) => Model::load(p)?,
        None => train(&cfg.build_model(&spec)?, &train_set, &cfg.train_config())?,
    };
    if model.input_shape != spec.layout.shape() || model.num_classes != spec.classes {
        return Err(Error::Shape(format!(
            "model takes {:?} with {} classes, task has {:?} with {}",
            model.input_shape,
            model.num_classes,
            spec.layout.shape(),
            spec.classes
        )));
    }
    let summary = TrainSummary {
        task: spec.name.clone(),
        architecture: model.layers.iter().map(|l| l.name().to_string()).collect(),
        train_accuracy: accuracy(&model, &train_set)?,
        test_accuracy: accuracy(&model, &test_set)?,
        model_sha256: hex::encode(Sha256::digest(model.to_json()?.as_bytes())),
    };
    Ok(Trained { spec, train: train_set, test: test_set, model, summary })
}

/// `train`: fits the model and writes weights, data splits, a summary and a
/// manifest.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainSummary> {
    let out = out_dir(cfg)?;
    let t = prepare(cfg)?;
    write_atomic(&out.join(MODEL_FILE), t.model.to_json()?.as_bytes())?;
    save_dataset(&t.spec, &t.train, &out.join("data"), "train")?;
    save_dataset(&t.spec, &t.test, &out.join("data"), "test")?;
    write_json(&out.join("train.json"), &t.summary)?;
    let files: Vec<String> = [MODEL_FILE, "train.json", "data/train.csv", "data/train.spec.json", "data/test.csv", "data/test.spec.json"]
        .map(String::from)
        .into();
    write_manifest(cfg, "train", &out, &files, Some(t.spec.seed))?;
    Ok(t.summary)
}

fn write_manifest(cfg: &RunConfig, command: &str, out: &Path, files: &[String], data_seed: Option<u64>) -> Result<RunManifest> {
    let manifest = RunManifest {
        format: MANIFEST_FORMAT.into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        config: cfg.clone(),
        seeds: StageSeeds::of(cfg, data_seed),
        files: inventory(out, files)?,
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Operators × domains table; `false` marks pairs incompatible with `layout`.
pub fn compatibility(operators: &[MaskingOperator], domains: &[Domain], layout: &Layout) -> Vec<(String, Domain, bool)> {
    operators
        .iter()
        .flat_map(|op| domains.iter().map(move |&d| (op.name().to_string(), d, op.check(d, layout).is_ok())))
        .collect()
}

pub fn format_compatibility(operators: &[MaskingOperator], domains: &[Domain], layout: &Layout) -> String {
    let mut s = format!("{:<10}", "");
    for d in domains {
        s += &format!("{:>10}", d.name());
    }
    s.push('\n');
    for op in operators {
        s += &format!("{:<10}", op.name());
        for &d in domains {
            s += &format!("{:>10}", if op.check(d, layout).is_ok() { "ok" } else { "-" });
        }
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub operator: String,
    pub domain: Domain,
    pub method: String,
    pub file: String,
    pub acc0: f64,
    pub acc_full: f64,
    pub metrics: Option<AreaMetrics>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: String,
    pub eval_samples: usize,
    pub train: TrainSummary,
    pub epsilon: Option<f64>,
    pub calibration: Option<Calibration>,
    pub curves: Vec<CurveRecord>,
    /// `(method, domain)` pairs not evaluated, with the reason.
    pub skipped: Vec<(String, Domain, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomBiasEntry {
    pub operator: String,
    pub domain: Domain,
    pub clt_band: f64,
    pub within_clt_band: bool,
    #[serde(flatten)]
    pub bias: RandomBias,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyEntry {
    pub operator: String,
    pub domain: Domain,
    pub result: ConsistencyResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityEntry {
    pub operator: String,
    pub method: String,
    pub domains: Vec<Domain>,
    pub std: AreaMetrics,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Reliability {
    pub random_bias: Vec<RandomBiasEntry>,
    pub consistency: Vec<ConsistencyEntry>,
    pub stability: Vec<StabilityEntry>,
    /// Cells whose random bias could not be computed, with the reason.
    pub random_bias_errors: Vec<(String, Domain, String)>,
}

pub struct EvaluateOutput {
    pub dir: PathBuf,
    pub metrics: MetricsReport,
    pub reliability: Reliability,
    pub manifest: RunManifest,
}

pub fn curve_file(operator: &str, domain: Domain, method: &str) -> String {
    format!("{CURVE_DIR}/{}_{}_{}.csv", operator.to_ascii_lowercase(), domain.name(), method)
}

/// `evaluate`: the full methods × operators × domains matrix.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<EvaluateOutput> {
    let out = out_dir(cfg)?;
    let ev_cfg = cfg.evaluate.as_ref().ok_or_else(|| Error::Config("evaluate section is missing".into()))?;
    let methods = cfg.methods()?;
    let operators = cfg.operators()?;
    let t = prepare(cfg)?;
    if let Some((op, d, _)) = compatibility(&operators, &ev_cfg.domains, &t.spec.layout).into_iter().find(|c| !c.2) {
        eprintln!("operator/domain compatibility for this task:\n{}", format_compatibility(&operators, &ev_cfg.domains, &t.spec.layout));
        return Err(Error::Incompatible { operator: op, domain: d.name().into() });
    }
    let data = match ev_cfg.max_samples {
        Some(n) if n < t.test.len() => Dataset::new(t.test.samples[..n].to_vec(), t.test.num_classes, t.test.layout.clone())?,
        _ => t.test.clone(),
    };
    let seeds = StageSeeds::of(cfg, cfg.task.dataset.is_none().then_some(t.spec.seed));

    let needs_aim = operators.iter().any(|o| matches!(o, MaskingOperator::Aim(_)));
    let (epsilon, calibration) = match (&cfg.aim.epsilon, needs_aim) {
        (_, false) => (None, None),
        (EpsilonChoice::Fixed(e), true) => (Some(*e), None),
        (EpsilonChoice::Calibrate(_), true) => {
            let grid = geometric_grid(cfg.aim.grid_min, cfg.aim.grid_max, cfg.aim.grid_points);
            let c = calibrate_epsilon(&t.model, &data, &cfg.adversarial(cfg.aim.grid_min), &grid, cfg.aim.tolerance)?;
            (Some(c.epsilon), Some(c))
        }
    };
    let operators: Vec<MaskingOperator> = operators
        .into_iter()
        .map(|o| match (o, epsilon) {
            (MaskingOperator::Aim(mut a), Some(e)) => {
                a.adversarial.epsilon = e;
                MaskingOperator::Aim(a)
            }
            (o, _) => o,
        })
        .collect();

    let oracle = if methods.contains(&MethodSpec::Oracle) { Some(oracle_attribution(&t.spec)?) } else { None };
    let mut curves = vec![];
    let mut skipped = vec![];
    let mut files = vec![MODEL_FILE.to_string()];
    let mut reliability = Reliability::default();
    let mut by_cell: BTreeMap<(String, Domain), Vec<DegradationCurve>> = BTreeMap::new();

    write_atomic(&out.join(MODEL_FILE), t.model.to_json()?.as_bytes())?;
    for op in &operators {
        let ev = Evaluator::new(&t.model, &data, op, seeds.masking)?;
        for &domain in &ev_cfg.domains {
            let acc_full = ev.full_accuracy(domain)?;
            for m in &methods {
                let label = m.label();
                let meta = CurveMeta {
                    method: label.clone(),
                    operator: op.name().into(),
                    domain: domain.name().into(),
                    model: t.summary.architecture.join("-"),
                    seed: cfg.seed,
                };
                let curve = match m {
                    MethodSpec::Oracle => {
                        let Some(o) = oracle.as_ref().filter(|o| o.domain == domain) else {
                            if op.name() == operators[0].name() {
                                skipped.push((label, domain, format!("the task plants features in the {} domain only", t.spec.domain.name())));
                            }
                            continue;
                        };
                        let sc = |_: usize, s: &Sample| indicator_scores(&s.x, domain, o.for_class(s.y));
                        ev.curve_with_full(&sc, domain, &ev_cfg.ratios, acc_full, meta)?
                    }
                    MethodSpec::Method { method, absolute } => {
                        let sc = MethodScorer { model: &t.model, config: cfg.attribution(*method, *absolute), domain };
                        ev.curve_with_full(&sc as &dyn Scorer, domain, &ev_cfg.ratios, acc_full, meta)?
                    }
                };
                let file = curve_file(op.name(), domain, &label);
                let mut bytes = vec![];
                curve.write_csv(&mut bytes)?;
                write_atomic(&out.join(&file), &bytes)?;
                files.push(file.clone());
                let (metrics, error) = match area_metrics(&curve) {
                    Ok(a) => (Some(a), None),
                    Err(e) => (None, Some(e.to_string())),
                };
                curves.push(CurveRecord {
                    operator: op.name().into(),
                    domain,
                    method: label,
                    file,
                    acc0: curve.acc0,
                    acc_full,
                    metrics,
                    error,
                });
                by_cell.entry((op.name().to_string(), domain)).or_default().push(curve);
            }
            if ev_cfg.n_perm > 0 {
                let rb_seed = rng::derive(seeds.random_bias, &[domain as u64]);
                match random_bias(&ev, domain, &ev_cfg.ratios, ev_cfg.n_perm, rb_seed) {
                    Ok(bias) => reliability.random_bias.push(RandomBiasEntry {
                        operator: op.name().into(),
                        domain,
                        clt_band: bias.clt_band(),
                        within_clt_band: bias.within_clt_band(),
                        bias,
                    }),
                    Err(e) => reliability.random_bias_errors.push((op.name().into(), domain, e.to_string())),
                }
            }
        }
    }
    for ((operator, domain), cell) in &by_cell {
        if cell.len() >= 2 {
            reliability.consistency.push(ConsistencyEntry { operator: operator.clone(), domain: *domain, result: ranking_consistency(cell)? });
        }
    }
    for op in &operators {
        for m in &methods {
            let label = m.label();
            let (domains, values): (Vec<Domain>, Vec<AreaMetrics>) = curves
                .iter()
                .filter(|c| c.operator == op.name() && c.method == label)
                .filter_map(|c| c.metrics.map(|a| (c.domain, a)))
                .unzip();
            if !values.is_empty() {
                reliability.stability.push(StabilityEntry { operator: op.name().into(), method: label, domains, std: stability_metrics(&values)? });
            }
        }
    }
    let metrics = MetricsReport {
        task: t.spec.name.clone(),
        eval_samples: data.len(),
        train: t.summary,
        epsilon,
        calibration,
        curves,
        skipped,
    };
    write_json(&out.join(METRICS_FILE), &metrics)?;
    write_json(&out.join(RELIABILITY_FILE), &reliability)?;
    files.push(METRICS_FILE.into());
    files.push(RELIABILITY_FILE.into());
    let manifest = write_manifest(cfg, "evaluate", &out, &files, seeds.data)?;
    Ok(EvaluateOutput { dir: out, metrics, reliability, manifest })
}
