use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attribution::{AttributionConfig, Method};
use crate::domains::Domain;
use crate::error::{Error, Result};
use crate::masking::{AdversarialConfig, AimConfig, AmplitudeMode, MaskingOperator, MdRoadConfig, Norm, SpectralReplace};
use crate::data::Dataset;
use crate::model::{Layer, Model, TrainConfig};
use crate::protocol::{default_ratios, validate_ratios, DEFAULT_N_PERM};
use crate::tasks::{load_dataset, TaskSpec};

/// Saliency source of one curve: a method label such as `IG` or `IGA`, or
/// `ORACLE` for the planted-feature indicator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MethodSpec {
    Method { method: Method, absolute: bool },
    Oracle,
}

impl MethodSpec {
    pub fn parse(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("ORACLE") {
            return Ok(MethodSpec::Oracle);
        }
        if let Ok(method) = s.parse::<Method>() {
            return Ok(MethodSpec::Method { method, absolute: false });
        }
        if let Some(stem) = s.strip_suffix('A').or_else(|| s.strip_suffix('a')) {
            if let Ok(method) = stem.parse::<Method>() {
                if method != Method::Random {
                    return Ok(MethodSpec::Method { method, absolute: true });
                }
            }
        }
        Err(Error::Config(format!("evaluate.methods: unknown method {s:?}")))
    }

    pub fn label(&self) -> String {
        match self {
            MethodSpec::Oracle => "ORACLE".into(),
            MethodSpec::Method { method, absolute } => AttributionConfig::new(*method).absolute(*absolute).label(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSection {
    /// Shipped task to generate: spatial, temporal, spectral or grid.
    pub preset: Option<Domain>,
    /// Directory holding `train.csv` and `test.csv` with their spec sidecars,
    /// as written by `train`.
    pub dataset: Option<PathBuf>,
    pub samples_per_class: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    Mlp,
    Conv1d,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub arch: Option<Arch>,
    pub hidden: Option<[usize; 2]>,
    pub filters: Option<usize>,
    pub kernel: Option<usize>,
    /// Trained weights to evaluate instead of training from the config.
    pub weights: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub momentum: Option<f64>,
    pub weight_decay: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateSection {
    pub methods: Vec<String>,
    pub operators: Vec<String>,
    pub domains: Vec<Domain>,
    #[serde(default = "default_ratios")]
    pub ratios: Vec<f64>,
    #[serde(default = "default_n_perm")]
    pub n_perm: usize,
    /// Samples of the test split to evaluate; all when absent.
    pub max_samples: Option<usize>,
}

fn default_n_perm() -> usize {
    DEFAULT_N_PERM
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttributionSection {
    pub noise_fraction: f64,
    pub n_samples: usize,
    pub ig_steps: usize,
}

impl Default for AttributionSection {
    fn default() -> Self {
        let d = AttributionConfig::default();
        Self { noise_fraction: d.noise_fraction, n_samples: d.n_samples, ig_steps: d.ig_steps }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpsilonChoice {
    Fixed(f64),
    /// `"calibrate"`: smallest grid value bringing full replacement to chance.
    Calibrate(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AimSection {
    pub epsilon: EpsilonChoice,
    pub grid_min: f64,
    pub grid_max: f64,
    pub grid_points: usize,
    pub tolerance: f64,
    pub alpha: Option<f64>,
    pub iterations: usize,
    pub norm: Norm,
    pub spectral_replace: SpectralReplace,
    pub half_freq: bool,
}

impl Default for AimSection {
    fn default() -> Self {
        Self {
            epsilon: EpsilonChoice::Calibrate("calibrate".into()),
            grid_min: 0.02,
            grid_max: 5.0,
            grid_points: 16,
            tolerance: crate::masking::DEFAULT_CHANCE_TOLERANCE,
            alpha: None,
            iterations: crate::masking::DEFAULT_ITERATIONS,
            norm: Norm::Linf,
            spectral_replace: SpectralReplace::Complex,
            half_freq: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MdRoadSection {
    pub noise_fraction: f64,
    pub hurst: f64,
    pub amplitude_mode: AmplitudeMode,
}

impl Default for MdRoadSection {
    fn default() -> Self {
        let d = MdRoadConfig::default();
        Self { noise_fraction: d.noise_fraction, hurst: d.hurst, amplitude_mode: d.amplitude_mode }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub task: TaskSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default = "empty_train")]
    pub train: TrainSection,
    pub evaluate: Option<EvaluateSection>,
    #[serde(default)]
    pub attribution: AttributionSection,
    #[serde(default)]
    pub aim: AimSection,
    #[serde(default)]
    pub mdroad: MdRoadSection,
}

fn empty_train() -> TrainSection {
    TrainSection { learning_rate: None, epochs: None, batch_size: None, momentum: None, weight_decay: None }
}

impl RunConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(format!("{}: {e}", origin.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::NotFound(path.to_path_buf()));
        }
        Self::parse(&std::fs::read_to_string(path)?, path)
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.task.preset, &self.task.dataset) {
            (Some(_), None) => self.task_spec()?.validate()?,
            (None, Some(_)) => {}
            _ => return Err(Error::Config("task needs exactly one of preset or dataset".into())),
        }
        if self.model.arch == Some(Arch::Mlp) && (self.model.filters.is_some() || self.model.kernel.is_some()) {
            return Err(Error::Config("model.filters and model.kernel apply to conv1d only".into()));
        }
        if self.model.arch == Some(Arch::Conv1d) && self.model.hidden.is_some() {
            return Err(Error::Config("model.hidden applies to mlp only".into()));
        }
        self.train_config().validate()?;
        if let Some(ev) = &self.evaluate {
            if ev.methods.is_empty() || ev.operators.is_empty() || ev.domains.is_empty() {
                return Err(Error::Config("evaluate needs at least one method, operator and domain".into()));
            }
            for m in &ev.methods {
                MethodSpec::parse(m)?;
            }
            self.operators()?;
            validate_ratios(&ev.ratios).map_err(|e| Error::Config(format!("evaluate.ratios: {e}")))?;
            if ev.max_samples == Some(0) {
                return Err(Error::Config("evaluate.max_samples must be >= 1".into()));
            }
        }
        if let EpsilonChoice::Calibrate(s) = &self.aim.epsilon {
            if s != "calibrate" {
                return Err(Error::Config(format!("aim.epsilon must be a number or \"calibrate\", got {s:?}")));
            }
        }
        if !(self.aim.grid_min > 0.0 && self.aim.grid_max >= self.aim.grid_min && self.aim.grid_points >= 1) {
            return Err(Error::Config("aim grid needs 0 < grid_min <= grid_max and grid_points >= 1".into()));
        }
        Ok(())
    }

    /// Task spec plus train and test splits, generated or loaded.
    pub fn load_task(&self) -> Result<(TaskSpec, Dataset, Dataset)> {
        if let Some(dir) = &self.task.dataset {
            let (spec, train) = load_dataset(dir, "train")?;
            let (_, test) = load_dataset(dir, "test")?;
            return Ok((spec, train, test));
        }
        let spec = self.task_spec()?;
        let (train, test) = spec.train_test()?;
        Ok((spec, train, test))
    }

    /// Spec of the generated task. Only valid for preset tasks.
    pub fn task_spec(&self) -> Result<TaskSpec> {
        let preset = self.task.preset.ok_or_else(|| Error::Config("task.preset is required without task.dataset".into()))?;
        let base = TaskSpec::preset(preset);
        Ok(TaskSpec {
            samples_per_class: self.task.samples_per_class.unwrap_or(base.samples_per_class),
            seed: self.task.seed.unwrap_or(base.seed),
            ..base
        })
    }

    /// Untrained model for `spec`; config fields override the task default.
    pub fn build_model(&self, spec: &TaskSpec) -> Result<Model> {
        let seed = crate::rng::derive(self.seed, &[0x4d4f44454c]);
        let default = spec.model(seed)?;
        let m = &self.model;
        let is_conv = default.layers.iter().any(|l| matches!(l, Layer::Conv1d { .. }));
        let shape = spec.layout.shape();
        match m.arch.unwrap_or(if is_conv { Arch::Conv1d } else { Arch::Mlp }) {
            Arch::Mlp if m.hidden.is_none() && !is_conv => Ok(default),
            Arch::Mlp => Model::mlp(shape, m.hidden.unwrap_or([32, 16]), spec.classes, seed),
            Arch::Conv1d if m.filters.is_none() && m.kernel.is_none() && is_conv => Ok(default),
            Arch::Conv1d => Model::conv1d(shape, m.filters.unwrap_or(8), m.kernel.unwrap_or(9), spec.classes, seed),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let base = match self.task_spec() {
            Ok(spec) => spec.train_config(),
            Err(_) => TaskSpec::preset(Domain::Spatial).train_config(),
        };
        let t = &self.train;
        TrainConfig {
            learning_rate: t.learning_rate.unwrap_or(base.learning_rate),
            epochs: t.epochs.unwrap_or(base.epochs),
            batch_size: t.batch_size.unwrap_or(base.batch_size),
            seed: crate::rng::derive(self.seed, &[0x545241494e]),
            optimizer: match t.momentum {
                Some(b) if b == 0.0 => crate::model::Optimizer::Sgd,
                Some(beta) => crate::model::Optimizer::Momentum { beta },
                None => base.optimizer,
            },
            weight_decay: t.weight_decay.unwrap_or(base.weight_decay),
        }
    }

    pub fn methods(&self) -> Result<Vec<MethodSpec>> {
        self.evaluate.as_ref().map_or(Ok(vec![]), |e| e.methods.iter().map(|m| MethodSpec::parse(m)).collect())
    }

    pub fn attribution(&self, method: Method, absolute: bool) -> AttributionConfig {
        AttributionConfig {
            noise_fraction: self.attribution.noise_fraction,
            n_samples: self.attribution.n_samples,
            ig_steps: self.attribution.ig_steps,
            seed: crate::rng::derive(self.seed, &[0x41545452]),
            ..AttributionConfig::new(method).absolute(absolute)
        }
    }

    pub fn adversarial(&self, epsilon: f64) -> AdversarialConfig {
        AdversarialConfig {
            epsilon,
            alpha: self.aim.alpha,
            iterations: self.aim.iterations,
            norm: self.aim.norm,
            seed: crate::rng::derive(self.seed, &[0x41494d]),
        }
    }

    /// Operators in config order. AIM carries a placeholder radius until
    /// calibration resolves it.
    pub fn operators(&self) -> Result<Vec<MaskingOperator>> {
        let Some(ev) = &self.evaluate else { return Ok(vec![]) };
        ev.operators
            .iter()
            .map(|o| match o.to_ascii_uppercase().as_str() {
                "ZEROING" => Ok(MaskingOperator::Zeroing),
                "MDROAD" => Ok(MaskingOperator::MdRoad(MdRoadConfig {
                    noise_fraction: self.mdroad.noise_fraction,
                    hurst: self.mdroad.hurst,
                    amplitude_mode: self.mdroad.amplitude_mode,
                })),
                "AIM" => Ok(MaskingOperator::Aim(AimConfig {
                    adversarial: self.adversarial(match self.aim.epsilon {
                        EpsilonChoice::Fixed(e) => e,
                        EpsilonChoice::Calibrate(_) => self.aim.grid_min,
                    }),
                    spectral_replace: self.aim.spectral_replace,
                    half_freq: self.aim.half_freq,
                })),
                other => Err(Error::Config(format!("evaluate.operators: unknown operator {other:?} (ZEROING, MDROAD, AIM)"))),
            })
            .collect()
    }
}
