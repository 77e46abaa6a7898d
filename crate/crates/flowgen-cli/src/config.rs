//! Experiment configuration: a single JSON file with nested sections, plus
//! the conversions into core types. CLI flags override the seed, iteration
//! count, and output directory after parsing.

use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use flowgen_core::generators::AdamConfig;
use flowgen_core::kernels::{GradientConvention, KernelSpec};
use flowgen_core::langevin::{AlphaMode, GammaMode, LangevinSchedule};
use flowgen_core::scores::{GaussianSpec, GmmSpec, TargetDensity};
use flowgen_core::train::LossKind;
use flowgen_core::{GeneratorModel, LinearGenerator, Matrix, MlpGenerator, SeededPrng, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Gaussian,
    Gmm,
    Morph,
    Langevin,
    Quiver,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Gaussian => "gaussian",
            Self::Gmm => "gmm",
            Self::Morph => "morph",
            Self::Langevin => "langevin",
            Self::Quiver => "quiver",
        }
    }
}

/// Covariance: either `var` (scaled identity) or a full row-major matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CovConfig {
    ScaledIdentity(f64),
    Full(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianConfig {
    pub mean: Vec<f64>,
    pub cov: CovConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum TargetConfig {
    Gaussian {
        mean: Vec<f64>,
        cov: CovConfig,
    },
    Gmm {
        weights: Vec<f64>,
        components: Vec<GaussianConfig>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum GeneratorConfig {
    /// `widths` must be `[n_in, n_out]`.
    Linear { widths: Vec<usize> },
    Mlp {
        widths: Vec<usize>,
        #[serde(default = "default_slope")]
        slope: f64,
    },
}

fn default_slope() -> f64 {
    0.2
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConventionConfig {
    #[default]
    Exact,
    PaperTable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum KernelConfig {
    Rbfg {
        sigma: f64,
    },
    Mog {
        #[serde(default = "default_mog_sigmas")]
        sigmas: Vec<f64>,
    },
    Imq {
        c: f64,
    },
    Phs {
        /// Spline exponent; no default is assumed.
        k: i32,
        /// Dimension used for the plain/log form rule; defaults to the
        /// experiment's data dimension.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        ambient_dim: Option<usize>,
        #[serde(default)]
        convention: ConventionConfig,
    },
}

fn default_mog_sigmas() -> Vec<f64> {
    vec![0.5, 1.0, 2.0, 4.0, 8.0]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossConfig {
    ScoreGan,
    FlowGan,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainParams {
    pub iterations: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Data reference batch for the flow loss; defaults to `batch_size`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_batch_size: Option<usize>,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_metric_stride")]
    pub metric_stride: usize,
    /// Sample count used when fitting moments / coverage during evaluation.
    #[serde(default = "default_eval_samples")]
    pub eval_samples: usize,
    /// Mahalanobis radius multiplier for mode coverage (gmm runs).
    #[serde(default = "default_radius")]
    pub radius_multiplier: f64,
    /// Harness self-check: report data samples as if the generator had
    /// produced them (gmm runs only).
    #[serde(default)]
    pub sanity_bypass_generator: bool,
}

fn default_batch() -> usize {
    500
}
fn default_lr() -> f64 {
    1e-3
}
fn default_metric_stride() -> usize {
    10
}
fn default_eval_samples() -> usize {
    2000
}
fn default_radius() -> f64 {
    3.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaModeConfig {
    Zero,
    SqrtTwoAlpha,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LangevinParams {
    #[serde(default = "default_particles")]
    pub particles: usize,
    pub steps: usize,
    #[serde(default = "default_alpha0")]
    pub alpha0: f64,
    /// Geometric decay rate; absent means a constant step size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_decay: Option<f64>,
    #[serde(default = "default_gamma_mode")]
    pub gamma_mode: GammaModeConfig,
    /// Fresh data centers drawn per step, without replacement from the pool.
    #[serde(default = "default_batch")]
    pub data_batch_size: usize,
    /// Size of the target sample pool.
    #[serde(default = "default_pool")]
    pub pool_size: usize,
    /// Discriminator field scale (the kernel constant); scale freedom is
    /// normally left to alpha0.
    #[serde(default = "default_field_scale")]
    pub field_scale: f64,
    #[serde(default = "default_morph_stride")]
    pub metric_stride: usize,
    /// Particle snapshot CSVs every this many steps (0 disables).
    #[serde(default)]
    pub snapshot_stride: usize,
}

fn default_particles() -> usize {
    1000
}
fn default_alpha0() -> f64 {
    1.0
}
fn default_gamma_mode() -> GammaModeConfig {
    GammaModeConfig::Zero
}
fn default_pool() -> usize {
    2000
}
fn default_field_scale() -> f64 {
    1.0
}
fn default_morph_stride() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MorphParams {
    pub source_mask: PathBuf,
    pub target_mask: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuiverView {
    /// Target score field.
    Score,
    /// Kernel flow field `(p_data - p_gen) * grad kernel`.
    Flow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuiverParams {
    pub view: QuiverView,
    #[serde(default = "default_extent")]
    pub extent: [f64; 2],
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    /// Centers per set for the flow view.
    #[serde(default = "default_batch")]
    pub samples: usize,
}

fn default_extent() -> [f64; 2] {
    [-8.0, 8.0]
}
fn default_resolution() -> usize {
    50
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub langevin: Option<LangevinParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub morph: Option<MorphParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quiver: Option<QuiverParams>,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).context("parsing config JSON")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_json(&text)
    }

    /// Structural validation: every section the experiment kind needs is
    /// present and internally consistent.
    pub fn validate(&self) -> Result<()> {
        match self.experiment {
            ExperimentKind::Gaussian | ExperimentKind::Gmm => {
                let target = self.target.as_ref().ok_or_else(|| missing("target"))?;
                self.check_target_kind(target)?;
                let gen = self.generator.as_ref().ok_or_else(|| missing("generator"))?;
                let loss = self.loss.ok_or_else(|| missing("loss"))?;
                let train = self.train.as_ref().ok_or_else(|| missing("train"))?;
                if train.batch_size == 0 {
                    bail!("train.batch_size must be >= 1");
                }
                if loss == LossConfig::FlowGan && self.kernel.is_none() {
                    bail!("flowgan loss requires a kernel section");
                }
                let data_dim = target_dim(target)?;
                let (n_in, n_out) = generator_dims(gen)?;
                if n_out != data_dim {
                    bail!("generator output dim {n_out} != target dim {data_dim}");
                }
                if loss == LossConfig::ScoreGan && n_in > n_out {
                    bail!("scoregan requires n_in <= n_out (got {n_in} -> {n_out})");
                }
                self.check_kernel(data_dim)?;
            }
            ExperimentKind::Morph => {
                self.morph.as_ref().ok_or_else(|| missing("morph"))?;
                let lv = self.langevin.as_ref().ok_or_else(|| missing("langevin"))?;
                self.kernel.as_ref().ok_or_else(|| missing("kernel"))?;
                self.check_langevin(lv)?;
                self.check_kernel(2)?;
            }
            ExperimentKind::Langevin => {
                let target = self.target.as_ref().ok_or_else(|| missing("target"))?;
                let lv = self.langevin.as_ref().ok_or_else(|| missing("langevin"))?;
                self.kernel.as_ref().ok_or_else(|| missing("kernel"))?;
                self.check_langevin(lv)?;
                self.check_kernel(target_dim(target)?)?;
            }
            ExperimentKind::Quiver => {
                let target = self.target.as_ref().ok_or_else(|| missing("target"))?;
                let q = self.quiver.as_ref().ok_or_else(|| missing("quiver"))?;
                if target_dim(target)? != 2 {
                    bail!("quiver export requires a 2-D target");
                }
                if q.resolution < 2 {
                    bail!("quiver.resolution must be >= 2");
                }
                if !(q.extent[0] < q.extent[1]) {
                    bail!("quiver.extent must be increasing");
                }
                if q.view == QuiverView::Flow {
                    self.kernel.as_ref().ok_or_else(|| missing("kernel"))?;
                    self.check_kernel(2)?;
                }
            }
        }
        Ok(())
    }

    fn check_target_kind(&self, target: &TargetConfig) -> Result<()> {
        match (self.experiment, target) {
            (ExperimentKind::Gaussian, TargetConfig::Gmm { .. }) => {
                bail!("gaussian experiment requires a gaussian target")
            }
            (ExperimentKind::Gmm, TargetConfig::Gaussian { .. }) => {
                bail!("gmm experiment requires a gmm target")
            }
            _ => Ok(()),
        }
    }

    fn check_langevin(&self, lv: &LangevinParams) -> Result<()> {
        if lv.steps == 0 || lv.particles == 0 {
            bail!("langevin.steps and langevin.particles must be >= 1");
        }
        if !(lv.alpha0 > 0.0) {
            bail!("langevin.alpha0 must be > 0");
        }
        if let Some(rate) = lv.alpha_decay {
            if !(rate > 0.0 && rate < 1.0) {
                bail!("langevin.alpha_decay must lie in (0, 1)");
            }
        }
        Ok(())
    }

    fn check_kernel(&self, data_dim: usize) -> Result<()> {
        if let Some(k) = &self.kernel {
            build_kernel(k, data_dim)?;
        }
        Ok(())
    }

    /// Applies CLI overrides. `iterations` retargets the training loop for
    /// training experiments and the step horizon for sampling experiments.
    pub fn apply_overrides(
        &mut self,
        seed: Option<u64>,
        iterations: Option<usize>,
        out_dir: Option<PathBuf>,
    ) {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(n) = iterations {
            if let Some(t) = self.train.as_mut() {
                t.iterations = n;
            }
            if let Some(l) = self.langevin.as_mut() {
                l.steps = n;
            }
        }
        if let Some(dir) = out_dir {
            self.out_dir = dir;
        }
    }
}

fn missing(section: &str) -> anyhow::Error {
    anyhow!("config section `{section}` is required for this experiment")
}

pub fn target_dim(target: &TargetConfig) -> Result<usize> {
    match target {
        TargetConfig::Gaussian { mean, .. } => Ok(mean.len()),
        TargetConfig::Gmm { components, .. } => components
            .first()
            .map(|c| c.mean.len())
            .ok_or_else(|| anyhow!("gmm target needs at least one component")),
    }
}

pub fn generator_dims(gen: &GeneratorConfig) -> Result<(usize, usize)> {
    match gen {
        GeneratorConfig::Linear { widths } => {
            if widths.len() != 2 {
                bail!("linear generator widths must be [n_in, n_out]");
            }
            Ok((widths[0], widths[1]))
        }
        GeneratorConfig::Mlp { widths, .. } => {
            if widths.len() < 2 {
                bail!("mlp generator needs at least [n_in, n_out] widths");
            }
            Ok((widths[0], widths[widths.len() - 1]))
        }
    }
}

fn build_cov(cov: &CovConfig, dim: usize) -> Result<Matrix> {
    match cov {
        CovConfig::ScaledIdentity(v) => {
            if !(*v > 0.0) {
                bail!("scaled-identity covariance must be > 0");
            }
            Ok(Matrix::diagonal(&vec![*v; dim]))
        }
        CovConfig::Full(rows) => {
            if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                bail!("covariance must be {dim}x{dim}");
            }
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            Matrix::new(dim, dim, flat).map_err(|e| anyhow!("covariance: {e}"))
        }
    }
}

pub fn build_target(target: &TargetConfig) -> Result<TargetDensity> {
    match target {
        TargetConfig::Gaussian { mean, cov } => {
            let dim = mean.len();
            let mean = Vector::new(mean.clone()).map_err(|e| anyhow!("mean: {e}"))?;
            let cov = build_cov(cov, dim)?;
            Ok(TargetDensity::Gaussian(
                GaussianSpec::new(mean, cov).map_err(|e| anyhow!("target: {e}"))?,
            ))
        }
        TargetConfig::Gmm { weights, components } => {
            let comps = components
                .iter()
                .map(|c| {
                    let mean =
                        Vector::new(c.mean.clone()).map_err(|e| anyhow!("component mean: {e}"))?;
                    let cov = build_cov(&c.cov, mean.len())?;
                    GaussianSpec::new(mean, cov).map_err(|e| anyhow!("component: {e}"))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(TargetDensity::Gmm(
                GmmSpec::new(weights.clone(), comps).map_err(|e| anyhow!("gmm: {e}"))?,
            ))
        }
    }
}

pub fn build_generator(gen: &GeneratorConfig, rng: &mut SeededPrng) -> Result<GeneratorModel> {
    match gen {
        GeneratorConfig::Linear { widths } => {
            let (n_in, n_out) = generator_dims(gen)?;
            let _ = widths;
            Ok(GeneratorModel::Linear(LinearGenerator::glorot(
                n_out, n_in, rng,
            )))
        }
        GeneratorConfig::Mlp { widths, slope } => Ok(GeneratorModel::Mlp(
            MlpGenerator::glorot(widths.clone(), *slope, rng)
                .map_err(|e| anyhow!("mlp generator: {e}"))?,
        )),
    }
}

pub fn build_kernel(kernel: &KernelConfig, data_dim: usize) -> Result<KernelSpec> {
    let spec = match kernel {
        KernelConfig::Rbfg { sigma } => {
            KernelSpec::rbfg(*sigma).map_err(|e| anyhow!("rbfg kernel: {e}"))?
        }
        KernelConfig::Mog { sigmas } => {
            KernelSpec::mog(sigmas.clone()).map_err(|e| anyhow!("mog kernel: {e}"))?
        }
        KernelConfig::Imq { c } => KernelSpec::imq(*c).map_err(|e| anyhow!("imq kernel: {e}"))?,
        KernelConfig::Phs {
            k,
            ambient_dim,
            convention,
        } => {
            let n = ambient_dim.unwrap_or(data_dim);
            let spec = KernelSpec::phs(*k, n).map_err(|e| anyhow!("phs kernel: {e}"))?;
            return Ok(match convention {
                ConventionConfig::Exact => spec,
                ConventionConfig::PaperTable => {
                    spec.with_convention(GradientConvention::PaperTable)
                }
            });
        }
    };
    Ok(spec)
}

pub fn build_adam(train: &TrainParams) -> AdamConfig {
    AdamConfig::default().with_learning_rate(train.learning_rate)
}

pub fn loss_kind(loss: LossConfig) -> LossKind {
    match loss {
        LossConfig::ScoreGan => LossKind::ScoreGan,
        LossConfig::FlowGan => LossKind::FlowGan,
    }
}

pub fn build_schedule(lv: &LangevinParams) -> Result<LangevinSchedule> {
    let alpha_mode = match lv.alpha_decay {
        None => AlphaMode::Constant,
        Some(rate) => AlphaMode::Geometric { rate },
    };
    let gamma_mode = match lv.gamma_mode {
        GammaModeConfig::Zero => GammaMode::Zero,
        GammaModeConfig::SqrtTwoAlpha => GammaMode::SqrtTwoAlpha,
    };
    LangevinSchedule::new(lv.alpha0, alpha_mode, gamma_mode, lv.steps)
        .map_err(|e| anyhow!("langevin schedule: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_json() -> String {
        r#"{
            "experiment": "gaussian",
            "seed": 7,
            "out_dir": "runs/g2",
            "target": {"type": "gaussian", "mean": [5.0, 5.0], "cov": 0.75},
            "generator": {"type": "linear", "widths": [2, 2]},
            "kernel": {"type": "phs", "k": 2},
            "loss": "flowgan",
            "train": {"iterations": 100, "batch_size": 64, "learning_rate": 0.01}
        }"#
        .to_string()
    }

    #[test]
    fn parses_and_validates() {
        let cfg = ExperimentConfig::from_json(&gaussian_json()).unwrap();
        assert_eq!(cfg.experiment, ExperimentKind::Gaussian);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.train.as_ref().unwrap().metric_stride, 10);
    }

    #[test]
    fn round_trip_is_idempotent() {
        let cfg = ExperimentConfig::from_json(&gaussian_json()).unwrap();
        let text = cfg.to_json().unwrap();
        let again = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn missing_sections_are_rejected() {
        let mut cfg = ExperimentConfig::from_json(&gaussian_json()).unwrap();
        cfg.target = None;
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::from_json(&gaussian_json()).unwrap();
        cfg.kernel = None;
        assert!(cfg.validate().is_err(), "flowgan without kernel must fail");

        let mut cfg = ExperimentConfig::from_json(&gaussian_json()).unwrap();
        cfg.loss = Some(LossConfig::ScoreGan);
        cfg.kernel = None;
        assert!(cfg.validate().is_ok(), "scoregan does not need a kernel");
    }

    #[test]
    fn dim_mismatches_are_rejected() {
        let mut cfg = ExperimentConfig::from_json(&gaussian_json()).unwrap();
        cfg.generator = Some(GeneratorConfig::Linear { widths: vec![2, 3] });
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn overrides_apply() {
        let mut cfg = ExperimentConfig::from_json(&gaussian_json()).unwrap();
        cfg.apply_overrides(Some(99), Some(5), Some(PathBuf::from("elsewhere")));
        assert_eq!(cfg.seed, 99);
        assert_eq!(cfg.train.as_ref().unwrap().iterations, 5);
        assert_eq!(cfg.out_dir, PathBuf::from("elsewhere"));
    }

    #[test]
    fn kernel_defaults() {
        // PHS ambient dimension defaults to the data dimension: in 2-D with
        // k >= 0 that selects the log form; an explicit odd ambient keeps
        // the plain form.
        let cfg = ExperimentConfig::from_json(&gaussian_json()).unwrap();
        let k = build_kernel(cfg.kernel.as_ref().unwrap(), 2).unwrap();
        assert!(k.is_phs());

        let json = r#"{"type": "phs", "k": 1, "ambient_dim": 3, "convention": "paper_table"}"#;
        let kc: KernelConfig = serde_json::from_str(json).unwrap();
        let k = build_kernel(&kc, 2).unwrap();
        assert_eq!(k.convention(), GradientConvention::PaperTable);
        assert!((k.eval(&[2.0, 0.0]) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let bad = gaussian_json().replace("\"seed\": 7,", "\"seed\": 7, \"extra\": 1,");
        assert!(ExperimentConfig::from_json(&bad).is_err());
    }
}
