use serde::{Deserialize, Serialize};

use crate::eval::{Condition, Group};
use crate::grid::GridConfig;
use crate::kernel::{Distance, KernelConfig, KernelFamily};
use crate::linalg::Matrix;
use crate::loss::{averaged_case_matrix, covid_matrix, individualized_matrix, LossSpec};
use crate::synth::{default_avg_coefficients, default_ind_betas, default_ind_sigma, default_noise_cov, GeneratorFamily};

use super::HarnessError;

fn bad(field: &str, message: impl Into<String>) -> HarnessError {
    HarnessError::invalid(field, message)
}

/// A replicated simulation: data generator, candidate trainers, methods,
/// sizes, metrics and an optional one-parameter sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub replications: usize,
    pub master_seed: u64,
    pub alpha: f64,
    /// Labeled sample size.
    pub n: usize,
    /// Test sample size.
    pub m: usize,
    #[serde(default = "default_train_size")]
    pub train_size: usize,
    pub methods: Vec<String>,
    pub loss: LossKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_matrix: Option<Matrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_croims_budget: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    pub generator: GeneratorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSection>,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    pub models: Vec<ModelConfig>,
}

fn default_train_size() -> usize {
    400
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    AveragedCase,
    Individualized,
    Covid,
    Portfolio,
    /// Uses `loss_matrix`.
    Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    AvgClassification,
    IndClassification,
    RegressionShift,
}

/// Generator family plus optional overrides of its default parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub family: GeneratorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Matrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub betas: Option<Matrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Matrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_mean: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_cov: Option<Matrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_cov: Option<Matrix>,
}

impl GeneratorConfig {
    pub fn of(family: GeneratorKind) -> Self {
        Self {
            family,
            coefficients: None,
            betas: None,
            sigma: None,
            x_mean: None,
            x_cov: None,
            noise_cov: None,
        }
    }

    /// Population the labeled and test data are drawn from.
    pub fn family(&self) -> GeneratorFamily {
        match self.family {
            GeneratorKind::AvgClassification => GeneratorFamily::AvgClassification {
                a: self.coefficients.clone().unwrap_or_else(default_avg_coefficients),
            },
            GeneratorKind::IndClassification => GeneratorFamily::IndClassification {
                betas: self.betas.clone().unwrap_or_else(default_ind_betas),
                sigma: self.sigma.clone().unwrap_or_else(default_ind_sigma),
            },
            GeneratorKind::RegressionShift => GeneratorFamily::RegressionShift {
                x_mean: self.x_mean.clone().unwrap_or_else(|| vec![1.0, 1.0]),
                x_cov: self
                    .x_cov
                    .clone()
                    .unwrap_or_else(|| vec![vec![2.25, 0.0], vec![0.0, 2.25]]),
                noise_cov: self.noise_cov.clone().unwrap_or_else(default_noise_cov),
            },
        }
    }

    /// Training pool for a shifted regression trainer: same response and
    /// noise, covariates `N(center, var · I)`.
    pub fn pool(&self, center: &[f64], var: f64) -> GeneratorFamily {
        match self.family() {
            GeneratorFamily::RegressionShift { noise_cov, .. } => GeneratorFamily::RegressionShift {
                x_mean: center.to_vec(),
                x_cov: vec![vec![var, 0.0], vec![0.0, var]],
                noise_cov,
            },
            other => other,
        }
    }

    pub fn is_classification(&self) -> bool {
        !matches!(self.family, GeneratorKind::RegressionShift)
    }

    pub fn num_classes(&self) -> Option<usize> {
        match self.family() {
            GeneratorFamily::AvgClassification { .. } => Some(5),
            GeneratorFamily::IndClassification { betas, .. } => Some(betas.len()),
            GeneratorFamily::RegressionShift { .. } => None,
        }
    }

    pub fn covariate_dim(&self) -> usize {
        match self.family() {
            GeneratorFamily::AvgClassification { .. } => 7,
            GeneratorFamily::IndClassification { sigma, .. } => sigma.len(),
            GeneratorFamily::RegressionShift { .. } => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainerKind {
    /// One logit classifier, expanded into greedy scores over a penalty grid.
    Greedy,
    /// Logit classifier on a feature subset, softmax score.
    Logit,
    /// Least-squares mean and residual covariance, ellipsoid score.
    Ellipsoid,
    /// Least-squares mean, box score.
    Box,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub trainer: TrainerKind,
    /// Covariate columns for logit trainers; all columns when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub interactions: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_max: Option<f64>,
    /// Covariate center of the training pool for regression trainers; the
    /// test population when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool_var: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ridge: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_epochs: Option<usize>,
}

fn is_false(b: &bool) -> bool {
    !*b
}

impl ModelConfig {
    pub fn of(trainer: TrainerKind) -> Self {
        Self {
            trainer,
            features: None,
            interactions: false,
            lambda_count: None,
            lambda_max: None,
            center: None,
            pool_var: None,
            ridge: None,
            max_epochs: None,
        }
    }

    pub fn lambda_count(&self) -> usize {
        self.lambda_count.unwrap_or(10)
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max.unwrap_or(0.2)
    }

    pub fn pool_var(&self) -> f64 {
        self.pool_var.unwrap_or(1.0)
    }

    pub fn ridge(&self) -> f64 {
        self.ridge.unwrap_or(1e-6)
    }

    /// Number of candidates this entry contributes.
    pub fn candidates(&self) -> usize {
        match self.trainer {
            TrainerKind::Greedy => self.lambda_count(),
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamilyName {
    Gaussian,
    Exponential,
    Box,
}

/// Bandwidth `h = c · n^{-1/(d+2)}` with `c` given, or chosen as the smallest
/// grid constant reaching `target_neff` on a held-out generator sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub family: KernelFamilyName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_neff: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<usize>>,
}

impl KernelSection {
    pub fn template(&self) -> KernelConfig {
        let family = match self.family {
            KernelFamilyName::Gaussian => KernelFamily::GaussianSq,
            KernelFamilyName::Exponential => KernelFamily::Exponential,
            KernelFamilyName::Box => KernelFamily::Box,
        };
        let distance = match &self.features {
            Some(f) => Distance::Features(f.clone()),
            None => Distance::Euclidean,
        };
        KernelConfig {
            family,
            bandwidth: 1.0,
            distance,
        }
    }
}

pub const METRIC_NAMES: [&str; 7] = [
    "miscoverage",
    "misrobustness",
    "avg_loss",
    "wc_cond_miscoverage",
    "wc_cond_misrobustness",
    "covgap",
    "robgap",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    /// Metrics to compute; the rest are written as empty cells.
    #[serde(default = "default_include")]
    pub include: Vec<String>,
    #[serde(default = "default_balls")]
    pub balls: usize,
    #[serde(default = "default_ball_mass")]
    pub ball_mass: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub groups: Vec<GroupConfig>,
}

fn default_include() -> Vec<String> {
    METRIC_NAMES.iter().map(|s| s.to_string()).collect()
}

fn default_balls() -> usize {
    20
}

fn default_ball_mass() -> f64 {
    0.1
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            include: default_include(),
            balls: default_balls(),
            ball_mass: default_ball_mass(),
            groups: Vec::new(),
        }
    }
}

impl MetricsConfig {
    pub fn wants(&self, metric: &str) -> bool {
        self.include.iter().any(|m| m == metric || (m == "group_loss" && metric.starts_with("group_loss_")))
    }

    pub fn groups(&self) -> Vec<Group> {
        self.groups
            .iter()
            .map(|g| {
                Group::new(
                    g.name.clone(),
                    g.conditions
                        .iter()
                        .map(|c| Condition {
                            feature: c.feature,
                            lower: c.lower,
                            upper: c.upper,
                        })
                        .collect(),
                )
            })
            .collect()
    }
}

/// Covariate region: conjunction of half-open intervals `lower <= x_f < upper`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupConfig {
    pub name: String,
    pub conditions: Vec<ConditionConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionConfig {
    pub feature: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
}

impl GroupConfig {
    pub fn interval(name: &str, feature: usize, lower: Option<f64>, upper: Option<f64>) -> Self {
        Self {
            name: name.to_string(),
            conditions: vec![ConditionConfig { feature, lower, upper }],
        }
    }
}

/// Label grid used by F-CROMS on regression labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "default_padding")]
    pub padding: f64,
    #[serde(default = "default_points")]
    pub points_per_axis: usize,
    #[serde(default = "default_max_points")]
    pub max_points: usize,
}

fn default_padding() -> f64 {
    GridConfig::default().padding
}

fn default_points() -> usize {
    GridConfig::default().points_per_axis
}

fn default_max_points() -> usize {
    GridConfig::default().max_points
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            padding: default_padding(),
            points_per_axis: default_points(),
            max_points: default_max_points(),
        }
    }
}

impl GridSection {
    pub fn config(&self) -> GridConfig {
        GridConfig {
            padding: self.padding,
            points_per_axis: self.points_per_axis,
            max_points: self.max_points,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    N,
    M,
    Alpha,
    LambdaCount,
    TrainSize,
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::N => "n",
            SweepParam::M => "m",
            SweepParam::Alpha => "alpha",
            SweepParam::LambdaCount => "lambda_count",
            SweepParam::TrainSize => "train_size",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

/// Selection method named in a config.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    NaiveCp,
    ECroms,
    FCroms,
    /// Sample splitting with the given selection fraction.
    E2e(f64),
    Croims,
    NaiveLcp,
    FCroims,
}

impl Method {
    pub fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "naive-cp" => Method::NaiveCp,
            "e-croms" => Method::ECroms,
            "f-croms" => Method::FCroms,
            "croims" => Method::Croims,
            "naive-lcp" => Method::NaiveLcp,
            "f-croims" => Method::FCroims,
            _ => {
                let frac: f64 = name.strip_prefix("e2e-")?.parse().ok()?;
                if !(frac > 0.0 && frac < 1.0) {
                    return None;
                }
                Method::E2e(frac)
            }
        })
    }

    pub fn needs_kernel(&self) -> bool {
        matches!(self, Method::Croims | Method::NaiveLcp | Method::FCroims)
    }
}

impl ExperimentConfig {
    /// Parses and validates; every error carries the offending field and,
    /// when it can be located, the source line.
    pub fn from_toml_str(src: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(src).map_err(|e| HarnessError::Parse(e.to_string()))?;
        cfg.validate().map_err(|e| e.locate(src))?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String, HarnessError> {
        toml::to_string_pretty(self).map_err(|e| HarnessError::Parse(e.to_string()))
    }

    pub fn methods(&self) -> Vec<Method> {
        self.methods.iter().filter_map(|m| Method::parse(m)).collect()
    }

    pub fn loss_spec(&self) -> Result<LossSpec, HarnessError> {
        Ok(match self.loss {
            LossKind::AveragedCase => averaged_case_matrix(),
            LossKind::Individualized => individualized_matrix(),
            LossKind::Covid => covid_matrix(),
            LossKind::Portfolio => LossSpec::BilinearPortfolio { dim: 2 },
            LossKind::Matrix => {
                let m = self
                    .loss_matrix
                    .clone()
                    .ok_or_else(|| HarnessError::invalid("loss_matrix", "required when loss = \"matrix\""))?;
                LossSpec::matrix(m).map_err(|e| HarnessError::invalid("loss_matrix", e.to_string()))?
            }
        })
    }

    /// Parameter values of the sweep, or the single base `n`.
    pub fn sweep_points(&self) -> (&'static str, Vec<f64>) {
        match &self.sweep {
            Some(s) => (s.param.name(), s.values.clone()),
            None => ("n", vec![self.n as f64]),
        }
    }

    /// Copy with the swept parameter set to `value`.
    pub fn at_sweep_value(&self, value: f64) -> Self {
        let mut c = self.clone();
        if let Some(s) = &self.sweep {
            match s.param {
                SweepParam::N => c.n = value as usize,
                SweepParam::M => c.m = value as usize,
                SweepParam::Alpha => c.alpha = value,
                SweepParam::TrainSize => c.train_size = value as usize,
                SweepParam::LambdaCount => {
                    for m in c.models.iter_mut().filter(|m| m.trainer == TrainerKind::Greedy) {
                        m.lambda_count = Some(value as usize);
                    }
                }
            }
        }
        c
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.name.trim().is_empty() {
            return Err(bad("name", "must not be empty"));
        }
        if self.replications < 1 {
            return Err(bad("replications", "must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(bad("alpha", format!("must lie in (0, 1), got {}", self.alpha)));
        }
        if self.n < 2 {
            return Err(bad("n", format!("must be at least 2, got {}", self.n)));
        }
        if self.m < 1 {
            return Err(bad("m", "must be at least 1"));
        }
        if self.train_size < 2 {
            return Err(bad("train_size", "must be at least 2"));
        }
        if self.methods.is_empty() {
            return Err(bad("methods", "at least one method is required"));
        }
        for m in &self.methods {
            if Method::parse(m).is_none() {
                return Err(bad(
                    "methods",
                    format!("unknown method {m:?}; expected naive-cp, e-croms, f-croms, e2e-<fraction>, croims, naive-lcp or f-croims"),
                ));
            }
        }
        if self.f_croims_budget == Some(0) {
            return Err(bad("f_croims_budget", "must be positive"));
        }
        self.validate_generator()?;
        let loss = self.loss_spec()?;
        match (self.generator.num_classes(), &loss) {
            (Some(k), LossSpec::FiniteMatrix { .. }) => {
                if loss.num_labels() != Some(k) {
                    return Err(bad(
                        "loss",
                        format!("loss has {} label rows but the generator has {k} classes", loss.num_labels().unwrap_or(0)),
                    ));
                }
            }
            (None, LossSpec::BilinearPortfolio { .. }) => {}
            _ => return Err(bad("loss", "loss type does not match the generator's label type")),
        }
        if self.models.is_empty() {
            return Err(bad("models", "at least one candidate trainer is required"));
        }
        let d = self.generator.covariate_dim();
        for m in &self.models {
            self.validate_model(m, d)?;
        }
        if self.methods().iter().any(Method::needs_kernel) && self.kernel.is_none() {
            return Err(bad("kernel", "localized methods need a [kernel] section"));
        }
        if let Some(k) = &self.kernel {
            match (k.c, k.target_neff) {
                (Some(c), None) if c > 0.0 && c.is_finite() => {}
                (None, Some(t)) if t >= 1.0 => {}
                (Some(_), None) => return Err(bad("c", "must be positive and finite")),
                (None, Some(_)) => return Err(bad("target_neff", "must be at least 1")),
                _ => return Err(bad("kernel", "set exactly one of c or target_neff")),
            }
            if let Some(f) = &k.features {
                if f.is_empty() || f.iter().any(|&j| j >= d) {
                    return Err(bad("features", format!("kernel features must be nonempty columns below {d}")));
                }
            }
        }
        let mt = &self.metrics;
        for name in &mt.include {
            if !METRIC_NAMES.contains(&name.as_str()) && name != "group_loss" {
                return Err(bad("include", format!("unknown metric {name:?}")));
            }
        }
        if !(mt.ball_mass > 0.0 && mt.ball_mass <= 1.0) {
            return Err(bad("ball_mass", format!("must lie in (0, 1], got {}", mt.ball_mass)));
        }
        for g in &mt.groups {
            if g.name.is_empty() || g.conditions.is_empty() {
                return Err(bad("groups", "each group needs a name and at least one condition"));
            }
            if g.conditions.iter().any(|c| c.feature >= d) {
                return Err(bad("groups", format!("group {:?} uses a feature beyond dimension {d}", g.name)));
            }
        }
        let names: std::collections::BTreeSet<&str> = mt.groups.iter().map(|g| g.name.as_str()).collect();
        if names.len() != mt.groups.len() {
            return Err(bad("groups", "group names must be unique"));
        }
        let gr = &self.grid;
        if !(gr.padding >= 0.0) || gr.points_per_axis < 2 || gr.max_points < 2 {
            return Err(bad("grid", "padding must be ≥ 0 and grid sizes at least 2"));
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(bad("values", "sweep needs at least one value"));
            }
            for &v in &s.values {
                let integral = v.fract() == 0.0 && v >= 1.0;
                let ok = match s.param {
                    SweepParam::Alpha => v > 0.0 && v < 1.0,
                    SweepParam::N | SweepParam::TrainSize => integral && v >= 2.0,
                    SweepParam::M | SweepParam::LambdaCount => integral,
                };
                if !ok {
                    return Err(bad("values", format!("{v} is not a valid {}", s.param.name())));
                }
            }
        }
        Ok(())
    }

    fn validate_generator(&self) -> Result<(), HarnessError> {
        let g = &self.generator;
        let stray = match g.family {
            GeneratorKind::AvgClassification => {
                g.betas.is_some() || g.sigma.is_some() || g.x_mean.is_some() || g.x_cov.is_some() || g.noise_cov.is_some()
            }
            GeneratorKind::IndClassification => {
                g.coefficients.is_some() || g.x_mean.is_some() || g.x_cov.is_some() || g.noise_cov.is_some()
            }
            GeneratorKind::RegressionShift => g.coefficients.is_some() || g.betas.is_some() || g.sigma.is_some(),
        };
        if stray {
            return Err(HarnessError::invalid("generator", "parameter does not belong to this family"));
        }
        g.family()
            .validate()
            .map_err(|e| HarnessError::invalid("generator", e.to_string()))
    }

    fn validate_model(&self, m: &ModelConfig, d: usize) -> Result<(), HarnessError> {
        let classification = self.generator.is_classification();
        match m.trainer {
            TrainerKind::Greedy | TrainerKind::Logit => {
                if !classification {
                    return Err(bad("trainer", "classification trainer used with a regression generator"));
                }
                if let Some(f) = &m.features {
                    if f.iter().any(|&j| j >= d) {
                        return Err(bad("features", format!("feature index beyond dimension {d}")));
                    }
                }
                if m.trainer == TrainerKind::Greedy {
                    if m.lambda_count() < 1 {
                        return Err(bad("lambda_count", "must be at least 1"));
                    }
                    if !(m.lambda_max() >= 0.0) || !m.lambda_max().is_finite() {
                        return Err(bad("lambda_max", "must be finite and ≥ 0"));
                    }
                }
                if m.max_epochs == Some(0) {
                    return Err(bad("max_epochs", "must be positive"));
                }
            }
            TrainerKind::Ellipsoid | TrainerKind::Box => {
                if classification {
                    return Err(bad("trainer", "regression trainer used with a classification generator"));
                }
                if let Some(c) = &m.center {
                    if c.len() != 2 || c.iter().any(|v| !v.is_finite()) {
                        return Err(bad("center", "must be a finite 2-vector"));
                    }
                }
                if !(m.pool_var() > 0.0) || !m.pool_var().is_finite() {
                    return Err(bad("pool_var", "must be positive"));
                }
                if !(m.ridge() > 0.0) {
                    return Err(bad("ridge", "must be positive"));
                }
            }
        }
        Ok(())
    }
}
