use super::config::{
    ExperimentConfig, GeneratorConfig, GeneratorKind, GridSection, GroupConfig, KernelFamilyName, KernelSection,
    LossKind, MetricsConfig, ModelConfig, SweepConfig, SweepParam, TrainerKind,
};
use super::HarnessError;
use crate::synth::SHIFT_CENTERS;

/// Built-in experiments: name and one-line description.
pub const PRESETS: [(&str, &str); 3] = [
    (
        "averaged-case",
        "5-class averaged-case selection over 10 greedy penalties, n = 400, alpha = 0.1, sweep over n",
    ),
    (
        "individualized",
        "3-class individualized selection over 3 feature-subset classifiers, m = 1000, sweep over n",
    ),
    (
        "regression-shift",
        "2-d portfolio regression with 4 ellipsoid models trained under covariate shift, sweep over n",
    ),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|p| p.0).collect()
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

pub fn preset(name: &str) -> Result<ExperimentConfig, HarnessError> {
    match name {
        "averaged-case" => Ok(ExperimentConfig {
            name: name.into(),
            replications: 100,
            master_seed: 20_240_501,
            alpha: 0.1,
            n: 400,
            m: 100,
            train_size: 400,
            methods: strings(&["naive-cp", "e2e-0.5", "e2e-0.75", "e-croms", "f-croms"]),
            loss: LossKind::AveragedCase,
            loss_matrix: None,
            f_croims_budget: None,
            output_dir: None,
            generator: GeneratorConfig::of(GeneratorKind::AvgClassification),
            kernel: None,
            metrics: MetricsConfig {
                include: strings(&["miscoverage", "misrobustness", "avg_loss"]),
                balls: 0,
                ..MetricsConfig::default()
            },
            grid: GridSection::default(),
            sweep: Some(SweepConfig {
                param: SweepParam::N,
                values: vec![100.0, 200.0, 400.0, 600.0],
            }),
            models: vec![ModelConfig {
                interactions: true,
                lambda_count: Some(10),
                lambda_max: Some(0.2),
                ..ModelConfig::of(TrainerKind::Greedy)
            }],
        }),
        "individualized" => Ok(ExperimentConfig {
            name: name.into(),
            replications: 100,
            master_seed: 20_240_503,
            alpha: 0.1,
            n: 200,
            m: 1000,
            train_size: 400,
            methods: strings(&["e2e-0.75", "e-croms", "f-croms", "naive-lcp", "croims"]),
            loss: LossKind::Individualized,
            loss_matrix: None,
            f_croims_budget: None,
            output_dir: None,
            generator: GeneratorConfig::of(GeneratorKind::IndClassification),
            kernel: Some(KernelSection {
                family: KernelFamilyName::Gaussian,
                c: Some(6.06),
                target_neff: None,
                features: None,
            }),
            metrics: MetricsConfig {
                balls: 20,
                ball_mass: 0.1,
                groups: vec![
                    GroupConfig::interval("G1", 0, Some(1.2), None),
                    GroupConfig::interval("G2", 0, Some(0.0), Some(1.2)),
                    GroupConfig::interval("G3", 0, Some(-1.2), Some(0.0)),
                    GroupConfig::interval("G4", 0, None, Some(-1.2)),
                ],
                ..MetricsConfig::default()
            },
            grid: GridSection::default(),
            sweep: Some(SweepConfig {
                param: SweepParam::N,
                values: vec![100.0, 200.0, 400.0, 800.0],
            }),
            models: [[0, 1], [0, 2], [1, 2]]
                .iter()
                .map(|f| ModelConfig {
                    features: Some(f.to_vec()),
                    ..ModelConfig::of(TrainerKind::Logit)
                })
                .collect(),
        }),
        "regression-shift" => Ok(ExperimentConfig {
            name: name.into(),
            replications: 100,
            master_seed: 20_240_505,
            alpha: 0.1,
            n: 100,
            m: 200,
            train_size: 500,
            methods: strings(&["naive-cp", "e2e-0.75", "e-croms", "f-croms", "naive-lcp", "croims"]),
            loss: LossKind::Portfolio,
            loss_matrix: None,
            f_croims_budget: None,
            output_dir: None,
            generator: GeneratorConfig::of(GeneratorKind::RegressionShift),
            kernel: Some(KernelSection {
                family: KernelFamilyName::Gaussian,
                c: Some(5.38),
                target_neff: None,
                features: None,
            }),
            metrics: MetricsConfig {
                balls: 20,
                ball_mass: 0.2,
                groups: vec![
                    GroupConfig::interval("G1", 0, Some(1.0), None),
                    GroupConfig::interval("G2", 0, None, Some(1.0)),
                    GroupConfig::interval("G3", 1, Some(1.0), None),
                    GroupConfig::interval("G4", 1, None, Some(1.0)),
                ],
                ..MetricsConfig::default()
            },
            grid: GridSection::default(),
            sweep: Some(SweepConfig {
                param: SweepParam::N,
                values: vec![50.0, 100.0, 200.0, 500.0],
            }),
            models: SHIFT_CENTERS
                .iter()
                .map(|c| ModelConfig {
                    center: Some(c.to_vec()),
                    pool_var: Some(1.0),
                    ridge: Some(1e-6),
                    ..ModelConfig::of(TrainerKind::Ellipsoid)
                })
                .collect(),
        }),
        other => Err(HarnessError::UnknownPreset(other.to_string())),
    }
}
