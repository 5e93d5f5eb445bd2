//! Built-in benchmark configurations.

use std::f64::consts::PI;

use super::config::*;
use crate::error::{Error, Result};

pub const PRESET_NAMES: [&str; 3] = ["example1", "example2", "fig1_toy"];

/// Symmetric displacement thresholds of the oscillator cases, in m.
pub const EXAMPLE1_THRESHOLDS: [f64; 4] = [0.013, 0.016, 0.018, 0.020];
/// Ground-motion intensities of the shear-building cases, in m^2/s^3.
pub const EXAMPLE2_INTENSITIES: [f64; 3] = [0.010, 0.008, 0.007];

pub fn preset(name: &str, case: usize) -> Result<RunConfig> {
    let pick = |n: usize| -> Result<usize> {
        if (1..=n).contains(&case) {
            Ok(case - 1)
        } else {
            Err(Error::InvalidArgument(format!("preset `{name}` has cases 1..={n}, got {case}")))
        }
    };
    match name {
        "example1" => Ok(example1(EXAMPLE1_THRESHOLDS[pick(4)?])),
        "example2" => Ok(example2(EXAMPLE2_INTENSITIES[pick(3)?])),
        "fig1_toy" => {
            pick(1)?;
            Ok(fig1_toy())
        }
        other => Err(Error::InvalidArgument(format!(
            "unknown preset `{other}` (expected one of {})",
            PRESET_NAMES.join(", ")
        ))),
    }
}

/// White-noise driven oscillator, `omega_n = 4 pi`, `zeta_n = 0.05`, 20 s.
pub fn example1(c: f64) -> RunConfig {
    RunConfig {
        model: ModelConfig::Sdof {
            omega_n_rad_s: 4.0 * PI,
            zeta_n: 0.05,
        },
        excitation: Some(ExcitationConfig::WhiteNoiseSpectral {
            s_m2_s3: 5.5e-4,
            omega_min_rad_s: 0.0,
            omega_max_rad_s: 25.0 * PI,
            q: 500,
        }),
        grid: Some(GridConfig {
            dt_s: 0.02,
            duration_s: 20.0,
        }),
        thresholds: ThresholdConfig { c: vec![c], symmetric: true },
        parameters: vec!["omega_n".into(), "zeta_n".into()],
        estimator: EstimatorConfig::default(),
    }
}

/// 20-story shear building with braced viscoelastic dampers under a
/// uniformly modulated Kanai-Tajimi type ground motion, 30 s.
pub fn example2(s0: f64) -> RunConfig {
    let stories = 20;
    let mut parameters: Vec<String> = (1..=stories).map(|k| format!("k_ve_{k}")).collect();
    parameters.extend((1..=stories).map(|k| format!("c_ve_{k}")));
    RunConfig {
        model: ModelConfig::ShearBuilding {
            masses_kg: vec![3e3; stories],
            // 3e4 kN/m.
            story_stiffness_n_m: vec![3e7; stories],
            rayleigh: Some(RayleighConfig {
                mode_a: 1,
                mode_b: stories,
                zeta: 0.05,
            }),
            // 3e3 kN/m and 2.5e3 kN s/m.
            dampers: vec![
                DamperConfig {
                    k_ve_n_m: 3e6,
                    c_ve_n_s_m: 2.5e6,
                };
                stories
            ],
            brace_cos: 0.8,
        },
        excitation: Some(ExcitationConfig::ModulatedCorrelation {
            s0_m2_s3: s0,
            omega_g_rad_s: 14.0,
            zeta_g: 0.6,
            t_a_s: 8.0,
            t_b_s: 20.0,
            t_c_s: 30.0,
            lambda_1_s: 0.1572,
            eig_clip: crate::excitation::DEFAULT_EIG_CLIP,
        }),
        grid: Some(GridConfig {
            dt_s: 0.02,
            duration_s: 30.0,
        }),
        thresholds: ThresholdConfig {
            c: vec![0.006; stories],
            symmetric: true,
        },
        parameters,
        estimator: EstimatorConfig::default(),
    }
}

/// Four two-dimensional hyperplanes `g_k = c_k - a_k . x`.
pub fn fig1_toy() -> RunConfig {
    RunConfig {
        model: ModelConfig::LinearComponents {
            rows: vec![vec![-2.0, 1.0], vec![-1.0, 3.0], vec![6.0, 7.0], vec![2.0, -1.0]],
        },
        excitation: None,
        grid: None,
        thresholds: ThresholdConfig {
            c: vec![12.0, 18.0, 36.0, 10.0],
            symmetric: false,
        },
        parameters: vec![super::run::AMPLITUDE.into()],
        estimator: EstimatorConfig::default(),
    }
}
