//! Run configuration: TOML file values, overridden by command-line flags.

use std::path::{Path, PathBuf};

use rgbt_core::crossmodal::{Metric, ToyDistillConfig, DEFAULT_K_HARD, DEFAULT_MARGIN, DEFAULT_TEMPERATURE};
use rgbt_core::dataset::{StatsConfig, SYNCED_TOLERANCE_NS, UNSYNCED_TOLERANCE_NS};
use rgbt_core::registration::DEFAULT_DEPTH_TOL;
use rgbt_core::thermalproc::{ThermalPipelineConfig, DEFAULT_FFC_GUARD_NS};
use rgbt_core::{Error, Result};
use serde::{Deserialize, Serialize};

const NS_PER_MS: i64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub paths: PathsConfig,
    pub thermal: ThermalPipelineConfig,
    pub rectify: RectifyConfig,
    pub registration: RegistrationConfig,
    pub pairing: PairingConfig,
    pub loss: LossConfig,
    pub distill: DistillConfig,
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub calibration: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RectifyConfig {
    /// Distorted source camera in the calibration file.
    pub src_camera: String,
    /// Rectified target camera; defaults to the source intrinsics without distortion.
    pub dst_camera: Option<String>,
}

impl Default for RectifyConfig {
    fn default() -> Self {
        RectifyConfig { src_camera: "thermal_raw".into(), dst_camera: Some("thermal".into()) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistrationConfig {
    pub depth_tol: f64,
    pub alphas: Vec<f64>,
    pub rgb_camera: String,
    pub thermal_camera: String,
    pub transform: String,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        RegistrationConfig {
            depth_tol: DEFAULT_DEPTH_TOL,
            alphas: vec![0.5],
            rgb_camera: "rgb".into(),
            thermal_camera: "thermal".into(),
            transform: "rgb_to_thermal".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairingConfig {
    pub synced_tol_ms: i64,
    pub unsynced_tol_ms: i64,
    pub ffc_guard_ms: i64,
}

impl Default for PairingConfig {
    fn default() -> Self {
        PairingConfig {
            synced_tol_ms: SYNCED_TOLERANCE_NS / NS_PER_MS,
            unsynced_tol_ms: UNSYNCED_TOLERANCE_NS / NS_PER_MS,
            ffc_guard_ms: DEFAULT_FFC_GUARD_NS / NS_PER_MS,
        }
    }
}

impl PairingConfig {
    pub fn stats_config(&self) -> Result<StatsConfig> {
        for (name, v) in [
            ("synced_tol_ms", self.synced_tol_ms),
            ("unsynced_tol_ms", self.unsynced_tol_ms),
            ("ffc_guard_ms", self.ffc_guard_ms),
        ] {
            if v < 0 {
                return Err(Error::Validation(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(StatsConfig {
            ffc_guard_ns: self.ffc_guard_ms * NS_PER_MS,
            synced_tolerance_ns: self.synced_tol_ms * NS_PER_MS,
            unsynced_tolerance_ns: self.unsynced_tol_ms * NS_PER_MS,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub tau: f64,
    pub margin: f64,
    pub metric: Metric,
    pub radius: Option<f64>,
    pub k_hard: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            tau: DEFAULT_TEMPERATURE,
            margin: DEFAULT_MARGIN,
            metric: Metric::Euclidean,
            radius: None,
            k_hard: DEFAULT_K_HARD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillConfig {
    pub latent_dim: usize,
    pub teacher_dim: usize,
    pub thermal_dim: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub noise: f64,
    pub lr: f64,
    pub steps: usize,
    pub batch: usize,
}

impl Default for DistillConfig {
    fn default() -> Self {
        let d = ToyDistillConfig::default();
        DistillConfig {
            latent_dim: d.latent_dim,
            teacher_dim: d.teacher_dim,
            thermal_dim: d.thermal_dim,
            n_train: d.n_train,
            n_val: d.n_val,
            noise: d.noise,
            lr: d.lr,
            steps: d.steps,
            batch: d.batch,
        }
    }
}

impl DistillConfig {
    pub fn toy(&self, tau: f64, seed: u64) -> ToyDistillConfig {
        ToyDistillConfig {
            latent_dim: self.latent_dim,
            teacher_dim: self.teacher_dim,
            thermal_dim: self.thermal_dim,
            n_train: self.n_train,
            n_val: self.n_val,
            noise: self.noise,
            lr: self.lr,
            steps: self.steps,
            batch: self.batch,
            tau,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub ks: Vec<usize>,
    pub radius: Option<f64>,
    pub frame_radius: bool,
    pub metric: Metric,
    pub classes: Option<usize>,
    pub ignore_label: Option<u8>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            ks: vec![1, 5, 10],
            radius: None,
            frame_radius: false,
            metric: Metric::Euclidean,
            classes: None,
            ignore_label: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Validation(format!("config {}: {e}", path.display())))?;
        // relative paths in the file are relative to the file
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.paths.calibration, &mut cfg.paths.manifest].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn require_seed(&self, command: &str) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Validation(format!("{command} is stochastic: pass --seed or set `seed` in the config")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.thermal, ThermalPipelineConfig::default());
    }

    #[test]
    fn sections_parse_and_unknown_keys_fail() {
        let cfg: RunConfig = toml::from_str(
            "seed = 3\n[pairing]\nsynced_tol_ms = 5\n[eval]\nks = [1, 5]\nmetric = \"cosine\"\n[thermal]\nclip_limit = 3.0\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, Some(3));
        assert_eq!(cfg.pairing.stats_config().unwrap().synced_tolerance_ns, 5_000_000);
        assert_eq!(cfg.eval.metric, Metric::Cosine);
        assert_eq!(cfg.thermal.clip_limit, 3.0);
        assert!(toml::from_str::<RunConfig>("[pairing]\nbogus = 1\n").is_err());
    }

    #[test]
    fn seed_is_required() {
        assert!(RunConfig::default().require_seed("distill-toy").is_err());
    }
}
