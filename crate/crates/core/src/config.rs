//! Run configuration files. TOML by default, JSON when the file name ends in
//! `.json`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datasets::Sampler;
use crate::schedule::{GammaSchedule, ScheduleSpec};
use crate::sgm_init::PretrainBudget;
use crate::trainer::TrainConfig;
use crate::{Error, Result};

/// Checkpoints to start training from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitPaths {
    pub backward: Option<PathBuf>,
    pub forward: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f32,
    pub seed: u64,
    /// Also fit the model that flows toward the prior.
    pub prior_model: bool,
}

impl PretrainConfig {
    pub fn budget(&self) -> PretrainBudget {
        PretrainBudget {
            steps: self.steps,
            batch_size: self.batch_size,
            lr: self.lr,
        }
    }
}

impl Default for PretrainConfig {
    fn default() -> Self {
        let b = PretrainBudget::default();
        Self {
            steps: b.steps,
            batch_size: b.batch_size,
            lr: b.lr,
            seed: 0,
            prior_model: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    pub data: Sampler,
    pub prior: Sampler,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub init: InitPaths,
    #[serde(default)]
    pub pretrain: PretrainConfig,
}

fn default_output() -> PathBuf {
    PathBuf::from("run")
}

impl RunConfig {
    /// Two-dimensional `N(1, I)` data against an `N(-1, I)` prior.
    pub fn gaussian(d: usize) -> Self {
        Self {
            output_dir: default_output(),
            data: Sampler::shifted_gaussian(vec![1.0], d, 1).expect("valid sampler"),
            prior: Sampler::shifted_gaussian(vec![-1.0], d, 2).expect("valid sampler"),
            schedule: ScheduleSpec::default(),
            train: TrainConfig::default(),
            init: InitPaths::default(),
            pretrain: PretrainConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn schedule(&self) -> Result<GammaSchedule> {
        self.schedule.build().map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks every field that can be checked without touching the disk.
    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| Error::Config(e.to_string());
        self.data.validate().map_err(cfg)?;
        self.prior.validate().map_err(cfg)?;
        if self.data.d != self.prior.d {
            return Err(Error::Config("data and prior dimensions differ".into()));
        }
        self.schedule()?;
        self.train.validate()?;
        let b = &self.pretrain;
        if b.batch_size == 0 || !(b.lr > 0.0) {
            return Err(Error::Config("pretrain needs batch_size >= 1 and lr > 0".into()));
        }
        Ok(())
    }

    /// Hex digest of everything that affects results. The output directory
    /// is left out.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let digest = Sha256::digest(serde_json::to_vec(&c).expect("config serializes"));
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::SamplerKind;
    use crate::objectives::ObjectiveKind;

    const EXAMPLE: &str = r#"
output_dir = "runs/a"

[data]
kind = "shifted_gaussian"
a = [1.0]
d = 2
seed = 1

[prior]
kind = "shifted_gaussian"
a = [-1.0, -1.0]
d = 2
seed = 2

[schedule]
type = "symmetric"
n = 10
gamma_min = 0.1
gamma_max = 1.0

[train]
epochs = 2
objective = "iptm"
lr = 0.001

[train.eval]
kl_eval_times = 5

[init]
backward = "sgm_data.sbck"
"#;

    #[test]
    fn parses_toml() {
        let c = RunConfig::from_toml(EXAMPLE).unwrap();
        c.validate().unwrap();
        assert_eq!(c.output_dir, PathBuf::from("runs/a"));
        assert_eq!(c.data.kind, SamplerKind::ShiftedGaussian { a: vec![1.0] });
        assert_eq!(c.train.objective, ObjectiveKind::Iptm);
        assert_eq!(c.train.epochs, 2);
        assert_eq!(c.train.eval.kl_eval_times, 5);
        assert_eq!(c.train.eval.kl_paths, 10_000);
        assert_eq!(c.schedule().unwrap().n_steps(), 10);
        assert!(c.schedule().unwrap().is_normalized());
        assert_eq!(c.init.backward, Some(PathBuf::from("sgm_data.sbck")));
        assert!(c.init.forward.is_none());
        assert!(c.pretrain.prior_model);
    }

    #[test]
    fn toml_and_json_round_trip() {
        let c = RunConfig::from_toml(EXAMPLE).unwrap();
        assert_eq!(RunConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = RunConfig::gaussian(2);
        let mut b = a.clone();
        b.output_dir = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
        b.train.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(matches!(RunConfig::from_toml("output_dir = 3"), Err(Error::Config(_))));
        let unknown = EXAMPLE.replace("epochs = 2", "epochs = 2\nepoch = 3");
        assert!(matches!(RunConfig::from_toml(&unknown), Err(Error::Config(_))));
        let mut c = RunConfig::gaussian(2);
        c.prior.d = 3;
        c.prior.kind = SamplerKind::ShiftedGaussian { a: vec![0.0] };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = RunConfig::gaussian(2);
        c.train.batch_size = 0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let missing = RunConfig::load(Path::new("/nonexistent/run.toml"));
        assert!(matches!(missing, Err(Error::NotFound(_))));
    }
}
