//! Experiment files: one JSON document with optional sections per
//! subcommand. Unknown keys are rejected and every section is validated
//! before any work starts.

use std::path::{Path, PathBuf};

use rsc_core::error::{Result, RscError};
use rsc_core::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

pub const SEED_ENV: &str = "RSC_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RobustKind {
    /// Plain backward induction.
    None,
    /// TV ball around each transition row.
    Rmdp,
    /// TV ball around the confounder distribution.
    Rsc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub instance: PathBuf,
    pub sigma: f64,
    pub robust: RobustKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Theorem2Section {
    #[serde(rename = "T")]
    pub horizon: usize,
    pub sigma1: f64,
    pub sigma2: f64,
    #[serde(default)]
    pub grid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub betas: Vec<f64>,
    /// Defaults to the training seed alone.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Overrides `train.seed`; itself overridden by `RSC_SEED`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theorem2: Option<Theorem2Section>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: None,
            output_dir: default_output_dir(),
            solver: None,
            theorem2: None,
            train: None,
            sweep: None,
        }
    }
}

fn check_radius(name: &str, sigma: f64) -> Result<()> {
    if (0.0..=1.0).contains(&sigma) {
        Ok(())
    } else {
        Err(RscError::Invalid(format!("{name} = {sigma} outside [0, 1]")))
    }
}

impl ExperimentConfig {
    /// Reads, resolves seeds and validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RscError::Invalid(format!("cannot read {}: {e}", path.display())))?;
        let mut config: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| RscError::Invalid(format!("{}: {e}", path.display())))?;
        config.resolve(std::env::var(SEED_ENV).ok().as_deref())?;
        config.validate()?;
        Ok(config)
    }

    /// Applies the seed override and fills defaulted sweep seeds.
    pub fn resolve(&mut self, env_seed: Option<&str>) -> Result<()> {
        if let Some(text) = env_seed {
            let seed = text
                .trim()
                .parse()
                .map_err(|_| RscError::Invalid(format!("{SEED_ENV}={text:?} is not an unsigned integer")))?;
            self.seed = Some(seed);
        }
        if let (Some(seed), Some(train)) = (self.seed, self.train.as_mut()) {
            train.seed = seed;
        }
        if let Some(sweep) = self.sweep.as_mut() {
            if sweep.seeds.is_none() {
                let seed = self.train.as_ref().map_or(self.seed.unwrap_or(0), |t| t.seed);
                sweep.seeds = Some(vec![seed]);
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(s) = &self.solver {
            check_radius("solver.sigma", s.sigma)?;
        }
        if let Some(t) = &self.theorem2 {
            if t.horizon < 2 {
                return Err(RscError::Invalid(format!("theorem2.T = {} must be at least 2", t.horizon)));
            }
            check_radius("theorem2.sigma1", t.sigma1)?;
            if !t.grid && !(t.sigma2 > 0.5 && t.sigma2 <= 1.0) {
                return Err(RscError::Invalid(format!("theorem2.sigma2 = {} outside (0.5, 1]", t.sigma2)));
            }
        }
        if let Some(t) = &self.train {
            t.validate()?;
        }
        if let Some(s) = &self.sweep {
            if self.train.is_none() {
                return Err(RscError::Invalid("a sweep section needs a train section".into()));
            }
            if s.betas.is_empty() || s.seeds.as_ref().is_some_and(|v| v.is_empty()) {
                return Err(RscError::Invalid("sweep needs at least one beta and one seed".into()));
            }
            if let Some(b) = s.betas.iter().find(|b| !(0.0..=100.0).contains(*b)) {
                return Err(RscError::Invalid(format!("sweep beta {b} outside [0, 100]")));
            }
        }
        Ok(())
    }

    pub fn train_section(&self) -> Result<&TrainConfig> {
        self.train
            .as_ref()
            .ok_or_else(|| RscError::Invalid("config has no train section".into()))
    }

    pub fn sweep_section(&self) -> Result<&SweepSection> {
        self.sweep
            .as_ref()
            .ok_or_else(|| RscError::Invalid("config has no sweep section".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> ExperimentConfig {
        serde_json::from_str(text).unwrap()
    }

    #[test]
    fn env_seed_wins() {
        let mut c = parse(r#"{"seed": 3, "train": {"env": {"env_name": "toy_lift"}, "seed": 1}}"#);
        c.resolve(Some("9")).unwrap();
        assert_eq!(c.train.unwrap().seed, 9);
    }

    #[test]
    fn global_seed_overrides_section_seed() {
        let mut c = parse(r#"{"seed": 3, "train": {"env": {"env_name": "toy_lift"}, "seed": 1}, "sweep": {"betas": [1]}}"#);
        c.resolve(None).unwrap();
        assert_eq!(c.train.as_ref().unwrap().seed, 3);
        assert_eq!(c.sweep.unwrap().seeds, Some(vec![3]));
    }

    #[test]
    fn bad_env_seed_rejected() {
        let mut c = parse("{}");
        assert!(c.resolve(Some("abc")).unwrap_err().is_validation());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"sed": 1}"#).is_err());
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"sweep": {"betas": [1], "extra": 0}}"#).is_err());
    }

    #[test]
    fn sweep_without_train_rejected() {
        let c = parse(r#"{"sweep": {"betas": [1], "seeds": [0]}}"#);
        assert!(c.validate().is_err());
    }
}
