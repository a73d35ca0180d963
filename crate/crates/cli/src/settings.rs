//! Config file keys and flag > env > file > default resolution. Env values
//! arrive through clap, so by the time a flag is `None` only the file and the
//! default are left.

use std::path::{Path, PathBuf};

use factgpt_core::evalkit::{TiePolicy, UnparseablePolicy};
use factgpt_core::matcher::{MatcherConfig, OFFLINE_EMBEDDER_ID};
use factgpt_gateway::ProviderSettings;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Every key of the TOML config file. Names match the long flags with
/// dashes turned into underscores.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub provider: Option<String>,
    pub profile: Option<String>,
    pub api_base: Option<String>,
    pub temperature_floor: Option<f64>,
    pub timeout_secs: Option<u64>,
    pub seed: Option<u64>,

    pub alpha: Option<f64>,
    pub top_k: Option<usize>,
    pub min_combined_score: Option<f64>,
    pub embedder_id: Option<String>,
    pub embedding_model: Option<String>,

    pub generator_model: Option<String>,
    pub classifier_model: Option<String>,
    pub base_model: Option<String>,
    pub train_fraction: Option<f64>,
    pub epochs: Option<u32>,
    pub parallelism: Option<usize>,
    pub poll_interval_secs: Option<u64>,
    pub max_polls: Option<u32>,

    pub tie_policy: Option<TiePolicy>,
    pub unparseable_policy: Option<UnparseablePolicy>,

    pub bind: Option<String>,
    pub port: Option<u16>,
    pub store_dir: Option<PathBuf>,
    pub static_dir: Option<PathBuf>,
    pub cors_origin: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
    }
}

pub const DEFAULT_GENERATOR_MODEL: &str = "gpt-4";
pub const DEFAULT_CLASSIFIER_MODEL: &str = "gpt-4";
pub const DEFAULT_BASE_MODEL: &str = "gpt-3.5-turbo";
pub const DEFAULT_EMBEDDING_MODEL: &str = "text-embedding-ada-002";

pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Global flags after resolution, plus the file config for per-command keys.
#[derive(Debug, Clone)]
pub struct Settings {
    pub provider: ProviderSettings,
    pub seed: u64,
    pub file: FileConfig,
}

impl Settings {
    pub fn resolve(
        provider: Option<String>,
        profile: Option<String>,
        api_base: Option<String>,
        seed: Option<u64>,
        file: FileConfig,
    ) -> Self {
        let defaults = ProviderSettings::default();
        let provider = ProviderSettings {
            provider: pick(provider, file.provider.clone(), defaults.provider),
            profile: pick(profile, file.profile.clone(), defaults.profile),
            api_base: api_base.or_else(|| file.api_base.clone()),
            temperature_floor: file.temperature_floor,
            timeout_secs: file.timeout_secs.unwrap_or(defaults.timeout_secs),
        };
        Self {
            provider,
            seed: pick(seed, file.seed, 0),
            file,
        }
    }

    pub fn is_mock(&self) -> bool {
        self.provider.is_mock()
    }

    pub fn matcher(
        &self,
        alpha: Option<f64>,
        top_k: Option<usize>,
        min_combined_score: Option<f64>,
        embedder_id: Option<String>,
    ) -> MatcherConfig {
        let f = &self.file;
        MatcherConfig {
            alpha: pick(alpha, f.alpha, 0.5),
            top_k: pick(top_k, f.top_k, 1),
            min_combined_score: pick(min_combined_score, f.min_combined_score, 0.0),
            embedder_id: pick(
                embedder_id,
                f.embedder_id.clone(),
                OFFLINE_EMBEDDER_ID.to_string(),
            ),
        }
    }

    pub fn embedding_model(&self, flag: Option<String>) -> String {
        pick(
            flag,
            self.file.embedding_model.clone(),
            DEFAULT_EMBEDDING_MODEL.into(),
        )
    }

    pub fn generator_model(&self, flag: Option<String>) -> String {
        pick(
            flag,
            self.file.generator_model.clone(),
            DEFAULT_GENERATOR_MODEL.into(),
        )
    }

    pub fn classifier_model(&self, flag: Option<String>) -> String {
        pick(
            flag,
            self.file.classifier_model.clone(),
            DEFAULT_CLASSIFIER_MODEL.into(),
        )
    }

    pub fn base_model(&self, flag: Option<String>) -> String {
        pick(
            flag,
            self.file.base_model.clone(),
            DEFAULT_BASE_MODEL.into(),
        )
    }

    pub fn parallelism(&self, flag: Option<usize>) -> usize {
        pick(flag, self.file.parallelism, 4)
    }

    pub fn train_fraction(&self, flag: Option<f64>) -> f64 {
        pick(flag, self.file.train_fraction, 0.8)
    }

    /// Polling is count-based under the mock provider, so it does not wait.
    pub fn poll_interval_secs(&self, flag: Option<u64>) -> u64 {
        pick(
            flag,
            self.file.poll_interval_secs,
            if self.is_mock() { 0 } else { 30 },
        )
    }

    pub fn max_polls(&self, flag: Option<u32>) -> u32 {
        pick(flag, self.file.max_polls, 240)
    }

    pub fn store_dir(&self, flag: Option<PathBuf>) -> Option<PathBuf> {
        flag.or_else(|| self.file.store_dir.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_beats_file_beats_default() {
        let file: FileConfig =
            toml::from_str("seed = 7\nalpha = 0.25\nprovider = \"live\"\n").unwrap();
        let s = Settings::resolve(None, None, None, Some(3), file.clone());
        assert_eq!(s.seed, 3);
        assert_eq!(s.provider.provider, "live");
        let m = s.matcher(None, Some(2), None, None);
        assert_eq!((m.alpha, m.top_k, m.min_combined_score), (0.25, 2, 0.0));
        let s = Settings::resolve(Some("mock".into()), None, None, None, file);
        assert_eq!(s.seed, 7);
        assert!(s.is_mock());
        assert_eq!(s.poll_interval_secs(None), 0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<FileConfig>("alhpa = 0.3\n").is_err());
        let policies: FileConfig = toml::from_str("tie_policy = \"credit-either\"\n").unwrap();
        assert_eq!(policies.tie_policy, Some(TiePolicy::CreditEither));
    }
}
