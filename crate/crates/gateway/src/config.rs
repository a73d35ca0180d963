use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::GatewayError;

/// Sampling temperature used when generating synthetic tweets.
pub const GENERATION_TEMPERATURE: f64 = 1.0;
/// Sampling temperature used when classifying pairs.
pub const CLASSIFICATION_TEMPERATURE: f64 = 0.0;
/// Lowest temperature accepted by providers that reject exactly zero.
pub const NONZERO_TEMPERATURE_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub model_id: String,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    #[serde(with = "duration_secs")]
    pub request_timeout: Duration,
    pub max_retries: u32,
}

impl GenerationConfig {
    pub fn new(model_id: impl Into<String>, temperature: f64) -> Self {
        Self {
            model_id: model_id.into(),
            temperature,
            max_tokens: None,
            request_timeout: Duration::from_secs(60),
            max_retries: 3,
        }
    }

    pub fn for_generation(model_id: impl Into<String>) -> Self {
        Self::new(model_id, GENERATION_TEMPERATURE)
    }

    pub fn for_classification(model_id: impl Into<String>) -> Self {
        Self::new(model_id, CLASSIFICATION_TEMPERATURE)
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.model_id.trim().is_empty() {
            return Err(GatewayError::InvalidConfig("model_id is empty".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::InvalidConfig(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_tokens == Some(0) {
            return Err(GatewayError::InvalidConfig(
                "max_tokens must be positive".into(),
            ));
        }
        Ok(())
    }
}

mod duration_secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

/// Per-provider settings that change what goes on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderProfile {
    pub id: String,
    pub base_url: String,
    /// Requested temperatures below this are raised to it.
    pub temperature_floor: f64,
}

impl ProviderProfile {
    pub fn new(id: impl Into<String>, base_url: impl Into<String>, temperature_floor: f64) -> Self {
        Self {
            id: id.into(),
            base_url: base_url.into(),
            temperature_floor,
        }
    }

    pub fn mock() -> Self {
        Self::new(crate::mock::MOCK_PROVIDER_ID, "mock://local", 0.0)
    }

    /// Known hosted providers. Hosted Llama inference endpoints reject a
    /// temperature of exactly zero.
    pub fn builtin(id: &str) -> Option<Self> {
        match id {
            "mock" => Some(Self::mock()),
            "openai" => Some(Self::new("openai", "https://api.openai.com/v1", 0.0)),
            "huggingface" => Some(Self::new(
                "huggingface",
                "https://api-inference.huggingface.co/v1",
                NONZERO_TEMPERATURE_FLOOR,
            )),
            _ => None,
        }
    }

    pub fn effective_temperature(&self, requested: f64) -> f64 {
        requested.max(self.temperature_floor)
    }
}

/// Which provider to talk to, as written in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderSettings {
    /// `mock` or `live`.
    pub provider: String,
    /// Builtin live profile: `openai` or `huggingface`.
    pub profile: String,
    pub api_base: Option<String>,
    pub temperature_floor: Option<f64>,
    pub timeout_secs: u64,
}

impl Default for ProviderSettings {
    fn default() -> Self {
        Self {
            provider: "mock".into(),
            profile: "openai".into(),
            api_base: None,
            temperature_floor: None,
            timeout_secs: 60,
        }
    }
}

impl ProviderSettings {
    pub fn is_mock(&self) -> bool {
        self.provider == crate::mock::MOCK_PROVIDER_ID
    }

    pub fn resolve_profile(&self) -> Result<ProviderProfile, GatewayError> {
        let mut profile = match self.provider.as_str() {
            "mock" => ProviderProfile::mock(),
            "live" => ProviderProfile::builtin(&self.profile)
                .filter(|p| p.id != crate::mock::MOCK_PROVIDER_ID)
                .ok_or_else(|| {
                    GatewayError::InvalidConfig(format!(
                        "unknown provider profile {:?}",
                        self.profile
                    ))
                })?,
            other => {
                return Err(GatewayError::InvalidConfig(format!(
                    "provider must be mock or live, got {other:?}"
                )))
            }
        };
        if let Some(base) = &self.api_base {
            if !self.is_mock() {
                profile.base_url = base.trim_end_matches('/').to_string();
            }
        }
        if let Some(floor) = self.temperature_floor {
            profile.temperature_floor = floor;
        }
        Ok(profile)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(20),
        }
    }
}

impl RetryPolicy {
    /// Delay before retransmission number `retry` (1-based): base * 2^(retry-1), capped.
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 2u32.saturating_pow(retry.saturating_sub(1));
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn provider_settings_resolve() {
        let mock = ProviderSettings::default().resolve_profile().unwrap();
        assert_eq!(mock.id, "mock");
        let hf = ProviderSettings {
            provider: "live".into(),
            profile: "huggingface".into(),
            api_base: Some("http://localhost:9/v1/".into()),
            ..ProviderSettings::default()
        }
        .resolve_profile()
        .unwrap();
        assert_eq!(hf.base_url, "http://localhost:9/v1");
        assert_eq!(hf.temperature_floor, NONZERO_TEMPERATURE_FLOOR);
        for (provider, profile) in [("cloud", "openai"), ("live", "mock"), ("live", "nope")] {
            let s = ProviderSettings {
                provider: provider.into(),
                profile: profile.into(),
                ..ProviderSettings::default()
            };
            assert!(matches!(
                s.resolve_profile(),
                Err(GatewayError::InvalidConfig(_))
            ));
        }
    }

    #[test]
    fn floor_applies_only_below() {
        let hf = ProviderProfile::builtin("huggingface").unwrap();
        assert_eq!(hf.effective_temperature(0.0), 0.01);
        assert_eq!(hf.effective_temperature(1.0), 1.0);
        assert_eq!(ProviderProfile::mock().effective_temperature(0.0), 0.0);
    }

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy {
            max_retries: 5,
            base_delay: Duration::from_millis(100),
            max_delay: Duration::from_millis(350),
        };
        assert_eq!(p.delay(1), Duration::from_millis(100));
        assert_eq!(p.delay(2), Duration::from_millis(200));
        assert_eq!(p.delay(3), Duration::from_millis(350));
    }

    #[test]
    fn temperature_bounds() {
        assert!(GenerationConfig::new("m", 2.5).validate().is_err());
        assert!(GenerationConfig::new("m", -0.1).validate().is_err());
        assert!(GenerationConfig::for_classification("m").validate().is_ok());
    }
}
