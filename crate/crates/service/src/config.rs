//! Runtime configuration.
//!
//! Sources, lowest to highest precedence: built-in defaults, environment
//! (`STS_ADDR`, `STS_STORE`), a TOML key/value file, command-line flags.
//!
//! ```toml
//! addr = "127.0.0.1:8080"
//! store = "sts-store"
//! rate_hz = 10
//! duration_s = 30.0
//! seated_fraction = 0.6
//! standing_fraction = 0.15
//! dwell_ms = 300.0
//! k = 1
//! band_fraction = 0.1
//! channel_mode = "with_total"
//! seed = 1
//! ```

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use sts_core::classifier::{ChannelMode, FeatureConfig, KnnConfig};
use sts_core::{DetectorConfig, SampleRate};
use thiserror::Error;

pub const DEFAULT_ADDR: &str = "127.0.0.1:8080";
pub const DEFAULT_STORE: &str = "sts-store";
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path}: {reason}")]
    Parse { path: PathBuf, reason: String },
    #[error("{key}: {reason}")]
    Invalid { key: &'static str, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub addr: SocketAddr,
    pub store: PathBuf,
    pub rate: SampleRate,
    pub duration_s: f64,
    pub detector: DetectorConfig,
    pub knn: KnnConfig,
    pub features: FeatureConfig,
    pub seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            addr: DEFAULT_ADDR.parse().expect("valid default address"),
            store: PathBuf::from(DEFAULT_STORE),
            rate: SampleRate::Hz10,
            duration_s: sts_core::acquisition::DEFAULT_TRIAL_SECONDS,
            detector: DetectorConfig::default(),
            knn: KnnConfig::default(),
            features: FeatureConfig::default(),
            seed: DEFAULT_SEED,
        }
    }
}

/// Every key optional; present keys override lower layers.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub addr: Option<String>,
    pub store: Option<PathBuf>,
    pub rate_hz: Option<u32>,
    pub duration_s: Option<f64>,
    pub seated_fraction: Option<f64>,
    pub standing_fraction: Option<f64>,
    pub dwell_ms: Option<f64>,
    pub k: Option<usize>,
    pub band_fraction: Option<f64>,
    pub channel_mode: Option<ChannelMode>,
    pub seed: Option<u64>,
}

impl ConfigLayer {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text, path)
    }

    pub fn from_env(get: impl Fn(&str) -> Option<String>) -> Self {
        Self {
            addr: get("STS_ADDR"),
            store: get("STS_STORE").map(PathBuf::from),
            ..Self::default()
        }
    }
}

impl Config {
    pub fn apply(&mut self, layer: &ConfigLayer) -> Result<(), ConfigError> {
        let invalid = |key, reason: String| ConfigError::Invalid { key, reason };
        if let Some(a) = &layer.addr {
            self.addr = a.parse().map_err(|e| invalid("addr", format!("{a:?}: {e}")))?;
        }
        if let Some(s) = &layer.store {
            self.store = s.clone();
        }
        if let Some(r) = layer.rate_hz {
            self.rate = SampleRate::try_from(r).map_err(|e| invalid("rate_hz", e.to_string()))?;
        }
        if let Some(d) = layer.duration_s {
            if !(d > 0.0 && d.is_finite()) {
                return Err(invalid("duration_s", format!("{d} is not positive")));
            }
            self.duration_s = d;
        }
        if let Some(f) = layer.seated_fraction {
            self.detector.seated_fraction = f;
        }
        if let Some(f) = layer.standing_fraction {
            self.detector.standing_fraction = f;
        }
        if let Some(d) = layer.dwell_ms {
            self.detector.dwell_ms = d;
        }
        let d = &self.detector;
        if !(0.0 < d.standing_fraction && d.standing_fraction < d.seated_fraction && d.seated_fraction < 1.0) {
            return Err(invalid(
                "seated_fraction",
                format!(
                    "need 0 < standing_fraction ({}) < seated_fraction ({}) < 1",
                    d.standing_fraction, d.seated_fraction
                ),
            ));
        }
        if d.dwell_ms.is_nan() || d.dwell_ms < 0.0 {
            return Err(invalid("dwell_ms", format!("{} is negative", d.dwell_ms)));
        }
        if let Some(k) = layer.k {
            if k == 0 {
                return Err(invalid("k", "must be at least 1".into()));
            }
            self.knn.k = k;
        }
        if let Some(b) = layer.band_fraction {
            if !(0.0..=1.0).contains(&b) {
                return Err(invalid("band_fraction", format!("{b} outside [0, 1]")));
            }
            self.knn.band_fraction = b;
        }
        if let Some(m) = layer.channel_mode {
            self.features.channel_mode = m;
        }
        if let Some(s) = layer.seed {
            self.seed = s;
        }
        Ok(())
    }

    /// Defaults, then env, then file, then flags.
    pub fn resolve(
        env: &ConfigLayer,
        file: Option<&ConfigLayer>,
        flags: &ConfigLayer,
    ) -> Result<Self, ConfigError> {
        let mut c = Self::default();
        c.apply(env)?;
        if let Some(f) = file {
            c.apply(f)?;
        }
        c.apply(flags)?;
        Ok(c)
    }

    pub fn server_url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_module_defaults() {
        let c = Config::default();
        assert_eq!(c.rate, SampleRate::Hz10);
        assert_eq!(c.duration_s, 30.0);
        assert_eq!(c.detector, DetectorConfig::default());
        assert_eq!((c.knn.k, c.knn.band_fraction), (1, 0.1));
        assert_eq!(c.features.channel_mode, ChannelMode::WithTotal);
        assert_eq!(c.features.grid_rate_hz, 10.0);
    }

    #[test]
    fn flags_beat_file_beat_env() {
        let env = ConfigLayer::from_env(|k| match k {
            "STS_ADDR" => Some("0.0.0.0:1".into()),
            "STS_STORE" => Some("/env/store".into()),
            _ => None,
        });
        let file = ConfigLayer::from_toml("addr = \"0.0.0.0:2\"\nk = 3\n", Path::new("f.toml")).unwrap();
        let flags = ConfigLayer {
            k: Some(5),
            ..ConfigLayer::default()
        };
        let c = Config::resolve(&env, Some(&file), &flags).unwrap();
        assert_eq!(c.addr.port(), 2);
        assert_eq!(c.store, PathBuf::from("/env/store"));
        assert_eq!(c.knn.k, 5);
    }

    #[test]
    fn bad_values_are_rejected() {
        let path = Path::new("c.toml");
        assert!(matches!(
            ConfigLayer::from_toml("colour = 1", path),
            Err(ConfigError::Parse { .. })
        ));
        let layer = ConfigLayer::from_toml("rate_hz = 20", path).unwrap();
        assert!(Config::resolve(&ConfigLayer::default(), Some(&layer), &ConfigLayer::default()).is_err());
        let layer = ConfigLayer::from_toml("seated_fraction = 0.1", path).unwrap();
        assert!(Config::resolve(&ConfigLayer::default(), Some(&layer), &ConfigLayer::default()).is_err());
    }

    #[test]
    fn channel_mode_parses_from_file() {
        let layer = ConfigLayer::from_toml("channel_mode = \"raw\"", Path::new("c.toml")).unwrap();
        let c = Config::resolve(&ConfigLayer::default(), Some(&layer), &ConfigLayer::default()).unwrap();
        assert_eq!(c.features.channel_mode, ChannelMode::Raw);
    }
}
