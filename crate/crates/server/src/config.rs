//! Server configuration: TOML file, then `CALMRELAY_*` environment, then CLI flags.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use calmrelay_core::RoomConfig;
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub listen: SocketAddr,
    pub log_level: String,
    /// Serves the browser client at `/` when set.
    pub static_dir: Option<PathBuf>,
    /// Session logs land here when `room.record` is on.
    pub record_dir: PathBuf,
    /// Template for every room; `mode` comes from the first HELLO.
    pub room: RoomConfig,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            log_level: "info".into(),
            static_dir: None,
            record_dir: PathBuf::from("sessions"),
            room: RoomConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServerConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("bad config file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("bad value for {var}: {value:?}")]
    Env { var: &'static str, value: String },
    #[error(transparent)]
    Room(#[from] calmrelay_core::config::ConfigError),
}

impl ServerConfig {
    pub fn from_toml(text: &str) -> Result<Self, ServerConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ServerConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ServerConfigError::Read {
            path: path.to_owned(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Applies `CALMRELAY_*` overrides from `vars`.
    pub fn apply_env<I, K, V>(&mut self, vars: I) -> Result<(), ServerConfigError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: Into<String>,
    {
        fn parse<T: std::str::FromStr>(var: &'static str, value: String) -> Result<T, ServerConfigError> {
            value.parse().map_err(|_| ServerConfigError::Env { var, value })
        }
        for (k, v) in vars {
            let v = v.into();
            match k.as_ref() {
                "CALMRELAY_LISTEN" => self.listen = parse("CALMRELAY_LISTEN", v)?,
                "CALMRELAY_LOG_LEVEL" => self.log_level = v,
                "CALMRELAY_STATIC_DIR" => self.static_dir = Some(v.into()),
                "CALMRELAY_RECORD_DIR" => self.record_dir = v.into(),
                "CALMRELAY_RECORD" => self.room.record = parse("CALMRELAY_RECORD", v)?,
                "CALMRELAY_TICK_HZ" => self.room.tick_hz = parse("CALMRELAY_TICK_HZ", v)?,
                "CALMRELAY_SEED" => self.room.seed = Some(parse("CALMRELAY_SEED", v)?),
                _ => {}
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ServerConfigError> {
        Ok(self.room.validate()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_env() {
        let mut cfg = ServerConfig::from_toml(
            r#"
listen = "0.0.0.0:9000"
[room]
tick_hz = 20
record = true
[room.gaze]
display = "dots"
"#,
        )
        .unwrap();
        assert_eq!(cfg.room.tick_hz, 20);
        assert_eq!(cfg.room.gaze.display, calmrelay_core::GazeDisplay::Dots);
        cfg.apply_env([("CALMRELAY_TICK_HZ", "30"), ("HOME", "/root"), ("CALMRELAY_SEED", "7")])
            .unwrap();
        assert_eq!(cfg.room.tick_hz, 30);
        assert_eq!(cfg.room.seed, Some(7));
        assert_eq!(cfg.listen.port(), 9000);
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        let mut cfg = ServerConfig::default();
        assert!(cfg.apply_env([("CALMRELAY_TICK_HZ", "fast")]).is_err());
        cfg.room.tick_hz = 0;
        assert!(cfg.validate().is_err());
        assert!(ServerConfig::from_toml("port = 1").is_err());
    }
}
