use std::path::PathBuf;

pub const DEFAULT_PORT: u16 = 8642;
pub const DEFAULT_MAX_UPLOAD_BYTES: usize = 50 * 1024 * 1024;
pub const DEFAULT_MAX_ROWS: usize = 1_000_000;

/// Service settings, read from the environment by [`ServiceConfig::from_env`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceConfig {
    pub port: u16,
    /// Snapshot directory; persistence is off when unset.
    pub data_dir: Option<PathBuf>,
    pub max_upload_bytes: usize,
    pub max_rows: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            port: DEFAULT_PORT,
            data_dir: None,
            max_upload_bytes: DEFAULT_MAX_UPLOAD_BYTES,
            max_rows: DEFAULT_MAX_ROWS,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("invalid value for {var}: `{value}`")]
pub struct EnvError {
    pub var: &'static str,
    pub value: String,
}

impl ServiceConfig {
    /// Reads PORT, DATA_DIR, MAX_UPLOAD_BYTES and MAX_ROWS.
    pub fn from_env() -> Result<ServiceConfig, EnvError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<ServiceConfig, EnvError> {
        fn parse<T: std::str::FromStr>(
            var: &'static str,
            v: Option<String>,
            default: T,
        ) -> Result<T, EnvError> {
            match v {
                None => Ok(default),
                Some(s) => s.trim().parse().map_err(|_| EnvError { var, value: s }),
            }
        }
        let d = ServiceConfig::default();
        Ok(ServiceConfig {
            port: parse("PORT", get("PORT"), d.port)?,
            data_dir: get("DATA_DIR").filter(|s| !s.is_empty()).map(PathBuf::from),
            max_upload_bytes: parse(
                "MAX_UPLOAD_BYTES",
                get("MAX_UPLOAD_BYTES"),
                d.max_upload_bytes,
            )?,
            max_rows: parse("MAX_ROWS", get("MAX_ROWS"), d.max_rows)?,
        })
    }
}
