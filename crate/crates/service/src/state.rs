use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use spurious_core::partition::PartitionRequest;
use spurious_core::{load_table, Analysis, CausalConfig, Dataset, LoadOptions};
use tokio::sync::Mutex;

use crate::config::ServiceConfig;

/// One analyst's session over a shared dataset.
#[derive(Debug)]
pub struct Session {
    pub id: String,
    pub dataset_id: String,
    pub analysis: Analysis,
    pub created_at: u64,
}

/// What a session snapshot file holds. The partition is stored as the
/// request that built it and rebuilt on restore.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub session_id: String,
    pub dataset_id: String,
    pub config: CausalConfig,
    pub seed: u64,
    pub partition: Option<PartitionRequest>,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
}

impl Session {
    pub fn snapshot(&self) -> SessionSnapshot {
        SessionSnapshot {
            session_id: self.id.clone(),
            dataset_id: self.dataset_id.clone(),
            config: self.analysis.config().clone(),
            seed: self.analysis.seed(),
            partition: self.analysis.partition_request().cloned(),
            created_at: self.created_at,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetMeta {
    delimiter: u8,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("snapshot i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("snapshot json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("snapshot `{file}` no longer loads: {source}")]
    Engine {
        file: String,
        #[source]
        source: spurious_core::Error,
    },
}

struct Inner {
    config: ServiceConfig,
    datasets: RwLock<HashMap<String, Arc<Dataset>>>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
}

/// Shared service state. Datasets are read-only and shared; each session
/// sits behind its own mutex so mutations on one session are serialized
/// while other sessions proceed in parallel.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

pub fn now_secs() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

impl AppState {
    pub fn new(config: ServiceConfig) -> AppState {
        AppState {
            inner: Arc::new(Inner {
                config,
                datasets: RwLock::new(HashMap::new()),
                sessions: RwLock::new(HashMap::new()),
            }),
        }
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.inner.config
    }

    pub fn dataset(&self, id: &str) -> Option<Arc<Dataset>> {
        self.inner
            .datasets
            .read()
            .expect("dataset map poisoned")
            .get(id)
            .cloned()
    }

    pub fn insert_dataset(&self, ds: Arc<Dataset>) {
        self.inner
            .datasets
            .write()
            .expect("dataset map poisoned")
            .insert(ds.id().to_string(), ds);
    }

    pub fn session(&self, id: &str) -> Option<Arc<Mutex<Session>>> {
        self.inner
            .sessions
            .read()
            .expect("session map poisoned")
            .get(id)
            .cloned()
    }

    pub fn insert_session(&self, session: Session) -> Arc<Mutex<Session>> {
        let id = session.id.clone();
        let s = Arc::new(Mutex::new(session));
        self.inner
            .sessions
            .write()
            .expect("session map poisoned")
            .insert(id, s.clone());
        s
    }

    fn datasets_dir(dir: &Path) -> PathBuf {
        dir.join("datasets")
    }

    fn sessions_dir(dir: &Path) -> PathBuf {
        dir.join("sessions")
    }

    /// Stores the raw upload so snapshots can be restored. No-op without a
    /// data directory.
    pub fn persist_dataset(&self, id: &str, bytes: &[u8], delimiter: u8) -> Result<(), StoreError> {
        let Some(dir) = &self.inner.config.data_dir else {
            return Ok(());
        };
        let d = Self::datasets_dir(dir);
        std::fs::create_dir_all(&d)?;
        std::fs::write(d.join(format!("{id}.data")), bytes)?;
        std::fs::write(
            d.join(format!("{id}.json")),
            serde_json::to_vec(&DatasetMeta { delimiter })?,
        )?;
        Ok(())
    }

    /// Writes the session's snapshot file, replacing any previous one.
    pub fn persist_session(&self, session: &Session) -> Result<(), StoreError> {
        let Some(dir) = &self.inner.config.data_dir else {
            return Ok(());
        };
        let d = Self::sessions_dir(dir);
        std::fs::create_dir_all(&d)?;
        let tmp = d.join(format!("{}.json.tmp", session.id));
        std::fs::write(&tmp, serde_json::to_vec_pretty(&session.snapshot())?)?;
        std::fs::rename(tmp, d.join(format!("{}.json", session.id)))?;
        Ok(())
    }

    /// Reloads datasets and sessions from the data directory, rebuilding
    /// each session's partition from its stored request.
    pub fn restore(&self) -> Result<usize, StoreError> {
        let Some(dir) = self.inner.config.data_dir.clone() else {
            return Ok(0);
        };
        let ddir = Self::datasets_dir(&dir);
        if ddir.is_dir() {
            for entry in std::fs::read_dir(&ddir)? {
                let path = entry?.path();
                if path.extension().and_then(|e| e.to_str()) != Some("json") {
                    continue;
                }
                let meta: DatasetMeta = serde_json::from_slice(&std::fs::read(&path)?)?;
                let bytes = std::fs::read(path.with_extension("data"))?;
                let opts = LoadOptions {
                    delimiter: meta.delimiter,
                    ..LoadOptions::default()
                };
                let ds = load_table(&bytes, opts).map_err(|source| StoreError::Engine {
                    file: path.display().to_string(),
                    source,
                })?;
                self.insert_dataset(Arc::new(ds));
            }
        }
        let sdir = Self::sessions_dir(&dir);
        let mut restored = 0;
        if sdir.is_dir() {
            for entry in std::fs::read_dir(&sdir)? {
                let path = entry?.path();
                if path.extension().and_then(|e| e.to_str()) != Some("json") {
                    continue;
                }
                let snap: SessionSnapshot = serde_json::from_slice(&std::fs::read(&path)?)?;
                let file = path.display().to_string();
                let engine = |source| StoreError::Engine {
                    file: file.clone(),
                    source,
                };
                let ds = self.dataset(&snap.dataset_id).ok_or_else(|| {
                    engine(spurious_core::Error::Config(format!(
                        "dataset `{}` missing",
                        snap.dataset_id
                    )))
                })?;
                let mut analysis = Analysis::new(ds, snap.config, snap.seed).map_err(engine)?;
                if let Some(req) = snap.partition {
                    analysis.set_partition(req).map_err(engine)?;
                }
                self.insert_session(Session {
                    id: snap.session_id,
                    dataset_id: snap.dataset_id,
                    analysis,
                    created_at: snap.created_at,
                });
                restored += 1;
            }
        }
        Ok(restored)
    }
}
