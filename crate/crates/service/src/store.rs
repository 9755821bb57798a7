//! One JSON document per session under `<data dir>/sessions`, written by
//! write-then-rename so a crash never leaves a half-written session.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use tokio::sync::Mutex;

use crate::{ApiError, SessionRecord};

pub(crate) type Slot = Arc<Mutex<SessionRecord>>;

#[derive(Debug)]
pub(crate) struct SessionStore {
    dir: PathBuf,
    sessions: RwLock<BTreeMap<String, Slot>>,
}

impl SessionStore {
    /// Opens the store, loading every readable session document.
    pub(crate) fn open(data_dir: &Path) -> std::io::Result<Self> {
        let dir = data_dir.join("sessions");
        fs::create_dir_all(&dir)?;
        let mut sessions = BTreeMap::new();
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().is_none_or(|e| e != "json") {
                continue;
            }
            match fs::read(&path).map(|b| serde_json::from_slice::<SessionRecord>(&b)) {
                Ok(Ok(record)) => {
                    sessions.insert(record.session_id.clone(), Arc::new(Mutex::new(record)));
                }
                Ok(Err(e)) => tracing::warn!(path = %path.display(), error = %e, "skipping unreadable session"),
                Err(e) => tracing::warn!(path = %path.display(), error = %e, "skipping unreadable session"),
            }
        }
        tracing::info!(dir = %dir.display(), count = sessions.len(), "session store opened");
        Ok(Self { dir, sessions: RwLock::new(sessions) })
    }

    pub(crate) fn get(&self, id: &str) -> Result<Slot, ApiError> {
        self.sessions.read().expect("store lock").get(id).cloned().ok_or_else(|| ApiError::not_found(id))
    }

    pub(crate) fn slots(&self) -> Vec<Slot> {
        self.sessions.read().expect("store lock").values().cloned().collect()
    }

    pub(crate) fn insert(&self, record: SessionRecord) -> Result<Slot, ApiError> {
        self.persist(&record)?;
        let slot = Arc::new(Mutex::new(record.clone()));
        self.sessions.write().expect("store lock").insert(record.session_id, Arc::clone(&slot));
        Ok(slot)
    }

    pub(crate) fn persist(&self, record: &SessionRecord) -> Result<(), ApiError> {
        let write = || -> std::io::Result<()> {
            let path = self.dir.join(format!("{}.json", record.session_id));
            let tmp = self.dir.join(format!(".{}.json.tmp", record.session_id));
            fs::write(&tmp, serde_json::to_vec_pretty(record).expect("records serialize"))?;
            fs::rename(&tmp, &path)
        };
        write().map_err(|e| ApiError::unavailable(format!("could not save session: {e}")))
    }
}
