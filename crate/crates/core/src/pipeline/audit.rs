use std::path::{Path, PathBuf};
use std::sync::Mutex;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    Read,
    Write,
}

/// Record of every file the orchestrator opened, in order of access.
#[derive(Debug, Default)]
pub struct AccessLog {
    entries: Mutex<Vec<(Access, PathBuf)>>,
}

impl AccessLog {
    pub fn record(&self, access: Access, path: &Path) {
        self.entries
            .lock()
            .expect("access log poisoned")
            .push((access, path.to_path_buf()));
    }

    pub fn entries(&self) -> Vec<(Access, PathBuf)> {
        self.entries.lock().expect("access log poisoned").clone()
    }

    pub fn reads(&self) -> Vec<PathBuf> {
        self.filtered(Access::Read)
    }

    pub fn writes(&self) -> Vec<PathBuf> {
        self.filtered(Access::Write)
    }

    fn filtered(&self, kind: Access) -> Vec<PathBuf> {
        self.entries()
            .into_iter()
            .filter(|(a, _)| *a == kind)
            .map(|(_, p)| p)
            .collect()
    }
}
