use std::path::PathBuf;

/// Failures surfaced by the command line, split by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad or unreadable configuration, including dataset files. Exit 1.
    #[error("{0}")]
    Config(String),
    /// Failure while running or writing results. Exit 2.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    pub fn write(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        CliError::Runtime(format!("writing {}: {err}", path.display()))
    }

    pub fn read(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        CliError::Config(format!("reading {}: {err}", path.display()))
    }
}

impl From<fedah_core::Error> for CliError {
    fn from(e: fedah_core::Error) -> Self {
        if e.is_config() {
            CliError::Config(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Paths created so far, deleted again unless `keep` is called.
#[derive(Debug, Default)]
pub(crate) struct Cleanup {
    files: Vec<PathBuf>,
    dirs: Vec<PathBuf>,
}

impl Cleanup {
    pub fn file(&mut self, p: PathBuf) {
        self.files.push(p);
    }

    pub fn dir(&mut self, p: PathBuf) {
        self.dirs.push(p);
    }

    pub fn keep(mut self) {
        self.files.clear();
        self.dirs.clear();
    }
}

impl Drop for Cleanup {
    fn drop(&mut self) {
        for f in &self.files {
            let _ = std::fs::remove_file(f);
        }
        // Deepest first; only directories this run created, and only if empty.
        for d in self.dirs.iter().rev() {
            let _ = std::fs::remove_dir(d);
        }
    }
}
