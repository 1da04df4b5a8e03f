use std::fs;
use std::path::{Path, PathBuf};

use rcmlab_core::report::canonical_json_pretty;
use rcmlab_core::Result;
use serde::Serialize;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
}

/// Writes every artifact of one command into the output directory, stamping
/// each with the config hash and tool version.
pub struct Sink {
    dir: PathBuf,
    pub meta: Meta,
    pub written: Vec<PathBuf>,
}

impl Sink {
    pub fn new(dir: &Path, meta: Meta) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            meta,
            written: Vec::new(),
        })
    }

    fn stamp(&self) -> String {
        format!(
            "rcmlab {} {} config {}",
            self.meta.version, self.meta.command, self.meta.config_hash
        )
    }

    pub fn bytes(&mut self, name: &str, data: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, data)?;
        self.written.push(path);
        Ok(())
    }

    pub fn csv(&mut self, name: &str, body: &str) -> Result<()> {
        let text = format!("# {}\n{body}", self.stamp());
        self.bytes(name, text.as_bytes())
    }

    pub fn svg(&mut self, name: &str, body: &str) -> Result<()> {
        let text = format!("<!-- {} -->\n{body}", self.stamp());
        self.bytes(name, text.as_bytes())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, report: &T) -> Result<()> {
        #[derive(Serialize)]
        struct Doc<'a, T> {
            meta: &'a Meta,
            report: &'a T,
        }
        let text = canonical_json_pretty(&Doc {
            meta: &self.meta,
            report,
        }) + "\n";
        self.bytes(name, text.as_bytes())
    }
}
