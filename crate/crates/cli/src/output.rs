//! Artifact directory with write-temp-then-rename file output.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::Result;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "ADDNET_OUT";

#[derive(Debug, Clone)]
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    /// Writes `name` (may contain `/`) through a sibling temp file, so a
    /// reader never sees a half-written artifact.
    pub fn write_with<F>(&self, name: &str, f: F) -> Result<PathBuf>
    where
        F: FnOnce(&mut dyn Write) -> Result<()>,
    {
        let target = self.root.join(name);
        let dir = target.parent().unwrap_or(&self.root);
        fs::create_dir_all(dir)?;
        let file_name = target.file_name().and_then(|n| n.to_str()).unwrap_or("artifact");
        let tmp = dir.join(format!(".{file_name}.tmp"));
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            f(&mut w)?;
            w.flush()?;
            w.get_ref().sync_all()?;
        }
        fs::rename(&tmp, &target)?;
        Ok(target)
    }

    pub fn write_bytes(&self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        self.write_with(name, |w| Ok(w.write_all(bytes)?))
    }
}

/// `--out` when given, else `$ADDNET_OUT/<subcommand>`, else
/// `runs/<subcommand>`.
pub fn resolve_out(flag: Option<&Path>, subcommand: &str) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    match std::env::var_os(OUT_ENV) {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(subcommand),
        _ => PathBuf::from("runs").join(subcommand),
    }
}
