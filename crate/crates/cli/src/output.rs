use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use tempfile::TempDir;

/// An output directory that is filled in a hidden sibling and renamed into
/// place on [`OutDir::commit`], so a failed run never leaves partial output.
pub struct OutDir {
    staging: TempDir,
    target: PathBuf,
    replace: bool,
}

impl OutDir {
    pub fn create(target: &Path, replace: bool) -> Result<Self> {
        if target.exists() && !replace {
            bail!("output directory {} already exists (use --force to replace it)", target.display());
        }
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent).with_context(|| format!("creating {}", parent.display()))?;
        let staging = tempfile::Builder::new()
            .prefix(".driftlab-")
            .tempdir_in(&parent)
            .with_context(|| format!("creating a staging directory in {}", parent.display()))?;
        Ok(OutDir {
            staging,
            target: target.to_path_buf(),
            replace,
        })
    }

    pub fn path(&self) -> &Path {
        self.staging.path()
    }

    pub fn file(&self, name: &str) -> Result<fs::File> {
        let path = self.staging.path().join(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::File::create(&path).with_context(|| format!("creating {name}"))
    }

    pub fn write_bytes(&self, name: &str, bytes: &[u8]) -> Result<()> {
        self.file(name)?.write_all(bytes)?;
        Ok(())
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        self.write_bytes(name, to_json(value)?.as_bytes())
    }

    pub fn commit(self) -> Result<PathBuf> {
        if self.replace && self.target.exists() {
            fs::remove_dir_all(&self.target)
                .with_context(|| format!("removing {}", self.target.display()))?;
        }
        let staged = self.staging.keep();
        fs::rename(&staged, &self.target)
            .with_context(|| format!("moving output into {}", self.target.display()))?;
        Ok(self.target)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Writes rows of numbers under `header` as CSV, numbers in their shortest
/// round-trip form.
pub fn write_csv<W: Write>(writer: W, header: &[String], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| format!("{v:?}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn axis_names(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}
