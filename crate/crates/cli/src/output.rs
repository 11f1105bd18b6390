use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

/// Artifact sink rooted at the output directory; remembers what each stage
/// wrote so the manifest can list it.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Names written since the last call.
    pub fn take_written(&mut self) -> Vec<String> {
        std::mem::take(&mut self.written)
    }

    fn path(&mut self, name: &str) -> Result<PathBuf> {
        let p = self.root.join(name);
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        self.written.push(name.to_string());
        Ok(p)
    }

    pub fn writer(&mut self, name: &str) -> Result<BufWriter<File>> {
        let p = self.path(name)?;
        Ok(BufWriter::new(File::create(&p).with_context(|| format!("writing {}", p.display()))?))
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        let p = self.path(name)?;
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(&p, text).with_context(|| format!("writing {}", p.display()))
    }

    /// `rows` are written as given; numbers should already be formatted.
    pub fn csv<I, R>(&mut self, name: &str, header: &[&str], rows: I) -> Result<()>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        let p = self.path(name)?;
        let mut w = csv::Writer::from_path(&p).with_context(|| format!("writing {}", p.display()))?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r.into_iter().collect::<Vec<_>>())?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest representation that round-trips.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}
