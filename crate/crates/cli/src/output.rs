//! Artifact writers. Every file starts with the scenario hash.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

/// Reals with 17 significant digits, `.` decimal point, no grouping.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map_or_else(String::new, num)
}

/// Output directory plus the hash stamped into every file.
pub struct Artifacts {
    pub dir: PathBuf,
    pub hash: String,
    pub written: Vec<PathBuf>,
}

impl Artifacts {
    pub fn new(dir: &Path, hash: &str) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            hash: hash.to_string(),
            written: Vec::new(),
        })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        self.written.push(path);
        Ok(BufWriter::new(file))
    }

    /// CSV with a `# scenario <hash>` comment line before the header.
    pub fn csv<R>(&mut self, name: &str, header: &[&str], rows: R) -> Result<()>
    where
        R: IntoIterator<Item = Vec<String>>,
    {
        let mut w = self.create(name)?;
        writeln!(w, "# scenario {}", self.hash)?;
        let mut out = csv::Writer::from_writer(w);
        out.write_record(header)?;
        for row in rows {
            out.write_record(&row)?;
        }
        out.flush().with_context(|| format!("writing {name}"))?;
        Ok(())
    }

    /// JSON lines; the first line carries the scenario hash.
    pub fn jsonl<T, R>(&mut self, name: &str, rows: R) -> Result<()>
    where
        T: Serialize,
        R: IntoIterator<Item = T>,
    {
        let mut w = self.create(name)?;
        serde_json::to_writer(&mut w, &serde_json::json!({ "scenario_hash": self.hash }))?;
        writeln!(w)?;
        for row in rows {
            serde_json::to_writer(&mut w, &row)?;
            writeln!(w)?;
        }
        w.flush().with_context(|| format!("writing {name}"))?;
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush().with_context(|| format!("writing {name}"))?;
        Ok(())
    }
}
