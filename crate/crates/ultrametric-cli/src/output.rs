use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::{Cmd, Opts};

/// Bumped whenever a column set changes.
pub const SCHEMA_VERSION: u32 = 1;

pub struct Output {
    cmd: Cmd,
    out: Option<PathBuf>,
}

impl Output {
    pub fn new(cmd: Cmd, opts: &Opts) -> Output {
        Output { cmd, out: opts.out.clone() }
    }

    fn target(&self, ext: &str) -> Option<PathBuf> {
        self.out.clone().or_else(|| {
            std::env::var_os("ULTRA_OUT_DIR")
                .filter(|d| !d.is_empty())
                .map(|d| PathBuf::from(d).join(format!("{}.{ext}", self.cmd.name())))
        })
    }

    fn sink(&self, ext: &str) -> Result<Box<dyn Write>> {
        Ok(match self.target(ext) {
            Some(p) => {
                if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir)?;
                }
                Box::new(std::fs::File::create(&p).with_context(|| format!("creating {}", p.display()))?)
            }
            None => Box::new(std::io::stdout().lock()),
        })
    }

    /// One header comment `# ultra <cmd> v<N>`, a header row, then records.
    pub fn csv(&self, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        let mut sink = self.sink("csv")?;
        writeln!(sink, "# ultra {} v{SCHEMA_VERSION}", self.cmd.name())?;
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// JSON object with `schema` = "ultra <cmd> v<N>" added.
    pub fn json<T: Serialize>(&self, value: &T) -> Result<()> {
        let mut v = serde_json::to_value(value)?;
        if let serde_json::Value::Object(m) = &mut v {
            m.insert("schema".into(), format!("ultra {} v{SCHEMA_VERSION}", self.cmd.name()).into());
        }
        let mut sink = self.sink("json")?;
        serde_json::to_writer_pretty(&mut sink, &v)?;
        writeln!(sink)?;
        Ok(())
    }
}

pub fn num(x: f64) -> String {
    x.to_string()
}
