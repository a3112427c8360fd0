use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

/// Everything an output depends on. The CSV header carries all fields but
/// the timestamp, which only goes to the sidecar file.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: &'static str,
    pub channel: String,
    pub unit: String,
    pub seed: u64,
    pub constraints: String,
    pub budget: String,
    pub version: &'static str,
}

impl RunManifest {
    pub fn header(&self) -> String {
        format!(
            "# subcommand={} channel={} unit={} constraints={} seed={} budget={} version={}\n",
            self.subcommand, self.channel, self.unit, self.constraints, self.seed, self.budget, self.version
        )
    }
}

#[derive(Serialize)]
struct Sidecar<'a> {
    #[serde(flatten)]
    manifest: &'a RunManifest,
    timestamp: u64,
}

pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.toml");
    PathBuf::from(s)
}

/// Writes `body` either to stdout or to `out` plus its manifest sidecar.
pub fn emit(out: Option<&Path>, manifest: &RunManifest, body: &str) -> anyhow::Result<()> {
    match out {
        None => print!("{body}"),
        Some(path) => {
            std::fs::write(path, body)?;
            let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
            let side = toml::to_string(&Sidecar { manifest, timestamp })?;
            std::fs::write(sidecar_path(path), side)?;
        }
    }
    Ok(())
}

/// Minimal CSV table: header comment, column names, rows.
pub struct Table {
    text: String,
}

impl Table {
    pub fn new(manifest: &RunManifest, columns: &[&str]) -> Self {
        let mut text = manifest.header();
        text.push_str(&columns.join(","));
        text.push('\n');
        Self { text }
    }

    pub fn row<I, S>(&mut self, cells: I)
    where
        I: IntoIterator<Item = S>,
        S: std::fmt::Display,
    {
        let mut first = true;
        for c in cells {
            if !first {
                self.text.push(',');
            }
            first = false;
            let _ = write!(self.text, "{c}");
        }
        self.text.push('\n');
    }

    pub fn finish(self) -> String {
        self.text
    }
}
