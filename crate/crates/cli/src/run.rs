//! Per-run output directories and the manifest embedded in every report.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::{DateTime, Local, SecondsFormat};
use mucos::kg::Dataset;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// `<base>/<timestamp>-seed<seed>`, suffixed `-2`, `-3`, ... on collision.
pub fn create_run_dir(base: &Path, seed: u64, now: DateTime<Local>) -> Result<PathBuf> {
    fs::create_dir_all(base).with_context(|| format!("creating {}", base.display()))?;
    let stem = format!("{}-seed{seed}", now.format("%Y%m%dT%H%M%S"));
    for attempt in 1.. {
        let name = match attempt {
            1 => stem.clone(),
            i => format!("{stem}-{i}"),
        };
        let dir = base.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e).with_context(|| format!("creating {}", dir.display())),
        }
    }
    unreachable!()
}

#[derive(Debug, Clone)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub config: Vec<(String, String)>,
    pub dataset_triples: Option<usize>,
    pub dataset_sha256: Option<String>,
    pub started: DateTime<Local>,
    pub finished: Option<DateTime<Local>>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64) -> Self {
        Self {
            command: command.to_owned(),
            seed,
            config: Vec::new(),
            dataset_triples: None,
            dataset_sha256: None,
            started: Local::now(),
            finished: None,
        }
    }

    pub fn with_dataset(mut self, ds: &Dataset) -> Self {
        self.dataset_triples = Some(ds.splits.total());
        self.dataset_sha256 = Some(ds.fingerprint());
        self
    }

    pub fn with_config(mut self, config: Vec<(String, String)>) -> Self {
        self.config = config;
        self
    }

    /// Everything except timestamps, which live under `manifest.time.`.
    pub fn to_kv(&self) -> Vec<(String, String)> {
        let mut kv = vec![
            ("manifest.command".to_owned(), self.command.clone()),
            ("manifest.version".to_owned(), VERSION.to_owned()),
            ("manifest.seed".to_owned(), self.seed.to_string()),
        ];
        if let Some(n) = self.dataset_triples {
            kv.push(("manifest.dataset.triples".to_owned(), n.to_string()));
        }
        if let Some(h) = &self.dataset_sha256 {
            kv.push(("manifest.dataset.sha256".to_owned(), h.clone()));
        }
        for (k, v) in &self.config {
            kv.push((format!("manifest.config.{k}"), v.clone()));
        }
        let stamp = |t: &DateTime<Local>| t.to_rfc3339_opts(SecondsFormat::Millis, false);
        kv.push(("manifest.time.started".to_owned(), stamp(&self.started)));
        if let Some(f) = &self.finished {
            kv.push(("manifest.time.finished".to_owned(), stamp(f)));
        }
        kv
    }

    /// Manifest fields for a checkpoint echo, without timestamps.
    pub fn echo(&self) -> BTreeMap<String, String> {
        self.to_kv()
            .into_iter()
            .filter(|(k, _)| !k.starts_with("manifest.time.") && !k.starts_with("manifest.config."))
            .collect()
    }
}

pub struct Run {
    pub dir: PathBuf,
    pub manifest: RunManifest,
}

impl Run {
    pub fn start(base: &Path, manifest: RunManifest) -> Result<Self> {
        let dir = create_run_dir(base, manifest.seed, manifest.started)?;
        Ok(Self { dir, manifest })
    }

    /// Writes `name` as `key=value` lines: the manifest first, then `body`.
    pub fn write_report(&mut self, name: &str, body: &[(String, String)]) -> Result<PathBuf> {
        self.manifest.finished = Some(Local::now());
        let mut text = String::new();
        for (k, v) in self.manifest.to_kv().iter().chain(body) {
            text.push_str(&format!("{k}={v}\n"));
        }
        let path = self.dir.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        fs::write(self.dir.join("manifest.txt"), kv_text(&self.manifest.to_kv()))
            .with_context(|| format!("writing manifest in {}", self.dir.display()))?;
        Ok(path)
    }
}

pub fn kv_text(kv: &[(String, String)]) -> String {
    kv.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}
