//! The results store: a directory tree of dated artifacts. Daily aggregates
//! live as sorted tab-separated tables next to a JSON manifest; everything
//! downstream (models, scores, risks, ranking, cases, run summaries) is
//! JSON. Writes are atomic renames and every artifact serializes in a
//! deterministic order, so re-running a day rewrites identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::aggregate::{Aggregate, HostActivity};
use crate::campaign::{HostRanking, StageRisk};
use crate::error::{io_err, EngineError, Result};
use crate::link::Case;
use crate::monitor::{MonitoringModel, SurpriseScore};

const LOCK_NAME: &str = ".lock";
const DAY_KEY: &str = "%Y%m%d";

/// Per-source ingest counters recorded alongside a daily aggregate.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceCounts {
    pub partitions: u64,
    pub lines: u64,
    pub rejects: u64,
}

/// Provenance for one persisted daily aggregate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateManifest {
    pub day: NaiveDate,
    pub sources: BTreeMap<String, SourceCounts>,
    /// Internal addresses that had no identity-map name at event time.
    pub unresolved: u64,
}

/// What one daily run did, persisted for audit and for the gap warnings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub day: NaiveDate,
    pub scored_window: (NaiveDate, NaiveDate),
    pub trained_through: NaiveDate,
    pub hosts_ranked: u64,
    pub scores_written: u64,
    pub cases: Vec<String>,
    pub gaps: Vec<NaiveDate>,
    pub warnings: Vec<String>,
    pub unresolved: u64,
    pub rejects: u64,
}

/// Held while a run owns the results store; releasing is automatic.
#[derive(Debug)]
pub struct StoreLock {
    path: PathBuf,
}

impl Drop for StoreLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    /// Opens (creating if needed) a results store rooted at `root`.
    pub fn open(root: &Path) -> Result<Store> {
        for sub in [
            "aggregates",
            "models",
            "scores",
            "risks",
            "ranking",
            "cases",
            "runs",
        ] {
            let dir = root.join(sub);
            fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        }
        Ok(Store { root: root.into() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Takes the store-wide run lock; a second concurrent run fails fast.
    pub fn lock(&self) -> Result<StoreLock> {
        let path = self.root.join(LOCK_NAME);
        match fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(mut file) => {
                let _ = writeln!(file, "{}", std::process::id());
                Ok(StoreLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(EngineError::Locked { path })
            }
            Err(e) => Err(io_err(&path, e)),
        }
    }

    fn day_key(day: NaiveDate) -> String {
        day.format(DAY_KEY).to_string()
    }

    fn aggregate_path(&self, day: NaiveDate) -> PathBuf {
        self.root
            .join("aggregates")
            .join(format!("{}.tsv", Self::day_key(day)))
    }

    fn manifest_path(&self, day: NaiveDate) -> PathBuf {
        self.root
            .join("aggregates")
            .join(format!("{}.manifest.json", Self::day_key(day)))
    }

    /// A day's aggregate counts as present only once its manifest exists
    /// (the manifest is written after the table).
    pub fn has_aggregate(&self, day: NaiveDate) -> bool {
        self.manifest_path(day).exists()
    }

    pub fn save_aggregate(
        &self,
        aggregate: &Aggregate,
        manifest: &AggregateManifest,
    ) -> Result<()> {
        let mut out = String::new();
        for (host, activity) in &aggregate.hosts {
            render_activity(&mut out, host, activity);
        }
        write_atomic(&self.aggregate_path(manifest.day), out.as_bytes())?;
        write_json(&self.manifest_path(manifest.day), manifest)
    }

    pub fn load_manifest(&self, day: NaiveDate) -> Result<Option<AggregateManifest>> {
        read_json(&self.manifest_path(day))
    }

    pub fn load_aggregate(&self, day: NaiveDate) -> Result<Option<Aggregate>> {
        if !self.has_aggregate(day) {
            return Ok(None);
        }
        let path = self.aggregate_path(day);
        let text = match fs::read_to_string(&path) {
            Ok(text) => text,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(io_err(&path, e)),
        };
        let mut aggregate = Aggregate::default();
        aggregate.days.insert(day);
        for (lineno, line) in text.lines().enumerate() {
            parse_activity_row(line, &mut aggregate).map_err(|message| {
                EngineError::Data(format!(
                    "{}:{}: {message}",
                    path.display(),
                    lineno + 1
                ))
            })?;
        }
        Ok(Some(aggregate))
    }

    pub fn save_models(&self, day: NaiveDate, models: &[MonitoringModel]) -> Result<()> {
        let dir = self.root.join("models").join(Self::day_key(day));
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        for model in models {
            write_json(&dir.join(format!("{}.json", model.target.name())), model)?;
        }
        Ok(())
    }

    pub fn load_model(
        &self,
        day: NaiveDate,
        target: crate::aggregate::Target,
    ) -> Result<Option<MonitoringModel>> {
        let path = self
            .root
            .join("models")
            .join(Self::day_key(day))
            .join(format!("{}.json", target.name()));
        read_json(&path)
    }

    pub fn save_scores(&self, day: NaiveDate, scores: &[SurpriseScore]) -> Result<()> {
        let path = self
            .root
            .join("scores")
            .join(format!("{}.jsonl", Self::day_key(day)));
        let mut out = String::new();
        for score in scores {
            out.push_str(&serde_json::to_string(score)?);
            out.push('\n');
        }
        write_atomic(&path, out.as_bytes())
    }

    pub fn load_scores(&self, day: NaiveDate) -> Result<Option<Vec<SurpriseScore>>> {
        let path = self
            .root
            .join("scores")
            .join(format!("{}.jsonl", Self::day_key(day)));
        let text = match fs::read_to_string(&path) {
            Ok(text) => text,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(io_err(&path, e)),
        };
        let mut scores = Vec::new();
        for line in text.lines().filter(|l| !l.is_empty()) {
            scores.push(serde_json::from_str(line)?);
        }
        Ok(Some(scores))
    }

    pub fn save_risks(&self, day: NaiveDate, risks: &[StageRisk]) -> Result<()> {
        write_json(
            &self
                .root
                .join("risks")
                .join(format!("{}.json", Self::day_key(day))),
            &risks,
        )
    }

    pub fn load_risks(&self, day: NaiveDate) -> Result<Option<Vec<StageRisk>>> {
        read_json(
            &self
                .root
                .join("risks")
                .join(format!("{}.json", Self::day_key(day))),
        )
    }

    pub fn save_ranking(&self, day: NaiveDate, ranking: &HostRanking) -> Result<()> {
        write_json(
            &self
                .root
                .join("ranking")
                .join(format!("{}.json", Self::day_key(day))),
            ranking,
        )
    }

    pub fn load_ranking(&self, day: NaiveDate) -> Result<Option<HostRanking>> {
        read_json(
            &self
                .root
                .join("ranking")
                .join(format!("{}.json", Self::day_key(day))),
        )
    }

    pub fn save_cases(&self, day: NaiveDate, cases: &[Case]) -> Result<()> {
        let dir = self.root.join("cases").join(Self::day_key(day));
        // Clear leftovers so a rerun that emits fewer cases leaves no stale
        // case files behind.
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        }
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        for case in cases {
            write_json(&dir.join(format!("{}.json", case.id)), case)?;
        }
        let index: Vec<&str> = cases.iter().map(|c| c.id.as_str()).collect();
        write_json(&dir.join("index.json"), &index)
    }

    pub fn load_cases(&self, day: NaiveDate) -> Result<Vec<Case>> {
        let dir = self.root.join("cases").join(Self::day_key(day));
        let ids: Option<Vec<String>> = read_json(&dir.join("index.json"))?;
        let Some(ids) = ids else {
            return Ok(Vec::new());
        };
        ids.iter()
            .map(|id| {
                read_json(&dir.join(format!("{id}.json")))?.ok_or_else(|| {
                    EngineError::Data(format!("case index names missing case {id}"))
                })
            })
            .collect()
    }

    /// Looks a case up by its id; the leading day stamp locates the file.
    pub fn find_case(&self, id: &str) -> Result<Option<Case>> {
        let Some((stamp, _)) = id.split_once('-') else {
            return Ok(None);
        };
        if NaiveDate::parse_from_str(stamp, DAY_KEY).is_err() {
            return Ok(None);
        }
        read_json(&self.root.join("cases").join(stamp).join(format!("{id}.json")))
    }

    pub fn save_run(&self, summary: &RunSummary) -> Result<()> {
        write_json(
            &self
                .root
                .join("runs")
                .join(format!("{}.json", Self::day_key(summary.day))),
            summary,
        )
    }

    pub fn load_run(&self, day: NaiveDate) -> Result<Option<RunSummary>> {
        read_json(
            &self
                .root
                .join("runs")
                .join(format!("{}.json", Self::day_key(day))),
        )
    }

    /// Most recent day with a ranking artifact, if any.
    pub fn latest_ranked_day(&self) -> Result<Option<NaiveDate>> {
        let dir = self.root.join("ranking");
        let mut best = None;
        let entries = match fs::read_dir(&dir) {
            Ok(entries) => entries,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(io_err(&dir, e)),
        };
        for entry in entries {
            let entry = entry.map_err(|e| io_err(&dir, e))?;
            let name = entry.file_name();
            let Some(stamp) = name.to_string_lossy().strip_suffix(".json").map(String::from)
            else {
                continue;
            };
            if let Ok(day) = NaiveDate::parse_from_str(&stamp, DAY_KEY) {
                best = best.max(Some(day));
            }
        }
        Ok(best)
    }
}

fn render_activity(out: &mut String, host: &str, activity: &HostActivity) {
    use std::fmt::Write;
    for dst in &activity.touched {
        let _ = writeln!(out, "{host}\ttouched\t{dst}\t1");
    }
    for (dst, sets) in &activity.ports {
        for (kind, ports) in [
            ("port_data", &sets.data),
            ("port_service", &sets.service),
            ("port_general", &sets.general),
        ] {
            for port in ports {
                let _ = writeln!(out, "{host}\t{kind}\t{dst}\t{port}");
            }
        }
    }
    for ip in &activity.ptr_values {
        let _ = writeln!(out, "{host}\tptr\t{ip}\t1");
    }
    for (kind, map) in [
        ("consumed", &activity.consumed),
        ("sent", &activity.sent),
        ("published", &activity.published),
    ] {
        for (key, bytes) in map {
            let _ = writeln!(out, "{host}\t{kind}\t{key}\t{bytes}");
        }
    }
}

fn parse_activity_row(line: &str, aggregate: &mut Aggregate) -> std::result::Result<(), String> {
    let fields: Vec<&str> = line.split('\t').collect();
    let [host, kind, key, value] = fields[..] else {
        return Err(format!(
            "expected 4 tab-separated fields, found {}",
            fields.len()
        ));
    };
    let activity = aggregate.hosts.entry(host.to_string()).or_default();
    let parse_bytes = |value: &str| {
        value
            .parse::<u64>()
            .map_err(|_| format!("bad byte count {value:?}"))
    };
    match kind {
        "touched" => {
            activity.touched.insert(key.to_string());
        }
        "port_data" | "port_service" | "port_general" => {
            let port: u16 = value.parse().map_err(|_| format!("bad port {value:?}"))?;
            let sets = activity.ports.entry(key.to_string()).or_default();
            match kind {
                "port_data" => sets.data.insert(port),
                "port_service" => sets.service.insert(port),
                _ => sets.general.insert(port),
            };
        }
        "ptr" => {
            activity.ptr_values.insert(key.to_string());
        }
        "consumed" => {
            *activity.consumed.entry(key.to_string()).or_default() += parse_bytes(value)?;
        }
        "sent" => {
            *activity.sent.entry(key.to_string()).or_default() += parse_bytes(value)?;
        }
        "published" => {
            *activity.published.entry(key.to_string()).or_default() += parse_bytes(value)?;
        }
        other => return Err(format!("unknown row kind {other:?}")),
    }
    Ok(())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<Option<T>> {
    let bytes = match fs::read(path) {
        Ok(bytes) => bytes,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(io_err(path, e)),
    };
    Ok(Some(serde_json::from_slice(&bytes)?))
}
