//! The daily run: backfill per-day aggregates from raw logs, train one model
//! per monitored quantity on the window ending yesterday, score the window
//! ending today, compose stage risks, rank machines, link cases, and persist
//! every artifact so a rerun of the same day is byte-identical.

use std::collections::BTreeMap;

use chrono::{Days, NaiveDate};
use rayon::prelude::*;

use crate::aggregate::{aggregate_day, Aggregate, Target};
use crate::campaign::{rank_hosts, stage_risks, HostRanking};
use crate::config::EngineConfig;
use crate::error::{EngineError, Result};
use crate::ingest::{list_partitions, parse_partition, standardize, Records, StandardizeStats};
use crate::link::{link_cases, Case};
use crate::monitor::{score_table, train_monitoring_model, MonitoringModel, SurpriseScore};
use crate::profile::{build_profiles, WindowSlice};
use crate::store::{AggregateManifest, RunSummary, SourceCounts, Store};

/// Everything a finished daily run hands back to the caller.
#[derive(Debug)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub ranking: HostRanking,
    pub cases: Vec<Case>,
}

/// The day ranges one run touches. The scored window ends on the run day;
/// the training window ends the day before, so no model ever sees the day it
/// scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunWindows {
    /// Every day whose aggregate must exist, inclusive.
    pub needed: (NaiveDate, NaiveDate),
    pub scored: (NaiveDate, NaiveDate),
    pub scoring_history: (NaiveDate, NaiveDate),
    pub training: (NaiveDate, NaiveDate),
    pub training_history: (NaiveDate, NaiveDate),
}

pub fn run_windows(day: NaiveDate, window_days: u32, history_days: u32) -> RunWindows {
    let w = u64::from(window_days.max(1));
    let h = u64::from(history_days.max(1));
    let scored = (day - Days::new(w - 1), day);
    let scoring_history = (scored.0 - Days::new(h), scored.0 - Days::new(1));
    let training = (day - Days::new(w), day - Days::new(1));
    let training_history = (training.0 - Days::new(h), training.0 - Days::new(1));
    RunWindows {
        needed: (training_history.0, day),
        scored,
        scoring_history,
        training,
        training_history,
    }
}

struct DayIngest {
    aggregate: Aggregate,
    manifest: AggregateManifest,
}

/// Reads, standardizes, and reduces every configured source for one day.
fn ingest_day(config: &EngineConfig, day: NaiveDate) -> Result<DayIngest> {
    let mut batches = Vec::new();
    let mut sources: BTreeMap<String, SourceCounts> = BTreeMap::new();
    let mut std_stats = StandardizeStats::default();
    for source in &config.sources {
        let counts = sources.entry(source.kind.name().to_string()).or_default();
        let (partitions, _skipped) = list_partitions(source, (day, day))?;
        counts.partitions += partitions.len() as u64;
        for (_, path) in partitions {
            let (raw, stats) = parse_partition(source, &path)?;
            if stats.corrupt {
                return Err(EngineError::Data(format!(
                    "{}: {} of {} lines rejected; refusing to treat the file as data",
                    path.display(),
                    stats.rejects,
                    stats.lines
                )));
            }
            counts.lines += stats.lines as u64;
            counts.rejects += stats.rejects as u64;
            batches.push(standardize(
                &raw,
                &config.identity,
                &config.internal_cidrs,
                &mut std_stats,
            ));
        }
    }
    let refs: Vec<&Records> = batches.iter().collect();
    let aggregate = aggregate_day(day, &refs, &config.ports, &config.internal_cidrs)?;
    Ok(DayIngest {
        aggregate,
        manifest: AggregateManifest {
            day,
            sources,
            unresolved: std_stats.unresolved as u64,
        },
    })
}

/// Attributes each positive score to the window day contributing most of its
/// value (earliest day wins ties).
fn fill_peak_days(scores: &mut [SurpriseScore], dailies: &[(NaiveDate, &Aggregate)]) {
    for score in scores.iter_mut() {
        if score.actual <= 0.0 {
            continue;
        }
        let mut best: Option<(NaiveDate, f64)> = None;
        for (day, agg) in dailies {
            let Some(activity) = agg.hosts.get(&score.host) else { continue };
            let value = match &score.remote {
                None => activity.target_value(score.target),
                Some(remote) => activity
                    .pair_values(score.target)
                    .get(remote)
                    .copied()
                    .unwrap_or(0) as f64,
            };
            if value > best.map(|(_, b)| b).unwrap_or(0.0) {
                best = Some((*day, value));
            }
        }
        score.peak_day = best.map(|(d, _)| d);
    }
}

fn days_between(range: (NaiveDate, NaiveDate)) -> Vec<NaiveDate> {
    let mut out = Vec::new();
    let mut d = range.0;
    while d <= range.1 {
        out.push(d);
        d = d.succ_opt().expect("date range within calendar bounds");
    }
    out
}

/// Runs the whole day: idempotent per (configuration, day). Days with no
/// logs at all ingest as empty, warn, and still succeed.
pub fn run_daily(config: &EngineConfig, day: NaiveDate) -> Result<RunOutcome> {
    let store = Store::open(&config.engine.results)?;
    let _lock = store.lock()?;
    let windows = run_windows(day, config.engine.window_days, config.engine.history_days);

    // Backfill: ensure every needed day has a persisted aggregate, then work
    // from the persisted form so reruns see exactly what this run saw.
    let mut dailies: Vec<(NaiveDate, Aggregate)> = Vec::new();
    let mut unresolved = 0u64;
    let mut rejects = 0u64;
    for d in days_between(windows.needed) {
        if !store.has_aggregate(d) {
            let ingested = ingest_day(config, d)?;
            store.save_aggregate(&ingested.aggregate, &ingested.manifest)?;
        }
        if let Some(manifest) = store.load_manifest(d)? {
            unresolved += manifest.unresolved;
            rejects += manifest.sources.values().map(|c| c.rejects).sum::<u64>();
        }
        let aggregate = store.load_aggregate(d)?.unwrap_or_default();
        dailies.push((d, aggregate));
    }
    let present: Vec<(NaiveDate, &Aggregate)> = dailies
        .iter()
        .filter(|(_, a)| !a.hosts.is_empty())
        .map(|(d, a)| (*d, a))
        .collect();
    let in_range = |range: (NaiveDate, NaiveDate)| -> Vec<(NaiveDate, &Aggregate)> {
        present
            .iter()
            .filter(|(d, _)| *d >= range.0 && *d <= range.1)
            .copied()
            .collect()
    };
    let train_days = in_range(windows.training);
    let train_history_days = in_range(windows.training_history);
    let score_days = in_range(windows.scored);
    let score_history_days = in_range(windows.scoring_history);

    // One model per target, trained and scored independently.
    type TargetOutput = (Option<(MonitoringModel, Vec<SurpriseScore>)>, Vec<String>);
    let outputs: Vec<Result<TargetOutput>> = Target::ALL
        .par_iter()
        .map(|target| -> Result<TargetOutput> {
            let train_profiles = build_profiles(
                *target,
                WindowSlice { range: windows.training, dailies: &train_days },
                WindowSlice { range: windows.training_history, dailies: &train_history_days },
                &config.cidr_labels,
                &config.identity,
                &config.model,
            )?;
            if train_profiles.table.rows() == 0 {
                let note = format!(
                    "{}: no activity in the training window; quantity skipped",
                    target.name()
                );
                return Ok((None, vec![note]));
            }
            let model = train_monitoring_model(&train_profiles, &config.model, config.engine.seed)?;
            // A model may only score strictly later days than it saw.
            if model.trained_through >= windows.scored.1 {
                return Err(EngineError::Internal(format!(
                    "{} model trained through {} would see its own scoring day",
                    target.name(),
                    model.trained_through
                )));
            }
            let score_profiles = build_profiles(
                *target,
                WindowSlice { range: windows.scored, dailies: &score_days },
                WindowSlice { range: windows.scoring_history, dailies: &score_history_days },
                &config.cidr_labels,
                &config.identity,
                &config.model,
            )?;
            let scores = if score_profiles.table.rows() == 0 {
                Vec::new()
            } else {
                score_table(&model, &score_profiles)?
            };
            Ok((Some((model, scores)), Vec::new()))
        })
        .collect();

    let mut warnings = Vec::new();
    let mut models = Vec::new();
    let mut scores = Vec::new();
    for output in outputs {
        let (trained, notes) = output?;
        warnings.extend(notes);
        if let Some((model, target_scores)) = trained {
            models.push(model);
            scores.extend(target_scores);
        }
    }
    fill_peak_days(&mut scores, &score_days);

    let risks = stage_risks(&scores, &config.combo);
    let ranking = rank_hosts(&risks);
    let (_graph, cases) = link_cases(day, &scores, &risks, &ranking, &config.link);

    let gaps: Vec<NaiveDate> = days_between(windows.scored)
        .into_iter()
        .filter(|d| !score_days.iter().any(|(x, _)| x == d))
        .collect();
    for gap in &gaps {
        warnings.push(format!("no activity ingested for {gap}"));
    }

    store.save_models(day, &models)?;
    store.save_scores(day, &scores)?;
    store.save_risks(day, &risks)?;
    store.save_ranking(day, &ranking)?;
    store.save_cases(day, &cases)?;
    let summary = RunSummary {
        day,
        scored_window: windows.scored,
        trained_through: windows.training.1,
        hosts_ranked: ranking.hosts.len() as u64,
        scores_written: scores.len() as u64,
        cases: cases.iter().map(|c| c.id.clone()).collect(),
        gaps,
        warnings,
        unresolved,
        rejects,
    };
    store.save_run(&summary)?;
    Ok(RunOutcome {
        summary,
        ranking,
        cases,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen;
    use std::collections::BTreeMap;
    use std::fs;
    use std::net::Ipv4Addr;
    use std::path::Path;

    fn date(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    #[test]
    fn windows_nest_exactly_and_training_ends_yesterday() {
        let w = run_windows(date("2018-05-25"), 28, 28);
        assert_eq!(w.scored, (date("2018-04-28"), date("2018-05-25")));
        assert_eq!(w.training, (date("2018-04-27"), date("2018-05-24")));
        assert_eq!(w.scoring_history, (date("2018-03-31"), date("2018-04-27")));
        assert_eq!(w.training_history, (date("2018-03-30"), date("2018-04-26")));
        assert_eq!(w.needed, (date("2018-03-30"), date("2018-05-25")));
        assert!(w.training.1 < w.scored.1);
    }

    /// A four-machine network and a short-window configuration small enough
    /// to drive the whole pipeline in a unit test.
    fn tiny_workspace(dir: &Path, days: u32) -> crate::config::EngineConfig {
        let mut spec = simgen::demo_spec(7);
        spec.hosts = vec![
            simgen::HostSpec {
                name: "pc-1".into(),
                ip: Ipv4Addr::new(10, 0, 2, 10),
                role: simgen::Role::Client,
            },
            simgen::HostSpec {
                name: "pc-2".into(),
                ip: Ipv4Addr::new(10, 0, 2, 11),
                role: simgen::Role::Client,
            },
            simgen::HostSpec {
                name: "files".into(),
                ip: Ipv4Addr::new(10, 0, 1, 10),
                role: simgen::Role::Server,
            },
            simgen::HostSpec {
                name: "vault".into(),
                ip: Ipv4Addr::new(10, 0, 3, 10),
                role: simgen::Role::Backup,
            },
        ];
        spec.preferred = BTreeMap::from([
            ("pc-1".to_string(), vec!["files".to_string()]),
            ("pc-2".to_string(), vec!["files".to_string()]),
        ]);
        spec.oneoff = BTreeMap::new();
        spec.directory_server = None;
        spec.avoid = Vec::new();
        spec.infra_targets = Vec::new();
        spec.routines = Vec::new();
        simgen::generate_baseline(&spec, days, dir).unwrap();
        let mut identity = String::from("ip,name,from,to\n");
        for host in &spec.hosts {
            identity.push_str(&format!(
                "{},{},2018-03-01T00:00:00Z,2018-07-01T00:00:00Z\n",
                host.ip, host.name
            ));
        }
        fs::write(dir.join("identity.csv"), identity).unwrap();
        let config = r#"
[engine]
seed = 7
window_days = 4
history_days = 4
results = "results"

[identity]
map = "identity.csv"
internal_cidrs = ["10.0.0.0/8"]

[cidr_labels]
"10.0.1.0/24" = "Services"
"10.0.2.0/24" = "Users"
"10.0.3.0/24" = "Backup"

[ports]
data = [143, 445]
service = [123, 389]

[[source]]
kind = "flow"
path = "logs/flow"
columns = [
  "timestamp:timestamp",
  "src:ip-address",
  "dst:ip-address",
  "dst_port:integer",
  "protocol:string",
  "bytes_sent:integer",
  "bytes_received:integer",
]

[[source]]
kind = "dns"
path = "logs/dns"
columns = [
  "timestamp:timestamp",
  "src:ip-address",
  "query_type:string",
  "query_value:string",
]

[[source]]
kind = "proxy"
path = "logs/proxy"
columns = [
  "timestamp:timestamp",
  "src:ip-address",
  "external_host:string",
  "bytes_uploaded:integer",
  "bytes_downloaded:integer",
]
"#;
        fs::write(dir.join("config.toml"), config).unwrap();
        crate::config::EngineConfig::load(&dir.join("config.toml")).unwrap()
    }

    fn results_bytes(results: &Path) -> BTreeMap<String, Vec<u8>> {
        let mut out = BTreeMap::new();
        let mut stack = vec![results.to_path_buf()];
        while let Some(dir) = stack.pop() {
            for entry in fs::read_dir(&dir).unwrap() {
                let path = entry.unwrap().path();
                if path.is_dir() {
                    stack.push(path);
                } else {
                    let rel = path
                        .strip_prefix(results)
                        .unwrap()
                        .to_string_lossy()
                        .into_owned();
                    out.insert(rel, fs::read(&path).unwrap());
                }
            }
        }
        out
    }

    #[test]
    fn a_quiet_day_runs_clean_and_reruns_byte_identically() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_workspace(dir.path(), 9);
        let day = date("2018-04-03"); // ninth and last generated day
        let outcome = run_daily(&config, day).unwrap();
        assert_eq!(outcome.summary.day, day);
        assert_eq!(outcome.summary.trained_through, date("2018-04-02"));
        assert_eq!(outcome.summary.hosts_ranked, 4);
        assert!(outcome.cases.is_empty(), "baseline produced a case");
        assert!(outcome.summary.scores_written > 0);
        assert_eq!(outcome.summary.rejects, 0);
        // Nine generated days cover the needed range (the four-day scored
        // window, the four-day training window it nests, and four days of
        // history before each) exactly, so nothing is missing.
        assert!(outcome.summary.gaps.is_empty());

        let results = dir.path().join("results");
        let first = results_bytes(&results);
        let rerun = run_daily(&config, day).unwrap();
        assert_eq!(rerun.summary, outcome.summary);
        assert_eq!(first, results_bytes(&results));

        // The stored artifacts hold what the run reported.
        let store = Store::open(&results).unwrap();
        let ranking = store.load_ranking(day).unwrap().unwrap();
        assert_eq!(ranking.hosts.len(), 4);
        for target in Target::ALL {
            let model = store.load_model(day, target).unwrap().unwrap();
            assert_eq!(model.trained_through, date("2018-04-02"));
        }
        assert_eq!(store.load_run(day).unwrap().unwrap(), rerun.summary);
    }

    #[test]
    fn a_day_with_no_logs_at_all_succeeds_with_gap_warnings() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_workspace(dir.path(), 9);
        // Two days past the last generated day: the scored window has data,
        // the run day itself has none.
        let day = date("2018-04-05");
        let outcome = run_daily(&config, day).unwrap();
        assert!(outcome.summary.gaps.contains(&day));
        assert!(outcome
            .summary
            .warnings
            .iter()
            .any(|w| w.contains("2018-04-05")));
        assert!(outcome.cases.is_empty());
    }

    #[test]
    fn concurrent_runs_are_locked_out() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_workspace(dir.path(), 9);
        let store = Store::open(&config.engine.results).unwrap();
        let _held = store.lock().unwrap();
        let err = run_daily(&config, date("2018-04-03")).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }
}
