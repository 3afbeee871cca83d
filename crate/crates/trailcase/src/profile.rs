//! Windowed activity profiles: one modelling table per monitoring target,
//! joining each host's (or host/destination pair's) windowed value with
//! context columns — network segment, symmetric traffic, regular history,
//! and peer-group statistics for commonly contacted destinations.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use sparsefit::Table;

use crate::aggregate::{Aggregate, Target};
use crate::config::ModelSection;
use crate::error::Result;
use crate::identity::{cidr_label, Cidr, IdentityMap};

/// Identifies one profile row: a host, plus the destination for pair-level
/// targets.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ProfileKey {
    pub host: String,
    pub remote: Option<String>,
}

/// One monitoring target's modelling table over one window.
///
/// The `value` column holds the raw windowed quantity and is the designated
/// target. Volume-scaled context columns (`history`, `bytes_sent`,
/// `dest_*`) are carried as `log(1 + x)`; gated-off context is a missing
/// cell, which downstream encoders treat as a contribution of zero. The
/// `history_regular` marker says whether the gate opened for the row.
#[derive(Debug, Clone)]
pub struct ProfileTable {
    pub target: Target,
    /// Inclusive day range the values cover.
    pub window: (NaiveDate, NaiveDate),
    pub table: Table,
    /// Row-aligned identities.
    pub keys: Vec<ProfileKey>,
    /// Days inside the window with no data at all.
    pub gaps: Vec<NaiveDate>,
}

/// Peer-group summary for a destination contacted by many machines.
#[derive(Debug, Clone, PartialEq)]
pub struct CommonDestinationStats {
    pub client_count: usize,
    pub median_bytes: f64,
    pub iqr_bytes: f64,
}

/// Dailies covering one inclusive day range, with absent days meaning zero
/// activity.
#[derive(Debug, Clone, Copy)]
pub struct WindowSlice<'a> {
    pub range: (NaiveDate, NaiveDate),
    pub dailies: &'a [(NaiveDate, &'a Aggregate)],
}

impl WindowSlice<'_> {
    fn day_count(&self) -> usize {
        (self.range.1 - self.range.0).num_days() as usize + 1
    }

    fn gaps(&self) -> Vec<NaiveDate> {
        let mut out = Vec::new();
        let mut day = self.range.0;
        while day <= self.range.1 {
            if !self.dailies.iter().any(|(d, _)| *d == day) {
                out.push(day);
            }
            day = day.succ_opt().unwrap();
        }
        out
    }
}

/// Median (mean of the two middle values when even) of an unsorted slice.
pub fn median(values: &[f64]) -> Option<f64> {
    sparsefit::transform::median(values)
}

/// Quantile by linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Some(sorted[lo] * (1.0 - frac) + sorted[hi] * frac)
}

/// Opens when the daily series is both persistent (active on at least
/// `min_active_fraction` of days) and steady (coefficient of variation at
/// most `max_cv`). Scattered spikes fail the persistence test; erratic
/// volumes fail the steadiness test.
pub fn history_gate(daily: &[f64], min_active_fraction: f64, max_cv: f64) -> bool {
    if daily.is_empty() {
        return false;
    }
    let n = daily.len() as f64;
    let active = daily.iter().filter(|v| **v > 0.0).count() as f64;
    if active / n < min_active_fraction {
        return false;
    }
    let mean = daily.iter().sum::<f64>() / n;
    if mean <= 0.0 {
        return false;
    }
    let var = daily.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean <= max_cv
}

/// Peer-group statistics for every destination contacted by at least
/// `min_clients` hosts in the window, from per-host windowed volumes.
pub fn common_destination_stats(
    window: &Aggregate,
    target: Target,
    min_clients: usize,
) -> BTreeMap<String, CommonDestinationStats> {
    let mut per_dest: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for activity in window.hosts.values() {
        for (dest, bytes) in activity.pair_values(target) {
            per_dest.entry(dest).or_default().push(*bytes as f64);
        }
    }
    per_dest
        .into_iter()
        .filter(|(_, volumes)| volumes.len() >= min_clients)
        .map(|(dest, mut volumes)| {
            volumes.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let stats = CommonDestinationStats {
                client_count: volumes.len(),
                median_bytes: median(&volumes).unwrap(),
                iqr_bytes: quantile(&volumes, 0.75).unwrap() - quantile(&volumes, 0.25).unwrap(),
            };
            (dest.to_string(), stats)
        })
        .collect()
}

fn log1p(x: f64) -> f64 {
    x.ln_1p()
}

/// Daily series (absent days as zero) of one key's target value across a
/// window slice.
fn daily_series(slice: &WindowSlice<'_>, key: &ProfileKey, target: Target) -> Vec<f64> {
    let mut series = vec![0.0; slice.day_count()];
    for (day, agg) in slice.dailies {
        let idx = (*day - slice.range.0).num_days() as usize;
        let Some(activity) = agg.hosts.get(&key.host) else { continue };
        series[idx] = match &key.remote {
            None => activity.target_value(target),
            Some(remote) => activity
                .pair_values(target)
                .get(remote)
                .copied()
                .unwrap_or(0) as f64,
        };
    }
    series
}

/// The gated history context for one key: the merged value over the history
/// window when the daily series was regular, absent otherwise.
fn gated_history(
    history: &WindowSlice<'_>,
    merged_history: &Aggregate,
    key: &ProfileKey,
    target: Target,
    model: &ModelSection,
) -> Option<f64> {
    let series = daily_series(history, key, target);
    if !history_gate(&series, model.min_active_fraction, model.max_cv) {
        return None;
    }
    let activity = merged_history.hosts.get(&key.host)?;
    let value = match &key.remote {
        None => activity.target_value(target),
        Some(remote) => *activity.pair_values(target).get(remote)? as f64,
    };
    Some(value)
}

/// Builds the modelling table for one target over one window, with context
/// drawn from the preceding history window.
pub fn build_profiles(
    target: Target,
    window: WindowSlice<'_>,
    history: WindowSlice<'_>,
    labels: &[(Cidr, String)],
    idmap: &IdentityMap,
    model: &ModelSection,
) -> Result<ProfileTable> {
    let merged_window = Aggregate::merged(window.dailies.iter().map(|(_, a)| *a));
    let merged_history = Aggregate::merged(history.dailies.iter().map(|(_, a)| *a));
    let label_at = window
        .range
        .1
        .and_hms_opt(12, 0, 0)
        .expect("noon exists")
        .and_utc();

    let mut keys = Vec::new();
    let mut values = Vec::new();
    if target.per_destination() {
        for (host, activity) in &merged_window.hosts {
            for (remote, bytes) in activity.pair_values(target) {
                keys.push(ProfileKey {
                    host: host.clone(),
                    remote: Some(remote.clone()),
                });
                values.push(*bytes as f64);
            }
        }
    } else {
        for (host, activity) in &merged_window.hosts {
            keys.push(ProfileKey {
                host: host.clone(),
                remote: None,
            });
            values.push(activity.target_value(target));
        }
    }

    let host_label = |host: &str| Some(cidr_label(host, label_at, labels, idmap));
    let mut table = Table::new();
    table.add_str("host", keys.iter().map(|k| Some(k.host.clone())).collect())?;
    table.add_str(
        "cidr_label",
        keys.iter().map(|k| host_label(&k.host)).collect(),
    )?;

    if target.per_destination() {
        table.add_str(
            "remote",
            keys.iter().map(|k| k.remote.clone()).collect(),
        )?;
        if target == Target::BytesConsumed {
            // Internal pairs carry the remote's segment and the symmetric
            // push volume; external clusters have neither.
            table.add_str(
                "remote_label",
                keys.iter()
                    .map(|k| host_label(k.remote.as_ref().unwrap()))
                    .collect(),
            )?;
            table.add_num(
                "bytes_sent",
                keys.iter()
                    .map(|k| {
                        let pushed = merged_window.hosts[&k.host]
                            .sent
                            .get(k.remote.as_ref().unwrap())
                            .copied()
                            .unwrap_or(0);
                        Some(log1p(pushed as f64))
                    })
                    .collect(),
            )?;
        }
        let dest_stats = common_destination_stats(&merged_window, target, model.min_clients);
        let stat = |k: &ProfileKey| dest_stats.get(k.remote.as_ref().unwrap().as_str());
        table.add_num(
            "dest_clients",
            keys.iter()
                .map(|k| stat(k).map(|s| log1p(s.client_count as f64)))
                .collect(),
        )?;
        table.add_num(
            "dest_median",
            keys.iter()
                .map(|k| stat(k).map(|s| log1p(s.median_bytes)))
                .collect(),
        )?;
        table.add_num(
            "dest_iqr",
            keys.iter()
                .map(|k| stat(k).map(|s| log1p(s.iqr_bytes)))
                .collect(),
        )?;
    }

    let history_values: Vec<Option<f64>> = keys
        .iter()
        .map(|k| gated_history(&history, &merged_history, k, target, model).map(log1p))
        .collect();
    table.add_num("history", history_values.clone())?;
    // A linear term on a sometimes-absent column cannot also learn an
    // offset for the rows where it is absent; this marker carries that
    // offset so regular history can act at full strength.
    table.add_str(
        "history_regular",
        history_values
            .iter()
            .map(|v| {
                Some(if v.is_some() { "regular" } else { "irregular" }.to_string())
            })
            .collect(),
    )?;
    table.add_num("value", values.iter().copied().map(Some).collect())?;
    table.set_target("value")?;

    Ok(ProfileTable {
        target,
        window: window.range,
        table,
        keys,
        gaps: window.gaps(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregate::{aggregate_day, PortGroupPolicy};
    use crate::ingest::{Endpoint, Flow, Protocol, Records};

    fn policy() -> PortGroupPolicy {
        PortGroupPolicy::new([445].into_iter().collect(), Default::default()).unwrap()
    }

    fn day(n: u64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2018, 4, 1).unwrap() + chrono::Days::new(n)
    }

    fn pull_flow(d: NaiveDate, host: &str, remote: &str, bytes: u64) -> Flow {
        Flow {
            timestamp: d.and_hms_opt(8, 0, 0).unwrap().and_utc(),
            src: Endpoint::Internal(host.into()),
            dst: Endpoint::Internal(remote.into()),
            dst_port: 445,
            protocol: Protocol::Tcp,
            bytes_sent: 64,
            bytes_received: bytes,
        }
    }

    fn model_section() -> ModelSection {
        ModelSection {
            min_clients: 3,
            ..ModelSection::default()
        }
    }

    fn build_daily(d: NaiveDate, flows: Vec<Flow>) -> Aggregate {
        aggregate_day(d, &[&Records::Flow(flows)], &policy(), &[]).unwrap()
    }

    #[test]
    fn gate_opens_for_steady_series_and_closes_for_spikes() {
        let steady = vec![10.0; 28];
        assert!(history_gate(&steady, 0.8, 0.5));
        let mut spiky = vec![0.0; 28];
        spiky[3] = 3e9;
        spiky[11] = 2.5e9;
        spiky[20] = 3.1e9;
        assert!(!history_gate(&spiky, 0.8, 0.5));
        // Persistent but erratic volumes also fail.
        let erratic: Vec<f64> = (0..28).map(|i| if i % 2 == 0 { 1.0 } else { 100.0 }).collect();
        assert!(!history_gate(&erratic, 0.8, 0.5));
        // A repeating weekly pattern with modest swing passes.
        let weekly: Vec<f64> = (0..28).map(|i| if i % 7 < 5 { 10.0 } else { 6.0 }).collect();
        assert!(history_gate(&weekly, 0.8, 0.5));
    }

    #[test]
    fn peer_stats_report_median_and_spread_once_enough_clients() {
        let d = day(30);
        let flows: Vec<Flow> = (1..=40)
            .map(|i| pull_flow(d, &format!("h{i:02}"), "srv", i * 1_000_000))
            .collect();
        let window = build_daily(d, flows);
        let stats = common_destination_stats(&window, Target::BytesConsumed, 10);
        let srv = &stats["srv"];
        assert_eq!(srv.client_count, 40);
        assert!((srv.median_bytes - 20_500_000.0).abs() < 1e-6);
        // Quartiles by interpolation: q25 at position 9.75, q75 at 29.25.
        assert!((srv.iqr_bytes - (30_250_000.0 - 10_750_000.0)).abs() < 1e-6);
        // Below the client floor nothing is emitted.
        assert!(common_destination_stats(&window, Target::BytesConsumed, 41).is_empty());
    }

    #[test]
    fn history_column_carries_constant_history_and_drops_spiky_history() {
        // Steady host: same three neighbors every history day.
        // Spiky host: three isolated bursts.
        let history_days: Vec<NaiveDate> = (0..28).map(day).collect();
        let dailies: Vec<Aggregate> = history_days
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let mut flows = vec![
                    pull_flow(*d, "steady", "s1", 100),
                    pull_flow(*d, "steady", "s2", 100),
                    pull_flow(*d, "steady", "s3", 100),
                ];
                if [3, 11, 20].contains(&i) {
                    for n in 0..9 {
                        flows.push(pull_flow(*d, "spiky", &format!("x{n}"), 100));
                    }
                }
                build_daily(*d, flows)
            })
            .collect();
        let history_refs: Vec<(NaiveDate, &Aggregate)> = history_days
            .iter()
            .copied()
            .zip(dailies.iter())
            .collect();
        let scored_day = day(28);
        let scored = build_daily(
            scored_day,
            vec![
                pull_flow(scored_day, "steady", "s1", 100),
                pull_flow(scored_day, "spiky", "x0", 100),
            ],
        );
        let window_refs = vec![(scored_day, &scored)];
        let profiles = build_profiles(
            Target::NeighborsTotal,
            WindowSlice {
                range: (scored_day, scored_day),
                dailies: &window_refs,
            },
            WindowSlice {
                range: (history_days[0], history_days[27]),
                dailies: &history_refs,
            },
            &[],
            &IdentityMap::default(),
            &model_section(),
        )
        .unwrap();

        let row_of = |host: &str| {
            profiles
                .keys
                .iter()
                .position(|k| k.host == host)
                .unwrap()
        };
        let history_col = |row: usize| match profiles.table.value("history", row).unwrap() {
            sparsefit::Value::Num(x) => Some(x),
            sparsefit::Value::Missing => None,
            other => panic!("unexpected cell {other:?}"),
        };
        // Constant three-neighbor history: present, and inverting the
        // volume scaling recovers exactly 3.
        let steady_history = history_col(row_of("steady")).unwrap();
        assert!((steady_history.exp_m1() - 3.0).abs() < 1e-9);
        // Three historical spikes: absent.
        assert_eq!(history_col(row_of("spiky")), None);
    }

    #[test]
    fn pair_rows_cover_active_pairs_with_symmetric_context() {
        let d = day(40);
        let mut flows = vec![pull_flow(d, "ws", "srv", 5_000)];
        flows.push(Flow {
            bytes_sent: 700,
            bytes_received: 0,
            ..pull_flow(d, "ws", "srv", 0)
        });
        let agg = build_daily(d, flows);
        let window_refs = vec![(d, &agg)];
        let profiles = build_profiles(
            Target::BytesConsumed,
            WindowSlice {
                range: (d, d),
                dailies: &window_refs,
            },
            WindowSlice {
                range: (day(12), day(39)),
                dailies: &[],
            },
            &[],
            &IdentityMap::default(),
            &model_section(),
        )
        .unwrap();
        // Pairs: ws pulled from srv, and srv absorbed ws's pushes.
        assert_eq!(profiles.keys.len(), 2);
        let ws_row = profiles
            .keys
            .iter()
            .position(|k| k.host == "ws" && k.remote.as_deref() == Some("srv"))
            .unwrap();
        match profiles.table.value("bytes_sent", ws_row).unwrap() {
            sparsefit::Value::Num(x) => {
                assert!((x.exp_m1() - 764.0).abs() < 1e-9) // 64 + 700 pushed
            }
            other => panic!("unexpected cell {other:?}"),
        }
        match profiles.table.value("value", ws_row).unwrap() {
            sparsefit::Value::Num(x) => assert_eq!(x, 5_000.0),
            other => panic!("unexpected cell {other:?}"),
        }
        // An empty history window gates everything off.
        match profiles.table.value("history", ws_row).unwrap() {
            sparsefit::Value::Missing => {}
            other => panic!("expected absent history, got {other:?}"),
        }
    }

    #[test]
    fn window_gaps_are_recorded() {
        let d0 = day(50);
        let d2 = day(52);
        let a0 = build_daily(d0, vec![pull_flow(d0, "a", "b", 10)]);
        let a2 = build_daily(d2, vec![pull_flow(d2, "a", "b", 10)]);
        let refs = vec![(d0, &a0), (d2, &a2)];
        let profiles = build_profiles(
            Target::NeighborsTotal,
            WindowSlice {
                range: (d0, d2),
                dailies: &refs,
            },
            WindowSlice {
                range: (day(22), day(49)),
                dailies: &[],
            },
            &[],
            &IdentityMap::default(),
            &model_section(),
        )
        .unwrap();
        assert_eq!(profiles.gaps, vec![day(51)]);
    }
}
