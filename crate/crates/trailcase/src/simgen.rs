//! Synthetic log-corpus generation: multi-week business-as-usual traffic for
//! a small network, plus an injectable staged campaign (scan, collect, stage
//! move, exfiltrate). Output is the exact date-partitioned flow/DNS/proxy
//! layout the ingest stage consumes, deterministic per seed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};

use chrono::{Days, NaiveDate};
use flate2::write::GzEncoder;
use flate2::Compression;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::error::{io_err, EngineError, Result};
use crate::ingest::SourceKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Client,
    Server,
    Backup,
    Infrastructure,
}

#[derive(Debug, Clone)]
pub struct HostSpec {
    pub name: String,
    pub ip: Ipv4Addr,
    pub role: Role,
}

/// Sizes and cadences of routine traffic. Volumes are log-normal: `median`
/// scales the distribution, `noise` is the day-to-day log spread, and
/// `spread` fields are per-pair base offsets fixed for the whole corpus.
#[derive(Debug, Clone)]
pub struct VolumeProfile {
    pub client_pull_median: f64,
    pub client_pull_noise: f64,
    pub pair_spread: f64,
    /// Request bytes as a fraction of pulled bytes.
    pub request_ratio: f64,
    /// Daily directory-lookup response size.
    pub directory_bytes: f64,
    pub backup_pull_median: f64,
    pub backup_pull_noise: f64,
    pub backup_pair_spread: f64,
    pub backup_request_bytes: f64,
    pub routine_request_ratio: f64,
    pub client_ptr_set: (usize, usize),
    pub client_ptr_daily: (u32, u32),
    pub infra_ptr_set: (usize, usize),
    pub infra_ptr_daily: (u32, u32),
}

/// External destinations and their visit patterns.
#[derive(Debug, Clone)]
pub struct DomainProfile {
    pub storage_domain: String,
    pub storage_median: f64,
    pub storage_noise: f64,
    pub storage_spread: f64,
    pub mail_domain: String,
    pub mail_median: f64,
    pub mail_noise: f64,
    pub mail_spread: f64,
    /// Shared pool of leisure domains; each is assigned to two clients.
    pub personal_pool: Vec<String>,
    pub personal_visit_probability: f64,
    pub personal_median: f64,
    pub personal_noise: f64,
    pub personal_spread: f64,
    /// Chance per client per day of one never-seen-again destination.
    pub fresh_probability: f64,
    pub fresh_median: f64,
    pub fresh_noise: f64,
    /// Hit daily by every non-client machine.
    pub update_domains: Vec<String>,
    pub update_median: f64,
    pub update_noise: f64,
    pub update_spread: f64,
    /// Downloads are this multiple of uploads (flavour only; the engine
    /// models uploads).
    pub download_factor: f64,
}

/// One recurring internal pull between named machines.
#[derive(Debug, Clone)]
pub struct Routine {
    pub actor: String,
    pub source: String,
    pub median_bytes: f64,
    pub noise: f64,
    pub port: u16,
}

/// Everything the generator needs: the machine population and its habits.
#[derive(Debug, Clone)]
pub struct NetworkSpec {
    pub seed: u64,
    pub start: NaiveDate,
    pub hosts: Vec<HostSpec>,
    /// Client → servers pulled from near-daily.
    pub preferred: BTreeMap<String, Vec<String>>,
    /// Server answering small daily directory lookups from clients.
    pub directory_server: Option<String>,
    pub directory_port: u16,
    /// Pairs that never talk in the baseline.
    pub avoid: Vec<(String, String)>,
    /// Per-server pull port; anything absent uses 445.
    pub pull_ports: BTreeMap<String, u16>,
    /// Servers polled by infrastructure hosts.
    pub infra_targets: Vec<String>,
    pub infra_port: u16,
    pub routines: Vec<Routine>,
    pub volumes: VolumeProfile,
    pub domains: DomainProfile,
}

impl NetworkSpec {
    pub fn host(&self, name: &str) -> Option<&HostSpec> {
        self.hosts.iter().find(|h| h.name == name)
    }

    fn require(&self, name: &str, what: &str) -> Result<&HostSpec> {
        self.host(name)
            .ok_or_else(|| EngineError::Config(format!("{what} names unknown host '{name}'")))
    }

    fn avoids(&self, a: &str, b: &str) -> bool {
        self.avoid
            .iter()
            .any(|(x, y)| (x == a && y == b) || (x == b && y == a))
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = BTreeSet::new();
        for host in &self.hosts {
            if !names.insert(host.name.as_str()) {
                return Err(EngineError::Config(format!(
                    "duplicate host name '{}'",
                    host.name
                )));
            }
        }
        for (client, servers) in &self.preferred {
            self.require(client, "preferred")?;
            for s in servers {
                self.require(s, "preferred")?;
            }
        }
        if let Some(d) = &self.directory_server {
            self.require(d, "directory_server")?;
        }
        for t in &self.infra_targets {
            self.require(t, "infra_targets")?;
        }
        for r in &self.routines {
            self.require(&r.actor, "routine")?;
            self.require(&r.source, "routine")?;
        }
        let v = &self.volumes;
        let d = &self.domains;
        let finite_positive = [
            v.client_pull_median,
            v.directory_bytes,
            v.oneoff_median,
            v.backup_pull_median,
            v.backup_request_bytes,
            d.storage_median,
            d.mail_median,
            d.personal_median,
            d.fresh_median,
            d.update_median,
            d.download_factor,
        ];
        if finite_positive.iter().any(|x| !x.is_finite() || *x <= 0.0) {
            return Err(EngineError::Config(
                "volume medians must be positive and finite".into(),
            ));
        }
        if self.volumes.oneoff_period_days < 1 {
            return Err(EngineError::Config(
                "oneoff_period_days must be at least 1".into(),
            ));
        }
        for p in [d.personal_visit_probability, d.fresh_probability] {
            if !(0.0..=1.0).contains(&p) {
                return Err(EngineError::Config(
                    "visit probabilities must lie in [0, 1]".into(),
                ));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Campaign scripts.

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ActionKind {
    /// Probe `count` addresses under `prefix` on every listed port.
    Scan {
        prefix: String,
        count: u32,
        ports: Vec<u16>,
    },
    /// Pull `bytes` from another machine to the actor.
    Collect { from: String, bytes: u64 },
    /// Move already-collected data one hop onward (same mechanics as a
    /// collect; named separately to keep scripts readable).
    StageMove { from: String, bytes: u64 },
    /// Upload `bytes` to an external destination.
    Exfil { destination: String, bytes: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Action {
    /// 1-based day within the generated range.
    pub day: u32,
    pub actor: String,
    pub kind: ActionKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CampaignScript {
    pub actions: Vec<Action>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(default, rename = "action")]
    actions: Vec<RawAction>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAction {
    day: u32,
    actor: String,
    kind: String,
    prefix: Option<String>,
    count: Option<u32>,
    ports: Option<Vec<u16>>,
    from: Option<String>,
    bytes: Option<u64>,
    destination: Option<String>,
}

impl CampaignScript {
    pub fn parse(text: &str) -> Result<CampaignScript> {
        let raw: RawScenario =
            toml::from_str(text).map_err(|e| EngineError::Config(format!("scenario: {e}")))?;
        let mut actions = Vec::new();
        for (i, a) in raw.actions.iter().enumerate() {
            let ctx = format!("scenario action {}", i + 1);
            let need = |field: &str| EngineError::Config(format!("{ctx}: missing '{field}'"));
            let kind = match a.kind.as_str() {
                "scan" => ActionKind::Scan {
                    prefix: a.prefix.clone().ok_or_else(|| need("prefix"))?,
                    count: a.count.ok_or_else(|| need("count"))?,
                    ports: a.ports.clone().ok_or_else(|| need("ports"))?,
                },
                "collect" => ActionKind::Collect {
                    from: a.from.clone().ok_or_else(|| need("from"))?,
                    bytes: a.bytes.ok_or_else(|| need("bytes"))?,
                },
                "stage_move" => ActionKind::StageMove {
                    from: a.from.clone().ok_or_else(|| need("from"))?,
                    bytes: a.bytes.ok_or_else(|| need("bytes"))?,
                },
                "exfil" => ActionKind::Exfil {
                    destination: a.destination.clone().ok_or_else(|| need("destination"))?,
                    bytes: a.bytes.ok_or_else(|| need("bytes"))?,
                },
                other => {
                    return Err(EngineError::Config(format!(
                        "{ctx}: unknown kind '{other}'"
                    )))
                }
            };
            actions.push(Action {
                day: a.day,
                actor: a.actor.clone(),
                kind,
            });
        }
        Ok(CampaignScript { actions })
    }

    pub fn load(path: &Path) -> Result<CampaignScript> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        CampaignScript::parse(&text)
    }

    fn validate(&self, spec: &NetworkSpec, days: u32) -> Result<()> {
        for action in &self.actions {
            if action.day < 1 || action.day > days {
                return Err(EngineError::Config(format!(
                    "scenario day {} is outside the generated range 1..={days}",
                    action.day
                )));
            }
            spec.require(&action.actor, "scenario actor")?;
            match &action.kind {
                ActionKind::Scan { prefix, count, ports } => {
                    if format!("{prefix}1").parse::<Ipv4Addr>().is_err() {
                        return Err(EngineError::Config(format!(
                            "scan prefix '{prefix}' does not form addresses"
                        )));
                    }
                    if *count == 0 || ports.is_empty() {
                        return Err(EngineError::Config(
                            "scan needs a positive count and at least one port".into(),
                        ));
                    }
                }
                ActionKind::Collect { from, .. } | ActionKind::StageMove { from, .. } => {
                    spec.require(from, "scenario source")?;
                }
                ActionKind::Exfil { .. } => {}
            }
        }
        Ok(())
    }
}

/// Renders a script in the scenario file format.
pub fn render_scenario(script: &CampaignScript) -> String {
    let mut out = String::new();
    for action in &script.actions {
        let _ = writeln!(out, "[[action]]");
        let _ = writeln!(out, "day = {}", action.day);
        let _ = writeln!(out, "actor = \"{}\"", action.actor);
        match &action.kind {
            ActionKind::Scan { prefix, count, ports } => {
                let _ = writeln!(out, "kind = \"scan\"");
                let _ = writeln!(out, "prefix = \"{prefix}\"");
                let _ = writeln!(out, "count = {count}");
                let ports: Vec<String> = ports.iter().map(u16::to_string).collect();
                let _ = writeln!(out, "ports = [{}]", ports.join(", "));
            }
            ActionKind::Collect { from, bytes } => {
                let _ = writeln!(out, "kind = \"collect\"");
                let _ = writeln!(out, "from = \"{from}\"");
                let _ = writeln!(out, "bytes = {bytes}");
            }
            ActionKind::StageMove { from, bytes } => {
                let _ = writeln!(out, "kind = \"stage_move\"");
                let _ = writeln!(out, "from = \"{from}\"");
                let _ = writeln!(out, "bytes = {bytes}");
            }
            ActionKind::Exfil { destination, bytes } => {
                let _ = writeln!(out, "kind = \"exfil\"");
                let _ = writeln!(out, "destination = \"{destination}\"");
                let _ = writeln!(out, "bytes = {bytes}");
            }
        }
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// Generation.

/// A generated corpus: `root` contains `logs/{flow,dns,proxy}`.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub root: PathBuf,
    pub start: NaiveDate,
    pub days: u32,
}

impl Corpus {
    pub fn logs(&self) -> PathBuf {
        self.root.join("logs")
    }

    pub fn day(&self, n: u32) -> NaiveDate {
        self.start + Days::new(u64::from(n - 1))
    }
}

/// Deterministic substream: one generator per (seed, purpose) tuple, so
/// hosts and days can be produced in any order with identical results.
fn stream(seed: u64, parts: &[&str]) -> ChaCha8Rng {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |byte: u8| {
        h ^= u64::from(byte);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    };
    for byte in seed.to_le_bytes() {
        eat(byte);
    }
    for part in parts {
        for byte in part.bytes() {
            eat(byte);
        }
        eat(0xff);
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// Box-Muller transform: two uniform draws to one standard Gaussian.
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Log-normal volume: `median`-scaled with daily log spread `noise`.
fn volume(rng: &mut ChaCha8Rng, median: f64, noise: f64) -> u64 {
    (median * (noise * standard_normal(rng)).exp()).round().max(1.0) as u64
}

/// Per-pair base offset, constant across the corpus lifetime.
fn pair_base(seed: u64, tag: &str, a: &str, b: &str, median: f64, spread: f64) -> f64 {
    let mut rng = stream(seed, &["pair", tag, a, b]);
    median * (spread * standard_normal(&mut rng)).exp()
}

fn timestamp(rng: &mut ChaCha8Rng, day: NaiveDate) -> String {
    let h: u32 = rng.gen_range(8..18);
    let m: u32 = rng.gen_range(0..60);
    let s: u32 = rng.gen_range(0..60);
    format!("{}T{h:02}:{m:02}:{s:02}Z", day.format("%Y-%m-%d"))
}

fn reverse_name(ip: Ipv4Addr) -> String {
    let o = ip.octets();
    format!("{}.{}.{}.{}.in-addr.arpa", o[3], o[2], o[1], o[0])
}

const FLOW_HEADER: &str = "timestamp,src,dst,dst_port,protocol,bytes_sent,bytes_received";
const DNS_HEADER: &str = "timestamp,src,query_type,query_value";
const PROXY_HEADER: &str = "timestamp,src,external_host,bytes_uploaded,bytes_downloaded";

struct DayLines {
    flow: Vec<String>,
    dns: Vec<String>,
    proxy: Vec<String>,
}

/// Clients assigned to each personal domain: a fixed rule giving every
/// domain in the pool exactly two visitors.
fn personal_clients(domain_index: usize, client_count: usize) -> Vec<usize> {
    if client_count == 0 {
        return Vec::new();
    }
    if client_count == 1 {
        return vec![0];
    }
    let first = domain_index % client_count;
    let second = (domain_index + 1 + domain_index % 5) % client_count;
    vec![first, second]
}

fn generate_day(spec: &NetworkSpec, day_index: u32, day: NaiveDate) -> DayLines {
    let mut lines = DayLines {
        flow: Vec::new(),
        dns: Vec::new(),
        proxy: Vec::new(),
    };
    let stamp = day.format("%Y%m%d").to_string();
    let v = &spec.volumes;
    let d = &spec.domains;
    let clients: Vec<&HostSpec> = spec
        .hosts
        .iter()
        .filter(|h| h.role == Role::Client)
        .collect();
    let seed = spec.seed;

    let pull_port = |server: &str| spec.pull_ports.get(server).copied().unwrap_or(445);

    for host in &spec.hosts {
        let mut rng = stream(seed, &["day", &stamp, &host.name]);
        match host.role {
            Role::Client => {
                let client_index = clients
                    .iter()
                    .position(|c| c.name == host.name)
                    .unwrap_or(0);
                // Near-daily pulls from the preferred servers.
                for server in spec.preferred.get(&host.name).into_iter().flatten() {
                    if spec.avoids(&host.name, server) {
                        continue;
                    }
                    let active = rng.gen_bool(0.95);
                    let base = pair_base(
                        seed,
                        "pull",
                        &host.name,
                        server,
                        v.client_pull_median,
                        v.pair_spread,
                    );
                    if !active {
                        continue;
                    }
                    let server_ip = spec.host(server).map(|s| s.ip).unwrap_or(host.ip);
                    let br = volume(&mut rng, base, v.client_pull_noise);
                    let bs = ((br as f64) * v.request_ratio).round().max(1.0) as u64;
                    let ts = timestamp(&mut rng, day);
                    lines.flow.push(format!(
                        "{ts},{},{server_ip},{},TCP,{bs},{br}",
                        host.ip,
                        pull_port(server)
                    ));
                }
                // Small daily directory lookup.
                if let Some(dir) = &spec.directory_server {
                    if !spec.avoids(&host.name, dir) {
                        if let Some(dir_host) = spec.host(dir) {
                            let br = volume(&mut rng, v.directory_bytes, 0.15);
                            let bs = (br / 10).max(1);
                            let ts = timestamp(&mut rng, day);
                            lines.flow.push(format!(
                                "{ts},{},{},{},TCP,{bs},{br}",
                                host.ip, dir_host.ip, spec.directory_port
                            ));
                        }
                    }
                }
                // One-off fetch on its cadence.
                if let Some(server) = spec.oneoff.get(&host.name) {
                    if !spec.avoids(&host.name, server) {
                        let offset = stream(seed, &["oneoff", &host.name, server])
                            .gen_range(0..v.oneoff_period_days);
                        if i64::from(day_index) % v.oneoff_period_days == offset {
                            if let Some(server_host) = spec.host(server) {
                                let br = volume(&mut rng, v.oneoff_median, v.oneoff_noise);
                                let bs = ((br as f64) * v.request_ratio).round().max(1.0) as u64;
                                let ts = timestamp(&mut rng, day);
                                lines.flow.push(format!(
                                    "{ts},{},{},445,TCP,{bs},{br}",
                                    host.ip, server_host.ip
                                ));
                            }
                        }
                    }
                }
                // Reverse lookups over a stable monitoring set.
                let set_size = {
                    let mut r = stream(seed, &["ptrset", &host.name]);
                    r.gen_range(v.client_ptr_set.0..=v.client_ptr_set.1)
                };
                push_ptr_lookups(&mut lines.dns, spec, host, set_size, v.client_ptr_daily, day, &mut rng);
                // Name lookups for the day's leisure browsing (flavour).
                for _ in 0..rng.gen_range(2..5u32) {
                    if d.personal_pool.is_empty() {
                        break;
                    }
                    let domain = &d.personal_pool[rng.gen_range(0..d.personal_pool.len())];
                    let ts = timestamp(&mut rng, day);
                    lines.dns.push(format!("{ts},{},A,{domain}", host.ip));
                }
                // Cloud backup and mail attachments, daily.
                for (domain, median, noise, spread) in [
                    (&d.storage_domain, d.storage_median, d.storage_noise, d.storage_spread),
                    (&d.mail_domain, d.mail_median, d.mail_noise, d.mail_spread),
                ] {
                    let base = pair_base(seed, "proxy", &host.name, domain, median, spread);
                    let up = volume(&mut rng, base, noise);
                    let down = ((up as f64) * d.download_factor).round() as u64;
                    let ts = timestamp(&mut rng, day);
                    lines.proxy.push(format!("{ts},{},{domain},{up},{down}", host.ip));
                }
                // Leisure domains shared with one other client.
                for (i, domain) in d.personal_pool.iter().enumerate() {
                    if !personal_clients(i, clients.len()).contains(&client_index) {
                        continue;
                    }
                    if !rng.gen_bool(d.personal_visit_probability) {
                        continue;
                    }
                    let base = pair_base(seed, "proxy", &host.name, domain, d.personal_median, d.personal_spread);
                    let up = volume(&mut rng, base, d.personal_noise);
                    let down = ((up as f64) * d.download_factor).round() as u64;
                    let ts = timestamp(&mut rng, day);
                    lines.proxy.push(format!("{ts},{},{domain},{up},{down}", host.ip));
                }
                // Occasionally a destination nobody visits twice.
                if rng.gen_bool(d.fresh_probability) {
                    let domain = format!("promo-d{day_index}-c{client_index}.example");
                    let up = volume(&mut rng, d.fresh_median, d.fresh_noise);
                    let down = ((up as f64) * d.download_factor).round() as u64;
                    let ts = timestamp(&mut rng, day);
                    lines.proxy.push(format!("{ts},{},{domain},{up},{down}", host.ip));
                }
            }
            Role::Backup => {
                // Nightly pull from every other machine.
                for other in &spec.hosts {
                    if other.name == host.name {
                        continue;
                    }
                    let base = pair_base(
                        seed,
                        "backup",
                        &host.name,
                        &other.name,
                        v.backup_pull_median,
                        v.backup_pair_spread,
                    );
                    let br = volume(&mut rng, base, v.backup_pull_noise);
                    let bs = volume(&mut rng, v.backup_request_bytes, 0.2);
                    let ts = timestamp(&mut rng, day);
                    lines
                        .flow
                        .push(format!("{ts},{},{},445,TCP,{bs},{br}", host.ip, other.ip));
                }
            }
            Role::Infrastructure => {
                for target in &spec.infra_targets {
                    if let Some(t) = spec.host(target) {
                        let bs = volume(&mut rng, 480.0, 0.1);
                        let br = volume(&mut rng, 480.0, 0.1);
                        let ts = timestamp(&mut rng, day);
                        lines.flow.push(format!(
                            "{ts},{},{},{},UDP,{bs},{br}",
                            host.ip, t.ip, spec.infra_port
                        ));
                    }
                }
                let set_size = {
                    let mut r = stream(seed, &["ptrset", &host.name]);
                    r.gen_range(v.infra_ptr_set.0..=v.infra_ptr_set.1)
                };
                push_ptr_lookups(&mut lines.dns, spec, host, set_size, v.infra_ptr_daily, day, &mut rng);
            }
            Role::Server => {}
        }
        // Every non-client box phones home to the update services.
        if host.role != Role::Client {
            for domain in &d.update_domains {
                let base = pair_base(seed, "proxy", &host.name, domain, d.update_median, d.update_spread);
                let up = volume(&mut rng, base, d.update_noise);
                let down = ((up as f64) * d.download_factor).round() as u64;
                let ts = timestamp(&mut rng, day);
                lines.proxy.push(format!("{ts},{},{domain},{up},{down}", host.ip));
            }
        }
    }
    // Server-to-server routines.
    for routine in &spec.routines {
        let (Some(actor), Some(source)) = (spec.host(&routine.actor), spec.host(&routine.source))
        else {
            continue;
        };
        let mut rng = stream(seed, &["routine", &stamp, &routine.actor, &routine.source]);
        let br = volume(&mut rng, routine.median_bytes, routine.noise);
        let bs = ((br as f64) * v.routine_request_ratio).round().max(1.0) as u64;
        let ts = timestamp(&mut rng, day);
        lines.flow.push(format!(
            "{ts},{},{},{},TCP,{bs},{br}",
            actor.ip, source.ip, routine.port
        ));
    }
    lines
}

fn push_ptr_lookups(
    dns: &mut Vec<String>,
    spec: &NetworkSpec,
    host: &HostSpec,
    set_size: usize,
    daily: (u32, u32),
    day: NaiveDate,
    rng: &mut ChaCha8Rng,
) {
    let others: Vec<Ipv4Addr> = spec
        .hosts
        .iter()
        .filter(|h| h.name != host.name)
        .map(|h| h.ip)
        .collect();
    if others.is_empty() {
        return;
    }
    let mut set_rng = stream(spec.seed, &["ptrpick", &host.name]);
    let mut set: Vec<Ipv4Addr> = Vec::new();
    while set.len() < set_size.min(others.len()) {
        let ip = others[set_rng.gen_range(0..others.len())];
        if !set.contains(&ip) {
            set.push(ip);
        }
    }
    let n = rng.gen_range(daily.0..=daily.1);
    for _ in 0..n {
        let ip = set[rng.gen_range(0..set.len())];
        let ts = timestamp(rng, day);
        dns.push(format!("{ts},{},PTR,{}", host.ip, reverse_name(ip)));
    }
}

fn write_gz(path: &Path, header: &str, lines: &[String]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut gz = GzEncoder::new(file, Compression::default());
    let mut write = |line: &str| -> std::io::Result<()> {
        gz.write_all(line.as_bytes())?;
        gz.write_all(b"\n")
    };
    write(header).map_err(|e| io_err(path, e))?;
    for line in lines {
        write(line).map_err(|e| io_err(path, e))?;
    }
    gz.finish().map_err(|e| io_err(path, e))?;
    Ok(())
}

fn source_dir(root: &Path, kind: SourceKind) -> PathBuf {
    root.join("logs").join(kind.name())
}

/// Generates `days` of business-as-usual logs under `out/logs/`.
pub fn generate_baseline(spec: &NetworkSpec, days: u32, out: &Path) -> Result<Corpus> {
    spec.validate()?;
    if days < 1 {
        return Err(EngineError::Config("days must be at least 1".into()));
    }
    for kind in [SourceKind::Flow, SourceKind::Dns, SourceKind::Proxy] {
        let dir = source_dir(out, kind);
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    }
    for day_index in 0..days {
        let day = spec.start + Days::new(u64::from(day_index));
        let stamp = day.format("%Y%m%d").to_string();
        let lines = generate_day(spec, day_index, day);
        for (kind, header, body) in [
            (SourceKind::Flow, FLOW_HEADER, &lines.flow),
            (SourceKind::Dns, DNS_HEADER, &lines.dns),
            (SourceKind::Proxy, PROXY_HEADER, &lines.proxy),
        ] {
            if body.is_empty() {
                continue;
            }
            let path = source_dir(out, kind)
                .join(&stamp)
                .join(format!("{}.csv.gz", kind.name()));
            write_gz(&path, header, body)?;
        }
    }
    Ok(Corpus {
        root: out.to_path_buf(),
        start: spec.start,
        days,
    })
}

/// Appends the script's records to the corpus as separate partition files,
/// leaving the baseline untouched. Returns the injected record count.
pub fn inject_campaign(
    corpus: &Corpus,
    spec: &NetworkSpec,
    script: &CampaignScript,
) -> Result<u64> {
    script.validate(spec, corpus.days)?;
    let mut per_day: BTreeMap<(SourceKind, NaiveDate), Vec<String>> = BTreeMap::new();
    for action in &script.actions {
        let day = corpus.day(action.day);
        let stamp = day.format("%Y%m%d").to_string();
        let actor = spec.require(&action.actor, "scenario actor")?;
        let mut rng = stream(spec.seed, &["inject", &stamp, &action.actor]);
        match &action.kind {
            ActionKind::Scan { prefix, count, ports } => {
                let lines = per_day.entry((SourceKind::Flow, day)).or_default();
                for k in 1..=*count {
                    let dst: Ipv4Addr = format!("{prefix}{k}").parse().map_err(|_| {
                        EngineError::Config(format!("scan prefix '{prefix}' overflows at {k}"))
                    })?;
                    for port in ports {
                        let ts = timestamp(&mut rng, day);
                        lines.push(format!("{ts},{},{dst},{port},TCP,0,0", actor.ip));
                    }
                }
            }
            ActionKind::Collect { from, bytes } | ActionKind::StageMove { from, bytes } => {
                let source = spec.require(from, "scenario source")?;
                let ts = timestamp(&mut rng, day);
                per_day
                    .entry((SourceKind::Flow, day))
                    .or_default()
                    .push(format!("{ts},{},{},445,TCP,0,{bytes}", actor.ip, source.ip));
            }
            ActionKind::Exfil { destination, bytes } => {
                let ts = timestamp(&mut rng, day);
                let down = 8192;
                per_day
                    .entry((SourceKind::Proxy, day))
                    .or_default()
                    .push(format!("{ts},{},{destination},{bytes},{down}", actor.ip));
            }
        }
    }
    let mut injected = 0;
    for ((kind, day), lines) in &per_day {
        let header = match kind {
            SourceKind::Flow => FLOW_HEADER,
            SourceKind::Dns => DNS_HEADER,
            SourceKind::Proxy => PROXY_HEADER,
        };
        let stamp = day.format("%Y%m%d").to_string();
        let path = source_dir(&corpus.root, *kind)
            .join(&stamp)
            .join(format!("injected-{}.csv.gz", kind.name()));
        write_gz(&path, header, lines)?;
        injected += lines.len() as u64;
    }
    Ok(injected)
}

// ---------------------------------------------------------------------------
// The bundled demo network and campaign.

pub const DEMO_DAYS: u32 = 61;
pub const DEMO_BASELINE_DAYS: u32 = 56;

/// First generated day of the demo corpus.
pub fn demo_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2018, 3, 26).expect("valid date")
}

/// Day `n` (1-based) of the demo corpus.
pub fn demo_day(n: u32) -> NaiveDate {
    demo_start() + Days::new(u64::from(n - 1))
}

/// A 21-machine office: eleven user machines, six servers, two backup
/// appliances, and two infrastructure boxes.
pub fn demo_spec(seed: u64) -> NetworkSpec {
    let mut hosts = Vec::new();
    let mut add = |name: &str, ip: [u8; 4], role: Role| {
        hosts.push(HostSpec {
            name: name.to_string(),
            ip: Ipv4Addr::from(ip),
            role,
        });
    };
    add("lt-a", [10, 0, 2, 10], Role::Client);
    add("ws-f", [10, 0, 2, 11], Role::Client);
    for (i, name) in ["ws-g", "ws-h", "ws-i", "ws-j", "ws-k", "ws-l", "ws-m", "ws-n", "ws-o"]
        .iter()
        .enumerate()
    {
        add(name, [10, 0, 2, 12 + i as u8], Role::Client);
    }
    add("srv-b", [10, 0, 1, 10], Role::Server);
    add("srv-c", [10, 0, 1, 11], Role::Server);
    add("srv-d", [10, 0, 1, 12], Role::Server);
    add("srv-e", [10, 0, 1, 13], Role::Server);
    add("srv-file", [10, 0, 1, 14], Role::Server);
    add("srv-mail", [10, 0, 1, 15], Role::Server);
    add("backup-01", [10, 0, 3, 10], Role::Backup);
    add("backup-02", [10, 0, 3, 11], Role::Backup);
    add("infra-01", [10, 0, 4, 10], Role::Infrastructure);
    add("infra-02", [10, 0, 4, 11], Role::Infrastructure);

    let client_names = [
        "lt-a", "ws-f", "ws-g", "ws-h", "ws-i", "ws-j", "ws-k", "ws-l", "ws-m", "ws-n", "ws-o",
    ];
    let extra_pool = ["srv-b", "srv-c", "srv-d", "srv-e"];
    let mut preferred = BTreeMap::new();
    let mut oneoff = BTreeMap::new();
    for (i, client) in client_names.iter().enumerate() {
        // Everyone uses file and mail; 1..=3 extra servers by position, with
        // the quiet workstation kept away from the privileged server.
        let extra_count = 1 + i % 3;
        let mut servers = vec!["srv-file".to_string(), "srv-mail".to_string()];
        let mut pool: Vec<&str> = extra_pool.to_vec();
        if *client == "ws-f" {
            pool.retain(|s| *s != "srv-b");
        }
        for j in 0..extra_count.min(pool.len()) {
            servers.push(pool[(i + j) % pool.len()].to_string());
        }
        let spare = pool
            .iter()
            .find(|s| !servers.iter().any(|p| p == **s))
            .map(|s| s.to_string());
        preferred.insert(client.to_string(), servers);
        if let Some(spare) = spare {
            oneoff.insert(client.to_string(), spare);
        }
    }

    let personal_pool = (0..40)
        .map(|i| {
            let stem = ["news", "video", "social", "shop", "sports", "weather", "forum", "music"]
                [i % 8];
            format!("{stem}{i:02}.example")
        })
        .collect();

    NetworkSpec {
        seed,
        start: demo_start(),
        hosts,
        preferred,
        oneoff,
        directory_server: Some("srv-b".to_string()),
        directory_port: 389,
        avoid: vec![("ws-f".to_string(), "srv-b".to_string())],
        pull_ports: BTreeMap::from([("srv-mail".to_string(), 143u16)]),
        infra_targets: vec!["srv-b".to_string(), "srv-file".to_string(), "srv-mail".to_string()],
        infra_port: 123,
        routines: vec![
            Routine {
                actor: "srv-d".into(),
                source: "srv-c".into(),
                median_bytes: 600e6,
                noise: 0.12,
                port: 445,
            },
            Routine {
                actor: "srv-e".into(),
                source: "srv-c".into(),
                median_bytes: 3e9,
                noise: 0.12,
                port: 445,
            },
            Routine {
                actor: "srv-b".into(),
                source: "srv-file".into(),
                median_bytes: 9e6,
                noise: 0.15,
                port: 445,
            },
            Routine {
                actor: "srv-b".into(),
                source: "srv-mail".into(),
                median_bytes: 6e6,
                noise: 0.15,
                port: 445,
            },
        ],
        volumes: VolumeProfile {
            client_pull_median: 9e6,
            client_pull_noise: 0.15,
            pair_spread: 0.3,
            request_ratio: 0.02,
            directory_bytes: 30e3,
            oneoff_median: 1.2e6,
            oneoff_noise: 0.15,
            oneoff_period_days: 7,
            backup_pull_median: 450e6,
            backup_pull_noise: 0.15,
            backup_pair_spread: 0.2,
            backup_request_bytes: 40e3,
            routine_request_ratio: 0.01,
            client_ptr_set: (4, 7),
            client_ptr_daily: (2, 5),
            infra_ptr_set: (8, 10),
            infra_ptr_daily: (4, 7),
        },
        domains: DomainProfile {
            storage_domain: "agent.cloudvault.example".into(),
            storage_median: 55e6,
            storage_noise: 0.12,
            storage_spread: 0.25,
            mail_domain: "attach.office-mail.example".into(),
            mail_median: 2.5e6,
            mail_noise: 0.2,
            mail_spread: 0.25,
            personal_pool,
            personal_visit_probability: 0.55,
            personal_median: 400e3,
            personal_noise: 0.2,
            personal_spread: 0.2,
            fresh_probability: 0.35,
            fresh_median: 25e3,
            fresh_noise: 0.15,
            update_domains: vec![
                "updates.fleetpatch.example".into(),
                "metrics.osvendor.example".into(),
                "time.clocksync.example".into(),
            ],
            update_median: 2e6,
            update_noise: 0.15,
            update_spread: 0.2,
            download_factor: 6.0,
        },
    }
}

/// The bundled staged campaign: recon from the laptop, collection onto the
/// privileged server, a hop to the quiet workstation, and an upload out.
pub fn demo_script() -> CampaignScript {
    CampaignScript {
        actions: vec![
            Action {
                day: 57,
                actor: "lt-a".into(),
                kind: ActionKind::Scan {
                    prefix: "10.9.1.".into(),
                    count: 73,
                    ports: vec![22, 110, 139, 143, 445],
                },
            },
            Action {
                day: 58,
                actor: "srv-b".into(),
                kind: ActionKind::Collect {
                    from: "lt-a".into(),
                    bytes: 50_000_000,
                },
            },
            Action {
                day: 59,
                actor: "srv-b".into(),
                kind: ActionKind::Collect {
                    from: "srv-d".into(),
                    bytes: 600_000_000,
                },
            },
            Action {
                day: 59,
                actor: "srv-b".into(),
                kind: ActionKind::Collect {
                    from: "srv-e".into(),
                    bytes: 3_000_000_000,
                },
            },
            Action {
                day: 60,
                actor: "ws-f".into(),
                kind: ActionKind::StageMove {
                    from: "srv-b".into(),
                    bytes: 120_000_000,
                },
            },
            Action {
                day: 61,
                actor: "ws-f".into(),
                kind: ActionKind::Exfil {
                    destination: "exfil.dropsite.example".into(),
                    bytes: 120_000_000,
                },
            },
        ],
    }
}

fn demo_identity_csv(spec: &NetworkSpec) -> String {
    let mut out = String::from("ip,name,from,to\n");
    for host in &spec.hosts {
        let _ = writeln!(
            out,
            "{},{},2018-03-01T00:00:00Z,2018-07-01T00:00:00Z",
            host.ip, host.name
        );
    }
    out
}

fn demo_config_toml(seed: u64) -> String {
    format!(
        r#"# Engine configuration for the bundled demo corpus.

[engine]
seed = {seed}
window_days = 28
history_days = 28
results = "results"

[identity]
map = "identity.csv"
internal_cidrs = ["10.0.0.0/8"]

[cidr_labels]
"10.0.1.0/24" = "Services"
"10.0.2.0/24" = "Users"
"10.0.3.0/24" = "Backup"
"10.0.4.0/24" = "Infra"

[ports]
data = [20, 21, 110, 139, 143, 445, 873]
service = [22, 53, 88, 123, 389, 636]

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

[model]
# Two dozen machines produce small tables: let real models fit from a dozen
# rows, keep the spread floor wide so discrete counts cannot produce
# hair-trigger surprise, and compute peer statistics from two clients up.
min_rows = 12
sigma_floor = 0.25
min_clients = 2

[link]
# At this scale a case should take real evidence: stronger movements for
# graph edges and a higher bar for the high-risk band.
edge_threshold = 10.0
high_risk = 10.0
medium_risk = 6.0
"#
    )
}

/// Generates the full demo workspace under `out`: logs, identity map,
/// engine configuration, and the scenario file (injected when asked).
pub fn write_demo_workspace(out: &Path, seed: u64, with_campaign: bool) -> Result<Corpus> {
    let spec = demo_spec(seed);
    let corpus = generate_baseline(&spec, DEMO_DAYS, out)?;
    let script = demo_script();
    fs::write(out.join("scenario.toml"), render_scenario(&script))
        .map_err(|e| io_err(out.join("scenario.toml"), e))?;
    fs::write(out.join("identity.csv"), demo_identity_csv(&spec))
        .map_err(|e| io_err(out.join("identity.csv"), e))?;
    fs::write(out.join("config.toml"), demo_config_toml(seed))
        .map_err(|e| io_err(out.join("config.toml"), e))?;
    if with_campaign {
        inject_campaign(&corpus, &spec, &script)?;
    }
    Ok(corpus)
}
