//! Two-step aggregation: label standardized records, reduce each day to
//! per-host activity sets and sums, then merge dailies into windowed tables
//! whose values match a direct aggregation of the raw records.

use std::collections::{BTreeMap, BTreeSet};
use std::net::IpAddr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};
use crate::identity::{is_internal, subnet_cluster, Cidr};
use crate::ingest::{Endpoint, Flow, QueryType, Records};

/// Semantic port grouping: explicitly listed data and service ports, with
/// every other port falling into the residual general group.
#[derive(Debug, Clone, Default)]
pub struct PortGroupPolicy {
    data: BTreeSet<u16>,
    service: BTreeSet<u16>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PortGroup {
    Data,
    Service,
    General,
}

impl PortGroupPolicy {
    pub fn new(data: BTreeSet<u16>, service: BTreeSet<u16>) -> Result<PortGroupPolicy> {
        if let Some(port) = data.intersection(&service).next() {
            return Err(EngineError::Config(format!(
                "port {port} is listed as both a data port and a service port"
            )));
        }
        Ok(PortGroupPolicy { data, service })
    }

    pub fn classify(&self, port: u16) -> PortGroup {
        if self.data.contains(&port) {
            PortGroup::Data
        } else if self.service.contains(&port) {
            PortGroup::Service
        } else {
            PortGroup::General
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Internal,
    External,
}

/// Direction of a flow plus the semantic group of its destination port
/// (`None` for portless protocols).
pub fn label_flow(flow: &Flow, policy: &PortGroupPolicy) -> (Direction, Option<PortGroup>) {
    let direction = if flow.dst.is_internal() {
        Direction::Internal
    } else {
        Direction::External
    };
    let group = if flow.protocol.is_portless() {
        None
    } else {
        Some(policy.classify(flow.dst_port))
    };
    (direction, group)
}

/// The ten quantities monitored per host (or per host/destination pair).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    NeighborsTotal,
    NeighborsData,
    NeighborsService,
    NeighborsGeneral,
    PtrLookups,
    PortsData,
    PortsService,
    PortsGeneral,
    BytesConsumed,
    BytesPublished,
}

impl Target {
    pub const ALL: [Target; 10] = [
        Target::NeighborsTotal,
        Target::NeighborsData,
        Target::NeighborsService,
        Target::NeighborsGeneral,
        Target::PtrLookups,
        Target::PortsData,
        Target::PortsService,
        Target::PortsGeneral,
        Target::BytesConsumed,
        Target::BytesPublished,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Target::NeighborsTotal => "neighbors_total",
            Target::NeighborsData => "neighbors_data",
            Target::NeighborsService => "neighbors_service",
            Target::NeighborsGeneral => "neighbors_general",
            Target::PtrLookups => "ptr_lookups",
            Target::PortsData => "ports_data",
            Target::PortsService => "ports_service",
            Target::PortsGeneral => "ports_general",
            Target::BytesConsumed => "bytes_consumed",
            Target::BytesPublished => "bytes_published",
        }
    }

    pub fn parse(name: &str) -> Option<Target> {
        Target::ALL.into_iter().find(|t| t.name() == name)
    }

    /// Campaign stage this quantity evidences: 3 reconnaissance, 4 internal
    /// staging, 5 outbound publication.
    pub fn stage(self) -> u8 {
        match self {
            Target::BytesConsumed => 4,
            Target::BytesPublished => 5,
            _ => 3,
        }
    }

    /// Whether the quantity is tracked per (host, destination) pair rather
    /// than as a single per-host value.
    pub fn per_destination(self) -> bool {
        matches!(self, Target::BytesConsumed | Target::BytesPublished)
    }
}

/// Distinct destination ports observed toward one internal destination,
/// split by semantic group.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortSets {
    pub data: BTreeSet<u16>,
    pub service: BTreeSet<u16>,
    pub general: BTreeSet<u16>,
}

impl PortSets {
    fn group_mut(&mut self, group: PortGroup) -> &mut BTreeSet<u16> {
        match group {
            PortGroup::Data => &mut self.data,
            PortGroup::Service => &mut self.service,
            PortGroup::General => &mut self.general,
        }
    }

    pub fn group(&self, group: PortGroup) -> &BTreeSet<u16> {
        match group {
            PortGroup::Data => &self.data,
            PortGroup::Service => &self.service,
            PortGroup::General => &self.general,
        }
    }

    fn merge_from(&mut self, other: &PortSets) {
        self.data.extend(&other.data);
        self.service.extend(&other.service);
        self.general.extend(&other.general);
    }
}

/// One host's activity over one day or one merged window: exact distinct
/// sets and exact byte sums, all keyed by stable names.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HostActivity {
    /// Internal destinations this host initiated at least one flow toward.
    pub touched: BTreeSet<String>,
    /// Distinct destination ports per internal destination, by group.
    pub ports: BTreeMap<String, PortSets>,
    /// Decoded internal addresses this host looked up in reverse.
    pub ptr_values: BTreeSet<String>,
    /// Bytes this host pulled in, keyed by internal source machine.
    pub consumed: BTreeMap<String, u64>,
    /// Bytes this host pushed, keyed by internal destination machine.
    pub sent: BTreeMap<String, u64>,
    /// Bytes this host pushed outward, keyed by external cluster
    /// (/24 network for flow traffic, registrable domain for proxy traffic).
    pub published: BTreeMap<String, u64>,
}

impl HostActivity {
    fn merge_from(&mut self, other: &HostActivity) {
        self.touched.extend(other.touched.iter().cloned());
        for (dest, sets) in &other.ports {
            self.ports.entry(dest.clone()).or_default().merge_from(sets);
        }
        self.ptr_values.extend(other.ptr_values.iter().cloned());
        for (k, v) in &other.consumed {
            *self.consumed.entry(k.clone()).or_insert(0) += v;
        }
        for (k, v) in &other.sent {
            *self.sent.entry(k.clone()).or_insert(0) += v;
        }
        for (k, v) in &other.published {
            *self.published.entry(k.clone()).or_insert(0) += v;
        }
    }

    fn neighbors_via(&self, group: PortGroup) -> usize {
        self.ports
            .values()
            .filter(|sets| !sets.group(group).is_empty())
            .count()
    }

    fn distinct_ports(&self, group: PortGroup) -> usize {
        let mut union: BTreeSet<u16> = BTreeSet::new();
        for sets in self.ports.values() {
            union.extend(sets.group(group));
        }
        union.len()
    }

    /// The per-host value of a stage-3 quantity. Pair quantities have no
    /// single per-host value; read `consumed`/`published` directly.
    pub fn target_value(&self, target: Target) -> f64 {
        match target {
            Target::NeighborsTotal => self.touched.len() as f64,
            Target::NeighborsData => self.neighbors_via(PortGroup::Data) as f64,
            Target::NeighborsService => self.neighbors_via(PortGroup::Service) as f64,
            Target::NeighborsGeneral => self.neighbors_via(PortGroup::General) as f64,
            Target::PtrLookups => self.ptr_values.len() as f64,
            Target::PortsData => self.distinct_ports(PortGroup::Data) as f64,
            Target::PortsService => self.distinct_ports(PortGroup::Service) as f64,
            Target::PortsGeneral => self.distinct_ports(PortGroup::General) as f64,
            Target::BytesConsumed | Target::BytesPublished => {
                unreachable!("pair quantities are read per destination")
            }
        }
    }

    /// The per-destination map backing a pair quantity.
    pub fn pair_values(&self, target: Target) -> &BTreeMap<String, u64> {
        match target {
            Target::BytesConsumed => &self.consumed,
            Target::BytesPublished => &self.published,
            _ => unreachable!("per-host quantities have no destination map"),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.touched.is_empty()
            && self.ports.is_empty()
            && self.ptr_values.is_empty()
            && self.consumed.is_empty()
            && self.sent.is_empty()
            && self.published.is_empty()
    }
}

/// Per-host activity reduced from records, tagged with the days that fed it.
/// A single-day reduction and a merged window share this shape because the
/// merge is a union of sets and a sum of sums.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Aggregate {
    pub days: BTreeSet<NaiveDate>,
    pub hosts: BTreeMap<String, HostActivity>,
}

impl Aggregate {
    pub fn merge_from(&mut self, other: &Aggregate) {
        self.days.extend(other.days.iter().copied());
        for (host, activity) in &other.hosts {
            self.hosts
                .entry(host.clone())
                .or_default()
                .merge_from(activity);
        }
    }

    pub fn merged<'a>(parts: impl IntoIterator<Item = &'a Aggregate>) -> Aggregate {
        let mut out = Aggregate::default();
        for part in parts {
            out.merge_from(part);
        }
        out
    }

    fn host_mut(&mut self, name: &str) -> &mut HostActivity {
        self.hosts.entry(name.to_string()).or_default()
    }
}

/// The registrable-domain cluster for a proxy destination: the last two
/// dot-separated labels (an address literal clusters by network instead).
pub fn domain_cluster(host: &str) -> String {
    let bare = host.trim_end_matches('.');
    let bare = bare.rsplit_once(':').map_or(bare, |(h, _)| h);
    if let Ok(ip) = bare.parse::<IpAddr>() {
        return subnet_cluster(ip);
    }
    let labels: Vec<&str> = bare.rsplit('.').take(2).collect();
    labels.into_iter().rev().collect::<Vec<_>>().join(".")
}

/// Decodes a reverse-lookup query value back to the address it names.
pub fn decode_reverse_query(value: &str) -> Option<IpAddr> {
    let bare = value.trim_end_matches('.');
    if let Some(rest) = bare.strip_suffix(".in-addr.arpa") {
        let mut octets: Vec<u8> = Vec::with_capacity(4);
        for part in rest.split('.') {
            octets.push(part.parse().ok()?);
        }
        if octets.len() != 4 {
            return None;
        }
        octets.reverse();
        return Some(IpAddr::from([octets[0], octets[1], octets[2], octets[3]]));
    }
    if let Some(rest) = bare.strip_suffix(".ip6.arpa") {
        let nibbles: Vec<&str> = rest.split('.').collect();
        if nibbles.len() != 32 {
            return None;
        }
        let mut value: u128 = 0;
        for nibble in nibbles.iter().rev() {
            let digit = u128::from_str_radix(nibble, 16).ok()?;
            if nibble.len() != 1 {
                return None;
            }
            value = (value << 4) | digit;
        }
        return Some(IpAddr::from(std::net::Ipv6Addr::from(value)));
    }
    None
}

fn add_bytes(map: &mut BTreeMap<String, u64>, key: &str, bytes: u64) {
    if bytes > 0 {
        *map.entry(key.to_string()).or_insert(0) += bytes;
    }
}

/// Reduces one day of standardized records to per-host activity. Host
/// entries appear only for machines that contributed something; in
/// particular, a destination that neither sent nor received payload does not
/// materialize as a host.
pub fn aggregate_day(
    day: NaiveDate,
    batches: &[&Records],
    policy: &PortGroupPolicy,
    internal: &[Cidr],
) -> Result<Aggregate> {
    let mut agg = Aggregate::default();
    agg.days.insert(day);
    for batch in batches {
        match batch {
            Records::Flow(rows) => {
                for flow in rows {
                    check_day(day, flow.timestamp)?;
                    reduce_flow(&mut agg, flow, policy);
                }
            }
            Records::Dns(rows) => {
                for q in rows {
                    check_day(day, q.timestamp)?;
                    let Endpoint::Internal(src) = &q.src else { continue };
                    if q.query_type != QueryType::Ptr {
                        continue;
                    }
                    if let Some(ip) = decode_reverse_query(&q.query_value) {
                        if is_internal(ip, internal) {
                            agg.host_mut(src).ptr_values.insert(ip.to_string());
                        }
                    }
                }
            }
            Records::Proxy(rows) => {
                for p in rows {
                    check_day(day, p.timestamp)?;
                    let Endpoint::Internal(src) = &p.src else { continue };
                    if p.bytes_uploaded > 0 {
                        let cluster = domain_cluster(&p.external_host);
                        add_bytes(&mut agg.host_mut(src).published, &cluster, p.bytes_uploaded);
                    }
                }
            }
        }
    }
    agg.hosts.retain(|_, activity| !activity.is_empty());
    Ok(agg)
}

fn check_day(day: NaiveDate, at: chrono::DateTime<chrono::Utc>) -> Result<()> {
    if at.date_naive() != day {
        return Err(EngineError::Data(format!(
            "record timestamped {} found in the {} partition",
            at.date_naive(),
            day
        )));
    }
    Ok(())
}

fn reduce_flow(agg: &mut Aggregate, flow: &Flow, policy: &PortGroupPolicy) {
    let (_, group) = label_flow(flow, policy);
    match (&flow.src, &flow.dst) {
        (Endpoint::Internal(src), Endpoint::Internal(dst)) => {
            {
                let initiator = agg.host_mut(src);
                initiator.touched.insert(dst.clone());
                if let Some(group) = group {
                    initiator
                        .ports
                        .entry(dst.clone())
                        .or_default()
                        .group_mut(group)
                        .insert(flow.dst_port);
                }
                add_bytes(&mut initiator.sent, dst, flow.bytes_sent);
                add_bytes(&mut initiator.consumed, dst, flow.bytes_received);
            }
            let responder = agg.host_mut(dst);
            add_bytes(&mut responder.consumed, src, flow.bytes_sent);
            add_bytes(&mut responder.sent, src, flow.bytes_received);
        }
        (Endpoint::Internal(src), Endpoint::External(dst)) => {
            if flow.bytes_sent > 0 {
                if let Ok(ip) = dst.parse::<IpAddr>() {
                    let cluster = subnet_cluster(ip);
                    add_bytes(&mut agg.host_mut(src).published, &cluster, flow.bytes_sent);
                }
            }
        }
        (Endpoint::External(src), Endpoint::Internal(dst)) => {
            // An outside initiator pulling payload still moves our data out.
            if flow.bytes_received > 0 {
                if let Ok(ip) = src.parse::<IpAddr>() {
                    let cluster = subnet_cluster(ip);
                    add_bytes(
                        &mut agg.host_mut(dst).published,
                        &cluster,
                        flow.bytes_received,
                    );
                }
            }
        }
        (Endpoint::External(_), Endpoint::External(_)) => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Protocol;
    use chrono::{DateTime, Utc};

    fn policy() -> PortGroupPolicy {
        PortGroupPolicy::new(
            [445, 139, 21].into_iter().collect(),
            (6660..=6670).chain([53, 88]).collect(),
        )
        .unwrap()
    }

    fn day() -> NaiveDate {
        NaiveDate::from_ymd_opt(2018, 5, 20).unwrap()
    }

    fn ts(h: u32) -> DateTime<Utc> {
        day().and_hms_opt(h, 0, 0).unwrap().and_utc()
    }

    fn flow(src: &str, dst: Endpoint, port: u16, bs: u64, br: u64) -> Flow {
        Flow {
            timestamp: ts(10),
            src: Endpoint::Internal(src.into()),
            dst,
            dst_port: port,
            protocol: if port == 0 { Protocol::Icmp } else { Protocol::Tcp },
            bytes_sent: bs,
            bytes_received: br,
        }
    }

    fn internal(name: &str) -> Endpoint {
        Endpoint::Internal(name.into())
    }

    #[test]
    fn port_classification_is_total_and_disjointness_is_enforced() {
        let p = policy();
        assert_eq!(p.classify(445), PortGroup::Data);
        assert_eq!(p.classify(6665), PortGroup::Service);
        assert_eq!(p.classify(80), PortGroup::General);
        assert_eq!(p.classify(0), PortGroup::General);
        let overlap = PortGroupPolicy::new(
            [445].into_iter().collect(),
            [445].into_iter().collect(),
        );
        assert_eq!(overlap.unwrap_err().exit_code(), 1);
    }

    #[test]
    fn labeling_adds_direction_and_group() {
        let p = policy();
        let to_internal = flow("a", internal("b"), 445, 1, 1);
        assert_eq!(
            label_flow(&to_internal, &p),
            (Direction::Internal, Some(PortGroup::Data))
        );
        let irc = flow("a", Endpoint::External("203.0.113.9".into()), 6665, 1, 1);
        assert_eq!(
            label_flow(&irc, &p),
            (Direction::External, Some(PortGroup::Service))
        );
        let ping = flow("a", internal("b"), 0, 1, 1);
        assert_eq!(label_flow(&ping, &p), (Direction::Internal, None));
    }

    #[test]
    fn touched_destinations_are_distinct_and_byte_sums_accumulate() {
        let records = Records::Flow(vec![
            flow("a", internal("b"), 445, 10, 1200),
            flow("a", internal("c"), 445, 10, 0),
            flow("a", internal("b"), 80, 10, 800),
        ]);
        let agg = aggregate_day(day(), &[&records], &policy(), &[]).unwrap();
        let a = &agg.hosts["a"];
        assert_eq!(a.target_value(Target::NeighborsTotal), 2.0);
        assert_eq!(a.target_value(Target::NeighborsData), 2.0);
        assert_eq!(a.target_value(Target::NeighborsGeneral), 1.0);
        assert_eq!(a.target_value(Target::PortsData), 1.0);
        assert_eq!(a.consumed["b"], 2000);
        assert_eq!(a.sent["b"], 20);
        // The responder's view mirrors the initiator's payloads.
        assert_eq!(agg.hosts["b"].consumed["a"], 20);
        assert_eq!(agg.hosts["b"].sent["a"], 2000);
    }

    #[test]
    fn zero_byte_probes_touch_but_never_materialize_the_destination() {
        let records = Records::Flow(vec![
            flow("scanner", internal("10.9.1.5"), 22, 0, 0),
            flow("scanner", internal("10.9.1.6"), 22, 0, 0),
        ]);
        let agg = aggregate_day(day(), &[&records], &policy(), &[]).unwrap();
        assert_eq!(agg.hosts.len(), 1);
        let s = &agg.hosts["scanner"];
        assert_eq!(s.target_value(Target::NeighborsTotal), 2.0);
        assert!(s.consumed.is_empty() && s.sent.is_empty());
        assert!(!agg.hosts.contains_key("10.9.1.5"));
    }

    #[test]
    fn window_merge_unions_sets_and_sums_bytes_across_gaps() {
        let d1 = NaiveDate::from_ymd_opt(2018, 5, 1).unwrap();
        let d2 = NaiveDate::from_ymd_opt(2018, 5, 2).unwrap();
        let d3 = NaiveDate::from_ymd_opt(2018, 5, 3).unwrap();
        let mk = |d: NaiveDate, dests: &[&str], bytes: u64| {
            let rows: Vec<Flow> = dests
                .iter()
                .map(|dest| Flow {
                    timestamp: d.and_hms_opt(1, 0, 0).unwrap().and_utc(),
                    src: internal("a"),
                    dst: internal(dest),
                    dst_port: 445,
                    protocol: Protocol::Tcp,
                    bytes_sent: 0,
                    bytes_received: bytes,
                })
                .collect();
            aggregate_day(d, &[&Records::Flow(rows)], &policy(), &[]).unwrap()
        };
        let day1 = mk(d1, &["x", "y"], 50_000_000);
        let day3 = mk(d3, &["y", "z"], 600_000_000);
        let window = Aggregate::merged([&day1, &day3]);
        assert_eq!(window.days.len(), 2);
        assert!(!window.days.contains(&d2));
        let a = &window.hosts["a"];
        assert_eq!(a.target_value(Target::NeighborsTotal), 3.0);
        assert_eq!(a.consumed["y"], 650_000_000);
        assert_eq!(a.consumed["x"], 50_000_000);
    }

    #[test]
    fn mixed_day_input_is_a_data_error() {
        let records = Records::Flow(vec![flow("a", internal("b"), 445, 1, 1)]);
        let wrong = NaiveDate::from_ymd_opt(2018, 5, 21).unwrap();
        let err = aggregate_day(wrong, &[&records], &policy(), &[]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn external_traffic_clusters_by_network_and_domain() {
        let flows = Records::Flow(vec![
            flow("a", Endpoint::External("203.0.113.5".into()), 443, 100, 9999),
            flow("a", Endpoint::External("203.0.113.77".into()), 443, 150, 0),
        ]);
        let proxies = Records::Proxy(vec![crate::ingest::Proxy {
            timestamp: ts(11),
            src: internal("a"),
            external_host: "mail.office.example".into(),
            bytes_uploaded: 42,
            bytes_downloaded: 10_000,
        }]);
        let agg = aggregate_day(day(), &[&flows, &proxies], &policy(), &[]).unwrap();
        let a = &agg.hosts["a"];
        assert_eq!(a.published["203.0.113.0/24"], 250);
        assert_eq!(a.published["office.example"], 42);
        // Downloads are not publication.
        assert_eq!(a.published.len(), 2);
    }

    #[test]
    fn reverse_lookups_count_only_decoded_internal_addresses() {
        let internal_nets = vec![Cidr::parse("10.0.0.0/8").unwrap()];
        let mk = |qt: QueryType, value: &str| crate::ingest::Dns {
            timestamp: ts(9),
            src: internal("a"),
            query_type: qt,
            query_value: value.into(),
        };
        let records = Records::Dns(vec![
            mk(QueryType::Ptr, "9.0.0.10.in-addr.arpa"),
            mk(QueryType::Ptr, "9.0.0.10.in-addr.arpa"), // duplicate
            mk(QueryType::Ptr, "5.113.0.203.in-addr.arpa"), // decodes external
            mk(QueryType::Ptr, "garbage.example"),       // undecodable
            mk(QueryType::A, "srv.corp.example"),        // not a reverse lookup
        ]);
        let agg = aggregate_day(day(), &[&records], &policy(), &internal_nets).unwrap();
        let a = &agg.hosts["a"];
        assert_eq!(a.ptr_values.len(), 1);
        assert!(a.ptr_values.contains("10.0.0.9"));
        assert_eq!(a.target_value(Target::PtrLookups), 1.0);
    }

    #[test]
    fn reverse_query_decoding_handles_both_families() {
        assert_eq!(
            decode_reverse_query("9.0.0.10.in-addr.arpa"),
            Some("10.0.0.9".parse().unwrap())
        );
        assert_eq!(decode_reverse_query("9.0.10.in-addr.arpa"), None);
        let v6 = "1.0.0.0.0.0.0.0.0.0.0.0.0.0.0.0.0.0.0.0.0.0.0.0.8.b.d.0.1.0.0.2.ip6.arpa";
        assert_eq!(
            decode_reverse_query(v6),
            Some("2001:db8::1".parse().unwrap())
        );
    }

    #[test]
    fn domain_clustering_uses_registrable_suffix() {
        assert_eq!(domain_cluster("mail.office.example"), "office.example");
        assert_eq!(domain_cluster("code42.com"), "code42.com");
        assert_eq!(domain_cluster("deep.sub.portal.example."), "portal.example");
        assert_eq!(domain_cluster("host.example:8080"), "host.example");
        assert_eq!(domain_cluster("203.0.113.9"), "203.0.113.0/24");
    }

    #[test]
    fn enlarging_a_window_never_shrinks_any_value() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let hosts = ["a", "b", "c"];
        let base = NaiveDate::from_ymd_opt(2018, 5, 1).unwrap();
        let dailies: Vec<Aggregate> = (0..6)
            .map(|i| {
                let d = base + chrono::Days::new(i);
                let rows: Vec<Flow> = (0..rng.gen_range(1..8))
                    .map(|_| Flow {
                        timestamp: d.and_hms_opt(3, 0, 0).unwrap().and_utc(),
                        src: internal(hosts[rng.gen_range(0..3)]),
                        dst: internal(hosts[rng.gen_range(0..3)]),
                        dst_port: [22, 445, 80][rng.gen_range(0..3)],
                        protocol: Protocol::Tcp,
                        bytes_sent: rng.gen_range(0..5000),
                        bytes_received: rng.gen_range(0..5000),
                    })
                    .collect();
                aggregate_day(d, &[&Records::Flow(rows)], &policy(), &[]).unwrap()
            })
            .collect();
        for k in 1..dailies.len() {
            let shorter = Aggregate::merged(dailies.iter().take(k));
            let longer = Aggregate::merged(dailies.iter().take(k + 1));
            for (host, small) in &shorter.hosts {
                let big = &longer.hosts[host];
                for t in Target::ALL {
                    if t.per_destination() {
                        for (dest, v) in small.pair_values(t) {
                            assert!(big.pair_values(t)[dest] >= *v);
                        }
                    } else {
                        assert!(big.target_value(t) >= small.target_value(t));
                    }
                }
            }
        }
    }
}
