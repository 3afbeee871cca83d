//! Stable machine naming: CIDR classification of addresses and lease-based
//! resolution of dynamic internal IPs to machine names.

use std::collections::BTreeMap;
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};
use std::path::Path;

use chrono::{DateTime, Utc};

use crate::error::{io_err, EngineError, Result};

/// An IPv4 or IPv6 network in prefix notation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cidr {
    network: IpAddr,
    prefix: u8,
}

impl Cidr {
    pub fn parse(text: &str) -> std::result::Result<Cidr, String> {
        let (addr, prefix) = match text.split_once('/') {
            Some((a, p)) => (a, p),
            None => return Err(format!("'{text}' is not in address/prefix form")),
        };
        let network: IpAddr = addr
            .parse()
            .map_err(|_| format!("'{addr}' is not an IP address"))?;
        let prefix: u8 = prefix
            .parse()
            .map_err(|_| format!("'{prefix}' is not a prefix length"))?;
        let max = match network {
            IpAddr::V4(_) => 32,
            IpAddr::V6(_) => 128,
        };
        if prefix > max {
            return Err(format!("prefix /{prefix} exceeds /{max}"));
        }
        Ok(Cidr { network, prefix })
    }

    pub fn prefix(&self) -> u8 {
        self.prefix
    }

    pub fn contains(&self, ip: IpAddr) -> bool {
        match (self.network, ip) {
            (IpAddr::V4(net), IpAddr::V4(ip)) => {
                let bits = u32::from(net) ^ u32::from(ip);
                self.prefix == 0 || (bits >> (32 - self.prefix)) == 0
            }
            (IpAddr::V6(net), IpAddr::V6(ip)) => {
                let bits = u128::from(net) ^ u128::from(ip);
                self.prefix == 0 || (bits >> (128 - self.prefix)) == 0
            }
            _ => false,
        }
    }
}

impl std::fmt::Display for Cidr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.network, self.prefix)
    }
}

/// True when `ip` falls inside any of the configured internal ranges.
pub fn is_internal(ip: IpAddr, internal: &[Cidr]) -> bool {
    internal.iter().any(|c| c.contains(ip))
}

/// The /24 (IPv4) or /48 (IPv6) network containing `ip`, used to cluster
/// external flow destinations.
pub fn subnet_cluster(ip: IpAddr) -> String {
    match ip {
        IpAddr::V4(v4) => {
            let masked = Ipv4Addr::from(u32::from(v4) & 0xffff_ff00);
            format!("{masked}/24")
        }
        IpAddr::V6(v6) => {
            let masked = Ipv6Addr::from(u128::from(v6) & !((1u128 << 80) - 1));
            format!("{masked}/48")
        }
    }
}

/// One DHCP-style assignment: `ip` answered to `name` during `[from, to)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lease {
    pub ip: IpAddr,
    pub name: String,
    pub from: DateTime<Utc>,
    pub to: DateTime<Utc>,
}

/// Lease table resolving internal IPs to stable machine names at an instant.
#[derive(Debug, Clone, Default)]
pub struct IdentityMap {
    // Per IP, leases sorted by start instant; validated non-overlapping.
    by_ip: BTreeMap<IpAddr, Vec<Lease>>,
    // Per name, every lease carrying it (for reverse lookups).
    by_name: BTreeMap<String, Vec<Lease>>,
}

impl IdentityMap {
    pub fn from_leases(leases: Vec<Lease>) -> Result<IdentityMap> {
        let mut by_ip: BTreeMap<IpAddr, Vec<Lease>> = BTreeMap::new();
        let mut by_name: BTreeMap<String, Vec<Lease>> = BTreeMap::new();
        for mut lease in leases {
            lease.name = lease.name.to_lowercase();
            if lease.from >= lease.to {
                return Err(EngineError::Config(format!(
                    "identity lease for {} has empty interval [{} .. {}]",
                    lease.ip,
                    lease.from.to_rfc3339(),
                    lease.to.to_rfc3339()
                )));
            }
            by_name
                .entry(lease.name.clone())
                .or_default()
                .push(lease.clone());
            by_ip.entry(lease.ip).or_default().push(lease);
        }
        for (ip, leases) in &mut by_ip {
            leases.sort_by_key(|l| (l.from, l.to));
            for pair in leases.windows(2) {
                if pair[1].from < pair[0].to {
                    return Err(EngineError::LeaseOverlap {
                        ip: ip.to_string(),
                        first_from: pair[0].from.to_rfc3339(),
                        first_to: pair[0].to.to_rfc3339(),
                        second_from: pair[1].from.to_rfc3339(),
                        second_to: pair[1].to.to_rfc3339(),
                    });
                }
            }
        }
        for leases in by_name.values_mut() {
            leases.sort_by_key(|l| (l.from, l.to));
        }
        Ok(IdentityMap { by_ip, by_name })
    }

    /// Loads a lease table from a CSV file with columns ip,name,from,to
    /// (RFC 3339 instants). A header row is skipped when present.
    pub fn load(path: &Path) -> Result<IdentityMap> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let mut leases = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if lineno == 0 && line.to_lowercase().starts_with("ip,") {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(EngineError::IdentityMap {
                    path: path.to_path_buf(),
                    message: format!("line {}: expected 4 fields, found {}", lineno + 1, fields.len()),
                });
            }
            let bad = |what: &str| EngineError::IdentityMap {
                path: path.to_path_buf(),
                message: format!("line {}: invalid {what}: '{}'", lineno + 1, line),
            };
            let ip: IpAddr = fields[0].trim().parse().map_err(|_| bad("ip"))?;
            let from = DateTime::parse_from_rfc3339(fields[2].trim())
                .map_err(|_| bad("from instant"))?
                .with_timezone(&Utc);
            let to = DateTime::parse_from_rfc3339(fields[3].trim())
                .map_err(|_| bad("to instant"))?
                .with_timezone(&Utc);
            leases.push(Lease {
                ip,
                name: fields[1].trim().to_string(),
                from,
                to,
            });
        }
        IdentityMap::from_leases(leases)
    }

    /// The machine name leased to `ip` at `at`, if any. Lease intervals are
    /// half-open: `from <= at < to`.
    pub fn resolve(&self, ip: IpAddr, at: DateTime<Utc>) -> Option<&str> {
        let leases = self.by_ip.get(&ip)?;
        leases
            .iter()
            .find(|l| l.from <= at && at < l.to)
            .map(|l| l.name.as_str())
    }

    /// The address a named machine most recently held at or before `at`
    /// (current lease preferred, otherwise the latest expired one).
    pub fn address_of(&self, name: &str, at: DateTime<Utc>) -> Option<IpAddr> {
        let leases = self.by_name.get(name)?;
        if let Some(active) = leases.iter().find(|l| l.from <= at && at < l.to) {
            return Some(active.ip);
        }
        leases
            .iter()
            .filter(|l| l.from <= at)
            .max_by_key(|l| l.from)
            .or_else(|| leases.first())
            .map(|l| l.ip)
    }

    pub fn is_empty(&self) -> bool {
        self.by_ip.is_empty()
    }
}

/// Looks up the label of the most specific configured network containing
/// `host` (a machine name or literal address) around instant `at`.
/// Hosts outside every labeled network map to "unlabeled".
pub fn cidr_label(
    host: &str,
    at: DateTime<Utc>,
    labels: &[(Cidr, String)],
    idmap: &IdentityMap,
) -> String {
    let ip = match host.parse::<IpAddr>() {
        Ok(ip) => Some(ip),
        Err(_) => idmap.address_of(host, at),
    };
    let Some(ip) = ip else {
        return "unlabeled".to_string();
    };
    labels
        .iter()
        .filter(|(c, _)| c.contains(ip))
        .max_by_key(|(c, _)| c.prefix())
        .map(|(_, label)| label.clone())
        .unwrap_or_else(|| "unlabeled".to_string())
}
