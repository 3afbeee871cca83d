//! Links surprising data movements into multi-stage cases: build the
//! association graph, band hosts by stage risk, grow candidate cases around
//! top-ranked seeds, and keep only candidates whose members cover at least
//! two campaign stages at high risk.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::aggregate::Target;
use crate::campaign::{HostRanking, StageRisk};
use crate::config::LinkSection;
use crate::monitor::SurpriseScore;

/// One surprising data movement, pointing the way the data moved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: String,
    pub dst: String,
    /// The collection sub-risk that created the edge.
    pub sub_risk: f64,
}

/// Directed graph over machines; vertices are implicit in the edges plus
/// any isolated scored hosts.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AssociationGraph {
    pub edges: Vec<Edge>,
}

impl AssociationGraph {
    /// Hosts adjacent to `host` through any edge, in either direction.
    pub fn neighbors(&self, host: &str) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        for e in &self.edges {
            if e.src == host {
                out.insert(e.dst.as_str());
            }
            if e.dst == host {
                out.insert(e.src.as_str());
            }
        }
        out
    }
}

/// Builds the graph from collection-stage sub-risks: a destination-level
/// risk at or above the threshold becomes an edge from the remote machine
/// (where the data came from) to the consuming host.
pub fn build_graph(risks: &[StageRisk], edge_threshold: f64) -> AssociationGraph {
    let mut edges = Vec::new();
    for sr in risks.iter().filter(|sr| sr.stage == 4) {
        for (remote, sub_risk) in &sr.sub_risks {
            if *sub_risk >= edge_threshold {
                edges.push(Edge {
                    src: remote.clone(),
                    dst: sr.host.clone(),
                    sub_risk: *sub_risk,
                });
            }
        }
    }
    edges.sort_by(|a, b| (&a.src, &a.dst).cmp(&(&b.src, &b.dst)));
    AssociationGraph { edges }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    High,
    Medium,
    Low,
}

impl Band {
    pub fn name(self) -> &'static str {
        match self {
            Band::High => "high",
            Band::Medium => "medium",
            Band::Low => "low",
        }
    }
}

/// Per-(host, stage) risk bands.
#[derive(Debug, Clone, Default)]
pub struct BandTable {
    bands: BTreeMap<(String, u8), Band>,
}

impl BandTable {
    pub fn band(&self, host: &str, stage: u8) -> Band {
        self.bands
            .get(&(host.to_string(), stage))
            .copied()
            .unwrap_or(Band::Low)
    }

    /// Stages on which `host` sits in the high band.
    pub fn high_stages(&self, host: &str) -> BTreeSet<u8> {
        self.bands
            .iter()
            .filter(|((h, _), band)| h == host && **band == Band::High)
            .map(|((_, stage), _)| *stage)
            .collect()
    }

    pub fn qualifies(&self, host: &str) -> bool {
        crate::campaign::STAGES
            .iter()
            .any(|s| self.band(host, *s) != Band::Low)
    }
}

/// Assigns each (host, stage) a band: high for the top `high_fraction` of
/// positive-risk hosts or an absolute risk at `high_risk`; medium likewise
/// one tier down; low otherwise.
pub fn stage_bands(risks: &[StageRisk], link: &LinkSection) -> BandTable {
    let mut table = BTreeMap::new();
    for stage in crate::campaign::STAGES {
        let mut positive: Vec<(&str, f64)> = risks
            .iter()
            .filter(|sr| sr.stage == stage && sr.risk > 0.0)
            .map(|sr| (sr.host.as_str(), sr.risk))
            .collect();
        positive.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.0.cmp(b.0))
        });
        let n = positive.len();
        let high_cut = (n as f64 * link.high_fraction).floor() as usize;
        let medium_cut = (n as f64 * link.medium_fraction).floor() as usize;
        for (position, (host, risk)) in positive.into_iter().enumerate() {
            let band = if position < high_cut || risk >= link.high_risk {
                Band::High
            } else if position < medium_cut || risk >= link.medium_risk {
                Band::Medium
            } else {
                Band::Low
            };
            if band != Band::Low {
                table.insert((host.to_string(), stage), band);
            }
        }
    }
    BandTable { bands: table }
}

/// A seed plus its qualifying one-hop neighborhood.
#[derive(Debug, Clone)]
pub struct CandidateCase {
    pub seed: String,
    /// Seed's position in the day's ranking (0 = riskiest).
    pub seed_position: usize,
    pub members: BTreeSet<String>,
}

/// Grows one candidate per top-ranked seed: the seed itself plus immediate
/// graph neighbors (either direction) holding a high or medium band on any
/// stage. Strictly one hop — reachability beyond the seed's own edges does
/// not qualify.
pub fn grow_candidates(
    ranking: &HostRanking,
    graph: &AssociationGraph,
    bands: &BandTable,
    seed_count: usize,
) -> Vec<CandidateCase> {
    ranking
        .hosts
        .iter()
        .take(seed_count)
        .enumerate()
        .map(|(seed_position, ranked)| {
            let seed = ranked.host.clone();
            let mut members = BTreeSet::from([seed.clone()]);
            for neighbor in graph.neighbors(&seed) {
                if bands.qualifies(neighbor) {
                    members.insert(neighbor.to_string());
                }
            }
            CandidateCase {
                seed,
                seed_position,
                members,
            }
        })
        .collect()
}

/// One surprising observation backing a case, attributed to the day that
/// contributed most of it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvidenceItem {
    pub day: NaiveDate,
    pub host: String,
    pub target: Target,
    pub remote: Option<String>,
    pub actual: f64,
    pub predicted_median: f64,
    pub p: f64,
    pub risk: f64,
    pub breakdown: Option<sparsefit::MultiplicativeView<f64>>,
    /// Ready-to-run search string for the backing raw logs.
    pub pivot: String,
}

/// Per-member summary carried on a case.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MemberDetail {
    pub stage_risks: [f64; 3],
    pub stage_ranks: [u32; 3],
    pub bands: [Band; 3],
}

/// A final multi-stage case.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Case {
    pub id: String,
    pub day: NaiveDate,
    pub seed: String,
    pub members: BTreeSet<String>,
    /// Stages some member holds at high band.
    pub covered_stages: BTreeSet<u8>,
    pub member_details: BTreeMap<String, MemberDetail>,
    /// Day-ordered narrative evidence.
    pub evidence: Vec<EvidenceItem>,
}

fn log_source(target: Target, remote: Option<&str>) -> &'static str {
    match target {
        Target::PtrLookups => "dns",
        Target::BytesPublished => match remote {
            Some(r) if !r.contains('/') => "proxy",
            _ => "flow",
        },
        _ => "flow",
    }
}

fn pivot_query(score: &SurpriseScore, day: NaiveDate) -> String {
    let source = log_source(score.target, score.remote.as_deref());
    let day = score.peak_day.unwrap_or(day);
    match &score.remote {
        Some(remote) => format!("source={source} day={day} host={} remote={remote}", score.host),
        None => format!("source={source} day={day} host={}", score.host),
    }
}

fn evidence_for_member(
    member: &str,
    scores: &[SurpriseScore],
    day: NaiveDate,
    evidence_floor: f64,
) -> Vec<EvidenceItem> {
    let member_scores: Vec<&SurpriseScore> =
        scores.iter().filter(|s| s.host == member).collect();
    let mut strong: Vec<&SurpriseScore> = member_scores
        .iter()
        .copied()
        .filter(|s| s.risk >= evidence_floor)
        .collect();
    if strong.is_empty() {
        // A member always carries at least its single most surprising
        // observation, however mild.
        strong = member_scores
            .iter()
            .copied()
            .max_by(|a, b| {
                a.risk
                    .partial_cmp(&b.risk)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then_with(|| b.target.cmp(&a.target))
            })
            .into_iter()
            .collect();
    }
    strong
        .into_iter()
        .map(|s| EvidenceItem {
            day: s.peak_day.unwrap_or(day),
            host: s.host.clone(),
            target: s.target,
            remote: s.remote.clone(),
            actual: s.actual,
            predicted_median: s.predicted_median,
            p: s.p,
            risk: s.risk,
            breakdown: s.breakdown.clone(),
            pivot: pivot_query(s, day),
        })
        .collect()
}

/// Filters candidates to final cases: members must jointly hold the high
/// band on at least two distinct stages, and any candidate whose member set
/// is contained in another surviving case's is folded away (equal sets keep
/// the better-ranked seed).
pub fn filter_cases(
    candidates: Vec<CandidateCase>,
    bands: &BandTable,
    ranking: &HostRanking,
    risks: &[StageRisk],
    scores: &[SurpriseScore],
    day: NaiveDate,
    evidence_floor: f64,
) -> Vec<Case> {
    let mut multi_stage: Vec<(CandidateCase, BTreeSet<u8>)> = candidates
        .into_iter()
        .filter_map(|c| {
            let covered: BTreeSet<u8> = c
                .members
                .iter()
                .flat_map(|m| bands.high_stages(m))
                .collect();
            (covered.len() >= 2).then_some((c, covered))
        })
        .collect();
    // Bigger member sets first so subset checks only look at survivors;
    // among equal sizes the better-ranked seed wins.
    multi_stage.sort_by(|a, b| {
        b.0.members
            .len()
            .cmp(&a.0.members.len())
            .then_with(|| a.0.seed_position.cmp(&b.0.seed_position))
    });
    let mut survivors: Vec<(CandidateCase, BTreeSet<u8>)> = Vec::new();
    for (candidate, covered) in multi_stage {
        let absorbed = survivors
            .iter()
            .any(|(kept, _)| candidate.members.is_subset(&kept.members));
        if !absorbed {
            survivors.push((candidate, covered));
        }
    }
    survivors.sort_by_key(|(c, _)| c.seed_position);

    let risk_of = |host: &str| -> [f64; 3] {
        let mut out = [0.0; 3];
        for sr in risks.iter().filter(|sr| sr.host == host) {
            out[(sr.stage - 3) as usize] = sr.risk;
        }
        out
    };
    survivors
        .into_iter()
        .map(|(candidate, covered_stages)| {
            let member_details: BTreeMap<String, MemberDetail> = candidate
                .members
                .iter()
                .map(|m| {
                    let ranks = ranking
                        .hosts
                        .iter()
                        .find(|h| h.host == *m)
                        .map(|h| h.stage_ranks)
                        .unwrap_or([0; 3]);
                    let detail = MemberDetail {
                        stage_risks: risk_of(m),
                        stage_ranks: ranks,
                        bands: [3, 4, 5].map(|s| bands.band(m, s)),
                    };
                    (m.clone(), detail)
                })
                .collect();
            let mut evidence: Vec<EvidenceItem> = candidate
                .members
                .iter()
                .flat_map(|m| evidence_for_member(m, scores, day, evidence_floor))
                .collect();
            evidence.sort_by(|a, b| {
                (a.day, &a.host, a.target, &a.remote).cmp(&(b.day, &b.host, b.target, &b.remote))
            });
            Case {
                id: format!("{}-{}", day.format("%Y%m%d"), candidate.seed),
                day,
                seed: candidate.seed,
                members: candidate.members,
                covered_stages,
                member_details,
                evidence,
            }
        })
        .collect()
}

/// The full linking pass for one day.
pub fn link_cases(
    day: NaiveDate,
    scores: &[SurpriseScore],
    risks: &[StageRisk],
    ranking: &HostRanking,
    link: &LinkSection,
) -> (AssociationGraph, Vec<Case>) {
    let graph = build_graph(risks, link.edge_threshold);
    let bands = stage_bands(risks, link);
    let candidates = grow_candidates(ranking, &graph, &bands, link.seed_count);
    let cases = filter_cases(
        candidates,
        &bands,
        ranking,
        risks,
        scores,
        day,
        link.evidence_floor,
    );
    (graph, cases)
}
