//! Composes surprise scores into per-stage risks (weighted sums, with a
//! destination level for data-movement stages) and fuses per-stage ranks
//! into one total score per host via the geometric mean.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::aggregate::Target;
use crate::config::ComboSection;
use crate::monitor::SurpriseScore;

/// The three monitored campaign stages.
pub const STAGES: [u8; 3] = [3, 4, 5];

/// Identifies one contributing score within a day's score set.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ScoreKey {
    pub target: Target,
    pub remote: Option<String>,
}

/// One host's combined risk for one campaign stage, with provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRisk {
    pub host: String,
    /// 3 reconnaissance, 4 collection, 5 exfiltration.
    pub stage: u8,
    pub risk: f64,
    /// Destination-level sub-risks (data-movement stages only).
    pub sub_risks: BTreeMap<String, f64>,
    /// Scores whose weighted contribution is positive.
    pub contributors: Vec<ScoreKey>,
}

/// Weighted sum of one host's reconnaissance-stage scores.
pub fn combo_recon(host: &str, scores: &[&SurpriseScore], combo: &ComboSection) -> StageRisk {
    let mut risk = 0.0;
    let mut contributors = Vec::new();
    for score in scores {
        debug_assert_eq!(score.target.stage(), 3);
        let contribution = combo.weight(score.target) * score.risk;
        risk += contribution;
        if contribution > 0.0 {
            contributors.push(ScoreKey {
                target: score.target,
                remote: None,
            });
        }
    }
    StageRisk {
        host: host.to_string(),
        stage: 3,
        risk,
        sub_risks: BTreeMap::new(),
        contributors,
    }
}

/// Two-level weighted sum of one host's data-movement scores for one stage:
/// per-destination sub-risks first, then a destination-weighted total.
pub fn combo_flow(
    host: &str,
    stage: u8,
    scores: &[&SurpriseScore],
    combo: &ComboSection,
) -> StageRisk {
    let mut sub_risks: BTreeMap<String, f64> = BTreeMap::new();
    let mut contributors = Vec::new();
    for score in scores {
        debug_assert_eq!(score.target.stage(), stage);
        let remote = score.remote.clone().unwrap_or_default();
        let contribution = combo.weight(score.target) * score.risk;
        *sub_risks.entry(remote).or_insert(0.0) += contribution;
        if contribution > 0.0 {
            contributors.push(ScoreKey {
                target: score.target,
                remote: score.remote.clone(),
            });
        }
    }
    let risk = combo.destination_weight * sub_risks.values().sum::<f64>();
    StageRisk {
        host: host.to_string(),
        stage,
        risk,
        sub_risks,
        contributors,
    }
}

/// Groups a day's scores by host and composes all three stage risks.
pub fn stage_risks(scores: &[SurpriseScore], combo: &ComboSection) -> Vec<StageRisk> {
    let mut by_host: BTreeMap<&str, [Vec<&SurpriseScore>; 3]> = BTreeMap::new();
    for score in scores {
        let slot = (score.target.stage() - 3) as usize;
        by_host.entry(&score.host).or_default()[slot].push(score);
    }
    let mut out = Vec::new();
    for (host, buckets) in by_host {
        out.push(combo_recon(host, &buckets[0], combo));
        out.push(combo_flow(host, 4, &buckets[1], combo));
        out.push(combo_flow(host, 5, &buckets[2], combo));
    }
    out
}

/// One host's position in the day's ranking.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankedHost {
    pub host: String,
    /// Risk per stage, index 0..3 meaning stages 3, 4, 5.
    pub stage_risks: [f64; 3],
    /// Dense rank per stage (1 = riskiest); inactive stages rank one past
    /// the ranked field.
    pub stage_ranks: [u32; 3],
    /// Geometric mean of the stage ranks; smaller is riskier.
    pub total_score: f64,
}

/// All hosts ordered by total score, riskiest first.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct HostRanking {
    pub hosts: Vec<RankedHost>,
}

impl HostRanking {
    pub fn position(&self, host: &str) -> Option<usize> {
        self.hosts.iter().position(|h| h.host == host)
    }
}

/// Geometric mean of three rank positions. Perfect cubes come back exact so
/// that integer triples like (2, 4, 8) rank identically across platforms.
pub fn total_score(r3: u32, r4: u32, r5: u32) -> f64 {
    let product = u128::from(r3) * u128::from(r4) * u128::from(r5);
    let guess = (product as f64).cbrt().round() as u128;
    for candidate in guess.saturating_sub(1)..=guess + 1 {
        if candidate.checked_pow(3) == Some(product) {
            return candidate as f64;
        }
    }
    (product as f64).cbrt()
}

/// Arithmetic mean of the same ranks. Not used for ranking: a single good
/// rank cannot pull the mean down, so one-stage standouts drown out
/// multi-stage campaigns. Kept for the documented contrast.
pub fn arithmetic_mean_rank(r3: u32, r4: u32, r5: u32) -> f64 {
    f64::from(r3 + r4 + r5) / 3.0
}

/// Dense descending ranks over positive risks: ties share the better rank;
/// hosts without positive risk rank one past the field.
fn dense_ranks(risks: &BTreeMap<String, f64>) -> (BTreeMap<String, u32>, u32) {
    let mut positive: Vec<(&String, f64)> = risks
        .iter()
        .filter(|(_, r)| **r > 0.0)
        .map(|(h, r)| (h, *r))
        .collect();
    positive.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(b.0))
    });
    let mut ranks = BTreeMap::new();
    let mut rank = 0u32;
    let mut last_risk = f64::INFINITY;
    for (host, risk) in &positive {
        if *risk < last_risk {
            rank += 1;
            last_risk = *risk;
        }
        ranks.insert((*host).clone(), rank);
    }
    (ranks, positive.len() as u32)
}

/// Ranks every host appearing in `risks`: dense per-stage ranks, geometric
/// total, ascending order (ties broken by name).
pub fn rank_hosts(risks: &[StageRisk]) -> HostRanking {
    let mut per_stage: [BTreeMap<String, f64>; 3] = Default::default();
    let mut hosts: BTreeMap<String, [f64; 3]> = BTreeMap::new();
    for sr in risks {
        let slot = (sr.stage - 3) as usize;
        per_stage[slot].insert(sr.host.clone(), sr.risk);
        hosts.entry(sr.host.clone()).or_insert([0.0; 3])[slot] = sr.risk;
    }
    let ranked: Vec<(BTreeMap<String, u32>, u32)> = per_stage.iter().map(dense_ranks).collect();
    let mut out: Vec<RankedHost> = hosts
        .into_iter()
        .map(|(host, stage_risks)| {
            let mut stage_ranks = [0u32; 3];
            for (slot, (ranks, count)) in ranked.iter().enumerate() {
                stage_ranks[slot] = ranks.get(&host).copied().unwrap_or(count + 1);
            }
            let total_score = total_score(stage_ranks[0], stage_ranks[1], stage_ranks[2]);
            RankedHost {
                host,
                stage_risks,
                stage_ranks,
                total_score,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        a.total_score
            .partial_cmp(&b.total_score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.host.cmp(&b.host))
    });
    HostRanking { hosts: out }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn score(host: &str, target: Target, remote: Option<&str>, risk: f64) -> SurpriseScore {
        SurpriseScore {
            host: host.into(),
            target,
            remote: remote.map(String::from),
            actual: 1.0,
            predicted_median: 1.0,
            p: 10f64.powf(-risk),
            risk,
            peak_day: None,
            breakdown: None,
        }
    }

    fn uniform_combo() -> ComboSection {
        ComboSection {
            weights: Target::ALL.into_iter().map(|t| (t, 1.0)).collect(),
            destination_weight: 1.0,
        }
    }

    #[test]
    fn recon_risk_is_the_weighted_sum() {
        let combo = uniform_combo();
        let a = score("a", Target::NeighborsTotal, None, 2.0);
        let b = score("a", Target::PtrLookups, None, 1.0);
        let risk = combo_recon("a", &[&a, &b], &combo);
        assert_eq!(risk.risk, 3.0);
        assert_eq!(risk.contributors.len(), 2);

        let mut weighted = uniform_combo();
        weighted.weights.insert(Target::NeighborsTotal, 2.0);
        weighted.weights.insert(Target::PtrLookups, 0.0);
        let a = score("a", Target::NeighborsTotal, None, 1.5);
        let b = score("a", Target::PtrLookups, None, 9.9);
        let risk = combo_recon("a", &[&a, &b], &weighted);
        assert_eq!(risk.risk, 3.0);
        // The zero-weighted score contributes nothing, so it is no
        // provenance either.
        assert_eq!(risk.contributors.len(), 1);
    }

    #[test]
    fn flow_risk_sums_destinations_after_weighting() {
        let combo = uniform_combo();
        let one = score("b", Target::BytesConsumed, Some("a"), 4.0);
        let risk = combo_flow("b", 4, &[&one], &combo);
        assert_eq!(risk.risk, 4.0);
        assert_eq!(risk.sub_risks["a"], 4.0);

        let d1 = score("b", Target::BytesConsumed, Some("d"), 3.0);
        let d2 = score("b", Target::BytesConsumed, Some("e"), 2.0);
        let risk = combo_flow("b", 4, &[&d1, &d2], &combo);
        assert_eq!(risk.risk, 5.0);
        assert_eq!(risk.sub_risks.len(), 2);
    }

    #[test]
    fn doubling_scores_doubles_stage_risk() {
        let combo = uniform_combo();
        let scores: Vec<SurpriseScore> = vec![
            score("a", Target::NeighborsTotal, None, 1.25),
            score("a", Target::PortsData, None, 0.5),
            score("a", Target::BytesConsumed, Some("x"), 2.0),
        ];
        let doubled: Vec<SurpriseScore> = scores
            .iter()
            .map(|s| SurpriseScore {
                risk: s.risk * 2.0,
                ..s.clone()
            })
            .collect();
        let base = stage_risks(&scores, &combo);
        let twice = stage_risks(&doubled, &combo);
        for (b, t) in base.iter().zip(&twice) {
            assert!((t.risk - 2.0 * b.risk).abs() < 1e-12);
        }
    }

    #[test]
    fn total_score_matches_documented_anchors() {
        assert!((total_score(1, 10, 1000) - 21.544).abs() < 1e-3);
        assert_eq!(total_score(1, 1, 1), 1.0);
        assert_eq!(total_score(2, 4, 8), 4.0);
        assert!((arithmetic_mean_rank(1, 10, 1000) - 337.0).abs() < 0.5);
    }

    #[test]
    fn multi_stage_presence_beats_single_stage_standing() {
        // Two strong stages with one weak beat one perfect stage with two
        // weak ones, which is the point of the geometric mean.
        assert!(total_score(5, 5, 95) < total_score(1, 95, 95));
        assert!(total_score(2, 3, 90) < total_score(1, 80, 80));
        // Under the arithmetic mean one bad stage swamps two excellent
        // ones, so a uniformly mediocre host would come out ahead.
        assert!(arithmetic_mean_rank(1, 10, 1000) > arithmetic_mean_rank(30, 30, 30));
    }

    #[test]
    fn ranking_is_dense_with_ties_sharing_the_better_rank() {
        let combo = uniform_combo();
        let scores = vec![
            score("a", Target::NeighborsTotal, None, 5.0),
            score("b", Target::NeighborsTotal, None, 5.0),
            score("c", Target::NeighborsTotal, None, 2.0),
            score("d", Target::NeighborsTotal, None, 0.0),
        ];
        let ranking = rank_hosts(&stage_risks(&scores, &combo));
        let by_host: BTreeMap<&str, &RankedHost> = ranking
            .hosts
            .iter()
            .map(|h| (h.host.as_str(), h))
            .collect();
        assert_eq!(by_host["a"].stage_ranks[0], 1);
        assert_eq!(by_host["b"].stage_ranks[0], 1);
        assert_eq!(by_host["c"].stage_ranks[0], 2);
        // No positive recon risk: one past the three ranked hosts.
        assert_eq!(by_host["d"].stage_ranks[0], 4);
        // Stages without any activity rank everyone at count + 1 = 1.
        assert_eq!(by_host["a"].stage_ranks[1], 1);
    }

    #[test]
    fn scaling_one_stage_leaves_the_ranking_unchanged() {
        let combo = uniform_combo();
        let mut scores = vec![
            score("a", Target::NeighborsTotal, None, 5.0),
            score("a", Target::BytesConsumed, Some("x"), 1.0),
            score("b", Target::NeighborsTotal, None, 3.0),
            score("b", Target::BytesConsumed, Some("y"), 4.0),
            score("c", Target::BytesPublished, Some("z"), 2.5),
        ];
        let before = rank_hosts(&stage_risks(&scores, &combo));
        for s in &mut scores {
            if s.target == Target::BytesConsumed {
                s.risk *= 37.5;
            }
        }
        let after = rank_hosts(&stage_risks(&scores, &combo));
        for (b, a) in before.hosts.iter().zip(&after.hosts) {
            assert_eq!(b.host, a.host);
            assert_eq!(b.stage_ranks, a.stage_ranks);
            assert_eq!(b.total_score, a.total_score);
        }
    }

    #[test]
    fn empty_input_ranks_nothing() {
        assert!(rank_hosts(&[]).hosts.is_empty());
    }
}
