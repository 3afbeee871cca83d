//! Plain-text rendering of rankings, run summaries, and case files for the
//! command-line surface.

use std::fmt::Write as _;

use crate::aggregate::Target;
use crate::campaign::HostRanking;
use crate::link::{Case, EvidenceItem};
use crate::store::RunSummary;
use sparsefit::MultiplicativeView;

/// Formats a byte volume in decimal units with two decimals.
pub fn format_bytes(value: f64) -> String {
    const UNITS: [&str; 6] = ["B", "KB", "MB", "GB", "TB", "PB"];
    if !value.is_finite() {
        return format!("{value}");
    }
    let magnitude = value.abs();
    if magnitude < 1000.0 {
        return format!("{value:.0} B");
    }
    let mut scaled = value;
    let mut unit = 0;
    while scaled.abs() >= 1000.0 && unit + 1 < UNITS.len() {
        scaled /= 1000.0;
        unit += 1;
    }
    format!("{scaled:.2} {}", UNITS[unit])
}

/// Formats a target's value in its natural units: byte volumes for the
/// data-movement quantities, plain counts otherwise.
pub fn format_quantity(target: Target, value: f64) -> String {
    if target.per_destination() {
        format_bytes(value)
    } else {
        format!("{value:.0}")
    }
}

fn stage_label(stage: u8) -> &'static str {
    match stage {
        3 => "reconnaissance",
        4 => "collection",
        5 => "exfiltration",
        _ => "unknown",
    }
}

/// Renders `baseline x f1 x f2 ... = prediction`, the multiplicative reading
/// of one prediction.
pub fn render_factor_chain(view: &MultiplicativeView<f64>, bytes: bool) -> String {
    let fmt = |v: f64| {
        if bytes {
            format_bytes(v)
        } else {
            format!("{v:.2}")
        }
    };
    let mut out = format!("baseline {}", fmt(view.baseline));
    for (name, factor) in &view.factors {
        let _ = write!(out, " x {factor:.2} ({name})");
    }
    let _ = write!(out, " = {}", fmt(view.prediction));
    out
}

fn render_evidence_item(out: &mut String, index: usize, item: &EvidenceItem) {
    let what = match &item.remote {
        Some(remote) => format!("{} / {remote}", item.target.name()),
        None => item.target.name().to_string(),
    };
    let _ = writeln!(out, "{:>3}. {}  {}  {}", index, item.day, item.host, what);
    let _ = writeln!(
        out,
        "     actual {}, expected {} (p {:.2e}, risk {:.1})",
        format_quantity(item.target, item.actual),
        format_quantity(item.target, item.predicted_median),
        item.p,
        item.risk,
    );
    if let Some(view) = &item.breakdown {
        let _ = writeln!(
            out,
            "     {}",
            render_factor_chain(view, item.target.per_destination())
        );
    }
    let _ = writeln!(out, "     pivot: {}", item.pivot);
}

/// The full `explain` view of one case.
pub fn render_case(case: &Case) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "case {}  (day {})", case.id, case.day);
    let members: Vec<&str> = case.members.iter().map(String::as_str).collect();
    let _ = writeln!(out, "seed: {}  members: {}", case.seed, members.join(", "));
    let stages: Vec<String> = case
        .covered_stages
        .iter()
        .map(|s| format!("{s} ({})", stage_label(*s)))
        .collect();
    let _ = writeln!(out, "stages covered: {}", stages.join(", "));
    out.push('\n');
    for (member, detail) in &case.member_details {
        let _ = writeln!(
            out,
            "{member}: stage risks {:.1} / {:.1} / {:.1}  bands {}/{}/{}",
            detail.stage_risks[0],
            detail.stage_risks[1],
            detail.stage_risks[2],
            detail.bands[0].name(),
            detail.bands[1].name(),
            detail.bands[2].name(),
        );
    }
    out.push('\n');
    let _ = writeln!(out, "evidence ({} items, day order):", case.evidence.len());
    for (i, item) in case.evidence.iter().enumerate() {
        render_evidence_item(&mut out, i + 1, item);
    }
    out
}

/// The ranking table, riskiest machine first.
pub fn render_ranking(ranking: &HostRanking, limit: usize) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>4}  {:<20} {:>8} {:>8} {:>8} {:>8}",
        "rank", "host", "total", "recon", "collect", "exfil"
    );
    for (i, host) in ranking.hosts.iter().take(limit).enumerate() {
        let _ = writeln!(
            out,
            "{:>4}  {:<20} {:>8.3} {:>8.1} {:>8.1} {:>8.1}",
            i + 1,
            host.host,
            host.total_score,
            host.stage_risks[0],
            host.stage_risks[1],
            host.stage_risks[2],
        );
    }
    out
}

/// The run banner printed after a daily run.
pub fn render_summary(summary: &RunSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "day {}: scored window {}..{}, models trained through {}",
        summary.day, summary.scored_window.0, summary.scored_window.1, summary.trained_through
    );
    let _ = writeln!(
        out,
        "hosts ranked: {}, scores written: {}, unresolved addresses: {}, rejected lines: {}",
        summary.hosts_ranked, summary.scores_written, summary.unresolved, summary.rejects
    );
    if summary.cases.is_empty() {
        let _ = writeln!(out, "cases: none");
    } else {
        let _ = writeln!(out, "cases: {}", summary.cases.join(", "));
    }
    for warning in &summary.warnings {
        let _ = writeln!(out, "warning: {warning}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_volumes_use_decimal_units() {
        assert_eq!(format_bytes(0.0), "0 B");
        assert_eq!(format_bytes(999.0), "999 B");
        assert_eq!(format_bytes(1500.0), "1.50 KB");
        assert_eq!(format_bytes(338_220.0), "338.22 KB");
        assert_eq!(format_bytes(10_100_000.0), "10.10 MB");
        assert_eq!(format_bytes(3e9), "3.00 GB");
        assert_eq!(format_bytes(2.5e12), "2.50 TB");
    }

    #[test]
    fn factor_chains_multiply_out_in_front_of_the_reader() {
        let view = MultiplicativeView {
            baseline: 338_220.0,
            factors: vec![
                ("history".to_string(), 26.27),
                ("dest_median".to_string(), 1.83),
                ("cidr_label=Users".to_string(), 0.62),
            ],
            prediction: 338_220.0 * 26.27 * 1.83 * 0.62,
        };
        let text = render_factor_chain(&view, true);
        assert_eq!(
            text,
            "baseline 338.22 KB x 26.27 (history) x 1.83 (dest_median) x 0.62 (cidr_label=Users) = 10.08 MB"
        );
    }

    #[test]
    fn counts_render_without_units() {
        assert_eq!(format_quantity(Target::NeighborsTotal, 79.0), "79");
        assert_eq!(
            format_quantity(Target::BytesConsumed, 120_000_000.0),
            "120.00 MB"
        );
    }
}
