use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::table::{Column, Value};
use crate::{Error, Scalar};

/// Encoder families selectable per input column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EncoderKind {
    /// Numeric value copied through as a single feature.
    Passthrough,
    /// Indicator feature per quantile bin of the training distribution.
    QuantileBins,
    /// Indicator feature per leaf of a single-input regression tree.
    Tree,
    /// Indicator feature per dictionary value.
    OneHot,
    /// Clusters rows by string value, summarizes each cluster by size and
    /// mean target, then bins both summaries and their interactions.
    ClusterString,
}

/// Hyperparameters consulted by [`fit_encoder`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    /// Bin count for `QuantileBins`.
    pub bins: usize,
    /// Minimum rows per leaf for `Tree`.
    pub tree_min_leaf: usize,
    /// Maximum leaves for `Tree`.
    pub tree_max_leaves: usize,
    /// Clusters smaller than this are pooled into the rare bucket.
    pub cluster_min_samples: usize,
    /// Bin count for cluster size/mean summaries.
    pub cluster_bins: usize,
}

impl Default for EncoderParams {
    fn default() -> Self {
        EncoderParams {
            bins: 8,
            tree_min_leaf: 50,
            tree_max_leaves: 16,
            cluster_min_samples: 30,
            cluster_bins: 8,
        }
    }
}

/// Per-cluster summary used by the cluster-string encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats<F> {
    pub count: u64,
    pub mean_target: F,
}

/// A fitted, immutable column encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Serialize", deserialize = "F: serde::de::DeserializeOwned"))]
pub enum Encoder<F> {
    Passthrough {
        column: String,
    },
    QuantileBins {
        column: String,
        fenceposts: Vec<F>,
    },
    Tree {
        column: String,
        cuts: Vec<F>,
    },
    OneHot {
        column: String,
        /// Dictionary values in first-seen order.
        dictionary: Vec<String>,
    },
    ClusterString {
        column: String,
        clusters: BTreeMap<String, ClusterStats<F>>,
        /// Pooled statistics for values below the minimum sample size; also
        /// used for values unseen at fit time.
        rare: Option<ClusterStats<F>>,
        mean_fences: Vec<F>,
        count_fences: Vec<F>,
    },
}

/// Midpoint fenceposts splitting sorted `values` into up to `bins`
/// equal-occupancy bins. Duplicate fenceposts collapse, so ties can reduce
/// the effective bin count.
pub fn quantile_fenceposts<F: Scalar>(values: &[F], bins: usize) -> Vec<F> {
    if values.len() < 2 || bins < 2 {
        return Vec::new();
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = v.len();
    let two = F::from_f64(2.0).unwrap();
    let mut fences = Vec::new();
    for i in 1..bins {
        let pos = i * n / bins;
        if pos == 0 || pos >= n {
            continue;
        }
        let f = (v[pos - 1] + v[pos]) / two;
        if v[pos - 1] < v[pos] && fences.last() != Some(&f) {
            fences.push(f);
        }
    }
    fences
}

/// Index of the half-open interval `(fence[i-1], fence[i]]` containing `x`.
pub fn bin_index<F: Scalar>(x: F, fences: &[F]) -> usize {
    fences.partition_point(|f| *f < x)
}

fn fmt_bound<F: Scalar>(v: F) -> String {
    format!("{v}")
}

fn interval_label<F: Scalar>(fences: &[F], bin: usize) -> String {
    let lo = if bin == 0 {
        "-inf".to_string()
    } else {
        fmt_bound(fences[bin - 1])
    };
    let hi = if bin == fences.len() {
        "+inf".to_string()
    } else {
        fmt_bound(fences[bin])
    };
    let close = if bin == fences.len() { ")" } else { "]" };
    format!("({lo}, {hi}{close}")
}

fn require_num<'a, F: Scalar>(column: &str, col: &'a Column<F>) -> Result<&'a [Option<F>], Error> {
    match col {
        Column::Num(v) => Ok(v),
        other => Err(Error::ColumnKind {
            column: column.to_string(),
            expected: "numeric",
            actual: other.kind().name(),
        }),
    }
}

fn require_str<'a, F: Scalar>(
    column: &str,
    col: &'a Column<F>,
) -> Result<&'a [Option<String>], Error> {
    match col {
        Column::Str(v) => Ok(v),
        other => Err(Error::ColumnKind {
            column: column.to_string(),
            expected: "string",
            actual: other.kind().name(),
        }),
    }
}

fn require_target<F>(
    kind: EncoderKind,
    target: Option<&[F]>,
    rows: usize,
) -> Result<&[F], Error> {
    let t = target.ok_or_else(|| {
        Error::InvalidParam(format!("{kind:?} encoder needs target values to fit"))
    })?;
    if t.len() != rows {
        return Err(Error::RowTargetMismatch {
            rows,
            targets: t.len(),
        });
    }
    Ok(t)
}

/// Greedy variance-reduction splits for the tree encoder; returns sorted cuts.
fn tree_cuts<F: Scalar>(mut pairs: Vec<(F, F)>, min_leaf: usize, max_leaves: usize) -> Vec<F> {
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let xs: Vec<F> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<F> = pairs.iter().map(|p| p.1).collect();
    let n = xs.len();
    if n == 0 || max_leaves < 2 {
        return Vec::new();
    }
    // Prefix sums of y and y^2 for O(1) segment SSE.
    let mut sum = vec![F::zero(); n + 1];
    let mut sum2 = vec![F::zero(); n + 1];
    for i in 0..n {
        sum[i + 1] = sum[i] + ys[i];
        sum2[i + 1] = sum2[i] + ys[i] * ys[i];
    }
    let sse = |a: usize, b: usize| -> F {
        // SSE of rows [a, b)
        let cnt = F::from_usize(b - a).unwrap();
        let s = sum[b] - sum[a];
        let s2 = sum2[b] - sum2[a];
        s2 - s * s / cnt
    };
    // Best split of segment [a, b): (gain, split_index, cut_value)
    let best_split = |a: usize, b: usize| -> Option<(F, usize, F)> {
        let parent = sse(a, b);
        let mut best: Option<(F, usize, F)> = None;
        for i in (a + 1)..b {
            if xs[i - 1] >= xs[i] {
                continue; // only split between distinct values
            }
            if i - a < min_leaf || b - i < min_leaf {
                continue;
            }
            let gain = parent - sse(a, i) - sse(i, b);
            let two = F::from_f64(2.0).unwrap();
            let cut = (xs[i - 1] + xs[i]) / two;
            if best.is_none_or(|(g, _, _)| gain > g) {
                best = Some((gain, i, cut));
            }
        }
        best
    };
    let mut segments = vec![(0usize, n)];
    let mut cuts: Vec<F> = Vec::new();
    while segments.len() < max_leaves {
        let mut chosen: Option<(usize, (F, usize, F))> = None;
        for (si, &(a, b)) in segments.iter().enumerate() {
            if let Some(split) = best_split(a, b) {
                let better = match &chosen {
                    None => true,
                    Some((_, (g, _, _))) => split.0 > *g,
                };
                if better && split.0 > F::zero() {
                    chosen = Some((si, split));
                }
            }
        }
        let Some((si, (_, at, cut))) = chosen else { break };
        let (a, b) = segments[si];
        segments[si] = (a, at);
        segments.insert(si + 1, (at, b));
        cuts.push(cut);
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    cuts
}

/// Fits an encoder of the requested kind over one column.
///
/// `target` is required by the target-aware kinds (`Tree`, `ClusterString`).
/// Returns the fitted encoder plus human-readable warnings (bin clamping,
/// degenerate columns).
pub fn fit_encoder<F: Scalar>(
    kind: EncoderKind,
    column: &str,
    col: &Column<F>,
    target: Option<&[F]>,
    params: &EncoderParams,
) -> Result<(Encoder<F>, Vec<String>), Error> {
    let mut warnings = Vec::new();
    let encoder = match kind {
        EncoderKind::Passthrough => {
            require_num(column, col)?;
            Encoder::Passthrough {
                column: column.to_string(),
            }
        }
        EncoderKind::QuantileBins => {
            let vals = require_num(column, col)?;
            let present: Vec<F> = vals.iter().filter_map(|v| *v).collect();
            if params.bins < 2 {
                return Err(Error::InvalidParam(format!(
                    "quantile bins must be >= 2, got {}",
                    params.bins
                )));
            }
            let fenceposts = quantile_fenceposts(&present, params.bins);
            if fenceposts.is_empty() {
                warnings.push(format!(
                    "column `{column}`: constant or empty, quantile encoder degenerates to one bin"
                ));
            } else if fenceposts.len() + 1 < params.bins {
                warnings.push(format!(
                    "column `{column}`: ties reduce quantile bins from {} to {}",
                    params.bins,
                    fenceposts.len() + 1
                ));
            }
            Encoder::QuantileBins {
                column: column.to_string(),
                fenceposts,
            }
        }
        EncoderKind::Tree => {
            let vals = require_num(column, col)?;
            let t = require_target(kind, target, vals.len())?;
            let pairs: Vec<(F, F)> = vals
                .iter()
                .zip(t)
                .filter_map(|(x, y)| x.map(|x| (x, *y)))
                .collect();
            let cuts = tree_cuts(pairs, params.tree_min_leaf, params.tree_max_leaves);
            if cuts.is_empty() {
                warnings.push(format!(
                    "column `{column}`: no admissible split, tree encoder degenerates to one leaf"
                ));
            }
            Encoder::Tree {
                column: column.to_string(),
                cuts,
            }
        }
        EncoderKind::OneHot => {
            let vals = require_str(column, col)?;
            let mut dictionary = Vec::new();
            let mut seen = std::collections::BTreeSet::new();
            for v in vals.iter().flatten() {
                if seen.insert(v.clone()) {
                    dictionary.push(v.clone());
                }
            }
            if dictionary.is_empty() {
                warnings.push(format!("column `{column}`: empty dictionary"));
            }
            Encoder::OneHot {
                column: column.to_string(),
                dictionary,
            }
        }
        EncoderKind::ClusterString => {
            let vals = require_str(column, col)?;
            let t = require_target(kind, target, vals.len())?;
            let mut sums: BTreeMap<&str, (u64, F)> = BTreeMap::new();
            for (v, y) in vals.iter().zip(t) {
                if let Some(v) = v {
                    let e = sums.entry(v.as_str()).or_insert((0, F::zero()));
                    e.0 += 1;
                    e.1 += *y;
                }
            }
            let min = params.cluster_min_samples as u64;
            let mut clusters: BTreeMap<String, ClusterStats<F>> = BTreeMap::new();
            let mut rare_count = 0u64;
            let mut rare_sum = F::zero();
            for (v, (count, sum)) in &sums {
                if *count >= min {
                    clusters.insert(
                        v.to_string(),
                        ClusterStats {
                            count: *count,
                            mean_target: *sum / F::from_u64(*count).unwrap(),
                        },
                    );
                } else {
                    rare_count += count;
                    rare_sum += *sum;
                }
            }
            let rare = if rare_count > 0 {
                Some(ClusterStats {
                    count: rare_count,
                    mean_target: rare_sum / F::from_u64(rare_count).unwrap(),
                })
            } else {
                None
            };
            let mut means: Vec<F> = clusters.values().map(|c| c.mean_target).collect();
            let mut counts: Vec<F> = clusters
                .values()
                .map(|c| F::from_u64(c.count).unwrap())
                .collect();
            if let Some(r) = &rare {
                means.push(r.mean_target);
                counts.push(F::from_u64(r.count).unwrap());
            }
            let mean_fences = quantile_fenceposts(&means, params.cluster_bins);
            let count_fences = quantile_fenceposts(&counts, params.cluster_bins);
            if clusters.is_empty() && rare.is_none() {
                warnings.push(format!("column `{column}`: no values to cluster"));
            }
            Encoder::ClusterString {
                column: column.to_string(),
                clusters,
                rare,
                mean_fences,
                count_fences,
            }
        }
    };
    Ok((encoder, warnings))
}

impl<F: Scalar> Encoder<F> {
    /// Source column this encoder reads.
    pub fn column(&self) -> &str {
        match self {
            Encoder::Passthrough { column }
            | Encoder::QuantileBins { column, .. }
            | Encoder::Tree { column, .. }
            | Encoder::OneHot { column, .. }
            | Encoder::ClusterString { column, .. } => column,
        }
    }

    /// Number of features this encoder emits.
    pub fn width(&self) -> usize {
        match self {
            Encoder::Passthrough { .. } => 1,
            Encoder::QuantileBins { fenceposts, .. } => fenceposts.len() + 1,
            Encoder::Tree { cuts, .. } => cuts.len() + 1,
            Encoder::OneHot { dictionary, .. } => dictionary.len(),
            Encoder::ClusterString {
                mean_fences,
                count_fences,
                ..
            } => {
                let m = mean_fences.len() + 1;
                let c = count_fences.len() + 1;
                m + c + m * c
            }
        }
    }

    /// Human-readable derivation string per emitted feature.
    pub fn derivations(&self) -> Vec<String> {
        match self {
            Encoder::Passthrough { column } => vec![column.clone()],
            Encoder::QuantileBins { column, fenceposts } => (0..fenceposts.len() + 1)
                .map(|b| format!("{column} in {}", interval_label(fenceposts, b)))
                .collect(),
            Encoder::Tree { column, cuts } => (0..cuts.len() + 1)
                .map(|b| format!("{column} in {}", interval_label(cuts, b)))
                .collect(),
            Encoder::OneHot { column, dictionary } => dictionary
                .iter()
                .map(|v| format!("{column} = \"{v}\""))
                .collect(),
            Encoder::ClusterString {
                column,
                mean_fences,
                count_fences,
                ..
            } => {
                let m = mean_fences.len() + 1;
                let c = count_fences.len() + 1;
                let mut out = Vec::with_capacity(m + c + m * c);
                for b in 0..m {
                    out.push(format!(
                        "cluster({column}) mean in {}",
                        interval_label(mean_fences, b)
                    ));
                }
                for b in 0..c {
                    out.push(format!(
                        "cluster({column}) count in {}",
                        interval_label(count_fences, b)
                    ));
                }
                for bm in 0..m {
                    for bc in 0..c {
                        out.push(format!(
                            "cluster({column}) mean in {} and count in {}",
                            interval_label(mean_fences, bm),
                            interval_label(count_fences, bc)
                        ));
                    }
                }
                out
            }
        }
    }

    /// Encodes one cell into (relative feature index, value) pairs with
    /// strictly increasing indices. Missing and unseen values produce an
    /// all-zero block (the cluster encoder routes unseen values through the
    /// rare bucket when one exists).
    pub fn encode(&self, value: &Value<'_, F>) -> Vec<(usize, F)> {
        match self {
            Encoder::Passthrough { .. } => match value {
                Value::Num(x) if *x != F::zero() => vec![(0, *x)],
                _ => Vec::new(),
            },
            Encoder::QuantileBins { fenceposts, .. } => match value {
                Value::Num(x) => vec![(bin_index(*x, fenceposts), F::one())],
                _ => Vec::new(),
            },
            Encoder::Tree { cuts, .. } => match value {
                Value::Num(x) => vec![(bin_index(*x, cuts), F::one())],
                _ => Vec::new(),
            },
            Encoder::OneHot { dictionary, .. } => match value {
                Value::Str(s) => dictionary
                    .iter()
                    .position(|d| d == s)
                    .map(|i| vec![(i, F::one())])
                    .unwrap_or_default(),
                _ => Vec::new(),
            },
            Encoder::ClusterString {
                clusters,
                rare,
                mean_fences,
                count_fences,
                ..
            } => {
                let stats = match value {
                    Value::Str(s) => clusters.get(*s).or(rare.as_ref()),
                    _ => None,
                };
                let Some(stats) = stats else {
                    return Vec::new();
                };
                let m = mean_fences.len() + 1;
                let c = count_fences.len() + 1;
                let bm = bin_index(stats.mean_target, mean_fences);
                let bc = bin_index(F::from_u64(stats.count).unwrap(), count_fences);
                vec![
                    (bm, F::one()),
                    (m + bc, F::one()),
                    (m + c + bm * c + bc, F::one()),
                ]
            }
        }
    }
}
