use serde::{Deserialize, Serialize};

use crate::encoder::Encoder;
use crate::{DataTable, Error, Scalar};

/// Default ceiling on feature count after interaction expansion.
pub const DEFAULT_FEATURE_CAP: usize = 20_000;

/// Per-feature metadata: where the feature came from and its training
/// moments (filled by standardization in the fitting step).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Serialize", deserialize = "F: serde::de::DeserializeOwned"))]
pub struct FeatureMeta<F> {
    pub derivation: String,
    pub mean: F,
    pub std: F,
}

impl<F: Scalar> FeatureMeta<F> {
    fn new(derivation: String) -> Self {
        FeatureMeta {
            derivation,
            mean: F::zero(),
            std: F::one(),
        }
    }
}

/// Row-major sparse feature matrix: each row stores only non-zero entries as
/// `(feature index, value)` pairs with strictly increasing indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix<F> {
    rows: Vec<Vec<(u32, F)>>,
    meta: Vec<FeatureMeta<F>>,
}

impl<F: Scalar> SparseMatrix<F> {
    pub fn new(meta: Vec<FeatureMeta<F>>) -> Self {
        SparseMatrix {
            rows: Vec::new(),
            meta,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows.len()
    }

    pub fn width(&self) -> usize {
        self.meta.len()
    }

    pub fn row(&self, i: usize) -> &[(u32, F)] {
        &self.rows[i]
    }

    pub fn meta(&self) -> &[FeatureMeta<F>] {
        &self.meta
    }

    pub fn meta_mut(&mut self) -> &mut [FeatureMeta<F>] {
        &mut self.meta
    }

    pub fn derivations(&self) -> Vec<String> {
        self.meta.iter().map(|m| m.derivation.clone()).collect()
    }

    /// Appends a row; entries must be non-zero with strictly increasing
    /// indices inside the matrix width.
    pub fn push_row(&mut self, entries: Vec<(u32, F)>) -> Result<(), Error> {
        let mut last: Option<u32> = None;
        for &(idx, v) in &entries {
            if idx as usize >= self.meta.len() {
                return Err(Error::InvalidParam(format!(
                    "feature index {idx} out of range ({} features)",
                    self.meta.len()
                )));
            }
            if v == F::zero() {
                return Err(Error::InvalidParam(format!(
                    "explicit zero entry at feature {idx}"
                )));
            }
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: "sparse matrix entry",
                });
            }
            if let Some(prev) = last {
                if idx <= prev {
                    return Err(Error::InvalidParam(format!(
                        "row indices not strictly increasing at feature {idx}"
                    )));
                }
            }
            last = Some(idx);
        }
        self.rows.push(entries);
        Ok(())
    }

    /// Dense value lookup (test and reporting aid).
    pub fn get(&self, row: usize, feature: usize) -> F {
        self.rows[row]
            .iter()
            .find(|(i, _)| *i as usize == feature)
            .map(|(_, v)| *v)
            .unwrap_or_else(F::zero)
    }

    /// Fills per-feature mean and population standard deviation.
    pub fn compute_stats(&mut self) {
        let n = self.rows.len();
        if n == 0 {
            return;
        }
        let nf = F::from_usize(n).unwrap();
        let p = self.meta.len();
        let mut sum = vec![F::zero(); p];
        let mut sum2 = vec![F::zero(); p];
        for row in &self.rows {
            for &(idx, v) in row {
                sum[idx as usize] += v;
                sum2[idx as usize] += v * v;
            }
        }
        for j in 0..p {
            let mean = sum[j] / nf;
            let var = (sum2[j] / nf - mean * mean).max(F::zero());
            self.meta[j].mean = mean;
            self.meta[j].std = var.sqrt();
        }
    }
}

/// Encodes every table row through the encoder sequence into one sparse
/// matrix; feature blocks appear in encoder order.
pub fn encode<F: Scalar>(
    table: &DataTable<F>,
    encoders: &[Encoder<F>],
) -> Result<SparseMatrix<F>, Error> {
    for enc in encoders {
        if !table.contains(enc.column()) {
            return Err(Error::SchemaDrift {
                column: enc.column().to_string(),
            });
        }
    }
    let meta = encoders
        .iter()
        .flat_map(|e| e.derivations())
        .map(FeatureMeta::new)
        .collect();
    let mut m = SparseMatrix::new(meta);
    for row in 0..table.rows() {
        let mut entries = Vec::new();
        let mut offset = 0usize;
        for enc in encoders {
            let value = table.value(enc.column(), row)?;
            for (rel, v) in enc.encode(&value) {
                entries.push(((offset + rel) as u32, v));
            }
            offset += enc.width();
        }
        m.push_row(entries)?;
    }
    Ok(m)
}

/// Appends polynomial interaction features up to `order`.
///
/// Degree-2 features are the products of every ordered feature pair,
/// including self-products (squares); each higher degree multiplies every
/// base feature with every feature of the previous degree. Derivations
/// compose as `a*b`. Errors when the expanded width would exceed `cap`.
pub fn interaction_transform<F: Scalar>(
    matrix: &SparseMatrix<F>,
    order: usize,
    cap: usize,
) -> Result<SparseMatrix<F>, Error> {
    if order < 2 {
        return Err(Error::InvalidParam(format!(
            "interaction order must be >= 2, got {order}"
        )));
    }
    let p = matrix.width();
    let mut width = p;
    let mut block = p; // width of the previous degree block
    for _ in 2..=order {
        block = block.checked_mul(p).ok_or(Error::FeatureCapExceeded {
            needed: usize::MAX,
            cap,
        })?;
        width = width.checked_add(block).ok_or(Error::FeatureCapExceeded {
            needed: usize::MAX,
            cap,
        })?;
        if width > cap {
            return Err(Error::FeatureCapExceeded { needed: width, cap });
        }
    }

    let base_derivations: Vec<&str> = matrix
        .meta()
        .iter()
        .map(|m| m.derivation.as_str())
        .collect();
    let mut meta: Vec<FeatureMeta<F>> = matrix
        .meta()
        .iter()
        .map(|m| FeatureMeta::new(m.derivation.clone()))
        .collect();
    let mut prev_derivations: Vec<String> =
        base_derivations.iter().map(|s| s.to_string()).collect();
    for _ in 2..=order {
        let mut next = Vec::with_capacity(prev_derivations.len() * p);
        for base in &base_derivations {
            for prev in &prev_derivations {
                next.push(format!("{base}*{prev}"));
            }
        }
        meta.extend(next.iter().cloned().map(FeatureMeta::new));
        prev_derivations = next;
    }

    let mut out = SparseMatrix::new(meta);
    for r in 0..matrix.rows() {
        let base: Vec<(u32, F)> = matrix.row(r).to_vec();
        let mut entries = base.clone();
        // Previous-degree entries with indices relative to their own block.
        let mut prev: Vec<(usize, F)> = base.iter().map(|&(i, v)| (i as usize, v)).collect();
        let mut prev_width = p;
        let mut offset = p;
        for _ in 2..=order {
            let mut next: Vec<(usize, F)> = Vec::with_capacity(base.len() * prev.len());
            for &(i, vi) in &base {
                for &(j, vj) in &prev {
                    next.push((i as usize * prev_width + j, vi * vj));
                }
            }
            for &(rel, v) in &next {
                if v != F::zero() {
                    entries.push(((offset + rel) as u32, v));
                }
            }
            offset += p * prev_width;
            prev_width *= p;
            prev = next;
        }
        out.push_row(entries)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{fit_encoder, EncoderKind, EncoderParams};

    fn two_feature_matrix(rows: &[(f64, f64)]) -> SparseMatrix<f64> {
        let meta = vec![
            FeatureMeta::new("x1".to_string()),
            FeatureMeta::new("x2".to_string()),
        ];
        let mut m = SparseMatrix::new(meta);
        for &(a, b) in rows {
            let mut e = Vec::new();
            if a != 0.0 {
                e.push((0u32, a));
            }
            if b != 0.0 {
                e.push((1u32, b));
            }
            m.push_row(e).unwrap();
        }
        m
    }

    #[test]
    fn rows_enforce_strictly_increasing_nonzero_entries() {
        let meta = vec![
            FeatureMeta::new("a".to_string()),
            FeatureMeta::new("b".to_string()),
        ];
        let mut m: SparseMatrix<f64> = SparseMatrix::new(meta);
        assert!(m.push_row(vec![(0, 1.0), (1, 2.0)]).is_ok());
        assert!(m.push_row(vec![(1, 1.0), (0, 2.0)]).is_err());
        assert!(m.push_row(vec![(0, 0.0)]).is_err());
        assert!(m.push_row(vec![(2, 1.0)]).is_err());
    }

    #[test]
    fn encode_concatenates_encoder_blocks() {
        let mut t: DataTable<f64> = DataTable::new();
        t.add_str(
            "protocol",
            vec![
                Some("TCP".into()),
                Some("UDP".into()),
                Some("ICMP".into()),
                Some("GRE".into()),
            ],
        )
        .unwrap();
        t.add_num("bytes", vec![Some(1.0), Some(2.0), Some(3.0), Some(4.0)])
            .unwrap();
        let seen = t.subset(&[0, 1, 2]); // GRE stays unseen by the encoder
        let (one_hot, _) = fit_encoder(
            EncoderKind::OneHot,
            "protocol",
            seen.column("protocol").unwrap(),
            None,
            &EncoderParams::default(),
        )
        .unwrap();
        let (pass, _) = fit_encoder(
            EncoderKind::Passthrough,
            "bytes",
            t.column("bytes").unwrap(),
            None,
            &EncoderParams::default(),
        )
        .unwrap();
        let m = encode(&t, &[one_hot, pass]).unwrap();
        assert_eq!(m.width(), 4); // 3 protocol indicators + 1 passthrough
        assert_eq!(m.row(0), &[(0, 1.0), (3, 1.0)]);
        assert_eq!(m.row(1), &[(1, 1.0), (3, 2.0)]); // UDP fires only x2
        assert_eq!(m.row(3), &[(3, 4.0)]); // unseen protocol: all-zero block
    }

    #[test]
    fn encode_flags_schema_drift() {
        let mut t: DataTable<f64> = DataTable::new();
        t.add_num("bytes", vec![Some(1.0)]).unwrap();
        let (enc, _) = fit_encoder(
            EncoderKind::Passthrough,
            "bytes",
            t.column("bytes").unwrap(),
            None,
            &EncoderParams::default(),
        )
        .unwrap();
        let mut other: DataTable<f64> = DataTable::new();
        other.add_num("other", vec![Some(1.0)]).unwrap();
        assert!(matches!(
            encode(&other, &[enc]),
            Err(Error::SchemaDrift { .. })
        ));
    }

    #[test]
    fn interaction_appends_squares_and_cross_products() {
        let m = two_feature_matrix(&[(1.0, 1.0), (1.0, 0.0), (3.0, 2.0)]);
        let out = interaction_transform(&m, 2, DEFAULT_FEATURE_CAP).unwrap();
        assert_eq!(out.width(), 2 + 4);
        let der = out.derivations();
        for expected in ["x1*x1", "x1*x2", "x2*x1", "x2*x2"] {
            assert!(der.contains(&expected.to_string()), "missing {expected}");
        }
        let x1x2 = der.iter().position(|d| d == "x1*x2").unwrap();
        let x1sq = der.iter().position(|d| d == "x1*x1").unwrap();
        assert_eq!(out.get(0, x1x2), 1.0);
        assert_eq!(out.get(1, x1x2), 0.0);
        assert_eq!(out.get(2, x1x2), 6.0);
        assert_eq!(out.get(2, x1sq), 9.0);
    }

    #[test]
    fn interaction_keeps_zero_rows_unchanged() {
        let m = two_feature_matrix(&[(0.0, 0.0)]);
        let out = interaction_transform(&m, 2, DEFAULT_FEATURE_CAP).unwrap();
        assert!(out.row(0).is_empty());
    }

    #[test]
    fn interaction_third_order_contains_cubic_terms() {
        let m = two_feature_matrix(&[(2.0, 3.0)]);
        let out = interaction_transform(&m, 3, DEFAULT_FEATURE_CAP).unwrap();
        assert_eq!(out.width(), 2 + 4 + 8);
        let der = out.derivations();
        let idx = der.iter().position(|d| d == "x1*x1*x2").unwrap();
        assert_eq!(out.get(0, idx), 2.0 * 2.0 * 3.0);
    }

    #[test]
    fn interaction_enforces_feature_cap() {
        let m = two_feature_matrix(&[(1.0, 2.0)]);
        assert!(matches!(
            interaction_transform(&m, 2, 5),
            Err(Error::FeatureCapExceeded { needed: 6, cap: 5 })
        ));
    }

    #[test]
    fn interaction_rejects_order_below_two() {
        let m = two_feature_matrix(&[(1.0, 2.0)]);
        assert!(interaction_transform(&m, 1, DEFAULT_FEATURE_CAP).is_err());
    }

    #[test]
    fn stats_cover_implicit_zeros() {
        let mut m = two_feature_matrix(&[(1.0, 0.0), (3.0, 0.0)]);
        m.compute_stats();
        assert!((m.meta()[0].mean - 2.0).abs() < 1e-12);
        assert!((m.meta()[0].std - 1.0).abs() < 1e-12);
        assert_eq!(m.meta()[1].mean, 0.0);
        assert_eq!(m.meta()[1].std, 0.0);
    }
}
