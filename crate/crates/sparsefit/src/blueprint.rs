use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderKind, EncoderParams};
use crate::linear::{FitOptions, Regularization};
use crate::sparse::DEFAULT_FEATURE_CAP;
use crate::table::{ColumnKind, DataTable};
use crate::transform::TableTransform;
use crate::{Error, Scalar};

/// Candidate encoders for a single input column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderChoice {
    pub column: String,
    pub candidates: Vec<EncoderKind>,
}

/// Interaction expansion applied after encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InteractionChoice {
    None,
    /// Degree-2 products of all ordered feature pairs.
    Pairs,
    /// Degree-3 products (pairs plus triples).
    Triples,
}

impl InteractionChoice {
    pub fn order(self) -> Option<usize> {
        match self {
            InteractionChoice::None => None,
            InteractionChoice::Pairs => Some(2),
            InteractionChoice::Triples => Some(3),
        }
    }
}

/// One point of the regularization grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegChoice {
    pub family: Regularization,
    pub lambda: f64,
}

/// The geometric series `1e-4, 1e-3, ..., 1e1` used as the default
/// penalty-strength grid.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..6).map(|k| 10f64.powi(k - 4)).collect()
}

/// The space of model configurations the planner may explore: fixed table
/// transforms, per-column encoder candidates, interaction depths, and a
/// regularization grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blueprint {
    pub transforms: Vec<TableTransform>,
    pub encoders: Vec<EncoderChoice>,
    pub interactions: Vec<InteractionChoice>,
    pub regularizations: Vec<RegChoice>,
}

impl Blueprint {
    /// Default search space for a table: numeric columns may stay raw or be
    /// binned (by quantiles or a shallow tree), string columns may be
    /// one-hot or cluster encoded; interactions up to pairs; ridge and lasso
    /// over the default penalty grid. Timestamp columns are skipped — route
    /// them through a calendar transform first if they carry signal.
    pub fn from_table<F: Scalar>(table: &DataTable<F>) -> Result<Self, Error> {
        let target = table.target().ok_or(Error::NoTarget)?.to_string();
        let mut encoders = Vec::new();
        for name in table.names() {
            if *name == target {
                continue;
            }
            let candidates = match table.kind(name)? {
                ColumnKind::Num => vec![
                    EncoderKind::Passthrough,
                    EncoderKind::QuantileBins,
                    EncoderKind::Tree,
                ],
                ColumnKind::Str => vec![EncoderKind::OneHot, EncoderKind::ClusterString],
                ColumnKind::Time => continue,
            };
            encoders.push(EncoderChoice {
                column: name.clone(),
                candidates,
            });
        }
        if encoders.is_empty() {
            return Err(Error::EmptySearchSpace);
        }
        let regularizations = [Regularization::Ridge, Regularization::Lasso]
            .into_iter()
            .flat_map(|family| {
                default_lambda_grid()
                    .into_iter()
                    .map(move |lambda| RegChoice { family, lambda })
            })
            .collect();
        Ok(Blueprint {
            transforms: Vec::new(),
            encoders,
            interactions: vec![InteractionChoice::None, InteractionChoice::Pairs],
            regularizations,
        })
    }

    /// Number of distinct configurations described by this blueprint.
    pub fn size(&self) -> usize {
        let enc: usize = self
            .encoders
            .iter()
            .map(|c| c.candidates.len().max(1))
            .product();
        enc * self.interactions.len().max(1) * self.regularizations.len().max(1)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.encoders.is_empty()
            || self.interactions.is_empty()
            || self.regularizations.is_empty()
            || self.encoders.iter().any(|c| c.candidates.is_empty())
        {
            return Err(Error::EmptySearchSpace);
        }
        for reg in &self.regularizations {
            if !reg.lambda.is_finite() || reg.lambda < 0.0 {
                return Err(Error::InvalidParam(format!(
                    "penalty strength must be finite and non-negative, got {}",
                    reg.lambda
                )));
            }
        }
        Ok(())
    }
}

/// Budget and shared settings for a planner run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explorations {
    /// Wall-clock budget in seconds; the search stops once exceeded.
    pub time_tradeoff: f64,
    /// Fraction of rows held out for tuning (0 disables the holdout and
    /// scores on the training rows — only sensible for tiny tables).
    pub tune_fraction: f64,
    pub seed: u64,
    pub feature_cap: usize,
    pub encoder_params: EncoderParams,
    pub fit: FitOptions,
    /// Relative round-over-round improvement below which the search stops.
    pub min_round_improvement: f64,
    pub max_rounds: usize,
}

impl Default for Explorations {
    fn default() -> Self {
        Explorations {
            time_tradeoff: 60.0,
            tune_fraction: 0.2,
            seed: 0,
            feature_cap: DEFAULT_FEATURE_CAP,
            encoder_params: EncoderParams::default(),
            fit: FitOptions::default(),
            min_round_improvement: 0.001,
            max_rounds: 10,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::Column;

    #[test]
    fn lambda_grid_spans_four_decades() {
        let grid = default_lambda_grid();
        assert_eq!(grid.len(), 6);
        assert!((grid[0] - 1e-4).abs() < 1e-12);
        assert!((grid[5] - 10.0).abs() < 1e-9);
        for pair in grid.windows(2) {
            assert!((pair[1] / pair[0] - 10.0).abs() < 1e-9);
        }
    }

    #[test]
    fn default_blueprint_covers_usable_columns() {
        let mut t: DataTable<f64> = DataTable::new();
        t.add_column("bytes", Column::Num(vec![Some(1.0), Some(2.0)]))
            .unwrap();
        t.add_column(
            "proto",
            Column::Str(vec![Some("tcp".into()), Some("udp".into())]),
        )
        .unwrap();
        let epoch = chrono::DateTime::from_timestamp(0, 0).unwrap();
        t.add_column(
            "when",
            Column::Time(vec![Some(epoch), Some(epoch + chrono::Duration::days(1))]),
        )
        .unwrap();
        t.add_column("y", Column::Num(vec![Some(0.0), Some(1.0)]))
            .unwrap();
        t.set_target("y").unwrap();
        let bp = Blueprint::from_table(&t).unwrap();
        assert_eq!(bp.encoders.len(), 2); // timestamp and target excluded
        assert_eq!(bp.encoders[0].column, "bytes");
        assert_eq!(bp.encoders[0].candidates.len(), 3);
        assert_eq!(bp.encoders[1].candidates.len(), 2);
        assert_eq!(bp.interactions.len(), 2);
        assert_eq!(bp.regularizations.len(), 12);
        assert_eq!(bp.size(), 3 * 2 * 2 * 12);
        bp.validate().unwrap();
    }

    #[test]
    fn empty_spaces_are_rejected() {
        let bp = Blueprint {
            transforms: vec![],
            encoders: vec![],
            interactions: vec![InteractionChoice::None],
            regularizations: vec![RegChoice {
                family: Regularization::Ridge,
                lambda: 0.1,
            }],
        };
        assert!(matches!(bp.validate(), Err(Error::EmptySearchSpace)));
    }
}
